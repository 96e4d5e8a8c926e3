//! Grayscale PGM/PNG frames and frame sequences, plus run configuration files.

mod config;

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use image::codecs::png::PngEncoder;
use image::codecs::pnm::{GraymapHeader, PnmEncoder, SampleEncoding};
use image::{DynamicImage, ExtendedColorType, ImageReader, Luma};
use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use config::{load_config, parse_config, CommandOptions, RunConfig, SynthOptions};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::sequence::ImageSequence;

/// Smallest frame side accepted from disk.
pub const MIN_SIDE: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BitDepth {
    #[serde(rename = "8")]
    Eight,
    #[serde(rename = "16")]
    Sixteen,
}

impl BitDepth {
    pub fn from_bits(bits: u32) -> Result<Self> {
        match bits {
            8 => Ok(BitDepth::Eight),
            16 => Ok(BitDepth::Sixteen),
            _ => Err(Error::invalid(format!("bit depth must be 8 or 16, got {bits}"))),
        }
    }

    pub fn bits(self) -> u32 {
        match self {
            BitDepth::Eight => 8,
            BitDepth::Sixteen => 16,
        }
    }

    pub fn max_value(self) -> f64 {
        match self {
            BitDepth::Eight => 255.0,
            BitDepth::Sixteen => 65535.0,
        }
    }
}

/// A frame read from disk with its native depth.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageBuffer {
    pub image: Image,
    pub bit_depth: BitDepth,
    pub source: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum FileKind {
    Pgm,
    Png,
}

fn kind_of(path: &Path) -> Result<FileKind> {
    let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
    match ext.as_deref() {
        Some("pgm") | Some("pnm") => Ok(FileKind::Pgm),
        Some("png") => Ok(FileKind::Png),
        _ => Err(format_err(path, "expected a .pgm or .png file")),
    }
}

/// Binary PGM with maxval 255 or 65535.
fn pgm_encoder<W: std::io::Write>(out: W, w: u32, h: u32, depth: BitDepth) -> PnmEncoder<W> {
    let header = GraymapHeader { encoding: SampleEncoding::Binary, width: w, height: h, maxwhite: depth.max_value() as u32 };
    PnmEncoder::new(out).with_header(header.into())
}

fn format_err(path: &Path, reason: impl Into<String>) -> Error {
    Error::Format { path: path.to_path_buf(), reason: reason.into() }
}

/// Reads an 8- or 16-bit grayscale PGM (P5) or PNG.
pub fn read_image(path: &Path) -> Result<ImageBuffer> {
    let reader = ImageReader::open(path)?
        .with_guessed_format()
        .map_err(|e| format_err(path, e.to_string()))?;
    let decoded = reader.decode().map_err(|e| format_err(path, e.to_string()))?;
    let (w, h) = (decoded.width() as usize, decoded.height() as usize);
    let (data, bit_depth): (Vec<f64>, BitDepth) = match decoded {
        DynamicImage::ImageLuma8(b) => (b.into_raw().into_iter().map(f64::from).collect(), BitDepth::Eight),
        DynamicImage::ImageLuma16(b) => (b.into_raw().into_iter().map(f64::from).collect(), BitDepth::Sixteen),
        other => {
            return Err(format_err(path, format!("unsupported colour type {:?}; only grayscale is read", other.color())))
        }
    };
    if h < MIN_SIDE || w < MIN_SIDE {
        return Err(format_err(path, format!("{w}x{h} is below the {MIN_SIDE}x{MIN_SIDE} minimum")));
    }
    Ok(ImageBuffer { image: Image::new(h, w, data)?, bit_depth, source: Some(path.to_path_buf()) })
}

/// Samples pushed to the range limits when quantizing.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ClampCounts {
    pub below: usize,
    pub above: usize,
}

/// Clamps to `[0, max]` and rounds half to even.
pub fn quantize(img: &Image, depth: BitDepth) -> (Vec<u16>, ClampCounts) {
    let max = depth.max_value();
    let mut counts = ClampCounts::default();
    let q = img
        .data()
        .iter()
        .map(|&v| {
            if v < 0.0 {
                counts.below += 1;
                0
            } else if v > max {
                counts.above += 1;
                max as u16
            } else {
                v.round_ties_even() as u16
            }
        })
        .collect();
    (q, counts)
}

/// Writes a PGM or PNG chosen by extension. Values are quantized only here.
pub fn write_image(img: &Image, path: &Path, depth: BitDepth) -> Result<ClampCounts> {
    let kind = kind_of(path)?;
    let (q, counts) = quantize(img, depth);
    if counts.below + counts.above > 0 {
        warn!(
            "{}: clamped {} samples below 0 and {} above {}",
            path.display(),
            counts.below,
            counts.above,
            depth.max_value()
        );
    }
    let (w, h) = (img.cols() as u32, img.rows() as u32);
    let bytes: Vec<u8> = q.iter().map(|&v| v as u8).collect();
    let out = BufWriter::new(File::create(path)?);
    let result = match (kind, depth) {
        (FileKind::Pgm, BitDepth::Eight) => pgm_encoder(out, w, h, depth).encode(bytes.as_slice(), w, h, ExtendedColorType::L8),
        (FileKind::Pgm, BitDepth::Sixteen) => pgm_encoder(out, w, h, depth).encode(q.as_slice(), w, h, ExtendedColorType::L16),
        (FileKind::Png, BitDepth::Eight) => {
            let buf = image::ImageBuffer::<Luma<u8>, _>::from_raw(w, h, bytes).expect("buffer length matches dimensions");
            DynamicImage::ImageLuma8(buf).write_with_encoder(PngEncoder::new(out))
        }
        (FileKind::Png, BitDepth::Sixteen) => {
            let buf = image::ImageBuffer::<Luma<u16>, _>::from_raw(w, h, q).expect("buffer length matches dimensions");
            DynamicImage::ImageLuma16(buf).write_with_encoder(PngEncoder::new(out))
        }
    };
    result.map_err(|e| format_err(path, e.to_string()))?;
    Ok(counts)
}

/// Files matching `pattern` in lexicographic order. A directory stands for every PGM and
/// PNG file directly inside it.
pub fn sequence_paths(pattern: &str) -> Result<Vec<PathBuf>> {
    let p = Path::new(pattern);
    let mut paths: Vec<PathBuf> = if p.is_dir() {
        std::fs::read_dir(p)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|f| f.is_file() && kind_of(f).is_ok())
            .collect()
    } else {
        glob::glob(pattern)
            .map_err(|e| Error::invalid(format!("bad frame pattern {pattern:?}: {e}")))?
            .filter_map(|r| r.ok())
            .filter(|f| f.is_file())
            .collect()
    };
    paths.sort();
    if paths.is_empty() {
        return Err(Error::InsufficientData(format!("no frames match {pattern:?}")));
    }
    Ok(paths)
}

/// Loads every frame matching `pattern` (see [`sequence_paths`]).
pub fn read_sequence(pattern: &str) -> Result<ImageSequence> {
    let paths = sequence_paths(pattern)?;
    let frames: Vec<Image> = paths
        .par_iter()
        .map(|p| read_image(p).map(|b| b.image))
        .collect::<Result<_>>()?;
    ImageSequence::new(frames)
}

/// Writes frames as `<prefix>_<index>.<ext>` in `dir`, zero-padded so names sort in order.
pub fn write_sequence(seq: &ImageSequence, dir: &Path, prefix: &str, ext: &str, depth: BitDepth) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let digits = seq.len().saturating_sub(1).to_string().len().max(4);
    seq.iter()
        .enumerate()
        .map(|(i, f)| {
            let path = dir.join(format!("{prefix}_{i:0digits$}.{ext}"));
            write_image(f, &path, depth)?;
            Ok(path)
        })
        .collect()
}
