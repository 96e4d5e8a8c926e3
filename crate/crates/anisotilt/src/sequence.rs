//! Ordered stack of equally sized frames.

use crate::error::{Error, Result};
use crate::image::Image;

#[derive(Debug, Clone, PartialEq)]
pub struct ImageSequence {
    frames: Vec<Image>,
}

impl ImageSequence {
    /// Rejects empty input, mixed sizes and non-finite pixels.
    pub fn new(frames: Vec<Image>) -> Result<Self> {
        let first = frames
            .first()
            .ok_or_else(|| Error::InsufficientData("sequence has no frames".into()))?;
        if let Some((k, _)) = frames.iter().enumerate().find(|(_, f)| !f.same_shape(first)) {
            return Err(Error::invalid(format!(
                "frame {k} is {}x{}, expected {}x{}",
                frames[k].rows(),
                frames[k].cols(),
                first.rows(),
                first.cols()
            )));
        }
        if let Some(k) = frames.iter().position(|f| !f.is_finite()) {
            return Err(Error::invalid(format!("frame {k} has non-finite pixels")));
        }
        Ok(Self { frames })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn rows(&self) -> usize {
        self.frames[0].rows()
    }

    pub fn cols(&self) -> usize {
        self.frames[0].cols()
    }

    pub fn frames(&self) -> &[Image] {
        &self.frames
    }

    pub fn into_frames(self) -> Vec<Image> {
        self.frames
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Image> {
        self.frames.iter()
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self { frames: self.frames.iter().map(|f| f.map(|v| v * c)).collect() }
    }

    pub(crate) fn require(&self, min: usize, what: &str) -> Result<()> {
        if self.len() < min {
            return Err(Error::InsufficientData(format!(
                "{what} needs at least {min} frames, got {}",
                self.len()
            )));
        }
        Ok(())
    }
}
