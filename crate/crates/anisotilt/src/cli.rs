//! Command-line front end. Every invocation that gets past argument parsing writes exactly
//! one JSON [`RunReport`].

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::corr2d::build_autocorr_grid;
use crate::error::{Error, ErrorClass, Result};
use crate::friedest::{estimate_r0, estimate_r0_windows, EstimatorOptions};
use crate::imageio::{self, read_image, read_sequence, write_image, write_sequence, BitDepth, RunConfig};
use crate::levels::{check_levels, level_profile};
use crate::mitigation::{self, psnr, ssim, MatchCost, MitigationConfig, RegistrationKind};
use crate::optics::OpticalConfig;
use crate::otf::OtfModel;
use crate::profile::Cn2Profile;
use crate::regmodel::{alpha_for, global_alpha_map, tilt_correction_curve, FrameShape, RegistrationSpec, QUANTIZATION_EPSILON};
use crate::stats::{fried_parameter, isoplanatic_angle, tabulate_correlations, tilt_variance};
use crate::synth::{degrade_sequence, procedural_scene, SynthConfig};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "anisotilt", version, about = "Anisoplanatic tilt statistics, Fried parameter estimation and turbulence mitigation")]
pub struct Cli {
    /// Worker threads (default: all cores). Results do not depend on this.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Seed for every stochastic step; overrides the config file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Write the JSON run report to this file instead of stdout.
    #[arg(long, global = true)]
    pub report: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fried parameter, isoplanatic angle and tilt variance for a Cn² profile.
    Stats(StatsArgs),
    /// Tilt correction factor for patch (BMA) and whole-frame registration.
    Alpha(AlphaArgs),
    /// Radial OTF curves.
    Otf(OtfArgs),
    /// Spectral-ratio Fried parameter estimate from a frame sequence.
    #[command(name = "estimate-r0")]
    EstimateR0(EstimateArgs),
    /// Synthesize a degraded sequence with known turbulence.
    Synth(SynthArgs),
    /// Register, fuse and Wiener-restore a frame sequence.
    Mitigate(MitigateArgs),
    /// PSNR and SSIM of an image against a reference.
    Eval(EvalArgs),
    /// Recompute the six reference turbulence levels and compare with published values.
    #[command(name = "repro-table2")]
    ReproTable2(ReproArgs),
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// TOML run configuration; defaults to the built-in reference camera.
    #[arg(long, short)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TurbulenceArgs {
    /// Reference turbulence level 1–6 (constant Cn²).
    #[arg(long, conflicts_with = "cn2")]
    pub level: Option<usize>,
    /// Constant Cn² (m^(-2/3)).
    #[arg(long)]
    pub cn2: Option<f64>,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    #[command(flatten)]
    pub turbulence: TurbulenceArgs,
    /// Write the tilt correlation table (separation in px) to this CSV file.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[arg(long, default_value_t = 50.0)]
    pub max_separation: f64,
    #[arg(long, default_value_t = 0.25)]
    pub step: f64,
    /// Also write the x, y, cross and total lag fields over [-N, N]² as CSV matrices.
    #[arg(long, requires = "grid_out")]
    pub grid: Option<usize>,
    /// Directory for the lag-field matrices.
    #[arg(long)]
    pub grid_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AlphaArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Patch half-widths M.
    #[arg(long = "m", value_delimiter = ',', default_values_t = [1usize, 2, 5, 10, 20, 50, 100])]
    pub half_widths: Vec<usize>,
    /// Registration error-to-signal ratio ε.
    #[arg(long, default_value_t = 0.0)]
    pub epsilon: f64,
    /// Also compute the whole-frame registration α map.
    #[arg(long)]
    pub global: bool,
    /// Frame rows for `--global`.
    #[arg(long, default_value_t = 501)]
    pub rows: usize,
    /// Frame columns for `--global`.
    #[arg(long, default_value_t = 501)]
    pub cols: usize,
    /// Per-M table CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Global α map CSV (per-pixel mean of the x and y maps).
    #[arg(long, requires = "global")]
    pub map_csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct OtfArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    #[command(flatten)]
    pub turbulence: TurbulenceArgs,
    /// Fried parameter (m); otherwise derived from the turbulence.
    #[arg(long)]
    pub r0: Option<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = [0.0, 0.5, 0.9])]
    pub alpha: Vec<f64>,
    /// Samples from zero to the diffraction cutoff.
    #[arg(long, default_value_t = 201)]
    pub points: usize,
    /// Wiener noise-to-signal term for the compensated curves.
    #[arg(long, default_value_t = 0.001)]
    pub gamma: f64,
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RegistrationArg {
    None,
    Global,
    Bma,
}

impl From<RegistrationArg> for RegistrationKind {
    fn from(r: RegistrationArg) -> Self {
        match r {
            RegistrationArg::None => RegistrationKind::None,
            RegistrationArg::Global => RegistrationKind::Global,
            RegistrationArg::Bma => RegistrationKind::Bma,
        }
    }
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Frame directory or glob pattern.
    #[arg(long)]
    pub frames: String,
    #[arg(long, value_enum, default_value_t = RegistrationArg::None)]
    pub registration: RegistrationArg,
    /// BMA half-width M.
    #[arg(long = "m")]
    pub half_width: Option<usize>,
    /// Registration error-to-signal ratio (default 1/12 for BMA, 0 for global).
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Override the tilt correction factor.
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub taper: Option<f64>,
    /// Fit band lower and upper edge (cycles/px).
    #[arg(long, value_delimiter = ',')]
    pub band: Option<Vec<f64>>,
    /// Average short-exposure power instead of magnitude spectra.
    #[arg(long)]
    pub power: bool,
    /// Remove white noise of this standard deviation from the spectra.
    #[arg(long)]
    pub noise_sd: Option<f64>,
    /// Moving-window length in frames.
    #[arg(long, requires = "stride")]
    pub window: Option<usize>,
    #[arg(long, requires = "window")]
    pub stride: Option<usize>,
    /// Radial ratio profile CSV.
    #[arg(long)]
    pub profile_csv: Option<PathBuf>,
    /// Moving-window estimates CSV.
    #[arg(long)]
    pub series_csv: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ImageFormatArg {
    Png,
    Pgm,
}

impl ImageFormatArg {
    fn ext(self) -> &'static str {
        match self {
            ImageFormatArg::Png => "png",
            ImageFormatArg::Pgm => "pgm",
        }
    }
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    #[command(flatten)]
    pub turbulence: TurbulenceArgs,
    /// Truth image; without it a procedural scene of side `--scene-size` is used.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    #[arg(long, default_value_t = 501)]
    pub scene_size: usize,
    #[arg(long = "frames")]
    pub frames: Option<usize>,
    #[arg(long)]
    pub noise: Option<f64>,
    /// Rigid per-frame camera shift standard deviation (px).
    #[arg(long)]
    pub jitter: Option<f64>,
    /// Output directory for frames and manifest.json.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 16)]
    pub depth: u32,
    #[arg(long, value_enum, default_value_t = ImageFormatArg::Png)]
    pub format: ImageFormatArg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CostArg {
    Sad,
    Ncc,
}

#[derive(Debug, Args)]
pub struct MitigateArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    #[arg(long)]
    pub frames: String,
    #[arg(long = "m")]
    pub half_width: Option<usize>,
    #[arg(long = "s")]
    pub search_radius: Option<usize>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long, value_enum)]
    pub registration: Option<RegistrationArg>,
    /// Register frames globally before forming the BMA prototype.
    #[arg(long)]
    pub prototype_global: bool,
    #[arg(long, value_enum)]
    pub cost: Option<CostArg>,
    /// Fried parameter (m) used for restoration.
    #[arg(long, required_unless_present = "estimate_r0", conflicts_with = "estimate_r0")]
    pub r0: Option<f64>,
    /// Estimate r₀ from the frames with the same registration.
    #[arg(long)]
    pub estimate_r0: bool,
    /// Restored image path (.png or .pgm).
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the fused image before restoration.
    #[arg(long)]
    pub fused_out: Option<PathBuf>,
    /// Truth image for PSNR/SSIM of each stage.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    #[arg(long, default_value_t = 8)]
    pub depth: u32,
    /// Intensity bounds applied after restoration (default: the output depth's range).
    #[arg(long, value_delimiter = ',')]
    pub clip: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    pub image: PathBuf,
    pub reference: PathBuf,
    /// Peak value for PSNR and dynamic range for SSIM (default: the reference's depth).
    #[arg(long)]
    pub peak: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ReproArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Exit with status 4 if any value differs beyond tolerance.
    #[arg(long)]
    pub check: bool,
}

/// Structured record of one invocation.
#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub command: String,
    pub status: &'static str,
    pub exit_code: i32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub config: Value,
    pub outputs: Map<String, Value>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub elapsed_s: f64,
    pub versions: Value,
}

struct Outcome {
    config: Value,
    outputs: Map<String, Value>,
    seed: Option<u64>,
    /// Set when the command ran but a check failed.
    failed_check: bool,
}

impl Outcome {
    fn new(config: Value) -> Self {
        Self { config, outputs: Map::new(), seed: None, failed_check: false }
    }

    fn put(&mut self, key: &str, v: impl Serialize) {
        self.outputs.insert(key.to_string(), serde_json::to_value(v).unwrap_or(Value::Null));
    }
}

pub fn exit_code_for(e: &Error) -> i32 {
    match e.class() {
        ErrorClass::Usage => EXIT_USAGE,
        ErrorClass::Data => EXIT_DATA,
        ErrorClass::Numerical => EXIT_NUMERICAL,
    }
}

/// JSON number, or the string "inf"/"-inf"/"nan" where JSON has no number.
fn num(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else if v.is_nan() {
        json!("nan")
    } else if v > 0.0 {
        json!("inf")
    } else {
        json!("-inf")
    }
}

/// Parses `argv`, runs the command and writes the report to `--report` or `out`. Argument
/// errors are reported to `out` since `--report` may not have been parsed.
pub fn run_with_output<I, T>(argv: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            if !e.use_stderr() {
                // --help and --version
                return EXIT_OK;
            }
            let report = RunReport {
                schema_version: REPORT_SCHEMA_VERSION,
                command: String::new(),
                status: "error",
                exit_code: EXIT_USAGE,
                error: Some(e.kind().to_string()),
                config: Value::Null,
                outputs: Map::new(),
                seed: None,
                threads: None,
                elapsed_s: 0.0,
                versions: versions(),
            };
            let _ = writeln!(out, "{}", serde_json::to_string_pretty(&report).expect("report serializes"));
            return EXIT_USAGE;
        }
    };
    let started = Instant::now();
    let name = command_name(&cli.command).to_string();
    let result = match cli.threads {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| dispatch(&cli)),
            Err(e) => Err(Error::invalid(format!("cannot start {n} threads: {e}"))),
        },
        None => dispatch(&cli),
    };
    let (code, error, outcome) = match result {
        Ok(o) if o.failed_check => (EXIT_NUMERICAL, Some("check failed".to_string()), o),
        Ok(o) => (EXIT_OK, None, o),
        Err(e) => {
            log::error!("{e}");
            (exit_code_for(&e), Some(e.to_string()), Outcome::new(Value::Null))
        }
    };
    let report = RunReport {
        schema_version: REPORT_SCHEMA_VERSION,
        command: name,
        status: if code == EXIT_OK { "ok" } else { "error" },
        exit_code: code,
        error,
        config: outcome.config,
        outputs: outcome.outputs,
        seed: outcome.seed.or(cli.seed),
        threads: cli.threads,
        elapsed_s: started.elapsed().as_secs_f64(),
        versions: versions(),
    };
    let text = serde_json::to_string_pretty(&report).expect("report serializes");
    let written = match &cli.report {
        Some(p) => std::fs::write(p, text + "\n").map_err(Error::from),
        None => writeln!(out, "{text}").map_err(Error::from),
    };
    if let Err(e) = written {
        log::error!("cannot write report: {e}");
        return EXIT_DATA;
    }
    code
}

fn versions() -> Value {
    json!({ "anisotilt": env!("CARGO_PKG_VERSION"), "report_schema": REPORT_SCHEMA_VERSION })
}

/// Runs with the report on stdout.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    run_with_output(argv, &mut std::io::stdout().lock())
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Stats(_) => "stats",
        Command::Alpha(_) => "alpha",
        Command::Otf(_) => "otf",
        Command::EstimateR0(_) => "estimate-r0",
        Command::Synth(_) => "synth",
        Command::Mitigate(_) => "mitigate",
        Command::Eval(_) => "eval",
        Command::ReproTable2(_) => "repro-table2",
    }
}

fn dispatch(cli: &Cli) -> Result<Outcome> {
    match &cli.command {
        Command::Stats(a) => cmd_stats(a),
        Command::Alpha(a) => cmd_alpha(a),
        Command::Otf(a) => cmd_otf(a),
        Command::EstimateR0(a) => cmd_estimate(a),
        Command::Synth(a) => cmd_synth(a, cli.seed),
        Command::Mitigate(a) => cmd_mitigate(a),
        Command::Eval(a) => cmd_eval(a),
        Command::ReproTable2(a) => cmd_repro(a),
    }
}

fn load(args: &ConfigArgs) -> Result<RunConfig> {
    match &args.config {
        Some(p) => imageio::load_config(p),
        None => Ok(RunConfig::new(OpticalConfig::reference_camera(), None)),
    }
}

fn profile_of(cfg: &RunConfig, t: &TurbulenceArgs) -> Result<Cn2Profile> {
    let p = match (t.level, t.cn2) {
        (Some(l), _) => level_profile(l)?,
        (None, Some(c)) => Cn2Profile::constant(c),
        (None, None) => cfg.profile()?.clone(),
    };
    p.validate(cfg.optics.path_length)?;
    Ok(p)
}

fn config_echo(cfg: &RunConfig, profile: Option<&Cn2Profile>) -> Value {
    json!({ "optics": cfg.optics, "cn2": profile.or(cfg.cn2.as_ref()), "options": cfg.options })
}

fn write_csv(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<f64>>) -> Result<()> {
    let mut text = header.join(",");
    text.push('\n');
    for row in rows {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:.10e}")).collect();
        text.push_str(&cells.join(","));
        text.push('\n');
    }
    std::fs::write(path, text)?;
    Ok(())
}

fn pair(v: &[f64], flag: &str) -> Result<[f64; 2]> {
    match v {
        [a, b] => Ok([*a, *b]),
        _ => Err(Error::invalid(format!("{flag} takes two comma-separated values, got {}", v.len()))),
    }
}

fn write_matrix(path: &Path, values: &[f64], cols: usize) -> Result<()> {
    let mut text = String::new();
    for row in values.chunks(cols) {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:.10e}")).collect();
        text.push_str(&cells.join(","));
        text.push('\n');
    }
    std::fs::write(path, text)?;
    Ok(())
}

fn cmd_stats(a: &StatsArgs) -> Result<Outcome> {
    let cfg = load(&a.config)?;
    let profile = profile_of(&cfg, &a.turbulence)?;
    let mut o = Outcome::new(config_echo(&cfg, Some(&profile)));
    let r0 = fried_parameter(&cfg.optics, &profile)?;
    let theta = isoplanatic_angle(&cfg.optics, &profile)?;
    let tv = tilt_variance(&cfg.optics, &profile)?;
    o.put("r0_m", r0);
    o.put("d_over_r0", cfg.optics.aperture_diameter / r0);
    o.put("theta0_rad", theta.radians);
    o.put("theta0_px", theta.pixels);
    o.put("sigmaT2_rad2", tv.rad2);
    o.put("sigmaT2_px2", tv.px2);
    o.put("rms_tilt_px", tv.rms_px());
    if let Some(path) = &a.csv {
        let table = tabulate_correlations(&cfg.optics, &profile, a.max_separation, a.step)?;
        let rows = table
            .separations_px()
            .zip(table.parallel().iter().zip(table.perpendicular()).zip(table.total()))
            .map(|(s, ((p, q), t))| vec![s, *p, *q, *t])
            .collect::<Vec<_>>();
        write_csv(path, &["separation_px", "r_par_px2", "r_perp_px2", "r_total_px2"], rows)?;
        o.put("correlation_csv", path);
    }
    if let (Some(n), Some(dir)) = (a.grid, &a.grid_out) {
        let grid = build_autocorr_grid(&cfg.optics, &profile, n)?;
        std::fs::create_dir_all(dir)?;
        let side = 2 * n + 1;
        let mut files = Map::new();
        for (name, field) in [("r_xx", &grid.r_xx), ("r_yy", &grid.r_yy), ("r_xy", &grid.r_xy), ("r_total", &grid.r_t)] {
            let path = dir.join(format!("{name}.csv"));
            write_matrix(&path, field, side)?;
            files.insert(name.into(), json!(path));
        }
        o.put("grid", json!({ "extent": n, "sigmaT2_px2": grid.variance_px2, "units": "px2", "row_index": "n2", "files": files }));
    }
    Ok(o)
}

fn cmd_alpha(a: &AlphaArgs) -> Result<Outcome> {
    let cfg = load(&a.config)?;
    let profile = cfg.cn2.clone().unwrap_or_else(|| Cn2Profile::constant(1e-15));
    let mut o = Outcome::new(config_echo(&cfg, Some(&profile)));
    let curve = tilt_correction_curve(&cfg.optics, &profile, &a.half_widths, a.epsilon)?;
    let entries: Vec<Value> = a
        .half_widths
        .iter()
        .zip(&curve)
        .map(|(m, b)| json!({ "m": m, "alpha": b.alpha, "sigmaT2": b.sigma_t2, "sigmaE2": b.sigma_e2, "sigmaP2": b.sigma_p2, "sigmaR2": b.sigma_r2 }))
        .collect();
    o.put("epsilon", a.epsilon);
    o.put("patch", entries);
    if let Some(path) = &a.csv {
        let rows = a.half_widths.iter().zip(&curve).map(|(&m, b)| vec![m as f64, b.alpha, b.sigma_p2, b.sigma_r2]);
        write_csv(path, &["m", "alpha", "sigmaP2_px2", "sigmaR2_px2"], rows)?;
        o.put("csv", path);
    }
    if a.global {
        let shape = FrameShape { rows: a.rows, cols: a.cols };
        let map = global_alpha_map(&cfg.optics, &profile, shape, a.epsilon)?;
        o.put("global", json!({ "rows": shape.rows, "cols": shape.cols, "average": map.average, "peak": map.peak }));
        if let Some(path) = &a.map_csv {
            let mean: Vec<f64> = map.alpha_x.iter().zip(&map.alpha_y).map(|(x, y)| 0.5 * (x + y)).collect();
            write_matrix(path, &mean, shape.cols)?;
            o.put("map_csv", path);
        }
    }
    Ok(o)
}

fn cmd_otf(a: &OtfArgs) -> Result<Outcome> {
    let cfg = load(&a.config)?;
    let r0 = match a.r0 {
        Some(r) => r,
        None => fried_parameter(&cfg.optics, &profile_of(&cfg, &a.turbulence)?)?,
    };
    if !(a.gamma >= 0.0) {
        return Err(Error::invalid("Wiener gamma must be >= 0"));
    }
    if a.points < 2 {
        return Err(Error::invalid("need at least 2 OTF samples"));
    }
    if a.alpha.is_empty() {
        return Err(Error::invalid("need at least one α"));
    }
    let mut o = Outcome::new(config_echo(&cfg, None));
    let models = a.alpha.iter().map(|&al| OtfModel::new(cfg.optics, r0, al)).collect::<Result<Vec<_>>>()?;
    let cutoff = cfg.optics.cutoff();
    o.put("r0_m", r0);
    o.put("cutoff_cycles_per_m", cutoff);
    o.put(
        "sigma_g_cycles_per_m",
        models.iter().map(|m| num(m.tilt_variance_freq().sqrt())).collect::<Vec<_>>(),
    );
    if let Some(path) = &a.csv {
        let mut header = vec!["rho_cycles_per_m".to_string(), "rho_cycles_per_px".into(), "diffraction".into(), "short_atm".into(), "long_atm".into()];
        for al in &a.alpha {
            header.push(format!("tilt_alpha_{al}"));
            header.push(format!("combined_alpha_{al}"));
            header.push(format!("wiener_alpha_{al}"));
        }
        let rows = (0..a.points).map(|i| {
            let rho = cutoff * i as f64 / (a.points - 1) as f64;
            let m0 = &models[0];
            let mut row = vec![rho, rho * cfg.optics.pixel_pitch, m0.diffraction(rho), m0.short_exposure(rho), m0.long_exposure(rho)];
            for m in &models {
                let h = m.combined(rho);
                row.extend([m.tilt(rho), h, h * h / (h * h + a.gamma)]);
            }
            row
        });
        let refs: Vec<&str> = header.iter().map(String::as_str).collect();
        write_csv(path, &refs, rows.collect::<Vec<_>>())?;
        o.put("csv", path);
    }
    Ok(o)
}

fn registration_spec(kind: RegistrationArg, half_width: usize, epsilon: Option<f64>) -> RegistrationSpec {
    match kind {
        RegistrationArg::None => RegistrationSpec::None,
        RegistrationArg::Global => RegistrationSpec::Global { epsilon: epsilon.unwrap_or(0.0) },
        RegistrationArg::Bma => RegistrationSpec::Bma { half_width, epsilon: epsilon.unwrap_or(QUANTIZATION_EPSILON) },
    }
}

fn cmd_estimate(a: &EstimateArgs) -> Result<Outcome> {
    let cfg = load(&a.config)?;
    let mut opts: EstimatorOptions = cfg.options.estimator.clone();
    if let Some(t) = a.taper {
        opts.taper = t;
    }
    if let Some(b) = &a.band {
        opts.band = pair(b, "--band")?;
    }
    opts.power |= a.power;
    if a.noise_sd.is_some() {
        opts.noise_sd = a.noise_sd;
    }
    if a.alpha.is_some() {
        opts.alpha_override = a.alpha;
    }
    let m = a.half_width.unwrap_or(cfg.options.mitigation.half_width);
    let spec = registration_spec(a.registration, m, a.epsilon);
    let mut o = Outcome::new(json!({ "optics": cfg.optics, "registration": spec, "estimator": opts, "frames": a.frames }));
    let seq = read_sequence(&a.frames)?;
    let res = estimate_r0(&seq, &spec, &cfg.optics, &opts)?;
    o.put("frames", seq.len());
    o.put("r0_m", res.r0);
    o.put("sigmaG", res.sigma_g);
    o.put("sigmaG_cycles_per_px", res.sigma_px);
    o.put("alpha", res.alpha);
    o.put("fit_rms", res.fit_rms);
    o.put("band", res.band);
    if let Some(path) = &a.profile_csv {
        let p = &res.profile;
        let rows = (0..p.len()).map(|i| vec![p.radius[i], p.radius_m[i], p.median[i], p.samples[i] as f64]);
        write_csv(path, &["radius_cycles_per_px", "radius_cycles_per_m", "median_ratio", "samples"], rows.collect::<Vec<_>>())?;
        o.put("profile_csv", path);
    }
    if let (Some(w), Some(s)) = (a.window, a.stride) {
        let series = estimate_r0_windows(&seq, &spec, &cfg.optics, &opts, w, s)?;
        if let Some(path) = &a.series_csv {
            let rows = series.iter().map(|e| vec![e.start as f64, e.frames as f64, e.r0, e.sigma_g, e.fit_rms]);
            write_csv(path, &["start", "frames", "r0_m", "sigmaG", "fit_rms"], rows.collect::<Vec<_>>())?;
            o.put("series_csv", path);
        }
        o.put("windows", series);
    }
    Ok(o)
}

fn cmd_synth(a: &SynthArgs, seed_flag: Option<u64>) -> Result<Outcome> {
    let cfg = load(&a.config)?;
    let profile = profile_of(&cfg, &a.turbulence)?;
    let so = &cfg.options.synth;
    let seed = seed_flag.or(cfg.options.seed).unwrap_or(0);
    let depth = BitDepth::from_bits(a.depth)?;
    let truth = match &a.truth {
        Some(p) => read_image(p)?.image,
        None => procedural_scene(a.scene_size, a.scene_size, seed),
    };
    let scfg = SynthConfig {
        optics: cfg.optics,
        profile: profile.clone(),
        frames: a.frames.unwrap_or(so.frames),
        noise_sd: a.noise.unwrap_or(so.noise_sd),
        seed,
        grid_extent: so.grid_extent,
        camera_jitter_px: a.jitter.unwrap_or(so.camera_jitter_px),
    };
    let mut o = Outcome::new(serde_json::to_value(&scfg).unwrap_or(Value::Null));
    o.seed = Some(seed);
    let synth = degrade_sequence(&truth, &scfg)?;
    let paths = write_sequence(&synth.sequence, &a.out, "frame", a.format.ext(), depth)?;
    let truth_path = a.out.join(format!("truth.{}", a.format.ext()));
    write_image(&truth, &truth_path, depth)?;
    let manifest = json!({
        "schema_version": REPORT_SCHEMA_VERSION,
        "synth": scfg,
        "r0_m": num(synth.truth.r0),
        "tilt_variance_px2": synth.truth.tilt_variance_px2,
        "camera_shifts_px": synth.truth.camera_shifts,
        "bit_depth": depth.bits(),
        "truth": truth_path,
        "frames": paths,
    });
    let manifest_path = a.out.join("manifest.json");
    std::fs::write(&manifest_path, serde_json::to_string_pretty(&manifest).expect("manifest serializes"))?;
    o.put("r0_m", num(synth.truth.r0));
    o.put("tilt_variance_px2", synth.truth.tilt_variance_px2);
    o.put("frames", paths.len());
    o.put("manifest", manifest_path);
    Ok(o)
}

fn stage_quality(img: &crate::image::Image, truth: &crate::image::Image, peak: f64) -> Result<Value> {
    Ok(json!({ "psnr_db": num(psnr(img, truth, peak)?), "ssim": ssim(img, truth, peak)? }))
}

fn cmd_mitigate(a: &MitigateArgs) -> Result<Outcome> {
    let cfg = load(&a.config)?;
    let depth = BitDepth::from_bits(a.depth)?;
    let mut mcfg: MitigationConfig = cfg.options.mitigation.clone();
    if let Some(m) = a.half_width {
        mcfg.half_width = m;
    }
    if let Some(s) = a.search_radius {
        mcfg.search_radius = s;
    }
    if let Some(g) = a.gamma {
        mcfg.gamma = g;
    }
    if let Some(r) = a.registration {
        mcfg.registration = r.into();
    }
    mcfg.prototype_global |= a.prototype_global;
    if let Some(c) = a.cost {
        mcfg.cost = match c {
            CostArg::Sad => MatchCost::Sad,
            CostArg::Ncc => MatchCost::Ncc,
        };
    }
    mcfg.clip = match &a.clip {
        Some(c) => Some(pair(c, "--clip")?),
        None => mcfg.clip.or(Some([0.0, depth.max_value()])),
    };
    mcfg.validate()?;
    let mut o = Outcome::new(json!({ "optics": cfg.optics, "mitigation": mcfg, "frames": a.frames }));
    let seq = read_sequence(&a.frames)?;
    let r0 = match a.r0 {
        Some(r) => r,
        None => {
            let spec = mcfg.registration_spec();
            let est = estimate_r0(&seq, &spec, &cfg.optics, &cfg.options.estimator)?;
            o.put("r0_estimate", json!({ "r0_m": est.r0, "sigmaG": est.sigma_g, "alpha": est.alpha, "fit_rms": est.fit_rms }));
            est.r0
        }
    };
    let res = mitigation::mitigate(&seq, &cfg.optics, &mcfg, r0)?;
    write_image(&res.restored, &a.out, depth)?;
    if let Some(p) = &a.fused_out {
        write_image(&res.fused, p, depth)?;
        o.put("fused", p);
    }
    o.put("restored", &a.out);
    o.put("alpha", res.alpha);
    o.put("r0_m", r0);
    o.put("frames", seq.len());
    if let Some(tp) = &a.truth {
        let truth = read_image(tp)?.image;
        let peak = depth.max_value();
        o.put(
            "quality",
            json!({
                "single_frame": stage_quality(&seq.frames()[0], &truth, peak)?,
                "fused": stage_quality(&res.fused, &truth, peak)?,
                "restored": stage_quality(&res.restored, &truth, peak)?,
            }),
        );
    }
    // Shape check so the chosen α is reproducible from the report alone.
    debug_assert_eq!(
        alpha_for(&cfg.optics, &mcfg.registration_spec(), FrameShape { rows: seq.rows(), cols: seq.cols() }).ok(),
        Some(res.alpha)
    );
    Ok(o)
}

fn cmd_eval(a: &EvalArgs) -> Result<Outcome> {
    let img = read_image(&a.image)?;
    let reference = read_image(&a.reference)?;
    let peak = a.peak.unwrap_or(reference.bit_depth.max_value());
    let mut o = Outcome::new(json!({ "image": a.image, "reference": a.reference, "peak": peak }));
    o.put("psnr_db", num(psnr(&img.image, &reference.image, peak)?));
    o.put("ssim", ssim(&img.image, &reference.image, peak)?);
    Ok(o)
}

fn cmd_repro(a: &ReproArgs) -> Result<Outcome> {
    let cfg = load(&a.config)?;
    let mut o = Outcome::new(config_echo(&cfg, None));
    let (rows, checks) = check_levels(&cfg.optics)?;
    let max = checks.iter().map(|c| c.rel_diff.abs()).fold(0.0, f64::max);
    let failed = checks.iter().filter(|c| !c.pass).count();
    o.put("levels", rows);
    o.put("checks", &checks);
    o.put("max_rel_diff", max);
    o.put("failed", failed);
    o.failed_check = a.check && failed > 0;
    Ok(o)
}
