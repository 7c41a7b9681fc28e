//! Command-line front end for the sign-percolation laboratory.
//!
//! Every subcommand resolves its settings from flags plus an optional flat
//! `key = value` config file (flags win), logs the canonical configuration
//! hash and master seed, and writes plot-ready CSV next to a JSON metadata
//! file. Data files are byte-identical across reruns of the same
//! configuration; wall-clock details live only in the metadata.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use signperc::constants::{pipeline_with, t_nu_bound, DecorrBudget};
use signperc::coupling::{bakounine_bound, tv_exact_with_tol, BlockGaussian, MAX_EXACT_DIM};
use signperc::experiments::{
    fit_one_arm, run, ArmCell, EstimateTable, EventSpec, Experiment, FieldSpec,
    DEFAULT_MEMORY_CAP, Z_95, Z_99,
};
use signperc::kernels::Kernel;
use signperc::lattice::Box2;
use signperc::nodal::{double_crossing_census, supnorm_statistic, transversality_statistic};
use signperc::percolation::Color;
use signperc::sampler::{
    choose_truncation, sample_bf_series, sample_cholesky, sample_kostlan, sample_wave,
    CirculantGrid, FieldSample, RasterGrid,
};

#[derive(Parser)]
#[command(
    name = "signperc",
    version,
    about = "Sign-percolation experiments for stationary planar Gaussian fields"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Draw one field sample on a raster and dump x,y,value rows
    Sample(SampleArgs),
    /// Estimate rectangle-crossing probabilities over a scale grid
    Cross(CrossArgs),
    /// Estimate annulus-circuit probabilities over a scale grid
    Circuit(CircuitArgs),
    /// Estimate one-arm probabilities and fit the decay exponent
    Onearm(OnearmArgs),
    /// Scan crossings at a fixed aspect ratio and report the probability floor
    Rsw(RswArgs),
    /// Census of lattice edges whose sign changes twice on a fine subsample
    #[command(name = "nodal-census")]
    NodalCensus(CensusArgs),
    /// Total-variation sweep of the block sign-coupling against its bound
    Tv(TvArgs),
    /// Evaluate the closed-form crossing-constant pipeline
    Constants(ConstantsArgs),
    /// Calibrate empirical constants: sup-norm growth and transversality
    Calibrate(CalibrateArgs),
}

#[derive(Args, Debug)]
struct IoArgs {
    /// Flat key = value configuration file; explicit flags take precedence
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory for CSV and metadata outputs
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

/// Flags shared by the estimate-table commands.
#[derive(Args, Debug)]
struct EstArgs {
    /// Covariance kernel: "bf", "bessel", or "kostlan:<degree>"
    #[arg(long)]
    kernel: Option<String>,
    /// Mesh of the vertex lattice
    #[arg(long)]
    eps: Option<f64>,
    /// Scale grid (repeat the flag, or give a list in the config file)
    #[arg(long)]
    s: Vec<f64>,
    /// Event color: "black" or "white"
    #[arg(long)]
    color: Option<String>,
    /// Replicates per scale
    #[arg(long)]
    reps: Option<u64>,
    /// Master seed of the replicate stream
    #[arg(long)]
    seed: Option<u64>,
    /// Wilson confidence level in percent: 99 or 95
    #[arg(long)]
    conf: Option<u32>,
    /// Cap in bytes on transient field storage
    #[arg(long)]
    cap: Option<u64>,
    #[command(flatten)]
    io: IoArgs,
}

#[derive(Args, Debug)]
struct SampleArgs {
    /// Covariance kernel: "bf", "bessel", or "kostlan:<degree>"
    #[arg(long)]
    kernel: Option<String>,
    /// Raster pitch
    #[arg(long)]
    eps: Option<f64>,
    /// Half-side of the sampled box
    #[arg(long)]
    s: Option<f64>,
    /// Sampler seed
    #[arg(long)]
    seed: Option<u64>,
    /// Sampling method: auto, circulant, cholesky, series, wave, kostlan
    #[arg(long)]
    method: Option<String>,
    /// Plane-wave count for the "wave" method
    #[arg(long)]
    waves: Option<u32>,
    #[command(flatten)]
    io: IoArgs,
}

#[derive(Args, Debug)]
struct CrossArgs {
    /// Rectangle aspect: the event crosses [0, rho*s] x [0, s] the long way
    #[arg(long)]
    rho: Option<f64>,
    #[command(flatten)]
    est: EstArgs,
}

#[derive(Args, Debug)]
struct CircuitArgs {
    /// Outer radius of the annulus, as a multiple of s
    #[arg(long)]
    ratio: Option<f64>,
    #[command(flatten)]
    est: EstArgs,
}

#[derive(Args, Debug)]
struct OnearmArgs {
    /// Inner box half-side the arm starts from; scales are the outer radii
    #[arg(long)]
    inner: Option<f64>,
    /// Bootstrap rounds for the exponent confidence interval
    #[arg(long)]
    bootstrap: Option<u32>,
    #[command(flatten)]
    est: EstArgs,
}

#[derive(Args, Debug)]
struct RswArgs {
    /// Rectangle aspect held fixed while the scale grows
    #[arg(long)]
    rho: Option<f64>,
    #[command(flatten)]
    est: EstArgs,
}

#[derive(Args, Debug)]
struct CensusArgs {
    /// Covariance kernel: "bf", "bessel", or "kostlan:<degree>"
    #[arg(long)]
    kernel: Option<String>,
    /// Mesh values to sweep (repeat the flag, or give a list in the config)
    #[arg(long)]
    eps: Vec<f64>,
    /// Half-side of the censused box
    #[arg(long)]
    s: Option<f64>,
    /// Interior subsample points per edge (at least 4)
    #[arg(long)]
    subsample: Option<usize>,
    /// Replicates per mesh
    #[arg(long)]
    reps: Option<u64>,
    /// Master seed
    #[arg(long)]
    seed: Option<u64>,
    /// Cap in bytes on transient field storage
    #[arg(long)]
    cap: Option<u64>,
    #[command(flatten)]
    io: IoArgs,
}

#[derive(Args, Debug)]
struct TvArgs {
    /// Largest total dimension m+n in the sweep (2..=12)
    #[arg(long)]
    maxdim: Option<usize>,
    /// Cross-correlation levels (repeat the flag, or list in the config)
    #[arg(long)]
    eta: Vec<f64>,
    /// Absolute tolerance of the exact orthant sums
    #[arg(long)]
    tol: Option<f64>,
    #[command(flatten)]
    io: IoArgs,
}

#[derive(Args, Debug)]
struct ConstantsArgs {
    /// Square-crossing constant fed into the pipeline
    #[arg(long)]
    c0: Option<f64>,
    /// Tail exponent nu in (0, 1/2)
    #[arg(long)]
    nu: Option<f64>,
    /// Vertex density per unit area
    #[arg(long)]
    at: Option<f64>,
    /// Polynomial decay exponent of the kernel certificate
    #[arg(long)]
    alpha: Option<f64>,
    /// ln(beta) of the kernel certificate
    #[arg(long)]
    lnbeta: Option<f64>,
    /// Calibrated lower bound on the crossing floor
    #[arg(long)]
    alpha_lower: Option<f64>,
    /// Slack exponent theta of the scale bound
    #[arg(long)]
    theta: Option<f64>,
    #[command(flatten)]
    io: IoArgs,
}

#[derive(Args, Debug)]
struct CalibrateArgs {
    /// Covariance kernel: "bf", "bessel", or "kostlan:<degree>"
    #[arg(long)]
    kernel: Option<String>,
    /// Raster pitch of the calibration grids
    #[arg(long)]
    pitch: Option<f64>,
    /// Box half-sides to calibrate at (repeat the flag, or list in the config)
    #[arg(long)]
    s: Vec<f64>,
    /// Replicates per statistic
    #[arg(long)]
    reps: Option<u64>,
    /// Master seed
    #[arg(long)]
    seed: Option<u64>,
    /// Quantile level used for the transversality constant
    #[arg(long)]
    delta: Option<f64>,
    /// Scale-exponent margin of the transversality statistic
    #[arg(long)]
    eta: Option<f64>,
    #[command(flatten)]
    io: IoArgs,
}

fn main() {
    std::process::exit(run_cli());
}

fn run_cli() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Usage problems are validation failures; help and version
            // displays are ordinary successes.
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let outcome = match cli.cmd {
        Cmd::Sample(a) => cmd_sample(a),
        Cmd::Cross(a) => cmd_cross(a),
        Cmd::Circuit(a) => cmd_circuit(a),
        Cmd::Onearm(a) => cmd_onearm(a),
        Cmd::Rsw(a) => cmd_rsw(a),
        Cmd::NodalCensus(a) => cmd_census(a),
        Cmd::Tv(a) => cmd_tv(a),
        Cmd::Constants(a) => cmd_constants(a),
        Cmd::Calibrate(a) => cmd_calibrate(a),
    };
    match outcome {
        Ok(()) => 0,
        Err(CliError::Validation(msg)) => {
            eprintln!("error: {msg}");
            1
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            2
        }
    }
}

// ---------------------------------------------------------------------------
// Errors and exit codes

#[derive(Debug)]
enum CliError {
    /// Rejected before any computation: exit code 1.
    Validation(String),
    /// Failed while running (budget, embedding, numerics, io): exit code 2.
    Runtime(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Validation(m) | CliError::Runtime(m) => f.write_str(m),
        }
    }
}

impl From<signperc::Error> for CliError {
    fn from(e: signperc::Error) -> Self {
        match e {
            signperc::Error::Validation(_)
            | signperc::Error::Domain(_)
            | signperc::Error::Unsupported(_) => CliError::Validation(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(format!("io: {e}"))
    }
}

fn missing(key: &str) -> CliError {
    CliError::Validation(format!("missing required key \"{key}\" (flag --{key} or config file)"))
}

// ---------------------------------------------------------------------------
// Config file handling

/// A flat `key = value` TOML table. Every key must be consumed by the
/// subcommand; leftovers are rejected by name.
struct ConfigFile {
    table: toml::Table,
}

impl ConfigFile {
    fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(ConfigFile { table: toml::Table::new() });
        };
        let text = fs::read_to_string(path).map_err(|e| {
            CliError::Validation(format!("config: cannot read {}: {e}", path.display()))
        })?;
        let table: toml::Table = text
            .parse()
            .map_err(|e| CliError::Validation(format!("config: {e}")))?;
        Ok(ConfigFile { table })
    }

    fn wrong_type(key: &str, want: &str, got: &toml::Value) -> CliError {
        CliError::Validation(format!("config key \"{key}\": expected {want}, got {got}"))
    }

    fn f64(&mut self, key: &str) -> Result<Option<f64>, CliError> {
        match self.table.remove(key) {
            None => Ok(None),
            Some(toml::Value::Float(x)) => Ok(Some(x)),
            Some(toml::Value::Integer(i)) => Ok(Some(i as f64)),
            Some(v) => Err(Self::wrong_type(key, "a number", &v)),
        }
    }

    fn u64(&mut self, key: &str) -> Result<Option<u64>, CliError> {
        match self.table.remove(key) {
            None => Ok(None),
            Some(toml::Value::Integer(i)) if i >= 0 => Ok(Some(i as u64)),
            Some(v) => Err(Self::wrong_type(key, "a nonnegative integer", &v)),
        }
    }

    fn u32(&mut self, key: &str) -> Result<Option<u32>, CliError> {
        match self.u64(key)? {
            None => Ok(None),
            Some(i) => u32::try_from(i).map(Some).map_err(|_| {
                CliError::Validation(format!("config key \"{key}\": {i} does not fit in 32 bits"))
            }),
        }
    }

    fn usize(&mut self, key: &str) -> Result<Option<usize>, CliError> {
        Ok(self.u64(key)?.map(|i| i as usize))
    }

    fn string(&mut self, key: &str) -> Result<Option<String>, CliError> {
        match self.table.remove(key) {
            None => Ok(None),
            Some(toml::Value::String(s)) => Ok(Some(s)),
            Some(v) => Err(Self::wrong_type(key, "a string", &v)),
        }
    }

    fn f64_list(&mut self, key: &str) -> Result<Option<Vec<f64>>, CliError> {
        match self.table.remove(key) {
            None => Ok(None),
            Some(toml::Value::Float(x)) => Ok(Some(vec![x])),
            Some(toml::Value::Integer(i)) => Ok(Some(vec![i as f64])),
            Some(toml::Value::Array(items)) => {
                let mut out = Vec::with_capacity(items.len());
                for v in items {
                    match v {
                        toml::Value::Float(x) => out.push(x),
                        toml::Value::Integer(i) => out.push(i as f64),
                        v => return Err(Self::wrong_type(key, "an array of numbers", &v)),
                    }
                }
                Ok(Some(out))
            }
            Some(v) => Err(Self::wrong_type(key, "an array of numbers", &v)),
        }
    }

    fn finish(self) -> Result<(), CliError> {
        match self.table.keys().next() {
            None => Ok(()),
            Some(k) => Err(CliError::Validation(format!("config: unknown key \"{k}\""))),
        }
    }
}

/// Scale grids may come from repeated flags or a config list; flags win.
fn merge_scales(flag: &[f64], cfg: Option<Vec<f64>>, key: &str) -> Result<Vec<f64>, CliError> {
    let v = if flag.is_empty() { cfg.unwrap_or_default() } else { flag.to_vec() };
    if v.is_empty() {
        return Err(missing(key));
    }
    Ok(v)
}

// ---------------------------------------------------------------------------
// Kernel, color, and confidence parsing

struct KernelChoice {
    kernel: Kernel,
    /// Canonical spelling, used for hashing and logging.
    name: String,
    kostlan_degree: Option<u32>,
}

fn parse_kernel(spec: &str) -> Result<KernelChoice, CliError> {
    let lower = spec.to_ascii_lowercase();
    match lower.as_str() {
        "bf" | "bargmann-fock" | "bargmann_fock" => Ok(KernelChoice {
            kernel: Kernel::bargmann_fock(),
            name: "bf".into(),
            kostlan_degree: None,
        }),
        "bessel" | "wave" | "j0" => Ok(KernelChoice {
            kernel: Kernel::bessel_wave(),
            name: "bessel".into(),
            kostlan_degree: None,
        }),
        _ => {
            if let Some(deg) = lower.strip_prefix("kostlan:") {
                let d: u32 = deg.parse().map_err(|_| {
                    CliError::Validation(format!(
                        "kernel: kostlan degree must be a positive integer, got \"{deg}\""
                    ))
                })?;
                if d == 0 {
                    return Err(CliError::Validation(
                        "kernel: kostlan degree must be at least 1".into(),
                    ));
                }
                Ok(KernelChoice {
                    kernel: Kernel::kostlan(d),
                    name: format!("kostlan:{d}"),
                    kostlan_degree: Some(d),
                })
            } else {
                Err(CliError::Validation(format!(
                    "kernel: expected \"bf\", \"bessel\", or \"kostlan:<degree>\", got \"{spec}\""
                )))
            }
        }
    }
}

fn parse_color(spec: &str) -> Result<(Color, &'static str), CliError> {
    match spec.to_ascii_lowercase().as_str() {
        "black" => Ok((Color::Black, "black")),
        "white" => Ok((Color::White, "white")),
        _ => Err(CliError::Validation(format!(
            "color: expected \"black\" or \"white\", got \"{spec}\""
        ))),
    }
}

fn confidence_z(conf: u32) -> Result<f64, CliError> {
    match conf {
        99 => Ok(Z_99),
        95 => Ok(Z_95),
        _ => Err(CliError::Validation(format!("conf: expected 95 or 99, got {conf}"))),
    }
}

// ---------------------------------------------------------------------------
// Reproducibility plumbing: canonical config, hash, outputs, metadata

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn fmt_list(xs: &[f64]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

#[derive(Serialize)]
struct Versions {
    signperc: &'static str,
    cli: &'static str,
}

#[derive(Serialize)]
struct Metadata<'a> {
    command: &'a str,
    config: &'a BTreeMap<String, String>,
    config_hash: &'a str,
    master_seed: u64,
    versions: Versions,
    started_unix_s: u64,
    runtime_s: f64,
    outputs: &'a [String],
    #[serde(skip_serializing_if = "serde_json::Value::is_null")]
    summary: serde_json::Value,
}

struct RunContext {
    command: &'static str,
    cfg: BTreeMap<String, String>,
    hash: String,
    seed: u64,
    out: PathBuf,
    started: Instant,
    started_unix_s: u64,
    outputs: Vec<String>,
}

impl RunContext {
    fn new(
        command: &'static str,
        cfg: BTreeMap<String, String>,
        seed: u64,
        out: PathBuf,
    ) -> Result<Self, CliError> {
        let mut canonical = format!("command={command}\n");
        for (k, v) in &cfg {
            canonical.push_str(k);
            canonical.push('=');
            canonical.push_str(v);
            canonical.push('\n');
        }
        let hash = format!("{:016x}", fnv1a64(canonical.as_bytes()));
        fs::create_dir_all(&out)?;
        let started_unix_s =
            SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        println!("signperc {command}: config={hash} seed={seed}");
        Ok(RunContext {
            command,
            cfg,
            hash,
            seed,
            out,
            started: Instant::now(),
            started_unix_s,
            outputs: Vec::new(),
        })
    }

    /// Writes a CSV whose first line embeds the config hash and seed; the
    /// payload is a pure function of the configuration.
    fn write_csv(&mut self, stem: &str, header: &str, rows: &[String]) -> Result<(), CliError> {
        let path = self.out.join(format!("{stem}.csv"));
        let mut text = format!(
            "# signperc {} config={} seed={}\n{header}\n",
            self.command, self.hash, self.seed
        );
        for row in rows {
            text.push_str(row);
            text.push('\n');
        }
        fs::write(&path, text)?;
        self.outputs.push(format!("{stem}.csv"));
        println!("wrote {} ({} rows)", path.display(), rows.len());
        Ok(())
    }

    fn write_raw(&mut self, name: &str, text: &str) -> Result<(), CliError> {
        let path = self.out.join(name);
        fs::write(&path, text)?;
        self.outputs.push(name.to_string());
        println!("wrote {}", path.display());
        Ok(())
    }

    fn finish(self, summary: serde_json::Value) -> Result<(), CliError> {
        let meta = Metadata {
            command: self.command,
            config: &self.cfg,
            config_hash: &self.hash,
            master_seed: self.seed,
            versions: Versions { signperc: signperc::VERSION, cli: env!("CARGO_PKG_VERSION") },
            started_unix_s: self.started_unix_s,
            runtime_s: self.started.elapsed().as_secs_f64(),
            outputs: &self.outputs,
            summary,
        };
        let path = self.out.join(format!("{}.meta.json", self.command));
        let text = serde_json::to_string_pretty(&meta)
            .map_err(|e| CliError::Runtime(format!("metadata: {e}")))?;
        fs::write(&path, text + "\n")?;
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Shared estimate-table plumbing

struct EstCommon {
    kernel: KernelChoice,
    eps: f64,
    scales: Vec<f64>,
    color: Color,
    color_name: &'static str,
    reps: u64,
    seed: u64,
    conf: u32,
    z: f64,
    cap: u64,
}

fn parse_est(a: &EstArgs, cfg: &mut ConfigFile) -> Result<EstCommon, CliError> {
    let kernel_spec =
        a.kernel.clone().or(cfg.string("kernel")?).ok_or_else(|| missing("kernel"))?;
    let kernel = parse_kernel(&kernel_spec)?;
    let eps = a.eps.or(cfg.f64("eps")?).ok_or_else(|| missing("eps"))?;
    let scales = merge_scales(&a.s, cfg.f64_list("s")?, "s")?;
    let color_spec = a.color.clone().or(cfg.string("color")?).unwrap_or_else(|| "black".into());
    let (color, color_name) = parse_color(&color_spec)?;
    let reps = a.reps.or(cfg.u64("reps")?).unwrap_or(4000);
    let seed = a.seed.or(cfg.u64("seed")?).unwrap_or(0);
    let conf = a.conf.or(cfg.u32("conf")?).unwrap_or(99);
    let cap = a.cap.or(cfg.u64("cap")?).unwrap_or(DEFAULT_MEMORY_CAP);
    let z = confidence_z(conf)?;
    Ok(EstCommon { kernel, eps, scales, color, color_name, reps, seed, conf, z, cap })
}

impl EstCommon {
    fn config_map(&self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        m.insert("kernel".into(), self.kernel.name.clone());
        m.insert("eps".into(), self.eps.to_string());
        m.insert("s".into(), fmt_list(&self.scales));
        m.insert("color".into(), self.color_name.to_string());
        m.insert("reps".into(), self.reps.to_string());
        m.insert("seed".into(), self.seed.to_string());
        m.insert("conf".into(), self.conf.to_string());
        m.insert("cap".into(), self.cap.to_string());
        m
    }

    fn experiment(&self, event: EventSpec) -> Experiment {
        let mut exp = Experiment::new(
            FieldSpec::Kernel(self.kernel.kernel.clone()),
            self.eps,
            event,
            self.scales.clone(),
            self.reps,
            self.seed,
        );
        exp.confidence_z = self.z;
        exp.memory_cap_bytes = self.cap;
        exp
    }
}

const EST_HEADER: &str = "scale,successes,replicates,p_hat,wilson_lo,wilson_hi";

/// Wall times stay out of the CSV so reruns reproduce it byte for byte.
fn estimate_rows(table: &EstimateTable) -> Vec<String> {
    table
        .rows
        .iter()
        .map(|r| {
            format!(
                "{},{},{},{},{},{}",
                r.scale, r.successes, r.replicates, r.p_hat, r.wilson_lo, r.wilson_hi
            )
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Subcommands

fn cmd_sample(a: SampleArgs) -> Result<(), CliError> {
    let mut cfg = ConfigFile::load(a.io.config.as_deref())?;
    let kernel_spec =
        a.kernel.clone().or(cfg.string("kernel")?).ok_or_else(|| missing("kernel"))?;
    let kc = parse_kernel(&kernel_spec)?;
    let eps = a.eps.or(cfg.f64("eps")?).ok_or_else(|| missing("eps"))?;
    let s = a.s.or(cfg.f64("s")?).ok_or_else(|| missing("s"))?;
    let seed = a.seed.or(cfg.u64("seed")?).unwrap_or(0);
    let method = a
        .method
        .clone()
        .or(cfg.string("method")?)
        .unwrap_or_else(|| "auto".into())
        .to_ascii_lowercase();
    let waves = a.waves.or(cfg.u32("waves")?).unwrap_or(1024);
    cfg.finish()?;

    let mut map = BTreeMap::new();
    map.insert("kernel".into(), kc.name.clone());
    map.insert("eps".into(), eps.to_string());
    map.insert("s".into(), s.to_string());
    map.insert("seed".into(), seed.to_string());
    map.insert("method".into(), method.clone());
    map.insert("waves".into(), waves.to_string());
    let mut ctx = RunContext::new("sample", map, seed, a.io.out)?;

    let window = Box2::centered(s)?;
    let raster = RasterGrid::covering(&window, eps)?;
    let points = raster.points();

    // Tail budget of the entire-series sampler; fixed well below the
    // statistical resolution of anything downstream.
    const SERIES_TAIL_EPS: f64 = 1e-6;
    const SERIES_TAIL_DELTA: f64 = 1e-6;

    let mut summary = serde_json::Map::new();
    let sample: FieldSample = match method.as_str() {
        "auto" => match kc.kostlan_degree {
            Some(d) => sample_kostlan(d, &points, seed)?,
            None => {
                let grid = CirculantGrid::auto(&kc.kernel, &raster)?;
                let rep = grid.report();
                summary.insert("padding".into(), rep.padding.into());
                summary.insert("torus".into(), serde_json::json!(rep.torus));
                summary.insert("clipped_mass".into(), rep.clipped_mass.into());
                grid.sample(seed)
            }
        },
        "circulant" => {
            let grid = CirculantGrid::auto(&kc.kernel, &raster)?;
            let rep = grid.report();
            summary.insert("padding".into(), rep.padding.into());
            summary.insert("torus".into(), serde_json::json!(rep.torus));
            summary.insert("clipped_mass".into(), rep.clipped_mass.into());
            grid.sample(seed)
        }
        "cholesky" => sample_cholesky(&kc.kernel, &points, seed)?,
        "series" => {
            if kc.name != "bf" {
                return Err(CliError::Validation(
                    "method: the series sampler applies to the bf kernel only".into(),
                ));
            }
            let radius = s * std::f64::consts::SQRT_2;
            let budget = choose_truncation(radius, SERIES_TAIL_EPS, SERIES_TAIL_DELTA)?;
            summary.insert("series_degree".into(), budget.degree.into());
            sample_bf_series(&budget, &points, seed)?
        }
        "wave" => {
            if kc.name != "bessel" {
                return Err(CliError::Validation(
                    "method: the wave sampler applies to the bessel kernel only".into(),
                ));
            }
            sample_wave(waves, &points, seed)?
        }
        "kostlan" => {
            let Some(d) = kc.kostlan_degree else {
                return Err(CliError::Validation(
                    "method: the kostlan sampler needs a kostlan:<degree> kernel".into(),
                ));
            };
            sample_kostlan(d, &points, seed)?
        }
        other => {
            return Err(CliError::Validation(format!(
                "method: expected auto, circulant, cholesky, series, wave, or kostlan, \
                 got \"{other}\""
            )))
        }
    };

    let rows: Vec<String> = sample
        .points
        .iter()
        .zip(&sample.values)
        .map(|(p, v)| format!("{},{},{}", p[0], p[1], v))
        .collect();
    ctx.write_csv("sample", "x,y,value", &rows)?;
    ctx.finish(serde_json::Value::Object(summary))
}

fn cmd_cross(a: CrossArgs) -> Result<(), CliError> {
    let mut cfg = ConfigFile::load(a.est.io.config.as_deref())?;
    let common = parse_est(&a.est, &mut cfg)?;
    let rho = a.rho.or(cfg.f64("rho")?).unwrap_or(1.0);
    cfg.finish()?;

    let mut map = common.config_map();
    map.insert("rho".into(), rho.to_string());
    let mut ctx = RunContext::new("cross", map, common.seed, a.est.io.out)?;

    let exp = common.experiment(EventSpec::Crossing { rho, color: common.color });
    let table = run(&exp)?;
    ctx.write_csv("cross", EST_HEADER, &estimate_rows(&table))?;
    ctx.finish(serde_json::Value::Null)
}

fn cmd_circuit(a: CircuitArgs) -> Result<(), CliError> {
    let mut cfg = ConfigFile::load(a.est.io.config.as_deref())?;
    let common = parse_est(&a.est, &mut cfg)?;
    let ratio = a.ratio.or(cfg.f64("ratio")?).unwrap_or(2.0);
    cfg.finish()?;

    let mut map = common.config_map();
    map.insert("ratio".into(), ratio.to_string());
    let mut ctx = RunContext::new("circuit", map, common.seed, a.est.io.out)?;

    let exp = common.experiment(EventSpec::Circuit { ratio, color: common.color });
    let table = run(&exp)?;
    ctx.write_csv("circuit", EST_HEADER, &estimate_rows(&table))?;
    ctx.finish(serde_json::Value::Null)
}

fn cmd_onearm(a: OnearmArgs) -> Result<(), CliError> {
    let mut cfg = ConfigFile::load(a.est.io.config.as_deref())?;
    let common = parse_est(&a.est, &mut cfg)?;
    let inner = a.inner.or(cfg.f64("inner")?).unwrap_or(1.0);
    let bootstrap = a.bootstrap.or(cfg.u32("bootstrap")?).unwrap_or(1000);
    cfg.finish()?;

    let mut map = common.config_map();
    map.insert("inner".into(), inner.to_string());
    map.insert("bootstrap".into(), bootstrap.to_string());
    let mut ctx = RunContext::new("onearm", map, common.seed, a.est.io.out)?;

    let exp = common.experiment(EventSpec::OneArm { inner, color: common.color });
    let table = run(&exp)?;
    let rows: Vec<String> = table
        .rows
        .iter()
        .map(|r| {
            format!(
                "{inner},{},{},{},{},{},{}",
                r.scale, r.successes, r.replicates, r.p_hat, r.wilson_lo, r.wilson_hi
            )
        })
        .collect();
    ctx.write_csv(
        "onearm",
        "inner,outer,successes,replicates,pi_hat,wilson_lo,wilson_hi",
        &rows,
    )?;

    let cells: Vec<ArmCell> = table
        .rows
        .iter()
        .map(|r| ArmCell { s: inner, t: r.scale, pi_hat: r.p_hat, replicates: r.replicates })
        .collect();
    let fit = fit_one_arm(&cells, bootstrap, common.seed)?;
    let fit_row = format!(
        "{},{},{},{},{}",
        fit.eta_hat, fit.ci_lo, fit.ci_hi, fit.used, fit.excluded
    );
    ctx.write_csv("onearm_fit", "eta_hat,ci_lo,ci_hi,used,excluded", &[fit_row])?;
    println!(
        "one-arm exponent: eta_hat = {} (bootstrap CI [{}, {}])",
        fit.eta_hat, fit.ci_lo, fit.ci_hi
    );
    ctx.finish(serde_json::json!({
        "eta_hat": fit.eta_hat,
        "ci_lo": fit.ci_lo,
        "ci_hi": fit.ci_hi,
        "warnings": fit.warnings,
    }))
}

fn cmd_rsw(a: RswArgs) -> Result<(), CliError> {
    let mut cfg = ConfigFile::load(a.est.io.config.as_deref())?;
    let common = parse_est(&a.est, &mut cfg)?;
    let rho = a.rho.or(cfg.f64("rho")?).unwrap_or(2.0);
    cfg.finish()?;

    let mut map = common.config_map();
    map.insert("rho".into(), rho.to_string());
    let mut ctx = RunContext::new("rsw", map, common.seed, a.est.io.out)?;

    let exp = common.experiment(EventSpec::Crossing { rho, color: common.color });
    let table = run(&exp)?;
    ctx.write_csv("rsw", EST_HEADER, &estimate_rows(&table))?;

    // The quantity of interest: a scale-uniform lower bound on the hard-way
    // crossing probability.
    let floor = table
        .rows
        .iter()
        .map(|r| (r.wilson_lo, r.scale))
        .min_by(|x, y| x.0.total_cmp(&y.0))
        .expect("nonempty scale grid");
    println!(
        "rsw floor at aspect {rho}: wilson lower bound {} (attained at scale {})",
        floor.0, floor.1
    );
    ctx.finish(serde_json::json!({
        "floor": floor.0,
        "floor_scale": floor.1,
        "aspect": rho,
    }))
}

fn cmd_census(a: CensusArgs) -> Result<(), CliError> {
    let mut cfg = ConfigFile::load(a.io.config.as_deref())?;
    let kernel_spec =
        a.kernel.clone().or(cfg.string("kernel")?).ok_or_else(|| missing("kernel"))?;
    let kc = parse_kernel(&kernel_spec)?;
    let meshes = merge_scales(&a.eps, cfg.f64_list("eps")?, "eps")?;
    let s = a.s.or(cfg.f64("s")?).ok_or_else(|| missing("s"))?;
    let subsample = a.subsample.or(cfg.usize("subsample")?).unwrap_or(8);
    let reps = a.reps.or(cfg.u64("reps")?).unwrap_or(100);
    let seed = a.seed.or(cfg.u64("seed")?).unwrap_or(0);
    let cap = a.cap.or(cfg.u64("cap")?).unwrap_or(DEFAULT_MEMORY_CAP);
    cfg.finish()?;

    let mut map = BTreeMap::new();
    map.insert("kernel".into(), kc.name.clone());
    map.insert("eps".into(), fmt_list(&meshes));
    map.insert("s".into(), s.to_string());
    map.insert("subsample".into(), subsample.to_string());
    map.insert("reps".into(), reps.to_string());
    map.insert("seed".into(), seed.to_string());
    map.insert("cap".into(), cap.to_string());
    let mut ctx = RunContext::new("nodal-census", map, seed, a.io.out)?;

    let mut rows = Vec::with_capacity(meshes.len());
    for &eps in &meshes {
        let rep = double_crossing_census(&kc.kernel, eps, s, subsample, reps, seed, cap)?;
        rows.push(format!(
            "{s},{eps},{},{},{},{},{},{},{},{},{},{}",
            rep.subsample_k,
            rep.pitch,
            rep.edges_total,
            rep.replicates,
            rep.flagged_total,
            rep.mean_flagged_fraction,
            rep.zero_flag_replicates,
            rep.p_none_hat,
            rep.wilson_lo,
            rep.wilson_hi,
        ));
    }
    ctx.write_csv(
        "nodal-census",
        "s,eps,subsample_k,pitch,edges,replicates,flagged_total,\
         mean_flagged_fraction,zero_flag_replicates,p_none_hat,wilson_lo,wilson_hi",
        &rows,
    )?;
    ctx.finish(serde_json::Value::Null)
}

fn cmd_tv(a: TvArgs) -> Result<(), CliError> {
    let mut cfg = ConfigFile::load(a.io.config.as_deref())?;
    let maxdim = a.maxdim.or(cfg.usize("maxdim")?).unwrap_or(8);
    let etas = if a.eta.is_empty() {
        cfg.f64_list("eta")?.unwrap_or_else(|| vec![0.05, 0.1, 0.3, 0.6])
    } else {
        a.eta.clone()
    };
    let tol = a.tol.or(cfg.f64("tol")?).unwrap_or(1e-4);
    cfg.finish()?;
    if !(2..=MAX_EXACT_DIM).contains(&maxdim) {
        return Err(CliError::Validation(format!(
            "maxdim: expected 2..={MAX_EXACT_DIM}, got {maxdim}"
        )));
    }

    let mut map = BTreeMap::new();
    map.insert("maxdim".into(), maxdim.to_string());
    map.insert("eta".into(), fmt_list(&etas));
    map.insert("tol".into(), tol.to_string());
    let mut ctx = RunContext::new("tv", map, 0, a.io.out)?;

    let mut rows = Vec::new();
    let mut worst_margin = f64::INFINITY;
    for &eta in &etas {
        for m in 1..maxdim {
            for n in 1..=(maxdim - m) {
                let bg = BlockGaussian::cross_identity(m, n, eta)?;
                let tv = tv_exact_with_tol(&bg, tol)?;
                let bound = bakounine_bound(m, n, eta)?;
                let margin = bound - tv.value;
                worst_margin = worst_margin.min(margin);
                rows.push(format!(
                    "{m},{n},{eta},{},{},{bound},{margin}",
                    tv.value, tv.error_bound
                ));
            }
        }
    }
    ctx.write_csv("tv", "m,n,eta,tv,tv_error_bound,coupling_bound,margin", &rows)?;
    println!("smallest bound margin across the sweep: {worst_margin}");
    ctx.finish(serde_json::json!({ "worst_margin": worst_margin }))
}

fn cmd_constants(a: ConstantsArgs) -> Result<(), CliError> {
    let mut cfg = ConfigFile::load(a.io.config.as_deref())?;
    let c0 = a.c0.or(cfg.f64("c0")?).ok_or_else(|| missing("c0"))?;
    let nu = a.nu.or(cfg.f64("nu")?).ok_or_else(|| missing("nu"))?;
    let default_budget = DecorrBudget::default_gaussian();
    let at = a.at.or(cfg.f64("at")?).unwrap_or(default_budget.a_t);
    let alpha = a.alpha.or(cfg.f64("alpha")?).unwrap_or(default_budget.alpha);
    let lnbeta = a.lnbeta.or(cfg.f64("lnbeta")?).unwrap_or(default_budget.ln_beta);
    let alpha_lower = a.alpha_lower.or(cfg.f64("alpha-lower")?).unwrap_or(1.0 / 16.0);
    let theta = a.theta.or(cfg.f64("theta")?).unwrap_or(1.0);
    cfg.finish()?;

    let mut map = BTreeMap::new();
    map.insert("c0".into(), c0.to_string());
    map.insert("nu".into(), nu.to_string());
    map.insert("at".into(), at.to_string());
    map.insert("alpha".into(), alpha.to_string());
    map.insert("lnbeta".into(), lnbeta.to_string());
    map.insert("alpha-lower".into(), alpha_lower.to_string());
    map.insert("theta".into(), theta.to_string());
    let mut ctx = RunContext::new("constants", map, 0, a.io.out)?;

    let budget = DecorrBudget::new(at, alpha, lnbeta)?;
    let consts = pipeline_with(c0, nu, &budget, alpha_lower)?;
    let tnu = t_nu_bound(&consts, &budget, theta)?;
    let row = format!(
        "{c0},{nu},{},{},{},{},{},{},{},{},{},{theta},{},{},{}",
        consts.gamma_nu,
        consts.log_q1,
        consts.log_q2,
        consts.log_q3,
        consts.log_tau1,
        consts.log_s_omega,
        consts.log_s_nu,
        consts.log_t_nu,
        consts.alpha_lower,
        tnu.exponent,
        tnu.log_coefficient,
        tnu.log_value,
    );
    ctx.write_csv(
        "constants",
        "c0,nu,gamma_nu,log_q1,log_q2,log_q3,log_tau1,log_s_omega,log_s_nu,\
         log_t_nu,alpha_lower,theta,tnu_exponent,tnu_log_coefficient,tnu_log_value",
        &[row],
    )?;
    println!(
        "pipeline at c0={c0}, nu={nu}: log_q1={}, log_t_nu={}",
        consts.log_q1, consts.log_t_nu
    );
    ctx.finish(serde_json::Value::Null)
}

fn cmd_calibrate(a: CalibrateArgs) -> Result<(), CliError> {
    let mut cfg = ConfigFile::load(a.io.config.as_deref())?;
    let kernel_spec =
        a.kernel.clone().or(cfg.string("kernel")?).ok_or_else(|| missing("kernel"))?;
    let kc = parse_kernel(&kernel_spec)?;
    let pitch = a.pitch.or(cfg.f64("pitch")?).unwrap_or(0.25);
    let scales = merge_scales(&a.s, cfg.f64_list("s")?, "s")?;
    let reps = a.reps.or(cfg.u64("reps")?).unwrap_or(16);
    let seed = a.seed.or(cfg.u64("seed")?).unwrap_or(0);
    let delta = a.delta.or(cfg.f64("delta")?).unwrap_or(0.05);
    let eta = a.eta.or(cfg.f64("eta")?).unwrap_or(1.0);
    cfg.finish()?;

    let mut map = BTreeMap::new();
    map.insert("kernel".into(), kc.name.clone());
    map.insert("pitch".into(), pitch.to_string());
    map.insert("s".into(), fmt_list(&scales));
    map.insert("reps".into(), reps.to_string());
    map.insert("seed".into(), seed.to_string());
    map.insert("delta".into(), delta.to_string());
    map.insert("eta".into(), eta.to_string());
    let mut ctx = RunContext::new("calibrate", map, seed, a.io.out)?;

    let supnorm = supnorm_statistic(&kc.kernel, &scales, pitch, reps, seed)?;
    let trans = transversality_statistic(&kc.kernel, &scales, pitch, reps, seed, delta, eta)?;

    let rows: Vec<String> = supnorm
        .iter()
        .zip(&trans.rows)
        .map(|(sup, t)| {
            format!(
                "{},{},{},{},{}",
                sup.s, sup.mean_max, sup.std_error, sup.ratio_to_sqrt_log, t.mu_calibrated
            )
        })
        .collect();
    ctx.write_csv(
        "calibrate",
        "s,mean_max,max_std_error,ratio_to_sqrt_log,mu_calibrated",
        &rows,
    )?;

    // Conservative empirical constants: the largest sup-norm ratio and the
    // smallest transversality constant seen across the scale grid.
    let c1_hat =
        supnorm.iter().map(|r| r.ratio_to_sqrt_log).fold(f64::NEG_INFINITY, f64::max);
    let mu_min =
        trans.rows.iter().map(|r| r.mu_calibrated).fold(f64::INFINITY, f64::min);

    let mut kv = String::new();
    kv.push_str(&format!("version = \"{}\"\n", signperc::VERSION));
    kv.push_str(&format!("config_hash = \"{}\"\n", ctx.hash));
    kv.push_str(&format!("seed = {seed}\n"));
    kv.push_str(&format!("kernel = \"{}\"\n", kc.name));
    kv.push_str(&format!("pitch = {pitch}\n"));
    kv.push_str(&format!("delta = {delta}\n"));
    kv.push_str(&format!("eta = {eta}\n"));
    kv.push_str(&format!("c1_hat = {c1_hat}\n"));
    kv.push_str(&format!("mu_min = {mu_min}\n"));
    kv.push_str(&format!("e_phi_half = {}\n", trans.e_phi_half));
    kv.push_str(&format!("phi_std_error = {}\n", trans.phi_std_error));
    kv.push_str(&format!("curvature_error = {}\n", trans.curvature_error));
    ctx.write_raw("calibrate.toml", &kv)?;

    let quantiles: Vec<serde_json::Value> = trans
        .rows
        .iter()
        .map(|r| {
            serde_json::json!({
                "s": r.s,
                "quantiles": r.quantiles,
                "mu_calibrated": r.mu_calibrated,
            })
        })
        .collect();
    ctx.finish(serde_json::json!({
        "c1_hat": c1_hat,
        "mu_min": mu_min,
        "e_phi_half": trans.e_phi_half,
        "phi_std_error": trans.phi_std_error,
        "transversality": quantiles,
    }))
}
