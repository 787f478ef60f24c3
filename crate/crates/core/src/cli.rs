//! Command-line front end.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error,
//! 3 numeric failure.

use std::ffi::OsString;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};

use crate::baselines::OcnnDetector;
use crate::data::{load_csv, windows_for_all, CsvSchema, LabelMap, LabelRule, Window, WindowConfig};
use crate::ensemble::AeConfig;
use crate::error::{Error, Result};
use crate::nn::{random_gradient_checks, Arch, GradcheckSuite, TrainConfig, DEFAULT_BOTTLENECK};
use crate::persist;
use crate::report::{export_results_csv, export_sweep_svg, ResultRow};
use crate::selection::{
    fit_final_thresholds, loocv_methods, parse_view, proxy_split, report_rows, rho_sweep, tune_omega, view_name,
    Method, NoProbe, PipelineConfig, SelectionConfig, DEFAULT_K_FOLDS, DEFAULT_RHO,
};
use crate::synth::{generate_with_truth, label_map, SynthConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

/// Gradient checks at or above this relative error fail.
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;

const DEFAULT_GRID: &str = "0.001,0.01,0.1,0.5,1,1.5,1.7239,2,2.5,3";

#[derive(Debug, Parser)]
#[command(name = "aefall", version, about = "One-class fall detection with autoencoder reconstruction error")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic dataset and its label map
    Synth(SynthArgs),
    /// Train one detector on every subject's normal data and save it
    Train(PipelineArgs),
    /// Leave-one-subject-out evaluation
    Loocv(PipelineArgs),
    /// Leave-one-subject-out evaluation over a grid of rho values
    Sweep(SweepArgs),
    /// Compare analytic gradients with central differences on random networks
    Gradcheck(GradcheckArgs),
}

/// A comma-separated list of non-negative reals.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid(pub Vec<f64>);

impl FromStr for Grid {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let values = s
            .split(',')
            .map(|t| {
                let t = t.trim();
                t.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite() && *v >= 0.0)
                    .ok_or_else(|| format!("'{t}' is not a non-negative number"))
            })
            .collect::<std::result::Result<Vec<_>, _>>()?;
        if values.is_empty() {
            return Err("grid is empty".into());
        }
        Ok(Grid(values))
    }
}

impl fmt::Display for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(f64::to_string).collect();
        f.write_str(&parts.join(","))
    }
}

/// A comma-separated list of methods.
#[derive(Debug, Clone, PartialEq)]
pub struct Methods(pub Vec<Method>);

impl FromStr for Methods {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let methods = s
            .split(',')
            .map(|t| t.trim().parse::<Method>().map_err(|e| e.to_string()))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        Ok(Methods(methods))
    }
}

fn parse_view_arg(s: &str) -> std::result::Result<crate::data::View, String> {
    parse_view(s).map_err(|e| e.to_string())
}

fn parse_arch(s: &str) -> std::result::Result<Arch, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_label_rule(s: &str) -> std::result::Result<LabelRule, String> {
    match s {
        "majority" => Ok(LabelRule::Majority),
        "any" => Ok(LabelRule::Any),
        other => Err(format!("unknown label rule '{other}' (expected majority or any)")),
    }
}

fn positive(s: &str) -> std::result::Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v > 0.0 && v.is_finite() => Ok(v),
        _ => Err(format!("'{s}' is not a positive number")),
    }
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Number of subjects
    #[arg(long, default_value_t = 5)]
    pub subjects: usize,
    /// Recording length per subject in seconds
    #[arg(long, default_value_t = 120.0)]
    pub duration: f64,
    /// Expected fraction of spiked samples per channel
    #[arg(long, default_value_t = 0.01)]
    pub noise_rate: f64,
    /// Falls per subject
    #[arg(long, default_value_t = 20)]
    pub falls: usize,
    #[arg(long, default_value_t = 100.0)]
    pub sample_rate: f64,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Output directory for data.csv and labels.csv
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// key=value file supplying defaults for any flag
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    /// Sensor CSV: subject_id,label,t,ax,ay,az,wx,wy,wz
    #[arg(long)]
    pub data: PathBuf,
    /// Label map CSV: label,class with class normal or fall
    #[arg(long)]
    pub labels: PathBuf,
    /// Channel view: monolithic, 6ce or 2ce
    #[arg(long, default_value = "6ce", value_parser = parse_view_arg)]
    pub view: crate::data::View,
    /// Autoencoder architecture: ae or sae
    #[arg(long, default_value = "ae", value_parser = parse_arch)]
    pub arch: Arch,
    /// Comma-separated methods: maxre, stdre, rre, ire, ocnn
    #[arg(long, default_value = "rre")]
    pub threshold: Methods,
    #[arg(long, default_value_t = 1.28, value_parser = positive)]
    pub window_seconds: f64,
    /// Window overlap fraction
    #[arg(long, default_value_t = 0.5)]
    pub overlap: f64,
    /// How mixed windows are labelled: majority or any
    #[arg(long, default_value = "majority", value_parser = parse_label_rule)]
    pub label_rule: LabelRule,
    #[arg(long, default_value_t = 100.0, value_parser = positive)]
    pub sample_rate: f64,
    /// Fence multiplier that separates proxy falls from non-falls
    #[arg(long, default_value_t = DEFAULT_RHO, value_parser = positive)]
    pub rho: f64,
    /// Candidate fence multipliers for RRE and IRE
    #[arg(long, default_value = DEFAULT_GRID)]
    pub omega_grid: Grid,
    #[arg(long, default_value_t = DEFAULT_K_FOLDS)]
    pub k_folds: usize,
    /// Hidden units in the bottleneck layer
    #[arg(long, default_value_t = DEFAULT_BOTTLENECK)]
    pub bottleneck: usize,
    #[arg(long, default_value_t = TrainConfig::default().epochs)]
    pub epochs: usize,
    /// Distance ratio above which the nearest-neighbour baseline flags a fall
    #[arg(long, default_value_t = 1.0, value_parser = positive)]
    pub ocnn_ratio: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads; 0 uses every core
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,
    /// Output directory
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// key=value file supplying defaults for any flag
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub pipeline: PipelineArgs,
    /// Values of rho to sweep
    #[arg(long, default_value = DEFAULT_GRID)]
    pub rho_grid: Grid,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    /// Random networks to check
    #[arg(long, default_value_t = 100)]
    pub nets: usize,
    /// Finite-difference step
    #[arg(long, default_value_t = 1e-5)]
    pub eps: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// key=value file supplying defaults for any flag
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Negate the analytic gradient to confirm that the check can fail
    #[arg(long, hide = true)]
    pub inject_fault: bool,
}

impl PipelineArgs {
    fn pipeline_config(&self) -> Result<PipelineConfig> {
        let cfg = PipelineConfig {
            window: WindowConfig {
                window_seconds: self.window_seconds,
                overlap: self.overlap,
                label_rule: self.label_rule,
            },
            view: self.view,
            ae: AeConfig {
                arch: self.arch,
                bottleneck: self.bottleneck,
                train: TrainConfig {
                    epochs: self.epochs,
                    seed: self.seed,
                    ..TrainConfig::default()
                },
            },
            selection: SelectionConfig {
                rho: self.rho,
                omega_grid: self.omega_grid.0.clone(),
                k_folds: self.k_folds,
                seed: self.seed,
                ..SelectionConfig::default()
            },
            ocnn_ratio: self.ocnn_ratio,
        };
        cfg.validate()?;
        cfg.window.window_len(self.sample_rate)?;
        Ok(cfg)
    }

    fn load(&self) -> Result<Vec<crate::data::SensorRecording>> {
        for (flag, path) in [("--data", &self.data), ("--labels", &self.labels)] {
            if !path.is_file() {
                return Err(Error::Config(format!("{flag} {} does not exist", path.display())));
            }
        }
        let schema = CsvSchema {
            labels: LabelMap::load(&self.labels)?,
            sample_rate_hz: self.sample_rate,
        };
        load_csv(&self.data, &schema)
    }
}

/// Maps a library error onto the process exit code.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) => EXIT_USAGE,
        Error::Numeric(_) => EXIT_NUMERIC,
        _ => EXIT_DATA,
    }
}

/// Rewrites `args` so that entries of a `--config` file precede the user's
/// own flags; later occurrences win, so explicit flags take precedence.
fn overlay_config(args: Vec<OsString>) -> Result<Vec<OsString>> {
    let mut path = None;
    for (i, a) in args.iter().enumerate() {
        let s = a.to_string_lossy();
        if s == "--config" {
            path = args.get(i + 1).map(PathBuf::from);
        } else if let Some(p) = s.strip_prefix("--config=") {
            path = Some(PathBuf::from(p));
        }
    }
    let Some(path) = path else { return Ok(args) };
    let text = fs::read_to_string(&path)
        .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
    let mut injected = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("{}:{}: expected key=value", path.display(), n + 1)))?;
        let key = key.trim().replace('_', "-");
        if key == "config" {
            return Err(Error::config("config files cannot include other config files"));
        }
        let value = value.trim();
        if value == "true" {
            injected.push(OsString::from(format!("--{key}")));
        } else if value != "false" {
            injected.push(OsString::from(format!("--{key}={value}")));
        }
    }
    let names: Vec<String> = Cli::command().get_subcommands().map(|c| c.get_name().to_string()).collect();
    let at = args
        .iter()
        .position(|a| names.iter().any(|n| a.to_string_lossy() == *n))
        .map_or(args.len(), |i| i + 1);
    let mut out = args[..at].to_vec();
    out.extend(injected);
    out.extend_from_slice(&args[at..]);
    Ok(out)
}

fn command() -> clap::Command {
    let mut cmd = Cli::command();
    for name in ["synth", "train", "loocv", "sweep", "gradcheck"] {
        cmd = cmd.mut_subcommand(name, |c| c.args_override_self(true));
    }
    cmd
}

/// Parses `args` (including the program name), runs the command and returns
/// the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let args = match overlay_config(args) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_USAGE;
        }
    };
    let matches = match command().try_get_matches_from(args) {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return EXIT_USAGE;
        }
    };
    match execute(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn execute(command: Command) -> Result<i32> {
    match command {
        Command::Synth(a) => cmd_synth(&a),
        Command::Train(a) => with_jobs(a.jobs, || cmd_train(&a)),
        Command::Loocv(a) => with_jobs(a.jobs, || cmd_loocv(&a)),
        Command::Sweep(a) => with_jobs(a.pipeline.jobs, || cmd_sweep(&a)),
        Command::Gradcheck(a) => cmd_gradcheck(&a),
    }
}

fn with_jobs<F: FnOnce() -> Result<i32> + Send>(jobs: usize, f: F) -> Result<i32> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {jobs} worker threads: {e}")))?;
    pool.install(f)
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    Ok(())
}

pub fn cmd_synth(a: &SynthArgs) -> Result<i32> {
    let cfg = SynthConfig {
        subjects: a.subjects,
        duration_s: a.duration,
        noise_rate: a.noise_rate,
        fall_count: a.falls,
        seed: a.seed,
        sample_rate_hz: a.sample_rate,
    };
    let data = generate_with_truth(&cfg)?;
    create_dir(&a.out)?;
    let mut buf = Vec::new();
    crate::data::write_csv(&data.recordings, &mut buf)?;
    fs::write(a.out.join("data.csv"), buf)?;
    let mut buf = Vec::new();
    label_map().write(&mut buf)?;
    fs::write(a.out.join("labels.csv"), buf)?;

    let rows: usize = data.recordings.iter().map(|r| r.len()).sum();
    let fall_rows: usize = data
        .recordings
        .iter()
        .flat_map(|r| &r.samples)
        .filter(|s| s.class.is_fall())
        .count();
    let spiked: usize = data.spiked_rows.iter().flatten().map(Vec::len).sum();
    println!(
        "subjects={} rows={rows} fall_rows={fall_rows} spiked_samples={spiked} out={}",
        cfg.subjects,
        a.out.display()
    );
    Ok(EXIT_OK)
}

fn normal_windows(recordings: &[crate::data::SensorRecording], cfg: &PipelineConfig) -> Result<Vec<Window>> {
    Ok(windows_for_all(recordings, &cfg.window)?
        .into_iter()
        .filter(|w| !w.label.is_fall())
        .collect())
}

pub fn cmd_train(a: &PipelineArgs) -> Result<i32> {
    let cfg = a.pipeline_config()?;
    let [method] = a.threshold.0[..] else {
        return Err(Error::config("train takes exactly one --threshold"));
    };
    let recordings = a.load()?;
    let normals = normal_windows(&recordings, &cfg)?;
    let split = proxy_split(&normals, cfg.selection.rho, cfg.view, &cfg.ae)?;
    println!(
        "windows={} nonfalls={} proxy_falls={}",
        normals.len(),
        split.nonfalls.len(),
        split.proxy_falls.len()
    );
    create_dir(&a.out)?;
    match method {
        Method::Threshold(kind) => {
            let omega = if kind.uses_omega() {
                let sel = tune_omega(&split, &cfg.selection, cfg.view, &cfg.ae, kind)?;
                println!("best_omega={}", sel.best_omega);
                Some(sel.best_omega)
            } else {
                None
            };
            let det = fit_final_thresholds(&split.nonfalls, omega, kind, cfg.view, &cfg.ae)?;
            for m in &det.members {
                println!("member={} dims={:?} threshold={}", m.channel, m.model.dims(), m.threshold.value);
            }
            let path = a.out.join("detector.json");
            persist::save_detector(&det, &path)?;
            println!("wrote {}", path.display());
        }
        Method::Ocnn => {
            let det = OcnnDetector::fit(&split.nonfalls, &cfg.ae, cfg.ocnn_ratio)?;
            let path = a.out.join("ocnn.json");
            fs::write(&path, serde_json::to_string_pretty(&det)?)?;
            println!("wrote {}", path.display());
        }
    }
    Ok(EXIT_OK)
}

fn print_rows(rows: &[ResultRow]) {
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    for r in rows {
        let omega = r.omega.map_or_else(String::new, |o| o.to_string());
        let _ = writeln!(
            out,
            "{:<6} {:<4} {:<10} rho={:<7} omega={:<7} fold={:<6} tpr={:.4} fpr={:.4} gmean={:.4}",
            r.method,
            r.arch,
            r.view,
            r.rho,
            omega,
            r.fold,
            r.tpr,
            r.fpr,
            r.gmean
        );
    }
}

pub fn cmd_loocv(a: &PipelineArgs) -> Result<i32> {
    let cfg = a.pipeline_config()?;
    let recordings = a.load()?;
    let reports = loocv_methods(&recordings, &cfg, &a.threshold.0, &NoProbe)?;
    for r in &reports {
        for s in &r.skipped {
            eprintln!("skipped fold {}: {}", s.subject, s.reason);
        }
    }
    let rows = report_rows(&reports);
    print_rows(&rows);
    create_dir(&a.out)?;
    let path = a.out.join("loocv.csv");
    export_results_csv(&rows, &path)?;
    println!("wrote {}", path.display());
    Ok(EXIT_OK)
}

pub fn cmd_sweep(a: &SweepArgs) -> Result<i32> {
    let p = &a.pipeline;
    let mut cfg = p.pipeline_config()?;
    if a.rho_grid.0.iter().any(|r| *r <= 0.0) {
        return Err(Error::config("rho grid values must be > 0"));
    }
    cfg.selection.rho_grid = a.rho_grid.0.clone();
    let recordings = p.load()?;
    let reports = rho_sweep(&recordings, &a.rho_grid.0, &cfg, &p.threshold.0, &NoProbe)?;
    let rows = report_rows(&reports);
    print_rows(&rows.iter().filter(|r| r.is_mean()).cloned().collect::<Vec<_>>());
    create_dir(&p.out)?;
    let csv = p.out.join("sweep.csv");
    let svg = p.out.join("sweep.svg");
    export_results_csv(&rows, &csv)?;
    export_sweep_svg(&rows, &svg)?;
    println!("wrote {} and {} ({} {})", csv.display(), svg.display(), view_name(cfg.view), cfg.ae.arch.name());
    Ok(EXIT_OK)
}

pub fn cmd_gradcheck(a: &GradcheckArgs) -> Result<i32> {
    if !(a.eps > 0.0 && a.eps.is_finite()) {
        return Err(Error::config("--eps must be > 0"));
    }
    if a.nets == 0 {
        return Err(Error::config("--nets must be >= 1"));
    }
    let suite = GradcheckSuite {
        nets: a.nets,
        eps: a.eps,
        seed: a.seed,
        ..GradcheckSuite::default()
    };
    let worst = random_gradient_checks(&suite, a.inject_fault)?;
    println!("nets={} eps={} max_relative_error={worst:e}", a.nets, a.eps);
    if worst < GRADCHECK_TOLERANCE {
        Ok(EXIT_OK)
    } else {
        eprintln!("gradient check failed: {worst:e} >= {GRADCHECK_TOLERANCE:e}");
        Ok(EXIT_NUMERIC)
    }
}
