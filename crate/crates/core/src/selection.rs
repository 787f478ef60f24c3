//! Parameter selection without real falls, and subject-wise evaluation.
//!
//! The pipeline for one held-out subject:
//!
//! 1. train a stage-A detector on the other subjects' normal windows and
//!    reject the windows whose error falls outside the ρ fence; those become
//!    *proxy falls*, the rest *non-falls*;
//! 2. for RRE/IRE pick Ω by stratified K-fold cross-validation on
//!    non-falls (negatives) versus proxy falls (positives);
//! 3. retrain on all non-falls and fit the final threshold;
//! 4. score the held-out subject's normal and fall windows.
//!
//! Real fall windows never reach steps 1-3; every stage entry point rejects them.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::OcnnDetector;
use crate::data::{slide_windows, Class, SensorRecording, View, Window, WindowConfig};
use crate::ensemble::{majority_vote, AeConfig, Detector, TrainedStage};
use crate::error::{Error, Result};
use crate::metrics::{confusion, gmean, ConfusionCounts, EvalMetrics};
use crate::report::{ResultRow, MEAN_FOLD};
use crate::threshold::{iqr_outlier_mask, ThresholdKind};

pub const DEFAULT_GRID: [f64; 10] = [0.001, 0.01, 0.1, 0.5, 1.0, 1.5, 1.7239, 2.0, 2.5, 3.0];
pub const DEFAULT_RHO: f64 = 1.5;
pub const DEFAULT_K_FOLDS: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionConfig {
    pub rho: f64,
    pub omega_grid: Vec<f64>,
    pub k_folds: usize,
    pub rho_grid: Vec<f64>,
    pub seed: u64,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self {
            rho: DEFAULT_RHO,
            omega_grid: DEFAULT_GRID.to_vec(),
            k_folds: DEFAULT_K_FOLDS,
            rho_grid: DEFAULT_GRID.to_vec(),
            seed: 0,
        }
    }
}

impl SelectionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0) {
            return Err(Error::config("rho must be > 0"));
        }
        if self.omega_grid.is_empty() || self.rho_grid.is_empty() {
            return Err(Error::config("omega and rho grids must be non-empty"));
        }
        if self.omega_grid.iter().any(|o| !(*o >= 0.0)) {
            return Err(Error::config("omega grid values must be >= 0"));
        }
        if self.rho_grid.iter().any(|r| !(*r > 0.0)) {
            return Err(Error::config("rho grid values must be > 0"));
        }
        if self.k_folds < 2 {
            return Err(Error::config("k_folds must be >= 2"));
        }
        Ok(())
    }
}

/// Detection method evaluated by the pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    Threshold(ThresholdKind),
    /// Nearest-neighbour baseline on monolithic bottleneck features.
    Ocnn,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Threshold(k) => k.name(),
            Method::Ocnn => "ocnn",
        }
    }

    fn omega_kind(self) -> Option<ThresholdKind> {
        match self {
            Method::Threshold(k) if k.uses_omega() => Some(k),
            _ => None,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("ocnn") {
            Ok(Method::Ocnn)
        } else {
            Ok(Method::Threshold(s.parse()?))
        }
    }
}

/// Short name used in reports: `monolithic`, `6ce` or `2ce`.
pub fn view_name(view: View) -> &'static str {
    match view {
        View::Monolithic => "monolithic",
        View::SixRaw => "6ce",
        View::TwoMagnitude => "2ce",
    }
}

pub fn parse_view(s: &str) -> Result<View> {
    match s.to_ascii_lowercase().as_str() {
        "monolithic" | "mono" => Ok(View::Monolithic),
        "6ce" => Ok(View::SixRaw),
        "2ce" => Ok(View::TwoMagnitude),
        other => Err(Error::config(format!("unknown view '{other}' (expected monolithic, 6ce or 2ce)"))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub window: WindowConfig,
    pub view: View,
    pub ae: AeConfig,
    pub selection: SelectionConfig,
    pub ocnn_ratio: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            window: WindowConfig::default(),
            view: View::SixRaw,
            ae: AeConfig::default(),
            selection: SelectionConfig::default(),
            ocnn_ratio: 1.0,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.selection.validate()?;
        self.ae.train.validate()?;
        if self.ae.bottleneck == 0 {
            return Err(Error::config("bottleneck width must be >= 1"));
        }
        if !(self.ocnn_ratio > 0.0) {
            return Err(Error::config("OCNN ratio threshold must be > 0"));
        }
        Ok(())
    }
}

/// Pipeline stages that must only ever see normal windows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stage {
    ProxySplit,
    TuneOmega,
    FitFinal,
}

/// Observer invoked with every window set a training stage receives.
pub trait StageProbe: Sync {
    fn observe(&self, stage: Stage, windows: &[Window]);
}

pub struct NoProbe;

impl StageProbe for NoProbe {
    fn observe(&self, _: Stage, _: &[Window]) {}
}

fn enter(stage: Stage, windows: &[Window], probe: &dyn StageProbe) -> Result<()> {
    probe.observe(stage, windows);
    if windows.iter().any(|w| w.label.is_fall()) {
        return Err(Error::selection(format!("{stage:?} received fall-labelled windows")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProxySplit {
    pub nonfalls: Vec<Window>,
    pub proxy_falls: Vec<Window>,
}

/// Flags windows whose stage-A error lies outside the ρ fence. For
/// ensembles each member flags on its own errors and the flags are combined
/// with the same tie-to-fall vote as detection.
pub fn proxy_flags(stage: &TrainedStage, rho: f64) -> Result<Vec<bool>> {
    let masks = stage
        .members
        .iter()
        .map(|m| iqr_outlier_mask(&m.errors, rho))
        .collect::<Result<Vec<_>>>()?;
    let n = masks[0].len();
    (0..n)
        .map(|i| {
            let votes: Vec<Class> = masks
                .iter()
                .map(|m| if m[i] { Class::Fall } else { Class::Normal })
                .collect();
            Ok(majority_vote(&votes)?.is_fall())
        })
        .collect()
}

fn split_by_flags(windows: &[Window], flags: &[bool]) -> ProxySplit {
    let (proxy, non): (Vec<_>, Vec<_>) = windows.iter().zip(flags).partition(|(_, f)| **f);
    ProxySplit {
        nonfalls: non.into_iter().map(|(w, _)| w.clone()).collect(),
        proxy_falls: proxy.into_iter().map(|(w, _)| w.clone()).collect(),
    }
}

pub fn proxy_split(normal_windows: &[Window], rho: f64, view: View, ae: &AeConfig) -> Result<ProxySplit> {
    proxy_split_probed(normal_windows, rho, view, ae, &NoProbe)
}

fn proxy_split_probed(
    normal_windows: &[Window],
    rho: f64,
    view: View,
    ae: &AeConfig,
    probe: &dyn StageProbe,
) -> Result<ProxySplit> {
    enter(Stage::ProxySplit, normal_windows, probe)?;
    if normal_windows.is_empty() {
        return Err(Error::selection("no normal windows to split"));
    }
    let stage = TrainedStage::fit(normal_windows, view, ae)?;
    Ok(split_by_flags(normal_windows, &proxy_flags(&stage, rho)?))
}

/// Seeded shuffle then round-robin: `folds[i]` is the fold of item `i`.
pub fn assign_folds(n: usize, k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut folds = vec![0; n];
    for (pos, &item) in order.iter().enumerate() {
        folds[item] = pos % k;
    }
    folds
}

/// Fold labels for non-falls and proxy falls, stratified per class.
pub fn stratified_folds(nonfalls: usize, proxies: usize, k: usize, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = assign_folds(nonfalls, k, &mut rng);
    let b = assign_folds(proxies, k, &mut rng);
    (a, b)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub kind: ThresholdKind,
    pub best_omega: f64,
    /// Mean cross-validated gmean per grid point, in grid order.
    pub cv_gmean: Vec<(f64, f64)>,
}

fn pick_best(grid: &[f64], scores: &[f64]) -> f64 {
    let mut best = 0;
    for i in 1..grid.len() {
        let better = scores[i] > scores[best] || (scores[i] == scores[best] && grid[i] < grid[best]);
        if better {
            best = i;
        }
    }
    grid[best]
}

pub fn tune_omega(
    split: &ProxySplit,
    cfg: &SelectionConfig,
    view: View,
    ae: &AeConfig,
    kind: ThresholdKind,
) -> Result<SelectionResult> {
    Ok(tune_omegas(split, cfg, view, ae, &[kind], &NoProbe)?.remove(0))
}

/// Cross-validates Ω for several threshold kinds over the same fold models.
pub fn tune_omegas(
    split: &ProxySplit,
    cfg: &SelectionConfig,
    view: View,
    ae: &AeConfig,
    kinds: &[ThresholdKind],
    probe: &dyn StageProbe,
) -> Result<Vec<SelectionResult>> {
    cfg.validate()?;
    enter(Stage::TuneOmega, &split.nonfalls, probe)?;
    enter(Stage::TuneOmega, &split.proxy_falls, probe)?;
    if let Some(k) = kinds.iter().find(|k| !k.uses_omega()) {
        return Err(Error::config(format!("{k} has no omega to tune")));
    }
    if split.proxy_falls.is_empty() {
        return Err(Error::selection("no proxy falls were rejected; use a smaller rho"));
    }
    let k = cfg.k_folds;
    if split.proxy_falls.len() < k || split.nonfalls.len() < k {
        return Err(Error::selection(format!(
            "{} non-falls and {} proxy falls cannot fill {k} folds; use a smaller rho or fewer folds",
            split.nonfalls.len(),
            split.proxy_falls.len()
        )));
    }
    let (non_folds, proxy_folds) = stratified_folds(split.nonfalls.len(), split.proxy_falls.len(), k, cfg.seed);

    // scores[fold][kind][omega]
    let scores = (0..k)
        .into_par_iter()
        .map(|fold| {
            let pick = |ws: &[Window], folds: &[usize], inside: bool| -> Vec<Window> {
                ws.iter()
                    .zip(folds)
                    .filter(|(_, f)| (**f == fold) == inside)
                    .map(|(w, _)| w.clone())
                    .collect()
            };
            let train = pick(&split.nonfalls, &non_folds, false);
            let mut test = pick(&split.nonfalls, &non_folds, true);
            let n_neg = test.len();
            test.extend(pick(&split.proxy_falls, &proxy_folds, true));
            let labels: Vec<Class> = (0..test.len())
                .map(|i| if i < n_neg { Class::Normal } else { Class::Fall })
                .collect();

            let stage = TrainedStage::fit(&train, view, ae)?;
            kinds
                .iter()
                .map(|&kind| {
                    cfg.omega_grid
                        .iter()
                        .map(|&omega| {
                            let det = stage.detector(kind, Some(omega))?;
                            Ok(gmean(&confusion(&det.predict(&test)?, &labels)?)?.gmean)
                        })
                        .collect::<Result<Vec<f64>>>()
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(kinds
        .iter()
        .enumerate()
        .map(|(ki, &kind)| {
            let mean: Vec<f64> = (0..cfg.omega_grid.len())
                .map(|oi| scores.iter().map(|f| f[ki][oi]).sum::<f64>() / k as f64)
                .collect();
            SelectionResult {
                kind,
                best_omega: pick_best(&cfg.omega_grid, &mean),
                cv_gmean: cfg.omega_grid.iter().copied().zip(mean).collect(),
            }
        })
        .collect())
}

/// Retrains on all non-falls and fits the final threshold.
pub fn fit_final_thresholds(
    nonfalls: &[Window],
    omega: Option<f64>,
    kind: ThresholdKind,
    view: View,
    ae: &AeConfig,
) -> Result<Detector> {
    enter(Stage::FitFinal, nonfalls, &NoProbe)?;
    TrainedStage::fit(nonfalls, view, ae)?.detector(kind, omega)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldOutcome {
    pub subject: String,
    pub omega: Option<f64>,
    pub counts: ConfusionCounts,
    pub metrics: EvalMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedFold {
    pub subject: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoocvReport {
    pub method: Method,
    pub arch: String,
    pub view: View,
    pub rho: f64,
    pub folds: Vec<FoldOutcome>,
    pub skipped: Vec<SkippedFold>,
    /// Field-wise mean over folds (gmean is the mean of per-fold gmeans).
    pub mean: EvalMetrics,
}

impl LoocvReport {
    pub fn rows(&self) -> Vec<ResultRow> {
        let row = |fold: &str, omega: Option<f64>, m: &EvalMetrics| ResultRow {
            method: self.method.name().to_string(),
            arch: self.arch.clone(),
            view: view_name(self.view).to_string(),
            rho: self.rho,
            omega,
            fold: fold.to_string(),
            tpr: m.tpr,
            fpr: m.fpr,
            gmean: m.gmean,
        };
        self.folds
            .iter()
            .map(|f| row(&f.subject, f.omega, &f.metrics))
            .chain(std::iter::once(row(MEAN_FOLD, None, &self.mean)))
            .collect()
    }
}

/// Everything about one held-out subject that does not depend on ρ.
struct HeldOut {
    subject: String,
    train: Vec<Window>,
    test: Vec<Window>,
    test_labels: Vec<Class>,
    stage_a: TrainedStage,
}

enum FoldPlan {
    Run(Box<HeldOut>),
    Skip(SkippedFold),
}

fn plan_folds(
    recordings: &[SensorRecording],
    cfg: &PipelineConfig,
    probe: &dyn StageProbe,
) -> Result<Vec<FoldPlan>> {
    cfg.validate()?;
    if recordings.len() < 2 {
        return Err(Error::config(format!(
            "leave-one-subject-out needs at least 2 subjects, got {}",
            recordings.len()
        )));
    }
    let windows = recordings
        .iter()
        .map(|r| slide_windows(r, &cfg.window))
        .collect::<Result<Vec<_>>>()?;

    recordings
        .par_iter()
        .enumerate()
        .map(|(s, rec)| {
            let test = &windows[s];
            let falls = test.iter().filter(|w| w.label.is_fall()).count();
            let reason = if falls == 0 {
                Some("held-out subject has no fall windows")
            } else if falls == test.len() {
                Some("held-out subject has no normal windows")
            } else {
                None
            };
            if let Some(reason) = reason {
                log::warn!("skipping fold {}: {reason}", rec.subject_id);
                return Ok(FoldPlan::Skip(SkippedFold {
                    subject: rec.subject_id.clone(),
                    reason: reason.to_string(),
                }));
            }
            let train: Vec<Window> = windows
                .iter()
                .enumerate()
                .filter(|(o, _)| *o != s)
                .flat_map(|(_, ws)| ws.iter().filter(|w| !w.label.is_fall()).cloned())
                .collect();
            enter(Stage::ProxySplit, &train, probe)?;
            if train.is_empty() {
                return Err(Error::selection("training subjects contribute no normal windows"));
            }
            let stage_a = TrainedStage::fit(&train, cfg.view, &cfg.ae)?;
            Ok(FoldPlan::Run(Box::new(HeldOut {
                subject: rec.subject_id.clone(),
                test_labels: test.iter().map(|w| w.label).collect(),
                test: test.clone(),
                train,
                stage_a,
            })))
        })
        .collect()
}

/// Runs every method for one held-out subject at one ρ.
fn run_fold(
    held: &HeldOut,
    rho: f64,
    methods: &[Method],
    cfg: &PipelineConfig,
    probe: &dyn StageProbe,
) -> Result<Vec<FoldOutcome>> {
    let split = split_by_flags(&held.train, &proxy_flags(&held.stage_a, rho)?);
    let sel = SelectionConfig { rho, ..cfg.selection.clone() };

    let omega_kinds: Vec<ThresholdKind> = methods.iter().filter_map(|m| m.omega_kind()).collect();
    let tuned = if omega_kinds.is_empty() {
        Vec::new()
    } else {
        tune_omegas(&split, &sel, cfg.view, &cfg.ae, &omega_kinds, probe)?
    };

    enter(Stage::FitFinal, &split.nonfalls, probe)?;
    let needs_final = methods.iter().any(|m| matches!(m, Method::Threshold(_)));
    let final_stage = if needs_final {
        Some(TrainedStage::fit(&split.nonfalls, cfg.view, &cfg.ae)?)
    } else {
        None
    };

    methods
        .par_iter()
        .map(|&method| {
            let (predictions, omega) = match method {
                Method::Threshold(kind) => {
                    let omega = tuned.iter().find(|t| t.kind == kind).map(|t| t.best_omega);
                    let det = final_stage.as_ref().expect("built above").detector(kind, omega)?;
                    (det.predict(&held.test)?, omega)
                }
                Method::Ocnn => {
                    let det = OcnnDetector::fit(&split.nonfalls, &cfg.ae, cfg.ocnn_ratio)?;
                    (det.predict(&held.test)?, None)
                }
            };
            let counts = confusion(&predictions, &held.test_labels)?;
            Ok(FoldOutcome {
                subject: held.subject.clone(),
                omega,
                counts,
                metrics: gmean(&counts)?,
            })
        })
        .collect()
}

fn assemble(
    plans: &[FoldPlan],
    per_fold: Vec<Vec<FoldOutcome>>,
    methods: &[Method],
    cfg: &PipelineConfig,
    rho: f64,
) -> Result<Vec<LoocvReport>> {
    let skipped: Vec<SkippedFold> = plans
        .iter()
        .filter_map(|p| match p {
            FoldPlan::Skip(s) => Some(s.clone()),
            FoldPlan::Run(_) => None,
        })
        .collect();
    if per_fold.is_empty() {
        return Err(Error::selection("every fold was skipped; no subject has both falls and normal windows"));
    }
    methods
        .iter()
        .enumerate()
        .map(|(mi, &method)| {
            let folds: Vec<FoldOutcome> = per_fold.iter().map(|f| f[mi].clone()).collect();
            let mean = EvalMetrics::mean(&folds.iter().map(|f| f.metrics).collect::<Vec<_>>()).expect("non-empty");
            Ok(LoocvReport {
                method,
                arch: cfg.ae.arch.name().to_string(),
                view: cfg.view,
                rho,
                folds,
                skipped: skipped.clone(),
                mean,
            })
        })
        .collect()
}

fn runnable(plans: &[FoldPlan]) -> Vec<&HeldOut> {
    plans
        .iter()
        .filter_map(|p| match p {
            FoldPlan::Run(h) => Some(h.as_ref()),
            FoldPlan::Skip(_) => None,
        })
        .collect()
}

/// Leave-one-subject-out evaluation of one method at `cfg.selection.rho`.
pub fn loocv(recordings: &[SensorRecording], cfg: &PipelineConfig, method: Method) -> Result<LoocvReport> {
    Ok(loocv_methods(recordings, cfg, &[method], &NoProbe)?.remove(0))
}

/// Leave-one-subject-out evaluation of several methods sharing the trained
/// stages they have in common. Reports come back in `methods` order.
pub fn loocv_methods(
    recordings: &[SensorRecording],
    cfg: &PipelineConfig,
    methods: &[Method],
    probe: &dyn StageProbe,
) -> Result<Vec<LoocvReport>> {
    if methods.is_empty() {
        return Err(Error::config("no methods to evaluate"));
    }
    let plans = plan_folds(recordings, cfg, probe)?;
    let rho = cfg.selection.rho;
    let per_fold = runnable(&plans)
        .par_iter()
        .map(|h| run_fold(h, rho, methods, cfg, probe))
        .collect::<Result<Vec<_>>>()?;
    assemble(&plans, per_fold, methods, cfg, rho)
}

/// Leave-one-subject-out for every ρ in `rho_grid`; the stage-A model of each
/// held-out subject is trained once and shared across ρ.
pub fn rho_sweep(
    recordings: &[SensorRecording],
    rho_grid: &[f64],
    cfg: &PipelineConfig,
    methods: &[Method],
    probe: &dyn StageProbe,
) -> Result<Vec<LoocvReport>> {
    if rho_grid.is_empty() {
        return Err(Error::config("rho grid is empty"));
    }
    if rho_grid.iter().any(|r| !(*r > 0.0)) {
        return Err(Error::config("rho grid values must be > 0"));
    }
    if methods.is_empty() {
        return Err(Error::config("no methods to evaluate"));
    }
    let plans = plan_folds(recordings, cfg, probe)?;
    let held = runnable(&plans);
    let mut reports = Vec::new();
    for &rho in rho_grid {
        let per_fold = held
            .par_iter()
            .map(|h| run_fold(h, rho, methods, cfg, probe))
            .collect::<Result<Vec<_>>>()?;
        reports.extend(assemble(&plans, per_fold, methods, cfg, rho)?);
    }
    Ok(reports)
}

pub fn report_rows(reports: &[LoocvReport]) -> Vec<ResultRow> {
    reports.iter().flat_map(LoocvReport::rows).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Arch, TrainConfig};

    fn window(k: usize, n: usize, spike: bool) -> Window {
        Window {
            subject_id: "s".into(),
            label: Class::Normal,
            view: View::SixRaw,
            channels: (0..6)
                .map(|c| {
                    (0..n)
                        .map(|i| {
                            let base = ((i + c) as f64 * 0.9).sin() + (k % 2) as f64 * 0.05;
                            if spike {
                                -base
                            } else {
                                base
                            }
                        })
                        .collect()
                })
                .collect(),
        }
    }

    fn small_ae() -> AeConfig {
        AeConfig {
            arch: Arch::Ae,
            bottleneck: 3,
            train: TrainConfig {
                epochs: 200,
                learning_rate: 0.5,
                batch_size: 8,
                ..TrainConfig::default()
            },
        }
    }

    fn mixed(n_normal: usize, n_spike: usize) -> Vec<Window> {
        let mut ws: Vec<Window> = (0..n_normal).map(|k| window(k, 12, false)).collect();
        // spread spiky windows through the sequence
        for j in 0..n_spike {
            ws.insert((j * 7) % ws.len(), window(1000 + j, 12, true));
        }
        ws
    }

    #[test]
    fn config_validation() {
        assert!(SelectionConfig::default().validate().is_ok());
        assert!(SelectionConfig { k_folds: 1, ..SelectionConfig::default() }.validate().is_err());
        assert!(SelectionConfig { omega_grid: vec![], ..SelectionConfig::default() }.validate().is_err());
        assert!(SelectionConfig { rho: 0.0, ..SelectionConfig::default() }.validate().is_err());
    }

    #[test]
    fn method_and_view_names() {
        assert_eq!("ocnn".parse::<Method>().unwrap(), Method::Ocnn);
        assert_eq!("rre".parse::<Method>().unwrap(), Method::Threshold(ThresholdKind::RRE));
        assert!("svm".parse::<Method>().is_err());
        for v in [View::Monolithic, View::SixRaw, View::TwoMagnitude] {
            assert_eq!(parse_view(view_name(v)).unwrap(), v);
        }
    }

    #[test]
    fn proxy_split_partitions_in_order() {
        let ws = mixed(30, 4);
        let split = proxy_split(&ws, 1.5, View::Monolithic, &small_ae()).unwrap();
        assert_eq!(split.nonfalls.len() + split.proxy_falls.len(), ws.len());
        assert!(split.proxy_falls.len() >= 4, "{}", split.proxy_falls.len());
        // order-stable: merging by original index recovers the input
        let mut ni = split.nonfalls.iter().peekable();
        let mut pi = split.proxy_falls.iter().peekable();
        for w in &ws {
            if ni.peek() == Some(&w) {
                ni.next();
            } else {
                assert_eq!(pi.next(), Some(w));
            }
        }
    }

    #[test]
    fn proxy_split_edge_cases() {
        let ws = mixed(20, 2);
        let split = proxy_split(&ws, 1e9, View::Monolithic, &small_ae()).unwrap();
        assert!(split.proxy_falls.is_empty());
        let same = vec![window(0, 12, false); 10];
        let split = proxy_split(&same, 0.001, View::SixRaw, &small_ae()).unwrap();
        assert!(split.proxy_falls.is_empty());
        assert!(proxy_split(&[], 1.0, View::SixRaw, &small_ae()).is_err());
        let mut with_fall = mixed(5, 0);
        with_fall[2].label = Class::Fall;
        assert!(matches!(proxy_split(&with_fall, 1.0, View::SixRaw, &small_ae()), Err(Error::Selection(_))));
    }

    #[test]
    fn folds_are_balanced_partitions() {
        let (a, b) = stratified_folds(10, 7, 3, 4);
        for folds in [&a, &b] {
            let mut sizes = [0usize; 3];
            folds.iter().for_each(|f| sizes[*f] += 1);
            assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        }
        assert_eq!(stratified_folds(10, 7, 3, 4), (a, b));
    }

    #[test]
    fn pick_best_prefers_smaller_omega_on_ties() {
        assert_eq!(pick_best(&[3.0, 0.5, 1.0], &[0.8, 0.8, 0.7]), 0.5);
        assert_eq!(pick_best(&[0.1, 0.5], &[0.2, 0.9]), 0.5);
    }

    fn separable_split() -> ProxySplit {
        ProxySplit {
            nonfalls: (0..24).map(|k| window(k, 12, false)).collect(),
            proxy_falls: (0..6).map(|k| window(k, 12, true)).collect(),
        }
    }

    #[test]
    fn tune_single_value_grid() {
        let cfg = SelectionConfig {
            omega_grid: vec![0.7],
            ..SelectionConfig::default()
        };
        let r = tune_omega(&separable_split(), &cfg, View::Monolithic, &small_ae(), ThresholdKind::RRE).unwrap();
        assert_eq!(r.best_omega, 0.7);
        assert_eq!(r.cv_gmean.len(), 1);
    }

    #[test]
    fn tune_separable_reaches_perfect_gmean() {
        let r = tune_omega(&separable_split(), &SelectionConfig::default(), View::Monolithic, &small_ae(), ThresholdKind::RRE).unwrap();
        assert!(r.cv_gmean.iter().any(|(_, g)| *g == 1.0), "{:?}", r.cv_gmean);
        assert!(DEFAULT_GRID.contains(&r.best_omega));
        let best = r.cv_gmean.iter().find(|(o, _)| *o == r.best_omega).unwrap().1;
        assert_eq!(best, 1.0);
    }

    #[test]
    fn tune_errors() {
        let mut split = separable_split();
        split.proxy_falls.truncate(2);
        let err = tune_omega(&split, &SelectionConfig::default(), View::Monolithic, &small_ae(), ThresholdKind::RRE);
        assert!(matches!(err, Err(Error::Selection(_))));
        split.proxy_falls.clear();
        let err = tune_omega(&split, &SelectionConfig::default(), View::Monolithic, &small_ae(), ThresholdKind::RRE);
        assert!(matches!(err, Err(Error::Selection(m)) if m.contains("smaller rho")));
        assert!(tune_omega(&separable_split(), &SelectionConfig::default(), View::Monolithic, &small_ae(), ThresholdKind::MaxRE).is_err());
    }

    #[test]
    fn final_thresholds() {
        let non: Vec<Window> = (0..20).map(|k| window(k, 12, false)).collect();
        let rre = fit_final_thresholds(&non, Some(1e9), ThresholdKind::RRE, View::SixRaw, &small_ae()).unwrap();
        let max = fit_final_thresholds(&non, None, ThresholdKind::MaxRE, View::SixRaw, &small_ae()).unwrap();
        for (a, b) in rre.members.iter().zip(&max.members) {
            assert_eq!(a.threshold.value, b.threshold.value);
        }
        let same = vec![window(0, 12, false); 8];
        let det = fit_final_thresholds(&same, Some(1.5), ThresholdKind::IRE, View::SixRaw, &small_ae()).unwrap();
        for (m, ch) in det.members.iter().zip(&same[0].channels) {
            let e = m.error(ch).unwrap();
            assert!(e <= m.threshold.value);
        }
    }
}
