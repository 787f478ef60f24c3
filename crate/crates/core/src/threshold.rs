//! Decision thresholds on reconstruction error.
//!
//! * `MaxRE`: largest training error.
//! * `StdRE`: mean plus three sample standard deviations.
//! * `RRE`: largest training error left after interquartile-fence rejection.
//! * `IRE`: retrain on the fence inliers and take their largest error.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::Class;
use crate::error::{Error, Result};
use crate::nn::{AeModel, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ThresholdKind {
    MaxRE,
    StdRE,
    RRE,
    IRE,
}

impl ThresholdKind {
    pub const ALL: [ThresholdKind; 4] = [ThresholdKind::MaxRE, ThresholdKind::StdRE, ThresholdKind::RRE, ThresholdKind::IRE];

    /// Whether the kind carries a fence multiplier.
    pub fn uses_omega(self) -> bool {
        matches!(self, ThresholdKind::RRE | ThresholdKind::IRE)
    }

    pub fn name(self) -> &'static str {
        match self {
            ThresholdKind::MaxRE => "maxre",
            ThresholdKind::StdRE => "stdre",
            ThresholdKind::RRE => "rre",
            ThresholdKind::IRE => "ire",
        }
    }
}

impl fmt::Display for ThresholdKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ThresholdKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "maxre" => Ok(ThresholdKind::MaxRE),
            "stdre" => Ok(ThresholdKind::StdRE),
            "rre" => Ok(ThresholdKind::RRE),
            "ire" => Ok(ThresholdKind::IRE),
            other => Err(Error::config(format!("unknown threshold kind '{other}'"))),
        }
    }
}

/// A fitted decision rule: fall iff reconstruction error > `value`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdModel {
    pub kind: ThresholdKind,
    pub value: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega: Option<f64>,
}

impl ThresholdModel {
    pub fn new(kind: ThresholdKind, value: f64, omega: Option<f64>) -> Result<Self> {
        if !(value >= 0.0) {
            return Err(Error::input(format!("threshold must be >= 0, got {value}")));
        }
        if kind.uses_omega() != omega.is_some() {
            return Err(Error::input(format!("{kind} threshold and omega presence disagree")));
        }
        Ok(Self { kind, value, omega })
    }

    /// Strict comparison: an error equal to the threshold is normal.
    pub fn classify_error(&self, error: f64) -> Class {
        if error > self.value {
            Class::Fall
        } else {
            Class::Normal
        }
    }

    pub fn classify(&self, model: &AeModel, x: &[f64]) -> Result<Class> {
        Ok(self.classify_error(model.reconstruction_error(x)?))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IqrFence {
    pub q1: f64,
    pub q3: f64,
    pub iqr: f64,
    pub omega: f64,
}

impl IqrFence {
    pub fn fit(errors: &[f64], omega: f64) -> Result<Self> {
        check_omega(omega)?;
        let (q1, q3) = quartiles(errors)?;
        Ok(Self {
            q1,
            q3,
            iqr: q3 - q1,
            omega,
        })
    }

    pub fn upper(&self) -> f64 {
        self.q3 + self.omega * self.iqr
    }

    pub fn lower(&self) -> f64 {
        self.q1 - self.omega * self.iqr
    }

    pub fn is_outlier(&self, p: f64) -> bool {
        p > self.upper() || p < self.lower()
    }
}

fn check_nonempty(errors: &[f64]) -> Result<()> {
    if errors.is_empty() {
        return Err(Error::input("no reconstruction errors"));
    }
    Ok(())
}

fn check_omega(omega: f64) -> Result<()> {
    if !(omega >= 0.0) {
        return Err(Error::input(format!("fence multiplier must be >= 0, got {omega}")));
    }
    Ok(())
}

/// Linear interpolation between order statistics at 1-based rank `(m-1)p + 1`.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn quartiles(errors: &[f64]) -> Result<(f64, f64)> {
    check_nonempty(errors)?;
    let mut sorted = errors.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok((quantile_sorted(&sorted, 0.25), quantile_sorted(&sorted, 0.75)))
}

pub fn iqr_outlier_mask(errors: &[f64], omega: f64) -> Result<Vec<bool>> {
    let fence = IqrFence::fit(errors, omega)?;
    Ok(errors.iter().map(|&p| fence.is_outlier(p)).collect())
}

pub fn max_re(errors: &[f64]) -> Result<ThresholdModel> {
    check_nonempty(errors)?;
    let value = errors.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    ThresholdModel::new(ThresholdKind::MaxRE, value, None)
}

pub fn std_re(errors: &[f64]) -> Result<ThresholdModel> {
    check_nonempty(errors)?;
    let m = errors.len() as f64;
    let mean = errors.iter().sum::<f64>() / m;
    let sd = if errors.len() > 1 {
        (errors.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (m - 1.0)).sqrt()
    } else {
        0.0
    };
    ThresholdModel::new(ThresholdKind::StdRE, mean + 3.0 * sd, None)
}

/// Largest error not rejected by the fence; the upper fence itself when
/// every value is rejected.
///
/// The largest error under the upper fence is an inlier whenever it reaches
/// `q1`, and then it is the largest inlier. Below `q1` nothing survives (only
/// possible for two distinct values with ω < 0.5). Deciding that way, instead
/// of via the lower fence, keeps the result monotone in ω under rounding.
pub fn rre(errors: &[f64], omega: f64) -> Result<ThresholdModel> {
    let fence = IqrFence::fit(errors, omega)?;
    let upper = fence.upper();
    let under = errors
        .iter()
        .copied()
        .filter(|&p| p <= upper)
        .fold(None, |m: Option<f64>, p| Some(m.map_or(p, |m| m.max(p))));
    let value = match under {
        Some(c) if c >= fence.q1 => c,
        _ => upper,
    }
    .max(0.0);
    ThresholdModel::new(ThresholdKind::RRE, value, Some(omega))
}

/// Threshold from errors for any kind except `IRE`, which needs retraining.
pub fn fit_from_errors(kind: ThresholdKind, errors: &[f64], omega: Option<f64>) -> Result<ThresholdModel> {
    match kind {
        ThresholdKind::MaxRE => max_re(errors),
        ThresholdKind::StdRE => std_re(errors),
        ThresholdKind::RRE => rre(errors, omega.ok_or_else(|| Error::config("RRE needs omega"))?),
        ThresholdKind::IRE => Err(Error::config("IRE thresholds require retraining; use `ire`")),
    }
}

/// Result of inlier retraining: the threshold and the model it applies to.
#[derive(Debug, Clone)]
pub struct IreFit {
    pub threshold: ThresholdModel,
    pub model: AeModel,
    /// Positions (in the input) of the vectors kept as inliers.
    pub inliers: Vec<usize>,
}

/// Inlier threshold from an already trained stage-A model.
///
/// `fresh` must be the untrained model the retraining starts from, so the
/// second stage repeats the first one's initialisation and seed.
pub fn ire_from_model<V: AsRef<[f64]> + Sync>(
    stage_a: &AeModel,
    fresh: AeModel,
    vectors: &[V],
    omega: f64,
    cfg: &TrainConfig,
) -> Result<IreFit> {
    let errors = stage_a.reconstruction_errors(vectors)?;
    let mask = iqr_outlier_mask(&errors, omega)?;
    let inliers: Vec<usize> = mask.iter().enumerate().filter(|(_, o)| !**o).map(|(i, _)| i).collect();
    if inliers.is_empty() {
        return Err(Error::selection(format!("every training vector was rejected at omega={omega}")));
    }
    let kept: Vec<&[f64]> = inliers.iter().map(|&i| vectors[i].as_ref()).collect();
    let model = fresh.train(&kept, cfg)?;
    let errs = model.reconstruction_errors(&kept)?;
    let value = errs.iter().copied().fold(0.0, f64::max);
    Ok(IreFit {
        threshold: ThresholdModel::new(ThresholdKind::IRE, value, Some(omega))?,
        model,
        inliers,
    })
}

/// Trains stage A on everything, drops fence outliers, retrains from the
/// same initialisation on the inliers, and thresholds at their maximum error.
pub fn ire<V: AsRef<[f64]> + Sync>(
    vectors: &[V],
    omega: f64,
    init: &AeModel,
    cfg: &TrainConfig,
) -> Result<IreFit> {
    check_omega(omega)?;
    let stage_a = init.clone().train(vectors, cfg)?;
    ire_from_model(&stage_a, init.clone(), vectors, omega, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, Arch, Layer};

    /// Independent quartile oracle: sort, then interpolate by hand.
    fn oracle_quantile(values: &[f64], p: f64) -> f64 {
        let mut v = values.to_vec();
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let pos = 1.0 + (v.len() as f64 - 1.0) * p;
        let k = pos.floor() as usize;
        let frac = pos - k as f64;
        if k >= v.len() {
            v[v.len() - 1]
        } else {
            v[k - 1] + frac * (v[k] - v[k - 1])
        }
    }

    fn one_to(n: usize) -> Vec<f64> {
        (1..=n).map(|i| i as f64).collect()
    }

    #[test]
    fn quartile_examples() {
        assert_eq!(quartiles(&one_to(9)).unwrap(), (3.0, 7.0));
        assert_eq!(quartiles(&[5.0; 4]).unwrap(), (5.0, 5.0));
        assert_eq!(quartiles(&[2.0]).unwrap(), (2.0, 2.0));
        assert!(matches!(quartiles(&[]), Err(Error::Input(_))));
        let v = [9.0, 1.0, 4.0, 7.0, 3.0, 100.0, 2.0];
        let (q1, q3) = quartiles(&v).unwrap();
        assert_eq!(q1, oracle_quantile(&v, 0.25));
        assert_eq!(q3, oracle_quantile(&v, 0.75));
    }

    #[test]
    fn outlier_mask_examples() {
        assert!(iqr_outlier_mask(&[0.4; 7], 0.0).unwrap().iter().all(|m| !m));
        let mask = iqr_outlier_mask(&one_to(9), 0.0).unwrap();
        let flagged: Vec<f64> = one_to(9).into_iter().zip(&mask).filter(|(_, m)| **m).map(|(v, _)| v).collect();
        assert_eq!(flagged, vec![1.0, 2.0, 8.0, 9.0]);
        assert!(iqr_outlier_mask(&[0.1, 5.0, 1e3], 1e6).unwrap().iter().all(|m| !m));
        assert!(iqr_outlier_mask(&[], 1.0).is_err());
        assert!(iqr_outlier_mask(&[1.0], -1.0).is_err());
    }

    #[test]
    fn max_and_std() {
        assert_eq!(max_re(&[0.1, 0.9, 0.3]).unwrap().value, 0.9);
        assert_eq!(max_re(&[0.0]).unwrap().value, 0.0);
        assert!(max_re(&[]).is_err());
        assert_eq!(std_re(&[1.0; 4]).unwrap().value, 1.0);
        let v = std_re(&[0.0, 2.0]).unwrap().value;
        assert!((v - (1.0 + 3.0 * 2f64.sqrt())).abs() < 1e-12);
        assert!((v - 5.2426).abs() < 1e-4);
        assert_eq!(std_re(&[4.0]).unwrap().value, 4.0);
        assert!(std_re(&[]).is_err());
    }

    #[test]
    fn rre_examples() {
        let errs = [0.3, 7.0, 0.01, 2.5];
        assert_eq!(rre(&errs, 1e6).unwrap().value, max_re(&errs).unwrap().value);
        let mut v = one_to(9);
        v.push(100.0);
        // q1 = 3.25, q3 = 7.75, iqr = 4.5, upper fence = 14.5
        let fence = IqrFence::fit(&v, 1.5).unwrap();
        assert!((fence.q3 - 7.75).abs() < 1e-12 && (fence.iqr - 4.5).abs() < 1e-12);
        let t = rre(&v, 1.5).unwrap();
        assert_eq!(t.value, 9.0);
        assert_eq!(t.omega, Some(1.5));
        assert_eq!(rre(&[0.7; 5], 0.5).unwrap().value, 0.7);
    }

    #[test]
    fn rre_fallback_when_everything_rejected() {
        // q1 = 2.5 and q3 = 7.5 sit strictly between the two values, so omega = 0 rejects both.
        let v = [0.0, 10.0];
        let fence = IqrFence::fit(&v, 0.0).unwrap();
        assert!(v.iter().all(|&p| fence.is_outlier(p)));
        assert_eq!(rre(&v, 0.0).unwrap().value, fence.upper());
    }

    #[test]
    fn rre_two_values_stay_monotone_at_the_crossing() {
        // both values rejoin together at omega = 0.5; rounding used to let only the lower one back
        let v = [4.878686659148275, 4.678758826946854];
        let mut last = 0.0;
        for i in 0..=60 {
            let t = rre(&v, i as f64 * 0.05).unwrap().value;
            assert!(t >= last, "omega {}: {t} < {last}", i as f64 * 0.05);
            last = t;
        }
        assert_eq!(last, v[0]);
    }

    #[test]
    fn threshold_model_invariants() {
        assert!(ThresholdModel::new(ThresholdKind::RRE, 1.0, None).is_err());
        assert!(ThresholdModel::new(ThresholdKind::MaxRE, 1.0, Some(1.0)).is_err());
        assert!(ThresholdModel::new(ThresholdKind::MaxRE, -1.0, None).is_err());
        assert_eq!("IRE".parse::<ThresholdKind>().unwrap(), ThresholdKind::IRE);
        assert!("median".parse::<ThresholdKind>().is_err());
    }

    fn zero_model(d: usize) -> AeModel {
        AeModel::from_layers(vec![Layer {
            in_dim: d,
            out_dim: d,
            activation: Activation::Linear,
            weights: vec![0.0; d * d],
            biases: vec![0.0; d],
        }])
        .unwrap()
    }

    #[test]
    fn classify_is_strict() {
        let m = zero_model(2);
        // error of (0.5, 0) is exactly 0.25
        let t = ThresholdModel::new(ThresholdKind::MaxRE, 0.25, None).unwrap();
        assert_eq!(t.classify(&m, &[0.5, 0.0]).unwrap(), Class::Normal);
        let t2 = ThresholdModel::new(ThresholdKind::MaxRE, 0.25 - 1e-12, None).unwrap();
        assert_eq!(t2.classify(&m, &[0.5, 0.0]).unwrap(), Class::Fall);
        let t3 = ThresholdModel::new(ThresholdKind::MaxRE, 0.1, None).unwrap();
        assert_eq!(t3.classify(&m, &[0.0, 0.0]).unwrap(), Class::Normal);
        assert!(t3.classify(&m, &[0.0]).is_err());
    }

    fn spiky_vectors() -> Vec<Vec<f64>> {
        // 95 smooth ramps plus 5 spiky outliers
        (0..100)
            .map(|i| {
                (0..8)
                    .map(|j| {
                        if i % 20 == 7 && j % 2 == 0 {
                            0.98
                        } else {
                            0.3 + 0.02 * j as f64 + 0.001 * (i % 5) as f64
                        }
                    })
                    .collect()
            })
            .collect()
    }

    #[test]
    fn ire_huge_omega_is_maxre_of_retrained_model() {
        let data = spiky_vectors();
        let init = AeModel::for_arch(Arch::Ae, 8, 3, 5).unwrap();
        let cfg = TrainConfig::default().with_seed(5);
        let fit = ire(&data, 1e6, &init, &cfg).unwrap();
        assert_eq!(fit.inliers.len(), data.len());
        let retrained = init.clone().train(&data, &cfg).unwrap();
        let expected = max_re(&retrained.reconstruction_errors(&data).unwrap()).unwrap().value;
        assert_eq!(fit.threshold.value, expected);
        assert_eq!(fit.model, retrained);
    }

    #[test]
    fn ire_identical_vectors_keeps_all() {
        let data = vec![vec![0.2, 0.4, 0.6, 0.8]; 40];
        let init = AeModel::for_arch(Arch::Ae, 4, 2, 1).unwrap();
        let fit = ire(&data, 1.5, &init, &TrainConfig::default()).unwrap();
        assert_eq!(fit.inliers.len(), 40);
        let errs = fit.model.reconstruction_errors(&data).unwrap();
        assert!(errs.iter().all(|e| *e == errs[0]));
        assert_eq!(fit.threshold.value, errs[0]);
    }

    #[test]
    fn ire_tighter_than_maxre_with_spikes() {
        let data = spiky_vectors();
        let init = AeModel::for_arch(Arch::Ae, 8, 3, 2).unwrap();
        let cfg = TrainConfig::default().with_seed(2);
        let stage_a = init.clone().train(&data, &cfg).unwrap();
        let maxre = max_re(&stage_a.reconstruction_errors(&data).unwrap()).unwrap().value;
        let fit = ire(&data, 1.5, &init, &cfg).unwrap();
        assert!(fit.inliers.len() <= 95);
        assert!(fit.threshold.value < maxre, "{} !< {maxre}", fit.threshold.value);
    }
}
