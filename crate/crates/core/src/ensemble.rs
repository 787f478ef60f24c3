//! Monolithic detectors and channel-wise ensembles.
//!
//! A detector is a list of members, each with its own scaler, autoencoder
//! and threshold. A monolithic detector is the one-member case over the
//! concatenated window; `6ce` has one member per raw channel and `2ce` one per
//! magnitude channel. Member verdicts are combined by majority vote with ties
//! going to fall.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Class, Scaler, View, Window};
use crate::error::{Error, Result};
use crate::nn::{AeModel, Arch, TrainConfig, DEFAULT_BOTTLENECK};
use crate::threshold::{fit_from_errors, ire_from_model, ThresholdKind, ThresholdModel};

/// Autoencoder hyperparameters shared by every member.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AeConfig {
    pub arch: Arch,
    pub bottleneck: usize,
    pub train: TrainConfig,
}

impl Default for AeConfig {
    fn default() -> Self {
        Self {
            arch: Arch::Ae,
            bottleneck: DEFAULT_BOTTLENECK,
            train: TrainConfig::default(),
        }
    }
}

impl AeConfig {
    pub fn with_arch(self, arch: Arch) -> Self {
        Self { arch, ..self }
    }

    fn member_seed(&self, index: usize) -> u64 {
        self.train.seed.wrapping_add(index as u64)
    }

    fn member_train(&self, index: usize) -> TrainConfig {
        self.train.with_seed(self.member_seed(index))
    }

    fn init_member(&self, index: usize, input_dim: usize) -> Result<AeModel> {
        AeModel::for_arch(self.arch, input_dim, self.bottleneck, self.member_seed(index))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Member {
    pub channel: String,
    pub scaler: Scaler,
    pub model: AeModel,
    pub threshold: ThresholdModel,
}

impl Member {
    pub fn error(&self, x: &[f64]) -> Result<f64> {
        self.model.reconstruction_error(&self.scaler.apply(x)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemberVote {
    pub channel: String,
    pub error: f64,
    pub verdict: Class,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub verdict: Class,
    pub votes_fall: usize,
    pub votes_normal: usize,
    pub per_member: Vec<MemberVote>,
}

/// Fall iff at least as many members say fall as say normal.
pub fn majority_vote(verdicts: &[Class]) -> Result<Class> {
    if verdicts.is_empty() {
        return Err(Error::input("majority vote over zero members"));
    }
    let falls = verdicts.iter().filter(|v| v.is_fall()).count();
    Ok(if falls >= verdicts.len() - falls {
        Class::Fall
    } else {
        Class::Normal
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detector {
    pub view: View,
    pub members: Vec<Member>,
}

impl Detector {
    pub fn threshold_kind(&self) -> ThresholdKind {
        self.members[0].threshold.kind
    }

    /// Accepts raw windows (converted here) or windows already in this view.
    pub fn detect(&self, window: &Window) -> Result<Decision> {
        let w = window.to_view(self.view)?;
        if w.channels.len() != self.members.len() {
            return Err(Error::input(format!(
                "window has {} channels, detector has {} members",
                w.channels.len(),
                self.members.len()
            )));
        }
        let per_member = self
            .members
            .iter()
            .zip(&w.channels)
            .map(|(m, x)| {
                let error = m.error(x)?;
                Ok(MemberVote {
                    channel: m.channel.clone(),
                    error,
                    verdict: m.threshold.classify_error(error),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let verdicts: Vec<Class> = per_member.iter().map(|v| v.verdict).collect();
        let votes_fall = verdicts.iter().filter(|v| v.is_fall()).count();
        Ok(Decision {
            verdict: majority_vote(&verdicts)?,
            votes_fall,
            votes_normal: verdicts.len() - votes_fall,
            per_member,
        })
    }

    pub fn predict(&self, windows: &[Window]) -> Result<Vec<Class>> {
        windows.iter().map(|w| self.detect(w).map(|d| d.verdict)).collect()
    }
}

/// Splits normal training windows into one vector set per member of `view`.
pub fn member_inputs(windows: &[Window], view: View) -> Result<Vec<Vec<Vec<f64>>>> {
    if windows.is_empty() {
        return Err(Error::config("no training windows"));
    }
    if windows.iter().any(|w| w.label.is_fall()) {
        return Err(Error::config("training windows must all be normal (one-class training)"));
    }
    let n = windows[0].len();
    if windows.iter().any(|w| w.len() != n) {
        return Err(Error::config("training windows differ in length"));
    }
    let mut per_member = vec![Vec::with_capacity(windows.len()); view.channel_count()];
    for w in windows {
        let w = w.to_view(view)?;
        for (dst, ch) in per_member.iter_mut().zip(w.channels) {
            dst.push(ch);
        }
    }
    Ok(per_member)
}

/// One member trained on all of its training vectors, before thresholding.
#[derive(Debug, Clone)]
pub struct MemberFit {
    pub channel: String,
    pub index: usize,
    pub scaler: Scaler,
    pub model: AeModel,
    /// Scaled training vectors.
    pub inputs: Vec<Vec<f64>>,
    /// Reconstruction error of each training vector under `model`.
    pub errors: Vec<f64>,
}

/// Every member of a view trained on the same windows.
#[derive(Debug, Clone)]
pub struct TrainedStage {
    pub view: View,
    pub ae: AeConfig,
    pub members: Vec<MemberFit>,
}

impl TrainedStage {
    pub fn fit(windows: &[Window], view: View, ae: &AeConfig) -> Result<Self> {
        let inputs = member_inputs(windows, view)?;
        let members = inputs
            .into_par_iter()
            .enumerate()
            .map(|(i, raw)| {
                let scaler = Scaler::fit(&raw)?;
                let scaled = raw.iter().map(|x| scaler.apply(x)).collect::<Result<Vec<_>>>()?;
                let model = ae.init_member(i, scaler.dim())?.train(&scaled, &ae.member_train(i))?;
                let errors = model.reconstruction_errors(&scaled)?;
                Ok(MemberFit {
                    channel: view.channel_names()[i].to_string(),
                    index: i,
                    scaler,
                    model,
                    inputs: scaled,
                    errors,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            view,
            ae: *ae,
            members,
        })
    }

    /// Thresholds every member; `IRE` retrains each member on its inliers.
    pub fn detector(&self, kind: ThresholdKind, omega: Option<f64>) -> Result<Detector> {
        let omega = if kind.uses_omega() {
            Some(omega.ok_or_else(|| Error::config(format!("{kind} needs an omega value")))?)
        } else {
            None
        };
        let members = self
            .members
            .par_iter()
            .map(|m| {
                let (model, threshold) = match kind {
                    ThresholdKind::IRE => {
                        let fresh = self.ae.init_member(m.index, m.scaler.dim())?;
                        let fit = ire_from_model(
                            &m.model,
                            fresh,
                            &m.inputs,
                            omega.expect("checked"),
                            &self.ae.member_train(m.index),
                        )?;
                        (fit.model, fit.threshold)
                    }
                    _ => (m.model.clone(), fit_from_errors(kind, &m.errors, omega)?),
                };
                Ok(Member {
                    channel: m.channel.clone(),
                    scaler: m.scaler.clone(),
                    model,
                    threshold,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Detector {
            view: self.view,
            members,
        })
    }
}

/// Trains a detector for `view` on normal raw windows.
pub fn build_detector(
    train_windows: &[Window],
    view: View,
    ae: &AeConfig,
    kind: ThresholdKind,
    omega: Option<f64>,
) -> Result<Detector> {
    TrainedStage::fit(train_windows, view, ae)?.detector(kind, omega)
}

pub fn build_monolithic(
    train_windows: &[Window],
    ae: &AeConfig,
    kind: ThresholdKind,
    omega: Option<f64>,
) -> Result<Detector> {
    build_detector(train_windows, View::Monolithic, ae, kind, omega)
}

pub fn build_channel_ensemble(
    train_windows: &[Window],
    view: View,
    ae: &AeConfig,
    kind: ThresholdKind,
    omega: Option<f64>,
) -> Result<Detector> {
    if view == View::Monolithic {
        return Err(Error::config("channel ensembles need the six-raw or two-magnitude view"));
    }
    build_detector(train_windows, view, ae, kind, omega)
}
