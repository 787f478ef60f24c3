//! Versioned JSON files for models and detectors.
//!
//! Floats are written in the shortest form that parses back to the same
//! bits, so a save/load round trip is exact.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{Scaler, View};
use crate::ensemble::{Detector, Member};
use crate::error::{Error, Result};
use crate::nn::{AeModel, LayerSpec, TrainConfig};
use crate::threshold::ThresholdModel;

pub const FORMAT_VERSION: u32 = 1;
pub const VOTE_RULE: &str = "majority_ties_fall";

/// A single autoencoder with its metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format_version: u32,
    /// `ae`, `sae`, or `custom`.
    pub arch: String,
    pub dims: Vec<usize>,
    pub layer_specs: Vec<LayerSpec>,
    pub model: AeModel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_config: Option<TrainConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scaler: Option<Scaler>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<ThresholdModel>,
}

impl ModelFile {
    pub fn new(model: &AeModel, scaler: Option<&Scaler>, threshold: Option<&ThresholdModel>) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            arch: model.arch().map_or("custom", |a| a.name()).to_string(),
            dims: model.dims(),
            layer_specs: model.layers().iter().map(|l| l.spec()).collect(),
            model: model.clone(),
            train_config: model.trained_with().copied(),
            scaler: scaler.cloned(),
            threshold: threshold.copied(),
        }
    }

    fn check(self) -> Result<Self> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::config(format!("unsupported model format version {}", self.format_version)));
        }
        let model = AeModel::from_layers(self.model.layers().to_vec())?;
        if model.dims() != self.dims {
            return Err(Error::config("model file dims disagree with its layers"));
        }
        Ok(self)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemberBlock {
    pub channel: String,
    pub model: ModelFile,
}

/// Manifest for a monolithic detector or a channel ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorFile {
    pub format_version: u32,
    pub view: View,
    pub vote_rule: String,
    pub members: Vec<MemberBlock>,
}

impl DetectorFile {
    pub fn new(det: &Detector) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            view: det.view,
            vote_rule: VOTE_RULE.to_string(),
            members: det
                .members
                .iter()
                .map(|m| MemberBlock {
                    channel: m.channel.clone(),
                    model: ModelFile::new(&m.model, Some(&m.scaler), Some(&m.threshold)),
                })
                .collect(),
        }
    }

    pub fn into_detector(self) -> Result<Detector> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::config(format!("unsupported detector format version {}", self.format_version)));
        }
        if self.vote_rule != VOTE_RULE {
            return Err(Error::config(format!("unsupported vote rule '{}'", self.vote_rule)));
        }
        if self.members.len() != self.view.channel_count() {
            return Err(Error::config(format!(
                "{:?} detector needs {} members, file has {}",
                self.view,
                self.view.channel_count(),
                self.members.len()
            )));
        }
        let members = self
            .members
            .into_iter()
            .map(|b| {
                let f = b.model.check()?;
                Ok(Member {
                    channel: b.channel,
                    scaler: f.scaler.ok_or_else(|| Error::config("member without scaler"))?,
                    threshold: f.threshold.ok_or_else(|| Error::config("member without threshold"))?,
                    model: f.model,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Detector {
            view: self.view,
            members,
        })
    }
}

pub fn model_to_string(file: &ModelFile) -> Result<String> {
    Ok(serde_json::to_string_pretty(file)?)
}

pub fn model_from_str(s: &str) -> Result<ModelFile> {
    serde_json::from_str::<ModelFile>(s)?.check()
}

pub fn save_detector(det: &Detector, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(&DetectorFile::new(det))?)?;
    Ok(())
}

pub fn load_detector(path: impl AsRef<Path>) -> Result<Detector> {
    let file: DetectorFile = serde_json::from_str(&fs::read_to_string(path)?)?;
    file.into_detector()
}

pub fn detector_to_string(det: &Detector) -> Result<String> {
    Ok(serde_json::to_string_pretty(&DetectorFile::new(det))?)
}

pub fn detector_from_str(s: &str) -> Result<Detector> {
    serde_json::from_str::<DetectorFile>(s)?.into_detector()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Arch;
    use crate::threshold::ThresholdKind;

    #[test]
    fn model_round_trip_is_bit_exact() {
        let m = AeModel::for_arch(Arch::Sae, 10, 3, 77).unwrap();
        let text = model_to_string(&ModelFile::new(&m, None, None)).unwrap();
        let back = model_from_str(&text).unwrap();
        assert_eq!(back.model, m);
        assert_eq!(back.dims, vec![10, 5, 3, 5, 10]);
        assert_eq!(back.arch, "sae");
        for (a, b) in m.layers().iter().zip(back.model.layers()) {
            assert!(a.weights.iter().zip(&b.weights).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
    }

    #[test]
    fn rejects_wrong_version_and_bad_dims() {
        let m = AeModel::for_arch(Arch::Ae, 4, 2, 1).unwrap();
        let mut f = ModelFile::new(&m, None, None);
        f.format_version = 9;
        assert!(model_from_str(&serde_json::to_string(&f).unwrap()).is_err());
        let mut f = ModelFile::new(&m, None, None);
        f.dims = vec![4, 3, 4];
        assert!(model_from_str(&serde_json::to_string(&f).unwrap()).is_err());
    }

    #[test]
    fn detector_round_trip() {
        let det = Detector {
            view: View::TwoMagnitude,
            members: (0..2)
                .map(|i| Member {
                    channel: crate::data::MAGNITUDE_CHANNELS[i].into(),
                    scaler: Scaler {
                        min: vec![0.1; 6],
                        max: vec![0.7; 6],
                    },
                    model: AeModel::for_arch(Arch::Ae, 6, 2, i as u64).unwrap(),
                    threshold: ThresholdModel::new(ThresholdKind::RRE, 0.1 + i as f64 / 3.0, Some(1.7239)).unwrap(),
                })
                .collect(),
        };
        let text = detector_to_string(&det).unwrap();
        assert!(text.contains(VOTE_RULE));
        assert_eq!(detector_from_str(&text).unwrap(), det);
        let mut f: DetectorFile = serde_json::from_str(&text).unwrap();
        f.members.pop();
        assert!(f.into_detector().is_err());
    }
}
