//! One-class nearest neighbour on autoencoder bottleneck features.
//!
//! For a test feature `f` with nearest training point `z`, let `d1 = |f - z|`
//! and `d2 = |z - z'|` where `z'` is the nearest other training point to `z`.
//! The test point is a fall iff `d1 / d2 > ratio_threshold`; when `d2 = 0` it
//! is a fall iff `d1 > 0`.

use serde::{Deserialize, Serialize};

use crate::data::{Class, Scaler, View, Window};
use crate::ensemble::{member_inputs, AeConfig};
use crate::error::{Error, Result};
use crate::nn::AeModel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OcnnModel {
    train_features: Vec<Vec<f64>>,
    /// Distance from each training point to its nearest other training point.
    nearest_other: Vec<f64>,
    pub ratio_threshold: f64,
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    crate::nn::squared_distance(a, b).sqrt()
}

impl OcnnModel {
    pub fn fit(train_features: Vec<Vec<f64>>, ratio_threshold: f64) -> Result<Self> {
        if train_features.len() < 2 {
            return Err(Error::config("nearest-neighbour baseline needs at least 2 training points"));
        }
        if !(ratio_threshold > 0.0) {
            return Err(Error::config("ratio threshold must be > 0"));
        }
        let dim = train_features[0].len();
        if train_features.iter().any(|f| f.len() != dim) {
            return Err(Error::config("training features differ in dimension"));
        }
        let nearest_other = train_features
            .iter()
            .enumerate()
            .map(|(i, a)| {
                train_features
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| *j != i)
                    .map(|(_, b)| distance(a, b))
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        Ok(Self {
            train_features,
            nearest_other,
            ratio_threshold,
        })
    }

    pub fn dim(&self) -> usize {
        self.train_features[0].len()
    }

    pub fn classify(&self, feature: &[f64]) -> Result<Class> {
        if feature.len() != self.dim() {
            return Err(Error::input(format!("expected a {}-dim feature, got {}", self.dim(), feature.len())));
        }
        let (nearest, d1) = self
            .train_features
            .iter()
            .enumerate()
            .map(|(i, z)| (i, distance(feature, z)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .expect("at least two training points");
        let d2 = self.nearest_other[nearest];
        let fall = if d2 == 0.0 {
            d1 > 0.0
        } else {
            d1 / d2 > self.ratio_threshold
        };
        Ok(if fall { Class::Fall } else { Class::Normal })
    }
}

/// Deepest hidden-layer activations of `encoder` for `x`.
pub fn encode(encoder: &AeModel, x: &[f64]) -> Result<Vec<f64>> {
    encoder.encode(x)
}

/// Monolithic autoencoder features fed to [`OcnnModel`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OcnnDetector {
    pub scaler: Scaler,
    pub encoder: AeModel,
    pub ocnn: OcnnModel,
}

impl OcnnDetector {
    pub fn fit(train_windows: &[Window], ae: &AeConfig, ratio_threshold: f64) -> Result<Self> {
        let raw = member_inputs(train_windows, View::Monolithic)?.remove(0);
        let scaler = Scaler::fit(&raw)?;
        let scaled = raw.iter().map(|x| scaler.apply(x)).collect::<Result<Vec<_>>>()?;
        let encoder = AeModel::for_arch(ae.arch, scaler.dim(), ae.bottleneck, ae.train.seed)?.train(&scaled, &ae.train)?;
        let features = scaled.iter().map(|x| encoder.encode(x)).collect::<Result<Vec<_>>>()?;
        Ok(Self {
            scaler,
            encoder,
            ocnn: OcnnModel::fit(features, ratio_threshold)?,
        })
    }

    pub fn classify(&self, window: &Window) -> Result<Class> {
        let w = window.to_view(View::Monolithic)?;
        let feature = self.encoder.encode(&self.scaler.apply(&w.channels[0])?)?;
        self.ocnn.classify(&feature)
    }

    pub fn predict(&self, windows: &[Window]) -> Result<Vec<Class>> {
        windows.iter().map(|w| self.classify(w)).collect()
    }
}
