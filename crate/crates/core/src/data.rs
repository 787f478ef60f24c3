//! Sensor recordings, windowing, channel views and input scaling.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Channel order used everywhere: accelerometer then gyroscope.
pub const RAW_CHANNELS: [&str; 6] = ["ax", "ay", "az", "wx", "wy", "wz"];
pub const MAGNITUDE_CHANNELS: [&str; 2] = ["acc_mag", "gyro_mag"];

pub const CSV_HEADER: [&str; 9] = ["subject_id", "label", "t", "ax", "ay", "az", "wx", "wy", "wz"];

/// Ground truth, with falls as the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Class {
    Normal,
    Fall,
}

impl Class {
    pub fn is_fall(self) -> bool {
        self == Class::Fall
    }
}

impl fmt::Display for Class {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Class::Normal => "normal",
            Class::Fall => "fall",
        })
    }
}

impl FromStr for Class {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "normal" => Ok(Class::Normal),
            "fall" => Ok(Class::Fall),
            other => Err(Error::config(format!("unknown class '{other}' (expected normal or fall)"))),
        }
    }
}

/// Activity label → class.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LabelMap(BTreeMap<String, Class>);

impl LabelMap {
    pub fn new<I, S>(pairs: I) -> Self
    where
        I: IntoIterator<Item = (S, Class)>,
        S: Into<String>,
    {
        Self(pairs.into_iter().map(|(k, v)| (k.into(), v)).collect())
    }

    pub fn get(&self, label: &str) -> Option<Class> {
        self.0.get(label).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, Class)> {
        self.0.iter().map(|(k, v)| (k.as_str(), *v))
    }

    /// Reads a `label,class` CSV.
    pub fn from_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["label", "class"] {
            return Err(Error::Ingest {
                row: 1,
                message: "label map header must be 'label,class'".into(),
            });
        }
        let mut map = BTreeMap::new();
        for rec in rdr.records() {
            let rec = rec?;
            let row = rec.position().map_or(0, |p| p.line() as usize);
            if rec.len() != 2 {
                return Err(Error::Ingest {
                    row,
                    message: format!("expected 2 fields, found {}", rec.len()),
                });
            }
            let class = rec[1].parse().map_err(|e: Error| Error::Ingest {
                row,
                message: e.to_string(),
            })?;
            map.insert(rec[0].to_string(), class);
        }
        Ok(Self(map))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_reader(File::open(path)?)
    }

    pub fn write<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["label", "class"])?;
        for (label, class) in self.iter() {
            w.write_record([label, &class.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub activity: String,
    pub class: Class,
    /// `ax, ay, az, wx, wy, wz`.
    pub values: [f64; 6],
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensorRecording {
    pub subject_id: String,
    pub sample_rate_hz: f64,
    pub samples: Vec<Sample>,
}

impl SensorRecording {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// How CSV rows are interpreted.
#[derive(Debug, Clone)]
pub struct CsvSchema {
    pub labels: LabelMap,
    pub sample_rate_hz: f64,
}

/// Groups rows by subject in order of first appearance.
pub fn read_csv<R: Read>(reader: R, schema: &CsvSchema) -> Result<Vec<SensorRecording>> {
    if !(schema.sample_rate_hz > 0.0) {
        return Err(Error::config("sample rate must be > 0"));
    }
    let mut rdr = csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
        return Err(Error::Ingest {
            row: 1,
            message: "file is empty".into(),
        });
    }
    for col in CSV_HEADER {
        if !headers.iter().any(|h| h == col) {
            return Err(Error::Ingest {
                row: 1,
                message: format!("missing column '{col}'"),
            });
        }
    }
    if headers.len() != CSV_HEADER.len() {
        return Err(Error::Ingest {
            row: 1,
            message: format!("expected {} columns, found {}", CSV_HEADER.len(), headers.len()),
        });
    }
    let idx: Vec<usize> = CSV_HEADER
        .iter()
        .map(|c| headers.iter().position(|h| h == *c).expect("checked above"))
        .collect();

    let mut recordings: Vec<SensorRecording> = Vec::new();
    let mut by_subject: BTreeMap<String, usize> = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let row = rec.position().map_or(0, |p| p.line() as usize);
        let fail = |message: String| Error::Ingest { row, message };
        if rec.len() != CSV_HEADER.len() {
            return Err(fail(format!(
                "expected {} fields (6 channel values), found {}",
                CSV_HEADER.len(),
                rec.len()
            )));
        }
        let subject = &rec[idx[0]];
        let activity = &rec[idx[1]];
        let class = schema
            .labels
            .get(activity)
            .ok_or_else(|| fail(format!("label '{activity}' is not in the label map")))?;
        let parse = |i: usize| -> Result<f64> {
            let field = &rec[idx[i]];
            field
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| fail(format!("column '{}' is not a finite number: '{field}'", CSV_HEADER[i])))
        };
        let t = parse(2)?;
        let mut values = [0.0; 6];
        for (k, v) in values.iter_mut().enumerate() {
            *v = parse(3 + k)?;
        }

        let slot = *by_subject.entry(subject.to_string()).or_insert_with(|| {
            recordings.push(SensorRecording {
                subject_id: subject.to_string(),
                sample_rate_hz: schema.sample_rate_hz,
                samples: Vec::new(),
            });
            recordings.len() - 1
        });
        let samples = &mut recordings[slot].samples;
        if samples.last().is_some_and(|s| t < s.t) {
            return Err(fail(format!("time goes backwards for subject '{subject}'")));
        }
        samples.push(Sample {
            t,
            activity: activity.to_string(),
            class,
            values,
        });
    }
    if recordings.is_empty() {
        return Err(Error::Ingest {
            row: 1,
            message: "file has no data rows".into(),
        });
    }
    Ok(recordings)
}

pub fn load_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<Vec<SensorRecording>> {
    read_csv(File::open(path)?, schema)
}

pub fn write_csv<W: Write>(recordings: &[SensorRecording], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(CSV_HEADER)?;
    for rec in recordings {
        for s in &rec.samples {
            let mut row = vec![rec.subject_id.clone(), s.activity.clone(), s.t.to_string()];
            row.extend(s.values.iter().map(f64::to_string));
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum View {
    Monolithic,
    SixRaw,
    TwoMagnitude,
}

impl View {
    pub fn channel_names(self) -> &'static [&'static str] {
        match self {
            View::Monolithic => &["all"],
            View::SixRaw => &RAW_CHANNELS,
            View::TwoMagnitude => &MAGNITUDE_CHANNELS,
        }
    }

    pub fn channel_count(self) -> usize {
        self.channel_names().len()
    }
}

/// How a window that mixes fall and normal samples is labelled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelRule {
    /// Fall iff more than half of the samples are falls.
    Majority,
    /// Fall iff any sample is a fall.
    Any,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowConfig {
    pub window_seconds: f64,
    pub overlap: f64,
    pub label_rule: LabelRule,
}

impl Default for WindowConfig {
    fn default() -> Self {
        Self {
            window_seconds: 1.28,
            overlap: 0.5,
            label_rule: LabelRule::Majority,
        }
    }
}

impl WindowConfig {
    pub fn window_len(&self, sample_rate_hz: f64) -> Result<usize> {
        if !(self.overlap >= 0.0 && self.overlap < 1.0) {
            return Err(Error::config("overlap must lie in [0, 1)"));
        }
        let len = (self.window_seconds * sample_rate_hz).round();
        if !(len >= 2.0) {
            return Err(Error::config(format!(
                "window of {}s at {sample_rate_hz}Hz is shorter than 2 samples",
                self.window_seconds
            )));
        }
        Ok(len as usize)
    }

    pub fn stride(&self, window_len: usize) -> usize {
        ((window_len as f64 * (1.0 - self.overlap)).round() as usize).max(1)
    }
}

/// A fixed-length slice of one subject's data under one channel view.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    pub subject_id: String,
    pub label: Class,
    pub view: View,
    /// One vector per channel of `view`, in `view.channel_names()` order.
    pub channels: Vec<Vec<f64>>,
}

impl Window {
    /// Samples per channel (`6n` for a monolithic window).
    pub fn len(&self) -> usize {
        self.channels.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn expect_view(&self, view: View) -> Result<()> {
        if self.view != view {
            return Err(Error::input(format!("expected a {view:?} window, got {:?}", self.view)));
        }
        Ok(())
    }

    /// Concatenates the six raw channels into one vector of length `6n`.
    pub fn monolithic(&self) -> Result<Window> {
        self.expect_view(View::SixRaw)?;
        Ok(Window {
            subject_id: self.subject_id.clone(),
            label: self.label,
            view: View::Monolithic,
            channels: vec![self.channels.concat()],
        })
    }

    /// Per-sample Euclidean norm of the accelerometer and gyroscope triples.
    pub fn magnitudes(&self) -> Result<Window> {
        self.expect_view(View::SixRaw)?;
        let norm = |c: &[Vec<f64>]| -> Vec<f64> {
            (0..self.len())
                .map(|i| (c[0][i] * c[0][i] + c[1][i] * c[1][i] + c[2][i] * c[2][i]).sqrt())
                .collect()
        };
        Ok(Window {
            subject_id: self.subject_id.clone(),
            label: self.label,
            view: View::TwoMagnitude,
            channels: vec![norm(&self.channels[0..3]), norm(&self.channels[3..6])],
        })
    }

    /// Converts a raw window into `view`; a window already in `view` is cloned.
    pub fn to_view(&self, view: View) -> Result<Window> {
        if self.view == view {
            return Ok(self.clone());
        }
        match view {
            View::Monolithic => self.monolithic(),
            View::TwoMagnitude => self.magnitudes(),
            View::SixRaw => Err(Error::input(format!("cannot recover raw channels from a {:?} window", self.view))),
        }
    }
}

/// Cuts a recording into overlapping raw windows; trailing partial windows are dropped.
pub fn slide_windows(rec: &SensorRecording, cfg: &WindowConfig) -> Result<Vec<Window>> {
    let len = cfg.window_len(rec.sample_rate_hz)?;
    let stride = cfg.stride(len);
    if rec.len() < len {
        return Ok(Vec::new());
    }
    let count = (rec.len() - len) / stride + 1;
    Ok((0..count)
        .map(|k| {
            let rows = &rec.samples[k * stride..k * stride + len];
            let falls = rows.iter().filter(|s| s.class.is_fall()).count();
            let label = match cfg.label_rule {
                LabelRule::Majority if 2 * falls > len => Class::Fall,
                LabelRule::Any if falls > 0 => Class::Fall,
                _ => Class::Normal,
            };
            let channels = (0..6).map(|c| rows.iter().map(|s| s.values[c]).collect()).collect();
            Window {
                subject_id: rec.subject_id.clone(),
                label,
                view: View::SixRaw,
                channels,
            }
        })
        .collect())
}

pub fn windows_for_all(recordings: &[SensorRecording], cfg: &WindowConfig) -> Result<Vec<Window>> {
    let mut out = Vec::new();
    for rec in recordings {
        out.extend(slide_windows(rec, cfg)?);
    }
    Ok(out)
}

/// Per-dimension min-max scaling to `[0, 1]`, fitted on training vectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl Scaler {
    pub fn fit<V: AsRef<[f64]>>(data: &[V]) -> Result<Self> {
        let first = data.first().ok_or_else(|| Error::input("cannot fit a scaler on no data"))?;
        let d = first.as_ref().len();
        let mut min = vec![f64::INFINITY; d];
        let mut max = vec![f64::NEG_INFINITY; d];
        for x in data {
            let x = x.as_ref();
            if x.len() != d {
                return Err(Error::input("scaler training vectors differ in length"));
            }
            for (i, v) in x.iter().enumerate() {
                min[i] = min[i].min(*v);
                max[i] = max[i].max(*v);
            }
        }
        Ok(Self { min, max })
    }

    pub fn dim(&self) -> usize {
        self.min.len()
    }

    /// Maps into `[0, 1]`, clamping values outside the training range.
    /// Dimensions that were constant in training map to 0.5.
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim() {
            return Err(Error::input(format!("scaler expects {} values, got {}", self.dim(), x.len())));
        }
        Ok(x.iter()
            .zip(self.min.iter().zip(&self.max))
            .map(|(v, (lo, hi))| {
                let span = hi - lo;
                if span > 0.0 {
                    ((v - lo) / span).clamp(0.0, 1.0)
                } else {
                    0.5
                }
            })
            .collect())
    }
}
