//! Synthetic six-channel recordings with spurious spikes and falls.
//!
//! Normal activity is a sum of low-frequency sinusoids plus Gaussian noise
//! per channel. Spurious data arrives in short bursts of heavy-tailed spikes
//! that replace a random subset of channels, so that on average a fraction
//! `noise_rate` of each channel's normal samples is spiked. Each fall occupies
//! a labelled span of `FALL_SPAN_S` seconds whose centre holds an impact
//! transient followed by a lying posture; the span's outer parts continue the
//! ongoing activity.

use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Pareto};

use crate::data::{Class, LabelMap, Sample, SensorRecording};
use crate::error::{Error, Result};

pub const FALL_LABEL: &str = "fall";
pub const FALL_SPAN_S: f64 = 2.5;
/// Central part of the span that departs from normal activity. The margins
/// are longer than half a default window, so windows labelled normal by
/// majority never reach into it.
const FALL_CORE_S: f64 = 1.2;
const IMPACT_S: f64 = 0.4;
const FALL_PEAK: (f64, f64) = (3.0, 4.5);
/// Consecutive rows replaced by one spurious event.
pub const BURST_LEN: usize = 32;
/// Channel counts a burst is drawn from; narrow bursts are twice as likely.
const BURST_WIDTHS: [usize; 8] = [1, 1, 2, 2, 3, 4, 5, 6];

const ACC_NOISE: f64 = 0.02;
const GYRO_NOISE: f64 = 0.04;
const SPIKE_SCALE: f64 = 2.5;
const SPIKE_TAIL: f64 = 1.5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthConfig {
    pub subjects: usize,
    pub duration_s: f64,
    pub noise_rate: f64,
    pub fall_count: usize,
    pub seed: u64,
    pub sample_rate_hz: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            subjects: 5,
            duration_s: 120.0,
            noise_rate: 0.01,
            fall_count: 20,
            seed: 42,
            sample_rate_hz: 100.0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.subjects == 0 {
            return Err(Error::config("subjects must be >= 1"));
        }
        if !(self.duration_s > 0.0 && self.duration_s.is_finite()) {
            return Err(Error::config("duration must be > 0"));
        }
        if !(self.sample_rate_hz > 0.0 && self.sample_rate_hz.is_finite()) {
            return Err(Error::config("sample rate must be > 0"));
        }
        if !(self.noise_rate >= 0.0 && self.noise_rate < 1.0) {
            return Err(Error::config("noise rate must lie in [0, 1)"));
        }
        if self.fall_count > 0 && self.duration_s / (self.fall_count as f64) < FALL_SPAN_S * 1.2 {
            return Err(Error::config(format!(
                "{} falls of {FALL_SPAN_S}s do not fit into {}s",
                self.fall_count, self.duration_s
            )));
        }
        Ok(())
    }

    fn samples(&self) -> usize {
        (self.duration_s * self.sample_rate_hz).round() as usize
    }
}

struct Activity {
    name: &'static str,
    /// Resting value per channel (gravity lives on the accelerometer).
    offset: [f64; 6],
    amplitude: [f64; 6],
    freq_hz: f64,
}

const ACTIVITIES: [Activity; 4] = [
    Activity {
        name: "standing",
        offset: [0.0, 0.0, 1.0, 0.0, 0.0, 0.0],
        amplitude: [0.02, 0.02, 0.02, 0.05, 0.05, 0.05],
        freq_hz: 0.3,
    },
    Activity {
        name: "sitting",
        offset: [0.25, 0.0, 0.95, 0.0, 0.0, 0.0],
        amplitude: [0.02, 0.01, 0.02, 0.03, 0.03, 0.03],
        freq_hz: 0.2,
    },
    Activity {
        name: "walking",
        offset: [0.0, 0.0, 1.0, 0.0, 0.0, 0.0],
        amplitude: [0.12, 0.08, 0.18, 0.25, 0.18, 0.2],
        freq_hz: 1.8,
    },
    Activity {
        name: "running",
        offset: [0.05, 0.0, 1.0, 0.0, 0.0, 0.0],
        amplitude: [0.22, 0.15, 0.3, 0.45, 0.3, 0.35],
        freq_hz: 2.6,
    },
];

/// Label map matching the generator's activity names.
pub fn label_map() -> LabelMap {
    LabelMap::new(
        ACTIVITIES
            .iter()
            .map(|a| (a.name, Class::Normal))
            .chain([(FALL_LABEL, Class::Fall)]),
    )
}

/// Generated recordings plus, per subject and channel, the rows replaced by
/// spikes.
#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub recordings: Vec<SensorRecording>,
    pub spiked_rows: Vec<[Vec<usize>; 6]>,
}

pub fn generate_synthetic(cfg: &SynthConfig) -> Result<Vec<SensorRecording>> {
    Ok(generate_with_truth(cfg)?.recordings)
}

pub fn generate_with_truth(cfg: &SynthConfig) -> Result<SyntheticData> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut recordings = Vec::with_capacity(cfg.subjects);
    let mut spiked_rows = Vec::with_capacity(cfg.subjects);
    for s in 0..cfg.subjects {
        let subject_seed: u64 = rng.random();
        let (rec, spikes) = subject(cfg, format!("s{:02}", s + 1), subject_seed);
        recordings.push(rec);
        spiked_rows.push(spikes);
    }
    Ok(SyntheticData {
        recordings,
        spiked_rows,
    })
}

fn subject(cfg: &SynthConfig, id: String, seed: u64) -> (SensorRecording, [Vec<usize>; 6]) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rate = cfg.sample_rate_hz;
    let n = cfg.samples();
    let gain: f64 = rng.random_range(0.85..1.15);
    let tempo: f64 = rng.random_range(0.9..1.1);
    let acc_noise = Normal::new(0.0, ACC_NOISE).expect("valid sigma");
    let gyro_noise = Normal::new(0.0, GYRO_NOISE).expect("valid sigma");
    let spike_tail = Pareto::new(SPIKE_SCALE, SPIKE_TAIL).expect("valid pareto");

    // Activity segments of 8-20 s.
    let mut samples: Vec<Sample> = Vec::with_capacity(n);
    let mut i = 0;
    while i < n {
        let act = &ACTIVITIES[rng.random_range(0..ACTIVITIES.len())];
        let seg = ((rng.random_range(8.0..20.0) * rate) as usize).min(n - i);
        let phase: [f64; 6] = std::array::from_fn(|_| rng.random_range(0.0..2.0 * PI));
        for k in 0..seg {
            let t = k as f64 / rate;
            let w = 2.0 * PI * act.freq_hz * tempo * t;
            let values = std::array::from_fn(|c| {
                let noise = if c < 3 { acc_noise.sample(&mut rng) } else { gyro_noise.sample(&mut rng) };
                act.offset[c]
                    + gain * act.amplitude[c] * ((w + phase[c]).sin() + 0.3 * (2.0 * w + phase[c]).sin())
                    + noise
            });
            samples.push(Sample {
                t: (i + k) as f64 / rate,
                activity: act.name.to_string(),
                class: Class::Normal,
                values,
            });
        }
        i += seg;
    }

    // Falls: one per equal slot, placed at a random offset inside it.
    let span = (FALL_SPAN_S * rate).round() as usize;
    let core = (FALL_CORE_S * rate).round() as usize;
    let impact = (IMPACT_S * rate).round() as usize;
    if cfg.fall_count > 0 {
        let slot = n / cfg.fall_count;
        for f in 0..cfg.fall_count {
            let start = f * slot + rng.random_range(0..=slot - span);
            let sign: [f64; 6] = std::array::from_fn(|_| if rng.random::<bool>() { 1.0 } else { -1.0 });
            let freq = rng.random_range(4.0..7.0);
            let peak = rng.random_range(FALL_PEAK.0..FALL_PEAK.1);
            // lying on a side: gravity leaves z for the x-y plane
            let tilt = rng.random_range(PI / 6.0..PI / 3.0) * if rng.random::<bool>() { 1.0 } else { -1.0 };
            let core_start = (span - core) / 2;
            for (k, s) in samples[start..start + span].iter_mut().enumerate() {
                s.activity = FALL_LABEL.to_string();
                s.class = Class::Fall;
                if !(core_start..core_start + core).contains(&k) {
                    continue;
                }
                let j = k - core_start;
                if j < impact {
                    let t = j as f64 / rate;
                    let env = peak * (-(t / IMPACT_S) * 2.0).exp();
                    for c in 0..6 {
                        let scale = if c < 3 { 1.0 } else { 1.5 };
                        s.values[c] += sign[c] * scale * env * (2.0 * PI * freq * t).sin().abs().max(0.3);
                    }
                } else {
                    s.values = [
                        tilt.cos() + acc_noise.sample(&mut rng),
                        tilt.sin() + acc_noise.sample(&mut rng),
                        0.05 + acc_noise.sample(&mut rng),
                        gyro_noise.sample(&mut rng),
                        gyro_noise.sample(&mut rng),
                        gyro_noise.sample(&mut rng),
                    ];
                }
            }
        }
    }

    // Spurious bursts on normal rows. Each burst replaces `BURST_LEN` rows on a
    // random non-empty subset of channels; bursts are added until a fraction
    // `noise_rate` of all normal channel samples is spiked.
    let mut spikes: [Vec<usize>; 6] = Default::default();
    let normal_rows = samples.iter().filter(|s| !s.class.is_fall()).count();
    let budget = (cfg.noise_rate * normal_rows as f64 * 6.0).round() as usize;
    let mut spent = 0;
    let mut taken = vec![false; n];
    let mut attempts = 0;
    while spent + BURST_LEN / 2 < budget && attempts < 10_000 && n >= BURST_LEN {
        attempts += 1;
        let at = rng.random_range(0..=n - BURST_LEN);
        let rows = at..at + BURST_LEN;
        if rows.clone().any(|r| taken[r] || samples[r].class.is_fall()) {
            continue;
        }
        let mut channels: Vec<usize> = (0..6).collect();
        channels.shuffle(&mut rng);
        let width = BURST_WIDTHS[rng.random_range(0..BURST_WIDTHS.len())];
        channels.truncate(width.min((budget - spent).div_ceil(BURST_LEN)));
        spent += channels.len() * BURST_LEN;
        let sign: [f64; 6] = std::array::from_fn(|_| if rng.random::<bool>() { 1.0 } else { -1.0 });
        for r in rows {
            for &c in &channels {
                samples[r].values[c] = sign[c] * spike_tail.sample(&mut rng);
                spikes[c].push(r);
            }
            taken[r] = true;
        }
    }
    spikes.iter_mut().for_each(|v| v.sort_unstable());

    (
        SensorRecording {
            subject_id: id,
            sample_rate_hz: rate,
            samples,
        },
        spikes,
    )
}
