//! Skywave ground-truth labeling.
//!
//! Daytime phase samples from the target day and its two neighbours form one
//! statistics pool. Every sample of the target day is then scored against
//! that pool as `S = |φ_t − μ_day| / σ_day` and labeled as skywave when
//! `S ≥ threshold` (4.5 by default). Labeling is offline: the pool uses data
//! from after the epoch being labeled.

use std::collections::BTreeMap;
use std::fmt;

use chrono::{DateTime, NaiveDate, Utc};
use serde::{Deserialize, Serialize};

use crate::phase::wrap_phase;
use crate::propagation::GeoPoint;
use crate::solar::{three_day_windows, DaytimeWindow, WindowPolicy};
use crate::{Error, Result};

/// Z-score at or above which an epoch is labeled as skywave.
pub const DEFAULT_THRESHOLD: f64 = 4.5;

/// Tone channel name, e.g. `CW1`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ChannelId(String);

impl ChannelId {
    pub fn new(name: impl Into<String>) -> Self {
        ChannelId(name.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ChannelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for ChannelId {
    fn from(s: &str) -> Self {
        ChannelId::new(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseSample {
    pub epoch_utc: DateTime<Utc>,
    pub phase_rad: f64,
    pub amplitude: Option<f64>,
}

impl PhaseSample {
    pub fn new(epoch_utc: DateTime<Utc>, phase_rad: f64) -> Self {
        PhaseSample { epoch_utc, phase_rad, amplitude: None }
    }

    pub fn with_amplitude(mut self, amplitude: f64) -> Self {
        self.amplitude = Some(amplitude);
        self
    }
}

/// Time-ordered phase samples of one channel.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseSeries {
    channel: ChannelId,
    samples: Vec<PhaseSample>,
}

impl PhaseSeries {
    /// Epochs must be strictly increasing and phases finite.
    pub fn new(channel: ChannelId, samples: Vec<PhaseSample>) -> Result<Self> {
        for (i, s) in samples.iter().enumerate() {
            if !s.phase_rad.is_finite() {
                return Err(Error::InvalidInput(format!(
                    "{channel}: non-finite phase at {}",
                    s.epoch_utc
                )));
            }
            if i > 0 && samples[i - 1].epoch_utc >= s.epoch_utc {
                return Err(Error::InvalidInput(format!(
                    "{channel}: epochs not strictly increasing at {}",
                    s.epoch_utc
                )));
            }
        }
        Ok(PhaseSeries { channel, samples })
    }

    pub fn channel(&self) -> &ChannelId {
        &self.channel
    }

    pub fn samples(&self) -> &[PhaseSample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn phases(&self) -> impl Iterator<Item = f64> + '_ {
        self.samples.iter().map(|s| s.phase_rad)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Detrend {
    #[default]
    None,
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreprocessOptions {
    pub unwrap: bool,
    pub detrend: Detrend,
}

impl Default for PreprocessOptions {
    fn default() -> Self {
        PreprocessOptions { unwrap: true, detrend: Detrend::None }
    }
}

/// Undoes 2π jumps so consecutive samples differ by at most π.
pub fn unwrap_phases(phases: &mut [f64]) {
    let mut prev_raw = match phases.first() {
        Some(&p) => p,
        None => return,
    };
    for i in 1..phases.len() {
        let raw = phases[i];
        phases[i] = phases[i - 1] + wrap_phase(raw - prev_raw);
        prev_raw = raw;
    }
}

/// Unwraps and/or removes a linear phase ramp.
///
/// The ramp is fitted by least squares over samples inside `fit_windows`
/// (all samples when `None`) and its slope is removed about the fitted
/// samples' mean time, so the pool mean is left in place.
pub fn preprocess_phase(
    series: &PhaseSeries,
    opts: &PreprocessOptions,
    fit_windows: Option<&[DaytimeWindow]>,
) -> PhaseSeries {
    let mut phases: Vec<f64> = series.phases().collect();
    if opts.unwrap {
        unwrap_phases(&mut phases);
    }
    if opts.detrend == Detrend::Linear && !phases.is_empty() {
        let t0 = series.samples[0].epoch_utc;
        let secs: Vec<f64> = series
            .samples
            .iter()
            .map(|s| (s.epoch_utc - t0).num_milliseconds() as f64 / 1000.0)
            .collect();
        let in_fit = |i: usize| match fit_windows {
            Some(ws) => ws.iter().any(|w| w.contains(series.samples[i].epoch_utc)),
            None => true,
        };
        let idx: Vec<usize> = (0..phases.len()).filter(|&i| in_fit(i)).collect();
        if idx.len() >= 2 {
            let n = idx.len() as f64;
            let t_mean = idx.iter().map(|&i| secs[i]).sum::<f64>() / n;
            let p_mean = idx.iter().map(|&i| phases[i]).sum::<f64>() / n;
            let (mut stt, mut stp) = (0.0, 0.0);
            for &i in &idx {
                let dt = secs[i] - t_mean;
                stt += dt * dt;
                stp += dt * (phases[i] - p_mean);
            }
            if stt > 0.0 {
                let slope = stp / stt;
                for (p, t) in phases.iter_mut().zip(&secs) {
                    *p -= slope * (t - t_mean);
                }
            }
        }
    }
    let samples = series
        .samples
        .iter()
        .zip(phases)
        .map(|(s, phase_rad)| PhaseSample { phase_rad, ..*s })
        .collect();
    PhaseSeries { channel: series.channel.clone(), samples }
}

fn check_windows(windows: &[DaytimeWindow]) -> Result<()> {
    for pair in windows.windows(2) {
        if pair[1].start_utc < pair[0].end_utc {
            return Err(Error::InvalidInput(format!(
                "daytime windows {} and {} are not ordered and disjoint",
                pair[0], pair[1]
            )));
        }
    }
    Ok(())
}

/// Phases of all samples inside any window (start inclusive, end exclusive).
pub fn daytime_pool(series: &PhaseSeries, windows: &[DaytimeWindow]) -> Result<Vec<f64>> {
    check_windows(windows)?;
    let pool: Vec<f64> = series
        .samples
        .iter()
        .filter(|s| windows.iter().any(|w| w.contains(s.epoch_utc)))
        .map(|s| s.phase_rad)
        .collect();
    if pool.is_empty() {
        return Err(Error::InsufficientData(format!(
            "{}: no samples inside the daytime windows",
            series.channel
        )));
    }
    Ok(pool)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DaytimeStats {
    pub mu_day: f64,
    pub sigma_day: f64,
    pub n: usize,
}

/// Neumaier-compensated sum.
fn compensated_sum(values: impl Iterator<Item = f64>) -> f64 {
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Mean and sample (n − 1) standard deviation, two-pass with compensated sums.
pub fn pool_stats(pool: &[f64]) -> Result<DaytimeStats> {
    if pool.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "daytime pool has {} sample(s), need at least 2",
            pool.len()
        )));
    }
    if pool.iter().all(|&x| x == pool[0]) {
        return Ok(DaytimeStats { mu_day: pool[0], sigma_day: 0.0, n: pool.len() });
    }
    let n = pool.len() as f64;
    let mu = compensated_sum(pool.iter().copied()) / n;
    // Residual mean folds the rounding of `mu` back into the deviations.
    let resid = compensated_sum(pool.iter().map(|x| x - mu)) / n;
    let ss = compensated_sum(pool.iter().map(|x| {
        let d = x - mu - resid;
        d * d
    }));
    Ok(DaytimeStats { mu_day: mu + resid, sigma_day: (ss / (n - 1.0)).sqrt(), n: pool.len() })
}

/// `|φ_t − μ| / σ`. With `σ = 0` the score is 0 at the mean and +∞ elsewhere.
pub fn z_score(phi_t: f64, stats: &DaytimeStats) -> f64 {
    let dev = (phi_t - stats.mu_day).abs();
    if stats.sigma_day == 0.0 {
        return if dev == 0.0 { 0.0 } else { f64::INFINITY };
    }
    dev / stats.sigma_day
}

pub fn label_epoch(phi_t: f64, stats: &DaytimeStats, threshold: f64) -> bool {
    z_score(phi_t, stats) >= threshold
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelRecord {
    pub epoch_utc: DateTime<Utc>,
    pub channel: ChannelId,
    /// Phase after preprocessing, i.e. the value that was scored.
    pub phase_rad: f64,
    pub z_score: f64,
    pub is_skywave: bool,
    pub stats: DaytimeStats,
}

/// Labels every sample of `series` that falls on the local civil `date`.
pub fn label_series(
    series: &PhaseSeries,
    p: GeoPoint,
    date: NaiveDate,
    policy: &WindowPolicy,
    threshold: f64,
    opts: &PreprocessOptions,
) -> Result<Vec<LabelRecord>> {
    if !(threshold.is_finite() && threshold > 0.0) {
        return Err(Error::InvalidInput(format!("threshold must be > 0, got {threshold}")));
    }
    let windows = three_day_windows(p, date, policy)?;
    let uncovered: Vec<String> = windows
        .iter()
        .filter(|w| !series.samples.iter().any(|s| w.contains(s.epoch_utc)))
        .map(|w| w.to_string())
        .collect();
    if !uncovered.is_empty() {
        return Err(Error::InsufficientData(format!(
            "{}: no samples in daytime window(s) {}",
            series.channel,
            uncovered.join(", ")
        )));
    }

    let processed = preprocess_phase(series, opts, Some(&windows));
    let stats = pool_stats(&daytime_pool(&processed, &windows)?)?;

    Ok(processed
        .samples
        .iter()
        .filter(|s| policy.local_date(s.epoch_utc) == date)
        .map(|s| {
            let z = z_score(s.phase_rad, &stats);
            LabelRecord {
                epoch_utc: s.epoch_utc,
                channel: processed.channel.clone(),
                phase_rad: s.phase_rad,
                z_score: z,
                is_skywave: z >= threshold,
                stats,
            }
        })
        .collect())
}

/// Per-epoch logical OR of the skywave verdicts of several channels.
pub fn combined_verdict<'a>(
    channels: impl IntoIterator<Item = &'a [LabelRecord]>,
) -> Vec<(DateTime<Utc>, bool)> {
    let mut by_epoch: BTreeMap<DateTime<Utc>, bool> = BTreeMap::new();
    for records in channels {
        for r in records {
            *by_epoch.entry(r.epoch_utc).or_default() |= r.is_skywave;
        }
    }
    by_epoch.into_iter().collect()
}
