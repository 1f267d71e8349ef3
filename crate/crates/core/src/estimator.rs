//! CW tone phase and amplitude extraction from IQ.
//!
//! Each estimate is a single-bin discrete Fourier projection: the window is
//! multiplied by the conjugate reference `e^{−j2π·offset·t}` (with `t = 0` at
//! the window start) and averaged. Epochs are independent of each other.

use chrono::{DateTime, Duration, Utc};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::labeler::{ChannelId, PhaseSample, PhaseSeries};
use crate::sim::{IqBuffer, CHANNEL_NAMES};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorConfig {
    pub tone_offsets_hz: [f64; 2],
    pub integration_seconds: f64,
    pub epoch_spacing_seconds: f64,
    /// Written to the phase log header.
    pub station_id: String,
    pub utc_offset_hours: i32,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig {
            tone_offsets_hz: [-450.0, 450.0],
            integration_seconds: 1.0,
            epoch_spacing_seconds: 60.0,
            station_id: "UNKNOWN".into(),
            utc_offset_hours: 0,
        }
    }
}

impl EstimatorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.integration_seconds.is_finite() && self.integration_seconds > 0.0) {
            return Err(Error::Config("integration_seconds must be > 0".into()));
        }
        if !(self.epoch_spacing_seconds.is_finite() && self.epoch_spacing_seconds > 0.0) {
            return Err(Error::Config("epoch_spacing_seconds must be > 0".into()));
        }
        let [a, b] = self.tone_offsets_hz;
        let sep = (a - b).abs();
        // Window must span at least two cycles of the tone separation.
        if !(sep.is_finite() && self.integration_seconds * sep >= 2.0) {
            return Err(Error::Config(format!(
                "integration_seconds {} too short to separate tones {a} and {b} Hz",
                self.integration_seconds
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToneEstimate {
    pub phase_rad: f64,
    pub amplitude: f64,
}

fn window_len(cfg: &EstimatorConfig, sample_rate_hz: f64) -> usize {
    (cfg.integration_seconds * sample_rate_hz).round() as usize
}

/// Correlates the first `integration_seconds` of `buf` against the tone at
/// `offset_hz`.
pub fn estimate_tone(buf: &IqBuffer, offset_hz: f64, cfg: &EstimatorConfig) -> Result<ToneEstimate> {
    let n = window_len(cfg, buf.sample_rate_hz());
    if n == 0 || buf.len() < n {
        return Err(Error::InsufficientData(format!(
            "integration window needs {n} samples, buffer has {}",
            buf.len()
        )));
    }
    let step = offset_hz / buf.sample_rate_hz();
    let acc: Complex64 = buf.samples()[..n]
        .iter()
        .enumerate()
        .map(|(i, z)| z * Complex64::from_polar(1.0, -std::f64::consts::TAU * (step * i as f64).rem_euclid(1.0)))
        .sum();
    let z = acc / n as f64;
    Ok(ToneEstimate { phase_rad: z.arg(), amplitude: z.norm() })
}

/// Per-epoch estimates of one tone; `None` marks an epoch without IQ coverage.
#[derive(Debug, Clone, PartialEq)]
pub struct ToneTrack {
    pub channel: ChannelId,
    pub offset_hz: f64,
    pub epochs: Vec<(DateTime<Utc>, Option<ToneEstimate>)>,
}

impl ToneTrack {
    pub fn missing_epochs(&self) -> Vec<DateTime<Utc>> {
        self.epochs.iter().filter(|(_, e)| e.is_none()).map(|(t, _)| *t).collect()
    }

    /// Drops missing epochs.
    pub fn to_phase_series(&self) -> Result<PhaseSeries> {
        let samples = self
            .epochs
            .iter()
            .filter_map(|(t, e)| e.map(|e| PhaseSample::new(*t, e.phase_rad).with_amplitude(e.amplitude)))
            .collect();
        PhaseSeries::new(self.channel.clone(), samples)
    }
}

fn locate(stream: &[IqBuffer], epoch: DateTime<Utc>, seconds: f64) -> Option<(usize, usize)> {
    stream.iter().enumerate().find_map(|(b, buf)| {
        if epoch < buf.start_epoch_utc() {
            return None;
        }
        let offset_s = (epoch - buf.start_epoch_utc()).num_nanoseconds()? as f64 * 1e-9;
        let start = (offset_s * buf.sample_rate_hz()).round() as usize;
        let n = (seconds * buf.sample_rate_hz()).round() as usize;
        (start + n <= buf.len()).then_some((b, start))
    })
}

/// Estimates both tones every `epoch_spacing_seconds` from the first
/// buffer's start to the last instant a full window still fits.
pub fn phase_series_from_iq(stream: &[IqBuffer], cfg: &EstimatorConfig) -> Result<Vec<ToneTrack>> {
    cfg.validate()?;
    let first = stream
        .first()
        .ok_or_else(|| Error::InsufficientData("empty IQ stream".into()))?;
    let t0 = first.start_epoch_utc();
    let end = stream.iter().map(IqBuffer::end_epoch_utc).max().unwrap_or(t0);
    let spacing = Duration::nanoseconds((cfg.epoch_spacing_seconds * 1e9).round() as i64);
    let window = Duration::nanoseconds((cfg.integration_seconds * 1e9).round() as i64);
    let mut epochs = Vec::new();
    let mut t = t0;
    while t + window <= end {
        epochs.push(t);
        t += spacing;
    }

    let estimates: Vec<[Option<ToneEstimate>; 2]> = epochs
        .par_iter()
        .map(|&t| {
            let Some((b, start)) = locate(stream, t, cfg.integration_seconds) else {
                return Ok([None, None]);
            };
            let buf = &stream[b];
            let win = buf.slice(start, window_len(cfg, buf.sample_rate_hz()))?;
            let mut out = [None, None];
            for (k, slot) in out.iter_mut().enumerate() {
                *slot = Some(estimate_tone(&win, cfg.tone_offsets_hz[k], cfg)?);
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;

    Ok((0..2)
        .map(|k| ToneTrack {
            channel: ChannelId::new(CHANNEL_NAMES[k]),
            offset_hz: cfg.tone_offsets_hz[k],
            epochs: epochs.iter().zip(&estimates).map(|(t, e)| (*t, e[k])).collect(),
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{add_tone, message_bits, msk_baseband};
    use approx::assert_abs_diff_eq;
    use chrono::TimeZone;

    fn t0() -> DateTime<Utc> {
        Utc.with_ymd_and_hms(2023, 2, 12, 3, 0, 0).unwrap()
    }

    fn tone(len: usize, offset: f64, amp: f64, phase: f64) -> IqBuffer {
        add_tone(&IqBuffer::silent(len, 4000.0, t0()).unwrap(), offset, amp, phase).unwrap()
    }

    #[test]
    fn clean_tone_reference_phase() {
        let cfg = EstimatorConfig::default();
        let est = estimate_tone(&tone(4000, 450.0, 1.0, 0.0), 450.0, &cfg).unwrap();
        assert_abs_diff_eq!(est.phase_rad, 0.0, epsilon = 1e-6);
        let est = estimate_tone(&tone(4000, -450.0, 0.5, 1.234), -450.0, &cfg).unwrap();
        assert_abs_diff_eq!(est.phase_rad, 1.234, epsilon = 1e-6);
        assert_abs_diff_eq!(est.amplitude, 0.5, epsilon = 0.5e-6);
    }

    #[test]
    fn adjacent_tone_does_not_leak() {
        let cfg = EstimatorConfig::default();
        let both = add_tone(&tone(4000, 450.0, 1.0, 0.4), -450.0, 3.0, -2.0).unwrap();
        let est = estimate_tone(&both, 450.0, &cfg).unwrap();
        assert_abs_diff_eq!(est.phase_rad, 0.4, epsilon = 1e-9);
        assert_abs_diff_eq!(est.amplitude, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn underrun_is_an_error() {
        let cfg = EstimatorConfig::default();
        assert!(matches!(
            estimate_tone(&tone(3999, 450.0, 1.0, 0.0), 450.0, &cfg),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn tone_over_msk_at_equal_power() {
        let cfg = EstimatorConfig::default();
        let msk = msk_baseband(&message_bits(11, 200), 200.0, 4000.0, 1.0, t0()).unwrap();
        for (offset, phase) in [(450.0, 0.9), (-450.0, -2.2)] {
            let sig = add_tone(&msk, offset, 1.0, phase).unwrap();
            let est = estimate_tone(&sig, offset, &cfg).unwrap();
            assert!((est.phase_rad - phase).abs() <= 5e-3, "error {}", est.phase_rad - phase);
        }
    }

    #[test]
    fn config_rejects_short_integration() {
        let cfg = EstimatorConfig { integration_seconds: 0.001, ..Default::default() };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn three_minute_stream_gives_three_epochs() {
        let cfg = EstimatorConfig::default();
        let buf = add_tone(&tone(180 * 4000, 450.0, 1.0, 0.3), -450.0, 1.0, -0.3).unwrap();
        let tracks = phase_series_from_iq(&[buf], &cfg).unwrap();
        assert_eq!(tracks.len(), 2);
        for (track, want) in tracks.iter().zip([-0.3, 0.3]) {
            assert_eq!(track.epochs.len(), 3);
            for (_, e) in &track.epochs {
                assert_abs_diff_eq!(e.unwrap().phase_rad, want, epsilon = 1e-9);
            }
            let s = track.to_phase_series().unwrap();
            assert_eq!(s.len(), 3);
        }
    }

    #[test]
    fn gap_marks_one_epoch_missing() {
        let cfg = EstimatorConfig::default();
        // Minutes 0-1 and 2-4 present, minute 1-2 missing.
        let a = tone(60 * 4000, 450.0, 1.0, 0.0);
        let b = add_tone(
            &IqBuffer::silent(180 * 4000, 4000.0, t0() + Duration::minutes(2)).unwrap(),
            450.0,
            1.0,
            0.0,
        )
        .unwrap();
        let tracks = phase_series_from_iq(&[a, b], &cfg).unwrap();
        assert_eq!(tracks[1].epochs.len(), 5);
        assert_eq!(tracks[1].missing_epochs(), vec![t0() + Duration::minutes(1)]);
        assert_eq!(tracks[1].to_phase_series().unwrap().len(), 4);
    }
}
