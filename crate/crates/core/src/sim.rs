//! MF R-Mode waveform and campaign synthesis.
//!
//! The broadcast is modeled at complex baseband around `carrier_hz`: an MSK
//! data signal carrying pseudorandom bits, plus two CW ranging tones placed on
//! MSK spectral nulls. The skywave is added by [`apply_two_path`], whose
//! strength follows a day/night profile ([`diurnal_alpha`]).
//!
//! Randomness comes from a ChaCha8 generator addressed by `(seed, stream,
//! index)`, so every epoch or chunk draws the same numbers no matter how the
//! work is split across threads.

use std::collections::BTreeMap;
use std::f64::consts::{PI, TAU};

use chrono::{DateTime, Duration, NaiveDate, NaiveTime, TimeZone, Utc};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::labeler::{ChannelId, PhaseSample, PhaseSeries};
use crate::phase::wrap_phase;
use crate::propagation::{
    combine_two_path, great_circle_distance, skywave_excess_delay, CompositeTone, Constants, CwTone,
    GeoPoint, PathGeometry, TwoPathChannel, SPEED_OF_LIGHT,
};
use crate::solar::{solar_events, utc_offset, SolarEvents};
use crate::{Error, Result};

/// Channel names for the two CW tones, in `cw_offsets_hz` order.
pub const CHANNEL_NAMES: [&str; 2] = ["CW1", "CW2"];

const STREAM_PHASE_NOISE: u64 = 1;
const STREAM_BITS: u64 = 3;
const STREAM_IQ_NOISE: u64 = 4;

/// Generator positioned at a fixed slot of a fixed stream.
pub(crate) fn slot_rng(seed: u64, stream: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng.set_word_pos(u128::from(index) << 32);
    rng
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub carrier_hz: f64,
    pub cw_offsets_hz: [f64; 2],
    pub cw_amplitudes: [f64; 2],
    pub msk_bitrate_bps: f64,
    pub msk_amplitude: f64,
    /// Complex baseband sample rate.
    pub sample_rate_hz: f64,
    pub tx: GeoPoint,
    pub rx: GeoPoint,
    pub iono_height_m: f64,
    /// Amplitude of the sinusoidal drift of the reflection height.
    pub iono_height_swing_m: f64,
    pub iono_height_period_minutes: f64,
    pub alpha_night: f64,
    pub transition_minutes: f64,
    /// Per-component standard deviation of complex IQ noise. In campaign mode
    /// the phase noise is the corresponding post-integration value,
    /// `noise_sigma / (A·η·√(fs·T))`.
    pub noise_sigma: f64,
    pub integration_seconds: f64,
    pub epoch_spacing_seconds: f64,
    pub utc_offset_hours: i32,
    pub station_id: String,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            carrier_hz: 318_000.0,
            cw_offsets_hz: [-450.0, 450.0],
            cw_amplitudes: [1.0, 1.0],
            msk_bitrate_bps: 200.0,
            msk_amplitude: 1.0,
            sample_rate_hz: 4000.0,
            tx: GeoPoint::new(36.99, 127.93).expect("valid"),
            rx: GeoPoint::new(37.00, 126.35).expect("valid"),
            iono_height_m: 90_000.0,
            iono_height_swing_m: 2_000.0,
            iono_height_period_minutes: 90.0,
            alpha_night: 0.3,
            transition_minutes: 60.0,
            noise_sigma: 0.5,
            integration_seconds: 1.0,
            epoch_spacing_seconds: 60.0,
            utc_offset_hours: 9,
            station_id: "SYNTHETIC".into(),
            seed: 1,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("carrier_hz", self.carrier_hz),
            ("msk_bitrate_bps", self.msk_bitrate_bps),
            ("sample_rate_hz", self.sample_rate_hz),
            ("transition_minutes", self.transition_minutes),
            ("integration_seconds", self.integration_seconds),
            ("epoch_spacing_seconds", self.epoch_spacing_seconds),
            ("iono_height_period_minutes", self.iono_height_period_minutes),
            ("cw_amplitudes[0]", self.cw_amplitudes[0]),
            ("cw_amplitudes[1]", self.cw_amplitudes[1]),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be finite and > 0, got {v}")));
            }
        }
        let non_negative = [
            ("msk_amplitude", self.msk_amplitude),
            ("noise_sigma", self.noise_sigma),
            ("iono_height_m", self.iono_height_m),
            ("iono_height_swing_m", self.iono_height_swing_m),
        ];
        for (name, v) in non_negative {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        if self.iono_height_swing_m > self.iono_height_m {
            return Err(Error::Config("iono_height_swing_m exceeds iono_height_m".into()));
        }
        if !(0.0..=1.0).contains(&self.alpha_night) {
            return Err(Error::Config(format!("alpha_night must lie in [0, 1], got {}", self.alpha_night)));
        }
        let [a, b] = self.cw_offsets_hz;
        if !(a.is_finite() && b.is_finite()) || a == b {
            return Err(Error::Config(format!("cw offsets must be finite and distinct, got {a} and {b}")));
        }
        let main_lobe = 1.5 * self.msk_bitrate_bps;
        let needed = 2.0 * (a.abs().max(b.abs()) + main_lobe);
        if self.sample_rate_hz <= needed {
            return Err(Error::Config(format!(
                "sample_rate_hz {} must exceed {needed} Hz",
                self.sample_rate_hz
            )));
        }
        samples_per_bit(self.msk_bitrate_bps, self.sample_rate_hz)?;
        Ok(())
    }

    /// Non-fatal findings, e.g. tones off the MSK null grid.
    pub fn warnings(&self) -> Vec<String> {
        self.cw_offsets_hz
            .iter()
            .filter(|&&off| !cw_null_check(self.msk_bitrate_bps, off))
            .map(|off| {
                format!(
                    "cw offset {off} Hz is not on an MSK spectral null for {} bps",
                    self.msk_bitrate_bps
                )
            })
            .collect()
    }

    pub fn path_distance_m(&self) -> f64 {
        great_circle_distance(self.tx, self.rx)
    }

    /// Reflection height at `t`; the drift is anchored to the Unix epoch so
    /// the same instant always sees the same ionosphere.
    pub fn iono_height_at(&self, t: DateTime<Utc>) -> f64 {
        if self.iono_height_swing_m == 0.0 {
            return self.iono_height_m;
        }
        let secs = t.timestamp() as f64 + f64::from(t.timestamp_subsec_nanos()) * 1e-9;
        let period = self.iono_height_period_minutes * 60.0;
        let cycles = (secs / period).rem_euclid(1.0);
        self.iono_height_m + self.iono_height_swing_m * (TAU * cycles).sin()
    }

    pub fn tone_freq_hz(&self, k: usize) -> f64 {
        self.carrier_hz + self.cw_offsets_hz[k]
    }

    /// Post-integration phase noise standard deviation for tone `k` at
    /// composite amplitude scaling `eta`.
    pub fn phase_noise_sigma(&self, k: usize, eta: f64) -> f64 {
        let n = self.sample_rate_hz * self.integration_seconds;
        self.noise_sigma / (self.cw_amplitudes[k] * eta * n.sqrt())
    }
}

fn samples_per_bit(bitrate: f64, sample_rate: f64) -> Result<usize> {
    let sps = sample_rate / bitrate;
    let rounded = sps.round();
    if !(bitrate > 0.0) || rounded < 1.0 || (sps - rounded).abs() > 1e-9 * sps {
        return Err(Error::Config(format!(
            "sample rate {sample_rate} Hz is not an integer multiple of bit rate {bitrate} bps"
        )));
    }
    Ok(rounded as usize)
}

/// Complex baseband samples with a sample rate and UTC start epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct IqBuffer {
    samples: Vec<Complex64>,
    sample_rate_hz: f64,
    start_epoch_utc: DateTime<Utc>,
}

impl IqBuffer {
    pub fn new(samples: Vec<Complex64>, sample_rate_hz: f64, start_epoch_utc: DateTime<Utc>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidInput("IQ buffer must not be empty".into()));
        }
        if !(sample_rate_hz.is_finite() && sample_rate_hz > 0.0) {
            return Err(Error::InvalidInput(format!("sample rate must be > 0, got {sample_rate_hz}")));
        }
        if let Some(i) = samples.iter().position(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(Error::InvalidInput(format!("non-finite IQ sample at index {i}")));
        }
        Ok(IqBuffer { samples, sample_rate_hz, start_epoch_utc })
    }

    /// All-zero buffer.
    pub fn silent(len: usize, sample_rate_hz: f64, start_epoch_utc: DateTime<Utc>) -> Result<Self> {
        Self::new(vec![Complex64::new(0.0, 0.0); len], sample_rate_hz, start_epoch_utc)
    }

    pub fn samples(&self) -> &[Complex64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<Complex64> {
        self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn start_epoch_utc(&self) -> DateTime<Utc> {
        self.start_epoch_utc
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz
    }

    pub fn epoch_of(&self, index: usize) -> DateTime<Utc> {
        self.start_epoch_utc + Duration::nanoseconds((index as f64 / self.sample_rate_hz * 1e9).round() as i64)
    }

    pub fn end_epoch_utc(&self) -> DateTime<Utc> {
        self.epoch_of(self.samples.len())
    }

    /// Sub-buffer `[start, start + len)`, re-stamped with its own start epoch.
    pub fn slice(&self, start: usize, len: usize) -> Result<IqBuffer> {
        if len == 0 || start + len > self.samples.len() {
            return Err(Error::InsufficientData(format!(
                "slice [{start}, {}) outside buffer of {} samples",
                start + len,
                self.samples.len()
            )));
        }
        Ok(IqBuffer {
            samples: self.samples[start..start + len].to_vec(),
            sample_rate_hz: self.sample_rate_hz,
            start_epoch_utc: self.epoch_of(start),
        })
    }

    pub fn mean_power(&self) -> f64 {
        self.samples.iter().map(|z| z.norm_sqr()).sum::<f64>() / self.samples.len() as f64
    }
}

/// `e^{j·2π·cycles}` with the integer part of `cycles` dropped first.
fn unit_phasor(cycles: f64) -> Complex64 {
    Complex64::from_polar(1.0, TAU * cycles.rem_euclid(1.0))
}

/// Continuous-phase MSK: each bit holds the frequency at `±bitrate/4` and
/// advances the phase by exactly `±π/2`. `true` maps to the positive tone.
pub fn msk_baseband(
    bits: &[bool],
    bitrate: f64,
    sample_rate: f64,
    amplitude: f64,
    start_epoch_utc: DateTime<Utc>,
) -> Result<IqBuffer> {
    let sps = samples_per_bit(bitrate, sample_rate)?;
    let mut samples = Vec::with_capacity(bits.len() * sps);
    // Phase at each bit boundary is an exact multiple of π/2.
    let mut quarter_turns: i64 = 0;
    for &bit in bits {
        let dir = if bit { 1.0 } else { -1.0 };
        let base = (quarter_turns.rem_euclid(4)) as f64 * PI / 2.0;
        for j in 0..sps {
            let phase = base + dir * (PI / 2.0) * (j as f64 / sps as f64);
            samples.push(Complex64::from_polar(amplitude, phase));
        }
        quarter_turns += if bit { 1 } else { -1 };
    }
    IqBuffer::new(samples, sample_rate, start_epoch_utc)
}

/// True iff `|offset|` sits on an MSK power-spectrum null `(0.75 + 0.5k)·bitrate`.
pub fn cw_null_check(bitrate: f64, offset: f64) -> bool {
    if !(bitrate > 0.0) || !offset.is_finite() {
        return false;
    }
    let u = offset.abs() / bitrate;
    let k = ((u - 0.75) / 0.5).round().max(0.0);
    let null = 0.75 + 0.5 * k;
    (u - null).abs() <= 1e-6 * null
}

/// Adds `amplitude·e^{j(2π·offset·t + phase)}` with `t` measured from the
/// buffer start.
pub fn add_tone(buf: &IqBuffer, offset_hz: f64, amplitude: f64, phase_rad: f64) -> Result<IqBuffer> {
    let nyquist = buf.sample_rate_hz / 2.0;
    if !(offset_hz.is_finite() && offset_hz.abs() < nyquist) {
        return Err(Error::Config(format!("tone offset {offset_hz} Hz outside the ±{nyquist} Hz band")));
    }
    let mut out = buf.clone();
    let step = offset_hz / buf.sample_rate_hz;
    let start = Complex64::from_polar(amplitude, phase_rad);
    for (n, z) in out.samples.iter_mut().enumerate() {
        *z += start * unit_phasor(step * n as f64);
    }
    Ok(out)
}

pub fn add_cw_tones(
    buf: &IqBuffer,
    offsets: [f64; 2],
    amplitudes: [f64; 2],
    phases: [f64; 2],
) -> Result<IqBuffer> {
    let once = add_tone(buf, offsets[0], amplitudes[0], phases[0])?;
    add_tone(&once, offsets[1], amplitudes[1], phases[1])
}

fn raised_cosine(x: f64) -> f64 {
    let x = x.clamp(0.0, 1.0);
    0.5 * (1.0 - (PI * x).cos())
}

/// Skywave attenuation at `t`: zero through the day, `alpha_night` through
/// the night, with raised-cosine ramps of length `transition` centered on
/// sunset (rising) and sunrise (falling).
pub fn diurnal_alpha(t: DateTime<Utc>, ev: &SolarEvents, alpha_night: f64, transition: Duration) -> f64 {
    let span = transition.num_milliseconds() as f64 / 1000.0;
    let secs = |a: DateTime<Utc>| (t - a).num_milliseconds() as f64 / 1000.0;
    // Night-ness left over from the morning and building up in the evening.
    let morning = 1.0 - raised_cosine(secs(ev.sunrise_utc) / span + 0.5);
    let evening = raised_cosine(secs(ev.sunset_utc) / span + 0.5);
    alpha_night * morning.max(evening)
}

/// Adds the skywave `alpha · x(t − delay) · e^{−j·2π·carrier·delay}`.
///
/// The delay is realized in the frequency domain as a per-bin phase ramp, so
/// integer and fractional parts of the delay are exact for any tone that
/// completes a whole number of cycles in the buffer. The buffer is treated
/// as periodic, which is how the leading `delay` seconds get their history.
pub fn apply_two_path(buf: &IqBuffer, alpha: f64, delay_s: f64, carrier_hz: f64) -> Result<IqBuffer> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Config(format!("alpha must lie in [0, 1], got {alpha}")));
    }
    if !(delay_s.is_finite() && delay_s >= 0.0) {
        return Err(Error::Config(format!("delay must be finite and >= 0, got {delay_s}")));
    }
    if delay_s >= buf.duration_s() {
        return Err(Error::Config(format!(
            "delay {delay_s} s exceeds buffer length {} s",
            buf.duration_s()
        )));
    }
    if alpha == 0.0 {
        return Ok(buf.clone());
    }
    let n = buf.len();
    let fs = buf.sample_rate_hz;
    let mut spectrum = buf.samples.clone();
    let mut planner = FftPlanner::<f64>::new();
    planner.plan_fft_forward(n).process(&mut spectrum);
    for (k, z) in spectrum.iter_mut().enumerate() {
        let signed = if 2 * k < n { k as f64 } else { k as f64 - n as f64 };
        *z *= unit_phasor(-signed * fs / n as f64 * delay_s);
    }
    planner.plan_fft_inverse(n).process(&mut spectrum);
    let gain = unit_phasor(-carrier_hz * delay_s) * (alpha / n as f64);
    let samples = buf.samples.iter().zip(&spectrum).map(|(x, d)| x + gain * d).collect();
    Ok(IqBuffer { samples, ..buf.clone() })
}

/// True channel state at one epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruthSample {
    pub epoch_utc: DateTime<Utc>,
    pub alpha: f64,
    pub delay_s: f64,
    pub tones: [CompositeTone; 2],
}

#[derive(Debug, Clone, PartialEq)]
pub struct Campaign {
    /// One series per tone, in `CHANNEL_NAMES` order.
    pub series: Vec<PhaseSeries>,
    pub truth: Vec<TruthSample>,
}

/// Local midnight of `date` in the configured station zone.
pub fn local_midnight_utc(date: NaiveDate, utc_offset_hours: i32) -> DateTime<Utc> {
    utc_offset(utc_offset_hours)
        .from_local_datetime(&date.and_time(NaiveTime::MIN))
        .single()
        .expect("fixed offsets are unambiguous")
        .with_timezone(&Utc)
}

struct Epoch {
    truth: TruthSample,
    samples: [PhaseSample; 2],
}

/// Solar events for every local date touched by the campaign.
fn events_by_date(cfg: &SimConfig, start: NaiveDate, days: u32) -> Result<BTreeMap<NaiveDate, SolarEvents>> {
    let mut map = BTreeMap::new();
    let mut d = start.pred_opt().unwrap_or(start);
    let last = start + Duration::days(i64::from(days));
    while d <= last {
        map.insert(d, solar_events(cfg.rx, d)?);
        d = d.succ_opt().ok_or_else(|| Error::Config("date out of range".into()))?;
    }
    Ok(map)
}

/// Day/night skywave state at `t`: attenuation and excess delay.
fn channel_at(
    cfg: &SimConfig,
    events: &BTreeMap<NaiveDate, SolarEvents>,
    geom_distance: f64,
    t: DateTime<Utc>,
) -> Result<TwoPathChannel> {
    let local_date = t.with_timezone(&utc_offset(cfg.utc_offset_hours)).date_naive();
    let ev = events
        .get(&local_date)
        .ok_or_else(|| Error::Config(format!("no solar events for {local_date}")))?;
    let transition = Duration::milliseconds((cfg.transition_minutes * 60_000.0).round() as i64);
    let alpha = diurnal_alpha(t, ev, cfg.alpha_night, transition);
    let geom = PathGeometry::new(geom_distance, cfg.iono_height_at(t))?;
    TwoPathChannel::new(alpha, skywave_excess_delay(geom, Constants::default()))
}

/// Phase-sample campaign over `days` local days starting at local midnight
/// of `start`, one epoch every `epoch_spacing_seconds`.
///
/// Each tone's phase is the groundwave propagation phase plus the composite
/// phase shift `beta`, plus Gaussian phase noise, wrapped to (−π, π].
pub fn synthesize_campaign(cfg: &SimConfig, start: NaiveDate, days: u32) -> Result<Campaign> {
    cfg.validate()?;
    if days < 3 {
        return Err(Error::Config(format!("campaign needs at least 3 days, got {days}")));
    }
    let events = events_by_date(cfg, start, days)?;
    let t0 = local_midnight_utc(start, cfg.utc_offset_hours);
    let spacing_ms = (cfg.epoch_spacing_seconds * 1000.0).round() as i64;
    let total_ms = i64::from(days) * 86_400_000;
    let n_epochs = ((total_ms + spacing_ms - 1) / spacing_ms) as u64;
    let d = cfg.path_distance_m();
    let ground_phase: [f64; 2] =
        [0, 1].map(|k| wrap_phase(-TAU * (cfg.tone_freq_hz(k) * d / SPEED_OF_LIGHT).rem_euclid(1.0)));

    let epochs: Vec<Epoch> = (0..n_epochs)
        .into_par_iter()
        .map(|i| {
            let t = t0 + Duration::milliseconds(i as i64 * spacing_ms);
            let ch = channel_at(cfg, &events, d, t)?;
            let mut tones = [CompositeTone { eta: 1.0, beta_rad: 0.0 }; 2];
            let mut samples = [PhaseSample::new(t, 0.0); 2];
            for k in 0..2 {
                let tone = CwTone::new(cfg.tone_freq_hz(k), cfg.cw_amplitudes[k], 0.0)?;
                let comp = combine_two_path(tone, ch)?;
                let mut rng = slot_rng(cfg.seed, STREAM_PHASE_NOISE + 16 * k as u64, i);
                let z: f64 = rng.sample(StandardNormal);
                let noise = z * cfg.phase_noise_sigma(k, comp.eta);
                tones[k] = comp;
                samples[k] = PhaseSample::new(t, wrap_phase(ground_phase[k] + comp.beta_rad + noise))
                    .with_amplitude(cfg.cw_amplitudes[k] * comp.eta);
            }
            Ok(Epoch {
                truth: TruthSample { epoch_utc: t, alpha: ch.alpha(), delay_s: ch.delay_s(), tones },
                samples,
            })
        })
        .collect::<Result<_>>()?;

    let mut series = Vec::with_capacity(2);
    for (k, name) in CHANNEL_NAMES.iter().enumerate() {
        let samples = epochs.iter().map(|e| e.samples[k]).collect();
        series.push(PhaseSeries::new(ChannelId::new(*name), samples)?);
    }
    Ok(Campaign { series, truth: epochs.into_iter().map(|e| e.truth).collect() })
}

/// Seeded pseudorandom bits standing in for the correction message stream.
pub fn message_bits(seed: u64, count: usize) -> Vec<bool> {
    let mut rng = slot_rng(seed, STREAM_BITS, 0);
    (0..count).map(|_| rng.random::<bool>()).collect()
}

/// Complex AWGN with per-component standard deviation `sigma`, drawn from
/// slot `index` of the IQ noise stream.
pub fn add_awgn(buf: &IqBuffer, sigma: f64, seed: u64, index: u64) -> IqBuffer {
    if sigma == 0.0 {
        return buf.clone();
    }
    let mut rng = slot_rng(seed, STREAM_IQ_NOISE, index);
    let samples = buf
        .samples
        .iter()
        .map(|z| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            z + Complex64::new(re, im) * sigma
        })
        .collect();
    IqBuffer { samples, ..buf.clone() }
}

/// Contiguous IQ recording of `seconds` starting at `start_utc`.
///
/// The channel (attenuation, delay) is held constant over chunks of
/// `integration_seconds` and evaluated at each chunk's midpoint.
pub fn synthesize_iq(cfg: &SimConfig, start_utc: DateTime<Utc>, seconds: f64) -> Result<IqBuffer> {
    cfg.validate()?;
    let fs = cfg.sample_rate_hz;
    let sps = samples_per_bit(cfg.msk_bitrate_bps, fs)?;
    let total = (seconds * fs).round() as usize;
    if total == 0 {
        return Err(Error::Config(format!("IQ duration {seconds} s yields no samples")));
    }
    let bits = message_bits(cfg.seed, total.div_ceil(sps));
    let msk = msk_baseband(&bits, cfg.msk_bitrate_bps, fs, cfg.msk_amplitude, start_utc)?;
    let msk = msk.slice(0, total)?;
    let d = cfg.path_distance_m();
    let phases = [0, 1].map(|k| -TAU * (cfg.tone_freq_hz(k) * d / SPEED_OF_LIGHT).rem_euclid(1.0));
    let clean = add_cw_tones(&msk, cfg.cw_offsets_hz, cfg.cw_amplitudes, phases)?;

    let local = start_utc.with_timezone(&utc_offset(cfg.utc_offset_hours)).date_naive();
    let end_local = local + Duration::days((seconds / 86_400.0).ceil() as i64 + 1);
    let mut events = BTreeMap::new();
    let mut day = local.pred_opt().unwrap_or(local);
    while day <= end_local {
        events.insert(day, solar_events(cfg.rx, day)?);
        day = day.succ_opt().ok_or_else(|| Error::Config("date out of range".into()))?;
    }

    let chunk = ((cfg.integration_seconds * fs).round() as usize).max(1);
    let starts: Vec<usize> = (0..total).step_by(chunk).collect();
    let parts: Vec<Vec<Complex64>> = starts
        .par_iter()
        .enumerate()
        .map(|(ci, &s)| {
            let len = chunk.min(total - s);
            let piece = clean.slice(s, len)?;
            let mid = piece.epoch_of(len / 2);
            let ch = channel_at(cfg, &events, d, mid)?;
            let delay = ch.delay_s().min(0.999 * piece.duration_s());
            let faded = apply_two_path(&piece, ch.alpha(), delay, cfg.carrier_hz)?;
            Ok(add_awgn(&faded, cfg.noise_sigma, cfg.seed, ci as u64).into_samples())
        })
        .collect::<Result<_>>()?;
    IqBuffer::new(parts.concat(), fs, start_utc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn t0() -> DateTime<Utc> {
        Utc.with_ymd_and_hms(2023, 2, 12, 0, 0, 0).unwrap()
    }

    fn correlate(buf: &IqBuffer, offset: f64) -> Complex64 {
        let step = offset / buf.sample_rate_hz();
        buf.samples()
            .iter()
            .enumerate()
            .map(|(n, z)| z * unit_phasor(-step * n as f64))
            .sum::<Complex64>()
            / buf.len() as f64
    }

    #[test]
    fn all_ones_is_a_pure_tone() {
        let buf = msk_baseband(&[true; 200], 200.0, 4000.0, 1.0, t0()).unwrap();
        let c = correlate(&buf, 50.0);
        assert_abs_diff_eq!(c.norm(), 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(c.arg(), 0.0, epsilon = 1e-9);
    }

    #[test]
    fn msk_phase_advances_quarter_turn_per_bit() {
        let bits = [true, true, false, true, false, false, false, true];
        let buf = msk_baseband(&bits, 200.0, 4000.0, 2.0, t0()).unwrap();
        let sps = 20;
        let mut expected = 0.0;
        for (k, &b) in bits.iter().enumerate() {
            let z = buf.samples()[k * sps];
            assert_abs_diff_eq!(wrap_phase(z.arg() - expected), 0.0, epsilon = 1e-12);
            assert_abs_diff_eq!(z.norm(), 2.0, epsilon = 1e-12);
            expected += if b { PI / 2.0 } else { -PI / 2.0 };
        }
        // Consecutive samples never jump: max step is π/2 / sps.
        for w in buf.samples().windows(2) {
            assert!(wrap_phase(w[1].arg() - w[0].arg()).abs() <= PI / 2.0 / sps as f64 + 1e-12);
        }
    }

    #[test]
    fn msk_requires_integer_samples_per_bit() {
        assert!(matches!(msk_baseband(&[true], 300.0, 4000.0, 1.0, t0()), Err(Error::Config(_))));
    }

    #[test]
    fn null_grid() {
        assert!(cw_null_check(200.0, 450.0));
        assert!(cw_null_check(200.0, -450.0));
        assert!(cw_null_check(200.0, 250.0));
        assert!(cw_null_check(200.0, -250.0));
        assert!(cw_null_check(200.0, 150.0));
        assert!(!cw_null_check(200.0, 300.0));
        assert!(!cw_null_check(200.0, 50.0));
        assert!(!cw_null_check(0.0, 450.0));
    }

    #[test]
    fn zero_amplitude_tones_are_identity() {
        let buf = msk_baseband(&message_bits(3, 50), 200.0, 4000.0, 1.0, t0()).unwrap();
        let out = add_cw_tones(&buf, [-450.0, 450.0], [0.0, 0.0], [0.3, 1.0]).unwrap();
        assert_eq!(out, buf);
    }

    #[test]
    fn tone_beyond_nyquist_rejected() {
        let buf = IqBuffer::silent(100, 4000.0, t0()).unwrap();
        assert!(matches!(add_tone(&buf, 2000.0, 1.0, 0.0), Err(Error::Config(_))));
    }

    #[test]
    fn two_path_zero_alpha_is_identity() {
        let buf = add_tone(&IqBuffer::silent(4000, 4000.0, t0()).unwrap(), 450.0, 1.0, 0.2).unwrap();
        assert_eq!(apply_two_path(&buf, 0.0, 230e-6, 318e3).unwrap(), buf);
    }

    #[test]
    fn two_path_delay_longer_than_buffer_rejected() {
        let buf = IqBuffer::silent(40, 4000.0, t0()).unwrap();
        assert!(matches!(apply_two_path(&buf, 0.5, 0.02, 318e3), Err(Error::Config(_))));
    }

    #[test]
    fn two_path_matches_phasor_for_pure_tone() {
        let offset = 450.0;
        let carrier = 318_000.0;
        let buf = add_tone(&IqBuffer::silent(4000, 4000.0, t0()).unwrap(), offset, 0.8, -1.1).unwrap();
        for (alpha, td) in [(0.5, 230.4e-6), (0.9, 600.4e-6), (0.2, 37e-6)] {
            let out = apply_two_path(&buf, alpha, td, carrier).unwrap();
            let want = combine_two_path(
                CwTone::new(carrier + offset, 1.0, 0.0).unwrap(),
                TwoPathChannel::new(alpha, td).unwrap(),
            )
            .unwrap();
            let ratio = correlate(&out, offset) / correlate(&buf, offset);
            assert_abs_diff_eq!(ratio.norm(), want.eta, epsilon = 1e-9);
            assert_abs_diff_eq!(wrap_phase(ratio.arg() - want.beta_rad), 0.0, epsilon = 1e-9);
            assert_abs_diff_eq!(out.mean_power() / buf.mean_power(), want.eta.powi(2), epsilon = 1e-9);
        }
    }

    fn events() -> SolarEvents {
        solar_events(GeoPoint::new(37.0, 126.35).unwrap(), NaiveDate::from_ymd_opt(2023, 2, 12).unwrap()).unwrap()
    }

    #[test]
    fn diurnal_profile_key_points() {
        let ev = events();
        let tr = Duration::minutes(60);
        assert_eq!(diurnal_alpha(ev.solar_noon_utc, &ev, 0.4, tr), 0.0);
        // Local midnight at UTC+9 is 15:00 UTC the previous day.
        let midnight = local_midnight_utc(ev.date, 9);
        assert_eq!(diurnal_alpha(midnight, &ev, 0.4, tr), 0.4);
        assert_eq!(diurnal_alpha(midnight + Duration::days(1) - Duration::seconds(1), &ev, 0.4, tr), 0.4);
        assert_abs_diff_eq!(diurnal_alpha(ev.sunset_utc, &ev, 0.4, tr), 0.2, epsilon = 1e-12);
        assert_abs_diff_eq!(diurnal_alpha(ev.sunrise_utc, &ev, 0.4, tr), 0.2, epsilon = 1e-12);
    }

    #[test]
    fn diurnal_profile_slope_bound() {
        let ev = events();
        let tr = Duration::minutes(30);
        let alpha_night = 0.7;
        let bound = alpha_night * PI / (2.0 * 1800.0) + 1e-9;
        let midnight = local_midnight_utc(ev.date, 9);
        let mut prev = diurnal_alpha(midnight, &ev, alpha_night, tr);
        for s in 1..86_400 {
            let a = diurnal_alpha(midnight + Duration::seconds(s), &ev, alpha_night, tr);
            assert!((a - prev).abs() <= bound, "jump at {s} s");
            assert!((0.0..=alpha_night).contains(&a));
            prev = a;
        }
    }

    #[test]
    fn config_validation() {
        assert!(SimConfig::default().validate().is_ok());
        assert!(SimConfig::default().warnings().is_empty());
        let bad = SimConfig { alpha_night: 1.5, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = SimConfig { cw_offsets_hz: [450.0, 450.0], ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = SimConfig { sample_rate_hz: 1400.0, msk_bitrate_bps: 200.0, ..Default::default() };
        assert!(bad.validate().is_err());
        let off = SimConfig { cw_offsets_hz: [-300.0, 450.0], ..Default::default() };
        assert_eq!(off.warnings().len(), 1);
    }

    #[test]
    fn config_json_uses_field_names() {
        let cfg: SimConfig = serde_json::from_str(r#"{"alpha_night": 0.1, "seed": 9, "rx": {"lat": 35.0, "lon": 129.0}}"#).unwrap();
        assert_eq!(cfg.alpha_night, 0.1);
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.carrier_hz, 318_000.0);
        assert!(serde_json::from_str::<SimConfig>(r#"{"alpha_nite": 0.1}"#).is_err());
    }

    #[test]
    fn campaign_needs_three_days() {
        let d = NaiveDate::from_ymd_opt(2023, 2, 11).unwrap();
        assert!(matches!(synthesize_campaign(&SimConfig::default(), d, 2), Err(Error::Config(_))));
    }

    #[test]
    fn slot_rng_is_position_addressed() {
        let mut a = slot_rng(7, 1, 5);
        let mut b = slot_rng(7, 1, 5);
        let mut c = slot_rng(7, 1, 6);
        let (x, y, z): (u64, u64, u64) = (a.random(), b.random(), c.random());
        assert_eq!(x, y);
        assert_ne!(x, z);
    }
}
