//! Geodesy and the closed-form groundwave/skywave model.
//!
//! A single-hop skywave reflected at height `h` over a ground path of length
//! `d` travels `sqrt(4h² + d²)` instead of `d`. At a tone frequency `f` the
//! extra path shows up as a carrier rotation `θ = 2π f t_d`, and the received
//! tone is the phasor sum `1 + α e^{−jθ}` of a unit groundwave and an
//! attenuated skywave. [`combine_two_path`] returns the magnitude and angle of
//! that sum.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::phase::wrap_phase;
use crate::{Error, Result};

/// Mean Earth radius used for great-circle distances, meters.
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

/// Speed of light in vacuum, m/s (exact).
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Default E-layer reflection height, meters.
pub const DEFAULT_IONO_HEIGHT_M: f64 = 90_000.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGeoPoint", into = "RawGeoPoint")]
pub struct GeoPoint {
    lat: f64,
    lon: f64,
}

#[derive(Serialize, Deserialize)]
struct RawGeoPoint {
    lat: f64,
    lon: f64,
}

impl TryFrom<RawGeoPoint> for GeoPoint {
    type Error = Error;
    fn try_from(raw: RawGeoPoint) -> Result<Self> {
        GeoPoint::new(raw.lat, raw.lon)
    }
}

impl From<GeoPoint> for RawGeoPoint {
    fn from(p: GeoPoint) -> Self {
        RawGeoPoint { lat: p.lat, lon: p.lon }
    }
}

impl GeoPoint {
    /// Latitude in degrees north, longitude in degrees east. Longitude is
    /// normalized into [−180, 180), so `180` is accepted and stored as `−180`.
    pub fn new(lat: f64, lon: f64) -> Result<Self> {
        if !lat.is_finite() || !lon.is_finite() {
            return Err(Error::InvalidInput(format!(
                "non-finite coordinates ({lat}, {lon})"
            )));
        }
        if !(-90.0..=90.0).contains(&lat) {
            return Err(Error::InvalidInput(format!("latitude {lat} outside [-90, 90]")));
        }
        let lon = (lon + 180.0).rem_euclid(360.0) - 180.0;
        Ok(GeoPoint { lat, lon })
    }

    pub fn lat(&self) -> f64 {
        self.lat
    }

    pub fn lon(&self) -> f64 {
        self.lon
    }
}

/// Haversine distance in meters on a sphere of radius [`EARTH_RADIUS_M`].
pub fn great_circle_distance(a: GeoPoint, b: GeoPoint) -> f64 {
    let (phi1, phi2) = (a.lat.to_radians(), b.lat.to_radians());
    let dphi = phi2 - phi1;
    let dlambda = (b.lon - a.lon).to_radians();
    let h = (dphi / 2.0).sin().powi(2) + phi1.cos() * phi2.cos() * (dlambda / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_M * h.sqrt().min(1.0).asin()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathGeometry {
    distance_m: f64,
    iono_height_m: f64,
}

impl PathGeometry {
    pub fn new(distance_m: f64, iono_height_m: f64) -> Result<Self> {
        for (name, v) in [("distance", distance_m), ("ionosphere height", iono_height_m)] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::InvalidInput(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        Ok(PathGeometry { distance_m, iono_height_m })
    }

    pub fn between(tx: GeoPoint, rx: GeoPoint, iono_height_m: f64) -> Result<Self> {
        Self::new(great_circle_distance(tx, rx), iono_height_m)
    }

    pub fn distance_m(&self) -> f64 {
        self.distance_m
    }

    pub fn iono_height_m(&self) -> f64 {
        self.iono_height_m
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Constants {
    pub c: f64,
}

impl Default for Constants {
    fn default() -> Self {
        Constants { c: SPEED_OF_LIGHT }
    }
}

/// Extra travel time of the single-hop skywave over the groundwave, seconds.
pub fn skywave_excess_delay(geom: PathGeometry, k: Constants) -> f64 {
    let (d, h) = (geom.distance_m, geom.iono_height_m);
    // sqrt(4h² + d²) − d, rationalized to avoid cancellation at long range.
    let four_h2 = 4.0 * h * h;
    if four_h2 == 0.0 {
        return 0.0;
    }
    four_h2 / ((four_h2 + d * d).sqrt() + d) / k.c
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CwTone {
    freq_hz: f64,
    amplitude: f64,
    phase_rad: f64,
}

impl CwTone {
    pub fn new(freq_hz: f64, amplitude: f64, phase_rad: f64) -> Result<Self> {
        if !freq_hz.is_finite() || freq_hz <= 0.0 {
            return Err(Error::InvalidInput(format!("tone frequency must be > 0, got {freq_hz}")));
        }
        if !amplitude.is_finite() || amplitude < 0.0 {
            return Err(Error::InvalidInput(format!("tone amplitude must be >= 0, got {amplitude}")));
        }
        if !phase_rad.is_finite() {
            return Err(Error::InvalidInput("tone phase must be finite".into()));
        }
        Ok(CwTone { freq_hz, amplitude, phase_rad: wrap_phase(phase_rad) })
    }

    pub fn freq_hz(&self) -> f64 {
        self.freq_hz
    }

    pub fn amplitude(&self) -> f64 {
        self.amplitude
    }

    pub fn phase_rad(&self) -> f64 {
        self.phase_rad
    }
}

/// Skywave attenuation `alpha` ∈ [0, 1] and excess delay in seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoPathChannel {
    alpha: f64,
    delay_s: f64,
}

impl TwoPathChannel {
    pub fn new(alpha: f64, delay_s: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::InvalidInput(format!("alpha must lie in [0, 1], got {alpha}")));
        }
        if !delay_s.is_finite() || delay_s < 0.0 {
            return Err(Error::InvalidInput(format!("delay must be finite and >= 0, got {delay_s}")));
        }
        Ok(TwoPathChannel { alpha, delay_s })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn delay_s(&self) -> f64 {
        self.delay_s
    }
}

/// Amplitude scaling `eta` and phase shift `beta` of the composite tone.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompositeTone {
    pub eta: f64,
    pub beta_rad: f64,
}

/// Phasor sum of a unit groundwave and the delayed, attenuated skywave.
///
/// Amplitude and initial phase of `tone` scale and rotate the composite as a
/// whole, so only its frequency enters the result.
pub fn combine_two_path(tone: CwTone, ch: TwoPathChannel) -> Result<CompositeTone> {
    let theta = (TAU * tone.freq_hz * ch.delay_s).rem_euclid(TAU);
    let alpha = ch.alpha;
    let re = 1.0 + alpha * theta.cos();
    let im = -alpha * theta.sin();
    let eta = re.hypot(im);
    if eta <= 1e-12 {
        return Err(Error::DegenerateCancellation);
    }
    Ok(CompositeTone { eta, beta_rad: wrap_phase(im.atan2(re)) })
}

/// Skywave attenuation that yields a composite phase shift of magnitude
/// `beta_abs` for carrier phase delay `theta` (radians).
///
/// Returns `None` when no `alpha` in [0, 1] reaches that shift.
pub fn alpha_for_phase_shift(theta: f64, beta_abs: f64) -> Option<f64> {
    // tan|β| = α|sin θ| / (1 + α cos θ)  ⇒  α = t / (|sin θ| − t cos θ)
    let t = beta_abs.tan();
    let denom = theta.sin().abs() - t * theta.cos();
    if !(beta_abs >= 0.0) || denom <= 0.0 {
        return None;
    }
    let alpha = t / denom;
    (0.0..=1.0).contains(&alpha).then_some(alpha)
}
