//! Sunrise/sunset and daytime statistics windows.
//!
//! Solar events use the low-accuracy NOAA formulation (fractional year,
//! equation of time, declination, hour angle at zenith 90.833°), evaluated
//! iteratively at the event time itself. Good to a couple of minutes at
//! mid-latitudes.

use std::f64::consts::{PI, TAU};

use chrono::{DateTime, Datelike, Duration, FixedOffset, NaiveDate, NaiveTime, TimeZone, Utc};
use serde::{Deserialize, Serialize};

use crate::propagation::GeoPoint;
use crate::{Error, Result};

/// Sunrise/sunset zenith: 90° plus refraction and solar semi-diameter.
pub const SUNRISE_ZENITH_DEG: f64 = 90.833;

/// Beyond this latitude the polar day/night cases start to appear.
pub const MAX_ABS_LATITUDE_DEG: f64 = 66.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SolarEvents {
    pub date: NaiveDate,
    pub sunrise_utc: DateTime<Utc>,
    pub solar_noon_utc: DateTime<Utc>,
    pub sunset_utc: DateTime<Utc>,
}

impl SolarEvents {
    pub fn day_length(&self) -> Duration {
        self.sunset_utc - self.sunrise_utc
    }
}

struct SunState {
    eqtime_min: f64,
    decl_rad: f64,
}

fn sun_state(date: NaiveDate, utc_minutes: f64) -> SunState {
    let days_in_year = if date.leap_year() { 366.0 } else { 365.0 };
    let doy = date.ordinal() as f64;
    let g = TAU / days_in_year * (doy - 1.0 + (utc_minutes / 60.0 - 12.0) / 24.0);
    let eqtime_min = 229.18
        * (0.000075 + 0.001868 * g.cos()
            - 0.032077 * g.sin()
            - 0.014615 * (2.0 * g).cos()
            - 0.040849 * (2.0 * g).sin());
    let decl_rad = 0.006918 - 0.399912 * g.cos() + 0.070257 * g.sin() - 0.006758 * (2.0 * g).cos()
        + 0.000907 * (2.0 * g).sin()
        - 0.002697 * (3.0 * g).cos()
        + 0.00148 * (3.0 * g).sin();
    SunState { eqtime_min, decl_rad }
}

#[derive(Clone, Copy)]
enum Event {
    Rise,
    Noon,
    Set,
}

fn event_minutes(p: GeoPoint, date: NaiveDate, event: Event) -> Result<f64> {
    let lat = p.lat().to_radians();
    let lon = p.lon();
    let mut minutes = 720.0 - 4.0 * lon;
    for _ in 0..3 {
        let s = sun_state(date, minutes);
        let noon = 720.0 - 4.0 * lon - s.eqtime_min;
        minutes = match event {
            Event::Noon => noon,
            Event::Rise | Event::Set => {
                let cos_ha = SUNRISE_ZENITH_DEG.to_radians().cos() / (lat.cos() * s.decl_rad.cos())
                    - lat.tan() * s.decl_rad.tan();
                if !(-1.0..=1.0).contains(&cos_ha) {
                    return Err(Error::UnsupportedLatitude { lat: p.lat() });
                }
                let ha_deg = cos_ha.acos() * 180.0 / PI;
                match event {
                    Event::Rise => noon - 4.0 * ha_deg,
                    _ => noon + 4.0 * ha_deg,
                }
            }
        };
    }
    Ok(minutes)
}

fn at_minutes(date: NaiveDate, minutes: f64) -> DateTime<Utc> {
    let midnight = Utc.from_utc_datetime(&date.and_time(NaiveTime::MIN));
    midnight + Duration::milliseconds((minutes * 60_000.0).round() as i64)
}

/// Sunrise, solar noon and sunset for the civil `date` at `p`.
///
/// The date is the one observed at the location's own solar noon, so at
/// 126° E the sunrise of 11 February lands at about 22:30 UTC on 10 February.
pub fn solar_events(p: GeoPoint, date: NaiveDate) -> Result<SolarEvents> {
    if p.lat().abs() >= MAX_ABS_LATITUDE_DEG {
        return Err(Error::UnsupportedLatitude { lat: p.lat() });
    }
    let rise = event_minutes(p, date, Event::Rise)?;
    let noon = event_minutes(p, date, Event::Noon)?;
    let set = event_minutes(p, date, Event::Set)?;
    Ok(SolarEvents {
        date,
        sunrise_utc: at_minutes(date, rise),
        solar_noon_utc: at_minutes(date, noon),
        sunset_utc: at_minutes(date, set),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WindowMode {
    /// From sunrise plus an offset to sunset minus an offset.
    SolarOffset,
    /// Fixed local time-of-day interval, identical every day.
    FixedLocal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowPolicy {
    pub mode: WindowMode,
    pub offset_after_sunrise: Duration,
    pub offset_before_sunset: Duration,
    pub fixed_start: NaiveTime,
    pub fixed_end: NaiveTime,
    pub utc_offset_hours: i32,
}

impl Default for WindowPolicy {
    fn default() -> Self {
        WindowPolicy {
            mode: WindowMode::SolarOffset,
            offset_after_sunrise: Duration::hours(1),
            offset_before_sunset: Duration::hours(1),
            fixed_start: NaiveTime::from_hms_opt(8, 30, 0).unwrap(),
            fixed_end: NaiveTime::from_hms_opt(20, 0, 0).unwrap(),
            utc_offset_hours: 0,
        }
    }
}

impl WindowPolicy {
    /// Sunrise + 1 h to sunset − 1 h.
    pub fn solar(utc_offset_hours: i32) -> Self {
        WindowPolicy { utc_offset_hours, ..Default::default() }
    }

    pub fn fixed_local(start: NaiveTime, end: NaiveTime, utc_offset_hours: i32) -> Self {
        WindowPolicy {
            mode: WindowMode::FixedLocal,
            fixed_start: start,
            fixed_end: end,
            utc_offset_hours,
            ..Default::default()
        }
    }

    pub fn utc_offset(&self) -> FixedOffset {
        utc_offset(self.utc_offset_hours)
    }

    /// Civil date of `t` in station local time.
    pub fn local_date(&self, t: DateTime<Utc>) -> NaiveDate {
        t.with_timezone(&self.utc_offset()).date_naive()
    }
}

pub(crate) fn utc_offset(hours: i32) -> FixedOffset {
    FixedOffset::east_opt(hours.clamp(-23, 23) * 3600).expect("offset within a day")
}

/// Half-open UTC interval `[start_utc, end_utc)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DaytimeWindow {
    pub start_utc: DateTime<Utc>,
    pub end_utc: DateTime<Utc>,
}

impl DaytimeWindow {
    pub fn contains(&self, t: DateTime<Utc>) -> bool {
        self.start_utc <= t && t < self.end_utc
    }

    pub fn duration(&self) -> Duration {
        self.end_utc - self.start_utc
    }
}

impl std::fmt::Display for DaytimeWindow {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "[{}, {})", self.start_utc.to_rfc3339(), self.end_utc.to_rfc3339())
    }
}

fn checked_window(date: NaiveDate, start_utc: DateTime<Utc>, end_utc: DateTime<Utc>) -> Result<DaytimeWindow> {
    if start_utc >= end_utc {
        return Err(Error::DegenerateWindow {
            date,
            reason: format!("start {start_utc} is not before end {end_utc}"),
        });
    }
    Ok(DaytimeWindow { start_utc, end_utc })
}

fn fixed_window(date: NaiveDate, policy: &WindowPolicy) -> Result<DaytimeWindow> {
    let tz = policy.utc_offset();
    let local = |t: NaiveTime| {
        tz.from_local_datetime(&date.and_time(t))
            .single()
            .expect("fixed offsets are unambiguous")
            .with_timezone(&Utc)
    };
    checked_window(date, local(policy.fixed_start), local(policy.fixed_end))
}

/// Daytime statistics window for the day of `ev`.
pub fn daytime_window(ev: &SolarEvents, policy: &WindowPolicy) -> Result<DaytimeWindow> {
    match policy.mode {
        WindowMode::SolarOffset => checked_window(
            ev.date,
            ev.sunrise_utc + policy.offset_after_sunrise,
            ev.sunset_utc - policy.offset_before_sunset,
        ),
        WindowMode::FixedLocal => fixed_window(ev.date, policy),
    }
}

/// Window for one civil date; solar events are only computed when needed.
pub fn window_for_date(p: GeoPoint, date: NaiveDate, policy: &WindowPolicy) -> Result<DaytimeWindow> {
    match policy.mode {
        WindowMode::SolarOffset => daytime_window(&solar_events(p, date)?, policy),
        WindowMode::FixedLocal => fixed_window(date, policy),
    }
}

/// Windows for the day before, the day of, and the day after `date`.
pub fn three_day_windows(p: GeoPoint, date: NaiveDate, policy: &WindowPolicy) -> Result<[DaytimeWindow; 3]> {
    let dates = [date.pred_opt(), Some(date), date.succ_opt()]
        .map(|d| d.ok_or_else(|| Error::InvalidInput(format!("date {date} out of range"))));
    let mut out = Vec::with_capacity(3);
    for d in dates {
        let d = d?;
        let w = window_for_date(p, d, policy)?;
        if let Some(prev) = out.last() {
            let prev: &DaytimeWindow = prev;
            if w.start_utc < prev.end_utc {
                return Err(Error::DegenerateWindow {
                    date: d,
                    reason: format!("window {w} overlaps the previous day's window {prev}"),
                });
            }
        }
        out.push(w);
    }
    Ok([out[0], out[1], out[2]])
}
