//! File formats: phase logs, label files and raw IQ recordings.
//!
//! Phase log (CSV):
//!
//! ```text
//! # station_id=DAESAN
//! # channels=CW1,CW2
//! # phase_unit=rad
//! # utc_offset_hours=9
//! # source=skylabel simulate
//! epoch_utc,channel,phase,amplitude
//! 2023-02-11T00:00:00Z,CW1,-1.2345,0.98
//! ```
//!
//! Extra `# key=value` lines are preserved. Values are written in the
//! shortest decimal form that parses back to the same `f64`.
//!
//! IQ recordings are raw interleaved little-endian `f32` pairs (I then Q)
//! with a JSON sidecar describing rate, center frequency and start epoch.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::{DateTime, SecondsFormat, Utc};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::labeler::{ChannelId, DaytimeStats, LabelRecord, PhaseSample, PhaseSeries};
use crate::sim::IqBuffer;
use crate::{Error, Result};

pub const IQ_FORMAT: &str = "f32le-iq";

const PHASE_COLUMNS: [&str; 4] = ["epoch_utc", "channel", "phase", "amplitude"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PhaseUnit {
    Rad,
    Deg,
    Cycles,
}

impl PhaseUnit {
    pub fn to_radians(self, v: f64) -> f64 {
        match self {
            PhaseUnit::Rad => v,
            PhaseUnit::Deg => v * PI / 180.0,
            PhaseUnit::Cycles => v * 2.0 * PI,
        }
    }

    pub fn from_radians(self, v: f64) -> f64 {
        match self {
            PhaseUnit::Rad => v,
            PhaseUnit::Deg => v * 180.0 / PI,
            PhaseUnit::Cycles => v / (2.0 * PI),
        }
    }
}

impl FromStr for PhaseUnit {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "rad" | "radians" => Ok(PhaseUnit::Rad),
            "deg" | "degrees" => Ok(PhaseUnit::Deg),
            "cycles" | "cyc" => Ok(PhaseUnit::Cycles),
            other => Err(Error::InvalidInput(format!("unknown phase unit '{other}'"))),
        }
    }
}

impl fmt::Display for PhaseUnit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PhaseUnit::Rad => "rad",
            PhaseUnit::Deg => "deg",
            PhaseUnit::Cycles => "cycles",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseLogHeader {
    pub station_id: String,
    pub channels: Vec<ChannelId>,
    /// `None` only when read from a file that did not declare one.
    pub phase_unit: Option<PhaseUnit>,
    pub utc_offset_hours: i32,
    pub source: String,
    /// Any other `key=value` header lines, e.g. estimator settings.
    pub extra: BTreeMap<String, String>,
}

impl PhaseLogHeader {
    pub fn new(station_id: impl Into<String>, channels: Vec<ChannelId>, unit: PhaseUnit) -> Self {
        PhaseLogHeader {
            station_id: station_id.into(),
            channels,
            phase_unit: Some(unit),
            utc_offset_hours: 0,
            source: String::new(),
            extra: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseLog {
    pub header: PhaseLogHeader,
    /// One series per channel, in header order; phases in radians.
    pub series: Vec<PhaseSeries>,
}

pub fn format_epoch(t: DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::AutoSi, true)
}

/// ISO 8601 / RFC 3339 timestamp with an explicit `Z` suffix.
pub fn parse_epoch(s: &str) -> std::result::Result<DateTime<Utc>, String> {
    let s = s.trim();
    if !s.ends_with('Z') && !s.ends_with('z') {
        return Err(format!("timestamp '{s}' must be UTC with a 'Z' suffix"));
    }
    DateTime::parse_from_rfc3339(s)
        .map(|t| t.with_timezone(&Utc))
        .map_err(|e| format!("bad timestamp '{s}': {e}"))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| Error::io(path, e))
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        kind => Error::Parse { path: path.to_path_buf(), line, msg: format!("{kind:?}") },
    }
}

/// Writes all series, rows interleaved by epoch (channel order breaks ties).
pub fn write_phase_csv(path: &Path, series: &[PhaseSeries], header: &PhaseLogHeader) -> Result<()> {
    let unit = header.phase_unit.unwrap_or(PhaseUnit::Rad);
    let mut out = create(path)?;
    let io = |e| Error::io(path, e);
    let channels = header.channels.iter().map(ChannelId::as_str).collect::<Vec<_>>().join(",");
    writeln!(out, "# station_id={}", header.station_id).map_err(io)?;
    writeln!(out, "# channels={channels}").map_err(io)?;
    writeln!(out, "# phase_unit={unit}").map_err(io)?;
    writeln!(out, "# utc_offset_hours={}", header.utc_offset_hours).map_err(io)?;
    writeln!(out, "# source={}", header.source).map_err(io)?;
    for (k, v) in &header.extra {
        writeln!(out, "# {k}={v}").map_err(io)?;
    }

    let mut rows: Vec<(DateTime<Utc>, usize, &ChannelId, &PhaseSample)> = series
        .iter()
        .enumerate()
        .flat_map(|(i, s)| s.samples().iter().map(move |p| (p.epoch_utc, i, s.channel(), p)))
        .collect();
    rows.sort_by_key(|&(t, i, _, _)| (t, i));

    let mut w = csv::Writer::from_writer(out);
    w.write_record(PHASE_COLUMNS).map_err(|e| csv_err(path, e))?;
    for (t, _, ch, p) in rows {
        let amp = p.amplitude.map(|a| a.to_string()).unwrap_or_default();
        w.write_record([format_epoch(t), ch.to_string(), unit.from_radians(p.phase_rad).to_string(), amp])
            .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(io)?;
    Ok(())
}

fn parse_header_lines(path: &Path) -> Result<(PhaseLogHeader, bool)> {
    let mut header = PhaseLogHeader {
        station_id: String::new(),
        channels: Vec::new(),
        phase_unit: None,
        utc_offset_hours: 0,
        source: String::new(),
        extra: BTreeMap::new(),
    };
    let mut saw_unit = false;
    for (i, line) in open(path)?.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let Some(body) = line.strip_prefix('#') else { break };
        let lineno = i as u64 + 1;
        let Some((k, v)) = body.split_once('=') else { continue };
        let (k, v) = (k.trim(), v.trim());
        let perr = |msg: String| Error::Parse { path: path.to_path_buf(), line: lineno, msg };
        match k {
            "station_id" => header.station_id = v.to_string(),
            "channels" => {
                header.channels = v.split(',').map(str::trim).filter(|c| !c.is_empty()).map(ChannelId::new).collect()
            }
            "phase_unit" => {
                header.phase_unit = Some(v.parse().map_err(|e: Error| perr(e.to_string()))?);
                saw_unit = true;
            }
            "utc_offset_hours" => {
                header.utc_offset_hours = v.parse().map_err(|_| perr(format!("bad utc_offset_hours '{v}'")))?
            }
            "source" => header.source = v.to_string(),
            _ => {
                header.extra.insert(k.to_string(), v.to_string());
            }
        }
    }
    Ok((header, saw_unit))
}

/// Reads a phase log, converting phases to radians.
///
/// Rows are sorted by epoch per channel; a repeated epoch keeps the last row.
/// Files without a `phase_unit` line are rejected unless `unit_override` is
/// given.
pub fn read_phase_csv(path: &Path, unit_override: Option<PhaseUnit>) -> Result<PhaseLog> {
    let (mut header, saw_unit) = parse_header_lines(path)?;
    let unit = match (unit_override, header.phase_unit) {
        (Some(u), _) => u,
        (None, Some(u)) if saw_unit => u,
        _ => return Err(Error::UnitAmbiguity { path: path.to_path_buf() }),
    };

    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(false)
        .from_reader(open(path)?);
    let cols = rdr.headers().map_err(|e| csv_err(path, e))?.clone();
    if cols.iter().collect::<Vec<_>>() != PHASE_COLUMNS {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: rdr.position().line(),
            msg: format!("expected columns {}", PHASE_COLUMNS.join(",")),
        });
    }

    let mut per_channel: BTreeMap<ChannelId, BTreeMap<DateTime<Utc>, PhaseSample>> = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let perr = |msg: String| Error::Parse { path: path.to_path_buf(), line, msg };
        let epoch = parse_epoch(&rec[0]).map_err(perr)?;
        let channel = ChannelId::new(&rec[1]);
        if channel.as_str().is_empty() {
            return Err(perr("empty channel".into()));
        }
        let phase: f64 = rec[2].parse().map_err(|_| perr(format!("bad phase '{}'", &rec[2])))?;
        if !phase.is_finite() {
            return Err(perr(format!("non-finite phase '{}'", &rec[2])));
        }
        let amplitude = match &rec[3] {
            "" => None,
            a => Some(a.parse::<f64>().map_err(|_| perr(format!("bad amplitude '{a}'")))?),
        };
        let sample = PhaseSample { epoch_utc: epoch, phase_rad: unit.to_radians(phase), amplitude };
        per_channel.entry(channel).or_default().insert(epoch, sample);
    }

    for ch in per_channel.keys() {
        if !header.channels.contains(ch) {
            header.channels.push(ch.clone());
        }
    }
    let mut series = Vec::with_capacity(header.channels.len());
    for ch in &header.channels {
        let samples = per_channel.remove(ch).map(|m| m.into_values().collect()).unwrap_or_default();
        series.push(PhaseSeries::new(ch.clone(), samples)?);
    }
    header.phase_unit = Some(unit);
    Ok(PhaseLog { header, series })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelFileRow {
    #[serde(serialize_with = "ser_epoch", deserialize_with = "de_epoch")]
    pub epoch_utc: DateTime<Utc>,
    pub channel: ChannelId,
    pub phase_rad: f64,
    #[serde(with = "score")]
    pub z_score: f64,
    pub is_skywave: bool,
    pub mu_day: f64,
    pub sigma_day: f64,
}

fn ser_epoch<S: serde::Serializer>(t: &DateTime<Utc>, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&format_epoch(*t))
}

fn de_epoch<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<DateTime<Utc>, D::Error> {
    let s = String::deserialize(d)?;
    parse_epoch(&s).map_err(serde::de::Error::custom)
}

/// Z-scores are +∞ for deviations from a zero-spread pool; JSON has no
/// infinity, so it is spelled `"inf"`.
mod score {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_str("inf")
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) => t.trim().parse().map_err(serde::de::Error::custom),
        }
    }
}

impl From<&LabelRecord> for LabelFileRow {
    fn from(r: &LabelRecord) -> Self {
        LabelFileRow {
            epoch_utc: r.epoch_utc,
            channel: r.channel.clone(),
            phase_rad: r.phase_rad,
            z_score: r.z_score,
            is_skywave: r.is_skywave,
            mu_day: r.stats.mu_day,
            sigma_day: r.stats.sigma_day,
        }
    }
}

impl LabelFileRow {
    /// Rebuilds a record; the pool size is not stored in label files.
    pub fn to_record(&self) -> LabelRecord {
        LabelRecord {
            epoch_utc: self.epoch_utc,
            channel: self.channel.clone(),
            phase_rad: self.phase_rad,
            z_score: self.z_score,
            is_skywave: self.is_skywave,
            stats: DaytimeStats { mu_day: self.mu_day, sigma_day: self.sigma_day, n: 0 },
        }
    }
}

const LABEL_COLUMNS: [&str; 7] = ["epoch_utc", "channel", "phase_rad", "z_score", "is_skywave", "mu_day", "sigma_day"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelFormat {
    Csv,
    Jsonl,
}

impl LabelFormat {
    /// `.jsonl` / `.ndjson` select JSON lines; anything else is CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("jsonl") | Some("ndjson") => LabelFormat::Jsonl,
            _ => LabelFormat::Csv,
        }
    }
}

pub fn write_labels(path: &Path, records: &[LabelRecord], format: LabelFormat) -> Result<()> {
    let rows = records.iter().map(LabelFileRow::from);
    match format {
        LabelFormat::Csv => {
            let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(create(path)?);
            w.write_record(LABEL_COLUMNS).map_err(|e| csv_err(path, e))?;
            for row in rows {
                w.serialize(row).map_err(|e| csv_err(path, e))?;
            }
            w.flush().map_err(|e| Error::io(path, e))?;
        }
        LabelFormat::Jsonl => {
            let mut out = create(path)?;
            for row in rows {
                serde_json::to_writer(&mut out, &row).map_err(|e| Error::io(path, e.into()))?;
                out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
            }
            out.flush().map_err(|e| Error::io(path, e))?;
        }
    }
    Ok(())
}

pub fn read_labels(path: &Path, format: LabelFormat) -> Result<Vec<LabelFileRow>> {
    match format {
        LabelFormat::Csv => {
            let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(open(path)?);
            rdr.deserialize().map(|r| r.map_err(|e| csv_err(path, e))).collect()
        }
        LabelFormat::Jsonl => {
            let mut rows = Vec::new();
            for (i, line) in open(path)?.lines().enumerate() {
                let line = line.map_err(|e| Error::io(path, e))?;
                if line.trim().is_empty() {
                    continue;
                }
                rows.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
                    path: path.to_path_buf(),
                    line: i as u64 + 1,
                    msg: e.to_string(),
                })?);
            }
            Ok(rows)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IqMetadata {
    pub sample_rate_hz: f64,
    pub center_freq_hz: f64,
    pub start_epoch_utc: String,
    pub format: String,
}

/// Sidecar path used when none is given: `<iq path>.json`.
pub fn default_meta_path(iq_path: &Path) -> PathBuf {
    let mut s = iq_path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

pub fn write_iq(iq_path: &Path, meta_path: &Path, buf: &IqBuffer, center_freq_hz: f64) -> Result<()> {
    let mut out = create(iq_path)?;
    for z in buf.samples() {
        out.write_all(&(z.re as f32).to_le_bytes()).map_err(|e| Error::io(iq_path, e))?;
        out.write_all(&(z.im as f32).to_le_bytes()).map_err(|e| Error::io(iq_path, e))?;
    }
    out.flush().map_err(|e| Error::io(iq_path, e))?;
    let meta = IqMetadata {
        sample_rate_hz: buf.sample_rate_hz(),
        center_freq_hz,
        start_epoch_utc: format_epoch(buf.start_epoch_utc()),
        format: IQ_FORMAT.into(),
    };
    let json = serde_json::to_string_pretty(&meta).expect("metadata serializes");
    std::fs::write(meta_path, json + "\n").map_err(|e| Error::io(meta_path, e))
}

pub fn read_iq(iq_path: &Path, meta_path: &Path) -> Result<(IqBuffer, IqMetadata)> {
    let text = std::fs::read_to_string(meta_path).map_err(|e| Error::io(meta_path, e))?;
    let meta: IqMetadata = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: meta_path.to_path_buf(),
        line: e.line() as u64,
        msg: e.to_string(),
    })?;
    let perr = |msg: String| Error::Parse { path: meta_path.to_path_buf(), line: 0, msg };
    if meta.format != IQ_FORMAT {
        return Err(perr(format!("unsupported IQ format '{}', expected '{IQ_FORMAT}'", meta.format)));
    }
    let start = parse_epoch(&meta.start_epoch_utc).map_err(perr)?;

    let mut bytes = Vec::new();
    open(iq_path)?.read_to_end(&mut bytes).map_err(|e| Error::io(iq_path, e))?;
    if bytes.len() % 8 != 0 {
        return Err(Error::Parse {
            path: iq_path.to_path_buf(),
            line: 0,
            msg: format!("length {} is not a whole number of f32 IQ pairs", bytes.len()),
        });
    }
    let f = |b: &[u8]| f64::from(f32::from_le_bytes([b[0], b[1], b[2], b[3]]));
    let samples = bytes.chunks_exact(8).map(|c| Complex64::new(f(&c[..4]), f(&c[4..]))).collect();
    let buf = IqBuffer::new(samples, meta.sample_rate_hz, start)?;
    Ok((buf, meta))
}
