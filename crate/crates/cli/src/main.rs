//! `skylabel`: synthetic MF R-Mode campaigns, tone phase extraction and
//! three-day daytime Z-score skywave labels from the command line.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use chrono::{DateTime, NaiveDate, NaiveTime, Utc};
use clap::{Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;

use skylabel_core::dataio::{
    default_meta_path, format_epoch, read_iq, read_labels, read_phase_csv, write_iq, write_labels,
    write_phase_csv, LabelFormat, PhaseLogHeader, PhaseUnit,
};
use skylabel_core::estimator::{phase_series_from_iq, EstimatorConfig};
use skylabel_core::labeler::{
    combined_verdict, label_series, ChannelId, Detrend, LabelRecord, PreprocessOptions, DEFAULT_THRESHOLD,
};
use skylabel_core::propagation::GeoPoint;
use skylabel_core::sim::{local_midnight_utc, synthesize_campaign, synthesize_iq, SimConfig};
use skylabel_core::solar::{solar_events, window_for_date, WindowPolicy};

#[derive(Parser)]
#[command(name = "skylabel", version, about = "Skywave ground-truth labeling for MF R-Mode CW phase logs")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Sunrise, sunset and the daytime window for one date.
    Sun {
        #[arg(long, allow_hyphen_values = true)]
        lat: f64,
        #[arg(long, allow_hyphen_values = true)]
        lon: f64,
        #[arg(long)]
        date: NaiveDate,
        #[arg(long, default_value_t = 0, allow_hyphen_values = true)]
        utc_offset: i32,
    },
    /// Synthesize a multi-day phase campaign.
    Simulate {
        /// SimConfig JSON; defaults apply to omitted fields.
        #[arg(long)]
        config: Option<PathBuf>,
        /// First local day of the campaign.
        #[arg(long)]
        start: NaiveDate,
        #[arg(long, default_value_t = 3)]
        days: u32,
        #[arg(long)]
        out_phases: PathBuf,
        /// Raw IQ recording from the campaign start; metadata goes to `<path>.json`.
        #[arg(long)]
        out_iq: Option<PathBuf>,
        #[arg(long, default_value_t = 180.0)]
        iq_seconds: f64,
        #[arg(long)]
        out_truth: Option<PathBuf>,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Extract CW tone phases from an IQ recording.
    Phases {
        #[arg(long)]
        iq: PathBuf,
        /// Defaults to `<iq>.json`.
        #[arg(long)]
        meta: Option<PathBuf>,
        /// EstimatorConfig JSON; defaults apply to omitted fields.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Label one local day of a phase log.
    Label {
        #[arg(long)]
        phases: PathBuf,
        #[arg(long)]
        date: NaiveDate,
        #[arg(long, allow_hyphen_values = true)]
        lat: f64,
        #[arg(long, allow_hyphen_values = true)]
        lon: f64,
        #[arg(long, default_value_t = 0, allow_hyphen_values = true)]
        utc_offset: i32,
        #[arg(long, value_enum, default_value_t = WindowArg::Solar)]
        window: WindowArg,
        #[arg(long, default_value = "08:30", value_parser = parse_hhmm)]
        fixed_start: NaiveTime,
        #[arg(long, default_value = "20:00", value_parser = parse_hhmm)]
        fixed_end: NaiveTime,
        #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
        threshold: f64,
        #[arg(long, value_enum, default_value_t = Switch::On)]
        unwrap: Switch,
        #[arg(long, value_enum, default_value_t = DetrendArg::None)]
        detrend: DetrendArg,
        /// Unit for logs that do not declare one.
        #[arg(long)]
        unit: Option<PhaseUnit>,
        /// Per-epoch OR over channels, as CSV.
        #[arg(long)]
        combined_out: Option<PathBuf>,
        /// `.jsonl` selects JSON lines, anything else CSV.
        #[arg(long)]
        out: PathBuf,
    },
    /// Merge a phase log and its labels into one plotting table.
    Plotdata {
        #[arg(long)]
        phases: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        unit: Option<PhaseUnit>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum WindowArg {
    Solar,
    Fixed,
}

#[derive(Clone, Copy, ValueEnum)]
enum Switch {
    On,
    Off,
}

#[derive(Clone, Copy, ValueEnum)]
enum DetrendArg {
    None,
    Linear,
}

fn parse_hhmm(s: &str) -> Result<NaiveTime, String> {
    NaiveTime::parse_from_str(s, "%H:%M").map_err(|e| format!("expected HH:MM: {e}"))
}

enum Failure {
    Usage(String),
    Data(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Data(e)
    }
}

impl From<skylabel_core::Error> for Failure {
    fn from(e: skylabel_core::Error) -> Self {
        Failure::Data(e.into())
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Data(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cmd: Cmd) -> Outcome {
    match cmd {
        Cmd::Sun { lat, lon, date, utc_offset } => sun(point(lat, lon)?, date, offset(utc_offset)?),
        Cmd::Simulate { config, start, days, out_phases, out_iq, iq_seconds, out_truth, seed, threads } => {
            if let Some(n) = threads {
                if n == 0 {
                    return Err(Failure::Usage("--threads must be at least 1".into()));
                }
                rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build_global()
                    .map_err(|e| Failure::Usage(e.to_string()))?;
            }
            let mut cfg: SimConfig = load_json(config.as_deref())?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            simulate(&cfg, start, days, &out_phases, out_iq.as_deref(), iq_seconds, out_truth.as_deref())
        }
        Cmd::Phases { iq, meta, config, out } => {
            let cfg: EstimatorConfig = load_json(config.as_deref())?;
            let meta = meta.unwrap_or_else(|| default_meta_path(&iq));
            phases(&iq, &meta, &cfg, &out)
        }
        Cmd::Label {
            phases,
            date,
            lat,
            lon,
            utc_offset,
            window,
            fixed_start,
            fixed_end,
            threshold,
            unwrap,
            detrend,
            unit,
            combined_out,
            out,
        } => {
            let h = offset(utc_offset)?;
            let policy = match window {
                WindowArg::Solar => WindowPolicy::solar(h),
                WindowArg::Fixed => WindowPolicy::fixed_local(fixed_start, fixed_end, h),
            };
            if !(threshold.is_finite() && threshold > 0.0) {
                return Err(Failure::Usage(format!("--threshold must be > 0, got {threshold}")));
            }
            let opts = PreprocessOptions {
                unwrap: matches!(unwrap, Switch::On),
                detrend: match detrend {
                    DetrendArg::None => Detrend::None,
                    DetrendArg::Linear => Detrend::Linear,
                },
            };
            label(&phases, unit, point(lat, lon)?, date, &policy, threshold, &opts, &out, combined_out.as_deref())
        }
        Cmd::Plotdata { phases, labels, unit, out } => plotdata(&phases, &labels, unit, &out),
    }
}

fn point(lat: f64, lon: f64) -> Result<GeoPoint, Failure> {
    GeoPoint::new(lat, lon).map_err(|e| Failure::Usage(e.to_string()))
}

fn offset(h: i32) -> Result<i32, Failure> {
    if (-12..=14).contains(&h) {
        Ok(h)
    } else {
        Err(Failure::Usage(format!("--utc-offset {h} outside -12..=14")))
    }
}

fn load_json<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T, Failure> {
    let Some(path) = path else { return Ok(T::default()) };
    let text = fs::read_to_string(path).with_context(|| format!("{}", path.display()))?;
    serde_json::from_str(&text)
        .map_err(|e| anyhow!("{}:{}: {e}", path.display(), e.line()))
        .map_err(Failure::Data)
}

fn sun(p: GeoPoint, date: NaiveDate, h: i32) -> Outcome {
    let ev = solar_events(p, date)?;
    let policy = WindowPolicy::solar(h);
    let tz = policy.utc_offset();
    let local = |t: DateTime<Utc>| t.with_timezone(&tz).format("%H:%M:%S").to_string();
    let win = window_for_date(p, date, &policy)?;
    println!("date        {date} (UTC{h:+})");
    println!("sunrise     {} local  {}", local(ev.sunrise_utc), format_epoch(ev.sunrise_utc));
    println!("solar noon  {} local  {}", local(ev.solar_noon_utc), format_epoch(ev.solar_noon_utc));
    println!("sunset      {} local  {}", local(ev.sunset_utc), format_epoch(ev.sunset_utc));
    println!("daytime     {win}");
    Ok(())
}

fn simulate(
    cfg: &SimConfig,
    start: NaiveDate,
    days: u32,
    out_phases: &Path,
    out_iq: Option<&Path>,
    iq_seconds: f64,
    out_truth: Option<&Path>,
) -> Outcome {
    cfg.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    for w in cfg.warnings() {
        eprintln!("warning: {w}");
    }
    let campaign = synthesize_campaign(cfg, start, days)?;
    let channels = campaign.series.iter().map(|s| s.channel().clone()).collect();
    let mut header = PhaseLogHeader::new(cfg.station_id.clone(), channels, PhaseUnit::Rad);
    header.utc_offset_hours = cfg.utc_offset_hours;
    header.source = format!("simulate seed={}", cfg.seed);
    write_phase_csv(out_phases, &campaign.series, &header)?;

    if let Some(path) = out_truth {
        let mut w = BufWriter::new(fs::File::create(path).with_context(|| path.display().to_string())?);
        let mut body = String::from("epoch_utc,alpha,delay_s,eta_cw1,beta_cw1,eta_cw2,beta_cw2\n");
        for t in &campaign.truth {
            body.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                format_epoch(t.epoch_utc),
                t.alpha,
                t.delay_s,
                t.tones[0].eta,
                t.tones[0].beta_rad,
                t.tones[1].eta,
                t.tones[1].beta_rad
            ));
        }
        w.write_all(body.as_bytes()).and_then(|_| w.flush()).with_context(|| path.display().to_string())?;
    }

    if let Some(path) = out_iq {
        if !(iq_seconds.is_finite() && iq_seconds > 0.0) {
            return Err(Failure::Usage(format!("--iq-seconds must be > 0, got {iq_seconds}")));
        }
        let t0 = local_midnight_utc(start, cfg.utc_offset_hours);
        let buf = synthesize_iq(cfg, t0, iq_seconds)?;
        write_iq(path, &default_meta_path(path), &buf, cfg.carrier_hz)?;
    }
    Ok(())
}

fn phases(iq: &Path, meta: &Path, cfg: &EstimatorConfig, out: &Path) -> Outcome {
    cfg.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    let (buf, _) = read_iq(iq, meta)?;
    let tracks = phase_series_from_iq(std::slice::from_ref(&buf), cfg)?;
    let mut series = Vec::with_capacity(tracks.len());
    for t in &tracks {
        for e in t.missing_epochs() {
            eprintln!("warning: {}: no IQ coverage at {}", t.channel, format_epoch(e));
        }
        series.push(t.to_phase_series()?);
    }
    let channels = tracks.iter().map(|t| t.channel.clone()).collect();
    let mut header = PhaseLogHeader::new(cfg.station_id.clone(), channels, PhaseUnit::Rad);
    header.utc_offset_hours = cfg.utc_offset_hours;
    header.source = format!("phases {}", iq.display());
    header.extra.insert("integration_seconds".into(), cfg.integration_seconds.to_string());
    header.extra.insert("epoch_spacing_seconds".into(), cfg.epoch_spacing_seconds.to_string());
    header.extra.insert(
        "tone_offsets_hz".into(),
        cfg.tone_offsets_hz.iter().map(f64::to_string).collect::<Vec<_>>().join(";"),
    );
    write_phase_csv(out, &series, &header)?;
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn label(
    phases: &Path,
    unit: Option<PhaseUnit>,
    p: GeoPoint,
    date: NaiveDate,
    policy: &WindowPolicy,
    threshold: f64,
    opts: &PreprocessOptions,
    out: &Path,
    combined_out: Option<&Path>,
) -> Outcome {
    let log = read_phase_csv(phases, unit)?;
    let mut per_channel = Vec::new();
    for s in &log.series {
        let recs = label_series(s, p, date, policy, threshold, opts)
            .with_context(|| format!("{}: channel {}", phases.display(), s.channel()))?;
        per_channel.push(recs);
    }
    let order: BTreeMap<&ChannelId, usize> = log.header.channels.iter().enumerate().map(|(i, c)| (c, i)).collect();
    let mut all: Vec<LabelRecord> = per_channel.iter().flatten().cloned().collect();
    all.sort_by_key(|r| (r.epoch_utc, order.get(&r.channel).copied().unwrap_or(usize::MAX)));
    write_labels(out, &all, LabelFormat::from_path(out))?;

    let hits = all.iter().filter(|r| r.is_skywave).count();
    eprintln!("{}: {hits} of {} epoch-channel labels flagged skywave", date, all.len());

    if let Some(path) = combined_out {
        let mut body = String::from("epoch_utc,is_skywave\n");
        for (t, v) in combined_verdict(per_channel.iter().map(Vec::as_slice)) {
            body.push_str(&format!("{},{v}\n", format_epoch(t)));
        }
        fs::write(path, body).with_context(|| path.display().to_string())?;
    }
    Ok(())
}

fn plotdata(phases: &Path, labels: &Path, unit: Option<PhaseUnit>, out: &Path) -> Outcome {
    let log = read_phase_csv(phases, unit)?;
    let rows = read_labels(labels, LabelFormat::from_path(labels))?;
    let by_key: BTreeMap<(DateTime<Utc>, &str), _> =
        rows.iter().map(|r| ((r.epoch_utc, r.channel.as_str()), r)).collect();

    let mut lines = Vec::new();
    for s in &log.series {
        for x in s.samples() {
            lines.push((x.epoch_utc, s.channel().clone(), x.phase_rad, by_key.get(&(x.epoch_utc, s.channel().as_str()))));
        }
    }
    lines.sort_by(|a, b| (a.0, &a.1).cmp(&(b.0, &b.1)));

    let mut body = String::from("epoch_utc,channel,phase_rad,phase_preprocessed_rad,z_score,is_skywave\n");
    for (t, ch, phase, lab) in lines {
        let (pre, z, hit) = match lab {
            Some(r) => {
                let z = if r.z_score.is_infinite() { "inf".to_string() } else { r.z_score.to_string() };
                (r.phase_rad.to_string(), z, r.is_skywave.to_string())
            }
            None => (String::new(), String::new(), String::new()),
        };
        body.push_str(&format!("{},{ch},{phase},{pre},{z},{hit}\n", format_epoch(t)));
    }
    fs::write(out, body).with_context(|| out.display().to_string())?;
    Ok(())
}
