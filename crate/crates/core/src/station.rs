//! Ground-station endpoint. Decodes downlinked frames, tracks the spacecraft's
//! reported state and sequence gaps, and periodically turns the received event
//! stream into an event frame and a reconstructed intensity image.
//!
//! Snapshots are scheduled on spacecraft time, not arrival time: a snapshot at
//! `T` is taken as soon as a message stamped at or after `T` has been ingested.
//! Messages leave the spacecraft in time order, so every event before `T` that
//! was not lost is in hand by then. Outputs therefore depend only on the byte
//! sequence received, and replaying a capture reproduces them exactly.

use std::collections::BTreeSet;
use std::fs::{self, File, OpenOptions};
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::accumulate::{accumulate, EventFrame};
use crate::error::{Error, Result};
use crate::event::{sort_canonical, Event};
use crate::image::GrayImage;
use crate::link::{decode, DecodeErrorKind, Message, Payload};
use crate::monitor::{LinkState, BITS_PER_EVENT};
use crate::reconstruct::{tonemap, Integrator, LogImage, ReconstructConfig};

/// Everything the ground needs to know to process a capture; persisted as
/// `station.json` next to `capture.evl`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StationConfig {
    pub width: u32,
    pub height: u32,
    pub event_frame_window_us: u64,
    pub snapshot_interval_us: u64,
    pub reconstruct: ReconstructConfig,
    /// Uniform starting log intensity of the reconstruction.
    pub init_log_level: f64,
    #[serde(default)]
    pub write_png: bool,
}

impl StationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::config("station.width", "width and height must be >= 1"));
        }
        if self.event_frame_window_us == 0 {
            return Err(Error::config("event_frame_window_us", "must be > 0"));
        }
        if self.snapshot_interval_us == 0 {
            return Err(Error::config("snapshot_interval_us", "must be > 0"));
        }
        if !self.init_log_level.is_finite() {
            return Err(Error::config("station.init_log_level", "must be finite"));
        }
        self.reconstruct.validate()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = fs::read_to_string(path.as_ref()).map_err(|e| Error::io(&path, e))?;
        let cfg: StationConfig = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        fs::write(path.as_ref(), text).map_err(|e| Error::io(path, e))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ErrorCounters {
    pub truncated: u64,
    pub bad_magic: u64,
    pub crc: u64,
    pub unknown_type: u64,
    pub malformed: u64,
}

impl ErrorCounters {
    fn bump(&mut self, kind: DecodeErrorKind) {
        match kind {
            DecodeErrorKind::Truncated => self.truncated += 1,
            DecodeErrorKind::BadMagic => self.bad_magic += 1,
            DecodeErrorKind::Crc => self.crc += 1,
            DecodeErrorKind::UnknownType => self.unknown_type += 1,
            DecodeErrorKind::Malformed => self.malformed += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.truncated + self.bad_magic + self.crc + self.unknown_type + self.malformed
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Heartbeat {
    pub state: LinkState,
    pub rate_bps: u32,
    pub t: u64,
}

/// Outcome of ingesting one frame.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Ingested {
    Heartbeat(LinkState),
    Events(usize),
    Duplicate(u32),
    Rejected(DecodeErrorKind),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MetricsRow {
    pub t_us: u64,
    pub events: u64,
    pub rate_bps: u64,
    pub crc_errors: u64,
    pub gaps: u64,
    pub duplicates: u64,
}

impl MetricsRow {
    pub const CSV_HEADER: &'static str = "t_us,events,rate_bps,crc_errors,gaps,duplicates";

    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.t_us, self.events, self.rate_bps, self.crc_errors, self.gaps, self.duplicates
        )
    }
}

#[derive(Clone, Debug)]
pub struct Snapshot {
    pub t: u64,
    pub event_frame: EventFrame,
    pub event_image: GrayImage,
    pub reconstruction: LogImage,
    pub recon_image: GrayImage,
    pub metrics: MetricsRow,
}

#[derive(Clone, Debug)]
pub struct StationState {
    config: StationConfig,
    last_heartbeat: Option<Heartbeat>,
    errors: ErrorCounters,
    duplicates: u64,
    next_seq: u32,
    missing: BTreeSet<u32>,
    /// Received events still inside some future event-frame window.
    buffer: Vec<Event>,
    /// Received events not yet integrated into the reconstruction.
    pending: Vec<Event>,
    integrator: Integrator,
    events_received: u64,
    watermark: u64,
    last_snapshot: u64,
    last_arrival: u64,
}

impl StationState {
    pub fn new(config: StationConfig) -> Result<Self> {
        config.validate()?;
        let init = LogImage::uniform(config.width, config.height, 0, config.init_log_level);
        let integrator = Integrator::new(init, &config.reconstruct)?;
        Ok(StationState {
            config,
            last_heartbeat: None,
            errors: ErrorCounters::default(),
            duplicates: 0,
            next_seq: 0,
            missing: BTreeSet::new(),
            buffer: Vec::new(),
            pending: Vec::new(),
            integrator,
            events_received: 0,
            watermark: 0,
            last_snapshot: 0,
            last_arrival: 0,
        })
    }

    pub fn config(&self) -> &StationConfig {
        &self.config
    }

    pub fn last_heartbeat(&self) -> Option<Heartbeat> {
        self.last_heartbeat
    }

    pub fn errors(&self) -> ErrorCounters {
        self.errors
    }

    pub fn duplicates(&self) -> u64 {
        self.duplicates
    }

    /// Sequence numbers skipped and not (yet) received.
    pub fn gaps(&self) -> &BTreeSet<u32> {
        &self.missing
    }

    pub fn events_received(&self) -> u64 {
        self.events_received
    }

    /// Buffered events awaiting future event frames.
    pub fn buffered_events(&self) -> &[Event] {
        &self.buffer
    }

    pub fn watermark(&self) -> u64 {
        self.watermark
    }

    pub fn last_arrival(&self) -> u64 {
        self.last_arrival
    }

    pub fn reconstruction(&self) -> &LogImage {
        self.integrator.image()
    }

    /// Consumes one frame. Never fails: bad input only moves counters.
    pub fn ingest(&mut self, raw: &[u8], t_arrive: u64) -> Ingested {
        self.last_arrival = self.last_arrival.max(t_arrive);
        match decode(raw) {
            Ok(msg) => self.accept(msg),
            Err(e) => {
                self.errors.bump(e.kind());
                Ingested::Rejected(e.kind())
            }
        }
    }

    /// Counts a decode failure found while splitting a capture stream.
    pub fn record_error(&mut self, kind: DecodeErrorKind) {
        self.errors.bump(kind);
    }

    /// Accepts an already-decoded message.
    pub fn accept(&mut self, msg: Message) -> Ingested {
        let seq = msg.seq;
        if seq >= self.next_seq {
            self.missing.extend(self.next_seq..seq);
            self.next_seq = seq.saturating_add(1);
        } else if !self.missing.remove(&seq) {
            self.duplicates += 1;
            return Ingested::Duplicate(seq);
        }
        self.watermark = self.watermark.max(msg.latest_time());
        match msg.payload {
            Payload::Heartbeat { state, rate_bps, t } => {
                self.last_heartbeat = Some(Heartbeat { state, rate_bps, t });
                Ingested::Heartbeat(state)
            }
            Payload::Events { events, .. } => {
                let n = events.len();
                self.events_received += n as u64;
                insert_sorted(&mut self.buffer, &events);
                insert_sorted(&mut self.pending, &events);
                Ingested::Events(n)
            }
        }
    }

    /// Time of the next scheduled snapshot.
    pub fn next_snapshot_time(&self) -> u64 {
        self.last_snapshot + self.config.snapshot_interval_us
    }

    /// Takes every scheduled snapshot the current watermark allows.
    pub fn due_snapshots(&mut self) -> Vec<Snapshot> {
        let mut out = Vec::new();
        while self.next_snapshot_time() <= self.watermark {
            let t = self.next_snapshot_time();
            out.push(self.snapshot(t).expect("scheduled snapshot times increase"));
        }
        out
    }

    /// Event frame over `[t - window, t)`, reconstruction of all events up to
    /// `t`, and the metrics row.
    pub fn snapshot(&mut self, t: u64) -> Result<Snapshot> {
        if t < self.last_snapshot {
            return Err(Error::Ordering(format!(
                "snapshot at {t} us precedes previous snapshot at {} us",
                self.last_snapshot
            )));
        }
        let window = self.config.event_frame_window_us;
        let t0 = t.saturating_sub(window);
        let frame = accumulate(&self.buffer, self.config.width, self.config.height, t0, t.max(t0 + 1))?;

        let split = self.pending.partition_point(|e| e.t <= t);
        let due: Vec<Event> = self.pending.drain(..split).collect();
        self.integrator.integrate(&due, t)?;
        self.buffer.retain(|e| e.t >= t0);
        self.last_snapshot = t;

        let events = frame.total_count();
        let metrics = MetricsRow {
            t_us: t,
            events,
            rate_bps: (events as u128 * BITS_PER_EVENT as u128 * 1_000_000 / window as u128) as u64,
            crc_errors: self.errors.crc,
            gaps: self.missing.len() as u64,
            duplicates: self.duplicates,
        };
        let reconstruction = self.integrator.image().clone();
        Ok(Snapshot {
            t,
            event_image: frame.to_gray(),
            event_frame: frame,
            recon_image: tonemap(&reconstruction),
            reconstruction,
            metrics,
        })
    }
}

fn insert_sorted(dst: &mut Vec<Event>, events: &[Event]) {
    let in_order = match (dst.last(), events.first()) {
        (Some(last), Some(first)) => last.order_key() <= first.order_key(),
        _ => true,
    };
    dst.extend_from_slice(events);
    if !in_order {
        sort_canonical(dst);
    }
}

/// Persists snapshots: `event_frame_<t>.pgm`, `recon_<t>.pgm` (optionally PNG
/// twins) and rows of `station_metrics.csv`.
pub struct SnapshotWriter {
    dir: PathBuf,
    png: bool,
    metrics: File,
}

impl SnapshotWriter {
    pub fn create(dir: impl AsRef<Path>, png: bool) -> Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let path = dir.join("station_metrics.csv");
        let mut metrics = OpenOptions::new()
            .create(true)
            .write(true)
            .truncate(true)
            .open(&path)
            .map_err(|e| Error::io(&path, e))?;
        writeln!(metrics, "{}", MetricsRow::CSV_HEADER).map_err(|e| Error::io(&path, e))?;
        Ok(SnapshotWriter { dir, png, metrics })
    }

    pub fn write(&mut self, snap: &Snapshot) -> Result<()> {
        let ev = self.dir.join(format!("event_frame_{}.pgm", snap.t));
        snap.event_image.write_pgm(&ev)?;
        let rc = self.dir.join(format!("recon_{}.pgm", snap.t));
        snap.recon_image.write_pgm(&rc)?;
        if self.png {
            snap.event_image.write_png(ev.with_extension("png"))?;
            snap.recon_image.write_png(rc.with_extension("png"))?;
        }
        let mut line = snap.metrics.to_csv();
        line.push('\n');
        self.metrics
            .write_all(line.as_bytes())
            .map_err(|e| Error::io(self.dir.join("station_metrics.csv"), e))
    }
}

/// Offline replay of a capture file through a fresh station.
pub fn replay_capture(capture: &[u8], config: StationConfig, out_dir: Option<&Path>) -> Result<ReplaySummary> {
    let mut station = StationState::new(config)?;
    let mut writer = match out_dir {
        Some(dir) => Some(SnapshotWriter::create(dir, station.config().write_png)?),
        None => None,
    };
    let mut snapshots = 0usize;
    let mut messages = 0usize;
    for item in crate::link::MessageReader::new(capture) {
        match item {
            Ok(msg) => {
                messages += 1;
                station.accept(msg);
            }
            Err(e) => station.record_error(e.kind()),
        }
        for snap in station.due_snapshots() {
            snapshots += 1;
            if let Some(w) = writer.as_mut() {
                w.write(&snap)?;
            }
        }
    }
    Ok(ReplaySummary {
        messages,
        snapshots,
        events: station.events_received(),
        errors: station.errors(),
        gaps: station.gaps().len() as u64,
        duplicates: station.duplicates(),
    })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReplaySummary {
    pub messages: usize,
    pub snapshots: usize,
    pub events: u64,
    pub errors: ErrorCounters,
    pub gaps: u64,
    pub duplicates: u64,
}

impl std::fmt::Display for ReplaySummary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "messages={} snapshots={} events={} decode_errors={} (crc={}) gaps={} duplicates={}",
            self.messages, self.snapshots, self.events, self.errors.total(), self.errors.crc, self.gaps, self.duplicates
        )
    }
}
