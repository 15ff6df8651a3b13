//! End-to-end co-simulation of the downlink workflow on one virtual clock.
//!
//! Spacecraft side, once per sample interval: render, sample the DVS, add
//! background activity, apply the readout cap, update the bandwidth monitor.
//! In Normal state only heartbeats are sent; in Abnormal state the event stream
//! is packetized and downlinked. The ground station ingests deliveries in
//! arrival order and writes snapshots. The two sides exchange nothing but
//! encoded frames.

use std::collections::VecDeque;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::event::{sort_canonical, Event};
use crate::image::GrayImage;
use crate::link::{encode, packetize, Channel, ChannelConfig, Message};
use crate::metrics::{aps_bandwidth, dvs_bandwidth_default, energy_report, EnergyReport, PowerModel};
use crate::monitor::{LinkState, MonitorConfig, MonitorState};
use crate::reconstruct::{InitMode, ReconstructConfig};
use crate::scene::{IlluminancePreset, Scene, SceneConfig};
use crate::sensor::{aps_capture_scene, ApsConfig, DvsConfig, SensorState};
use crate::station::{SnapshotWriter, StationConfig, StationState};

fn default_duration() -> u64 {
    2_000_000
}
fn default_sample_interval() -> u64 {
    1_000
}
fn default_snapshot_interval() -> u64 {
    100_000
}
fn default_event_frame_window() -> u64 {
    10_000
}
fn default_heartbeat_interval() -> u64 {
    1_000_000
}

/// Scenario file contents (JSON). Either `scene` or `preset` must be given;
/// an explicit scene takes precedence.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub preset: Option<IlluminancePreset>,
    #[serde(default)]
    pub scene: Option<SceneConfig>,
    #[serde(default)]
    pub sensor: DvsConfig,
    #[serde(default)]
    pub monitor: MonitorConfig,
    #[serde(default)]
    pub reconstruct: ReconstructConfig,
    #[serde(default)]
    pub channel: ChannelConfig,
    #[serde(default)]
    pub aps: ApsConfig,
    #[serde(default)]
    pub power: PowerModel,
    #[serde(default = "default_duration")]
    pub duration_us: u64,
    #[serde(default = "default_sample_interval")]
    pub sensor_sample_interval_us: u64,
    #[serde(default = "default_snapshot_interval")]
    pub snapshot_interval_us: u64,
    #[serde(default = "default_event_frame_window")]
    pub event_frame_window_us: u64,
    #[serde(default = "default_heartbeat_interval")]
    pub heartbeat_interval_us: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub write_png: bool,
}

impl ScenarioConfig {
    pub fn for_preset(preset: IlluminancePreset) -> Self {
        ScenarioConfig {
            preset: Some(preset),
            scene: None,
            sensor: DvsConfig::default(),
            monitor: MonitorConfig::default(),
            reconstruct: ReconstructConfig::default(),
            channel: ChannelConfig::default(),
            aps: ApsConfig::default(),
            power: PowerModel::default(),
            duration_us: default_duration(),
            sensor_sample_interval_us: default_sample_interval(),
            snapshot_interval_us: default_snapshot_interval(),
            event_frame_window_us: default_event_frame_window(),
            heartbeat_interval_us: default_heartbeat_interval(),
            output_dir: None,
            write_png: false,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = fs::read_to_string(path.as_ref()).map_err(|e| Error::io(&path, e))?;
        Self::from_json(&text)
    }

    /// Switches to a preset, replacing any explicit scene.
    pub fn with_preset(mut self, preset: IlluminancePreset) -> Self {
        self.preset = Some(preset);
        self.scene = None;
        self
    }

    /// Seeds the scene texture, sensor noise and channel loss from one value.
    pub fn with_seed(mut self, seed: u64) -> Self {
        let mut scene = self.scene_config().ok();
        if let Some(s) = scene.as_mut() {
            s.seed = seed;
        }
        self.scene = scene;
        self.sensor.seed = seed;
        self.channel.seed = seed ^ 0x5EED_C4A1;
        self
    }

    pub fn scene_config(&self) -> Result<SceneConfig> {
        match (&self.scene, self.preset) {
            (Some(scene), _) => Ok(scene.clone()),
            (None, Some(p)) => Ok(SceneConfig::preset(p)),
            (None, None) => Err(Error::config("scene", "either `scene` or `preset` must be set")),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let scene = self.scene_config()?;
        scene.validate()?;
        self.sensor.validate()?;
        self.monitor.validate()?;
        self.reconstruct.validate()?;
        self.channel.validate()?;
        if scene.width != self.sensor.width || scene.height != self.sensor.height {
            return Err(Error::config(
                "sensor.width",
                format!(
                    "sensor is {}x{} but scene is {}x{}",
                    self.sensor.width, self.sensor.height, scene.width, scene.height
                ),
            ));
        }
        if self.reconstruct.contrast_threshold != self.sensor.contrast_threshold {
            return Err(Error::config(
                "reconstruct.contrast_threshold",
                "must equal sensor.contrast_threshold",
            ));
        }
        if self.reconstruct.init != InitMode::MidGray {
            return Err(Error::config(
                "reconstruct.init",
                "the ground station only sees event differences; use mid_gray",
            ));
        }
        if self.sensor_sample_interval_us == 0 {
            return Err(Error::config("sensor_sample_interval_us", "must be >= 1"));
        }
        if self.duration_us < self.sensor_sample_interval_us {
            return Err(Error::config("duration_us", "must cover at least one sample interval"));
        }
        if self.snapshot_interval_us == 0 {
            return Err(Error::config("snapshot_interval_us", "must be > 0"));
        }
        if self.event_frame_window_us == 0 {
            return Err(Error::config("event_frame_window_us", "must be > 0"));
        }
        if self.heartbeat_interval_us == 0 {
            return Err(Error::config("heartbeat_interval_us", "must be > 0"));
        }
        if !(self.aps.gain > 0.0 && self.aps.fps > 0.0) {
            return Err(Error::config("aps", "gain and fps must be > 0"));
        }
        Ok(())
    }

    pub fn station_config<T: crate::num::Real>(&self, scene: &Scene<T>) -> StationConfig {
        StationConfig {
            width: self.sensor.width,
            height: self.sensor.height,
            event_frame_window_us: self.event_frame_window_us,
            snapshot_interval_us: self.snapshot_interval_us,
            reconstruct: self.reconstruct.clone(),
            init_log_level: scene.background_level().ln(),
            write_png: self.write_png,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Transition {
    pub t_us: u64,
    pub state: LinkState,
    pub rate_bps: f64,
}

/// Totals of one run. Written as `run_summary.json`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunReport {
    pub preset: Option<IlluminancePreset>,
    pub duration_us: u64,
    pub samples: u64,
    pub signal_events: u64,
    pub noise_events: u64,
    pub dropped_events: u64,
    pub kept_events: u64,
    /// Events emitted (before the cap) in Abnormal sample intervals.
    pub abnormal_emitted_events: u64,
    pub abnormal_dropped_events: u64,
    pub downlinked_events: u64,
    pub delivered_events: u64,
    pub event_packets_sent: u64,
    pub event_packets_while_normal: u64,
    pub heartbeats_sent: u64,
    pub messages_lost: u64,
    pub bytes_sent: u64,
    pub transitions: Vec<Transition>,
    pub motion_onset_us: Option<u64>,
    pub first_abnormal_us: Option<u64>,
    /// Peak of the monitor's sliding-window rate.
    pub peak_window_bps: f64,
    /// Peak downlinked event bandwidth over consecutive snapshot intervals.
    pub peak_downlink_interval_bps: f64,
    pub sensor_bandwidth_bps: f64,
    pub downlink_event_bandwidth_bps: f64,
    pub mean_heartbeat_rate_bps: f64,
    pub aps_bandwidth_bps: f64,
    pub aps_exposure_us: u64,
    pub dvs_energy_j: f64,
    pub aps_energy_j: f64,
    pub aps_to_dvs_power_ratio: f64,
    pub snapshots: u64,
    pub station_crc_errors: u64,
    pub station_gaps: u64,
    pub station_duplicates: u64,
}

/// Files a run produces under its output directory.
struct Artifacts {
    dir: PathBuf,
    capture: fs::File,
    monitor_log: fs::File,
    run_metrics: fs::File,
    snapshots: SnapshotWriter,
}

fn create(path: &Path) -> Result<fs::File> {
    fs::File::create(path).map_err(|e| Error::io(path, e))
}

fn append(file: &mut fs::File, path: &Path, bytes: &[u8]) -> Result<()> {
    file.write_all(bytes).map_err(|e| Error::io(path, e))
}

impl Artifacts {
    fn create(dir: &Path, png: bool) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut monitor_log = create(&dir.join("monitor_log.csv"))?;
        append(&mut monitor_log, dir, b"t_us,state,rate_bps\n")?;
        let mut run_metrics = create(&dir.join("run_metrics.csv"))?;
        append(
            &mut run_metrics,
            dir,
            b"t_us,state,signal_events,noise_events,dropped_events,downlinked_events,dvs_bps,downlink_bps,aps_bps\n",
        )?;
        Ok(Artifacts {
            dir: dir.to_path_buf(),
            capture: create(&dir.join("capture.evl"))?,
            monitor_log,
            run_metrics,
            snapshots: SnapshotWriter::create(dir, png)?,
        })
    }
}

#[derive(Default)]
struct IntervalTally {
    signal: u64,
    noise: u64,
    dropped: u64,
    downlinked: u64,
}

/// Runs a scenario; writes artifacts when `out_dir` is given.
pub fn run_scenario(cfg: &ScenarioConfig, out_dir: Option<&Path>) -> Result<RunReport> {
    cfg.validate()?;
    let scene_cfg = cfg.scene_config()?;
    let scene: Scene = Scene::new(&scene_cfg)?;
    let station_cfg = cfg.station_config(&scene);

    let mut artifacts = match out_dir {
        Some(dir) => {
            let a = Artifacts::create(dir, cfg.write_png)?;
            station_cfg.save(dir.join("station.json"))?;
            Some(a)
        }
        None => None,
    };

    let mut sensor = SensorState::new(&cfg.sensor, &scene.render(0))?;
    let mut monitor = MonitorState::new(cfg.monitor.clone())?;
    let mut channel = Channel::new(cfg.channel.clone())?;
    let mut station = StationState::new(station_cfg)?;
    let mut in_flight: VecDeque<(u64, Vec<u8>)> = VecDeque::new();

    let motion_onset_us = match scene_cfg.motion.kind {
        crate::scene::MotionKind::Static => None,
        _ => Some(scene_cfg.motion.onset_us),
    };
    let aps_bps = aps_bandwidth(cfg.sensor.width, cfg.sensor.height, cfg.aps.bits_per_pixel, cfg.aps.fps);

    let mut report = RunReport {
        preset: Some(scene_cfg.illuminance_preset),
        duration_us: cfg.duration_us,
        samples: 0,
        signal_events: 0,
        noise_events: 0,
        dropped_events: 0,
        kept_events: 0,
        abnormal_emitted_events: 0,
        abnormal_dropped_events: 0,
        downlinked_events: 0,
        delivered_events: 0,
        event_packets_sent: 0,
        event_packets_while_normal: 0,
        heartbeats_sent: 0,
        messages_lost: 0,
        bytes_sent: 0,
        transitions: Vec::new(),
        motion_onset_us,
        first_abnormal_us: None,
        peak_window_bps: 0.0,
        peak_downlink_interval_bps: 0.0,
        sensor_bandwidth_bps: 0.0,
        downlink_event_bandwidth_bps: 0.0,
        mean_heartbeat_rate_bps: 0.0,
        aps_bandwidth_bps: aps_bps,
        aps_exposure_us: cfg.aps.auto_exposure_us(&scene),
        dvs_energy_j: 0.0,
        aps_energy_j: 0.0,
        aps_to_dvs_power_ratio: 0.0,
        snapshots: 0,
        station_crc_errors: 0,
        station_gaps: 0,
        station_duplicates: 0,
    };
    if let Some(a) = artifacts.as_mut() {
        append(&mut a.monitor_log, &a.dir, b"0,normal,0\n")?;
    }

    let mut seq: u32 = 0;
    let mut heartbeat_rate_sum = 0.0;
    let mut next_heartbeat = 0u64;
    let mut state = LinkState::Normal;
    let mut tally = IntervalTally::default();
    let mut next_interval_end = cfg.snapshot_interval_us;

    let dt = cfg.sensor_sample_interval_us;
    let mut t_prev = 0u64;
    let mut t = dt;
    while t <= cfg.duration_us {
        report.samples += 1;
        let frame = scene.render(t);
        let signal = sensor.sample(&frame, t)?;
        let noise = sensor.inject_noise(t_prev, t)?;
        report.signal_events += signal.len() as u64;
        report.noise_events += noise.len() as u64;
        tally.signal += signal.len() as u64;
        tally.noise += noise.len() as u64;
        let emitted = (signal.len() + noise.len()) as u64;

        let mut merged: Vec<Event> = signal;
        merged.extend(noise);
        sort_canonical(&mut merged);
        let dropped_before = sensor.dropped_event_count();
        let kept = sensor.apply_bandwidth_cap(merged)?;
        let dropped = sensor.dropped_event_count() - dropped_before;
        tally.dropped += dropped;
        report.kept_events += kept.len() as u64;

        let (new_state, rate) = monitor.observe(kept.len() as u64, t)?;
        report.peak_window_bps = report.peak_window_bps.max(rate);
        let changed = new_state != state;
        if changed {
            state = new_state;
            report.transitions.push(Transition {
                t_us: t,
                state,
                rate_bps: rate,
            });
            if state == LinkState::Abnormal && report.first_abnormal_us.is_none() {
                report.first_abnormal_us = Some(t);
            }
            if let Some(a) = artifacts.as_mut() {
                let line = format!("{},{},{:.0}\n", t, state.as_str(), rate);
                append(&mut a.monitor_log, &a.dir, line.as_bytes())?;
            }
        }

        let mut outgoing = Vec::new();
        if state == LinkState::Abnormal {
            report.abnormal_emitted_events += emitted;
            report.abnormal_dropped_events += dropped;
            for (base_t, events) in packetize(&kept) {
                report.downlinked_events += events.len() as u64;
                tally.downlinked += events.len() as u64;
                report.event_packets_sent += 1;
                if monitor.state() != LinkState::Abnormal {
                    report.event_packets_while_normal += 1;
                }
                outgoing.push(Message::events(seq, base_t, events));
                seq = seq.wrapping_add(1);
            }
        }
        if changed || t >= next_heartbeat {
            outgoing.push(Message::heartbeat(seq, state, rate.round().min(u32::MAX as f64) as u32, t));
            seq = seq.wrapping_add(1);
            report.heartbeats_sent += 1;
            heartbeat_rate_sum += rate;
            next_heartbeat = t + cfg.heartbeat_interval_us;
        }
        for msg in outgoing {
            send(&msg, t, &mut channel, &mut in_flight, &mut report)?;
        }

        deliver(&mut in_flight, Some(t), &mut station, &mut artifacts, &mut report)?;

        if t >= next_interval_end || t + dt > cfg.duration_us {
            let span_s = (t - (next_interval_end - cfg.snapshot_interval_us)) as f64 * 1e-6;
            let dvs_bps = dvs_bandwidth_default(tally.signal + tally.noise - tally.dropped, span_s);
            let downlink_bps = dvs_bandwidth_default(tally.downlinked, span_s);
            report.peak_downlink_interval_bps = report.peak_downlink_interval_bps.max(downlink_bps);
            if let Some(a) = artifacts.as_mut() {
                let line = format!(
                    "{},{},{},{},{},{},{:.0},{:.0},{:.0}\n",
                    t,
                    state.as_str(),
                    tally.signal,
                    tally.noise,
                    tally.dropped,
                    tally.downlinked,
                    dvs_bps,
                    downlink_bps,
                    aps_bps
                );
                append(&mut a.run_metrics, &a.dir, line.as_bytes())?;
            }
            tally = IntervalTally::default();
            next_interval_end = t + cfg.snapshot_interval_us;
        }

        t_prev = t;
        t += dt;
    }

    // Closing heartbeat stamps the end of the pass so the ground can take its
    // final snapshot.
    let rate = monitor.rate_bps();
    let closing = Message::heartbeat(seq, state, rate.round().min(u32::MAX as f64) as u32, cfg.duration_us);
    report.heartbeats_sent += 1;
    heartbeat_rate_sum += rate;
    send(&closing, t_prev.max(cfg.duration_us), &mut channel, &mut in_flight, &mut report)?;
    deliver(&mut in_flight, None, &mut station, &mut artifacts, &mut report)?;

    let duration_s = cfg.duration_us as f64 * 1e-6;
    report.dropped_events = sensor.dropped_event_count();
    report.delivered_events = station.events_received();
    report.sensor_bandwidth_bps = dvs_bandwidth_default(report.kept_events, duration_s);
    report.downlink_event_bandwidth_bps = dvs_bandwidth_default(report.delivered_events, duration_s);
    report.mean_heartbeat_rate_bps = heartbeat_rate_sum / report.heartbeats_sent as f64;
    let energy: EnergyReport = energy_report(&cfg.power, duration_s, 1.0, 1.0);
    report.dvs_energy_j = energy.dvs_j;
    report.aps_energy_j = energy.aps_j;
    report.aps_to_dvs_power_ratio = energy.aps_to_dvs_ratio;
    report.station_crc_errors = station.errors().crc;
    report.station_gaps = station.gaps().len() as u64;
    report.station_duplicates = station.duplicates();

    if let Some(a) = artifacts.as_mut() {
        let t_aps = cfg.duration_us / 2;
        let aps = aps_capture_scene(&scene, t_aps, report.aps_exposure_us, cfg.aps.gain);
        let img = GrayImage::from(&aps);
        let path = a.dir.join(format!("aps_{t_aps}.pgm"));
        img.write_pgm(&path)?;
        if cfg.write_png {
            img.write_png(path.with_extension("png"))?;
        }
        let summary = serde_json::to_string_pretty(&report)?;
        fs::write(a.dir.join("run_summary.json"), summary).map_err(|e| Error::io(&a.dir, e))?;
    }
    Ok(report)
}

fn send(
    msg: &Message,
    t: u64,
    channel: &mut Channel,
    in_flight: &mut VecDeque<(u64, Vec<u8>)>,
    report: &mut RunReport,
) -> Result<()> {
    let bytes = encode(msg)?;
    report.bytes_sent += bytes.len() as u64;
    let tx = channel.transmit(bytes.len(), t)?;
    match tx.t_arrive {
        Some(arrive) => in_flight.push_back((arrive, bytes)),
        None => report.messages_lost += 1,
    }
    Ok(())
}

/// Hands the station every frame that has arrived by `now` (all of them when `None`).
fn deliver(
    in_flight: &mut VecDeque<(u64, Vec<u8>)>,
    now: Option<u64>,
    station: &mut StationState,
    artifacts: &mut Option<Artifacts>,
    report: &mut RunReport,
) -> Result<()> {
    while let Some((arrive, _)) = in_flight.front() {
        if now.is_some_and(|n| *arrive > n) {
            break;
        }
        let (arrive, bytes) = in_flight.pop_front().expect("front exists");
        station.ingest(&bytes, arrive);
        if let Some(a) = artifacts.as_mut() {
            append(&mut a.capture, &a.dir, &bytes)?;
        }
        for snap in station.due_snapshots() {
            report.snapshots += 1;
            if let Some(a) = artifacts.as_mut() {
                a.snapshots.write(&snap)?;
            }
        }
    }
    Ok(())
}
