use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use evssa::{replay_capture, run_scenario, IlluminancePreset, ScenarioConfig, StationConfig};

#[derive(Parser)]
#[command(name = "evssa", about = "Event-camera space situational awareness simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write its artifacts.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; overrides `output_dir` in the config.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Replace the configured scene with a named preset.
        #[arg(long)]
        preset: Option<IlluminancePreset>,
        /// Seed for scene texture, sensor noise and channel loss.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Replay a capture through a fresh ground station.
    Decode {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Station settings; defaults to `station.json` next to the capture.
        #[arg(long)]
        station: Option<PathBuf>,
    },
    /// Print the version.
    Version,
}

fn run(config: &Path, out: Option<PathBuf>, preset: Option<IlluminancePreset>, seed: Option<u64>) -> Result<()> {
    let mut cfg = ScenarioConfig::load(config).with_context(|| format!("loading {}", config.display()))?;
    if let Some(p) = preset {
        cfg = cfg.with_preset(p);
    }
    if let Some(s) = seed {
        cfg = cfg.with_seed(s);
    }
    cfg.validate()?;
    let dir = out
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    let start = Instant::now();
    let report = run_scenario(&cfg, Some(&dir))?;
    println!(
        "{}: {} samples, {} events kept ({} dropped), {} downlinked in {} packets, {} heartbeats",
        report.preset.map(|p| p.name()).unwrap_or("custom"),
        report.samples,
        report.kept_events,
        report.dropped_events,
        report.downlinked_events,
        report.event_packets_sent,
        report.heartbeats_sent,
    );
    println!(
        "sensor {:.0} b/s, downlink {:.0} b/s, peak window {:.0} b/s, APS {:.0} b/s, APS/DVS power {:.1}",
        report.sensor_bandwidth_bps,
        report.downlink_event_bandwidth_bps,
        report.peak_window_bps,
        report.aps_bandwidth_bps,
        report.aps_to_dvs_power_ratio,
    );
    println!(
        "{} snapshots written to {} in {:.2} s",
        report.snapshots,
        dir.display(),
        start.elapsed().as_secs_f64()
    );
    Ok(())
}

fn decode(input: &Path, out: &Path, station: Option<PathBuf>) -> Result<()> {
    let station_path = station.unwrap_or_else(|| input.with_file_name("station.json"));
    let config = StationConfig::load(&station_path)
        .with_context(|| format!("loading station settings from {}", station_path.display()))?;
    let capture = std::fs::read(input).with_context(|| format!("reading {}", input.display()))?;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    config.save(out.join("station.json"))?;
    let summary = replay_capture(&capture, config, Some(out))?;
    println!("{summary}");
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Run {
            config,
            out,
            preset,
            seed,
        } => run(&config, out, preset, seed),
        Command::Decode { input, out, station } => decode(&input, out.as_path(), station),
        Command::Version => {
            println!("evssa {}", env!("CARGO_PKG_VERSION"));
            Ok(())
        }
    }
}
