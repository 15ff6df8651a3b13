use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn evssa(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_evssa")).args(args).output().unwrap()
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("scenario.json");
    fs::write(&path, body).unwrap();
    path.to_string_lossy().into_owned()
}

const SHORT: &str = r#"{"preset": "fast_motion", "duration_us": 700000, "write_png": true}"#;

#[test]
fn version_prints_crate_version() {
    let out = evssa(&["version"]);
    assert!(out.status.success());
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), format!("evssa {}", env!("CARGO_PKG_VERSION")));
}

#[test]
fn run_writes_all_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SHORT);
    let out_dir = tmp.path().join("out");
    let out = evssa(&["run", "--config", &cfg, "--out", out_dir.to_str().unwrap(), "--seed", "3"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for name in [
        "capture.evl",
        "station_metrics.csv",
        "run_metrics.csv",
        "monitor_log.csv",
        "station.json",
        "run_summary.json",
        "event_frame_700000.pgm",
        "recon_700000.pgm",
        "event_frame_700000.png",
        "aps_350000.pgm",
    ] {
        assert!(out_dir.join(name).is_file(), "missing {name}");
    }
    let log = fs::read_to_string(out_dir.join("monitor_log.csv")).unwrap();
    assert!(log.starts_with("t_us,state,rate_bps\n0,normal,0\n"));
    assert!(log.contains(",abnormal,"));
}

#[test]
fn decode_replays_capture_byte_for_byte() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SHORT);
    let live = tmp.path().join("live");
    let replay = tmp.path().join("replay");
    assert!(evssa(&["run", "--config", &cfg, "--out", live.to_str().unwrap()]).status.success());
    let capture = live.join("capture.evl");
    let out = evssa(&["decode", "--in", capture.to_str().unwrap(), "--out", replay.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let mut compared = 0;
    for entry in fs::read_dir(&replay).unwrap() {
        let name = entry.unwrap().file_name();
        let name = name.to_string_lossy();
        if name == "station.json" {
            continue;
        }
        assert_eq!(fs::read(replay.join(&*name)).unwrap(), fs::read(live.join(&*name)).unwrap(), "{name}");
        compared += 1;
    }
    assert!(compared > 10);
}

#[test]
fn preset_flag_overrides_config() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), r#"{"preset": "hdr", "duration_us": 200000}"#);
    let out_dir = tmp.path().join("out");
    let out = evssa(&["run", "--config", &cfg, "--out", out_dir.to_str().unwrap(), "--preset", "extreme_hdr"]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("extreme_hdr:"));
}

#[test]
fn invalid_config_names_the_field() {
    let tmp = tempfile::tempdir().unwrap();
    let cases = [
        (r#"{"preset": "hdr", "sensor": {"contrast_threshold": -0.1}}"#, "sensor.contrast_threshold"),
        (r#"{"preset": "hdr", "durration_us": 5}"#, "durration_us"),
        (r#"{"preset": "hdr", "monitor": {"window_us": 0}}"#, "monitor.window_us"),
        (r#"{"duration_us": 1000000}"#, "scene"),
    ];
    for (body, field) in cases {
        let cfg = write_config(tmp.path(), body);
        let out = evssa(&["run", "--config", &cfg, "--out", tmp.path().join("x").to_str().unwrap()]);
        assert!(!out.status.success(), "{body}");
        let err = String::from_utf8_lossy(&out.stderr);
        assert!(err.contains(field), "{body}: {err}");
    }
}

#[test]
fn unknown_preset_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SHORT);
    let out = evssa(&["run", "--config", &cfg, "--preset", "noon"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("noon"));
}
