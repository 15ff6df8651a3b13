use evssa::event::{is_time_sorted, sort_canonical};
use evssa::link::{encode, MessageReader};
use evssa::scene::{MotionProfile, Rect};
use evssa::sensor::apply_bandwidth_cap;
use evssa::{
    run_scenario, DvsConfig, Event, Frame, IlluminancePreset, LinkState, Message, Polarity, ScenarioConfig, Scene,
    SceneConfig, SensorState,
};
use proptest::prelude::*;

fn small_scene(vx: f64, seed: u64) -> SceneConfig {
    let mut cfg = SceneConfig::preset(IlluminancePreset::FastMotion);
    cfg.width = 48;
    cfg.height = 32;
    cfg.target.body = Rect::new(16.0, 16.0, 6.0, 5.0);
    cfg.target.panels.clear();
    cfg.motion = MotionProfile::linear(vx, 0.0, 0);
    cfg.seed = seed;
    cfg
}

fn dvs(width: u32, height: u32, refractory_us: u64) -> DvsConfig {
    DvsConfig {
        width,
        height,
        refractory_us,
        noise_rate: 0.0,
        ..DvsConfig::default()
    }
}

fn frame(width: u32, height: u32, t: u64, logs: &[f64]) -> Frame {
    Frame {
        width,
        height,
        t,
        pixels: logs.iter().map(|l| l.exp()).collect(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn residual_stays_below_threshold(steps in prop::collection::vec(prop::collection::vec(-2.0f64..2.0, 6), 1..30)) {
        let cfg = dvs(3, 2, 0);
        let mut s = SensorState::new(&cfg, &frame(3, 2, 0, &[0.0; 6])).unwrap();
        let mut expected_ref = [0.0f64; 6];
        for (k, logs) in steps.iter().enumerate() {
            let t = (k as u64 + 1) * 1000;
            let f = frame(3, 2, t, logs);
            let events = s.sample(&f, t).unwrap();
            prop_assert!(is_time_sorted(&events));
            for e in &events {
                prop_assert!(e.t + 1000 >= t && e.t <= t);
                expected_ref[(e.y as usize) * 3 + e.x as usize] += e.p.sign() as f64 * cfg.contrast_threshold;
            }
            for (i, p) in f.pixels.iter().enumerate() {
                prop_assert!((p.ln() - s.reference()[i]).abs() < cfg.contrast_threshold);
                prop_assert!((expected_ref[i] - s.reference()[i]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn refractory_spacing_holds(steps in prop::collection::vec(-3.0f64..3.0, 1..40), refractory in 1u64..900) {
        let cfg = dvs(1, 1, refractory);
        let mut s = SensorState::new(&cfg, &frame(1, 1, 0, &[0.0])).unwrap();
        let mut all = Vec::new();
        for (k, l) in steps.iter().enumerate() {
            let t = (k as u64 + 1) * 1000;
            all.extend(s.sample(&frame(1, 1, t, &[*l]), t).unwrap());
        }
        for w in all.windows(2) {
            prop_assert!(w[1].t - w[0].t >= refractory, "{:?}", w);
        }
    }

    #[test]
    fn cap_keeps_a_subset_and_accounts_for_drops(times in prop::collection::vec(0u64..20_000, 0..3000), rate in 1.0e3f64..2.0e6) {
        let mut events: Vec<Event> = times
            .iter()
            .enumerate()
            .map(|(i, &t)| Event::new((i % 7) as u16, (i % 5) as u16, t, Polarity::from_sign(i % 2 == 0)))
            .collect();
        sort_canonical(&mut events);
        let (kept, dropped) = apply_bandwidth_cap(events.clone(), rate).unwrap();
        prop_assert_eq!(kept.len() as u64 + dropped, events.len() as u64);
        prop_assert!(is_time_sorted(&kept));
        let mut it = events.iter();
        for k in &kept {
            prop_assert!(it.any(|e| e == k));
        }
        // A full bucket plus refill over the span bounds what can pass.
        let capacity = (rate * 1e-3).floor().max(1.0);
        if let (Some(a), Some(b)) = (kept.first(), kept.last()) {
            let bound = capacity + rate * (b.t - a.t) as f64 * 1e-6 + 1.0;
            prop_assert!(kept.len() as f64 <= bound, "{} > {}", kept.len(), bound);
        }
    }

    #[test]
    fn renders_are_positive_and_pure(vx in -80.0f64..80.0, t in 0u64..2_000_000, seed in any::<u64>()) {
        let scene: Scene = Scene::new(&small_scene(vx, seed)).unwrap();
        let a = scene.render(t);
        prop_assert!(a.pixels.iter().all(|p| *p > 0.0 && p.is_finite()));
        prop_assert_eq!(a, scene.render(t));
    }

    #[test]
    fn centroid_moves_linearly(vx in -40.0f64..40.0, t in 0u64..250_000) {
        let cfg = small_scene(vx, 0);
        let scene: Scene = Scene::new(&cfg).unwrap();
        let centroid = |t: u64| {
            let f = scene.render(t);
            let bg = scene.background_level();
            let (mut m, mut mx) = (0.0, 0.0);
            for y in 0..f.height {
                for x in 0..f.width {
                    let w = f.get(x, y) - bg;
                    m += w;
                    mx += w * (x as f64 + 0.5);
                }
            }
            mx / m
        };
        let moved = centroid(t) - centroid(0);
        prop_assert!((moved - vx * t as f64 * 1e-6).abs() <= 1.0, "moved {moved}");
    }

    #[test]
    fn reader_recovers_every_frame(n in 1usize..40, seed in any::<u32>()) {
        let msgs: Vec<Message> = (0..n as u32)
            .map(|i| {
                if i % 3 == 0 {
                    Message::heartbeat(seed.wrapping_add(i), LinkState::Normal, i, i as u64 * 10)
                } else {
                    Message::events(seed.wrapping_add(i), 1000 * i as u64, vec![Event::new(1, 2, 1000 * i as u64 + 5, Polarity::Positive)])
                }
            })
            .collect();
        let stream: Vec<u8> = msgs.iter().flat_map(|m| encode(m).unwrap()).collect();
        let back: Vec<Message> = MessageReader::new(&stream).map(|m| m.unwrap()).collect();
        prop_assert_eq!(back, msgs);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn abnormal_events_are_downlinked_or_dropped(seed in any::<u64>(), vx in 50.0f64..400.0, max_rate in 2.0e4f64..2.0e5) {
        let mut cfg = ScenarioConfig::for_preset(IlluminancePreset::FastMotion);
        let mut scene = small_scene(vx, seed);
        scene.motion.onset_us = 20_000;
        cfg.scene = Some(scene);
        cfg.sensor.width = 48;
        cfg.sensor.height = 32;
        cfg.sensor.max_event_rate = max_rate;
        cfg.sensor.noise_rate = 1.0;
        cfg.monitor.threshold_bps = 10_000.0;
        cfg.duration_us = 150_000;
        let cfg = cfg.with_seed(seed);
        let r = run_scenario(&cfg, None).unwrap();
        prop_assert_eq!(r.abnormal_emitted_events, r.downlinked_events + r.abnormal_dropped_events);
        prop_assert_eq!(r.delivered_events, r.downlinked_events);
        prop_assert_eq!(r.event_packets_while_normal, 0);
        prop_assert_eq!(r.kept_events + r.dropped_events, r.signal_events + r.noise_events);
    }
}
