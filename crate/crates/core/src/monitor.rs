//! Onboard bandwidth monitor. A sliding-window estimate of the event bit rate
//! drives a Normal/Abnormal state machine against the threshold `M`.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Bits one event occupies on the downlink (the 8-byte wire record).
pub const BITS_PER_EVENT: u64 = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinkState {
    Normal,
    Abnormal,
}

impl LinkState {
    pub fn as_str(self) -> &'static str {
        match self {
            LinkState::Normal => "normal",
            LinkState::Abnormal => "abnormal",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MonitorConfig {
    /// Threshold `M` in bits per second.
    pub threshold_bps: f64,
    pub window_us: u64,
    /// Return band: leave Abnormal only below `M * (1 - h)`.
    pub hysteresis: f64,
    /// How long the rate must stay in the return band. `None` means one window.
    pub dwell_us: Option<u64>,
}

impl Default for MonitorConfig {
    fn default() -> Self {
        MonitorConfig {
            threshold_bps: 100_000.0,
            window_us: 100_000,
            hysteresis: 0.2,
            dwell_us: None,
        }
    }
}

impl MonitorConfig {
    /// Plain comparator `rate > M` with no hysteresis or dwell.
    pub fn memoryless(threshold_bps: f64, window_us: u64) -> Self {
        MonitorConfig {
            threshold_bps,
            window_us,
            hysteresis: 0.0,
            dwell_us: Some(0),
        }
    }

    pub fn dwell(&self) -> u64 {
        self.dwell_us.unwrap_or(self.window_us)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.threshold_bps > 0.0 && self.threshold_bps.is_finite()) {
            return Err(Error::config("monitor.threshold_bps", "must be finite and > 0"));
        }
        if self.window_us == 0 {
            return Err(Error::config("monitor.window_us", "must be > 0"));
        }
        if !(0.0..1.0).contains(&self.hysteresis) {
            return Err(Error::config("monitor.hysteresis", "must be in [0, 1)"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct MonitorState {
    config: MonitorConfig,
    state: LinkState,
    rate_bps: f64,
    samples: VecDeque<(u64, u64)>,
    window_events: u64,
    last_t: Option<u64>,
    /// Start of the current continuous stay in the return band while Abnormal.
    calm_since: Option<u64>,
}

impl MonitorState {
    pub fn new(config: MonitorConfig) -> Result<Self> {
        config.validate()?;
        Ok(MonitorState {
            config,
            state: LinkState::Normal,
            rate_bps: 0.0,
            samples: VecDeque::new(),
            window_events: 0,
            last_t: None,
            calm_since: None,
        })
    }

    pub fn state(&self) -> LinkState {
        self.state
    }

    pub fn rate_bps(&self) -> f64 {
        self.rate_bps
    }

    pub fn config(&self) -> &MonitorConfig {
        &self.config
    }

    /// Records `event_count` events observed at `t` and returns the state after
    /// any transition together with the windowed rate over `(t - window, t]`.
    pub fn observe(&mut self, event_count: u64, t: u64) -> Result<(LinkState, f64)> {
        if let Some(last) = self.last_t {
            if t < last {
                return Err(Error::Ordering(format!(
                    "monitor observation at {t} us precedes previous one at {last} us"
                )));
            }
        }
        self.last_t = Some(t);
        self.samples.push_back((t, event_count));
        self.window_events += event_count;
        let window = self.config.window_us;
        while let Some(&(ts, n)) = self.samples.front() {
            if ts + window <= t {
                self.samples.pop_front();
                self.window_events -= n;
            } else {
                break;
            }
        }
        self.rate_bps = (BITS_PER_EVENT * self.window_events) as f64 / (window as f64 * 1e-6);

        let m = self.config.threshold_bps;
        match self.state {
            LinkState::Normal => {
                if self.rate_bps > m {
                    self.state = LinkState::Abnormal;
                    self.calm_since = None;
                }
            }
            LinkState::Abnormal => {
                if self.rate_bps <= m * (1.0 - self.config.hysteresis) {
                    let since = *self.calm_since.get_or_insert(t);
                    if t - since >= self.config.dwell() {
                        self.state = LinkState::Normal;
                        self.calm_since = None;
                    }
                } else {
                    self.calm_since = None;
                }
            }
        }
        Ok((self.state, self.rate_bps))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Threshold at which 20 events per ms sit exactly on `M`.
    fn cfg() -> MonitorConfig {
        MonitorConfig {
            threshold_bps: 1_280_000.0,
            ..MonitorConfig::default()
        }
    }

    /// Per-ms event count that produces `bps` when sustained over a full window.
    fn count_for(bps: f64) -> u64 {
        let n = bps * 1e-3 / BITS_PER_EVENT as f64;
        assert_eq!(n, n.round(), "{bps} b/s is not a whole number of events per ms");
        n as u64
    }

    #[test]
    fn zero_counts_stay_normal() {
        let mut m = MonitorState::new(MonitorConfig::default()).unwrap();
        for k in 1..=500 {
            assert_eq!(m.observe(0, k * 1000).unwrap(), (LinkState::Normal, 0.0));
        }
    }

    #[test]
    fn sustained_double_threshold_turns_abnormal_on_first_crossing() {
        let cfg = cfg();
        let mut m = MonitorState::new(cfg.clone()).unwrap();
        let per_ms = count_for(2.0 * cfg.threshold_bps);
        let mut first_abnormal = None;
        for k in 1..=200u64 {
            let (state, rate) = m.observe(per_ms, k * 1000).unwrap();
            if first_abnormal.is_none() && rate > cfg.threshold_bps {
                first_abnormal = Some(k);
            }
            if let Some(f) = first_abnormal {
                assert_eq!(state, LinkState::Abnormal, "step {k} after first crossing {f}");
            } else {
                assert_eq!(state, LinkState::Normal);
            }
        }
        // Half the window at 2M reaches M; the next step exceeds it.
        assert_eq!(first_abnormal, Some(51));
    }

    #[test]
    fn square_wave_near_threshold_never_recovers() {
        let cfg = cfg();
        let mut m = MonitorState::new(cfg.clone()).unwrap();
        let hi = count_for(1.05 * cfg.threshold_bps);
        let lo = count_for(0.95 * cfg.threshold_bps);
        // 30 ms half-periods do not tile the 100 ms window, so the windowed
        // rate swings between 0.99M and 1.01M.
        let half = 30;
        let mut entered = false;
        for k in 1..=5_000u64 {
            let level = if (k / half) % 2 == 0 { hi } else { lo };
            let (state, _) = m.observe(level, k * 1000).unwrap();
            entered |= state == LinkState::Abnormal;
            if entered {
                assert_eq!(state, LinkState::Abnormal, "recovered at step {k}");
            }
        }
        assert!(entered);
    }

    #[test]
    fn recovers_after_dwell_below_band() {
        let cfg = cfg();
        let mut m = MonitorState::new(cfg.clone()).unwrap();
        for k in 1..=150 {
            m.observe(count_for(3.0 * cfg.threshold_bps), k * 1000).unwrap();
        }
        assert_eq!(m.state(), LinkState::Abnormal);
        let mut back = None;
        for k in 151..=600 {
            if m.observe(0, k * 1000).unwrap().0 == LinkState::Normal {
                back = Some(k);
                break;
            }
        }
        // Window drains below 0.8M, then a further full window of dwell is required.
        let k = back.expect("returns to normal");
        assert!(k >= 150 + 100, "returned at {k}");
        assert!(k <= 150 + 200, "returned at {k}");
    }

    #[test]
    fn time_going_backwards_is_an_error() {
        let mut m = MonitorState::new(MonitorConfig::default()).unwrap();
        m.observe(1, 1000).unwrap();
        m.observe(1, 1000).unwrap();
        assert!(matches!(m.observe(1, 999), Err(Error::Ordering(_))));
    }

    #[test]
    fn rejects_invalid_config() {
        assert!(MonitorState::new(MonitorConfig { threshold_bps: 0.0, ..Default::default() }).is_err());
        assert!(MonitorState::new(MonitorConfig { window_us: 0, ..Default::default() }).is_err());
        assert!(MonitorState::new(MonitorConfig { hysteresis: 1.0, ..Default::default() }).is_err());
    }

    proptest! {
        #[test]
        fn memoryless_mode_is_a_comparator(counts in prop::collection::vec(0u64..400, 1..300), m_bps in 10_000.0f64..500_000.0) {
            let cfg = MonitorConfig::memoryless(m_bps, 50_000);
            let mut mon = MonitorState::new(cfg).unwrap();
            for (k, &c) in counts.iter().enumerate() {
                let t = (k as u64 + 1) * 1000;
                // Oracle: brute-force window sum over the full history.
                let sum: u64 = counts[..=k]
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| (*j as u64 + 1) * 1000 + 50_000 > t)
                    .map(|(_, &n)| n)
                    .sum();
                let rate = (64 * sum) as f64 / 0.05;
                let (state, got) = mon.observe(c, t).unwrap();
                prop_assert!((got - rate).abs() < 1e-6);
                let expected = if rate > m_bps { LinkState::Abnormal } else { LinkState::Normal };
                prop_assert_eq!(state, expected);
            }
        }

        #[test]
        fn raising_rates_never_clears_an_abnormal_verdict(
            counts in prop::collection::vec(0u64..400, 1..300),
            bumps in prop::collection::vec(0u64..100, 300),
        ) {
            let mut a = MonitorState::new(MonitorConfig::default()).unwrap();
            let mut b = MonitorState::new(MonitorConfig::default()).unwrap();
            for (k, &c) in counts.iter().enumerate() {
                let t = (k as u64 + 1) * 1000;
                let (sa, _) = a.observe(c, t).unwrap();
                let (sb, _) = b.observe(c + bumps[k], t).unwrap();
                if sa == LinkState::Abnormal {
                    prop_assert_eq!(sb, LinkState::Abnormal);
                }
            }
        }

        #[test]
        fn state_is_deterministic(counts in prop::collection::vec(0u64..400, 1..200)) {
            let run = || {
                let mut m = MonitorState::new(MonitorConfig::default()).unwrap();
                counts.iter().enumerate().map(|(k, &c)| m.observe(c, (k as u64 + 1) * 1000).unwrap()).collect::<Vec<_>>()
            };
            prop_assert_eq!(run(), run());
        }
    }
}
