//! Bandwidth and power accounting for the DVS-versus-APS comparison.

use serde::{Deserialize, Serialize};

use crate::monitor::BITS_PER_EVENT;
use crate::num::Real;

/// Event-stream bit rate: `count * bits_per_event / window_s`.
pub fn dvs_bandwidth<T: Real>(event_count: u64, window_s: T, bits_per_event: u64) -> T {
    T::lit((event_count as u128 * bits_per_event as u128) as f64) / window_s
}

/// [`dvs_bandwidth`] at the wire record size.
pub fn dvs_bandwidth_default<T: Real>(event_count: u64, window_s: T) -> T {
    dvs_bandwidth(event_count, window_s, BITS_PER_EVENT)
}

/// Raw frame-camera bit rate: `width * height * bits_per_pixel * fps`.
pub fn aps_bandwidth<T: Real>(width: u32, height: u32, bits_per_pixel: u32, fps: T) -> T {
    T::lit(width as f64 * height as f64 * bits_per_pixel as f64) * fps
}

/// Active power of both sensors, in milliwatts so that the default ratio is exact.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PowerModel {
    pub dvs_active_mw: f64,
    pub aps_active_mw: f64,
}

impl Default for PowerModel {
    fn default() -> Self {
        PowerModel {
            dvs_active_mw: 20.0,
            aps_active_mw: 140.0,
        }
    }
}

impl PowerModel {
    pub fn dvs_active_w(&self) -> f64 {
        self.dvs_active_mw / 1000.0
    }

    pub fn aps_active_w(&self) -> f64 {
        self.aps_active_mw / 1000.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnergyReport<T = f64> {
    pub dvs_j: T,
    pub aps_j: T,
    /// Average APS power over average DVS power.
    pub aps_to_dvs_ratio: T,
}

/// Energy per sensor over `duration_s` at the given duty cycles.
pub fn energy_report<T: Real>(model: &PowerModel, duration_s: T, dvs_duty: T, aps_duty: T) -> EnergyReport<T> {
    let dvs_mw = T::lit(model.dvs_active_mw) * dvs_duty;
    let aps_mw = T::lit(model.aps_active_mw) * aps_duty;
    let to_j = |mw: T| mw * duration_s / T::lit(1000.0);
    EnergyReport {
        dvs_j: to_j(dvs_mw),
        aps_j: to_j(aps_mw),
        aps_to_dvs_ratio: aps_mw / dvs_mw,
    }
}

/// Width in samples of the 10%-90% transition of a monotone-ish edge profile.
///
/// Levels are taken from the profile's min and max. The profile is oriented so
/// that it rises; crossings are located with linear interpolation.
pub fn transition_width_10_90(profile: &[f64]) -> Option<f64> {
    if profile.len() < 2 {
        return None;
    }
    let lo = profile.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = profile.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if hi <= lo {
        return None;
    }
    let rising = profile[profile.len() - 1] >= profile[0];
    let oriented: Vec<f64> = if rising {
        profile.to_vec()
    } else {
        profile.iter().rev().cloned().collect()
    };
    let crossing = |level: f64| -> Option<f64> {
        let i = oriented.iter().position(|&v| v >= level)?;
        if i == 0 {
            return Some(0.0);
        }
        let (a, b) = (oriented[i - 1], oriented[i]);
        Some((i - 1) as f64 + (level - a) / (b - a))
    };
    let x10 = crossing(lo + 0.1 * (hi - lo))?;
    let x90 = crossing(lo + 0.9 * (hi - lo))?;
    Some(x90 - x10)
}
