//! Intensity reconstruction by direct per-pixel integration of events, and
//! percentile tone-mapping of the result to 8 bits.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::event::{is_time_sorted, Event};
use crate::image::GrayImage;
use crate::num::Real;
use crate::scene::Frame;

/// Per-pixel log intensity valid at time `t` (microseconds).
#[derive(Clone, Debug, PartialEq)]
pub struct LogImage<T = f64> {
    pub width: u32,
    pub height: u32,
    pub t: u64,
    pub values: Vec<T>,
}

impl<T: Real> LogImage<T> {
    pub fn uniform(width: u32, height: u32, t: u64, value: T) -> Self {
        LogImage {
            width,
            height,
            t,
            values: vec![value; width as usize * height as usize],
        }
    }

    /// `ln` of every pixel of a linear frame.
    pub fn from_frame(frame: &Frame<T>) -> Self {
        LogImage {
            width: frame.width,
            height: frame.height,
            t: frame.t,
            values: frame.pixels.iter().map(|p| p.ln()).collect(),
        }
    }

    pub fn get(&self, x: u32, y: u32) -> T {
        self.values[y as usize * self.width as usize + x as usize]
    }

    pub fn mean(&self) -> T {
        let n = T::from_usize(self.values.len()).unwrap_or_else(T::one);
        self.values.iter().copied().sum::<T>() / n
    }

    /// Largest absolute pixel difference to `other`.
    pub fn max_abs_diff(&self, other: &LogImage<T>) -> T {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (*a - *b).abs())
            .fold(T::zero(), T::max)
    }

    /// Largest absolute difference after removing each image's spatial mean.
    pub fn max_abs_diff_offset_corrected(&self, other: &LogImage<T>) -> T {
        let (ma, mb) = (self.mean(), other.mean());
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| ((*a - ma) - (*b - mb)).abs())
            .fold(T::zero(), T::max)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitMode {
    /// Every pixel starts at the log of the scene's background level.
    MidGray,
    /// Starts from the log of the first rendered frame.
    GroundTruthFrame,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReconstructConfig {
    /// Must match the sensor's contrast threshold.
    pub contrast_threshold: f64,
    /// Relaxation toward the initial spatial mean, seconds. 0 disables it.
    pub decay_time_constant_s: f64,
    pub init: InitMode,
}

impl Default for ReconstructConfig {
    fn default() -> Self {
        ReconstructConfig {
            contrast_threshold: 0.2,
            decay_time_constant_s: 0.0,
            init: InitMode::MidGray,
        }
    }
}

impl ReconstructConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.contrast_threshold > 0.0 && self.contrast_threshold.is_finite()) {
            return Err(Error::config("reconstruct.contrast_threshold", "must be finite and > 0"));
        }
        if !(self.decay_time_constant_s >= 0.0 && self.decay_time_constant_s.is_finite()) {
            return Err(Error::config("reconstruct.decay_time_constant_s", "must be finite and >= 0"));
        }
        Ok(())
    }
}

/// Running integration state, fed incrementally.
#[derive(Clone, Debug)]
pub struct Integrator<T = f64> {
    step: T,
    tau_us: f64,
    anchor: T,
    image: LogImage<T>,
    last_update: Vec<u64>,
}

impl<T: Real> Integrator<T> {
    pub fn new(init: LogImage<T>, cfg: &ReconstructConfig) -> Result<Self> {
        cfg.validate()?;
        if init.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::config("reconstruct.init", "log image must be finite"));
        }
        Ok(Integrator {
            step: T::lit(cfg.contrast_threshold),
            tau_us: cfg.decay_time_constant_s * 1e6,
            anchor: init.mean(),
            last_update: vec![init.t; init.values.len()],
            image: init,
        })
    }

    pub fn image(&self) -> &LogImage<T> {
        &self.image
    }

    fn relax(&mut self, i: usize, t: u64) {
        if self.tau_us > 0.0 {
            let dt = t.saturating_sub(self.last_update[i]) as f64;
            let k = T::lit((-dt / self.tau_us).exp());
            let v = &mut self.image.values[i];
            *v = self.anchor + (*v - self.anchor) * k;
        }
        self.last_update[i] = self.last_update[i].max(t);
    }

    /// Adds `p * C` per event with `t <= t_end`, then brings every pixel to `t_end`.
    pub fn integrate(&mut self, events: &[Event], t_end: u64) -> Result<()> {
        if !is_time_sorted(events) {
            return Err(Error::Ordering("reconstruction input is not time-sorted".into()));
        }
        let w = self.image.width as usize;
        for ev in events.iter().take_while(|e| e.t <= t_end) {
            if ev.x as u32 >= self.image.width || ev.y as u32 >= self.image.height {
                continue;
            }
            let i = ev.y as usize * w + ev.x as usize;
            self.relax(i, ev.t);
            let delta = if ev.p.sign() > 0 { self.step } else { -self.step };
            self.image.values[i] += delta;
        }
        for i in 0..self.image.values.len() {
            self.relax(i, t_end);
        }
        self.image.t = self.image.t.max(t_end);
        Ok(())
    }

    pub fn into_image(self) -> LogImage<T> {
        self.image
    }
}

/// Pure form: integrates `events` onto `init` and returns the state at `t_end`.
pub fn integrate<T: Real>(
    events: &[Event],
    init: &LogImage<T>,
    cfg: &ReconstructConfig,
    t_end: u64,
) -> Result<LogImage<T>> {
    let mut integrator = Integrator::new(init.clone(), cfg)?;
    integrator.integrate(events, t_end)?;
    Ok(integrator.into_image())
}

/// Linear-interpolated percentile as `(sorted[i], sorted[j], frac)`.
fn percentile<T: Real>(sorted: &[T], q: f64) -> (T, T, T) {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    (sorted[lo], sorted[hi], T::lit(pos - lo as f64))
}

/// Maps the `[p1, p99]` range of log values linearly onto `[0, 255]`, clamped.
/// A degenerate range maps to 128 (with values outside it going to 0 / 255).
///
/// All quantities are formed from differences of input samples, so a common
/// shift cancels exactly and a power-of-two scale commutes with rounding.
pub fn tonemap<T: Real>(img: &LogImage<T>) -> GrayImage {
    let mut sorted = img.values.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("log image values are finite"));
    let pixels = if sorted.is_empty() {
        Vec::new()
    } else {
        let (a, b, f) = percentile(&sorted, 0.01);
        let (c, d, g) = percentile(&sorted, 0.99);
        let lo_step = f * (b - a);
        let range = (c - a) + g * (d - c) - lo_step;
        img.values
            .iter()
            .map(|&v| {
                let offset = (v - a) - lo_step;
                if range > T::zero() {
                    let u = (offset / range).as_f64() * 255.0;
                    u.round().clamp(0.0, 255.0) as u8
                } else if offset < T::zero() {
                    0
                } else if offset > range {
                    255
                } else {
                    128
                }
            })
            .collect()
    };
    GrayImage {
        width: img.width,
        height: img.height,
        pixels,
    }
}
