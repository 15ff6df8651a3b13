//! Event accumulator: superimposes all events of a time window onto one 2-D frame.

use crate::error::{Error, Result};
use crate::event::Event;
use crate::image::GrayImage;

/// Per-pixel polarity sum and event count over the half-open window `[t0, t1)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EventFrame {
    pub width: u32,
    pub height: u32,
    pub t0: u64,
    pub t1: u64,
    pub sum: Vec<i32>,
    pub count: Vec<u32>,
}

impl EventFrame {
    pub fn empty(width: u32, height: u32, t0: u64, t1: u64) -> Self {
        let n = width as usize * height as usize;
        EventFrame {
            width,
            height,
            t0,
            t1,
            sum: vec![0; n],
            count: vec![0; n],
        }
    }

    fn index(&self, x: u32, y: u32) -> usize {
        y as usize * self.width as usize + x as usize
    }

    pub fn sum_at(&self, x: u32, y: u32) -> i32 {
        self.sum[self.index(x, y)]
    }

    pub fn count_at(&self, x: u32, y: u32) -> u32 {
        self.count[self.index(x, y)]
    }

    pub fn total_count(&self) -> u64 {
        self.count.iter().map(|&c| c as u64).sum()
    }

    /// Field-wise sum of two frames over adjacent windows `[a.t0, a.t1)` and `[a.t1, b.t1)`.
    pub fn merge(&self, next: &EventFrame) -> Result<EventFrame> {
        if self.width != next.width || self.height != next.height {
            return Err(Error::Dimensions {
                expected_w: self.width,
                expected_h: self.height,
                got_w: next.width,
                got_h: next.height,
            });
        }
        if self.t1 != next.t0 {
            return Err(Error::Ordering(format!(
                "windows [{}, {}) and [{}, {}) are not adjacent",
                self.t0, self.t1, next.t0, next.t1
            )));
        }
        Ok(EventFrame {
            width: self.width,
            height: self.height,
            t0: self.t0,
            t1: next.t1,
            sum: self.sum.iter().zip(&next.sum).map(|(a, b)| a + b).collect(),
            count: self.count.iter().zip(&next.count).map(|(a, b)| a + b).collect(),
        })
    }

    /// Gray = no events, bright = net positive, dark = net negative:
    /// `128 + clamp(32 * sum, -128, 127)`.
    pub fn to_gray(&self) -> GrayImage {
        GrayImage {
            width: self.width,
            height: self.height,
            pixels: self
                .sum
                .iter()
                .map(|&s| (128 + (32i64 * s as i64).clamp(-128, 127)) as u8)
                .collect(),
        }
    }
}

/// Bins events with `t0 <= t < t1` into a `width x height` frame. Events
/// outside the window or outside the array are ignored.
pub fn accumulate(events: &[Event], width: u32, height: u32, t0: u64, t1: u64) -> Result<EventFrame> {
    if t0 >= t1 {
        return Err(Error::Ordering(format!("accumulation window [{t0}, {t1}) is empty")));
    }
    let mut frame = EventFrame::empty(width, height, t0, t1);
    for ev in events {
        if ev.t < t0 || ev.t >= t1 || ev.x as u32 >= width || ev.y as u32 >= height {
            continue;
        }
        let i = frame.index(ev.x as u32, ev.y as u32);
        frame.sum[i] += ev.p.sign();
        frame.count[i] += 1;
    }
    Ok(frame)
}
