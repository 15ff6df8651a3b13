use serde::{Deserialize, Serialize};

/// Sign of a brightness change.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Polarity {
    Negative,
    Positive,
}

impl Polarity {
    pub fn sign(self) -> i32 {
        match self {
            Polarity::Negative => -1,
            Polarity::Positive => 1,
        }
    }

    pub fn from_sign(positive: bool) -> Self {
        if positive {
            Polarity::Positive
        } else {
            Polarity::Negative
        }
    }
}

/// One asynchronous brightness-change sample.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Event {
    pub x: u16,
    pub y: u16,
    /// Microseconds.
    pub t: u64,
    pub p: Polarity,
}

impl Event {
    pub fn new(x: u16, y: u16, t: u64, p: Polarity) -> Self {
        Event { x, y, t, p }
    }

    /// Canonical stream order: time, then row, then column.
    pub fn order_key(&self) -> (u64, u16, u16) {
        (self.t, self.y, self.x)
    }
}

/// Sorts a stream into canonical `(t, y, x)` order. Stable, so same-pixel
/// events with equal timestamps keep their emission order.
pub fn sort_canonical(events: &mut [Event]) {
    events.sort_by_key(Event::order_key);
}

pub fn is_time_sorted(events: &[Event]) -> bool {
    events.windows(2).all(|w| w[0].t <= w[1].t)
}
