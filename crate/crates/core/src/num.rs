//! Scalar abstraction shared by the image-domain modules.

use std::fmt::Debug;
use std::iter::Sum;

/// Floating point scalar used for irradiance and log-intensity maps: `f32` or `f64`.
pub trait Real:
    num_traits::Float
    + num_traits::FromPrimitive
    + num_traits::ToPrimitive
    + num_traits::NumAssign
    + Default
    + Debug
    + Sum
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from `f64` literals and configuration values.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 converts to any Real")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("Real converts to f64")
    }
}

impl Real for f32 {}
impl Real for f64 {}
