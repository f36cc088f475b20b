use std::fmt::Debug;

use num_traits::{Float, FromPrimitive};

/// Floating point scalar the metric kernels are written against: `f32` or `f64`.
pub trait Scalar: Float + FromPrimitive + Debug + Send + Sync + 'static {
    fn from_f64_lossy(v: f64) -> Self {
        Self::from_f64(v).unwrap_or_else(Self::nan)
    }

    fn from_usize_lossy(v: usize) -> Self {
        Self::from_usize(v).unwrap_or_else(Self::nan)
    }

    fn half() -> Self {
        Self::from_f64_lossy(0.5)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
