//! Floating-point abstraction for the scoring and advantage math.
//!
//! Every numeric kernel in this crate (similarity scores, F-beta rewards,
//! group advantages, metric aggregation) is generic over [`Scalar`] so the
//! same code runs in `f32` inside a training loop and in `f64` everywhere
//! precision matters. The crate root exposes `f64` aliases for the common
//! case.

use num_traits::{Float, FromPrimitive};

/// Scalar type the scoring math is written against: `f32` or `f64`.
pub trait Scalar:
    Float + FromPrimitive + core::fmt::Debug + core::fmt::Display + Send + Sync + 'static
{
    /// Lossless-enough conversion from a count (set sizes, group lengths).
    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count must be representable in the scalar type")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
