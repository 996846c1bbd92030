use num_traits::{Float, FloatConst, FromPrimitive};
use std::fmt::Debug;

/// Real scalar used by the numeric side of the crate (tables, estimators,
/// special functions). Implemented for `f32` and `f64`.
pub trait Scalar:
    Float + FloatConst + FromPrimitive + Debug + Default + Send + Sync + 'static
{
    /// Lossy conversion from `f64`; all constants enter through here.
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 is representable")
    }

    /// Widening conversion used when reporting.
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
