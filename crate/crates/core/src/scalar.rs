use nalgebra::RealField;
use num_traits::ToPrimitive;

/// Floating point scalar the geometry, spectral and network code is generic over.
///
/// Implemented for `f32` and `f64`. Anything persisted to disk goes through
/// `f64` regardless of the in-memory scalar.
pub trait Real: RealField + Copy + ToPrimitive + Send + Sync + 'static {
    /// Converts an `f64` constant into this scalar type.
    #[inline]
    fn lit(x: f64) -> Self {
        nalgebra::convert(x)
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    #[inline]
    fn count(n: usize) -> Self {
        Self::lit(n as f64)
    }
}

impl Real for f32 {}
impl Real for f64 {}
