use nalgebra::RealField;
use num_traits::ToPrimitive;

/// Floating-point scalar the numerical core is written against.
///
/// Implemented for `f32` and `f64`. Elementary functions come from
/// [`RealField`]; conversions from literals go through `num_traits`.
pub trait Real: RealField + Copy + ToPrimitive {
    /// Converts an `f64` literal or parameter into `Self`.
    #[inline]
    fn lit(x: f64) -> Self {
        <Self as num_traits::FromPrimitive>::from_f64(x).expect("f64 is representable")
    }

    #[inline]
    fn count(n: usize) -> Self {
        <Self as num_traits::FromPrimitive>::from_usize(n).expect("usize is representable")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        ToPrimitive::to_f64(&self).unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Normalization constant of the Neumann kernel in the upper half-space
/// over `R^n`: `pi^{(n+1)/2} / Gamma((n+1)/2)`.
///
/// Only `n = 1` (`pi`) and `n = 2` (`2 pi`) are used by the crate; larger
/// `n` fall back to the recursion `kappa_{n+2} = 2 pi kappa_n / (n+1)`.
pub fn neumann_kappa<T: Real>(n: usize) -> T {
    let pi = T::pi();
    match n {
        0 => T::lit(2.0),
        1 => pi,
        2 => pi + pi,
        _ => neumann_kappa::<T>(n - 2) * (pi + pi) / T::count(n - 1),
    }
}
