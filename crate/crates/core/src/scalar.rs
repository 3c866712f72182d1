//! Scalar abstraction shared by every numerical kernel in the crate.

use std::fmt;

use nalgebra::{Complex, RealField};

/// Floating point type the simulation kernels are written against.
///
/// Implemented for `f32` and `f64`. Physical parameters (rates, phases,
/// probabilities) are carried as `f64` in configuration types and converted
/// with [`Real::lit`] at the point of use.
pub trait Real:
    RealField + Copy + Default + Send + Sync + fmt::Display + fmt::LowerExp + 'static
{
    /// Converts an `f64` literal or parameter into this type.
    fn lit(x: f64) -> Self;

    fn as_f64(self) -> f64;
}

impl Real for f32 {
    #[inline]
    fn lit(x: f64) -> Self {
        x as f32
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Real for f64 {
    #[inline]
    fn lit(x: f64) -> Self {
        x
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self
    }
}

/// Complex amplitude over the scalar type `T`.
pub type C<T> = Complex<T>;

#[inline]
pub(crate) fn c<T: Real>(re: T, im: T) -> C<T> {
    Complex::new(re, im)
}

#[inline]
pub(crate) fn cr<T: Real>(re: T) -> C<T> {
    Complex::new(re, T::zero())
}

#[inline]
pub(crate) fn czero<T: Real>() -> C<T> {
    Complex::new(T::zero(), T::zero())
}

#[inline]
pub(crate) fn norm_sqr<T: Real>(z: C<T>) -> T {
    z.re * z.re + z.im * z.im
}

/// `e^{iθ}`.
#[inline]
pub(crate) fn cis<T: Real>(theta: T) -> C<T> {
    Complex::new(theta.cos(), theta.sin())
}

/// Converts a complex number between scalar types through `f64`.
#[inline]
pub fn to_c64<T: Real>(z: C<T>) -> Complex<f64> {
    Complex::new(z.re.as_f64(), z.im.as_f64())
}

#[inline]
pub fn from_c64<T: Real>(z: Complex<f64>) -> C<T> {
    Complex::new(T::lit(z.re), T::lit(z.im))
}

/// `|z|`.
#[inline]
pub(crate) fn cabs<T: Real>(z: C<T>) -> T {
    norm_sqr(z).sqrt()
}
