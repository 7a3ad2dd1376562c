//! Scalar abstraction shared by every numerical module.

use nalgebra::{DMatrix, DVector, RealField};
use num_complex::Complex;
use num_traits::{FromPrimitive, ToPrimitive};

/// Real scalar the whole pipeline is generic over (`f32`, `f64`).
pub trait Real: RealField + Copy + FromPrimitive + ToPrimitive + Send + Sync + 'static {}

impl<T> Real for T where T: RealField + Copy + FromPrimitive + ToPrimitive + Send + Sync + 'static {}

pub type Cplx<R> = Complex<R>;
pub type CMat<R> = DMatrix<Complex<R>>;
pub type CVec<R> = DVector<Complex<R>>;

/// Converts an `f64` literal into the working precision.
#[inline]
pub fn lit<R: Real>(v: f64) -> R {
    R::from_f64(v).expect("literal representable in working precision")
}

#[inline]
pub fn to_f64<R: Real>(v: R) -> f64 {
    v.to_f64().unwrap_or(f64::NAN)
}

#[inline]
pub fn cplx<R: Real>(re: R, im: R) -> Complex<R> {
    Complex::new(re, im)
}

#[inline]
pub fn creal<R: Real>(re: R) -> Complex<R> {
    Complex::new(re, R::zero())
}

/// `e^{i t}`.
#[inline]
pub fn cis<R: Real>(t: R) -> Complex<R> {
    Complex::new(t.cos(), t.sin())
}

pub fn two_pi<R: Real>() -> R {
    R::two_pi()
}

/// `r e^{i t}`.
#[inline]
pub fn polar<R: Real>(r: R, t: R) -> Complex<R> {
    Complex::new(r * t.cos(), r * t.sin())
}
