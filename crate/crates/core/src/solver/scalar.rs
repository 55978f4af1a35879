use crate::{C32, C64};
use std::fmt::Debug;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};

/// Complex working precision of a factorization.
pub trait Scalar:
    Copy
    + Send
    + Sync
    + 'static
    + Debug
    + PartialEq
    + Default
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + SubAssign
    + MulAssign
{
    /// Storage size of one value in bytes.
    const BYTES: usize;
    /// Unit roundoff of the underlying real type.
    const EPS: f64;

    fn zero() -> Self;
    fn one() -> Self;
    fn from_c64(z: C64) -> Self;
    fn to_c64(self) -> C64;
    fn abs(self) -> f64;
    fn abs2(self) -> f64;
    fn conj(self) -> Self;
    fn scale(self, s: f64) -> Self;
}

impl Scalar for C64 {
    const BYTES: usize = 16;
    const EPS: f64 = f64::EPSILON / 2.0;

    #[inline]
    fn zero() -> Self {
        C64::new(0.0, 0.0)
    }
    #[inline]
    fn one() -> Self {
        C64::new(1.0, 0.0)
    }
    #[inline]
    fn from_c64(z: C64) -> Self {
        z
    }
    #[inline]
    fn to_c64(self) -> C64 {
        self
    }
    #[inline]
    fn abs(self) -> f64 {
        self.norm()
    }
    #[inline]
    fn abs2(self) -> f64 {
        self.norm_sqr()
    }
    #[inline]
    fn conj(self) -> Self {
        num_complex::Complex::conj(&self)
    }
    #[inline]
    fn scale(self, s: f64) -> Self {
        self * s
    }
}

impl Scalar for C32 {
    const BYTES: usize = 8;
    const EPS: f64 = f32::EPSILON as f64 / 2.0;

    #[inline]
    fn zero() -> Self {
        C32::new(0.0, 0.0)
    }
    #[inline]
    fn one() -> Self {
        C32::new(1.0, 0.0)
    }
    #[inline]
    fn from_c64(z: C64) -> Self {
        C32::new(z.re as f32, z.im as f32)
    }
    #[inline]
    fn to_c64(self) -> C64 {
        C64::new(self.re as f64, self.im as f64)
    }
    #[inline]
    fn abs(self) -> f64 {
        self.to_c64().norm()
    }
    #[inline]
    fn abs2(self) -> f64 {
        self.to_c64().norm_sqr()
    }
    #[inline]
    fn conj(self) -> Self {
        num_complex::Complex::conj(&self)
    }
    #[inline]
    fn scale(self, s: f64) -> Self {
        self * (s as f32)
    }
}
