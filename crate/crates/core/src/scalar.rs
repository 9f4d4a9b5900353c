//! Floating-point abstraction shared by every numeric routine in the crate.

use nalgebra::RealField;
use num_complex::Complex;
use num_traits::ToPrimitive;

/// Real scalar backing the complex matrices: `f32` or `f64`.
///
/// Algorithms are written against this trait; the crate root exposes `f64`
/// aliases for everyday use.
pub trait Real: RealField + Copy + ToPrimitive + Default {
    /// Machine epsilon as an `f64`.
    const MACHINE_EPS: f64;

    #[inline]
    fn of(x: f64) -> Self {
        nalgebra::convert(x)
    }

    #[inline]
    fn as_f64(self) -> f64 {
        // f32/f64 always convert.
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// A tolerance of `base`, floored at a small multiple of the machine
    /// epsilon so thresholds tuned for `f64` stay meaningful for `f32`.
    #[inline]
    fn tol(base: f64) -> Self {
        Self::of(base.max(1e3 * Self::MACHINE_EPS))
    }
}

impl Real for f64 {
    const MACHINE_EPS: f64 = f64::EPSILON;
}

impl Real for f32 {
    const MACHINE_EPS: f64 = f32::EPSILON as f64;
}

#[inline]
pub fn cplx<R: Real>(re: f64, im: f64) -> Complex<R> {
    Complex::new(R::of(re), R::of(im))
}

#[inline]
pub fn to_c64<R: Real>(z: Complex<R>) -> Complex<f64> {
    Complex::new(z.re.as_f64(), z.im.as_f64())
}

#[inline]
pub fn from_c64<R: Real>(z: Complex<f64>) -> Complex<R> {
    Complex::new(R::of(z.re), R::of(z.im))
}

/// `exp(-i * phase)` for a real phase.
#[inline]
pub fn phase<R: Real>(theta: R) -> Complex<R> {
    Complex::new(theta.cos(), -theta.sin())
}

#[inline]
pub fn cabs<R: Real>(z: Complex<R>) -> R {
    z.re.hypot(z.im)
}

#[inline]
pub fn cexp<R: Real>(z: Complex<R>) -> Complex<R> {
    let m = z.re.exp();
    Complex::new(m * z.im.cos(), m * z.im.sin())
}

#[inline]
pub fn is_finite_c<R: Real>(z: Complex<R>) -> bool {
    z.re.is_finite() && z.im.is_finite()
}
