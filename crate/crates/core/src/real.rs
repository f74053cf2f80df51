//! Scalar abstraction shared by every numerical kernel in the crate.
//!
//! All simulation types are generic over [`Real`]; `f64` is the production
//! scalar and `f32` is supported for the Bloch stepper and the spectral
//! analysis (where single precision is sometimes enough). The oracle's
//! Lorentzian quadrature needs `f64` to be meaningful at kHz linewidths.

use std::fmt::{Debug, Display};

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign};

/// Floating-point scalar used throughout the simulator.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + NumAssign
    + rustfft::FftNum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` literal (constants, config values).
    fn c(x: f64) -> Self;
    /// Lossless-enough conversion back to `f64` for I/O.
    fn f64(self) -> f64;
    /// Error function.
    fn erf(self) -> Self;
}

impl Real for f64 {
    #[inline]
    fn c(x: f64) -> Self {
        x
    }
    #[inline]
    fn f64(self) -> f64 {
        self
    }
    #[inline]
    fn erf(self) -> Self {
        libm::erf(self)
    }
}

impl Real for f32 {
    #[inline]
    fn c(x: f64) -> Self {
        x as f32
    }
    #[inline]
    fn f64(self) -> f64 {
        self as f64
    }
    #[inline]
    fn erf(self) -> Self {
        libm::erff(self)
    }
}

/// Speed of light in mm/µs.
pub const C_MM_PER_US: f64 = 299_792.458;
