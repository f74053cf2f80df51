//! Input optical envelopes.

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::real::Real;

/// Temporal shape of the input pulse.
#[derive(Debug, Clone, PartialEq)]
pub enum PulseShape<T> {
    /// Gaussian whose intensity FWHM is `PulseSpec::fwhm_us`.
    Gaussian,
    /// Tabulated envelope (relative amplitude, scaled by `peak_rabi_mhz`)
    /// sampled every `dt_us` starting at `PulseSpec::delay_us`; linear
    /// interpolation between samples, zero outside.
    Samples { dt_us: T, values: Vec<Complex<T>> },
}

/// Input pulse on the retarded-time axis.
#[derive(Debug, Clone, PartialEq)]
pub struct PulseSpec<T> {
    pub shape: PulseShape<T>,
    pub fwhm_us: T,
    pub center_detuning_mhz: T,
    /// Peak Rabi frequency (cyclic MHz).
    pub peak_rabi_mhz: T,
    /// Time of the pulse peak (Gaussian) or of the first sample.
    pub delay_us: T,
}

impl<T: Real> PulseSpec<T> {
    /// Weak Gaussian probe (0.01 MHz peak Rabi frequency) at 0 MHz.
    pub fn gaussian(fwhm_us: T, delay_us: T) -> Self {
        Self {
            shape: PulseShape::Gaussian,
            fwhm_us,
            center_detuning_mhz: T::zero(),
            peak_rabi_mhz: T::c(0.01),
            delay_us,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fwhm_us > T::zero()) || !self.fwhm_us.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "pulse FWHM must be positive, got {}",
                self.fwhm_us
            )));
        }
        if !(self.peak_rabi_mhz >= T::zero()) || !self.peak_rabi_mhz.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "peak Rabi frequency must be non-negative, got {}",
                self.peak_rabi_mhz
            )));
        }
        if !self.delay_us.is_finite() || !self.center_detuning_mhz.is_finite() {
            return Err(Error::InvalidParameter("pulse delay and detuning must be finite".into()));
        }
        if let PulseShape::Samples { dt_us, values } = &self.shape {
            if !(*dt_us > T::zero()) || values.is_empty() {
                return Err(Error::InvalidParameter(
                    "sampled pulse needs a positive step and at least one sample".into(),
                ));
            }
        }
        Ok(())
    }

    /// Envelope (cyclic MHz) at retarded time `tau`.
    pub fn envelope(&self, tau_us: T) -> Complex<T> {
        let t = tau_us - self.delay_us;
        let amp = match &self.shape {
            PulseShape::Gaussian => {
                let k = T::c(2.0 * std::f64::consts::LN_2) / (self.fwhm_us * self.fwhm_us);
                Complex::new((-k * t * t).exp(), T::zero())
            }
            PulseShape::Samples { dt_us, values } => {
                let x = t / *dt_us;
                if x < T::zero() || x > T::c((values.len() - 1) as f64) {
                    Complex::new(T::zero(), T::zero())
                } else {
                    let i = x.floor().to_usize().unwrap_or(0);
                    let f = x - x.floor();
                    if i + 1 >= values.len() {
                        values[values.len() - 1]
                    } else {
                        values[i] * (T::one() - f) + values[i + 1] * f
                    }
                }
            }
        };
        let phase = T::c(std::f64::consts::TAU) * self.center_detuning_mhz * t;
        amp * Complex::new(phase.cos(), phase.sin()) * self.peak_rabi_mhz
    }

    /// Envelope sampled at `tau_n = n dt` for `n < len`.
    pub fn sample(&self, dt_us: T, len: usize) -> Vec<Complex<T>> {
        (0..len).map(|n| self.envelope(T::c(n as f64) * dt_us)).collect()
    }

    /// Time after which the input is negligible (Gaussian: 4 FWHM past the
    /// peak).
    pub fn end_time(&self) -> T {
        match &self.shape {
            PulseShape::Gaussian => self.delay_us + T::c(4.0) * self.fwhm_us,
            PulseShape::Samples { dt_us, values } => {
                self.delay_us + *dt_us * T::c((values.len() - 1) as f64)
            }
        }
    }
}
