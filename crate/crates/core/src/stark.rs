//! Linear Stark shifts: dipole geometry, electrode field profile and the
//! time/position dependent drive seen by the two ion groups.

use std::io::BufRead;

use crate::csvio;
use crate::error::{Error, Result};
use crate::real::Real;

/// Stark coefficient stored in MHz per (V/mm).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StarkCoefficient<T>(T);

impl<T: Real> StarkCoefficient<T> {
    pub fn from_mhz_per_v_per_mm(x: T) -> Self {
        Self(x)
    }

    /// 1 kHz/(V/cm) = 0.01 MHz/(V/mm).
    pub fn from_khz_per_v_per_cm(x: T) -> Self {
        Self(x * T::c(0.01))
    }

    pub fn mhz_per_v_per_mm(self) -> T {
        self.0
    }

    pub fn khz_per_v_per_cm(self) -> T {
        self.0 * T::c(100.0)
    }

    /// Projection of the literature dipole difference (111.6 kHz/(V/cm) at
    /// 12.4 degrees), about 109.0 kHz/(V/cm).
    pub fn literature() -> Self {
        DipoleGeometry::literature().effective_coefficient()
    }

    /// Value fitted to the measured filter shifts, 116.7 kHz/(V/cm).
    pub fn fitted() -> Self {
        Self::from_khz_per_v_per_cm(T::c(116.7))
    }
}

/// Permanent dipole-moment difference and its angle to the applied field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DipoleGeometry<T> {
    mu_over_hbar_khz_per_v_per_cm: T,
    theta_deg: T,
}

impl<T: Real> DipoleGeometry<T> {
    pub fn new(mu_over_hbar_khz_per_v_per_cm: T, theta_deg: T) -> Result<Self> {
        if !(mu_over_hbar_khz_per_v_per_cm > T::zero()) {
            return Err(Error::InvalidParameter(format!(
                "dipole difference must be positive, got {mu_over_hbar_khz_per_v_per_cm}"
            )));
        }
        if !(theta_deg >= T::zero() && theta_deg < T::c(90.0)) {
            return Err(Error::InvalidParameter(format!(
                "dipole angle must lie in [0, 90) degrees, got {theta_deg}"
            )));
        }
        Ok(Self {
            mu_over_hbar_khz_per_v_per_cm,
            theta_deg,
        })
    }

    pub fn literature() -> Self {
        Self {
            mu_over_hbar_khz_per_v_per_cm: T::c(111.6),
            theta_deg: T::c(12.4),
        }
    }

    pub fn effective_coefficient(&self) -> StarkCoefficient<T> {
        let c = if self.theta_deg == T::zero() {
            T::one()
        } else {
            self.theta_deg.to_radians().cos()
        };
        StarkCoefficient::from_khz_per_v_per_cm(self.mu_over_hbar_khz_per_v_per_cm * c)
    }
}

/// Electrode gap and relative field deviation along the crystal.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldProfile<T> {
    gap_mm: T,
    length_mm: T,
    z_mm: Vec<T>,
    epsilon: Vec<T>,
}

const EPSILON_LIMIT: f64 = 0.1;

impl<T: Real> FieldProfile<T> {
    /// Tabulated profile; `z_mm` must be increasing and span `[0, length]`.
    pub fn tabulated(gap_mm: T, length_mm: T, z_mm: Vec<T>, epsilon: Vec<T>) -> Result<Self> {
        if !(gap_mm > T::zero()) {
            return Err(Error::InvalidParameter(format!(
                "electrode gap must be positive, got {gap_mm}"
            )));
        }
        if !(length_mm > T::zero()) {
            return Err(Error::InvalidParameter(format!(
                "crystal length must be positive, got {length_mm}"
            )));
        }
        if z_mm.len() != epsilon.len() || z_mm.is_empty() {
            return Err(Error::InvalidInput(
                "field profile needs matching, non-empty z and epsilon columns".into(),
            ));
        }
        if z_mm.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidInput("field profile z must be increasing".into()));
        }
        let tol = T::c(1e-9) * length_mm;
        if z_mm[0] > tol || *z_mm.last().unwrap() < length_mm - tol {
            return Err(Error::InvalidInput(format!(
                "field profile covers [{}, {}] mm but the crystal is [0, {length_mm}] mm",
                z_mm[0],
                z_mm.last().unwrap()
            )));
        }
        if let Some(e) = epsilon.iter().find(|e| !(e.abs() < T::c(EPSILON_LIMIT))) {
            return Err(Error::InvalidInput(format!(
                "field deviation {e} is not small"
            )));
        }
        Ok(Self {
            gap_mm,
            length_mm,
            z_mm,
            epsilon,
        })
    }

    pub fn uniform(gap_mm: T, length_mm: T) -> Result<Self> {
        Self::tabulated(gap_mm, length_mm, vec![T::zero(), length_mm], vec![T::zero(); 2])
    }

    /// Zero-mean quadratic bump, largest at the crystal centre, with the
    /// given peak-to-peak deviation.
    pub fn quadratic_bump(gap_mm: T, length_mm: T, peak_to_peak: T) -> Result<Self> {
        let n = 201;
        let half = length_mm * T::c(0.5);
        let third = T::c(1.0 / 3.0);
        let z: Vec<T> = (0..n)
            .map(|i| length_mm * T::c(i as f64 / (n - 1) as f64))
            .collect();
        let eps = z
            .iter()
            .map(|zz| {
                let u = (*zz - half) / half;
                peak_to_peak * (third - u * u)
            })
            .collect();
        Self::tabulated(gap_mm, length_mm, z, eps)
    }

    /// Reads `z_mm,epsilon` rows (a header line is optional).
    pub fn from_csv<R: BufRead>(reader: R, gap_mm: T, length_mm: T) -> Result<Self> {
        let cols = csvio::read_numeric_columns(reader, 2)?;
        let z = cols[0].iter().map(|v| T::c(*v)).collect();
        let e = cols[1].iter().map(|v| T::c(*v)).collect();
        Self::tabulated(gap_mm, length_mm, z, e)
    }

    pub fn gap_mm(&self) -> T {
        self.gap_mm
    }

    pub fn length_mm(&self) -> T {
        self.length_mm
    }

    /// Relative field deviation at `z` (linear interpolation).
    pub fn epsilon_at(&self, z_mm: T) -> Result<T> {
        let tol = T::c(1e-9) * self.length_mm;
        if !(z_mm >= -tol && z_mm <= self.length_mm + tol) {
            return Err(Error::OutOfRange(format!(
                "z = {z_mm} mm outside the crystal [0, {}] mm",
                self.length_mm
            )));
        }
        let z = &self.z_mm;
        if z.len() == 1 || z_mm <= z[0] {
            return Ok(self.epsilon[0]);
        }
        let last = z.len() - 1;
        if z_mm >= z[last] {
            return Ok(self.epsilon[last]);
        }
        let k = z.partition_point(|v| *v <= z_mm).max(1) - 1;
        let f = (z_mm - z[k]) / (z[k + 1] - z[k]);
        Ok(self.epsilon[k] + (self.epsilon[k + 1] - self.epsilon[k]) * f)
    }

    pub fn is_uniform(&self) -> bool {
        self.epsilon.iter().all(|e| *e == T::zero())
    }
}

/// Static group-A shift (MHz) at `z` under `volts`; group B sees the negative.
pub fn shift_at<T: Real>(
    volts: T,
    field: &FieldProfile<T>,
    coeff: StarkCoefficient<T>,
    z_mm: T,
) -> Result<T> {
    let eps = field.epsilon_at(z_mm)?;
    Ok(coeff.mhz_per_v_per_mm() * (volts / field.gap_mm) * (T::one() + eps))
}

/// Raised-cosine ramp from 0 (x <= 0) to 1 (x >= 1).
pub fn raised_cosine<T: Real>(x: T) -> T {
    if x <= T::zero() {
        T::zero()
    } else if x >= T::one() {
        T::one()
    } else {
        T::c(0.5) * (T::one() - (T::PI() * x).cos())
    }
}

/// Voltage step applied at `tau0`, with a finite raised-cosine rise.
#[derive(Debug, Clone, PartialEq)]
pub struct StarkDrive<T> {
    /// Group-A shift at full voltage where the field deviation is zero (MHz).
    amplitude_mhz: T,
    tau0_us: T,
    rise_time_us: T,
    field: FieldProfile<T>,
}

impl<T: Real> StarkDrive<T> {
    pub fn step_drive(
        volts: T,
        tau0_us: T,
        rise_time_us: T,
        field: FieldProfile<T>,
        coeff: StarkCoefficient<T>,
    ) -> Result<Self> {
        if !(rise_time_us >= T::zero()) || !rise_time_us.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "rise time must be non-negative, got {rise_time_us}"
            )));
        }
        if !volts.is_finite() {
            return Err(Error::InvalidParameter(format!("voltage {volts} is not finite")));
        }
        let amplitude_mhz = coeff.mhz_per_v_per_mm() * volts / field.gap_mm;
        Ok(Self {
            amplitude_mhz,
            tau0_us,
            rise_time_us,
            field,
        })
    }

    /// No applied field.
    pub fn off(length_mm: T) -> Self {
        Self {
            amplitude_mhz: T::zero(),
            tau0_us: T::zero(),
            rise_time_us: T::zero(),
            field: FieldProfile::uniform(T::one(), length_mm)
                .expect("unit gap and positive length form a valid profile"),
        }
    }

    pub fn amplitude_mhz(&self) -> T {
        self.amplitude_mhz
    }

    pub fn tau0_us(&self) -> T {
        self.tau0_us
    }

    pub fn rise_time_us(&self) -> T {
        self.rise_time_us
    }

    pub fn field(&self) -> &FieldProfile<T> {
        &self.field
    }

    pub fn is_off(&self) -> bool {
        self.amplitude_mhz == T::zero()
    }

    /// Same drive with a different switch time.
    pub fn with_tau0(&self, tau0_us: T) -> Self {
        Self {
            tau0_us,
            ..self.clone()
        }
    }

    /// Temporal envelope 0..1 (Heaviside with `H(0) = 1` when the rise is 0).
    #[inline]
    pub fn envelope(&self, tau_us: T) -> T {
        if self.rise_time_us == T::zero() {
            if tau_us >= self.tau0_us {
                T::one()
            } else {
                T::zero()
            }
        } else {
            raised_cosine((tau_us - self.tau0_us) / self.rise_time_us)
        }
    }

    /// Group-A shift at the zero-deviation reference position.
    #[inline]
    pub fn reference_shift(&self, tau_us: T) -> T {
        self.amplitude_mhz * self.envelope(tau_us)
    }

    /// Position factor `1 + epsilon(z)`.
    pub fn spatial_factor(&self, z_mm: T) -> Result<T> {
        Ok(T::one() + self.field.epsilon_at(z_mm)?)
    }

    /// Group-A shift at `(tau, z)`; group B sees the negative.
    pub fn shift(&self, tau_us: T, z_mm: T) -> Result<T> {
        Ok(self.reference_shift(tau_us) * self.spatial_factor(z_mm)?)
    }

    /// Bound on `|shift|` over all times and positions.
    pub fn max_abs_shift(&self) -> T {
        let emax = self
            .field
            .epsilon
            .iter()
            .fold(T::zero(), |m, e| m.max(e.abs()));
        self.amplitude_mhz.abs() * (T::one() + emax)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn literature_geometry_projects_to_109_khz() {
        let c = DipoleGeometry::<f64>::literature().effective_coefficient();
        assert!((c.khz_per_v_per_cm() - 108.996).abs() < 1e-3);
        assert!((c.mhz_per_v_per_mm() - 1.08996).abs() < 1e-5);
        let aligned = DipoleGeometry::new(111.6, 0.0).unwrap().effective_coefficient();
        assert_eq!(aligned.khz_per_v_per_cm(), 111.6);
        assert!(DipoleGeometry::new(111.6, 90.0).is_err());
        assert!(DipoleGeometry::new(0.0, 10.0).is_err());
    }

    #[test]
    fn preparation_field_gives_16_mhz() {
        let f = FieldProfile::uniform(6.0, 10.0).unwrap();
        let s: f64 = shift_at(88.0, &f, StarkCoefficient::literature(), 5.0).unwrap();
        assert!((s - 15.986).abs() < 1e-3, "{s}");
        assert_eq!(shift_at(0.0, &f, StarkCoefficient::literature(), 1.0).unwrap(), 0.0);
    }

    #[test]
    fn fitted_coefficient_at_17_volts() {
        let f = FieldProfile::uniform(6.0, 10.0).unwrap();
        let s: f64 = shift_at(17.0, &f, StarkCoefficient::fitted(), 2.0).unwrap();
        assert!((s - 3.3065).abs() < 1e-4, "{s}");
        let s22: f64 = shift_at(22.0, &f, StarkCoefficient::fitted(), 2.0).unwrap();
        assert!((s22 - 4.279).abs() < 1e-3, "{s22}");
    }

    #[test]
    fn positions_outside_crystal_are_rejected() {
        let f = FieldProfile::uniform(6.0, 10.0).unwrap();
        assert!(matches!(
            shift_at(10.0, &f, StarkCoefficient::fitted(), 10.5),
            Err(Error::OutOfRange(_))
        ));
        assert!(shift_at(10.0, &f, StarkCoefficient::fitted(), -0.1).is_err());
    }

    #[test]
    fn bump_has_requested_peak_to_peak_and_zero_mean() {
        let f = FieldProfile::quadratic_bump(6.0, 10.0, 0.002).unwrap();
        let centre: f64 = f.epsilon_at(5.0).unwrap();
        let edge = f.epsilon_at(0.0).unwrap();
        assert!((centre - edge - 0.002).abs() < 1e-12);
        let n = 10_000;
        let mean: f64 = (0..n)
            .map(|i| f.epsilon_at(10.0 * (i as f64 + 0.5) / n as f64).unwrap())
            .sum::<f64>()
            / n as f64;
        assert!(mean.abs() < 1e-7, "{mean}");
    }

    #[test]
    fn csv_profile_round_trip() {
        let text = "z_mm,epsilon\n0,0.001\n5,-0.001\n10,0.001\n";
        let f = FieldProfile::<f64>::from_csv(text.as_bytes(), 6.0, 10.0).unwrap();
        assert!((f.epsilon_at(2.5).unwrap() - 0.0).abs() < 1e-15);
        assert!((f.epsilon_at(10.0).unwrap() - 0.001).abs() < 1e-15);
        let short = "0,0\n5,0\n";
        assert!(FieldProfile::<f64>::from_csv(short.as_bytes(), 6.0, 10.0).is_err());
    }

    #[test]
    fn heaviside_when_rise_is_zero() {
        let f = FieldProfile::uniform(6.0, 10.0).unwrap();
        let d = StarkDrive::step_drive(22.0, 3.0, 0.0, f, StarkCoefficient::fitted()).unwrap();
        assert_eq!(d.reference_shift(2.999_999), 0.0);
        assert_eq!(d.reference_shift(3.0), d.amplitude_mhz());
        assert_eq!(d.reference_shift(50.0), d.amplitude_mhz());
    }

    #[test]
    fn raised_cosine_rise_times() {
        let f = FieldProfile::uniform(6.0, 10.0).unwrap();
        let d = StarkDrive::step_drive(10.0, 1.0, 0.2, f, StarkCoefficient::fitted()).unwrap();
        let a = d.amplitude_mhz();
        // bisect the 10% and 90% crossings
        let cross = |level: f64| {
            let (mut lo, mut hi) = (1.0, 1.2);
            for _ in 0..80 {
                let mid = 0.5 * (lo + hi);
                if d.reference_shift(mid) < level * a {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            lo
        };
        let t1090 = cross(0.9) - cross(0.1);
        assert!((t1090 - 0.118_06).abs() < 1e-4, "{t1090}");
        assert_eq!(d.reference_shift(1.2), a);
        assert_eq!(d.reference_shift(1.0), 0.0);
    }

    #[test]
    fn switch_after_window_keeps_drive_off() {
        let f = FieldProfile::uniform(6.0, 10.0).unwrap();
        let d = StarkDrive::step_drive(22.0, 1e6, 0.2, f, StarkCoefficient::fitted()).unwrap();
        assert!((0..1000).all(|i| d.reference_shift(i as f64 * 0.05) == 0.0));
        assert!(StarkDrive::step_drive(
            1.0,
            0.0,
            -1.0,
            FieldProfile::uniform(6.0, 10.0).unwrap(),
            StarkCoefficient::fitted()
        )
        .is_err());
    }

    proptest! {
        #[test]
        fn shift_is_linear_in_voltage(v in -100.0f64..100.0, a in -4.0f64..4.0, z in 0.0f64..10.0) {
            let f = FieldProfile::quadratic_bump(6.0, 10.0, 0.002).unwrap();
            let k = StarkCoefficient::fitted();
            let s1 = shift_at(v, &f, k, z).unwrap();
            let sa = shift_at(a * v, &f, k, z).unwrap();
            prop_assert!((sa - a * s1).abs() <= 1e-12 * (1.0 + sa.abs()));
        }

        #[test]
        fn uniform_field_shift_is_position_independent(v in -50.0f64..50.0, z1 in 0.0f64..10.0, z2 in 0.0f64..10.0) {
            let f = FieldProfile::uniform(6.0, 10.0).unwrap();
            let k = StarkCoefficient::literature();
            prop_assert_eq!(shift_at(v, &f, k, z1).unwrap(), shift_at(v, &f, k, z2).unwrap());
        }

        #[test]
        fn ramp_is_monotone(x in -1.0f64..2.0, dx in 0.0f64..0.5) {
            prop_assert!(raised_cosine(x + dx) >= raised_cosine(x));
        }
    }
}
