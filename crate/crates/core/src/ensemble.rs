//! Spectral absorption structures for the two Stark-sign ion groups.
//!
//! Densities are stored per group on a uniform detuning grid as the fraction
//! of that group's unburned population that remains (`1` = untouched
//! background, `0` = fully burned). Each group is half of the ions, so the
//! local intensity absorption coefficient is `alpha0 * (g_a + g_b) / 2`.
//!
//! Group A shifts by `+s` and group B by `-s` under an applied field. A burn
//! acts in the lab frame: the window is fixed and the groups are displaced,
//! so an A ion with zero-field detuning `d` is burned when `d + s` falls in
//! the window.

use std::io::Write;

use crate::error::{Error, Result};
use crate::real::Real;
use crate::stark::StarkCoefficient;

/// Uniform, zero-centred detuning axis in MHz.
#[derive(Debug, Clone, PartialEq)]
pub struct DetuningGrid<T> {
    half_count: usize,
    spacing: T,
}

impl<T: Real> DetuningGrid<T> {
    /// Grid covering `[-half_span, half_span]` (rounded outward to a whole
    /// number of spacings).
    pub fn new(half_span_mhz: T, spacing_mhz: T) -> Result<Self> {
        if !(spacing_mhz > T::zero()) || !spacing_mhz.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "grid spacing must be positive, got {spacing_mhz}"
            )));
        }
        if !(half_span_mhz >= spacing_mhz) || !half_span_mhz.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "grid half span {half_span_mhz} must be at least one spacing ({spacing_mhz})"
            )));
        }
        let ratio = (half_span_mhz / spacing_mhz).f64();
        // absorb representation error before rounding up
        let half_count = (ratio - 1e-9).ceil() as usize;
        Ok(Self {
            half_count,
            spacing: spacing_mhz,
        })
    }

    pub fn len(&self) -> usize {
        2 * self.half_count + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self) -> T {
        self.spacing
    }

    pub fn half_count(&self) -> usize {
        self.half_count
    }

    /// Detuning of node `i` (node `half_count` is exactly 0).
    #[inline]
    pub fn point(&self, i: usize) -> T {
        T::c(i as f64 - self.half_count as f64) * self.spacing
    }

    pub fn points(&self) -> Vec<T> {
        (0..self.len()).map(|i| self.point(i)).collect()
    }

    pub fn lo(&self) -> T {
        self.point(0)
    }

    pub fn hi(&self) -> T {
        self.point(self.len() - 1)
    }

    pub fn half_span(&self) -> T {
        self.hi()
    }

    /// Trapezoidal quadrature weights (MHz) over the grid.
    pub fn trapezoid_weights(&self) -> Vec<T> {
        let n = self.len();
        (0..n)
            .map(|i| {
                if i == 0 || i == n - 1 {
                    self.spacing * T::c(0.5)
                } else {
                    self.spacing
                }
            })
            .collect()
    }

    /// Fractional node index of detuning `d`, with near-integer values
    /// snapped so that grid-aligned lookups are exact.
    fn fractional_index(&self, d: T) -> T {
        let x = d / self.spacing + T::c(self.half_count as f64);
        let r = x.round();
        if (x - r).abs() < T::c(1e-9) {
            r
        } else {
            x
        }
    }

    /// Linear interpolation of node values at `d`, holding the edge values
    /// flat beyond the grid.
    pub fn interpolate(&self, values: &[T], d: T) -> T {
        debug_assert_eq!(values.len(), self.len());
        let x = self.fractional_index(d);
        let last = self.len() - 1;
        if x <= T::zero() {
            return values[0];
        }
        if x >= T::c(last as f64) {
            return values[last];
        }
        let i = x.floor();
        let frac = x - i;
        let i = i.to_usize().unwrap_or(0).min(last);
        if frac == T::zero() || i == last {
            values[i]
        } else {
            values[i] + (values[i + 1] - values[i]) * frac
        }
    }
}

/// Fraction of one group's unburned population remaining at each node.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupProfile<T>(Vec<T>);

impl<T: Real> GroupProfile<T> {
    /// Unburned background (density 1 everywhere).
    pub fn background(len: usize) -> Self {
        Self(vec![T::one(); len])
    }

    pub fn from_values(values: Vec<T>) -> Result<Self> {
        if let Some(v) = values
            .iter()
            .find(|v| !(**v >= T::zero() && **v <= T::one()))
        {
            return Err(Error::InvalidParameter(format!(
                "group density {v} outside [0, 1]"
            )));
        }
        Ok(Self(values))
    }

    pub fn density(&self) -> &[T] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Which Stark-sign group.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Group {
    /// Positive Stark coefficient: shifts by `+s`.
    A,
    /// Negative Stark coefficient: shifts by `-s`.
    B,
}

impl Group {
    /// `+1` for A, `-1` for B.
    pub fn sign<T: Real>(self) -> T {
        match self {
            Group::A => T::one(),
            Group::B => -T::one(),
        }
    }
}

/// Bulk medium constants.
#[derive(Debug, Clone, PartialEq)]
pub struct Medium<T> {
    /// Intensity absorption coefficient of the full two-group background.
    pub alpha0_per_mm: T,
    pub length_mm: T,
    pub refractive_index: T,
    pub t1_us: T,
    pub t2_us: T,
    /// Homogeneous linewidth (FWHM) for the linear-response oracle. `None`
    /// derives it from `T2` as `1 / (pi T2)`.
    pub gamma_h_khz: Option<T>,
}

impl<T: Real> Medium<T> {
    /// 10 mm crystal, n = 1.8, T1 = 164 µs, T2 = 318 µs.
    pub fn with_alpha0(alpha0_per_mm: T) -> Self {
        Self {
            alpha0_per_mm,
            length_mm: T::c(10.0),
            refractive_index: T::c(1.8),
            t1_us: T::c(164.0),
            t2_us: T::c(318.0),
            gamma_h_khz: None,
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |what: &str, v: T| {
            Err(Error::InvalidParameter(format!("{what} must be positive, got {v}")))
        };
        if !(self.alpha0_per_mm >= T::zero()) || !self.alpha0_per_mm.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "alpha0 must be non-negative and finite, got {}",
                self.alpha0_per_mm
            )));
        }
        if !(self.length_mm > T::zero()) || !self.length_mm.is_finite() {
            return bad("length", self.length_mm);
        }
        if !(self.refractive_index > T::zero()) {
            return bad("refractive index", self.refractive_index);
        }
        if !(self.t1_us > T::zero()) {
            return bad("T1", self.t1_us);
        }
        if !(self.t2_us > T::zero()) {
            return bad("T2", self.t2_us);
        }
        if self.t2_us > T::c(2.0) * self.t1_us {
            return Err(Error::InvalidParameter(format!(
                "T2 = {} exceeds 2 T1 = {}",
                self.t2_us,
                T::c(2.0) * self.t1_us
            )));
        }
        if let Some(g) = self.gamma_h_khz {
            if !(g >= T::zero()) {
                return Err(Error::InvalidParameter(format!(
                    "homogeneous linewidth must be non-negative, got {g}"
                )));
            }
        }
        Ok(())
    }
}

/// One spectral hole-burning pass.
#[derive(Debug, Clone, PartialEq)]
pub struct BurnStep<T> {
    /// Lab-frame window `[lo, hi]` in MHz.
    pub window: (T, T),
    pub applied_voltage: T,
    /// Error-function roll-off scale of the window edges (MHz).
    pub edge_width: T,
    /// Fraction removed inside the window per pass.
    pub depth: T,
}

impl<T: Real> BurnStep<T> {
    fn validate(&self) -> Result<()> {
        let (lo, hi) = self.window;
        if !(lo < hi) {
            return Err(Error::InvalidParameter(format!(
                "burn window [{lo}, {hi}] is empty"
            )));
        }
        if !(self.edge_width >= T::zero()) {
            return Err(Error::InvalidParameter(format!(
                "edge width must be non-negative, got {}",
                self.edge_width
            )));
        }
        if !(self.depth >= T::zero() && self.depth <= T::one()) {
            return Err(Error::InvalidParameter(format!(
                "burn depth {} outside [0, 1]",
                self.depth
            )));
        }
        Ok(())
    }
}

/// Smooth indicator of `[lo, hi]` with error-function edges of scale `w`.
pub fn window_indicator<T: Real>(x: T, lo: T, hi: T, w: T) -> T {
    if w == T::zero() {
        return if x >= lo && x <= hi { T::one() } else { T::zero() };
    }
    let half = T::c(0.5);
    (half * (((x - lo) / w).erf() - ((x - hi) / w).erf())).max(T::zero()).min(T::one())
}

/// Recipe for the frequency-shifter structure.
#[derive(Debug, Clone, PartialEq)]
pub struct ShifterRecipe<T> {
    /// Width of the single-sign shell (MHz).
    pub wide_hole_mhz: T,
    /// Width of the transmission window (MHz).
    pub narrow_hole_mhz: T,
    pub prep_voltage_v: T,
    pub gap_mm: T,
    pub edge_width_mhz: T,
    /// Stark coefficient used while burning the wide hole.
    pub prep_coefficient: StarkCoefficient<T>,
}

impl<T: Real> Default for ShifterRecipe<T> {
    fn default() -> Self {
        Self {
            wide_hole_mhz: T::c(18.0),
            narrow_hole_mhz: T::c(1.0),
            prep_voltage_v: T::c(88.0),
            gap_mm: T::c(6.0),
            edge_width_mhz: T::c(0.1),
            prep_coefficient: StarkCoefficient::literature(),
        }
    }
}

/// Two-group inhomogeneous ion ensemble on a detuning grid.
#[derive(Debug, Clone, PartialEq)]
pub struct IonEnsemble<T> {
    grid: DetuningGrid<T>,
    g_a: GroupProfile<T>,
    g_b: GroupProfile<T>,
    medium: Medium<T>,
}

const FEATURE_TOL: f64 = 1e-9;

impl<T: Real> IonEnsemble<T> {
    /// Flat, unburned background: both groups at density 1.
    pub fn new_background(grid: DetuningGrid<T>, medium: Medium<T>) -> Result<Self> {
        medium.validate()?;
        let n = grid.len();
        Ok(Self {
            grid,
            g_a: GroupProfile::background(n),
            g_b: GroupProfile::background(n),
            medium,
        })
    }

    /// Replaces both profiles (validated against the grid).
    pub fn with_profiles(&self, g_a: GroupProfile<T>, g_b: GroupProfile<T>) -> Result<Self> {
        if g_a.len() != self.grid.len() || g_b.len() != self.grid.len() {
            return Err(Error::InvalidInput(format!(
                "profile lengths {}/{} do not match grid of {}",
                g_a.len(),
                g_b.len(),
                self.grid.len()
            )));
        }
        Ok(Self {
            g_a,
            g_b,
            ..self.clone()
        })
    }

    pub fn with_medium(&self, medium: Medium<T>) -> Result<Self> {
        medium.validate()?;
        Ok(Self {
            medium,
            ..self.clone()
        })
    }

    /// Multiplies both groups by a Gaussian inhomogeneous line (peak 1).
    pub fn with_inhomogeneous_line(&self, center_mhz: T, fwhm_mhz: T) -> Result<Self> {
        if !(fwhm_mhz > T::zero()) {
            return Err(Error::InvalidParameter(format!(
                "inhomogeneous FWHM must be positive, got {fwhm_mhz}"
            )));
        }
        let k = T::c(4.0 * std::f64::consts::LN_2) / (fwhm_mhz * fwhm_mhz);
        let shape = |d: T| (-(d - center_mhz) * (d - center_mhz) * k).exp();
        let pts = self.grid.points();
        let a = self.g_a.0.iter().zip(&pts).map(|(g, d)| *g * shape(*d)).collect();
        let b = self.g_b.0.iter().zip(&pts).map(|(g, d)| *g * shape(*d)).collect();
        Ok(Self {
            g_a: GroupProfile(a),
            g_b: GroupProfile(b),
            ..self.clone()
        })
    }

    pub fn grid(&self) -> &DetuningGrid<T> {
        &self.grid
    }

    pub fn medium(&self) -> &Medium<T> {
        &self.medium
    }

    pub fn profile(&self, group: Group) -> &GroupProfile<T> {
        match group {
            Group::A => &self.g_a,
            Group::B => &self.g_b,
        }
    }

    pub fn g_a(&self) -> &[T] {
        self.g_a.density()
    }

    pub fn g_b(&self) -> &[T] {
        self.g_b.density()
    }

    pub fn alpha0(&self) -> T {
        self.medium.alpha0_per_mm
    }

    pub fn length(&self) -> T {
        self.medium.length_mm
    }

    /// Optical depth of the full background, `alpha0 * L`.
    pub fn optical_depth(&self) -> T {
        self.medium.alpha0_per_mm * self.medium.length_mm
    }

    /// Homogeneous linewidth (FWHM) in kHz.
    pub fn gamma_h_khz(&self) -> T {
        self.medium.gamma_h_khz.unwrap_or_else(|| {
            T::c(1000.0) / (T::PI() * self.medium.t2_us)
        })
    }

    /// Local intensity absorption coefficient at each node (mm⁻¹).
    pub fn total_absorption(&self) -> Vec<T> {
        let half = T::c(0.5);
        self.g_a
            .0
            .iter()
            .zip(&self.g_b.0)
            .map(|(a, b)| self.medium.alpha0_per_mm * (*a + *b) * half)
            .collect()
    }

    /// Outermost detunings where either group departs from the edge
    /// background, or `None` for a featureless ensemble.
    pub fn feature_extent(&self) -> Option<(T, T)> {
        let n = self.grid.len();
        let (ea, eb) = (self.g_a.0[0], self.g_b.0[0]);
        let (fa, fb) = (self.g_a.0[n - 1], self.g_b.0[n - 1]);
        let tol = T::c(FEATURE_TOL);
        let differs = |i: usize| {
            let a = self.g_a.0[i];
            let b = self.g_b.0[i];
            ((a - ea).abs() > tol || (b - eb).abs() > tol)
                && ((a - fa).abs() > tol || (b - fb).abs() > tol)
        };
        let first = (0..n).find(|&i| differs(i))?;
        let last = (0..n).rev().find(|&i| differs(i))?;
        Some((self.grid.point(first), self.grid.point(last)))
    }

    /// Distance from the outermost structure feature to the nearest grid
    /// edge. Features include the error-function roll-off down to `1e-9`,
    /// which reaches more than four edge widths past a window edge.
    pub fn guard_band(&self) -> T {
        match self.feature_extent() {
            None => self.grid.half_span(),
            Some((lo, hi)) => (lo - self.grid.lo()).min(self.grid.hi() - hi).max(T::zero()),
        }
    }

    /// Applies one burn pass under `applied_voltage`.
    pub fn burn(
        &self,
        step: &BurnStep<T>,
        stark_coeff: StarkCoefficient<T>,
        gap_mm: T,
    ) -> Result<Self> {
        step.validate()?;
        if !(gap_mm > T::zero()) {
            return Err(Error::InvalidParameter(format!(
                "electrode gap must be positive, got {gap_mm}"
            )));
        }
        let s = stark_coeff.mhz_per_v_per_mm() * step.applied_voltage / gap_mm;
        let (lo, hi) = step.window;
        let margin = T::c(3.0) * step.edge_width;
        // Zero-field detunings hit in each group: A at window - s, B at window + s.
        for (name, off) in [("A", -s), ("B", s)] {
            let (zlo, zhi) = (lo + off - margin, hi + off + margin);
            if zlo < self.grid.lo() || zhi > self.grid.hi() {
                return Err(Error::OutOfRange(format!(
                    "burn window [{lo}, {hi}] at {} V maps group {name} to [{zlo}, {zhi}] MHz, \
                     outside grid [{}, {}]",
                    step.applied_voltage,
                    self.grid.lo(),
                    self.grid.hi()
                )));
            }
        }
        let pts = self.grid.points();
        let burn_group = |g: &[T], sign: T| -> Vec<T> {
            g.iter()
                .zip(&pts)
                .map(|(gv, d)| {
                    let e = window_indicator(*d + sign * s, lo, hi, step.edge_width);
                    (*gv * (T::one() - step.depth * e)).max(T::zero()).min(T::one())
                })
                .collect()
        };
        Ok(Self {
            g_a: GroupProfile(burn_group(&self.g_a.0, T::one())),
            g_b: GroupProfile(burn_group(&self.g_b.0, -T::one())),
            ..self.clone()
        })
    }

    /// Builds the frequency-shifter structure: a wide hole burned under the
    /// preparation field (leaving a single-sign shell around 0 MHz), followed
    /// by a narrow field-free hole at 0 MHz.
    pub fn prepare_frequency_shifter(
        grid: DetuningGrid<T>,
        medium: Medium<T>,
        recipe: &ShifterRecipe<T>,
    ) -> Result<Self> {
        let ShifterRecipe {
            wide_hole_mhz: wide,
            narrow_hole_mhz: narrow,
            prep_voltage_v,
            gap_mm,
            edge_width_mhz,
            prep_coefficient,
        } = recipe.clone();
        if !(narrow > T::zero()) {
            return Err(Error::InvalidPreparation(format!(
                "narrow hole must be positive, got {narrow}"
            )));
        }
        if !(wide > narrow) {
            return Err(Error::InvalidPreparation(format!(
                "wide hole ({wide} MHz) must exceed the narrow hole ({narrow} MHz); \
                 otherwise no single-sign shell remains"
            )));
        }
        if !(gap_mm > T::zero()) {
            return Err(Error::InvalidParameter(format!(
                "electrode gap must be positive, got {gap_mm}"
            )));
        }
        let s = prep_coefficient.mhz_per_v_per_mm() * prep_voltage_v / gap_mm;
        let half = T::c(0.5);
        // The opposite-sign hole lands at -2s; it must clear the shell.
        if !(s.abs() >= wide * half + T::c(3.0) * edge_width_mhz) {
            return Err(Error::InvalidPreparation(format!(
                "preparation shift {s} MHz cannot separate the groups over a {wide} MHz shell"
            )));
        }
        let e = Self::new_background(grid, medium)?;
        let wide_burn = BurnStep {
            window: (-s - wide * half, -s + wide * half),
            applied_voltage: prep_voltage_v,
            edge_width: edge_width_mhz,
            depth: T::one(),
        };
        let narrow_burn = BurnStep {
            window: (-narrow * half, narrow * half),
            applied_voltage: T::zero(),
            edge_width: edge_width_mhz,
            depth: T::one(),
        };
        e.burn(&wide_burn, prep_coefficient, gap_mm)?
            .burn(&narrow_burn, prep_coefficient, gap_mm)
    }

    /// Profiles after a static shift: A translated by `+ds`, B by `-ds`.
    pub fn shifted_profiles(&self, ds: T) -> Result<(GroupProfile<T>, GroupProfile<T>)> {
        let guard = self.guard_band();
        if ds.abs() > guard {
            return Err(Error::OutOfRange(format!(
                "shift {ds} MHz exceeds the guard band of {guard} MHz"
            )));
        }
        if ds == T::zero() {
            return Ok((self.g_a.clone(), self.g_b.clone()));
        }
        let pts = self.grid.points();
        let a = pts.iter().map(|d| self.grid.interpolate(&self.g_a.0, *d - ds)).collect();
        let b = pts.iter().map(|d| self.grid.interpolate(&self.g_b.0, *d + ds)).collect();
        Ok((GroupProfile(a), GroupProfile(b)))
    }

    /// Ensemble with both groups statically displaced by `±ds`.
    pub fn shifted(&self, ds: T) -> Result<Self> {
        let (a, b) = self.shifted_profiles(ds)?;
        self.with_profiles(a, b)
    }

    /// Writes `detuning_mhz,g_a,g_b,alpha_total_per_mm`.
    pub fn write_profiles_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "detuning_mhz,g_a,g_b,alpha_total_per_mm")?;
        let alpha = self.total_absorption();
        for (i, al) in alpha.iter().enumerate() {
            writeln!(
                w,
                "{},{},{},{}",
                self.grid.point(i).f64(),
                self.g_a.0[i].f64(),
                self.g_b.0[i].f64(),
                al.f64()
            )?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid() -> DetuningGrid<f64> {
        DetuningGrid::new(50.0, 0.02).unwrap()
    }

    fn coeff_16mhz_at_88v() -> StarkCoefficient<f64> {
        // 16 MHz at 88 V over 6 mm
        StarkCoefficient::from_mhz_per_v_per_mm(16.0 * 6.0 / 88.0)
    }

    #[test]
    fn grid_is_symmetric_and_uniform() {
        let g = DetuningGrid::<f64>::new(40.0, 0.02).unwrap();
        assert_eq!(g.len(), 4001);
        assert_eq!(g.point(2000), 0.0);
        assert!((g.lo() + 40.0).abs() < 1e-12);
        assert!((g.hi() - 40.0).abs() < 1e-12);
        assert!(DetuningGrid::<f64>::new(40.0, 0.0).is_err());
        assert!(DetuningGrid::<f64>::new(0.01, 0.02).is_err());
    }

    #[test]
    fn background_has_expected_optical_depth() {
        let e = IonEnsemble::new_background(grid(), Medium::with_alpha0(2.0)).unwrap();
        assert!((e.optical_depth() - 20.0).abs() < 1e-12);
        assert!(e.g_a().iter().zip(e.g_b()).all(|(a, b)| a + b == 2.0));
        assert!(e.total_absorption().iter().all(|a| *a == 2.0));
        assert!(e.feature_extent().is_none());
    }

    #[test]
    fn zero_alpha_is_transparent_and_negative_is_rejected() {
        let e = IonEnsemble::new_background(grid(), Medium::with_alpha0(0.0)).unwrap();
        assert!(e.total_absorption().iter().all(|a| *a == 0.0));
        assert!(IonEnsemble::new_background(grid(), Medium::with_alpha0(-1.0)).is_err());
        let mut m = Medium::with_alpha0(2.0);
        m.length_mm = 0.0;
        assert!(matches!(
            IonEnsemble::new_background(grid(), m),
            Err(Error::InvalidParameter(_))
        ));
        let mut m = Medium::with_alpha0(2.0);
        m.t2_us = 400.0;
        assert!(IonEnsemble::new_background(grid(), m).is_err());
    }

    #[test]
    fn burn_under_field_displaces_groups() {
        let e = IonEnsemble::new_background(grid(), Medium::with_alpha0(2.0)).unwrap();
        let step = BurnStep {
            window: (-9.0, 9.0),
            applied_voltage: 88.0,
            edge_width: 0.0,
            depth: 1.0,
        };
        let b = e.burn(&step, coeff_16mhz_at_88v(), 6.0).unwrap();
        let g = b.grid();
        let at = |v: &[f64], d: f64| g.interpolate(v, d);
        // group A loses zero-field [-25, -7], group B loses [7, 25]
        assert_eq!(at(b.g_a(), -16.0), 0.0);
        assert_eq!(at(b.g_a(), -24.9), 0.0);
        assert_eq!(at(b.g_a(), -6.9), 1.0);
        assert_eq!(at(b.g_a(), 16.0), 1.0);
        assert_eq!(at(b.g_b(), 16.0), 0.0);
        assert_eq!(at(b.g_b(), 7.1), 0.0);
        assert_eq!(at(b.g_b(), -16.0), 1.0);
    }

    #[test]
    fn zero_depth_burn_is_identity() {
        let e = IonEnsemble::new_background(grid(), Medium::with_alpha0(2.0)).unwrap();
        let step = BurnStep {
            window: (-3.0, 3.0),
            applied_voltage: 10.0,
            edge_width: 0.1,
            depth: 0.0,
        };
        let b = e.burn(&step, coeff_16mhz_at_88v(), 6.0).unwrap();
        assert_eq!(b.g_a(), e.g_a());
        assert_eq!(b.g_b(), e.g_b());
    }

    #[test]
    fn repeated_half_depth_burns_compose_multiplicatively() {
        let e = IonEnsemble::new_background(grid(), Medium::with_alpha0(2.0)).unwrap();
        let step = BurnStep {
            window: (-2.0, 2.0),
            applied_voltage: 0.0,
            edge_width: 0.0,
            depth: 0.5,
        };
        let c = StarkCoefficient::fitted();
        let b = e.burn(&step, c, 6.0).unwrap().burn(&step, c, 6.0).unwrap();
        let mid = b.grid().half_count();
        assert_eq!(b.g_a()[mid], 0.25);
        assert_eq!(b.g_b()[mid], 0.25);
        assert_eq!(b.g_a()[0], 1.0);
    }

    #[test]
    fn burn_outside_grid_is_out_of_range() {
        let e = IonEnsemble::new_background(grid(), Medium::with_alpha0(2.0)).unwrap();
        let step = BurnStep {
            window: (40.0, 50.0),
            applied_voltage: 0.0,
            edge_width: 0.1,
            depth: 1.0,
        };
        assert!(matches!(
            e.burn(&step, StarkCoefficient::fitted(), 6.0),
            Err(Error::OutOfRange(_))
        ));
        let bad = BurnStep {
            window: (1.0, -1.0),
            ..step
        };
        assert!(matches!(
            e.burn(&bad, StarkCoefficient::fitted(), 6.0),
            Err(Error::InvalidParameter(_))
        ));
    }

    #[test]
    fn frequency_shifter_has_single_sign_shell() {
        let e = IonEnsemble::prepare_frequency_shifter(
            grid(),
            Medium::with_alpha0(4.0),
            &ShifterRecipe {
                prep_coefficient: coeff_16mhz_at_88v(),
                ..ShifterRecipe::default()
            },
        )
        .unwrap();
        let g = e.grid();
        let w = 0.3;
        for i in 0..g.len() {
            let d = g.point(i);
            let shell = d.abs() <= 9.0 - w && d.abs() >= 0.5 + w;
            if shell {
                assert!(e.g_b()[i] < 1e-3, "gB={} at {d}", e.g_b()[i]);
                assert!(e.g_a()[i] > 0.9, "gA={} at {d}", e.g_a()[i]);
            }
            if d.abs() <= 0.5 - w {
                assert!(e.g_a()[i] < 1e-4 && e.g_b()[i] < 1e-4);
            }
        }
        // complementary single-sign region of group B around -32 MHz
        let at = |v: &[f64], d: f64| g.interpolate(v, d);
        assert!(at(e.g_a(), -32.0) < 1e-6);
        assert!(at(e.g_b(), -32.0) > 0.999);
        let (lo, hi) = e.feature_extent().unwrap();
        assert!(lo < -40.9 && lo > -41.6, "lo={lo}");
        assert!(hi > 8.9 && hi < 9.6, "hi={hi}");
    }

    #[test]
    fn degenerate_shifter_recipes_are_rejected() {
        let same = ShifterRecipe {
            narrow_hole_mhz: 18.0,
            ..ShifterRecipe::default()
        };
        assert!(matches!(
            IonEnsemble::prepare_frequency_shifter(grid(), Medium::with_alpha0(4.0), &same),
            Err(Error::InvalidPreparation(_))
        ));
        let weak = ShifterRecipe {
            prep_voltage_v: 20.0,
            ..ShifterRecipe::default()
        };
        assert!(matches!(
            IonEnsemble::prepare_frequency_shifter(grid(), Medium::with_alpha0(4.0), &weak),
            Err(Error::InvalidPreparation(_))
        ));
    }

    #[test]
    fn shifted_window_follows_group_a() {
        let e = IonEnsemble::prepare_frequency_shifter(
            grid(),
            Medium::with_alpha0(4.0),
            &ShifterRecipe::default(),
        )
        .unwrap();
        let (a, b) = e.shifted_profiles(0.0).unwrap();
        assert_eq!(a.density(), e.g_a());
        assert_eq!(b.density(), e.g_b());
        let s = e.shifted(3.8).unwrap();
        let total = s.total_absorption();
        let g = s.grid();
        // minimum of absorption now at +3.8 MHz
        let imin = (0..g.len())
            .filter(|&i| g.point(i).abs() < 6.0)
            .min_by(|&i, &j| total[i].partial_cmp(&total[j]).unwrap())
            .unwrap();
        let centre = {
            let idx: Vec<usize> = (0..g.len())
                .filter(|&i| g.point(i).abs() < 6.0 && total[i] <= total[imin] + 1e-9)
                .collect();
            (g.point(idx[0]) + g.point(*idx.last().unwrap())) / 2.0
        };
        assert!((centre - 3.8).abs() < 0.03, "centre={centre}");
        assert!(e.shifted_profiles(12.0).is_err());
    }

    /// Full width at half maximum of the combined transmission window around
    /// `center` (absorption below half the shell level).
    fn window_width(e: &IonEnsemble<f64>, center: f64) -> f64 {
        let g = e.grid();
        let tot = e.total_absorption();
        let level = 0.5 * e.alpha0() * 0.5;
        let c = g.half_count() as i64 + (center / g.spacing()).round() as i64;
        let c = c as usize;
        let mut up = c;
        while tot[up + 1] < level {
            up += 1;
        }
        let mut dn = c;
        while tot[dn - 1] < level {
            dn -= 1;
        }
        g.point(up) - g.point(dn)
    }

    #[test]
    fn window_narrows_as_opposite_group_encroaches() {
        let e = IonEnsemble::prepare_frequency_shifter(
            grid(),
            Medium::with_alpha0(4.0),
            &ShifterRecipe::default(),
        )
        .unwrap();
        let mut last = f64::INFINITY;
        for k in 0..=9 {
            let ds = 0.5 * k as f64;
            let w = window_width(&e.shifted(ds).unwrap(), ds);
            assert!(w <= last + 1e-12, "width grew at ds={ds}: {w} > {last}");
            last = w;
        }
        assert!(last < 0.9);
    }

    #[test]
    fn profiles_csv_has_header_and_rows() {
        let g = DetuningGrid::new(1.0, 0.5).unwrap();
        let e = IonEnsemble::new_background(g, Medium::with_alpha0(2.0)).unwrap();
        let mut buf = Vec::new();
        e.write_profiles_csv(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = s.lines().collect();
        assert_eq!(lines[0], "detuning_mhz,g_a,g_b,alpha_total_per_mm");
        assert_eq!(lines.len(), 6);
        assert_eq!(lines[3], "0,1,1,2");
    }

    proptest! {
        #[test]
        fn burns_keep_density_bounds_and_commute(
            c1 in -20.0f64..-2.0, w1 in 0.2f64..3.0,
            c2 in 2.0f64..20.0, w2 in 0.2f64..3.0,
            d1 in 0.0f64..1.0, d2 in 0.0f64..1.0,
            edge in 0.0f64..0.3, volts in -30.0f64..30.0,
        ) {
            let e = IonEnsemble::new_background(grid(), Medium::with_alpha0(2.0)).unwrap();
            let s1 = BurnStep { window: (c1 - w1, c1 + w1), applied_voltage: volts, edge_width: edge, depth: d1 };
            let s2 = BurnStep { window: (c2 - w2, c2 + w2), applied_voltage: volts, edge_width: edge, depth: d2 };
            let k = StarkCoefficient::fitted();
            let ab = e.burn(&s1, k, 6.0).unwrap().burn(&s2, k, 6.0).unwrap();
            let ba = e.burn(&s2, k, 6.0).unwrap().burn(&s1, k, 6.0).unwrap();
            for (x, y) in ab.g_a().iter().zip(ba.g_a()) {
                prop_assert!((x - y).abs() < 1e-15);
                prop_assert!(*x >= 0.0 && *x <= 1.0);
            }
            for (x, y) in ab.g_b().iter().zip(ba.g_b()) {
                prop_assert!((x - y).abs() < 1e-15);
                prop_assert!(*x >= 0.0 && *x <= 1.0);
            }
        }

        #[test]
        fn grid_aligned_shifts_compose_exactly(ka in -100i32..100, kb in -100i32..100) {
            let e = IonEnsemble::prepare_frequency_shifter(
                grid(), Medium::with_alpha0(4.0), &ShifterRecipe::default()).unwrap();
            let h = e.grid().spacing();
            let (a, b) = (ka as f64 * h, kb as f64 * h);
            let twice = e.shifted(a).unwrap().shifted(b);
            let once = e.shifted(a + b);
            if let (Ok(t), Ok(o)) = (twice, once) {
                // exact wherever neither translation read past the grid edge
                prop_assert_eq!(t.g_a(), o.g_a());
                prop_assert_eq!(t.g_b(), o.g_b());
            }
        }
    }
}
