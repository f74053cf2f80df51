//! Post-processing of simulated envelopes and medium snapshots: spectra,
//! heterodyne beats, instantaneous frequency, efficiencies, excitation maps
//! and the loss estimate for large frequency hops.

use std::f64::consts::{PI, TAU};
use std::io::Write;

use num_complex::Complex;
use rustfft::FftPlanner;

use crate::ensemble::{window_indicator, DetuningGrid, Group, GroupProfile, IonEnsemble, Medium};
use crate::error::{Error, Result};
use crate::oracle::{self, argmax};
use crate::real::Real;
use crate::solver::{self, PulseSpec, SimResult, Snapshot, SolverConfig};
use crate::stark::{FieldProfile, StarkCoefficient, StarkDrive};

/// Fraction of the peak envelope below which phase derivatives are masked.
pub const DEFAULT_THRESHOLD: f64 = 0.05;

/// Taper applied before the Fourier transform.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Taper {
    #[default]
    Hann,
    Rectangular,
}

/// Power spectrum of a complex envelope, normalized to unit peak.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum<T> {
    pub freq_mhz: Vec<T>,
    pub power: Vec<T>,
    /// Peak of `|X(f)|²` before normalization (`X = dt Σ x e^{-i2πft}`).
    pub peak_power: T,
    pub df_mhz: T,
}

impl<T: Real> Spectrum<T> {
    /// Peak frequency, refined by a parabola through the log-power of the
    /// three highest bins (exact for Gaussian lines).
    pub fn peak_frequency(&self) -> T {
        let i = argmax(&self.power);
        if i == 0 || i + 1 >= self.power.len() {
            return self.freq_mhz[i];
        }
        let tiny = T::c(1e-300);
        let logs: Vec<T> = self.power[i - 1..=i + 1].iter().map(|p| p.max(tiny).ln()).collect();
        let x = &self.freq_mhz[i - 1..=i + 1];
        oracle::refine_peak(x, &logs, 1)
    }

    /// `Σ |X|² df`, the energy of the tapered envelope.
    pub fn energy(&self) -> T {
        let terms: Vec<T> = self.power.iter().map(|p| *p * self.peak_power).collect();
        crate::reduce::pairwise_sum(&terms) * self.df_mhz
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "freq_mhz,power")?;
        for (f, p) in self.freq_mhz.iter().zip(&self.power) {
            writeln!(w, "{},{}", f.f64(), p.f64())?;
        }
        Ok(())
    }
}

/// Hann-tapered spectrum on the natural frequency axis of the samples.
pub fn spectrum<T: Real>(envelope: &[Complex<T>], dt_us: T) -> Result<Spectrum<T>> {
    spectrum_with(envelope, dt_us, Taper::Hann, envelope.len())
}

/// Spectrum with a chosen taper, zero padded to `nfft` points.
pub fn spectrum_with<T: Real>(
    envelope: &[Complex<T>],
    dt_us: T,
    taper: Taper,
    nfft: usize,
) -> Result<Spectrum<T>> {
    let n = envelope.len();
    if n < 64 {
        return Err(Error::InvalidInput(format!(
            "spectrum needs at least 64 samples, got {n}"
        )));
    }
    if nfft < n {
        return Err(Error::InvalidInput("FFT length shorter than the record".into()));
    }
    if !(dt_us > T::zero()) {
        return Err(Error::InvalidParameter("sample step must be positive".into()));
    }
    let dt = dt_us.f64();
    let mut buf: Vec<Complex<f64>> = envelope
        .iter()
        .enumerate()
        .map(|(k, z)| {
            let w = match taper {
                Taper::Hann => 0.5 - 0.5 * (TAU * k as f64 / (n - 1) as f64).cos(),
                Taper::Rectangular => 1.0,
            };
            Complex::new(z.re.f64(), z.im.f64()) * (w * dt)
        })
        .collect();
    buf.resize(nfft, Complex::new(0.0, 0.0));
    FftPlanner::<f64>::new().plan_fft_forward(nfft).process(&mut buf);
    let df = 1.0 / (nfft as f64 * dt);
    let half = nfft.div_ceil(2);
    // ascending frequency: negative bins first
    let order: Vec<usize> = (half..nfft).chain(0..half).collect();
    let freq: Vec<T> = order
        .iter()
        .map(|&k| {
            let kk = if k < half { k as f64 } else { k as f64 - nfft as f64 };
            T::c(kk * df)
        })
        .collect();
    let raw: Vec<f64> = order.iter().map(|&k| buf[k].norm_sqr()).collect();
    let peak = raw.iter().cloned().fold(0.0, f64::max);
    if peak == 0.0 {
        return Err(Error::InvalidInput("envelope is identically zero".into()));
    }
    Ok(Spectrum {
        freq_mhz: freq,
        power: raw.iter().map(|p| T::c(p / peak)).collect(),
        peak_power: T::c(peak),
        df_mhz: T::c(df),
    })
}

/// Detected intensity `|E + A e^{i2π f_LO τ}|²` on the envelope's time base.
pub fn beat_pattern<T: Real>(
    envelope: &[Complex<T>],
    dt_us: T,
    lo_detuning_mhz: T,
    lo_amplitude: T,
) -> Result<Vec<T>> {
    if !(lo_detuning_mhz.abs() * dt_us < T::c(0.5)) {
        return Err(Error::InvalidParameter(format!(
            "local oscillator at {lo_detuning_mhz} MHz is above the Nyquist limit of the {dt_us} µs sampling"
        )));
    }
    let two_pi = T::c(TAU);
    Ok(envelope
        .iter()
        .enumerate()
        .map(|(n, e)| {
            let ph = two_pi * lo_detuning_mhz * T::c(n as f64) * dt_us;
            (*e + Complex::new(ph.cos(), ph.sin()) * lo_amplitude).norm_sqr()
        })
        .collect())
}

/// Instantaneous frequency with its validity mask.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct InstFreqTrace<T> {
    pub times_us: Vec<T>,
    pub freq_mhz: Vec<T>,
    pub valid: Vec<bool>,
}

impl<T: Real> InstFreqTrace<T> {
    /// True when no sample passed the threshold.
    pub fn is_empty(&self) -> bool {
        !self.valid.iter().any(|v| *v)
    }

    /// `(time, frequency)` of the valid samples.
    pub fn valid_points(&self) -> Vec<(T, T)> {
        self.times_us
            .iter()
            .zip(&self.freq_mhz)
            .zip(&self.valid)
            .filter(|(_, v)| **v)
            .map(|((t, f), _)| (*t, *f))
            .collect()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "tau_us,freq_mhz,valid")?;
        for i in 0..self.times_us.len() {
            writeln!(
                w,
                "{},{},{}",
                self.times_us[i].f64(),
                self.freq_mhz[i].f64(),
                u8::from(self.valid[i])
            )?;
        }
        Ok(())
    }
}

/// `f(τ) = (1/2π) d arg E / dτ` by central phase differences, masked where
/// `|E|` is below `threshold` times its peak. Returns an empty trace when
/// nothing passes.
pub fn instantaneous_frequency<T: Real>(
    envelope: &[Complex<T>],
    dt_us: T,
    threshold: T,
) -> InstFreqTrace<T> {
    let n = envelope.len();
    let peak = envelope.iter().map(|z| z.norm()).fold(T::zero(), |a, b| a.max(b));
    let cut = peak * threshold;
    let strong: Vec<bool> = envelope.iter().map(|z| peak > T::zero() && z.norm() > cut).collect();
    if n < 2 || !strong.iter().any(|s| *s) {
        return InstFreqTrace::default();
    }
    let two_pi = T::c(TAU);
    let mut trace = InstFreqTrace {
        times_us: Vec::with_capacity(n),
        freq_mhz: Vec::with_capacity(n),
        valid: Vec::with_capacity(n),
    };
    for i in 0..n {
        let (a, b) = if i == 0 {
            (0, 1)
        } else if i == n - 1 {
            (n - 2, n - 1)
        } else {
            (i - 1, i + 1)
        };
        let z = envelope[b] * envelope[a].conj();
        let f = z.im.atan2(z.re) / (two_pi * dt_us * T::c((b - a) as f64));
        trace.times_us.push(T::c(i as f64) * dt_us);
        trace.freq_mhz.push(f);
        trace.valid.push(strong[a] && strong[i] && strong[b]);
    }
    trace
}

/// Recovers the instantaneous frequency from a detected beat by isolating
/// the heterodyne sideband in the Fourier domain.
///
/// The cross term sits at `f - f_LO`; the local oscillator must be offset
/// far enough that it does not overlap the baseband `|E|²` term.
pub fn sideband_frequency<T: Real>(
    beat: &[T],
    dt_us: T,
    lo_detuning_mhz: T,
    threshold: T,
) -> Result<InstFreqTrace<T>> {
    let n = beat.len();
    if n < 64 {
        return Err(Error::InvalidInput(format!("beat record too short ({n} samples)")));
    }
    let lo = lo_detuning_mhz.f64();
    if lo == 0.0 {
        return Err(Error::InvalidParameter(
            "sideband separation needs a non-zero local-oscillator offset".into(),
        ));
    }
    let dt = dt_us.f64();
    let mut buf: Vec<Complex<f64>> = beat.iter().map(|v| Complex::new(v.f64(), 0.0)).collect();
    let mut planner = FftPlanner::<f64>::new();
    planner.plan_fft_forward(n).process(&mut buf);
    let df = 1.0 / (n as f64 * dt);
    let side = -lo.signum();
    for (k, v) in buf.iter_mut().enumerate() {
        let f = if k < n.div_ceil(2) { k as f64 } else { k as f64 - n as f64 } * df;
        if !(f * side > 0.5 * lo.abs()) {
            *v = Complex::new(0.0, 0.0);
        }
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    let rec: Vec<Complex<T>> = buf
        .iter()
        .enumerate()
        .map(|(k, z)| {
            let ph = TAU * lo * k as f64 * dt;
            let e = z * Complex::new(ph.cos(), ph.sin()) / n as f64;
            Complex::new(T::c(e.re), T::c(e.im))
        })
        .collect();
    Ok(instantaneous_frequency(&rec, dt_us, threshold))
}

/// Transmitted energy of `shifted` relative to `reference`.
pub fn relative_efficiency<T: Real>(shifted: &SimResult<T>, reference: &SimResult<T>) -> Result<T> {
    if shifted.dt_us != reference.dt_us || shifted.transmitted.len() != reference.transmitted.len() {
        return Err(Error::InvalidInput(
            "efficiency needs runs on the same time base".into(),
        ));
    }
    let e0 = reference.transmitted_energy();
    if !(e0 > T::zero()) {
        return Err(Error::InvalidReference(
            "reference run transmitted no energy".into(),
        ));
    }
    Ok(shifted.transmitted_energy() / e0)
}

/// Stored-excitation density `Σ_G g_G (1 + r_z)/2` on a lab-frame
/// detuning axis, per slab.
#[derive(Debug, Clone, PartialEq)]
pub struct ExcitationMap<T> {
    pub detuning_mhz: Vec<T>,
    pub z_mm: Vec<T>,
    /// Laid out `[slab][detuning]`.
    pub values: Vec<T>,
}

impl<T: Real> ExcitationMap<T> {
    pub fn get(&self, slab: usize, j: usize) -> T {
        self.values[slab * self.detuning_mhz.len() + j]
    }

    /// Trapezoidal integral over detuning and position; times `α0 / 2π²`
    /// this is the energy stored in the medium.
    pub fn total(&self) -> T {
        let nd = self.detuning_mhz.len();
        let wd = trapezoid_axis(&self.detuning_mhz);
        let wz = trapezoid_axis(&self.z_mm);
        let terms: Vec<T> = (0..self.values.len())
            .map(|i| self.values[i] * wd[i % nd] * wz[i / nd])
            .collect();
        crate::reduce::pairwise_sum(&terms)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "z_mm,detuning_mhz,excitation")?;
        for (k, z) in self.z_mm.iter().enumerate() {
            for (j, d) in self.detuning_mhz.iter().enumerate() {
                writeln!(w, "{},{},{}", z.f64(), d.f64(), self.get(k, j).f64())?;
            }
        }
        Ok(())
    }
}

fn trapezoid_axis<T: Real>(x: &[T]) -> Vec<T> {
    let n = x.len();
    (0..n)
        .map(|i| {
            let left = if i > 0 { x[i] - x[i - 1] } else { T::zero() };
            let right = if i + 1 < n { x[i + 1] - x[i] } else { T::zero() };
            (left + right) * T::c(0.5)
        })
        .collect()
}

/// Excitation map on the ensemble grid, in the lab frame (each group
/// displaced by its Stark shift at the snapshot time).
pub fn excitation_map<T: Real>(snap: &Snapshot<T>, ensemble: &IonEnsemble<T>) -> ExcitationMap<T> {
    excitation_map_on(snap, ensemble, &ensemble.grid().points())
}

/// Excitation map sampled on an arbitrary lab-frame detuning axis.
pub fn excitation_map_on<T: Real>(
    snap: &Snapshot<T>,
    ensemble: &IonEnsemble<T>,
    axis_mhz: &[T],
) -> ExcitationMap<T> {
    map_of(snap, ensemble, axis_mhz, &[Group::A, Group::B])
}

/// Excitation map of a single Stark group.
pub fn group_excitation_map_on<T: Real>(
    snap: &Snapshot<T>,
    ensemble: &IonEnsemble<T>,
    group: Group,
    axis_mhz: &[T],
) -> ExcitationMap<T> {
    map_of(snap, ensemble, axis_mhz, &[group])
}

fn map_of<T: Real>(
    snap: &Snapshot<T>,
    ensemble: &IonEnsemble<T>,
    axis_mhz: &[T],
    groups: &[Group],
) -> ExcitationMap<T> {
    let grid = ensemble.grid();
    let nd = snap.detunings();
    let mut values = Vec::with_capacity(snap.slabs() * axis_mhz.len());
    let half = T::c(0.5);
    for k in 0..snap.slabs() {
        let per_group: Vec<(T, Vec<T>)> = groups
            .iter()
            .map(|g| {
                let dens = ensemble.profile(*g).density();
                let m: Vec<T> = (0..nd)
                    .map(|j| dens[j] * (snap.bloch(*g, k, j).z + T::one()) * half)
                    .collect();
                (g.sign::<T>() * snap.slab_shift_mhz[k], m)
            })
            .collect();
        for nu in axis_mhz {
            let mut v = T::zero();
            for (s, m) in &per_group {
                v += grid.interpolate(m, *nu - *s);
            }
            values.push(v);
        }
    }
    ExcitationMap {
        detuning_mhz: axis_mhz.to_vec(),
        z_mm: snap.z_mm.clone(),
        values,
    }
}

/// Relative L2 distance between the `after` map and the `before` map with
/// each group translated by its own shift, `+ds` for A and `-ds` for B.
pub fn translation_residual<T: Real>(
    before: &Snapshot<T>,
    after: &Snapshot<T>,
    ensemble: &IonEnsemble<T>,
    ds_mhz: T,
) -> T {
    let axis = ensemble.grid().points();
    let mut diff = Vec::new();
    let mut norm = Vec::new();
    for g in [Group::A, Group::B] {
        let moved: Vec<T> = axis.iter().map(|a| *a - g.sign::<T>() * ds_mhz).collect();
        let post = group_excitation_map_on(after, ensemble, g, &axis);
        let pre = group_excitation_map_on(before, ensemble, g, &moved);
        squared_gaps(&post, &pre, &mut diff, &mut norm);
    }
    (crate::reduce::pairwise_sum(&diff) / crate::reduce::pairwise_sum(&norm)).sqrt()
}

/// Same as [`translation_residual`] but with the summed map moved rigidly
/// by `ds`; group B, which moves the other way, contributes in full.
pub fn rigid_translation_residual<T: Real>(
    before: &Snapshot<T>,
    after: &Snapshot<T>,
    ensemble: &IonEnsemble<T>,
    ds_mhz: T,
) -> T {
    let axis = ensemble.grid().points();
    let moved: Vec<T> = axis.iter().map(|a| *a - ds_mhz).collect();
    let post = excitation_map_on(after, ensemble, &axis);
    let pre = excitation_map_on(before, ensemble, &moved);
    let (mut diff, mut norm) = (Vec::new(), Vec::new());
    squared_gaps(&post, &pre, &mut diff, &mut norm);
    (crate::reduce::pairwise_sum(&diff) / crate::reduce::pairwise_sum(&norm)).sqrt()
}

fn squared_gaps<T: Real>(post: &ExcitationMap<T>, pre: &ExcitationMap<T>, diff: &mut Vec<T>, norm: &mut Vec<T>) {
    for (a, b) in post.values.iter().zip(&pre.values) {
        diff.push((*a - *b) * (*a - *b));
        norm.push(*b * *b);
    }
}

/// Least-squares line with its coefficient of determination.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFit<T> {
    pub slope: T,
    pub intercept: T,
    pub r_squared: T,
}

pub fn linear_fit<T: Real>(x: &[T], y: &[T]) -> Result<LinearFit<T>> {
    let n = x.len();
    if n < 2 || y.len() != n {
        return Err(Error::InvalidInput("linear fit needs two or more matching points".into()));
    }
    let nf = T::c(n as f64);
    let mx = x.iter().fold(T::zero(), |a, b| a + *b) / nf;
    let my = y.iter().fold(T::zero(), |a, b| a + *b) / nf;
    let (mut sxx, mut sxy, mut syy) = (T::zero(), T::zero(), T::zero());
    for (a, b) in x.iter().zip(y) {
        sxx += (*a - mx) * (*a - mx);
        sxy += (*a - mx) * (*b - my);
        syy += (*b - my) * (*b - my);
    }
    if sxx == T::zero() {
        return Err(Error::InvalidInput("linear fit needs distinct abscissae".into()));
    }
    let slope = sxy / sxx;
    let r_squared = if syy == T::zero() { T::one() } else { sxy * sxy / (sxx * syy) };
    Ok(LinearFit {
        slope,
        intercept: my - slope * mx,
        r_squared,
    })
}

/// How the loss of a large frequency hop is estimated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossMethod {
    /// `1 - exp(-2πΓT)`.
    Eq5,
    /// Maxwell–Bloch run of a scaled-down two-hole structure.
    Simulate,
}

/// Scaled-down two-hole structure for a hop of `hop_mhz`.
///
/// At zero field, group A carries the transmission window of width Γ at
/// 0 MHz. Group B has holes of half width `side_half_width_mhz` at 0 and at
/// twice the hop; at the final field the window of A lands in the second
/// hole of B. On the way it crosses the B ions in between.
#[derive(Debug, Clone, PartialEq)]
pub struct HopScheme<T> {
    pub hop_mhz: T,
    pub side_half_width_mhz: T,
    pub alpha0_per_mm: T,
    pub half_span_mhz: T,
    pub spacing_mhz: T,
    pub edge_width_mhz: T,
    pub pulse_fwhm_us: T,
    pub dt_us: T,
    pub dz_mm: T,
}

impl<T: Real> Default for HopScheme<T> {
    fn default() -> Self {
        Self {
            hop_mhz: T::c(10.0),
            side_half_width_mhz: T::c(2.5),
            alpha0_per_mm: T::c(4.0),
            half_span_mhz: T::c(40.0),
            spacing_mhz: T::c(0.05),
            edge_width_mhz: T::c(0.05),
            pulse_fwhm_us: T::c(1.0),
            dt_us: T::c(0.0016),
            dz_mm: T::c(0.04),
        }
    }
}

/// Simulated hops sharing one zero-field reference run.
#[derive(Debug, Clone, PartialEq)]
pub struct HopSweep<T> {
    pub reference: SimResult<T>,
    /// `(switching time in ns, loss 1 - η_rel, shifted run)`.
    pub hops: Vec<(T, T, SimResult<T>)>,
}

impl<T: Real> HopScheme<T> {
    /// Two-hole ensemble with a window of width `gamma_mhz`.
    pub fn ensemble(&self, gamma_mhz: T) -> Result<IonEnsemble<T>> {
        let two = T::c(2.0);
        let (h, w, e) = (self.hop_mhz, self.side_half_width_mhz, self.edge_width_mhz);
        if !(gamma_mhz > T::zero()) || !(h > T::zero()) || !(w > gamma_mhz) {
            return Err(Error::InvalidPreparation(
                "hop scheme needs a positive hop and side holes wider than the window".into(),
            ));
        }
        if !(two * h - w > w + T::c(3.0) * e) {
            return Err(Error::InvalidPreparation(format!(
                "hop of {h} MHz is too small to separate the two side holes"
            )));
        }
        let needed = T::c(3.0) * h + w + T::c(6.0) * e;
        if self.half_span_mhz < needed {
            return Err(Error::Precondition(format!(
                "detuning grid of ±{} MHz cannot hold the hop scheme; need ±{needed} MHz",
                self.half_span_mhz
            )));
        }
        let grid = DetuningGrid::new(self.half_span_mhz, self.spacing_mhz)?;
        let pts = grid.points();
        let g_a: Vec<T> = pts
            .iter()
            .map(|d| T::one() - window_indicator(*d, -gamma_mhz / two, gamma_mhz / two, e))
            .collect();
        let g_b: Vec<T> = pts
            .iter()
            .map(|d| {
                T::one()
                    - window_indicator(*d, -w, w, e)
                    - window_indicator(*d, two * h - w, two * h + w, e)
            })
            .map(|g| g.max(T::zero()))
            .collect();
        let base = IonEnsemble::new_background(grid, Medium::with_alpha0(self.alpha0_per_mm))?;
        base.with_profiles(GroupProfile::from_values(g_a)?, GroupProfile::from_values(g_b)?)
    }

    /// Runs the hop with a raised-cosine switch of each duration in
    /// `switch_ns` against a common zero-field reference; the loss is
    /// `1 - η_rel`.
    pub fn simulate(&self, gamma_mhz: T, switch_ns: &[T]) -> Result<HopSweep<T>> {
        if switch_ns.iter().any(|t| !(*t >= T::zero())) {
            return Err(Error::InvalidParameter("switching time must be non-negative".into()));
        }
        let ens = self.ensemble(gamma_mhz)?;
        let delay = oracle::group_delay_at(&ens, T::zero(), T::zero())?;
        let peak = T::c(2.0) * self.pulse_fwhm_us;
        let pulse = PulseSpec::gaussian(self.pulse_fwhm_us, peak);
        let duration = peak + T::c(2.0) * delay + T::c(5.0) * self.pulse_fwhm_us;
        let length = ens.length();
        let gap = T::c(6.0);
        let coeff = StarkCoefficient::<T>::fitted();
        let volts = self.hop_mhz * gap / coeff.mhz_per_v_per_mm();
        let mut cfg = SolverConfig::with_duration(duration);
        cfg.dt_us = self.dt_us;
        cfg.dz_mm = self.dz_mm;
        let reference = solver::propagate(&ens, &pulse, &StarkDrive::off(length), &cfg)?;
        let mut hops = Vec::with_capacity(switch_ns.len());
        for &ns in switch_ns {
            let rise = ns * T::c(1e-3);
            // centre the ramp on the moment the pulse is halfway through
            let tau0 = peak + delay * T::c(0.5) - rise * T::c(0.5);
            let field = FieldProfile::uniform(gap, length)?;
            let drive = StarkDrive::step_drive(volts, tau0, rise, field, coeff)?;
            let shifted = solver::propagate(&ens, &pulse, &drive, &cfg)?;
            let eta = relative_efficiency(&shifted, &reference)?;
            hops.push((ns, T::one() - eta, shifted));
        }
        Ok(HopSweep { reference, hops })
    }
}

/// Loss of a frequency hop through a window of width Γ switched in `T`.
pub fn extended_shift_loss<T: Real>(gamma_mhz: T, switch_ns: T, method: LossMethod) -> Result<T> {
    match method {
        LossMethod::Eq5 => oracle::eq5_loss(gamma_mhz, switch_ns),
        LossMethod::Simulate => Ok(HopScheme::default().simulate(gamma_mhz, &[switch_ns])?.hops[0].1),
    }
}

/// Energy stored in the medium implied by an excitation map.
pub fn stored_energy<T: Real>(map: &ExcitationMap<T>, ensemble: &IonEnsemble<T>) -> T {
    map.total() * ensemble.alpha0() / T::c(2.0 * PI * PI)
}
