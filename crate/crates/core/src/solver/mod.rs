//! Maxwell–Bloch propagation in the retarded frame.
//!
//! The field obeys a first-order equation in `z`, driven by the
//! polarization of both ion groups:
//!
//! ```text
//! dΩ/dz = -i α0 Σ_G ∫ (g_G / 2) (r_x + i r_y)_G dΔ
//! ```
//!
//! with `Ω` angular and `Δ` cyclic, so a flat background attenuates the
//! amplitude at `α0 / 2` (intensity at `α0`). The medium is cut into slabs;
//! within each slab every ion is advanced through the whole time window by
//! RK4 under the local field, and the field is then carried to the next slab
//! with a second-order Adams–Bashforth step (forward Euler for the first
//! slab).
//!
//! Ions beyond the detuning grid respond adiabatically to the narrowband
//! field. Their contribution is added analytically from the grid-edge
//! densities, so truncating the grid does not leave a spurious phase and
//! delay error.
//!
//! Energies are in cyclic units (MHz² µs). Probability conservation of the
//! Bloch equations gives, without relaxation,
//! `∂z|Ω|² + ∂τ (α0 / 2π²) Σ_G ∫ g_G p_G dΔ = 0` with `p = (1 + r_z)/2`, which
//! fixes the calibration of the stored energy `U_med` against the energy
//! that has entered minus the energy that has left.

mod bloch;
mod pulse;

pub use bloch::{integrate_constant_field, rabi_reference, BlochVector, Decay};
pub use pulse::{PulseShape, PulseSpec};

use std::f64::consts::{PI, TAU};
use std::io::Write;

use num_complex::Complex;
use rayon::prelude::*;

use crate::ensemble::{Group, IonEnsemble};
use crate::error::{Error, Result};
use crate::real::{Real, C_MM_PER_US};
use crate::reduce::{pairwise_sum, pairwise_sum_vecs};
use crate::stark::StarkDrive;
use bloch::{rk4, StepInputs};

/// Ions per work unit; fixed so that reductions do not depend on threads.
const BLOCK: usize = 128;
const LANES: usize = 8;

/// Resolution and bookkeeping options for [`propagate`].
#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig<T> {
    pub dt_us: T,
    /// Requested slab thickness; rounded down to divide the crystal evenly.
    pub dz_mm: T,
    /// Length of the retarded-time window starting at 0.
    pub duration_us: T,
    pub snapshot_times_us: Vec<T>,
    /// Record the largest Bloch-norm excess over the run.
    pub track_norm: bool,
    /// Refuse results whose transmitted pulse is still arriving at the end
    /// of the window.
    pub check_window: bool,
    /// Include the analytic contribution of ions beyond the grid.
    pub tail_correction: bool,
}

impl<T: Real> SolverConfig<T> {
    /// 2 ns steps, 50 µm slabs.
    pub fn with_duration(duration_us: T) -> Self {
        Self {
            dt_us: T::c(0.002),
            dz_mm: T::c(0.05),
            duration_us,
            snapshot_times_us: Vec::new(),
            track_norm: false,
            check_window: true,
            tail_correction: true,
        }
    }

    pub fn steps(&self) -> usize {
        (self.duration_us / self.dt_us).round().to_usize().unwrap_or(0) + 1
    }

    pub fn slabs(&self, length_mm: T) -> usize {
        ((length_mm / self.dz_mm).f64() - 1e-9).ceil().max(1.0) as usize
    }
}

/// Cumulative and stored energies on the time axis.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EnergyHistory<T> {
    /// Energy held by the ions.
    pub u_med: Vec<T>,
    /// Electromagnetic energy inside the crystal.
    pub u_em: Vec<T>,
    /// Energy that has crossed the input face.
    pub entered: Vec<T>,
    /// Energy that has crossed the output face.
    pub exited: Vec<T>,
}

impl<T: Real> EnergyHistory<T> {
    /// Fraction of the total input energy that is inside the crystal.
    pub fn inside_fraction(&self) -> Vec<T> {
        let total = *self.entered.last().unwrap_or(&T::zero());
        if total <= T::zero() {
            return vec![T::zero(); self.entered.len()];
        }
        self.entered
            .iter()
            .zip(&self.exited)
            .map(|(e, x)| (*e - *x) / total)
            .collect()
    }

    /// `U_med / (U_med + U_em)` at every step.
    pub fn medium_fraction(&self) -> Vec<T> {
        self.u_med
            .iter()
            .zip(&self.u_em)
            .map(|(m, e)| {
                let s = *m + *e;
                if s > T::zero() {
                    *m / s
                } else {
                    T::zero()
                }
            })
            .collect()
    }
}

/// Full medium state at one time step.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot<T> {
    pub requested_us: T,
    pub step: usize,
    pub tau_us: T,
    /// Group-A shift at the reference position (MHz).
    pub drive_shift_mhz: T,
    /// Group-A shift in each slab (MHz); group B has the opposite sign.
    pub slab_shift_mhz: Vec<T>,
    pub z_mm: Vec<T>,
    /// Field at each slab (cyclic MHz).
    pub omega: Vec<Complex<T>>,
    detunings: usize,
    /// `[x, y, w]` for group A then B, each laid out `[slab][node]`.
    state: [[Vec<T>; 3]; 2],
}

impl<T: Real> Snapshot<T> {
    fn empty(requested_us: T, step: usize, dt: T, shift: T, z_mm: Vec<T>, detunings: usize) -> Self {
        let n = z_mm.len() * detunings;
        let zeros = || [vec![T::zero(); n], vec![T::zero(); n], vec![T::zero(); n]];
        Self {
            requested_us,
            step,
            tau_us: T::c(step as f64) * dt,
            drive_shift_mhz: shift,
            slab_shift_mhz: vec![T::zero(); z_mm.len()],
            omega: vec![Complex::new(T::zero(), T::zero()); z_mm.len()],
            z_mm,
            detunings,
            state: [zeros(), zeros()],
        }
    }

    fn gi(group: Group) -> usize {
        match group {
            Group::A => 0,
            Group::B => 1,
        }
    }

    pub fn slabs(&self) -> usize {
        self.z_mm.len()
    }

    pub fn detunings(&self) -> usize {
        self.detunings
    }

    /// Bloch vector of the ion at zero-field grid node `node` in slab `slab`.
    pub fn bloch(&self, group: Group, slab: usize, node: usize) -> BlochVector<T> {
        let s = &self.state[Self::gi(group)];
        let i = slab * self.detunings + node;
        BlochVector {
            x: s[0][i],
            y: s[1][i],
            z: s[2][i] - T::one(),
        }
    }

    /// Excitation probability `(1 + r_z)/2`, laid out `[slab][node]` on the
    /// zero-field detuning grid of the group.
    pub fn population(&self, group: Group) -> Vec<T> {
        self.state[Self::gi(group)][2]
            .iter()
            .map(|w| *w * T::c(0.5))
            .collect()
    }

    /// `(U_med, U_em)` held at this instant.
    pub fn energy_partition(&self, ensemble: &IonEnsemble<T>) -> (T, T) {
        energy_partition(self, ensemble)
    }

    /// Writes `z_mm,detuning_mhz,rx_a,ry_a,rz_a,rx_b,ry_b,rz_b` rows on the
    /// zero-field grid.
    pub fn write_csv<W: Write>(&self, ensemble: &IonEnsemble<T>, mut w: W) -> Result<()> {
        writeln!(w, "z_mm,detuning_mhz,rx_a,ry_a,rz_a,rx_b,ry_b,rz_b")?;
        let grid = ensemble.grid();
        for (k, z) in self.z_mm.iter().enumerate() {
            for j in 0..self.detunings {
                let a = self.bloch(Group::A, k, j);
                let b = self.bloch(Group::B, k, j);
                writeln!(
                    w,
                    "{},{},{},{},{},{},{},{}",
                    z.f64(),
                    grid.point(j).f64(),
                    a.x.f64(),
                    a.y.f64(),
                    a.z.f64(),
                    b.x.f64(),
                    b.y.f64(),
                    b.z.f64()
                )?;
            }
        }
        Ok(())
    }
}

/// Trapezoidal weights over `n` equally spaced points.
fn trapezoid<T: Real>(n: usize, h: T) -> Vec<T> {
    (0..n)
        .map(|i| if i == 0 || i + 1 == n { h * T::c(0.5) } else { h })
        .collect()
}

/// Absorbers beyond the grid edges, treated as flat wings of the edge
/// density: a phase `Σ g ln Δ` and a group delay `Σ g / Δ` per unit `α0`.
struct Tail<T> {
    lo: T,
    hi: T,
    /// `(sign, g at the low edge, g at the high edge)` per group, halved.
    edges: Vec<(T, T, T)>,
}

impl<T: Real> Tail<T> {
    fn new(ensemble: &IonEnsemble<T>) -> Self {
        let grid = ensemble.grid();
        let last = grid.len() - 1;
        let edges = [Group::A, Group::B]
            .iter()
            .map(|g| {
                let d = ensemble.profile(*g).density();
                (g.sign(), d[0] * T::c(0.5), d[last] * T::c(0.5))
            })
            .collect();
        Self {
            lo: -grid.lo(),
            hi: grid.hi(),
            edges,
        }
    }

    fn phase(&self, shift: T) -> T {
        let mut p = T::zero();
        for &(sign, glo, ghi) in &self.edges {
            p += glo * (self.lo - sign * shift).ln() - ghi * (self.hi + sign * shift).ln();
        }
        p
    }

    fn delay(&self, shift: T) -> T {
        let mut d = T::zero();
        for &(sign, glo, ghi) in &self.edges {
            d += ghi / (self.hi + sign * shift) + glo / (self.lo - sign * shift);
        }
        d
    }
}

/// Energy held reactively by absorbers beyond the grid edges; part of
/// `U_med` but absent from any excitation map.
pub fn off_grid_energy<T: Real>(snap: &Snapshot<T>, ensemble: &IonEnsemble<T>) -> T {
    let nz = snap.z_mm.len();
    let dz = if nz > 1 { snap.z_mm[1] - snap.z_mm[0] } else { T::zero() };
    let zw = trapezoid(nz, dz);
    let tail = Tail::new(ensemble);
    let c1 = ensemble.alpha0() / T::c(4.0 * PI * PI);
    let held: Vec<T> = (0..nz)
        .map(|k| zw[k] * c1 * tail.delay(snap.slab_shift_mhz[k]) * snap.omega[k].norm_sqr())
        .collect();
    pairwise_sum(&held)
}

/// `(U_med, U_em)` for a snapshot: `U_med = (α0 / 2π²) ∫∫ Σ g p dΔ dz` and
/// `U_em = (n / c) ∫ |Ω|² dz`, with [`off_grid_energy`] added to `U_med`.
pub fn energy_partition<T: Real>(snap: &Snapshot<T>, ensemble: &IonEnsemble<T>) -> (T, T) {
    let nz = snap.z_mm.len();
    let dz = if nz > 1 { snap.z_mm[1] - snap.z_mm[0] } else { T::zero() };
    let zw = trapezoid(nz, dz);
    let tw = ensemble.grid().trapezoid_weights();
    let half = T::c(0.5);
    let per_slab: Vec<T> = (0..nz)
        .map(|k| {
            let terms: Vec<T> = (0..snap.detunings)
                .map(|j| {
                    let i = k * snap.detunings + j;
                    tw[j]
                        * (ensemble.g_a()[j] * snap.state[0][2][i]
                            + ensemble.g_b()[j] * snap.state[1][2][i])
                        * half
                })
                .collect();
            pairwise_sum(&terms) * zw[k]
        })
        .collect();
    let u_med = pairwise_sum(&per_slab) * ensemble.alpha0() / T::c(2.0 * PI * PI)
        + off_grid_energy(snap, ensemble);
    let em: Vec<T> = snap
        .omega
        .iter()
        .zip(&zw)
        .map(|(o, w)| o.norm_sqr() * *w)
        .collect();
    let u_em = pairwise_sum(&em) * ensemble.medium().refractive_index / T::c(C_MM_PER_US);
    (u_med, u_em)
}

/// Output of one propagation run.
#[derive(Debug, Clone, PartialEq)]
pub struct SimResult<T> {
    pub dt_us: T,
    pub dz_mm: T,
    /// Input envelope at z = 0 (cyclic MHz).
    pub input: Vec<Complex<T>>,
    /// Envelope at z = L (cyclic MHz).
    pub transmitted: Vec<Complex<T>>,
    pub energy: EnergyHistory<T>,
    pub snapshots: Vec<Snapshot<T>>,
    /// Group-A drive shift at the reference position, per step (MHz).
    pub drive_shift_mhz: Vec<T>,
    /// Largest `|r|² - 1` seen, when tracked.
    pub max_norm_excess: Option<T>,
}

impl<T: Real> SimResult<T> {
    pub fn times(&self) -> Vec<T> {
        (0..self.transmitted.len())
            .map(|n| T::c(n as f64) * self.dt_us)
            .collect()
    }

    pub fn transmitted_energy(&self) -> T {
        envelope_energy(&self.transmitted, self.dt_us)
    }

    pub fn input_energy(&self) -> T {
        envelope_energy(&self.input, self.dt_us)
    }

    /// Writes `tau_us,re_mhz,im_mhz`.
    pub fn write_transmitted_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "tau_us,re_mhz,im_mhz")?;
        for (n, z) in self.transmitted.iter().enumerate() {
            writeln!(
                w,
                "{},{},{}",
                (T::c(n as f64) * self.dt_us).f64(),
                z.re.f64(),
                z.im.f64()
            )?;
        }
        Ok(())
    }

    /// Writes `tau_us,u_med,u_em,entered,exited,drive_shift_mhz`.
    pub fn write_energy_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "tau_us,u_med,u_em,entered,exited,drive_shift_mhz")?;
        let e = &self.energy;
        for n in 0..e.u_med.len() {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                (T::c(n as f64) * self.dt_us).f64(),
                e.u_med[n].f64(),
                e.u_em[n].f64(),
                e.entered[n].f64(),
                e.exited[n].f64(),
                self.drive_shift_mhz[n].f64()
            )?;
        }
        Ok(())
    }
}

/// `∫ |Ω|² dτ` by the rectangle rule.
pub fn envelope_energy<T: Real>(env: &[Complex<T>], dt: T) -> T {
    let terms: Vec<T> = env.iter().map(|z| z.norm_sqr()).collect();
    pairwise_sum(&terms) * dt
}

fn cumulative_energy<T: Real>(env: &[Complex<T>], dt: T) -> Vec<T> {
    let mut out = Vec::with_capacity(env.len());
    let mut acc = T::zero();
    let half = dt * T::c(0.5);
    for (n, z) in env.iter().enumerate() {
        if n > 0 {
            acc += half * (env[n - 1].norm_sqr() + z.norm_sqr());
        }
        out.push(acc);
    }
    out
}

/// Ions of one group, padded to a multiple of the lane width.
struct Block<T> {
    sign: T,
    group: Group,
    nodes: Vec<usize>,
    delta0: Vec<T>,
    weight: Vec<T>,
}

fn build_blocks<T: Real>(ensemble: &IonEnsemble<T>) -> Vec<Block<T>> {
    let grid = ensemble.grid();
    let tw = grid.trapezoid_weights();
    let tau = T::c(TAU);
    let mut blocks = Vec::new();
    for group in [Group::A, Group::B] {
        let g = ensemble.profile(group).density();
        let active: Vec<usize> = (0..g.len()).filter(|&j| g[j] > T::zero()).collect();
        for chunk in active.chunks(BLOCK) {
            let padded = chunk.len().div_ceil(LANES) * LANES;
            let mut delta0: Vec<T> = chunk.iter().map(|&j| tau * grid.point(j)).collect();
            let mut weight: Vec<T> = chunk
                .iter()
                .map(|&j| tw[j] * g[j] * T::c(0.5))
                .collect();
            delta0.resize(padded, T::zero());
            weight.resize(padded, T::zero());
            blocks.push(Block {
                sign: group.sign(),
                group,
                nodes: chunk.to_vec(),
                delta0,
                weight,
            });
        }
    }
    blocks
}

struct BlockOut<T> {
    px: Vec<T>,
    py: Vec<T>,
    pw: Vec<T>,
    /// `(snapshot index, x, y, w)` for the real ions of the block.
    snaps: Vec<(usize, Vec<T>, Vec<T>, Vec<T>)>,
    norm_excess: T,
}

/// Fixed-order sum of lane accumulators.
#[inline(always)]
fn lane_sum<T: Real>(a: &[T; LANES]) -> T {
    ((a[0] + a[1]) + (a[2] + a[3])) + ((a[4] + a[5]) + (a[6] + a[7]))
}

/// Fields and detuning offsets at whole and half steps for one slab.
struct SlabInputs<'a, T> {
    om_r: &'a [T],
    om_i: &'a [T],
    /// Angular group-A shift.
    shift: &'a [T],
}

#[allow(clippy::too_many_arguments)]
fn run_block<T: Real>(
    blk: &Block<T>,
    inp: &SlabInputs<T>,
    steps: usize,
    dt: T,
    decay: Decay<T>,
    snap_steps: &[(usize, usize)],
    track_norm: bool,
) -> BlockOut<T> {
    let b = blk.delta0.len();
    let mut x = vec![T::zero(); b];
    let mut y = vec![T::zero(); b];
    let mut w = vec![T::zero(); b];
    let mut px = vec![T::zero(); steps];
    let mut py = vec![T::zero(); steps];
    let mut pw = vec![T::zero(); steps];
    let mut snaps = Vec::new();
    let mut norm_excess = T::zero();
    let real = blk.nodes.len();
    let record = |n: usize, x: &[T], y: &[T], w: &[T], snaps: &mut Vec<_>| {
        for &(si, step) in snap_steps {
            if step == n {
                snaps.push((si, x[..real].to_vec(), y[..real].to_vec(), w[..real].to_vec()));
            }
        }
    };
    record(0, &x, &y, &w, &mut snaps);
    for n in 0..steps - 1 {
        let h = 2 * n;
        let s = StepInputs {
            or: [inp.om_r[h], inp.om_r[h + 1], inp.om_r[h + 2]],
            oi: [inp.om_i[h], inp.om_i[h + 1], inp.om_i[h + 2]],
            d: [
                blk.sign * inp.shift[h],
                blk.sign * inp.shift[h + 1],
                blk.sign * inp.shift[h + 2],
            ],
        };
        for (((xi, yi), wi), d0) in x
            .iter_mut()
            .zip(y.iter_mut())
            .zip(w.iter_mut())
            .zip(blk.delta0.iter())
        {
            let si = StepInputs {
                or: s.or,
                oi: s.oi,
                d: [*d0 + s.d[0], *d0 + s.d[1], *d0 + s.d[2]],
            };
            let (nx, ny, nw) = rk4(*xi, *yi, *wi, &si, dt, decay);
            *xi = nx;
            *yi = ny;
            *wi = nw;
        }
        let mut ax = [T::zero(); LANES];
        let mut ay = [T::zero(); LANES];
        let mut aw = [T::zero(); LANES];
        for (((cx, cy), cw), cg) in x
            .chunks_exact(LANES)
            .zip(y.chunks_exact(LANES))
            .zip(w.chunks_exact(LANES))
            .zip(blk.weight.chunks_exact(LANES))
        {
            for l in 0..LANES {
                ax[l] += cg[l] * cx[l];
                ay[l] += cg[l] * cy[l];
                aw[l] += cg[l] * cw[l];
            }
        }
        px[n + 1] = lane_sum(&ax);
        py[n + 1] = lane_sum(&ay);
        pw[n + 1] = lane_sum(&aw);
        if track_norm {
            for i in 0..real {
                let rz = w[i] - T::one();
                let e = x[i] * x[i] + y[i] * y[i] + rz * rz - T::one();
                if e > norm_excess {
                    norm_excess = e;
                }
            }
        }
        record(n + 1, &x, &y, &w, &mut snaps);
    }
    BlockOut {
        px,
        py,
        pw,
        snaps,
        norm_excess,
    }
}

/// Values at whole and half steps: `out[2n] = f[n]`, `out[2n+1]` from a
/// four-point cubic (quadratic at the ends).
fn half_step_samples<T: Real>(f: &[T]) -> Vec<T> {
    let n = f.len();
    let mut out = vec![T::zero(); 2 * n - 1];
    for i in 0..n {
        out[2 * i] = f[i];
    }
    if n == 2 {
        out[1] = (f[0] + f[1]) * T::c(0.5);
        return out;
    }
    let c16 = T::c(1.0 / 16.0);
    let c8 = T::c(1.0 / 8.0);
    for i in 0..n - 1 {
        out[2 * i + 1] = if i == 0 {
            (T::c(3.0) * f[0] + T::c(6.0) * f[1] - f[2]) * c8
        } else if i == n - 2 {
            (T::c(3.0) * f[n - 1] + T::c(6.0) * f[n - 2] - f[n - 3]) * c8
        } else {
            (T::c(9.0) * (f[i] + f[i + 1]) - f[i - 1] - f[i + 2]) * c16
        };
    }
    out
}

/// Central-difference time derivative of a sampled envelope.
///
/// The first sample gets zero slope: a forward difference there is downwind
/// for the delay term and grows from slab to slab.
fn time_derivative<T: Real>(f: &[Complex<T>], dt: T) -> Vec<Complex<T>> {
    let n = f.len();
    (0..n)
        .map(|i| {
            if n < 3 || i == 0 {
                Complex::new(T::zero(), T::zero())
            } else if i == n - 1 {
                (f[n - 1] - f[n - 2]) / dt
            } else {
                (f[i + 1] - f[i - 1]) / (dt * T::c(2.0))
            }
        })
        .collect()
}

/// Checks step sizes and guard band against the run before any compute.
pub fn check_preconditions<T: Real>(
    ensemble: &IonEnsemble<T>,
    pulse: &PulseSpec<T>,
    drive: &StarkDrive<T>,
    cfg: &SolverConfig<T>,
) -> Result<()> {
    pulse.validate()?;
    if !(cfg.dt_us > T::zero()) || !(cfg.dz_mm > T::zero()) {
        return Err(Error::InvalidParameter("dt and dz must be positive".into()));
    }
    if !(cfg.duration_us > cfg.dt_us * T::c(4.0)) {
        return Err(Error::InvalidParameter(format!(
            "time window {} µs is shorter than four steps",
            cfg.duration_us
        )));
    }
    let smax = drive.max_abs_shift();
    let dmax = ensemble.grid().half_span() + smax;
    let cycles = cfg.dt_us * dmax;
    if !(cycles < T::c(0.1)) {
        return Err(Error::Precondition(format!(
            "dt = {} µs advances the largest detuning ({} MHz) by {} cycles per step; \
             need < 0.1 (use dt < {} µs)",
            cfg.dt_us,
            dmax,
            cycles,
            T::c(0.1) / dmax
        )));
    }
    let n = cfg.slabs(ensemble.length());
    let dz = ensemble.length() / T::c(n as f64);
    let ad = ensemble.alpha0() * dz;
    if !(ad < T::c(0.2)) {
        return Err(Error::Precondition(format!(
            "alpha0 dz = {ad} does not resolve absorption; need < 0.2 (use dz < {} mm)",
            T::c(0.2) / ensemble.alpha0()
        )));
    }
    let guard = ensemble.guard_band();
    if smax > guard {
        return Err(Error::Precondition(format!(
            "drive shift up to {smax} MHz exceeds the detuning guard band of {guard} MHz; \
             widen the grid"
        )));
    }
    for t in &cfg.snapshot_times_us {
        if !(*t >= T::zero() && *t <= cfg.duration_us) {
            return Err(Error::OutOfRange(format!(
                "snapshot time {t} µs outside the window [0, {}] µs",
                cfg.duration_us
            )));
        }
    }
    Ok(())
}

/// Propagates `pulse` through `ensemble` under `drive`.
pub fn propagate<T: Real>(
    ensemble: &IonEnsemble<T>,
    pulse: &PulseSpec<T>,
    drive: &StarkDrive<T>,
    cfg: &SolverConfig<T>,
) -> Result<SimResult<T>> {
    check_preconditions(ensemble, pulse, drive, cfg)?;
    let dt = cfg.dt_us;
    let steps = cfg.steps();
    let nslab = cfg.slabs(ensemble.length());
    let dz = ensemble.length() / T::c(nslab as f64);
    let tau = T::c(TAU);
    let medium = ensemble.medium();
    let decay = Decay::from_lifetimes(medium.t1_us, medium.t2_us);
    let alpha0 = ensemble.alpha0();
    let zero = Complex::new(T::zero(), T::zero());

    let input = pulse.sample(dt, steps);
    let ref_shift: Vec<T> = (0..steps)
        .map(|n| drive.reference_shift(T::c(n as f64) * dt))
        .collect();
    let ref_shift_half: Vec<T> = (0..2 * steps - 1)
        .map(|m| drive.reference_shift(T::c(m as f64) * dt * T::c(0.5)))
        .collect();

    let z_mm: Vec<T> = (0..=nslab).map(|k| T::c(k as f64) * dz).collect();
    let mut snap_steps = Vec::new();
    let mut snapshots = Vec::new();
    for (si, t) in cfg.snapshot_times_us.iter().enumerate() {
        let step = (*t / dt).round().to_usize().unwrap_or(0).min(steps - 1);
        snap_steps.push((si, step));
        snapshots.push(Snapshot::empty(
            *t,
            step,
            dt,
            ref_shift[step],
            z_mm.clone(),
            ensemble.grid().len(),
        ));
    }

    let blocks = if alpha0 > T::zero() {
        build_blocks(ensemble)
    } else {
        Vec::new()
    };
    let zw = trapezoid(nslab + 1, dz);
    let em_scale = medium.refractive_index / T::c(C_MM_PER_US);
    let med_scale = alpha0 / T::c(2.0 * PI * PI);
    let cyc = T::one() / tau;

    let tail = Tail::new(ensemble);
    let c1 = alpha0 / (tau * tau);

    let mut omega: Vec<Complex<T>> = input.iter().map(|z| *z * tau).collect();
    let mut f_prev: Option<Vec<Complex<T>>> = None;
    let mut u_med = vec![T::zero(); steps];
    let mut u_em = vec![T::zero(); steps];
    let mut norm_excess = T::zero();

    for k in 0..=nslab {
        let factor = drive.spatial_factor(z_mm[k].min(ensemble.length()))?;
        for n in 0..steps {
            u_em[n] += zw[k] * em_scale * (omega[n] * cyc).norm_sqr();
        }
        for (snap, &(_, step)) in snapshots.iter_mut().zip(&snap_steps) {
            snap.omega[k] = omega[step] * cyc;
            snap.slab_shift_mhz[k] = ref_shift[step] * factor;
        }
        if blocks.is_empty() && k == nslab {
            break;
        }

        let re: Vec<T> = omega.iter().map(|z| z.re).collect();
        let im: Vec<T> = omega.iter().map(|z| z.im).collect();
        let om_r = half_step_samples(&re);
        let om_i = half_step_samples(&im);
        let shift: Vec<T> = ref_shift_half.iter().map(|s| *s * factor * tau).collect();
        let inputs = SlabInputs {
            om_r: &om_r,
            om_i: &om_i,
            shift: &shift,
        };
        let outs: Vec<BlockOut<T>> = blocks
            .par_iter()
            .map(|b| run_block(b, &inputs, steps, dt, decay, &snap_steps, cfg.track_norm))
            .collect();

        let mut pxs = Vec::with_capacity(outs.len());
        let mut pys = Vec::with_capacity(outs.len());
        let mut pws = Vec::with_capacity(outs.len());
        for (blk, out) in blocks.iter().zip(outs) {
            let gi = match blk.group {
                Group::A => 0,
                Group::B => 1,
            };
            for (si, x, y, w) in out.snaps {
                let snap = &mut snapshots[si];
                let base = k * snap.detunings;
                for (i, &j) in blk.nodes.iter().enumerate() {
                    snap.state[gi][0][base + j] = x[i];
                    snap.state[gi][1][base + j] = y[i];
                    snap.state[gi][2][base + j] = w[i];
                }
            }
            if out.norm_excess > norm_excess {
                norm_excess = out.norm_excess;
            }
            pxs.push(out.px);
            pys.push(out.py);
            pws.push(out.pw);
        }
        let px = pairwise_sum_vecs(pxs);
        let py = pairwise_sum_vecs(pys);
        let pw = pairwise_sum_vecs(pws);
        if let Some(n) = (0..px.len()).find(|&n| !(px[n].is_finite() && py[n].is_finite())) {
            return Err(Error::NumericalFailure {
                slab: k,
                step: n,
                what: "non-finite polarization".into(),
            });
        }
        for n in 0..pw.len() {
            u_med[n] += zw[k] * med_scale * pw[n];
        }
        if cfg.tail_correction {
            // ions beyond the grid hold the pulse reactively while it passes
            for n in 0..steps {
                let d = tail.delay(ref_shift[n] * factor);
                u_med[n] += zw[k] * c1 * d * (omega[n] * cyc).norm_sqr();
            }
        }
        if k == nslab {
            break;
        }

        let mut f: Vec<Complex<T>> = if px.is_empty() {
            vec![zero; steps]
        } else {
            px.iter()
                .zip(&py)
                .map(|(x, y)| Complex::new(alpha0 * *y, -alpha0 * *x))
                .collect()
        };
        if cfg.tail_correction && alpha0 > T::zero() {
            let dom = time_derivative(&omega, dt);
            let c0 = alpha0 / tau;
            for n in 0..steps {
                let s = ref_shift[n] * factor;
                f[n] += Complex::new(T::zero(), -c0 * tail.phase(s)) * omega[n] - dom[n] * (c1 * tail.delay(s));
            }
        }
        let next: Vec<Complex<T>> = match &f_prev {
            None => omega.iter().zip(&f).map(|(o, fk)| *o + *fk * dz).collect(),
            Some(fp) => omega
                .iter()
                .zip(f.iter().zip(fp))
                .map(|(o, (fk, fj))| *o + (*fk * T::c(1.5) - *fj * T::c(0.5)) * dz)
                .collect(),
        };
        if let Some(n) = next.iter().position(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(Error::NumericalFailure {
                slab: k,
                step: n,
                what: "non-finite field".into(),
            });
        }
        omega = next;
        f_prev = Some(f);
    }

    let transmitted: Vec<Complex<T>> = omega.iter().map(|z| *z * cyc).collect();
    if cfg.check_window {
        let total = envelope_energy(&transmitted, dt);
        let tail_start = steps - (steps / 20).max(1);
        let late = envelope_energy(&transmitted[tail_start..], dt);
        if total > T::zero() && late > T::c(0.005) * total {
            return Err(Error::WindowTooShort {
                late_percent: (late / total).f64() * 100.0,
                window_us: cfg.duration_us.f64(),
            });
        }
    }
    let energy = EnergyHistory {
        u_med,
        u_em,
        entered: cumulative_energy(&input, dt),
        exited: cumulative_energy(&transmitted, dt),
    };
    Ok(SimResult {
        dt_us: dt,
        dz_mm: dz,
        input,
        transmitted,
        energy,
        snapshots,
        drive_shift_mhz: ref_shift,
        max_norm_excess: cfg.track_norm.then_some(norm_excess),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::{DetuningGrid, Medium};

    #[test]
    fn half_step_interpolation_is_exact_for_cubics() {
        let f: Vec<f64> = (0..10).map(|i| {
            let t = i as f64 * 0.1;
            1.0 + t - 2.0 * t * t + 0.5 * t * t * t
        }).collect();
        let h = half_step_samples(&f);
        for (m, v) in h.iter().enumerate().take(16).skip(3) {
            let t = m as f64 * 0.05;
            let exact = 1.0 + t - 2.0 * t * t + 0.5 * t * t * t;
            assert!((v - exact).abs() < 1e-13, "{m}: {v} vs {exact}");
        }
    }

    #[test]
    fn transparent_medium_passes_input_unchanged() {
        let grid = DetuningGrid::new(5.0, 0.05).unwrap();
        let e = IonEnsemble::new_background(grid, Medium::with_alpha0(0.0)).unwrap();
        let p = PulseSpec::gaussian(1.0, 2.0);
        let r = propagate(&e, &p, &StarkDrive::off(10.0), &SolverConfig::with_duration(6.0)).unwrap();
        let worst = r
            .transmitted
            .iter()
            .zip(&r.input)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        assert!(worst < 1e-17, "{worst}");
        assert!(r.energy.u_med.iter().all(|u| *u == 0.0));
    }

    #[test]
    fn resolution_preconditions_refuse_to_run() {
        let grid = DetuningGrid::new(40.0, 0.02).unwrap();
        let e = IonEnsemble::new_background(grid, Medium::with_alpha0(2.0)).unwrap();
        let p = PulseSpec::gaussian(1.0, 2.0);
        let mut cfg = SolverConfig::with_duration(6.0);
        cfg.dt_us = 0.01;
        let err = propagate(&e, &p, &StarkDrive::off(10.0), &cfg).unwrap_err();
        assert!(matches!(err, Error::Precondition(_)), "{err}");
        let mut cfg = SolverConfig::with_duration(6.0);
        cfg.dz_mm = 0.2;
        let err = propagate(&e, &p, &StarkDrive::off(10.0), &cfg).unwrap_err();
        assert!(matches!(err, Error::Precondition(_)), "{err}");
    }

    #[test]
    fn flat_background_attenuates_at_half_alpha() {
        // 8 MHz wide grid is enough once the tail term is included
        let grid = DetuningGrid::new(8.0, 0.02).unwrap();
        let mut m = Medium::with_alpha0(0.1);
        m.length_mm = 10.0;
        let e = IonEnsemble::new_background(grid, m).unwrap();
        let p = PulseSpec::gaussian(1.0, 3.0);
        let r = propagate(&e, &p, &StarkDrive::off(10.0), &SolverConfig::with_duration(8.0)).unwrap();
        let ratio = r.transmitted_energy() / r.input_energy();
        assert!((ratio - (-1.0f64).exp()).abs() < 2e-3, "{ratio}");
    }
}
