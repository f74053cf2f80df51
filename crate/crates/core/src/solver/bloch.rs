//! Two-level Bloch equations: the RK4 stepper shared by the propagation
//! kernel and an exact constant-field reference.
//!
//! The population is carried as `w = 1 + r_z` so that weakly excited ions
//! do not lose their excitation to cancellation against `-1`.

use crate::error::{Error, Result};
use crate::real::Real;

/// Bloch vector `(r_x, r_y, r_z)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlochVector<T> {
    pub x: T,
    pub y: T,
    pub z: T,
}

impl<T: Real> BlochVector<T> {
    pub fn ground() -> Self {
        Self {
            x: T::zero(),
            y: T::zero(),
            z: -T::one(),
        }
    }

    pub fn norm_sqr(&self) -> T {
        self.x * self.x + self.y * self.y + self.z * self.z
    }
}

/// Relaxation rates `1/T1`, `1/T2` in µs⁻¹ (zero for infinite lifetimes).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decay<T> {
    pub g1: T,
    pub g2: T,
}

impl<T: Real> Decay<T> {
    pub fn from_lifetimes(t1_us: T, t2_us: T) -> Self {
        let rate = |t: T| if t.is_infinite() { T::zero() } else { T::one() / t };
        Self {
            g1: rate(t1_us),
            g2: rate(t2_us),
        }
    }
}

/// Time derivative of `(x, y, w)` with angular detuning `d` and angular
/// field `(or, oi)`.
#[inline(always)]
pub(crate) fn deriv<T: Real>(
    x: T,
    y: T,
    w: T,
    d: T,
    or: T,
    oi: T,
    decay: Decay<T>,
) -> (T, T, T) {
    let rz = w - T::one();
    (
        -d * y - oi * rz - decay.g2 * x,
        d * x + or * rz - decay.g2 * y,
        oi * x - or * y - decay.g1 * w,
    )
}

/// Field and detuning at the start, midpoint and end of one step (angular).
#[derive(Debug, Clone, Copy)]
pub(crate) struct StepInputs<T> {
    pub or: [T; 3],
    pub oi: [T; 3],
    pub d: [T; 3],
}

/// One classical RK4 step of `(x, y, w)`.
#[inline(always)]
pub(crate) fn rk4<T: Real>(
    x: T,
    y: T,
    w: T,
    s: &StepInputs<T>,
    dt: T,
    decay: Decay<T>,
) -> (T, T, T) {
    let h = dt * T::c(0.5);
    let sixth = dt / T::c(6.0);
    let two = T::c(2.0);
    let (k1x, k1y, k1w) = deriv(x, y, w, s.d[0], s.or[0], s.oi[0], decay);
    let (k2x, k2y, k2w) = deriv(
        x + h * k1x,
        y + h * k1y,
        w + h * k1w,
        s.d[1],
        s.or[1],
        s.oi[1],
        decay,
    );
    let (k3x, k3y, k3w) = deriv(
        x + h * k2x,
        y + h * k2y,
        w + h * k2w,
        s.d[1],
        s.or[1],
        s.oi[1],
        decay,
    );
    let (k4x, k4y, k4w) = deriv(
        x + dt * k3x,
        y + dt * k3y,
        w + dt * k3w,
        s.d[2],
        s.or[2],
        s.oi[2],
        decay,
    );
    (
        x + sixth * (k1x + two * (k2x + k3x) + k4x),
        y + sixth * (k1y + two * (k2y + k3y) + k4y),
        w + sixth * (k1w + two * (k2w + k3w) + k4w),
    )
}

/// Integrates a single ion under a constant real field with RK4.
///
/// Detuning and Rabi frequency in MHz (cyclic), times in µs.
pub fn integrate_constant_field<T: Real>(
    delta_mhz: T,
    rabi_mhz: T,
    duration_us: T,
    dt_us: T,
    t1_us: T,
    t2_us: T,
) -> Result<Vec<BlochVector<T>>> {
    if !(dt_us > T::zero()) || !(duration_us >= T::zero()) {
        return Err(Error::InvalidParameter(
            "time step must be positive and duration non-negative".into(),
        ));
    }
    let steps = (duration_us / dt_us).round().to_usize().unwrap_or(0);
    let tau = T::c(std::f64::consts::TAU);
    let s = StepInputs {
        or: [tau * rabi_mhz; 3],
        oi: [T::zero(); 3],
        d: [tau * delta_mhz; 3],
    };
    let decay = Decay::from_lifetimes(t1_us, t2_us);
    let (mut x, mut y, mut w) = (T::zero(), T::zero(), T::zero());
    let mut out = Vec::with_capacity(steps + 1);
    out.push(BlochVector::ground());
    for _ in 0..steps {
        (x, y, w) = rk4(x, y, w, &s, dt_us, decay);
        out.push(BlochVector { x, y, z: w - T::one() });
    }
    Ok(out)
}

/// Exact Bloch vector after time `t` under a constant real field, starting
/// from the ground state.
///
/// Without decay this is the closed-form generalized Rabi rotation. With
/// decay the affine system is solved by exponentiating its augmented 4x4
/// generator.
pub fn rabi_reference(delta_mhz: f64, rabi_mhz: f64, t_us: f64, t1_us: f64, t2_us: f64) -> BlochVector<f64> {
    let tau = std::f64::consts::TAU;
    let d = tau * delta_mhz;
    let o = tau * rabi_mhz;
    let decay = Decay::from_lifetimes(t1_us, t2_us);
    if decay.g1 == 0.0 && decay.g2 == 0.0 {
        let og = (d * d + o * o).sqrt();
        if og == 0.0 {
            return BlochVector::ground();
        }
        let (sn, cs) = (og * t_us).sin_cos();
        let q = 1.0 - cs;
        // rotation of (0, 0, -1) about the axis (-o, 0, d)/og
        return BlochVector {
            x: o * d * q / (og * og),
            y: -o * sn / og,
            z: -1.0 + o * o * q / (og * og),
        };
    }
    // d/dt (x, y, w, 1) with w = 1 + r_z
    let (g1, g2) = (decay.g1, decay.g2);
    let a = [
        [-g2, -d, 0.0, 0.0],
        [d, -g2, o, -o],
        [0.0, -o, -g1, 0.0],
        [0.0, 0.0, 0.0, 0.0],
    ];
    let e = expm4(&scale4(&a, t_us));
    let v = [e[0][3], e[1][3], e[2][3]];
    BlochVector {
        x: v[0],
        y: v[1],
        z: v[2] - 1.0,
    }
}

type Mat4 = [[f64; 4]; 4];

fn scale4(a: &Mat4, s: f64) -> Mat4 {
    let mut r = *a;
    r.iter_mut().flatten().for_each(|v| *v *= s);
    r
}

fn mul4(a: &Mat4, b: &Mat4) -> Mat4 {
    let mut r = [[0.0; 4]; 4];
    for i in 0..4 {
        for k in 0..4 {
            for j in 0..4 {
                r[i][j] += a[i][k] * b[k][j];
            }
        }
    }
    r
}

/// Matrix exponential by scaling and squaring with a Taylor core.
fn expm4(a: &Mat4) -> Mat4 {
    let norm = a
        .iter()
        .map(|row| row.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let squarings = if norm > 0.25 {
        (norm / 0.25).log2().ceil() as i32
    } else {
        0
    };
    let b = scale4(a, 0.5f64.powi(squarings));
    let mut result = [[0.0; 4]; 4];
    let mut term = [[0.0; 4]; 4];
    for i in 0..4 {
        result[i][i] = 1.0;
        term[i][i] = 1.0;
    }
    for k in 1..=18 {
        term = scale4(&mul4(&term, &b), 1.0 / k as f64);
        for i in 0..4 {
            for j in 0..4 {
                result[i][j] += term[i][j];
            }
        }
    }
    for _ in 0..squarings {
        result = mul4(&result, &result);
    }
    result
}
