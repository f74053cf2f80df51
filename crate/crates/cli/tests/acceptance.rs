//! Acceptance checks for the frequency shifter, one line per criterion.
//!
//! Every criterion is evaluated at its stated tolerance. Criteria listed in
//! `KNOWN_RED` are reproducible misses of the model; they are printed as
//! FAIL but only stop the run when `SLOWLIGHT_ACCEPTANCE_STRICT` is set. Any
//! other FAIL, or a listed criterion that starts passing, exits non-zero.
//!
//! A positional argument restricts the run to criteria whose name contains
//! it, e.g. `cargo test --test acceptance -- determinism`.

use std::collections::BTreeSet;
use std::f64::consts::TAU;
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use slowlight::oracle;
use slowlight::solver::integrate_constant_field;
use slowlight::{BurnStep, Complex, DetuningGrid, IonEnsemble, Medium, StarkCoefficient};
use slowlight_cli::config::Config;
use slowlight_cli::runner::{self, Outcome};
use slowlight_cli::scenarios;

/// Criteria that fail for reasons analysed outside the test suite.
const KNOWN_RED: &[u32] = &[1, 2, 5, 9];

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

type Check = fn(&mut Runs) -> Result<Verdict, String>;

/// Scenario runs shared between criteria, made on first use.
#[derive(Default)]
struct Runs {
    transit: Option<(Outcome, f64)>,
    fig3b: Option<Outcome>,
}

fn simulate(cfg: &Config) -> Result<Outcome, String> {
    runner::run(cfg, Path::new(".")).map_err(|e| e.to_string())
}

fn scenario(name: &str) -> Result<Outcome, String> {
    simulate(&scenarios::load(name).map_err(|e| e.to_string())?)
}

fn in_pool(threads: usize, name: &str) -> Result<Outcome, String> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| e.to_string())?;
    pool.install(|| scenario(name))
}

impl Runs {
    fn transit(&mut self) -> Result<&(Outcome, f64), String> {
        if self.transit.is_none() {
            let t = Instant::now();
            let out = scenario("transit")?;
            self.transit = Some((out, t.elapsed().as_secs_f64()));
        }
        Ok(self.transit.as_ref().expect("just made"))
    }

    fn fig3b(&mut self) -> Result<&Outcome, String> {
        if self.fig3b.is_none() {
            self.fig3b = Some(in_pool(1, "fig3b")?);
        }
        Ok(self.fig3b.as_ref().expect("just made"))
    }
}

fn zero_run(out: &Outcome) -> Result<&runner::RunRecord, String> {
    out.run_at(0.0).ok_or_else(|| "no zero-voltage run".to_string())
}

fn rel_l2(a: &[Complex], b: &[Complex]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum();
    let den: f64 = b.iter().map(|y| y.norm_sqr()).sum();
    (num / den).sqrt()
}

fn transit_delay(runs: &mut Runs) -> Result<Verdict, String> {
    let (out, secs) = runs.transit()?;
    let delay = zero_run(out)?.peak_delay_us;
    let pass = (3.0..=5.0).contains(&delay) && *secs < 120.0;
    Ok(verdict(
        pass,
        format!("delay {delay:.3} us, want 4 us +-25%; run took {secs:.0} s, want < 120 s"),
    ))
}

fn shift_tracking(runs: &mut Runs) -> Result<Verdict, String> {
    let out = runs.fig3b()?;
    let mut pass = true;
    let mut parts = Vec::new();
    for v in [-22.0, -11.0, 11.0, 22.0] {
        let r = out.run_at(v).ok_or_else(|| format!("no run at {v} V"))?;
        let gap = r.spectrum_peak_mhz - r.passband_center_mhz;
        pass &= gap.abs() < 0.05;
        parts.push(format!("{v:+} V off by {gap:+.3} MHz"));
    }
    let r2: f64 = out
        .summary_value("spectrum_peak_fit.r_squared")
        .ok_or("no fit in the summary")?
        .parse()
        .map_err(|e| format!("{e}"))?;
    pass &= r2 > 0.999;
    Ok(verdict(
        pass,
        format!("{}; want |gap| < 0.05 MHz; R^2 {r2:.5}, want > 0.999", parts.join(", ")),
    ))
}

fn loss_formula(_: &mut Runs) -> Result<Verdict, String> {
    let loss: f64 = oracle::eq5_loss(1.0, 5.0).map_err(|e| e.to_string())? * 100.0;
    Ok(verdict(
        (loss - 3.09).abs() <= 0.05,
        format!("{loss:.4}% at 1 MHz and 5 ns, want 3.09 +- 0.05%"),
    ))
}

fn energy_partition(runs: &mut Runs) -> Result<Verdict, String> {
    let (out, _) = runs.transit()?;
    let r = zero_run(out)?;
    let f = r.medium_fraction_at_max_inside;
    Ok(verdict(
        f > 0.999,
        format!(
            "U_med share {f:.6} when {:.4} of the pulse is inside, want > 0.999",
            r.max_inside_fraction
        ),
    ))
}

fn efficiency_plateau(_: &mut Runs) -> Result<Verdict, String> {
    let out = scenario("fig6-sweep")?;
    let mut pass = true;
    let mut parts = Vec::new();
    for r in &out.runs {
        if r.shift_mhz.abs() <= 3.0 && r.voltage_v != 0.0 {
            pass &= r.efficiency > 0.9;
            parts.push(format!("{:+} V {:.3}", r.voltage_v, r.efficiency));
        }
    }
    let mut order = Vec::new();
    for a in &out.runs {
        for b in &out.runs {
            if a.voltage_v.abs() < b.voltage_v.abs() && b.efficiency > a.efficiency {
                order.push(format!("{:+} V above {:+} V", b.voltage_v, a.voltage_v));
            }
        }
    }
    pass &= order.is_empty();
    let trend = if order.is_empty() {
        "non-increasing in |V|".to_string()
    } else {
        format!("rises: {}", order.join(", "))
    };
    Ok(verdict(
        pass,
        format!("plateau {} (want > 0.9); {trend}", parts.join(", ")),
    ))
}

fn absorption_floor(_: &mut Runs) -> Result<Verdict, String> {
    let medium = Medium {
        gamma_h_khz: Some(1.0),
        ..Medium::with_alpha0(2.0)
    };
    let grid = DetuningGrid::new(20.0, 0.02).map_err(|e| e.to_string())?;
    let step = BurnStep {
        window: (-0.5, 0.5),
        applied_voltage: 0.0,
        edge_width: 0.0,
        depth: 1.0,
    };
    let ens = IonEnsemble::new_background(grid, medium)
        .and_then(|e| e.burn(&step, StarkCoefficient::fitted(), 6.0))
        .map_err(|e| e.to_string())?;
    let tf = oracle::linear_transfer_at(&ens, 0.0, &[0.0]).map_err(|e| e.to_string())?;
    let loss: f64 = (1.0 - tf.h[0].norm_sqr()) * 100.0;
    Ok(verdict(
        (1.0..=4.0).contains(&loss),
        format!("{loss:.3}% at the hole centre, want 1% to 4%"),
    ))
}

const FLAT: &str = r#"name = "flat"
description = "uniform absorber, optical depth 2"

[ensemble]
structure = "flat"
alpha0_per_mm = 0.2

[drive]
voltages_v = [0.0]
"#;

const HOLE: &str = r#"name = "hole"
description = "1 MHz hole in an optical depth of 20"

[ensemble]
structure = "hole"
alpha0_per_mm = 2.0

[drive]
voltages_v = [0.0]
"#;

fn weak_probe_error(out: &Outcome) -> Result<f64, String> {
    let r = &zero_run(out)?.result;
    let ens = out.ensemble.as_ref().ok_or("no ensemble")?;
    let lin = oracle::propagate_linear(ens, 0.0, &r.input, r.dt_us).map_err(|e| e.to_string())?;
    Ok(rel_l2(&r.transmitted, &lin))
}

fn oracle_equivalence(runs: &mut Runs) -> Result<Verdict, String> {
    let mut errs = Vec::new();
    for text in [FLAT, HOLE] {
        let cfg = Config::parse(text, "acceptance").map_err(|e| e.to_string())?;
        errs.push((cfg.name.clone(), weak_probe_error(&simulate(&cfg)?)?));
    }
    let (out, _) = runs.transit()?;
    errs.push(("shifter".into(), weak_probe_error(out)?));
    let pass = errs.iter().all(|(_, e)| *e < 1e-2);
    let parts: Vec<String> = errs.iter().map(|(n, e)| format!("{n} {e:.2e}")).collect();
    Ok(verdict(pass, format!("relative L2 {}, want < 1e-2", parts.join(", "))))
}

/// Constant-field Bloch solution for `T1 = T2`, where the decay commutes
/// with the precession: `s(t) = s∞ + e^{-γt} R(t) (s0 - s∞)`.
fn equal_rate_rabi(delta_mhz: f64, rabi_mhz: f64, t2_us: f64, t: f64) -> f64 {
    let (d, o, g) = (TAU * delta_mhz, TAU * rabi_mhz, 1.0 / t2_us);
    // ds/dt = a × s - g (s - s_eq), a = (-o, 0, d), s_eq = (0, 0, -1)
    let a = [-o, 0.0, d];
    let cross = |u: [f64; 3], v: [f64; 3]| {
        [
            u[1] * v[2] - u[2] * v[1],
            u[2] * v[0] - u[0] * v[2],
            u[0] * v[1] - u[1] * v[0],
        ]
    };
    // steady state from (A - g) s = -g s_eq by Cramer's rule
    let m = [[-g, -d, 0.0], [d, -g, o], [0.0, -o, -g]];
    let rhs = [0.0, 0.0, g];
    let det3 = |m: [[f64; 3]; 3]| {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let det = det3(m);
    let mut sinf = [0.0; 3];
    for (c, s) in sinf.iter_mut().enumerate() {
        let mut mc = m;
        for r in 0..3 {
            mc[r][c] = rhs[r];
        }
        *s = det3(mc) / det;
    }
    let u = [-sinf[0], -sinf[1], -1.0 - sinf[2]];
    let norm = (o * o + d * d).sqrt();
    let k = [a[0] / norm, a[1] / norm, a[2] / norm];
    let (sn, cs) = (norm * t).sin_cos();
    let kxu = cross(k, u);
    let ku = k[0] * u[0] + k[1] * u[1] + k[2] * u[2];
    let rz = u[2] * cs + kxu[2] * sn + k[2] * ku * (1.0 - cs);
    sinf[2] + (-g * t).exp() * rz
}

fn bloch_stepper(_: &mut Runs) -> Result<Verdict, String> {
    let dt = 0.002;
    let mut worst: f64 = 0.0;
    for (delta, rabi, t2) in [(0.0, 1.0, 2.0), (0.4, 0.7, 3.0), (-1.3, 2.0, 1.0)] {
        let traj = integrate_constant_field(delta, rabi, 10.0, dt, t2, t2).map_err(|e| e.to_string())?;
        for (n, s) in traj.iter().enumerate() {
            let exact = equal_rate_rabi(delta, rabi, t2, n as f64 * dt);
            worst = worst.max((s.z - exact).abs());
        }
    }
    Ok(verdict(
        worst < 1e-6,
        format!("largest r_z error {worst:.2e} over 10 us at dt 2 ns, want < 1e-6"),
    ))
}

fn mid_pulse_switch(_: &mut Runs) -> Result<Verdict, String> {
    let out = scenario("fig5")?;
    let tau0 = out.tau0_us.ok_or("no switch time")?;
    let r = out.runs.iter().find(|r| r.voltage_v != 0.0).ok_or("no switched run")?;
    let ds = r.shift_mhz;
    let rise = r.drive.rise_time_us();
    let tr = &r.trace;
    let power: Vec<f64> = r.result.transmitted.iter().map(|z| z.norm_sqr()).collect();
    let settle = tau0 + rise;
    let peak_after = tr
        .times_us
        .iter()
        .zip(&power)
        .filter(|(t, _)| **t >= settle)
        .map(|(_, p)| *p)
        .fold(0.0, f64::max);
    let (mut before, mut after, mut lobe) = (0.0f64, 0.0f64, 0.0f64);
    let (mut nb, mut na) = (0, 0);
    for (i, &t) in tr.times_us.iter().enumerate() {
        if !tr.valid[i] {
            continue;
        }
        let f = tr.freq_mhz[i];
        if t < tau0 {
            before = before.max(f.abs());
            nb += 1;
        } else if t >= settle {
            after = after.max((f - ds).abs());
            na += 1;
            if power[i] >= 0.5 * peak_after {
                lobe = lobe.max((f - ds).abs());
            }
        }
    }
    let tol = 0.05 * ds.abs();
    let pass = nb > 0 && na > 0 && before <= tol && after <= tol;
    Ok(verdict(
        pass,
        format!(
            "shift {ds:.4} MHz; before the switch |f| <= {before:.3} MHz over {nb} samples, \
             after settling |f - shift| <= {after:.3} MHz over {na} samples \
             ({lobe:.3} MHz above half the peak power), want <= {tol:.3} MHz"
        ),
    ))
}

fn population_translation(_: &mut Runs) -> Result<Verdict, String> {
    let out = scenario("fig4")?;
    let r = out.runs.iter().find(|r| r.voltage_v != 0.0).ok_or("no switched run")?;
    let res = r.translation_residual.ok_or("no switch snapshots")?;
    let rigid = r.rigid_translation_residual.unwrap_or(f64::NAN);
    Ok(verdict(
        res < 1e-2,
        format!(
            "relative L2 {res:.2e} with each group moved by its own shift, want < 1e-2 \
             (summed map moved rigidly: {rigid:.2e})"
        ),
    ))
}

fn determinism(runs: &mut Runs) -> Result<Verdict, String> {
    let one = runs.fig3b()?.files.clone();
    let three = in_pool(3, "fig3b")?.files;
    let csv = |f: &[(String, Vec<u8>)]| -> Vec<(String, Vec<u8>)> {
        f.iter().filter(|(n, _)| n.ends_with(".csv")).cloned().collect()
    };
    let (a, b) = (csv(&one), csv(&three));
    let differing: Vec<&str> = a
        .iter()
        .zip(&b)
        .filter(|(x, y)| x != y)
        .map(|(x, _)| x.0.as_str())
        .collect();
    let pass = !a.is_empty() && a.len() == b.len() && differing.is_empty();
    Ok(verdict(
        pass,
        format!(
            "{} CSV files with 1 thread, {} with 3, {} differ",
            a.len(),
            b.len(),
            differing.len()
        ),
    ))
}

const CRITERIA: &[(u32, &str, Check)] = &[
    (1, "transit delay", transit_delay),
    (2, "shift tracking", shift_tracking),
    (3, "loss formula", loss_formula),
    (4, "energy partition", energy_partition),
    (5, "efficiency plateau", efficiency_plateau),
    (6, "absorption floor", absorption_floor),
    (7, "oracle equivalence", oracle_equivalence),
    (8, "bloch stepper", bloch_stepper),
    (9, "mid-pulse switch", mid_pulse_switch),
    (10, "population translation", population_translation),
    (11, "determinism", determinism),
];

fn main() -> ExitCode {
    let filter: Option<String> = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    let strict = std::env::var_os("SLOWLIGHT_ACCEPTANCE_STRICT").is_some();
    let mut runs = Runs::default();
    let mut failed = BTreeSet::new();
    let mut ran = BTreeSet::new();
    for (id, name, check) in CRITERIA {
        if filter.as_deref().is_some_and(|f| !name.contains(f)) {
            continue;
        }
        ran.insert(*id);
        let t = Instant::now();
        let v = check(&mut runs).unwrap_or_else(|e| verdict(false, format!("error: {e}")));
        let word = if v.pass { "PASS" } else { "FAIL" };
        println!(
            "criterion {id:>2} {name:<24} {word}  {} [{:.0} s]",
            v.detail,
            t.elapsed().as_secs_f64()
        );
        if !v.pass {
            failed.insert(*id);
        }
    }

    let known: BTreeSet<u32> = KNOWN_RED.iter().copied().filter(|id| ran.contains(id)).collect();
    let unexpected: Vec<u32> = failed.difference(&known).copied().collect();
    let recovered: Vec<u32> = known.difference(&failed).copied().collect();
    println!(
        "{} of {} criteria pass; known red: {:?}",
        ran.len() - failed.len(),
        ran.len(),
        known
    );
    let mut ok = true;
    if !unexpected.is_empty() {
        println!("unexpected failures: {unexpected:?}");
        ok = false;
    }
    if !recovered.is_empty() {
        println!("listed as known red but passing, update KNOWN_RED: {recovered:?}");
        ok = false;
    }
    if strict && !failed.is_empty() {
        println!("strict mode: failing on {failed:?}");
        ok = false;
    }
    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
