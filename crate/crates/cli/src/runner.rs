//! Turns a scenario into runs, analyses and an output bundle.

use std::fs;
use std::io::BufReader;
use std::path::Path;

use slowlight::analysis::{self, Taper};
use slowlight::oracle;
use slowlight::solver::{self, EnergyHistory};
use slowlight::{
    BurnStep, DetuningGrid, FieldProfile, InstFreqTrace, IonEnsemble, Medium, PulseSpec, ShifterRecipe,
    SimResult, SolverConfig, Spectrum, StarkCoefficient, StarkDrive, TransferFunction,
};

use crate::config::{Config, FieldShape, Kind, SnapshotPolicy, Structure, Tau0Policy};
use crate::error::{CliError, Context};

/// Time step of the linear pre-pass.
const ORACLE_DT_US: f64 = 0.01;
/// Fraction of the transmitted energy that must fall inside the window.
const WINDOW_ENERGY: f64 = 0.99;
/// Windows are rounded up to this many microseconds.
const WINDOW_QUANTUM_US: f64 = 0.5;
const WINDOW_RETRIES: usize = 4;
/// Largest `alpha0 dz` the automatic slab count allows.
const MAX_ALPHA_DZ: f64 = 0.2;
/// Half width of the frequency axis of the static transfer curves.
const TRANSFER_HALF_SPAN_MHZ: f64 = 5.0;
const TRANSFER_STEP_MHZ: f64 = 0.005;
/// Margin around the drive shift kept in the written spectra and maps.
const WRITE_MARGIN_MHZ: f64 = 6.0;

/// One Maxwell-Bloch run of a sweep and its analyses.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub voltage_v: f64,
    /// Group-A shift at full voltage (MHz).
    pub shift_mhz: f64,
    /// False for the zero-voltage reference added to a sweep without one.
    pub requested: bool,
    pub drive: StarkDrive,
    pub result: SimResult,
    pub spectrum: Spectrum,
    pub spectrum_peak_mhz: f64,
    /// Static transfer of the ensemble displaced by the full shift.
    pub transfer: TransferFunction,
    pub passband_center_mhz: f64,
    /// Transmitted energy relative to the zero-voltage run.
    pub efficiency: f64,
    pub trace: InstFreqTrace,
    pub beat: Option<Vec<f64>>,
    pub sideband_trace: Option<InstFreqTrace>,
    pub peak_delay_us: f64,
    pub max_inside_fraction: f64,
    /// Medium share of the stored energy when the inside fraction peaks.
    pub medium_fraction_at_max_inside: f64,
    pub max_medium_fraction: f64,
    /// Relative L2 mismatch between the post-switch map and the pre-switch
    /// map with each group moved by its own shift.
    pub translation_residual: Option<f64>,
    /// The same with the summed map moved rigidly by the group-A shift.
    pub rigid_translation_residual: Option<f64>,
    pub stored_energy: Vec<f64>,
}

impl RunRecord {
    pub fn label(&self) -> String {
        voltage_label(self.voltage_v)
    }
}

/// Static transmission at one voltage.
#[derive(Debug, Clone)]
pub struct ReadoutRecord {
    pub voltage_v: f64,
    pub shift_mhz: f64,
    pub transfer: TransferFunction,
    pub passband_center_mhz: f64,
    pub peak_mhz: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HopRecord {
    pub switch_ns: f64,
    pub loss_simulated: f64,
    pub loss_closed_form: f64,
}

/// Everything a scenario produced, held in memory until written.
#[derive(Debug, Clone)]
pub struct Outcome {
    /// Scenario with the automatically sized values filled in.
    pub config: Config,
    pub ensemble: Option<IonEnsemble>,
    pub tau0_oracle_us: Option<f64>,
    pub tau0_us: Option<f64>,
    pub runs: Vec<RunRecord>,
    pub readout: Vec<ReadoutRecord>,
    pub hops: Vec<HopRecord>,
    pub summary: Vec<(String, String)>,
    pub files: Vec<(String, Vec<u8>)>,
}

impl Outcome {
    fn new(config: Config) -> Self {
        Self {
            config,
            ensemble: None,
            tau0_oracle_us: None,
            tau0_us: None,
            runs: Vec::new(),
            readout: Vec::new(),
            hops: Vec::new(),
            summary: Vec::new(),
            files: Vec::new(),
        }
    }

    fn put(&mut self, key: impl Into<String>, value: impl ToString) {
        self.summary.push((key.into(), value.to_string()));
    }

    pub fn summary_value(&self, key: &str) -> Option<&str> {
        self.summary.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    /// Run at the given voltage.
    pub fn run_at(&self, voltage_v: f64) -> Option<&RunRecord> {
        self.runs.iter().find(|r| r.voltage_v == voltage_v)
    }

    pub fn summary_text(&self) -> String {
        self.summary.iter().map(|(k, v)| format!("{k}: {v}\n")).collect()
    }
}

/// `+22.00V` style label used in file names.
pub fn voltage_label(v: f64) -> String {
    // normalise -0.0 so that the label does not depend on its sign bit
    let v = if v == 0.0 { 0.0 } else { v };
    format!("{v:+.2}V")
}

/// Runs a scenario. Relative paths in it are resolved against `base_dir`.
pub fn run(config: &Config, base_dir: &Path) -> Result<Outcome, CliError> {
    config.validate()?;
    match config.kind {
        Kind::Propagation => propagation(config, base_dir),
        Kind::Readout => readout(config, base_dir),
        Kind::ExtendedShift => extended_shift(config),
    }
}

/// Builds the ensemble only: profiles and the resolved scenario.
pub fn prepare(config: &Config, base_dir: &Path) -> Result<Outcome, CliError> {
    config.validate()?;
    let mut cfg = config.clone();
    let setup = Setup::new(&mut cfg, base_dir)?;
    let mut out = Outcome::new(cfg);
    describe_ensemble(&mut out, &setup.ensemble);
    out.ensemble = Some(setup.ensemble);
    finish(&mut out)?;
    Ok(out)
}

/// Static linear transmission for every voltage of the scenario.
pub fn readout(config: &Config, base_dir: &Path) -> Result<Outcome, CliError> {
    config.validate()?;
    let mut cfg = config.clone();
    let setup = Setup::new(&mut cfg, base_dir)?;
    let mut out = Outcome::new(cfg);
    describe_ensemble(&mut out, &setup.ensemble);
    for (v, drive) in setup.voltages.iter().zip(&setup.drives) {
        let ds = drive.amplitude_mhz();
        let transfer = transfer_around(&setup.ensemble, ds, ds)?;
        let rec = ReadoutRecord {
            voltage_v: *v,
            shift_mhz: ds,
            passband_center_mhz: transfer.passband_center(),
            peak_mhz: transfer.peak_frequency(),
            transfer,
        };
        let l = voltage_label(*v);
        out.put(format!("{l}.shift_mhz"), ds);
        out.put(format!("{l}.passband_center_mhz"), rec.passband_center_mhz);
        out.put(format!("{l}.passband_peak_mhz"), rec.peak_mhz);
        out.readout.push(rec);
    }
    let xs: Vec<f64> = out.readout.iter().map(|r| r.voltage_v).collect();
    let ys: Vec<f64> = out.readout.iter().map(|r| r.passband_center_mhz).collect();
    put_fit(&mut out, &xs, &ys, "passband");
    out.ensemble = Some(setup.ensemble);
    finish(&mut out)?;
    Ok(out)
}

/// Ensemble, pulse and drives of a scenario, with auto values resolved.
struct Setup {
    ensemble: IonEnsemble,
    pulse: PulseSpec,
    voltages: Vec<f64>,
    /// One drive per voltage, switch time still unset.
    drives: Vec<StarkDrive>,
}

impl Setup {
    fn new(cfg: &mut Config, base_dir: &Path) -> Result<Self, CliError> {
        let voltages = cfg.voltages()?;
        let length = cfg.ensemble.length_mm;
        let field = field_profile(cfg, base_dir)?;
        let coeff = cfg.coefficient();
        let drives = voltages
            .iter()
            .map(|v| {
                StarkDrive::step_drive(*v, 0.0, cfg.drive.rise_time_us, field.clone(), coeff)
                    .context(|| format!("drive at {v} V"))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let smax = drives.iter().map(|d| d.max_abs_shift()).fold(0.0, f64::max);
        let ensemble = build_ensemble(cfg, smax)?;
        if !(length > 0.0) {
            return Err(CliError::Config(format!("ensemble: length_mm {length} must be positive")));
        }
        let p = &cfg.pulse;
        let pulse = PulseSpec {
            peak_rabi_mhz: p.peak_rabi_mhz,
            center_detuning_mhz: p.center_detuning_mhz,
            ..PulseSpec::gaussian(p.fwhm_us, p.delay_us)
        };
        pulse.validate().context(|| "pulse".into())?;
        Ok(Self {
            ensemble,
            pulse,
            voltages,
            drives,
        })
    }
}

fn field_profile(cfg: &Config, base_dir: &Path) -> Result<FieldProfile, CliError> {
    let d = &cfg.drive;
    let l = cfg.ensemble.length_mm;
    let f = match d.field {
        FieldShape::Uniform => FieldProfile::uniform(d.gap_mm, l),
        FieldShape::Bump => FieldProfile::quadratic_bump(d.gap_mm, l, d.bump_peak_to_peak),
        FieldShape::Table => {
            let rel = d.field_csv.as_ref().expect("validated");
            let path = base_dir.join(rel);
            let file = fs::File::open(&path)
                .map_err(|e| CliError::Config(format!("drive.field_csv {}: {e}", path.display())))?;
            FieldProfile::from_csv(BufReader::new(file), d.gap_mm, l)
        }
    };
    f.context(|| "drive field profile".into())
}

fn medium(cfg: &Config) -> Medium {
    let e = &cfg.ensemble;
    Medium {
        alpha0_per_mm: e.alpha0_per_mm,
        length_mm: e.length_mm,
        refractive_index: e.refractive_index,
        t1_us: e.t1_us,
        t2_us: e.t2_us,
        gamma_h_khz: e.gamma_h_khz,
    }
}

fn recipe(cfg: &Config) -> ShifterRecipe {
    let s = &cfg.ensemble.shifter;
    ShifterRecipe {
        wide_hole_mhz: s.wide_hole_mhz,
        narrow_hole_mhz: s.narrow_hole_mhz,
        prep_voltage_v: s.prep_voltage_v,
        gap_mm: s.gap_mm,
        edge_width_mhz: s.edge_width_mhz,
        prep_coefficient: StarkCoefficient::from_khz_per_v_per_cm(s.prep_coefficient_khz_per_v_per_cm),
    }
}

fn structure(cfg: &Config, half_span: f64) -> slowlight::Result<IonEnsemble> {
    let e = &cfg.ensemble;
    let grid = DetuningGrid::new(half_span, e.grid_spacing_mhz)?;
    match e.structure {
        Structure::Shifter => IonEnsemble::prepare_frequency_shifter(grid, medium(cfg), &recipe(cfg)),
        Structure::Flat => IonEnsemble::new_background(grid, medium(cfg)),
        Structure::Hole => {
            let w = e.hole_width_mhz * 0.5;
            let step = BurnStep {
                window: (-w, w),
                applied_voltage: 0.0,
                edge_width: e.edge_width_mhz,
                depth: 1.0,
            };
            IonEnsemble::new_background(grid, medium(cfg))?.burn(&step, StarkCoefficient::literature(), 1.0)
        }
    }
}

/// Smallest grid half span that keeps the structure and the largest drive
/// shift clear of the grid edge, as a whole number of grid steps.
fn auto_half_span(cfg: &Config, smax: f64) -> slowlight::Result<f64> {
    let e = &cfg.ensemble;
    let sp = e.grid_spacing_mhz;
    let need = match e.structure {
        Structure::Flat => 8.0 + smax,
        Structure::Hole => e.hole_width_mhz * 0.5 + 5.0 * e.edge_width_mhz + smax + 8.0,
        Structure::Shifter => {
            let s = &e.shifter;
            let r = recipe(cfg);
            let prep = r.prep_coefficient.mhz_per_v_per_mm() * s.prep_voltage_v / s.gap_mm;
            let generous = 2.0 * prep.abs() + s.wide_hole_mhz + 10.0 * s.edge_width_mhz + 5.0;
            let trial = structure(cfg, generous)?;
            let (lo, hi) = trial.feature_extent().unwrap_or((0.0, 0.0));
            lo.abs().max(hi.abs()) + smax
        }
    };
    let steps = (need / sp - 1e-9).ceil();
    // keep the echo free of representation noise
    Ok((steps * sp * 1e9).round() / 1e9)
}

fn build_ensemble(cfg: &mut Config, smax: f64) -> Result<IonEnsemble, CliError> {
    let fixed = cfg.ensemble.grid_half_span_mhz;
    let mut span = match fixed {
        Some(s) => s,
        None => auto_half_span(cfg, smax).context(|| "sizing the detuning grid".into())?,
    };
    let sp = cfg.ensemble.grid_spacing_mhz;
    loop {
        let ens = structure(cfg, span).context(|| "preparing the ensemble".into())?;
        // rounding of the feature edges can cost a fraction of a step
        if fixed.is_some() || ens.guard_band() >= smax {
            cfg.ensemble.grid_half_span_mhz = Some(span);
            // the line shape is smooth and not a structure feature
            return match cfg.ensemble.inhomogeneous_fwhm_mhz {
                Some(w) => ens.with_inhomogeneous_line(0.0, w),
                None => Ok(ens),
            }
            .context(|| "applying the inhomogeneous line".into());
        }
        span = ((span + sp) * 1e9).round() / 1e9;
    }
}

fn describe_ensemble(out: &mut Outcome, ens: &IonEnsemble) {
    let g = ens.grid();
    out.put("grid_half_span_mhz", g.half_span());
    out.put("grid_points", g.len());
    out.put("optical_depth", ens.optical_depth());
    out.put("gamma_h_khz", ens.gamma_h_khz());
    out.put("guard_band_mhz", ens.guard_band());
    if out.config.outputs.profiles {
        let mut buf = Vec::new();
        ens.write_profiles_csv(&mut buf).expect("writing to memory");
        out.files.push(("profiles.csv".into(), buf));
    }
}

fn transfer_around(ens: &IonEnsemble, ds: f64, center: f64) -> Result<TransferFunction, CliError> {
    let n = (2.0 * TRANSFER_HALF_SPAN_MHZ / TRANSFER_STEP_MHZ).round() as usize;
    let axis: Vec<f64> = (0..=n)
        .map(|i| center - TRANSFER_HALF_SPAN_MHZ + i as f64 * TRANSFER_STEP_MHZ)
        .collect();
    oracle::linear_transfer_at(ens, ds, &axis).context(|| format!("linear transfer at {ds} MHz"))
}

/// First interval on which `f >= level`, as `(start, end)` times.
fn first_interval(f: &[f64], dt: f64, level: f64) -> Option<(f64, f64)> {
    let a = f.iter().position(|x| *x >= level)?;
    let b = a + f[a..].iter().take_while(|x| **x >= level).count() - 1;
    Some((a as f64 * dt, b as f64 * dt))
}

/// Time at which a non-decreasing cumulative series reaches `level`.
fn crossing(cum: &[f64], dt: f64, level: f64) -> Option<f64> {
    let i = cum.iter().position(|x| *x >= level)?;
    if i == 0 {
        return Some(0.0);
    }
    let f = (level - cum[i - 1]) / (cum[i] - cum[i - 1]);
    Some((i as f64 - 1.0 + f) * dt)
}

fn cumulative(env: &[slowlight::Complex], dt: f64) -> Vec<f64> {
    let mut acc = 0.0;
    env.iter()
        .map(|z| {
            acc += z.norm_sqr() * dt;
            acc
        })
        .collect()
}

/// Energy bookkeeping of the weak-probe response, used to size the window
/// and to place the switch before any Maxwell-Bloch run.
struct LinearPass {
    dt: f64,
    entered: Vec<f64>,
    exited: Vec<f64>,
}

impl LinearPass {
    /// Response of the ensemble held statically at shift `ds`.
    fn new(ens: &IonEnsemble, pulse: &PulseSpec, ds: f64) -> Result<Self, CliError> {
        let nu = pulse.center_detuning_mhz + ds;
        let delay = oracle::group_delay_at(ens, ds, nu).context(|| "linear group delay".into())?;
        let span = pulse.end_time() + 4.0 * delay.max(0.0) + 10.0 * pulse.fwhm_us + 10.0;
        let n = (span / ORACLE_DT_US).ceil() as usize + 1;
        let input = pulse.sample(ORACLE_DT_US, n);
        let input: Vec<slowlight::Complex> = input
            .iter()
            .enumerate()
            .map(|(n, z)| {
                let ph = std::f64::consts::TAU * ds * n as f64 * ORACLE_DT_US;
                z * slowlight::Complex::new(ph.cos(), ph.sin())
            })
            .collect();
        let output = oracle::propagate_linear(ens, ds, &input, ORACLE_DT_US)
            .context(|| "linear pre-pass".into())?;
        Ok(Self {
            dt: ORACLE_DT_US,
            entered: cumulative(&input, ORACLE_DT_US),
            exited: cumulative(&output, ORACLE_DT_US),
        })
    }

    fn window_us(&self, margin_us: f64) -> Result<f64, CliError> {
        let total = *self.exited.last().unwrap_or(&0.0);
        if !(total > 0.0) {
            return Err(CliError::core(
                "sizing the time window",
                slowlight::Error::Precondition("the medium transmits no energy".into()),
            ));
        }
        let t = crossing(&self.exited, self.dt, WINDOW_ENERGY * total).expect("reaches its total");
        Ok(((t + margin_us) / WINDOW_QUANTUM_US).ceil() * WINDOW_QUANTUM_US)
    }

    fn history(&self) -> EnergyHistory<f64> {
        EnergyHistory {
            u_med: Vec::new(),
            u_em: Vec::new(),
            entered: self.entered.clone(),
            exited: self.exited.clone(),
        }
    }
}

/// Switch time (start of the ramp) under `policy`, from a cumulative
/// energy record sampled every `dt`.
fn switch_time(cfg: &Config, h: &EnergyHistory<f64>, dt: f64) -> Result<f64, CliError> {
    let d = &cfg.drive;
    let half_rise = 0.5 * d.rise_time_us;
    match d.tau0_policy {
        Tau0Policy::Absolute => Ok(d.tau0_us.expect("validated")),
        Tau0Policy::EnergyInside => {
            let inside = h.inside_fraction();
            match first_interval(&inside, dt, d.inside_fraction) {
                Some((a, b)) => Ok(0.5 * (a + b) - half_rise),
                None => {
                    let best = inside.iter().cloned().fold(0.0, f64::max);
                    Err(CliError::core(
                        "placing the switch",
                        slowlight::Error::Precondition(format!(
                            "at most {best:.4} of the pulse energy is inside the crystal at once; \
                             inside_fraction {} is never reached",
                            d.inside_fraction
                        )),
                    ))
                }
            }
        }
        Tau0Policy::MidExit => {
            let total = *h.exited.last().unwrap_or(&0.0);
            crossing(&h.exited, dt, 0.5 * total)
                .map(|t| t - half_rise)
                .ok_or_else(|| CliError::Config("no transmitted energy to place the switch".into()))
        }
    }
}

fn solver_config(cfg: &Config, duration: f64, dz: f64) -> SolverConfig {
    let s = &cfg.solver;
    SolverConfig {
        dt_us: s.dt_us,
        dz_mm: dz,
        duration_us: duration,
        snapshot_times_us: s.snapshot_times_us.clone(),
        track_norm: s.track_norm,
        check_window: s.check_window,
        tail_correction: s.tail_correction,
    }
}

fn auto_dz(cfg: &Config) -> f64 {
    let e = &cfg.ensemble;
    let l = e.length_mm;
    let by_size = (l / cfg.solver.max_dz_mm - 1e-9).ceil();
    let by_absorption = (e.alpha0_per_mm * l / MAX_ALPHA_DZ).floor() + 1.0;
    l / by_size.max(by_absorption).max(1.0)
}

fn parabola_peak(y: &[f64], i: usize) -> f64 {
    if i == 0 || i + 1 >= y.len() {
        return i as f64;
    }
    let (a, b, c) = (y[i - 1], y[i], y[i + 1]);
    let den = a - 2.0 * b + c;
    if den == 0.0 {
        i as f64
    } else {
        i as f64 + 0.5 * (a - c) / den
    }
}

fn peak_time(env: &[slowlight::Complex], dt: f64) -> f64 {
    let p: Vec<f64> = env.iter().map(|z| z.norm_sqr()).collect();
    let mut best = 0;
    for (i, v) in p.iter().enumerate() {
        if *v > p[best] {
            best = i;
        }
    }
    parabola_peak(&p, best) * dt
}

fn propagation(config: &Config, base_dir: &Path) -> Result<Outcome, CliError> {
    let mut cfg = config.clone();
    let setup = Setup::new(&mut cfg, base_dir)?;
    let ens = &setup.ensemble;
    if cfg.solver.dz_mm.is_none() {
        cfg.solver.dz_mm = Some(auto_dz(&cfg));
    }
    let dz = cfg.solver.dz_mm.expect("set above");

    let linear = LinearPass::new(ens, &setup.pulse, 0.0)?;
    let switched = setup.voltages.iter().any(|v| *v != 0.0);
    let tau0_oracle = if switched {
        Some(switch_time(&cfg, &linear.history(), linear.dt)?)
    } else {
        None
    };
    let auto_window = cfg.solver.duration_us.is_none();
    if auto_window {
        // a switched pulse travels unshifted until the ramp ends, then
        // leaves through the displaced passband, whose tail can be slower
        let mut window = linear.window_us(setup.pulse.fwhm_us)?;
        if let Some(t0) = tau0_oracle {
            let lag = (t0 + cfg.drive.rise_time_us - setup.pulse.delay_us).max(0.0);
            for d in &setup.drives {
                if d.amplitude_mhz() != 0.0 {
                    let pass = LinearPass::new(ens, &setup.pulse, d.amplitude_mhz())?;
                    window = window.max(pass.window_us(setup.pulse.fwhm_us + lag)?);
                }
            }
        }
        cfg.solver.duration_us = Some(window);
    }

    // ringing after a switch is not captured by the static passes, so an
    // automatic window grows until every run fits
    let mut attempts = 0;
    loop {
        match sweep(&cfg, &setup, tau0_oracle, dz) {
            Err(CliError::Core {
                source: slowlight::Error::WindowTooShort { .. },
                ..
            }) if auto_window && attempts < WINDOW_RETRIES => {
                attempts += 1;
                let w = cfg.solver.duration_us.expect("set above");
                let grown = (w * 1.25).max(w + 1.0);
                cfg.solver.duration_us = Some((grown / WINDOW_QUANTUM_US).ceil() * WINDOW_QUANTUM_US);
            }
            Ok(mut out) => {
                out.ensemble = Some(setup.ensemble);
                finish(&mut out)?;
                return Ok(out);
            }
            Err(e) => return Err(e),
        }
    }
}

fn sweep(cfg: &Config, setup: &Setup, tau0_oracle: Option<f64>, dz: f64) -> Result<Outcome, CliError> {
    let ens = &setup.ensemble;
    let duration = cfg.solver.duration_us.expect("resolved before the sweep");
    let mut out = Outcome::new(cfg.clone());
    describe_ensemble(&mut out, ens);
    let base = solver_config(cfg, duration, dz);
    let length = ens.length();
    let dt = cfg.solver.dt_us;

    // the zero-voltage run is always made first: it is the efficiency
    // reference and, when refining, it places the switch
    let has_zero = setup.voltages.iter().any(|v| *v == 0.0);
    let reference = solver::propagate(ens, &setup.pulse, &StarkDrive::off(length), &base)
        .context(|| "zero-voltage run".into())?;
    let refine = cfg.drive.refine_tau0 && cfg.drive.tau0_policy != Tau0Policy::Absolute;
    let tau0 = match tau0_oracle {
        Some(_) if refine => Some(switch_time(cfg, &reference.energy, dt)?),
        t => t,
    };
    out.tau0_oracle_us = tau0_oracle;
    out.tau0_us = tau0;

    let snap_times = match (cfg.solver.snapshots, tau0) {
        (SnapshotPolicy::Switch, Some(t)) => vec![t - dt, t + cfg.drive.rise_time_us + dt],
        _ => Vec::new(),
    };

    let mut jobs: Vec<(f64, bool)> = Vec::new();
    if !has_zero {
        jobs.push((0.0, false));
    }
    jobs.extend(setup.voltages.iter().map(|v| (*v, true)));

    let mut ref_result = Some(reference);
    for (v, requested) in jobs {
        let drive = if v == 0.0 {
            StarkDrive::off(length)
        } else {
            let i = setup.voltages.iter().position(|x| *x == v).expect("from the sweep");
            setup.drives[i].with_tau0(tau0.expect("set when any voltage is nonzero"))
        };
        let result = if v == 0.0 && ref_result.is_some() {
            ref_result.take().expect("checked")
        } else {
            let mut c = base.clone();
            if v != 0.0 {
                c.snapshot_times_us.extend(snap_times.iter().copied());
            }
            solver::propagate(ens, &setup.pulse, &drive, &c).context(|| format!("run at {v} V"))?
        };
        let record = analyse(cfg, ens, v, requested, drive, result, &snap_times)?;
        out.runs.push(record);
    }
    let reference = match out.runs.iter().find(|r| r.voltage_v == 0.0) {
        Some(r) => r.result.clone(),
        None => unreachable!("the zero-voltage run is always made"),
    };
    for r in &mut out.runs {
        r.efficiency = analysis::relative_efficiency(&r.result, &reference)
            .context(|| format!("efficiency at {} V", r.voltage_v))?;
    }
    summarize_runs(&mut out, tau0_oracle, tau0, dz);
    Ok(out)
}

fn analyse(
    cfg: &Config,
    ens: &IonEnsemble,
    v: f64,
    requested: bool,
    drive: StarkDrive,
    result: SimResult,
    snap_times: &[f64],
) -> Result<RunRecord, CliError> {
    let dt = result.dt_us;
    let ds = drive.amplitude_mhz();
    let o = &cfg.outputs;
    let nfft = result.transmitted.len() * o.spectrum_padding;
    let spectrum = analysis::spectrum_with(&result.transmitted, dt, Taper::Hann, nfft)
        .context(|| format!("spectrum at {v} V"))?;
    let transfer = transfer_around(ens, ds, ds)?;
    let trace = analysis::instantaneous_frequency(&result.transmitted, dt, o.threshold);
    let (beat, sideband_trace) = if o.beat {
        let amp = o.lo_amplitude_mhz.unwrap_or(cfg.pulse.peak_rabi_mhz);
        let b = analysis::beat_pattern(&result.transmitted, dt, o.lo_detuning_mhz, amp)
            .context(|| "beat pattern".into())?;
        let s = analysis::sideband_frequency(&b, dt, o.lo_detuning_mhz, o.threshold)
            .context(|| "sideband demodulation".into())?;
        (Some(b), Some(s))
    } else {
        (None, None)
    };
    let inside = result.energy.inside_fraction();
    let medium_fraction = result.energy.medium_fraction();
    let mut imax = 0;
    for (i, x) in inside.iter().enumerate() {
        if *x > inside[imax] {
            imax = i;
        }
    }
    let (translation_residual, rigid_translation_residual) =
        if v != 0.0 && snap_times.len() == 2 && result.snapshots.len() == 2 {
            let (a, b) = (&result.snapshots[0], &result.snapshots[1]);
            (
                Some(analysis::translation_residual(a, b, ens, ds)),
                Some(analysis::rigid_translation_residual(a, b, ens, ds)),
            )
        } else {
            (None, None)
        };
    let stored_energy = result
        .snapshots
        .iter()
        .map(|s| analysis::stored_energy(&analysis::excitation_map(s, ens), ens))
        .collect();
    Ok(RunRecord {
        voltage_v: v,
        shift_mhz: ds,
        requested,
        spectrum_peak_mhz: spectrum.peak_frequency(),
        spectrum,
        passband_center_mhz: transfer.passband_center(),
        transfer,
        efficiency: 1.0,
        trace,
        beat,
        sideband_trace,
        peak_delay_us: peak_time(&result.transmitted, dt) - cfg.pulse.delay_us,
        max_inside_fraction: inside.get(imax).copied().unwrap_or(0.0),
        medium_fraction_at_max_inside: medium_fraction.get(imax).copied().unwrap_or(0.0),
        max_medium_fraction: medium_fraction.iter().cloned().fold(0.0, f64::max),
        translation_residual,
        rigid_translation_residual,
        stored_energy,
        drive,
        result,
    })
}

fn put_fit(out: &mut Outcome, xs: &[f64], ys: &[f64], what: &str) {
    if xs.len() < 2 {
        return;
    }
    if let Ok(fit) = analysis::linear_fit(xs, ys) {
        out.put(format!("{what}_fit.slope_mhz_per_v"), fit.slope);
        out.put(format!("{what}_fit.intercept_mhz"), fit.intercept);
        out.put(format!("{what}_fit.r_squared"), fit.r_squared);
    }
}

fn summarize_runs(out: &mut Outcome, tau0_oracle: Option<f64>, tau0: Option<f64>, dz: f64) {
    let c = out.config.clone();
    out.put("dt_us", c.solver.dt_us);
    out.put("dz_mm", dz);
    out.put("duration_us", c.solver.duration_us.unwrap_or(0.0));
    if let (Some(a), Some(b)) = (tau0_oracle, tau0) {
        out.put("tau0_oracle_us", a);
        out.put("tau0_us", b);
        out.put("rise_time_us", c.drive.rise_time_us);
    }
    let mut lines = Vec::new();
    for r in &out.runs {
        let l = r.label();
        lines.push((format!("{l}.shift_mhz"), r.shift_mhz.to_string()));
        lines.push((format!("{l}.spectrum_peak_mhz"), r.spectrum_peak_mhz.to_string()));
        lines.push((format!("{l}.passband_center_mhz"), r.passband_center_mhz.to_string()));
        lines.push((format!("{l}.efficiency"), r.efficiency.to_string()));
        lines.push((format!("{l}.peak_delay_us"), r.peak_delay_us.to_string()));
        lines.push((format!("{l}.max_inside_fraction"), r.max_inside_fraction.to_string()));
        lines.push((
            format!("{l}.medium_fraction_at_max_inside"),
            r.medium_fraction_at_max_inside.to_string(),
        ));
        if let Some(x) = r.translation_residual {
            lines.push((format!("{l}.translation_residual"), x.to_string()));
        }
        if let Some(x) = r.rigid_translation_residual {
            lines.push((format!("{l}.rigid_translation_residual"), x.to_string()));
        }
        for (k, e) in r.stored_energy.iter().enumerate() {
            lines.push((format!("{l}.stored_energy_{k}"), e.to_string()));
        }
    }
    out.summary.extend(lines);
    let req: Vec<&RunRecord> = out.runs.iter().filter(|r| r.requested).collect();
    let xs: Vec<f64> = req.iter().map(|r| r.voltage_v).collect();
    let ys: Vec<f64> = req.iter().map(|r| r.spectrum_peak_mhz).collect();
    put_fit(out, &xs, &ys, "spectrum_peak");
}

fn extended_shift(config: &Config) -> Result<Outcome, CliError> {
    let mut cfg = config.clone();
    let section = cfg.extended_shift.clone().unwrap_or_default();
    cfg.extended_shift = Some(section.clone());
    let mut out = Outcome::new(cfg);
    let scheme = section.scheme();
    let sweep = scheme
        .simulate(section.window_mhz, &section.switch_ns)
        .context(|| "extended-shift runs".into())?;
    for (ns, loss, _) in &sweep.hops {
        let closed = oracle::eq5_loss(section.window_mhz, *ns).context(|| "closed-form loss".into())?;
        out.hops.push(HopRecord {
            switch_ns: *ns,
            loss_simulated: *loss,
            loss_closed_form: closed,
        });
    }
    for h in out.hops.clone() {
        out.put(format!("{}ns.loss_simulated", h.switch_ns), h.loss_simulated);
        out.put(format!("{}ns.loss_closed_form", h.switch_ns), h.loss_closed_form);
    }
    finish(&mut out)?;
    Ok(out)
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> slowlight::Result<()>) -> Vec<u8> {
    let mut buf = Vec::new();
    f(&mut buf).expect("writing to memory");
    buf
}

/// Renders the per-run and sweep tables plus the summary and echo.
fn finish(out: &mut Outcome) -> Result<(), CliError> {
    use std::io::Write;
    let o = out.config.outputs.clone();
    let mut files = std::mem::take(&mut out.files);
    for r in &out.runs {
        let l = r.label();
        let res = &r.result;
        if o.transmitted {
            files.push((format!("transmitted_{l}.csv"), csv_bytes(|w| res.write_transmitted_csv(w))));
        }
        if o.energy {
            files.push((format!("energy_{l}.csv"), csv_bytes(|w| res.write_energy_csv(w))));
        }
        if o.spectrum {
            let keep = r.shift_mhz.abs() + 4.0 * WRITE_MARGIN_MHZ;
            let idx: Vec<usize> = (0..r.spectrum.freq_mhz.len())
                .filter(|&i| r.spectrum.freq_mhz[i].abs() <= keep)
                .collect();
            let trimmed = Spectrum {
                freq_mhz: idx.iter().map(|&i| r.spectrum.freq_mhz[i]).collect(),
                power: idx.iter().map(|&i| r.spectrum.power[i]).collect(),
                ..r.spectrum.clone()
            };
            files.push((format!("spectrum_{l}.csv"), csv_bytes(|w| trimmed.write_csv(w))));
        }
        if o.transfer {
            files.push((format!("transfer_{l}.csv"), csv_bytes(|w| r.transfer.write_csv(w))));
        }
        if o.instantaneous_frequency {
            files.push((format!("instfreq_{l}.csv"), csv_bytes(|w| r.trace.write_csv(w))));
        }
        if let Some(b) = &r.beat {
            let mut buf = Vec::new();
            writeln!(buf, "tau_us,intensity")?;
            for (n, x) in b.iter().enumerate() {
                writeln!(buf, "{},{}", n as f64 * res.dt_us, x)?;
            }
            files.push((format!("beat_{l}.csv"), buf));
        }
        if let Some(s) = &r.sideband_trace {
            files.push((format!("instfreq_sideband_{l}.csv"), csv_bytes(|w| s.write_csv(w))));
        }
        let ens = out.ensemble.as_ref();
        for (k, snap) in res.snapshots.iter().enumerate() {
            let Some(ens) = ens else { break };
            if o.excitation_maps {
                let lo = r.shift_mhz.min(0.0) - WRITE_MARGIN_MHZ;
                let hi = r.shift_mhz.max(0.0) + WRITE_MARGIN_MHZ;
                let sp = ens.grid().spacing();
                let n = ((hi - lo) / sp).round() as usize;
                let axis: Vec<f64> = (0..=n).map(|i| lo + i as f64 * sp).collect();
                let map = analysis::excitation_map_on(snap, ens, &axis);
                files.push((format!("excitation_{l}_{k}.csv"), csv_bytes(|w| map.write_csv(w))));
            }
            if o.snapshots {
                files.push((format!("snapshot_{l}_{k}.csv"), csv_bytes(|w| snap.write_csv(ens, w))));
            }
        }
    }
    if !out.runs.is_empty() {
        let mut buf = Vec::new();
        writeln!(
            buf,
            "voltage_v,shift_mhz,spectrum_peak_mhz,passband_center_mhz,efficiency,peak_delay_us,transmitted_energy"
        )?;
        for r in &out.runs {
            writeln!(
                buf,
                "{},{},{},{},{},{},{}",
                r.voltage_v,
                r.shift_mhz,
                r.spectrum_peak_mhz,
                r.passband_center_mhz,
                r.efficiency,
                r.peak_delay_us,
                r.result.transmitted_energy()
            )?;
        }
        files.push(("sweep.csv".into(), buf));
    }
    if !out.readout.is_empty() {
        let mut buf = Vec::new();
        writeln!(buf, "voltage_v,shift_mhz,passband_center_mhz,passband_peak_mhz")?;
        for r in &out.readout {
            writeln!(buf, "{},{},{},{}", r.voltage_v, r.shift_mhz, r.passband_center_mhz, r.peak_mhz)?;
            if o.transfer {
                let l = voltage_label(r.voltage_v);
                files.push((format!("transfer_{l}.csv"), csv_bytes(|w| r.transfer.write_csv(w))));
            }
        }
        files.push(("readout.csv".into(), buf));
    }
    if !out.hops.is_empty() {
        let mut buf = Vec::new();
        writeln!(buf, "switch_ns,loss_simulated,loss_closed_form")?;
        for h in &out.hops {
            writeln!(buf, "{},{},{}", h.switch_ns, h.loss_simulated, h.loss_closed_form)?;
        }
        files.push(("extended_shift.csv".into(), buf));
    }
    let mut head = vec![
        ("name".to_string(), out.config.name.clone()),
        ("kind".to_string(), kind_name(out.config.kind).to_string()),
    ];
    head.append(&mut out.summary);
    out.summary = head;
    files.push(("summary.txt".into(), out.summary_text().into_bytes()));
    files.push(("resolved.toml".into(), out.config.to_toml().into_bytes()));
    out.files = files;
    Ok(())
}

fn kind_name(k: Kind) -> &'static str {
    match k {
        Kind::Propagation => "propagation",
        Kind::Readout => "readout",
        Kind::ExtendedShift => "extended-shift",
    }
}

/// Writes every file of the outcome into `dir`, creating it if needed.
pub fn write_bundle(out: &Outcome, dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir)?;
    for (name, bytes) in &out.files {
        fs::write(dir.join(name), bytes)?;
    }
    Ok(())
}
