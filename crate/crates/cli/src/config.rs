//! Scenario configuration (TOML). Every numeric key carries its unit in
//! the name; unknown keys are rejected.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    /// Maxwell-Bloch runs over a voltage sweep.
    #[default]
    Propagation,
    /// Static filter transmission for each voltage (linear oracle only).
    Readout,
    /// Loss of a large frequency hop, simulated and closed form.
    ExtendedShift,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Structure {
    #[default]
    Shifter,
    Flat,
    Hole,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum FieldShape {
    #[default]
    Uniform,
    /// Quadratic deviation with the given peak-to-peak amplitude.
    Bump,
    /// Deviation table read from `field_csv`.
    Table,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Tau0Policy {
    Absolute,
    /// Middle of the first interval in which at least `inside_fraction` of
    /// the pulse energy is inside the crystal.
    #[default]
    EnergyInside,
    /// Half of the transmitted energy has left the crystal.
    MidExit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SnapshotPolicy {
    #[default]
    None,
    /// One step before the ramp starts and one step after it ends.
    Switch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShifterSection {
    pub wide_hole_mhz: f64,
    pub narrow_hole_mhz: f64,
    pub prep_voltage_v: f64,
    pub gap_mm: f64,
    pub edge_width_mhz: f64,
    pub prep_coefficient_khz_per_v_per_cm: f64,
}

impl Default for ShifterSection {
    fn default() -> Self {
        let r = slowlight::ShifterRecipe::default();
        Self {
            wide_hole_mhz: r.wide_hole_mhz,
            narrow_hole_mhz: r.narrow_hole_mhz,
            prep_voltage_v: r.prep_voltage_v,
            gap_mm: r.gap_mm,
            edge_width_mhz: r.edge_width_mhz,
            prep_coefficient_khz_per_v_per_cm: r.prep_coefficient.khz_per_v_per_cm(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnsembleSection {
    pub structure: Structure,
    pub alpha0_per_mm: f64,
    pub length_mm: f64,
    pub refractive_index: f64,
    pub t1_us: f64,
    pub t2_us: f64,
    /// Defaults to `1 / (π T2)`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma_h_khz: Option<f64>,
    pub grid_spacing_mhz: f64,
    /// Sized from the structure and the largest drive shift when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid_half_span_mhz: Option<f64>,
    /// Width of the `hole` structure.
    pub hole_width_mhz: f64,
    /// Edge width of the `hole` structure.
    pub edge_width_mhz: f64,
    /// Gaussian inhomogeneous line centred on the laser; flat when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub inhomogeneous_fwhm_mhz: Option<f64>,
    pub shifter: ShifterSection,
}

impl Default for EnsembleSection {
    fn default() -> Self {
        let m = slowlight::Medium::with_alpha0(4.0);
        Self {
            structure: Structure::Shifter,
            alpha0_per_mm: m.alpha0_per_mm,
            length_mm: m.length_mm,
            refractive_index: m.refractive_index,
            t1_us: m.t1_us,
            t2_us: m.t2_us,
            gamma_h_khz: None,
            grid_spacing_mhz: 0.02,
            grid_half_span_mhz: None,
            hole_width_mhz: 1.0,
            edge_width_mhz: 0.1,
            inhomogeneous_fwhm_mhz: None,
            shifter: ShifterSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PulseSection {
    /// Intensity FWHM of the Gaussian probe.
    pub fwhm_us: f64,
    /// Time of the input peak.
    pub delay_us: f64,
    pub peak_rabi_mhz: f64,
    pub center_detuning_mhz: f64,
}

impl Default for PulseSection {
    fn default() -> Self {
        Self {
            fwhm_us: 1.0,
            delay_us: 2.5,
            peak_rabi_mhz: 0.01,
            center_detuning_mhz: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DriveSection {
    /// Applied voltages, one run each. Exclusive with `shifts_mhz`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub voltages_v: Option<Vec<f64>>,
    /// Group-A shifts, converted to voltages with the coefficient and gap.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub shifts_mhz: Option<Vec<f64>>,
    pub gap_mm: f64,
    pub coefficient_khz_per_v_per_cm: f64,
    pub rise_time_us: f64,
    pub field: FieldShape,
    pub bump_peak_to_peak: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub field_csv: Option<PathBuf>,
    pub tau0_policy: Tau0Policy,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau0_us: Option<f64>,
    pub inside_fraction: f64,
    /// Re-derive the switch time from the zero-voltage run's energy
    /// bookkeeping instead of the linear estimate.
    pub refine_tau0: bool,
}

impl Default for DriveSection {
    fn default() -> Self {
        Self {
            voltages_v: None,
            shifts_mhz: None,
            gap_mm: 6.0,
            coefficient_khz_per_v_per_cm: 116.7,
            rise_time_us: 0.2,
            field: FieldShape::Uniform,
            bump_peak_to_peak: 0.002,
            field_csv: None,
            tau0_policy: Tau0Policy::EnergyInside,
            tau0_us: None,
            inside_fraction: 0.98,
            refine_tau0: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    pub dt_us: f64,
    /// Largest slab thickness; reduced to keep `alpha0 dz < 0.2`.
    pub max_dz_mm: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dz_mm: Option<f64>,
    /// Sized from the linear estimate of the transmitted pulse when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub duration_us: Option<f64>,
    pub snapshots: SnapshotPolicy,
    pub snapshot_times_us: Vec<f64>,
    pub track_norm: bool,
    pub check_window: bool,
    pub tail_correction: bool,
}

impl Default for SolverSection {
    fn default() -> Self {
        Self {
            dt_us: 0.002,
            max_dz_mm: 0.05,
            dz_mm: None,
            duration_us: None,
            snapshots: SnapshotPolicy::None,
            snapshot_times_us: Vec::new(),
            track_norm: false,
            check_window: true,
            tail_correction: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub profiles: bool,
    pub transmitted: bool,
    pub energy: bool,
    pub spectrum: bool,
    /// FFT length as a multiple of the record length.
    pub spectrum_padding: usize,
    pub transfer: bool,
    pub instantaneous_frequency: bool,
    pub threshold: f64,
    pub beat: bool,
    pub lo_detuning_mhz: f64,
    /// Defaults to the input peak.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lo_amplitude_mhz: Option<f64>,
    pub excitation_maps: bool,
    pub snapshots: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            profiles: true,
            transmitted: true,
            energy: true,
            spectrum: true,
            spectrum_padding: 8,
            transfer: true,
            instantaneous_frequency: true,
            threshold: slowlight::analysis::DEFAULT_THRESHOLD,
            beat: false,
            lo_detuning_mhz: -20.0,
            lo_amplitude_mhz: None,
            excitation_maps: true,
            snapshots: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtendedShiftSection {
    pub window_mhz: f64,
    pub switch_ns: Vec<f64>,
    pub hop_mhz: f64,
    pub side_half_width_mhz: f64,
    pub alpha0_per_mm: f64,
    pub grid_half_span_mhz: f64,
    pub grid_spacing_mhz: f64,
    pub edge_width_mhz: f64,
    pub pulse_fwhm_us: f64,
    pub dt_us: f64,
    pub dz_mm: f64,
}

impl Default for ExtendedShiftSection {
    fn default() -> Self {
        let s = slowlight::analysis::HopScheme::<f64>::default();
        Self {
            window_mhz: 1.0,
            switch_ns: vec![100.0],
            hop_mhz: s.hop_mhz,
            side_half_width_mhz: s.side_half_width_mhz,
            alpha0_per_mm: s.alpha0_per_mm,
            grid_half_span_mhz: s.half_span_mhz,
            grid_spacing_mhz: s.spacing_mhz,
            edge_width_mhz: s.edge_width_mhz,
            pulse_fwhm_us: s.pulse_fwhm_us,
            dt_us: s.dt_us,
            dz_mm: s.dz_mm,
        }
    }
}

impl ExtendedShiftSection {
    pub fn scheme(&self) -> slowlight::analysis::HopScheme<f64> {
        slowlight::analysis::HopScheme {
            hop_mhz: self.hop_mhz,
            side_half_width_mhz: self.side_half_width_mhz,
            alpha0_per_mm: self.alpha0_per_mm,
            half_span_mhz: self.grid_half_span_mhz,
            spacing_mhz: self.grid_spacing_mhz,
            edge_width_mhz: self.edge_width_mhz,
            pulse_fwhm_us: self.pulse_fwhm_us,
            dt_us: self.dt_us,
            dz_mm: self.dz_mm,
        }
    }
}

/// One scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub name: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub kind: Kind,
    #[serde(default)]
    pub ensemble: EnsembleSection,
    #[serde(default)]
    pub pulse: PulseSection,
    #[serde(default)]
    pub drive: DriveSection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub outputs: OutputSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extended_shift: Option<ExtendedShiftSection>,
}

impl Config {
    /// Parses a scenario; `origin` names the source in error messages.
    pub fn parse(text: &str, origin: &str) -> Result<Self, CliError> {
        if text.trim().is_empty() {
            return Err(CliError::Config(format!("{origin}: configuration is empty")));
        }
        toml::from_str(text).map_err(|e| {
            let msg = e.message().to_string();
            match e.span() {
                Some(span) => {
                    let (line, col) = line_col(text, span.start);
                    CliError::Config(format!("{origin}:{line}:{col}: {msg}"))
                }
                None => CliError::Config(format!("{origin}: {msg}")),
            }
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    /// Voltages of the sweep (from `shifts_mhz` when given).
    pub fn voltages(&self) -> Result<Vec<f64>, CliError> {
        let d = &self.drive;
        match (&d.voltages_v, &d.shifts_mhz) {
            (Some(_), Some(_)) => Err(CliError::Config(
                "drive: give either voltages_v or shifts_mhz, not both".into(),
            )),
            (Some(v), None) => Ok(v.clone()),
            (None, Some(s)) => {
                let per_v = self.coefficient().mhz_per_v_per_mm() / d.gap_mm;
                Ok(s.iter().map(|x| x / per_v).collect())
            }
            (None, None) => Ok(vec![0.0]),
        }
    }

    pub fn coefficient(&self) -> slowlight::StarkCoefficient {
        slowlight::StarkCoefficient::from_khz_per_v_per_cm(self.drive.coefficient_khz_per_v_per_cm)
    }

    /// Checks cross-field constraints that serde cannot express.
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.name.trim().is_empty() {
            return bad("name must not be empty".into());
        }
        let v = self.voltages()?;
        if v.is_empty() && self.kind != Kind::ExtendedShift {
            return bad("drive: the sweep has no voltages".into());
        }
        if v.iter().any(|x| !x.is_finite()) {
            return bad("drive: voltages must be finite".into());
        }
        let d = &self.drive;
        if d.tau0_policy == Tau0Policy::Absolute && d.tau0_us.is_none() {
            return bad("drive: tau0_policy = \"absolute\" needs tau0_us".into());
        }
        if d.tau0_policy != Tau0Policy::Absolute && d.tau0_us.is_some() {
            return bad("drive: tau0_us is only used with tau0_policy = \"absolute\"".into());
        }
        if !(d.inside_fraction > 0.0 && d.inside_fraction < 1.0) {
            return bad(format!("drive: inside_fraction {} outside (0, 1)", d.inside_fraction));
        }
        if d.field == FieldShape::Table && d.field_csv.is_none() {
            return bad("drive: field = \"table\" needs field_csv".into());
        }
        if self.outputs.spectrum_padding == 0 {
            return bad("outputs: spectrum_padding must be at least 1".into());
        }
        if self.kind == Kind::ExtendedShift {
            let e = self.extended_shift.clone().unwrap_or_default();
            if e.switch_ns.is_empty() {
                return bad("extended_shift: switch_ns is empty".into());
            }
        } else if self.extended_shift.is_some() {
            return bad("extended_shift section is only used with kind = \"extended-shift\"".into());
        }
        Ok(())
    }
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, col)
}
