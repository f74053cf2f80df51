//! Maxwell–Bloch simulation of slow-light pulses in spectrally engineered
//! rare-earth absorbers, with Stark-switched frequency shifting.
//!
//! Units throughout: detuning in MHz (cyclic), time in µs, position in mm,
//! absorption in mm⁻¹. Complex envelopes use the convention
//! `exp(+i 2π ν τ)` for a component at detuning `ν`.
//!
//! Every type is generic over the scalar ([`Real`]); the aliases below fix
//! it to `f64`.

pub mod analysis;
pub mod csvio;
pub mod ensemble;
pub mod error;
pub mod oracle;
pub mod real;
pub mod reduce;
pub mod solver;
pub mod stark;

pub use error::{Error, Result};
pub use real::Real;

pub type Complex = num_complex::Complex<f64>;

pub type DetuningGrid = ensemble::DetuningGrid<f64>;
pub type GroupProfile = ensemble::GroupProfile<f64>;
pub type IonEnsemble = ensemble::IonEnsemble<f64>;
pub type Medium = ensemble::Medium<f64>;
pub type BurnStep = ensemble::BurnStep<f64>;
pub type ShifterRecipe = ensemble::ShifterRecipe<f64>;

pub type StarkCoefficient = stark::StarkCoefficient<f64>;
pub type DipoleGeometry = stark::DipoleGeometry<f64>;
pub type FieldProfile = stark::FieldProfile<f64>;
pub type StarkDrive = stark::StarkDrive<f64>;

pub type PulseSpec = solver::PulseSpec<f64>;
pub type SolverConfig = solver::SolverConfig<f64>;
pub type SimResult = solver::SimResult<f64>;
pub type Snapshot = solver::Snapshot<f64>;


pub type TransferFunction = oracle::TransferFunction<f64>;
pub type Spectrum = analysis::Spectrum<f64>;
pub type InstFreqTrace = analysis::InstFreqTrace<f64>;
