//! Synchronization dynamics of three nonidentical microwave optomechanical
//! resonators coupled through a common dissipative environment and optional
//! coherent couplers.
//!
//! The crate is organized around the pipeline
//! `model` (coupling matrices) -> `dynamics` (mean-field integration) ->
//! `analysis` (spectra, peaks, classification) -> `sweep` (parameter scans
//! and phase diagrams), with `bath` providing an independent full
//! system-plus-environment simulation that validates the environment
//! elimination behind the effective model, and `config` the flat key=value
//! front end shared by all of them.

pub mod analysis;
pub mod bath;
pub mod config;
pub mod dynamics;
pub mod model;
pub mod sweep;

pub use analysis::{
    classify, closure_gap, dominant_peaks, fundamental_frequency, lissajous, periodicity,
    power_spectrum, sideband_spacing,
    ClassifierConfig, Peak, PeakList, SignalSelector, Spectrum, SyncClassification, SyncState,
};
pub use bath::{compare_models, discretize_bath, simulate_full, BathSpec, OraclePlan, OracleReport};
pub use config::{preset_text, Config, Manifest, PRESET_NAMES};
pub use dynamics::{
    integrate, rhs, steady_window, CircuitState, SignalKind, SimPlan, Trajectory,
};
pub use model::{
    build_coupling_matrix, input_port_circuit, linear_stability, nonreciprocity,
    output_port_circuit, preset_matrix, unidirectional_circuit, wrap_angle, CircuitConfig,
    CircuitPreset, CoherentCoupling, CouplingMatrix, EnvCoupling, Nonreciprocity, ReciprocityKind,
};
pub use sweep::{phase_diagram, run_sweep, Axis, PhaseCell, SweepParam, SweepResult, SweepSpec};
