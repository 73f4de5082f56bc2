//! Data-driven sensor fault detection and isolation.
//!
//! The pipeline has an offline design phase and an online phase:
//!
//! * [`data`]: dataset ingestion, normalization, synthetic flight-like data,
//!   fault injection and the baseline least-squares model;
//! * [`detection`]: null-space detection versor, residual and threshold;
//! * [`residual`]: optimized orthogonal fault directions and angular distances;
//! * [`evidence`]: basic belief assignment and the reliability signal;
//! * [`fusion`]: recursive Dempster-Shafer filtering and isolation;
//! * [`harness`]: orchestration, scenarios, metrics and series output.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod detection;
pub mod error;
pub mod evidence;
pub mod fusion;
pub mod harness;
pub mod residual;
pub mod rowmajor;

pub use data::{
    apply_normalization, calibrate_fault_amplitude, compute_normalization, fit_ls_model,
    generate_synthetic_flight, inject_fault, load_dataset, Dataset, FaultSpec, LsModel, ManeuverSegment,
    NormStats, SyntheticConfig,
};
pub use detection::{calibrate_threshold, detect, detection_residual, fit_detection_versor, Detection, DetectionModel};
pub use error::{Error, Result};
pub use evidence::{
    assign_bbm, calibrate_reliability_threshold, reliability, BbaParams, MassVector, ReliabilityParams,
};
pub use fusion::{
    classic_update, desaturate, ds_combine, init_state, isolate, rb_update, CombinationRule, FusionState,
    IsolationDecision, RuleId, Verdict,
};
pub use harness::{DesignBundle, DiagnosisReport, PipelineConfig};
pub use residual::{
    angular_distances, directional_residual, optimize_fault_directions, IsolationModel, ResidualFrame,
    SolverOptions,
};

/// Lossless text form for floating-point output (17 significant digits).
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}
