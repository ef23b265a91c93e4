//! Estimation of the mean function of a counting process from panel count
//! data with missing count increments.
//!
//! The estimator is a functional EM iteration over monotone step functions:
//! missing increments are imputed from the current estimate (E-step) and the
//! mean function is refitted by a nonparametric Poisson maximizer (M-step),
//! either the full likelihood or the isotonic pseudo-likelihood. The crate
//! also ships the simulation regimes, distance metrics, bootstrap bands, and
//! a CLI used to run the desk-scale experiments.

pub mod bootstrap;
pub mod cli;
pub mod em;
pub mod metrics;
pub mod mstep;
pub mod panel;
pub mod plot;
pub mod simulate;
pub mod stepfn;
pub(crate) mod util;

pub use bootstrap::{bootstrap_fit, BootstrapBand};
pub use em::{em_fit, multi_start, EmConfig, EmResult, InitKind, MstepKind};
pub use metrics::{contraction_constants, d2_distance, grid_errors, h_lower_bound_check, PairMeasure};
pub use mstep::{fit_drop_missing, fit_mle, fit_pseudo, JumpGrid, MstepFit, WeightedIntervals};
pub use panel::{IntervalObservation, PanelDataset, StudyMeta, Trajectory, ValidationReport};
pub use simulate::{
    corrupt, sample_panel, sample_schedule, zero_fill_baseline, FrailtyLaw, MeanFunctionSpec,
    MeanKind, MissingnessSpec, ScheduleSpec,
};
pub use stepfn::StepFunction;
pub use util::linspace;
