//! Cellwise-robust sparse regression by a competing ensemble of least-angle
//! models.
//!
//! The pipeline has three stages:
//!
//! 1. [`foundation`] detects deviating cells of `[y, X]`, imputes them and
//!    computes sample correlations of the cleaned columns.
//! 2. [`ensemble`] runs `K` least-angle models in correlation space
//!    ([`lars`]) that compete for predictors from a shared pool; each round
//!    the proposal with the largest cross-validated improvement wins.
//! 3. [`robustfit`] fits an MM-estimator per model on its disjoint set and
//!    averages the predictions.
//!
//! [`simgen`], [`metrics`] and [`experiment`] cover simulation studies;
//! [`oracles`] and [`properties`] hold the reference implementations and
//! invariance suites used by the tests.

pub mod data;
pub mod ensemble;
pub mod error;
pub mod experiment;
pub mod foundation;
pub mod lars;
pub mod linalg;
pub mod metrics;
pub mod oracles;
pub mod pipeline;
pub mod properties;
pub mod rng;
pub mod robustfit;
pub mod simgen;

pub use data::{BinaryMask, Dataset, GroundTruth};
pub use ensemble::{run_selection, Arbitration, FscreConfig, SelectionResult, StopReason};
pub use error::{FscreError, Result};
pub use foundation::{correlation_structure, ddc_impute, CorrelationStructure, DdcConfig, ImputationResult};
pub use linalg::Matrix;
pub use pipeline::{fit, FitOutput, PipelineConfig};
pub use rng::RandomSource;
pub use robustfit::{mm_fit, EnsembleModel, RobustFit};
pub use simgen::{ContaminationSpec, Generator, Scenario, SimConfig};
