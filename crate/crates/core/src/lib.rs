//! Time-of-arrival lateration with dimension-lifted objective functions.
//!
//! A transponder at an unknown position is located from noisy ranges to
//! base stations at known positions. The plain range objective
//! `sum_i (|x - B_i| - d_i)^2` has spurious local minima. Adding one or
//! more auxiliary variables `lambda` under the square root,
//! `sum_i (sqrt(|x - B_i|^2 + sum_j lambda_j^2) - d_i)^2`, turns those minima
//! into saddle points so that a gradient based solver started with a
//! non-zero `lambda` can escape them.
//!
//! The crate is organised as:
//!
//! - [`model`]: points, scenarios, noisy measurements and the geometry filter.
//! - [`objectives`]: residuals, analytic Jacobians and the curvature indicator.
//! - [`lm`]: a Levenberg-Marquardt least-squares minimizer with iterate tracing.
//! - [`strategies`]: plain, lifted and lifted-then-plain (restart) solves.
//! - [`experiments`]: the Monte Carlo harness and summary statistics.
//! - [`gradcheck`]: analytic vs finite-difference Jacobian comparison.

pub mod error;
pub mod experiments;
pub mod gradcheck;
pub mod lm;
pub mod model;
pub mod objectives;
pub mod strategies;

pub use error::{Error, Result};
pub use experiments::{
    error_of, run_experiment, run_experiment_with_workers, run_trial, summarize, ExperimentConfig,
    ExperimentOutput, StrategyOutcome, SummaryRow, SummaryStats, TrialRecord, TrialRow,
};
pub use gradcheck::{check_gradients, GradientCheckConfig, GradientCheckReport, KindReport};
pub use lm::{lm_solve, DampingScale, LmParams, SolveResult, TerminationReason};
pub use model::{
    apply_noise, euclidean_distance, generate_scenario, geometry_ok, true_ranges, GeometryFilter,
    MeasurementSet, Point, Scenario, ScenarioRecord,
};
pub use objectives::{
    cost, curvature_indicator, jacobian, reduce_lambdas, residuals, EvalPoint, Jacobian,
    ObjectiveKind,
};
pub use strategies::{solve_with_strategy, Strategy, StrategyResult};
