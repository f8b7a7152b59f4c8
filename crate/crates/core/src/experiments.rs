//! Monte Carlo comparison of solve strategies on random constellations.
//!
//! Every trial draws, from its own seeded stream and in this order: the
//! transponder position, the station set (re-drawn until it passes the
//! geometry filter), one standard normal per station for the range noise,
//! and finally the initial estimate. All configured strategies are then run
//! on that identical draw, so their errors are paired.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lm::{LmParams, TerminationReason};
use crate::model::{
    apply_noise, squared_distance, true_ranges, GeometryFilter, MeasurementSet, Point, Scenario,
    ScenarioGenerator, DEFAULT_MAX_ATTEMPTS,
};
use crate::strategies::{solve_with_strategy, Strategy};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dim: usize,
    pub n_stations: usize,
    pub sigma: f64,
    pub trials: usize,
    pub cube_side: f64,
    pub strategies: Vec<Strategy>,
    pub outlier_threshold: f64,
    /// `None` disables the geometry filter.
    pub geometry_filter: Option<GeometryFilter>,
    pub master_seed: u64,
    pub max_generation_attempts: usize,
    /// Debug option: draw the initial estimate uniformly in the ball of this
    /// radius around the truth instead of uniformly in the cube.
    pub x0_radius: Option<f64>,
    pub lm: LmParams,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            dim: 2,
            n_stations: 4,
            sigma: 0.01,
            trials: 10_000,
            cube_side: 10.0,
            strategies: vec![Strategy::Plain, Strategy::Lifted { k: 1, lambda0: 1.0 }],
            outlier_threshold: 0.5,
            geometry_filter: Some(GeometryFilter::default()),
            master_seed: 0,
            max_generation_attempts: DEFAULT_MAX_ATTEMPTS,
            x0_radius: None,
            lm: LmParams::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.generator()?;
        if self.trials == 0 {
            return Err(Error::invalid("trials must be >= 1"));
        }
        if !(self.sigma.is_finite() && self.sigma >= 0.0) {
            return Err(Error::invalid(format!(
                "sigma must be >= 0, got {}",
                self.sigma
            )));
        }
        if self.outlier_threshold.is_nan() || self.outlier_threshold <= 0.0 {
            return Err(Error::invalid("outlier_threshold must be > 0"));
        }
        if self.strategies.is_empty() {
            return Err(Error::invalid("at least one strategy is required"));
        }
        for s in &self.strategies {
            s.validate()?;
        }
        if let Some(f) = &self.geometry_filter {
            GeometryFilter::new(f.min_normalized_singular_value)?;
        }
        if let Some(r) = self.x0_radius {
            if !(r.is_finite() && r > 0.0) {
                return Err(Error::invalid(format!("x0_radius must be > 0, got {r}")));
            }
        }
        self.lm.validate()
    }

    fn generator(&self) -> Result<ScenarioGenerator> {
        Ok(
            ScenarioGenerator::new(self.dim, self.n_stations, self.cube_side)?
                .with_filter(self.geometry_filter)
                .with_max_attempts(self.max_generation_attempts),
        )
    }
}

/// Per-trial seed: the SplitMix64 output function applied to
/// `master_seed + (trial_index + 1) * 0x9E3779B97F4A7C15` (wrapping).
pub fn trial_seed(master_seed: u64, trial_index: usize) -> u64 {
    let mut z = master_seed.wrapping_add(
        (trial_index as u64)
            .wrapping_add(1)
            .wrapping_mul(0x9E37_79B9_7F4A_7C15),
    );
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Euclidean distance between an estimate and the truth.
pub fn error_of(estimate: &Point, truth: &Point) -> Result<f64> {
    crate::model::euclidean_distance(estimate, truth)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyOutcome {
    pub strategy: Strategy,
    pub position: Point,
    pub lambdas: Vec<f64>,
    pub error: f64,
    pub outlier: bool,
    pub termination: TerminationReason,
    /// Accepted iterations, summed over both stages of a restart.
    pub iterations: usize,
    pub function_evals: usize,
    pub final_cost: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub trial_index: usize,
    pub scenario: Scenario,
    pub measurement: MeasurementSet,
    pub x0: Point,
    /// One entry per configured strategy, in configuration order.
    pub outcomes: Vec<StrategyOutcome>,
}

fn sample_ball<R: Rng + ?Sized>(center: &Point, radius: f64, rng: &mut R) -> Point {
    let dim = center.dim();
    loop {
        let offset: Vec<f64> = (0..dim)
            .map(|_| rng.random_range(-radius..=radius))
            .collect();
        if offset.iter().map(|o| o * o).sum::<f64>() <= radius * radius {
            return center.translated(&offset);
        }
    }
}

pub fn run_trial(config: &ExperimentConfig, trial_index: usize) -> Result<TrialRecord> {
    if trial_index >= config.trials {
        return Err(Error::invalid(format!(
            "trial index {trial_index} out of range for {} trials",
            config.trials
        )));
    }
    let wrap = |e: Error| Error::Trial {
        trial: trial_index,
        source: Box::new(e),
    };
    let generator = config.generator()?;
    let mut rng = ChaCha8Rng::seed_from_u64(trial_seed(config.master_seed, trial_index));
    let scenario = generator.generate(&mut rng).map_err(wrap)?;
    let measurement = apply_noise(&true_ranges(&scenario), config.sigma, &mut rng).map_err(wrap)?;
    let x0 = match config.x0_radius {
        Some(r) => sample_ball(scenario.truth(), r, &mut rng),
        None => generator.uniform_point(&mut rng),
    };

    let outcomes = config
        .strategies
        .iter()
        .map(|strategy| {
            let r = solve_with_strategy(strategy, &scenario, &measurement, &x0, &config.lm)?;
            let error = squared_distance(r.position.coords(), scenario.truth().coords()).sqrt();
            Ok(StrategyOutcome {
                strategy: *strategy,
                error,
                outlier: error > config.outlier_threshold,
                termination: r.reason(),
                iterations: r.total_iterations(),
                function_evals: r.total_function_evals(),
                final_cost: r.solve.final_cost,
                lambdas: r.lambdas,
                position: r.position,
            })
        })
        .collect::<Result<Vec<_>>>()
        .map_err(wrap)?;

    Ok(TrialRecord {
        trial_index,
        scenario,
        measurement,
        x0,
        outcomes,
    })
}

/// Error statistics over a set of trials. Standard deviations divide by the
/// number of values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SummaryStats {
    pub trials: usize,
    pub mean_error: f64,
    pub std_error: f64,
    pub outliers: usize,
    /// `None` when every trial is an outlier.
    pub mean_error_no_outliers: Option<f64>,
    pub std_error_no_outliers: Option<f64>,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Mean and standard deviation of `errors`, the number of errors above
/// `threshold`, and the same statistics with those removed.
pub fn summarize(errors: &[f64], threshold: f64) -> Result<SummaryStats> {
    if errors.is_empty() {
        return Err(Error::invalid("cannot summarize an empty error list"));
    }
    if threshold.is_nan() || threshold <= 0.0 {
        return Err(Error::invalid(format!(
            "threshold must be > 0, got {threshold}"
        )));
    }
    let (mean_error, std_error) = mean_std(errors);
    let kept: Vec<f64> = errors
        .iter()
        .copied()
        .filter(|e| e.is_nan() || *e <= threshold)
        .collect();
    let (mean_no, std_no) = if kept.is_empty() {
        (None, None)
    } else {
        let (m, s) = mean_std(&kept);
        (Some(m), Some(s))
    };
    Ok(SummaryStats {
        trials: errors.len(),
        mean_error,
        std_error,
        outliers: errors.len() - kept.len(),
        mean_error_no_outliers: mean_no,
        std_error_no_outliers: std_no,
    })
}

/// One line of the summary table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub strategy: String,
    pub sigma: f64,
    pub trials: usize,
    pub mean: f64,
    pub std: f64,
    pub outliers: usize,
    pub mean_no_outliers: Option<f64>,
    pub std_no_outliers: Option<f64>,
}

impl SummaryRow {
    pub fn new(strategy: &Strategy, sigma: f64, stats: &SummaryStats) -> Self {
        SummaryRow {
            strategy: strategy.to_string(),
            sigma,
            trials: stats.trials,
            mean: stats.mean_error,
            std: stats.std_error,
            outliers: stats.outliers,
            mean_no_outliers: stats.mean_error_no_outliers,
            std_no_outliers: stats.std_error_no_outliers,
        }
    }
}

/// One line of the per-trial results file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRow {
    pub trial_index: usize,
    pub strategy: String,
    pub sigma: f64,
    pub error: f64,
    pub outlier: bool,
    pub termination: TerminationReason,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    pub config: ExperimentConfig,
    /// One row per configured strategy, in configuration order.
    pub summary: Vec<SummaryRow>,
    /// Ordered by trial index.
    pub trials: Vec<TrialRecord>,
}

impl ExperimentOutput {
    /// Errors of the `i`-th configured strategy, in trial order.
    pub fn errors(&self, strategy_index: usize) -> Vec<f64> {
        self.trials
            .iter()
            .map(|t| t.outcomes[strategy_index].error)
            .collect()
    }

    pub fn trial_rows(&self) -> Vec<TrialRow> {
        let sigma = self.config.sigma;
        self.trials
            .iter()
            .flat_map(|t| {
                t.outcomes.iter().map(move |o| TrialRow {
                    trial_index: t.trial_index,
                    strategy: o.strategy.to_string(),
                    sigma,
                    error: o.error,
                    outlier: o.outlier,
                    termination: o.termination,
                    iterations: o.iterations,
                })
            })
            .collect()
    }
}

fn aggregate(config: &ExperimentConfig, trials: Vec<TrialRecord>) -> Result<ExperimentOutput> {
    let summary = config
        .strategies
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let errors: Vec<f64> = trials.iter().map(|t| t.outcomes[i].error).collect();
            summarize(&errors, config.outlier_threshold)
                .map(|stats| SummaryRow::new(s, config.sigma, &stats))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ExperimentOutput {
        config: config.clone(),
        summary,
        trials,
    })
}

/// Runs all trials on the current rayon pool.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    config.validate()?;
    let trials = (0..config.trials)
        .into_par_iter()
        .map(|i| run_trial(config, i))
        .collect::<Result<Vec<_>>>()?;
    aggregate(config, trials)
}

/// Runs all trials on a dedicated pool of `workers` threads (`0` lets rayon
/// choose). Output does not depend on the worker count.
pub fn run_experiment_with_workers(
    config: &ExperimentConfig,
    workers: usize,
) -> Result<ExperimentOutput> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::invalid(format!("cannot start worker pool: {e}")))?;
    pool.install(|| run_experiment(config))
}
