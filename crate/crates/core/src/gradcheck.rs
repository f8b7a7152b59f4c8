//! Analytic Jacobians checked against central differences.
//!
//! Each entry is compared as `|a - f| / max(|a|, |f|, 1)`, so large entries
//! of the squared objectives are judged relatively and entries near zero
//! absolutely.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lm::finite_diff_jacobian;
use crate::model::{
    apply_noise, squared_distance, true_ranges, MeasurementSet, Scenario, ScenarioGenerator,
};
use crate::objectives::{jacobian, EvalPoint, Jacobian, ObjectiveKind};

/// Sample points closer than this to a station are re-drawn; the range
/// Jacobian is not differentiable at a station.
const MIN_STATION_DISTANCE: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GradientCheckConfig {
    pub seed: u64,
    pub points_per_kind: usize,
    pub n_stations: usize,
    pub cube_side: f64,
    /// Range noise, so that residuals at the samples are not all zero.
    pub sigma: f64,
    /// Finite-difference step, scaled by `max(1, |x_j|)`.
    pub step: f64,
    pub tolerance: f64,
    /// Every `zero_lambda_every`-th point of a lifted kind has all `lambda = 0`.
    pub zero_lambda_every: usize,
    pub kinds: Vec<ObjectiveKind>,
}

impl Default for GradientCheckConfig {
    fn default() -> Self {
        GradientCheckConfig {
            seed: 0,
            points_per_kind: 100,
            n_stations: 5,
            cube_side: 10.0,
            sigma: 0.1,
            step: 1e-6,
            tolerance: 1e-6,
            zero_lambda_every: 4,
            kinds: vec![
                ObjectiveKind::PlainRange,
                ObjectiveKind::LiftedRange { k: 1 },
                ObjectiveKind::LiftedRange { k: 3 },
                ObjectiveKind::PlainSquared,
                ObjectiveKind::LiftedSquared { k: 1 },
                ObjectiveKind::LiftedSquared { k: 2 },
            ],
        }
    }
}

impl GradientCheckConfig {
    pub fn validate(&self) -> Result<()> {
        if self.points_per_kind == 0 {
            return Err(Error::invalid("points_per_kind must be positive"));
        }
        if self.kinds.is_empty() {
            return Err(Error::invalid("no objective kinds to check"));
        }
        if self.zero_lambda_every == 0 {
            return Err(Error::invalid("zero_lambda_every must be positive"));
        }
        for (name, v) in [("step", self.step), ("tolerance", self.tolerance)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(format!(
                    "{name} must be finite and > 0, got {v}"
                )));
            }
        }
        if !(self.sigma.is_finite() && self.sigma >= 0.0) {
            return Err(Error::invalid(format!(
                "sigma must be finite and >= 0, got {}",
                self.sigma
            )));
        }
        for kind in &self.kinds {
            if matches!(
                kind,
                ObjectiveKind::LiftedRange { k: 0 } | ObjectiveKind::LiftedSquared { k: 0 }
            ) {
                return Err(Error::invalid(format!("{kind} needs k >= 1")));
            }
        }
        ScenarioGenerator::new(2, self.n_stations, self.cube_side)?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KindReport {
    pub kind: ObjectiveKind,
    pub points: usize,
    pub zero_lambda_points: usize,
    pub max_relative_error: f64,
    /// Largest `|entry|` of any lambda column at a `lambda = 0` point, over
    /// both the analytic and the finite-difference Jacobian.
    pub max_lambda_column_at_zero: Option<f64>,
    pub worst_point: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientCheckReport {
    pub tolerance: f64,
    pub kinds: Vec<KindReport>,
}

impl GradientCheckReport {
    pub fn max_relative_error(&self) -> f64 {
        self.kinds
            .iter()
            .map(|k| k.max_relative_error)
            .fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.kinds.iter().all(|k| {
            k.max_relative_error < self.tolerance
                && k.max_lambda_column_at_zero
                    .is_none_or(|v| v < self.tolerance)
        })
    }
}

/// `|a - f| / max(|a|, |f|, 1)`, maximised over all entries.
pub fn max_relative_difference(analytic: &Jacobian, reference: &Jacobian) -> f64 {
    if analytic.matrix.shape() != reference.matrix.shape() {
        return f64::INFINITY;
    }
    analytic
        .matrix
        .iter()
        .zip(reference.matrix.iter())
        .map(|(a, f)| {
            let d = (a - f).abs();
            if d.is_nan() {
                f64::INFINITY
            } else {
                d / a.abs().max(f.abs()).max(1.0)
            }
        })
        .fold(0.0, f64::max)
}

pub fn check_gradients(config: &GradientCheckConfig) -> Result<GradientCheckReport> {
    check_gradients_with(config, jacobian)
}

/// Same as [`check_gradients`] with the analytic Jacobian supplied by the
/// caller, e.g. a deliberately wrong one.
pub fn check_gradients_with<F>(
    config: &GradientCheckConfig,
    analytic: F,
) -> Result<GradientCheckReport>
where
    F: Fn(ObjectiveKind, &EvalPoint, &Scenario, &MeasurementSet) -> Result<Jacobian>,
{
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut kinds = Vec::with_capacity(config.kinds.len());
    for &kind in &config.kinds {
        let k = kind.n_lambdas();
        let mut report = KindReport {
            kind,
            points: 0,
            zero_lambda_points: 0,
            max_relative_error: 0.0,
            max_lambda_column_at_zero: None,
            worst_point: Vec::new(),
        };
        for i in 0..config.points_per_kind {
            let dim = 2 + i % 2;
            let generator =
                ScenarioGenerator::new(dim, config.n_stations, config.cube_side)?.with_filter(None);
            let scenario = generator.generate(&mut rng)?;
            let exact = true_ranges(&scenario);
            let measurement = apply_noise(&exact, config.sigma, &mut rng)?;

            let position = loop {
                let p = generator.uniform_point(&mut rng);
                let clear = scenario.stations().iter().all(|b| {
                    squared_distance(p.coords(), b.coords()) >= MIN_STATION_DISTANCE.powi(2)
                });
                if clear {
                    break p;
                }
            };
            let zero_lambda = k > 0 && i % config.zero_lambda_every == 0;
            let lambdas: Vec<f64> = if zero_lambda {
                vec![0.0; k]
            } else {
                (0..k).map(|_| rng.random_range(-2.0..=2.0)).collect()
            };
            let point = EvalPoint { position, lambdas };

            let a = analytic(kind, &point, &scenario, &measurement)?;
            let f = finite_diff_jacobian(kind, &point, &scenario, &measurement, config.step)?;
            let err = max_relative_difference(&a, &f);
            if err > report.max_relative_error || report.worst_point.is_empty() {
                report.max_relative_error = err;
                report.worst_point = point.to_vec();
            }
            if zero_lambda {
                report.zero_lambda_points += 1;
                let largest = (dim..dim + k)
                    .map(|j| a.matrix.column(j).amax().max(f.matrix.column(j).amax()))
                    .fold(0.0, f64::max);
                let prev = report.max_lambda_column_at_zero.unwrap_or(0.0);
                report.max_lambda_column_at_zero = Some(prev.max(largest));
            }
            report.points += 1;
        }
        kinds.push(report);
    }
    Ok(GradientCheckReport {
        tolerance: config.tolerance,
        kinds,
    })
}
