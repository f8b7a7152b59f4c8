//! Plain and lifted range objectives.
//!
//! For a candidate position `x`, lifting variables `l_1..l_k` and station
//! `B_i` with measured range `d_i`, the residuals are
//!
//! - range form: `sqrt(|x - B_i|^2 + sum_j l_j^2) - d_i`
//! - squared form: `|x - B_i|^2 + sum_j l_j^2 - d_i^2`
//!
//! with `k = 0` for the plain variants. The cost is the sum of squared
//! residuals. The objective only sees the lifting variables through
//! `sum_j l_j^2`, so any number of them is equivalent to a single one with
//! value [`reduce_lambdas`].

use std::fmt;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lm::LeastSquares;
use crate::model::{squared_distance, MeasurementSet, Point, Scenario};

/// Lower bound applied to `rho_i` when a station coincides with the
/// evaluation point (and all lifting variables vanish).
pub const DENOMINATOR_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ObjectiveKind {
    PlainRange,
    LiftedRange { k: usize },
    PlainSquared,
    LiftedSquared { k: usize },
}

impl ObjectiveKind {
    pub fn lifted_range(k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::invalid("lifted objectives need k >= 1"));
        }
        Ok(ObjectiveKind::LiftedRange { k })
    }

    pub fn lifted_squared(k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::invalid("lifted objectives need k >= 1"));
        }
        Ok(ObjectiveKind::LiftedSquared { k })
    }

    /// Number of lifting variables (0 for the plain variants).
    pub fn n_lambdas(self) -> usize {
        match self {
            ObjectiveKind::PlainRange | ObjectiveKind::PlainSquared => 0,
            ObjectiveKind::LiftedRange { k } | ObjectiveKind::LiftedSquared { k } => k,
        }
    }

    pub fn is_squared(self) -> bool {
        matches!(
            self,
            ObjectiveKind::PlainSquared | ObjectiveKind::LiftedSquared { .. }
        )
    }

    pub fn n_variables(self, dim: usize) -> usize {
        dim + self.n_lambdas()
    }

    fn validate(self) -> Result<()> {
        match self {
            ObjectiveKind::LiftedRange { k: 0 } | ObjectiveKind::LiftedSquared { k: 0 } => {
                Err(Error::invalid("lifted objectives need k >= 1"))
            }
            _ => Ok(()),
        }
    }
}

impl fmt::Display for ObjectiveKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ObjectiveKind::PlainRange => write!(f, "plain-range"),
            ObjectiveKind::LiftedRange { k } => write!(f, "lifted-range(k={k})"),
            ObjectiveKind::PlainSquared => write!(f, "plain-squared"),
            ObjectiveKind::LiftedSquared { k } => write!(f, "lifted-squared(k={k})"),
        }
    }
}

/// A candidate position together with its lifting variables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalPoint {
    pub position: Point,
    pub lambdas: Vec<f64>,
}

impl EvalPoint {
    pub fn plain(position: Point) -> Self {
        EvalPoint {
            position,
            lambdas: Vec::new(),
        }
    }

    pub fn lifted(position: Point, lambdas: Vec<f64>) -> Self {
        EvalPoint { position, lambdas }
    }

    /// Position coordinates followed by the lifting variables.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = self.position.coords().to_vec();
        v.extend_from_slice(&self.lambdas);
        v
    }

    pub(crate) fn from_slice(dim: usize, x: &[f64]) -> Self {
        EvalPoint {
            position: Point::from_vec(x[..dim].to_vec()),
            lambdas: x[dim..].to_vec(),
        }
    }

    pub(crate) fn check(&self, kind: ObjectiveKind, dim: usize) -> Result<()> {
        kind.validate()?;
        self.position.check_dim(dim)?;
        if self.lambdas.len() != kind.n_lambdas() {
            return Err(Error::DimensionMismatch {
                expected: kind.n_lambdas(),
                actual: self.lambdas.len(),
            });
        }
        Ok(())
    }
}

/// Residual vector, one entry per station.
#[derive(Debug, Clone, PartialEq)]
pub struct Residuals(pub Vec<f64>);

impl Residuals {
    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn cost(&self) -> f64 {
        self.0.iter().map(|r| r * r).sum()
    }
}

/// Jacobian of the residuals, `N x (D + k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Jacobian {
    pub matrix: DMatrix<f64>,
    /// Set when at least one `rho_i` was clamped to [`DENOMINATOR_CLAMP`].
    pub clamped: bool,
}

/// The Euclidean norm of the lifting vector.
pub fn reduce_lambdas(lambdas: &[f64]) -> f64 {
    lambdas.iter().map(|l| l * l).sum::<f64>().sqrt()
}

/// A ranging problem bound to one scenario, measurement set and objective.
///
/// The variable vector is the position followed by the lifting variables.
#[derive(Debug, Clone, Copy)]
pub struct RangeProblem<'a> {
    kind: ObjectiveKind,
    scenario: &'a Scenario,
    measurement: &'a MeasurementSet,
}

impl<'a> RangeProblem<'a> {
    pub fn new(
        kind: ObjectiveKind,
        scenario: &'a Scenario,
        measurement: &'a MeasurementSet,
    ) -> Result<Self> {
        kind.validate()?;
        measurement.check_len(scenario.n_stations())?;
        Ok(RangeProblem {
            kind,
            scenario,
            measurement,
        })
    }

    pub fn kind(&self) -> ObjectiveKind {
        self.kind
    }

    pub fn scenario(&self) -> &'a Scenario {
        self.scenario
    }

    pub fn measurement(&self) -> &'a MeasurementSet {
        self.measurement
    }

    fn split<'x>(&self, x: &'x [f64]) -> (&'x [f64], f64) {
        let dim = self.scenario.dim();
        let (pos, lambdas) = x.split_at(dim);
        (pos, lambdas.iter().map(|l| l * l).sum())
    }

    pub fn residuals_at(&self, x: &[f64]) -> Vec<f64> {
        let (pos, lambda_sq) = self.split(x);
        let squared = self.kind.is_squared();
        self.scenario
            .stations()
            .iter()
            .zip(self.measurement.ranges())
            .map(|(b, d)| {
                let q = squared_distance(pos, b.coords()) + lambda_sq;
                if squared {
                    q - d * d
                } else {
                    q.sqrt() - d
                }
            })
            .collect()
    }

    pub fn jacobian_at(&self, x: &[f64]) -> Jacobian {
        let dim = self.scenario.dim();
        let (pos, lambda_sq) = self.split(x);
        let lambdas = &x[dim..];
        let n = self.scenario.n_stations();
        let mut matrix = DMatrix::<f64>::zeros(n, x.len());
        let mut clamped = false;
        for (i, b) in self.scenario.stations().iter().enumerate() {
            let scale = if self.kind.is_squared() {
                2.0
            } else {
                let rho = (squared_distance(pos, b.coords()) + lambda_sq).sqrt();
                if rho < DENOMINATOR_CLAMP {
                    clamped = true;
                    1.0 / DENOMINATOR_CLAMP
                } else {
                    1.0 / rho
                }
            };
            for (j, (p, c)) in pos.iter().zip(b.coords()).enumerate() {
                matrix[(i, j)] = (p - c) * scale;
            }
            for (j, l) in lambdas.iter().enumerate() {
                matrix[(i, dim + j)] = l * scale;
            }
        }
        Jacobian { matrix, clamped }
    }
}

impl LeastSquares for RangeProblem<'_> {
    fn n_residuals(&self) -> usize {
        self.scenario.n_stations()
    }

    fn residuals(&self, x: &[f64]) -> Vec<f64> {
        self.residuals_at(x)
    }

    fn jacobian(&self, x: &[f64]) -> (DMatrix<f64>, bool) {
        let j = self.jacobian_at(x);
        (j.matrix, j.clamped)
    }
}

pub fn residuals(
    kind: ObjectiveKind,
    p: &EvalPoint,
    s: &Scenario,
    m: &MeasurementSet,
) -> Result<Residuals> {
    p.check(kind, s.dim())?;
    let problem = RangeProblem::new(kind, s, m)?;
    Ok(Residuals(problem.residuals_at(&p.to_vec())))
}

pub fn cost(kind: ObjectiveKind, p: &EvalPoint, s: &Scenario, m: &MeasurementSet) -> Result<f64> {
    residuals(kind, p, s, m).map(|r| r.cost())
}

pub fn jacobian(
    kind: ObjectiveKind,
    p: &EvalPoint,
    s: &Scenario,
    m: &MeasurementSet,
) -> Result<Jacobian> {
    p.check(kind, s.dim())?;
    let problem = RangeProblem::new(kind, s, m)?;
    Ok(problem.jacobian_at(&p.to_vec()))
}

/// Sign indicator for the curvature of the lifted range cost along a
/// lifting direction at `lambda = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Curvature {
    /// `sum_i (|p - B_i| - d_i) / |p - B_i|`. The second derivative of the
    /// lifted cost along `lambda` at `lambda = 0` is exactly twice this.
    pub value: f64,
    /// A station coincided with `p` and its denominator was clamped.
    pub clamped: bool,
}

impl Curvature {
    /// Negative curvature: `lambda` is a descent direction, so `p` is a
    /// saddle of the lifted cost rather than a trap.
    pub fn is_saddle(&self) -> bool {
        self.value < 0.0
    }
}

pub fn curvature_indicator(p: &Point, s: &Scenario, m: &MeasurementSet) -> Result<Curvature> {
    p.check_dim(s.dim())?;
    m.check_len(s.n_stations())?;
    let mut clamped = false;
    let value = s
        .stations()
        .iter()
        .zip(m.ranges())
        .map(|(b, d)| {
            let mut rho = squared_distance(p.coords(), b.coords()).sqrt();
            if rho < DENOMINATOR_CLAMP {
                clamped = true;
                rho = DENOMINATOR_CLAMP;
            }
            (rho - d) / rho
        })
        .sum();
    Ok(Curvature { value, clamped })
}
