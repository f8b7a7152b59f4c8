//! Plain, lifted, and lifted-then-plain solve strategies.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::lm::{lm_solve, LmParams, SolveResult, TerminationReason};
use crate::model::{MeasurementSet, Point, Scenario};
use crate::objectives::{EvalPoint, ObjectiveKind};

pub const DEFAULT_LAMBDA0: f64 = 1.0;

/// How a position is estimated from one scenario and measurement set.
///
/// Textual form: `plain`, `lifted:k=1,lambda0=1`, `restart:k=1,lambda0=1`.
/// Omitted keys take `k = 1` and `lambda0 = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Strategy {
    /// Minimize the plain range objective.
    Plain,
    /// Minimize the lifted range objective with `k` lifting variables, each
    /// started at `lambda0`.
    Lifted { k: usize, lambda0: f64 },
    /// Lifted solve, then a plain solve started from its position.
    LiftedRestart { k: usize, lambda0: f64 },
}

impl Strategy {
    pub fn lifted(k: usize, lambda0: f64) -> Result<Self> {
        let s = Strategy::Lifted { k, lambda0 };
        s.validate()?;
        Ok(s)
    }

    pub fn restart(k: usize, lambda0: f64) -> Result<Self> {
        let s = Strategy::LiftedRestart { k, lambda0 };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Strategy::Plain => Ok(()),
            Strategy::Lifted { k, lambda0 } | Strategy::LiftedRestart { k, lambda0 } => {
                if k == 0 {
                    return Err(Error::invalid("lifted strategies need k >= 1"));
                }
                // a zero start leaves the lifting column of the Jacobian at
                // zero forever, which silently reduces to the plain solve
                if lambda0 == 0.0 || !lambda0.is_finite() {
                    return Err(Error::invalid(format!(
                        "lambda0 must be finite and non-zero, got {lambda0}"
                    )));
                }
                Ok(())
            }
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Strategy::Plain => write!(f, "plain"),
            Strategy::Lifted { k, lambda0 } => write!(f, "lifted:k={k},lambda0={lambda0}"),
            Strategy::LiftedRestart { k, lambda0 } => {
                write!(f, "restart:k={k},lambda0={lambda0}")
            }
        }
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (name, args) = match s.trim().split_once(':') {
            Some((n, a)) => (n.trim(), Some(a)),
            None => (s.trim(), None),
        };
        let mut k = 1usize;
        let mut lambda0 = DEFAULT_LAMBDA0;
        if let Some(args) = args {
            for kv in args.split(',').map(str::trim).filter(|a| !a.is_empty()) {
                let (key, value) = kv
                    .split_once('=')
                    .ok_or_else(|| Error::invalid(format!("expected key=value, got `{kv}`")))?;
                match key.trim() {
                    "k" => {
                        k = value
                            .trim()
                            .parse()
                            .map_err(|_| Error::invalid(format!("invalid k `{value}` in `{s}`")))?
                    }
                    "lambda0" => {
                        lambda0 = value.trim().parse().map_err(|_| {
                            Error::invalid(format!("invalid lambda0 `{value}` in `{s}`"))
                        })?
                    }
                    other => {
                        return Err(Error::invalid(format!(
                            "unknown strategy parameter `{other}` in `{s}`"
                        )))
                    }
                }
            }
        }
        let strategy = match name {
            "plain" if args.is_none() => Strategy::Plain,
            "plain" => return Err(Error::invalid("`plain` takes no parameters")),
            "lifted" => Strategy::Lifted { k, lambda0 },
            "restart" => Strategy::LiftedRestart { k, lambda0 },
            other => return Err(Error::invalid(format!("unknown strategy `{other}`"))),
        };
        strategy.validate()?;
        Ok(strategy)
    }
}

impl Serialize for Strategy {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Strategy {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Counters of the lifted stage of a restart solve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageSummary {
    pub cost: f64,
    pub reason: TerminationReason,
    pub iterations: usize,
    pub function_evals: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyResult {
    /// Estimated position, always of the scenario dimension.
    pub position: Point,
    /// Final lifting variables of the lifted stage; empty for [`Strategy::Plain`].
    pub lambdas: Vec<f64>,
    /// The last solve. For a restart its trace is the lifted trace followed
    /// by the plain trace.
    pub solve: SolveResult,
    /// The lifted stage of a restart, which ran on its own budget.
    pub lifted_stage: Option<StageSummary>,
}

impl StrategyResult {
    pub fn reason(&self) -> TerminationReason {
        self.solve.reason
    }

    /// Accepted iterations across all stages.
    pub fn total_iterations(&self) -> usize {
        self.solve.iterations + self.lifted_stage.map_or(0, |s| s.iterations)
    }

    pub fn total_function_evals(&self) -> usize {
        self.solve.function_evals + self.lifted_stage.map_or(0, |s| s.function_evals)
    }
}

fn lifted_solve(
    k: usize,
    lambda0: f64,
    s: &Scenario,
    m: &MeasurementSet,
    x0: &Point,
    params: &LmParams,
) -> Result<SolveResult> {
    lm_solve(
        ObjectiveKind::LiftedRange { k },
        s,
        m,
        &EvalPoint::lifted(x0.clone(), vec![lambda0; k]),
        params,
    )
}

pub fn solve_with_strategy(
    strategy: &Strategy,
    s: &Scenario,
    m: &MeasurementSet,
    x0_position: &Point,
    params: &LmParams,
) -> Result<StrategyResult> {
    strategy.validate()?;
    x0_position.check_dim(s.dim())?;
    match *strategy {
        Strategy::Plain => {
            let solve = lm_solve(
                ObjectiveKind::PlainRange,
                s,
                m,
                &EvalPoint::plain(x0_position.clone()),
                params,
            )?;
            Ok(StrategyResult {
                position: solve.final_point.position.clone(),
                lambdas: Vec::new(),
                solve,
                lifted_stage: None,
            })
        }
        Strategy::Lifted { k, lambda0 } => {
            let solve = lifted_solve(k, lambda0, s, m, x0_position, params)?;
            Ok(StrategyResult {
                position: solve.final_point.position.clone(),
                lambdas: solve.final_point.lambdas.clone(),
                solve,
                lifted_stage: None,
            })
        }
        Strategy::LiftedRestart { k, lambda0 } => {
            let lifted = lifted_solve(k, lambda0, s, m, x0_position, params)?;
            let mut plain = lm_solve(
                ObjectiveKind::PlainRange,
                s,
                m,
                &EvalPoint::plain(lifted.final_point.position.clone()),
                params,
            )?;
            let stage = StageSummary {
                cost: lifted.final_cost,
                reason: lifted.reason,
                iterations: lifted.iterations,
                function_evals: lifted.function_evals,
            };
            let mut trace = lifted.trace;
            trace.append(&mut plain.trace);
            let mut costs = lifted.trace_costs;
            costs.append(&mut plain.trace_costs);
            plain.trace = trace;
            plain.trace_costs = costs;
            plain.clamp_flag |= lifted.clamp_flag;
            Ok(StrategyResult {
                position: plain.final_point.position.clone(),
                lambdas: lifted.final_point.lambdas,
                solve: plain,
                lifted_stage: Some(stage),
            })
        }
    }
}
