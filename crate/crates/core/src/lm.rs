//! Levenberg-Marquardt least-squares minimization.
//!
//! Each iteration solves the damped normal equations
//!
//! ```text
//! (J^T J + mu * diag(J^T J)) delta = -J^T r
//! ```
//!
//! (`diag(J^T J)` replaced by the identity or a running maximum depending on
//! [`DampingScale`]) and accepts `x + delta` only if it strictly lowers
//! `sum r_i^2`. An accepted step divides `mu` by `damping_decrease`; a
//! rejected one multiplies it by `damping_increase` and the step is
//! recomputed. Every residual evaluation, including the one at the initial
//! estimate, counts against the function evaluation budget.
//!
//! Stopping rules, checked in this order:
//!
//! - first order: `|J^T r|_inf < g * optimality_tolerance * function_tolerance`
//!   with `g = max(|J^T r_0|_inf, sqrt(eps))`. The optimality tolerance is a
//!   factor on the function tolerance, relative to the initial gradient
//! - iteration budget
//! - function evaluation budget
//! - after an accepted step: relative cost decrease below `function_tolerance`
//! - `|delta| < step_tolerance * (1 + |x|)`, for accepted and rejected steps

use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{MeasurementSet, Scenario};
use crate::objectives::{EvalPoint, Jacobian, ObjectiveKind, RangeProblem};

/// Zero diagonal entries of `J^T J` are raised to this before damping.
pub const DIAGONAL_FLOOR: f64 = 1e-12;

/// A nonlinear least-squares problem in `n` variables.
pub trait LeastSquares {
    fn n_residuals(&self) -> usize;

    fn residuals(&self, x: &[f64]) -> Vec<f64>;

    /// Jacobian of the residuals at `x`, plus a flag that is set when the
    /// evaluation had to be safeguarded.
    fn jacobian(&self, x: &[f64]) -> (DMatrix<f64>, bool);
}

/// Solver settings. The defaults mirror the stock MATLAB
/// Levenberg-Marquardt configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LmParams {
    pub max_iterations: usize,
    /// `None` means `100 * number_of_variables`.
    pub max_function_evals: Option<usize>,
    pub function_tolerance: f64,
    pub step_tolerance: f64,
    /// Factor on `function_tolerance` for the first-order stopping test.
    pub optimality_tolerance: f64,
    pub initial_damping: f64,
    pub damping_increase: f64,
    pub damping_decrease: f64,
    pub damping_scale: DampingScale,
}

/// Diagonal matrix multiplying the damping parameter in the normal equations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DampingScale {
    /// `diag(J^T J)` at the current iterate.
    Jacobian,
    /// The identity.
    #[default]
    Identity,
    /// Running maximum of `diag(J^T J)` over all iterates so far.
    RunningMax,
}

impl Default for LmParams {
    fn default() -> Self {
        LmParams {
            max_iterations: 400,
            max_function_evals: None,
            function_tolerance: 1e-6,
            step_tolerance: 1e-6,
            optimality_tolerance: 1e-4,
            initial_damping: 1e-2,
            damping_increase: 10.0,
            damping_decrease: 10.0,
            damping_scale: DampingScale::default(),
        }
    }
}

impl LmParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("function_tolerance", self.function_tolerance),
            ("step_tolerance", self.step_tolerance),
            ("optimality_tolerance", self.optimality_tolerance),
            ("initial_damping", self.initial_damping),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(format!("{name} must be > 0, got {v}")));
            }
        }
        for (name, v) in [
            ("damping_increase", self.damping_increase),
            ("damping_decrease", self.damping_decrease),
        ] {
            if !(v.is_finite() && v > 1.0) {
                return Err(Error::invalid(format!("{name} must be > 1, got {v}")));
            }
        }
        if self.max_function_evals == Some(0) {
            return Err(Error::invalid("max_function_evals must be >= 1"));
        }
        Ok(())
    }

    pub fn function_eval_budget(&self, n_variables: usize) -> usize {
        self.max_function_evals.unwrap_or(100 * n_variables)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminationReason {
    FunctionTolerance,
    StepTolerance,
    OptimalityTolerance,
    MaxIterations,
    MaxFunctionEvals,
}

impl fmt::Display for TerminationReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TerminationReason::FunctionTolerance => "function_tolerance",
            TerminationReason::StepTolerance => "step_tolerance",
            TerminationReason::OptimalityTolerance => "optimality_tolerance",
            TerminationReason::MaxIterations => "max_iterations",
            TerminationReason::MaxFunctionEvals => "max_function_evals",
        })
    }
}

/// Outcome of [`minimize`] on a generic problem.
#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub x: Vec<f64>,
    pub cost: f64,
    pub reason: TerminationReason,
    pub iterations: usize,
    pub function_evals: usize,
    /// Accepted iterates, starting with the initial estimate.
    pub trace: Vec<Vec<f64>>,
    /// Cost at each entry of `trace`.
    pub costs: Vec<f64>,
    pub clamped: bool,
}

fn sum_sq(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum()
}

fn norm(v: &[f64]) -> f64 {
    sum_sq(v).sqrt()
}

/// Solves `a x = b` for symmetric positive definite `a` by Cholesky.
fn cholesky_solve(a: &DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    let n = a.nrows();
    let mut l = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d.is_finite() && d > 0.0) {
            return None;
        }
        let d = d.sqrt();
        l[(j, j)] = d;
        for i in j + 1..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / d;
        }
    }
    let mut y = DVector::<f64>::zeros(n);
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[(i, k)] * y[k];
        }
        y[i] = s / l[(i, i)];
    }
    let mut x = DVector::<f64>::zeros(n);
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in i + 1..n {
            s -= l[(k, i)] * x[k];
        }
        x[i] = s / l[(i, i)];
    }
    Some(x)
}

struct State {
    x: Vec<f64>,
    r: Vec<f64>,
    cost: f64,
    iterations: usize,
    function_evals: usize,
    trace: Vec<Vec<f64>>,
    costs: Vec<f64>,
    clamped: bool,
}

impl State {
    fn finish(self, reason: TerminationReason) -> Result<Report> {
        Ok(Report {
            x: self.x,
            cost: self.cost,
            reason,
            iterations: self.iterations,
            function_evals: self.function_evals,
            trace: self.trace,
            costs: self.costs,
            clamped: self.clamped,
        })
    }
}

/// Minimizes `sum_i r_i(x)^2` starting from `x0`.
pub fn minimize<P: LeastSquares + ?Sized>(
    problem: &P,
    x0: &[f64],
    params: &LmParams,
) -> Result<Report> {
    params.validate()?;
    if x0.is_empty() {
        return Err(Error::invalid("empty initial estimate"));
    }
    let n = x0.len();
    let max_fev = params.function_eval_budget(n);

    let r = problem.residuals(x0);
    let cost = sum_sq(&r);
    if !cost.is_finite() {
        return Err(Error::NonFinite(format!("cost = {cost}")));
    }
    let (mut jac, clamped) = problem.jacobian(x0);
    if jac.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("Jacobian entry".into()));
    }
    let mut st = State {
        x: x0.to_vec(),
        r,
        cost,
        iterations: 0,
        function_evals: 1,
        trace: vec![x0.to_vec()],
        costs: vec![cost],
        clamped,
    };
    let mut mu = params.initial_damping;
    let mut running_max = vec![0.0f64; n];
    let mut gradient_bound = None;

    loop {
        let grad = jac.tr_mul(&DVector::from_column_slice(&st.r));
        let bound = *gradient_bound.get_or_insert_with(|| {
            params.optimality_tolerance
                * params.function_tolerance
                * grad.amax().max(f64::EPSILON.sqrt())
        });
        if grad.amax() < bound {
            return st.finish(TerminationReason::OptimalityTolerance);
        }
        if st.iterations >= params.max_iterations {
            return st.finish(TerminationReason::MaxIterations);
        }

        let jtj = jac.tr_mul(&jac);
        let scale: Vec<f64> = (0..n)
            .map(|i| match params.damping_scale {
                DampingScale::Jacobian => jtj[(i, i)].max(DIAGONAL_FLOOR),
                DampingScale::Identity => 1.0,
                DampingScale::RunningMax => {
                    running_max[i] = running_max[i].max(jtj[(i, i)]);
                    running_max[i].max(DIAGONAL_FLOOR)
                }
            })
            .collect();
        let neg_grad = -grad;
        let x_norm = norm(&st.x);

        loop {
            if st.function_evals >= max_fev {
                return st.finish(TerminationReason::MaxFunctionEvals);
            }

            let mut damped = jtj.clone();
            for i in 0..n {
                damped[(i, i)] += mu * scale[i];
            }
            let Some(delta) = cholesky_solve(&damped, &neg_grad) else {
                mu *= params.damping_increase;
                if !mu.is_finite() {
                    return Err(Error::Singular);
                }
                continue;
            };
            let small_step = delta.norm() < params.step_tolerance * (1.0 + x_norm);
            let candidate: Vec<f64> = st.x.iter().zip(delta.iter()).map(|(a, d)| a + d).collect();
            let r_new = problem.residuals(&candidate);
            st.function_evals += 1;
            let cost_new = sum_sq(&r_new);

            if cost_new.is_finite() && cost_new < st.cost {
                mu /= params.damping_decrease;
                let relative_decrease = (st.cost - cost_new) / st.cost;
                let (j, c) = problem.jacobian(&candidate);
                jac = j;
                st.clamped |= c;
                st.iterations += 1;
                st.trace.push(candidate.clone());
                st.costs.push(cost_new);
                st.x = candidate;
                st.r = r_new;
                st.cost = cost_new;

                if relative_decrease < params.function_tolerance {
                    return st.finish(TerminationReason::FunctionTolerance);
                }
                if small_step {
                    return st.finish(TerminationReason::StepTolerance);
                }
                break;
            }

            mu *= params.damping_increase;
            if small_step {
                return st.finish(TerminationReason::StepTolerance);
            }
        }
    }
}

/// Result of [`lm_solve`] on a range objective.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub final_point: EvalPoint,
    pub final_cost: f64,
    pub reason: TerminationReason,
    pub iterations: usize,
    pub function_evals: usize,
    /// Accepted iterates, starting with the initial estimate and ending with
    /// `final_point`.
    pub trace: Vec<EvalPoint>,
    /// Cost at each entry of `trace`.
    pub trace_costs: Vec<f64>,
    /// The station-coincidence safeguard fired during the solve.
    pub clamp_flag: bool,
}

pub fn lm_solve(
    kind: ObjectiveKind,
    s: &Scenario,
    m: &MeasurementSet,
    x0: &EvalPoint,
    params: &LmParams,
) -> Result<SolveResult> {
    x0.check(kind, s.dim())?;
    let problem = RangeProblem::new(kind, s, m)?;
    let report = minimize(&problem, &x0.to_vec(), params)?;
    let dim = s.dim();
    Ok(SolveResult {
        final_point: EvalPoint::from_slice(dim, &report.x),
        final_cost: report.cost,
        reason: report.reason,
        iterations: report.iterations,
        function_evals: report.function_evals,
        trace: report
            .trace
            .iter()
            .map(|x| EvalPoint::from_slice(dim, x))
            .collect(),
        trace_costs: report.costs,
        clamp_flag: report.clamped,
    })
}

/// Central-difference Jacobian of a generic problem. Variable `j` is
/// perturbed by `h * max(1, |x_j|)`.
pub fn finite_diff<P: LeastSquares + ?Sized>(problem: &P, x: &[f64], h: f64) -> DMatrix<f64> {
    let mut out = DMatrix::<f64>::zeros(problem.n_residuals(), x.len());
    let mut probe = x.to_vec();
    for j in 0..x.len() {
        let step = h * x[j].abs().max(1.0);
        probe[j] = x[j] + step;
        let plus = problem.residuals(&probe);
        probe[j] = x[j] - step;
        let minus = problem.residuals(&probe);
        probe[j] = x[j];
        let width = 2.0 * step;
        for (i, (p, m)) in plus.iter().zip(&minus).enumerate() {
            out[(i, j)] = (p - m) / width;
        }
    }
    out
}

pub fn finite_diff_jacobian(
    kind: ObjectiveKind,
    p: &EvalPoint,
    s: &Scenario,
    m: &MeasurementSet,
    h: f64,
) -> Result<Jacobian> {
    if !(h.is_finite() && h > 0.0) {
        return Err(Error::invalid(format!("step must be > 0, got {h}")));
    }
    p.check(kind, s.dim())?;
    let problem = RangeProblem::new(kind, s, m)?;
    Ok(Jacobian {
        matrix: finite_diff(&problem, &p.to_vec(), h),
        clamped: false,
    })
}
