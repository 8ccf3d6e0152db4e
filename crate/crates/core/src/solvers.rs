//! Batch identification of parameter deviations.
//!
//! Three update rules share one iteration loop:
//!
//! * least squares (Gauss–Newton): `Δx = (JᵀJ)⁻¹Jᵀe`
//! * Levenberg–Marquardt with fixed damping: `Δx = (JᵀJ + λI)⁻¹Jᵀe`
//! * variable step-size LM (SLM): the LM step scaled by `δ_t`, with
//!   `δ_{t+1} = δ_t·μ`.
//!
//! Every run starts from the nominal model (`x = 0`) unless a starting point is
//! given, and stops when the RMSE change between iterations (or the RMSE
//! itself) drops below `tol`, after `max_iter` iterations, or after
//! [`DIVERGENCE_WINDOW`] consecutive RMSE increases.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::data::MeasurementSet;
use crate::error::{Error, Result};
use crate::error_model::{Estimate, Extensions, ParamDeviation, Problem};
use crate::kinematics::RobotModel;

/// Largest condition number of `JᵀJ` accepted by the undamped solve.
pub const CONDITION_LIMIT: f64 = 1e12;
/// Consecutive RMSE increases after which a run is abandoned.
pub const DIVERGENCE_WINDOW: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Damping added to the normal-equation diagonal.
    pub lambda: f64,
    /// Initial step size for SLM.
    pub delta0: f64,
    /// Per-iteration step decay for SLM, in `(0, 1]`; `1` reduces SLM to LM.
    pub mu: f64,
    pub max_iter: usize,
    /// Convergence threshold on RMSE change (mm).
    pub tol: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            lambda: 0.01,
            delta0: 1.0,
            mu: 0.95,
            max_iter: 200,
            tol: 1e-9,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return bad(format!("lambda must be finite and >= 0, got {}", self.lambda));
        }
        if !(self.delta0.is_finite() && self.delta0 > 0.0) {
            return bad(format!("delta0 must be finite and > 0, got {}", self.delta0));
        }
        if !(self.mu > 0.0 && self.mu <= 1.0) {
            return bad(format!("mu must lie in (0, 1], got {}", self.mu));
        }
        if self.max_iter == 0 {
            return bad("max_iter must be positive".into());
        }
        if !(self.tol.is_finite() && self.tol > 0.0) {
            return bad(format!("tol must be finite and > 0, got {}", self.tol));
        }
        Ok(())
    }
}

/// Calibration methods exposed by the toolkit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "ls")]
    Ls,
    #[serde(rename = "lm")]
    Lm,
    #[serde(rename = "slm")]
    Slm,
    #[serde(rename = "ukf")]
    Ukf,
    #[serde(rename = "ukf-slm")]
    UkfSlm,
}

impl Method {
    pub const ALL: [Method; 5] = [Method::Ls, Method::Lm, Method::Slm, Method::Ukf, Method::UkfSlm];

    pub fn name(self) -> &'static str {
        match self {
            Method::Ls => "ls",
            Method::Lm => "lm",
            Method::Slm => "slm",
            Method::Ukf => "ukf",
            Method::UkfSlm => "ukf-slm",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown method `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    /// RMSE change (or RMSE itself) fell below `tol`.
    Tolerance,
    MaxIterations,
    /// RMSE rose for [`DIVERGENCE_WINDOW`] consecutive iterations.
    Diverged,
    /// A fixed number of filter steps completed (UKF).
    Completed,
}

/// Outcome of one calibration run.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub method: Method,
    pub ext: Extensions,
    /// Final parameter vector (`ext.dim()` entries).
    pub estimate: DVector<f64>,
    /// RMSE (mm) before the first iteration and after each one.
    pub rmse_history: Vec<f64>,
    /// Parameter vector before the first iteration and after each one.
    pub iterates: Vec<DVector<f64>>,
    /// Step-size multiplier applied at each iteration (all 1 for LM).
    pub step_sizes: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub stop_reason: StopReason,
    /// Seconds.
    pub wall_time: f64,
    /// For two-stage runs, the history index where the second stage starts.
    pub stage_boundary: Option<usize>,
}

impl SolveReport {
    /// The DH part of the estimate.
    pub fn x_hat(&self) -> ParamDeviation {
        ParamDeviation::from_slice(&self.estimate.as_slice()[..crate::error_model::PARAMS])
            .expect("estimate stays finite")
    }

    pub fn estimate_parts(&self) -> Estimate {
        Estimate::from_vector(self.ext, &self.estimate).expect("estimate matches its layout")
    }

    pub fn initial_rmse(&self) -> f64 {
        self.rmse_history[0]
    }

    pub fn final_rmse(&self) -> f64 {
        *self.rmse_history.last().expect("history is never empty")
    }

    /// First history index whose RMSE is at or below `threshold`.
    pub fn iterations_to(&self, threshold: f64) -> Option<usize> {
        self.rmse_history.iter().position(|&r| r <= threshold)
    }
}

fn normal_equations(j: &DMatrix<f64>, e: &DVector<f64>) -> Result<(DMatrix<f64>, DVector<f64>)> {
    if j.nrows() != e.len() {
        return Err(Error::InvalidArgument(format!(
            "Jacobian has {} rows but there are {} residuals",
            j.nrows(),
            e.len()
        )));
    }
    Ok((j.tr_mul(j), j.tr_mul(e)))
}

/// Ratio of extreme eigenvalues of a symmetric PSD matrix; infinite when singular.
pub fn condition_estimate(a: &DMatrix<f64>) -> f64 {
    let eig = SymmetricEigen::new(a.clone()).eigenvalues;
    let max = eig.max();
    let min = eig.min();
    if min <= 0.0 || !min.is_finite() {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Undamped normal-equation solution `(JᵀJ)⁻¹Jᵀe`.
///
/// Fails with [`Error::Singular`] when `JᵀJ` has a condition estimate above
/// [`CONDITION_LIMIT`], which is the normal situation for a full DH error
/// model with redundant parameters.
pub fn least_squares_step(j: &DMatrix<f64>, e: &DVector<f64>) -> Result<DVector<f64>> {
    let (jtj, jte) = normal_equations(j, e)?;
    let condition = condition_estimate(&jtj);
    if condition > CONDITION_LIMIT {
        return Err(Error::Singular { condition });
    }
    let chol = jtj.cholesky().ok_or(Error::Singular { condition })?;
    Ok(chol.solve(&jte))
}

/// Damped normal-equation solution `(JᵀJ + λI)⁻¹Jᵀe`. `λ = 0` is the
/// undamped solve.
pub fn lm_step(j: &DMatrix<f64>, e: &DVector<f64>, lambda: f64) -> Result<DVector<f64>> {
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "lambda must be finite and >= 0, got {lambda}"
        )));
    }
    if lambda == 0.0 {
        return least_squares_step(j, e);
    }
    let (mut a, jte) = normal_equations(j, e)?;
    for i in 0..a.nrows() {
        a[(i, i)] += lambda;
    }
    let chol = a
        .cholesky()
        .ok_or_else(|| Error::Numeric("damped normal matrix is not positive definite".into()))?;
    Ok(chol.solve(&jte))
}

/// Step-size schedule multiplying each damped step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepSchedule {
    pub delta0: f64,
    pub mu: f64,
}

impl StepSchedule {
    pub const CONSTANT: StepSchedule = StepSchedule { delta0: 1.0, mu: 1.0 };

    /// The first `n` step sizes `δ₀, δ₀μ, δ₀μ², …` as produced by the recurrence.
    pub fn sizes(&self, n: usize) -> Vec<f64> {
        std::iter::successors(Some(self.delta0), |d| Some(d * self.mu))
            .take(n)
            .collect()
    }
}

/// Runs the damped iteration from `x0` on an arbitrary problem layout.
pub fn solve_from(
    problem: &Problem<'_>,
    x0: DVector<f64>,
    cfg: &SolverConfig,
    schedule: StepSchedule,
    method: Method,
) -> Result<SolveReport> {
    cfg.validate()?;
    if x0.len() != problem.dim() {
        return Err(Error::InvalidArgument(format!(
            "starting point has {} entries, problem needs {}",
            x0.len(),
            problem.dim()
        )));
    }
    let start = Instant::now();
    let mut x = x0;
    let mut prev = problem.rmse(&x)?;
    let mut rmse_history = vec![prev];
    let mut iterates = vec![x.clone()];
    let mut step_sizes = Vec::new();
    let mut delta = schedule.delta0;
    let mut rising = 0usize;
    let mut stop_reason = if prev < cfg.tol {
        StopReason::Tolerance
    } else {
        StopReason::MaxIterations
    };

    if stop_reason != StopReason::Tolerance {
        for _ in 0..cfg.max_iter {
            let j = problem.jacobian(&x)?;
            let e = problem.residuals(&x)?;
            let step = lm_step(j.as_matrix(), e.as_vector(), cfg.lambda)?;
            x += step * delta;
            step_sizes.push(delta);
            delta *= schedule.mu;

            let rmse = problem.rmse(&x)?;
            rmse_history.push(rmse);
            iterates.push(x.clone());

            rising = if rmse > prev { rising + 1 } else { 0 };
            if rmse < cfg.tol || (rmse - prev).abs() < cfg.tol {
                stop_reason = StopReason::Tolerance;
                break;
            }
            if rising >= DIVERGENCE_WINDOW {
                stop_reason = StopReason::Diverged;
                break;
            }
            prev = rmse;
        }
    }

    Ok(SolveReport {
        method,
        ext: problem.ext,
        estimate: x,
        iterations: step_sizes.len(),
        rmse_history,
        iterates,
        step_sizes,
        converged: stop_reason == StopReason::Tolerance,
        stop_reason,
        wall_time: start.elapsed().as_secs_f64(),
        stage_boundary: None,
    })
}

fn dh_problem<'a>(model: &'a RobotModel, data: &'a MeasurementSet) -> Result<Problem<'a>> {
    Problem::new(model, data, Extensions::default())
}

/// Iterated undamped least squares (Gauss–Newton). Usually fails with
/// [`Error::Singular`] on the full 24-parameter model.
pub fn ls_solve(model: &RobotModel, data: &MeasurementSet, cfg: &SolverConfig) -> Result<SolveReport> {
    let problem = dh_problem(model, data)?;
    let cfg = SolverConfig { lambda: 0.0, ..*cfg };
    solve_from(&problem, DVector::zeros(problem.dim()), &cfg, StepSchedule::CONSTANT, Method::Ls)
}

/// Levenberg–Marquardt with fixed damping `cfg.lambda`; `delta0`/`mu` are ignored.
pub fn lm_solve(model: &RobotModel, data: &MeasurementSet, cfg: &SolverConfig) -> Result<SolveReport> {
    let problem = dh_problem(model, data)?;
    solve_from(&problem, DVector::zeros(problem.dim()), cfg, StepSchedule::CONSTANT, Method::Lm)
}

/// Variable step-size LM.
pub fn slm_solve(model: &RobotModel, data: &MeasurementSet, cfg: &SolverConfig) -> Result<SolveReport> {
    let problem = dh_problem(model, data)?;
    let schedule = StepSchedule {
        delta0: cfg.delta0,
        mu: cfg.mu,
    };
    solve_from(&problem, DVector::zeros(problem.dim()), cfg, schedule, Method::Slm)
}
