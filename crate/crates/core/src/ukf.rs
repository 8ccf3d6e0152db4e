//! Unscented Kalman filter over the (static) parameter-deviation state.
//!
//! The state is the parameter vector itself, so the process model is the
//! identity plus additive noise `q_process·I`, and each scalar cable-length
//! measurement is one observation. Sigma points follow the scaled unscented
//! transform with `2N + 1` points:
//!
//! ```text
//! λ_s = α²(N + κ) − N
//! χ₀ = x,   χ_{±i} = x ± column_i(√((N + λ_s)·P))
//! wm₀ = λ_s / (N + λ_s) = 1 − 2N·wm_i,   wc₀ = wm₀ + (1 − α² + β),   wm_i = wc_i = 1 / (2(N + λ_s))
//! ```
//!
//! Weighted means are accumulated relative to the centre point. With small
//! `α` the centre weight is large and negative, and summing raw values would
//! cancel catastrophically.

use std::time::Instant;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::data::MeasurementSet;
use crate::error::{Error, Result};
use crate::error_model::{apply_deviation, Extensions, ParamDeviation, Problem, PARAMS};
use crate::kinematics::{cable_length, JointConfig, RobotModel};
use crate::solvers::{solve_from, Method, SolveReport, SolverConfig, StepSchedule, StopReason};

/// Diagonal jitter tried, in order, when a covariance fails to factor.
pub const JITTER_LADDER: [f64; 7] = [1e-12, 1e-11, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UkfConfig {
    /// Sigma-point spread.
    pub alpha: f64,
    /// Prior-distribution parameter (2 is optimal for Gaussians).
    pub beta: f64,
    /// Secondary scaling.
    pub kappa: f64,
    /// Process-noise variance added per parameter and step.
    pub q_process: f64,
    /// Cable-length measurement variance (mm²).
    pub r_meas: f64,
    /// Initial variance per parameter. Too tight a prior pins the length
    /// deviations near zero.
    pub p0: f64,
    /// Passes over the data set.
    pub epochs: usize,
}

impl Default for UkfConfig {
    fn default() -> Self {
        UkfConfig {
            alpha: 1e-3,
            beta: 2.0,
            kappa: 0.0,
            q_process: 1e-10,
            r_meas: 0.1 * 0.1,
            p0: 1e-2,
            epochs: 1,
        }
    }
}

impl UkfConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.alpha.is_finite()
            && self.alpha > 0.0
            && self.beta.is_finite()
            && self.kappa.is_finite()
            && self.q_process.is_finite()
            && self.q_process >= 0.0
            && self.r_meas.is_finite()
            && self.r_meas > 0.0
            && self.p0.is_finite()
            && self.p0 > 0.0
            && self.epochs >= 1;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "UKF config requires alpha > 0, r_meas > 0, p0 > 0, q_process >= 0, epochs >= 1: {self:?}"
            )))
        }
    }

    /// `λ_s` for state dimension `n`.
    pub fn lambda(&self, n: usize) -> f64 {
        self.alpha * self.alpha * (n as f64 + self.kappa) - n as f64
    }
}

/// Sigma points and their mean/covariance weights.
#[derive(Debug, Clone, PartialEq)]
pub struct SigmaSet {
    pub points: Vec<DVector<f64>>,
    pub wm: Vec<f64>,
    pub wc: Vec<f64>,
}

impl SigmaSet {
    /// Weighted mean of `values` taken relative to the centre value.
    fn mean_of(&self, values: &[f64]) -> f64 {
        let c = values[0];
        c + self.wm[1..]
            .iter()
            .zip(&values[1..])
            .map(|(w, v)| w * (v - c))
            .sum::<f64>()
    }

    fn mean_point(&self) -> DVector<f64> {
        let c = &self.points[0];
        let mut mean = c.clone();
        for (w, p) in self.wm[1..].iter().zip(&self.points[1..]) {
            mean.axpy(*w, &(p - c), 1.0);
        }
        mean
    }
}

/// Parameter-state mean and covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct UkfState {
    pub x: DVector<f64>,
    pub p: DMatrix<f64>,
}

impl UkfState {
    pub fn new(x: DVector<f64>, p: DMatrix<f64>) -> Result<Self> {
        if p.nrows() != x.len() || p.ncols() != x.len() {
            return Err(Error::InvalidArgument(format!(
                "covariance is {}x{} for a {}-dimensional state",
                p.nrows(),
                p.ncols(),
                x.len()
            )));
        }
        if x.iter().chain(p.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("UKF state is not finite".into()));
        }
        Ok(UkfState { x, p })
    }

    /// Zero mean with covariance `p0·I`.
    pub fn initial(dim: usize, p0: f64) -> Self {
        UkfState {
            x: DVector::zeros(dim),
            p: DMatrix::identity(dim, dim) * p0,
        }
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }

    /// Checks symmetry (‖P − Pᵀ‖∞ ≤ 1e-10) and PSD-ness up to `1e-8·trace/N`.
    pub fn check_invariants(&self) -> Result<()> {
        let asym = (&self.p - self.p.transpose()).abs().max();
        if asym > 1e-10 {
            return Err(Error::Numeric(format!("covariance asymmetry {asym:e}")));
        }
        let min_eig = SymmetricEigen::new(self.p.clone()).eigenvalues.min();
        let floor = -1e-8 * self.p.trace().abs() / self.dim() as f64;
        if min_eig < floor {
            return Err(Error::Numeric(format!(
                "covariance not positive semidefinite (smallest eigenvalue {min_eig:e})"
            )));
        }
        Ok(())
    }
}

fn symmetrize(p: &mut DMatrix<f64>) {
    let n = p.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (p[(i, j)] + p[(j, i)]);
            p[(i, j)] = v;
            p[(j, i)] = v;
        }
    }
}

/// Lower Cholesky factor of `p`, retrying with [`JITTER_LADDER`] on failure.
pub fn cholesky_with_jitter(p: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if let Some(c) = p.clone().cholesky() {
        return Ok(c.l());
    }
    let n = p.nrows();
    for jitter in JITTER_LADDER {
        if let Some(c) = (p + DMatrix::identity(n, n) * jitter).cholesky() {
            return Ok(c.l());
        }
    }
    Err(Error::Numeric(format!(
        "covariance is not positive definite even with {:e} jitter",
        JITTER_LADDER[JITTER_LADDER.len() - 1]
    )))
}

pub fn sigma_points(state: &UkfState, cfg: &UkfConfig) -> Result<SigmaSet> {
    cfg.validate()?;
    let n = state.dim();
    let lambda = cfg.lambda(n);
    let scale = n as f64 + lambda;
    if !(scale > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "sigma spread N + λ = {scale} must be positive"
        )));
    }
    let l = cholesky_with_jitter(&state.p)? * scale.sqrt();

    let mut points = Vec::with_capacity(2 * n + 1);
    points.push(state.x.clone());
    for i in 0..n {
        points.push(&state.x + l.column(i));
    }
    for i in 0..n {
        points.push(&state.x - l.column(i));
    }
    // Side weight trimmed to 47 significant bits: for N <= 32 both 2N·w and
    // 1 − 2N·w are then exact, so the mean weights sum to exactly one even
    // when the centre weight is of order -1e6.
    let w = f64::from_bits((0.5 / scale).to_bits() & !0x3f);
    let wm0 = 1.0 - (2 * n) as f64 * w;
    let mut wm = vec![w; 2 * n + 1];
    let mut wc = wm.clone();
    wm[0] = wm0;
    wc[0] = wm0 + (1.0 - cfg.alpha * cfg.alpha + cfg.beta);
    Ok(SigmaSet { points, wm, wc })
}

/// Time update with an identity process model and additive `q_process·I`.
pub fn predict(state: &UkfState, cfg: &UkfConfig) -> Result<UkfState> {
    let sigma = sigma_points(state, cfg)?;
    let x = sigma.mean_point();
    let n = state.dim();
    let mut p = DMatrix::zeros(n, n);
    for (w, pt) in sigma.wc.iter().zip(&sigma.points) {
        let d = pt - &x;
        p.ger(*w, &d, &d, 1.0);
    }
    for i in 0..n {
        p[(i, i)] += cfg.q_process;
    }
    symmetrize(&mut p);
    Ok(UkfState { x, p })
}

/// Predicted measurement statistics for one scalar observation.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    /// Predicted measurement mean (mm).
    pub y_hat: f64,
    /// Innovation variance including measurement noise (mm²).
    pub s: f64,
    /// State–measurement cross covariance.
    pub p_xy: DVector<f64>,
}

/// Observation statistics for an arbitrary scalar measurement function.
pub fn observe_with<F>(state_pred: &UkfState, cfg: &UkfConfig, mut h: F) -> Result<Observation>
where
    F: FnMut(&DVector<f64>) -> Result<f64>,
{
    let sigma = sigma_points(state_pred, cfg)?;
    let ys = sigma.points.iter().map(&mut h).collect::<Result<Vec<f64>>>()?;
    if let Some(bad) = ys.iter().find(|y| !y.is_finite()) {
        return Err(Error::Numeric(format!("measurement function returned {bad}")));
    }
    let y_hat = sigma.mean_of(&ys);
    let mut s = cfg.r_meas;
    let mut p_xy = DVector::zeros(state_pred.dim());
    for ((wc, pt), y) in sigma.wc.iter().zip(&sigma.points).zip(&ys) {
        let dy = y - y_hat;
        s += wc * dy * dy;
        p_xy.axpy(wc * dy, &(pt - &state_pred.x), 1.0);
    }
    Ok(Observation { y_hat, s, p_xy })
}

/// Observation statistics for the cable length at joint configuration `q`,
/// for a state holding the 24 DH deviations.
pub fn observe(
    state_pred: &UkfState,
    model: &RobotModel,
    q: &JointConfig,
    cfg: &UkfConfig,
) -> Result<Observation> {
    if state_pred.dim() != PARAMS {
        return Err(Error::InvalidArgument(format!(
            "state has {} entries, expected {PARAMS} DH deviations",
            state_pred.dim()
        )));
    }
    observe_with(state_pred, cfg, |x| {
        let dev = ParamDeviation::from_slice(x.as_slice())?;
        cable_length(&apply_deviation(model, &dev)?, q)
    })
}

/// Measurement update with measured value `y`.
pub fn update(state_pred: &UkfState, y: f64, obs: &Observation) -> Result<UkfState> {
    if !(obs.s > 0.0 && obs.s.is_finite()) {
        return Err(Error::Numeric(format!("innovation variance {} is not positive", obs.s)));
    }
    if obs.p_xy.len() != state_pred.dim() {
        return Err(Error::InvalidArgument("cross covariance has the wrong length".into()));
    }
    let gain = &obs.p_xy / obs.s;
    let x = &state_pred.x + &gain * (y - obs.y_hat);
    let mut p = state_pred.p.clone();
    p.ger(-obs.s, &gain, &gain, 1.0);
    symmetrize(&mut p);
    Ok(UkfState { x, p })
}

/// Runs predict → observe → update once per measurement, in data-set order,
/// for `cfg.epochs` passes. Returns the final filter state and a report whose
/// history holds the full-data RMSE after every measurement.
pub fn ukf_run(problem: &Problem<'_>, cfg: &UkfConfig) -> Result<(UkfState, SolveReport)> {
    cfg.validate()?;
    let start = Instant::now();
    let mut state = UkfState::initial(problem.dim(), cfg.p0);
    let mut rmse_history = vec![problem.rmse(&state.x)?];
    let mut iterates = vec![state.x.clone()];
    for _ in 0..cfg.epochs {
        for (i, point) in problem.data.points().iter().enumerate() {
            let pred = predict(&state, cfg)?;
            let obs = observe_with(&pred, cfg, |x| problem.predict_point(x, i))?;
            state = update(&pred, point.z, &obs)?;
            rmse_history.push(problem.rmse(&state.x)?);
            iterates.push(state.x.clone());
        }
    }
    let iterations = iterates.len() - 1;
    let report = SolveReport {
        method: Method::Ukf,
        ext: problem.ext,
        estimate: state.x.clone(),
        rmse_history,
        iterates,
        step_sizes: Vec::new(),
        iterations,
        converged: true,
        stop_reason: StopReason::Completed,
        wall_time: start.elapsed().as_secs_f64(),
        stage_boundary: None,
    };
    Ok((state, report))
}

/// UKF calibration of the 24 DH deviations from the nominal model.
pub fn ukf_calibrate(
    model: &RobotModel,
    data: &MeasurementSet,
    cfg: &UkfConfig,
) -> Result<(ParamDeviation, SolveReport)> {
    let problem = Problem::new(model, data, Extensions::default())?;
    let (_, report) = ukf_run(&problem, cfg)?;
    Ok((report.x_hat(), report))
}

/// One UKF pass followed by SLM started from the filter mean.
pub fn ukf_slm_run(
    problem: &Problem<'_>,
    ucfg: &UkfConfig,
    scfg: &SolverConfig,
) -> Result<SolveReport> {
    let (state, first) = ukf_run(problem, ucfg)?;
    let schedule = StepSchedule {
        delta0: scfg.delta0,
        mu: scfg.mu,
    };
    let second = solve_from(problem, state.x, scfg, schedule, Method::Slm)?;

    let boundary = first.iterations;
    let mut rmse_history = first.rmse_history;
    rmse_history.extend_from_slice(&second.rmse_history[1..]);
    let mut iterates = first.iterates;
    iterates.extend(second.iterates.into_iter().skip(1));
    Ok(SolveReport {
        method: Method::UkfSlm,
        ext: problem.ext,
        estimate: second.estimate,
        iterations: boundary + second.iterations,
        rmse_history,
        iterates,
        step_sizes: second.step_sizes,
        converged: second.converged,
        stop_reason: second.stop_reason,
        wall_time: first.wall_time + second.wall_time,
        stage_boundary: Some(boundary),
    })
}

pub fn ukf_slm_calibrate(
    model: &RobotModel,
    data: &MeasurementSet,
    ucfg: &UkfConfig,
    scfg: &SolverConfig,
) -> Result<SolveReport> {
    let problem = Problem::new(model, data, Extensions::default())?;
    ukf_slm_run(&problem, ucfg, scfg)
}
