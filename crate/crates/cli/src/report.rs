//! On-disk formats written by the CLI.

use std::path::Path;

use drawcal::error_model::{Extensions, ParamDeviation};
use drawcal::kinematics::RobotModel;
use drawcal::metrics::MetricTriple;
use drawcal::solvers::{Method, SolverConfig, StopReason};
use drawcal::ukf::UkfConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Everything a calibration run can be configured with.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub solver: SolverConfig,
    pub ukf: UkfConfig,
    pub extensions: Extensions,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command_line: Vec<String>,
    pub config: RunConfig,
    /// Scenario seed, when the command consumed one.
    pub seed: Option<u64>,
    pub method: Method,
    /// The nominal model as loaded, so the run does not depend on the model file.
    pub model: RobotModel,
    pub dataset_path: String,
    pub dataset_sha256: String,
    pub dataset_points: usize,
    pub toolkit_version: String,
    pub rng_algorithm: String,
    pub started_utc: String,
    pub finished_utc: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub method: Method,
    pub x_hat: ParamDeviation,
    pub anchor_shift_mm: Option<[f64; 3]>,
    pub cable_offset_mm: Option<f64>,
    pub before: MetricTriple,
    pub after: MetricTriple,
    /// Cable-length RMSE before the first iteration and after each one.
    pub rmse_history_mm: Vec<f64>,
    pub step_sizes: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub stop_reason: StopReason,
    pub stage_boundary: Option<usize>,
    pub wall_time_s: f64,
    pub manifest: Manifest,
}

impl CalibrationReport {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}
