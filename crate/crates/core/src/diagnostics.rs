//! Self-check of the batched identification Jacobian against entry-by-entry
//! two-point differences.

use nalgebra::DMatrix;

use crate::data::MeasurementSet;
use crate::error::{Error, Result};
use crate::error_model::{apply_deviation, identification_jacobian, Extensions, ParamDeviation};
use crate::kinematics::{cable_length, JointConfig, RobotModel};

/// Largest accepted entrywise discrepancy.
pub const JACOBIAN_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JacobianCheck {
    pub max_discrepancy: f64,
    /// `(row, column)` of the largest discrepancy.
    pub worst: (usize, usize),
    pub rows: usize,
    pub cols: usize,
}

impl JacobianCheck {
    pub fn passed(&self) -> bool {
        self.max_discrepancy <= JACOBIAN_TOLERANCE
    }
}

/// `(L(x + h·e_k) − L(x − h·e_k)) / 2h` for a single measurement, built from
/// freshly perturbed models.
pub fn two_point_entry(model: &RobotModel, x: &ParamDeviation, q: &JointConfig, k: usize) -> Result<f64> {
    let h = Extensions::default().step(k);
    let mut plus = *x.as_slice().first_chunk::<24>().expect("24 entries");
    let mut minus = plus;
    plus[k] = x.as_slice()[k] + h;
    minus[k] = x.as_slice()[k] - h;
    let lp = cable_length(&apply_deviation(model, &ParamDeviation::new(plus)?)?, q)?;
    let lm = cable_length(&apply_deviation(model, &ParamDeviation::new(minus)?)?, q)?;
    Ok((lp - lm) / (2.0 * h))
}

/// Compares `jacobian` with the two-point oracle entry by entry.
pub fn compare_with_oracle(
    model: &RobotModel,
    x: &ParamDeviation,
    data: &MeasurementSet,
    jacobian: &DMatrix<f64>,
) -> Result<JacobianCheck> {
    if jacobian.nrows() != data.len() || jacobian.ncols() != x.as_slice().len() {
        return Err(Error::InvalidArgument(format!(
            "Jacobian is {}x{}, expected {}x{}",
            jacobian.nrows(),
            jacobian.ncols(),
            data.len(),
            x.as_slice().len()
        )));
    }
    let mut check = JacobianCheck {
        max_discrepancy: 0.0,
        worst: (0, 0),
        rows: jacobian.nrows(),
        cols: jacobian.ncols(),
    };
    for (i, point) in data.points().iter().enumerate() {
        for k in 0..jacobian.ncols() {
            let d = (jacobian[(i, k)] - two_point_entry(model, x, &point.q, k)?).abs();
            if !(d <= check.max_discrepancy) {
                check.max_discrepancy = d;
                check.worst = (i, k);
            }
        }
    }
    Ok(check)
}

/// Builds the batched Jacobian at `x` and checks it. `corrupt_column` adds
/// 1.0 to one column first, for exercising the failure path.
pub fn jacobian_check(
    model: &RobotModel,
    x: &ParamDeviation,
    data: &MeasurementSet,
    corrupt_column: Option<usize>,
) -> Result<JacobianCheck> {
    let mut j = identification_jacobian(model, x, data)?.0;
    if let Some(k) = corrupt_column {
        if k >= j.ncols() {
            return Err(Error::InvalidArgument(format!("column {k} out of range")));
        }
        j.column_mut(k).add_scalar_mut(1.0);
    }
    compare_with_oracle(model, x, data, &j)
}
