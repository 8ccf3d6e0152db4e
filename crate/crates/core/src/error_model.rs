//! Linearized error model linking DH parameter deviations to cable-length
//! residuals.
//!
//! The deviation vector is stacked as `[Δa₁..Δa₆, Δd₁..Δd₆, Δα₁..Δα₆, Δθ₁..Δθ₆]`.
//! Residuals are `measured − predicted`, so with `J = ∂(predicted)/∂x` the
//! model linearizes as `e(x + Δx) ≈ e(x) − J·Δx` and the normal-equation step
//! `(JᵀJ)⁻¹Jᵀe` moves toward smaller residuals.
//!
//! `J` is formed by central differences with a per-unit step: 1e-6 mm for
//! length-like parameters and 1e-7 rad for angles.

use nalgebra::{DMatrix, DVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::data::MeasurementSet;
use crate::error::{ensure_finite, Error, Result};
use crate::kinematics::{cable_length_unchecked, RobotModel, JOINTS};

/// Number of DH deviations identified (four per joint).
pub const PARAMS: usize = 4 * JOINTS;

/// Central-difference step for length parameters (mm).
pub const LENGTH_STEP: f64 = 1e-6;
/// Central-difference step for angle parameters (rad).
pub const ANGLE_STEP: f64 = 1e-7;

/// Which DH field a deviation entry perturbs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ParamKind {
    A,
    D,
    Alpha,
    Theta,
}

impl ParamKind {
    pub const ALL: [ParamKind; 4] = [ParamKind::A, ParamKind::D, ParamKind::Alpha, ParamKind::Theta];

    /// Position of `(self, joint)` in the stacked vector; `joint` is 0-based.
    pub fn index(self, joint: usize) -> usize {
        assert!(joint < JOINTS, "joint index {joint} out of range");
        self as usize * JOINTS + joint
    }

    pub fn of_index(index: usize) -> (ParamKind, usize) {
        assert!(index < PARAMS, "parameter index {index} out of range");
        (Self::ALL[index / JOINTS], index % JOINTS)
    }

    pub fn is_angle(self) -> bool {
        matches!(self, ParamKind::Alpha | ParamKind::Theta)
    }

    pub fn label(self) -> &'static str {
        match self {
            ParamKind::A => "a",
            ParamKind::D => "d",
            ParamKind::Alpha => "alpha",
            ParamKind::Theta => "theta",
        }
    }
}

/// Deviations of the 24 DH parameters from their nominal values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DeviationFile", into = "DeviationFile")]
pub struct ParamDeviation([f64; PARAMS]);

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DeviationFile {
    delta_a_mm: [f64; JOINTS],
    delta_d_mm: [f64; JOINTS],
    delta_alpha_rad: [f64; JOINTS],
    delta_theta_rad: [f64; JOINTS],
}

impl TryFrom<DeviationFile> for ParamDeviation {
    type Error = Error;

    fn try_from(f: DeviationFile) -> Result<Self> {
        let mut x = [0.0; PARAMS];
        for (kind, group) in ParamKind::ALL.into_iter().zip([
            f.delta_a_mm,
            f.delta_d_mm,
            f.delta_alpha_rad,
            f.delta_theta_rad,
        ]) {
            x[kind.index(0)..kind.index(0) + JOINTS].copy_from_slice(&group);
        }
        ParamDeviation::new(x)
    }
}

impl From<ParamDeviation> for DeviationFile {
    fn from(x: ParamDeviation) -> Self {
        let group = |kind: ParamKind| -> [f64; JOINTS] {
            x.0[kind.index(0)..kind.index(0) + JOINTS].try_into().unwrap()
        };
        DeviationFile {
            delta_a_mm: group(ParamKind::A),
            delta_d_mm: group(ParamKind::D),
            delta_alpha_rad: group(ParamKind::Alpha),
            delta_theta_rad: group(ParamKind::Theta),
        }
    }
}

impl Default for ParamDeviation {
    fn default() -> Self {
        Self::zero()
    }
}

impl ParamDeviation {
    pub fn new(x: [f64; PARAMS]) -> Result<Self> {
        ensure_finite("deviation", &x)?;
        Ok(ParamDeviation(x))
    }

    pub fn zero() -> Self {
        ParamDeviation([0.0; PARAMS])
    }

    pub fn from_slice(x: &[f64]) -> Result<Self> {
        let arr: [f64; PARAMS] = x.try_into().map_err(|_| {
            Error::InvalidArgument(format!("deviation needs {PARAMS} entries, got {}", x.len()))
        })?;
        Self::new(arr)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn get(&self, kind: ParamKind, joint: usize) -> f64 {
        self.0[kind.index(joint)]
    }

    pub fn set(&mut self, kind: ParamKind, joint: usize, value: f64) {
        self.0[kind.index(joint)] = value;
    }

    pub fn to_dvector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.0)
    }

    pub fn neg(&self) -> Self {
        ParamDeviation(self.0.map(|v| -v))
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Adds `x` to the matching DH fields of `model`.
pub fn apply_deviation(model: &RobotModel, x: &ParamDeviation) -> Result<RobotModel> {
    model.validate()?;
    ensure_finite("deviation", &x.0)?;
    Ok(apply_unchecked(model, &x.0))
}

fn apply_unchecked(model: &RobotModel, x: &[f64]) -> RobotModel {
    let mut out = model.clone();
    for (j, link) in out.links.iter_mut().enumerate() {
        link.a += x[ParamKind::A.index(j)];
        link.d += x[ParamKind::D.index(j)];
        link.alpha += x[ParamKind::Alpha.index(j)];
        link.theta_offset += x[ParamKind::Theta.index(j)];
    }
    out
}

/// Optional parameters identified alongside the 24 DH deviations.
///
/// Both are off by default. The anchor shift adds three entries (mm, base
/// frame) and the cable offset one entry (mm) after the DH block, in that order.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Extensions {
    pub anchor: bool,
    pub cable_offset: bool,
}

impl Extensions {
    pub fn dim(&self) -> usize {
        PARAMS + if self.anchor { 3 } else { 0 } + usize::from(self.cable_offset)
    }

    /// Finite-difference step for entry `k` of the full parameter vector.
    pub fn step(&self, k: usize) -> f64 {
        if k < PARAMS && ParamKind::of_index(k).0.is_angle() {
            ANGLE_STEP
        } else {
            LENGTH_STEP
        }
    }

    pub fn labels(&self) -> Vec<String> {
        let mut out: Vec<String> = (0..PARAMS)
            .map(|k| {
                let (kind, joint) = ParamKind::of_index(k);
                format!("delta_{}{}", kind.label(), joint + 1)
            })
            .collect();
        if self.anchor {
            out.extend(["anchor_x", "anchor_y", "anchor_z"].map(String::from));
        }
        if self.cable_offset {
            out.push("cable_offset".into());
        }
        out
    }
}

/// A full parameter estimate split into its named parts.
#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    pub deviation: ParamDeviation,
    pub anchor_shift: Option<Vector3<f64>>,
    pub cable_offset: Option<f64>,
}

impl Estimate {
    pub fn from_vector(ext: Extensions, v: &DVector<f64>) -> Result<Self> {
        if v.len() != ext.dim() {
            return Err(Error::InvalidArgument(format!(
                "parameter vector has {} entries, layout needs {}",
                v.len(),
                ext.dim()
            )));
        }
        let deviation = ParamDeviation::from_slice(&v.as_slice()[..PARAMS])?;
        let mut at = PARAMS;
        let anchor_shift = ext.anchor.then(|| {
            at += 3;
            Vector3::new(v[at - 3], v[at - 2], v[at - 1])
        });
        let cable_offset = ext.cable_offset.then(|| v[at]);
        Ok(Estimate {
            deviation,
            anchor_shift,
            cable_offset,
        })
    }
}

/// Sensitivities of predicted cable lengths (rows) to each parameter (columns).
#[derive(Debug, Clone, PartialEq)]
pub struct IdentificationJacobian(pub DMatrix<f64>);

impl IdentificationJacobian {
    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }
}

/// Measured minus predicted cable length per measurement (mm).
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualVector(pub DVector<f64>);

impl ResidualVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidArgument("residual vector is empty".into()));
        }
        ensure_finite("residual", &values)?;
        Ok(ResidualVector(DVector::from_vec(values)))
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn as_slice(&self) -> &[f64] {
        self.0.as_slice()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Mean of squared residuals (mm²).
    pub fn mean_square(&self) -> f64 {
        self.0.norm_squared() / self.0.len() as f64
    }

    pub fn rmse(&self) -> f64 {
        self.mean_square().sqrt()
    }
}

/// A calibration problem: nominal model, data set, and identified parameter layout.
///
/// Parameter vectors passed to its methods have `ext.dim()` entries.
#[derive(Debug, Clone, Copy)]
pub struct Problem<'a> {
    pub model: &'a RobotModel,
    pub data: &'a MeasurementSet,
    pub ext: Extensions,
}

impl<'a> Problem<'a> {
    pub fn new(model: &'a RobotModel, data: &'a MeasurementSet, ext: Extensions) -> Result<Self> {
        model.validate()?;
        if data.is_empty() {
            return Err(Error::InvalidArgument("measurement set is empty".into()));
        }
        Ok(Problem { model, data, ext })
    }

    pub fn dim(&self) -> usize {
        self.ext.dim()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    fn check(&self, theta: &DVector<f64>) -> Result<()> {
        if theta.len() != self.dim() {
            return Err(Error::InvalidArgument(format!(
                "parameter vector has {} entries, problem needs {}",
                theta.len(),
                self.dim()
            )));
        }
        ensure_finite("parameters", theta.as_slice())
    }

    /// Model and additive cable offset realized by parameter vector `theta`.
    fn realize(&self, theta: &[f64]) -> (RobotModel, f64) {
        let mut model = apply_unchecked(self.model, &theta[..PARAMS]);
        let mut at = PARAMS;
        if self.ext.anchor {
            model.anchor += Vector3::new(theta[at], theta[at + 1], theta[at + 2]);
            at += 3;
        }
        let offset = if self.ext.cable_offset { theta[at] } else { 0.0 };
        (model, offset)
    }

    fn predict_into(&self, theta: &[f64], out: &mut [f64]) {
        let (model, offset) = self.realize(theta);
        for (slot, p) in out.iter_mut().zip(self.data.points()) {
            *slot = cable_length_unchecked(&model, &p.q) + offset;
        }
    }

    /// Predicted cable length at every measurement (mm).
    pub fn predicted(&self, theta: &DVector<f64>) -> Result<DVector<f64>> {
        self.check(theta)?;
        let mut out = DVector::zeros(self.len());
        self.predict_into(theta.as_slice(), out.as_mut_slice());
        Ok(out)
    }

    /// Predicted cable length at measurement `index` only.
    pub fn predict_point(&self, theta: &DVector<f64>, index: usize) -> Result<f64> {
        self.check(theta)?;
        let point = self.data.points().get(index).ok_or_else(|| {
            Error::InvalidArgument(format!("measurement index {index} out of range"))
        })?;
        let (model, offset) = self.realize(theta.as_slice());
        Ok(cable_length_unchecked(&model, &point.q) + offset)
    }

    pub fn residuals(&self, theta: &DVector<f64>) -> Result<ResidualVector> {
        let predicted = self.predicted(theta)?;
        let e: Vec<f64> = self
            .data
            .points()
            .iter()
            .zip(predicted.iter())
            .map(|(p, z)| p.z - z)
            .collect();
        ResidualVector::new(e).map_err(|err| Error::Numeric(err.to_string()))
    }

    pub fn objective(&self, theta: &DVector<f64>) -> Result<f64> {
        Ok(self.residuals(theta)?.mean_square())
    }

    pub fn rmse(&self, theta: &DVector<f64>) -> Result<f64> {
        Ok(self.objective(theta)?.sqrt())
    }

    /// Central-difference Jacobian of the predicted lengths at `theta`.
    ///
    /// Columns are independent; each is evaluated from a pair of perturbed
    /// models over the whole data set.
    pub fn jacobian(&self, theta: &DVector<f64>) -> Result<IdentificationJacobian> {
        self.check(theta)?;
        let (m, n) = (self.len(), self.dim());
        let mut j = DMatrix::zeros(m, n);
        let mut plus = vec![0.0; m];
        let mut minus = vec![0.0; m];
        let mut shifted = theta.as_slice().to_vec();
        for k in 0..n {
            let h = self.ext.step(k);
            shifted[k] = theta[k] + h;
            self.predict_into(&shifted, &mut plus);
            shifted[k] = theta[k] - h;
            self.predict_into(&shifted, &mut minus);
            shifted[k] = theta[k];
            for i in 0..m {
                j[(i, k)] = (plus[i] - minus[i]) / (2.0 * h);
            }
        }
        if let Some(bad) = j.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!(
                "non-finite Jacobian entry at row {}, column {}",
                bad % m,
                bad / m
            )));
        }
        Ok(IdentificationJacobian(j))
    }
}

/// `e_i = Z_i − Z'_i` with `Z'` from the model perturbed by `x`.
pub fn residuals(
    model: &RobotModel,
    x: &ParamDeviation,
    data: &MeasurementSet,
) -> Result<ResidualVector> {
    Problem::new(model, data, Extensions::default())?.residuals(&x.to_dvector())
}

/// Mean squared residual (mm²).
pub fn objective(model: &RobotModel, x: &ParamDeviation, data: &MeasurementSet) -> Result<f64> {
    Ok(residuals(model, x, data)?.mean_square())
}

pub fn identification_jacobian(
    model: &RobotModel,
    x: &ParamDeviation,
    data: &MeasurementSet,
) -> Result<IdentificationJacobian> {
    Problem::new(model, data, Extensions::default())?.jacobian(&x.to_dvector())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Measurement;
    use crate::kinematics::{cable_length, JointConfig};

    fn single_point(z: f64) -> MeasurementSet {
        MeasurementSet::new(
            vec![Measurement {
                q: JointConfig::zero(),
                z,
            }],
            "test",
        )
        .unwrap()
    }

    #[test]
    fn ordering_is_stacked_by_kind() {
        assert_eq!(ParamKind::A.index(0), 0);
        assert_eq!(ParamKind::D.index(0), 6);
        assert_eq!(ParamKind::Alpha.index(5), 17);
        assert_eq!(ParamKind::Theta.index(5), 23);
        for k in 0..PARAMS {
            let (kind, j) = ParamKind::of_index(k);
            assert_eq!(kind.index(j), k);
        }
    }

    #[test]
    fn zero_deviation_leaves_model_alone() {
        let mut model = RobotModel::zero();
        model.links[3].d = 12.5;
        assert_eq!(apply_deviation(&model, &ParamDeviation::zero()).unwrap(), model);
    }

    #[test]
    fn deviation_hits_one_field() {
        let model = RobotModel::zero();
        let mut x = ParamDeviation::zero();
        x.set(ParamKind::A, 0, 1.0);
        let out = apply_deviation(&model, &x).unwrap();
        assert_eq!(out.links[0].a, 1.0);
        let mut expected = model.clone();
        expected.links[0].a = 1.0;
        assert_eq!(out, expected);
    }

    #[test]
    fn non_finite_deviation_rejected() {
        let mut raw = [0.0; PARAMS];
        raw[7] = f64::NAN;
        assert!(ParamDeviation::new(raw).is_err());
        assert!(ParamDeviation::from_slice(&[0.0; 23]).is_err());
    }

    #[test]
    fn half_millimetre_residual() {
        let mut model = RobotModel::zero();
        model.links[0].a = 100.0;
        let z = cable_length(&model, &JointConfig::zero()).unwrap() + 0.5;
        let e = residuals(&model, &ParamDeviation::zero(), &single_point(z)).unwrap();
        assert_eq!(e.as_slice(), &[0.5]);
    }

    #[test]
    fn objective_is_mean_square() {
        let e = ResidualVector::new(vec![3.0, 4.0]).unwrap();
        assert_eq!(e.mean_square(), 12.5);
        assert!(ResidualVector::new(vec![]).is_err());
    }

    #[test]
    fn radial_geometry_jacobian_row() {
        let mut model = RobotModel::zero();
        model.links[0].a = 100.0;
        let data = single_point(100.0);
        let j = identification_jacobian(&model, &ParamDeviation::zero(), &data).unwrap();
        let row = j.as_matrix().row(0);
        assert!((row[ParamKind::A.index(0)] - 1.0).abs() < 1e-6);
        assert!(row[ParamKind::Theta.index(0)].abs() < 1e-6);
    }

    #[test]
    fn deviation_json_groups() {
        let mut x = ParamDeviation::zero();
        x.set(ParamKind::Alpha, 2, 0.003);
        let json = serde_json::to_value(x).unwrap();
        assert_eq!(json["delta_alpha_rad"][2], 0.003);
        let back: ParamDeviation = serde_json::from_value(json).unwrap();
        assert_eq!(back, x);
    }

    #[test]
    fn extension_layout() {
        let ext = Extensions {
            anchor: true,
            cable_offset: true,
        };
        assert_eq!(ext.dim(), 28);
        assert_eq!(ext.labels()[27], "cable_offset");
        assert_eq!(ext.step(ParamKind::Theta.index(0)), ANGLE_STEP);
        assert_eq!(ext.step(25), LENGTH_STEP);
        let mut v = DVector::zeros(28);
        v[24] = 1.0;
        v[27] = -2.0;
        let est = Estimate::from_vector(ext, &v).unwrap();
        assert_eq!(est.anchor_shift, Some(Vector3::new(1.0, 0.0, 0.0)));
        assert_eq!(est.cable_offset, Some(-2.0));
        assert!(Estimate::from_vector(Extensions::default(), &v).is_err());
    }

    #[test]
    fn cable_offset_shifts_residuals() {
        let mut model = RobotModel::zero();
        model.links[0].a = 100.0;
        let data = single_point(101.0);
        let ext = Extensions {
            anchor: false,
            cable_offset: true,
        };
        let problem = Problem::new(&model, &data, ext).unwrap();
        let mut theta = DVector::zeros(ext.dim());
        theta[PARAMS] = 1.0;
        assert!(problem.residuals(&theta).unwrap().as_slice()[0].abs() < 1e-12);
        let j = problem.jacobian(&theta).unwrap();
        assert!((j.as_matrix()[(0, PARAMS)] - 1.0).abs() < 1e-7);
    }

    #[test]
    fn empty_problem_rejected() {
        let model = RobotModel::zero();
        let data = MeasurementSet::empty_for_tests();
        assert!(matches!(
            Problem::new(&model, &data, Extensions::default()),
            Err(Error::InvalidArgument(_))
        ));
    }
}
