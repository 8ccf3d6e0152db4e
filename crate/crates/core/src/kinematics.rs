//! Standard Denavit–Hartenberg forward kinematics for a 6-link serial arm and
//! the draw-wire measurement model built on top of it.
//!
//! Lengths are millimetres and angles radians throughout. The joint angle fed
//! into each link transform is the commanded angle plus the link's
//! `theta_offset`, so a calibrated offset can be identified separately from
//! the joint command.

use nalgebra::{Matrix3, Matrix4, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};

/// Number of links (and actuated joints) in the arm.
pub const JOINTS: usize = 6;

/// Classic DH parameters of one link.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DhLink {
    /// Link length (mm).
    #[serde(rename = "a_mm")]
    pub a: f64,
    /// Link offset along the joint axis (mm).
    #[serde(rename = "d_mm")]
    pub d: f64,
    /// Link twist (rad).
    #[serde(rename = "alpha_rad")]
    pub alpha: f64,
    /// Constant offset added to the commanded joint angle (rad).
    #[serde(rename = "theta_offset_rad")]
    pub theta_offset: f64,
}

impl DhLink {
    pub const ZERO: DhLink = DhLink {
        a: 0.0,
        d: 0.0,
        alpha: 0.0,
        theta_offset: 0.0,
    };

    pub fn new(a: f64, d: f64, alpha: f64, theta_offset: f64) -> Result<Self> {
        let link = DhLink {
            a,
            d,
            alpha,
            theta_offset,
        };
        link.validate()?;
        Ok(link)
    }

    pub fn validate(&self) -> Result<()> {
        ensure_finite("link", &[self.a, self.d, self.alpha, self.theta_offset])
    }
}

/// Nominal geometry of the arm plus the fixed point the cable is anchored to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RobotModelFile", into = "RobotModelFile")]
pub struct RobotModel {
    pub links: [DhLink; JOINTS],
    /// Cable anchor in the base frame (mm).
    pub anchor: Vector3<f64>,
}

/// On-disk layout of a [`RobotModel`]; key names are part of the file format.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RobotModelFile {
    links: Vec<DhLink>,
    anchor_mm: [f64; 3],
}

impl TryFrom<RobotModelFile> for RobotModel {
    type Error = Error;

    fn try_from(file: RobotModelFile) -> Result<Self> {
        let links: [DhLink; JOINTS] = file.links.try_into().map_err(|v: Vec<DhLink>| {
            Error::InvalidArgument(format!("expected {JOINTS} links, found {}", v.len()))
        })?;
        RobotModel::new(links, Vector3::from(file.anchor_mm))
    }
}

impl From<RobotModel> for RobotModelFile {
    fn from(model: RobotModel) -> Self {
        RobotModelFile {
            links: model.links.to_vec(),
            anchor_mm: model.anchor.into(),
        }
    }
}

impl RobotModel {
    pub fn new(links: [DhLink; JOINTS], anchor: Vector3<f64>) -> Result<Self> {
        let model = RobotModel { links, anchor };
        model.validate()?;
        Ok(model)
    }

    /// All-zero links with the anchor at the base origin.
    pub fn zero() -> Self {
        RobotModel {
            links: [DhLink::ZERO; JOINTS],
            anchor: Vector3::zeros(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for link in &self.links {
            link.validate()?;
        }
        ensure_finite("anchor", self.anchor.as_slice())
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }
}

/// Commanded joint angles (rad).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointConfig(pub [f64; JOINTS]);

impl JointConfig {
    pub fn new(q: [f64; JOINTS]) -> Result<Self> {
        ensure_finite("q", &q)?;
        Ok(JointConfig(q))
    }

    pub fn zero() -> Self {
        JointConfig([0.0; JOINTS])
    }

    pub fn angles(&self) -> &[f64; JOINTS] {
        &self.0
    }
}

/// Rigid homogeneous transform; translation in mm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transform(Matrix4<f64>);

impl Transform {
    pub fn identity() -> Self {
        Transform(Matrix4::identity())
    }

    pub fn matrix(&self) -> &Matrix4<f64> {
        &self.0
    }

    pub fn rotation(&self) -> Matrix3<f64> {
        self.0.fixed_view::<3, 3>(0, 0).into_owned()
    }

    pub fn translation(&self) -> Vector3<f64> {
        self.0.fixed_view::<3, 1>(0, 3).into_owned()
    }

    /// Composition `self · rhs`.
    pub fn then(&self, rhs: &Transform) -> Transform {
        Transform(self.0 * rhs.0)
    }

    /// Worst deviation of the rotation block from orthonormality, and its determinant.
    pub fn orthonormality_error(&self) -> (f64, f64) {
        let r = self.rotation();
        let err = (r.transpose() * r - Matrix3::identity()).abs().max();
        (err, r.determinant())
    }
}

/// DH link transform for commanded angle `q`; the effective joint angle is
/// `q + link.theta_offset`.
pub fn link_transform(link: &DhLink, q: f64) -> Result<Transform> {
    link.validate()?;
    ensure_finite("q", &[q])?;
    Ok(link_transform_unchecked(link, q))
}

fn link_transform_unchecked(link: &DhLink, q: f64) -> Transform {
    let (st, ct) = (q + link.theta_offset).sin_cos();
    let (sa, ca) = link.alpha.sin_cos();
    #[rustfmt::skip]
    let m = Matrix4::new(
        ct, -st * ca,  st * sa, link.a * ct,
        st,  ct * ca, -ct * sa, link.a * st,
        0.0,      sa,       ca, link.d,
        0.0,     0.0,      0.0, 1.0,
    );
    Transform(m)
}

/// Base-to-flange transform, the left-to-right product of the six link transforms.
pub fn forward_kinematics(model: &RobotModel, q: &JointConfig) -> Result<Transform> {
    model.validate()?;
    ensure_finite("q", &q.0)?;
    Ok(forward_kinematics_unchecked(model, q))
}

pub(crate) fn forward_kinematics_unchecked(model: &RobotModel, q: &JointConfig) -> Transform {
    let mut acc = link_transform_unchecked(&model.links[0], q.0[0]);
    for (link, &qi) in model.links.iter().zip(q.0.iter()).skip(1) {
        acc = acc.then(&link_transform_unchecked(link, qi));
    }
    acc
}

/// Flange position in the base frame (mm).
pub fn end_position(model: &RobotModel, q: &JointConfig) -> Result<Vector3<f64>> {
    Ok(forward_kinematics(model, q)?.translation())
}

/// Distance from the cable anchor to the flange (mm).
pub fn cable_length(model: &RobotModel, q: &JointConfig) -> Result<f64> {
    Ok(distance(&end_position(model, q)?, &model.anchor))
}

pub(crate) fn cable_length_unchecked(model: &RobotModel, q: &JointConfig) -> f64 {
    distance(&forward_kinematics_unchecked(model, q).translation(), &model.anchor)
}

fn distance(p: &Vector3<f64>, anchor: &Vector3<f64>) -> f64 {
    (p - anchor).norm()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    fn link(a: f64, d: f64, alpha: f64) -> DhLink {
        DhLink::new(a, d, alpha, 0.0).unwrap()
    }

    #[test]
    fn zero_link_is_identity() {
        let t = link_transform(&DhLink::ZERO, 0.0).unwrap();
        assert_eq!(*t.matrix(), Matrix4::identity());
    }

    #[test]
    fn pure_offsets_translate() {
        let t = link_transform(&link(5.0, 10.0, 0.0), 0.0).unwrap();
        assert_eq!(t.rotation(), Matrix3::identity());
        assert_eq!(t.translation(), Vector3::new(5.0, 0.0, 10.0));
    }

    #[test]
    fn quarter_turns_permute_axes() {
        let t = link_transform(&link(0.0, 0.0, FRAC_PI_2), FRAC_PI_2).unwrap();
        #[rustfmt::skip]
        let expected = Matrix4::new(
            0.0, 0.0, 1.0, 0.0,
            1.0, 0.0, 0.0, 0.0,
            0.0, 1.0, 0.0, 0.0,
            0.0, 0.0, 0.0, 1.0,
        );
        assert!((t.matrix() - expected).abs().max() < 1e-15);
    }

    #[test]
    fn theta_offset_adds_to_command() {
        let with_offset = DhLink::new(3.0, 1.0, 0.4, 0.25).unwrap();
        let without = DhLink::new(3.0, 1.0, 0.4, 0.0).unwrap();
        let a = link_transform(&with_offset, 0.5).unwrap();
        let b = link_transform(&without, 0.75).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn non_finite_inputs_rejected() {
        assert!(matches!(
            link_transform(&DhLink::ZERO, f64::NAN),
            Err(Error::InvalidArgument(_))
        ));
        let bad = DhLink {
            a: f64::INFINITY,
            ..DhLink::ZERO
        };
        assert!(link_transform(&bad, 0.0).is_err());
        let mut model = RobotModel::zero();
        model.anchor.x = f64::NAN;
        assert!(cable_length(&model, &JointConfig::zero()).is_err());
        assert!(JointConfig::new([0.0, 0.0, f64::NAN, 0.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn zero_model_is_identity() {
        let t = forward_kinematics(&RobotModel::zero(), &JointConfig::zero()).unwrap();
        assert_eq!(*t.matrix(), Matrix4::identity());
        assert_eq!(
            end_position(&RobotModel::zero(), &JointConfig::zero()).unwrap(),
            Vector3::zeros()
        );
    }

    #[test]
    fn stacked_offsets_add_up() {
        let mut model = RobotModel::zero();
        for (i, l) in model.links.iter_mut().enumerate() {
            l.d = (i + 1) as f64 * 10.0;
        }
        let p = end_position(&model, &JointConfig::zero()).unwrap();
        assert_eq!(p, Vector3::new(0.0, 0.0, 210.0));
    }

    #[test]
    fn single_link_reach() {
        let mut model = RobotModel::zero();
        model.links[0].a = 100.0;
        let p = end_position(&model, &JointConfig::zero()).unwrap();
        assert_eq!(p, Vector3::new(100.0, 0.0, 0.0));
    }

    #[test]
    fn cable_length_is_distance_to_anchor() {
        let mut model = RobotModel::zero();
        model.links[0].a = 3.0;
        model.links[1].a = 4.0;
        model.links[1].theta_offset = FRAC_PI_2;
        // (3,0,0) then rotate by π/2 and move 4 along the new x -> (3,4,0)
        let p = end_position(&model, &JointConfig::zero()).unwrap();
        assert!((p - Vector3::new(3.0, 4.0, 0.0)).norm() < 1e-14);
        assert!((cable_length(&model, &JointConfig::zero()).unwrap() - 5.0).abs() < 1e-14);

        model.anchor = p;
        assert_eq!(cable_length(&model, &JointConfig::zero()).unwrap(), 0.0);
    }

    #[test]
    fn model_json_round_trip() {
        let mut model = RobotModel::zero();
        model.links[2] = DhLink::new(270.0, 0.0, -FRAC_PI_2, 0.1).unwrap();
        model.anchor = Vector3::new(500.0, -300.0, 20.0);
        let back = RobotModel::from_json_str(&model.to_json_string()).unwrap();
        assert_eq!(back, model);
    }

    #[test]
    fn model_json_key_contract() {
        let json = r#"{
            "links": [
                {"a_mm": 0, "d_mm": 290, "alpha_rad": -1.5707963267948966, "theta_offset_rad": 0},
                {"a_mm": 270, "d_mm": 0, "alpha_rad": 0, "theta_offset_rad": -1.5707963267948966},
                {"a_mm": 70, "d_mm": 0, "alpha_rad": -1.5707963267948966, "theta_offset_rad": 0},
                {"a_mm": 0, "d_mm": 302, "alpha_rad": 1.5707963267948966, "theta_offset_rad": 0},
                {"a_mm": 0, "d_mm": 0, "alpha_rad": -1.5707963267948966, "theta_offset_rad": 0},
                {"a_mm": 0, "d_mm": 72, "alpha_rad": 0, "theta_offset_rad": 0}
            ],
            "anchor_mm": [600, -200, 0]
        }"#;
        let model = RobotModel::from_json_str(json).unwrap();
        assert_eq!(model.links[0].d, 290.0);
        assert_eq!(model.anchor, Vector3::new(600.0, -200.0, 0.0));

        let five_links = r#"{"links": [], "anchor_mm": [0, 0, 0]}"#;
        assert!(RobotModel::from_json_str(five_links).is_err());
        let wrong_key = json.replace("a_mm", "a");
        assert!(RobotModel::from_json_str(&wrong_key).is_err());
    }
}
