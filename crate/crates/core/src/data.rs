//! Measurement sets: the canonical CSV format and seeded synthetic scenarios.
//!
//! The CSV header is exactly [`CSV_HEADER`]; each following LF-terminated row
//! holds six joint angles (rad) and one measured cable length (mm).
//!
//! Synthetic data is drawn from a `ChaCha8` generator seeded with the scenario
//! seed. Joint angles and measurement noise come from stream 0, randomly drawn
//! ground-truth deviations from stream 1, so changing the truth specification
//! does not reshuffle the joint configurations.

use std::f64::consts::FRAC_PI_2;
use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};
use crate::error_model::{apply_deviation, ParamDeviation, ParamKind, PARAMS};
use crate::kinematics::{cable_length, JointConfig, RobotModel, JOINTS};

pub const CSV_HEADER: &str = "q1_rad,q2_rad,q3_rad,q4_rad,q5_rad,q6_rad,z_mm";

/// Identifies the sampling algorithms; recorded in run reports.
pub const RNG_ALGORITHM: &str = "ChaCha8Rng (rand_chacha 0.9), uniform joints, ziggurat StandardNormal (rand_distr 0.5)";

/// One joint configuration and the cable length measured there.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Measurement {
    pub q: JointConfig,
    /// Measured cable length (mm).
    pub z: f64,
}

/// An ordered, non-empty list of measurements.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSet {
    points: Vec<Measurement>,
    provenance: String,
}

impl MeasurementSet {
    pub fn new(points: Vec<Measurement>, provenance: impl Into<String>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidArgument("measurement set is empty".into()));
        }
        for (i, p) in points.iter().enumerate() {
            ensure_finite("q", &p.q.0)?;
            if !(p.z.is_finite() && p.z > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "measurement {i}: cable length must be positive and finite, got {}",
                    p.z
                )));
            }
        }
        Ok(MeasurementSet {
            points,
            provenance: provenance.into(),
        })
    }

    #[cfg(test)]
    pub(crate) fn empty_for_tests() -> Self {
        MeasurementSet {
            points: Vec::new(),
            provenance: String::new(),
        }
    }

    pub fn points(&self) -> &[Measurement] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    /// Canonical CSV text, header included.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::with_capacity(64 * (self.len() + 1));
        out.push_str(CSV_HEADER);
        out.push('\n');
        for p in &self.points {
            for q in p.q.0 {
                // `Display` for f64 prints the shortest string that parses back
                // to the same value, never in exponent form.
                write!(out, "{q},").unwrap();
            }
            writeln!(out, "{}", p.z).unwrap();
        }
        out
    }

    pub fn from_csv_str(text: &str, provenance: impl Into<String>) -> Result<Self> {
        let mut lines = text.split('\n').enumerate().map(|(i, l)| (i + 1, l));
        match lines.next() {
            Some((_, header)) if header == CSV_HEADER => {}
            Some((_, header)) => {
                return Err(Error::Parse {
                    line: 1,
                    message: format!("expected header `{CSV_HEADER}`, found `{header}`"),
                })
            }
            None => unreachable!("split yields at least one item"),
        }

        let mut points = Vec::new();
        let mut trailing_blank = None;
        for (line_no, line) in lines {
            if let Some(blank) = trailing_blank {
                return Err(Error::Parse {
                    line: blank,
                    message: "empty line".into(),
                });
            }
            if line.is_empty() {
                trailing_blank = Some(line_no);
                continue;
            }
            points.push(parse_row(line_no, line)?);
        }
        if points.is_empty() {
            return Err(Error::Parse {
                line: 2,
                message: "no measurements after the header".into(),
            });
        }
        MeasurementSet::new(points, provenance)
    }
}

fn parse_row(line_no: usize, line: &str) -> Result<Measurement> {
    let parse_err = |message: String| Error::Parse {
        line: line_no,
        message,
    };
    let fields: Vec<&str> = line.split(',').collect();
    if fields.len() != JOINTS + 1 {
        return Err(parse_err(format!(
            "expected {} columns, found {}",
            JOINTS + 1,
            fields.len()
        )));
    }
    let mut values = [0.0; JOINTS + 1];
    for (col, (slot, field)) in values.iter_mut().zip(&fields).enumerate() {
        let v: f64 = field
            .trim()
            .parse()
            .map_err(|_| parse_err(format!("column {}: `{field}` is not a number", col + 1)))?;
        if !v.is_finite() {
            return Err(parse_err(format!("column {}: value is not finite", col + 1)));
        }
        *slot = v;
    }
    let z = values[JOINTS];
    if z <= 0.0 {
        return Err(parse_err(format!("cable length must be positive, got {z}")));
    }
    Ok(Measurement {
        q: JointConfig(values[..JOINTS].try_into().unwrap()),
        z,
    })
}

/// Reads a measurement CSV; provenance is set to the path.
pub fn load(path: impl AsRef<Path>) -> Result<MeasurementSet> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    MeasurementSet::from_csv_str(&text, path.display().to_string())
}

pub fn save(set: &MeasurementSet, path: impl AsRef<Path>) -> Result<()> {
    if set.is_empty() {
        return Err(Error::InvalidArgument(
            "refusing to write an empty measurement set".into(),
        ));
    }
    std::fs::write(path, set.to_csv_string())?;
    Ok(())
}

/// Ground truth and sampling settings for a synthetic data set.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticScenario {
    pub nominal: RobotModel,
    pub x_true: ParamDeviation,
    /// Standard deviation of additive Gaussian length noise (mm).
    pub noise_std: f64,
    pub seed: u64,
    pub n_points: usize,
    /// Per-joint sampling interval `[min, max)` (rad).
    pub joint_ranges: [(f64, f64); JOINTS],
}

impl SyntheticScenario {
    pub const DEFAULT_JOINT_RANGES: [(f64, f64); JOINTS] = [(-FRAC_PI_2, FRAC_PI_2); JOINTS];

    pub fn validate(&self) -> Result<()> {
        self.nominal.validate()?;
        if !(self.noise_std.is_finite() && self.noise_std >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "noise_std must be finite and non-negative, got {}",
                self.noise_std
            )));
        }
        if self.n_points == 0 {
            return Err(Error::InvalidArgument("n_points must be at least 1".into()));
        }
        for (j, &(lo, hi)) in self.joint_ranges.iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::InvalidArgument(format!(
                    "joint {} range [{lo}, {hi}] is not a finite interval with min < max",
                    j + 1
                )));
            }
        }
        Ok(())
    }
}

/// Samples the scenario's joint configurations and measured lengths.
pub fn synthesize(scenario: &SyntheticScenario) -> Result<(MeasurementSet, ParamDeviation)> {
    scenario.validate()?;
    let actual = apply_deviation(&scenario.nominal, &scenario.x_true)?;
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
    let mut points = Vec::with_capacity(scenario.n_points);
    for _ in 0..scenario.n_points {
        let mut q = [0.0; JOINTS];
        for (qj, &(lo, hi)) in q.iter_mut().zip(&scenario.joint_ranges) {
            *qj = rng.random_range(lo..hi);
        }
        let q = JointConfig(q);
        let noise: f64 = rng.sample(StandardNormal);
        let z = cable_length(&actual, &q)? + scenario.noise_std * noise;
        points.push(Measurement { q, z });
    }
    let set = MeasurementSet::new(points, format!("synthetic seed={}", scenario.seed))?;
    Ok((set, scenario.x_true))
}

/// Deviation with lengths uniform in `±length_bound` mm and angles in `±angle_bound` rad.
pub fn random_deviation(seed: u64, length_bound: f64, angle_bound: f64) -> Result<ParamDeviation> {
    ensure_finite("bounds", &[length_bound, angle_bound])?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let mut x = [0.0; PARAMS];
    for (k, v) in x.iter_mut().enumerate() {
        let bound = if ParamKind::of_index(k).0.is_angle() {
            angle_bound
        } else {
            length_bound
        };
        *v = if bound > 0.0 {
            rng.random_range(-bound..bound)
        } else {
            0.0
        };
    }
    ParamDeviation::new(x)
}

/// Ground truth as written in a scenario file: explicit, or drawn uniformly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TruthSpec {
    Uniform {
        uniform_length_mm: f64,
        uniform_angle_rad: f64,
    },
    Explicit(ParamDeviation),
}

/// JSON form of a [`SyntheticScenario`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub nominal: RobotModel,
    pub x_true: TruthSpec,
    pub noise_std_mm: f64,
    pub seed: u64,
    pub n_points: usize,
    #[serde(default)]
    pub joint_ranges_rad: Option<[[f64; 2]; JOINTS]>,
}

impl ScenarioConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    /// Builds the concrete scenario, optionally replacing the seed.
    pub fn resolve(&self, seed_override: Option<u64>) -> Result<SyntheticScenario> {
        let seed = seed_override.unwrap_or(self.seed);
        let x_true = match &self.x_true {
            TruthSpec::Explicit(x) => *x,
            TruthSpec::Uniform {
                uniform_length_mm,
                uniform_angle_rad,
            } => random_deviation(seed, *uniform_length_mm, *uniform_angle_rad)?,
        };
        let joint_ranges = match self.joint_ranges_rad {
            Some(r) => r.map(|[lo, hi]| (lo, hi)),
            None => SyntheticScenario::DEFAULT_JOINT_RANGES,
        };
        let scenario = SyntheticScenario {
            nominal: self.nominal.clone(),
            x_true,
            noise_std: self.noise_std_mm,
            seed,
            n_points: self.n_points,
            joint_ranges,
        };
        scenario.validate()?;
        Ok(scenario)
    }
}
