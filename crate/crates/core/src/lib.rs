//! Kinematic calibration of 6-axis serial robots from draw-wire (cable-length)
//! measurements.
//!
//! A draw-wire sensor anchored at a fixed point measures the distance to the
//! robot flange. Comparing those lengths with the lengths predicted by the
//! nominal Denavit–Hartenberg model gives residuals from which the 24 DH
//! parameter deviations are identified, using:
//!
//! * [`solvers::ls_solve`]: iterated undamped least squares,
//! * [`solvers::lm_solve`]: Levenberg–Marquardt with fixed damping,
//! * [`solvers::slm_solve`]: LM with a geometrically decaying step size,
//! * [`ukf::ukf_calibrate`]: an unscented Kalman filter over the parameters,
//! * [`ukf::ukf_slm_calibrate`]: one UKF pass used to initialize SLM.
//!
//! ```
//! use drawcal::data::{synthesize, random_deviation, SyntheticScenario};
//! use drawcal::kinematics::{DhLink, RobotModel};
//! use drawcal::solvers::{slm_solve, SolverConfig};
//! use std::f64::consts::FRAC_PI_2;
//!
//! let links = [
//!     DhLink::new(0.0, 290.0, -FRAC_PI_2, 0.0)?,
//!     DhLink::new(270.0, 0.0, 0.0, -FRAC_PI_2)?,
//!     DhLink::new(70.0, 0.0, -FRAC_PI_2, 0.0)?,
//!     DhLink::new(0.0, 302.0, FRAC_PI_2, 0.0)?,
//!     DhLink::new(0.0, 0.0, -FRAC_PI_2, 0.0)?,
//!     DhLink::new(30.0, 72.0, 0.0, 0.0)?,
//! ];
//! let nominal = RobotModel::new(links, [650.0, -250.0, -150.0].into())?;
//! let scenario = SyntheticScenario {
//!     nominal: nominal.clone(),
//!     x_true: random_deviation(1, 0.5, 0.005)?,
//!     noise_std: 0.0,
//!     seed: 1,
//!     n_points: 120,
//!     joint_ranges: SyntheticScenario::DEFAULT_JOINT_RANGES,
//! };
//! let (data, _truth) = synthesize(&scenario)?;
//! let report = slm_solve(&nominal, &data, &SolverConfig::default())?;
//! assert!(report.final_rmse() < 1e-6);
//! # Ok::<(), drawcal::Error>(())
//! ```

pub mod data;
pub mod diagnostics;
pub mod error;
pub mod error_model;
pub mod kinematics;
pub mod metrics;
pub mod solvers;
pub mod ukf;

pub use error::{Error, Result};

// the guide's chapters run as doctests
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/kinematics.md")]
    mod kinematics {}
    #[doc = include_str!("../../../book/src/error-model.md")]
    mod error_model {}
    #[doc = include_str!("../../../book/src/solvers.md")]
    mod solvers {}
    #[doc = include_str!("../../../book/src/ukf.md")]
    mod ukf {}
    #[doc = include_str!("../../../book/src/metrics-and-data.md")]
    mod metrics_and_data {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
