#![allow(dead_code)]

use std::f64::consts::FRAC_PI_2;

use drawcal::data::{random_deviation, synthesize, MeasurementSet, SyntheticScenario};
use drawcal::error_model::ParamDeviation;
use drawcal::kinematics::{DhLink, JointConfig, RobotModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// General 6R arm without parallel consecutive axes.
pub fn bench_arm() -> RobotModel {
    RobotModel::new(
        [
            DhLink::new(25.0, 300.0, -FRAC_PI_2, 0.0).unwrap(),
            DhLink::new(280.0, 10.0, 0.35, -FRAC_PI_2).unwrap(),
            DhLink::new(60.0, 5.0, -1.2, 0.0).unwrap(),
            DhLink::new(15.0, 310.0, 1.4, 0.0).unwrap(),
            DhLink::new(5.0, 20.0, -1.3, 0.0).unwrap(),
            DhLink::new(40.0, 80.0, 0.0, 0.0).unwrap(),
        ],
        [650.0, -250.0, -150.0].into(),
    )
    .unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_model(rng: &mut ChaCha8Rng) -> RobotModel {
    let links = std::array::from_fn(|_| {
        DhLink::new(
            rng.random_range(-300.0..300.0),
            rng.random_range(-300.0..300.0),
            rng.random_range(-3.1..3.1),
            rng.random_range(-3.1..3.1),
        )
        .unwrap()
    });
    let anchor = [
        rng.random_range(-800.0..800.0),
        rng.random_range(-800.0..800.0),
        rng.random_range(-800.0..800.0),
    ];
    RobotModel::new(links, anchor.into()).unwrap()
}

pub fn random_q(rng: &mut ChaCha8Rng) -> JointConfig {
    JointConfig(std::array::from_fn(|_| rng.random_range(-3.1..3.1)))
}

/// Acceptance-style scenario: deviations within ±0.5 mm and ±0.005 rad.
pub fn scenario(model: &RobotModel, seed: u64, noise_std: f64, n_points: usize) -> (MeasurementSet, ParamDeviation) {
    let x_true = random_deviation(seed, 0.5, 0.005).unwrap();
    synthesize(&SyntheticScenario {
        nominal: model.clone(),
        x_true,
        noise_std,
        seed,
        n_points,
        joint_ranges: SyntheticScenario::DEFAULT_JOINT_RANGES,
    })
    .unwrap()
}
