//! Shared fixtures for the benchmarks.

use jumpbsde::zoo::{CoupledSine, LinearAdditive};
use jumpbsde::{LevyMeasure, ModelSpec};

pub fn tempered_stable() -> LevyMeasure {
    LevyMeasure::tempered_stable(1, 1.0, 0.5, 50.0).expect("valid measure")
}

pub fn linear() -> ModelSpec {
    LinearAdditive::default().build(tempered_stable()).expect("zoo model builds")
}

pub fn coupled() -> ModelSpec {
    CoupledSine::default().build(tempered_stable()).expect("zoo model builds")
}
