//! The metamorphic test process: predict the source case N times to build a
//! null distribution of Wasserstein distances, predict the follow-up case
//! once, and z-test the follow-up against every source sample.

mod runner;
mod sut;

use thiserror::Error;

pub use runner::{
    case_seed, evaluate_relation, prepare_source, run_suite, run_test_case, Baselines, Comparison, SourceSamples,
    SuiteReport, TestCaseReport, SCHEMA_VERSION,
};
pub use sut::{
    biased_predict, builtin_sut, cvg_predict, goal_predict, BiasedSut, ConstantVelocitySut, EchoSut, GoalSut, Sut,
    SutError, DEFAULT_NOISE_SCALE,
};

use crate::metrics::MetricsError;
use crate::ot::OtError;
use crate::stats::StatsError;
use crate::transforms::TransformError;
use crate::types::CoreError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("SUT failure: {0}")]
    SutFailure(String),
    #[error("empty suite: {0}")]
    EmptySuite(&'static str),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error(transparent)]
    Transform(#[from] TransformError),
    #[error(transparent)]
    Ot(#[from] OtError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}
