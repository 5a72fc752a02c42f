//! Metamorphic testing of stochastic trajectory predictors.
//!
//! A source test case is predicted N times to estimate how much the
//! predictor's output distribution varies on its own; a transformed
//! (mirrored or rescaled) follow-up case is predicted once, mapped back, and
//! flagged when its Wasserstein distance to the source samples is an
//! unusually large outlier.

pub mod dataio;
pub mod fixtures;
pub mod harness;
pub mod metrics;
pub mod ot;
pub mod report;
pub mod stats;
pub mod sutproto;
pub mod transforms;
pub mod types;

pub use harness::{run_suite, run_test_case, SuiteReport, Sut, TestCaseReport};
pub use transforms::MetamorphicRelation;
pub use types::{ComparisonFrame, Point2, PredictionSet, RunConfig, Scene, Setting, Tail, TestCase, Trajectory};
