//! Null distribution of source-vs-source distances and the z-test that turns
//! a follow-up distance into a violation decision.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ot::{wasserstein, OtError};
use crate::types::{PredictionSet, Tail};

/// Below this standard deviation the null distribution is treated as a point mass.
pub const DEGENERATE_SIGMA: f64 = 1e-12;
/// Slack used when comparing a distance against a point-mass null.
pub const DEGENERATE_SLACK: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("need at least 2 prediction sets, got {0}")]
    TooFewSets(usize),
    #[error("empty input")]
    EmptyInput,
    #[error(transparent)]
    Ot(#[from] OtError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VariationMeasures {
    pub mu: f64,
    /// Population standard deviation.
    pub sigma: f64,
    pub count: usize,
}

/// Wasserstein distances of all unordered pairs `(i, j)`, `i < j`, in
/// lexicographic order.
pub fn pairwise_distances(sets: &[PredictionSet]) -> Result<Vec<f64>, StatsError> {
    if sets.len() < 2 {
        return Err(StatsError::TooFewSets(sets.len()));
    }
    let mut out = Vec::with_capacity(sets.len() * (sets.len() - 1) / 2);
    for (i, a) in sets.iter().enumerate() {
        for b in &sets[i + 1..] {
            out.push(wasserstein(a, b)?);
        }
    }
    Ok(out)
}

pub fn variation_measures(d: &[f64]) -> Result<VariationMeasures, StatsError> {
    if d.is_empty() {
        return Err(StatsError::EmptyInput);
    }
    let count = d.len();
    let mu = d.iter().sum::<f64>() / count as f64;
    let var = d.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / count as f64;
    Ok(VariationMeasures { mu, sigma: var.sqrt(), count })
}

/// Standard normal CDF.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-z / std::f64::consts::SQRT_2)
}

/// Upper-tail probability `1 - Phi(z)`, computed without cancellation.
pub fn normal_sf(z: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(z / std::f64::consts::SQRT_2)
}

/// p-value of observing distance `d` under the null `vm`.
///
/// A point-mass null (`sigma < 1e-12`) yields p = 0 when `d` departs from
/// `mu` by more than 1e-9 in the tested direction and p = 1 otherwise.
pub fn z_test(d: f64, vm: &VariationMeasures, tail: Tail) -> f64 {
    if vm.sigma < DEGENERATE_SIGMA {
        let departs = match tail {
            Tail::Upper => d > vm.mu + DEGENERATE_SLACK,
            Tail::TwoSided => (d - vm.mu).abs() > DEGENERATE_SLACK,
        };
        return if departs { 0.0 } else { 1.0 };
    }
    let z = (d - vm.mu) / vm.sigma;
    let p = match tail {
        Tail::Upper => normal_sf(z),
        Tail::TwoSided => 2.0 * normal_sf(z.abs()),
    };
    p.clamp(0.0, 1.0)
}

/// Inclusive: `p <= threshold` is a violation.
pub fn is_violation(p: f64, threshold: f64) -> bool {
    p <= threshold
}
