use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::sut::Sut;
use super::HarnessError;
use crate::metrics::{baseline_criterion, displacement_scores, BaselineOutcome, DisplacementScores, LabelCriterion};
use crate::ot::wasserstein;
use crate::report::{summarize, RelationSummary};
use crate::stats::{is_violation, pairwise_distances, variation_measures, z_test, VariationMeasures};
use crate::transforms::{inverse_transform_output, transform_input, transform_output, MetamorphicRelation};
use crate::types::{ComparisonFrame, PredictionSet, RunConfig, TestCase, Fnv1a};

pub const SCHEMA_VERSION: u32 = 1;

/// One follow-up vs source-sample comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub distance: f64,
    pub p_value: f64,
    pub violation: bool,
}

/// Label-based baseline decisions for one (test case, relation) pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Baselines {
    pub bon_ade: BaselineOutcome,
    pub bon_fde: BaselineOutcome,
    pub mean_ade: BaselineOutcome,
    pub mean_fde: BaselineOutcome,
}

impl Baselines {
    pub fn get(&self, criterion: LabelCriterion) -> BaselineOutcome {
        match criterion {
            LabelCriterion::BonAde => self.bon_ade,
            LabelCriterion::BonFde => self.bon_fde,
            LabelCriterion::MeanAde => self.mean_ade,
            LabelCriterion::MeanFde => self.mean_fde,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestCaseReport {
    pub test_case_id: String,
    pub mr: MetamorphicRelation,
    /// Base seed; source sample i used `seed + i`, the follow-up `seed + N + 1`.
    pub seed: u64,
    pub mu_src: f64,
    pub sigma_src: f64,
    pub source_pairwise: Vec<f64>,
    pub comparisons: Vec<Comparison>,
    pub violation_counter: usize,
    pub baselines: Option<Baselines>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub schema_version: u32,
    pub sut: String,
    pub config: RunConfig,
    pub mrs: Vec<MetamorphicRelation>,
    pub summary: Vec<RelationSummary>,
    /// Case-major, then relation order.
    pub cases: Vec<TestCaseReport>,
}

impl SuiteReport {
    pub fn any_violation(&self) -> bool {
        self.cases.iter().any(|c| c.violation_counter > 0)
    }
}

/// Source-side results of the preparation phase; they depend only on the
/// source test case, so they are shared by every relation.
#[derive(Debug, Clone)]
pub struct SourceSamples {
    pub seed: u64,
    pub sets: Vec<PredictionSet>,
    pub pairwise: Vec<f64>,
    pub measures: VariationMeasures,
    pub scores: Option<Vec<DisplacementScores>>,
}

fn invoke(sut: &dyn Sut, tc: &TestCase, k: usize, seed: u64) -> Result<PredictionSet, HarnessError> {
    let set = sut.predict(tc, k, seed).map_err(|e| HarnessError::SutFailure(e.to_string()))?;
    if set.len() != k || set.horizon() != tc.horizon() {
        return Err(HarnessError::SutFailure(format!(
            "expected {k} trajectories of length {}, got {} of length {}",
            tc.horizon(),
            set.len(),
            set.horizon()
        )));
    }
    Ok(set)
}

/// Preparation phase: N source predictions and their pairwise null distribution.
pub fn prepare_source(sut: &dyn Sut, tc: &TestCase, cfg: &RunConfig) -> Result<SourceSamples, HarnessError> {
    cfg.validate()?;
    let sets = (1..=cfg.n as u64)
        .map(|i| invoke(sut, tc, cfg.k, cfg.seed.wrapping_add(i)))
        .collect::<Result<Vec<_>, _>>()?;
    let pairwise = pairwise_distances(&sets)?;
    let measures = variation_measures(&pairwise)?;
    let scores = tc
        .ground_truth()
        .map(|gt| sets.iter().map(|s| displacement_scores(s, gt)).collect::<Result<Vec<_>, _>>())
        .transpose()?;
    Ok(SourceSamples { seed: cfg.seed, sets, pairwise, measures, scores })
}

/// MT and evaluation phases for one relation.
pub fn evaluate_relation(
    sut: &dyn Sut,
    tc: &TestCase,
    source: &SourceSamples,
    mr: MetamorphicRelation,
    cfg: &RunConfig,
) -> Result<TestCaseReport, HarnessError> {
    let followup = transform_input(mr, tc)?;
    let fu_pred = invoke(sut, &followup, cfg.k, source.seed.wrapping_add(cfg.n as u64 + 1))?;

    let distances = match cfg.frame {
        ComparisonFrame::Source => {
            let back = inverse_transform_output(mr, &fu_pred, tc.scene())?;
            source.sets.iter().map(|s| wasserstein(&back, s)).collect::<Result<Vec<_>, _>>()?
        }
        ComparisonFrame::FollowUp => source
            .sets
            .iter()
            .map(|s| Ok(wasserstein(&fu_pred, &transform_output(mr, s, tc.scene())?)?))
            .collect::<Result<Vec<_>, HarnessError>>()?,
    };

    let comparisons: Vec<Comparison> = distances
        .into_iter()
        .map(|distance| {
            let p_value = z_test(distance, &source.measures, cfg.tail);
            Comparison { distance, p_value, violation: is_violation(p_value, cfg.p_threshold) }
        })
        .collect();
    let violation_counter = comparisons.iter().filter(|c| c.violation).count();

    let baselines = match (&source.scores, followup.ground_truth()) {
        (Some(src), Some(fu_gt)) => {
            let fu = displacement_scores(&fu_pred, fu_gt)?.scaled_down(mr.scale_ratio(tc.scene()));
            let outcome = |c: LabelCriterion| {
                let scores: Vec<f64> = src.iter().map(|s| s.get(c)).collect();
                baseline_criterion(&scores, fu.get(c), cfg.p_threshold, cfg.tail)
            };
            Some(Baselines {
                bon_ade: outcome(LabelCriterion::BonAde)?,
                bon_fde: outcome(LabelCriterion::BonFde)?,
                mean_ade: outcome(LabelCriterion::MeanAde)?,
                mean_fde: outcome(LabelCriterion::MeanFde)?,
            })
        }
        _ => None,
    };

    Ok(TestCaseReport {
        test_case_id: tc.id().to_string(),
        mr,
        seed: source.seed,
        mu_src: source.measures.mu,
        sigma_src: source.measures.sigma,
        source_pairwise: source.pairwise.clone(),
        comparisons,
        violation_counter,
        baselines,
    })
}

/// Runs the full test process for one source test case and one relation,
/// using `cfg.seed` as the base seed.
pub fn run_test_case(
    sut: &dyn Sut,
    tc: &TestCase,
    mr: MetamorphicRelation,
    cfg: &RunConfig,
) -> Result<TestCaseReport, HarnessError> {
    let source = prepare_source(sut, tc, cfg)?;
    evaluate_relation(sut, tc, &source, mr, cfg)
}

/// Base seed of a test case inside a suite. Derived from the suite seed and
/// the case id so that results do not depend on case order.
pub fn case_seed(suite_seed: u64, case_id: &str) -> u64 {
    let mut h = Fnv1a::default();
    h.write(case_id.as_bytes());
    splitmix64(suite_seed ^ h.finish())
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Serializes calls into a SUT that cannot be invoked concurrently.
struct Gate<'a> {
    inner: &'a dyn Sut,
    lock: Mutex<()>,
}

impl Sut for Gate<'_> {
    fn name(&self) -> &str {
        self.inner.name()
    }

    fn deterministic_given_seed(&self) -> bool {
        self.inner.deterministic_given_seed()
    }

    fn predict(&self, tc: &TestCase, k: usize, seed: u64) -> Result<PredictionSet, super::sut::SutError> {
        let _guard = self.lock.lock().unwrap_or_else(|e| e.into_inner());
        self.inner.predict(tc, k, seed)
    }
}

/// Runs every relation on every case with `jobs` worker threads. Output is
/// identical for any job count.
pub fn run_suite(
    sut: &dyn Sut,
    cases: &[TestCase],
    mrs: &[MetamorphicRelation],
    cfg: &RunConfig,
    jobs: usize,
) -> Result<SuiteReport, HarnessError> {
    if cases.is_empty() {
        return Err(HarnessError::EmptySuite("no test cases"));
    }
    if mrs.is_empty() {
        return Err(HarnessError::EmptySuite("no metamorphic relations"));
    }
    cfg.validate()?;

    let gate;
    let sut: &dyn Sut = if sut.concurrent_safe() {
        sut
    } else {
        gate = Gate { inner: sut, lock: Mutex::new(()) };
        &gate
    };

    let run_case = |tc: &TestCase| -> Result<Vec<TestCaseReport>, HarnessError> {
        let case_cfg = RunConfig { seed: case_seed(cfg.seed, tc.id()), ..cfg.clone() };
        let source = prepare_source(sut, tc, &case_cfg)?;
        mrs.iter().map(|&mr| evaluate_relation(sut, tc, &source, mr, &case_cfg)).collect()
    };

    let per_case: Vec<Vec<TestCaseReport>> = if jobs <= 1 {
        cases.iter().map(run_case).collect::<Result<_, _>>()?
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| HarnessError::InvalidConfig(e.to_string()))?;
        pool.install(|| cases.par_iter().map(run_case).collect::<Result<_, _>>())?
    };
    let reports: Vec<TestCaseReport> = per_case.into_iter().flatten().collect();

    Ok(SuiteReport {
        schema_version: SCHEMA_VERSION,
        sut: sut.name().to_string(),
        config: cfg.clone(),
        mrs: mrs.to_vec(),
        summary: summarize(&reports, mrs, cfg.n),
        cases: reports,
    })
}
