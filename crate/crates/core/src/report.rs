//! Aggregation of per-case reports into violation rates, and the agreement
//! analysis between the Wasserstein criterion and the label-based ones.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::harness::{SuiteReport, TestCaseReport};
use crate::metrics::LabelCriterion;
use crate::stats::is_violation;
use crate::transforms::MetamorphicRelation;

/// Label decisions always use this threshold; only the WVC threshold is swept.
pub const LABEL_THRESHOLD: f64 = 0.05;

pub const DEFAULT_SWEEP_THRESHOLDS: [f64; 6] = [0.01, 0.025, 0.05, 0.10, 0.15, 0.20];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReportError {
    #[error("labels and predictions differ in length ({labels} vs {predictions})")]
    LengthMismatch { labels: usize, predictions: usize },
    #[error("no decisions to score")]
    EmptyInput,
    #[error("report has no ground-truth baselines (case '{0}')")]
    MissingBaselines(String),
}

/// Violation rates (percent) of the label-based criteria.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineRates {
    pub cases: usize,
    pub bon_ade: f64,
    pub bon_fde: f64,
    pub mean_ade: f64,
    pub mean_fde: f64,
}

impl BaselineRates {
    pub fn get(&self, c: LabelCriterion) -> f64 {
        match c {
            LabelCriterion::BonAde => self.bon_ade,
            LabelCriterion::BonFde => self.bon_fde,
            LabelCriterion::MeanAde => self.mean_ade,
            LabelCriterion::MeanFde => self.mean_fde,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationSummary {
    pub mr: MetamorphicRelation,
    pub cases: usize,
    pub comparisons: usize,
    pub violations: usize,
    /// Percentage of comparisons flagged by the Wasserstein criterion.
    pub wvc_rate: f64,
    pub baselines: Option<BaselineRates>,
}

/// Per-relation violation rates. A baseline decision is made once per case
/// and counts for all N comparisons of that case.
pub fn summarize(reports: &[TestCaseReport], mrs: &[MetamorphicRelation], n: usize) -> Vec<RelationSummary> {
    mrs.iter()
        .map(|&mr| {
            let rows: Vec<&TestCaseReport> = reports.iter().filter(|r| r.mr == mr).collect();
            let comparisons: usize = rows.iter().map(|r| r.comparisons.len()).sum();
            let violations: usize = rows.iter().map(|r| r.violation_counter).sum();
            let with_gt: Vec<_> = rows.iter().filter_map(|r| r.baselines).collect();
            let baselines = (!with_gt.is_empty()).then(|| {
                let rate = |c: LabelCriterion| {
                    let hits = with_gt.iter().filter(|b| b.get(c).violation).count();
                    percent(hits * n, with_gt.len() * n)
                };
                BaselineRates {
                    cases: with_gt.len(),
                    bon_ade: rate(LabelCriterion::BonAde),
                    bon_fde: rate(LabelCriterion::BonFde),
                    mean_ade: rate(LabelCriterion::MeanAde),
                    mean_fde: rate(LabelCriterion::MeanFde),
                }
            });
            RelationSummary {
                mr,
                cases: rows.len(),
                comparisons,
                violations,
                wvc_rate: percent(violations, comparisons),
                baselines,
            }
        })
        .collect()
}

fn percent(hits: usize, total: usize) -> f64 {
    if total == 0 {
        0.0
    } else {
        100.0 * hits as f64 / total as f64
    }
}

/// Table with one row per relation and columns WVC, BoN-ADE, BoN-FDE,
/// Mean-ADE, Mean-FDE; `-` marks criteria without ground truth.
pub fn render_rate_table(summary: &[RelationSummary]) -> String {
    let mut out = String::new();
    let _ = write!(out, "{:<14}|{:>9}", "MR", "WVC");
    for c in LabelCriterion::ALL {
        let _ = write!(out, "{:>10}", c.column_name());
    }
    out.push('\n');
    out.push_str(&"-".repeat(14 + 1 + 9 + 40));
    out.push('\n');
    for row in summary {
        let _ = write!(out, "{:<14}|{:>9.1}", row.mr.to_string(), row.wvc_rate);
        for c in LabelCriterion::ALL {
            match &row.baselines {
                Some(b) => {
                    let _ = write!(out, "{:>10.1}", b.get(c));
                }
                None => {
                    let _ = write!(out, "{:>10}", "-");
                }
            }
        }
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

impl ConfusionCounts {
    pub fn from_decisions(labels: &[bool], predictions: &[bool]) -> Result<Self, ReportError> {
        if labels.len() != predictions.len() {
            return Err(ReportError::LengthMismatch { labels: labels.len(), predictions: predictions.len() });
        }
        if labels.is_empty() {
            return Err(ReportError::EmptyInput);
        }
        let mut c = Self::default();
        for (&l, &p) in labels.iter().zip(predictions) {
            match (l, p) {
                (true, true) => c.tp += 1,
                (false, true) => c.fp += 1,
                (true, false) => c.fn_ += 1,
                (false, false) => c.tn += 1,
            }
        }
        Ok(c)
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }

    /// Precision and recall are 1.0 when their denominator is empty.
    pub fn scores(&self) -> Result<ClassificationScores, ReportError> {
        if self.total() == 0 {
            return Err(ReportError::EmptyInput);
        }
        let ratio = |num: usize, den: usize| if den == 0 { 1.0 } else { num as f64 / den as f64 };
        Ok(ClassificationScores {
            accuracy: (self.tp + self.tn) as f64 / self.total() as f64,
            precision: ratio(self.tp, self.tp + self.fp),
            recall: ratio(self.tp, self.tp + self.fn_),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassificationScores {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
}

pub fn classification_scores(labels: &[bool], predictions: &[bool]) -> Result<ClassificationScores, ReportError> {
    ConfusionCounts::from_decisions(labels, predictions)?.scores()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub threshold: f64,
    pub counts: ConfusionCounts,
    pub scores: ClassificationScores,
}

/// Label and WVC p-values for every comparison in the report, in report order.
fn decision_inputs(report: &SuiteReport, label: LabelCriterion) -> Result<Vec<(f64, f64)>, ReportError> {
    let mut out = Vec::new();
    for case in &report.cases {
        let baselines = case.baselines.ok_or_else(|| ReportError::MissingBaselines(case.test_case_id.clone()))?;
        let label_p = baselines.get(label).p_value;
        out.extend(case.comparisons.iter().map(|c| (label_p, c.p_value)));
    }
    Ok(out)
}

/// Agreement between WVC decisions at each threshold and the label-based
/// decisions of `label` at the fixed 0.05 threshold.
pub fn threshold_sweep(
    report: &SuiteReport,
    label: LabelCriterion,
    thresholds: &[f64],
) -> Result<Vec<SweepRow>, ReportError> {
    let inputs = decision_inputs(report, label)?;
    let labels: Vec<bool> = inputs.iter().map(|&(lp, _)| is_violation(lp, LABEL_THRESHOLD)).collect();
    thresholds
        .iter()
        .map(|&threshold| {
            let predictions: Vec<bool> = inputs.iter().map(|&(_, p)| is_violation(p, threshold)).collect();
            let counts = ConfusionCounts::from_decisions(&labels, &predictions)?;
            Ok(SweepRow { threshold, counts, scores: counts.scores()? })
        })
        .collect()
}

/// Comma-separated `threshold,accuracy,precision,recall` table with header.
pub fn sweep_to_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("threshold,accuracy,precision,recall\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{},{}", r.threshold, r.scores.accuracy, r.scores.precision, r.scores.recall);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{Baselines, Comparison};
    use crate::metrics::BaselineOutcome;
    use crate::types::RunConfig;

    fn decisions(tp: usize, fp: usize, fn_: usize, tn: usize) -> (Vec<bool>, Vec<bool>) {
        let mut l = Vec::new();
        let mut p = Vec::new();
        for (n, lv, pv) in [(tp, true, true), (fp, false, true), (fn_, true, false), (tn, false, false)] {
            l.extend(std::iter::repeat_n(lv, n));
            p.extend(std::iter::repeat_n(pv, n));
        }
        (l, p)
    }

    #[test]
    fn classification_arithmetic() {
        let (l, p) = decisions(3, 1, 2, 4);
        let s = classification_scores(&l, &p).unwrap();
        assert!((s.accuracy - 0.7).abs() < 1e-15);
        assert!((s.precision - 0.75).abs() < 1e-15);
        assert!((s.recall - 0.6).abs() < 1e-15);
    }

    #[test]
    fn perfect_agreement() {
        let l = vec![true, false, true, true];
        assert_eq!(classification_scores(&l, &l).unwrap().accuracy, 1.0);
    }

    #[test]
    fn empty_denominators_score_one() {
        let l = vec![false; 5];
        let s = classification_scores(&l, &l).unwrap();
        assert_eq!((s.accuracy, s.precision, s.recall), (1.0, 1.0, 1.0));
    }

    #[test]
    fn classification_errors() {
        assert_eq!(
            classification_scores(&[true], &[true, false]).unwrap_err(),
            ReportError::LengthMismatch { labels: 1, predictions: 2 }
        );
        assert_eq!(classification_scores(&[], &[]).unwrap_err(), ReportError::EmptyInput);
    }

    fn outcome(p: f64) -> BaselineOutcome {
        BaselineOutcome { p_value: p, violation: p <= 0.05 }
    }

    fn case(id: &str, mr: MetamorphicRelation, ps: &[f64], label_p: Option<f64>) -> TestCaseReport {
        let comparisons: Vec<Comparison> =
            ps.iter().map(|&p| Comparison { distance: 1.0, p_value: p, violation: p <= 0.05 }).collect();
        TestCaseReport {
            test_case_id: id.into(),
            mr,
            seed: 0,
            mu_src: 1.0,
            sigma_src: 0.1,
            source_pairwise: vec![1.0],
            violation_counter: comparisons.iter().filter(|c| c.violation).count(),
            comparisons,
            baselines: label_p.map(|p| Baselines {
                bon_ade: outcome(1.0),
                bon_fde: outcome(1.0),
                mean_ade: outcome(p),
                mean_fde: outcome(p),
            }),
        }
    }

    fn suite(cases: Vec<TestCaseReport>) -> SuiteReport {
        let mrs = vec![MetamorphicRelation::MirrorV];
        SuiteReport {
            schema_version: 1,
            sut: "t".into(),
            config: RunConfig { n: 2, ..RunConfig::default() },
            summary: summarize(&cases, &mrs, 2),
            mrs,
            cases,
        }
    }

    #[test]
    fn rates_follow_counters() {
        let mv = MetamorphicRelation::MirrorV;
        let mut reports = Vec::new();
        // 10 cases with N = 8 and 30 violations in total
        for i in 0..10 {
            let hits = if i < 6 { 5 } else { 0 };
            let ps: Vec<f64> = (0..8).map(|j| if j < hits { 0.01 } else { 0.5 }).collect();
            reports.push(case(&i.to_string(), mv, &ps, None));
        }
        let s = summarize(&reports, &[mv], 8);
        assert_eq!(s[0].violations, 30);
        assert!((s[0].wvc_rate - 37.5).abs() < 1e-12);
        assert!(s[0].baselines.is_none());

        let quiet: Vec<_> = (0..3).map(|i| case(&i.to_string(), mv, &[0.5; 8], Some(0.5))).collect();
        let s = summarize(&quiet, &[mv], 8);
        assert_eq!(s[0].wvc_rate, 0.0);
        assert_eq!(s[0].baselines.unwrap().mean_ade, 0.0);
    }

    #[test]
    fn table_has_relation_rows_and_criteria_columns() {
        let mv = MetamorphicRelation::MirrorV;
        let r = suite(vec![case("a", mv, &[0.01, 0.5], Some(0.01))]);
        let t = render_rate_table(&r.summary);
        let header = t.lines().next().unwrap();
        for col in ["WVC", "BoN-ADE", "BoN-FDE", "Mean-ADE", "Mean-FDE"] {
            assert!(header.contains(col));
        }
        assert!(t.lines().nth(2).unwrap().starts_with("mirror-v"));
    }

    #[test]
    fn sweep_rows_and_boundaries() {
        let mv = MetamorphicRelation::MirrorV;
        let r = suite(vec![
            case("a", mv, &[0.0, 0.03], Some(0.01)),
            case("b", mv, &[0.2, 0.6], Some(0.5)),
            case("c", mv, &[0.04, 0.12], Some(0.02)),
        ]);
        let rows = threshold_sweep(&r, LabelCriterion::MeanAde, &DEFAULT_SWEEP_THRESHOLDS).unwrap();
        assert_eq!(rows.len(), 6);
        let mut last = 0.0;
        for row in &rows {
            assert!(row.scores.recall >= last);
            last = row.scores.recall;
        }

        let all = threshold_sweep(&r, LabelCriterion::MeanAde, &[1.0]).unwrap();
        assert_eq!(all[0].scores.recall, 1.0);
        assert_eq!(all[0].counts.tp + all[0].counts.fp, 6);

        let none = threshold_sweep(&r, LabelCriterion::MeanAde, &[0.0]).unwrap();
        assert_eq!(none[0].counts.tp + none[0].counts.fp, 1);

        let csv = sweep_to_csv(&rows);
        assert!(csv.starts_with("threshold,accuracy,precision,recall\n"));
        assert_eq!(csv.lines().count(), 7);
    }

    #[test]
    fn sweep_needs_baselines() {
        let r = suite(vec![case("a", MetamorphicRelation::MirrorV, &[0.0], None)]);
        assert_eq!(
            threshold_sweep(&r, LabelCriterion::MeanAde, &[0.05]).unwrap_err(),
            ReportError::MissingBaselines("a".into())
        );
    }

    #[test]
    fn recomputed_decisions_match_stored_ones() {
        let mv = MetamorphicRelation::MirrorV;
        let r = suite(vec![case("a", mv, &[0.0, 0.05, 0.051, 0.7], Some(0.01))]);
        let rows = threshold_sweep(&r, LabelCriterion::MeanAde, &[0.05]).unwrap();
        let stored = r.cases[0].comparisons.iter().filter(|c| c.violation).count();
        assert_eq!(rows[0].counts.tp + rows[0].counts.fp, stored);
    }
}
