//! Ground-truth displacement metrics and the label-based baseline criteria.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::stats::{is_violation, variation_measures, z_test};
use crate::types::{PredictionSet, Tail, Trajectory};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("trajectory length mismatch: prediction {pred}, ground truth {gt}")]
    LengthMismatch { pred: usize, gt: usize },
    #[error("prediction set is empty")]
    EmptySet,
    #[error("need at least 2 source scores, got {0}")]
    TooFewSets(usize),
}

fn check_lengths(pred: &Trajectory, gt: &Trajectory) -> Result<(), MetricsError> {
    if pred.len() != gt.len() {
        return Err(MetricsError::LengthMismatch { pred: pred.len(), gt: gt.len() });
    }
    Ok(())
}

/// Average displacement error of one predicted trajectory.
pub fn ade(pred: &Trajectory, gt: &Trajectory) -> Result<f64, MetricsError> {
    check_lengths(pred, gt)?;
    let sum: f64 = pred.points().iter().zip(gt.points()).map(|(p, q)| p.distance(q)).sum();
    Ok(sum / pred.len() as f64)
}

/// Final displacement error of one predicted trajectory.
pub fn fde(pred: &Trajectory, gt: &Trajectory) -> Result<f64, MetricsError> {
    check_lengths(pred, gt)?;
    Ok(pred.last().distance(&gt.last()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DisplacementScores {
    pub bon_ade: f64,
    pub bon_fde: f64,
    pub mean_ade: f64,
    pub mean_fde: f64,
}

impl DisplacementScores {
    pub fn get(&self, criterion: LabelCriterion) -> f64 {
        match criterion {
            LabelCriterion::BonAde => self.bon_ade,
            LabelCriterion::BonFde => self.bon_fde,
            LabelCriterion::MeanAde => self.mean_ade,
            LabelCriterion::MeanFde => self.mean_fde,
        }
    }

    /// Divides every score by `s`.
    pub fn scaled_down(&self, s: f64) -> Self {
        Self {
            bon_ade: self.bon_ade / s,
            bon_fde: self.bon_fde / s,
            mean_ade: self.mean_ade / s,
            mean_fde: self.mean_fde / s,
        }
    }
}

/// The four label-based criteria, in report column order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LabelCriterion {
    BonAde,
    BonFde,
    MeanAde,
    MeanFde,
}

impl LabelCriterion {
    pub const ALL: [LabelCriterion; 4] =
        [LabelCriterion::BonAde, LabelCriterion::BonFde, LabelCriterion::MeanAde, LabelCriterion::MeanFde];

    pub fn column_name(self) -> &'static str {
        match self {
            LabelCriterion::BonAde => "BoN-ADE",
            LabelCriterion::BonFde => "BoN-FDE",
            LabelCriterion::MeanAde => "Mean-ADE",
            LabelCriterion::MeanFde => "Mean-FDE",
        }
    }
}

impl std::str::FromStr for LabelCriterion {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "bon-ade" => Ok(LabelCriterion::BonAde),
            "bon-fde" => Ok(LabelCriterion::BonFde),
            "mean-ade" => Ok(LabelCriterion::MeanAde),
            "mean-fde" => Ok(LabelCriterion::MeanFde),
            other => Err(format!("unknown label criterion '{other}'")),
        }
    }
}

/// Best-of-K (minimum) and mean ADE/FDE of a prediction set.
pub fn displacement_scores(preds: &PredictionSet, gt: &Trajectory) -> Result<DisplacementScores, MetricsError> {
    if preds.is_empty() {
        return Err(MetricsError::EmptySet);
    }
    let mut bon_ade = f64::INFINITY;
    let mut bon_fde = f64::INFINITY;
    let mut sum_ade = 0.0;
    let mut sum_fde = 0.0;
    for pred in preds.trajectories() {
        let a = ade(pred, gt)?;
        let f = fde(pred, gt)?;
        bon_ade = bon_ade.min(a);
        bon_fde = bon_fde.min(f);
        sum_ade += a;
        sum_fde += f;
    }
    let k = preds.len() as f64;
    Ok(DisplacementScores { bon_ade, bon_fde, mean_ade: sum_ade / k, mean_fde: sum_fde / k })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineOutcome {
    pub p_value: f64,
    pub violation: bool,
}

/// z-test of one follow-up score against the N source scores, using the same
/// null construction as the Wasserstein criterion.
pub fn baseline_criterion(
    source_scores: &[f64],
    followup_score: f64,
    threshold: f64,
    tail: Tail,
) -> Result<BaselineOutcome, MetricsError> {
    if source_scores.len() < 2 {
        return Err(MetricsError::TooFewSets(source_scores.len()));
    }
    let vm = variation_measures(source_scores)
        .map_err(|_| MetricsError::TooFewSets(source_scores.len()))?;
    let p_value = z_test(followup_score, &vm, tail);
    Ok(BaselineOutcome { p_value, violation: is_violation(p_value, threshold) })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn traj(pts: &[(f64, f64)]) -> Trajectory {
        Trajectory::from_xy(pts, 0.4).unwrap()
    }

    #[test]
    fn ade_examples() {
        assert_eq!(ade(&traj(&[(0.0, 0.0), (1.0, 0.0)]), &traj(&[(0.0, 1.0), (1.0, 1.0)])).unwrap(), 1.0);
        let t = traj(&[(2.0, 3.0), (4.0, 5.0)]);
        assert_eq!(ade(&t, &t).unwrap(), 0.0);
        assert_eq!(ade(&traj(&[(0.0, 0.0), (0.0, 0.0)]), &traj(&[(3.0, 4.0), (0.0, 0.0)])).unwrap(), 2.5);
    }

    #[test]
    fn fde_examples() {
        assert_eq!(fde(&traj(&[(0.0, 0.0), (1.0, 0.0)]), &traj(&[(0.0, 1.0), (1.0, 1.0)])).unwrap(), 1.0);
        let t = traj(&[(2.0, 3.0), (4.0, 5.0)]);
        assert_eq!(fde(&t, &t).unwrap(), 0.0);
        assert_eq!(fde(&traj(&[(0.0, 0.0)]), &traj(&[(3.0, 4.0)])).unwrap(), 5.0);
    }

    #[test]
    fn length_mismatch() {
        let err = ade(&traj(&[(0.0, 0.0)]), &traj(&[(0.0, 0.0), (1.0, 1.0)])).unwrap_err();
        assert_eq!(err, MetricsError::LengthMismatch { pred: 1, gt: 2 });
        assert!(fde(&traj(&[(0.0, 0.0)]), &traj(&[(0.0, 0.0), (1.0, 1.0)])).is_err());
    }

    #[test]
    fn best_of_n_and_mean() {
        let gt = traj(&[(0.0, 0.0)]);
        let preds = PredictionSet::new(vec![traj(&[(1.0, 0.0)]), traj(&[(0.0, 3.0)])]).unwrap();
        let s = displacement_scores(&preds, &gt).unwrap();
        assert_eq!((s.bon_ade, s.mean_ade), (1.0, 2.0));
        assert_eq!((s.bon_fde, s.mean_fde), (1.0, 2.0));

        let one = PredictionSet::new(vec![traj(&[(3.0, 4.0)])]).unwrap();
        let s = displacement_scores(&one, &gt).unwrap();
        assert_eq!((s.bon_ade, s.bon_fde), (s.mean_ade, s.mean_fde));
    }

    #[test]
    fn baseline_examples() {
        let out = baseline_criterion(&[1.0; 8], 1.0, 0.05, Tail::Upper).unwrap();
        assert_eq!(out, BaselineOutcome { p_value: 1.0, violation: false });

        // population sd of [0.5, 1.5] is 0.5 around mu = 1
        let out = baseline_criterion(&[0.5, 1.5, 0.5, 1.5], 2.0, 0.05, Tail::Upper).unwrap();
        assert!((out.p_value - 0.022_750_131_948_179_2).abs() < 1e-9);
        assert!(out.violation);

        let out = baseline_criterion(&[0.5, 1.5], 0.8, 0.05, Tail::Upper).unwrap();
        assert!(out.p_value > 0.5 && !out.violation);

        assert_eq!(baseline_criterion(&[1.0], 1.0, 0.05, Tail::Upper).unwrap_err(), MetricsError::TooFewSets(1));
    }
}
