//! Metamorphic relations over test cases: mirroring and rescaling.
//!
//! Every relation acts on three things with the same point formula: the
//! input test case (map + observed trajectory + ground truth), predictions
//! made in the source frame, and (inversely) predictions made in the
//! follow-up frame.
//!
//! `MirrorV` flips across the vertical axis (`x' = (W-1) - x`), `MirrorH`
//! flips across the horizontal axis (`y' = (H-1) - y`). `Rescale(r)` changes
//! the map's rescale factor to `r`, scaling coordinates by
//! `s = r / scene.rescale_factor`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::types::{make_test_case, CoreError, Point2, PredictionSet, Scene, TestCase};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TransformError {
    #[error("rescaled scene would be {height}x{width}")]
    DegenerateScene { width: usize, height: usize },
    #[error("invalid metamorphic relation '{0}'")]
    InvalidRelation(String),
    #[error(transparent)]
    Core(#[from] CoreError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MetamorphicRelation {
    /// Flip across the horizontal axis (row order reversed).
    MirrorH,
    /// Flip across the vertical axis (column order reversed).
    MirrorV,
    /// Change the map's rescale factor to the given target.
    Rescale(f64),
}

impl MetamorphicRelation {
    pub fn rescale(target: f64) -> Result<Self, TransformError> {
        if target.is_finite() && target > 0.0 {
            Ok(Self::Rescale(target))
        } else {
            Err(TransformError::InvalidRelation(format!("rescale:{target}")))
        }
    }

    pub fn is_mirror(&self) -> bool {
        matches!(self, Self::MirrorH | Self::MirrorV)
    }

    /// Coordinate scale ratio this relation applies to `scene` (1 for mirrors).
    pub fn scale_ratio(&self, scene: &Scene) -> f64 {
        match *self {
            Self::Rescale(r) => r / scene.rescale_factor(),
            _ => 1.0,
        }
    }

    fn forward_point(&self, scene: &Scene) -> impl Fn(Point2) -> Point2 {
        let mr = *self;
        let w1 = scene.width() as f64 - 1.0;
        let h1 = scene.height() as f64 - 1.0;
        let s = self.scale_ratio(scene);
        move |p| match mr {
            Self::MirrorV => Point2::new(w1 - p.x, p.y),
            Self::MirrorH => Point2::new(p.x, h1 - p.y),
            Self::Rescale(_) => Point2::new(p.x * s, p.y * s),
        }
    }

    fn inverse_point(&self, scene: &Scene) -> impl Fn(Point2) -> Point2 {
        let mr = *self;
        let forward = self.forward_point(scene);
        let s = self.scale_ratio(scene);
        move |p| match mr {
            Self::Rescale(_) => Point2::new(p.x / s, p.y / s),
            _ => forward(p),
        }
    }
}

impl fmt::Display for MetamorphicRelation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::MirrorH => f.write_str("mirror-h"),
            Self::MirrorV => f.write_str("mirror-v"),
            Self::Rescale(r) => write!(f, "rescale:{r}"),
        }
    }
}

impl FromStr for MetamorphicRelation {
    type Err = TransformError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "mirror-h" => Ok(Self::MirrorH),
            "mirror-v" => Ok(Self::MirrorV),
            other => {
                let factor = other
                    .strip_prefix("rescale:")
                    .and_then(|v| v.parse::<f64>().ok())
                    .ok_or_else(|| TransformError::InvalidRelation(other.to_string()))?;
                Self::rescale(factor)
            }
        }
    }
}

/// Parses a comma-separated relation list such as `mirror-v,rescale:0.2`.
pub fn parse_relation_list(s: &str) -> Result<Vec<MetamorphicRelation>, TransformError> {
    s.split(',').filter(|p| !p.trim().is_empty()).map(str::parse).collect()
}

impl Serialize for MetamorphicRelation {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for MetamorphicRelation {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Builds the follow-up test case. The ground truth, when present, is moved
/// with the same formula as the observed trajectory.
pub fn transform_input(mr: MetamorphicRelation, tc: &TestCase) -> Result<TestCase, TransformError> {
    let scene = tc.scene();
    let map = mr.forward_point(scene);
    let new_scene = transform_scene(mr, scene)?;
    let observed = tc.observed().map_points(&map)?;
    let ground_truth = tc.ground_truth().map(|gt| gt.map_points(&map)).transpose()?;
    Ok(make_test_case(Some(tc.id().to_string()), new_scene, observed, ground_truth, tc.horizon())?)
}

fn transform_scene(mr: MetamorphicRelation, scene: &Scene) -> Result<Scene, TransformError> {
    let (w, h) = (scene.width(), scene.height());
    let cells = scene.cells();
    match mr {
        MetamorphicRelation::MirrorV => {
            let flipped = cells
                .chunks_exact(w)
                .flat_map(|row| row.iter().rev().copied())
                .collect();
            Ok(Scene::new(w, h, flipped, scene.num_classes(), scene.rescale_factor())?)
        }
        MetamorphicRelation::MirrorH => {
            let flipped = cells.chunks_exact(w).rev().flatten().copied().collect();
            Ok(Scene::new(w, h, flipped, scene.num_classes(), scene.rescale_factor())?)
        }
        MetamorphicRelation::Rescale(target) => {
            let s = mr.scale_ratio(scene);
            let new_w = (w as f64 * s).round() as usize;
            let new_h = (h as f64 * s).round() as usize;
            if new_w == 0 || new_h == 0 {
                return Err(TransformError::DegenerateScene { width: new_w, height: new_h });
            }
            // nearest neighbour: sample the source cell under each target cell centre
            let src_index = |i: usize, n_new: usize, n_old: usize| {
                (((i as f64 + 0.5) * n_old as f64 / n_new as f64) as usize).min(n_old - 1)
            };
            let cols: Vec<usize> = (0..new_w).map(|j| src_index(j, new_w, w)).collect();
            let mut resampled = Vec::with_capacity(new_w * new_h);
            for i in 0..new_h {
                let row = src_index(i, new_h, h);
                resampled.extend(cols.iter().map(|&col| scene.class_at(row, col)));
            }
            Ok(Scene::new(new_w, new_h, resampled, scene.num_classes(), target)?)
        }
    }
}

/// Maps predictions made in the source frame into the follow-up frame.
pub fn transform_output(
    mr: MetamorphicRelation,
    preds: &PredictionSet,
    source_scene: &Scene,
) -> Result<PredictionSet, TransformError> {
    Ok(preds.map_points(mr.forward_point(source_scene))?)
}

/// Maps predictions made in the follow-up frame back into the source frame.
pub fn inverse_transform_output(
    mr: MetamorphicRelation,
    preds: &PredictionSet,
    source_scene: &Scene,
) -> Result<PredictionSet, TransformError> {
    Ok(preds.map_points(mr.inverse_point(source_scene))?)
}
