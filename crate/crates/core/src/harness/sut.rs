//! The predictor-under-test abstraction and the built-in synthetic
//! predictors used for calibration and fault injection.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::types::{Point2, PredictionSet, TestCase, Trajectory, DEFAULT_RESCALE_FACTOR};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SutError {
    #[error("observed history has {0} points, need at least 2")]
    TooShortHistory(usize),
    #[error("scene has no walkable cells")]
    NoWalkableCells,
    #[error("unknown SUT '{0}'")]
    UnknownSut(String),
    #[error("{0}")]
    Failed(String),
}

/// A stochastic trajectory predictor.
///
/// Implementations must return exactly `k` trajectories of length
/// `tc.horizon()`, and should be reproducible for a given `seed`.
pub trait Sut: Send + Sync {
    fn name(&self) -> &str;

    fn deterministic_given_seed(&self) -> bool {
        true
    }

    /// Whether `predict` may be called from several threads at once.
    fn concurrent_safe(&self) -> bool {
        true
    }

    fn predict(&self, tc: &TestCase, k: usize, seed: u64) -> Result<PredictionSet, SutError>;
}

impl<S: Sut + ?Sized> Sut for Box<S> {
    fn name(&self) -> &str {
        (**self).name()
    }

    fn deterministic_given_seed(&self) -> bool {
        (**self).deterministic_given_seed()
    }

    fn concurrent_safe(&self) -> bool {
        (**self).concurrent_safe()
    }

    fn predict(&self, tc: &TestCase, k: usize, seed: u64) -> Result<PredictionSet, SutError> {
        (**self).predict(tc, k, seed)
    }
}

/// Ratio between the scene's current rescale factor and `reference`.
fn frame_ratio(tc: &TestCase, reference: f64) -> f64 {
    tc.scene().rescale_factor() / reference
}

fn gaussian(rng: &mut ChaCha8Rng, sd: f64) -> Point2 {
    let x: f64 = rng.sample(StandardNormal);
    let y: f64 = rng.sample(StandardNormal);
    Point2::new(sd * x, sd * y)
}

fn to_set(samples: Vec<Vec<Point2>>, frame_interval: f64) -> Result<PredictionSet, SutError> {
    let trajectories = samples
        .into_iter()
        .map(|pts| Trajectory::new(pts, frame_interval))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| SutError::Failed(e.to_string()))?;
    PredictionSet::new(trajectories).map_err(|e| SutError::Failed(e.to_string()))
}

/// Constant-velocity extrapolation with isotropic Gaussian noise per step.
fn constant_velocity(
    tc: &TestCase,
    k: usize,
    seed: u64,
    noise_sd: f64,
    drift: Point2,
) -> Result<PredictionSet, SutError> {
    let obs = tc.observed().points();
    if obs.len() < 2 {
        return Err(SutError::TooShortHistory(obs.len()));
    }
    let last = obs[obs.len() - 1];
    let prev = obs[obs.len() - 2];
    let v = Point2::new(last.x - prev.x, last.y - prev.y);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples = (0..k)
        .map(|_| {
            (1..=tc.horizon())
                .map(|t| {
                    let t = t as f64;
                    let e = gaussian(&mut rng, noise_sd);
                    Point2::new(last.x + t * (v.x + drift.x) + e.x, last.y + t * (v.y + drift.y) + e.y)
                })
                .collect()
        })
        .collect();
    to_set(samples, tc.observed().frame_interval())
}

/// Constant-velocity predictor. With `scale_noise_with_frame` the noise
/// standard deviation follows the scene's scale ratio relative to the
/// default rescale factor, which makes the predictor equivariant under
/// rescaling.
pub fn cvg_predict(
    tc: &TestCase,
    k: usize,
    seed: u64,
    noise_scale: f64,
    scale_noise_with_frame: bool,
) -> Result<PredictionSet, SutError> {
    let sd = if scale_noise_with_frame {
        noise_scale * frame_ratio(tc, DEFAULT_RESCALE_FACTOR)
    } else {
        noise_scale
    };
    constant_velocity(tc, k, seed, sd, Point2::default())
}

/// Constant-velocity predictor plus a cumulative drift in a fixed image
/// direction; the drift does not follow mirroring, so the predictor breaks
/// mirror equivariance by construction.
pub fn biased_predict(
    tc: &TestCase,
    k: usize,
    seed: u64,
    drift: Point2,
    noise_scale: f64,
) -> Result<PredictionSet, SutError> {
    let sd = noise_scale * frame_ratio(tc, DEFAULT_RESCALE_FACTOR);
    constant_velocity(tc, k, seed, sd, drift)
}

/// Map-aware predictor: each sample walks in a straight line towards a goal
/// cell drawn uniformly from the walkable cells within `radius` of the last
/// observed point (the nearest walkable cells when none is in range).
///
/// Cell `(row, col)` is targeted at the point `(col, row)`, the point that the
/// mirror formulas send to the mirrored cell.
pub fn goal_predict(
    tc: &TestCase,
    k: usize,
    seed: u64,
    walkable: &[u8],
    noise_scale: f64,
    radius: f64,
) -> Result<PredictionSet, SutError> {
    let scene = tc.scene();
    let ratio = frame_ratio(tc, DEFAULT_RESCALE_FACTOR);
    let last = tc.observed().last();
    let cells: Vec<(Point2, f64)> = (0..scene.height())
        .flat_map(|row| (0..scene.width()).map(move |col| (row, col)))
        .filter(|&(row, col)| walkable.contains(&scene.class_at(row, col)))
        .map(|(row, col)| {
            let p = Point2::new(col as f64, row as f64);
            (p, p.distance(&last))
        })
        .collect();
    if cells.is_empty() {
        return Err(SutError::NoWalkableCells);
    }
    let reach = radius * ratio;
    let mut goals: Vec<Point2> = cells.iter().filter(|(_, d)| *d <= reach).map(|(p, _)| *p).collect();
    if goals.is_empty() {
        let nearest = cells.iter().map(|(_, d)| *d).fold(f64::INFINITY, f64::min);
        goals = cells.iter().filter(|(_, d)| *d == nearest).map(|(p, _)| *p).collect();
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let horizon = tc.horizon() as f64;
    let sd = noise_scale * ratio;
    let samples = (0..k)
        .map(|_| {
            let goal = goals[rng.random_range(0..goals.len())];
            (1..=tc.horizon())
                .map(|t| {
                    let f = t as f64 / horizon;
                    let e = gaussian(&mut rng, sd);
                    Point2::new(last.x + (goal.x - last.x) * f + e.x, last.y + (goal.y - last.y) * f + e.y)
                })
                .collect()
        })
        .collect();
    to_set(samples, tc.observed().frame_interval())
}

/// Default noise scale of the synthetic predictors, in pixels per step.
pub const DEFAULT_NOISE_SCALE: f64 = 1.0;

#[derive(Debug, Clone, PartialEq)]
pub struct ConstantVelocitySut {
    pub noise_scale: f64,
    pub scale_noise_with_frame: bool,
}

impl Default for ConstantVelocitySut {
    fn default() -> Self {
        Self { noise_scale: DEFAULT_NOISE_SCALE, scale_noise_with_frame: true }
    }
}

impl Sut for ConstantVelocitySut {
    fn name(&self) -> &str {
        "builtin:cvg"
    }

    fn predict(&self, tc: &TestCase, k: usize, seed: u64) -> Result<PredictionSet, SutError> {
        cvg_predict(tc, k, seed, self.noise_scale, self.scale_noise_with_frame)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BiasedSut {
    pub noise_scale: f64,
    pub drift: Point2,
}

impl Default for BiasedSut {
    fn default() -> Self {
        let d = 2.0 * DEFAULT_NOISE_SCALE;
        Self { noise_scale: DEFAULT_NOISE_SCALE, drift: Point2::new(d, d) }
    }
}

impl Sut for BiasedSut {
    fn name(&self) -> &str {
        "builtin:biased"
    }

    fn predict(&self, tc: &TestCase, k: usize, seed: u64) -> Result<PredictionSet, SutError> {
        biased_predict(tc, k, seed, self.drift, self.noise_scale)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GoalSut {
    pub walkable: Vec<u8>,
    pub noise_scale: f64,
    pub radius: f64,
}

impl Default for GoalSut {
    fn default() -> Self {
        // road, pavement, terrain
        Self { walkable: vec![1, 2, 3], noise_scale: DEFAULT_NOISE_SCALE, radius: 30.0 }
    }
}

impl Sut for GoalSut {
    fn name(&self) -> &str {
        "builtin:goal"
    }

    fn predict(&self, tc: &TestCase, k: usize, seed: u64) -> Result<PredictionSet, SutError> {
        goal_predict(tc, k, seed, &self.walkable, self.noise_scale, self.radius)
    }
}

/// Noise-free constant-velocity predictor: K copies of the straight-line
/// continuation. Used as the reference peer of the wire protocol.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EchoSut;

impl Sut for EchoSut {
    fn name(&self) -> &str {
        "builtin:echo"
    }

    fn predict(&self, tc: &TestCase, k: usize, seed: u64) -> Result<PredictionSet, SutError> {
        cvg_predict(tc, k, seed, 0.0, false)
    }
}

/// Resolves `builtin:<name>[?key=value&...]`.
///
/// Keys: `noise` (all), `frame_noise` (cvg), `dx`/`dy` (biased),
/// `walkable` as `+`-separated class ids and `radius` (goal).
pub fn builtin_sut(spec: &str) -> Result<Box<dyn Sut>, SutError> {
    let unknown = || SutError::UnknownSut(spec.to_string());
    let rest = spec.strip_prefix("builtin:").ok_or_else(unknown)?;
    let (name, query) = rest.split_once('?').unwrap_or((rest, ""));
    let mut params = Vec::new();
    for pair in query.split('&').filter(|p| !p.is_empty()) {
        let (k, v) = pair.split_once('=').ok_or_else(unknown)?;
        params.push((k, v));
    }
    let num = |v: &str| v.parse::<f64>().ok().filter(|x| x.is_finite()).ok_or_else(unknown);

    match name {
        "cvg" => {
            let mut sut = ConstantVelocitySut::default();
            for (k, v) in params {
                match k {
                    "noise" => sut.noise_scale = num(v)?,
                    "frame_noise" => sut.scale_noise_with_frame = v.parse().map_err(|_| unknown())?,
                    _ => return Err(unknown()),
                }
            }
            Ok(Box::new(sut))
        }
        "biased" => {
            let mut sut = BiasedSut::default();
            for (k, v) in params {
                match k {
                    "noise" => sut.noise_scale = num(v)?,
                    "dx" => sut.drift.x = num(v)?,
                    "dy" => sut.drift.y = num(v)?,
                    _ => return Err(unknown()),
                }
            }
            Ok(Box::new(sut))
        }
        "goal" => {
            let mut sut = GoalSut::default();
            for (k, v) in params {
                match k {
                    "noise" => sut.noise_scale = num(v)?,
                    "radius" => sut.radius = num(v)?,
                    "walkable" => {
                        sut.walkable = v
                            .split('+')
                            .map(|c| c.parse::<u8>().map_err(|_| unknown()))
                            .collect::<Result<_, _>>()?
                    }
                    _ => return Err(unknown()),
                }
            }
            Ok(Box::new(sut))
        }
        "echo" if params.is_empty() => Ok(Box::new(EchoSut)),
        _ => Err(unknown()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{make_test_case, Scene};

    fn case(obs: &[(f64, f64)], horizon: usize, scene: Scene) -> TestCase {
        make_test_case(None, scene, Trajectory::from_xy(obs, 0.4).unwrap(), None, horizon).unwrap()
    }

    fn open_scene() -> Scene {
        Scene::filled(50, 50, 2, 6, DEFAULT_RESCALE_FACTOR).unwrap()
    }

    fn xy(set: &PredictionSet, i: usize) -> Vec<(f64, f64)> {
        set.trajectories()[i].points().iter().map(|p| (p.x, p.y)).collect()
    }

    #[test]
    fn zero_noise_cvg_extrapolates() {
        let tc = case(&[(0.0, 0.0), (1.0, 0.0)], 3, open_scene());
        let set = cvg_predict(&tc, 4, 9, 0.0, true).unwrap();
        assert_eq!(set.len(), 4);
        for i in 0..4 {
            assert_eq!(xy(&set, i), vec![(2.0, 0.0), (3.0, 0.0), (4.0, 0.0)]);
        }
    }

    #[test]
    fn cvg_is_seed_deterministic() {
        let tc = case(&[(5.0, 5.0), (6.0, 5.5)], 12, open_scene());
        assert_eq!(cvg_predict(&tc, 20, 42, 1.0, true).unwrap(), cvg_predict(&tc, 20, 42, 1.0, true).unwrap());
        assert_ne!(cvg_predict(&tc, 20, 42, 1.0, true).unwrap(), cvg_predict(&tc, 20, 43, 1.0, true).unwrap());
    }

    #[test]
    fn cvg_needs_two_observations() {
        let tc = case(&[(5.0, 5.0)], 12, open_scene());
        assert_eq!(cvg_predict(&tc, 2, 0, 1.0, true).unwrap_err(), SutError::TooShortHistory(1));
    }

    #[test]
    fn biased_reduces_to_cvg_without_drift() {
        let tc = case(&[(5.0, 5.0), (6.0, 5.5)], 12, open_scene());
        assert_eq!(
            biased_predict(&tc, 20, 3, Point2::default(), 1.0).unwrap(),
            cvg_predict(&tc, 20, 3, 1.0, true).unwrap()
        );
    }

    #[test]
    fn biased_drift_accumulates() {
        let tc = case(&[(0.0, 0.0), (1.0, 0.0)], 3, open_scene());
        let set = biased_predict(&tc, 1, 0, Point2::new(1.0, 0.0), 0.0).unwrap();
        assert_eq!(xy(&set, 0), vec![(3.0, 0.0), (5.0, 0.0), (7.0, 0.0)]);
    }

    #[test]
    fn single_walkable_cell_is_the_goal() {
        let mut cells = vec![0u8; 20 * 10];
        cells[7 * 20 + 13] = 2;
        let scene = Scene::new(20, 10, cells, 6, DEFAULT_RESCALE_FACTOR).unwrap();
        let tc = case(&[(1.0, 1.0), (2.0, 1.0)], 5, scene);
        let set = goal_predict(&tc, 6, 1, &[2], 0.0, 3.0).unwrap();
        for t in set.trajectories() {
            let end = t.last();
            assert!((end.x - 13.0).abs() < 1e-12 && (end.y - 7.0).abs() < 1e-12);
        }
    }

    #[test]
    fn background_only_scene_has_no_walkable_cells() {
        let scene = Scene::filled(10, 10, 0, 6, DEFAULT_RESCALE_FACTOR).unwrap();
        let tc = case(&[(1.0, 1.0), (2.0, 1.0)], 5, scene);
        assert_eq!(goal_predict(&tc, 2, 0, &[1, 2, 3], 1.0, 10.0).unwrap_err(), SutError::NoWalkableCells);
    }

    #[test]
    fn builtin_specs() {
        assert_eq!(builtin_sut("builtin:cvg").unwrap().name(), "builtin:cvg");
        assert_eq!(builtin_sut("builtin:biased?dx=4&dy=0").unwrap().name(), "builtin:biased");
        assert_eq!(builtin_sut("builtin:goal?walkable=2+3&radius=12").unwrap().name(), "builtin:goal");
        assert!(builtin_sut("builtin:cvg?frame_noise=false&noise=0.5").is_ok());
        assert!(matches!(builtin_sut("builtin:ynet"), Err(SutError::UnknownSut(_))));
        assert!(builtin_sut("builtin:cvg?noise=x").is_err());
        assert!(builtin_sut("cvg").is_err());
    }
}
