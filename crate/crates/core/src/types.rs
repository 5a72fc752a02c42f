//! Domain types shared by every module: points, trajectories, scenes,
//! test cases, prediction sets and the run configuration.
//!
//! Coordinates are continuous pixel units in the scene's grid frame. All
//! types are immutable once validated, so they can be shared freely between
//! worker threads.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default rescale factor of a scene map.
pub const DEFAULT_RESCALE_FACTOR: f64 = 0.25;

/// Default class catalogue for segmentation maps (five area types plus background).
pub const DEFAULT_CLASS_NAMES: [&str; 6] =
    ["background", "road", "pavement", "terrain", "obstacle", "structure"];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CoreError {
    #[error("point {index} ({x}, {y}) lies outside the {width}x{height} scene")]
    OutOfBounds {
        index: usize,
        x: f64,
        y: f64,
        width: usize,
        height: usize,
    },
    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("invalid scene: {0}")]
    InvalidScene(String),
    #[error("invalid trajectory: {0}")]
    InvalidTrajectory(String),
    #[error("invalid prediction set: {0}")]
    InvalidPredictionSet(String),
    #[error("invalid run configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    /// Euclidean distance to `other`.
    pub fn distance(&self, other: &Point2) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        (dx * dx + dy * dy).sqrt()
    }
}

impl From<(f64, f64)> for Point2 {
    fn from((x, y): (f64, f64)) -> Self {
        Self { x, y }
    }
}

/// Ordered sequence of positions sampled at a fixed frame interval.
///
/// `frame_interval` is metadata only; no computation depends on it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    points: Vec<Point2>,
    frame_interval: f64,
}

impl Trajectory {
    pub fn new(points: Vec<Point2>, frame_interval: f64) -> Result<Self, CoreError> {
        if points.is_empty() {
            return Err(CoreError::InvalidTrajectory("trajectory has no points".into()));
        }
        if let Some(i) = points.iter().position(|p| !p.is_finite()) {
            return Err(CoreError::InvalidTrajectory(format!("point {i} is not finite")));
        }
        if !(frame_interval.is_finite() && frame_interval > 0.0) {
            return Err(CoreError::InvalidTrajectory(format!(
                "frame interval must be positive, got {frame_interval}"
            )));
        }
        Ok(Self { points, frame_interval })
    }

    /// Convenience constructor from `(x, y)` tuples.
    pub fn from_xy(xy: &[(f64, f64)], frame_interval: f64) -> Result<Self, CoreError> {
        Self::new(xy.iter().copied().map(Point2::from).collect(), frame_interval)
    }

    pub fn points(&self) -> &[Point2] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn frame_interval(&self) -> f64 {
        self.frame_interval
    }

    pub fn last(&self) -> Point2 {
        // non-empty by construction
        self.points[self.points.len() - 1]
    }

    /// Applies `f` to every point, re-validating finiteness.
    pub fn map_points(&self, f: impl Fn(Point2) -> Point2) -> Result<Self, CoreError> {
        Self::new(self.points.iter().map(|&p| f(p)).collect(), self.frame_interval)
    }
}

/// Segmentation map: a row-major grid of class ids plus its rescale factor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    width: usize,
    height: usize,
    cells: Vec<u8>,
    num_classes: u16,
    rescale_factor: f64,
}

impl Scene {
    pub fn new(
        width: usize,
        height: usize,
        cells: Vec<u8>,
        num_classes: u16,
        rescale_factor: f64,
    ) -> Result<Self, CoreError> {
        if width == 0 || height == 0 {
            return Err(CoreError::InvalidScene(format!(
                "dimensions must be positive, got {width}x{height}"
            )));
        }
        if num_classes == 0 || num_classes > 256 {
            return Err(CoreError::InvalidScene(format!(
                "num_classes must be in 1..=256, got {num_classes}"
            )));
        }
        if cells.len() != width * height {
            return Err(CoreError::InvalidScene(format!(
                "expected {} cells, got {}",
                width * height,
                cells.len()
            )));
        }
        if let Some(c) = cells.iter().find(|&&c| u16::from(c) >= num_classes) {
            return Err(CoreError::InvalidScene(format!(
                "class id {c} out of range for {num_classes} classes"
            )));
        }
        if !(rescale_factor.is_finite() && rescale_factor > 0.0) {
            return Err(CoreError::InvalidScene(format!(
                "rescale factor must be finite and positive, got {rescale_factor}"
            )));
        }
        Ok(Self { width, height, cells, num_classes, rescale_factor })
    }

    /// A scene filled with a single class.
    pub fn filled(
        width: usize,
        height: usize,
        class: u8,
        num_classes: u16,
        rescale_factor: f64,
    ) -> Result<Self, CoreError> {
        Self::new(width, height, vec![class; width * height], num_classes, rescale_factor)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn cells(&self) -> &[u8] {
        &self.cells
    }

    pub fn num_classes(&self) -> u16 {
        self.num_classes
    }

    pub fn rescale_factor(&self) -> f64 {
        self.rescale_factor
    }

    /// Class id at `(row, col)`.
    pub fn class_at(&self, row: usize, col: usize) -> u8 {
        self.cells[row * self.width + col]
    }

    /// True when `p` lies in `[0, width) x [0, height)`.
    pub fn contains(&self, p: Point2) -> bool {
        p.x >= 0.0 && p.y >= 0.0 && p.x < self.width as f64 && p.y < self.height as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestCase {
    id: String,
    scene: Scene,
    observed: Trajectory,
    ground_truth: Option<Trajectory>,
    horizon: usize,
}

impl TestCase {
    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn scene(&self) -> &Scene {
        &self.scene
    }

    pub fn observed(&self) -> &Trajectory {
        &self.observed
    }

    pub fn ground_truth(&self) -> Option<&Trajectory> {
        self.ground_truth.as_ref()
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }
}

/// Builds a validated test case. When `id` is `None`, a content-derived id is
/// generated so that identical inputs always receive identical ids.
pub fn make_test_case(
    id: Option<String>,
    scene: Scene,
    observed: Trajectory,
    ground_truth: Option<Trajectory>,
    horizon: usize,
) -> Result<TestCase, CoreError> {
    if horizon == 0 {
        return Err(CoreError::InvalidConfig("horizon must be at least 1".into()));
    }
    for (index, p) in observed.points().iter().enumerate() {
        if !scene.contains(*p) {
            return Err(CoreError::OutOfBounds {
                index,
                x: p.x,
                y: p.y,
                width: scene.width(),
                height: scene.height(),
            });
        }
    }
    if let Some(gt) = &ground_truth {
        if gt.len() != horizon {
            return Err(CoreError::LengthMismatch { expected: horizon, actual: gt.len() });
        }
    }
    let id = id.unwrap_or_else(|| content_id(&scene, &observed, horizon));
    Ok(TestCase { id, scene, observed, ground_truth, horizon })
}

fn content_id(scene: &Scene, observed: &Trajectory, horizon: usize) -> String {
    let mut h = Fnv1a::default();
    h.write(&(scene.width() as u64).to_le_bytes());
    h.write(&(scene.height() as u64).to_le_bytes());
    h.write(scene.cells());
    h.write(&scene.rescale_factor().to_bits().to_le_bytes());
    for p in observed.points() {
        h.write(&p.x.to_bits().to_le_bytes());
        h.write(&p.y.to_bits().to_le_bytes());
    }
    h.write(&(horizon as u64).to_le_bytes());
    format!("tc-{:016x}", h.finish())
}

/// 64-bit FNV-1a. Stable across platforms and toolchains, unlike `DefaultHasher`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Fnv1a(u64);

impl Default for Fnv1a {
    fn default() -> Self {
        Self(0xcbf2_9ce4_8422_2325)
    }
}

impl Fnv1a {
    pub(crate) fn write(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.0 ^= u64::from(b);
            self.0 = self.0.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }

    pub(crate) fn finish(&self) -> u64 {
        self.0
    }
}

/// The K sampled futures returned by one predictor invocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionSet {
    trajectories: Vec<Trajectory>,
}

impl PredictionSet {
    pub fn new(trajectories: Vec<Trajectory>) -> Result<Self, CoreError> {
        let Some(first) = trajectories.first() else {
            return Err(CoreError::InvalidPredictionSet("set is empty".into()));
        };
        let horizon = first.len();
        if let Some(bad) = trajectories.iter().find(|t| t.len() != horizon) {
            return Err(CoreError::LengthMismatch { expected: horizon, actual: bad.len() });
        }
        Ok(Self { trajectories })
    }

    pub fn trajectories(&self) -> &[Trajectory] {
        &self.trajectories
    }

    /// Number of sampled trajectories (K).
    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    /// Common trajectory length (T).
    pub fn horizon(&self) -> usize {
        self.trajectories[0].len()
    }

    pub fn map_points(&self, f: impl Fn(Point2) -> Point2) -> Result<Self, CoreError> {
        let trajectories = self
            .trajectories
            .iter()
            .map(|t| t.map_points(&f))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { trajectories })
    }
}

/// Forecasting regime: observed length, horizon and sampling interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Setting {
    /// 3.2 s history at 2.5 FPS, 4.8 s horizon.
    Short,
    /// 5 s history at 1 FPS, 30 s horizon.
    Long,
}

impl Setting {
    pub fn observed_len(self) -> usize {
        match self {
            Setting::Short => 8,
            Setting::Long => 5,
        }
    }

    pub fn horizon(self) -> usize {
        match self {
            Setting::Short => 12,
            Setting::Long => 30,
        }
    }

    pub fn frame_interval(self) -> f64 {
        match self {
            Setting::Short => 0.4,
            Setting::Long => 1.0,
        }
    }
}

impl std::str::FromStr for Setting {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "short" => Ok(Setting::Short),
            "long" => Ok(Setting::Long),
            other => Err(CoreError::InvalidConfig(format!("unknown setting '{other}'"))),
        }
    }
}

/// Sidedness of the z-test used by every violation criterion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Tail {
    /// Only larger-than-null values are significant.
    #[default]
    Upper,
    TwoSided,
}

/// Coordinate frame in which follow-up and source predictions are compared.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ComparisonFrame {
    /// Follow-up predictions are mapped back into the source frame.
    #[default]
    Source,
    /// Source predictions are transformed forward into the follow-up frame.
    FollowUp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    /// Source prediction repetitions (N).
    pub n: usize,
    /// Samples per prediction (K).
    pub k: usize,
    pub p_threshold: f64,
    pub seed: u64,
    pub horizon: usize,
    pub observed_len: usize,
    pub tail: Tail,
    pub frame: ComparisonFrame,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self::for_setting(Setting::Short)
    }
}

impl RunConfig {
    pub fn for_setting(setting: Setting) -> Self {
        Self {
            n: 8,
            k: 20,
            p_threshold: 0.05,
            seed: 0,
            horizon: setting.horizon(),
            observed_len: setting.observed_len(),
            tail: Tail::Upper,
            frame: ComparisonFrame::Source,
        }
    }

    pub fn validate(&self) -> Result<(), CoreError> {
        if self.n < 2 {
            return Err(CoreError::InvalidConfig(format!("N must be at least 2, got {}", self.n)));
        }
        if self.k == 0 {
            return Err(CoreError::InvalidConfig("K must be at least 1".into()));
        }
        if !(self.p_threshold > 0.0 && self.p_threshold < 1.0) {
            return Err(CoreError::InvalidConfig(format!(
                "p threshold must lie in (0, 1), got {}",
                self.p_threshold
            )));
        }
        if self.horizon == 0 || self.observed_len == 0 {
            return Err(CoreError::InvalidConfig("horizon and observed length must be positive".into()));
        }
        Ok(())
    }
}
