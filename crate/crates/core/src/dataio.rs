//! On-disk formats: P5 scene grids with JSON sidecars, track CSV files,
//! sliding-window extraction and suite report persistence.
//!
//! A dataset directory looks like
//!
//! ```text
//! data/
//!   scenes/<scene_id>.pgm
//!   scenes/<scene_id>.json
//!   tracks.csv            scene_id,agent_id,frame,x,y
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::harness::{Baselines, Comparison, SuiteReport, TestCaseReport, SCHEMA_VERSION};
use crate::report::{render_rate_table, RelationSummary};
use crate::transforms::MetamorphicRelation;
use crate::types::{make_test_case, CoreError, Point2, RunConfig, Scene, TestCase, Trajectory};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("cell value {value} is out of range for {num_classes} classes")]
    ClassOutOfRange { value: u8, num_classes: u16 },
    #[error("missing sidecar {0}")]
    MissingSidecar(PathBuf),
    #[error("tracks reference unknown scene '{0}'")]
    UnknownScene(String),
    #[error("report schema version {found} is not supported (expected {SCHEMA_VERSION})")]
    SchemaVersionMismatch { found: u64 },
    #[error(transparent)]
    Core(#[from] CoreError),
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> DataError {
    DataError::Io { path: path.to_path_buf(), message: e.to_string() }
}

// ---------------------------------------------------------------------------
// Scenes

/// Sidecar metadata stored next to each scene grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneMeta {
    pub scene_id: String,
    pub num_classes: u16,
    #[serde(default)]
    pub class_names: Vec<String>,
    pub rescale_factor: f64,
}

/// Decodes a binary graymap. Returns width, height and the raw cells.
pub fn parse_pgm(bytes: &[u8]) -> Result<(usize, usize, Vec<u8>), DataError> {
    let mut pos = 0;
    let mut token = || -> Result<String, DataError> {
        loop {
            match bytes.get(pos) {
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(_) => break,
                None => return Err(DataError::Parse("truncated header".into())),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(|b| !b.is_ascii_whitespace()) {
            pos += 1;
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };
    let magic = token()?;
    if magic != "P5" {
        return Err(DataError::Parse(format!("expected P5 magic, found '{magic}'")));
    }
    let mut number = |what: &str| -> Result<usize, DataError> {
        let t = token()?;
        t.parse().map_err(|_| DataError::Parse(format!("bad {what} '{t}'")))
    };
    let width = number("width")?;
    let height = number("height")?;
    let maxval = number("maxval")?;
    if width == 0 || height == 0 {
        return Err(DataError::Parse(format!("empty image {width}x{height}")));
    }
    if maxval == 0 || maxval > 255 {
        return Err(DataError::Parse(format!("maxval {maxval} is not in 1..=255")));
    }
    // exactly one whitespace byte separates the header from the raster
    let body_start = pos + 1;
    let expected = width * height;
    let body = bytes.get(body_start..).unwrap_or_default();
    if body.len() < expected {
        return Err(DataError::Parse(format!("raster has {} bytes, expected {expected}", body.len())));
    }
    Ok((width, height, body[..expected].to_vec()))
}

pub fn encode_pgm(scene: &Scene) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", scene.width(), scene.height()).into_bytes();
    out.extend_from_slice(scene.cells());
    out
}

pub fn read_sidecar(path: &Path) -> Result<SceneMeta, DataError> {
    if !path.exists() {
        return Err(DataError::MissingSidecar(path.to_path_buf()));
    }
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    serde_json::from_str(&text).map_err(|e| DataError::Parse(format!("{}: {e}", path.display())))
}

pub fn load_scene(grid_path: &Path, sidecar_path: &Path) -> Result<Scene, DataError> {
    let meta = read_sidecar(sidecar_path)?;
    let bytes = fs::read(grid_path).map_err(|e| io_err(grid_path, e))?;
    scene_from_parts(&bytes, &meta)
}

fn scene_from_parts(grid: &[u8], meta: &SceneMeta) -> Result<Scene, DataError> {
    let (width, height, cells) = parse_pgm(grid)?;
    if let Some(&value) = cells.iter().find(|&&c| u16::from(c) >= meta.num_classes) {
        return Err(DataError::ClassOutOfRange { value, num_classes: meta.num_classes });
    }
    Ok(Scene::new(width, height, cells, meta.num_classes, meta.rescale_factor)?)
}

pub fn save_scene(scene: &Scene, meta: &SceneMeta, grid_path: &Path, sidecar_path: &Path) -> Result<(), DataError> {
    fs::write(grid_path, encode_pgm(scene)).map_err(|e| io_err(grid_path, e))?;
    let json = serde_json::to_string_pretty(meta).expect("sidecar serializes");
    fs::write(sidecar_path, json + "\n").map_err(|e| io_err(sidecar_path, e))
}

// ---------------------------------------------------------------------------
// Tracks and windows

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackRecord {
    pub scene_id: String,
    pub agent_id: String,
    pub frame: i64,
    pub x: f64,
    pub y: f64,
}

pub fn read_tracks(path: &Path) -> Result<Vec<TrackRecord>, DataError> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path).map_err(|e| io_err(path, e))?;
    reader
        .deserialize()
        .collect::<Result<Vec<TrackRecord>, _>>()
        .map_err(|e| DataError::Parse(format!("{}: {e}", path.display())))
}

pub fn write_tracks(path: &Path, records: &[TrackRecord]) -> Result<(), DataError> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| io_err(path, e))?;
    for r in records {
        writer.serialize(r).map_err(|e| io_err(path, e))?;
    }
    writer.flush().map_err(|e| io_err(path, e))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowSpec {
    pub observed_len: usize,
    pub horizon: usize,
    pub stride: usize,
    /// Seconds between consecutive points of the produced trajectories.
    pub frame_interval: f64,
}

/// Number of windows a gap-free track of `len` points yields.
pub fn window_count(len: usize, spec: &WindowSpec) -> usize {
    let span = spec.observed_len + spec.horizon;
    if len < span {
        0
    } else {
        (len - span) / spec.stride + 1
    }
}

/// Cuts every agent track into windows of `observed_len` observed points and
/// `horizon` ground-truth points. A track's frame step is its smallest
/// positive frame difference; windows containing a larger step are skipped,
/// as are windows whose points fall outside the scene. Agents are visited in
/// (scene, agent) order.
pub fn extract_windows(
    tracks: &[TrackRecord],
    scenes: &BTreeMap<String, Scene>,
    spec: &WindowSpec,
) -> Result<Vec<TestCase>, DataError> {
    if spec.observed_len == 0 || spec.horizon == 0 || spec.stride == 0 {
        return Err(DataError::Parse("window lengths and stride must be at least 1".into()));
    }
    let mut agents: BTreeMap<(&str, &str), Vec<&TrackRecord>> = BTreeMap::new();
    for r in tracks {
        agents.entry((r.scene_id.as_str(), r.agent_id.as_str())).or_default().push(r);
    }
    let span = spec.observed_len + spec.horizon;
    let mut out = Vec::new();
    for ((scene_id, agent_id), mut recs) in agents {
        let scene = scenes.get(scene_id).ok_or_else(|| DataError::UnknownScene(scene_id.to_string()))?;
        recs.sort_by_key(|r| r.frame);
        let Some(step) = recs.windows(2).map(|w| w[1].frame - w[0].frame).filter(|&d| d > 0).min() else {
            continue;
        };
        let mut start = 0;
        while start + span <= recs.len() {
            let window = &recs[start..start + span];
            let gap_free = window.windows(2).all(|w| w[1].frame - w[0].frame == step);
            if gap_free {
                if let Some(tc) = build_window(scene, scene_id, agent_id, window, spec) {
                    out.push(tc);
                }
            }
            start += spec.stride;
        }
    }
    Ok(out)
}

fn build_window(
    scene: &Scene,
    scene_id: &str,
    agent_id: &str,
    window: &[&TrackRecord],
    spec: &WindowSpec,
) -> Option<TestCase> {
    let pts: Vec<Point2> = window.iter().map(|r| Point2::new(r.x, r.y)).collect();
    let observed = Trajectory::new(pts[..spec.observed_len].to_vec(), spec.frame_interval).ok()?;
    let gt = Trajectory::new(pts[spec.observed_len..].to_vec(), spec.frame_interval).ok()?;
    let id = format!("{scene_id}/{agent_id}/{}", window[0].frame);
    make_test_case(Some(id), scene.clone(), observed, Some(gt), spec.horizon).ok()
}

/// Loads every scene below `dir/scenes`, keyed by scene id.
pub fn load_scenes(dir: &Path) -> Result<BTreeMap<String, Scene>, DataError> {
    let scene_dir = dir.join("scenes");
    let entries = fs::read_dir(&scene_dir).map_err(|e| io_err(&scene_dir, e))?;
    let mut grids: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "pgm"))
        .collect();
    grids.sort();
    let mut scenes = BTreeMap::new();
    for grid in grids {
        let sidecar = grid.with_extension("json");
        let meta = read_sidecar(&sidecar)?;
        let bytes = fs::read(&grid).map_err(|e| io_err(&grid, e))?;
        let scene = scene_from_parts(&bytes, &meta)?;
        scenes.insert(meta.scene_id, scene);
    }
    Ok(scenes)
}

/// Loads a dataset directory and cuts it into test cases.
pub fn load_dataset(dir: &Path, spec: &WindowSpec) -> Result<Vec<TestCase>, DataError> {
    let scenes = load_scenes(dir)?;
    let tracks = read_tracks(&dir.join("tracks.csv"))?;
    extract_windows(&tracks, &scenes, spec)
}

// ---------------------------------------------------------------------------
// Reports

pub const SUMMARY_FILE: &str = "summary.json";
pub const COMPARISONS_FILE: &str = "comparisons.jsonl";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CaseRecord {
    test_case_id: String,
    mr: MetamorphicRelation,
    seed: u64,
    mu_src: f64,
    sigma_src: f64,
    source_pairwise: Vec<f64>,
    violation_counter: usize,
    baselines: Option<Baselines>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct SummaryDoc {
    schema_version: u32,
    sut: String,
    config: RunConfig,
    mrs: Vec<MetamorphicRelation>,
    summary: Vec<RelationSummary>,
    /// Human-readable rendering of `summary`; ignored when reading.
    rate_table: Vec<String>,
    cases: Vec<CaseRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ComparisonRecord {
    test_case_id: String,
    mr: MetamorphicRelation,
    index: usize,
    #[serde(flatten)]
    comparison: Comparison,
}

/// Writes `summary.json` and `comparisons.jsonl` into `dir`, creating it if
/// needed.
pub fn write_report(report: &SuiteReport, dir: &Path) -> Result<(), DataError> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let doc = SummaryDoc {
        schema_version: report.schema_version,
        sut: report.sut.clone(),
        config: report.config.clone(),
        mrs: report.mrs.clone(),
        summary: report.summary.clone(),
        rate_table: render_rate_table(&report.summary).lines().map(str::to_string).collect(),
        cases: report
            .cases
            .iter()
            .map(|c| CaseRecord {
                test_case_id: c.test_case_id.clone(),
                mr: c.mr,
                seed: c.seed,
                mu_src: c.mu_src,
                sigma_src: c.sigma_src,
                source_pairwise: c.source_pairwise.clone(),
                violation_counter: c.violation_counter,
                baselines: c.baselines,
            })
            .collect(),
    };
    let summary_path = dir.join(SUMMARY_FILE);
    let json = serde_json::to_string_pretty(&doc).map_err(|e| io_err(&summary_path, e))?;
    fs::write(&summary_path, json + "\n").map_err(|e| io_err(&summary_path, e))?;

    let comparisons_path = dir.join(COMPARISONS_FILE);
    let file = fs::File::create(&comparisons_path).map_err(|e| io_err(&comparisons_path, e))?;
    let mut w = BufWriter::new(file);
    for c in &report.cases {
        for (index, comparison) in c.comparisons.iter().enumerate() {
            let rec = ComparisonRecord { test_case_id: c.test_case_id.clone(), mr: c.mr, index, comparison: *comparison };
            let line = serde_json::to_string(&rec).map_err(|e| io_err(&comparisons_path, e))?;
            writeln!(w, "{line}").map_err(|e| io_err(&comparisons_path, e))?;
        }
    }
    w.flush().map_err(|e| io_err(&comparisons_path, e))
}

pub fn read_report(dir: &Path) -> Result<SuiteReport, DataError> {
    let summary_path = dir.join(SUMMARY_FILE);
    let text = fs::read_to_string(&summary_path).map_err(|e| io_err(&summary_path, e))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| DataError::Parse(format!("{}: {e}", summary_path.display())))?;
    let found = value.get("schema_version").and_then(|v| v.as_u64()).unwrap_or(0);
    if found != u64::from(SCHEMA_VERSION) {
        return Err(DataError::SchemaVersionMismatch { found });
    }
    let doc: SummaryDoc =
        serde_json::from_value(value).map_err(|e| DataError::Parse(format!("{}: {e}", summary_path.display())))?;

    let comparisons_path = dir.join(COMPARISONS_FILE);
    let file = fs::File::open(&comparisons_path).map_err(|e| io_err(&comparisons_path, e))?;
    let mut by_case: BTreeMap<(String, String), Vec<(usize, Comparison)>> = BTreeMap::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| io_err(&comparisons_path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: ComparisonRecord = serde_json::from_str(&line)
            .map_err(|e| DataError::Parse(format!("{}:{}: {e}", comparisons_path.display(), lineno + 1)))?;
        by_case.entry((rec.test_case_id, rec.mr.to_string())).or_default().push((rec.index, rec.comparison));
    }

    let mut cases = Vec::with_capacity(doc.cases.len());
    for c in doc.cases {
        let mut comps = by_case.remove(&(c.test_case_id.clone(), c.mr.to_string())).unwrap_or_default();
        comps.sort_by_key(|&(i, _)| i);
        if comps.iter().enumerate().any(|(i, &(idx, _))| i != idx) {
            return Err(DataError::Parse(format!("comparisons of case '{}' ({}) are not contiguous", c.test_case_id, c.mr)));
        }
        cases.push(TestCaseReport {
            test_case_id: c.test_case_id,
            mr: c.mr,
            seed: c.seed,
            mu_src: c.mu_src,
            sigma_src: c.sigma_src,
            source_pairwise: c.source_pairwise,
            comparisons: comps.into_iter().map(|(_, c)| c).collect(),
            violation_counter: c.violation_counter,
            baselines: c.baselines,
        });
    }
    if let Some(((id, mr), _)) = by_case.into_iter().next() {
        return Err(DataError::Parse(format!("comparisons reference unknown case '{id}' ({mr})")));
    }
    Ok(SuiteReport {
        schema_version: doc.schema_version,
        sut: doc.sut,
        config: doc.config,
        mrs: doc.mrs,
        summary: doc.summary,
        cases,
    })
}
