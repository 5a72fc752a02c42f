//! Newline-delimited JSON protocol for running external predictors under test.
//!
//! Every frame is one JSON object on one UTF-8 line, tagged by `type`:
//!
//! ```text
//! > {"type":"hello","id":"0","protocol_version":1}
//! < {"type":"hello","id":"0","protocol_version":1,"sut":"ynet","deterministic_given_seed":true}
//! > {"type":"predict_request","id":"1","scene":{...},"observed":[[x,y],...],"horizon":12,"k":20,"seed":7}
//! < {"type":"predict_response","id":"1","trajectories":[[[x,y],...],...]}
//! < {"type":"error","id":"1","message":"model load failed"}
//! ```
//!
//! Scene cells travel as base64 of one byte per cell, row-major. A connection
//! carries at most one outstanding request.

mod client;
pub mod conformance;
mod server;

use base64::Engine as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::{make_test_case, Point2, PredictionSet, Scene, TestCase, Trajectory};

pub use client::{handshake, remote_predict, Capabilities, Connection, RemoteSut, DEFAULT_TIMEOUT};
pub use server::serve;

pub const PROTOCOL_VERSION: u32 = 1;

/// Largest scene accepted on the wire, in cells.
pub const MAX_MAP_CELLS: usize = 16 * 1024 * 1024;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProtocolError {
    #[error("peer speaks protocol version {got}, expected {PROTOCOL_VERSION}")]
    VersionMismatch { got: u32 },
    #[error("timed out waiting for the peer")]
    Timeout,
    #[error("connection closed by peer")]
    Closed,
    #[error("malformed frame: {0}")]
    MalformedResponse(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("remote error: {0}")]
    RemoteError(String),
    #[error("scene of {0} cells exceeds the 16 MiB limit")]
    MapTooLarge(usize),
    #[error("invalid SUT address '{0}'")]
    BadUri(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for ProtocolError {
    fn from(e: std::io::Error) -> Self {
        ProtocolError::Io(e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Frame {
    Hello(Hello),
    PredictRequest(PredictRequest),
    PredictResponse(PredictResponse),
    Error(ErrorFrame),
}

impl Frame {
    pub fn id(&self) -> &str {
        match self {
            Frame::Hello(f) => &f.id,
            Frame::PredictRequest(f) => &f.id,
            Frame::PredictResponse(f) => &f.id,
            Frame::Error(f) => &f.id,
        }
    }

    pub fn to_line(&self) -> String {
        // serialization of these plain structs cannot fail
        serde_json::to_string(self).expect("frame serializes")
    }

    pub fn from_line(line: &str) -> Result<Self, ProtocolError> {
        serde_json::from_str(line).map_err(|e| ProtocolError::MalformedResponse(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hello {
    pub id: String,
    pub protocol_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sut: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deterministic_given_seed: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireScene {
    pub width: usize,
    pub height: usize,
    pub num_classes: u16,
    pub rescale_factor: f64,
    /// base64, one byte per cell, row-major.
    pub cells: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictRequest {
    pub id: String,
    pub scene: WireScene,
    pub observed: Vec<[f64; 2]>,
    pub horizon: usize,
    pub k: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictResponse {
    pub id: String,
    /// K x T x 2.
    pub trajectories: Vec<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorFrame {
    #[serde(default)]
    pub id: String,
    pub message: String,
}

impl PredictRequest {
    pub fn from_test_case(id: String, tc: &TestCase, k: usize, seed: u64) -> Result<Self, ProtocolError> {
        let scene = tc.scene();
        if scene.cells().len() > MAX_MAP_CELLS {
            return Err(ProtocolError::MapTooLarge(scene.cells().len()));
        }
        Ok(Self {
            id,
            scene: WireScene {
                width: scene.width(),
                height: scene.height(),
                num_classes: scene.num_classes(),
                rescale_factor: scene.rescale_factor(),
                cells: base64::engine::general_purpose::STANDARD.encode(scene.cells()),
            },
            observed: tc.observed().points().iter().map(|p| [p.x, p.y]).collect(),
            horizon: tc.horizon(),
            k,
            seed,
        })
    }

    /// Rebuilds the test case on the predictor side. The frame interval is not
    /// transmitted and is set to 1.
    pub fn to_test_case(&self) -> Result<TestCase, String> {
        let cells = base64::engine::general_purpose::STANDARD
            .decode(&self.scene.cells)
            .map_err(|e| format!("bad scene cells: {e}"))?;
        if cells.len() > MAX_MAP_CELLS {
            return Err(format!("scene of {} cells exceeds the 16 MiB limit", cells.len()));
        }
        let scene = Scene::new(
            self.scene.width,
            self.scene.height,
            cells,
            self.scene.num_classes,
            self.scene.rescale_factor,
        )
        .map_err(|e| e.to_string())?;
        let observed = Trajectory::new(self.observed.iter().map(|&[x, y]| Point2::new(x, y)).collect(), 1.0)
            .map_err(|e| e.to_string())?;
        make_test_case(Some(self.id.clone()), scene, observed, None, self.horizon).map_err(|e| e.to_string())
    }
}

impl PredictResponse {
    pub fn from_set(id: String, set: &PredictionSet) -> Self {
        let trajectories =
            set.trajectories().iter().map(|t| t.points().iter().map(|p| vec![p.x, p.y]).collect()).collect();
        Self { id, trajectories }
    }

    /// Checks the K x T x 2 shape and converts to a prediction set.
    pub fn to_set(&self, k: usize, horizon: usize, frame_interval: f64) -> Result<PredictionSet, ProtocolError> {
        if self.trajectories.len() != k {
            return Err(ProtocolError::DimensionMismatch(format!(
                "expected {k} trajectories, got {}",
                self.trajectories.len()
            )));
        }
        let mut out = Vec::with_capacity(k);
        for (i, traj) in self.trajectories.iter().enumerate() {
            if traj.len() != horizon {
                return Err(ProtocolError::DimensionMismatch(format!(
                    "trajectory {i} has {} points, expected {horizon}",
                    traj.len()
                )));
            }
            let mut pts = Vec::with_capacity(horizon);
            for (t, p) in traj.iter().enumerate() {
                match p.as_slice() {
                    [x, y] => pts.push(Point2::new(*x, *y)),
                    _ => {
                        return Err(ProtocolError::DimensionMismatch(format!(
                            "point {t} of trajectory {i} has {} coordinates",
                            p.len()
                        )))
                    }
                }
            }
            out.push(
                Trajectory::new(pts, frame_interval).map_err(|e| ProtocolError::MalformedResponse(e.to_string()))?,
            );
        }
        PredictionSet::new(out).map_err(|e| ProtocolError::MalformedResponse(e.to_string()))
    }
}
