//! Golden request/response transcripts that any compliant predictor peer must
//! reproduce.
//!
//! Transcript lines starting with `> ` are sent verbatim to the peer; lines
//! starting with `< ` describe the expected reply. Expected replies are
//! patterns: every key present in the pattern must match the reply (numbers
//! compared as f64), extra keys in the reply are allowed. `#` starts a comment.

use serde_json::Value;

use super::{Connection, ProtocolError};

pub struct Transcript {
    pub name: &'static str,
    pub body: &'static str,
}

pub const GOLDEN_TRANSCRIPTS: [Transcript; 5] = [
    Transcript { name: "handshake", body: include_str!("../../golden/handshake.jsonl") },
    Transcript { name: "version_mismatch", body: include_str!("../../golden/version_mismatch.jsonl") },
    Transcript { name: "predict_single", body: include_str!("../../golden/predict_single.jsonl") },
    Transcript { name: "predict_sequence", body: include_str!("../../golden/predict_sequence.jsonl") },
    Transcript { name: "error_recovery", body: include_str!("../../golden/error_recovery.jsonl") },
];

#[derive(Debug, Clone, PartialEq)]
pub enum Step<'a> {
    Send(&'a str),
    Expect(&'a str),
}

impl Transcript {
    pub fn steps(&self) -> Vec<Step<'static>> {
        self.body
            .lines()
            .filter_map(|l| {
                if let Some(s) = l.strip_prefix("> ") {
                    Some(Step::Send(s))
                } else {
                    l.strip_prefix("< ").map(Step::Expect)
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TranscriptOutcome {
    pub name: &'static str,
    /// `None` on success, otherwise what went wrong.
    pub failure: Option<String>,
}

impl TranscriptOutcome {
    pub fn passed(&self) -> bool {
        self.failure.is_none()
    }
}

/// True when `actual` matches the `expected` pattern.
pub fn matches_pattern(expected: &Value, actual: &Value) -> bool {
    match (expected, actual) {
        (Value::Object(e), Value::Object(a)) => {
            e.iter().all(|(k, ev)| a.get(k).is_some_and(|av| matches_pattern(ev, av)))
        }
        (Value::Array(e), Value::Array(a)) => {
            e.len() == a.len() && e.iter().zip(a).all(|(ev, av)| matches_pattern(ev, av))
        }
        (Value::Number(e), Value::Number(a)) => e.as_f64() == a.as_f64(),
        _ => expected == actual,
    }
}

pub fn run_transcript(conn: &mut Connection, transcript: &Transcript) -> Result<(), String> {
    for (i, step) in transcript.steps().into_iter().enumerate() {
        match step {
            Step::Send(line) => conn.send_line(line).map_err(|e| format!("step {i}: send failed: {e}"))?,
            Step::Expect(pattern) => {
                let expected: Value =
                    serde_json::from_str(pattern).map_err(|e| format!("step {i}: bad golden line: {e}"))?;
                let got = conn.recv_line().map_err(|e| format!("step {i}: {e}"))?;
                let actual: Value =
                    serde_json::from_str(&got).map_err(|e| format!("step {i}: reply is not JSON: {e}: {got}"))?;
                if !matches_pattern(&expected, &actual) {
                    return Err(format!("step {i}: expected {pattern}, got {got}"));
                }
            }
        }
    }
    Ok(())
}

/// Runs every golden transcript, each on a fresh connection from `open`.
pub fn run_conformance(
    mut open: impl FnMut() -> Result<Connection, ProtocolError>,
) -> Vec<TranscriptOutcome> {
    GOLDEN_TRANSCRIPTS
        .iter()
        .map(|t| {
            let failure = match open() {
                Ok(mut conn) => run_transcript(&mut conn, t).err(),
                Err(e) => Some(format!("cannot connect: {e}")),
            };
            TranscriptOutcome { name: t.name, failure }
        })
        .collect()
}
