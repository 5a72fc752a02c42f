use std::io::{self, BufRead, Write};

use super::{ErrorFrame, Frame, Hello, PredictResponse, PROTOCOL_VERSION};
use crate::harness::Sut;

/// Serves `sut` over a line stream until the input closes. Bad requests and
/// predictor failures are answered with error frames; the loop keeps going.
pub fn serve(input: impl BufRead, mut output: impl Write, sut: &dyn Sut) -> io::Result<()> {
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let reply = respond(&line, sut);
        output.write_all(reply.to_line().as_bytes())?;
        output.write_all(b"\n")?;
        output.flush()?;
    }
    Ok(())
}

fn error(id: impl Into<String>, message: impl Into<String>) -> Frame {
    Frame::Error(ErrorFrame { id: id.into(), message: message.into() })
}

fn respond(line: &str, sut: &dyn Sut) -> Frame {
    let frame = match serde_json::from_str::<Frame>(line) {
        Ok(f) => f,
        Err(e) => {
            let id = serde_json::from_str::<serde_json::Value>(line)
                .ok()
                .and_then(|v| v.get("id").and_then(|i| i.as_str()).map(str::to_string))
                .unwrap_or_default();
            return error(id, format!("malformed frame: {e}"));
        }
    };
    match frame {
        Frame::Hello(h) if h.protocol_version != PROTOCOL_VERSION => {
            error(h.id, format!("unsupported protocol version {}", h.protocol_version))
        }
        Frame::Hello(h) => Frame::Hello(Hello {
            id: h.id,
            protocol_version: PROTOCOL_VERSION,
            sut: Some(sut.name().to_string()),
            deterministic_given_seed: Some(sut.deterministic_given_seed()),
        }),
        Frame::PredictRequest(req) => {
            let tc = match req.to_test_case() {
                Ok(tc) => tc,
                Err(msg) => return error(req.id, msg),
            };
            match sut.predict(&tc, req.k, req.seed) {
                Ok(set) if set.len() == req.k && set.horizon() == req.horizon => {
                    Frame::PredictResponse(PredictResponse::from_set(req.id, &set))
                }
                Ok(_) => error(req.id, "bad output shape"),
                Err(e) => error(req.id, e.to_string()),
            }
        }
        other => error(other.id().to_string(), "unexpected frame type"),
    }
}
