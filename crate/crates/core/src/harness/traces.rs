//! Trace files: a header line `{"schema":"ranker-traces","version":1}`
//! followed by one [`TraceRecord`] per line.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::types::TraceRecord;

pub const TRACE_SCHEMA: &str = "ranker-traces";
pub const TRACE_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    schema: String,
    version: u32,
}

pub fn export_traces(path: &Path, records: &[TraceRecord]) -> Result<(), HarnessError> {
    for r in records {
        r.trace
            .validate()
            .map_err(|e| HarnessError::InvalidTrace(format!("{}: {e}", r.trace.task_ref)))?;
    }
    let io = |e: std::io::Error| HarnessError::Io(format!("{}: {e}", path.display()));
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    let header = Header {
        schema: TRACE_SCHEMA.into(),
        version: TRACE_VERSION,
    };
    writeln!(w, "{}", serde_json::to_string(&header).expect("header serializes")).map_err(io)?;
    for r in records {
        writeln!(w, "{}", serde_json::to_string(r).expect("record serializes")).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn import_traces(path: &Path) -> Result<Vec<TraceRecord>, HarnessError> {
    let io = |e: std::io::Error| HarnessError::Io(format!("{}: {e}", path.display()));
    let mut lines = BufReader::new(File::open(path).map_err(io)?).lines();
    let first = lines.next().transpose().map_err(io)?.unwrap_or_default();
    let header: Header = serde_json::from_str(&first).map_err(|_| HarnessError::SchemaVersionMismatch {
        found: format!("unrecognized header {first:?}"),
    })?;
    if header.schema != TRACE_SCHEMA || header.version != TRACE_VERSION {
        return Err(HarnessError::SchemaVersionMismatch {
            found: format!("{} v{}", header.schema, header.version),
        });
    }
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line.map_err(io)?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: TraceRecord = serde_json::from_str(&line)
            .map_err(|e| HarnessError::InvalidTrace(format!("{} line {}: {e}", path.display(), i + 2)))?;
        out.push(rec);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{EpisodeStep, EpisodeTrace};

    fn record() -> TraceRecord {
        let ids = ["passage 1", "passage 2"];
        TraceRecord {
            query_text: "where was super bowl 50 held".into(),
            trace: EpisodeTrace {
                task_ref: "t0".into(),
                steps: vec![
                    EpisodeStep {
                        pool: ids.iter().map(|s| s.to_string()).collect(),
                        excluded: "passage 2".into(),
                        reward: 1.0,
                        log_prob: -0.25,
                        value: 0.5,
                        reasoning: Some("passage 2 is about baseball".into()),
                        fallback: false,
                    },
                    EpisodeStep {
                        pool: vec!["passage 1".into()],
                        excluded: "passage 1".into(),
                        reward: 0.0,
                        log_prob: 0.0,
                        value: 0.0,
                        reasoning: None,
                        fallback: false,
                    },
                ],
            },
        }
    }

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.jsonl");
        export_traces(&path, &[record(), record()]).unwrap();
        assert_eq!(import_traces(&path).unwrap(), vec![record(), record()]);
    }

    #[test]
    fn empty_export_is_a_valid_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.jsonl");
        export_traces(&path, &[]).unwrap();
        assert!(import_traces(&path).unwrap().is_empty());
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "{\"schema\":\"ranker-traces\",\"version\":1}\n");
    }

    #[test]
    fn version_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.jsonl");
        std::fs::write(&path, "{\"schema\":\"ranker-traces\",\"version\":2}\n").unwrap();
        assert!(matches!(import_traces(&path), Err(HarnessError::SchemaVersionMismatch { .. })));
        std::fs::write(&path, "").unwrap();
        assert!(matches!(import_traces(&path), Err(HarnessError::SchemaVersionMismatch { .. })));
    }

    #[test]
    fn invalid_trace_is_not_exported() {
        let mut r = record();
        r.trace.steps.pop();
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            export_traces(&dir.path().join("t.jsonl"), &[r]),
            Err(HarnessError::InvalidTrace(_))
        ));
    }
}
