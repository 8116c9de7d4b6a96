use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{BackendError, ModelBackend, ModelRequest, ModelResponse, RequestKind};
use crate::device_sim::DeviceState;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TapeEntry {
    pub kind: RequestKind,
    pub text: String,
}

/// Recorded responses for one task, consumed in order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptTape {
    pub task_id: String,
    pub entries: Vec<TapeEntry>,
}

impl ScriptTape {
    pub fn new(task_id: impl Into<String>) -> Self {
        ScriptTape {
            task_id: task_id.into(),
            entries: Vec::new(),
        }
    }

    pub fn push(mut self, kind: RequestKind, text: impl Into<String>) -> Self {
        self.entries.push(TapeEntry {
            kind,
            text: text.into(),
        });
        self
    }

    /// `<dir>/<task_id>.json`.
    pub fn path_for(dir: &Path, task_id: &str) -> PathBuf {
        dir.join(format!("{task_id}.json"))
    }

    pub fn load(dir: &Path, task_id: &str) -> Result<Self, BackendError> {
        let path = Self::path_for(dir, task_id);
        let text = fs::read_to_string(&path).map_err(|e| {
            BackendError::Config(format!("cannot read tape {}: {e}", path.display()))
        })?;
        serde_json::from_str(&text)
            .map_err(|e| BackendError::Config(format!("tape {}: {e}", path.display())))
    }

    pub fn save(&self, dir: &Path) -> std::io::Result<PathBuf> {
        fs::create_dir_all(dir)?;
        let path = Self::path_for(dir, &self.task_id);
        let mut text = serde_json::to_string_pretty(self).expect("tapes serialize");
        text.push('\n');
        fs::write(&path, text)?;
        Ok(path)
    }
}

/// Plays a tape back. Token counts are estimated and wall time is zero, so a
/// replay is bit-for-bit repeatable.
#[derive(Debug, Clone)]
pub struct ScriptedBackend {
    tape: ScriptTape,
    cursor: usize,
}

impl ScriptedBackend {
    pub fn new(tape: ScriptTape) -> Self {
        ScriptedBackend { tape, cursor: 0 }
    }

    pub fn remaining(&self) -> usize {
        self.tape.entries.len() - self.cursor
    }
}

impl ModelBackend for ScriptedBackend {
    fn complete(&mut self, request: &ModelRequest) -> Result<ModelResponse, BackendError> {
        request.check()?;
        let entry =
            self.tape
                .entries
                .get(self.cursor)
                .ok_or_else(|| BackendError::TapeExhausted {
                    task: self.tape.task_id.clone(),
                    used: self.cursor,
                })?;
        if entry.kind != request.kind {
            return Err(BackendError::TapeMismatch {
                task: self.tape.task_id.clone(),
                index: self.cursor,
                expected: entry.kind,
                actual: request.kind,
            });
        }
        self.cursor += 1;
        Ok(ModelResponse::estimated(request, entry.text.clone()))
    }

    fn name(&self) -> &'static str {
        "scripted"
    }
}

/// Passes requests through and keeps every answer as a tape entry.
pub struct RecordingBackend<B> {
    inner: B,
    tape: ScriptTape,
}

impl<B: ModelBackend> RecordingBackend<B> {
    pub fn new(inner: B, task_id: impl Into<String>) -> Self {
        RecordingBackend {
            inner,
            tape: ScriptTape::new(task_id),
        }
    }

    pub fn tape(&self) -> &ScriptTape {
        &self.tape
    }

    pub fn into_tape(self) -> ScriptTape {
        self.tape
    }
}

impl<B: ModelBackend> ModelBackend for RecordingBackend<B> {
    fn complete(&mut self, request: &ModelRequest) -> Result<ModelResponse, BackendError> {
        let resp = self.inner.complete(request)?;
        self.tape.entries.push(TapeEntry {
            kind: request.kind,
            text: resp.text.clone(),
        });
        Ok(resp)
    }

    fn sync_ground_truth(&mut self, state: &DeviceState) {
        self.inner.sync_ground_truth(state);
    }

    fn name(&self) -> &'static str {
        self.inner.name()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plays_in_order_and_checks_kinds() {
        let tape = ScriptTape::new("t").push(RequestKind::InitGraph, "Vertices:\n\nEdges:\n");
        let mut b = ScriptedBackend::new(tape);
        let req = ModelRequest::new(RequestKind::InitGraph, "make a graph");
        let r = b.complete(&req).unwrap();
        assert_eq!(r.text, "Vertices:\n\nEdges:\n");
        assert_eq!(r.wall_ms, 0);
        assert_eq!(
            b.complete(&req).unwrap_err(),
            BackendError::TapeExhausted {
                task: "t".into(),
                used: 1
            }
        );
    }

    #[test]
    fn wrong_kind_names_both() {
        let tape = ScriptTape::new("t").push(RequestKind::InitPlan, "x");
        let mut b = ScriptedBackend::new(tape);
        let err = b
            .complete(&ModelRequest::new(RequestKind::InitGraph, "g"))
            .unwrap_err();
        let msg = err.to_string();
        assert!(
            msg.contains("init_plan") && msg.contains("init_graph"),
            "{msg}"
        );
        // A mismatch does not consume the entry.
        assert_eq!(b.remaining(), 1);
    }

    #[test]
    fn recording_round_trips_through_disk() {
        let tape = ScriptTape::new("t")
            .push(RequestKind::InitGraph, "a")
            .push(RequestKind::InitGraph, "b");
        let mut rec = RecordingBackend::new(ScriptedBackend::new(tape.clone()), "t");
        let req = ModelRequest::new(RequestKind::InitGraph, "g");
        rec.complete(&req).unwrap();
        rec.complete(&req).unwrap();
        let dir = tempfile::tempdir().unwrap();
        rec.tape().save(dir.path()).unwrap();
        assert_eq!(ScriptTape::load(dir.path(), "t").unwrap(), tape);
    }
}
