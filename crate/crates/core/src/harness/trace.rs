//! Episode traces: one JSON object per line, a header first and a footer last.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::device_sim::{ActionCommand, EffectFlag, ObsMode};
use crate::model_backend::RequestKind;
use crate::plan_dsl::{Effect, EffectResult};

pub const TRACE_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpisodeStatus {
    Success,
    Failure,
    BudgetExhausted,
    Error,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "reason", content = "message", rename_all = "snake_case")]
pub enum FinishReason {
    /// The plan returned and the task predicate held.
    PlanReturn(String),
    /// The plan returned while the task predicate was false.
    EarlyFinish(String),
    StepLimit,
    /// The plan itself failed at run time (type error, budget of pure steps).
    PlanError(String),
    UnrecoverableError(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallRecord {
    pub kind: RequestKind,
    pub input_tokens: u64,
    pub output_tokens: u64,
    pub wall_ms: u64,
    pub response: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Accepted,
    Rejected,
    /// The model named a mark already in the wrong-action set; not re-verified.
    Repeat,
    /// Unreadable answer, or a number that is not on screen.
    Invalid,
    /// A command with no element to zoom into (back, text).
    Unverified,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundingAttempt {
    #[serde(flatten)]
    pub mode: ObsMode,
    pub obs_digest: String,
    pub proposal: Option<ActionCommand>,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TraceAction {
    /// `mode` is the observation the command's numbers refer to.
    Command {
        command: ActionCommand,
        mode: ObsMode,
    },
    Wait,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RefinementNote {
    pub successful_and_expected: bool,
    pub ineffective: bool,
    pub current_vertex: String,
    /// Removed vertices, added vertices, removed edges, added edges.
    pub diff_counts: [usize; 4],
    pub plan_replaced: bool,
    pub remind: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepRecord {
    /// Strictly increasing across the episode.
    pub seq: u32,
    /// Device actions executed so far, this record included.
    pub t: u32,
    pub depth: u32,
    pub task_key: String,
    pub plan_line: Option<usize>,
    pub effect: Effect,
    pub grounding: Vec<GroundingAttempt>,
    pub action: Option<TraceAction>,
    pub action_label: Option<String>,
    pub flag: Option<EffectFlag>,
    /// Digest of the element observation after the action.
    pub obs_digest: Option<String>,
    /// Task predicate after the action.
    pub success_after: Option<bool>,
    /// What the plan was told.
    pub result: Option<EffectResult>,
    pub refinement: Option<RefinementNote>,
    /// Model calls made since the previous record.
    pub calls: Vec<CallRecord>,
    pub notes: Vec<String>,
}

impl StepRecord {
    pub fn executed_command(&self) -> Option<&ActionCommand> {
        match &self.action {
            Some(TraceAction::Command { command, .. }) => Some(command),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub schema_version: u32,
    pub task_id: String,
    pub goal: String,
    pub app_name: String,
    pub backend: String,
    pub max_steps: u32,
    pub grid: (u32, u32),
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Totals {
    pub input_tokens: u64,
    pub output_tokens: u64,
    pub wall_ms: u64,
    pub actions: u32,
    pub calls: u32,
}

impl Totals {
    pub fn tokens(&self) -> u64 {
        self.input_tokens + self.output_tokens
    }
}

/// A plan that was replaced by a revised one.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanSwap {
    pub seq: u32,
    pub depth: u32,
    /// Interpreter steps of the old plan when it was retired, and at the end
    /// of the episode. Equal unless a retired plan was stepped again.
    pub steps_at_swap: u64,
    pub steps_at_end: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceFooter {
    pub status: EpisodeStatus,
    pub finish_reason: FinishReason,
    pub final_success: bool,
    /// `t` at which the task predicate first held; 0 if it held at reset.
    pub first_success_t: Option<u32>,
    pub totals: Totals,
    /// Model calls after the last record.
    pub trailing_calls: Vec<CallRecord>,
    pub plan_swaps: Vec<PlanSwap>,
    pub final_graph: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
enum TraceLine {
    Header(TraceHeader),
    Step(Box<StepRecord>),
    Footer(TraceFooter),
}

#[derive(Debug, thiserror::Error)]
pub enum TraceError {
    #[error("cannot read trace {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("trace line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("trace schema version {found} is not supported (expected {TRACE_SCHEMA_VERSION})")]
    Version { found: u32 },
}

/// The trajectory of one episode.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EpisodeTrace {
    pub header: TraceHeader,
    pub steps: Vec<StepRecord>,
    pub footer: TraceFooter,
}

impl EpisodeTrace {
    pub fn task_id(&self) -> &str {
        &self.header.task_id
    }

    /// Steps that executed a device command, in order.
    pub fn executed(&self) -> impl Iterator<Item = &StepRecord> {
        self.steps.iter().filter(|s| s.executed_command().is_some())
    }

    /// History labels of the executed commands, in order.
    pub fn action_labels(&self) -> Vec<&str> {
        self.executed()
            .filter_map(|s| s.action_label.as_deref())
            .collect()
    }

    pub fn all_calls(&self) -> impl Iterator<Item = &CallRecord> {
        self.steps
            .iter()
            .flat_map(|s| s.calls.iter())
            .chain(self.footer.trailing_calls.iter())
    }

    /// Totals recomputed from the records.
    pub fn recount(&self) -> Totals {
        let mut t = Totals {
            actions: self.executed().count() as u32,
            ..Default::default()
        };
        for c in self.all_calls() {
            t.input_tokens += c.input_tokens;
            t.output_tokens += c.output_tokens;
            t.wall_ms += c.wall_ms;
            t.calls += 1;
        }
        t
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        let mut push = |line: &TraceLine| {
            out.push_str(&serde_json::to_string(line).expect("trace records serialize"));
            out.push('\n');
        };
        push(&TraceLine::Header(self.header.clone()));
        for s in &self.steps {
            push(&TraceLine::Step(Box::new(s.clone())));
        }
        push(&TraceLine::Footer(self.footer.clone()));
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self, TraceError> {
        let mut header = None;
        let mut steps = Vec::new();
        let mut footer = None;
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            if raw.trim().is_empty() {
                continue;
            }
            let malformed = |message: String| TraceError::Malformed { line, message };
            let value: serde_json::Value =
                serde_json::from_str(raw).map_err(|e| malformed(e.to_string()))?;
            if let Some(v) = value.get("schema_version").and_then(|v| v.as_u64()) {
                if v != TRACE_SCHEMA_VERSION as u64 {
                    return Err(TraceError::Version { found: v as u32 });
                }
            }
            match serde_json::from_value(value).map_err(|e| malformed(e.to_string()))? {
                TraceLine::Header(h) if header.is_none() && line == 1 => header = Some(h),
                TraceLine::Step(s) if header.is_some() && footer.is_none() => steps.push(*s),
                TraceLine::Footer(f) if header.is_some() && footer.is_none() => footer = Some(f),
                _ => return Err(malformed("record out of order".into())),
            }
        }
        Ok(EpisodeTrace {
            header: header.ok_or(TraceError::Malformed {
                line: 1,
                message: "missing header".into(),
            })?,
            steps,
            footer: footer.ok_or(TraceError::Malformed {
                line: text.lines().count(),
                message: "missing footer".into(),
            })?,
        })
    }

    pub fn write(&self, path: &Path) -> io::Result<()> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        fs::write(path, self.to_jsonl())
    }

    pub fn read(path: &Path) -> Result<Self, TraceError> {
        let text = fs::read_to_string(path).map_err(|source| TraceError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_jsonl(&text)
    }
}
