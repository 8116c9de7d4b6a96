//! The model the agent talks to.
//!
//! Four implementations share [`ModelBackend`]: a chat-completion HTTP client
//! for live use, a scripted tape player, a recorder that writes such tapes,
//! and an oracle that answers from simulator ground truth and fixture files.

mod http;
mod oracle;
mod scripted;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::device_sim::{DeviceState, ElementDetail, Observation};

pub use http::{HttpBackend, HttpConfig, DEFAULT_MAX_RETRIES};
pub use oracle::{phrase_tokens, OracleBackend, OracleBook, OracleTask, TruthRule};
pub use scripted::{RecordingBackend, ScriptTape, ScriptedBackend, TapeEntry};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RequestKind {
    InitGraph,
    InitPlan,
    Refine,
    SelectAction,
    VerifyAction,
    QueryTrue,
}

impl RequestKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            RequestKind::InitGraph => "init_graph",
            RequestKind::InitPlan => "init_plan",
            RequestKind::Refine => "refine",
            RequestKind::SelectAction => "select_action",
            RequestKind::VerifyAction => "verify_action",
            RequestKind::QueryTrue => "query_true",
        }
    }

    /// Every kind but the initial graph sees the screen.
    pub fn needs_observation(&self) -> bool {
        *self != RequestKind::InitGraph
    }
}

impl fmt::Display for RequestKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Structured copies of what the prompt says, for backends that do not read
/// prose. Live backends ignore them.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RequestHints {
    /// Action phrase being grounded or verified.
    pub action: Option<String>,
    /// Numbers the model must not pick.
    pub excluded: Vec<u32>,
    /// The zoomed-in element under verification.
    pub candidate: Option<ElementDetail>,
    /// Command proposed for verification.
    pub command: Option<String>,
    pub statement: Option<String>,
    pub compare_screen: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelRequest {
    pub kind: RequestKind,
    pub prompt: String,
    pub observation: Option<Observation>,
    /// Screen before the last action, for refinement and `compare_screen` queries.
    pub previous_observation: Option<Observation>,
    /// Opaque image attachments (data URLs); the simulator never sets these.
    pub images: Vec<String>,
    pub episode_id: String,
    pub step_index: u32,
    /// Which task or sub-task is asking: the task id, or `App: sub task` for a child.
    pub task_key: String,
    pub hints: RequestHints,
}

impl ModelRequest {
    pub fn new(kind: RequestKind, prompt: impl Into<String>) -> Self {
        ModelRequest {
            kind,
            prompt: prompt.into(),
            observation: None,
            previous_observation: None,
            images: Vec::new(),
            episode_id: String::new(),
            step_index: 0,
            task_key: String::new(),
            hints: RequestHints::default(),
        }
    }

    /// The full text sent to the model: the prompt followed by the screen(s).
    pub fn input_text(&self) -> String {
        let mut out = self.prompt.clone();
        if let Some(prev) = &self.previous_observation {
            out.push_str("\n\nPrevious screen:\n");
            out.push_str(&prev.render_text());
        }
        if let Some(obs) = &self.observation {
            out.push_str("\n\nCurrent screen:\n");
            out.push_str(&obs.render_text());
        }
        out
    }

    pub fn check(&self) -> Result<(), BackendError> {
        if self.prompt.trim().is_empty() {
            return Err(BackendError::BadRequest("empty prompt".into()));
        }
        if self.kind.needs_observation() != self.observation.is_some() {
            return Err(BackendError::BadRequest(format!(
                "{} requests {} an observation",
                self.kind,
                if self.kind.needs_observation() {
                    "need"
                } else {
                    "take no"
                }
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelResponse {
    pub text: String,
    pub input_tokens: u64,
    pub output_tokens: u64,
    pub wall_ms: u64,
}

impl ModelResponse {
    /// A response whose token counts are estimated from the texts.
    pub fn estimated(request: &ModelRequest, text: String) -> Self {
        ModelResponse {
            input_tokens: count_tokens(&request.input_text()),
            output_tokens: count_tokens(&text),
            text,
            wall_ms: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BackendError {
    #[error("bad request: {0}")]
    BadRequest(String),
    #[error("transport failed after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("model API returned {status}: {message}")]
    Protocol { status: u16, message: String },
    #[error("tape for {task} is exhausted after {used} entries")]
    TapeExhausted { task: String, used: usize },
    #[error("tape entry {index} for {task} is {expected}, but the agent asked for {actual}")]
    TapeMismatch {
        task: String,
        index: usize,
        expected: RequestKind,
        actual: RequestKind,
    },
    #[error("oracle has no answer: {0}")]
    OracleGap(String),
    #[error("backend configuration: {0}")]
    Config(String),
}

pub trait ModelBackend: Send {
    fn complete(&mut self, request: &ModelRequest) -> Result<ModelResponse, BackendError>;

    /// Called before every request with the live device state. Only the oracle
    /// reads it.
    fn sync_ground_truth(&mut self, _state: &DeviceState) {}

    fn name(&self) -> &'static str;
}

impl<B: ModelBackend + ?Sized> ModelBackend for Box<B> {
    fn complete(&mut self, request: &ModelRequest) -> Result<ModelResponse, BackendError> {
        (**self).complete(request)
    }

    fn sync_ground_truth(&mut self, state: &DeviceState) {
        (**self).sync_ground_truth(state)
    }

    fn name(&self) -> &'static str {
        (**self).name()
    }
}

/// Rough token estimate: one token per four characters, rounded up.
pub fn count_tokens(text: &str) -> u64 {
    (text.chars().count() as u64).div_ceil(4)
}
