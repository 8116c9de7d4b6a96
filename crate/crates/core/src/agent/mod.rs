//! The planning agent.
//!
//! An episode asks the model for a graph of the app and a plan over it, then
//! steps the plan. Each `E(...)` call is grounded to a concrete command
//! (select, zoom in, verify, fall back to a grid), executed, and followed by a
//! refinement request that may edit the graph or swap in a new plan. `isTRUE`
//! goes to the model, `wait()` to the device clock, and `other_app_function`
//! runs a child agent in place while the parent waits.

mod episode;

use std::sync::Arc;

use crate::device_sim::{Simulator, TaskSpec, DEFAULT_GRID};
use crate::harness::trace::{EpisodeStatus, EpisodeTrace, FinishReason};
use crate::model_backend::ModelBackend;
use crate::world_model::{GraphStore, WorldModelGraph};

#[derive(Debug, Clone)]
pub struct AgentConfig {
    /// Device actions allowed per episode, children included.
    pub max_steps: u32,
    /// Select-and-verify rounds per observation mode before giving up on it.
    pub max_verify_attempts: u32,
    /// Consecutive ineffective actions after which grounding starts on the grid.
    pub grid_fallback_after: u32,
    /// Extra asks when the initial plan does not parse.
    pub max_replan_retries: u32,
    pub max_subagent_depth: u32,
    pub grid: (u32, u32),
    /// Where final graphs are saved and initial graphs are reused from.
    pub store: Option<Arc<GraphStore>>,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig {
            max_steps: 30,
            max_verify_attempts: 3,
            grid_fallback_after: 3,
            max_replan_retries: 2,
            max_subagent_depth: 1,
            grid: DEFAULT_GRID,
            store: None,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<(), String> {
        let bounds = [
            ("max_steps", self.max_steps),
            ("max_verify_attempts", self.max_verify_attempts),
            ("grid_fallback_after", self.grid_fallback_after),
            ("max_subagent_depth", self.max_subagent_depth),
            ("grid rows", self.grid.0),
            ("grid cols", self.grid.1),
        ];
        match bounds.iter().find(|(_, v)| *v == 0) {
            Some((name, _)) => Err(format!("{name} must be at least 1")),
            None => Ok(()),
        }
    }

    /// Effects (of any kind) allowed per episode. Keeps a plan that loops on
    /// `isTRUE` without acting from spinning forever.
    pub fn max_effects(&self) -> u32 {
        self.max_steps.saturating_mul(10)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeOutcome {
    pub status: EpisodeStatus,
    pub finish_reason: FinishReason,
    pub final_graph: WorldModelGraph,
}

/// Runs one task from a fresh reset.
pub fn run_episode(
    task: &TaskSpec,
    backend: &mut dyn ModelBackend,
    sim: &Simulator,
    config: &AgentConfig,
) -> (EpisodeOutcome, EpisodeTrace) {
    episode::run(task, backend, sim, config)
}
