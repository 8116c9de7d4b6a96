use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::app::Condition;
use crate::plan_dsl::Value;

/// A benchmark task: goal text, initial conditions and the success check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub task_id: String,
    pub goal: String,
    /// App the task is about; bare names in `overrides` and `success` refer to it.
    pub app_name: String,
    /// Screen the episode starts on; `None` starts on the home screen.
    #[serde(default)]
    pub start_screen: Option<String>,
    #[serde(default)]
    pub overrides: BTreeMap<String, Value>,
    pub success: Condition,
    pub optimal_steps: u32,
    /// Action labels of one shortest solution, in order.
    #[serde(default)]
    pub optimal_actions: Vec<String>,
}
