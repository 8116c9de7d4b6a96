//! Re-executes a recorded episode on a fresh simulator.

use serde::{Deserialize, Serialize};

use super::trace::{EpisodeTrace, TraceAction};
use super::HarnessError;
use crate::device_sim::Simulator;
use crate::device_sim::TaskSpec;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Divergence {
    pub seq: u32,
    pub expected: String,
    pub actual: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplayReport {
    pub task_id: String,
    pub actions_replayed: u32,
    /// The first step whose digest or label differs; replay stops there.
    pub divergence: Option<Divergence>,
    pub recorded_success: bool,
    pub replayed_success: bool,
}

impl ReplayReport {
    pub fn is_clean(&self) -> bool {
        self.divergence.is_none() && self.recorded_success == self.replayed_success
    }
}

/// Replays the trace's actions in order. Before each command the screen is
/// observed in the recorded mode, so mark numbers mean what they meant live.
pub fn replay(
    trace: &EpisodeTrace,
    task: &TaskSpec,
    sim: &Simulator,
) -> Result<ReplayReport, HarnessError> {
    let (mut state, _) = sim.reset(task)?;
    let mut report = ReplayReport {
        task_id: trace.task_id().to_string(),
        actions_replayed: 0,
        divergence: None,
        recorded_success: trace.footer.final_success,
        replayed_success: false,
    };
    for step in &trace.steps {
        let outcome = match &step.action {
            None => continue,
            Some(TraceAction::Command { command, mode }) => {
                sim.observe(&mut state, *mode)?;
                sim.execute(&mut state, command)
            }
            Some(TraceAction::Wait) => sim.wait(&mut state),
        };
        report.actions_replayed += 1;
        let expected = format!(
            "{} -> {}",
            step.action_label.as_deref().unwrap_or("?"),
            step.obs_digest.as_deref().unwrap_or("?")
        );
        let actual = format!(
            "{} -> {}",
            outcome.action_label,
            outcome.observation.digest()
        );
        if expected != actual {
            report.divergence = Some(Divergence {
                seq: step.seq,
                expected,
                actual,
            });
            break;
        }
    }
    report.replayed_success = sim.check_success(task, &state);
    Ok(report)
}
