//! Hand-built traces for checking the metric arithmetic without running
//! any episodes.
#![allow(dead_code)]

use foresight::device_sim::{ActionCommand, Condition, ObsMode, TaskSpec};
use foresight::harness::trace::{
    EpisodeStatus, EpisodeTrace, FinishReason, StepRecord, Totals, TraceAction, TraceFooter,
    TraceHeader, TRACE_SCHEMA_VERSION,
};
use foresight::plan_dsl::Effect;

pub fn synthetic_task(i: usize, optimal: u32) -> TaskSpec {
    TaskSpec {
        task_id: format!("task{i:03}"),
        goal: "g".into(),
        app_name: "Settings".into(),
        start_screen: None,
        overrides: Default::default(),
        success: Condition::Screen {
            screen: "home".into(),
        },
        optimal_steps: optimal,
        optimal_actions: (0..optimal).map(|k| format!("tap item{k}")).collect(),
    }
}

pub fn synthetic_trace(
    task: &TaskSpec,
    status: EpisodeStatus,
    reason: FinishReason,
    labels: &[String],
    first_success_t: Option<u32>,
) -> EpisodeTrace {
    let steps: Vec<StepRecord> = labels
        .iter()
        .enumerate()
        .map(|(i, l)| StepRecord {
            seq: i as u32,
            t: i as u32 + 1,
            depth: 0,
            task_key: task.task_id.clone(),
            plan_line: None,
            effect: Effect::DoEdge {
                source: "s".into(),
                action: l.clone(),
                imagined: false,
            },
            grounding: Vec::new(),
            action: Some(TraceAction::Command {
                command: ActionCommand::Tap { number: 1 },
                mode: ObsMode::Elements,
            }),
            action_label: Some(l.clone()),
            flag: None,
            obs_digest: None,
            success_after: None,
            result: None,
            refinement: None,
            calls: Vec::new(),
            notes: Vec::new(),
        })
        .collect();
    let mut trace = EpisodeTrace {
        header: TraceHeader {
            schema_version: TRACE_SCHEMA_VERSION,
            task_id: task.task_id.clone(),
            goal: task.goal.clone(),
            app_name: task.app_name.clone(),
            backend: "synthetic".into(),
            max_steps: 30,
            grid: (9, 6),
        },
        steps,
        footer: TraceFooter {
            status,
            finish_reason: reason,
            final_success: status == EpisodeStatus::Success,
            first_success_t,
            totals: Totals::default(),
            trailing_calls: Vec::new(),
            plan_swaps: Vec::new(),
            final_graph: String::new(),
        },
    };
    trace.footer.totals = trace.recount();
    trace
}

/// 100 tasks: 39 successes (11 acting past success), 20 failures (3 early,
/// 5 budget), 41 errors.
pub fn synthetic_fixture() -> (Vec<TaskSpec>, Vec<EpisodeTrace>) {
    let mut tasks = Vec::new();
    let mut traces = Vec::new();
    for i in 0..100 {
        let task = synthetic_task(i, 3);
        let optimal = task.optimal_actions.clone();
        let trace = if i < 39 {
            let mut labels = optimal.clone();
            if i < 11 {
                labels.push("tap extra".into());
            }
            synthetic_trace(
                &task,
                EpisodeStatus::Success,
                FinishReason::PlanReturn("done".into()),
                &labels,
                Some(3),
            )
        } else if i < 42 {
            synthetic_trace(
                &task,
                EpisodeStatus::Failure,
                FinishReason::EarlyFinish("gave up".into()),
                &optimal[..1],
                None,
            )
        } else if i < 47 {
            synthetic_trace(
                &task,
                EpisodeStatus::BudgetExhausted,
                FinishReason::StepLimit,
                &optimal[..2],
                None,
            )
        } else if i < 59 {
            synthetic_trace(
                &task,
                EpisodeStatus::Failure,
                FinishReason::PlanError("type".into()),
                &[],
                None,
            )
        } else {
            synthetic_trace(
                &task,
                EpisodeStatus::Error,
                FinishReason::UnrecoverableError("net".into()),
                &[],
                None,
            )
        };
        tasks.push(task);
        traces.push(trace);
    }
    (tasks, traces)
}
