//! Suite-level metrics computed from episode traces.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::trace::{EpisodeStatus, EpisodeTrace, FinishReason};
use super::HarnessError;
use crate::device_sim::TaskSpec;

/// How the less obvious metrics are computed; copied into every report.
pub const METRIC_NOTES: &[&str] = &[
    "SE averages executed/optimal actions over successful tasks with a nonzero optimum; child-agent actions count",
    "latency_s is model wall time per executed action; the simulator itself costs nothing",
    "FN counts failures (including budget exhaustion) where the plan returned while the task predicate was false",
    "FP counts successes that kept acting after the task predicate first held",
    "CR compares executed action labels with the declared optimal sequence by longest common prefix",
    "episodes with status error are excluded from FN and FP but count as tasks for SR",
];

/// Aggregate metrics. A metric with a zero denominator is `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub sr: Option<f64>,
    pub se: Option<f64>,
    pub latency_s: Option<f64>,
    pub tokens: Option<f64>,
    #[serde(rename = "fn")]
    pub fn_rate: Option<f64>,
    #[serde(rename = "fp")]
    pub fp_rate: Option<f64>,
    pub cr: Option<f64>,
    pub avg_steps: Option<f64>,
    pub m_tasks: u32,
    pub n_success: u32,
    /// Failures and budget exhaustions.
    pub n_failure: u32,
    pub n_error: u32,
    pub n_early: u32,
    pub m_success: u32,
    pub n_late: u32,
    /// Summed over the successes that enter SE.
    pub s_actual: u64,
    pub s_optimal: u64,
    pub s_correct: u64,
    pub s_total: u64,
    pub total_tokens: u64,
    pub total_wall_ms: u64,
    pub total_actions: u64,
    pub notes: Vec<String>,
}

fn ratio(num: f64, den: f64) -> Option<f64> {
    (den > 0.0).then(|| num / den)
}

fn common_prefix(actual: &[&str], optimal: &[String]) -> usize {
    actual
        .iter()
        .zip(optimal)
        .take_while(|(a, o)| a.trim().eq_ignore_ascii_case(o.trim()))
        .count()
}

/// Whether the episode kept executing actions after the predicate first held.
pub fn acted_after_success(trace: &EpisodeTrace) -> bool {
    match trace.footer.first_success_t {
        Some(t) => trace.footer.totals.actions > t,
        None => false,
    }
}

/// Metrics over `traces`. Every trace must belong to a task in `tasks`; the
/// result does not depend on the order of either slice.
pub fn compute_metrics(
    traces: &[EpisodeTrace],
    tasks: &[TaskSpec],
) -> Result<MetricsReport, HarnessError> {
    let by_id: BTreeMap<&str, &TaskSpec> = tasks.iter().map(|t| (t.task_id.as_str(), t)).collect();
    let mut sorted: Vec<(&EpisodeTrace, &TaskSpec)> = traces
        .iter()
        .map(|tr| {
            by_id
                .get(tr.task_id())
                .map(|t| (tr, *t))
                .ok_or_else(|| HarnessError::UnknownTask(tr.task_id().to_string()))
        })
        .collect::<Result<_, _>>()?;
    sorted.sort_by(|a, b| a.0.task_id().cmp(b.0.task_id()));

    let mut r = MetricsReport {
        sr: None,
        se: None,
        latency_s: None,
        tokens: None,
        fn_rate: None,
        fp_rate: None,
        cr: None,
        avg_steps: None,
        m_tasks: sorted.len() as u32,
        n_success: 0,
        n_failure: 0,
        n_error: 0,
        n_early: 0,
        m_success: 0,
        n_late: 0,
        s_actual: 0,
        s_optimal: 0,
        s_correct: 0,
        s_total: 0,
        total_tokens: 0,
        total_wall_ms: 0,
        total_actions: 0,
        notes: METRIC_NOTES.iter().map(|s| s.to_string()).collect(),
    };
    let mut se_sum = 0.0;
    for (trace, task) in &sorted {
        let totals = &trace.footer.totals;
        r.total_tokens += totals.tokens();
        r.total_wall_ms += totals.wall_ms;
        r.total_actions += totals.actions as u64;
        match trace.footer.status {
            EpisodeStatus::Success => {
                r.n_success += 1;
                r.m_success += 1;
                if acted_after_success(trace) {
                    r.n_late += 1;
                }
                if task.optimal_steps > 0 {
                    r.s_actual += totals.actions as u64;
                    r.s_optimal += task.optimal_steps as u64;
                    se_sum += totals.actions as f64 / task.optimal_steps as f64;
                }
            }
            EpisodeStatus::Failure | EpisodeStatus::BudgetExhausted => {
                r.n_failure += 1;
                if matches!(trace.footer.finish_reason, FinishReason::EarlyFinish(_)) {
                    r.n_early += 1;
                }
            }
            EpisodeStatus::Error => r.n_error += 1,
        }
        if !task.optimal_actions.is_empty() {
            r.s_correct += common_prefix(&trace.action_labels(), &task.optimal_actions) as u64;
            r.s_total += task.optimal_actions.len() as u64;
        }
    }
    let se_count = sorted
        .iter()
        .filter(|(tr, t)| tr.footer.status == EpisodeStatus::Success && t.optimal_steps > 0)
        .count();
    let m = r.m_tasks as f64;
    r.sr = ratio(r.n_success as f64, m);
    r.se = ratio(se_sum, se_count as f64);
    r.latency_s = ratio(r.total_wall_ms as f64 / 1000.0, r.total_actions as f64);
    r.tokens = ratio(r.total_tokens as f64, m);
    r.fn_rate = ratio(r.n_early as f64, r.n_failure as f64);
    r.fp_rate = ratio(r.n_late as f64, r.m_success as f64);
    r.cr = ratio(r.s_correct as f64, r.s_total as f64);
    r.avg_steps = ratio(r.total_actions as f64, m);
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prefix_is_case_insensitive_and_stops_at_first_mismatch() {
        let optimal = vec![
            "tap Settings".to_string(),
            "tap Wi-Fi".into(),
            "tap WLAN switch".into(),
        ];
        assert_eq!(
            common_prefix(&["TAP settings", "tap Wi-Fi", "back"], &optimal),
            2
        );
        assert_eq!(common_prefix(&["back", "tap Wi-Fi"], &optimal), 0);
        assert_eq!(common_prefix(&[], &optimal), 0);
    }

    #[test]
    fn empty_denominators_are_absent() {
        let r = compute_metrics(&[], &[]).unwrap();
        assert_eq!(r.sr, None);
        assert_eq!(r.fn_rate, None);
        assert_eq!(r.m_tasks, 0);
    }
}
