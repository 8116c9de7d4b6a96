//! Running suites, scoring them and checking recorded episodes.
//!
//! `run_suite` runs every task of a [`Suite`] in its own episode, optionally
//! in parallel, and writes one trace per task plus a `report.json`. Metrics
//! are a pure function of the traces and the suite, so `compute_metrics` over
//! traces read back from disk reproduces the report.

mod metrics;
mod replay;
mod suite;
pub mod trace;

use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use metrics::{acted_after_success, compute_metrics, MetricsReport, METRIC_NOTES};
pub use replay::{replay, Divergence, ReplayReport};
pub use suite::{OracleSpec, Suite};
pub use trace::{EpisodeStatus, EpisodeTrace, TraceError};

use crate::agent::{run_episode, AgentConfig};
use crate::device_sim::{LoadError, SimError, Simulator, TaskSpec};
use crate::model_backend::{
    BackendError, HttpBackend, HttpConfig, ModelBackend, OracleBackend, OracleBook,
    RecordingBackend, ScriptTape, ScriptedBackend,
};

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("suite {path}: {message}")]
    Suite { path: PathBuf, message: String },
    #[error(transparent)]
    App(#[from] LoadError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error("trace for task `{0}` does not belong to the suite")]
    UnknownTask(String),
    #[error("{0}")]
    Config(String),
}

/// Which model answers the agent.
#[derive(Debug, Clone)]
pub enum BackendSpec {
    Oracle,
    /// One tape per task, `<dir>/<task_id>.json`.
    Scripted {
        tape_dir: PathBuf,
    },
    Http(HttpConfig),
}

impl BackendSpec {
    fn build(
        &self,
        task: &TaskSpec,
        sim: &Arc<Simulator>,
        book: &Arc<OracleBook>,
    ) -> Result<Box<dyn ModelBackend>, HarnessError> {
        Ok(match self {
            BackendSpec::Oracle => Box::new(OracleBackend::new(sim.clone(), book.clone())),
            BackendSpec::Scripted { tape_dir } => Box::new(ScriptedBackend::new(ScriptTape::load(
                tape_dir,
                &task.task_id,
            )?)),
            BackendSpec::Http(config) => Box::new(HttpBackend::new(config.clone())?),
        })
    }
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub backend: BackendSpec,
    pub config: AgentConfig,
    /// Worker threads; 1 runs the tasks in order on the calling thread's pool.
    pub parallel: usize,
    /// Traces go to `<out>/traces/<task_id>.jsonl`, the report to `<out>/report.json`.
    pub out: Option<PathBuf>,
    /// Save every episode's model responses as a replayable tape here.
    pub record_tapes: Option<PathBuf>,
}

impl RunOptions {
    pub fn new(backend: BackendSpec) -> Self {
        RunOptions {
            backend,
            config: AgentConfig::default(),
            parallel: 1,
            out: None,
            record_tapes: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskResult {
    pub task_id: String,
    pub status: EpisodeStatus,
    pub actions: u32,
    pub tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub suite: String,
    pub backend: String,
    pub metrics: MetricsReport,
    pub tasks: Vec<TaskResult>,
}

impl SuiteReport {
    /// 2 when an episode hit an infrastructure error, 1 when a task failed, else 0.
    pub fn exit_code(&self) -> i32 {
        if self.tasks.iter().any(|t| t.status == EpisodeStatus::Error) {
            2
        } else if self
            .tasks
            .iter()
            .any(|t| t.status != EpisodeStatus::Success)
        {
            1
        } else {
            0
        }
    }
}

#[derive(Debug, Clone)]
pub struct SuiteRun {
    /// In suite order.
    pub traces: Vec<EpisodeTrace>,
    pub report: SuiteReport,
}

fn backend_label(spec: &BackendSpec) -> String {
    match spec {
        BackendSpec::Oracle => "oracle".into(),
        BackendSpec::Scripted { .. } => "scripted".into(),
        BackendSpec::Http(c) => format!("http:{}", c.model),
    }
}

fn run_one(
    task: &TaskSpec,
    options: &RunOptions,
    sim: &Arc<Simulator>,
    book: &Arc<OracleBook>,
) -> Result<EpisodeTrace, HarnessError> {
    let backend = options.backend.build(task, sim, book)?;
    match &options.record_tapes {
        Some(dir) => {
            let mut recorder = RecordingBackend::new(backend, task.task_id.clone());
            let (_, trace) = run_episode(task, &mut recorder, sim, &options.config);
            recorder
                .into_tape()
                .save(dir)
                .map_err(|source| HarnessError::Io {
                    path: dir.clone(),
                    source,
                })?;
            Ok(trace)
        }
        None => {
            let mut backend = backend;
            Ok(run_episode(task, backend.as_mut(), sim, &options.config).1)
        }
    }
}

/// Runs every task of the suite. Backend construction failures (a missing
/// tape, say) abort the run; everything that goes wrong inside an episode is
/// recorded in its trace instead.
pub fn run_suite(suite: &Suite, options: &RunOptions) -> Result<SuiteRun, HarnessError> {
    options.config.validate().map_err(HarnessError::Config)?;
    if options.parallel == 0 {
        return Err(HarnessError::Config("parallel must be at least 1".into()));
    }
    let sim = Arc::new(suite.simulator()?);
    let book = Arc::new(suite.book.clone());
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(options.parallel)
        .build()
        .map_err(|e| HarnessError::Config(e.to_string()))?;
    let traces: Vec<EpisodeTrace> = pool.install(|| {
        suite
            .tasks
            .par_iter()
            .map(|t| run_one(t, options, &sim, &book))
            .collect::<Result<_, _>>()
    })?;
    let metrics = compute_metrics(&traces, &suite.tasks)?;
    let report = SuiteReport {
        suite: suite.name.clone(),
        backend: backend_label(&options.backend),
        metrics,
        tasks: traces
            .iter()
            .map(|t| TaskResult {
                task_id: t.task_id().to_string(),
                status: t.footer.status,
                actions: t.footer.totals.actions,
                tokens: t.footer.totals.tokens(),
            })
            .collect(),
    };
    if let Some(out) = &options.out {
        for t in &traces {
            let path = trace_path(out, t.task_id());
            t.write(&path)
                .map_err(|source| HarnessError::Io { path, source })?;
        }
        write_report(out, &report)?;
    }
    Ok(SuiteRun { traces, report })
}

pub fn trace_path(out: &Path, task_id: &str) -> PathBuf {
    out.join("traces").join(format!("{task_id}.jsonl"))
}

pub fn write_report(out: &Path, report: &SuiteReport) -> Result<PathBuf, HarnessError> {
    let path = out.join("report.json");
    let io_err = |source| HarnessError::Io {
        path: path.clone(),
        source,
    };
    fs::create_dir_all(out).map_err(io_err)?;
    let mut text = serde_json::to_string_pretty(report).expect("reports serialize");
    text.push('\n');
    fs::write(&path, text).map_err(io_err)?;
    Ok(path)
}

/// Every `*.jsonl` trace in `dir`, sorted by file name.
pub fn read_traces(dir: &Path) -> Result<Vec<EpisodeTrace>, HarnessError> {
    let io_err = |source| HarnessError::Io {
        path: dir.to_path_buf(),
        source,
    };
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io_err)?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<_, _>>()
        .map_err(io_err)?;
    paths.retain(|p| p.extension().is_some_and(|e| e == "jsonl"));
    paths.sort();
    paths.iter().map(|p| Ok(EpisodeTrace::read(p)?)).collect()
}

/// Replays a trace against the suite task with the same id.
pub fn replay_in_suite(trace: &EpisodeTrace, suite: &Suite) -> Result<ReplayReport, HarnessError> {
    let task = suite
        .task(trace.task_id())
        .ok_or_else(|| HarnessError::UnknownTask(trace.task_id().to_string()))?;
    replay(trace, task, &suite.simulator()?)
}
