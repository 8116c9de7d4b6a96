//! Benchmark suites: a list of apps and tasks, with optional oracle fixtures.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::device_sim::{AppDefinition, Simulator, TaskSpec};
use crate::model_backend::{OracleBook, OracleTask, TruthRule};

/// Oracle fixture for a task or sub-task. Paths are relative to the suite file.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSpec {
    /// Defaults to the task's app.
    #[serde(default)]
    pub app_name: Option<String>,
    #[serde(default)]
    pub graph: Option<PathBuf>,
    #[serde(default)]
    pub plan: Option<PathBuf>,
    #[serde(default)]
    pub truths: BTreeMap<String, TruthRule>,
    /// Keyed `App: sub-task`, as the agent names child tasks.
    #[serde(default)]
    pub subtasks: BTreeMap<String, OracleSpec>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SuiteTaskFile {
    #[serde(flatten)]
    spec: TaskSpec,
    #[serde(default)]
    oracle: Option<OracleSpec>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SuiteFile {
    name: String,
    apps: Vec<PathBuf>,
    tasks: Vec<SuiteTaskFile>,
}

/// A loaded and checked suite.
#[derive(Debug, Clone)]
pub struct Suite {
    pub name: String,
    pub path: PathBuf,
    pub apps: Vec<AppDefinition>,
    pub tasks: Vec<TaskSpec>,
    pub book: OracleBook,
}

impl Suite {
    /// Loads apps and tasks and checks every task and oracle fixture against
    /// the apps, so that a broken suite fails before any episode runs.
    pub fn load(path: &Path) -> Result<Suite, HarnessError> {
        let text = fs::read_to_string(path).map_err(|source| HarnessError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let de = &mut serde_json::Deserializer::from_str(&text);
        let file: SuiteFile =
            serde_path_to_error::deserialize(de).map_err(|e| HarnessError::Suite {
                path: path.to_path_buf(),
                message: format!("{}: {}", e.path(), e.inner()),
            })?;
        let base = path.parent().unwrap_or(Path::new("."));
        let apps = file
            .apps
            .iter()
            .map(|p| AppDefinition::load(&base.join(p)))
            .collect::<Result<Vec<_>, _>>()?;
        let mut book = OracleBook::new();
        let mut tasks = Vec::new();
        let mut seen = BTreeSet::new();
        let bad = |message: String| HarnessError::Suite {
            path: path.to_path_buf(),
            message,
        };
        for t in file.tasks {
            if !seen.insert(t.spec.task_id.clone()) {
                return Err(bad(format!("duplicate task id `{}`", t.spec.task_id)));
            }
            if let Some(oracle) = &t.oracle {
                add_oracle(&mut book, base, &t.spec.task_id, &t.spec.app_name, oracle)?;
            }
            tasks.push(t.spec);
        }
        let suite = Suite {
            name: file.name,
            path: path.to_path_buf(),
            apps,
            tasks,
            book,
        };
        let sim = suite.simulator()?;
        for t in &suite.tasks {
            sim.validate_task(t)
                .map_err(|e| bad(format!("task `{}`: {e}", t.task_id)))?;
        }
        suite.book.check(&sim).map_err(bad)?;
        Ok(suite)
    }

    pub fn simulator(&self) -> Result<Simulator, HarnessError> {
        Ok(Simulator::new(self.apps.clone())?)
    }

    pub fn task(&self, task_id: &str) -> Option<&TaskSpec> {
        self.tasks.iter().find(|t| t.task_id == task_id)
    }
}

fn add_oracle(
    book: &mut OracleBook,
    base: &Path,
    key: &str,
    app: &str,
    spec: &OracleSpec,
) -> Result<(), HarnessError> {
    let read = |p: &Option<PathBuf>| -> Result<Option<String>, HarnessError> {
        p.as_ref()
            .map(|p| {
                let path = base.join(p);
                fs::read_to_string(&path).map_err(|source| HarnessError::Io { path, source })
            })
            .transpose()
    };
    let app_name = spec.app_name.clone().unwrap_or_else(|| app.to_string());
    book.insert(
        key,
        OracleTask {
            app_name: app_name.clone(),
            graph_text: read(&spec.graph)?,
            plan_text: read(&spec.plan)?,
            truths: spec.truths.clone(),
        },
    );
    for (sub_key, sub) in &spec.subtasks {
        let sub_app = sub_key
            .split_once(':')
            .map_or(app_name.as_str(), |(a, _)| a.trim());
        add_oracle(book, base, sub_key, sub_app, sub)?;
    }
    Ok(())
}
