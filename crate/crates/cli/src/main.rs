use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use foresight::agent::AgentConfig;
use foresight::harness::{
    compute_metrics, read_traces, replay_in_suite, run_suite, BackendSpec, EpisodeTrace,
    RunOptions, Suite,
};
use foresight::model_backend::HttpConfig;
use foresight::plan_dsl::{parse_plan, validate_plan};
use foresight::prompts::parse_plan_response;
use foresight::world_model::{parse_graph, serialize_graph, GraphStore};

#[derive(Parser)]
#[command(
    name = "foresight",
    version,
    about = "Plan-driven device-control agent and benchmark runner"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendKind {
    Oracle,
    Scripted,
    Http,
}

#[derive(Subcommand)]
enum Command {
    /// Run every task of a suite and write traces and a report.
    Run {
        #[arg(long)]
        suite: PathBuf,
        #[arg(long, value_enum, default_value = "oracle")]
        backend: BackendKind,
        /// Tape directory for the scripted backend.
        #[arg(long)]
        tape: Option<PathBuf>,
        /// Model name sent to the HTTP backend.
        #[arg(long, default_value = "gpt-4o")]
        model: String,
        #[arg(long, default_value_t = 30)]
        max_steps: u32,
        /// Grid used when element grounding falls back, e.g. 9x6.
        #[arg(long, default_value = "9x6", value_parser = parse_grid)]
        grid: (u32, u32),
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        parallel: usize,
        /// Save each episode's model responses as a tape for later scripted runs.
        #[arg(long)]
        record_tape: Option<PathBuf>,
        /// Reuse and save per-app graphs here. Makes results depend on task order.
        #[arg(long)]
        store: Option<PathBuf>,
    },
    /// Recompute the metrics report from a directory of traces.
    Metrics {
        #[arg(long)]
        traces: PathBuf,
        #[arg(long)]
        suite: PathBuf,
    },
    /// Parse a plan and check its edge calls against a graph.
    ValidatePlan {
        #[arg(long)]
        plan: PathBuf,
        #[arg(long)]
        graph: PathBuf,
    },
    /// Print a stored graph.
    InspectGraph {
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        app: String,
    },
    /// Re-execute a trace on a fresh simulator and report divergences.
    Replay {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        suite: PathBuf,
    },
}

fn parse_grid(s: &str) -> Result<(u32, u32), String> {
    let (r, c) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected ROWSxCOLS, got `{s}`"))?;
    let rows: u32 = r.trim().parse().map_err(|e| format!("rows: {e}"))?;
    let cols: u32 = c.trim().parse().map_err(|e| format!("cols: {e}"))?;
    if rows == 0 || cols == 0 {
        return Err("grid needs at least one row and one column".into());
    }
    Ok((rows, cols))
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn load_suite(path: &Path) -> Result<Suite> {
    Suite::load(path).with_context(|| format!("loading suite {}", path.display()))
}

fn fmt_metric(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |v| format!("{v:.3}"))
}

fn run(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::Run {
            suite,
            backend,
            tape,
            model,
            max_steps,
            grid,
            out,
            parallel,
            record_tape,
            store,
        } => {
            let suite = load_suite(&suite)?;
            let backend = match backend {
                BackendKind::Oracle => BackendSpec::Oracle,
                BackendKind::Scripted => BackendSpec::Scripted {
                    tape_dir: tape.context("--backend scripted needs --tape <dir>")?,
                },
                BackendKind::Http => BackendSpec::Http(HttpConfig::from_env(model)?),
            };
            let config = AgentConfig {
                max_steps,
                grid,
                store: store.map(|dir| Arc::new(GraphStore::new(dir))),
                ..AgentConfig::default()
            };
            let options = RunOptions {
                backend,
                config,
                parallel,
                out: Some(out.clone()),
                record_tapes: record_tape,
            };
            let result = run_suite(&suite, &options)?;
            for t in &result.report.tasks {
                println!(
                    "{:<28} {:<16} actions={:<3} tokens={}",
                    t.task_id,
                    format!("{:?}", t.status),
                    t.actions,
                    t.tokens
                );
            }
            let m = &result.report.metrics;
            println!(
                "SR={} SE={} FN={} FP={} CR={} avg_steps={} tokens={} latency_s={}",
                fmt_metric(m.sr),
                fmt_metric(m.se),
                fmt_metric(m.fn_rate),
                fmt_metric(m.fp_rate),
                fmt_metric(m.cr),
                fmt_metric(m.avg_steps),
                fmt_metric(m.tokens),
                fmt_metric(m.latency_s)
            );
            println!("traces and report written to {}", out.display());
            Ok(result.report.exit_code() as u8)
        }
        Command::Metrics { traces, suite } => {
            let suite = load_suite(&suite)?;
            let traces = read_traces(&traces)?;
            let report = compute_metrics(&traces, &suite.tasks)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok(0)
        }
        Command::ValidatePlan { plan, graph } => {
            let plan_text =
                fs::read_to_string(&plan).with_context(|| format!("reading {}", plan.display()))?;
            let graph_text = fs::read_to_string(&graph)
                .with_context(|| format!("reading {}", graph.display()))?;
            // Accept a whole plan response as well as a bare plan.
            let body = parse_plan_response(&plan_text).map_or(plan_text, |r| r.plan_text);
            let program = match parse_plan(&body) {
                Ok(p) => p,
                Err(errors) => {
                    println!("{errors}");
                    return Ok(1);
                }
            };
            let graph = parse_graph(&graph_text)?;
            for w in graph.warnings() {
                println!("graph line {}: {}", w.line, w.message);
            }
            let diagnostics = validate_plan(&program, &graph);
            for d in &diagnostics {
                println!("{d}");
            }
            let errors = diagnostics.iter().filter(|d| d.is_error()).count();
            println!(
                "{} statement(s), {} diagnostic(s), {errors} error(s)",
                program.statement_count(),
                diagnostics.len()
            );
            Ok(u8::from(errors > 0))
        }
        Command::InspectGraph { store, app } => {
            let store = GraphStore::new(store);
            let Some(graph) = store.load(&app)? else {
                bail!("no graph stored for {app} under {}", store.root().display());
            };
            print!("{}", serialize_graph(&graph));
            for d in graph.dangling_endpoints() {
                println!("# dangling: {d:?}");
            }
            Ok(0)
        }
        Command::Replay { trace, suite } => {
            let suite = load_suite(&suite)?;
            let trace = EpisodeTrace::read(&trace)?;
            let report = replay_in_suite(&trace, &suite)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok(u8::from(!report.is_clean()))
        }
    }
}
