use std::collections::BTreeSet;
use std::mem;
use std::sync::Arc;

use super::{AgentConfig, EpisodeOutcome};
use crate::device_sim::{
    ActionCommand, DeviceState, EffectFlag, ObsMode, Observation, Simulator, TaskSpec,
};
use crate::harness::trace::{
    CallRecord, EpisodeStatus, EpisodeTrace, FinishReason, GroundingAttempt, PlanSwap,
    RefinementNote, StepRecord, Totals, TraceAction, TraceFooter, TraceHeader, Verdict,
    TRACE_SCHEMA_VERSION,
};
use crate::model_backend::{ModelBackend, ModelRequest, RequestHints, RequestKind};
use crate::plan_dsl::{parse_plan, Effect, EffectResult, ExecState, ExecStatus};
use crate::prompts::{
    parse_bool_token, parse_command_response, parse_plan_response, parse_refinement_response,
    render, render_query_true, render_select_action, render_verify_action, PromptContext,
    RefinementOutcome, Template,
};
use crate::world_model::{apply_diff, parse_graph, serialize_graph, ActionType, WorldModelGraph};

/// Why the loop stopped before the plan finished.
enum Stop {
    Budget,
    Fatal(String),
}

enum End {
    Returned(String),
    PlanError(String),
}

/// Per-agent state; a child agent gets its own.
struct Frame {
    goal: String,
    app_name: String,
    task_key: String,
    depth: u32,
    graph: WorldModelGraph,
    plan_text: String,
    exec: ExecState,
    vertex: String,
    remind: String,
    thought: String,
    ineffective_commands: Vec<String>,
}

struct Grounded {
    command: Option<ActionCommand>,
    mode: ObsMode,
    attempts: Vec<GroundingAttempt>,
    failure: Option<String>,
}

struct Run<'a> {
    sim: &'a Simulator,
    backend: &'a mut dyn ModelBackend,
    config: &'a AgentConfig,
    task: &'a TaskSpec,
    state: DeviceState,
    /// Latest element observation, and the one before the last action.
    obs: Observation,
    prev_obs: Option<Observation>,
    t: u32,
    effects: u32,
    steps: Vec<StepRecord>,
    pending_calls: Vec<CallRecord>,
    first_success_t: Option<u32>,
    ineffective_streak: u32,
    retired: Vec<(u32, u32, u64, ExecState)>,
    notes: Vec<String>,
}

pub(super) fn run(
    task: &TaskSpec,
    backend: &mut dyn ModelBackend,
    sim: &Simulator,
    config: &AgentConfig,
) -> (EpisodeOutcome, EpisodeTrace) {
    let header = TraceHeader {
        schema_version: TRACE_SCHEMA_VERSION,
        task_id: task.task_id.clone(),
        goal: task.goal.clone(),
        app_name: task.app_name.clone(),
        backend: backend.name().to_string(),
        max_steps: config.max_steps,
        grid: config.grid,
    };
    let setup = config
        .validate()
        .map_err(|e| e.to_string())
        .and_then(|_| sim.reset(task).map_err(|e| e.to_string()));
    let (state, obs) = match setup {
        Ok(x) => x,
        Err(message) => {
            let outcome = EpisodeOutcome {
                status: EpisodeStatus::Error,
                finish_reason: FinishReason::UnrecoverableError(message),
                final_graph: WorldModelGraph::new(),
            };
            let footer = TraceFooter {
                status: outcome.status,
                finish_reason: outcome.finish_reason.clone(),
                final_success: false,
                first_success_t: None,
                totals: Totals::default(),
                trailing_calls: Vec::new(),
                plan_swaps: Vec::new(),
                final_graph: serialize_graph(&outcome.final_graph),
            };
            return (
                outcome,
                EpisodeTrace {
                    header,
                    steps: Vec::new(),
                    footer,
                },
            );
        }
    };
    let mut run = Run {
        sim,
        backend,
        config,
        task,
        first_success_t: sim.check_success(task, &state).then_some(0),
        state,
        obs,
        prev_obs: None,
        t: 0,
        effects: 0,
        steps: Vec::new(),
        pending_calls: Vec::new(),
        ineffective_streak: 0,
        retired: Vec::new(),
        notes: Vec::new(),
    };
    let mut final_graph = WorldModelGraph::new();
    let result = run.run_agent(
        &task.goal,
        &task.app_name,
        &task.task_id,
        0,
        &mut final_graph,
    );
    let success = sim.check_success(task, &run.state);
    let (status, finish_reason) = match result {
        Ok(End::Returned(m)) if success => (EpisodeStatus::Success, FinishReason::PlanReturn(m)),
        Ok(End::Returned(m)) => (EpisodeStatus::Failure, FinishReason::EarlyFinish(m)),
        Ok(End::PlanError(m)) if success => (EpisodeStatus::Success, FinishReason::PlanError(m)),
        Ok(End::PlanError(m)) => (EpisodeStatus::Failure, FinishReason::PlanError(m)),
        Err(Stop::Budget) if success => (EpisodeStatus::Success, FinishReason::StepLimit),
        Err(Stop::Budget) => (EpisodeStatus::BudgetExhausted, FinishReason::StepLimit),
        Err(Stop::Fatal(m)) => (EpisodeStatus::Error, FinishReason::UnrecoverableError(m)),
    };
    let mut trace = EpisodeTrace {
        header,
        steps: mem::take(&mut run.steps),
        footer: TraceFooter {
            status,
            finish_reason: finish_reason.clone(),
            final_success: success,
            first_success_t: run.first_success_t,
            totals: Totals::default(),
            trailing_calls: mem::take(&mut run.pending_calls),
            plan_swaps: run
                .retired
                .iter()
                .map(|(seq, depth, at_swap, exec)| PlanSwap {
                    seq: *seq,
                    depth: *depth,
                    steps_at_swap: *at_swap,
                    steps_at_end: exec.steps_taken(),
                })
                .collect(),
            final_graph: serialize_graph(&final_graph),
        },
    };
    if let Some(last) = trace.steps.last_mut() {
        last.notes.append(&mut run.notes);
    }
    trace.footer.totals = trace.recount();
    (
        EpisodeOutcome {
            status,
            finish_reason,
            final_graph,
        },
        trace,
    )
}

impl Run<'_> {
    fn record(&mut self, frame: &Frame, plan_line: Option<usize>, effect: Effect) -> StepRecord {
        StepRecord {
            seq: self.steps.len() as u32,
            t: self.t,
            depth: frame.depth,
            task_key: frame.task_key.clone(),
            plan_line,
            effect,
            grounding: Vec::new(),
            action: None,
            action_label: None,
            flag: None,
            obs_digest: None,
            success_after: None,
            result: None,
            refinement: None,
            calls: mem::take(&mut self.pending_calls),
            notes: mem::take(&mut self.notes),
        }
    }

    fn push(&mut self, mut record: StepRecord) {
        record.calls.append(&mut self.pending_calls);
        record.notes.append(&mut self.notes);
        self.steps.push(record);
    }

    /// One model round trip. The call is logged before the caller sees it.
    fn ask(
        &mut self,
        frame: &Frame,
        kind: RequestKind,
        prompt: String,
        hints: RequestHints,
    ) -> Result<String, Stop> {
        let mut request = ModelRequest::new(kind, prompt);
        request.episode_id = self.task.task_id.clone();
        request.step_index = self.t;
        request.task_key = frame.task_key.clone();
        request.hints = hints;
        if kind.needs_observation() {
            request.observation = Some(self.obs.clone());
        }
        if kind == RequestKind::Refine || request.hints.compare_screen {
            request.previous_observation = self.prev_obs.clone();
        }
        self.ask_with(request)
    }

    fn ask_with(&mut self, request: ModelRequest) -> Result<String, Stop> {
        self.backend.sync_ground_truth(&self.state);
        let response = self
            .backend
            .complete(&request)
            .map_err(|e| Stop::Fatal(format!("{} request failed: {e}", request.kind)))?;
        self.pending_calls.push(CallRecord {
            kind: request.kind,
            input_tokens: response.input_tokens,
            output_tokens: response.output_tokens,
            wall_ms: response.wall_ms,
            response: response.text.clone(),
        });
        Ok(response.text)
    }

    fn observe(&mut self, mode: ObsMode) -> Observation {
        self.sim
            .observe(&mut self.state, mode)
            .expect("grid size was validated")
    }

    fn initial_graph(&mut self, frame: &Frame) -> Result<WorldModelGraph, Stop> {
        if let Some(store) = self.config.store.clone() {
            match store.load(&frame.app_name) {
                Ok(Some(g)) => return Ok(g),
                Ok(None) => {}
                Err(e) => self.notes.push(format!("stored graph ignored: {e}")),
            }
        }
        let ctx = PromptContext::new(&frame.goal, &frame.app_name);
        let prompt = render(Template::InitGraph, &ctx).map_err(|e| Stop::Fatal(e.to_string()))?;
        let mut last_error = String::new();
        for _ in 0..=self.config.max_replan_retries {
            let text = self.ask(
                frame,
                RequestKind::InitGraph,
                prompt.clone(),
                RequestHints::default(),
            )?;
            match parse_graph(&text) {
                Ok(g) => return Ok(g),
                Err(e) => last_error = e.to_string(),
            }
        }
        self.notes.push(format!(
            "no usable initial graph ({last_error}); starting empty"
        ));
        Ok(WorldModelGraph::new())
    }

    fn initial_plan(&mut self, frame: &Frame) -> Result<(String, String, ExecState), Stop> {
        let ctx = PromptContext::new(&frame.goal, &frame.app_name).with_graph(&frame.graph);
        let prompt = render(Template::InitPlan, &ctx).map_err(|e| Stop::Fatal(e.to_string()))?;
        let mut last_error = String::new();
        for _ in 0..=self.config.max_replan_retries {
            self.obs = self.observe(ObsMode::Elements);
            let text = self.ask(
                frame,
                RequestKind::InitPlan,
                prompt.clone(),
                RequestHints::default(),
            )?;
            let response = match parse_plan_response(&text) {
                Ok(r) => r,
                Err(e) => {
                    last_error = e.to_string();
                    continue;
                }
            };
            match parse_plan(&response.plan_text) {
                Ok(program) => {
                    return Ok((
                        response.current_vertex,
                        response.plan_text,
                        ExecState::new(Arc::new(program)),
                    ))
                }
                Err(e) => last_error = e.to_string(),
            }
        }
        Err(Stop::Fatal(format!(
            "no parseable plan after {} attempt(s): {last_error}",
            self.config.max_replan_retries + 1
        )))
    }

    fn run_agent(
        &mut self,
        goal: &str,
        app_name: &str,
        task_key: &str,
        depth: u32,
        graph_out: &mut WorldModelGraph,
    ) -> Result<End, Stop> {
        let mut frame = Frame {
            goal: goal.to_string(),
            app_name: app_name.to_string(),
            task_key: task_key.to_string(),
            depth,
            graph: WorldModelGraph::new(),
            plan_text: String::new(),
            exec: ExecState::new(Arc::new(
                parse_plan("def idle():\n    return \"\"\n").expect("static plan"),
            )),
            vertex: String::new(),
            remind: String::new(),
            thought: String::new(),
            ineffective_commands: Vec::new(),
        };
        frame.graph = self.initial_graph(&frame)?;
        let (vertex, plan_text, exec) = self.initial_plan(&frame)?;
        frame.vertex = vertex;
        frame.plan_text = plan_text;
        frame.exec = exec;
        let end = self.drive(&mut frame);
        *graph_out = frame.graph.clone();
        if let Some(store) = &self.config.store {
            if let Err(e) = store.save(&frame.app_name, &frame.graph) {
                self.notes.push(format!("graph not saved: {e}"));
            }
        }
        end
    }

    fn drive(&mut self, frame: &mut Frame) -> Result<End, Stop> {
        let mut result: Option<EffectResult> = None;
        loop {
            let Some(effect) = frame.exec.step(result.take()) else {
                return Ok(match frame.exec.status() {
                    ExecStatus::Finished(m) => End::Returned(m.clone()),
                    ExecStatus::Failed(e) => End::PlanError(e.to_string()),
                    other => End::PlanError(format!("interpreter stopped while {other:?}")),
                });
            };
            self.effects += 1;
            if self.effects > self.config.max_effects() {
                self.notes.push(format!(
                    "more than {} plan effects",
                    self.config.max_effects()
                ));
                return Err(Stop::Budget);
            }
            let line = frame.exec.current_line();
            match effect.clone() {
                Effect::Finished { message } => {
                    let rec = self.record(frame, line, effect);
                    self.push(rec);
                    return Ok(End::Returned(message));
                }
                Effect::DoWait => {
                    let before = self.obs.clone();
                    let outcome = self.sim.wait(&mut self.state);
                    self.prev_obs = Some(before);
                    self.obs = outcome.observation;
                    let mut rec = self.record(frame, line, effect);
                    rec.action = Some(TraceAction::Wait);
                    rec.action_label = Some(outcome.action_label);
                    rec.flag = Some(outcome.flag);
                    rec.obs_digest = Some(self.obs.digest());
                    self.note_success(&mut rec);
                    rec.result = Some(EffectResult::Done);
                    self.push(rec);
                    result = Some(EffectResult::Done);
                }
                Effect::QueryTrue {
                    statement,
                    compare_screen,
                } => {
                    let truth = self.eval_is_true(frame, &statement, compare_screen)?;
                    let mut rec = self.record(frame, line, effect);
                    rec.result = Some(EffectResult::Truth(truth));
                    self.push(rec);
                    result = Some(EffectResult::Truth(truth));
                }
                Effect::SpawnSubAgent { app, sub_task } => {
                    let rec = self.record(frame, line, effect);
                    let index = self.steps.len();
                    self.push(rec);
                    let message = if frame.depth + 1 > self.config.max_subagent_depth {
                        "sub-agent depth limit".to_string()
                    } else {
                        let key = format!("{app}: {sub_task}");
                        let mut child_graph = WorldModelGraph::new();
                        match self.run_agent(
                            &sub_task,
                            &app,
                            &key,
                            frame.depth + 1,
                            &mut child_graph,
                        )? {
                            End::Returned(m) => m,
                            End::PlanError(m) => format!("sub-agent failed: {m}"),
                        }
                    };
                    self.obs = self.observe(ObsMode::Elements);
                    self.steps[index].result = Some(EffectResult::Message(message.clone()));
                    result = Some(EffectResult::Message(message));
                }
                Effect::DoEdge { source, action, .. } => {
                    if self.t >= self.config.max_steps {
                        let rec = self.record(frame, line, effect);
                        self.push(rec);
                        return Err(Stop::Budget);
                    }
                    let swapped = self.do_edge(frame, line, effect, &source, &action)?;
                    if !swapped {
                        result = Some(EffectResult::Done);
                    }
                }
            }
        }
    }

    fn note_success(&mut self, rec: &mut StepRecord) {
        let ok = self.sim.check_success(self.task, &self.state);
        rec.success_after = Some(ok);
        if ok && self.first_success_t.is_none() {
            self.first_success_t = Some(self.t);
        }
    }

    /// Grounds, executes and refines one edge. Returns whether the plan was replaced.
    fn do_edge(
        &mut self,
        frame: &mut Frame,
        line: Option<usize>,
        effect: Effect,
        source: &str,
        action: &str,
    ) -> Result<bool, Stop> {
        let grounded = self.ground(frame, source, action)?;
        let before = self.obs.clone();
        let mut rec_notes = Vec::new();
        let (detailed, outcome) = match &grounded.command {
            Some(cmd) => {
                let outcome = self.sim.execute(&mut self.state, cmd);
                self.t += 1;
                self.prev_obs = Some(before);
                self.obs = outcome.observation.clone();
                if let Some(n) = &outcome.note {
                    rec_notes.push(n.clone());
                }
                (cmd.to_string(), Some(outcome))
            }
            None => {
                let why = grounded.failure.clone().unwrap_or_default();
                rec_notes.push(format!("grounding failed: {why}"));
                (format!("none (no element could be grounded: {why})"), None)
            }
        };
        let mut rec = self.record(frame, line, effect);
        rec.grounding = grounded.attempts;
        rec.notes.extend(rec_notes);
        if let (Some(cmd), Some(outcome)) = (grounded.command, &outcome) {
            rec.action = Some(TraceAction::Command {
                command: cmd,
                mode: grounded.mode,
            });
            rec.action_label = Some(outcome.action_label.clone());
            rec.flag = Some(outcome.flag);
            rec.obs_digest = Some(self.obs.digest());
            self.note_success(&mut rec);
        }
        let refinement = self.refine(frame, source, action, &detailed)?;
        let no_effect = outcome
            .as_ref()
            .is_some_and(|o| o.flag == EffectFlag::NoEffect);
        if outcome.is_some() {
            if refinement.ineffective || no_effect {
                self.ineffective_streak += 1;
                frame.ineffective_commands.push(detailed.clone());
            } else {
                self.ineffective_streak = 0;
            }
        }
        let swapped = self.apply_refinement(frame, &refinement);
        rec.refinement = Some(RefinementNote {
            successful_and_expected: refinement.successful_and_expected,
            ineffective: refinement.ineffective,
            current_vertex: refinement.current_vertex.clone(),
            diff_counts: [
                refinement.diff.removed_vertices.len(),
                refinement.diff.added_vertices.len(),
                refinement.diff.removed_edges.len(),
                refinement.diff.added_edges.len(),
            ],
            plan_replaced: swapped,
            remind: refinement.remind.clone(),
        });
        rec.result = (!swapped).then_some(EffectResult::Done);
        self.push(rec);
        if swapped {
            // The retired plan's seq is the record just pushed.
            if let Some(last) = self.retired.last_mut() {
                last.0 = self.steps.len() as u32 - 1;
            }
        }
        Ok(swapped)
    }

    fn ground(&mut self, frame: &Frame, source: &str, action: &str) -> Result<Grounded, Stop> {
        let kind = ActionType::of_phrase(action);
        let mut attempts = Vec::new();
        if kind == Some(ActionType::Back) {
            return Ok(Grounded {
                command: Some(ActionCommand::Back),
                mode: ObsMode::Elements,
                attempts,
                failure: None,
            });
        }
        let modes: Vec<ObsMode> = if self.ineffective_streak >= self.config.grid_fallback_after {
            vec![self.grid_mode()]
        } else {
            vec![ObsMode::Elements, self.grid_mode()]
        };
        let mut wrong: BTreeSet<(String, u32)> = BTreeSet::new();
        for mode in modes {
            let obs = self.observe(mode);
            let digest = obs.digest();
            let saved = mem::replace(&mut self.obs, obs);
            for _ in 0..self.config.max_verify_attempts {
                let excluded: Vec<u32> = wrong
                    .iter()
                    .filter(|(d, _)| *d == digest)
                    .map(|(_, n)| *n)
                    .collect();
                let prompt =
                    render_select_action(&frame.goal, source, action, &excluded, &frame.remind);
                let hints = RequestHints {
                    action: Some(action.to_string()),
                    excluded,
                    ..Default::default()
                };
                let text = self.ask(frame, RequestKind::SelectAction, prompt, hints)?;
                let attempt = |proposal, verdict| GroundingAttempt {
                    mode,
                    obs_digest: digest.clone(),
                    proposal,
                    verdict,
                };
                let Some(cmd) = parse_command_response(&text) else {
                    attempts.push(attempt(None, Verdict::Invalid));
                    continue;
                };
                let Some(n) = cmd.target_number() else {
                    let fits = match &cmd {
                        ActionCommand::Text { .. } => kind == Some(ActionType::Type),
                        ActionCommand::Back => true,
                        _ => false,
                    };
                    if fits {
                        attempts.push(attempt(Some(cmd.clone()), Verdict::Unverified));
                        self.obs = saved;
                        return Ok(Grounded {
                            command: Some(cmd),
                            mode,
                            attempts,
                            failure: None,
                        });
                    }
                    attempts.push(attempt(Some(cmd), Verdict::Invalid));
                    continue;
                };
                if wrong.contains(&(digest.clone(), n)) {
                    attempts.push(attempt(Some(cmd), Verdict::Repeat));
                    continue;
                }
                let detail = match self.sim.crop_query(&self.state, n) {
                    Ok(d) => d,
                    Err(_) => {
                        wrong.insert((digest.clone(), n));
                        attempts.push(attempt(Some(cmd), Verdict::Invalid));
                        continue;
                    }
                };
                let element = match &detail.value {
                    Some(v) => {
                        format!("{} \"{}\" (value: {v})", detail.kind.as_str(), detail.label)
                    }
                    None => format!("{} \"{}\"", detail.kind.as_str(), detail.label),
                };
                let prompt = render_verify_action(&frame.goal, action, &cmd.to_string(), &element);
                let hints = RequestHints {
                    action: Some(action.to_string()),
                    candidate: Some(detail),
                    command: Some(cmd.to_string()),
                    ..Default::default()
                };
                let verdict = self.ask(frame, RequestKind::VerifyAction, prompt, hints)?;
                if parse_bool_token(&verdict) == Some(true) {
                    attempts.push(attempt(Some(cmd.clone()), Verdict::Accepted));
                    self.obs = saved;
                    return Ok(Grounded {
                        command: Some(cmd),
                        mode,
                        attempts,
                        failure: None,
                    });
                }
                wrong.insert((digest.clone(), n));
                attempts.push(attempt(Some(cmd), Verdict::Rejected));
            }
            self.obs = saved;
        }
        // Leave the element numbering current for whatever comes next.
        self.obs = self.observe(ObsMode::Elements);
        Ok(Grounded {
            command: None,
            mode: ObsMode::Elements,
            attempts,
            failure: Some(format!("no verified candidate for {action:?}")),
        })
    }

    fn grid_mode(&self) -> ObsMode {
        ObsMode::Grid {
            rows: self.config.grid.0,
            cols: self.config.grid.1,
        }
    }

    fn eval_is_true(
        &mut self,
        frame: &Frame,
        statement: &str,
        compare_screen: bool,
    ) -> Result<bool, Stop> {
        self.obs = self.observe(ObsMode::Elements);
        let prompt = render_query_true(&frame.goal, statement, compare_screen);
        for _ in 0..2 {
            let hints = RequestHints {
                statement: Some(statement.to_string()),
                compare_screen,
                ..Default::default()
            };
            let text = self.ask(frame, RequestKind::QueryTrue, prompt.clone(), hints)?;
            if let Some(b) = parse_bool_token(&text) {
                return Ok(b);
            }
        }
        self.notes.push(format!(
            "no True/False answer for {statement:?}; treated as False"
        ));
        Ok(false)
    }

    fn refine(
        &mut self,
        frame: &Frame,
        source: &str,
        action: &str,
        detailed: &str,
    ) -> Result<RefinementOutcome, Stop> {
        let mut ctx = PromptContext::new(&frame.goal, &frame.app_name).with_graph(&frame.graph);
        ctx.plan_text = Some(frame.plan_text.clone());
        ctx.previous_vertex = Some(source.to_string());
        ctx.last_action = Some(action.to_string());
        ctx.detailed_action = Some(detailed.to_string());
        ctx.thought = Some(frame.thought.clone());
        ctx.summary = Some(format!(
            "{} action(s) executed; the screen now shows {}",
            self.t, self.obs.screen_text
        ));
        ctx.history = Some(self.state.history.join("; "));
        ctx.repeated_elements = Some(frame.ineffective_commands.join(", "));
        let prompt = render(Template::Refine, &ctx).map_err(|e| Stop::Fatal(e.to_string()))?;
        let hints = RequestHints {
            action: Some(action.to_string()),
            command: Some(detailed.to_string()),
            ..Default::default()
        };
        let mut last_error = String::new();
        for _ in 0..2 {
            let text = self.ask(frame, RequestKind::Refine, prompt.clone(), hints.clone())?;
            match parse_refinement_response(&text) {
                Ok(o) => return Ok(o),
                Err(e) => last_error = e.to_string(),
            }
        }
        self.notes.push(format!(
            "unreadable refinement ({last_error}); continuing unchanged"
        ));
        Ok(RefinementOutcome::no_op(frame.vertex.clone()))
    }

    fn apply_refinement(&mut self, frame: &mut Frame, outcome: &RefinementOutcome) -> bool {
        for w in &outcome.warnings {
            self.notes
                .push(format!("refinement diff line {}: {}", w.line, w.message));
        }
        if !outcome.diff.is_empty() {
            let (graph, report) = apply_diff(&frame.graph, &outcome.diff);
            if !report.is_clean() {
                self.notes
                    .push(format!("diff applied with mismatches: {report:?}"));
            }
            frame.graph = graph;
        }
        if !outcome.current_vertex.is_empty() {
            frame.vertex = outcome.current_vertex.clone();
        }
        frame.remind = outcome.remind.clone();
        frame.thought = outcome.thoughts.clone();
        let plan_for_calls = outcome
            .revised_plan_text
            .as_deref()
            .unwrap_or(&frame.plan_text);
        for (app, sub) in &outcome.added_other_app_calls {
            if !(plan_for_calls.contains(app.as_str()) && plan_for_calls.contains(sub.as_str())) {
                self.notes.push(format!(
                    "other_app_function({app:?}, {sub:?}) was announced but is not in the plan"
                ));
            }
        }
        let Some(text) = &outcome.revised_plan_text else {
            return false;
        };
        match parse_plan(text) {
            Ok(program) => {
                let mut old = mem::replace(&mut frame.exec, ExecState::new(Arc::new(program)));
                old.poison("replaced by a revised plan");
                let steps = old.steps_taken();
                self.retired.push((0, frame.depth, steps, old));
                frame.plan_text = text.clone();
                true
            }
            Err(e) => {
                self.notes.push(format!("revised plan ignored: {e}"));
                false
            }
        }
    }
}
