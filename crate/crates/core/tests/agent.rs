use std::collections::{BTreeMap, VecDeque};
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use foresight::agent::{run_episode, AgentConfig};
use foresight::device_sim::{
    ActionCommand, AppDefinition, Condition, DeviceState, EffectFlag, ObsMode, Simulator, TaskSpec,
};
use foresight::harness::trace::{EpisodeStatus, EpisodeTrace, FinishReason, TraceAction, Verdict};
use foresight::model_backend::{
    BackendError, ModelBackend, ModelRequest, ModelResponse, OracleBackend, OracleBook, OracleTask,
    RequestKind, TruthRule,
};
use foresight::plan_dsl::{Effect, EffectResult, Value};
use foresight::world_model::GraphStore;

fn sim() -> Arc<Simulator> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/apps");
    let apps = ["settings.json", "contacts.json", "notes.json", "tube.json"]
        .iter()
        .map(|f| AppDefinition::load(&dir.join(f)).unwrap())
        .collect();
    Arc::new(Simulator::new(apps).unwrap())
}

fn var(name: &str, v: Value) -> Condition {
    Condition::Var {
        var: name.into(),
        eq: v,
    }
}

fn task(id: &str, goal: &str, app: &str, start: Option<&str>, success: Condition) -> TaskSpec {
    TaskSpec {
        task_id: id.into(),
        goal: goal.into(),
        app_name: app.into(),
        start_screen: start.map(str::to_string),
        overrides: BTreeMap::new(),
        success,
        optimal_steps: 1,
        optimal_actions: Vec::new(),
    }
}

const SETTINGS_GRAPH: &str = r#"Vertices:
    Name: "Main page of the Settings app"
    Description: Top level list of settings.
    Name: "Wi-Fi (WLAN) settings"
    Description: WLAN switch and nearby networks.

Edges:
    Edge: E("Main page of the Settings app", "tap Wi-Fi") -> "Wi-Fi (WLAN) settings"
"#;

fn oracle_task(app: &str, vertex: &str, body: &str, truths: &[(&str, TruthRule)]) -> OracleTask {
    OracleTask {
        app_name: app.into(),
        graph_text: Some(SETTINGS_GRAPH.into()),
        plan_text: Some(format!(
            "Current vertex: {vertex}\nPlan:\ndef new_plan():\n{body}"
        )),
        truths: truths
            .iter()
            .map(|(k, v)| (k.to_string(), v.clone()))
            .collect(),
    }
}

fn wifi_on() -> TruthRule {
    TruthRule::Holds(var("settings.wifi_enabled", Value::Bool(true)))
}

/// Oracle answers, except that queued replies of a matching kind win.
/// Every request is kept for inspection.
struct Scripted {
    inner: OracleBackend,
    queue: VecDeque<(RequestKind, String)>,
    seen: Arc<Mutex<Vec<ModelRequest>>>,
}

impl Scripted {
    fn new(sim: &Arc<Simulator>, book: OracleBook, queue: Vec<(RequestKind, &str)>) -> Self {
        Scripted {
            inner: OracleBackend::new(sim.clone(), Arc::new(book)),
            queue: queue.into_iter().map(|(k, t)| (k, t.to_string())).collect(),
            seen: Arc::default(),
        }
    }
}

impl ModelBackend for Scripted {
    fn complete(&mut self, request: &ModelRequest) -> Result<ModelResponse, BackendError> {
        self.seen.lock().unwrap().push(request.clone());
        if self.queue.front().is_some_and(|(k, _)| *k == request.kind) {
            let (_, text) = self.queue.pop_front().unwrap();
            return Ok(ModelResponse::estimated(request, text));
        }
        self.inner.complete(request)
    }

    fn sync_ground_truth(&mut self, state: &DeviceState) {
        self.inner.sync_ground_truth(state);
    }

    fn name(&self) -> &'static str {
        "scripted-oracle"
    }
}

fn run(
    sim: &Simulator,
    t: &TaskSpec,
    backend: &mut dyn ModelBackend,
    config: &AgentConfig,
) -> EpisodeTrace {
    let (outcome, trace) = run_episode(t, backend, sim, config);
    assert_eq!(outcome.status, trace.footer.status);
    assert_eq!(trace.footer.totals, trace.recount());
    let seqs: Vec<u32> = trace.steps.iter().map(|s| s.seq).collect();
    assert!(seqs.windows(2).all(|w| w[0] < w[1]));
    trace
}

fn edge_steps(trace: &EpisodeTrace) -> Vec<&foresight::harness::trace::StepRecord> {
    trace
        .steps
        .iter()
        .filter(|s| matches!(s.effect, Effect::DoEdge { .. }))
        .collect()
}

#[test]
fn enables_wifi_from_home_with_the_oracle() {
    let sim = sim();
    let t = task(
        "wifi",
        "enable Wi-Fi",
        "Settings",
        None,
        var("wifi_enabled", Value::Bool(true)),
    );
    let mut book = OracleBook::new();
    book.insert(
        "wifi",
        oracle_task(
            "Settings",
            "Homepage of the phone",
            "    E(\"Homepage of the phone\", \"tap the Settings app\")\n    E(\"Main page of the Settings app\", \"tap Wi-Fi\")\n    if not isTRUE(\"WLAN switch on\"):\n        E(\"Wi-Fi (WLAN) settings\", \"tap the WLAN switch\")\n    return \"Task completed\"\n",
            &[("WLAN switch on", wifi_on())],
        ),
    );
    let mut backend = OracleBackend::new(sim.clone(), Arc::new(book));
    let trace = run(&sim, &t, &mut backend, &AgentConfig::default());
    assert_eq!(trace.footer.status, EpisodeStatus::Success);
    assert_eq!(
        trace.footer.finish_reason,
        FinishReason::PlanReturn("Task completed".into())
    );
    assert!(trace.footer.totals.actions <= 5);
    assert_eq!(
        trace.action_labels(),
        ["tap Settings", "tap Wi-Fi", "tap WLAN switch"]
    );
    assert_eq!(trace.footer.first_success_t, Some(3));
    assert!(trace.footer.totals.tokens() > 0);
    let truth = trace
        .steps
        .iter()
        .find(|s| matches!(s.effect, Effect::QueryTrue { .. }))
        .unwrap();
    assert_eq!(truth.result, Some(EffectResult::Truth(false)));
}

#[test]
fn already_satisfied_task_succeeds_without_acting() {
    let sim = sim();
    let mut t = task(
        "on",
        "enable Wi-Fi",
        "Settings",
        Some("main"),
        var("wifi_enabled", Value::Bool(true)),
    );
    t.overrides.insert("wifi_enabled".into(), Value::Bool(true));
    let mut book = OracleBook::new();
    book.insert(
        "on",
        oracle_task(
            "Settings",
            "Main page of the Settings app",
            "    if isTRUE(\"WLAN switch on\"):\n        return \"Already on\"\n    E(\"Main page of the Settings app\", \"tap Wi-Fi\")\n    return \"Task completed\"\n",
            &[("WLAN switch on", wifi_on())],
        ),
    );
    let mut backend = OracleBackend::new(sim.clone(), Arc::new(book));
    let trace = run(&sim, &t, &mut backend, &AgentConfig::default());
    assert_eq!(trace.footer.status, EpisodeStatus::Success);
    assert_eq!(trace.footer.totals.actions, 0);
    assert_eq!(trace.footer.first_success_t, Some(0));
}

fn single_tap_book(id: &str, action: &str) -> OracleBook {
    let mut book = OracleBook::new();
    book.insert(
        id,
        oracle_task(
            "Settings",
            "Main page of the Settings app",
            &format!(
                "    E(\"Main page of the Settings app\", \"{action}\")\n    return \"done\"\n"
            ),
            &[],
        ),
    );
    book
}

fn main_page_number(sim: &Simulator, t: &TaskSpec, label: &str) -> u32 {
    let (_, obs) = sim.reset(t).unwrap();
    obs.entries
        .iter()
        .find(|e| e.label == label)
        .unwrap()
        .number
}

#[test]
fn rejected_proposals_are_excluded_on_the_next_ask() {
    let sim = sim();
    let t = task(
        "g",
        "open Wi-Fi",
        "Settings",
        Some("main"),
        Condition::Screen {
            screen: "wlan".into(),
        },
    );
    let battery = main_page_number(&sim, &t, "Battery");
    let display = main_page_number(&sim, &t, "Display");
    let wifi = main_page_number(&sim, &t, "Wi-Fi");
    for k in 1..=2usize {
        let mut queue = Vec::new();
        for n in [battery, display].iter().take(k) {
            queue.push((RequestKind::SelectAction, format!("tap({n})")));
            queue.push((RequestKind::VerifyAction, "False".to_string()));
        }
        let queue: Vec<(RequestKind, &str)> = queue.iter().map(|(k, s)| (*k, s.as_str())).collect();
        let mut backend = Scripted::new(&sim, single_tap_book("g", "tap Wi-Fi"), queue);
        let seen = backend.seen.clone();
        let trace = run(&sim, &t, &mut backend, &AgentConfig::default());
        assert_eq!(trace.footer.status, EpisodeStatus::Success, "k={k}");
        let step = edge_steps(&trace)[0];
        let verdicts: Vec<Verdict> = step.grounding.iter().map(|g| g.verdict).collect();
        let mut expected = vec![Verdict::Rejected; k];
        expected.push(Verdict::Accepted);
        assert_eq!(verdicts, expected);
        assert!(step.grounding.iter().all(|g| g.mode == ObsMode::Elements));
        assert_eq!(
            step.executed_command(),
            Some(&ActionCommand::Tap { number: wifi })
        );
        let excluded: Vec<Vec<u32>> = seen
            .lock()
            .unwrap()
            .iter()
            .filter(|r| r.kind == RequestKind::SelectAction)
            .map(|r| r.hints.excluded.clone())
            .collect();
        let wrong = [battery, display];
        for (i, ex) in excluded.iter().enumerate() {
            let mut want = wrong[..i.min(k)].to_vec();
            want.sort();
            assert_eq!(ex, &want, "k={k} ask {i}");
        }
    }
}

#[test]
fn exhausting_element_attempts_falls_back_to_the_grid() {
    let sim = sim();
    let t = task(
        "g",
        "open Wi-Fi",
        "Settings",
        Some("main"),
        Condition::Screen {
            screen: "wlan".into(),
        },
    );
    let wrong = [
        main_page_number(&sim, &t, "Battery"),
        main_page_number(&sim, &t, "Display"),
        main_page_number(&sim, &t, "Network & internet"),
    ];
    let mut queue = Vec::new();
    for n in wrong {
        queue.push((RequestKind::SelectAction, format!("tap({n})")));
        queue.push((RequestKind::VerifyAction, "False".to_string()));
    }
    let queue: Vec<(RequestKind, &str)> = queue.iter().map(|(k, s)| (*k, s.as_str())).collect();
    let config = AgentConfig::default();
    let mut backend = Scripted::new(&sim, single_tap_book("g", "tap Wi-Fi"), queue);
    let trace = run(&sim, &t, &mut backend, &config);
    assert_eq!(trace.footer.status, EpisodeStatus::Success);
    let step = edge_steps(&trace)[0];
    let modes: Vec<ObsMode> = step.grounding.iter().map(|g| g.mode).collect();
    let grid = ObsMode::Grid {
        rows: config.grid.0,
        cols: config.grid.1,
    };
    assert_eq!(
        modes,
        [
            ObsMode::Elements,
            ObsMode::Elements,
            ObsMode::Elements,
            grid
        ]
    );
    assert_eq!(step.grounding[3].verdict, Verdict::Accepted);
    match &step.action {
        Some(TraceAction::Command { mode, .. }) => assert_eq!(*mode, grid),
        other => panic!("{other:?}"),
    }
    assert_eq!(step.action_label.as_deref(), Some("tap Wi-Fi"));
}

#[test]
fn repeated_wrong_proposal_is_not_verified_again() {
    let sim = sim();
    let t = task(
        "g",
        "open Wi-Fi",
        "Settings",
        Some("main"),
        Condition::Screen {
            screen: "wlan".into(),
        },
    );
    let battery = main_page_number(&sim, &t, "Battery").to_string();
    let pick = format!("tap({battery})");
    let queue = vec![
        (RequestKind::SelectAction, pick.as_str()),
        (RequestKind::VerifyAction, "False"),
        (RequestKind::SelectAction, pick.as_str()),
    ];
    let mut backend = Scripted::new(&sim, single_tap_book("g", "tap Wi-Fi"), queue);
    let seen = backend.seen.clone();
    let trace = run(&sim, &t, &mut backend, &AgentConfig::default());
    let verdicts: Vec<Verdict> = edge_steps(&trace)[0]
        .grounding
        .iter()
        .map(|g| g.verdict)
        .collect();
    assert_eq!(
        verdicts,
        [Verdict::Rejected, Verdict::Repeat, Verdict::Accepted]
    );
    let verifies = seen
        .lock()
        .unwrap()
        .iter()
        .filter(|r| r.kind == RequestKind::VerifyAction)
        .count();
    assert_eq!(verifies, 2);
}

#[test]
fn grid_first_after_consecutive_ineffective_actions() {
    let sim = sim();
    let t = task(
        "g",
        "open Wi-Fi",
        "Settings",
        Some("main"),
        Condition::Screen {
            screen: "wlan".into(),
        },
    );
    let mut book = OracleBook::new();
    let title = "    E(\"Main page of the Settings app\", \"tap Settings title\")\n";
    book.insert(
        "g",
        oracle_task(
            "Settings",
            "Main page of the Settings app",
            &format!("{title}{title}{title}    E(\"Main page of the Settings app\", \"tap Wi-Fi\")\n    return \"done\"\n"),
            &[],
        ),
    );
    let config = AgentConfig::default();
    let mut backend = OracleBackend::new(sim.clone(), Arc::new(book));
    let trace = run(&sim, &t, &mut backend, &config);
    let edges = edge_steps(&trace);
    assert_eq!(edges.len(), 4);
    for s in &edges[..3] {
        assert_eq!(s.flag, Some(EffectFlag::NoEffect));
        assert_eq!(s.grounding[0].mode, ObsMode::Elements);
    }
    assert!(matches!(edges[3].grounding[0].mode, ObsMode::Grid { .. }));
    assert_eq!(trace.footer.status, EpisodeStatus::Success);
}

#[test]
fn back_phrases_skip_element_selection() {
    let sim = sim();
    let t = task(
        "b",
        "leave Wi-Fi",
        "Settings",
        Some("wlan"),
        Condition::Screen {
            screen: "home".into(),
        },
    );
    let mut book = OracleBook::new();
    book.insert(
        "b",
        oracle_task(
            "Settings",
            "Wi-Fi (WLAN) settings",
            "    E(\"Wi-Fi (WLAN) settings\", \"KEYCODE_BACK\")\n    return \"done\"\n",
            &[],
        ),
    );
    let mut backend = Scripted::new(&sim, book, Vec::new());
    let seen = backend.seen.clone();
    let trace = run(&sim, &t, &mut backend, &AgentConfig::default());
    assert_eq!(trace.footer.status, EpisodeStatus::Success);
    let step = edge_steps(&trace)[0];
    assert_eq!(step.executed_command(), Some(&ActionCommand::Back));
    assert!(step.grounding.is_empty());
    let kinds: Vec<RequestKind> = seen.lock().unwrap().iter().map(|r| r.kind).collect();
    assert!(!kinds.contains(&RequestKind::SelectAction));
    assert!(!kinds.contains(&RequestKind::VerifyAction));
}

const REVISION: &str = "Observation of the current screenshot: Wi-Fi settings.
Thoughts: The switch is right here.
Removed vertices:
Added vertices:
Removed edges:
Added edges:
Current vertex: Wi-Fi (WLAN) settings
Added functions for other apps:
Successful and expected action: True
Ineffective: False
Revised plan:
def new_plan():
    E(\"Wi-Fi (WLAN) settings\", \"tap the WLAN switch\")
    return \"revised\"
Remind:
Impact of the action on the element on the task:
";

#[test]
fn revised_plan_replaces_and_poisons_the_old_one() {
    let sim = sim();
    let t = task(
        "r",
        "enable Wi-Fi",
        "Settings",
        Some("main"),
        var("wifi_enabled", Value::Bool(true)),
    );
    let mut book = OracleBook::new();
    book.insert(
        "r",
        oracle_task(
            "Settings",
            "Main page of the Settings app",
            "    E(\"Main page of the Settings app\", \"tap Wi-Fi\")\n    E(\"Wi-Fi (WLAN) settings\", \"tap CANCEL\")\n    return \"original\"\n",
            &[],
        ),
    );
    let mut backend = Scripted::new(&sim, book, vec![(RequestKind::Refine, REVISION)]);
    let trace = run(&sim, &t, &mut backend, &AgentConfig::default());
    assert_eq!(trace.footer.status, EpisodeStatus::Success);
    assert_eq!(
        trace.footer.finish_reason,
        FinishReason::PlanReturn("revised".into())
    );
    assert_eq!(trace.action_labels(), ["tap Wi-Fi", "tap WLAN switch"]);
    let swaps = &trace.footer.plan_swaps;
    assert_eq!(swaps.len(), 1);
    assert_eq!(swaps[0].steps_at_swap, swaps[0].steps_at_end);
    let swap_step = &trace.steps[swaps[0].seq as usize];
    assert!(swap_step.refinement.as_ref().unwrap().plan_replaced);
    assert_eq!(swap_step.result, None);
    assert!(!trace
        .steps
        .iter()
        .any(|s| s.action_label.as_deref() == Some("tap CANCEL")));
}

fn tube_book(child_body: &str) -> OracleBook {
    let mut book = OracleBook::new();
    book.insert(
        "tube",
        OracleTask {
            app_name: "Tube".into(),
            graph_text: Some(String::new()),
            plan_text: Some(
                "Current vertex: Homepage of the phone\nPlan:\ndef new_plan():\n    E(\"Homepage of the phone\", \"tap Tube app\")\n    if isTRUE(\"No internet connection\"):\n        E(\"Feed of Tube\", \"KEYCODE_BACK\")\n        other_app_function(\"Settings\", \"enable Wi-Fi\")\n        E(\"Homepage of the phone\", \"tap Tube app\")\n    E(\"Feed of Tube\", \"tap MrBeast\")\n    E(\"Channel page of Tube\", \"tap Subscribe\")\n    return \"Task completed\"\n"
                    .into(),
            ),
            truths: [(
                "No internet connection".to_string(),
                TruthRule::Holds(var("settings.wifi_enabled", Value::Bool(false))),
            )]
            .into(),
        },
    );
    book.insert(
        "Settings: enable Wi-Fi",
        oracle_task(
            "Settings",
            "Homepage of the phone",
            child_body,
            &[("WLAN switch on", wifi_on())],
        ),
    );
    book
}

const CHILD_PLAN: &str = "    E(\"Homepage of the phone\", \"tap Settings app\")\n    E(\"Main page of the Settings app\", \"tap Wi-Fi\")\n    E(\"Wi-Fi (WLAN) settings\", \"tap the WLAN switch\")\n    E(\"Wi-Fi (WLAN) settings\", \"KEYCODE_BACK\")\n    E(\"Main page of the Settings app\", \"KEYCODE_BACK\")\n    return \"Wi-Fi enabled\"\n";

fn tube_task() -> TaskSpec {
    let mut t = task(
        "tube",
        "subscribe to MrBeast in Tube",
        "Tube",
        None,
        var("subscribed", Value::Bool(true)),
    );
    t.overrides
        .insert("settings.wifi_enabled".into(), Value::Bool(false));
    t
}

#[test]
fn sub_agent_runs_in_place_and_reports_back() {
    let sim = sim();
    let t = tube_task();
    let mut backend = OracleBackend::new(sim.clone(), Arc::new(tube_book(CHILD_PLAN)));
    let trace = run(&sim, &t, &mut backend, &AgentConfig::default());
    assert_eq!(
        trace.footer.status,
        EpisodeStatus::Success,
        "{:#?}",
        trace.footer
    );
    let spawn = trace
        .steps
        .iter()
        .find(|s| matches!(s.effect, Effect::SpawnSubAgent { .. }))
        .unwrap();
    assert_eq!(spawn.depth, 0);
    assert_eq!(
        spawn.result,
        Some(EffectResult::Message("Wi-Fi enabled".into()))
    );
    let child: Vec<_> = trace.steps.iter().filter(|s| s.depth == 1).collect();
    assert_eq!(child.len(), 6);
    assert!(child
        .iter()
        .all(|s| s.task_key == "Settings: enable Wi-Fi" && s.seq > spawn.seq));
    assert_eq!(
        trace.action_labels(),
        [
            "tap Tube",
            "back",
            "tap Settings",
            "tap Wi-Fi",
            "tap WLAN switch",
            "back",
            "back",
            "tap Tube",
            "tap MrBeast",
            "tap Subscribe"
        ]
    );
}

#[test]
fn nested_spawn_beyond_the_depth_limit_is_refused() {
    let sim = sim();
    let t = tube_task();
    let nested = format!("    other_app_function(\"Notes\", \"make a note\")\n{CHILD_PLAN}");
    let mut backend = OracleBackend::new(sim.clone(), Arc::new(tube_book(&nested)));
    let trace = run(&sim, &t, &mut backend, &AgentConfig::default());
    let refused = trace
        .steps
        .iter()
        .find(|s| s.depth == 1 && matches!(s.effect, Effect::SpawnSubAgent { .. }))
        .unwrap();
    assert_eq!(
        refused.result,
        Some(EffectResult::Message("sub-agent depth limit".into()))
    );
    assert!(trace.steps.iter().all(|s| s.depth <= 1));
    assert_eq!(trace.footer.status, EpisodeStatus::Success);
}

#[test]
fn parent_and_child_share_one_step_budget() {
    let sim = sim();
    let t = tube_task();
    let config = AgentConfig {
        max_steps: 4,
        ..AgentConfig::default()
    };
    let mut backend = OracleBackend::new(sim.clone(), Arc::new(tube_book(CHILD_PLAN)));
    let trace = run(&sim, &t, &mut backend, &config);
    assert_eq!(trace.footer.status, EpisodeStatus::BudgetExhausted);
    assert_eq!(trace.footer.finish_reason, FinishReason::StepLimit);
    assert_eq!(trace.footer.totals.actions, 4);
    let by_depth = |d: u32| trace.executed().filter(|s| s.depth == d).count();
    assert_eq!((by_depth(0), by_depth(1)), (2, 2));
}

#[test]
fn compare_screen_query_sees_whether_the_screen_changed() {
    let sim = sim();
    let body = "    E(\"Wi-Fi (WLAN) settings\", \"swipe down\")\n    if isTrue(\"The screen is the same as before\", compare_screen = True):\n        return \"unchanged\"\n    return \"changed\"\n";
    let t = task(
        "c",
        "look around",
        "Settings",
        Some("wlan"),
        Condition::Screen {
            screen: "wlan".into(),
        },
    );
    let mut book = OracleBook::new();
    book.insert(
        "c",
        oracle_task("Settings", "Wi-Fi (WLAN) settings", body, &[]),
    );
    let mut backend = Scripted::new(&sim, book, Vec::new());
    let seen = backend.seen.clone();
    let trace = run(&sim, &t, &mut backend, &AgentConfig::default());
    assert_eq!(
        trace.footer.finish_reason,
        FinishReason::PlanReturn("unchanged".into())
    );
    let query = seen
        .lock()
        .unwrap()
        .iter()
        .find(|r| r.kind == RequestKind::QueryTrue)
        .cloned()
        .unwrap();
    assert!(query.hints.compare_screen);
    assert!(query.previous_observation.is_some());

    let body = "    E(\"Main page of the Settings app\", \"swipe down\")\n    if isTrue(\"The screen is the same as before\", compare_screen = True):\n        return \"unchanged\"\n    return \"changed\"\n";
    let t = task(
        "c",
        "look around",
        "Settings",
        Some("main"),
        Condition::Screen {
            screen: "main".into(),
        },
    );
    let mut book = OracleBook::new();
    book.insert(
        "c",
        oracle_task("Settings", "Main page of the Settings app", body, &[]),
    );
    let mut backend = OracleBackend::new(sim.clone(), Arc::new(book));
    let trace = run(&sim, &t, &mut backend, &AgentConfig::default());
    assert_eq!(
        trace.footer.finish_reason,
        FinishReason::PlanReturn("changed".into())
    );
}

#[test]
fn early_return_is_a_failure_and_missing_fixture_is_an_error() {
    let sim = sim();
    let t = task(
        "e",
        "enable Wi-Fi",
        "Settings",
        Some("main"),
        var("wifi_enabled", Value::Bool(true)),
    );
    let mut book = OracleBook::new();
    book.insert(
        "e",
        oracle_task(
            "Settings",
            "Main page of the Settings app",
            "    return \"nothing to do\"\n",
            &[],
        ),
    );
    let mut backend = OracleBackend::new(sim.clone(), Arc::new(book));
    let trace = run(&sim, &t, &mut backend, &AgentConfig::default());
    assert_eq!(trace.footer.status, EpisodeStatus::Failure);
    assert_eq!(
        trace.footer.finish_reason,
        FinishReason::EarlyFinish("nothing to do".into())
    );

    let mut backend = OracleBackend::new(sim.clone(), Arc::new(OracleBook::new()));
    let trace = run(&sim, &t, &mut backend, &AgentConfig::default());
    assert_eq!(trace.footer.status, EpisodeStatus::Error);
    assert!(matches!(
        trace.footer.finish_reason,
        FinishReason::UnrecoverableError(_)
    ));
}

#[test]
fn unparseable_plans_are_retried_then_fatal() {
    let sim = sim();
    let t = task(
        "p",
        "enable Wi-Fi",
        "Settings",
        Some("main"),
        var("wifi_enabled", Value::Bool(true)),
    );
    let mut queue = vec![(RequestKind::InitPlan, "no plan here")];
    let mut backend = Scripted::new(&sim, single_tap_book("p", "tap Wi-Fi"), queue.clone());
    let trace = run(&sim, &t, &mut backend, &AgentConfig::default());
    assert_eq!(
        trace.footer.status,
        EpisodeStatus::Failure,
        "one bad plan is retried"
    );

    queue = vec![(RequestKind::InitPlan, "no plan here"); 3];
    let mut backend = Scripted::new(&sim, single_tap_book("p", "tap Wi-Fi"), queue);
    let seen = backend.seen.clone();
    let trace = run(&sim, &t, &mut backend, &AgentConfig::default());
    assert_eq!(trace.footer.status, EpisodeStatus::Error);
    let asks = seen
        .lock()
        .unwrap()
        .iter()
        .filter(|r| r.kind == RequestKind::InitPlan)
        .count();
    assert_eq!(asks, 3);
}

#[test]
fn final_graph_is_stored_and_reused() {
    let sim = sim();
    let dir = tempfile::tempdir().unwrap();
    let config = AgentConfig {
        store: Some(Arc::new(GraphStore::new(dir.path()))),
        ..AgentConfig::default()
    };
    let t = task(
        "s",
        "open Wi-Fi",
        "Settings",
        Some("main"),
        Condition::Screen {
            screen: "wlan".into(),
        },
    );
    let mut backend = Scripted::new(&sim, single_tap_book("s", "tap Wi-Fi"), Vec::new());
    let seen = backend.seen.clone();
    let (outcome, _) = run_episode(&t, &mut backend, &sim, &config);
    assert_eq!(outcome.status, EpisodeStatus::Success);
    assert_eq!(
        GraphStore::new(dir.path()).load("Settings").unwrap(),
        Some(outcome.final_graph)
    );
    seen.lock().unwrap().clear();
    run_episode(&t, &mut backend, &sim, &config);
    assert!(!seen
        .lock()
        .unwrap()
        .iter()
        .any(|r| r.kind == RequestKind::InitGraph));
}
