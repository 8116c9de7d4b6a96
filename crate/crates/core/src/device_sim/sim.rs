use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::app::{
    app_key, qualify_screen, qualify_var, AppDefinition, Condition, ElementKind, LoadError, NavOp,
    Rect, Ref, ScreenDef, TransitionRule, Trigger, UiElement, SPACING_THRESHOLD,
};
use super::command::{ActionCommand, Direction};
use super::task::TaskSpec;
use crate::plan_dsl::Value;

/// Screen size in pixels.
pub const SCREEN_DIMS: (u32, u32) = (1080, 2220);

pub const DEFAULT_GRID: (u32, u32) = (9, 6);

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error("unknown app `{0}`")]
    UnknownApp(String),
    #[error("task {task}: {message}")]
    InvalidTask { task: String, message: String },
    #[error("number {number} is not in the last observation (1..={available})")]
    InvalidNumber { number: u32, available: usize },
    #[error("no element under number {0}")]
    NoElementAt(u32),
    #[error("grid must have at least one row and one column, got {rows}x{cols}")]
    BadGrid { rows: u32, cols: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ObsMode {
    Elements,
    Grid { rows: u32, cols: u32 },
}

impl ObsMode {
    pub fn default_grid() -> Self {
        ObsMode::Grid {
            rows: DEFAULT_GRID.0,
            cols: DEFAULT_GRID.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObsEntry {
    pub number: u32,
    /// Element text with its state, e.g. `WLAN switch: off`; empty for grid cells.
    pub label: String,
    pub kind: Option<ElementKind>,
    pub bounds: Rect,
}

/// What the agent sees: numbered marks over the screen and a short caption.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    #[serde(flatten)]
    pub mode: ObsMode,
    pub entries: Vec<ObsEntry>,
    pub screen_text: String,
    pub dims: (u32, u32),
}

impl Observation {
    /// Text form used in prompts; stable for a given screen.
    pub fn render_text(&self) -> String {
        let mut out = format!("Screen: {}\n", self.screen_text);
        match self.mode {
            ObsMode::Elements => out.push_str("Marks: numbered UI elements\n"),
            ObsMode::Grid { rows, cols } => {
                let _ = writeln!(out, "Marks: {rows}x{cols} grid, numbered row by row");
            }
        }
        for e in &self.entries {
            let [x0, y0, x1, y1] = e.bounds.to_pixels(self.dims);
            match e.kind {
                Some(k) => {
                    let _ = writeln!(
                        out,
                        "[{}] {} \"{}\" at ({x0},{y0})-({x1},{y1})",
                        e.number,
                        k.as_str(),
                        e.label
                    );
                }
                None => {
                    let _ = writeln!(out, "[{}] cell at ({x0},{y0})-({x1},{y1})", e.number);
                }
            }
        }
        out
    }

    /// First 16 hex digits of the SHA-256 of [`Observation::render_text`].
    pub fn digest(&self) -> String {
        let hash = Sha256::digest(self.render_text().as_bytes());
        hash.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    pub fn entry(&self, number: u32) -> Option<&ObsEntry> {
        self.entries.iter().find(|e| e.number == number)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PendingChange {
    pub at: u64,
    pub set: BTreeMap<String, Value>,
    pub from_screen: Option<String>,
    pub to_screen: Option<String>,
}

/// The parts of a device state that decide whether two states are the same.
type Semantic<'a> = (
    &'a Option<String>,
    &'a Vec<String>,
    u32,
    &'a BTreeMap<String, Value>,
    &'a Option<String>,
    &'a Vec<PendingChange>,
);

/// Full simulator state. Screen ids and variable names never reach the agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceState {
    /// App key of the foreground app; `None` on the home screen.
    pub current_app: Option<String>,
    /// Screen ids of the foreground app, current on top.
    pub nav_stack: Vec<String>,
    pub scroll_page: u32,
    /// Qualified `app.var` values.
    pub state_vars: BTreeMap<String, Value>,
    pub focus: Option<String>,
    pub clock: u64,
    pub pending: Vec<PendingChange>,
    /// Labels of executed actions, e.g. `tap Wi-Fi`.
    pub history: Vec<String>,
    last_marks: Vec<Rect>,
}

impl DeviceState {
    pub fn current_screen(&self) -> Option<&str> {
        self.nav_stack.last().map(String::as_str)
    }

    /// `app/screen`, or `home`.
    pub fn screen_key(&self) -> String {
        match (&self.current_app, self.current_screen()) {
            (Some(app), Some(screen)) => format!("{app}/{screen}"),
            _ => "home".to_string(),
        }
    }

    fn semantic(&self) -> Semantic<'_> {
        (
            &self.current_app,
            &self.nav_stack,
            self.scroll_page,
            &self.state_vars,
            &self.focus,
            &self.pending,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EffectFlag {
    Changed,
    NoEffect,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecOutcome {
    pub observation: Observation,
    pub flag: EffectFlag,
    /// What the action hit, e.g. `tap WLAN switch` or `swipe down`.
    pub action_label: String,
    pub note: Option<String>,
}

/// Close-up of one mark, used to verify a grounding choice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElementDetail {
    pub number: u32,
    pub label: String,
    pub kind: ElementKind,
    /// Switch position or text field content.
    pub value: Option<String>,
    pub bounds: Rect,
}

/// A visible element with its resolved text. Ground truth for oracles and tests.
#[derive(Debug, Clone, PartialEq)]
pub struct VisibleElement {
    pub id: String,
    /// Label without state, e.g. `WLAN switch`.
    pub base_label: String,
    pub kind: ElementKind,
    pub bounds: Rect,
    pub value: Option<String>,
}

impl VisibleElement {
    pub fn display_label(&self) -> String {
        match (&self.kind, &self.value) {
            (ElementKind::Switch, Some(v)) => format!("{}: {v}", self.base_label),
            (ElementKind::TextField, Some(v)) if v.is_empty() => {
                format!("{}: empty", self.base_label)
            }
            (ElementKind::TextField, Some(v)) => format!("{}: \"{v}\"", self.base_label),
            _ => self.base_label.clone(),
        }
    }
}

/// Deterministic device over a fixed set of apps.
#[derive(Debug, Clone)]
pub struct Simulator {
    apps: Vec<AppDefinition>,
    keys: Vec<String>,
}

impl Simulator {
    /// Builds a device, checking that names referring across apps resolve.
    pub fn new(apps: Vec<AppDefinition>) -> Result<Self, LoadError> {
        let keys: Vec<String> = apps.iter().map(AppDefinition::key).collect();
        let mut seen = BTreeSet::new();
        for (app, key) in apps.iter().zip(&keys) {
            if !seen.insert(key.clone()) {
                return Err(LoadError::Invalid {
                    app: app.app_name.clone(),
                    message: "app loaded twice".into(),
                });
            }
        }
        let sim = Simulator { apps, keys };
        for app in &sim.apps {
            let mut problems = Vec::new();
            for c in app.conditions() {
                c.visit_refs(&mut |r| {
                    if let Some(p) = sim.check_ref(r) {
                        problems.push(p);
                    }
                });
            }
            let key = app.key();
            for s in &app.screens {
                for r in &s.transitions {
                    let sets = r.set.keys().chain(r.copy.keys()).chain(r.copy.values());
                    for v in sets.chain(r.schedule.iter().flat_map(|c| c.set.keys())) {
                        if let Some(p) = sim.check_ref(Ref::Var(&qualify_var(&key, v))) {
                            problems.push(p);
                        }
                    }
                }
            }
            if let Some(p) = problems.into_iter().next() {
                return Err(LoadError::Invalid {
                    app: app.app_name.clone(),
                    message: p,
                });
            }
        }
        Ok(sim)
    }

    fn check_ref(&self, r: Ref<'_>) -> Option<String> {
        match r {
            Ref::Var(v) => {
                let (app, var) = v.split_once('.')?;
                match self.app_by_key(app) {
                    Some(a) if a.state_vars.contains_key(var) => None,
                    Some(_) => Some(format!("unknown var `{v}`")),
                    None => Some(format!("unknown app in `{v}`")),
                }
            }
            Ref::Screen("home") => None,
            Ref::Screen(s) => {
                let Some((app, screen)) = s.split_once('/') else {
                    return Some(format!("unqualified screen `{s}`"));
                };
                match self.app_by_key(app) {
                    Some(a) if a.screen(screen).is_some() => None,
                    _ => Some(format!("unknown screen `{s}`")),
                }
            }
        }
    }

    pub fn apps(&self) -> &[AppDefinition] {
        &self.apps
    }

    pub fn app(&self, name: &str) -> Option<&AppDefinition> {
        self.app_by_key(&app_key(name))
    }

    fn app_by_key(&self, key: &str) -> Option<&AppDefinition> {
        self.keys
            .iter()
            .position(|k| k == key)
            .map(|i| &self.apps[i])
    }

    /// Checks that a task's names resolve against the loaded apps.
    pub fn validate_task(&self, task: &TaskSpec) -> Result<(), SimError> {
        let invalid = |message: String| SimError::InvalidTask {
            task: task.task_id.clone(),
            message,
        };
        let app = self
            .app(&task.app_name)
            .ok_or_else(|| invalid(format!("unknown app `{}`", task.app_name)))?;
        let key = app.key();
        if let Some(s) = &task.start_screen {
            let q = qualify_screen(&key, s);
            if let Some(p) = self.check_ref(Ref::Screen(&q)) {
                return Err(invalid(p));
            }
        }
        for (var, value) in &task.overrides {
            let q = qualify_var(&key, var);
            if let Some(p) = self.check_ref(Ref::Var(&q)) {
                return Err(invalid(p));
            }
            let current = self.initial_value(&q).expect("checked above");
            if current.type_name() != value.type_name() {
                return Err(invalid(format!(
                    "override `{var}` is {}, declared {}",
                    value.type_name(),
                    current.type_name()
                )));
            }
        }
        self.check_condition(&task.app_name, &task.success)
            .map_err(|p| invalid(format!("success predicate: {p}")))
    }

    fn initial_value(&self, qualified: &str) -> Option<&Value> {
        let (app, var) = qualified.split_once('.')?;
        self.app_by_key(app)?.state_vars.get(var)
    }

    /// Initial state for a task and the first observation.
    pub fn reset(&self, task: &TaskSpec) -> Result<(DeviceState, Observation), SimError> {
        self.validate_task(task)?;
        let key = app_key(&task.app_name);
        let mut vars = BTreeMap::new();
        for (app, k) in self.apps.iter().zip(&self.keys) {
            for (var, v) in &app.state_vars {
                vars.insert(format!("{k}.{var}"), v.clone());
            }
        }
        for (var, v) in &task.overrides {
            vars.insert(qualify_var(&key, var), v.clone());
        }
        let mut state = DeviceState {
            current_app: None,
            nav_stack: Vec::new(),
            scroll_page: 1,
            state_vars: vars,
            focus: None,
            clock: 0,
            pending: Vec::new(),
            history: Vec::new(),
            last_marks: Vec::new(),
        };
        if let Some(s) = &task.start_screen {
            let q = qualify_screen(&key, s);
            if q != "home" {
                let (app, screen) = q.split_once('/').expect("qualified");
                state.current_app = Some(app.to_string());
                self.enter(&mut state, vec![screen.to_string()]);
            }
        }
        let obs = self.observe(&mut state, ObsMode::Elements)?;
        Ok((state, obs))
    }

    fn current(&self, state: &DeviceState) -> Option<(&AppDefinition, &ScreenDef)> {
        let app = self.app_by_key(state.current_app.as_deref()?)?;
        let screen = app.screen(state.current_screen()?)?;
        Some((app, screen))
    }

    pub fn eval_condition(&self, cond: &Condition, state: &DeviceState) -> bool {
        match cond {
            Condition::Var { var, eq } => state.state_vars.get(var) == Some(eq),
            Condition::Screen { screen } => state.screen_key() == *screen,
            Condition::All { all } => all.iter().all(|c| self.eval_condition(c, state)),
            Condition::Any { any } => any.iter().any(|c| self.eval_condition(c, state)),
            Condition::Not { not } => !self.eval_condition(not, state),
            Condition::HistoryContains { history_contains } => state
                .history
                .iter()
                .any(|h| h.eq_ignore_ascii_case(history_contains.trim())),
        }
    }

    /// Evaluates a condition whose bare names refer to `app_name`.
    pub fn eval_in_app(&self, app_name: &str, cond: &Condition, state: &DeviceState) -> bool {
        self.eval_condition(&cond.qualify(&app_key(app_name)), state)
    }

    /// The first name in `cond` that does not resolve, read relative to `app_name`.
    pub fn check_condition(&self, app_name: &str, cond: &Condition) -> Result<(), String> {
        let mut problem = None;
        cond.qualify(&app_key(app_name)).visit_refs(&mut |r| {
            if problem.is_none() {
                problem = self.check_ref(r);
            }
        });
        problem.map_or(Ok(()), Err)
    }

    pub fn check_success(&self, task: &TaskSpec, state: &DeviceState) -> bool {
        self.eval_condition(&task.success.qualify(&app_key(&task.app_name)), state)
    }

    fn fill_template(&self, template: &str, app_key: &str, state: &DeviceState) -> String {
        let mut out = String::new();
        let mut rest = template;
        while let Some(open) = rest.find('{') {
            let Some(close) = rest[open..].find('}') else {
                break;
            };
            let name = &rest[open + 1..open + close];
            out.push_str(&rest[..open]);
            match state.state_vars.get(&qualify_var(app_key, name)) {
                Some(v) => {
                    let _ = write!(out, "{v}");
                }
                None => out.push_str(&rest[open..=open + close]),
            }
            rest = &rest[open + close + 1..];
        }
        out.push_str(rest);
        out
    }

    /// Elements currently on screen, in mark order.
    pub fn visible_elements(&self, state: &DeviceState) -> Vec<VisibleElement> {
        let Some((app, screen)) = self.current(state) else {
            return self.home_icons();
        };
        let key = app.key();
        let mut out: Vec<VisibleElement> = Vec::new();
        for e in &screen.elements {
            if e.page != 0 && e.page != state.scroll_page {
                continue;
            }
            if let Some(c) = &e.visible_when {
                if !self.eval_condition(&c.qualify(&key), state) {
                    continue;
                }
            }
            if out
                .iter()
                .any(|o| super::app::center_distance(&o.bounds, &e.bounds) <= SPACING_THRESHOLD)
            {
                continue;
            }
            let value = e
                .var
                .as_ref()
                .and_then(|v| state.state_vars.get(&qualify_var(&key, v)))
                .map(|v| match v {
                    Value::Bool(true) => "on".to_string(),
                    Value::Bool(false) => "off".to_string(),
                    other => other.to_string(),
                });
            out.push(VisibleElement {
                id: e.id.clone(),
                base_label: self.fill_template(&e.label, &key, state),
                kind: e.kind,
                bounds: e.bounds,
                value,
            });
        }
        out
    }

    fn home_icons(&self) -> Vec<VisibleElement> {
        self.apps
            .iter()
            .zip(&self.keys)
            .enumerate()
            .map(|(i, (app, key))| {
                let (row, col) = ((i / 4) as f64, (i % 4) as f64);
                let x0 = 0.04 + col * 0.24;
                let y0 = 0.12 + row * 0.14;
                VisibleElement {
                    id: key.clone(),
                    base_label: app.app_name.clone(),
                    kind: ElementKind::Button,
                    bounds: Rect::new(x0, y0, x0 + 0.2, y0 + 0.1),
                    value: None,
                }
            })
            .collect()
    }

    fn screen_text(&self, state: &DeviceState) -> String {
        match self.current(state) {
            None => "Home screen".to_string(),
            Some((app, screen)) if screen.scroll_extent > 1 => format!(
                "{} | {} (page {} of {})",
                app.app_name, screen.display_name, state.scroll_page, screen.scroll_extent
            ),
            Some((app, screen)) => format!("{} | {}", app.app_name, screen.display_name),
        }
    }

    /// Renders the screen and makes its numbering current for later commands.
    pub fn observe(&self, state: &mut DeviceState, mode: ObsMode) -> Result<Observation, SimError> {
        let entries: Vec<ObsEntry> = match mode {
            ObsMode::Elements => self
                .visible_elements(state)
                .into_iter()
                .enumerate()
                .map(|(i, e)| ObsEntry {
                    number: i as u32 + 1,
                    label: e.display_label(),
                    kind: Some(e.kind),
                    bounds: e.bounds,
                })
                .collect(),
            ObsMode::Grid { rows, cols } => {
                if rows == 0 || cols == 0 {
                    return Err(SimError::BadGrid { rows, cols });
                }
                grid_cells(rows, cols)
                    .into_iter()
                    .enumerate()
                    .map(|(i, bounds)| ObsEntry {
                        number: i as u32 + 1,
                        label: String::new(),
                        kind: None,
                        bounds,
                    })
                    .collect()
            }
        };
        state.last_marks = entries.iter().map(|e| e.bounds).collect();
        Ok(Observation {
            mode,
            entries,
            screen_text: self.screen_text(state),
            dims: SCREEN_DIMS,
        })
    }

    fn mark(&self, state: &DeviceState, number: u32) -> Result<Rect, SimError> {
        if number == 0 || number as usize > state.last_marks.len() {
            return Err(SimError::InvalidNumber {
                number,
                available: state.last_marks.len(),
            });
        }
        Ok(state.last_marks[number as usize - 1])
    }

    fn element_at(&self, state: &DeviceState, point: (f64, f64)) -> Option<VisibleElement> {
        self.visible_elements(state)
            .into_iter()
            .find(|e| e.bounds.contains(point))
    }

    /// The element under a mark of the last observation.
    pub fn crop_query(&self, state: &DeviceState, number: u32) -> Result<ElementDetail, SimError> {
        let rect = self.mark(state, number)?;
        let e = self
            .element_at(state, rect.center())
            .ok_or(SimError::NoElementAt(number))?;
        Ok(ElementDetail {
            number,
            label: e.base_label,
            kind: e.kind,
            value: e.value,
            bounds: e.bounds,
        })
    }

    /// Applies one command. Unresolvable marks and inert targets report `NoEffect`.
    pub fn execute(&self, state: &mut DeviceState, cmd: &ActionCommand) -> ExecOutcome {
        let before = state.clone();
        let (action_label, note) = self.dispatch(state, cmd);
        state.history.push(action_label.clone());
        let observation = self
            .observe(state, ObsMode::Elements)
            .expect("elements mode always renders");
        let flag = if before.semantic() == state.semantic() {
            EffectFlag::NoEffect
        } else {
            EffectFlag::Changed
        };
        ExecOutcome {
            observation,
            flag,
            action_label,
            note,
        }
    }

    /// Advances the clock one tick and applies scheduled changes that are due.
    pub fn wait(&self, state: &mut DeviceState) -> ExecOutcome {
        let before = state.clone();
        state.clock += 1;
        let (due, later): (Vec<_>, Vec<_>) =
            state.pending.drain(..).partition(|p| p.at <= state.clock);
        state.pending = later;
        for change in due {
            state.state_vars.extend(change.set);
            if let (Some(from), Some(to)) = (change.from_screen, change.to_screen) {
                if state.screen_key() == from {
                    let (_, screen) = to.split_once('/').expect("qualified");
                    let mut stack = state.nav_stack.clone();
                    match stack.iter().rposition(|s| s == screen) {
                        Some(i) => stack.truncate(i + 1),
                        None => {
                            stack.pop();
                            stack.push(screen.to_string());
                        }
                    }
                    self.enter(state, stack);
                }
            }
        }
        let observation = self
            .observe(state, ObsMode::Elements)
            .expect("elements mode always renders");
        let flag = if before.semantic() == state.semantic() {
            EffectFlag::NoEffect
        } else {
            EffectFlag::Changed
        };
        ExecOutcome {
            observation,
            flag,
            action_label: "wait".into(),
            note: None,
        }
    }

    fn enter(&self, state: &mut DeviceState, stack: Vec<String>) {
        state.nav_stack = stack;
        state.scroll_page = 1;
        state.focus = self.current(state).and_then(|(_, s)| s.autofocus.clone());
    }

    fn go_home(&self, state: &mut DeviceState) {
        state.current_app = None;
        state.nav_stack.clear();
        state.scroll_page = 1;
        state.focus = None;
    }

    fn dispatch(&self, state: &mut DeviceState, cmd: &ActionCommand) -> (String, Option<String>) {
        let stale = |n: u32| {
            (
                format!("{} (stale mark {n})", verb_of(cmd)),
                Some(format!("mark {n} is not on screen")),
            )
        };
        match cmd {
            ActionCommand::Back => {
                if state.current_app.is_none() {
                    return ("back".into(), Some("already on the home screen".into()));
                }
                self.pop(state);
                ("back".into(), None)
            }
            ActionCommand::Finish => ("finish".into(), None),
            ActionCommand::Text { text } => {
                let Some((app, screen)) = self.current(state) else {
                    return (format!("type {text}"), Some("no focused text field".into()));
                };
                let field = state
                    .focus
                    .as_ref()
                    .and_then(|f| screen.element(f))
                    .and_then(|e| e.var.clone());
                match field {
                    Some(var) => {
                        let key = qualify_var(&app.key(), &var);
                        state.state_vars.insert(key, Value::Str(text.clone()));
                        (format!("type {text}"), None)
                    }
                    None => (format!("type {text}"), Some("no focused text field".into())),
                }
            }
            ActionCommand::Tap { number } | ActionCommand::LongPress { number } => {
                let Ok(rect) = self.mark(state, *number) else {
                    return stale(*number);
                };
                let Some(target) = self.element_at(state, rect.center()) else {
                    return (
                        format!("{} nothing", verb_of(cmd)),
                        Some("no element under the mark".into()),
                    );
                };
                let label = format!("{} {}", verb_of(cmd), target.base_label);
                let trigger = if matches!(cmd, ActionCommand::Tap { .. }) {
                    Trigger::Tap
                } else {
                    Trigger::LongPress
                };
                if state.current_app.is_none() {
                    if trigger == Trigger::Tap {
                        let app = self.app_by_key(&target.id).expect("icon for loaded app");
                        state.current_app = Some(target.id.clone());
                        self.enter(state, vec![app.initial_screen.clone()]);
                    }
                    return (label, None);
                }
                self.activate(state, &target.id, trigger);
                (label, None)
            }
            ActionCommand::Swipe {
                number, direction, ..
            } => {
                let Ok(rect) = self.mark(state, *number) else {
                    return stale(*number);
                };
                let target = self.element_at(state, rect.center());
                self.swipe(state, target, *direction)
            }
            ActionCommand::SwipeGrid { from, to } => {
                let (Ok(a), Ok(b)) = (self.mark(state, *from), self.mark(state, *to)) else {
                    return stale(if self.mark(state, *from).is_err() {
                        *from
                    } else {
                        *to
                    });
                };
                let ((ax, ay), (bx, by)) = (a.center(), b.center());
                let Some(direction) = Direction::from_vector(bx - ax, by - ay) else {
                    return (
                        "swipe nowhere".into(),
                        Some("start and end marks coincide".into()),
                    );
                };
                let target = self.element_at(state, a.center());
                self.swipe(state, target, direction)
            }
        }
    }

    fn swipe(
        &self,
        state: &mut DeviceState,
        target: Option<VisibleElement>,
        direction: Direction,
    ) -> (String, Option<String>) {
        let label = format!("swipe {}", direction.as_str().replace('_', " "));
        let Some((_, screen)) = self.current(state) else {
            return (label, Some("the home screen does not scroll".into()));
        };
        let trigger = match direction {
            Direction::Up => Some(Trigger::SwipeUp),
            Direction::Down => Some(Trigger::SwipeDown),
            Direction::Left => Some(Trigger::SwipeLeft),
            Direction::Right => Some(Trigger::SwipeRight),
            _ => None,
        };
        if let (Some(t), Some(el)) = (trigger, &target) {
            if self.select_rule(state, Some(&el.id), t).is_some() {
                self.activate(state, &el.id, t);
                return (format!("{label} {}", el.base_label), None);
            }
        }
        if let Some(t) = trigger {
            if let Some(rule) = self.select_rule(state, None, t).cloned() {
                self.apply_rule(state, &rule);
                return (label, None);
            }
        }
        let extent = screen.scroll_extent;
        match direction {
            Direction::Down | Direction::DownLeft | Direction::DownRight
                if state.scroll_page < extent =>
            {
                state.scroll_page += 1
            }
            Direction::Up | Direction::UpLeft | Direction::UpRight if state.scroll_page > 1 => {
                state.scroll_page -= 1
            }
            _ => return (label, Some("nothing to scroll".into())),
        }
        (label, None)
    }

    fn select_rule(
        &self,
        state: &DeviceState,
        element: Option<&str>,
        on: Trigger,
    ) -> Option<&TransitionRule> {
        let (app, screen) = self.current(state)?;
        let key = app.key();
        screen.transitions.iter().find(|r| {
            r.element.as_deref() == element
                && r.on == on
                && r.when
                    .as_ref()
                    .is_none_or(|c| self.eval_condition(&c.qualify(&key), state))
        })
    }

    /// Presses an element: built-in switch and field behavior, then its rule.
    fn activate(&self, state: &mut DeviceState, element_id: &str, on: Trigger) {
        let Some((app, screen)) = self.current(state) else {
            return;
        };
        let key = app.key();
        let rule = self.select_rule(state, Some(element_id), on).cloned();
        let element: Option<UiElement> = screen.element(element_id).cloned();
        if let (Some(e), Trigger::Tap) = (&element, on) {
            match (e.kind, &e.var) {
                (ElementKind::Switch, Some(v)) => {
                    let q = qualify_var(&key, v);
                    let cur = matches!(state.state_vars.get(&q), Some(Value::Bool(true)));
                    state.state_vars.insert(q, Value::Bool(!cur));
                }
                (ElementKind::TextField, _) => state.focus = Some(e.id.clone()),
                _ => {}
            }
        }
        if let Some(rule) = rule {
            self.apply_rule(state, &rule);
        }
    }

    fn apply_rule(&self, state: &mut DeviceState, rule: &TransitionRule) {
        let Some((app, _)) = self.current(state) else {
            return;
        };
        let key = app.key();
        for (dst, src) in &rule.copy {
            if let Some(v) = state.state_vars.get(&qualify_var(&key, src)).cloned() {
                state.state_vars.insert(qualify_var(&key, dst), v);
            }
        }
        for (var, v) in &rule.set {
            state.state_vars.insert(qualify_var(&key, var), v.clone());
        }
        for sc in &rule.schedule {
            state.pending.push(PendingChange {
                at: state.clock + sc.after as u64,
                set: sc
                    .set
                    .iter()
                    .map(|(k, v)| (qualify_var(&key, k), v.clone()))
                    .collect(),
                from_screen: sc.from_screen.as_ref().map(|s| qualify_screen(&key, s)),
                to_screen: sc.to_screen.as_ref().map(|s| qualify_screen(&key, s)),
            });
        }
        let mut stack = state.nav_stack.clone();
        match (rule.nav, &rule.target) {
            (NavOp::Pop, _) => {
                self.pop(state);
                return;
            }
            (NavOp::Push, Some(t)) => stack.push(t.clone()),
            (NavOp::Replace, Some(t)) => {
                stack.pop();
                stack.push(t.clone());
            }
            (NavOp::Reset, Some(t)) => stack = vec![t.clone()],
            (_, None) => return,
        }
        self.enter(state, stack);
    }

    fn pop(&self, state: &mut DeviceState) {
        if state.nav_stack.len() > 1 {
            let mut stack = state.nav_stack.clone();
            stack.pop();
            self.enter(state, stack);
        } else {
            self.go_home(state);
        }
    }
}

fn verb_of(cmd: &ActionCommand) -> &'static str {
    match cmd {
        ActionCommand::Tap { .. } => "tap",
        ActionCommand::LongPress { .. } => "long press",
        ActionCommand::Swipe { .. } | ActionCommand::SwipeGrid { .. } => "swipe",
        ActionCommand::Text { .. } => "type",
        ActionCommand::Back => "back",
        ActionCommand::Finish => "finish",
    }
}

/// Row-major cell rectangles of a `rows` x `cols` grid.
pub fn grid_cells(rows: u32, cols: u32) -> Vec<Rect> {
    let mut out = Vec::with_capacity((rows * cols) as usize);
    for r in 0..rows {
        for c in 0..cols {
            let (rf, cf) = (rows as f64, cols as f64);
            out.push(Rect::new(
                c as f64 / cf,
                r as f64 / rf,
                (c + 1) as f64 / cf,
                (r + 1) as f64 / rf,
            ));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn demo() -> Simulator {
        let app = AppDefinition::from_json(
            r#"{"app_name": "Demo", "initial_screen": "a",
                "state_vars": {"on": false, "name": "", "done": false},
                "screens": [
                  {"id": "a", "display_name": "First", "scroll_extent": 2, "elements": [
                    {"id": "go", "label": "Go", "kind": "button", "bounds": [0.1, 0.1, 0.9, 0.2]},
                    {"id": "sw", "label": "Power", "kind": "switch", "var": "on", "bounds": [0.1, 0.3, 0.9, 0.4]},
                    {"id": "more", "label": "More", "kind": "button", "bounds": [0.1, 0.1, 0.9, 0.2], "page": 2}
                  ], "transitions": [{"element": "go", "target": "b"}]},
                  {"id": "b", "display_name": "Second", "autofocus": "field", "elements": [
                    {"id": "field", "label": "Name", "kind": "text_field", "var": "name", "bounds": [0.1, 0.1, 0.9, 0.2]},
                    {"id": "save", "label": "Save", "kind": "button", "bounds": [0.1, 0.3, 0.9, 0.4]}
                  ], "transitions": [{"element": "save", "nav": "pop", "set": {"done": true},
                                      "schedule": [{"after": 2, "set": {"on": true}}]}]}
                ]}"#,
            "demo",
        )
        .unwrap();
        Simulator::new(vec![app]).unwrap()
    }

    fn task(start: Option<&str>) -> TaskSpec {
        TaskSpec {
            task_id: "t".into(),
            goal: "g".into(),
            app_name: "Demo".into(),
            start_screen: start.map(str::to_string),
            overrides: BTreeMap::new(),
            success: Condition::Var {
                var: "done".into(),
                eq: Value::Bool(true),
            },
            optimal_steps: 1,
            optimal_actions: Vec::new(),
        }
    }

    #[test]
    fn launch_from_home_and_back_out() {
        let sim = demo();
        let (mut st, obs) = sim.reset(&task(None)).unwrap();
        assert_eq!(obs.screen_text, "Home screen");
        assert_eq!(obs.entries[0].label, "Demo");
        let out = sim.execute(&mut st, &ActionCommand::Tap { number: 1 });
        assert_eq!(out.flag, EffectFlag::Changed);
        assert_eq!(st.screen_key(), "demo/a");
        assert_eq!(out.action_label, "tap Demo");
        sim.execute(&mut st, &ActionCommand::Back);
        assert_eq!(st.screen_key(), "home");
        let out = sim.execute(&mut st, &ActionCommand::Back);
        assert_eq!(out.flag, EffectFlag::NoEffect);
    }

    #[test]
    fn switch_label_and_toggle() {
        let sim = demo();
        let (mut st, obs) = sim.reset(&task(Some("a"))).unwrap();
        assert_eq!(obs.entries[1].label, "Power: off");
        let out = sim.execute(&mut st, &ActionCommand::Tap { number: 2 });
        assert_eq!(out.observation.entries[1].label, "Power: on");
        assert_eq!(out.action_label, "tap Power");
    }

    #[test]
    fn scroll_pages() {
        let sim = demo();
        let (mut st, _) = sim.reset(&task(Some("a"))).unwrap();
        let down = ActionCommand::Swipe {
            number: 1,
            direction: Direction::Down,
            distance: super::super::command::Distance::Medium,
        };
        let out = sim.execute(&mut st, &down);
        assert_eq!(out.flag, EffectFlag::Changed);
        assert_eq!(out.observation.entries.len(), 1);
        assert_eq!(out.observation.entries[0].label, "More");
        assert!(out.observation.screen_text.ends_with("(page 2 of 2)"));
        assert_eq!(sim.execute(&mut st, &down).flag, EffectFlag::NoEffect);
    }

    #[test]
    fn text_entry_rules_and_schedule() {
        let sim = demo();
        let (mut st, _) = sim.reset(&task(Some("b"))).unwrap();
        let out = sim.execute(&mut st, &ActionCommand::Text { text: "Ada".into() });
        assert_eq!(out.observation.entries[0].label, "Name: \"Ada\"");
        sim.execute(&mut st, &ActionCommand::Tap { number: 2 });
        assert!(sim.check_success(&task(None), &st));
        assert_eq!(st.screen_key(), "home");
        assert_eq!(sim.wait(&mut st).flag, EffectFlag::NoEffect);
        assert_eq!(sim.wait(&mut st).flag, EffectFlag::Changed);
        assert_eq!(st.state_vars["demo.on"], Value::Bool(true));
    }

    #[test]
    fn stale_numbers_do_nothing() {
        let sim = demo();
        let (mut st, _) = sim.reset(&task(Some("a"))).unwrap();
        let out = sim.execute(&mut st, &ActionCommand::Tap { number: 9 });
        assert_eq!(out.flag, EffectFlag::NoEffect);
        assert!(out.note.is_some());
        assert!(matches!(
            sim.crop_query(&st, 0),
            Err(SimError::InvalidNumber { number: 0, .. })
        ));
    }

    #[test]
    fn grid_taps_hit_elements() {
        let sim = demo();
        let (mut st, _) = sim.reset(&task(Some("a"))).unwrap();
        let grid = sim
            .observe(&mut st, ObsMode::Grid { rows: 10, cols: 2 })
            .unwrap();
        assert_eq!(grid.entries.len(), 20);
        // Row 2 (0.1..0.2) holds the Go button.
        assert_eq!(sim.crop_query(&st, 3).unwrap().label, "Go");
        sim.execute(&mut st, &ActionCommand::Tap { number: 3 });
        assert_eq!(st.screen_key(), "demo/b");
        assert_eq!(st.focus.as_deref(), Some("field"));
    }

    #[test]
    fn bad_task_names() {
        let sim = demo();
        let mut t = task(None);
        t.overrides.insert("nope".into(), Value::Bool(true));
        assert!(sim.reset(&t).is_err());
        let mut t = task(None);
        t.overrides.insert("on".into(), Value::Int(1));
        assert!(sim
            .reset(&t)
            .unwrap_err()
            .to_string()
            .contains("declared bool"));
    }
}
