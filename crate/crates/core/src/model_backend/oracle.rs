//! A stand-in for the vision-language model that reads the simulator.
//!
//! Graphs and plans come from per-task fixture texts. Element choice is label
//! token overlap against the action phrase. Truth queries are answered from a
//! fixture table mapping statements to conditions on device state; a statement
//! that is not in the table is an error rather than a guess.

use std::collections::BTreeMap;
use std::sync::{Arc, OnceLock};

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{BackendError, ModelBackend, ModelRequest, ModelResponse, RequestKind};
use crate::device_sim::{
    grid_cells, ActionCommand, Condition, DeviceState, Direction, Distance, ElementKind, ObsMode,
    Simulator, VisibleElement,
};
use crate::prompts::{render_refinement_response, RefinementOutcome};
use crate::world_model::ActionType;

/// Fixture answer for one truth statement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TruthRule {
    Constant(bool),
    Holds(Condition),
}

/// What the oracle knows about one task or sub-task.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OracleTask {
    /// Bare names in truth conditions refer to this app.
    pub app_name: String,
    pub graph_text: Option<String>,
    /// A full plan response, starting with `Current vertex:`.
    pub plan_text: Option<String>,
    pub truths: BTreeMap<String, TruthRule>,
}

/// Oracle fixtures keyed by task key.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct OracleBook {
    tasks: BTreeMap<String, OracleTask>,
}

impl OracleBook {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, key: impl Into<String>, mut task: OracleTask) {
        task.truths = task
            .truths
            .into_iter()
            .map(|(k, v)| (normalize_statement(&k), v))
            .collect();
        self.tasks.insert(key.into(), task);
    }

    pub fn get(&self, key: &str) -> Option<&OracleTask> {
        self.tasks.get(key)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.tasks.keys().map(String::as_str)
    }

    /// Every truth condition must name known apps, screens and variables.
    pub fn check(&self, sim: &Simulator) -> Result<(), String> {
        for (key, task) in &self.tasks {
            for (statement, rule) in &task.truths {
                if let TruthRule::Holds(cond) = rule {
                    sim.check_condition(&task.app_name, cond).map_err(|p| {
                        format!("oracle fixture {key}, statement {statement:?}: {p}")
                    })?;
                }
            }
        }
        Ok(())
    }
}

fn normalize_statement(s: &str) -> String {
    s.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .trim_end_matches(['.', '?', '!'])
        .to_lowercase()
}

const STOPWORDS: &[&str] = &[
    "a", "an", "the", "to", "on", "of", "in", "into", "at", "for", "and", "with", "tap", "click",
    "press", "long", "button", "app", "icon", "option", "item", "entry", "field", "screen", "page",
    "open", "select", "toggle",
];

/// Lowercased words of a label or phrase, hyphens and apostrophes dropped
/// (`Wi-Fi` is `wifi`), filler words removed.
pub fn phrase_tokens(text: &str) -> Vec<String> {
    text.to_lowercase()
        .replace(['-', '\''], "")
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty() && !STOPWORDS.contains(w))
        .map(str::to_string)
        .collect()
}

fn overlap(phrase: &[String], label: &str) -> (usize, usize) {
    let label = phrase_tokens(label);
    let hits = label.iter().filter(|t| phrase.contains(t)).count();
    (hits, label.len().max(1))
}

fn ordinal(phrase: &str) -> Option<usize> {
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = RE.get_or_init(|| Regex::new(r"\b(\d+)\s*-?\s*(?:th|st|nd|rd)\b").unwrap());
    re.captures(phrase)?
        .get(1)?
        .as_str()
        .parse()
        .ok()
        .filter(|k| *k >= 1)
}

fn quoted(phrase: &str) -> Option<String> {
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = RE.get_or_init(|| Regex::new(r#"'([^']*)'|"([^"]*)""#).unwrap());
    let c = re.captures(phrase)?;
    Some(c.get(1).or(c.get(2))?.as_str().to_string())
}

fn swipe_direction(phrase: &str) -> Direction {
    let words = phrase_tokens(phrase);
    let has = |w: &str| words.iter().any(|x| x == w);
    match (has("up"), has("down"), has("left"), has("right")) {
        (true, _, true, _) => Direction::UpLeft,
        (true, _, _, true) => Direction::UpRight,
        (_, true, true, _) => Direction::DownLeft,
        (_, true, _, true) => Direction::DownRight,
        (true, ..) => Direction::Up,
        (_, _, true, _) => Direction::Left,
        (_, _, _, true) => Direction::Right,
        _ => Direction::Down,
    }
}

pub struct OracleBackend {
    sim: Arc<Simulator>,
    book: Arc<OracleBook>,
    state: Option<DeviceState>,
}

impl OracleBackend {
    pub fn new(sim: Arc<Simulator>, book: Arc<OracleBook>) -> Self {
        OracleBackend {
            sim,
            book,
            state: None,
        }
    }

    fn task(&self, key: &str) -> Result<&OracleTask, BackendError> {
        self.book
            .get(key)
            .ok_or_else(|| BackendError::OracleGap(format!("no fixture for task `{key}`")))
    }

    fn state(&self) -> Result<&DeviceState, BackendError> {
        self.state
            .as_ref()
            .ok_or_else(|| BackendError::OracleGap("device state was never synced".into()))
    }

    fn action<'r>(&self, request: &'r ModelRequest) -> Result<&'r str, BackendError> {
        request.hints.action.as_deref().ok_or_else(|| {
            BackendError::OracleGap(format!("{} request without an action phrase", request.kind))
        })
    }

    /// Index into the visible elements that best matches the phrase, skipping
    /// indices for which `skip` holds.
    fn best_element(
        &self,
        phrase: &str,
        elements: &[VisibleElement],
        skip: impl Fn(usize) -> bool,
    ) -> Result<usize, BackendError> {
        if let Some(k) = ordinal(phrase) {
            let items: Vec<usize> = (0..elements.len())
                .filter(|&i| elements[i].kind == ElementKind::ListItem)
                .collect();
            return match items.get(k - 1) {
                Some(&i) if !skip(i) => Ok(i),
                Some(_) => Err(BackendError::OracleGap(format!(
                    "item {k} for {phrase:?} was excluded"
                ))),
                None => Err(BackendError::OracleGap(format!(
                    "no list item {k} for {phrase:?}"
                ))),
            };
        }
        let tokens = phrase_tokens(phrase);
        let mut best: Option<(usize, (usize, usize))> = None;
        for (i, e) in elements.iter().enumerate() {
            if skip(i) {
                continue;
            }
            let (hits, len) = overlap(&tokens, &e.base_label);
            if hits == 0 {
                continue;
            }
            // More hits first, then the larger share of the label matched.
            let better = match best {
                None => true,
                Some((_, (bh, bl))) => hits > bh || (hits == bh && hits * bl > bh * len),
            };
            if better {
                best = Some((i, (hits, len)));
            }
        }
        best.map(|(i, _)| i).ok_or_else(|| {
            BackendError::OracleGap(format!("no visible element matches {phrase:?}"))
        })
    }

    fn select(&self, request: &ModelRequest) -> Result<String, BackendError> {
        let phrase = self.action(request)?;
        let state = self.state()?;
        let obs = request.observation.as_ref().expect("checked");
        let excluded = &request.hints.excluded;
        let kind = ActionType::of_phrase(phrase).unwrap_or(ActionType::Tap);
        match kind {
            ActionType::Back => return Ok(ActionCommand::Back.to_string()),
            ActionType::Type => {
                return self
                    .text_for(phrase, state)
                    .map(|text| ActionCommand::Text { text }.to_string())
            }
            _ => {}
        }
        let elements = self.sim.visible_elements(state);
        let number = if kind == ActionType::Swipe {
            // Any free mark will do: the swipe scrolls the screen unless an
            // element under it has its own swipe rule.
            match self.best_element(phrase, &elements, |_| false) {
                Ok(i) => self.mark_for(obs.mode, &elements[i], i, excluded),
                Err(_) => None,
            }
            .or_else(|| (1..=obs.entries.len() as u32).find(|n| !excluded.contains(n)))
        } else {
            let i = match obs.mode {
                ObsMode::Elements => {
                    self.best_element(phrase, &elements, |i| excluded.contains(&(i as u32 + 1)))?
                }
                ObsMode::Grid { .. } => self.best_element(phrase, &elements, |_| false)?,
            };
            self.mark_for(obs.mode, &elements[i], i, excluded)
        };
        let number = number.ok_or_else(|| {
            BackendError::OracleGap(format!("every mark for {phrase:?} is excluded"))
        })?;
        let cmd = match kind {
            ActionType::LongPress => ActionCommand::LongPress { number },
            ActionType::Swipe => ActionCommand::Swipe {
                number,
                direction: swipe_direction(phrase),
                distance: Distance::Medium,
            },
            _ => ActionCommand::Tap { number },
        };
        Ok(cmd.to_string())
    }

    /// The mark that hits element `i`: its own number, or the first grid cell
    /// whose center falls inside it.
    fn mark_for(
        &self,
        mode: ObsMode,
        e: &VisibleElement,
        i: usize,
        excluded: &[u32],
    ) -> Option<u32> {
        match mode {
            ObsMode::Elements => Some(i as u32 + 1).filter(|n| !excluded.contains(n)),
            ObsMode::Grid { rows, cols } => grid_cells(rows, cols)
                .iter()
                .enumerate()
                .map(|(k, cell)| (k as u32 + 1, cell))
                .find(|(n, cell)| !excluded.contains(n) && e.bounds.contains(cell.center()))
                .map(|(n, _)| n),
        }
    }

    fn text_for(&self, phrase: &str, state: &DeviceState) -> Result<String, BackendError> {
        if let Some(q) = quoted(phrase) {
            return Ok(q);
        }
        let focus_label = state
            .focus
            .as_ref()
            .and_then(|id| {
                self.sim
                    .visible_elements(state)
                    .into_iter()
                    .find(|e| &e.id == id)
            })
            .map(|e| phrase_tokens(&e.base_label))
            .unwrap_or_default();
        const FILLER: &[&str] = &[
            "type", "enter", "input", "write", "text", "the", "in", "into", "field", "as",
        ];
        let rest: Vec<&str> = phrase
            .split_whitespace()
            .filter(|w| {
                let t = phrase_tokens(w);
                let lw = w.to_lowercase();
                !FILLER.contains(&lw.as_str()) && !(t.len() == 1 && focus_label.contains(&t[0]))
            })
            .collect();
        if rest.is_empty() {
            return Err(BackendError::OracleGap(format!(
                "no text to type in {phrase:?}"
            )));
        }
        Ok(rest.join(" "))
    }

    fn verify(&self, request: &ModelRequest) -> Result<bool, BackendError> {
        let phrase = self.action(request)?;
        let state = self.state()?;
        let Some(candidate) = &request.hints.candidate else {
            return Ok(false);
        };
        match ActionType::of_phrase(phrase).unwrap_or(ActionType::Tap) {
            ActionType::Swipe | ActionType::Type | ActionType::Back => return Ok(true),
            _ => {}
        }
        let elements = self.sim.visible_elements(state);
        if let Some(k) = ordinal(phrase) {
            let item = elements
                .iter()
                .filter(|e| e.kind == ElementKind::ListItem)
                .nth(k - 1);
            return Ok(item
                .is_some_and(|e| e.base_label == candidate.label && e.bounds == candidate.bounds));
        }
        let tokens = phrase_tokens(phrase);
        let best = elements
            .iter()
            .map(|e| overlap(&tokens, &e.base_label).0)
            .max()
            .unwrap_or(0);
        let (hits, _) = overlap(&tokens, &candidate.label);
        Ok(hits > 0 && hits == best)
    }

    fn query(&self, request: &ModelRequest) -> Result<bool, BackendError> {
        let statement = request
            .hints
            .statement
            .as_deref()
            .ok_or_else(|| BackendError::OracleGap("query without a statement".into()))?;
        let task = self.task(&request.task_key)?;
        match task.truths.get(&normalize_statement(statement)) {
            Some(TruthRule::Constant(b)) => Ok(*b),
            Some(TruthRule::Holds(cond)) => {
                Ok(self.sim.eval_in_app(&task.app_name, cond, self.state()?))
            }
            None if request.hints.compare_screen => {
                let now = request.observation.as_ref().map(|o| o.render_text());
                let before = request
                    .previous_observation
                    .as_ref()
                    .map(|o| o.render_text());
                Ok(before.is_some() && now == before)
            }
            None => Err(BackendError::OracleGap(format!(
                "task `{}` has no truth mapping for {statement:?}",
                request.task_key
            ))),
        }
    }

    fn refine(&self, request: &ModelRequest) -> String {
        let obs = request.observation.as_ref().expect("checked");
        let ineffective = request
            .previous_observation
            .as_ref()
            .is_some_and(|prev| prev.digest() == obs.digest());
        let outcome = RefinementOutcome {
            observation_text: obs.screen_text.clone(),
            successful_and_expected: !ineffective,
            ineffective,
            ..Default::default()
        };
        render_refinement_response(&outcome)
    }
}

fn py_bool(b: bool) -> String {
    if b { "True" } else { "False" }.to_string()
}

impl ModelBackend for OracleBackend {
    fn complete(&mut self, request: &ModelRequest) -> Result<ModelResponse, BackendError> {
        request.check()?;
        let text = match request.kind {
            RequestKind::InitGraph => self
                .task(&request.task_key)?
                .graph_text
                .clone()
                .ok_or_else(|| {
                    BackendError::OracleGap(format!("no graph for `{}`", request.task_key))
                })?,
            RequestKind::InitPlan => {
                self.task(&request.task_key)?
                    .plan_text
                    .clone()
                    .ok_or_else(|| {
                        BackendError::OracleGap(format!("no plan for `{}`", request.task_key))
                    })?
            }
            RequestKind::Refine => self.refine(request),
            RequestKind::SelectAction => self.select(request)?,
            RequestKind::VerifyAction => py_bool(self.verify(request)?),
            RequestKind::QueryTrue => py_bool(self.query(request)?),
        };
        Ok(ModelResponse::estimated(request, text))
    }

    fn sync_ground_truth(&mut self, state: &DeviceState) {
        self.state = Some(state.clone());
    }

    fn name(&self) -> &'static str {
        "oracle"
    }
}
