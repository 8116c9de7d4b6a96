use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::plan_dsl::Value;

/// Minimum distance between the centers of two co-visible elements, in
/// normalized screen units.
pub const SPACING_THRESHOLD: f64 = 0.02;

/// Largest fraction of the screen one element may cover.
pub const MAX_ELEMENT_AREA: f64 = 0.25;

#[derive(Debug, thiserror::Error)]
pub enum LoadError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("schema error in {origin} at {path}: {message}")]
    Schema {
        origin: String,
        /// JSON path of the offending value, e.g. `screens[2].elements[0]`.
        path: String,
        message: String,
    },
    #[error("app {app}: {message}")]
    Invalid { app: String, message: String },
}

/// Normalized rectangle `[x0, y0, x1, y1]`, origin top-left.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct Rect {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl From<[f64; 4]> for Rect {
    fn from([x0, y0, x1, y1]: [f64; 4]) -> Self {
        Rect { x0, y0, x1, y1 }
    }
}

impl From<Rect> for [f64; 4] {
    fn from(r: Rect) -> Self {
        [r.x0, r.y0, r.x1, r.y1]
    }
}

impl Rect {
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Rect { x0, y0, x1, y1 }
    }

    pub fn area(&self) -> f64 {
        (self.x1 - self.x0) * (self.y1 - self.y0)
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.x0 + self.x1) / 2.0, (self.y0 + self.y1) / 2.0)
    }

    pub fn contains(&self, (x, y): (f64, f64)) -> bool {
        x >= self.x0 && x <= self.x1 && y >= self.y0 && y <= self.y1
    }

    pub fn is_well_formed(&self) -> bool {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        unit(self.x0)
            && unit(self.y0)
            && unit(self.x1)
            && unit(self.y1)
            && self.x0 < self.x1
            && self.y0 < self.y1
    }

    /// Pixel coordinates for a `width` x `height` screen.
    pub fn to_pixels(&self, (width, height): (u32, u32)) -> [u32; 4] {
        let px = |v: f64, dim: u32| (v * dim as f64).round() as u32;
        [
            px(self.x0, width),
            px(self.y0, height),
            px(self.x1, width),
            px(self.y1, height),
        ]
    }
}

pub(crate) fn center_distance(a: &Rect, b: &Rect) -> f64 {
    let (ax, ay) = a.center();
    let (bx, by) = b.center();
    ((ax - bx).powi(2) + (ay - by).powi(2)).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ElementKind {
    Button,
    Switch,
    TextField,
    ListItem,
    Static,
}

impl ElementKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ElementKind::Button => "button",
            ElementKind::Switch => "switch",
            ElementKind::TextField => "text_field",
            ElementKind::ListItem => "list_item",
            ElementKind::Static => "static",
        }
    }
}

/// A declarative predicate over device state. Variable names are
/// `app.var`; inside an app definition a bare `var` means the app's own.
/// Screens are `app/screen` or `home`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Condition {
    Var {
        var: String,
        eq: Value,
    },
    Screen {
        screen: String,
    },
    All {
        all: Vec<Condition>,
    },
    Any {
        any: Vec<Condition>,
    },
    Not {
        not: Box<Condition>,
    },
    /// True once an executed action's label equals this text (case-insensitive).
    HistoryContains {
        history_contains: String,
    },
}

impl Condition {
    /// Rewrites bare variable and screen names to their qualified form.
    pub(crate) fn qualify(&self, app_key: &str) -> Condition {
        match self {
            Condition::Var { var, eq } => Condition::Var {
                var: qualify_var(app_key, var),
                eq: eq.clone(),
            },
            Condition::Screen { screen } => Condition::Screen {
                screen: qualify_screen(app_key, screen),
            },
            Condition::All { all } => Condition::All {
                all: all.iter().map(|c| c.qualify(app_key)).collect(),
            },
            Condition::Any { any } => Condition::Any {
                any: any.iter().map(|c| c.qualify(app_key)).collect(),
            },
            Condition::Not { not } => Condition::Not {
                not: Box::new(not.qualify(app_key)),
            },
            Condition::HistoryContains { history_contains } => Condition::HistoryContains {
                history_contains: history_contains.clone(),
            },
        }
    }

    pub(crate) fn visit_refs(&self, f: &mut dyn FnMut(Ref<'_>)) {
        match self {
            Condition::Var { var, .. } => f(Ref::Var(var)),
            Condition::Screen { screen } => f(Ref::Screen(screen)),
            Condition::All { all: cs } | Condition::Any { any: cs } => {
                cs.iter().for_each(|c| c.visit_refs(f))
            }
            Condition::Not { not } => not.visit_refs(f),
            Condition::HistoryContains { .. } => {}
        }
    }
}

pub(crate) enum Ref<'a> {
    Var(&'a str),
    Screen(&'a str),
}

/// Lowercased app name with spaces as underscores, used to qualify names.
pub fn app_key(app_name: &str) -> String {
    app_name
        .trim()
        .to_lowercase()
        .split_whitespace()
        .collect::<Vec<_>>()
        .join("_")
}

pub(crate) fn qualify_var(app_key: &str, var: &str) -> String {
    if var.contains('.') {
        var.to_string()
    } else {
        format!("{app_key}.{var}")
    }
}

pub(crate) fn qualify_screen(app_key: &str, screen: &str) -> String {
    if screen.contains('/') || screen == "home" {
        screen.to_string()
    } else {
        format!("{app_key}/{screen}")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UiElement {
    pub id: String,
    /// Display text; `{var}` slots are filled from state.
    pub label: String,
    pub kind: ElementKind,
    pub bounds: Rect,
    #[serde(default)]
    pub visible_when: Option<Condition>,
    /// 1-based scroll page; 0 pins the element to every page.
    #[serde(default = "one")]
    pub page: u32,
    /// State variable shown and edited by a switch (bool) or text field (str).
    #[serde(default)]
    pub var: Option<String>,
}

fn one() -> u32 {
    1
}

/// Gesture or press a transition rule responds to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trigger {
    Tap,
    LongPress,
    SwipeUp,
    SwipeDown,
    SwipeLeft,
    SwipeRight,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NavOp {
    /// Push the target screen.
    #[default]
    Push,
    /// Replace the top of the stack with the target.
    Replace,
    /// Pop one screen; the target is ignored.
    Pop,
    /// Clear the stack down to the target.
    Reset,
}

/// A state change fired by `wait` once the clock reaches its tick.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduledChange {
    /// Ticks after the rule fires.
    pub after: u32,
    #[serde(default)]
    pub set: BTreeMap<String, Value>,
    /// When the device is on `from_screen`, it moves to `to_screen`: back to
    /// it if it is lower in the stack, otherwise in place of the top.
    #[serde(default)]
    pub from_screen: Option<String>,
    #[serde(default)]
    pub to_screen: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionRule {
    /// Element id; absent for whole-screen gestures.
    #[serde(default)]
    pub element: Option<String>,
    #[serde(default = "tap")]
    pub on: Trigger,
    #[serde(default)]
    pub when: Option<Condition>,
    #[serde(default)]
    pub target: Option<String>,
    #[serde(default)]
    pub nav: NavOp,
    #[serde(default)]
    pub set: BTreeMap<String, Value>,
    /// Destination var <- source var.
    #[serde(default)]
    pub copy: BTreeMap<String, String>,
    #[serde(default)]
    pub schedule: Vec<ScheduledChange>,
}

fn tap() -> Trigger {
    Trigger::Tap
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreenDef {
    pub id: String,
    pub display_name: String,
    pub elements: Vec<UiElement>,
    #[serde(default)]
    pub transitions: Vec<TransitionRule>,
    #[serde(default = "one")]
    pub scroll_extent: u32,
    /// Text field focused on entry.
    #[serde(default)]
    pub autofocus: Option<String>,
}

impl ScreenDef {
    pub fn element(&self, id: &str) -> Option<&UiElement> {
        self.elements.iter().find(|e| e.id == id)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppDefinition {
    pub app_name: String,
    pub initial_screen: String,
    #[serde(default)]
    pub state_vars: BTreeMap<String, Value>,
    pub screens: Vec<ScreenDef>,
}

impl AppDefinition {
    pub fn key(&self) -> String {
        app_key(&self.app_name)
    }

    pub fn screen(&self, id: &str) -> Option<&ScreenDef> {
        self.screens.iter().find(|s| s.id == id)
    }

    /// Parses and validates one app document.
    pub fn from_json(text: &str, origin: &str) -> Result<Self, LoadError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let app: AppDefinition =
            serde_path_to_error::deserialize(de).map_err(|e| LoadError::Schema {
                origin: origin.to_string(),
                path: e.path().to_string(),
                message: e.inner().to_string(),
            })?;
        app.validate()?;
        Ok(app)
    }

    pub fn load(path: &Path) -> Result<Self, LoadError> {
        let text = std::fs::read_to_string(path).map_err(|source| LoadError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text, &path.display().to_string())
    }

    /// Checks every invariant that does not involve other apps.
    pub fn validate(&self) -> Result<(), LoadError> {
        let err = |message: String| LoadError::Invalid {
            app: self.app_name.clone(),
            message,
        };
        if self.app_name.trim().is_empty() {
            return Err(err("empty app_name".into()));
        }
        let mut ids = BTreeSet::new();
        for s in &self.screens {
            if !ids.insert(s.id.as_str()) {
                return Err(err(format!("duplicate screen id `{}`", s.id)));
            }
        }
        if !ids.contains(self.initial_screen.as_str()) {
            return Err(err(format!(
                "initial_screen `{}` is not a screen",
                self.initial_screen
            )));
        }
        let known_screen = |target: &str| ids.contains(target);
        for s in &self.screens {
            if s.scroll_extent == 0 {
                return Err(err(format!(
                    "screen `{}`: scroll_extent must be at least 1",
                    s.id
                )));
            }
            let mut element_ids = BTreeSet::new();
            for e in &s.elements {
                if !element_ids.insert(e.id.as_str()) {
                    return Err(err(format!(
                        "screen `{}`: duplicate element id `{}`",
                        s.id, e.id
                    )));
                }
                if !e.bounds.is_well_formed() {
                    return Err(err(format!(
                        "screen `{}`: element `{}` has malformed bounds",
                        s.id, e.id
                    )));
                }
                if e.bounds.area() > MAX_ELEMENT_AREA + 1e-12 {
                    return Err(err(format!(
                        "screen `{}`: element `{}` covers {:.2} of the screen, more than a quarter",
                        s.id,
                        e.id,
                        e.bounds.area()
                    )));
                }
                if e.page > s.scroll_extent {
                    return Err(err(format!(
                        "screen `{}`: element `{}` is on page {} of {}",
                        s.id, e.id, e.page, s.scroll_extent
                    )));
                }
                match (e.kind, &e.var) {
                    (ElementKind::Switch, Some(v)) => {
                        self.expect_var(v, "bool", |x| matches!(x, Value::Bool(_)))?
                    }
                    (ElementKind::TextField, Some(v)) => {
                        self.expect_var(v, "str", |x| matches!(x, Value::Str(_)))?
                    }
                    (ElementKind::Switch | ElementKind::TextField, None) => {
                        return Err(err(format!(
                            "screen `{}`: element `{}` needs a `var`",
                            s.id, e.id
                        )))
                    }
                    (_, Some(_)) => {
                        return Err(err(format!(
                            "screen `{}`: only switches and text fields bind a `var` (`{}`)",
                            s.id, e.id
                        )))
                    }
                    (_, None) => {}
                }
            }
            for (i, a) in s.elements.iter().enumerate() {
                for b in &s.elements[i + 1..] {
                    let co_visible = a.page == b.page || a.page == 0 || b.page == 0;
                    let d = center_distance(&a.bounds, &b.bounds);
                    if co_visible && d <= SPACING_THRESHOLD {
                        return Err(err(format!(
                            "screen `{}`: centers of `{}` and `{}` are {d:.3} apart, at most the spacing threshold {SPACING_THRESHOLD}",
                            s.id, a.id, b.id
                        )));
                    }
                }
            }
            if let Some(f) = &s.autofocus {
                match s.element(f) {
                    Some(e) if e.kind == ElementKind::TextField => {}
                    _ => {
                        return Err(err(format!(
                            "screen `{}`: autofocus `{f}` is not a text field",
                            s.id
                        )))
                    }
                }
            }
            for (ri, r) in s.transitions.iter().enumerate() {
                let at = format!("screen `{}` transition {ri}", s.id);
                if let Some(el) = &r.element {
                    if s.element(el).is_none() {
                        return Err(err(format!("{at}: unknown element `{el}`")));
                    }
                } else if matches!(r.on, Trigger::Tap | Trigger::LongPress) {
                    return Err(err(format!("{at}: taps and long presses need an element")));
                }
                match (&r.target, r.nav) {
                    (Some(t), NavOp::Push | NavOp::Replace | NavOp::Reset) if !known_screen(t) => {
                        return Err(err(format!("{at}: unknown target screen `{t}`")))
                    }
                    (None, NavOp::Replace | NavOp::Reset) => {
                        return Err(err(format!("{at}: `{:?}` needs a target", r.nav)))
                    }
                    _ => {}
                }
                for sc in &r.schedule {
                    for t in sc.from_screen.iter().chain(sc.to_screen.iter()) {
                        if !known_screen(t) {
                            return Err(err(format!(
                                "{at}: scheduled change names unknown screen `{t}`"
                            )));
                        }
                    }
                    if sc.after == 0 {
                        return Err(err(format!(
                            "{at}: scheduled change must be at least one tick later"
                        )));
                    }
                }
                for (dst, src) in &r.copy {
                    for v in [dst, src] {
                        if !v.contains('.') && !self.state_vars.contains_key(v) {
                            return Err(err(format!("{at}: copy names undeclared var `{v}`")));
                        }
                    }
                }
                for v in r
                    .set
                    .keys()
                    .chain(r.schedule.iter().flat_map(|s| s.set.keys()))
                {
                    if !v.contains('.') && !self.state_vars.contains_key(v) {
                        return Err(err(format!("{at}: sets undeclared var `{v}`")));
                    }
                }
            }
        }
        Ok(())
    }

    fn expect_var(
        &self,
        var: &str,
        ty: &str,
        ok: impl Fn(&Value) -> bool,
    ) -> Result<(), LoadError> {
        match self.state_vars.get(var) {
            Some(v) if ok(v) => Ok(()),
            Some(v) => Err(LoadError::Invalid {
                app: self.app_name.clone(),
                message: format!("var `{var}` is {}, expected {ty}", v.type_name()),
            }),
            None => Err(LoadError::Invalid {
                app: self.app_name.clone(),
                message: format!("undeclared var `{var}`"),
            }),
        }
    }

    /// Every condition in the app, qualified, for cross-app checks.
    pub(crate) fn conditions(&self) -> Vec<Condition> {
        let key = self.key();
        let mut out = Vec::new();
        for s in &self.screens {
            for e in &s.elements {
                if let Some(c) = &e.visible_when {
                    out.push(c.qualify(&key));
                }
            }
            for r in &s.transitions {
                if let Some(c) = &r.when {
                    out.push(c.qualify(&key));
                }
            }
        }
        out
    }
}
