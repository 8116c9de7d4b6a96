//! Prompt templates and response parsing.
//!
//! The three planning templates (initial graph, initial plan, refinement) are
//! stored as text assets with `{{name}}` slots. Three short auxiliary prompts
//! cover element selection, element verification and truth queries.

mod response;

use std::fmt;
use std::sync::OnceLock;

use regex::Regex;

use crate::device_sim::ActionCommand;
use crate::world_model::{edge_line, vertex_line, WorldModelGraph};

pub use response::{
    parse_plan_response, parse_refinement_response, render_plan_response,
    render_refinement_response, truncate_response, PlanResponse, RefinementOutcome,
    ResponseParseError, MAX_RESPONSE_BYTES,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Template {
    InitGraph,
    InitPlan,
    Refine,
}

impl Template {
    pub const ALL: [Template; 3] = [Template::InitGraph, Template::InitPlan, Template::Refine];

    /// Raw template text with `{{name}}` slots.
    pub fn source(&self) -> &'static str {
        match self {
            Template::InitGraph => include_str!("../../assets/prompts/init_graph.txt"),
            Template::InitPlan => include_str!("../../assets/prompts/init_plan.txt"),
            Template::Refine => include_str!("../../assets/prompts/refine.txt"),
        }
    }

    /// Slot names, in the order they are checked.
    pub fn placeholders(&self) -> &'static [&'static str] {
        match self {
            Template::InitGraph => &["task_description", "App_name"],
            Template::InitPlan => &["task_description", "Vertices", "Edges"],
            Template::Refine => &[
                "task_description",
                "app",
                "Vertices",
                "Edges",
                "plan",
                "previous_vertex",
                "action",
                "detailed_action",
                "thought",
                "summary",
                "act_history",
                "repeated_doc",
            ],
        }
    }
}

impl fmt::Display for Template {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Template::InitGraph => "init_graph",
            Template::InitPlan => "init_plan",
            Template::Refine => "refine",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("cannot render {template}: <{placeholder}> is not set")]
pub struct RenderError {
    pub template: String,
    pub placeholder: String,
}

/// Values for the template slots. Unset optional blocks render empty.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PromptContext {
    pub goal: Option<String>,
    pub app_name: Option<String>,
    pub vertices: Option<String>,
    pub edges: Option<String>,
    pub plan_text: Option<String>,
    pub previous_vertex: Option<String>,
    /// Action phrase of the last `E` call.
    pub last_action: Option<String>,
    /// The concrete command, e.g. `tap(3)`.
    pub detailed_action: Option<String>,
    pub thought: Option<String>,
    pub summary: Option<String>,
    pub history: Option<String>,
    pub repeated_elements: Option<String>,
}

impl PromptContext {
    pub fn new(goal: impl Into<String>, app_name: impl Into<String>) -> Self {
        PromptContext {
            goal: Some(goal.into()),
            app_name: Some(app_name.into()),
            ..Default::default()
        }
    }

    /// Fills the vertex and edge blocks from a graph.
    pub fn with_graph(mut self, graph: &WorldModelGraph) -> Self {
        let (v, e) = graph_blocks(graph);
        self.vertices = Some(v);
        self.edges = Some(e);
        self
    }

    /// `None` for an unknown slot, `Some(None)` for an unset required one.
    fn slot(&self, name: &str) -> Option<Option<&str>> {
        fn required(v: &Option<String>) -> Option<Option<&str>> {
            Some(v.as_deref())
        }
        fn optional(v: &Option<String>) -> Option<Option<&str>> {
            Some(Some(v.as_deref().unwrap_or("")))
        }
        match name {
            "task_description" => required(&self.goal),
            "App_name" | "app" => required(&self.app_name),
            "Vertices" => required(&self.vertices),
            "Edges" => required(&self.edges),
            "plan" => required(&self.plan_text),
            "previous_vertex" => required(&self.previous_vertex),
            "action" => required(&self.last_action),
            "detailed_action" => required(&self.detailed_action),
            "thought" => optional(&self.thought),
            "summary" => optional(&self.summary),
            "act_history" => optional(&self.history),
            "repeated_doc" => optional(&self.repeated_elements),
            _ => None,
        }
    }
}

/// Vertex lines and edge lines of a graph, one per line.
pub fn graph_blocks(graph: &WorldModelGraph) -> (String, String) {
    let vertices = graph
        .vertices()
        .iter()
        .map(vertex_line)
        .collect::<Vec<_>>()
        .join("\n");
    let edges = graph
        .edges()
        .iter()
        .map(edge_line)
        .collect::<Vec<_>>()
        .join("\n");
    (vertices, edges)
}

/// Substitutes `{{name}}` slots. Values are inserted verbatim and never rescanned.
pub fn fill(
    source: &str,
    mut lookup: impl FnMut(&str) -> Option<String>,
) -> Result<String, String> {
    let mut out = String::with_capacity(source.len());
    let mut rest = source;
    while let Some(open) = rest.find("{{") {
        let Some(close) = rest[open + 2..].find("}}") else {
            break;
        };
        let name = &rest[open + 2..open + 2 + close];
        out.push_str(&rest[..open]);
        match lookup(name) {
            Some(v) => out.push_str(&v),
            None => return Err(name.to_string()),
        }
        rest = &rest[open + 2 + close + 2..];
    }
    out.push_str(rest);
    Ok(out)
}

pub fn render(template: Template, ctx: &PromptContext) -> Result<String, RenderError> {
    let missing = |placeholder: &str| RenderError {
        template: template.to_string(),
        placeholder: placeholder.to_string(),
    };
    for name in template.placeholders() {
        if ctx.slot(name).flatten().is_none() {
            return Err(missing(name));
        }
    }
    fill(template.source(), |name| {
        ctx.slot(name).flatten().map(str::to_string)
    })
    .map_err(|n| missing(&n))
}

/// Asks for one command grounding a plan step on the attached screen.
pub fn render_select_action(
    goal: &str,
    vertex: &str,
    action: &str,
    excluded: &[u32],
    remind: &str,
) -> String {
    const SOURCE: &str = include_str!("../../assets/prompts/select_action.txt");
    let excluded = if excluded.is_empty() {
        "none".to_string()
    } else {
        excluded
            .iter()
            .map(u32::to_string)
            .collect::<Vec<_>>()
            .join(", ")
    };
    let reminder = if remind.trim().is_empty() {
        String::new()
    } else {
        format!("Reminder: {}\n", remind.trim())
    };
    fill(SOURCE, |name| match name {
        "task_description" => Some(goal.to_string()),
        "vertex" => Some(vertex.to_string()),
        "action" => Some(action.to_string()),
        "excluded" => Some(excluded.clone()),
        "reminder" => Some(reminder.clone()),
        _ => None,
    })
    .expect("select_action slots are all known")
}

/// Asks whether a zoomed-in element is the right target for an action.
pub fn render_verify_action(goal: &str, action: &str, command: &str, element: &str) -> String {
    const SOURCE: &str = include_str!("../../assets/prompts/verify_action.txt");
    fill(SOURCE, |name| match name {
        "task_description" => Some(goal.to_string()),
        "action" => Some(action.to_string()),
        "command" => Some(command.to_string()),
        "element" => Some(element.to_string()),
        _ => None,
    })
    .expect("verify_action slots are all known")
}

/// Asks whether a statement holds on the attached screen.
pub fn render_query_true(goal: &str, statement: &str, compare_screen: bool) -> String {
    const SOURCE: &str = include_str!("../../assets/prompts/query_true.txt");
    let screens = if compare_screen {
        "the current screen compared with the previous screen (both attached)"
    } else {
        "the current screen (attached)"
    };
    fill(SOURCE, |name| match name {
        "task_description" => Some(goal.to_string()),
        "statement" => Some(statement.to_string()),
        "screens" => Some(screens.to_string()),
        _ => None,
    })
    .expect("query_true slots are all known")
}

/// Reads a strict `True`/`False` answer, ignoring case, surrounding space,
/// markdown emphasis and a trailing period.
pub fn parse_bool_token(text: &str) -> Option<bool> {
    let t = text
        .trim()
        .trim_matches(|c| c == '*' || c == '`' || c == '.')
        .trim();
    if t.eq_ignore_ascii_case("true") {
        Some(true)
    } else if t.eq_ignore_ascii_case("false") {
        Some(false)
    } else {
        None
    }
}

/// The first command in a model answer, e.g. `tap(3)` inside prose or a code fence.
pub fn parse_command_response(text: &str) -> Option<ActionCommand> {
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = RE.get_or_init(|| {
        Regex::new(r#"\b(?:tap|long_press|swipe_grid|swipe|text|back|finish)\s*\((?:[^()"]|"(?:[^"\\]|\\.)*")*\)"#)
            .unwrap()
    });
    re.find_iter(text).find_map(|m| m.as_str().parse().ok())
}
