//! Parsers for plan and refinement responses, plus renderers that produce the
//! same shape (used by the scripted oracle and by round-trip tests).

use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::world_model::{edge_line, parse_diff, vertex_line, GraphDiff, ParseWarning};

/// Responses longer than this are cut before parsing.
pub const MAX_RESPONSE_BYTES: usize = 64 * 1024;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ResponseParseError {
    #[error("response has no \"Current vertex:\" line")]
    MissingVertex,
    #[error("response has no plan function (expected \"def new_plan():\")")]
    MissingPlan,
    #[error("response has no \"{section}:\" section")]
    MissingFlag { section: &'static str },
    #[error("\"{section}:\" must be True or False, got {value:?}")]
    InvalidFlag {
        section: &'static str,
        value: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanResponse {
    pub current_vertex: String,
    /// Starts at the `def` line.
    pub plan_text: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RefinementOutcome {
    pub observation_text: String,
    pub thoughts: String,
    pub diff: GraphDiff,
    /// Empty when the response names no vertex.
    pub current_vertex: String,
    pub added_other_app_calls: Vec<(String, String)>,
    pub successful_and_expected: bool,
    pub ineffective: bool,
    pub revised_plan_text: Option<String>,
    pub remind: String,
    pub impact: String,
    /// Lines of the diff region that did not parse.
    #[serde(default)]
    pub warnings: Vec<ParseWarning>,
}

impl RefinementOutcome {
    /// The outcome of a step that changed nothing in the graph or plan.
    pub fn no_op(current_vertex: impl Into<String>) -> Self {
        RefinementOutcome {
            current_vertex: current_vertex.into(),
            successful_and_expected: true,
            ..Default::default()
        }
    }
}

/// Cuts `text` to at most [`MAX_RESPONSE_BYTES`], on a char boundary.
pub fn truncate_response(text: &str) -> &str {
    if text.len() <= MAX_RESPONSE_BYTES {
        return text;
    }
    let mut end = MAX_RESPONSE_BYTES;
    while !text.is_char_boundary(end) {
        end -= 1;
    }
    &text[..end]
}

fn is_fence(line: &str) -> bool {
    line.trim_start().starts_with("```")
}

fn def_line() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^def\s+\w+\s*\(\s*\)\s*:").unwrap())
}

fn other_app_call() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(
            r#"other_app_function\(\s*(?:"([^"]*)"|'([^']*)')\s*,\s*(?:"([^"]*)"|'([^']*)')"#,
        )
        .unwrap()
    })
}

/// Strips markdown emphasis and matches `name` case-insensitively at the start
/// of a line, followed by an optional colon. Returns the rest of the line.
fn match_header<'a>(line: &'a str, name: &str) -> Option<&'a str> {
    let t = line.trim_start().trim_start_matches(['#', '*', ' ']);
    let head = t.get(..name.len())?;
    if !head.eq_ignore_ascii_case(name) {
        return None;
    }
    let rest = t[name.len()..].trim_start_matches(['*', ' ']);
    let rest = match rest.strip_prefix(':') {
        Some(r) => r,
        // Without a colon the header must fill the whole line.
        None if rest.trim().is_empty() => rest,
        None => return None,
    };
    Some(rest.trim_start_matches(['*', ' ']).trim_end())
}

fn clean_vertex(raw: &str) -> String {
    let t = raw.trim();
    let t = t
        .strip_prefix('<')
        .and_then(|s| s.strip_suffix('>'))
        .unwrap_or(t);
    t.trim()
        .trim_matches(|c| c == '"' || c == '\'')
        .trim()
        .to_string()
}

pub fn parse_plan_response(text: &str) -> Result<PlanResponse, ResponseParseError> {
    let text = truncate_response(text);
    let lines: Vec<&str> = text.lines().collect();
    let current_vertex = lines
        .iter()
        .find_map(|l| match_header(l, "Current vertex"))
        .map(clean_vertex)
        .filter(|v| !v.is_empty())
        .ok_or(ResponseParseError::MissingVertex)?;
    let start = lines
        .iter()
        .position(|l| def_line().is_match(l.trim_start()))
        .ok_or(ResponseParseError::MissingPlan)?;
    let mut plan = Vec::new();
    let mut opened_fence = lines[..start].iter().any(|l| is_fence(l));
    for line in &lines[start..] {
        if is_fence(line) {
            if opened_fence {
                break;
            }
            opened_fence = true;
            continue;
        }
        plan.push(*line);
    }
    let plan_text = plan.join("\n").trim_end().to_string();
    Ok(PlanResponse {
        current_vertex,
        plan_text,
    })
}

pub fn render_plan_response(resp: &PlanResponse) -> String {
    format!(
        "Current vertex: {}\n{}\n",
        resp.current_vertex, resp.plan_text
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Section {
    Observation,
    Thoughts,
    Diff,
    CurrentVertex,
    OtherApps,
    Successful,
    Ineffective,
    RevisedPlan,
    Remind,
    Impact,
}

const HEADERS: [(&str, Section); 13] = [
    (
        "Observation of the current screenshot",
        Section::Observation,
    ),
    ("Thoughts", Section::Thoughts),
    ("Removed vertices", Section::Diff),
    ("Added vertices", Section::Diff),
    ("Removed edges", Section::Diff),
    ("Added edges", Section::Diff),
    ("Current vertex", Section::CurrentVertex),
    ("Added functions for other apps", Section::OtherApps),
    ("Successful and expected action", Section::Successful),
    ("Ineffective", Section::Ineffective),
    ("Revised plan", Section::RevisedPlan),
    ("Remind", Section::Remind),
    (
        "Impact of the action on the element on the task",
        Section::Impact,
    ),
];

fn section_of(line: &str, in_plan: bool) -> Option<(Section, &str)> {
    // Inside the plan only unindented headers count, so code comments and
    // strings cannot end the section.
    if in_plan && line.starts_with([' ', '\t']) {
        return None;
    }
    HEADERS
        .iter()
        .find_map(|(name, s)| match_header(line, name).map(|rest| (*s, rest)))
}

fn parse_flag(value: Option<&str>, section: &'static str) -> Result<bool, ResponseParseError> {
    let value = value.ok_or(ResponseParseError::MissingFlag { section })?;
    let first = value.lines().find(|l| !l.trim().is_empty()).unwrap_or("");
    super::parse_bool_token(first).ok_or_else(|| ResponseParseError::InvalidFlag {
        section,
        value: first.trim().to_string(),
    })
}

pub fn parse_refinement_response(text: &str) -> Result<RefinementOutcome, ResponseParseError> {
    let text = truncate_response(text);
    let mut sections: Vec<(Section, Vec<&str>)> = Vec::new();
    let mut diff_region: Vec<&str> = Vec::new();
    let mut current: Option<Section> = None;
    for line in text.lines().filter(|l| !is_fence(l)) {
        if let Some((s, rest)) = section_of(line, current == Some(Section::RevisedPlan)) {
            current = Some(s);
            if s == Section::Diff {
                diff_region.push(line);
            } else {
                sections.push((s, vec![rest]));
            }
            continue;
        }
        match current {
            Some(Section::Diff) => diff_region.push(line),
            Some(_) => sections.last_mut().expect("section open").1.push(line),
            None => {}
        }
    }
    // First occurrence wins for every section.
    let get = |s: Section| -> Option<String> {
        sections.iter().find(|(k, _)| *k == s).map(|(_, lines)| {
            let body = lines.join("\n");
            let body = body.trim_matches('\n');
            if s == Section::RevisedPlan {
                body.trim_end().to_string()
            } else {
                body.trim().to_string()
            }
        })
    };

    let successful_and_expected = parse_flag(
        get(Section::Successful).as_deref(),
        "Successful and expected action",
    )?;
    let ineffective = parse_flag(get(Section::Ineffective).as_deref(), "Ineffective")?;

    let parsed = parse_diff(&diff_region.join("\n"));
    let added_other_app_calls = get(Section::OtherApps)
        .map(|body| {
            other_app_call()
                .captures_iter(&body)
                .map(|c| {
                    let app = c.get(1).or(c.get(2)).map_or("", |m| m.as_str());
                    let sub = c.get(3).or(c.get(4)).map_or("", |m| m.as_str());
                    (app.trim().to_string(), sub.trim().to_string())
                })
                .collect()
        })
        .unwrap_or_default();
    let revised_plan_text = get(Section::RevisedPlan).and_then(|body| {
        let lines: Vec<&str> = body.lines().collect();
        let start = lines
            .iter()
            .position(|l| def_line().is_match(l.trim_start()))?;
        Some(lines[start..].join("\n").trim_end().to_string())
    });

    Ok(RefinementOutcome {
        observation_text: get(Section::Observation).unwrap_or_default(),
        thoughts: get(Section::Thoughts).unwrap_or_default(),
        diff: parsed.diff,
        current_vertex: get(Section::CurrentVertex)
            .map(|v| clean_vertex(&v))
            .unwrap_or_default(),
        added_other_app_calls,
        successful_and_expected,
        ineffective,
        revised_plan_text,
        remind: get(Section::Remind).unwrap_or_default(),
        impact: get(Section::Impact).unwrap_or_default(),
        warnings: parsed.warnings,
    })
}

fn py_bool(b: bool) -> &'static str {
    if b {
        "True"
    } else {
        "False"
    }
}

/// Writes an outcome in the refinement output format.
pub fn render_refinement_response(o: &RefinementOutcome) -> String {
    let block = |items: Vec<String>| {
        if items.is_empty() {
            String::new()
        } else {
            items.join("\n") + "\n"
        }
    };
    let calls = o
        .added_other_app_calls
        .iter()
        .map(|(app, sub)| format!("other_app_function(\"{app}\", \"{sub}\")"))
        .collect();
    format!(
        "Observation of the current screenshot: {}\n\
         Thoughts: {}\n\n\
         Removed vertices:\n{}\n\
         Added vertices:\n{}\n\
         Removed edges:\n{}\n\
         Added edges:\n{}\n\
         Current vertex: {}\n\n\
         Added functions for other apps:\n{}\n\
         Successful and expected action: {}\n\n\
         Ineffective: {}\n\n\
         Revised plan:\n{}\n\
         Remind: {}\n\n\
         Impact of the action on the element on the task:\n{}\n",
        o.observation_text,
        o.thoughts,
        block(o.diff.removed_vertices.iter().map(vertex_line).collect()),
        block(o.diff.added_vertices.iter().map(vertex_line).collect()),
        block(o.diff.removed_edges.iter().map(edge_line).collect()),
        block(o.diff.added_edges.iter().map(edge_line).collect()),
        o.current_vertex,
        block(calls),
        py_bool(o.successful_and_expected),
        py_bool(o.ineffective),
        o.revised_plan_text
            .as_deref()
            .map(|p| format!("{p}\n"))
            .unwrap_or_default(),
        o.remind,
        o.impact,
    )
}
