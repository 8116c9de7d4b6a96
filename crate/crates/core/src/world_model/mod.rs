//! Text-graph world model of a single app.
//!
//! Vertices are named screen descriptions, edges are action-labelled
//! transitions `E(source, action) -> target`. A `(source, action)` pair may
//! lead to several targets; uncertainty is enumerated, never weighted.

mod diff;
mod store;
mod text;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

pub use diff::{apply_diff, ApplyReport, GraphDiff};
pub use store::{GraphStore, StoreError};
pub use text::{
    edge_line, parse_diff, parse_graph, serialize_graph, vertex_line, GraphParseError, ParsedDiff,
};

/// Canonical key for vertex names and action phrases: surrounding quotes
/// stripped, internal whitespace collapsed, case folded.
pub fn normalize_name(raw: &str) -> String {
    let collapsed = raw.split_whitespace().collect::<Vec<_>>().join(" ");
    strip_quotes(&collapsed)
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

/// Removes balanced surrounding quote pairs, repeatedly.
pub(crate) fn strip_quotes(raw: &str) -> &str {
    const PAIRS: [(&str, &str); 6] = [
        ("``", "''"),
        ("``", "``"),
        ("\"", "\""),
        ("'", "'"),
        ("\u{201c}", "\u{201d}"),
        ("\u{2018}", "\u{2019}"),
    ];
    let mut s = raw.trim();
    loop {
        let before = s;
        for (open, close) in PAIRS {
            if s.len() >= open.len() + close.len() && s.starts_with(open) && s.ends_with(close) {
                s = s[open.len()..s.len() - close.len()].trim();
                break;
            }
        }
        if s == before {
            return s;
        }
    }
}

/// The five action families an edge label may start with. `KEYCODE` is
/// accepted as a spelling of the system back key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionType {
    Tap,
    Swipe,
    LongPress,
    Type,
    Back,
}

impl ActionType {
    /// Classifies an action phrase by its first token (or `long press`).
    pub fn of_phrase(phrase: &str) -> Option<ActionType> {
        let mut words = strip_quotes(phrase).split_whitespace().map(|w| {
            w.trim_matches(|c: char| !c.is_alphanumeric() && c != '_' && c != '-')
                .to_ascii_lowercase()
        });
        let first = words.next()?;
        match first.as_str() {
            "long" if words.next().as_deref() == Some("press") => Some(ActionType::LongPress),
            "tap" => Some(ActionType::Tap),
            "swipe" => Some(ActionType::Swipe),
            "long_press" | "long-press" | "longpress" => Some(ActionType::LongPress),
            "type" => Some(ActionType::Type),
            "back" => Some(ActionType::Back),
            k if k.starts_with("keycode") => Some(ActionType::Back),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VertexSpec {
    pub name: String,
    pub description: String,
    pub can_self_act: bool,
    #[serde(default)]
    pub imagined: bool,
}

impl VertexSpec {
    pub fn new(
        name: impl Into<String>,
        description: impl Into<String>,
        can_self_act: bool,
    ) -> Self {
        VertexSpec {
            name: name.into(),
            description: description.into(),
            can_self_act,
            imagined: false,
        }
    }

    pub fn key(&self) -> String {
        normalize_name(&self.name)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EdgeSpec {
    pub source: String,
    pub action: String,
    pub target: String,
    #[serde(default)]
    pub comment: String,
    #[serde(default)]
    pub imagined: bool,
}

impl EdgeSpec {
    pub fn new(
        source: impl Into<String>,
        action: impl Into<String>,
        target: impl Into<String>,
        comment: impl Into<String>,
    ) -> Self {
        EdgeSpec {
            source: source.into(),
            action: action.into(),
            target: target.into(),
            comment: comment.into(),
            imagined: false,
        }
    }

    /// Normalized `(source, action, target)`; removal matching uses this and
    /// ignores the comment and the imagined flag.
    pub fn key(&self) -> (String, String, String) {
        (
            normalize_name(&self.source),
            normalize_name(&self.action),
            normalize_name(&self.target),
        )
    }

    pub fn action_type(&self) -> Option<ActionType> {
        ActionType::of_phrase(&self.action)
    }
}

// Compared by the same normalized keys the graph uses.
impl PartialEq for VertexSpec {
    fn eq(&self, other: &Self) -> bool {
        self.key() == other.key()
            && self.description.trim() == other.description.trim()
            && self.can_self_act == other.can_self_act
            && self.imagined == other.imagined
    }
}

impl PartialEq for EdgeSpec {
    fn eq(&self, other: &Self) -> bool {
        self.key() == other.key()
            && self.comment.trim() == other.comment.trim()
            && self.imagined == other.imagined
    }
}

/// A line of model output that did not fit the grammar, or a defaulted field.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseWarning {
    /// 1-based line in the parsed text; 0 when not tied to a line.
    pub line: usize,
    pub message: String,
}

impl fmt::Display for ParseWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.line == 0 {
            write!(f, "{}", self.message)
        } else {
            write!(f, "line {}: {}", self.line, self.message)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum EndpointRole {
    Source,
    Target,
}

/// An edge endpoint naming no known vertex. Legal, but reported.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DanglingEndpoint {
    pub edge_index: usize,
    pub role: EndpointRole,
    pub name: String,
}

#[derive(Debug, Clone, Default)]
pub struct WorldModelGraph {
    vertices: Vec<VertexSpec>,
    edges: Vec<EdgeSpec>,
    warnings: Vec<ParseWarning>,
}

impl WorldModelGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn vertices(&self) -> &[VertexSpec] {
        &self.vertices
    }

    pub fn edges(&self) -> &[EdgeSpec] {
        &self.edges
    }

    /// Warnings collected while parsing. Not part of graph equality.
    pub fn warnings(&self) -> &[ParseWarning] {
        &self.warnings
    }

    pub(crate) fn push_warning(&mut self, line: usize, message: impl Into<String>) {
        self.warnings.push(ParseWarning {
            line,
            message: message.into(),
        });
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty() && self.edges.is_empty()
    }

    pub fn vertex(&self, name: &str) -> Option<&VertexSpec> {
        let key = normalize_name(name);
        self.vertices.iter().find(|v| v.key() == key)
    }

    pub fn contains_vertex(&self, name: &str) -> bool {
        self.vertex(name).is_some()
    }

    /// Inserts a vertex; an existing vertex with the same normalized name is
    /// replaced in place. Returns true on replacement.
    pub fn upsert_vertex(&mut self, vertex: VertexSpec) -> bool {
        let key = vertex.key();
        if let Some(slot) = self.vertices.iter_mut().find(|v| v.key() == key) {
            *slot = vertex;
            true
        } else {
            self.vertices.push(vertex);
            false
        }
    }

    pub fn remove_vertex(&mut self, name: &str) -> Option<VertexSpec> {
        let key = normalize_name(name);
        let idx = self.vertices.iter().position(|v| v.key() == key)?;
        Some(self.vertices.remove(idx))
    }

    pub fn push_edge(&mut self, edge: EdgeSpec) {
        self.edges.push(edge);
    }

    /// Removes one edge matching `(source, action, target)`. Among several
    /// matches, an exact one (comment and imagined flag too) wins, then one
    /// with the same comment, then the first.
    pub fn remove_edge(&mut self, edge: &EdgeSpec) -> Option<EdgeSpec> {
        let key = edge.key();
        let comment = edge.comment.trim();
        let idx = self
            .edges
            .iter()
            .position(|e| e == edge)
            .or_else(|| {
                self.edges
                    .iter()
                    .position(|e| e.key() == key && e.comment.trim() == comment)
            })
            .or_else(|| self.edges.iter().position(|e| e.key() == key))?;
        Some(self.edges.remove(idx))
    }

    /// Edges leaving `vertex`, optionally restricted to one action phrase.
    /// Insertion order is kept; multi-target edges are all returned.
    pub fn lookup_edges(&self, vertex: &str, action: Option<&str>) -> Vec<&EdgeSpec> {
        let source = normalize_name(vertex);
        let action = action.map(normalize_name);
        self.edges
            .iter()
            .filter(|e| normalize_name(&e.source) == source)
            .filter(|e| match &action {
                Some(a) => normalize_name(&e.action) == *a,
                None => true,
            })
            .collect()
    }

    pub fn dangling_endpoints(&self) -> Vec<DanglingEndpoint> {
        let known: std::collections::HashSet<String> =
            self.vertices.iter().map(|v| v.key()).collect();
        let mut out = Vec::new();
        for (edge_index, e) in self.edges.iter().enumerate() {
            if !known.contains(&normalize_name(&e.source)) {
                out.push(DanglingEndpoint {
                    edge_index,
                    role: EndpointRole::Source,
                    name: e.source.clone(),
                });
            }
            if !known.contains(&normalize_name(&e.target)) {
                out.push(DanglingEndpoint {
                    edge_index,
                    role: EndpointRole::Target,
                    name: e.target.clone(),
                });
            }
        }
        out
    }

    fn vertex_view(&self) -> BTreeMap<String, (String, bool, bool)> {
        self.vertices
            .iter()
            .map(|v| {
                (
                    v.key(),
                    (v.description.trim().to_string(), v.can_self_act, v.imagined),
                )
            })
            .collect()
    }

    fn edge_view(&self) -> Vec<(String, String, String, String, bool)> {
        let mut edges: Vec<_> = self
            .edges
            .iter()
            .map(|e| {
                let (s, a, t) = e.key();
                (s, a, t, e.comment.trim().to_string(), e.imagined)
            })
            .collect();
        edges.sort();
        edges
    }
}

/// Structural equality: vertices keyed by normalized name, edges compared as
/// a multiset over normalized endpoints and action. Order and warnings are
/// ignored; `serialize_graph` output is the order-sensitive view.
impl PartialEq for WorldModelGraph {
    fn eq(&self, other: &Self) -> bool {
        self.vertices.len() == other.vertices.len()
            && self.vertex_view() == other.vertex_view()
            && self.edge_view() == other.edge_view()
    }
}

impl Eq for WorldModelGraph {}
