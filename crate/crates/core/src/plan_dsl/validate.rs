use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::ast::{Expr, PlanProgram, StmtKind};
use crate::world_model::{normalize_name, ActionType, WorldModelGraph};

/// Token overlap at or above which a non-matching call is reported as an
/// approximate match rather than a missing edge.
const APPROX_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DiagnosticKind {
    /// No edge with this source and action exists, nor any close paraphrase.
    MissingEdge,
    /// No exact edge, but one whose source and action are close paraphrases.
    ApproximateMatch {
        source: String,
        action: String,
        score: f64,
    },
    /// Source or action is interpolated and cannot be checked statically.
    UncheckedDynamic,
    /// The call is marked imagined and exempt from checking.
    ImaginedNote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub line: usize,
    #[serde(flatten)]
    pub kind: DiagnosticKind,
    /// Call arguments as written; slots appear as `{name}`.
    pub source: String,
    pub action: String,
}

impl Diagnostic {
    pub fn is_error(&self) -> bool {
        matches!(self.kind, DiagnosticKind::MissingEdge)
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let call = format!("E({:?}, {:?})", self.source, self.action);
        match &self.kind {
            DiagnosticKind::MissingEdge => write!(f, "line {}: {call} has no edge in the graph", self.line),
            DiagnosticKind::ApproximateMatch { source, action, score } => write!(
                f,
                "line {}: {call} has no exact edge; closest is E({source:?}, {action:?}) (overlap {score:.2})",
                self.line
            ),
            DiagnosticKind::UncheckedDynamic => write!(f, "line {}: {call} is interpolated, unchecked (dynamic)", self.line),
            DiagnosticKind::ImaginedNote => write!(f, "line {}: {call} is imagined", self.line),
        }
    }
}

/// Checks every `E` call against the graph. Exact (normalized) matches are
/// silent; nothing that exists in the graph is ever reported.
pub fn validate_plan(program: &PlanProgram, graph: &WorldModelGraph) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    program.walk(|stmt| {
        let StmtKind::EdgeCall {
            source,
            action,
            imagined,
        } = &stmt.kind
        else {
            return;
        };
        let render = |e: &Expr| match e {
            Expr::Str(s) => s
                .parts
                .iter()
                .map(|p| match p {
                    super::ast::StrPart::Lit(t) => t.clone(),
                    super::ast::StrPart::Slot(v) => format!("{{{v}}}"),
                })
                .collect(),
            Expr::Var(v) => format!("{{{v}}}"),
            other => format!("{other:?}"),
        };
        let diag = |kind| Diagnostic {
            line: stmt.line,
            kind,
            source: render(source),
            action: render(action),
        };
        if *imagined {
            out.push(diag(DiagnosticKind::ImaginedNote));
            return;
        }
        let (Some(src), Some(act)) = (source.as_literal(), action.as_literal()) else {
            out.push(diag(DiagnosticKind::UncheckedDynamic));
            return;
        };
        if !graph.lookup_edges(&src, Some(&act)).is_empty() {
            return;
        }
        match closest_edge(graph, &src, &act) {
            Some((source, action, score)) if score >= APPROX_THRESHOLD => {
                out.push(diag(DiagnosticKind::ApproximateMatch {
                    source,
                    action,
                    score,
                }))
            }
            _ => out.push(diag(DiagnosticKind::MissingEdge)),
        }
    });
    out
}

fn tokens(text: &str) -> BTreeSet<String> {
    normalize_name(text)
        .split(|c: char| !c.is_alphanumeric() && c != '-')
        .map(|t| t.trim_matches('-'))
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

fn jaccard(a: &BTreeSet<String>, b: &BTreeSet<String>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        return 0.0;
    }
    a.intersection(b).count() as f64 / union as f64
}

/// The edge with the highest min(source overlap, action overlap) among
/// edges whose action has the same verb.
fn closest_edge(
    graph: &WorldModelGraph,
    source: &str,
    action: &str,
) -> Option<(String, String, f64)> {
    let verb = ActionType::of_phrase(action);
    let src = tokens(source);
    let act = tokens(action);
    graph
        .edges()
        .iter()
        .filter(|e| ActionType::of_phrase(&e.action) == verb)
        .map(|e| {
            let score = jaccard(&src, &tokens(&e.source)).min(jaccard(&act, &tokens(&e.action)));
            (e.source.clone(), e.action.clone(), score)
        })
        .max_by(|a, b| a.2.total_cmp(&b.2))
}
