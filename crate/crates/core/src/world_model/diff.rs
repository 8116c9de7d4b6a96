use serde::{Deserialize, Serialize};

use super::{normalize_name, DanglingEndpoint, EdgeSpec, VertexSpec, WorldModelGraph};

/// Vertex and edge changes proposed by a refinement response.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GraphDiff {
    pub removed_vertices: Vec<VertexSpec>,
    pub added_vertices: Vec<VertexSpec>,
    pub removed_edges: Vec<EdgeSpec>,
    pub added_edges: Vec<EdgeSpec>,
}

impl GraphDiff {
    pub fn is_empty(&self) -> bool {
        self.removed_vertices.is_empty()
            && self.added_vertices.is_empty()
            && self.removed_edges.is_empty()
            && self.added_edges.is_empty()
    }

    /// The diff that undoes this one when it applied cleanly.
    pub fn inverse(&self) -> GraphDiff {
        GraphDiff {
            removed_vertices: self.added_vertices.clone(),
            added_vertices: self.removed_vertices.clone(),
            removed_edges: self.added_edges.clone(),
            added_edges: self.removed_edges.clone(),
        }
    }
}

/// What `apply_diff` could not do verbatim.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApplyReport {
    /// Removed-vertex names that matched nothing.
    pub unmatched_vertex_removals: Vec<String>,
    /// Removed edges that matched nothing, rendered as edge lines.
    pub unmatched_edge_removals: Vec<String>,
    /// Added vertices whose name already existed; their description was replaced.
    pub replaced_vertices: Vec<String>,
    /// Endpoints left dangling by this diff that were not dangling before.
    pub new_dangling: Vec<DanglingEndpoint>,
}

impl ApplyReport {
    /// Every removal matched and no addition collided with an existing vertex.
    pub fn is_clean(&self) -> bool {
        self.unmatched_vertex_removals.is_empty()
            && self.unmatched_edge_removals.is_empty()
            && self.replaced_vertices.is_empty()
    }

    pub fn is_empty(&self) -> bool {
        self.is_clean() && self.new_dangling.is_empty()
    }
}

/// Applies removals first, then additions, and returns the new graph.
pub fn apply_diff(graph: &WorldModelGraph, diff: &GraphDiff) -> (WorldModelGraph, ApplyReport) {
    let mut next = graph.clone();
    next.warnings.clear();
    let mut report = ApplyReport::default();
    let dangling_before: std::collections::HashSet<(String, bool)> = graph
        .dangling_endpoints()
        .into_iter()
        .map(|d| {
            (
                normalize_name(&d.name),
                d.role == super::EndpointRole::Source,
            )
        })
        .collect();

    for v in &diff.removed_vertices {
        if next.remove_vertex(&v.name).is_none() {
            report.unmatched_vertex_removals.push(v.name.clone());
        }
    }
    for e in &diff.removed_edges {
        if next.remove_edge(e).is_none() {
            report
                .unmatched_edge_removals
                .push(super::text::edge_line(e));
        }
    }
    for v in &diff.added_vertices {
        if next.upsert_vertex(v.clone()) {
            report.replaced_vertices.push(v.name.clone());
        }
    }
    for e in &diff.added_edges {
        next.push_edge(e.clone());
    }

    report.new_dangling = next
        .dangling_endpoints()
        .into_iter()
        .filter(|d| {
            !dangling_before.contains(&(
                normalize_name(&d.name),
                d.role == super::EndpointRole::Source,
            ))
        })
        .collect();
    (next, report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_vertex_graph() -> WorldModelGraph {
        let mut g = WorldModelGraph::new();
        g.upsert_vertex(VertexSpec::new("A", "first", true));
        g.upsert_vertex(VertexSpec::new("B", "second", false));
        g.push_edge(EdgeSpec::new("A", "tap b", "B", "go"));
        g
    }

    #[test]
    fn noop_diff_is_identity() {
        let g = two_vertex_graph();
        let (next, report) = apply_diff(&g, &GraphDiff::default());
        assert_eq!(next, g);
        assert!(report.is_empty());
    }

    #[test]
    fn removing_a_vertex_flags_dangling_edges() {
        let g = two_vertex_graph();
        let diff = GraphDiff {
            removed_vertices: vec![VertexSpec::new("b", "", false)],
            ..Default::default()
        };
        let (next, report) = apply_diff(&g, &diff);
        assert!(next.vertex("B").is_none());
        assert_eq!(next.edges().len(), 1);
        assert!(report.is_clean());
        assert_eq!(report.new_dangling.len(), 1);
        assert_eq!(report.new_dangling[0].name, "B");
    }

    #[test]
    fn unmatched_removals_are_reported_not_fatal() {
        let g = two_vertex_graph();
        let diff = GraphDiff {
            removed_vertices: vec![VertexSpec::new("Z", "", false)],
            removed_edges: vec![EdgeSpec::new("A", "tap z", "Z", "")],
            ..Default::default()
        };
        let (next, report) = apply_diff(&g, &diff);
        assert_eq!(next, g);
        assert_eq!(report.unmatched_vertex_removals, vec!["Z".to_string()]);
        assert_eq!(report.unmatched_edge_removals.len(), 1);
        assert!(!report.is_clean());
    }

    #[test]
    fn duplicate_add_replaces_description() {
        let g = two_vertex_graph();
        let diff = GraphDiff {
            added_vertices: vec![VertexSpec::new("\"a\"", "rewritten", true)],
            ..Default::default()
        };
        let (next, report) = apply_diff(&g, &diff);
        assert_eq!(next.vertices().len(), 2);
        assert_eq!(next.vertex("A").unwrap().description, "rewritten");
        assert_eq!(report.replaced_vertices, vec!["\"a\"".to_string()]);
    }

    #[test]
    fn removal_matching_ignores_comment() {
        let g = two_vertex_graph();
        let diff = GraphDiff {
            removed_edges: vec![EdgeSpec::new("A", "tap B", "B", "a different comment")],
            ..Default::default()
        };
        let (next, report) = apply_diff(&g, &diff);
        assert!(next.edges().is_empty());
        assert!(report.is_empty());
    }

    #[test]
    fn inverse_restores_clean_diff() {
        let g = two_vertex_graph();
        let diff = GraphDiff {
            removed_edges: vec![EdgeSpec::new("A", "tap b", "B", "go")],
            added_vertices: vec![VertexSpec::new("C", "third", false)],
            added_edges: vec![EdgeSpec::new("A", "tap c", "C", "")],
            ..Default::default()
        };
        let (next, report) = apply_diff(&g, &diff);
        assert!(report.is_clean());
        let (back, report) = apply_diff(&next, &diff.inverse());
        assert!(report.is_clean());
        assert_eq!(back, g);
    }
}
