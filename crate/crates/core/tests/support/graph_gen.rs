//! Random world-model graphs and diffs, shared by the graph property tests
//! and the acceptance target.
#![allow(dead_code)]

use std::collections::BTreeSet;

use foresight::world_model::{normalize_name, EdgeSpec, GraphDiff, VertexSpec, WorldModelGraph};
use proptest::prelude::*;
// ---------------------------------------------------------------------------
// Generated graphs

pub fn words(max: usize) -> impl Strategy<Value = String> {
    prop::collection::vec("[A-Za-z][a-z0-9()-]{0,7}", 1..=max).prop_map(|w| w.join(" "))
}

pub fn action() -> impl Strategy<Value = String> {
    (
        prop::sample::select(vec!["tap", "swipe", "long_press", "type", "BACK"]),
        prop::option::of(words(3)),
    )
        .prop_map(|(verb, rest)| match rest {
            Some(r) if verb != "BACK" => format!("{verb} {r}"),
            _ => verb.to_string(),
        })
}

pub fn graph_strategy() -> impl Strategy<Value = WorldModelGraph> {
    prop::collection::vec(
        (
            words(4),
            prop::option::of(words(6)),
            any::<bool>(),
            prop::bool::weighted(0.1),
        ),
        1..=20,
    )
    .prop_flat_map(|raw| {
        let mut seen = BTreeSet::new();
        let vertices: Vec<VertexSpec> = raw
            .into_iter()
            .filter(|(n, ..)| seen.insert(normalize_name(n)))
            .map(|(n, d, s, imagined)| VertexSpec {
                imagined,
                ..VertexSpec::new(n, d.unwrap_or_else(|| "Screen.".into()), s)
            })
            .collect();
        let n = vertices.len();
        let edges = prop::collection::vec(
            (
                0..n,
                action(),
                0..n + 2,
                prop::option::of(words(5)),
                prop::bool::weighted(0.1),
            ),
            0..=60,
        );
        (Just(vertices), edges)
    })
    .prop_map(|(vertices, edges)| {
        let mut g = WorldModelGraph::new();
        for v in &vertices {
            g.upsert_vertex(v.clone());
        }
        for (s, a, t, c, imagined) in edges {
            // Targets past the vertex list are dangling on purpose.
            let target = vertices
                .get(t)
                .map_or_else(|| format!("Unknown page {t}"), |v| v.name.clone());
            g.push_edge(EdgeSpec {
                imagined,
                ..EdgeSpec::new(vertices[s].name.clone(), a, target, c.unwrap_or_default())
            });
        }
        g
    })
}

pub fn diff_strategy() -> impl Strategy<Value = (WorldModelGraph, GraphDiff)> {
    graph_strategy().prop_flat_map(|g| {
        let nv = g.vertices().len();
        let ne = g.edges().len();
        (
            Just(g),
            prop::collection::btree_set(0..nv, 0..=nv.min(3)),
            prop::collection::btree_set(0..ne.max(1), 0..=ne.min(5)),
            prop::collection::vec((words(3), words(4), any::<bool>()), 0..3),
            prop::collection::vec((action(), words(3)), 0..4),
        )
            .prop_map(|(g, rv, re, av, ae)| {
                let removed_vertices: Vec<VertexSpec> =
                    rv.iter().map(|&i| g.vertices()[i].clone()).collect();
                let removed_edges: Vec<EdgeSpec> = re
                    .iter()
                    .filter(|&&i| i < g.edges().len())
                    .map(|&i| g.edges()[i].clone())
                    .collect();
                let added_vertices: Vec<VertexSpec> = av
                    .into_iter()
                    .enumerate()
                    .map(|(i, (n, d, s))| VertexSpec::new(format!("Added {i} {n}"), d, s))
                    .collect();
                let anchor = g.vertices()[0].name.clone();
                let added_edges: Vec<EdgeSpec> = ae
                    .into_iter()
                    .enumerate()
                    .map(|(i, (a, c))| {
                        EdgeSpec::new(
                            anchor.clone(),
                            format!("{a} new{i}"),
                            format!("Added target {i}"),
                            c,
                        )
                    })
                    .collect();
                (
                    g,
                    GraphDiff {
                        removed_vertices,
                        added_vertices,
                        removed_edges,
                        added_edges,
                    },
                )
            })
    })
}

pub fn unique_names(g: &WorldModelGraph) -> bool {
    let keys: BTreeSet<String> = g.vertices().iter().map(|v| v.key()).collect();
    keys.len() == g.vertices().len()
}
