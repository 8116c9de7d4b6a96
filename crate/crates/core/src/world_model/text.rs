//! Line grammar shared by graph blocks and refinement diffs:
//!
//! ```text
//! Name: "<label>" Description: <text> can-self-act: <True|False>
//! Edge: E("<source>", "<action>") -> "<target>" #<comment>
//! ```
//!
//! Imagined elements carry an extra marker: a trailing `imagined: True` on
//! vertex lines and an `imagined=True` argument inside `E(...)` on edges.

use thiserror::Error;

use super::{
    diff::GraphDiff, normalize_name, strip_quotes, ActionType, EdgeSpec, ParseWarning, VertexSpec,
    WorldModelGraph,
};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GraphParseError {
    #[error("no \"Vertices:\" or \"Edges:\" block found")]
    MissingBlocks,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Section {
    Preamble,
    Vertices,
    Edges,
}

/// Header keyword at the start of `line`, ignoring case, markdown emphasis
/// and the trailing colon. Returns the text following the header.
fn header<'a>(line: &'a str, name: &str) -> Option<&'a str> {
    let t = line.trim().trim_start_matches('*').trim_start();
    if t.len() < name.len() || !t.is_char_boundary(name.len()) {
        return None;
    }
    let (head, rest) = t.split_at(name.len());
    if !head.eq_ignore_ascii_case(name) {
        return None;
    }
    let rest = rest.trim_start_matches('*').trim_start();
    if rest.is_empty() {
        return Some("");
    }
    rest.strip_prefix(':')
        .map(|r| r.trim_start_matches('*').trim())
}

/// Case-insensitive `prefix:` match returning the remainder.
fn keyword<'a>(line: &'a str, names: &[&str]) -> Option<&'a str> {
    let t = line.trim();
    for name in names {
        if t.len() > name.len()
            && t.is_char_boundary(name.len())
            && t[..name.len()].eq_ignore_ascii_case(name)
        {
            let rest = &t[name.len()..];
            if let Some(r) = rest.trim_start().strip_prefix(':') {
                return Some(r.trim());
            }
        }
    }
    None
}

fn find_ci(haystack: &str, needle: &str) -> Option<usize> {
    haystack
        .to_ascii_lowercase()
        .find(&needle.to_ascii_lowercase())
}

fn rfind_ci(haystack: &str, needle: &str) -> Option<usize> {
    haystack
        .to_ascii_lowercase()
        .rfind(&needle.to_ascii_lowercase())
}

fn parse_bool_token(s: &str) -> Option<bool> {
    match s
        .trim_matches(|c: char| c == '"' || c == '\'' || c == '.' || c == ',')
        .to_ascii_lowercase()
        .as_str()
    {
        "true" => Some(true),
        "false" => Some(false),
        _ => None,
    }
}

const DESCRIPTION_KEYS: [&str; 2] = ["description:", "desciption:"];
const SELF_ACT_KEY: &str = "can-self-act:";

pub(crate) struct VertexLine {
    pub vertex: VertexSpec,
    /// `can-self-act` was absent and defaulted.
    pub self_act_missing: bool,
    pub warnings: Vec<String>,
}

/// Parses the body of a `Name:` record (everything after `Name:`).
pub(crate) fn parse_vertex_body(body: &str) -> Result<VertexLine, String> {
    let mut warnings = Vec::new();
    let (name_part, rest) = match DESCRIPTION_KEYS
        .iter()
        .filter_map(|k| find_ci(body, k).map(|i| (i, k.len())))
        .min()
    {
        Some((i, len)) => (&body[..i], Some(&body[i + len..])),
        None => (body, None),
    };
    let (description, self_act_part) = match rest {
        Some(rest) => match rfind_ci(rest, SELF_ACT_KEY) {
            Some(i) => (rest[..i].trim(), Some(&rest[i + SELF_ACT_KEY.len()..])),
            None => (rest.trim(), None),
        },
        None => {
            warnings.push("vertex has no description".to_string());
            match rfind_ci(name_part, SELF_ACT_KEY) {
                Some(i) => ("", Some(&body[i + SELF_ACT_KEY.len()..])),
                None => ("", None),
            }
        }
    };
    let name_part = match (rest, rfind_ci(name_part, SELF_ACT_KEY)) {
        (None, Some(i)) => &name_part[..i],
        _ => name_part,
    };
    let name = strip_quotes(name_part.trim())
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ");
    if name.is_empty() {
        return Err("vertex name is empty".to_string());
    }
    let mut can_self_act = false;
    let mut imagined = false;
    let mut self_act_missing = false;
    match self_act_part {
        Some(part) => {
            let mut tokens = part.split_whitespace();
            match tokens.next().and_then(parse_bool_token) {
                Some(b) => can_self_act = b,
                None => {
                    warnings.push("can-self-act is not True/False; defaulted to False".to_string())
                }
            }
            let tail: String = tokens.collect::<Vec<_>>().join(" ");
            if !tail.is_empty() {
                match keyword(&tail, &["imagined"]).and_then(parse_bool_token) {
                    Some(b) => imagined = b,
                    None => {
                        warnings.push(format!("ignored trailing text after can-self-act: {tail}"))
                    }
                }
            }
        }
        None => self_act_missing = true,
    }
    Ok(VertexLine {
        vertex: VertexSpec {
            name,
            description: description.to_string(),
            can_self_act,
            imagined,
        },
        self_act_missing,
        warnings,
    })
}

struct Cursor<'a> {
    s: &'a str,
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn new(s: &'a str) -> Self {
        Cursor { s, pos: 0 }
    }

    fn rest(&self) -> &'a str {
        &self.s[self.pos..]
    }

    fn skip_ws(&mut self) {
        let rest = self.rest();
        self.pos += rest.len() - rest.trim_start().len();
    }

    fn eat(&mut self, token: &str) -> bool {
        self.skip_ws();
        if self.rest().starts_with(token) {
            self.pos += token.len();
            true
        } else {
            false
        }
    }

    fn quoted(&mut self) -> Result<&'a str, String> {
        self.skip_ws();
        let rest = self.rest();
        let (open_len, closers): (usize, &[&str]) = if rest.starts_with("``") {
            (2, &["''", "``", "\u{201d}"])
        } else if rest.starts_with('"') {
            (1, &["\""])
        } else if rest.starts_with('\u{201c}') {
            ('\u{201c}'.len_utf8(), &["\u{201d}", "\""])
        } else if rest.starts_with('\'') {
            (1, &["'"])
        } else {
            return Err(format!("expected a quoted string at `{}`", preview(rest)));
        };
        let body = &rest[open_len..];
        let (end, close_len) = closers
            .iter()
            .filter_map(|c| body.find(c).map(|i| (i, c.len())))
            .min()
            .ok_or_else(|| "unterminated quoted string".to_string())?;
        self.pos += open_len + end + close_len;
        Ok(&body[..end])
    }
}

fn preview(s: &str) -> String {
    s.chars().take(24).collect()
}

/// Parses the body of an `Edge:` record (starting at `E(`).
pub(crate) fn parse_edge_body(body: &str) -> Result<EdgeSpec, String> {
    let mut c = Cursor::new(body);
    if !c.eat("E(") {
        return Err("edge must start with E(".to_string());
    }
    let source = c.quoted()?.trim().to_string();
    if !c.eat(",") {
        return Err("expected `,` between source and action".to_string());
    }
    let action = c.quoted()?.trim().to_string();
    let mut imagined = false;
    if c.eat(",") {
        c.skip_ws();
        let rest = c.rest();
        let close = rest
            .find(')')
            .ok_or_else(|| "expected `)` after edge arguments".to_string())?;
        let arg = &rest[..close];
        let value = arg
            .split_once('=')
            .filter(|(k, _)| k.trim().eq_ignore_ascii_case("imagined"))
            .and_then(|(_, v)| parse_bool_token(v))
            .ok_or_else(|| format!("unsupported edge argument `{}`", arg.trim()))?;
        imagined = value;
        c.pos += close;
    }
    if !c.eat(")") {
        return Err("expected `)` after edge arguments".to_string());
    }
    if !c.eat("->") {
        return Err("expected `->` before target".to_string());
    }
    c.skip_ws();
    let (target, comment) = if c.rest().starts_with(['"', '\'', '\u{201c}', '`']) {
        let t = c.quoted()?.trim().to_string();
        c.skip_ws();
        let rest = c.rest();
        let comment = match rest.strip_prefix('#') {
            Some(cm) => cm.trim().to_string(),
            None if rest.is_empty() => String::new(),
            None => return Err(format!("unexpected text after target: `{}`", preview(rest))),
        };
        (t, comment)
    } else {
        let rest = c.rest();
        match rest.split_once('#') {
            Some((t, cm)) => (t.trim().to_string(), cm.trim().to_string()),
            None => (rest.trim().to_string(), String::new()),
        }
    };
    if source.is_empty() || action.is_empty() || target.is_empty() {
        return Err("edge has an empty source, action or target".to_string());
    }
    if ActionType::of_phrase(&action).is_none() {
        return Err(format!(
            "action `{action}` does not start with tap, swipe, long_press, type or BACK"
        ));
    }
    Ok(EdgeSpec {
        source,
        action,
        target,
        comment,
        imagined,
    })
}

/// A logical record assembled from one or more physical lines.
enum Record {
    Vertex {
        line: usize,
        body: String,
    },
    Edge {
        line: usize,
        body: String,
    },
    /// A standalone `#` line.
    Comment {
        text: String,
    },
    Other {
        line: usize,
        text: String,
    },
}

/// Groups lines into records. `Description:` and `can-self-act:` lines
/// continue the preceding `Name:` record.
fn records<'a>(lines: impl Iterator<Item = (usize, &'a str)>) -> Vec<Record> {
    let mut out: Vec<Record> = Vec::new();
    let mut open_vertex = false;
    for (line, raw) in lines {
        let t = raw.trim();
        if t.is_empty() || t == "..." || t == "\\\\" {
            open_vertex = false;
            continue;
        }
        if let Some(body) = keyword(t, &["name"]) {
            out.push(Record::Vertex {
                line,
                body: body.to_string(),
            });
            open_vertex = true;
            continue;
        }
        let continues = DESCRIPTION_KEYS
            .iter()
            .chain(std::iter::once(&SELF_ACT_KEY))
            .any(|k| {
                t.len() >= k.len()
                    && t.is_char_boundary(k.len())
                    && t[..k.len()].eq_ignore_ascii_case(k)
            });
        if continues && open_vertex {
            if let Some(Record::Vertex { body, .. }) = out.last_mut() {
                body.push(' ');
                body.push_str(t);
                continue;
            }
        }
        open_vertex = false;
        if let Some(body) = keyword(t, &["edge"]) {
            out.push(Record::Edge {
                line,
                body: body.to_string(),
            });
        } else if t.starts_with("E(") {
            out.push(Record::Edge {
                line,
                body: t.to_string(),
            });
        } else if let Some(text) = t.strip_prefix('#') {
            out.push(Record::Comment {
                text: text.trim().to_string(),
            });
        } else {
            out.push(Record::Other {
                line,
                text: t.to_string(),
            });
        }
    }
    out
}

/// Parses a `Vertices:` / `Edges:` graph block. Malformed records become
/// warnings on the returned graph.
pub fn parse_graph(text: &str) -> Result<WorldModelGraph, GraphParseError> {
    let mut graph = WorldModelGraph::new();
    let mut seen_header = false;
    let mut missing_self_act: Vec<(usize, String)> = Vec::new();
    let mut last_edge_open = false;

    // Split into sections first so continuation records stay inside one.
    let mut chunks: Vec<(Section, Vec<(usize, &str)>)> = vec![(Section::Preamble, Vec::new())];
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if let Some(rest) = header(raw, "vertices") {
            seen_header = true;
            chunks.push((Section::Vertices, Vec::new()));
            if !rest.is_empty() {
                chunks.last_mut().unwrap().1.push((line, rest));
            }
        } else if let Some(rest) = header(raw, "edges") {
            seen_header = true;
            chunks.push((Section::Edges, Vec::new()));
            if !rest.is_empty() {
                chunks.last_mut().unwrap().1.push((line, rest));
            }
        } else {
            chunks.last_mut().unwrap().1.push((line, raw));
        }
    }
    if !seen_header {
        return Err(GraphParseError::MissingBlocks);
    }

    for (section, lines) in chunks {
        for record in records(lines.into_iter()) {
            match record {
                Record::Vertex { line, body } => {
                    last_edge_open = false;
                    match parse_vertex_body(&body) {
                        Ok(v) => {
                            for w in v.warnings {
                                graph.push_warning(line, w);
                            }
                            if v.self_act_missing {
                                missing_self_act.push((line, v.vertex.key()));
                            }
                            let name = v.vertex.name.clone();
                            if graph.upsert_vertex(v.vertex) {
                                graph.push_warning(
                                    line,
                                    format!("duplicate vertex \"{name}\" replaced the earlier one"),
                                );
                            }
                        }
                        Err(e) => graph.push_warning(line, e),
                    }
                }
                Record::Edge { line, body } => match parse_edge_body(&body) {
                    Ok(edge) => {
                        last_edge_open = edge.comment.is_empty();
                        graph.push_edge(edge);
                    }
                    Err(e) => {
                        last_edge_open = false;
                        graph.push_warning(line, format!("malformed edge: {e}"));
                    }
                },
                Record::Comment { text, .. } => {
                    if last_edge_open && section == Section::Edges {
                        if let Some(edge) = graph.edges.last_mut() {
                            edge.comment = text;
                        }
                    }
                    last_edge_open = false;
                }
                Record::Other { line, text } => {
                    last_edge_open = false;
                    graph.push_warning(line, format!("unrecognized line: {}", preview(&text)));
                }
            }
        }
    }

    for (line, key) in missing_self_act {
        let self_edge = graph
            .edges
            .iter()
            .any(|e| normalize_name(&e.source) == key && normalize_name(&e.target) == key);
        if let Some(v) = graph.vertices.iter_mut().find(|v| v.key() == key) {
            v.can_self_act = self_edge;
        }
        if !self_edge {
            graph.push_warning(line, "missing can-self-act; defaulted to False");
        }
    }
    Ok(graph)
}

fn quote(s: &str) -> String {
    if s.contains('"') {
        format!("'{s}'")
    } else {
        format!("\"{s}\"")
    }
}

fn bool_word(b: bool) -> &'static str {
    if b {
        "True"
    } else {
        "False"
    }
}

/// One `Name: ... Description: ... can-self-act: ...` line.
pub fn vertex_line(v: &VertexSpec) -> String {
    let mut line = format!(
        "Name: {} Description: {} can-self-act: {}",
        quote(&v.name),
        v.description,
        bool_word(v.can_self_act)
    );
    if v.imagined {
        line.push_str(" imagined: True");
    }
    line
}

/// One `Edge: E("source", "action") -> "target" #comment` line.
pub fn edge_line(e: &EdgeSpec) -> String {
    let imagined = if e.imagined { ", imagined=True" } else { "" };
    let mut line = format!(
        "Edge: E({}, {}{}) -> {}",
        quote(&e.source),
        quote(&e.action),
        imagined,
        quote(&e.target)
    );
    if !e.comment.is_empty() {
        line.push_str(" #");
        line.push_str(&e.comment);
    }
    line
}

/// Canonical text form. Vertex and edge order are preserved.
pub fn serialize_graph(graph: &WorldModelGraph) -> String {
    let mut out = String::from("Vertices:\n");
    for v in graph.vertices() {
        out.push_str(&vertex_line(v));
        out.push('\n');
    }
    out.push_str("\nEdges:\n");
    for e in graph.edges() {
        out.push_str(&edge_line(e));
        out.push('\n');
    }
    out
}

/// A diff plus the warnings raised while reading it.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParsedDiff {
    pub diff: GraphDiff,
    pub warnings: Vec<ParseWarning>,
}

const DIFF_HEADERS: [&str; 4] = [
    "removed vertices",
    "added vertices",
    "removed edges",
    "added edges",
];

/// Parses the four diff sections of a refinement response. A missing header
/// yields an empty list and a warning.
pub fn parse_diff(text: &str) -> ParsedDiff {
    let mut out = ParsedDiff::default();
    let mut seen = [false; 4];
    let mut buckets: [Vec<(usize, &str)>; 4] = Default::default();
    let mut current: Option<usize> = None;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if let Some((idx, rest)) = DIFF_HEADERS
            .iter()
            .enumerate()
            .find_map(|(k, h)| header(raw, h).map(|r| (k, r)))
        {
            seen[idx] = true;
            current = Some(idx);
            if !rest.is_empty() {
                buckets[idx].push((line, rest));
            }
            continue;
        }
        match current {
            Some(idx) => buckets[idx].push((line, raw)),
            None if raw.trim().is_empty() => {}
            None => out.warnings.push(ParseWarning {
                line,
                message: format!("text outside diff sections: {}", preview(raw.trim())),
            }),
        }
    }
    for (idx, name) in DIFF_HEADERS.iter().enumerate() {
        if !seen[idx] {
            out.warnings.push(ParseWarning {
                line: 0,
                message: format!("missing \"{name}:\" section; treated as empty"),
            });
        }
    }
    for (idx, lines) in buckets.into_iter().enumerate() {
        let wants_vertices = idx < 2;
        for record in records(lines.into_iter()) {
            match record {
                Record::Vertex { line, body } if wants_vertices => match parse_vertex_body(&body) {
                    Ok(v) => {
                        for w in v.warnings {
                            out.warnings.push(ParseWarning { line, message: w });
                        }
                        if v.self_act_missing {
                            out.warnings.push(ParseWarning {
                                line,
                                message: "missing can-self-act; defaulted to False".to_string(),
                            });
                        }
                        if idx == 0 {
                            out.diff.removed_vertices.push(v.vertex);
                        } else {
                            out.diff.added_vertices.push(v.vertex);
                        }
                    }
                    Err(e) => out.warnings.push(ParseWarning { line, message: e }),
                },
                Record::Edge { line, body } if !wants_vertices => match parse_edge_body(&body) {
                    Ok(edge) => {
                        if idx == 2 {
                            out.diff.removed_edges.push(edge);
                        } else {
                            out.diff.added_edges.push(edge);
                        }
                    }
                    Err(e) => out.warnings.push(ParseWarning {
                        line,
                        message: format!("malformed edge: {e}"),
                    }),
                },
                Record::Comment { .. } => {}
                Record::Vertex { line, .. } | Record::Edge { line, .. } => {
                    out.warnings.push(ParseWarning {
                        line,
                        message: format!("record in the wrong section \"{}\"", DIFF_HEADERS[idx]),
                    })
                }
                Record::Other { line, text } => out.warnings.push(ParseWarning {
                    line,
                    message: format!("unrecognized line: {}", preview(&text)),
                }),
            }
        }
    }
    out
}
