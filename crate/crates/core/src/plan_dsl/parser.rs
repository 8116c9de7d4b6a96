use std::fmt;
use std::sync::Arc;

use super::ast::{AssignOp, BinOp, CmpOp, Expr, PlanProgram, Stmt, StmtKind};
use super::lexer::{tokenize, Tok, Token};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyntaxError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

impl fmt::Display for SyntaxError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "line {}, column {}: {}",
            self.line, self.column, self.message
        )
    }
}

/// Every offense found in one plan, in source order.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub struct SyntaxErrorList(pub Vec<SyntaxError>);

impl fmt::Display for SyntaxErrorList {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str("\n")?;
            }
            write!(f, "{e}")?;
        }
        Ok(())
    }
}

impl SyntaxErrorList {
    pub fn errors(&self) -> &[SyntaxError] {
        &self.0
    }
}

/// Words that start constructs outside the plan language.
const UNSUPPORTED: &[&str] = &[
    "for", "def", "import", "from", "class", "try", "except", "finally", "with", "lambda", "yield",
    "async", "await", "global", "nonlocal", "del", "assert", "raise", "in", "is", "None",
];

/// One logical source line.
#[derive(Debug, Clone)]
struct Line {
    number: usize,
    indent: usize,
    kind: LineKind,
}

#[derive(Debug, Clone)]
enum LineKind {
    Comment(String),
    Code(Vec<Token>),
}

type PResult<T> = Result<T, SyntaxError>;

/// Parses plan text into a program. Any unsupported construct fails the
/// whole parse; all offenses found are returned together.
pub fn parse_plan(text: &str) -> Result<PlanProgram, SyntaxErrorList> {
    let mut errors = Vec::new();
    let lines = logical_lines(text, &mut errors);

    let def_pos = lines
        .iter()
        .position(|l| matches!(l.kind, LineKind::Code(_)));
    let Some(def_pos) = def_pos else {
        return Err(SyntaxErrorList(vec![SyntaxError {
            line: 1,
            column: 1,
            message: "expected a `def <name>():` line".into(),
        }]));
    };
    let def_line = &lines[def_pos];
    let name = match parse_def(def_line) {
        Ok(name) => name,
        Err(e) => {
            errors.push(e);
            String::new()
        }
    };

    let mut parser = Parser {
        lines: &lines[def_pos + 1..],
        pos: 0,
        errors: &mut errors,
    };
    let body = parser.block(def_line.indent, def_line.number, 0);
    if let Some(extra) = parser.lines.get(parser.pos) {
        parser.errors.push(SyntaxError {
            line: extra.number,
            column: extra.indent + 1,
            message: "unexpected content after the plan body".into(),
        });
    }

    if errors.is_empty() {
        Ok(PlanProgram {
            name,
            body,
            source_text: text.to_string(),
        })
    } else {
        errors.sort_by_key(|e| (e.line, e.column));
        errors.dedup();
        Err(SyntaxErrorList(errors))
    }
}

/// Splits text into logical lines: tabs expanded, blank lines dropped,
/// bracketed continuations joined, standalone comments given the indent of
/// the next code line.
fn logical_lines(text: &str, errors: &mut Vec<SyntaxError>) -> Vec<Line> {
    let mut out: Vec<Line> = Vec::new();
    let mut pending: Option<(usize, usize, Vec<Token>, i32)> = None;
    for (idx, raw) in text.lines().enumerate() {
        let number = idx + 1;
        let expanded = raw.replace('\t', "    ");
        let trimmed = expanded.trim_start();
        let indent = expanded.len() - trimmed.len();
        if let Some((start, ind, mut toks, mut depth)) = pending.take() {
            match tokenize(trimmed, indent) {
                Ok(more) => {
                    depth += paren_delta(&more);
                    toks.extend(more);
                }
                Err(e) => errors.push(SyntaxError {
                    line: number,
                    column: e.col,
                    message: e.message,
                }),
            }
            if depth > 0 {
                pending = Some((start, ind, toks, depth));
            } else {
                out.push(Line {
                    number: start,
                    indent: ind,
                    kind: LineKind::Code(toks),
                });
            }
            continue;
        }
        if trimmed.trim().is_empty() {
            continue;
        }
        if let Some(comment) = trimmed.strip_prefix('#') {
            out.push(Line {
                number,
                indent: usize::MAX,
                kind: LineKind::Comment(comment.trim().to_string()),
            });
            continue;
        }
        match tokenize(trimmed, indent) {
            Ok(toks) => {
                let depth = paren_delta(&toks);
                if depth > 0 {
                    pending = Some((number, indent, toks, depth));
                } else {
                    out.push(Line {
                        number,
                        indent,
                        kind: LineKind::Code(toks),
                    });
                }
            }
            Err(e) => errors.push(SyntaxError {
                line: number,
                column: e.col,
                message: e.message,
            }),
        }
    }
    if let Some((start, ind, toks, _)) = pending {
        errors.push(SyntaxError {
            line: start,
            column: toks.first().map_or(ind + 1, |t| t.col),
            message: "unclosed `(`".into(),
        });
    }

    // Comments take the indent of the following code line, or of the
    // preceding one at the end of the text.
    let mut next_indent: Option<usize> = None;
    for line in out.iter_mut().rev() {
        match line.kind {
            LineKind::Code(_) => next_indent = Some(line.indent),
            LineKind::Comment(_) => {
                if let Some(ind) = next_indent {
                    line.indent = ind;
                }
            }
        }
    }
    let mut prev_indent = 0;
    for line in out.iter_mut() {
        if line.indent == usize::MAX {
            line.indent = prev_indent;
        }
        prev_indent = line.indent;
    }
    out
}

fn paren_delta(toks: &[Token]) -> i32 {
    toks.iter()
        .map(|t| match t.tok {
            Tok::LParen => 1,
            Tok::RParen => -1,
            _ => 0,
        })
        .sum()
}

fn parse_def(line: &Line) -> PResult<String> {
    let LineKind::Code(toks) = &line.kind else {
        unreachable!("def line is code")
    };
    let err = |col: usize| SyntaxError {
        line: line.number,
        column: col,
        message: "expected a `def <name>():` line".into(),
    };
    match toks.as_slice() {
        [Token {
            tok: Tok::Ident(d), ..
        }, Token {
            tok: Tok::Ident(name),
            ..
        }, Token {
            tok: Tok::LParen, ..
        }, Token {
            tok: Tok::RParen, ..
        }, Token {
            tok: Tok::Colon, ..
        }] if d == "def" => Ok(name.clone()),
        [first, ..] => Err(err(first.col)),
        [] => Err(err(line.indent + 1)),
    }
}

struct Parser<'a> {
    lines: &'a [Line],
    pos: usize,
    errors: &'a mut Vec<SyntaxError>,
}

impl<'a> Parser<'a> {
    /// Parses the block owned by a header at `parent_indent`. Consumes every
    /// line indented deeper than the parent.
    fn block(
        &mut self,
        parent_indent: usize,
        header_line: usize,
        loop_depth: usize,
    ) -> Arc<Vec<Stmt>> {
        let mut stmts = Vec::new();
        let mut saw_code = false;
        let Some(block_indent) = self
            .lines
            .get(self.pos)
            .map(|l| l.indent)
            .filter(|&i| i > parent_indent)
        else {
            self.errors.push(SyntaxError {
                line: header_line,
                column: parent_indent + 1,
                message: "expected an indented block".into(),
            });
            return Arc::new(stmts);
        };
        while let Some(line) = self.lines.get(self.pos) {
            if line.indent <= parent_indent {
                break;
            }
            if line.indent != block_indent {
                if line.indent > block_indent {
                    self.errors.push(SyntaxError {
                        line: line.number,
                        column: line.indent + 1,
                        message: "unexpected indent".into(),
                    });
                } else {
                    self.errors.push(SyntaxError {
                        line: line.number,
                        column: line.indent + 1,
                        message: "unindent does not match any outer indentation level".into(),
                    });
                }
                self.skip_nested(line.indent);
                continue;
            }
            saw_code |= matches!(line.kind, LineKind::Code(_));
            self.statement(block_indent, loop_depth, &mut stmts);
        }
        if !saw_code {
            self.errors.push(SyntaxError {
                line: header_line,
                column: parent_indent + 1,
                message: "expected an indented block".into(),
            });
        }
        Arc::new(stmts)
    }

    /// Skips the current line and everything indented deeper than `indent`.
    fn skip_nested(&mut self, indent: usize) {
        self.pos += 1;
        while self.lines.get(self.pos).is_some_and(|l| l.indent > indent) {
            self.pos += 1;
        }
    }

    fn statement(&mut self, indent: usize, loop_depth: usize, out: &mut Vec<Stmt>) {
        let line = &self.lines[self.pos];
        let number = line.number;
        let toks = match &line.kind {
            LineKind::Comment(c) => {
                out.push(Stmt {
                    line: number,
                    kind: StmtKind::Comment(c.clone()),
                });
                self.pos += 1;
                return;
            }
            LineKind::Code(toks) => toks,
        };
        let head = ident_at(toks, 0);
        match head {
            Some("if") => self.if_statement(indent, loop_depth, out),
            Some("while") => {
                let result =
                    header_cond(toks, number, "while").map(|(cond, rest)| (cond, rest.to_vec()));
                self.pos += 1;
                match result {
                    Ok((cond, rest)) => {
                        let body = self.body(indent, number, loop_depth + 1, &rest);
                        out.push(Stmt {
                            line: number,
                            kind: StmtKind::While { cond, body },
                        });
                    }
                    Err(e) => {
                        self.errors.push(e);
                        self.pos -= 1;
                        self.skip_nested(indent);
                    }
                }
            }
            Some(kw @ ("elif" | "else")) => {
                self.errors.push(SyntaxError {
                    line: number,
                    column: toks[0].col,
                    message: format!("`{kw}` without a matching `if`"),
                });
                self.skip_nested(indent);
            }
            _ => match simple_statement(toks, number, loop_depth) {
                Ok(kind) => {
                    out.push(Stmt { line: number, kind });
                    self.pos += 1;
                }
                Err(e) => {
                    self.errors.push(e);
                    self.skip_nested(indent);
                }
            },
        }
    }

    /// Parses a compound body: either an inline statement after the colon or
    /// an indented block on the following lines.
    fn body(
        &mut self,
        indent: usize,
        header_line: usize,
        loop_depth: usize,
        inline: &[Token],
    ) -> Arc<Vec<Stmt>> {
        if inline.is_empty() {
            return self.block(indent, header_line, loop_depth);
        }
        match simple_statement(inline, header_line, loop_depth) {
            Ok(kind) => Arc::new(vec![Stmt {
                line: header_line,
                kind,
            }]),
            Err(e) => {
                self.errors.push(e);
                Arc::new(Vec::new())
            }
        }
    }

    fn if_statement(&mut self, indent: usize, loop_depth: usize, out: &mut Vec<Stmt>) {
        let first = &self.lines[self.pos];
        let number = first.number;
        let mut branches: Vec<(Expr, Vec<Stmt>)> = Vec::new();
        let mut else_block: Option<Vec<Stmt>> = None;
        let mut keyword = "if";
        let mut ok = true;
        loop {
            let line = &self.lines[self.pos];
            let LineKind::Code(toks) = &line.kind else {
                unreachable!("branch header is code")
            };
            let header_line = line.number;
            self.pos += 1;
            let body = if keyword == "else" {
                match toks.get(1) {
                    Some(Token {
                        tok: Tok::Colon, ..
                    }) => {
                        let inline = toks[2..].to_vec();
                        Some((None, self.body(indent, header_line, loop_depth, &inline)))
                    }
                    other => {
                        self.errors.push(SyntaxError {
                            line: header_line,
                            column: other.map_or(toks[0].col + 4, |t| t.col),
                            message: "expected `:` after `else`".into(),
                        });
                        None
                    }
                }
            } else {
                match header_cond(toks, header_line, keyword) {
                    Ok((cond, rest)) => {
                        let inline = rest.to_vec();
                        Some((
                            Some(cond),
                            self.body(indent, header_line, loop_depth, &inline),
                        ))
                    }
                    Err(e) => {
                        self.errors.push(e);
                        None
                    }
                }
            };
            match body {
                Some((cond, block)) => {
                    let block = Arc::try_unwrap(block).unwrap_or_else(|a| (*a).clone());
                    match cond {
                        Some(c) => branches.push((c, block)),
                        None => else_block = Some(block),
                    }
                }
                None => {
                    ok = false;
                    self.pos -= 1;
                    self.skip_nested(indent);
                }
            }
            if keyword == "else" {
                break;
            }

            // Comments between a branch and a following elif/else belong to
            // the branch above.
            let mut look = self.pos;
            while self
                .lines
                .get(look)
                .is_some_and(|l| l.indent == indent && matches!(l.kind, LineKind::Comment(_)))
            {
                look += 1;
            }
            let next_kw = self.lines.get(look).and_then(|l| match &l.kind {
                LineKind::Code(t) if l.indent == indent => ident_at(t, 0),
                _ => None,
            });
            match next_kw {
                Some(kw @ ("elif" | "else")) => {
                    if let Some(b) = branches.last_mut().map(|(_, b)| b) {
                        for l in &self.lines[self.pos..look] {
                            if let LineKind::Comment(c) = &l.kind {
                                b.push(Stmt {
                                    line: l.number,
                                    kind: StmtKind::Comment(c.clone()),
                                });
                            }
                        }
                    }
                    self.pos = look;
                    keyword = kw;
                }
                _ => break,
            }
        }
        if ok && !branches.is_empty() {
            out.push(Stmt {
                line: number,
                kind: StmtKind::If {
                    branches: branches
                        .into_iter()
                        .map(|(c, b)| (c, Arc::new(b)))
                        .collect(),
                    else_block: else_block.map(Arc::new),
                },
            });
        }
    }
}

fn ident_at(toks: &[Token], i: usize) -> Option<&str> {
    match toks.get(i) {
        Some(Token {
            tok: Tok::Ident(s), ..
        }) => Some(s.as_str()),
        _ => None,
    }
}

/// Parses `<keyword> <expr>:` and returns the condition and any tokens
/// after the colon.
fn header_cond<'t>(toks: &'t [Token], line: usize, keyword: &str) -> PResult<(Expr, &'t [Token])> {
    let colon = toks.iter().rposition(|t| t.tok == Tok::Colon);
    let Some(colon) = colon.filter(|&c| c > 1 && paren_delta(&toks[..c]) == 0) else {
        return Err(SyntaxError {
            line,
            column: toks.last().map_or(1, |t| t.col),
            message: format!("expected `{keyword} <condition>:`"),
        });
    };
    // The colon ending the header is the first one at paren depth zero.
    let mut depth = 0;
    let mut split = colon;
    for (i, t) in toks.iter().enumerate().skip(1) {
        match t.tok {
            Tok::LParen => depth += 1,
            Tok::RParen => depth -= 1,
            Tok::Colon if depth == 0 => {
                split = i;
                break;
            }
            _ => {}
        }
    }
    let mut cur = Cursor::new(&toks[1..split], line);
    let cond = cur.expr()?;
    cur.expect_end()?;
    Ok((cond, &toks[split + 1..]))
}

fn simple_statement(toks: &[Token], line: usize, loop_depth: usize) -> PResult<StmtKind> {
    let col = toks.first().map_or(1, |t| t.col);
    let err = |column: usize, message: String| SyntaxError {
        line,
        column,
        message,
    };
    if toks.first().map(|t| &t.tok) == Some(&Tok::Ellipsis) {
        if toks.len() > 1 {
            return Err(err(toks[1].col, "unexpected tokens after `...`".into()));
        }
        return Ok(StmtKind::Pass);
    }
    let head = ident_at(toks, 0);
    let single = |kind: StmtKind| {
        if toks.len() > 1 {
            Err(err(
                toks[1].col,
                format!("unexpected tokens after `{}`", head.unwrap_or("")),
            ))
        } else {
            Ok(kind)
        }
    };
    match head {
        Some("pass") => return single(StmtKind::Pass),
        Some("break") | Some("continue") => {
            if loop_depth == 0 {
                return Err(err(
                    col,
                    format!("`{}` outside a `while` loop", head.unwrap()),
                ));
            }
            let kind = if head == Some("break") {
                StmtKind::Break
            } else {
                StmtKind::Continue
            };
            return single(kind);
        }
        Some("return") => {
            if toks.len() == 1 {
                return Ok(StmtKind::Return(None));
            }
            let mut cur = Cursor::new(&toks[1..], line);
            let e = cur.expr()?;
            cur.expect_end()?;
            return Ok(StmtKind::Return(Some(e)));
        }
        Some(w) if UNSUPPORTED.contains(&w) => {
            return Err(err(col, format!("`{w}` is not supported in plans")));
        }
        _ => {}
    }

    // Assignment.
    if let (Some(name), Some(op_tok)) = (head, toks.get(1)) {
        let op = match op_tok.tok {
            Tok::Assign => Some(AssignOp::Set),
            Tok::PlusAssign => Some(AssignOp::Add),
            Tok::MinusAssign => Some(AssignOp::Sub),
            _ => None,
        };
        if let Some(op) = op {
            if is_reserved(name) || classify_call(name).is_some() {
                return Err(err(col, format!("cannot assign to `{name}`")));
            }
            let mut cur = Cursor::new(&toks[2..], line);
            if cur.at_end() {
                return Err(err(
                    op_tok.col,
                    "expected an expression after the assignment".into(),
                ));
            }
            let value = cur.expr()?;
            cur.expect_end()?;
            return Ok(StmtKind::Assign {
                var: name.to_string(),
                op,
                value,
            });
        }
    }

    // Call statement.
    if let (
        Some(name),
        Some(Token {
            tok: Tok::LParen, ..
        }),
    ) = (head, toks.get(1))
    {
        let mut cur = Cursor::new(toks, line);
        let call = cur.call()?;
        cur.expect_end()?;
        return Ok(match call {
            Call::Edge {
                source,
                action,
                imagined,
            } => StmtKind::EdgeCall {
                source,
                action,
                imagined,
            },
            Call::IsTrue {
                statement,
                compare_screen,
            } => StmtKind::IsTrueCall {
                statement,
                compare_screen,
            },
            Call::Wait => StmtKind::Wait,
            Call::OtherApp { app_name, sub_task } => StmtKind::OtherAppCall { app_name, sub_task },
        })
        .map_err(|e: SyntaxError| SyntaxError {
            message: format!("{} in call to `{name}`", e.message),
            ..e
        });
    }
    Err(err(
        col,
        "expected a call, assignment or control-flow statement".into(),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum CallKind {
    Edge,
    IsTrue,
    Wait,
    OtherApp,
}

fn classify_call(name: &str) -> Option<CallKind> {
    let lower = name.to_ascii_lowercase();
    match lower.as_str() {
        _ if name == "E" => Some(CallKind::Edge),
        "istrue" | "is_true" => Some(CallKind::IsTrue),
        "wait" => Some(CallKind::Wait),
        "other_app_function" | "other_app_agent" => Some(CallKind::OtherApp),
        _ => None,
    }
}

fn is_reserved(name: &str) -> bool {
    matches!(
        name,
        "if" | "elif"
            | "else"
            | "while"
            | "break"
            | "continue"
            | "return"
            | "pass"
            | "and"
            | "or"
            | "not"
            | "True"
            | "False"
    ) || UNSUPPORTED.contains(&name)
}

enum Call {
    Edge {
        source: Expr,
        action: Expr,
        imagined: bool,
    },
    IsTrue {
        statement: Expr,
        compare_screen: bool,
    },
    Wait,
    OtherApp {
        app_name: Expr,
        sub_task: Expr,
    },
}

struct Cursor<'t> {
    toks: &'t [Token],
    pos: usize,
    line: usize,
}

impl<'t> Cursor<'t> {
    fn new(toks: &'t [Token], line: usize) -> Self {
        Cursor { toks, pos: 0, line }
    }

    fn peek(&self) -> Option<&'t Tok> {
        self.toks.get(self.pos).map(|t| &t.tok)
    }

    fn at_end(&self) -> bool {
        self.pos >= self.toks.len()
    }

    fn col(&self) -> usize {
        match self.toks.get(self.pos) {
            Some(t) => t.col,
            None => self.toks.last().map_or(1, |t| t.col + 1),
        }
    }

    fn error(&self, message: impl Into<String>) -> SyntaxError {
        SyntaxError {
            line: self.line,
            column: self.col(),
            message: message.into(),
        }
    }

    fn expect_end(&self) -> PResult<()> {
        match self.peek() {
            None => Ok(()),
            Some(t) => Err(self.error(format!("unexpected {}", describe(t)))),
        }
    }

    fn eat(&mut self, tok: &Tok) -> bool {
        if self.peek() == Some(tok) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, tok: &Tok, what: &str) -> PResult<()> {
        if self.eat(tok) {
            Ok(())
        } else {
            Err(self.error(format!("expected {what}")))
        }
    }

    fn eat_keyword(&mut self, kw: &str) -> bool {
        if matches!(self.peek(), Some(Tok::Ident(s)) if s == kw) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> PResult<Expr> {
        let mut lhs = self.and_expr()?;
        while self.eat_keyword("or") {
            let rhs = self.and_expr()?;
            lhs = Expr::Or(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn and_expr(&mut self) -> PResult<Expr> {
        let mut lhs = self.not_expr()?;
        while self.eat_keyword("and") {
            let rhs = self.not_expr()?;
            lhs = Expr::And(Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn not_expr(&mut self) -> PResult<Expr> {
        if self.eat_keyword("not") {
            return Ok(Expr::Not(Box::new(self.not_expr()?)));
        }
        self.comparison()
    }

    fn comparison(&mut self) -> PResult<Expr> {
        let lhs = self.additive()?;
        let op = match self.peek() {
            Some(Tok::Eq) => CmpOp::Eq,
            Some(Tok::Ne) => CmpOp::Ne,
            Some(Tok::Lt) => CmpOp::Lt,
            Some(Tok::Le) => CmpOp::Le,
            Some(Tok::Gt) => CmpOp::Gt,
            Some(Tok::Ge) => CmpOp::Ge,
            _ => return Ok(lhs),
        };
        self.pos += 1;
        let rhs = self.additive()?;
        if matches!(
            self.peek(),
            Some(Tok::Eq | Tok::Ne | Tok::Lt | Tok::Le | Tok::Gt | Tok::Ge)
        ) {
            return Err(self.error("chained comparisons are not supported"));
        }
        Ok(Expr::Compare(op, Box::new(lhs), Box::new(rhs)))
    }

    fn additive(&mut self) -> PResult<Expr> {
        let mut lhs = self.multiplicative()?;
        loop {
            let op = match self.peek() {
                Some(Tok::Plus) => BinOp::Add,
                Some(Tok::Minus) => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.multiplicative()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn multiplicative(&mut self) -> PResult<Expr> {
        let mut lhs = self.unary()?;
        while self.eat(&Tok::Star) {
            let rhs = self.unary()?;
            lhs = Expr::Binary(BinOp::Mul, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> PResult<Expr> {
        if self.eat(&Tok::Minus) {
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.primary()
    }

    fn primary(&mut self) -> PResult<Expr> {
        let Some(tok) = self.peek() else {
            return Err(self.error("expected an expression"));
        };
        match tok {
            Tok::Int(i) => {
                self.pos += 1;
                Ok(Expr::Int(*i))
            }
            Tok::Str(s) => {
                self.pos += 1;
                Ok(Expr::Str(s.clone()))
            }
            Tok::LParen => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect(&Tok::RParen, "`)`")?;
                Ok(e)
            }
            Tok::Ident(name) => match name.as_str() {
                "True" => {
                    self.pos += 1;
                    Ok(Expr::Bool(true))
                }
                "False" => {
                    self.pos += 1;
                    Ok(Expr::Bool(false))
                }
                _ if self.toks.get(self.pos + 1).map(|t| &t.tok) == Some(&Tok::LParen) => {
                    match self.call()? {
                        Call::IsTrue {
                            statement,
                            compare_screen,
                        } => Ok(Expr::IsTrue {
                            statement: Box::new(statement),
                            compare_screen,
                        }),
                        _ => Err(SyntaxError {
                            line: self.line,
                            column: self.toks[self.pos.saturating_sub(1)].col,
                            message: format!(
                                "`{name}` has no value and cannot be used in an expression"
                            ),
                        }),
                    }
                }
                n if is_reserved(n) => Err(self.error(format!("unexpected keyword `{n}`"))),
                _ => {
                    self.pos += 1;
                    Ok(Expr::Var(name.clone()))
                }
            },
            other => Err(self.error(format!("unexpected {}", describe(other)))),
        }
    }

    /// Parses `name(args)` for one of the built-in calls.
    fn call(&mut self) -> PResult<Call> {
        let name_col = self.col();
        let Some(Tok::Ident(name)) = self.peek() else {
            return Err(self.error("expected a call"));
        };
        let Some(kind) = classify_call(name) else {
            return Err(self.error(format!("unknown function `{name}`")));
        };
        self.pos += 1;
        self.expect(&Tok::LParen, "`(`")?;

        let mut positional: Vec<Expr> = Vec::new();
        let mut keywords: Vec<(String, Expr, usize)> = Vec::new();
        if !self.eat(&Tok::RParen) {
            loop {
                let arg_col = self.col();
                let is_kw = matches!(
                    (self.peek(), self.toks.get(self.pos + 1).map(|t| &t.tok)),
                    (Some(Tok::Ident(_)), Some(Tok::Assign))
                );
                if is_kw {
                    let Some(Tok::Ident(k)) = self.peek() else {
                        unreachable!()
                    };
                    let k = k.clone();
                    self.pos += 2;
                    let v = self.expr()?;
                    keywords.push((k, v, arg_col));
                } else {
                    if !keywords.is_empty() {
                        return Err(self.error("positional argument after keyword argument"));
                    }
                    positional.push(self.expr()?);
                }
                if self.eat(&Tok::RParen) {
                    break;
                }
                self.expect(&Tok::Comma, "`,` or `)`")?;
                if self.eat(&Tok::RParen) {
                    break;
                }
            }
        }

        let (params, required): (&[&str], usize) = match kind {
            CallKind::Edge => (&["source", "action", "imagined"], 2),
            CallKind::IsTrue => (&["statement", "compare_screen"], 1),
            CallKind::Wait => (&[], 0),
            CallKind::OtherApp => (&["app_name", "sub_task"], 2),
        };
        if positional.len() > params.len() {
            return Err(SyntaxError {
                line: self.line,
                column: name_col,
                message: format!("`{name}` takes at most {} arguments", params.len()),
            });
        }
        let mut slots: Vec<Option<Expr>> = vec![None; params.len()];
        for (i, e) in positional.into_iter().enumerate() {
            slots[i] = Some(e);
        }
        for (k, v, col) in keywords {
            let canonical = match k.as_str() {
                "source_vertex" | "vertex" => "source",
                "app" => "app_name",
                "task" => "sub_task",
                other => other,
            };
            let Some(idx) = params.iter().position(|p| *p == canonical) else {
                return Err(SyntaxError {
                    line: self.line,
                    column: col,
                    message: format!("unexpected keyword argument `{k}`"),
                });
            };
            if slots[idx].is_some() {
                return Err(SyntaxError {
                    line: self.line,
                    column: col,
                    message: format!("argument `{}` given twice", params[idx]),
                });
            }
            slots[idx] = Some(v);
        }
        if let Some(missing) = slots.iter().take(required).position(Option::is_none) {
            return Err(SyntaxError {
                line: self.line,
                column: name_col,
                message: format!("missing argument `{}`", params[missing]),
            });
        }
        let flag = |slot: Option<Expr>, param: &str| -> PResult<bool> {
            match slot {
                None => Ok(false),
                Some(Expr::Bool(b)) => Ok(b),
                Some(_) => Err(SyntaxError {
                    line: self.line,
                    column: name_col,
                    message: format!("`{param}` must be True or False"),
                }),
            }
        };
        let mut it = slots.into_iter();
        Ok(match kind {
            CallKind::Edge => {
                let source = it.next().flatten().unwrap();
                let action = it.next().flatten().unwrap();
                let imagined = flag(it.next().flatten(), "imagined")?;
                Call::Edge {
                    source,
                    action,
                    imagined,
                }
            }
            CallKind::IsTrue => {
                let statement = it.next().flatten().unwrap();
                let compare_screen = flag(it.next().flatten(), "compare_screen")?;
                Call::IsTrue {
                    statement,
                    compare_screen,
                }
            }
            CallKind::Wait => Call::Wait,
            CallKind::OtherApp => Call::OtherApp {
                app_name: it.next().flatten().unwrap(),
                sub_task: it.next().flatten().unwrap(),
            },
        })
    }
}

fn describe(tok: &Tok) -> String {
    match tok {
        Tok::Ident(s) => format!("`{s}`"),
        Tok::Int(i) => format!("`{i}`"),
        Tok::Str(_) => "string".into(),
        Tok::LParen => "`(`".into(),
        Tok::RParen => "`)`".into(),
        Tok::Comma => "`,`".into(),
        Tok::Colon => "`:`".into(),
        Tok::Assign => "`=`".into(),
        Tok::PlusAssign => "`+=`".into(),
        Tok::MinusAssign => "`-=`".into(),
        Tok::Eq => "`==`".into(),
        Tok::Ne => "`!=`".into(),
        Tok::Lt => "`<`".into(),
        Tok::Le => "`<=`".into(),
        Tok::Gt => "`>`".into(),
        Tok::Ge => "`>=`".into(),
        Tok::Plus => "`+`".into(),
        Tok::Minus => "`-`".into(),
        Tok::Star => "`*`".into(),
        Tok::Ellipsis => "`...`".into(),
        Tok::Other(c) => format!("`{c}`"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plan_dsl::ast::StringExpr;

    fn s(text: &str) -> Expr {
        Expr::Str(StringExpr::literal(text))
    }

    #[test]
    fn return_only() {
        let p = parse_plan("def new_plan():\n    return \"done\"").unwrap();
        assert_eq!(p.name, "new_plan");
        assert_eq!(p.body.len(), 1);
        assert_eq!(p.body[0].kind, StmtKind::Return(Some(s("done"))));
        assert_eq!(p.body[0].line, 2);
    }

    #[test]
    fn edge_call_with_keyword_flag() {
        let p =
            parse_plan("def new_plan():\n    E(\"Home\", \"tap x\", imagined = True)\n").unwrap();
        assert_eq!(
            p.body[0].kind,
            StmtKind::EdgeCall {
                source: s("Home"),
                action: s("tap x"),
                imagined: true
            }
        );
    }

    #[test]
    fn comments_are_kept_with_lines() {
        let p = parse_plan("# leading\ndef new_plan():\n    # first\n    wait()\n    # trailing\n")
            .unwrap();
        let kinds: Vec<_> = p.body.iter().map(|s| (s.line, s.kind.clone())).collect();
        assert_eq!(
            kinds,
            vec![
                (3, StmtKind::Comment("first".into())),
                (4, StmtKind::Wait),
                (5, StmtKind::Comment("trailing".into()))
            ]
        );
    }

    #[test]
    fn elif_chain_and_comment_before_else() {
        let text = "def p():\n    if isTRUE(\"a\"):\n        wait()\n    # note\n    elif not isTrue('b'):\n        wait()\n    else:\n        return\n";
        let p = parse_plan(text).unwrap();
        assert_eq!(p.body.len(), 1);
        let StmtKind::If {
            branches,
            else_block,
        } = &p.body[0].kind
        else {
            panic!("expected if")
        };
        assert_eq!(branches.len(), 2);
        assert_eq!(branches[0].1.len(), 2);
        assert!(matches!(branches[1].0, Expr::Not(_)));
        assert_eq!(else_block.as_ref().unwrap().len(), 1);
    }

    #[test]
    fn tabs_are_expanded() {
        let p = parse_plan("def p():\n\ti = 1\n\twhile i < 3:\n\t\ti += 1\n").unwrap();
        assert_eq!(p.statement_count(), 3);
    }

    #[test]
    fn multiline_call_is_joined() {
        let p = parse_plan("def p():\n    E(\"a\",\n      \"b\")\n    wait()\n").unwrap();
        assert_eq!(p.body.len(), 2);
        assert_eq!(p.body[1].line, 4);
    }

    #[test]
    fn inline_body() {
        let p = parse_plan("def p():\n    while True: break\n").unwrap();
        let StmtKind::While { body, .. } = &p.body[0].kind else {
            panic!()
        };
        assert_eq!(body[0].kind, StmtKind::Break);
    }

    #[test]
    fn other_app_call_keywords() {
        let p = parse_plan(
            "def p():\n    other_app_function(app_name=\"Settings\", sub_task=\"enable Wi-Fi\")\n",
        )
        .unwrap();
        assert_eq!(
            p.body[0].kind,
            StmtKind::OtherAppCall {
                app_name: s("Settings"),
                sub_task: s("enable Wi-Fi")
            }
        );
    }

    #[test]
    fn precedence() {
        let p = parse_plan("def p():\n    x = not a == 1 and b or -2 * 3 + 1 > 0\n").unwrap();
        let StmtKind::Assign { value, .. } = &p.body[0].kind else {
            panic!()
        };
        let Expr::Or(l, r) = value else {
            panic!("or at top: {value:?}")
        };
        assert!(matches!(**l, Expr::And(..)));
        assert!(matches!(**r, Expr::Compare(CmpOp::Gt, ..)));
    }

    fn errors(text: &str) -> Vec<SyntaxError> {
        parse_plan(text).unwrap_err().0
    }

    #[test]
    fn unsupported_constructs_are_positioned() {
        let e = errors("def p():\n    for x in y:\n        wait()\n    import os\n");
        assert_eq!(e.len(), 2);
        assert_eq!((e[0].line, e[0].column), (2, 5));
        assert_eq!((e[1].line, e[1].column), (4, 5));
    }

    #[test]
    fn break_outside_loop() {
        let e = errors("def p():\n    if True:\n        break\n");
        assert_eq!(e.len(), 1);
        assert_eq!(e[0].line, 3);
        assert!(e[0].message.contains("outside"));
    }

    #[test]
    fn unknown_function_and_bad_indent() {
        let e = errors("def p():\n    print(\"x\")\n    wait()\n      wait()\n");
        assert_eq!(e.len(), 2);
        assert!(e[0].message.contains("unknown function"));
        assert!(e[1].message.contains("indent"));
    }

    #[test]
    fn missing_def_and_empty_body() {
        assert_eq!(errors("wait()\n")[0].line, 1);
        assert!(errors("def p():\n    # only a comment\n")[0]
            .message
            .contains("indented block"));
        assert!(errors("")[0].message.contains("def"));
    }

    #[test]
    fn content_after_body_is_rejected() {
        let e = errors("def p():\n    wait()\nprint('done')\n");
        assert_eq!(e[0].line, 3);
    }

    #[test]
    fn bad_flag_value() {
        assert!(!errors("def p():\n    E('a', 'b', imagined=x)\n").is_empty());
        assert!(!errors("def p():\n    E('a')\n").is_empty());
        assert!(!errors("def p():\n    x = wait()\n").is_empty());
    }
}
