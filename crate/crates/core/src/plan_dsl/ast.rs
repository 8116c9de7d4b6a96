use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

/// Statements of one block. Shared so that interpreter frames can hold a
/// block without borrowing the program.
pub type Block = Arc<Vec<Stmt>>;

#[derive(Debug, Clone, PartialEq)]
pub struct PlanProgram {
    /// Function name from the `def` line, normally `new_plan`.
    pub name: String,
    pub body: Block,
    pub source_text: String,
}

impl PlanProgram {
    /// Number of executable statements, nested ones included. Comments and
    /// `pass`/`...` placeholders are not counted.
    pub fn statement_count(&self) -> usize {
        fn count(block: &[Stmt]) -> usize {
            block
                .iter()
                .map(|s| match &s.kind {
                    StmtKind::Comment(_) | StmtKind::Pass => 0,
                    StmtKind::If {
                        branches,
                        else_block,
                    } => {
                        1 + branches.iter().map(|(_, b)| count(b)).sum::<usize>()
                            + else_block.as_ref().map_or(0, |b| count(b))
                    }
                    StmtKind::While { body, .. } => 1 + count(body),
                    _ => 1,
                })
                .sum()
        }
        count(&self.body)
    }

    /// Visits every statement in source order, depth first.
    pub fn walk(&self, mut f: impl FnMut(&Stmt)) {
        fn go(block: &[Stmt], f: &mut dyn FnMut(&Stmt)) {
            for s in block {
                f(s);
                match &s.kind {
                    StmtKind::If {
                        branches,
                        else_block,
                    } => {
                        for (_, b) in branches {
                            go(b, f);
                        }
                        if let Some(b) = else_block {
                            go(b, f);
                        }
                    }
                    StmtKind::While { body, .. } => go(body, f),
                    _ => {}
                }
            }
        }
        go(&self.body, &mut f);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stmt {
    /// 1-based source line.
    pub line: usize,
    pub kind: StmtKind,
}

#[derive(Debug, Clone, PartialEq)]
pub enum StmtKind {
    EdgeCall {
        source: Expr,
        action: Expr,
        imagined: bool,
    },
    /// A bare `isTRUE(...)` statement; the answer is discarded.
    IsTrueCall {
        statement: Expr,
        compare_screen: bool,
    },
    Wait,
    OtherAppCall {
        app_name: Expr,
        sub_task: Expr,
    },
    Assign {
        var: String,
        op: AssignOp,
        value: Expr,
    },
    If {
        branches: Vec<(Expr, Block)>,
        else_block: Option<Block>,
    },
    While {
        cond: Expr,
        body: Block,
    },
    Break,
    Continue,
    Return(Option<Expr>),
    Comment(String),
    /// `pass` or a bare `...`.
    Pass,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AssignOp {
    Set,
    Add,
    Sub,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Int(i64),
    Bool(bool),
    Str(StringExpr),
    Var(String),
    IsTrue {
        statement: Box<Expr>,
        compare_screen: bool,
    },
    Not(Box<Expr>),
    And(Box<Expr>, Box<Expr>),
    Or(Box<Expr>, Box<Expr>),
    Compare(CmpOp, Box<Expr>, Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Neg(Box<Expr>),
}

impl Expr {
    /// The literal text when the expression is a string with no slots.
    pub fn as_literal(&self) -> Option<String> {
        match self {
            Expr::Str(s) if s.is_literal() => Some(s.literal_text()),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StrPart {
    Lit(String),
    /// `{name}` interpolation slot.
    Slot(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct StringExpr {
    pub parts: Vec<StrPart>,
}

impl StringExpr {
    pub fn literal(s: impl Into<String>) -> Self {
        StringExpr {
            parts: vec![StrPart::Lit(s.into())],
        }
    }

    pub fn is_literal(&self) -> bool {
        self.parts.iter().all(|p| matches!(p, StrPart::Lit(_)))
    }

    fn literal_text(&self) -> String {
        self.parts
            .iter()
            .map(|p| match p {
                StrPart::Lit(s) => s.as_str(),
                StrPart::Slot(_) => "",
            })
            .collect()
    }

    pub fn slots(&self) -> impl Iterator<Item = &str> {
        self.parts.iter().filter_map(|p| match p {
            StrPart::Slot(v) => Some(v.as_str()),
            StrPart::Lit(_) => None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Int(i64),
    Str(String),
    Bool(bool),
}

impl Value {
    pub fn type_name(&self) -> &'static str {
        match self {
            Value::Int(_) => "int",
            Value::Str(_) => "str",
            Value::Bool(_) => "bool",
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(i) => write!(f, "{i}"),
            Value::Str(s) => f.write_str(s),
            Value::Bool(true) => f.write_str("True"),
            Value::Bool(false) => f.write_str("False"),
        }
    }
}
