//! Shared by the interpreter property tests and the acceptance target: a
//! reference evaluator for plans and a generator of random plan programs.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::sync::Arc;

use foresight::plan_dsl::{
    AssignOp, BinOp, CmpOp, Effect, EffectResult, ExecState, ExecStatus, Expr, PlanProgram,
    RuntimeErrorKind, Stmt, StmtKind, StrPart, Value, PURE_STEP_BUDGET,
};
use proptest::prelude::*;
// ---------------------------------------------------------------------------
// Reference evaluator: a direct recursive walk over the AST with its own
// expression semantics. Used only as an oracle for the stepping interpreter.

#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Finished(String),
    Failed(&'static str),
    Capped,
}

pub enum Ctrl {
    Normal,
    Break,
    Continue,
    Return(String),
}

pub enum Stop {
    Failed(&'static str),
    Capped,
}

pub struct Reference<'a> {
    env: BTreeMap<String, Value>,
    tape: &'a [bool],
    tape_pos: usize,
    effects: Vec<Effect>,
    cap: usize,
    pure: usize,
}

impl Reference<'_> {
    fn emit(&mut self, e: Effect) -> Result<(), Stop> {
        if self.effects.len() == self.cap {
            return Err(Stop::Capped);
        }
        self.effects.push(e);
        self.pure = 0;
        Ok(())
    }

    fn answer(&mut self) -> bool {
        let b = self.tape.get(self.tape_pos).copied().unwrap_or(false);
        self.tape_pos += 1;
        b
    }

    fn tick(&mut self) -> Result<(), Stop> {
        self.pure += 1;
        if self.pure > PURE_STEP_BUDGET {
            return Err(Stop::Failed("budget"));
        }
        Ok(())
    }

    fn block(&mut self, stmts: &[Stmt]) -> Result<Ctrl, Stop> {
        for s in stmts {
            match self.stmt(s)? {
                Ctrl::Normal => {}
                other => return Ok(other),
            }
        }
        Ok(Ctrl::Normal)
    }

    fn stmt(&mut self, s: &Stmt) -> Result<Ctrl, Stop> {
        match &s.kind {
            StmtKind::Comment(_) | StmtKind::Pass => self.tick()?,
            StmtKind::Assign { var, op, value } => {
                let v = self.eval(value)?;
                let new = match op {
                    AssignOp::Set => v,
                    AssignOp::Add | AssignOp::Sub => {
                        let cur = self.env.get(var).cloned().ok_or(Stop::Failed("unbound"))?;
                        match (cur, v, op) {
                            (Value::Int(a), Value::Int(b), AssignOp::Add) => {
                                Value::Int(a.checked_add(b).ok_or(Stop::Failed("overflow"))?)
                            }
                            (Value::Int(a), Value::Int(b), _) => {
                                Value::Int(a.checked_sub(b).ok_or(Stop::Failed("overflow"))?)
                            }
                            (Value::Str(a), Value::Str(b), AssignOp::Add) => Value::Str(a + &b),
                            _ => return Err(Stop::Failed("type")),
                        }
                    }
                };
                self.env.insert(var.clone(), new);
                self.tick()?;
            }
            StmtKind::If {
                branches,
                else_block,
            } => {
                let mut chosen = None;
                for (c, b) in branches {
                    if self.cond(c)? {
                        chosen = Some(b);
                        break;
                    }
                }
                self.tick()?;
                if let Some(b) = chosen.or(else_block.as_ref()) {
                    return self.block(b);
                }
            }
            StmtKind::While { cond, body } => loop {
                let go = self.cond(cond)?;
                self.tick()?;
                if !go {
                    break;
                }
                match self.block(body)? {
                    Ctrl::Break => break,
                    Ctrl::Normal | Ctrl::Continue => {}
                    r @ Ctrl::Return(_) => return Ok(r),
                }
            },
            StmtKind::Break => {
                self.tick()?;
                return Ok(Ctrl::Break);
            }
            StmtKind::Continue => {
                self.tick()?;
                return Ok(Ctrl::Continue);
            }
            StmtKind::Return(e) => {
                let msg = match e {
                    Some(e) => render(&self.eval(e)?),
                    None => String::new(),
                };
                return Ok(Ctrl::Return(msg));
            }
            StmtKind::EdgeCall {
                source,
                action,
                imagined,
            } => {
                let source = self.string(source)?;
                let action = self.string(action)?;
                self.emit(Effect::DoEdge {
                    source,
                    action,
                    imagined: *imagined,
                })?;
            }
            StmtKind::IsTrueCall {
                statement,
                compare_screen,
            } => {
                let statement = self.string(statement)?;
                self.emit(Effect::QueryTrue {
                    statement,
                    compare_screen: *compare_screen,
                })?;
                self.answer();
                self.tick()?;
            }
            StmtKind::Wait => self.emit(Effect::DoWait)?,
            StmtKind::OtherAppCall { app_name, sub_task } => {
                let app = self.string(app_name)?;
                let sub_task = self.string(sub_task)?;
                self.emit(Effect::SpawnSubAgent { app, sub_task })?;
            }
        }
        Ok(Ctrl::Normal)
    }

    fn cond(&mut self, e: &Expr) -> Result<bool, Stop> {
        match self.eval(e)? {
            Value::Bool(b) => Ok(b),
            _ => Err(Stop::Failed("type")),
        }
    }

    fn string(&mut self, e: &Expr) -> Result<String, Stop> {
        match self.eval(e)? {
            Value::Str(s) => Ok(s),
            _ => Err(Stop::Failed("type")),
        }
    }

    fn eval(&mut self, e: &Expr) -> Result<Value, Stop> {
        Ok(match e {
            Expr::Int(i) => Value::Int(*i),
            Expr::Bool(b) => Value::Bool(*b),
            Expr::Str(s) => {
                let mut out = String::new();
                for p in &s.parts {
                    match p {
                        StrPart::Lit(t) => out.push_str(t),
                        StrPart::Slot(v) => {
                            out.push_str(&render(self.env.get(v).ok_or(Stop::Failed("unbound"))?))
                        }
                    }
                }
                Value::Str(out)
            }
            Expr::Var(v) => self.env.get(v).cloned().ok_or(Stop::Failed("unbound"))?,
            Expr::IsTrue {
                statement,
                compare_screen,
            } => {
                let statement = self.string(statement)?;
                self.emit(Effect::QueryTrue {
                    statement,
                    compare_screen: *compare_screen,
                })?;
                Value::Bool(self.answer())
            }
            Expr::Not(x) => Value::Bool(!self.cond(x)?),
            Expr::And(a, b) => Value::Bool(self.cond(a)? && self.cond(b)?),
            Expr::Or(a, b) => Value::Bool(self.cond(a)? || self.cond(b)?),
            Expr::Compare(op, a, b) => {
                let (a, b) = (self.eval(a)?, self.eval(b)?);
                let ord = match (&a, &b) {
                    (Value::Int(x), Value::Int(y)) => x.cmp(y),
                    (Value::Str(x), Value::Str(y)) => x.cmp(y),
                    (Value::Bool(x), Value::Bool(y)) if matches!(op, CmpOp::Eq | CmpOp::Ne) => {
                        x.cmp(y)
                    }
                    _ => return Err(Stop::Failed("type")),
                };
                Value::Bool(match op {
                    CmpOp::Eq => ord.is_eq(),
                    CmpOp::Ne => ord.is_ne(),
                    CmpOp::Lt => ord.is_lt(),
                    CmpOp::Le => ord.is_le(),
                    CmpOp::Gt => ord.is_gt(),
                    CmpOp::Ge => ord.is_ge(),
                })
            }
            Expr::Binary(op, a, b) => {
                let (a, b) = (self.eval(a)?, self.eval(b)?);
                match (op, a, b) {
                    (BinOp::Add, Value::Int(x), Value::Int(y)) => {
                        Value::Int(x.checked_add(y).ok_or(Stop::Failed("overflow"))?)
                    }
                    (BinOp::Sub, Value::Int(x), Value::Int(y)) => {
                        Value::Int(x.checked_sub(y).ok_or(Stop::Failed("overflow"))?)
                    }
                    (BinOp::Mul, Value::Int(x), Value::Int(y)) => {
                        Value::Int(x.checked_mul(y).ok_or(Stop::Failed("overflow"))?)
                    }
                    (BinOp::Add, Value::Str(x), Value::Str(y)) => Value::Str(x + &y),
                    _ => return Err(Stop::Failed("type")),
                }
            }
            Expr::Neg(x) => match self.eval(x)? {
                Value::Int(i) => Value::Int(i.checked_neg().ok_or(Stop::Failed("overflow"))?),
                _ => return Err(Stop::Failed("type")),
            },
        })
    }
}

pub fn render(v: &Value) -> String {
    match v {
        Value::Int(i) => i.to_string(),
        Value::Str(s) => s.clone(),
        Value::Bool(true) => "True".into(),
        Value::Bool(false) => "False".into(),
    }
}

pub fn reference_run(program: &PlanProgram, tape: &[bool], cap: usize) -> (Vec<Effect>, Outcome) {
    let mut r = Reference {
        env: BTreeMap::new(),
        tape,
        tape_pos: 0,
        effects: Vec::new(),
        cap,
        pure: 0,
    };
    let outcome = match r.block(&program.body) {
        Ok(Ctrl::Return(m)) => Outcome::Finished(m),
        Ok(_) => Outcome::Finished("plan exhausted".into()),
        Err(Stop::Failed(k)) => Outcome::Failed(k),
        Err(Stop::Capped) => Outcome::Capped,
    };
    (r.effects, outcome)
}

/// Drives the stepping interpreter with the same answer tape.
pub fn stepping_run(program: &PlanProgram, tape: &[bool], cap: usize) -> (Vec<Effect>, Outcome) {
    let mut st = ExecState::new(Arc::new(program.clone()));
    let mut effects = Vec::new();
    let mut tape_pos = 0;
    let mut result = None;
    loop {
        match st.step(result.take()) {
            Some(Effect::Finished { message }) => return (effects, Outcome::Finished(message)),
            Some(e) => {
                if effects.len() == cap {
                    return (effects, Outcome::Capped);
                }
                result = Some(match &e {
                    Effect::QueryTrue { .. } => {
                        let b = tape.get(tape_pos).copied().unwrap_or(false);
                        tape_pos += 1;
                        EffectResult::Truth(b)
                    }
                    Effect::SpawnSubAgent { .. } => EffectResult::Message("ok".into()),
                    _ => EffectResult::Done,
                });
                effects.push(e);
            }
            None => {
                let ExecStatus::Failed(err) = st.status() else {
                    panic!("stopped without failing: {:?}", st.status())
                };
                let kind = match err.kind {
                    RuntimeErrorKind::UnboundVariable(_) => "unbound",
                    RuntimeErrorKind::TypeMismatch(_) => "type",
                    RuntimeErrorKind::Overflow => "overflow",
                    RuntimeErrorKind::BudgetExceeded => "budget",
                    ref other => panic!("unexpected failure {other:?}"),
                };
                return (effects, Outcome::Failed(kind));
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Generated programs

#[derive(Debug, Clone)]
pub enum G {
    Edge(u8, u8),
    Query(u8),
    Wait,
    SubAgent,
    Assign(u8, String),
    Bump(u8, i8),
    If(Vec<(String, Vec<G>)>, Option<Vec<G>>),
    While(String, Vec<G>),
    Break,
    Continue,
    Return(u8),
    Comment,
}

pub const VARS: [&str; 3] = ["a", "b", "c"];

pub fn count(block: &[G]) -> usize {
    block
        .iter()
        .map(|g| match g {
            G::Comment => 0,
            G::If(branches, els) => {
                1 + branches.iter().map(|(_, b)| count(b)).sum::<usize>()
                    + els.as_ref().map_or(0, |b| count(b))
            }
            G::While(_, b) => 1 + count(b),
            _ => 1,
        })
        .sum()
}

pub fn cond_strategy() -> impl Strategy<Value = String> {
    let v = prop::sample::select(VARS.to_vec());
    prop_oneof![
        (0u8..4).prop_map(|n| format!("isTRUE(\"q{n}\")")),
        (0u8..4).prop_map(|n| format!("not isTRUE('q{n}')")),
        (v.clone(), 0i64..4).prop_map(|(v, k)| format!("{v} < {k}")),
        (v.clone(), 0i64..4).prop_map(|(v, k)| format!("{v} == {k}")),
        (v.clone(), 0i64..4).prop_map(|(v, k)| format!("isTRUE(\"p\") and {v} >= {k}")),
        Just("isTRUE('r') or isTRUE('s', compare_screen=True)".to_string()),
        Just("True".to_string()),
        Just("False".to_string()),
        v.clone().prop_map(|v| v.to_string()),
        v.prop_map(|v| format!("{v} != \"x\"")),
    ]
}

pub fn value_strategy() -> impl Strategy<Value = String> {
    let v = prop::sample::select(VARS.to_vec());
    prop_oneof![
        (0i64..5).prop_map(|k| k.to_string()),
        (v.clone(), 0i64..3).prop_map(|(v, k)| format!("{v} + {k}")),
        v.clone().prop_map(|v| format!("{v} * 2 - 1")),
        (0i64..3).prop_map(|k| format!("-{k}")),
        (0u8..3).prop_map(|n| format!("isTRUE(\"z{n}\")")),
        (0u8..3).prop_map(|n| format!("\"s{n}\"")),
    ]
}

pub fn leaf(in_loop: bool) -> BoxedStrategy<G> {
    let mut options: Vec<BoxedStrategy<G>> = vec![
        (0u8..3, 0u8..4).prop_map(|(s, a)| G::Edge(s, a)).boxed(),
        (0u8..3).prop_map(G::Query).boxed(),
        Just(G::Wait).boxed(),
        Just(G::SubAgent).boxed(),
        (0u8..3, value_strategy())
            .prop_map(|(v, e)| G::Assign(v, e))
            .boxed(),
        (0u8..3, -2i8..3).prop_map(|(v, k)| G::Bump(v, k)).boxed(),
        (0u8..3).prop_map(G::Return).boxed(),
        Just(G::Comment).boxed(),
    ];
    if in_loop {
        options.push(Just(G::Break).boxed());
        options.push(Just(G::Continue).boxed());
    }
    prop::strategy::Union::new(options).boxed()
}

pub fn block_strategy(depth: u32, in_loop: bool) -> BoxedStrategy<Vec<G>> {
    if depth == 0 {
        return prop::collection::vec(leaf(in_loop), 1..4).boxed();
    }
    let stmt = prop_oneof![
        3 => leaf(in_loop),
        1 => (
            prop::collection::vec((cond_strategy(), block_strategy(depth - 1, in_loop)), 1..3),
            prop::option::of(block_strategy(depth - 1, in_loop)),
        )
            .prop_map(|(b, e)| G::If(b, e)),
        1 => (cond_strategy(), block_strategy(depth - 1, true)).prop_map(|(c, b)| G::While(c, b)),
    ];
    prop::collection::vec(stmt, 1..4).boxed()
}

pub fn render_block(block: &[G], indent: usize, out: &mut String) {
    let pad = " ".repeat(indent);
    for g in block {
        match g {
            G::Edge(s, a) => {
                let action = match a {
                    0 => "\"tap ok\"".to_string(),
                    1 => "f\"tap the {a}-th item\"".to_string(),
                    2 => "'swipe {b}'".to_string(),
                    _ => "\"type {c}\"".to_string(),
                };
                out.push_str(&format!("{pad}E(\"Screen {s}\", {action})\n"));
            }
            G::Query(n) => out.push_str(&format!("{pad}isTRUE(\"bare {n}\")\n")),
            G::Wait => out.push_str(&format!("{pad}wait()\n")),
            G::SubAgent => out.push_str(&format!(
                "{pad}other_app_function(app_name=\"Notes\", sub_task=\"make a note\")\n"
            )),
            G::Assign(v, e) => out.push_str(&format!("{pad}{} = {e}\n", VARS[*v as usize])),
            G::Bump(v, k) => {
                let op = if *k < 0 { "-=" } else { "+=" };
                out.push_str(&format!(
                    "{pad}{} {op} {}\n",
                    VARS[*v as usize],
                    k.unsigned_abs()
                ));
            }
            G::If(branches, els) => {
                for (i, (c, b)) in branches.iter().enumerate() {
                    let kw = if i == 0 { "if" } else { "elif" };
                    out.push_str(&format!("{pad}{kw} {c}:\n"));
                    render_block(b, indent + 4, out);
                }
                if let Some(b) = els {
                    out.push_str(&format!("{pad}else:\n"));
                    render_block(b, indent + 4, out);
                }
            }
            G::While(c, b) => {
                out.push_str(&format!("{pad}while {c}:\n"));
                render_block(b, indent + 4, out);
            }
            G::Break => out.push_str(&format!("{pad}break\n")),
            G::Continue => out.push_str(&format!("{pad}continue\n")),
            G::Return(n) => out.push_str(&format!("{pad}return \"ret {n}\"\n")),
            G::Comment => out.push_str(&format!("{pad}# note\n")),
        }
    }
}

pub fn has_code(block: &[G]) -> bool {
    block.iter().any(|g| !matches!(g, G::Comment))
        && block.iter().all(|g| match g {
            G::If(b, e) => {
                b.iter().all(|(_, b)| has_code(b)) && e.as_ref().is_none_or(|b| has_code(b))
            }
            G::While(_, b) => has_code(b),
            _ => true,
        })
}

pub fn program_strategy() -> impl Strategy<Value = (String, usize)> {
    block_strategy(3, false)
        .prop_filter("at most 30 statements with the prelude", |b| count(b) <= 28)
        .prop_filter("every block has code", |b| has_code(b))
        .prop_map(|b| {
            let mut text = String::from("def new_plan():\n    a = 0\n    b = 1\n");
            render_block(&b, 4, &mut text);
            (text, count(&b) + 2)
        })
}
