use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::ast::{
    AssignOp, BinOp, Block, CmpOp, Expr, PlanProgram, StmtKind, StrPart, StringExpr, Value,
};

/// Maximum pure statements executed between two yielded effects.
pub const PURE_STEP_BUDGET: usize = 10_000;

/// A request from the plan to the host.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "effect", rename_all = "snake_case")]
pub enum Effect {
    DoEdge {
        source: String,
        action: String,
        imagined: bool,
    },
    QueryTrue {
        statement: String,
        compare_screen: bool,
    },
    DoWait,
    SpawnSubAgent {
        app: String,
        sub_task: String,
    },
    Finished {
        message: String,
    },
}

/// The host's answer to the outstanding effect.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "result", content = "value", rename_all = "snake_case")]
pub enum EffectResult {
    /// `DoEdge` or `DoWait` completed.
    Done,
    /// Answer to `QueryTrue`.
    Truth(bool),
    /// Outcome of `SpawnSubAgent`.
    Message(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ExecStatus {
    Running,
    AwaitingEffectResult,
    Finished(String),
    Failed(RuntimeError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RuntimeErrorKind {
    UnboundVariable(String),
    TypeMismatch(String),
    Overflow,
    BudgetExceeded,
    /// The host broke the step protocol, e.g. a missing or wrong-kind result.
    Protocol(String),
    /// The plan was replaced or abandoned by the host.
    Poisoned(String),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub struct RuntimeError {
    /// Source line of the statement being executed, when known.
    pub line: Option<usize>,
    pub kind: RuntimeErrorKind,
}

impl RuntimeError {
    fn new(kind: RuntimeErrorKind) -> Self {
        RuntimeError { line: None, kind }
    }

    fn at(mut self, line: usize) -> Self {
        self.line.get_or_insert(line);
        self
    }
}

impl fmt::Display for RuntimeError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(line) = self.line {
            write!(f, "line {line}: ")?;
        }
        match &self.kind {
            RuntimeErrorKind::UnboundVariable(v) => write!(f, "variable `{v}` is not bound"),
            RuntimeErrorKind::TypeMismatch(m) => write!(f, "type mismatch: {m}"),
            RuntimeErrorKind::Overflow => f.write_str("integer overflow"),
            RuntimeErrorKind::BudgetExceeded => write!(
                f,
                "more than {PURE_STEP_BUDGET} statements ran without reaching an effect"
            ),
            RuntimeErrorKind::Protocol(m) => write!(f, "protocol error: {m}"),
            RuntimeErrorKind::Poisoned(m) => write!(f, "plan abandoned: {m}"),
        }
    }
}

/// Replaces every slot of `expr` with the decimal or textual rendering of
/// its binding.
pub fn interpolate(
    expr: &StringExpr,
    env: &BTreeMap<String, Value>,
) -> Result<String, RuntimeError> {
    let mut out = String::new();
    for part in &expr.parts {
        match part {
            StrPart::Lit(s) => out.push_str(s),
            StrPart::Slot(name) => {
                let v = env.get(name).ok_or_else(|| {
                    RuntimeError::new(RuntimeErrorKind::UnboundVariable(name.clone()))
                })?;
                out.push_str(&v.to_string());
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone)]
struct Frame {
    block: Block,
    pc: usize,
    is_loop: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Pending {
    /// An `isTRUE` inside the current statement; its answer is recorded and
    /// the statement re-evaluated.
    Query,
    /// The current statement's own effect; on completion the statement ends.
    Edge,
    Wait,
    SubAgent,
}

/// Evaluation paused on an `isTRUE` whose answer is not known yet.
struct NeedQuery(Effect);

enum EvalError {
    Need(NeedQuery),
    Fail(RuntimeError),
}

impl From<RuntimeError> for EvalError {
    fn from(e: RuntimeError) -> Self {
        EvalError::Fail(e)
    }
}

/// Execution state of one plan. Drive it with [`ExecState::step`], feeding
/// back the result of each yielded effect.
#[derive(Debug, Clone)]
pub struct ExecState {
    program: Arc<PlanProgram>,
    frames: Vec<Frame>,
    env: BTreeMap<String, Value>,
    /// `isTRUE` answers for the statement currently being evaluated.
    answers: Vec<bool>,
    pending: Option<Pending>,
    steps_taken: u64,
    status: ExecStatus,
}

enum Flow {
    Continue,
    Yield(Effect),
}

impl ExecState {
    pub fn new(program: Arc<PlanProgram>) -> Self {
        let body = program.body.clone();
        ExecState {
            program,
            frames: vec![Frame {
                block: body,
                pc: 0,
                is_loop: false,
            }],
            env: BTreeMap::new(),
            answers: Vec::new(),
            pending: None,
            steps_taken: 0,
            status: ExecStatus::Running,
        }
    }

    pub fn program(&self) -> &Arc<PlanProgram> {
        &self.program
    }

    pub fn status(&self) -> &ExecStatus {
        &self.status
    }

    pub fn env(&self) -> &BTreeMap<String, Value> {
        &self.env
    }

    /// Statements completed so far, effectful ones included.
    pub fn steps_taken(&self) -> u64 {
        self.steps_taken
    }

    pub fn is_done(&self) -> bool {
        matches!(self.status, ExecStatus::Finished(_) | ExecStatus::Failed(_))
    }

    /// Source line of the statement about to run or awaiting a result.
    pub fn current_line(&self) -> Option<usize> {
        let frame = self.frames.last()?;
        frame.block.get(frame.pc).map(|s| s.line)
    }

    /// Marks the plan as abandoned; later steps yield nothing.
    pub fn poison(&mut self, reason: &str) {
        if !self.is_done() {
            self.status = ExecStatus::Failed(RuntimeError {
                line: self.current_line(),
                kind: RuntimeErrorKind::Poisoned(reason.to_string()),
            });
        }
    }

    /// Runs until the next effect. `result` must answer the previously
    /// yielded effect and be `None` otherwise. Returns `None` once the plan
    /// has finished or failed.
    pub fn step(&mut self, result: Option<EffectResult>) -> Option<Effect> {
        if self.is_done() {
            return None;
        }
        if let Err(e) = self.accept(result) {
            self.status = ExecStatus::Failed(e);
            return None;
        }
        self.status = ExecStatus::Running;
        match self.run() {
            Ok(effect) => {
                match &effect {
                    Effect::Finished { message } => {
                        self.status = ExecStatus::Finished(message.clone())
                    }
                    _ => self.status = ExecStatus::AwaitingEffectResult,
                }
                Some(effect)
            }
            Err(e) => {
                self.status = ExecStatus::Failed(e);
                None
            }
        }
    }

    fn accept(&mut self, result: Option<EffectResult>) -> Result<(), RuntimeError> {
        let line = self.current_line();
        let protocol = |m: String| RuntimeError {
            line,
            kind: RuntimeErrorKind::Protocol(m),
        };
        match (self.pending.take(), result) {
            (None, None) => Ok(()),
            (None, Some(r)) => Err(protocol(format!(
                "result {r:?} supplied but no effect is outstanding"
            ))),
            (Some(p), None) => Err(protocol(format!(
                "no result supplied for the outstanding {p:?} effect"
            ))),
            (Some(Pending::Query), Some(EffectResult::Truth(b))) => {
                self.answers.push(b);
                Ok(())
            }
            (Some(Pending::Edge | Pending::Wait), Some(EffectResult::Done))
            | (Some(Pending::SubAgent), Some(EffectResult::Message(_) | EffectResult::Done)) => {
                self.finish_statement();
                Ok(())
            }
            (Some(p), Some(r)) => Err(protocol(format!(
                "result {r:?} does not answer a {p:?} effect"
            ))),
        }
    }

    fn finish_statement(&mut self) {
        self.answers.clear();
        self.steps_taken += 1;
        if let Some(f) = self.frames.last_mut() {
            f.pc += 1;
        }
    }

    fn run(&mut self) -> Result<Effect, RuntimeError> {
        let mut pure = 0usize;
        loop {
            let Some(frame) = self.frames.last() else {
                return Ok(Effect::Finished {
                    message: "plan exhausted".into(),
                });
            };
            if frame.pc >= frame.block.len() {
                // A finished `if` branch leaves the parent past the `if`; a
                // finished loop body leaves it on the `while`, which re-tests.
                self.frames.pop();
                continue;
            }
            let stmt = frame.block[frame.pc].clone();
            let line = stmt.line;
            match self.exec(&stmt.kind).map_err(|e| match e {
                EvalError::Fail(e) => EvalError::Fail(e.at(line)),
                other => other,
            }) {
                Ok(Flow::Continue) => {
                    pure += 1;
                    if pure > PURE_STEP_BUDGET {
                        return Err(RuntimeError::new(RuntimeErrorKind::BudgetExceeded).at(line));
                    }
                }
                Ok(Flow::Yield(effect)) => return Ok(effect),
                Err(EvalError::Need(NeedQuery(effect))) => {
                    self.pending = Some(Pending::Query);
                    return Ok(effect);
                }
                Err(EvalError::Fail(e)) => return Err(e),
            }
        }
    }

    /// Executes the statement at the top frame's cursor.
    fn exec(&mut self, kind: &StmtKind) -> Result<Flow, EvalError> {
        let mut ev = Evaluator {
            env: &self.env,
            answers: &self.answers,
            next: 0,
        };
        match kind {
            StmtKind::Comment(_) | StmtKind::Pass => {
                self.finish_statement();
                Ok(Flow::Continue)
            }
            StmtKind::Assign { var, op, value } => {
                let rhs = ev.eval(value)?;
                let new = match op {
                    AssignOp::Set => rhs,
                    AssignOp::Add | AssignOp::Sub => {
                        let cur = self.env.get(var).cloned().ok_or_else(|| {
                            RuntimeError::new(RuntimeErrorKind::UnboundVariable(var.clone()))
                        })?;
                        let bin = if *op == AssignOp::Add {
                            BinOp::Add
                        } else {
                            BinOp::Sub
                        };
                        binary(bin, cur, rhs)?
                    }
                };
                self.env.insert(var.clone(), new);
                self.finish_statement();
                Ok(Flow::Continue)
            }
            StmtKind::If {
                branches,
                else_block,
            } => {
                let mut chosen = None;
                for (cond, block) in branches {
                    if ev.condition(cond)? {
                        chosen = Some(block.clone());
                        break;
                    }
                }
                let chosen = chosen.or_else(|| else_block.clone());
                self.finish_statement();
                if let Some(block) = chosen {
                    self.frames.push(Frame {
                        block,
                        pc: 0,
                        is_loop: false,
                    });
                }
                Ok(Flow::Continue)
            }
            StmtKind::While { cond, body } => {
                if ev.condition(cond)? {
                    self.answers.clear();
                    self.steps_taken += 1;
                    self.frames.push(Frame {
                        block: body.clone(),
                        pc: 0,
                        is_loop: true,
                    });
                } else {
                    self.finish_statement();
                }
                Ok(Flow::Continue)
            }
            StmtKind::Break | StmtKind::Continue => {
                self.steps_taken += 1;
                while let Some(f) = self.frames.pop() {
                    if f.is_loop {
                        break;
                    }
                }
                if matches!(kind, StmtKind::Break) {
                    if let Some(parent) = self.frames.last_mut() {
                        parent.pc += 1;
                    }
                }
                Ok(Flow::Continue)
            }
            StmtKind::Return(value) => {
                let message = match value {
                    Some(e) => ev.eval(e)?.to_string(),
                    None => String::new(),
                };
                self.answers.clear();
                self.steps_taken += 1;
                self.frames.clear();
                Ok(Flow::Yield(Effect::Finished { message }))
            }
            StmtKind::EdgeCall {
                source,
                action,
                imagined,
            } => {
                let source = ev.string(source, "E source")?;
                let action = ev.string(action, "E action")?;
                self.pending = Some(Pending::Edge);
                Ok(Flow::Yield(Effect::DoEdge {
                    source,
                    action,
                    imagined: *imagined,
                }))
            }
            StmtKind::IsTrueCall {
                statement,
                compare_screen,
            } => {
                // A bare query: its answer is only needed to advance.
                if ev.answers.is_empty() {
                    let statement = ev.string(statement, "isTRUE statement")?;
                    return Err(EvalError::Need(NeedQuery(Effect::QueryTrue {
                        statement,
                        compare_screen: *compare_screen,
                    })));
                }
                self.finish_statement();
                Ok(Flow::Continue)
            }
            StmtKind::Wait => {
                self.pending = Some(Pending::Wait);
                Ok(Flow::Yield(Effect::DoWait))
            }
            StmtKind::OtherAppCall { app_name, sub_task } => {
                let app = ev.string(app_name, "app_name")?;
                let sub_task = ev.string(sub_task, "sub_task")?;
                self.pending = Some(Pending::SubAgent);
                Ok(Flow::Yield(Effect::SpawnSubAgent { app, sub_task }))
            }
        }
    }
}

/// Expression evaluation against recorded `isTRUE` answers. Evaluation
/// order is fixed (left to right, short-circuit), so replaying the answers
/// reaches the same point every time.
struct Evaluator<'a> {
    env: &'a BTreeMap<String, Value>,
    answers: &'a [bool],
    next: usize,
}

impl Evaluator<'_> {
    fn condition(&mut self, e: &Expr) -> Result<bool, EvalError> {
        match self.eval(e)? {
            Value::Bool(b) => Ok(b),
            other => Err(mismatch(format!(
                "condition is {} `{other}`, expected bool",
                other.type_name()
            ))),
        }
    }

    fn string(&mut self, e: &Expr, what: &str) -> Result<String, EvalError> {
        match self.eval(e)? {
            Value::Str(s) => Ok(s),
            other => Err(mismatch(format!(
                "{what} is {} `{other}`, expected str",
                other.type_name()
            ))),
        }
    }

    fn eval(&mut self, e: &Expr) -> Result<Value, EvalError> {
        Ok(match e {
            Expr::Int(i) => Value::Int(*i),
            Expr::Bool(b) => Value::Bool(*b),
            Expr::Str(s) => Value::Str(interpolate(s, self.env)?),
            Expr::Var(v) => {
                self.env.get(v).cloned().ok_or_else(|| {
                    RuntimeError::new(RuntimeErrorKind::UnboundVariable(v.clone()))
                })?
            }
            Expr::IsTrue {
                statement,
                compare_screen,
            } => {
                let text = self.string(statement, "isTRUE statement")?;
                if let Some(&b) = self.answers.get(self.next) {
                    self.next += 1;
                    Value::Bool(b)
                } else {
                    return Err(EvalError::Need(NeedQuery(Effect::QueryTrue {
                        statement: text,
                        compare_screen: *compare_screen,
                    })));
                }
            }
            Expr::Not(inner) => Value::Bool(!self.boolean(inner, "not")?),
            Expr::And(a, b) => Value::Bool(self.boolean(a, "and")? && self.boolean(b, "and")?),
            Expr::Or(a, b) => Value::Bool(self.boolean(a, "or")? || self.boolean(b, "or")?),
            Expr::Compare(op, a, b) => {
                let a = self.eval(a)?;
                let b = self.eval(b)?;
                Value::Bool(compare(*op, &a, &b)?)
            }
            Expr::Binary(op, a, b) => {
                let a = self.eval(a)?;
                let b = self.eval(b)?;
                binary(*op, a, b)?
            }
            Expr::Neg(inner) => match self.eval(inner)? {
                Value::Int(i) => Value::Int(
                    i.checked_neg()
                        .ok_or(RuntimeError::new(RuntimeErrorKind::Overflow))?,
                ),
                other => return Err(mismatch(format!("cannot negate {}", other.type_name()))),
            },
        })
    }

    fn boolean(&mut self, e: &Expr, op: &str) -> Result<bool, EvalError> {
        match self.eval(e)? {
            Value::Bool(b) => Ok(b),
            other => Err(mismatch(format!(
                "`{op}` operand is {}, expected bool",
                other.type_name()
            ))),
        }
    }
}

fn mismatch(message: String) -> EvalError {
    EvalError::Fail(RuntimeError::new(RuntimeErrorKind::TypeMismatch(message)))
}

fn compare(op: CmpOp, a: &Value, b: &Value) -> Result<bool, RuntimeError> {
    use std::cmp::Ordering;
    let ord: Ordering = match (a, b) {
        (Value::Int(x), Value::Int(y)) => x.cmp(y),
        (Value::Str(x), Value::Str(y)) => x.cmp(y),
        (Value::Bool(x), Value::Bool(y)) if matches!(op, CmpOp::Eq | CmpOp::Ne) => x.cmp(y),
        _ => {
            return Err(RuntimeError::new(RuntimeErrorKind::TypeMismatch(format!(
                "cannot compare {} with {}",
                a.type_name(),
                b.type_name()
            ))))
        }
    };
    Ok(match op {
        CmpOp::Eq => ord == Ordering::Equal,
        CmpOp::Ne => ord != Ordering::Equal,
        CmpOp::Lt => ord == Ordering::Less,
        CmpOp::Le => ord != Ordering::Greater,
        CmpOp::Gt => ord == Ordering::Greater,
        CmpOp::Ge => ord != Ordering::Less,
    })
}

fn binary(op: BinOp, a: Value, b: Value) -> Result<Value, RuntimeError> {
    let overflow = || RuntimeError::new(RuntimeErrorKind::Overflow);
    match (op, a, b) {
        (BinOp::Add, Value::Int(x), Value::Int(y)) => {
            x.checked_add(y).map(Value::Int).ok_or_else(overflow)
        }
        (BinOp::Sub, Value::Int(x), Value::Int(y)) => {
            x.checked_sub(y).map(Value::Int).ok_or_else(overflow)
        }
        (BinOp::Mul, Value::Int(x), Value::Int(y)) => {
            x.checked_mul(y).map(Value::Int).ok_or_else(overflow)
        }
        (BinOp::Add, Value::Str(x), Value::Str(y)) => Ok(Value::Str(x + &y)),
        (op, a, b) => Err(RuntimeError::new(RuntimeErrorKind::TypeMismatch(format!(
            "unsupported operands for {op:?}: {} and {}",
            a.type_name(),
            b.type_name()
        )))),
    }
}
