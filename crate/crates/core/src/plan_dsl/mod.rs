//! The plan language: a narrow, indentation-structured subset of Python in
//! which model-emitted plans are written.
//!
//! ```text
//! def new_plan():
//!     E("Main page of the Settings app", "tap Wi-Fi button")
//!     if not isTRUE("Wi-Fi button on"):
//!         E("Wi-Fi (WLAN) settings", "tap the WLAN switch")
//!     return "Task completed"
//! ```
//!
//! Plans are parsed into a [`PlanProgram`] and executed one effect at a time
//! by [`ExecState::step`]. The interpreter has no I/O of its own: every call
//! to `E`, `isTRUE`, `wait` or `other_app_function` suspends execution and
//! hands an [`Effect`] to the host.

mod ast;
mod interp;
mod lexer;
mod parser;
mod validate;

pub use ast::{
    AssignOp, BinOp, Block, CmpOp, Expr, PlanProgram, Stmt, StmtKind, StrPart, StringExpr, Value,
};
pub use interp::{
    interpolate, Effect, EffectResult, ExecState, ExecStatus, RuntimeError, RuntimeErrorKind,
    PURE_STEP_BUDGET,
};
pub use parser::{parse_plan, SyntaxError, SyntaxErrorList};
pub use validate::{validate_plan, Diagnostic, DiagnosticKind};
