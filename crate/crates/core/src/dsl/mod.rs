//! Control-law expression language and built-in controllers.

mod expr;
mod law;
mod parser;

pub use expr::{BinOp, ControlExpr, Env, Func, VARIABLES};
pub(crate) use law::Checked;
pub use law::{builtin, BoundExpr, ControlLaw, Controller, VarSet};
pub use parser::parse;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExprError {
    #[error("syntax error at byte {offset}: expected one of [{}], found {found}", expected.join(", "))]
    Syntax {
        offset: usize,
        expected: Vec<String>,
        found: String,
    },
    #[error("unknown identifier `{name}` at byte {offset}")]
    UnknownIdentifier { name: String, offset: usize },
    #[error("`{name}` takes {expected} argument(s), got {found}")]
    Arity {
        name: String,
        expected: usize,
        found: usize,
    },
    #[error("domain error in `{op}` (operand {value})")]
    Domain { op: &'static str, value: f64 },
    #[error("variable `{0}` is not bound")]
    MissingVariable(String),
    #[error("variable `{name}` is not available for {system} systems")]
    IllegalVariable { name: String, system: &'static str },
    #[error("unknown builtin controller `{0}`")]
    UnknownBuiltin(String),
    #[error("bad parameter for builtin `{name}`: {reason}")]
    BadParameter { name: String, reason: String },
}
