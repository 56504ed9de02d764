//! Expression tree, evaluation and printing for the control-law language.

use std::collections::HashMap;
use std::fmt;

use super::ExprError;

/// Every identifier the language knows about. Which of them a controller
/// may use depends on the system it is bound to.
pub const VARIABLES: &[&str] = &[
    "q", "p", "x", "y", "t", "phi", "dphi", "theta", "dtheta", "pi",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinOp {
    fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Pow => "^",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Func {
    Sin,
    Cos,
    Tan,
    Atan,
    Exp,
    Ln,
    Sqrt,
    Abs,
    Sign,
    Tanh,
    Min,
    Max,
    Sat,
}

impl Func {
    pub fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "tan" => Func::Tan,
            "atan" => Func::Atan,
            "exp" => Func::Exp,
            "ln" => Func::Ln,
            "sqrt" => Func::Sqrt,
            "abs" => Func::Abs,
            "sign" => Func::Sign,
            "tanh" => Func::Tanh,
            "min" => Func::Min,
            "max" => Func::Max,
            "sat" => Func::Sat,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tan => "tan",
            Func::Atan => "atan",
            Func::Exp => "exp",
            Func::Ln => "ln",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
            Func::Sign => "sign",
            Func::Tanh => "tanh",
            Func::Min => "min",
            Func::Max => "max",
            Func::Sat => "sat",
        }
    }

    pub fn arity(self) -> usize {
        match self {
            Func::Min | Func::Max => 2,
            Func::Sat => 3,
            _ => 1,
        }
    }

    /// `sign` and `abs` break the smoothness the witness arguments lean on.
    pub fn is_lipschitz_clean(self) -> bool {
        !matches!(self, Func::Sign | Func::Abs)
    }

    pub(crate) fn apply(self, args: &[f64]) -> Result<f64, ExprError> {
        let a = args[0];
        let value = match self {
            Func::Sin => a.sin(),
            Func::Cos => a.cos(),
            Func::Tan => a.tan(),
            Func::Atan => a.atan(),
            Func::Exp => a.exp(),
            Func::Ln => {
                if a <= 0.0 {
                    return Err(ExprError::Domain { op: "ln", value: a });
                }
                a.ln()
            }
            Func::Sqrt => {
                if a < 0.0 {
                    return Err(ExprError::Domain { op: "sqrt", value: a });
                }
                a.sqrt()
            }
            Func::Abs => a.abs(),
            Func::Sign => {
                if a > 0.0 {
                    1.0
                } else if a < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }
            Func::Tanh => a.tanh(),
            Func::Min => a.min(args[1]),
            Func::Max => a.max(args[1]),
            Func::Sat => {
                let (lo, hi) = (args[1], args[2]);
                if lo > hi {
                    return Err(ExprError::Domain { op: "sat", value: lo - hi });
                }
                a.clamp(lo, hi)
            }
        };
        finite(self.name(), value)
    }
}

pub(crate) fn finite(op: &'static str, value: f64) -> Result<f64, ExprError> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(ExprError::Domain { op, value })
    }
}

pub(crate) fn apply_binary(op: BinOp, a: f64, b: f64) -> Result<f64, ExprError> {
    let value = match op {
        BinOp::Add => a + b,
        BinOp::Sub => a - b,
        BinOp::Mul => a * b,
        BinOp::Div => {
            if b == 0.0 {
                return Err(ExprError::Domain { op: "/", value: a });
            }
            a / b
        }
        BinOp::Pow => a.powf(b),
    };
    finite(op.symbol(), value)
}

/// Abstract syntax tree of a control expression.
#[derive(Debug, Clone, PartialEq)]
pub enum ControlExpr {
    Num(f64),
    Var(String),
    Neg(Box<ControlExpr>),
    Binary(BinOp, Box<ControlExpr>, Box<ControlExpr>),
    Call(Func, Vec<ControlExpr>),
}

/// Variable bindings used by [`ControlExpr::eval`].
pub trait Env {
    fn lookup(&self, name: &str) -> Option<f64>;
}

impl Env for HashMap<String, f64> {
    fn lookup(&self, name: &str) -> Option<f64> {
        self.get(name).copied()
    }
}

impl Env for HashMap<&str, f64> {
    fn lookup(&self, name: &str) -> Option<f64> {
        self.get(name).copied()
    }
}

impl<const N: usize> Env for [(&str, f64); N] {
    fn lookup(&self, name: &str) -> Option<f64> {
        self.iter().find(|(k, _)| *k == name).map(|(_, v)| *v)
    }
}

impl ControlExpr {
    /// Literal constructor that keeps the tree in the shape the parser
    /// produces: negative values become `Neg(Num(|c|))`.
    pub fn num(value: f64) -> ControlExpr {
        if value < 0.0 || (value == 0.0 && value.is_sign_negative()) {
            ControlExpr::Neg(Box::new(ControlExpr::Num(-value)))
        } else {
            ControlExpr::Num(value)
        }
    }

    pub fn var(name: &str) -> ControlExpr {
        ControlExpr::Var(name.to_string())
    }

    pub fn neg(self) -> ControlExpr {
        ControlExpr::Neg(Box::new(self))
    }

    pub fn binary(op: BinOp, lhs: ControlExpr, rhs: ControlExpr) -> ControlExpr {
        ControlExpr::Binary(op, Box::new(lhs), Box::new(rhs))
    }

    pub fn call(func: Func, args: Vec<ControlExpr>) -> ControlExpr {
        ControlExpr::Call(func, args)
    }

    pub fn eval<E: Env + ?Sized>(&self, env: &E) -> Result<f64, ExprError> {
        match self {
            ControlExpr::Num(v) => Ok(*v),
            ControlExpr::Var(name) => match env.lookup(name) {
                Some(v) => Ok(v),
                None if name == "pi" => Ok(std::f64::consts::PI),
                None => Err(ExprError::MissingVariable(name.clone())),
            },
            ControlExpr::Neg(inner) => Ok(-inner.eval(env)?),
            ControlExpr::Binary(op, lhs, rhs) => {
                apply_binary(*op, lhs.eval(env)?, rhs.eval(env)?)
            }
            ControlExpr::Call(func, args) => {
                let mut values = [0.0; 3];
                for (slot, arg) in values.iter_mut().zip(args) {
                    *slot = arg.eval(env)?;
                }
                func.apply(&values[..args.len()])
            }
        }
    }

    /// Visits every variable name in the tree.
    pub fn variables(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.walk(&mut |e| {
            if let ControlExpr::Var(name) = e {
                if !out.contains(&name.as_str()) {
                    out.push(name.as_str());
                }
            }
        });
        out
    }

    pub fn is_lipschitz_clean(&self) -> bool {
        let mut clean = true;
        self.walk(&mut |e| {
            if let ControlExpr::Call(func, _) = e {
                clean &= func.is_lipschitz_clean();
            }
        });
        clean
    }

    fn walk<'a>(&'a self, visit: &mut dyn FnMut(&'a ControlExpr)) {
        visit(self);
        match self {
            ControlExpr::Num(_) | ControlExpr::Var(_) => {}
            ControlExpr::Neg(inner) => inner.walk(visit),
            ControlExpr::Binary(_, lhs, rhs) => {
                lhs.walk(visit);
                rhs.walk(visit);
            }
            ControlExpr::Call(_, args) => args.iter().for_each(|a| a.walk(visit)),
        }
    }
}

/// Fully parenthesized rendering; re-parses to the same tree.
impl fmt::Display for ControlExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ControlExpr::Num(v) => write!(f, "{v:?}"),
            ControlExpr::Var(name) => f.write_str(name),
            ControlExpr::Neg(inner) => write!(f, "(-{inner})"),
            ControlExpr::Binary(op, lhs, rhs) => write!(f, "({lhs} {} {rhs})", op.symbol()),
            ControlExpr::Call(func, args) => {
                write!(f, "{}(", func.name())?;
                for (i, arg) in args.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{arg}")?;
                }
                f.write_str(")")
            }
        }
    }
}
