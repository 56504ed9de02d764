use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::expr::{apply_binary, BinOp, ControlExpr, Func};
use super::{parse, ExprError};

/// Variables a controller may reference, fixed by the system it drives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VarSet {
    /// `q, p` (simple, torque and friction pendulums).
    Planar,
    /// `q, p, x, y`.
    Cart,
    /// `phi, dphi, theta, dtheta`.
    Sphere,
}

impl VarSet {
    pub fn names(self) -> &'static [&'static str] {
        match self {
            VarSet::Planar => &["q", "p"],
            VarSet::Cart => &["q", "p", "x", "y"],
            VarSet::Sphere => &["phi", "dphi", "theta", "dtheta"],
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            VarSet::Planar => "planar",
            VarSet::Cart => "cart",
            VarSet::Sphere => "sphere",
        }
    }

    fn slot(self, name: &str) -> Option<Slot> {
        if name == "t" {
            return Some(Slot::Time);
        }
        if name == "pi" {
            return Some(Slot::Const(PI));
        }
        self.names().iter().position(|n| *n == name).map(Slot::State)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Slot {
    State(usize),
    Time,
    Const(f64),
}

/// A control law: an expression plus the metadata the finders rely on.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlLaw {
    pub expr: ControlExpr,
    /// Claimed `|u| <= bound`; checked on every evaluation during a run.
    pub declared_bound: Option<f64>,
    pub declared_period: Option<f64>,
    pub lipschitz_clean: bool,
}

impl ControlLaw {
    pub fn new(expr: ControlExpr) -> Self {
        let lipschitz_clean = expr.is_lipschitz_clean();
        ControlLaw {
            expr,
            declared_bound: None,
            declared_period: None,
            lipschitz_clean,
        }
    }

    pub fn parse(text: &str) -> Result<Self, ExprError> {
        parse(text).map(ControlLaw::new)
    }

    pub fn zero() -> Self {
        ControlLaw::new(ControlExpr::Num(0.0)).with_bound(0.0)
    }

    pub fn with_bound(mut self, bound: f64) -> Self {
        self.declared_bound = Some(bound);
        self
    }

    pub fn with_period(mut self, period: f64) -> Self {
        self.declared_period = Some(period);
        self
    }

    /// Resolves variable names for `vars`. Using a variable that does not
    /// belong to the system is an error here, not at parse time.
    pub fn bind(&self, vars: VarSet) -> Result<BoundExpr, ExprError> {
        Ok(BoundExpr {
            node: compile(&self.expr, vars)?,
            declared_bound: self.declared_bound,
            law: self.clone(),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Num(f64),
    State(usize),
    Time,
    Neg(Box<Node>),
    Binary(BinOp, Box<Node>, Box<Node>),
    Call(Func, Vec<Node>),
}

fn compile(expr: &ControlExpr, vars: VarSet) -> Result<Node, ExprError> {
    Ok(match expr {
        ControlExpr::Num(v) => Node::Num(*v),
        ControlExpr::Var(name) => match vars.slot(name) {
            Some(Slot::State(i)) => Node::State(i),
            Some(Slot::Time) => Node::Time,
            Some(Slot::Const(c)) => Node::Num(c),
            None => {
                return Err(ExprError::IllegalVariable {
                    name: name.clone(),
                    system: vars.label(),
                })
            }
        },
        ControlExpr::Neg(inner) => Node::Neg(Box::new(compile(inner, vars)?)),
        ControlExpr::Binary(op, l, r) => {
            Node::Binary(*op, Box::new(compile(l, vars)?), Box::new(compile(r, vars)?))
        }
        ControlExpr::Call(f, args) => Node::Call(
            *f,
            args.iter()
                .map(|a| compile(a, vars))
                .collect::<Result<_, _>>()?,
        ),
    })
}

impl Node {
    fn eval(&self, state: &[f64], t: f64) -> Result<f64, ExprError> {
        match self {
            Node::Num(v) => Ok(*v),
            Node::State(i) => Ok(state[*i]),
            Node::Time => Ok(t),
            Node::Neg(inner) => Ok(-inner.eval(state, t)?),
            Node::Binary(op, l, r) => apply_binary(*op, l.eval(state, t)?, r.eval(state, t)?),
            Node::Call(f, args) => {
                let mut values = [0.0; 3];
                for (slot, arg) in values.iter_mut().zip(args) {
                    *slot = arg.eval(state, t)?;
                }
                f.apply(&values[..args.len()])
            }
        }
    }
}

/// A control law compiled against a state layout.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundExpr {
    node: Node,
    declared_bound: Option<f64>,
    law: ControlLaw,
}

impl BoundExpr {
    /// Evaluates without the bound check.
    pub fn eval_raw(&self, state: &[f64], t: f64) -> Result<f64, ExprError> {
        self.node.eval(state, t)
    }

    pub fn law(&self) -> &ControlLaw {
        &self.law
    }
}

/// The control inputs of a closed loop: `u`, plus `v` for the spherical
/// pendulum.
#[derive(Debug, Clone, PartialEq)]
pub struct Controller {
    pub vars: VarSet,
    pub u: BoundExpr,
    pub v: Option<BoundExpr>,
}

impl Controller {
    pub fn new(vars: VarSet, u: &ControlLaw) -> Result<Self, ExprError> {
        Ok(Controller {
            vars,
            u: u.bind(vars)?,
            v: None,
        })
    }

    pub fn with_v(mut self, v: &ControlLaw) -> Result<Self, ExprError> {
        self.v = Some(v.bind(self.vars)?);
        Ok(self)
    }

    pub fn zero(vars: VarSet) -> Self {
        Controller::new(vars, &ControlLaw::zero()).expect("zero binds everywhere")
    }

    pub fn from_text(vars: VarSet, u: &str) -> Result<Self, ExprError> {
        Controller::new(vars, &ControlLaw::parse(u)?)
    }

    pub fn lipschitz_clean(&self) -> bool {
        self.u.law.lipschitz_clean && self.v.as_ref().is_none_or(|v| v.law.lipschitz_clean)
    }

    /// Declared period of the loop, if any input declares one.
    pub fn declared_period(&self) -> Option<f64> {
        self.u
            .law
            .declared_period
            .or_else(|| self.v.as_ref().and_then(|v| v.law.declared_period))
    }

    pub fn declared_bound(&self) -> Option<f64> {
        let u = self.u.declared_bound?;
        match &self.v {
            Some(v) => Some(u.max(v.declared_bound?)),
            None => Some(u),
        }
    }
}

/// Outcome of [`BoundExpr::eval_checked`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Checked {
    Value(f64),
    OverBound { value: f64, bound: f64 },
}

impl BoundExpr {
    pub(crate) fn eval_checked(&self, state: &[f64], t: f64) -> Result<Checked, ExprError> {
        let value = self.node.eval(state, t)?;
        match self.declared_bound {
            Some(bound) if value.abs() > bound + 1e-12 => Ok(Checked::OverBound { value, bound }),
            _ => Ok(Checked::Value(value)),
        }
    }
}

fn bad(name: &str, reason: impl Into<String>) -> ExprError {
    ExprError::BadParameter {
        name: name.to_string(),
        reason: reason.into(),
    }
}

fn var(name: &str) -> ControlExpr {
    ControlExpr::var(name)
}

fn mul(a: ControlExpr, b: ControlExpr) -> ControlExpr {
    ControlExpr::binary(BinOp::Mul, a, b)
}

fn sub(a: ControlExpr, b: ControlExpr) -> ControlExpr {
    ControlExpr::binary(BinOp::Sub, a, b)
}

fn num(v: f64) -> ControlExpr {
    ControlExpr::num(v)
}

fn pd_expr(kp: f64, kd: f64, q_ref: f64) -> ControlExpr {
    sub(
        mul(num(-kp), sub(var("q"), num(q_ref))),
        mul(num(kd), var("p")),
    )
}

fn sat(e: ControlExpr, bound: f64) -> ControlExpr {
    ControlExpr::call(Func::Sat, vec![e, num(-bound), num(bound)])
}

/// Built-in controllers.
///
/// | name | params | law |
/// |---|---|---|
/// | `zero` | | `0` |
/// | `constant` | `c` | `c` |
/// | `pd` | `k_p, k_d, q_ref` | `-k_p (q - q_ref) - k_d p` |
/// | `saturated_pd` | `k_p, k_d, q_ref, U` | `sat(pd, -U, U)` |
/// | `energy_swingup` | `k, U` | `sat(-k (p^2/2 + sin q - 1) p sin q, -U, U)` |
/// | `periodic_forcing` | `A, omega` | `A sin(omega t)` |
///
/// The swing-up law pumps the energy `p^2/2 + sin q` toward its upright
/// value 1; along the closed loop `dE/dt = u p sin q`.
pub fn builtin(name: &str, params: &[f64]) -> Result<ControlLaw, ExprError> {
    let want = |n: usize| {
        if params.len() == n {
            Ok(())
        } else {
            Err(bad(name, format!("expected {n} parameter(s), got {}", params.len())))
        }
    };
    if params.iter().any(|v| !v.is_finite()) {
        return Err(bad(name, "parameters must be finite"));
    }
    let positive_bound = |u: f64| {
        if u > 0.0 {
            Ok(u)
        } else {
            Err(bad(name, format!("bound U must be positive, got {u}")))
        }
    };
    let law = match name {
        "zero" => {
            want(0)?;
            ControlLaw::zero()
        }
        "constant" => {
            want(1)?;
            ControlLaw::new(num(params[0])).with_bound(params[0].abs())
        }
        "pd" => {
            want(3)?;
            ControlLaw::new(pd_expr(params[0], params[1], params[2]))
        }
        "saturated_pd" => {
            want(4)?;
            let u = positive_bound(params[3])?;
            ControlLaw::new(sat(pd_expr(params[0], params[1], params[2]), u)).with_bound(u)
        }
        "energy_swingup" => {
            want(2)?;
            let u = positive_bound(params[1])?;
            let energy = ControlExpr::binary(
                BinOp::Add,
                ControlExpr::binary(
                    BinOp::Div,
                    ControlExpr::binary(BinOp::Pow, var("p"), num(2.0)),
                    num(2.0),
                ),
                ControlExpr::call(Func::Sin, vec![var("q")]),
            );
            let raw = mul(
                mul(mul(num(-params[0]), sub(energy, num(1.0))), var("p")),
                ControlExpr::call(Func::Sin, vec![var("q")]),
            );
            ControlLaw::new(sat(raw, u)).with_bound(u)
        }
        "periodic_forcing" => {
            want(2)?;
            let (amp, omega) = (params[0], params[1]);
            if omega <= 0.0 {
                return Err(bad(name, format!("omega must be positive, got {omega}")));
            }
            let law = ControlLaw::new(mul(
                num(amp),
                ControlExpr::call(Func::Sin, vec![mul(num(omega), var("t"))]),
            ));
            law.with_bound(amp.abs()).with_period(2.0 * PI / omega)
        }
        other => return Err(ExprError::UnknownBuiltin(other.to_string())),
    };
    Ok(law)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn builtin_examples() {
        let zero = builtin("zero", &[]).unwrap();
        assert_eq!(zero.declared_bound, Some(0.0));
        let z = zero.bind(VarSet::Planar).unwrap();
        assert_eq!(z.eval_raw(&[1.0, 2.0], 3.0).unwrap(), 0.0);

        let forcing = builtin("periodic_forcing", &[0.5, 2.0 * PI]).unwrap();
        assert_eq!(forcing.declared_period, Some(1.0));
        assert_eq!(forcing.declared_bound, Some(0.5));
        let f = forcing.bind(VarSet::Planar).unwrap();
        let t = 0.1;
        assert_eq!(
            f.eval_raw(&[0.0, 0.0], t).unwrap(),
            0.5 * (2.0 * PI * t).sin()
        );

        let pd = builtin("pd", &[2.0, 1.0, FRAC_PI_2]).unwrap().bind(VarSet::Planar).unwrap();
        assert_eq!(pd.eval_raw(&[FRAC_PI_2, 0.0], 0.0).unwrap(), 0.0);
        assert_eq!(pd.eval_raw(&[FRAC_PI_2 + 0.5, 1.0], 0.0).unwrap(), -2.0);

        let c = builtin("constant", &[-0.25]).unwrap();
        assert_eq!(c.declared_bound, Some(0.25));
        assert_eq!(c.bind(VarSet::Cart).unwrap().eval_raw(&[0.0; 4], 0.0).unwrap(), -0.25);
    }

    #[test]
    fn builtin_errors() {
        assert!(matches!(builtin("lqr", &[]), Err(ExprError::UnknownBuiltin(_))));
        assert!(matches!(builtin("saturated_pd", &[1.0, 1.0, 1.0, 0.0]), Err(ExprError::BadParameter { .. })));
        assert!(matches!(builtin("energy_swingup", &[1.0, -1.0]), Err(ExprError::BadParameter { .. })));
        assert!(matches!(builtin("pd", &[1.0]), Err(ExprError::BadParameter { .. })));
        assert!(matches!(builtin("periodic_forcing", &[1.0, 0.0]), Err(ExprError::BadParameter { .. })));
    }

    #[test]
    fn per_system_variables_checked_at_bind() {
        let law = ControlLaw::parse("x + q").unwrap();
        assert!(matches!(
            law.bind(VarSet::Planar),
            Err(ExprError::IllegalVariable { ref name, .. }) if name == "x"
        ));
        assert!(law.bind(VarSet::Cart).is_ok());
        assert!(ControlLaw::parse("q").unwrap().bind(VarSet::Sphere).is_err());
        assert!(ControlLaw::parse("phi*dtheta + t + pi").unwrap().bind(VarSet::Sphere).is_ok());
    }

    #[test]
    fn bound_check_flags_violations() {
        let law = ControlLaw::parse("q").unwrap().with_bound(1.0);
        let b = law.bind(VarSet::Planar).unwrap();
        assert_eq!(b.eval_checked(&[0.5, 0.0], 0.0).unwrap(), Checked::Value(0.5));
        assert!(matches!(
            b.eval_checked(&[1.5, 0.0], 0.0).unwrap(),
            Checked::OverBound { .. }
        ));
    }

    #[test]
    fn printed_builtins_reparse() {
        for (name, params) in [
            ("pd", vec![2.0, 1.0, FRAC_PI_2]),
            ("saturated_pd", vec![3.0, 0.5, 1.0, 2.0]),
            ("energy_swingup", vec![0.7, 1.5]),
            ("periodic_forcing", vec![-0.5, 3.0]),
        ] {
            let law = builtin(name, &params).unwrap();
            let reparsed = parse(&law.expr.to_string()).unwrap();
            assert_eq!(reparsed, law.expr, "{name}");
        }
    }
}
