//! The five pendulum systems as first-order vector fields.
//!
//! Mass, rod length and gravity are normalized to 1. In the planar systems
//! `q = 0` and `q = pi` are the horizontal positions of the rod and
//! `q = pi/2` is upright; `q` is not taken modulo `2 pi`.
//!
//! | kind | state | `d/dt` of the velocity |
//! |---|---|---|
//! | `Simple` | `q, p` | `u sin q - cos q` |
//! | `Torque` | `q, p` | `u sin q - cos q + w` |
//! | `Friction` | `q, p` | `u sin q - cos q - nu p` |
//! | `Cart` | `q, p, x, y` | see [`SystemModel::eval_rhs`] |
//! | `Sphere` | `phi, dphi, theta, dtheta` | see [`SystemModel::eval_rhs`] |

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsl::{BoundExpr, Checked, ControlLaw, Controller, ExprError, VarSet};
use crate::linalg::Matrix;

/// Chart degeneracy threshold for the spherical pendulum: `|cos phi|`
/// below this is refused.
pub const SPHERE_SINGULAR_COS: f64 = 1e-6;

/// Residual below which a point counts as a closed-loop equilibrium.
pub const EQUILIBRIUM_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("spherical chart is singular at phi = {phi} (|cos phi| < {SPHERE_SINGULAR_COS})")]
    Singular { phi: f64 },
    #[error("control law evaluation failed: {0}")]
    Control(#[from] ExprError),
    #[error("control `{input}` = {value} exceeds its declared bound {bound} at t = {t}")]
    BoundViolation {
        input: &'static str,
        value: f64,
        bound: f64,
        t: f64,
    },
    #[error("torque law violates `{inequality}` at t = {t} (w = {value})")]
    Inadmissible {
        inequality: &'static str,
        t: f64,
        value: f64,
    },
    #[error("point is not an equilibrium of the closed loop (residual {residual:e})")]
    NotAnEquilibrium { residual: f64 },
    #[error("controller is bound to {found:?} variables but the system needs {expected:?}")]
    ControllerMismatch { expected: VarSet, found: VarSet },
    #[error("state has {found} components, system needs {expected}")]
    Dimension { expected: usize, found: usize },
    #[error("invalid parameter: {0}")]
    Parameter(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SystemKind {
    Simple,
    Torque,
    Friction,
    Sphere,
    Cart,
}

impl SystemKind {
    pub fn dim(self) -> usize {
        match self {
            SystemKind::Sphere | SystemKind::Cart => 4,
            _ => 2,
        }
    }

    pub fn vars(self) -> VarSet {
        match self {
            SystemKind::Sphere => VarSet::Sphere,
            SystemKind::Cart => VarSet::Cart,
            _ => VarSet::Planar,
        }
    }

    pub fn is_planar(self) -> bool {
        self.dim() == 2
    }
}

/// Which azimuth equation the spherical pendulum uses.
///
/// `Verbatim` keeps the `theta' phi' sin(phi) cos(phi)` coefficient at 1,
/// which conserves `theta' cos(phi)` without control. `Standard` uses the
/// coefficient 2 from the Lagrangian, conserving `theta' cos^2(phi)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SphereVariant {
    #[default]
    Verbatim,
    Standard,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PendulumState {
    pub q: f64,
    pub p: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CartState {
    pub q: f64,
    pub p: f64,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SphereState {
    pub phi: f64,
    pub dphi: f64,
    pub theta: f64,
    pub dtheta: f64,
}

impl From<PendulumState> for Vec<f64> {
    fn from(s: PendulumState) -> Self {
        vec![s.q, s.p]
    }
}

impl From<CartState> for Vec<f64> {
    fn from(s: CartState) -> Self {
        vec![s.q, s.p, s.x, s.y]
    }
}

impl From<SphereState> for Vec<f64> {
    fn from(s: SphereState) -> Self {
        vec![s.phi, s.dphi, s.theta, s.dtheta]
    }
}

/// One of the five systems with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemModel {
    pub kind: SystemKind,
    /// Viscous friction `nu` (Friction kind).
    pub friction: f64,
    /// Cart mass `m` (Cart kind).
    pub cart_mass: f64,
    /// Pivot torque `w` (Torque kind).
    pub torque: Option<BoundExpr>,
    pub sphere_variant: SphereVariant,
}

impl SystemModel {
    fn base(kind: SystemKind) -> Self {
        SystemModel {
            kind,
            friction: 0.0,
            cart_mass: 1.0,
            torque: None,
            sphere_variant: SphereVariant::Verbatim,
        }
    }

    pub fn simple() -> Self {
        SystemModel::base(SystemKind::Simple)
    }

    pub fn friction(nu: f64) -> Result<Self, ModelError> {
        if !(nu >= 0.0 && nu.is_finite()) {
            return Err(ModelError::Parameter(format!("friction must be >= 0, got {nu}")));
        }
        Ok(SystemModel {
            friction: nu,
            ..SystemModel::base(SystemKind::Friction)
        })
    }

    pub fn cart(m: f64) -> Result<Self, ModelError> {
        if !(m > 0.0 && m.is_finite()) {
            return Err(ModelError::Parameter(format!("cart mass must be > 0, got {m}")));
        }
        Ok(SystemModel {
            cart_mass: m,
            ..SystemModel::base(SystemKind::Cart)
        })
    }

    pub fn sphere(variant: SphereVariant) -> Self {
        SystemModel {
            sphere_variant: variant,
            ..SystemModel::base(SystemKind::Sphere)
        }
    }

    /// Pendulum with an extra pivot torque `w(q, p, t)`.
    pub fn torque(w: &ControlLaw) -> Result<Self, ModelError> {
        Ok(SystemModel {
            torque: Some(w.bind(VarSet::Planar)?),
            ..SystemModel::base(SystemKind::Torque)
        })
    }

    pub fn dim(&self) -> usize {
        self.kind.dim()
    }

    fn check(&self, controller: &Controller, state: &[f64]) -> Result<(), ModelError> {
        if controller.vars != self.kind.vars() {
            return Err(ModelError::ControllerMismatch {
                expected: self.kind.vars(),
                found: controller.vars,
            });
        }
        if state.len() != self.dim() {
            return Err(ModelError::Dimension {
                expected: self.dim(),
                found: state.len(),
            });
        }
        Ok(())
    }

    /// Closed-loop right-hand side written into `out`.
    ///
    /// Cart, with `D = m + cos^2 q`:
    ///
    /// ```text
    /// p' = (u sin q + p^2 sin q cos q - (1 + m) cos q) / D
    /// y' = (u + p^2 cos q - sin q cos q) / D
    /// ```
    ///
    /// Sphere, with `k = 1` (verbatim) or `k = 2` (standard):
    ///
    /// ```text
    /// phi''   = -cos phi - u sin phi cos theta - v sin phi sin theta
    ///           - theta'^2 cos phi sin phi
    /// theta'' = (k theta' phi' sin phi - u sin theta + v cos theta) / cos phi
    /// ```
    pub fn eval_rhs(
        &self,
        controller: &Controller,
        state: &[f64],
        t: f64,
        out: &mut [f64],
    ) -> Result<(), ModelError> {
        self.check(controller, state)?;
        let u = control(&controller.u, "u", state, t)?;
        match self.kind {
            SystemKind::Simple | SystemKind::Torque | SystemKind::Friction => {
                let (q, p) = (state[0], state[1]);
                let mut acc = u * q.sin() - q.cos();
                match self.kind {
                    SystemKind::Torque => {
                        if let Some(w) = &self.torque {
                            acc += control(w, "w", state, t)?;
                        }
                    }
                    SystemKind::Friction => acc -= self.friction * p,
                    _ => {}
                }
                out[0] = p;
                out[1] = acc;
            }
            SystemKind::Cart => {
                let (q, p, y) = (state[0], state[1], state[3]);
                let m = self.cart_mass;
                let (s, c) = q.sin_cos();
                let d = m + c * c;
                out[0] = p;
                out[1] = (u * s + p * p * s * c - (1.0 + m) * c) / d;
                out[2] = y;
                out[3] = (u + p * p * c - s * c) / d;
            }
            SystemKind::Sphere => {
                let (phi, dphi, theta, dtheta) = (state[0], state[1], state[2], state[3]);
                let (sp, cp) = phi.sin_cos();
                if cp.abs() < SPHERE_SINGULAR_COS {
                    return Err(ModelError::Singular { phi });
                }
                let v = match &controller.v {
                    Some(v) => control(v, "v", state, t)?,
                    None => 0.0,
                };
                let (st, ct) = theta.sin_cos();
                let k = match self.sphere_variant {
                    SphereVariant::Verbatim => 1.0,
                    SphereVariant::Standard => 2.0,
                };
                out[0] = dphi;
                out[1] = -cp - u * sp * ct - v * sp * st - dtheta * dtheta * cp * sp;
                out[2] = dtheta;
                out[3] = (k * dtheta * dphi * sp - u * st + v * ct) / cp;
            }
        }
        Ok(())
    }

    pub fn rhs(&self, controller: &Controller, state: &[f64], t: f64) -> Result<Vec<f64>, ModelError> {
        let mut out = vec![0.0; self.dim()];
        self.eval_rhs(controller, state, t, &mut out)?;
        Ok(out)
    }

    /// Checks `w(0,0,t) < 1` and `w(pi,0,t) > -1` for the Torque kind;
    /// other kinds always pass.
    pub fn check_admissibility(&self, t: f64) -> Result<(), ModelError> {
        let Some(w) = self.torque.as_ref().filter(|_| self.kind == SystemKind::Torque) else {
            return Ok(());
        };
        let left = w.eval_raw(&[0.0, 0.0], t)?;
        if !(left < 1.0) {
            return Err(ModelError::Inadmissible {
                inequality: "w(0,0,t) < 1",
                t,
                value: left,
            });
        }
        let right = w.eval_raw(&[std::f64::consts::PI, 0.0], t)?;
        if !(right > -1.0) {
            return Err(ModelError::Inadmissible {
                inequality: "w(pi,0,t) > -1",
                t,
                value: right,
            });
        }
        Ok(())
    }

    /// Quantities conserved with zero control, by name.
    ///
    /// Simple: energy `p^2/2 + sin q`. Cart: momentum `(m+1) y - p sin q`.
    /// Sphere: `theta' cos phi` (verbatim) or `theta' cos^2 phi` (standard).
    /// Torque and Friction have none.
    pub fn conserved_quantities(&self, state: &[f64]) -> Vec<(&'static str, f64)> {
        match self.kind {
            SystemKind::Simple => {
                vec![("energy", 0.5 * state[1] * state[1] + state[0].sin())]
            }
            SystemKind::Cart => vec![(
                "momentum",
                (self.cart_mass + 1.0) * state[3] - state[1] * state[0].sin(),
            )],
            SystemKind::Sphere => {
                let c = state[0].cos();
                match self.sphere_variant {
                    SphereVariant::Verbatim => vec![("azimuthal", state[3] * c)],
                    SphereVariant::Standard => vec![("azimuthal", state[3] * c * c)],
                }
            }
            SystemKind::Torque | SystemKind::Friction => Vec::new(),
        }
    }
}

fn control(law: &BoundExpr, input: &'static str, state: &[f64], t: f64) -> Result<f64, ModelError> {
    match law.eval_checked(state, t)? {
        Checked::Value(v) => Ok(v),
        Checked::OverBound { value, bound } => Err(ModelError::BoundViolation {
            input,
            value,
            bound,
            t,
        }),
    }
}

/// Jacobian of the closed loop at an equilibrium by central differences
/// with one Richardson extrapolation step (`(4 D(h/2) - D(h)) / 3`).
pub fn linearize(
    model: &SystemModel,
    controller: &Controller,
    point: &[f64],
    t: f64,
    h: f64,
) -> Result<Matrix, ModelError> {
    if !(h > 0.0) {
        return Err(ModelError::Parameter(format!("step h must be > 0, got {h}")));
    }
    let f0 = model.rhs(controller, point, t)?;
    let residual = f0.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if !(residual < EQUILIBRIUM_TOL) {
        return Err(ModelError::NotAnEquilibrium { residual });
    }
    let n = model.dim();
    let central = |j: usize, step: f64| -> Result<Vec<f64>, ModelError> {
        let mut plus = point.to_vec();
        let mut minus = point.to_vec();
        plus[j] += step;
        minus[j] -= step;
        let fp = model.rhs(controller, &plus, t)?;
        let fm = model.rhs(controller, &minus, t)?;
        Ok(fp.iter().zip(&fm).map(|(a, b)| (a - b) / (2.0 * step)).collect())
    };
    let mut a = Matrix::zeros(n);
    for j in 0..n {
        let coarse = central(j, h)?;
        let fine = central(j, h / 2.0)?;
        for i in 0..n {
            a[(i, j)] = (4.0 * fine[i] - coarse[i]) / 3.0;
        }
    }
    Ok(a)
}
