//! First-exit classification of trajectories from `(M \ B) x time`.
//!
//! Planar and cart systems live in `M = {0 < q < pi}` and leave through
//! `{q = 0, p <= 0}` or `{q = pi, p >= 0}`; the sphere lives in
//! `{phi > 0}` and leaves through `{phi = 0, dphi <= 0}`. A capture region
//! `B` adds a third way out.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsl::Controller;
use crate::integrator::{
    integrate_closed_loop, DenseTrajectory, Direction, EventSpec, IntegrateError, IntegratorConfig,
};
use crate::linalg::Matrix;
use crate::lyapunov::LyapunovRegion;
use crate::models::{ModelError, SystemKind, SystemModel, SPHERE_SINGULAR_COS};

/// Boundary hits with `|normal velocity|` at or below this go through the
/// tangency rule.
pub const TANGENCY_TOL: f64 = 1e-9;
/// Relative tolerance for "on the capture boundary" at the initial time.
pub const CAPTURE_SURFACE_TOL: f64 = 1e-9;
/// Distance of the perturbed starts used by [`openness_check`].
pub const OPENNESS_RADIUS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FateTag {
    ExitLeft,
    ExitRight,
    ExitBoundary,
    Captured,
    Survived,
    Singular,
    Inconclusive,
}

impl FateTag {
    pub fn is_exit(self) -> bool {
        matches!(self, FateTag::ExitLeft | FateTag::ExitRight | FateTag::ExitBoundary)
    }

    /// Tags that may sit at either end of a bisection bracket.
    pub fn is_bracketable(self) -> bool {
        !matches!(self, FateTag::Survived | FateTag::Inconclusive)
    }

    pub fn name(self) -> &'static str {
        match self {
            FateTag::ExitLeft => "ExitLeft",
            FateTag::ExitRight => "ExitRight",
            FateTag::ExitBoundary => "ExitBoundary",
            FateTag::Captured => "Captured",
            FateTag::Survived => "Survived",
            FateTag::Singular => "Singular",
            FateTag::Inconclusive => "Inconclusive",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fate {
    pub tag: FateTag,
    pub t_event: f64,
    pub state_event: Vec<f64>,
    /// Time spent in `M \ B`; the horizon for survivors.
    pub exit_time_proxy: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

impl Fate {
    fn at(tag: FateTag, t0: f64, t: f64, state: Vec<f64>) -> Self {
        Fate {
            tag,
            t_event: t,
            state_event: state,
            exit_time_proxy: t - t0,
            detail: None,
        }
    }

    fn inconclusive(t0: f64, t: f64, state: Vec<f64>, detail: String) -> Self {
        Fate {
            detail: Some(detail),
            ..Fate::at(FateTag::Inconclusive, t0, t, state)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FateError {
    #[error("initial state is not in M \\ B: {0}")]
    PreconditionViolated(String),
    #[error("invalid capture region: {0}")]
    InvalidCapture(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Integrator(IntegrateError),
}

/// The admissible set `M` for a system kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RegionSpec {
    pub kind: SystemKind,
}

impl RegionSpec {
    pub fn new(kind: SystemKind) -> Self {
        RegionSpec { kind }
    }

    /// Bounds on the first coordinate; the sphere has no upper bound.
    pub fn interval(self) -> (f64, f64) {
        match self.kind {
            SystemKind::Sphere => (0.0, f64::INFINITY),
            _ => (0.0, PI),
        }
    }

    pub fn contains(self, state: &[f64]) -> bool {
        let (lo, hi) = self.interval();
        state[0] > lo && state[0] < hi
    }

    pub fn contains_closure(self, state: &[f64]) -> bool {
        let (lo, hi) = self.interval();
        state[0] >= lo && state[0] <= hi
    }

    /// Distance of the first coordinate to the boundary of `M`.
    pub fn boundary_distance(self, state: &[f64]) -> f64 {
        let (lo, hi) = self.interval();
        (state[0] - lo).min(hi - state[0])
    }
}

/// `{(q, p) : ((q, p) - center)^T P ((q, p) - center) <= eps} x R^2` for the
/// cart; `x` and `y` are free.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CylinderRegion {
    pub center: [f64; 2],
    #[serde(rename = "P")]
    pub p: Matrix,
    pub eps: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum CaptureRegion {
    #[default]
    None,
    Ball(LyapunovRegion),
    Cylinder(CylinderRegion),
}

impl CaptureRegion {
    /// `V(state)` and the level `eps`, if there is a region.
    pub fn level(&self, state: &[f64]) -> Option<(f64, f64)> {
        match self {
            CaptureRegion::None => None,
            CaptureRegion::Ball(r) => Some((r.value(state), r.eps)),
            CaptureRegion::Cylinder(c) => Some((c.p.quadratic(&state[..2], &c.center), c.eps)),
        }
    }

    pub fn contains(&self, state: &[f64]) -> bool {
        self.level(state).is_some_and(|(v, eps)| v <= eps)
    }

    /// Time derivative of `V` along the closed loop.
    pub fn rate(
        &self,
        model: &SystemModel,
        controller: &Controller,
        state: &[f64],
        t: f64,
    ) -> Result<f64, ModelError> {
        let (center, p): (&[f64], &Matrix) = match self {
            CaptureRegion::None => return Ok(0.0),
            CaptureRegion::Ball(r) => (&r.center, &r.p),
            CaptureRegion::Cylinder(c) => (&c.center, &c.p),
        };
        let f = model.rhs(controller, state, t)?;
        let k = center.len();
        let d: Vec<f64> = state[..k].iter().zip(center).map(|(a, b)| a - b).collect();
        let pf = p.mul_vec(&f[..k]);
        Ok(2.0 * d.iter().zip(&pf).map(|(a, b)| a * b).sum::<f64>())
    }

    /// Dimension, definiteness and `{V <= eps}` strictly inside `M`.
    pub fn validate(&self, kind: SystemKind) -> Result<(), FateError> {
        let bad = |s: String| Err(FateError::InvalidCapture(s));
        match self {
            CaptureRegion::None => Ok(()),
            CaptureRegion::Ball(r) => {
                if r.center.len() != kind.dim() {
                    return bad(format!(
                        "ball has dimension {}, system needs {}",
                        r.center.len(),
                        kind.dim()
                    ));
                }
                let checked = LyapunovRegion::new(r.center.clone(), r.p.clone(), r.eps)
                    .map_err(|e| FateError::InvalidCapture(e.to_string()))?;
                checked
                    .check_inside(kind)
                    .map_err(|e| FateError::InvalidCapture(e.to_string()))
            }
            CaptureRegion::Cylinder(c) => {
                if kind != SystemKind::Cart {
                    return bad("cylinder capture regions apply to the cart only".into());
                }
                if c.p.dim() != 2 {
                    return bad("cylinder form must be 2x2".into());
                }
                let checked = LyapunovRegion::new(c.center.to_vec(), c.p.clone(), c.eps)
                    .map_err(|e| FateError::InvalidCapture(e.to_string()))?;
                checked
                    .check_inside(SystemKind::Cart)
                    .map_err(|e| FateError::InvalidCapture(e.to_string()))
            }
        }
    }
}

/// Normal acceleration (`q''` or `phi''`) of the closed loop at a boundary
/// point with zero normal velocity.
pub fn tangency_probe(
    model: &SystemModel,
    controller: &Controller,
    boundary_point: &[f64],
    t: f64,
) -> Result<f64, ModelError> {
    Ok(model.rhs(controller, boundary_point, t)?[1])
}

/// A fate together with the trajectory that produced it (absent when the
/// fate was decided at `t0`).
#[derive(Debug, Clone)]
pub struct Classification {
    pub fate: Fate,
    pub trajectory: Option<DenseTrajectory>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Boundary {
    Left,
    Right,
    Sphere,
}

impl Boundary {
    fn tag(self) -> FateTag {
        match self {
            Boundary::Left => FateTag::ExitLeft,
            Boundary::Right => FateTag::ExitRight,
            Boundary::Sphere => FateTag::ExitBoundary,
        }
    }

    fn coordinate(self) -> f64 {
        match self {
            Boundary::Right => PI,
            _ => 0.0,
        }
    }

    /// Outward sign of the normal velocity.
    fn outward(self) -> f64 {
        match self {
            Boundary::Right => 1.0,
            _ => -1.0,
        }
    }
}

/// Decides a fate on the boundary from the normal velocity and, when it is
/// below [`TANGENCY_TOL`], the tangency probe. `None` means the trajectory
/// moves into `M`.
fn boundary_fate(
    model: &SystemModel,
    controller: &Controller,
    side: Boundary,
    state: &[f64],
    t: f64,
) -> Result<Option<(FateTag, Vec<f64>)>, ModelError> {
    model.check_admissibility(t)?;
    let mut snapped = state.to_vec();
    snapped[0] = side.coordinate();
    let v = side.outward() * state[1];
    if v > TANGENCY_TOL {
        return Ok(Some((side.tag(), snapped)));
    }
    if v < -TANGENCY_TOL {
        return Ok(None);
    }
    snapped[1] = 0.0;
    let accel = side.outward() * tangency_probe(model, controller, &snapped, t)?;
    Ok((accel > 0.0).then_some((side.tag(), snapped)))
}

/// Classifies the solution through `state0` at `t0` by its first exit
/// from `M \ B` within `horizon`.
pub fn classify(
    model: &SystemModel,
    controller: &Controller,
    state0: &[f64],
    t0: f64,
    horizon: f64,
    capture: &CaptureRegion,
    config: &IntegratorConfig,
) -> Result<Fate, FateError> {
    classify_detailed(model, controller, state0, t0, horizon, capture, config).map(|c| c.fate)
}

pub fn classify_detailed(
    model: &SystemModel,
    controller: &Controller,
    state0: &[f64],
    t0: f64,
    horizon: f64,
    capture: &CaptureRegion,
    config: &IntegratorConfig,
) -> Result<Classification, FateError> {
    let n = model.dim();
    if state0.len() != n {
        return Err(ModelError::Dimension {
            expected: n,
            found: state0.len(),
        }
        .into());
    }
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(FateError::PreconditionViolated(format!(
            "horizon must be positive, got {horizon}"
        )));
    }
    if state0.iter().any(|v| !v.is_finite()) {
        return Err(FateError::PreconditionViolated("state is not finite".into()));
    }
    config.validate().map_err(FateError::Integrator)?;
    capture.validate(model.kind)?;
    model.check_admissibility(t0)?;

    let decided = |tag, state: Vec<f64>| Classification {
        fate: Fate::at(tag, t0, t0, state),
        trajectory: None,
    };
    let region = RegionSpec::new(model.kind);
    if !region.contains_closure(state0) {
        return Err(FateError::PreconditionViolated(format!(
            "first coordinate {} is outside the closure of M",
            state0[0]
        )));
    }
    let sphere = model.kind == SystemKind::Sphere;
    if sphere && state0[0].cos().abs() < SPHERE_SINGULAR_COS {
        return Ok(decided(FateTag::Singular, state0.to_vec()));
    }
    let start_side = if state0[0] == 0.0 {
        Some(if sphere { Boundary::Sphere } else { Boundary::Left })
    } else if !sphere && state0[0] == PI {
        Some(Boundary::Right)
    } else {
        None
    };
    if let Some(side) = start_side {
        if let Some((tag, state)) = boundary_fate(model, controller, side, state0, t0)? {
            return Ok(decided(tag, state));
        }
    }
    if let Some((v, eps)) = capture.level(state0) {
        let rel = (v - eps) / eps;
        if rel < -CAPTURE_SURFACE_TOL {
            return Err(FateError::PreconditionViolated(format!(
                "initial state is inside the capture region (V = {v}, eps = {eps})"
            )));
        }
        if rel <= CAPTURE_SURFACE_TOL && capture.rate(model, controller, state0, t0)? < 0.0 {
            return Ok(decided(FateTag::Captured, state0.to_vec()));
        }
    }

    let mut events = Vec::new();
    let mut kinds = Vec::new();
    if sphere {
        events.push(EventSpec::new("phi=0", Direction::Decreasing, true, |y, _| y[0]));
        kinds.push(Some(Boundary::Sphere));
        // Signed so that crossing phi = pi/2 changes sign.
        events.push(EventSpec::new("singular", Direction::Decreasing, true, |y, _| {
            y[0].cos() - SPHERE_SINGULAR_COS
        }));
        kinds.push(None);
    } else {
        events.push(EventSpec::new("q=0", Direction::Decreasing, true, |y, _| y[0]));
        kinds.push(Some(Boundary::Left));
        events.push(EventSpec::new("q=pi", Direction::Increasing, true, |y, _| y[0] - PI));
        kinds.push(Some(Boundary::Right));
    }
    let capture_index = events.len();
    if !matches!(capture, CaptureRegion::None) {
        let region = capture.clone();
        events.push(EventSpec::new("capture", Direction::Decreasing, true, move |y, _| {
            let (v, eps) = region.level(y).expect("capture region present");
            v - eps
        }));
    }

    let t_end = t0 + horizon;
    let run = match integrate_closed_loop(model, controller, state0, t0, t_end, &events, config) {
        Ok(run) => run,
        Err(err) => return fate_from_error(err, t0, state0),
    };
    let Some(hit) = run.terminal.clone() else {
        return Ok(Classification {
            fate: Fate::at(FateTag::Survived, t0, t_end, run.trajectory.end_state().to_vec()),
            trajectory: Some(run.trajectory),
        });
    };
    let fate = if hit.index == capture_index {
        Fate::at(FateTag::Captured, t0, hit.t, hit.state)
    } else if let Some(side) = kinds[hit.index] {
        match boundary_fate(model, controller, side, &hit.state, hit.t)? {
            Some((tag, state)) => Fate::at(tag, t0, hit.t, state),
            None => Fate::inconclusive(
                t0,
                hit.t,
                hit.state.clone(),
                format!(
                    "boundary event `{}` with inward velocity {}",
                    hit.name, hit.state[1]
                ),
            ),
        }
    } else {
        Fate::at(FateTag::Singular, t0, hit.t, hit.state)
    };
    Ok(Classification {
        fate,
        trajectory: Some(run.trajectory),
    })
}

fn fate_from_error(err: IntegrateError, t0: f64, state0: &[f64]) -> Result<Classification, FateError> {
    let fate = match err {
        IntegrateError::StepBudgetExceeded { t, .. } => {
            Fate::inconclusive(t0, t, state0.to_vec(), err.to_string())
        }
        IntegrateError::StepUnderflow { t, ref state, .. } => {
            Fate::inconclusive(t0, t, state.clone(), err.to_string())
        }
        IntegrateError::Model {
            t,
            source: ModelError::Singular { phi },
        } => {
            let mut state = state0.to_vec();
            state[0] = phi;
            Fate {
                detail: Some("chart degenerated during integration".into()),
                ..Fate::at(FateTag::Singular, t0, t, state)
            }
        }
        IntegrateError::Model { source, .. } => return Err(FateError::Model(source)),
        other => return Err(FateError::Integrator(other)),
    };
    Ok(Classification {
        fate,
        trajectory: None,
    })
}

/// Re-checks the field invariants of an exit or capture fate.
pub fn check_fate_invariants(fate: &Fate, capture: &CaptureRegion) -> Result<(), String> {
    let s = &fate.state_event;
    let ok = match fate.tag {
        FateTag::ExitLeft => s[0] == 0.0 && s[1] <= 0.0,
        FateTag::ExitRight => s[0] == PI && s[1] >= 0.0,
        FateTag::ExitBoundary => s[0] == 0.0 && s[1] <= 0.0,
        FateTag::Captured => capture
            .level(s)
            .is_some_and(|(v, eps)| v <= eps * (1.0 + CAPTURE_SURFACE_TOL)),
        _ => true,
    };
    if ok {
        Ok(())
    } else {
        Err(format!("{:?} violates its invariant at {s:?}", fate.tag))
    }
}

/// Unit perturbation directions: axes and diagonals in 2D, `+-e_i` in 4D.
pub fn perturbation_directions(dim: usize) -> Vec<Vec<f64>> {
    let mut dirs = Vec::with_capacity(8);
    for i in 0..dim {
        for sign in [1.0, -1.0] {
            let mut d = vec![0.0; dim];
            d[i] = sign;
            dirs.push(d);
        }
    }
    if dim == 2 {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        for (a, b) in [(h, h), (h, -h), (-h, h), (-h, -h)] {
            dirs.push(vec![a, b]);
        }
    }
    dirs
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpennessReport {
    pub tag: FateTag,
    pub perturbed: Vec<FateTag>,
    pub agree: bool,
}

/// Classifies `state0` and 8 starts at distance [`OPENNESS_RADIUS`].
pub fn openness_check(
    model: &SystemModel,
    controller: &Controller,
    state0: &[f64],
    t0: f64,
    horizon: f64,
    capture: &CaptureRegion,
    config: &IntegratorConfig,
) -> Result<OpennessReport, FateError> {
    let tag = classify(model, controller, state0, t0, horizon, capture, config)?.tag;
    let mut perturbed = Vec::new();
    for d in perturbation_directions(state0.len()) {
        let x: Vec<f64> = state0.iter().zip(&d).map(|(a, b)| a + OPENNESS_RADIUS * b).collect();
        perturbed.push(classify(model, controller, &x, t0, horizon, capture, config)?.tag);
    }
    let agree = perturbed.iter().all(|t| *t == tag);
    Ok(OpennessReport {
        tag,
        perturbed,
        agree,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::{builtin, ControlLaw, VarSet};
    use crate::lyapunov::build_region;
    use crate::models::SphereVariant;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

    fn cfg() -> IntegratorConfig {
        IntegratorConfig::default()
    }

    fn zero() -> Controller {
        Controller::zero(VarSet::Planar)
    }

    #[test]
    fn classify_examples() {
        let m = SystemModel::simple();
        let none = CaptureRegion::None;
        let f = classify(&m, &zero(), &[0.0, 0.0], 0.0, 10.0, &none, &cfg()).unwrap();
        assert_eq!(f.tag, FateTag::ExitLeft);
        assert_eq!(f.t_event, 0.0);
        assert_eq!(f.exit_time_proxy, 0.0);

        let f = classify(&m, &zero(), &[FRAC_PI_2, 0.0], 0.0, 50.0, &none, &cfg()).unwrap();
        assert_eq!(f.tag, FateTag::Survived);
        assert_eq!(f.exit_time_proxy, 50.0);

        let f = classify(&m, &zero(), &[FRAC_PI_4, 2.0], 0.0, 50.0, &none, &cfg()).unwrap();
        assert_eq!(f.tag, FateTag::ExitRight);
        check_fate_invariants(&f, &none).unwrap();
        assert!(f.state_event[1] > 1.0);
    }

    #[test]
    fn hit_time_matches_quadrature() {
        // From (pi/2, 2) the energy is 3, so the time to reach pi is
        // the integral of dq / sqrt(2 (3 - sin q)) over [pi/2, pi].
        let m = SystemModel::simple();
        let f = classify(&m, &zero(), &[FRAC_PI_2, 2.0], 0.0, 10.0, &CaptureRegion::None, &cfg())
            .unwrap();
        assert_eq!(f.tag, FateTag::ExitRight);
        assert!((f.t_event - 0.726945935468908198).abs() < 1e-8, "{}", f.t_event);
    }

    #[test]
    fn tangency_examples() {
        let simple = SystemModel::simple();
        let pd = Controller::new(VarSet::Planar, &builtin("pd", &[5.0, 1.0, 1.0]).unwrap()).unwrap();
        assert_eq!(tangency_probe(&simple, &pd, &[0.0, 0.0], 0.3).unwrap(), -1.0);

        let torque = SystemModel::torque(&ControlLaw::parse("0.5").unwrap()).unwrap();
        assert_eq!(tangency_probe(&torque, &zero(), &[0.0, 0.0], 0.0).unwrap(), -0.5);

        let cart = SystemModel::cart(1.0).unwrap();
        let u = Controller::from_text(VarSet::Cart, "3*x + y").unwrap();
        let a = tangency_probe(&cart, &u, &[PI, 0.0, 0.4, -1.0], 0.0).unwrap();
        assert!((a - 1.0).abs() < 1e-15, "{a}");
    }

    #[test]
    fn start_on_boundary() {
        let m = SystemModel::simple();
        let none = CaptureRegion::None;
        let f = classify(&m, &zero(), &[PI, 0.0], 0.0, 5.0, &none, &cfg()).unwrap();
        assert_eq!((f.tag, f.t_event), (FateTag::ExitRight, 0.0));
        let f = classify(&m, &zero(), &[0.0, -0.3], 0.0, 5.0, &none, &cfg()).unwrap();
        assert_eq!(f.tag, FateTag::ExitLeft);
        // Entering at q = 0 with enough speed to cross the hump.
        let f = classify(&m, &zero(), &[0.0, 2.0], 0.0, 20.0, &none, &cfg()).unwrap();
        assert_eq!(f.tag, FateTag::ExitRight);
        assert!(classify(&m, &zero(), &[-0.1, 0.0], 0.0, 5.0, &none, &cfg()).is_err());
        assert!(classify(&m, &zero(), &[1.0, 0.0], 0.0, 0.0, &none, &cfg()).is_err());
    }

    #[test]
    fn torque_admissibility_is_enforced() {
        let bad = SystemModel::torque(&ControlLaw::parse("1.5*sin(t)").unwrap()).unwrap();
        let err = classify(&bad, &zero(), &[1.0, 0.0], 1.0, 5.0, &CaptureRegion::None, &cfg());
        assert!(matches!(err, Err(FateError::Model(ModelError::Inadmissible { .. }))), "{err:?}");
    }

    #[test]
    fn capture_and_region_checks() {
        let m = SystemModel::simple();
        let pd = Controller::new(VarSet::Planar, &builtin("pd", &[2.0, 1.0, FRAC_PI_2]).unwrap()).unwrap();
        let region = build_region(&m, &pd, &[FRAC_PI_2, 0.0], 0.0).unwrap();
        let w = region.extent(0);
        let capture = CaptureRegion::Ball(region.clone());
        let f = classify(&m, &pd, &[FRAC_PI_2 - w - 0.05, 0.0], 0.0, 50.0, &capture, &cfg()).unwrap();
        assert_eq!(f.tag, FateTag::Captured);
        check_fate_invariants(&f, &capture).unwrap();
        assert!(f.t_event > 0.0);

        let inside = classify(&m, &pd, &[FRAC_PI_2, 0.0], 0.0, 5.0, &capture, &cfg());
        assert!(matches!(inside, Err(FateError::PreconditionViolated(_))));

        let mut big = region;
        big.eps *= 1e4;
        let err = classify(&m, &pd, &[0.2, 0.0], 0.0, 5.0, &CaptureRegion::Ball(big), &cfg());
        assert!(matches!(err, Err(FateError::InvalidCapture(_))));

        let cyl = CaptureRegion::Cylinder(CylinderRegion {
            center: [FRAC_PI_2, 0.0],
            p: Matrix::identity(2),
            eps: 0.01,
        });
        let err = classify(&m, &pd, &[0.5, 0.0], 0.0, 5.0, &cyl, &cfg());
        assert!(matches!(err, Err(FateError::InvalidCapture(_))));
    }

    #[test]
    fn start_on_capture_surface_with_inward_rate() {
        let m = SystemModel::simple();
        let pd = Controller::new(VarSet::Planar, &builtin("pd", &[2.0, 1.0, FRAC_PI_2]).unwrap()).unwrap();
        let region = build_region(&m, &pd, &[FRAC_PI_2, 0.0], 0.0).unwrap();
        let capture = CaptureRegion::Ball(region.clone());
        let chol = region.p.cholesky().unwrap();
        let whiten = chol.transpose().inverse().unwrap();
        for k in 0..10 {
            let a = k as f64 * 0.628;
            let d = whiten.mul_vec(&[a.cos(), a.sin()]);
            let s = region.eps.sqrt();
            let x = [FRAC_PI_2 + s * d[0], s * d[1]];
            let f = classify(&m, &pd, &x, 0.0, 20.0, &capture, &cfg()).unwrap();
            assert_eq!(f.tag, FateTag::Captured);
        }
    }

    #[test]
    fn cylinder_capture_for_cart() {
        let cart = SystemModel::cart(1.0).unwrap();
        let u = Controller::from_text(VarSet::Cart, "-9*(q - pi/2) - 5*p").unwrap();
        let cyl = CaptureRegion::Cylinder(CylinderRegion {
            center: [FRAC_PI_2, 0.0],
            p: Matrix::identity(2),
            eps: 0.01,
        });
        let f = classify(&cart, &u, &[FRAC_PI_2 + 0.3, 0.0, 5.0, 1.0], 0.0, 30.0, &cyl, &cfg())
            .unwrap();
        assert_eq!(f.tag, FateTag::Captured);
        check_fate_invariants(&f, &cyl).unwrap();
    }

    #[test]
    fn sphere_fates() {
        let s = SystemModel::sphere(SphereVariant::Verbatim);
        let z = Controller::zero(VarSet::Sphere);
        let none = CaptureRegion::None;
        let f = classify(&s, &z, &[0.3, -0.5, 0.0, 0.0], 0.0, 20.0, &none, &cfg()).unwrap();
        assert_eq!(f.tag, FateTag::ExitBoundary);
        check_fate_invariants(&f, &none).unwrap();
        let f = classify(&s, &z, &[0.3, 2.0, 0.0, 0.0], 0.0, 20.0, &none, &cfg()).unwrap();
        assert_eq!(f.tag, FateTag::Singular);
        let f = classify(&s, &z, &[0.0, 0.0, 0.0, 0.4], 0.0, 20.0, &none, &cfg()).unwrap();
        assert_eq!((f.tag, f.t_event), (FateTag::ExitBoundary, 0.0));
    }

    #[test]
    fn budget_exhaustion_is_inconclusive() {
        let m = SystemModel::simple();
        let config = IntegratorConfig {
            max_steps: 5,
            ..cfg()
        };
        let f = classify(&m, &zero(), &[1.0, 0.1], 0.0, 50.0, &CaptureRegion::None, &config).unwrap();
        assert_eq!(f.tag, FateTag::Inconclusive);
        assert!(f.detail.is_some());
    }

    #[test]
    fn openness_off_boundary() {
        let m = SystemModel::simple();
        for x in [[0.3, -0.2], [2.5, 0.4], [FRAC_PI_4, 1.5]] {
            let r = openness_check(&m, &zero(), &x, 0.0, 30.0, &CaptureRegion::None, &cfg()).unwrap();
            assert!(r.agree, "{x:?}: {r:?}");
            assert_eq!(r.perturbed.len(), 8);
        }
        assert_eq!(perturbation_directions(4).len(), 8);
    }

    #[test]
    fn fate_json_shape() {
        let f = Fate::at(FateTag::ExitLeft, 0.0, 0.0, vec![0.0, 0.0]);
        let s = serde_json::to_string(&f).unwrap();
        assert_eq!(
            s,
            r#"{"tag":"ExitLeft","t_event":0.0,"state_event":[0.0,0.0],"exit_time_proxy":0.0}"#
        );
    }
}
