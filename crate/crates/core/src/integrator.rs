//! Dormand–Prince 5(4) integration with dense output and event location.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsl::Controller;
use crate::models::{ModelError, SystemModel};

/// Right-hand side of `y' = f(t, y)`.
pub trait VectorField {
    fn dim(&self) -> usize;
    fn eval(&self, t: f64, y: &[f64], dy: &mut [f64]) -> Result<(), ModelError>;
}

/// A model driven by a controller.
#[derive(Debug, Clone, Copy)]
pub struct ClosedLoop<'a> {
    pub model: &'a SystemModel,
    pub controller: &'a Controller,
}

impl VectorField for ClosedLoop<'_> {
    fn dim(&self) -> usize {
        self.model.dim()
    }

    fn eval(&self, t: f64, y: &[f64], dy: &mut [f64]) -> Result<(), ModelError> {
        self.model.eval_rhs(self.controller, y, t, dy)
    }
}

/// Adapter for closures, mostly for tests.
pub struct FnField<F> {
    pub dim: usize,
    pub f: F,
}

impl<F: Fn(f64, &[f64], &mut [f64])> VectorField for FnField<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, t: f64, y: &[f64], dy: &mut [f64]) -> Result<(), ModelError> {
        (self.f)(t, y, dy);
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IntegratorConfig {
    pub rtol: f64,
    pub atol: f64,
    /// Initial step; chosen automatically when absent.
    pub h0: Option<f64>,
    pub hmax: f64,
    pub max_steps: usize,
    /// Event times are refined to this width.
    pub t_tol: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig {
            rtol: 1e-10,
            atol: 1e-12,
            h0: None,
            hmax: 0.1,
            max_steps: 10_000_000,
            t_tol: 1e-10,
        }
    }
}

impl IntegratorConfig {
    pub fn with_tolerances(rtol: f64, atol: f64) -> Self {
        IntegratorConfig {
            rtol,
            atol,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), IntegrateError> {
        let bad = |what: &str| Err(IntegrateError::InvalidConfig(what.to_string()));
        if !(self.rtol > 0.0) || !(self.atol > 0.0) {
            return bad("rtol and atol must be positive");
        }
        if !(self.hmax > 0.0) {
            return bad("hmax must be positive");
        }
        if self.max_steps == 0 {
            return bad("max_steps must be at least 1");
        }
        if !(self.t_tol > 0.0) {
            return bad("t_tol must be positive");
        }
        if let Some(h0) = self.h0 {
            if !(h0 > 0.0) {
                return bad("h0 must be positive");
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IntegrateError {
    #[error("step budget of {steps} exhausted at t = {t}")]
    StepBudgetExceeded { t: f64, steps: usize },
    #[error("step size {h:e} underflowed at t = {t}, state {state:?}")]
    StepUnderflow { t: f64, h: f64, state: Vec<f64> },
    #[error("vector field failed at t = {t}: {source}")]
    Model { t: f64, source: ModelError },
    #[error("time {t} is outside the trajectory span [{start}, {end}]")]
    OutOfSpan { t: f64, start: f64, end: f64 },
    #[error("invalid integrator configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// Guard goes from positive to non-positive.
    Decreasing,
    Increasing,
    Any,
}

type Guard = Box<dyn Fn(&[f64], f64) -> f64 + Send + Sync>;

/// A scalar guard whose zero crossings are located during integration.
pub struct EventSpec {
    pub name: String,
    pub guard: Guard,
    pub direction: Direction,
    pub terminal: bool,
}

impl EventSpec {
    pub fn new(
        name: impl Into<String>,
        direction: Direction,
        terminal: bool,
        guard: impl Fn(&[f64], f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        EventSpec {
            name: name.into(),
            guard: Box::new(guard),
            direction,
            terminal,
        }
    }

    fn triggers(&self, g0: f64, g1: f64) -> bool {
        let down = g0 > 0.0 && g1 <= 0.0;
        let up = g0 < 0.0 && g1 >= 0.0;
        match self.direction {
            Direction::Decreasing => down,
            Direction::Increasing => up,
            Direction::Any => down || up,
        }
    }
}

impl fmt::Debug for EventSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("EventSpec")
            .field("name", &self.name)
            .field("direction", &self.direction)
            .field("terminal", &self.terminal)
            .finish()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventHit {
    /// Position of the event in the list passed to [`integrate`].
    pub index: usize,
    pub name: String,
    pub t: f64,
    pub state: Vec<f64>,
    pub guard: f64,
}

/// One accepted step with its continuous extension.
#[derive(Debug, Clone, PartialEq)]
struct Step {
    t0: f64,
    t1: f64,
    /// `y0`, `y1`, and the three higher dense-output coefficients.
    coeffs: Vec<f64>,
}

impl Step {
    fn y0<'a>(&'a self, n: usize) -> &'a [f64] {
        &self.coeffs[..n]
    }

    fn y1<'a>(&'a self, n: usize) -> &'a [f64] {
        &self.coeffs[n..2 * n]
    }

    fn eval_into(&self, n: usize, t: f64, out: &mut [f64]) {
        if t == self.t0 {
            out.copy_from_slice(self.y0(n));
            return;
        }
        if t == self.t1 {
            out.copy_from_slice(self.y1(n));
            return;
        }
        let s = (t - self.t0) / (self.t1 - self.t0);
        let s1 = 1.0 - s;
        let c = &self.coeffs;
        for i in 0..n {
            let (y0, y1) = (c[i], c[n + i]);
            let (r3, r4, r5) = (c[2 * n + i], c[3 * n + i], c[4 * n + i]);
            out[i] = y0 + s * ((y1 - y0) + s1 * (r3 + s * (r4 + s1 * r5)));
        }
    }
}

/// Accepted steps with interpolants. Covers `[start, end]`; the last step
/// may extend past `end` when integration stopped at an event.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseTrajectory {
    dim: usize,
    steps: Vec<Step>,
    start: f64,
    end: f64,
    start_state: Vec<f64>,
    end_state: Vec<f64>,
}

impl DenseTrajectory {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn start_time(&self) -> f64 {
        self.start
    }

    pub fn end_time(&self) -> f64 {
        self.end
    }

    pub fn start_state(&self) -> &[f64] {
        &self.start_state
    }

    pub fn end_state(&self) -> &[f64] {
        &self.end_state
    }

    pub fn step_count(&self) -> usize {
        self.steps.len()
    }

    /// Times of accepted step endpoints, starting with the initial time and
    /// ending with [`Self::end_time`].
    pub fn step_times(&self) -> Vec<f64> {
        let mut out = vec![self.start];
        out.extend(self.steps.iter().map(|s| s.t1.min(self.end)));
        if self.steps.is_empty() {
            return out;
        }
        out.dedup();
        out
    }

    pub fn state_at(&self, t: f64) -> Result<Vec<f64>, IntegrateError> {
        let mut out = vec![0.0; self.dim];
        self.state_into(t, &mut out)?;
        Ok(out)
    }

    fn state_into(&self, t: f64, out: &mut [f64]) -> Result<(), IntegrateError> {
        if !(t >= self.start && t <= self.end) {
            return Err(IntegrateError::OutOfSpan {
                t,
                start: self.start,
                end: self.end,
            });
        }
        if t == self.end {
            out.copy_from_slice(&self.end_state);
            return Ok(());
        }
        if t == self.start {
            out.copy_from_slice(&self.start_state);
            return Ok(());
        }
        let idx = self.steps.partition_point(|s| s.t1 < t);
        let step = &self.steps[idx.min(self.steps.len() - 1)];
        step.eval_into(self.dim, t, out);
        Ok(())
    }

    /// Interpolated states at `times`, in the given order.
    pub fn sample(&self, times: &[f64]) -> Result<Vec<Vec<f64>>, IntegrateError> {
        times.iter().map(|&t| self.state_at(t)).collect()
    }

    /// Dense check of a scalar predicate along the trajectory: evaluates
    /// `f` at every step endpoint and at `per_step` interior points.
    pub fn fold_samples<T>(&self, per_step: usize, init: T, mut f: impl FnMut(T, f64, &[f64]) -> T) -> T {
        let mut acc = f(init, self.start, &self.start_state);
        let mut buf = vec![0.0; self.dim];
        for step in &self.steps {
            let t1 = step.t1.min(self.end);
            for k in 1..=per_step + 1 {
                let t = step.t0 + (t1 - step.t0) * k as f64 / (per_step + 1) as f64;
                let t = if k == per_step + 1 { t1 } else { t };
                if t > self.end {
                    break;
                }
                step.eval_into(self.dim, t, &mut buf);
                if t == self.end {
                    buf.copy_from_slice(&self.end_state);
                }
                acc = f(acc, t, &buf);
            }
        }
        acc
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct IntegrationStats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Integration {
    pub trajectory: DenseTrajectory,
    /// The earliest terminal event, if one stopped the run.
    pub terminal: Option<EventHit>,
    /// Non-terminal events in time order.
    pub events: Vec<EventHit>,
    pub stats: IntegrationStats,
}

// Dormand–Prince 5(4) tableau.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
// Dense output (Hairer & Wanner).
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

const SAFETY: f64 = 0.9;
const MIN_FACTOR: f64 = 0.2;
const MAX_FACTOR: f64 = 5.0;
const PI_BETA: f64 = 0.04;
const ROOT_ITERATIONS: usize = 80;
/// Interior points per step at which guards are checked for sign changes.
const GUARD_SUBDIVISIONS: usize = 4;

struct Workspace {
    k: [Vec<f64>; 7],
    tmp: Vec<f64>,
    y1: Vec<f64>,
    err: Vec<f64>,
}

impl Workspace {
    fn new(n: usize) -> Self {
        Workspace {
            k: std::array::from_fn(|_| vec![0.0; n]),
            tmp: vec![0.0; n],
            y1: vec![0.0; n],
            err: vec![0.0; n],
        }
    }
}

fn eval<F: VectorField + ?Sized>(
    field: &F,
    t: f64,
    y: &[f64],
    dy: &mut [f64],
    stats: &mut IntegrationStats,
) -> Result<(), IntegrateError> {
    stats.evaluations += 1;
    field
        .eval(t, y, dy)
        .map_err(|source| IntegrateError::Model { t, source })?;
    if dy.iter().any(|v| !v.is_finite()) {
        return Err(IntegrateError::Model {
            t,
            source: ModelError::Parameter("vector field returned a non-finite value".into()),
        });
    }
    Ok(())
}

/// Attempts one step of size `h`; fills `ws.y1`, `ws.k` and returns the
/// scaled RMS error.
fn attempt<F: VectorField + ?Sized>(
    field: &F,
    t: f64,
    y: &[f64],
    h: f64,
    ws: &mut Workspace,
    config: &IntegratorConfig,
    stats: &mut IntegrationStats,
) -> Result<f64, IntegrateError> {
    let n = y.len();
    let Workspace { k, tmp, y1, err } = ws;
    let [k1, k2, k3, k4, k5, k6, k7] = k;
    for i in 0..n {
        tmp[i] = y[i] + h * A21 * k1[i];
    }
    eval(field, t + C2 * h, tmp, k2, stats)?;
    for i in 0..n {
        tmp[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i]);
    }
    eval(field, t + C3 * h, tmp, k3, stats)?;
    for i in 0..n {
        tmp[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
    }
    eval(field, t + C4 * h, tmp, k4, stats)?;
    for i in 0..n {
        tmp[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
    }
    eval(field, t + C5 * h, tmp, k5, stats)?;
    for i in 0..n {
        tmp[i] = y[i] + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
    }
    eval(field, t + h, tmp, k6, stats)?;
    for i in 0..n {
        y1[i] = y[i] + h * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]);
    }
    eval(field, t + h, y1, k7, stats)?;
    let mut sum = 0.0;
    for i in 0..n {
        err[i] = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
        let scale = config.atol + config.rtol * y[i].abs().max(y1[i].abs());
        sum += (err[i] / scale).powi(2);
    }
    Ok((sum / n as f64).sqrt())
}

fn dense_coeffs(y: &[f64], h: f64, ws: &Workspace) -> Vec<f64> {
    let n = y.len();
    let [k1, _, k3, k4, k5, k6, k7] = &ws.k;
    let mut c = vec![0.0; 5 * n];
    for i in 0..n {
        let ydiff = ws.y1[i] - y[i];
        let bspl = h * k1[i] - ydiff;
        c[i] = y[i];
        c[n + i] = ws.y1[i];
        c[2 * n + i] = bspl;
        c[3 * n + i] = ydiff - h * k7[i] - bspl;
        c[4 * n + i] =
            h * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]);
    }
    c
}

/// Starting step size heuristic (Hairer, Nørsett & Wanner).
fn initial_step<F: VectorField + ?Sized>(
    field: &F,
    t0: f64,
    y0: &[f64],
    f0: &[f64],
    span: f64,
    config: &IntegratorConfig,
    stats: &mut IntegrationStats,
) -> Result<f64, IntegrateError> {
    let n = y0.len();
    let scale: Vec<f64> = y0.iter().map(|y| config.atol + config.rtol * y.abs()).collect();
    let rms = |v: &[f64]| {
        (v.iter().zip(&scale).map(|(a, s)| (a / s).powi(2)).sum::<f64>() / n as f64).sqrt()
    };
    let d0 = rms(y0);
    let d1 = rms(f0);
    let mut h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    h0 = h0.min(config.hmax).min(span);
    let y1: Vec<f64> = y0.iter().zip(f0).map(|(y, f)| y + h0 * f).collect();
    let mut f1 = vec![0.0; n];
    eval(field, t0 + h0, &y1, &mut f1, stats)?;
    let diff: Vec<f64> = f1.iter().zip(f0).map(|(a, b)| a - b).collect();
    let d2 = rms(&diff) / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    Ok((100.0 * h0).min(h1).min(config.hmax).min(span))
}

/// Locates the crossing of `guard` inside `[ta, tb]` on the interpolant.
/// Returns the time on the far side of the crossing.
fn refine_root(
    step: &Step,
    n: usize,
    event: &EventSpec,
    (mut ta, mut ga): (f64, f64),
    (mut tb, mut gb): (f64, f64),
    t_tol: f64,
    buf: &mut [f64],
) -> (f64, f64) {
    // Illinois-modified regula falsi with a bisection fallback.
    let mut side = 0i8;
    for _ in 0..ROOT_ITERATIONS {
        if tb - ta <= t_tol || gb == 0.0 {
            break;
        }
        let mut tm = (ta * gb - tb * ga) / (gb - ga);
        let width = tb - ta;
        if !(tm > ta + 0.01 * width && tm < tb - 0.01 * width) {
            tm = 0.5 * (ta + tb);
        }
        step.eval_into(n, tm, buf);
        let gm = (event.guard)(buf, tm);
        if event.triggers(ga, gm) || (gm == 0.0 && ga != 0.0) {
            tb = tm;
            gb = gm;
            if side == -1 {
                ga *= 0.5;
            }
            side = -1;
        } else {
            ta = tm;
            ga = gm;
            if side == 1 {
                gb *= 0.5;
            }
            side = 1;
        }
    }
    step.eval_into(n, tb, buf);
    (tb, (event.guard)(buf, tb))
}

/// Integrates the closed loop of `model` under `controller`.
pub fn integrate_closed_loop(
    model: &SystemModel,
    controller: &Controller,
    y0: &[f64],
    t0: f64,
    t_end: f64,
    events: &[EventSpec],
    config: &IntegratorConfig,
) -> Result<Integration, IntegrateError> {
    integrate(&ClosedLoop { model, controller }, y0, t0, t_end, events, config)
}

/// Integrates `field` from `(t0, y0)` towards `t_end`, stopping at the
/// earliest terminal event.
pub fn integrate<F: VectorField + ?Sized>(
    field: &F,
    y0: &[f64],
    t0: f64,
    t_end: f64,
    events: &[EventSpec],
    config: &IntegratorConfig,
) -> Result<Integration, IntegrateError> {
    config.validate()?;
    let n = field.dim();
    if y0.len() != n {
        return Err(IntegrateError::Model {
            t: t0,
            source: ModelError::Dimension {
                expected: n,
                found: y0.len(),
            },
        });
    }
    if !(t_end > t0) {
        return Err(IntegrateError::InvalidConfig(format!(
            "t_end ({t_end}) must exceed t0 ({t0})"
        )));
    }
    let mut stats = IntegrationStats::default();
    let mut ws = Workspace::new(n);
    let mut y = y0.to_vec();
    let mut t = t0;
    eval(field, t, &y, &mut ws.k[0], &mut stats)?;

    let mut h = match config.h0 {
        Some(h0) => h0.min(config.hmax),
        None => {
            let f0 = ws.k[0].clone();
            initial_step(field, t0, y0, &f0, t_end - t0, config, &mut stats)?
        }
    };
    let mut guards: Vec<f64> = events.iter().map(|e| (e.guard)(&y, t)).collect();
    let mut steps = Vec::new();
    let mut hits = Vec::new();
    let mut err_old: f64 = 1e-4;
    let mut last_rejected = false;
    let mut buf = vec![0.0; n];

    loop {
        if stats.accepted + stats.rejected >= config.max_steps {
            return Err(IntegrateError::StepBudgetExceeded {
                t,
                steps: config.max_steps,
            });
        }
        let remaining = t_end - t;
        // Stretch onto t_end rather than leave a sliver behind.
        let last = h * 1.01 >= remaining;
        if last {
            h = remaining;
        }
        if h.abs() <= 16.0 * f64::EPSILON * t.abs().max(1.0) {
            return Err(IntegrateError::StepUnderflow {
                t,
                h,
                state: y.clone(),
            });
        }
        let err = attempt(field, t, &y, h, &mut ws, config, &mut stats)?;
        let fac11 = err.powf(0.2 - PI_BETA * 0.75);
        if err > 1.0 {
            stats.rejected += 1;
            last_rejected = true;
            h /= (fac11 / SAFETY).min(1.0 / MIN_FACTOR);
            continue;
        }

        stats.accepted += 1;
        let t1 = if last { t_end } else { t + h };
        let step = Step {
            t0: t,
            t1,
            coeffs: dense_coeffs(&y, h, &ws),
        };

        // Look for guard sign changes on a few interior points.
        let mut terminal: Option<(usize, f64, f64)> = None;
        let mut crossed = Vec::new();
        for (idx, event) in events.iter().enumerate() {
            let mut prev = (t, guards[idx]);
            for k in 1..=GUARD_SUBDIVISIONS {
                let tk = if k == GUARD_SUBDIVISIONS {
                    t1
                } else {
                    t + (t1 - t) * k as f64 / GUARD_SUBDIVISIONS as f64
                };
                step.eval_into(n, tk, &mut buf);
                let gk = (event.guard)(&buf, tk);
                if event.triggers(prev.1, gk) {
                    let (te, ge) =
                        refine_root(&step, n, event, prev, (tk, gk), config.t_tol, &mut buf);
                    if event.terminal {
                        if terminal.is_none_or(|(_, best, _)| te < best) {
                            terminal = Some((idx, te, ge));
                        }
                    } else {
                        crossed.push((idx, te, ge));
                    }
                    break;
                }
                prev = (tk, gk);
            }
            step.eval_into(n, t1, &mut buf);
            guards[idx] = (event.guard)(&buf, t1);
        }
        for (idx, te, ge) in crossed {
            if terminal.is_some_and(|(_, tt, _)| te > tt) {
                continue;
            }
            step.eval_into(n, te, &mut buf);
            hits.push(EventHit {
                index: idx,
                name: events[idx].name.clone(),
                t: te,
                state: buf.clone(),
                guard: ge,
            });
        }

        if let Some((idx, te, ge)) = terminal {
            hits.sort_by(|a, b| a.t.total_cmp(&b.t));
            step.eval_into(n, te, &mut buf);
            let end_state = buf.clone();
            steps.push(step);
            let hit = EventHit {
                index: idx,
                name: events[idx].name.clone(),
                t: te,
                state: end_state.clone(),
                guard: ge,
            };
            return Ok(Integration {
                trajectory: DenseTrajectory {
                    dim: n,
                    steps,
                    start: t0,
                    end: te,
                    start_state: y0.to_vec(),
                    end_state,
                },
                terminal: Some(hit),
                events: hits,
                stats,
            });
        }

        steps.push(step);
        t = t1;
        y.copy_from_slice(&ws.y1);
        ws.k.swap(0, 6);

        if last {
            hits.sort_by(|a, b| a.t.total_cmp(&b.t));
            return Ok(Integration {
                trajectory: DenseTrajectory {
                    dim: n,
                    steps,
                    start: t0,
                    end: t_end,
                    start_state: y0.to_vec(),
                    end_state: y.clone(),
                },
                terminal: None,
                events: hits,
                stats,
            });
        }

        let mut fac = fac11 / err_old.powf(PI_BETA);
        fac = (fac / SAFETY).clamp(1.0 / MAX_FACTOR, 1.0 / MIN_FACTOR);
        let mut h_new = (h / fac).min(config.hmax);
        if last_rejected {
            h_new = h_new.min(h);
        }
        err_old = err.max(1e-4);
        last_rejected = false;
        h = h_new;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn harmonic() -> FnField<impl Fn(f64, &[f64], &mut [f64])> {
        FnField {
            dim: 2,
            f: |_t: f64, y: &[f64], dy: &mut [f64]| {
                dy[0] = y[1];
                dy[1] = -y[0];
            },
        }
    }

    fn endpoint_error(tol: f64) -> f64 {
        let run = integrate(
            &harmonic(),
            &[1.0, 0.0],
            0.0,
            2.0 * PI,
            &[],
            &IntegratorConfig::with_tolerances(tol, tol),
        )
        .unwrap();
        let y = run.trajectory.end_state();
        ((y[0] - 1.0).powi(2) + y[1].powi(2)).sqrt()
    }

    #[test]
    fn harmonic_endpoint() {
        let run = integrate(
            &harmonic(),
            &[1.0, 0.0],
            0.0,
            2.0 * PI,
            &[],
            &IntegratorConfig::with_tolerances(1e-10, 1e-12),
        )
        .unwrap();
        let y = run.trajectory.end_state();
        assert!((y[0] - 1.0).abs() < 1e-8 && y[1].abs() < 1e-8, "{y:?}");
        assert_eq!(run.trajectory.end_time(), 2.0 * PI);
        assert!(endpoint_error(1e-6) > endpoint_error(1e-10));
    }

    #[test]
    fn sampling() {
        let run = integrate(
            &harmonic(),
            &[1.0, 0.0],
            0.0,
            2.0 * PI,
            &[],
            &IntegratorConfig::default(),
        )
        .unwrap();
        let traj = &run.trajectory;
        let s = traj.state_at(FRAC_PI_2).unwrap();
        assert!(s[0].abs() < 1e-7 && (s[1] + 1.0).abs() < 1e-7, "{s:?}");

        let times = traj.step_times();
        let mid = times[times.len() / 2];
        let idx = traj.steps.iter().position(|st| st.t1 == mid).unwrap();
        assert_eq!(traj.state_at(mid).unwrap(), traj.steps[idx].y1(2).to_vec());
        assert_eq!(traj.steps[idx + 1].y0(2), traj.steps[idx].y1(2));

        let out = traj.sample(&[3.0, 1.0, 2.0]).unwrap();
        assert_eq!(out[0], traj.state_at(3.0).unwrap());
        assert_eq!(out[1], traj.state_at(1.0).unwrap());
        assert!(matches!(traj.state_at(7.0), Err(IntegrateError::OutOfSpan { .. })));
        assert!(matches!(traj.state_at(-0.1), Err(IntegrateError::OutOfSpan { .. })));
    }

    #[test]
    fn deterministic() {
        let run = || {
            integrate(&harmonic(), &[1.0, 0.3], 0.0, 17.0, &[], &IntegratorConfig::default()).unwrap()
        };
        assert_eq!(run().trajectory, run().trajectory);
    }

    #[test]
    fn terminal_and_recorded_events() {
        let events = [
            EventSpec::new("y0 down", Direction::Decreasing, false, |y: &[f64], _| y[0]),
            EventSpec::new("y1 up", Direction::Increasing, true, |y: &[f64], _| y[1]),
        ];
        // y0 = cos t crosses zero decreasing at pi/2; y1 = -sin t crosses
        // zero increasing at pi.
        let run = integrate(&harmonic(), &[1.0, 0.0], 0.0, 10.0, &events, &IntegratorConfig::default()).unwrap();
        let hit = run.terminal.unwrap();
        assert_eq!(hit.index, 1);
        assert!((hit.t - PI).abs() <= 1e-9, "{}", hit.t);
        assert!(hit.guard.abs() <= 1e-9);
        assert_eq!(run.events.len(), 1);
        assert!((run.events[0].t - FRAC_PI_2).abs() <= 1e-9);
        assert_eq!(run.trajectory.end_time(), hit.t);
    }

    #[test]
    fn budget_and_config_errors() {
        let cfg = IntegratorConfig {
            max_steps: 5,
            ..Default::default()
        };
        assert!(matches!(
            integrate(&harmonic(), &[1.0, 0.0], 0.0, 100.0, &[], &cfg),
            Err(IntegrateError::StepBudgetExceeded { .. })
        ));
        let cfg = IntegratorConfig {
            rtol: 0.0,
            ..Default::default()
        };
        assert!(matches!(
            integrate(&harmonic(), &[1.0, 0.0], 0.0, 1.0, &[], &cfg),
            Err(IntegrateError::InvalidConfig(_))
        ));
        assert!(integrate(&harmonic(), &[1.0, 0.0], 1.0, 1.0, &[], &IntegratorConfig::default()).is_err());
    }

    #[test]
    fn blowup_underflows() {
        // y' = y^2 from 1 blows up at t = 1.
        let field = FnField {
            dim: 1,
            f: |_t: f64, y: &[f64], dy: &mut [f64]| dy[0] = y[0] * y[0],
        };
        let r = integrate(&field, &[1.0], 0.0, 2.0, &[], &IntegratorConfig::default());
        assert!(
            matches!(r, Err(IntegrateError::StepUnderflow { .. }) | Err(IntegrateError::Model { .. })),
            "{r:?}"
        );
    }
}
