//! Witness searches: bisection for solutions that neither exit nor get
//! captured, Newton shooting for periodic orbits of the forced damped
//! pendulum, and basin sweeps.

use std::cell::Cell;
use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsl::Controller;
use crate::fate::{classify, classify_detailed, CaptureRegion, Fate, FateError, FateTag, RegionSpec};
use crate::integrator::{integrate_closed_loop, DenseTrajectory, IntegrateError, IntegratorConfig};
use crate::linalg::{solve, Matrix};
use crate::lyapunov::{eigenvalues, Complex, LyapunovError};
use crate::models::{SystemKind, SystemModel};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FinderError {
    #[error("both path endpoints have fate {0:?}")]
    SameFateEndpoints(FateTag),
    #[error("path endpoint s = {s} has fate {tag:?}, which cannot bracket a witness")]
    UnusableEndpoint { s: f64, tag: FateTag },
    #[error("inconclusive classification at s = {s}: {detail}")]
    InconclusiveEncountered { s: f64, detail: String },
    #[error("invalid path: {0}")]
    InvalidPath(String),
    #[error("{0}")]
    Precondition(String),
    #[error("no periodic orbit found (best residual {best_residual:e})")]
    NoRootFound { best_residual: f64 },
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error(transparent)]
    Fate(#[from] FateError),
    #[error(transparent)]
    Integrate(#[from] IntegrateError),
    #[error(transparent)]
    Lyapunov(#[from] LyapunovError),
}

/// Piecewise-linear curve through waypoints, parametrized by `s` in
/// `[0, 1]` with equal parameter length per segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathParametrization {
    waypoints: Vec<Vec<f64>>,
}

impl PathParametrization {
    pub fn new(waypoints: Vec<Vec<f64>>) -> Result<Self, FinderError> {
        if waypoints.len() < 2 {
            return Err(FinderError::InvalidPath("need at least two waypoints".into()));
        }
        let dim = waypoints[0].len();
        if dim == 0 || waypoints.iter().any(|w| w.len() != dim) {
            return Err(FinderError::InvalidPath("waypoints must share a dimension".into()));
        }
        if waypoints.iter().flatten().any(|v| !v.is_finite()) {
            return Err(FinderError::InvalidPath("waypoints must be finite".into()));
        }
        Ok(PathParametrization { waypoints })
    }

    pub fn segment(a: Vec<f64>, b: Vec<f64>) -> Result<Self, FinderError> {
        PathParametrization::new(vec![a, b])
    }

    pub fn waypoints(&self) -> &[Vec<f64>] {
        &self.waypoints
    }

    pub fn dim(&self) -> usize {
        self.waypoints[0].len()
    }

    pub fn eval(&self, s: f64) -> Vec<f64> {
        let segs = self.waypoints.len() - 1;
        let x = s.clamp(0.0, 1.0) * segs as f64;
        let k = (x.floor() as usize).min(segs - 1);
        let local = x - k as f64;
        let (a, b) = (&self.waypoints[k], &self.waypoints[k + 1]);
        if local == 0.0 {
            return a.clone();
        }
        if local == 1.0 {
            return b.clone();
        }
        a.iter().zip(b).map(|(a, b)| a + local * (b - a)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bracket {
    pub s_lo: f64,
    pub s_hi: f64,
    pub fate_lo: FateTag,
    pub fate_hi: FateTag,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BisectionStep {
    pub s_lo: f64,
    pub s_hi: f64,
    pub s_mid: f64,
    pub fate_mid: FateTag,
    pub exit_time_proxy: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SurvivorResult {
    pub s_star: f64,
    pub state_star: Vec<f64>,
    pub bracket: Bracket,
    /// Time the trajectory from `state_star` spent in `M \ B`.
    pub achieved_horizon: f64,
    pub horizon: f64,
    pub fate_star: Fate,
    pub history: Vec<BisectionStep>,
    #[serde(skip)]
    pub trajectory: Option<DenseTrajectory>,
}

impl SurvivorResult {
    pub fn bracket_width(&self) -> f64 {
        self.bracket.s_hi - self.bracket.s_lo
    }
}

/// Bisection between path endpoints of distinct fate. Stops when the
/// bracket is narrower than `tol_s`, when the parameter can no longer be
/// split, or as soon as a midpoint survives the horizon.
#[allow(clippy::too_many_arguments)]
pub fn find_survivor(
    model: &SystemModel,
    controller: &Controller,
    path: &PathParametrization,
    horizon: f64,
    capture: &CaptureRegion,
    tol_s: f64,
    config: &IntegratorConfig,
) -> Result<SurvivorResult, FinderError> {
    if path.dim() != model.dim() {
        return Err(FinderError::InvalidPath(format!(
            "path has dimension {}, system needs {}",
            path.dim(),
            model.dim()
        )));
    }
    if !(tol_s >= 0.0) {
        return Err(FinderError::Precondition(format!("tol_s must be >= 0, got {tol_s}")));
    }
    let t0 = 0.0;
    let run = |s: f64| classify(model, controller, &path.eval(s), t0, horizon, capture, config);
    let end_lo = run(0.0)?;
    let end_hi = run(1.0)?;
    for (s, f) in [(0.0, &end_lo), (1.0, &end_hi)] {
        if !f.tag.is_bracketable() {
            return Err(FinderError::UnusableEndpoint { s, tag: f.tag });
        }
    }
    if end_lo.tag == end_hi.tag {
        return Err(FinderError::SameFateEndpoints(end_lo.tag));
    }

    let mut bracket = Bracket {
        s_lo: 0.0,
        s_hi: 1.0,
        fate_lo: end_lo.tag,
        fate_hi: end_hi.tag,
    };
    let mut history = Vec::new();
    let mut survivor = None;
    while bracket.s_hi - bracket.s_lo > tol_s {
        let width = bracket.s_hi - bracket.s_lo;
        let mut s = bracket.s_lo + 0.5 * width;
        if s <= bracket.s_lo || s >= bracket.s_hi {
            break;
        }
        let mut fate = run(s)?;
        if fate.tag == FateTag::Inconclusive {
            let retry = s + 0.1 * width;
            let second = run(retry)?;
            if second.tag == FateTag::Inconclusive {
                return Err(FinderError::InconclusiveEncountered {
                    s,
                    detail: fate.detail.unwrap_or_default(),
                });
            }
            s = retry;
            fate = second;
        }
        history.push(BisectionStep {
            s_lo: bracket.s_lo,
            s_hi: bracket.s_hi,
            s_mid: s,
            fate_mid: fate.tag,
            exit_time_proxy: fate.exit_time_proxy,
        });
        if fate.tag == FateTag::Survived {
            survivor = Some(s);
            break;
        }
        if fate.tag == bracket.fate_lo {
            bracket.s_lo = s;
        } else {
            // Equal to fate_hi, or a third class: either way the upper
            // half still has distinct ends.
            bracket.s_hi = s;
            bracket.fate_hi = fate.tag;
        }
    }

    let s_star = survivor.unwrap_or(bracket.s_lo + 0.5 * (bracket.s_hi - bracket.s_lo));
    let state_star = path.eval(s_star);
    let detailed = classify_detailed(model, controller, &state_star, t0, horizon, capture, config)?;
    Ok(SurvivorResult {
        s_star,
        state_star,
        bracket,
        achieved_horizon: detailed.fate.exit_time_proxy,
        horizon,
        fate_star: detailed.fate,
        history,
        trajectory: detailed.trajectory,
    })
}

/// [`find_survivor`] for the four-dimensional systems.
#[allow(clippy::too_many_arguments)]
pub fn find_survivor_highdim(
    model: &SystemModel,
    controller: &Controller,
    path: &PathParametrization,
    horizon: f64,
    capture: &CaptureRegion,
    tol_s: f64,
    config: &IntegratorConfig,
) -> Result<SurvivorResult, FinderError> {
    if !matches!(model.kind, SystemKind::Sphere | SystemKind::Cart) {
        return Err(FinderError::Precondition(format!(
            "{:?} is not a four-dimensional system",
            model.kind
        )));
    }
    find_survivor(model, controller, path, horizon, capture, tol_s, config)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodicOptions {
    pub seeds: usize,
    pub rng_seed: u64,
    /// Accept a root when `|P_T(x) - x|` (max norm) is at most this.
    pub residual_tol: f64,
    pub max_newton: usize,
    /// Integrator settings for the period map.
    pub integrator: IntegratorConfig,
    /// Periods re-integrated after the search.
    pub check_periods: usize,
    pub return_tol: f64,
}

impl Default for PeriodicOptions {
    fn default() -> Self {
        PeriodicOptions {
            seeds: 16,
            rng_seed: 1,
            residual_tol: 1e-10,
            max_newton: 50,
            integrator: IntegratorConfig {
                rtol: 1e-12,
                atol: 1e-14,
                ..IntegratorConfig::default()
            },
            check_periods: 10,
            return_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodicOrbit {
    pub state_star: Vec<f64>,
    #[serde(rename = "T")]
    pub period: f64,
    pub residual: f64,
    /// Winding number of the displacement around a small square.
    pub index: i32,
    /// Sign of `det(I - DP_T)` from the monodromy.
    pub monodromy_index: i32,
    pub multipliers: Vec<Complex>,
    pub monodromy: Matrix,
    pub rho: f64,
    /// Which start converged: `seed:k` or `grid:i,j`.
    pub origin: String,
    pub newton_iterations: usize,
    /// `|x(kT) - state_star|` for `k = 1..=check_periods`.
    pub return_errors: Vec<f64>,
    pub q_range: [f64; 2],
    pub rejected_escapes: usize,
}

struct PeriodMap<'a> {
    model: &'a SystemModel,
    controller: &'a Controller,
    period: f64,
    config: &'a IntegratorConfig,
}

impl PeriodMap<'_> {
    fn image(&self, x: &[f64]) -> Result<Vec<f64>, IntegrateError> {
        let run = integrate_closed_loop(self.model, self.controller, x, 0.0, self.period, &[], self.config)?;
        Ok(run.trajectory.end_state().to_vec())
    }

    fn displacement(&self, x: &[f64]) -> Result<[f64; 2], IntegrateError> {
        let y = self.image(x)?;
        Ok([y[0] - x[0], y[1] - x[1]])
    }

    /// `DP_T` by central differences.
    fn jacobian(&self, x: &[f64], h: f64) -> Result<Matrix, IntegrateError> {
        let mut j = Matrix::zeros(2);
        for c in 0..2 {
            let mut plus = x.to_vec();
            let mut minus = x.to_vec();
            plus[c] += h;
            minus[c] -= h;
            let yp = self.image(&plus)?;
            let ym = self.image(&minus)?;
            for r in 0..2 {
                j[(r, c)] = (yp[r] - ym[r]) / (2.0 * h);
            }
        }
        Ok(j)
    }
}

fn max_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

struct NewtonOutcome {
    x: Vec<f64>,
    residual: f64,
    iterations: usize,
}

/// Damped Newton on `P_T(x) - x`, abandoned if an iterate leaves the
/// segment `(0, pi) x [-rho, rho]`.
fn newton(map: &PeriodMap, start: &[f64], rho: f64, options: &PeriodicOptions) -> Option<NewtonOutcome> {
    let inside = |x: &[f64]| x[0] > 0.0 && x[0] < PI && x[1].abs() <= rho;
    let mut x = start.to_vec();
    let mut f = map.displacement(&x).ok()?;
    let mut r = max_norm(&f);
    let target = options.residual_tol * 1e-3;
    let mut iterations = 0;
    while iterations < options.max_newton && r > target {
        iterations += 1;
        let dp = map.jacobian(&x, 1e-6).ok()?;
        let jac = vec![dp[(0, 0)] - 1.0, dp[(0, 1)], dp[(1, 0)], dp[(1, 1)] - 1.0];
        let step = solve(2, jac, vec![-f[0], -f[1]])?;
        let mut lambda = 1.0;
        let mut accepted = None;
        for _ in 0..12 {
            let trial = [x[0] + lambda * step[0], x[1] + lambda * step[1]];
            if inside(&trial) {
                if let Ok(ft) = map.displacement(&trial) {
                    let rt = max_norm(&ft);
                    if rt < r {
                        accepted = Some((trial, ft, rt));
                        break;
                    }
                }
            }
            lambda *= 0.5;
        }
        let Some((trial, ft, rt)) = accepted else { break };
        x = trial.to_vec();
        f = ft;
        r = rt;
    }
    (r <= options.residual_tol).then_some(NewtonOutcome {
        x,
        residual: r,
        iterations,
    })
}

/// Winding number of `P_T(x) - x` along the boundary of the square of
/// half-width `r` centred at `x`.
fn winding_number(map: &PeriodMap, x: &[f64], r: f64, per_side: usize) -> Result<i32, IntegrateError> {
    let corners = [[r, -r], [r, r], [-r, r], [-r, -r]];
    let mut points = Vec::with_capacity(4 * per_side);
    for k in 0..4 {
        let (a, b) = (corners[k], corners[(k + 1) % 4]);
        for i in 0..per_side {
            let s = i as f64 / per_side as f64;
            points.push([x[0] + a[0] + s * (b[0] - a[0]), x[1] + a[1] + s * (b[1] - a[1])]);
        }
    }
    let values: Vec<[f64; 2]> = points
        .par_iter()
        .map(|p| map.displacement(p))
        .collect::<Result<_, _>>()?;
    let mut total = 0.0;
    for k in 0..values.len() {
        let a = values[k];
        let b = values[(k + 1) % values.len()];
        let mut d = b[1].atan2(b[0]) - a[1].atan2(a[0]);
        while d > PI {
            d -= 2.0 * PI;
        }
        while d < -PI {
            d += 2.0 * PI;
        }
        total += d;
    }
    Ok((total / (2.0 * PI)).round() as i32)
}

fn q_range_over(
    model: &SystemModel,
    controller: &Controller,
    x: &[f64],
    t_end: f64,
    config: &IntegratorConfig,
) -> Result<(DenseTrajectory, [f64; 2]), IntegrateError> {
    let run = integrate_closed_loop(model, controller, x, 0.0, t_end, &[], config)?;
    let range = run.trajectory.fold_samples(16, [f64::INFINITY, f64::NEG_INFINITY], |r, _, y| {
        [r[0].min(y[0]), r[1].max(y[0])]
    });
    Ok((run.trajectory, range))
}

/// Searches for a fixed point of the period map of the forced damped
/// pendulum inside `(0, pi) x [-rho, rho]`, `rho = 1.5 (U + 1) / nu`.
pub fn find_periodic(
    model: &SystemModel,
    controller: &Controller,
    options: &PeriodicOptions,
) -> Result<PeriodicOrbit, FinderError> {
    if model.kind != SystemKind::Friction || !(model.friction > 0.0) {
        return Err(FinderError::Precondition(
            "periodic search needs the friction system with nu > 0".into(),
        ));
    }
    let period = controller
        .declared_period()
        .ok_or_else(|| FinderError::Precondition("controller has no declared period".into()))?;
    let bound = controller
        .declared_bound()
        .ok_or_else(|| FinderError::Precondition("controller has no declared bound".into()))?;
    options.integrator.validate()?;
    let rho = 1.5 * (bound + 1.0) / model.friction;
    let map = PeriodMap {
        model,
        controller,
        period,
        config: &options.integrator,
    };

    let mut rng = ChaCha8Rng::seed_from_u64(options.rng_seed);
    let seeds: Vec<(String, Vec<f64>)> = (0..options.seeds)
        .map(|k| {
            let q = rng.random_range(0.05 * PI..0.95 * PI);
            let p = rng.random_range(-rho..rho);
            (format!("seed:{k}"), vec![q, p])
        })
        .collect();

    let rejected = Cell::new(0);
    let best_residual = Cell::new(f64::INFINITY);
    let batch = 8;
    let try_starts = |starts: &[(String, Vec<f64>)]| -> Result<Option<PeriodicOrbit>, FinderError> {
        for chunk in starts.chunks(batch) {
            let outcomes: Vec<Option<NewtonOutcome>> =
                chunk.par_iter().map(|(_, x)| newton(&map, x, rho, options)).collect();
            for ((origin, _), outcome) in chunk.iter().zip(outcomes) {
                let Some(root) = outcome else { continue };
                best_residual.set(best_residual.get().min(root.residual));
                match certify(&map, root, origin, rho, options)? {
                    Some(orbit) => return Ok(Some(orbit.with_rejected(rejected.get()))),
                    None => rejected.set(rejected.get() + 1),
                }
            }
        }
        Ok(None)
    };
    if let Some(orbit) = try_starts(&seeds)? {
        return Ok(orbit);
    }

    // Coarse 17x17 grid over the segment; the smallest displacements
    // become new Newton starts.
    let n = 17;
    let nodes: Vec<(usize, usize, Vec<f64>)> = (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .map(|(i, j)| {
            let q = PI * (i as f64 + 1.0) / (n as f64 + 1.0);
            let p = -rho + 2.0 * rho * j as f64 / (n as f64 - 1.0);
            (i, j, vec![q, p])
        })
        .collect();
    let residuals: Vec<f64> = nodes
        .par_iter()
        .map(|(_, _, x)| map.displacement(x).map(|f| max_norm(&f)).unwrap_or(f64::INFINITY))
        .collect();
    let mut order: Vec<usize> = (0..nodes.len()).collect();
    order.sort_by(|&a, &b| residuals[a].total_cmp(&residuals[b]).then(a.cmp(&b)));
    let starts: Vec<(String, Vec<f64>)> = order
        .iter()
        .take(16)
        .map(|&k| (format!("grid:{},{}", nodes[k].0, nodes[k].1), nodes[k].2.clone()))
        .collect();
    best_residual.set(best_residual.get().min(residuals[order[0]]));
    if let Some(orbit) = try_starts(&starts)? {
        return Ok(orbit);
    }
    Err(FinderError::NoRootFound {
        best_residual: best_residual.get(),
    })
}

impl PeriodicOrbit {
    fn with_rejected(mut self, n: usize) -> Self {
        self.rejected_escapes = n;
        self
    }
}

/// Strip containment, index, multipliers and the multi-period return
/// check. `None` means the orbit leaves the strip.
fn certify(
    map: &PeriodMap,
    root: NewtonOutcome,
    origin: &str,
    rho: f64,
    options: &PeriodicOptions,
) -> Result<Option<PeriodicOrbit>, FinderError> {
    let x = root.x;
    let (_, one) = q_range_over(map.model, map.controller, &x, map.period, map.config)?;
    if !(one[0] > 0.0 && one[1] < PI) {
        return Ok(None);
    }
    let dp = map.jacobian(&x, 1e-5)?;
    let multipliers = eigenvalues(&dp)?;
    let i_minus = Matrix::identity(2).add(&dp.scale(-1.0));
    let det = i_minus.determinant();
    let monodromy_index = if det > 0.0 { 1 } else if det < 0.0 { -1 } else { 0 };
    let index = winding_number(map, &x, 1e-3, 16)?;

    let periods = options.check_periods.max(1);
    let t_end = map.period * periods as f64;
    let (traj, q_range) = q_range_over(map.model, map.controller, &x, t_end, map.config)?;
    let times: Vec<f64> = (1..=periods).map(|k| map.period * k as f64).collect();
    let return_errors = traj
        .sample(&times)?
        .iter()
        .map(|y| max_norm(&[y[0] - x[0], y[1] - x[1]]))
        .collect();
    Ok(Some(PeriodicOrbit {
        state_star: x,
        period: map.period,
        residual: root.residual,
        index,
        monodromy_index,
        multipliers,
        monodromy: dp,
        rho,
        origin: origin.to_string(),
        newton_iterations: root.iterations,
        return_errors,
        q_range,
        rejected_escapes: 0,
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridAxis {
    /// State coordinate varied along this axis.
    pub coordinate: usize,
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl GridAxis {
    pub fn value(&self, i: usize) -> f64 {
        if self.count == 1 {
            return self.min;
        }
        self.min + (self.max - self.min) * i as f64 / (self.count - 1) as f64
    }
}

/// A two-axis grid of initial states; coordinates not on an axis are
/// taken from `base`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub axes: [GridAxis; 2],
    pub base: Vec<f64>,
    pub t0: f64,
}

impl GridSpec {
    /// `(q, p)` grid for a planar system.
    pub fn planar(q: (f64, f64, usize), p: (f64, f64, usize)) -> Self {
        GridSpec {
            axes: [
                GridAxis {
                    coordinate: 0,
                    min: q.0,
                    max: q.1,
                    count: q.2,
                },
                GridAxis {
                    coordinate: 1,
                    min: p.0,
                    max: p.1,
                    count: p.2,
                },
            ],
            base: vec![0.0, 0.0],
            t0: 0.0,
        }
    }

    pub fn state(&self, i: usize, j: usize) -> Vec<f64> {
        let mut x = self.base.clone();
        x[self.axes[0].coordinate] = self.axes[0].value(i);
        x[self.axes[1].coordinate] = self.axes[1].value(j);
        x
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasinCell {
    pub i: usize,
    pub j: usize,
    pub state: Vec<f64>,
    pub tag: FateTag,
    pub exit_time_proxy: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

/// Row-major cells: `i` (first axis) is the slow index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasinGrid {
    pub grid: GridSpec,
    pub horizon: f64,
    pub cells: Vec<BasinCell>,
}

impl BasinGrid {
    pub fn cell(&self, i: usize, j: usize) -> &BasinCell {
        &self.cells[i * self.grid.axes[1].count + j]
    }

    pub fn count(&self, tag: FateTag) -> usize {
        self.cells.iter().filter(|c| c.tag == tag).count()
    }

    /// Neighbouring cells (along either axis) whose tags differ and can
    /// both bracket, in grid order.
    pub fn adjacent_brackets(&self) -> Vec<(&BasinCell, &BasinCell)> {
        let [n0, n1] = [self.grid.axes[0].count, self.grid.axes[1].count];
        let mut out = Vec::new();
        for i in 0..n0 {
            for j in 0..n1 {
                let a = self.cell(i, j);
                let right = (j + 1 < n1).then(|| self.cell(i, j + 1));
                let down = (i + 1 < n0).then(|| self.cell(i + 1, j));
                for b in [right, down].into_iter().flatten() {
                    if a.tag != b.tag && a.tag.is_bracketable() && b.tag.is_bracketable() {
                        out.push((a, b));
                    }
                }
            }
        }
        out
    }

    /// Straight path between two cells, ready for [`find_survivor`].
    pub fn bracket_path(a: &BasinCell, b: &BasinCell) -> PathParametrization {
        PathParametrization::segment(a.state.clone(), b.state.clone()).expect("cells share a dimension")
    }
}

/// Classifies every grid node. Cells inside the capture region are marked
/// Captured at `t0`; classification errors become Inconclusive cells.
pub fn sweep_basin(
    model: &SystemModel,
    controller: &Controller,
    grid: &GridSpec,
    horizon: f64,
    capture: &CaptureRegion,
    config: &IntegratorConfig,
) -> Result<BasinGrid, FinderError> {
    let n = model.dim();
    if grid.base.len() != n {
        return Err(FinderError::InvalidGrid(format!(
            "base state has {} components, system needs {n}",
            grid.base.len()
        )));
    }
    for axis in &grid.axes {
        if axis.coordinate >= n || axis.count == 0 || !(axis.min <= axis.max) {
            return Err(FinderError::InvalidGrid(format!("bad axis {axis:?}")));
        }
    }
    if grid.axes[0].coordinate == grid.axes[1].coordinate {
        return Err(FinderError::InvalidGrid("axes must vary different coordinates".into()));
    }
    let region = RegionSpec::new(model.kind);
    let (n0, n1) = (grid.axes[0].count, grid.axes[1].count);
    for (i, j) in [(0, 0), (0, n1 - 1), (n0 - 1, 0), (n0 - 1, n1 - 1)] {
        if !region.contains_closure(&grid.state(i, j)) {
            return Err(FinderError::InvalidGrid("grid leaves the closure of M".into()));
        }
    }
    capture.validate(model.kind)?;
    config.validate()?;

    let cells = (0..n0 * n1)
        .into_par_iter()
        .map(|k| {
            let (i, j) = (k / n1, k % n1);
            let state = grid.state(i, j);
            let cell = |tag, t: f64, detail| BasinCell {
                i,
                j,
                state: state.clone(),
                tag,
                exit_time_proxy: t,
                detail,
            };
            if capture.contains(&state) {
                return cell(FateTag::Captured, 0.0, None);
            }
            match classify(model, controller, &state, grid.t0, horizon, capture, config) {
                Ok(f) => cell(f.tag, f.exit_time_proxy, f.detail),
                Err(e) => cell(FateTag::Inconclusive, 0.0, Some(e.to_string())),
            }
        })
        .collect();
    Ok(BasinGrid {
        grid: grid.clone(),
        horizon,
        cells,
    })
}
