//! Scenario files and the `wazewski` subcommands.
//!
//! A scenario is a TOML document with a `[system]` table, optional
//! `[controller]`, `[integrator]` and `[capture]` tables, and one table per
//! subcommand that uses it. Unknown keys anywhere are rejected. See
//! `scenarios/` for one example per subcommand.
//!
//! Exit codes: 0 success, 1 other failure, 2 search or step budget
//! exhausted, 3 configuration error, 4 Lyapunov verification failure.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::dsl::{builtin, ControlLaw, Controller, ExprError};
use crate::fate::{classify, CaptureRegion, CylinderRegion, FateError, FateTag};
use crate::finders::{
    find_periodic, find_survivor, sweep_basin, FinderError, GridAxis, GridSpec, PathParametrization,
    PeriodicOptions,
};
use crate::integrator::{integrate_closed_loop, IntegrateError, IntegratorConfig};
use crate::linalg::Matrix;
use crate::lyapunov::{build_region_with, LyapunovError, LyapunovRegion, RegionOptions};
use crate::models::{ModelError, SphereVariant, SystemKind, SystemModel};
use crate::output::{
    coordinate_names, emit_trajectory_csv, sample_times, to_json, write_basin_csv, PlotSpec,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_OTHER: i32 = 1;
pub const EXIT_BUDGET: i32 = 2;
pub const EXIT_CONFIG: i32 = 3;
pub const EXIT_VERIFICATION: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "wazewski", version, about = "Witness trajectories for inverted-pendulum control laws")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Scenario file (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Directory for artifacts; created if missing.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Machine-readable status on stdout and diagnostics on stderr.
    #[arg(long, global = true)]
    pub json: bool,
    #[arg(long, global = true)]
    pub rtol: Option<f64>,
    #[arg(long, global = true)]
    pub atol: Option<f64>,
    /// Overrides the horizon (or the simulated span) of the command.
    #[arg(long, global = true)]
    pub horizon: Option<f64>,
    /// Overrides every random seed in the scenario.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; 0 picks automatically.
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Integrate and dump a trajectory.
    Simulate,
    /// Classify one initial state by its first exit.
    Classify,
    /// Bisect a path for a trajectory that neither exits nor is captured.
    Survivor,
    /// Find a periodic orbit of the forced damped pendulum.
    Periodic,
    /// Build and verify a quadratic capture region.
    Lyapunov,
    /// Classify a grid of initial states.
    Sweep,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Classify => "classify",
            Command::Survivor => "survivor",
            Command::Periodic => "periodic",
            Command::Lyapunov => "lyapunov",
            Command::Sweep => "sweep",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub system: SystemSection,
    #[serde(default)]
    pub controller: ControllerSection,
    #[serde(default)]
    pub integrator: IntegratorConfig,
    #[serde(default)]
    pub capture: CaptureSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulate: Option<SimulateSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classify: Option<ClassifySection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub survivor: Option<SurvivorSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub periodic: Option<PeriodicSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lyapunov: Option<LyapunovSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    pub kind: SystemKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub friction: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cart_mass: Option<f64>,
    /// Pivot torque law `w(q, p, t)` for the torque system.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub torque: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sphere_variant: Option<SphereVariant>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u: Option<String>,
    /// Second input, spherical pendulum only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub builtin: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bound: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub period: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CaptureKind {
    #[default]
    None,
    /// Built and verified from the linearization at `center`.
    Auto,
    /// Given explicitly by `center`, `matrix` and `eps`; not verified.
    Ball,
    Cylinder,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaptureSection {
    #[serde(default)]
    pub kind: CaptureKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub center: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shell_samples: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rng_seed: Option<u64>,
}

fn zero() -> f64 {
    0.0
}

fn default_sample_step() -> f64 {
    0.01
}

fn default_tol_s() -> f64 {
    1e-10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSection {
    pub state: Vec<f64>,
    #[serde(default = "zero")]
    pub t0: f64,
    pub t_end: f64,
    #[serde(default = "default_sample_step")]
    pub sample_step: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifySection {
    pub state: Vec<f64>,
    #[serde(default = "zero")]
    pub t0: f64,
    pub horizon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurvivorSection {
    pub waypoints: Vec<Vec<f64>>,
    pub horizon: f64,
    #[serde(default = "default_tol_s")]
    pub tol_s: f64,
    #[serde(default = "default_sample_step")]
    pub sample_step: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PeriodicSection {
    pub seeds: usize,
    pub rng_seed: u64,
    pub residual_tol: f64,
    pub check_periods: usize,
    /// Tolerances of the period-map integrator.
    pub rtol: f64,
    pub atol: f64,
    /// Rows per period in `orbit.csv`.
    pub samples_per_period: usize,
}

impl Default for PeriodicSection {
    fn default() -> Self {
        let o = PeriodicOptions::default();
        PeriodicSection {
            seeds: o.seeds,
            rng_seed: o.rng_seed,
            residual_tol: o.residual_tol,
            check_periods: o.check_periods,
            rtol: o.integrator.rtol,
            atol: o.integrator.atol,
            samples_per_period: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LyapunovSection {
    /// Equilibrium the region is built around.
    pub center: Vec<f64>,
    #[serde(default = "zero")]
    pub t0: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shell_samples: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rng_seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisSection {
    /// State coordinate name, e.g. `q` or `dphi`.
    pub coordinate: String,
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub axes: Vec<AxisSection>,
    /// Values of the coordinates not on an axis; zeros when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base: Option<Vec<f64>>,
    #[serde(default = "zero")]
    pub t0: f64,
    pub horizon: f64,
}

/// A failure with its exit code.
#[derive(Debug, Clone, PartialEq)]
pub struct CliError {
    pub code: i32,
    pub kind: &'static str,
    pub message: String,
    pub offset: Option<usize>,
}

impl CliError {
    fn config(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_CONFIG,
            kind: "config",
            message: message.into(),
            offset: None,
        }
    }

    fn other(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_OTHER,
            kind: "error",
            message: message.into(),
            offset: None,
        }
    }

    fn budget(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_BUDGET,
            kind: "budget",
            message: message.into(),
            offset: None,
        }
    }
}

impl From<ExprError> for CliError {
    fn from(e: ExprError) -> Self {
        let offset = match &e {
            ExprError::Syntax { offset, .. } | ExprError::UnknownIdentifier { offset, .. } => Some(*offset),
            _ => None,
        };
        CliError {
            offset,
            ..CliError::config(e.to_string())
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Control(inner) if !matches!(inner, ExprError::Domain { .. }) => inner.into(),
            ModelError::Parameter(_) | ModelError::Dimension { .. } | ModelError::ControllerMismatch { .. } => {
                CliError::config(e.to_string())
            }
            ModelError::NotAnEquilibrium { .. } => CliError::config(e.to_string()),
            other => CliError::other(other.to_string()),
        }
    }
}

impl From<IntegrateError> for CliError {
    fn from(e: IntegrateError) -> Self {
        match e {
            IntegrateError::StepBudgetExceeded { .. } | IntegrateError::StepUnderflow { .. } => {
                CliError::budget(e.to_string())
            }
            IntegrateError::InvalidConfig(_) => CliError::config(e.to_string()),
            IntegrateError::Model { source, .. } => source.into(),
            IntegrateError::OutOfSpan { .. } => CliError::other(e.to_string()),
        }
    }
}

impl From<LyapunovError> for CliError {
    fn from(e: LyapunovError) -> Self {
        match e {
            LyapunovError::NotHurwitz { .. } | LyapunovError::VerificationFailed { .. } => CliError {
                code: EXIT_VERIFICATION,
                kind: "verification",
                message: e.to_string(),
                offset: None,
            },
            LyapunovError::InvalidRegion(_) => CliError::config(e.to_string()),
            LyapunovError::Model(m) => m.into(),
            other => CliError::other(other.to_string()),
        }
    }
}

impl From<FateError> for CliError {
    fn from(e: FateError) -> Self {
        match e {
            FateError::PreconditionViolated(_) | FateError::InvalidCapture(_) => CliError::config(e.to_string()),
            FateError::Model(m) => m.into(),
            FateError::Integrator(i) => i.into(),
        }
    }
}

impl From<FinderError> for CliError {
    fn from(e: FinderError) -> Self {
        match e {
            FinderError::InconclusiveEncountered { .. } | FinderError::NoRootFound { .. } => {
                CliError::budget(e.to_string())
            }
            FinderError::InvalidPath(_) | FinderError::InvalidGrid(_) | FinderError::Precondition(_) => {
                CliError::config(e.to_string())
            }
            FinderError::Fate(f) => f.into(),
            FinderError::Integrate(i) => i.into(),
            FinderError::Lyapunov(l) => l.into(),
            other => CliError::other(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::other(e.to_string())
    }
}

/// Parses a scenario, rejecting unknown keys.
pub fn parse_config(text: &str) -> Result<ScenarioConfig, CliError> {
    toml::from_str(text).map_err(|e| CliError::config(e.to_string()))
}

/// Everything built from a validated scenario before any integration.
struct Setup {
    model: SystemModel,
    controller: Controller,
}

fn build_model(sys: &SystemSection) -> Result<SystemModel, CliError> {
    let reject = |field: &str| {
        Err(CliError::config(format!(
            "`system.{field}` does not apply to the {:?} system",
            sys.kind
        )))
    };
    if sys.friction.is_some() && sys.kind != SystemKind::Friction {
        return reject("friction");
    }
    if sys.cart_mass.is_some() && sys.kind != SystemKind::Cart {
        return reject("cart_mass");
    }
    if sys.torque.is_some() && sys.kind != SystemKind::Torque {
        return reject("torque");
    }
    if sys.sphere_variant.is_some() && sys.kind != SystemKind::Sphere {
        return reject("sphere_variant");
    }
    let model = match sys.kind {
        SystemKind::Simple => SystemModel::simple(),
        SystemKind::Friction => {
            let nu = sys
                .friction
                .ok_or_else(|| CliError::config("`system.friction` is required"))?;
            SystemModel::friction(nu)?
        }
        SystemKind::Cart => SystemModel::cart(sys.cart_mass.unwrap_or(1.0))?,
        SystemKind::Sphere => SystemModel::sphere(sys.sphere_variant.unwrap_or_default()),
        SystemKind::Torque => {
            let w = sys
                .torque
                .as_deref()
                .ok_or_else(|| CliError::config("`system.torque` is required"))?;
            SystemModel::torque(&ControlLaw::parse(w)?)?
        }
    };
    Ok(model)
}

fn build_controller(kind: SystemKind, c: &ControllerSection) -> Result<Controller, CliError> {
    let mut u = match (&c.u, &c.builtin) {
        (Some(_), Some(_)) => {
            return Err(CliError::config("give either `controller.u` or `controller.builtin`, not both"))
        }
        (Some(text), None) => {
            if c.params.is_some() {
                return Err(CliError::config("`controller.params` only applies to builtins"));
            }
            ControlLaw::parse(text)?
        }
        (None, Some(name)) => builtin(name, c.params.as_deref().unwrap_or(&[]))?,
        (None, None) => ControlLaw::zero(),
    };
    if let Some(b) = c.bound {
        if !(b >= 0.0) {
            return Err(CliError::config(format!("`controller.bound` must be >= 0, got {b}")));
        }
        u = u.with_bound(b);
    }
    if let Some(p) = c.period {
        if !(p > 0.0) {
            return Err(CliError::config(format!("`controller.period` must be > 0, got {p}")));
        }
        u = u.with_period(p);
    }
    let mut controller = Controller::new(kind.vars(), &u)?;
    if let Some(v) = &c.v {
        if kind != SystemKind::Sphere {
            return Err(CliError::config("`controller.v` is only used by the sphere system"));
        }
        let mut v = ControlLaw::parse(v)?;
        if let Some(b) = c.bound {
            v = v.with_bound(b);
        }
        controller = controller.with_v(&v)?;
    }
    Ok(controller)
}

fn check_state(kind: SystemKind, what: &str, state: &[f64]) -> Result<(), CliError> {
    if state.len() != kind.dim() {
        return Err(CliError::config(format!(
            "`{what}` has {} components, the {kind:?} system needs {} ({})",
            state.len(),
            kind.dim(),
            coordinate_names(kind).join(", ")
        )));
    }
    if state.iter().any(|v| !v.is_finite()) {
        return Err(CliError::config(format!("`{what}` must be finite")));
    }
    Ok(())
}

fn positive(what: &str, v: f64) -> Result<(), CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(CliError::config(format!("`{what}` must be positive, got {v}")))
    }
}

fn missing(command: Command) -> CliError {
    CliError::config(format!("the `{}` command needs a [{}] table", command.name(), command.name()))
}

/// Applies command-line overrides and fills defaults so that the result
/// reproduces the run when fed back in.
fn resolve(mut cfg: ScenarioConfig, cli: &Cli) -> ScenarioConfig {
    if let Some(r) = cli.rtol {
        cfg.integrator.rtol = r;
    }
    if let Some(a) = cli.atol {
        cfg.integrator.atol = a;
    }
    if let Some(h) = cli.horizon {
        match cli.command {
            Command::Simulate => {
                if let Some(s) = cfg.simulate.as_mut() {
                    s.t_end = s.t0 + h;
                }
            }
            Command::Classify => {
                if let Some(s) = cfg.classify.as_mut() {
                    s.horizon = h;
                }
            }
            Command::Survivor => {
                if let Some(s) = cfg.survivor.as_mut() {
                    s.horizon = h;
                }
            }
            Command::Sweep => {
                if let Some(s) = cfg.sweep.as_mut() {
                    s.horizon = h;
                }
            }
            Command::Periodic | Command::Lyapunov => {}
        }
    }
    let seed = cli.seed;
    let regions = RegionOptions::default();
    if cfg.capture.kind == CaptureKind::Auto {
        cfg.capture.rng_seed = Some(seed.or(cfg.capture.rng_seed).unwrap_or(regions.rng_seed));
        cfg.capture.shell_samples = Some(cfg.capture.shell_samples.unwrap_or(regions.shell_samples));
    }
    if cli.command == Command::Periodic {
        let p = cfg.periodic.get_or_insert_with(PeriodicSection::default);
        if let Some(s) = seed {
            p.rng_seed = s;
        }
    }
    if let Some(l) = cfg.lyapunov.as_mut() {
        l.rng_seed = Some(seed.or(l.rng_seed).unwrap_or(regions.rng_seed));
        l.shell_samples = Some(l.shell_samples.unwrap_or(regions.shell_samples));
    }
    cfg
}

fn validate(cfg: &ScenarioConfig, command: Command) -> Result<Setup, CliError> {
    let model = build_model(&cfg.system)?;
    let controller = build_controller(model.kind, &cfg.controller)?;
    cfg.integrator.validate()?;
    let kind = model.kind;
    match &cfg.capture.kind {
        CaptureKind::None => {
            if cfg.capture.center.is_some() || cfg.capture.matrix.is_some() || cfg.capture.eps.is_some() {
                return Err(CliError::config("capture fields given but `capture.kind` is \"none\""));
            }
        }
        CaptureKind::Auto => {
            let c = cfg.capture.center.as_ref().ok_or_else(|| CliError::config("`capture.center` is required"))?;
            check_state(kind, "capture.center", c)?;
        }
        CaptureKind::Ball | CaptureKind::Cylinder => {
            for (name, present) in [
                ("center", cfg.capture.center.is_some()),
                ("matrix", cfg.capture.matrix.is_some()),
                ("eps", cfg.capture.eps.is_some()),
            ] {
                if !present {
                    return Err(CliError::config(format!("`capture.{name}` is required")));
                }
            }
        }
    }
    match command {
        Command::Simulate => {
            let s = cfg.simulate.as_ref().ok_or_else(|| missing(command))?;
            check_state(kind, "simulate.state", &s.state)?;
            positive("simulate.sample_step", s.sample_step)?;
            if !(s.t_end > s.t0) {
                return Err(CliError::config("`simulate.t_end` must exceed `simulate.t0`"));
            }
        }
        Command::Classify => {
            let s = cfg.classify.as_ref().ok_or_else(|| missing(command))?;
            check_state(kind, "classify.state", &s.state)?;
            positive("classify.horizon", s.horizon)?;
        }
        Command::Survivor => {
            let s = cfg.survivor.as_ref().ok_or_else(|| missing(command))?;
            if s.waypoints.len() < 2 {
                return Err(CliError::config("`survivor.waypoints` needs at least two states"));
            }
            for w in &s.waypoints {
                check_state(kind, "survivor.waypoints", w)?;
            }
            positive("survivor.horizon", s.horizon)?;
            positive("survivor.sample_step", s.sample_step)?;
            if !(s.tol_s >= 0.0) {
                return Err(CliError::config("`survivor.tol_s` must be >= 0"));
            }
        }
        Command::Periodic => {
            let p = cfg.periodic.clone().unwrap_or_default();
            if kind != SystemKind::Friction {
                return Err(CliError::config("`periodic` needs the friction system"));
            }
            if controller.declared_period().is_none() || controller.declared_bound().is_none() {
                return Err(CliError::config(
                    "`periodic` needs a controller with a declared period and bound",
                ));
            }
            positive("periodic.residual_tol", p.residual_tol)?;
            if p.seeds == 0 || p.samples_per_period == 0 {
                return Err(CliError::config("`periodic.seeds` and `periodic.samples_per_period` must be >= 1"));
            }
        }
        Command::Lyapunov => {
            let l = cfg.lyapunov.as_ref().ok_or_else(|| missing(command))?;
            check_state(kind, "lyapunov.center", &l.center)?;
        }
        Command::Sweep => {
            let s = cfg.sweep.as_ref().ok_or_else(|| missing(command))?;
            if s.axes.len() != 2 {
                return Err(CliError::config("`sweep.axes` needs exactly two axes"));
            }
            for a in &s.axes {
                coordinate_index(kind, &a.coordinate)?;
                if a.count == 0 || !(a.min <= a.max) {
                    return Err(CliError::config(format!("bad sweep axis `{}`", a.coordinate)));
                }
            }
            if let Some(b) = &s.base {
                check_state(kind, "sweep.base", b)?;
            }
            positive("sweep.horizon", s.horizon)?;
        }
    }
    Ok(Setup { model, controller })
}

fn coordinate_index(kind: SystemKind, name: &str) -> Result<usize, CliError> {
    coordinate_names(kind).iter().position(|n| *n == name).ok_or_else(|| {
        CliError::config(format!(
            "`{name}` is not a coordinate of the {kind:?} system ({})",
            coordinate_names(kind).join(", ")
        ))
    })
}

fn build_capture(cfg: &ScenarioConfig, setup: &Setup) -> Result<(CaptureRegion, Option<String>), CliError> {
    let c = &cfg.capture;
    let matrix = || {
        Matrix::try_from_rows(c.matrix.as_ref().expect("validated"))
            .ok_or_else(|| CliError::config("`capture.matrix` must be a non-empty square matrix"))
    };
    let region = match c.kind {
        CaptureKind::None => CaptureRegion::None,
        CaptureKind::Auto => {
            let options = RegionOptions {
                shell_samples: c.shell_samples.unwrap_or(RegionOptions::default().shell_samples),
                rng_seed: c.rng_seed.unwrap_or(RegionOptions::default().rng_seed),
                time_samples: None,
            };
            let mu = c.center.as_ref().expect("validated");
            CaptureRegion::Ball(build_region_with(&setup.model, &setup.controller, mu, 0.0, &options)?)
        }
        CaptureKind::Ball => {
            let region = LyapunovRegion::new(c.center.clone().expect("validated"), matrix()?, c.eps.expect("validated"))
                .map_err(|e| CliError::config(e.to_string()))?;
            CaptureRegion::Ball(region)
        }
        CaptureKind::Cylinder => {
            let center = c.center.as_ref().expect("validated");
            if center.len() != 2 {
                return Err(CliError::config("cylinder `capture.center` is (q, p)"));
            }
            CaptureRegion::Cylinder(CylinderRegion {
                center: [center[0], center[1]],
                p: matrix()?,
                eps: c.eps.expect("validated"),
            })
        }
    };
    region.validate(setup.model.kind)?;
    let note = (c.kind == CaptureKind::Ball).then(|| "capture ball taken from the scenario without verification".to_string());
    Ok((region, note))
}

/// What a successful run wrote, and caveats about its result.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Report {
    pub artifacts: Vec<PathBuf>,
    pub warnings: Vec<String>,
}

fn lipschitz_warnings(setup: &Setup) -> Vec<String> {
    let mut warnings = Vec::new();
    if !setup.controller.lipschitz_clean() {
        warnings.push(
            "the control law uses sign or abs and is not locally Lipschitz; solutions may not be unique \
             and bisection results may not be continuous in the path parameter"
                .to_string(),
        );
    }
    if setup.model.torque.as_ref().is_some_and(|w| !w.law().lipschitz_clean) {
        warnings.push("the torque law uses sign or abs and is not locally Lipschitz".to_string());
    }
    warnings
}

fn execute(cfg: &ScenarioConfig, command: Command, out: &Path) -> Result<Report, CliError> {
    let setup = validate(cfg, command)?;
    let mut warnings = lipschitz_warnings(&setup);
    fs::create_dir_all(out)?;
    let mut written = Vec::new();
    let mut save_json = |name: &str, value: &dyn erased::Json| -> Result<(), CliError> {
        let path = out.join(name);
        fs::write(&path, value.json())?;
        written.push(path);
        Ok(())
    };
    let model = &setup.model;
    let controller = &setup.controller;
    let kind = model.kind;
    let resolved = toml::to_string_pretty(cfg).map_err(|e| CliError::other(e.to_string()))?;
    fs::write(out.join("resolved-config.toml"), resolved)?;

    match command {
        Command::Simulate => {
            let s = cfg.simulate.as_ref().expect("validated");
            let run = integrate_closed_loop(model, controller, &s.state, s.t0, s.t_end, &[], &cfg.integrator)?;
            let csv = out.join("trajectory.csv");
            emit_trajectory_csv(&csv, kind, &run.trajectory, s.sample_step).map_err(|e| CliError::other(e.to_string()))?;
            let times = sample_times(s.t0, s.t_end, s.sample_step);
            let states = run.trajectory.sample(&times)?;
            let plot = PlotSpec::trajectory("closed-loop trajectory", kind, &times, &states);
            let end = run.trajectory.end_state().to_vec();
            let summary = json!({
                "t0": s.t0,
                "t_end": s.t_end,
                "start_state": s.state,
                "end_state": end,
                "conserved_start": conserved(model, &s.state),
                "conserved_end": conserved(model, &end),
                "stats": run.stats,
            });
            save_json("simulate.json", &summary)?;
            save_json("trajectory.plot.json", &plot)?;
            written.push(csv);
        }
        Command::Classify => {
            let s = cfg.classify.as_ref().expect("validated");
            let (capture, note) = build_capture(cfg, &setup)?;
            warnings.extend(note);
            let fate = classify(model, controller, &s.state, s.t0, s.horizon, &capture, &cfg.integrator)?;
            save_json("fate.json", &fate)?;
            if fate.tag == FateTag::Inconclusive {
                return Err(CliError::budget(format!(
                    "classification inconclusive: {}",
                    fate.detail.unwrap_or_default()
                )));
            }
        }
        Command::Survivor => {
            let s = cfg.survivor.as_ref().expect("validated");
            let (capture, note) = build_capture(cfg, &setup)?;
            warnings.extend(note);
            let path = PathParametrization::new(s.waypoints.clone())?;
            let result = find_survivor(model, controller, &path, s.horizon, &capture, s.tol_s, &cfg.integrator)?;
            let lo: Vec<f64> = result.history.iter().map(|h| h.s_lo).collect();
            let hi: Vec<f64> = result.history.iter().map(|h| h.s_hi).collect();
            save_json("survivor.json", &result)?;
            save_json(
                "bracket_history.plot.json",
                &PlotSpec::bracket_history("bisection bracket", &lo, &hi),
            )?;
            if let Some(traj) = &result.trajectory {
                let csv = out.join("trajectory.csv");
                emit_trajectory_csv(&csv, kind, traj, s.sample_step).map_err(|e| CliError::other(e.to_string()))?;
                written.push(csv);
            }
        }
        Command::Periodic => {
            let p = cfg.periodic.clone().unwrap_or_default();
            let options = PeriodicOptions {
                seeds: p.seeds,
                rng_seed: p.rng_seed,
                residual_tol: p.residual_tol,
                check_periods: p.check_periods,
                integrator: IntegratorConfig {
                    rtol: p.rtol,
                    atol: p.atol,
                    ..cfg.integrator.clone()
                },
                ..PeriodicOptions::default()
            };
            let orbit = find_periodic(model, controller, &options)?;
            save_json("periodic_orbit.json", &orbit)?;
            let run = integrate_closed_loop(model, controller, &orbit.state_star, 0.0, orbit.period, &[], &options.integrator)?;
            let csv = out.join("orbit.csv");
            emit_trajectory_csv(&csv, kind, &run.trajectory, orbit.period / p.samples_per_period as f64)
                .map_err(|e| CliError::other(e.to_string()))?;
            written.push(csv);
        }
        Command::Lyapunov => {
            let l = cfg.lyapunov.as_ref().expect("validated");
            let options = RegionOptions {
                shell_samples: l.shell_samples.unwrap_or(RegionOptions::default().shell_samples),
                rng_seed: l.rng_seed.unwrap_or(RegionOptions::default().rng_seed),
                time_samples: None,
            };
            let region = build_region_with(model, controller, &l.center, l.t0, &options)?;
            save_json("region.json", &region)?;
        }
        Command::Sweep => {
            let s = cfg.sweep.as_ref().expect("validated");
            let (capture, note) = build_capture(cfg, &setup)?;
            warnings.extend(note);
            let axis = |a: &AxisSection| -> Result<GridAxis, CliError> {
                Ok(GridAxis {
                    coordinate: coordinate_index(kind, &a.coordinate)?,
                    min: a.min,
                    max: a.max,
                    count: a.count,
                })
            };
            let grid = GridSpec {
                axes: [axis(&s.axes[0])?, axis(&s.axes[1])?],
                base: s.base.clone().unwrap_or_else(|| vec![0.0; kind.dim()]),
                t0: s.t0,
            };
            let basin = sweep_basin(model, controller, &grid, s.horizon, &capture, &cfg.integrator)?;
            let mut csv_buf = Vec::new();
            write_basin_csv(&mut csv_buf, kind, &basin)?;
            let csv = out.join("basin.csv");
            fs::write(&csv, csv_buf)?;
            save_json("basin.json", &basin)?;
            save_json("basin.plot.json", &PlotSpec::basin("fate by initial state", kind, &basin))?;
            written.push(csv);
        }
    }
    written.push(out.join("resolved-config.toml"));
    Ok(Report {
        artifacts: written,
        warnings,
    })
}

fn conserved(model: &SystemModel, state: &[f64]) -> serde_json::Value {
    let map: serde_json::Map<String, serde_json::Value> = model
        .conserved_quantities(state)
        .into_iter()
        .map(|(k, v)| (k.to_string(), json!(v)))
        .collect();
    serde_json::Value::Object(map)
}

mod erased {
    use serde::Serialize;

    /// Object-safe JSON rendering for the artifact writer.
    pub trait Json {
        fn json(&self) -> String;
    }

    impl<T: Serialize> Json for T {
        fn json(&self) -> String {
            crate::output::to_json(self)
        }
    }
}

/// Loads, validates and runs a scenario with the given flags.
pub fn run_cli(cli: &Cli) -> Result<Report, CliError> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::config("--config is required"))?;
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
    let cfg = resolve(parse_config(&text)?, cli);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build()
        .map_err(|e| CliError::other(e.to_string()))?;
    pool.install(|| execute(&cfg, cli.command, &cli.out))
}

/// Entry point for the binary: parses `args`, runs, reports, and returns
/// the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_CONFIG,
            };
            let _ = e.print();
            return code;
        }
    };
    match run_cli(&cli) {
        Ok(report) => {
            let names: Vec<String> = report.artifacts.iter().map(|p| p.display().to_string()).collect();
            if cli.json {
                println!(
                    "{}",
                    json!({
                        "status": "ok",
                        "command": cli.command.name(),
                        "exit_code": EXIT_OK,
                        "artifacts": names,
                        "warnings": report.warnings,
                    })
                );
            } else {
                for w in &report.warnings {
                    eprintln!("warning: {w}");
                }
                for n in names {
                    println!("wrote {n}");
                }
            }
            EXIT_OK
        }
        Err(err) => {
            if cli.json {
                let mut doc = json!({
                    "status": "error",
                    "command": cli.command.name(),
                    "exit_code": err.code,
                    "kind": err.kind,
                    "message": err.message,
                });
                if let Some(offset) = err.offset {
                    doc["offset"] = json!(offset);
                }
                eprintln!("{doc}");
            } else {
                eprintln!("error: {}", err.message);
            }
            err.code
        }
    }
}

/// Renders `value` the way artifacts are written.
pub fn render_json<T: Serialize>(value: &T) -> String {
    to_json(value)
}
