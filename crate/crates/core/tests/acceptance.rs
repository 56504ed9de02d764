//! Acceptance checks, one PASS/FAIL line each. Runs without the libtest
//! harness so the lines come out in order.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};
use std::fs;
use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use wazewski::dsl::{builtin, ControlLaw, Controller, VarSet};
use wazewski::fate::{openness_check, RegionSpec};
use wazewski::finders::{find_periodic, find_survivor, find_survivor_highdim, PathParametrization, PeriodicOptions};
use wazewski::integrator::{integrate, FnField};
use wazewski::lyapunov::{build_region, LyapunovError};
use wazewski::{classify, integrate_closed_loop, CaptureRegion, FateTag, IntegratorConfig, SphereVariant, SystemModel};

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn tight() -> IntegratorConfig {
    IntegratorConfig::with_tolerances(1e-12, 1e-14)
}

/// Largest deviation of the first conserved quantity along `traj`.
fn drift(model: &SystemModel, traj: &wazewski::DenseTrajectory) -> f64 {
    let c0 = model.conserved_quantities(traj.start_state())[0].1;
    traj.fold_samples(4, 0.0f64, |m, _t, x| m.max((model.conserved_quantities(x)[0].1 - c0).abs()))
}

fn separatrix() -> Outcome {
    let start = Instant::now();
    let model = SystemModel::simple();
    let zero = Controller::zero(VarSet::Planar);
    let path = PathParametrization::segment(vec![FRAC_PI_4, -1.0], vec![FRAC_PI_4, 2.0]).map_err(err)?;
    let r = find_survivor(&model, &zero, &path, 40.0, &CaptureRegion::None, 1e-10, &tight()).map_err(err)?;
    let elapsed = start.elapsed().as_secs_f64();
    let p0 = (2.0 - 2f64.sqrt()).sqrt();
    let dp = (r.state_star[1] - p0).abs();
    ensure(dp <= 1e-6, format!("p0 off by {dp:e}"))?;
    ensure(r.achieved_horizon >= 18.0, format!("horizon {}", r.achieved_horizon))?;
    ensure(r.bracket_width() <= 1e-10 || r.fate_star.tag == FateTag::Survived, "bracket too wide")?;
    ensure(elapsed < 10.0, format!("took {elapsed:.1} s"))?;
    Ok(format!(
        "p0 error {dp:.1e}, horizon {:.1}, width {:.1e}, {elapsed:.2} s",
        r.achieved_horizon,
        r.bracket_width()
    ))
}

fn tangency() -> Outcome {
    let model = SystemModel::simple();
    let zero = Controller::zero(VarSet::Planar);
    let f = classify(&model, &zero, &[0.0, 0.0], 0.0, 10.0, &CaptureRegion::None, &tight()).map_err(err)?;
    ensure(f.tag == FateTag::ExitLeft && f.t_event == 0.0, format!("{:?} at {}", f.tag, f.t_event))?;
    let run = integrate_closed_loop(&model, &zero, &[0.0, 0.0], 0.0, 0.1, &[], &tight()).map_err(err)?;
    let q = run.trajectory.end_state()[0];
    ensure((q + 0.005).abs() <= 5e-4, format!("q(0.1) = {q}"))?;
    Ok(format!("ExitLeft at t = 0, q(0.1) = {q:.6}"))
}

fn conservation() -> Outcome {
    let cfg = IntegratorConfig::with_tolerances(1e-10, 1e-12);
    let cases: [(&str, SystemModel, VarSet, Vec<f64>, f64); 4] = [
        ("simple", SystemModel::simple(), VarSet::Planar, vec![0.5, 0.0], 100.0),
        ("cart", SystemModel::cart(1.0).map_err(err)?, VarSet::Cart, vec![FRAC_PI_4, 0.0, 0.0, 0.1], 50.0),
        ("verbatim", SystemModel::sphere(SphereVariant::Verbatim), VarSet::Sphere, vec![0.5, 0.0, 0.0, 0.5], 50.0),
        ("standard", SystemModel::sphere(SphereVariant::Standard), VarSet::Sphere, vec![0.5, 0.0, 0.0, 0.5], 50.0),
    ];
    let mut parts = Vec::new();
    for (name, model, vars, x0, t_end) in cases {
        let run = integrate_closed_loop(&model, &Controller::zero(vars), &x0, 0.0, t_end, &[], &cfg).map_err(err)?;
        let d = drift(&model, &run.trajectory);
        ensure(d <= 1e-8, format!("{name} drift {d:e}"))?;
        parts.push(format!("{name} {d:.1e}"));
    }
    Ok(parts.join(", "))
}

fn lyapunov_construction() -> Outcome {
    let model = SystemModel::simple();
    let pd = |kp: f64| Controller::new(VarSet::Planar, &builtin("pd", &[kp, 1.0, FRAC_PI_2]).unwrap()).unwrap();
    let region = build_region(&model, &pd(2.0), &[FRAC_PI_2, 0.0], 0.0).map_err(err)?;
    let want = [[1.5, 0.5], [0.5, 1.0]];
    let rows = region.p.rows();
    let perr = (0..2)
        .flat_map(|i| (0..2).map(move |j| (i, j)))
        .map(|(i, j)| (rows[i][j] - want[i][j]).abs())
        .fold(0.0, f64::max);
    ensure(perr <= 1e-10, format!("P error {perr:e}"))?;
    let report = region.report.as_ref().ok_or("no verification report")?;
    ensure(region.eps > 1e-4, format!("eps {}", region.eps))?;
    ensure(report.min_margin > 0.0, format!("min -V' = {}", report.min_margin))?;
    ensure(report.shell_samples >= 1000, "too few shell samples")?;
    let weak = build_region(&model, &pd(0.5), &[FRAC_PI_2, 0.0], 0.0);
    ensure(matches!(weak, Err(LyapunovError::NotHurwitz { .. })), format!("pd(0.5) gave {weak:?}"))?;
    let saddle = build_region(&model, &Controller::zero(VarSet::Planar), &[FRAC_PI_2, 0.0], 0.0);
    ensure(
        matches!(saddle, Err(LyapunovError::NotHurwitz { .. } | LyapunovError::VerificationFailed { .. })),
        format!("saddle gave {saddle:?}"),
    )?;
    Ok(format!(
        "P error {perr:.1e}, eps {:.4}, min -V' {:.2e} over {} samples; weak gain and saddle rejected",
        region.eps, report.min_margin, report.shell_samples
    ))
}

fn capture_avoiding() -> Outcome {
    let model = SystemModel::simple();
    let pd = Controller::new(VarSet::Planar, &builtin("pd", &[2.0, 1.0, FRAC_PI_2]).map_err(err)?).map_err(err)?;
    let region = build_region(&model, &pd, &[FRAC_PI_2, 0.0], 0.0).map_err(err)?;
    let capture = CaptureRegion::Ball(region.clone());
    let cfg = IntegratorConfig::with_tolerances(1e-13, 1e-15);
    let path = PathParametrization::segment(vec![0.8, -2.0], vec![0.8, 0.0]).map_err(err)?;
    let r = find_survivor(&model, &pd, &path, 40.0, &capture, 0.0, &cfg).map_err(err)?;
    let mut fates = [r.bracket.fate_lo, r.bracket.fate_hi];
    fates.sort_by_key(|f| f.name());
    ensure(fates == [FateTag::Captured, FateTag::ExitLeft], format!("bracket {fates:?}"))?;
    let horizon = 30.0;
    let run = integrate_closed_loop(&model, &pd, &r.state_star, 0.0, horizon, &[], &cfg).map_err(err)?;
    let domain = RegionSpec::new(model.kind);
    let (min_gap, min_dist) = run.trajectory.fold_samples(8, (f64::INFINITY, f64::INFINITY), |(g, d), _t, x| {
        (g.min(region.value(x) - region.eps), d.min(domain.boundary_distance(x)))
    });
    ensure(min_gap > 0.0, format!("min V - eps = {min_gap:e}"))?;
    ensure(min_dist > 0.0, format!("min distance to boundary {min_dist:e}"))?;
    Ok(format!(
        "witness ({:.10}, {:.10}) stays {:.2} time units; over [0, 30] min V - eps = {min_gap:.2e}, min distance {min_dist:.3}",
        r.state_star[0], r.state_star[1], r.achieved_horizon
    ))
}

fn periodic() -> Outcome {
    let start = Instant::now();
    let model = SystemModel::friction(0.5).map_err(err)?;
    let u = Controller::new(VarSet::Planar, &builtin("periodic_forcing", &[0.5, 2.0 * PI]).map_err(err)?).map_err(err)?;
    let orbit = find_periodic(&model, &u, &PeriodicOptions::default()).map_err(err)?;
    ensure(orbit.residual <= 1e-8, format!("residual {:e}", orbit.residual))?;
    ensure(orbit.return_errors.len() == 10, "expected 10 periods")?;
    let worst = orbit.return_errors.iter().cloned().fold(0.0, f64::max);
    ensure(worst <= 1e-6, format!("return error {worst:e}"))?;
    ensure(orbit.q_range[0] > 0.0 && orbit.q_range[1] < PI, format!("q range {:?}", orbit.q_range))?;

    let damped = SystemModel::friction(1.0).map_err(err)?;
    let zero = Controller::new(VarSet::Planar, &ControlLaw::zero().with_period(1.0)).map_err(err)?;
    let fixed = find_periodic(&damped, &zero, &PeriodicOptions::default()).map_err(err)?;
    let off = (fixed.state_star[0] - FRAC_PI_2).abs().max(fixed.state_star[1].abs());
    ensure(off < 1e-8, format!("fixed point {:?}", fixed.state_star))?;
    ensure(fixed.index == -1, format!("index {}", fixed.index))?;
    let elapsed = start.elapsed().as_secs_f64();
    ensure(elapsed < 30.0, format!("took {elapsed:.1} s"))?;
    Ok(format!(
        "orbit ({:.8}, {:.8}) residual {:.1e}, worst return {worst:.1e}; equilibrium index {}; {elapsed:.2} s",
        orbit.state_star[0], orbit.state_star[1], orbit.residual, fixed.index
    ))
}

fn higher_dimensions() -> Outcome {
    let cfg = tight();
    let sphere = SystemModel::sphere(SphereVariant::Standard);
    let path = PathParametrization::segment(vec![0.3, 0.0, 0.0, 0.0], vec![0.3, 3.0, 0.0, 0.0]).map_err(err)?;
    let r = find_survivor_highdim(&sphere, &Controller::zero(VarSet::Sphere), &path, 15.0, &CaptureRegion::None, 1e-12, &cfg)
        .map_err(err)?;
    let exact = (2.0 * (1.0 - 0.3f64.sin())).sqrt();
    let ds = (r.state_star[1] - exact).abs();
    ensure(ds <= 1e-5, format!("sphere value off by {ds:e}"))?;

    let cart = SystemModel::cart(1.0).map_err(err)?;
    let zero = Controller::zero(VarSet::Cart);
    let path = PathParametrization::segment(vec![FRAC_PI_4, -1.0, 0.0, 0.0], vec![FRAC_PI_4, 2.0, 0.0, 0.0]).map_err(err)?;
    let c = find_survivor_highdim(&cart, &zero, &path, 40.0, &CaptureRegion::None, 1e-12, &cfg).map_err(err)?;
    ensure(c.achieved_horizon >= 15.0, format!("cart horizon {}", c.achieved_horizon))?;
    let traj = c.trajectory.as_ref().ok_or("no witness trajectory")?;
    let d = drift(&cart, traj);
    ensure(d <= 1e-8, format!("momentum drift {d:e}"))?;
    Ok(format!(
        "sphere error {ds:.1e}; cart horizon {:.2}, momentum drift {d:.1e}",
        c.achieved_horizon
    ))
}

fn openness() -> Outcome {
    let cfg = IntegratorConfig::default();
    let planar = VarSet::Planar;
    let pd = Controller::new(planar, &builtin("pd", &[2.0, 1.0, FRAC_PI_2]).map_err(err)?).map_err(err)?;
    let ball = CaptureRegion::Ball(build_region(&SystemModel::simple(), &pd, &[FRAC_PI_2, 0.0], 0.0).map_err(err)?);
    let forcing = Controller::new(planar, &builtin("periodic_forcing", &[0.5, 2.0 * PI]).map_err(err)?).map_err(err)?;
    let systems: Vec<(SystemModel, Controller, CaptureRegion)> = vec![
        (SystemModel::simple(), Controller::zero(planar), CaptureRegion::None),
        (SystemModel::simple(), pd, ball),
        (SystemModel::friction(0.5).map_err(err)?, forcing, CaptureRegion::None),
        (
            SystemModel::torque(&ControlLaw::parse("0.2*sin(t)").map_err(err)?).map_err(err)?,
            Controller::zero(planar),
            CaptureRegion::None,
        ),
        (SystemModel::cart(1.0).map_err(err)?, Controller::zero(VarSet::Cart), CaptureRegion::None),
        (SystemModel::sphere(SphereVariant::Standard), Controller::zero(VarSet::Sphere), CaptureRegion::None),
        (SystemModel::sphere(SphereVariant::Verbatim), Controller::zero(VarSet::Sphere), CaptureRegion::None),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (mut total, mut agreed, mut explained) = (0, 0, 0);
    while total < 100 {
        let (model, controller, capture) = &systems[total % systems.len()];
        let x: Vec<f64> = match model.dim() {
            2 => vec![rng.random_range(0.05..PI - 0.05), rng.random_range(-2.0..2.0)],
            _ if model.kind == wazewski::SystemKind::Cart => vec![
                rng.random_range(0.05..PI - 0.05),
                rng.random_range(-2.0..2.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            ],
            _ => vec![
                rng.random_range(0.05..1.4),
                rng.random_range(-1.0..1.0),
                rng.random_range(-PI..PI),
                rng.random_range(-1.0..1.0),
            ],
        };
        if capture.contains(&x) {
            continue;
        }
        total += 1;
        let report = openness_check(model, controller, &x, 0.0, 10.0, capture, &cfg).map_err(err)?;
        if report.agree {
            agreed += 1;
            continue;
        }
        // A disagreement is acceptable only next to a fate boundary.
        let dirs = wazewski::fate::perturbation_directions(x.len());
        let k = report.perturbed.iter().position(|t| *t != report.tag).unwrap();
        let y: Vec<f64> = x.iter().zip(&dirs[k]).map(|(a, b)| a + 1e-9 * b).collect();
        let path = PathParametrization::segment(x.clone(), y).map_err(err)?;
        if find_survivor(model, controller, &path, 10.0, capture, 1e-3, &cfg).is_ok() {
            explained += 1;
        }
    }
    let rate = agreed as f64 / total as f64;
    ensure(rate >= 0.99, format!("{agreed}/{total} agree"))?;
    ensure(agreed + explained == total, "a disagreement is not next to a fate boundary")?;
    Ok(format!("{agreed}/{total} agree, {explained} next to a boundary"))
}

fn integrator_order() -> Outcome {
    let field = FnField {
        dim: 2,
        f: |_t: f64, y: &[f64], dy: &mut [f64]| {
            dy[0] = y[1];
            dy[1] = -y[0];
        },
    };
    let mut errors = Vec::new();
    for tol in [1e-6, 1e-8, 1e-10] {
        let run = integrate(&field, &[1.0, 0.0], 0.0, 2.0 * PI, &[], &IntegratorConfig::with_tolerances(tol, tol))
            .map_err(err)?;
        let y = run.trajectory.end_state();
        errors.push(((y[0] - 1.0).powi(2) + y[1].powi(2)).sqrt());
    }
    ensure(errors[0] > errors[1] && errors[1] > errors[2], format!("not monotone: {errors:?}"))?;
    ensure(errors[2] <= 1e-8, format!("error {:e} at rtol 1e-10", errors[2]))?;
    Ok(format!("errors {:.1e}, {:.1e}, {:.1e}", errors[0], errors[1], errors[2]))
}

fn json_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

fn reproducibility() -> Outcome {
    let scenarios = Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios");
    let tmp = tempfile::tempdir().map_err(err)?;
    let mut compared = 0;
    for (command, file) in [
        ("lyapunov", "lyapunov_pd.toml"),
        ("sweep", "basin_sweep.toml"),
        ("periodic", "periodic_forced.toml"),
        ("survivor", "separatrix.toml"),
    ] {
        let mut outputs = Vec::new();
        for (run, threads) in ["1", "4", "4"].iter().enumerate() {
            let out = tmp.path().join(format!("{command}-{run}"));
            let code = wazewski::cli::run([
                "wazewski",
                command,
                "--config",
                scenarios.join(file).to_str().unwrap(),
                "--out",
                out.to_str().unwrap(),
                "--json",
                "--threads",
                threads,
            ]);
            ensure(code == 0, format!("{command} exited with {code}"))?;
            outputs.push(json_files(&out));
        }
        ensure(!outputs[0].is_empty(), format!("{command} wrote no JSON"))?;
        ensure(outputs.iter().all(|o| *o == outputs[0]), format!("{command} artifacts differ"))?;
        compared += outputs[0].len();
    }
    Ok(format!("{compared} JSON artifacts identical across 3 runs and thread counts 1/4"))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("separatrix witness", separatrix),
        ("external tangency", tangency),
        ("conservation", conservation),
        ("lyapunov construction", lyapunov_construction),
        ("capture-avoiding witness", capture_avoiding),
        ("periodic witness", periodic),
        ("higher-dimension witnesses", higher_dimensions),
        ("fate openness", openness),
        ("integrator order", integrator_order),
        ("reproducibility", reproducibility),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        match check() {
            Ok(detail) => println!("PASS {:>2} {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {detail}", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
