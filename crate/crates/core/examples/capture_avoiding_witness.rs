//! A PD law stabilizes the upright state, yet some solutions never reach
//! its capture region nor leave `(0, pi)`: they ride the stable manifold
//! of the saddle the law creates near `q = 0.42`.

use std::f64::consts::FRAC_PI_2;

use wazewski::dsl::{builtin, Controller, VarSet};
use wazewski::finders::{find_survivor, PathParametrization};
use wazewski::lyapunov::build_region;
use wazewski::{CaptureRegion, IntegratorConfig, SystemModel};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let model = SystemModel::simple();
    let law = builtin("pd", &[2.0, 1.0, FRAC_PI_2])?;
    let controller = Controller::new(VarSet::Planar, &law)?;
    let region = build_region(&model, &controller, &[FRAC_PI_2, 0.0], 0.0)?;
    println!("capture ball eps = {:.6}", region.eps);
    let capture = CaptureRegion::Ball(region);
    let config = IntegratorConfig::with_tolerances(1e-13, 1e-15);

    // Falling back through q = 0 at the bottom, captured at the top.
    let path = PathParametrization::segment(vec![0.8, -2.0], vec![0.8, 0.0])?;
    let result = find_survivor(&model, &controller, &path, 40.0, &capture, 0.0, &config)?;
    println!(
        "bracket {:?} vs {:?}, width {:.1e}",
        result.bracket.fate_lo,
        result.bracket.fate_hi,
        result.bracket_width()
    );
    println!("witness state ({:.12}, {:.12})", result.state_star[0], result.state_star[1]);
    println!("stays in M \\ B for t = {:.3} ({:?})", result.achieved_horizon, result.fate_star.tag);
    Ok(())
}
