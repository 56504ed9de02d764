//! Bisection between a left and a right exit lands on the stable manifold
//! of the upright saddle, where `p^2/2 + sin q = 1`.

use std::f64::consts::FRAC_PI_4;

use wazewski::dsl::{Controller, VarSet};
use wazewski::finders::{find_survivor, PathParametrization};
use wazewski::{CaptureRegion, IntegratorConfig, SystemModel};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = PathParametrization::segment(vec![FRAC_PI_4, -1.0], vec![FRAC_PI_4, 2.0])?;
    let r = find_survivor(
        &SystemModel::simple(),
        &Controller::zero(VarSet::Planar),
        &path,
        40.0,
        &CaptureRegion::None,
        1e-10,
        &IntegratorConfig::with_tolerances(1e-12, 1e-14),
    )?;
    for step in r.history.iter().take(6) {
        println!("[{:.6}, {:.6}] mid {:?}", step.s_lo, step.s_hi, step.fate_mid);
    }
    println!("... {} steps", r.history.len());
    let exact = (2.0 - 2f64.sqrt()).sqrt();
    println!("p0 = {:.12} (level set {exact:.12})", r.state_star[1]);
    println!("survives {:.2} time units before {:?}", r.achieved_horizon, r.fate_star.tag);
    Ok(())
}
