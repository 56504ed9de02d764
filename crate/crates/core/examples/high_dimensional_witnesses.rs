//! Survivors for the spherical pendulum and the cart-pole, both with
//! zero control.

use std::f64::consts::FRAC_PI_4;

use wazewski::dsl::{Controller, VarSet};
use wazewski::finders::{find_survivor_highdim, PathParametrization};
use wazewski::integrator::integrate_closed_loop;
use wazewski::{CaptureRegion, IntegratorConfig, SphereVariant, SystemModel};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let config = IntegratorConfig::with_tolerances(1e-12, 1e-14);

    // With no azimuthal motion the sphere reduces to a planar pendulum in phi.
    let sphere = SystemModel::sphere(SphereVariant::Standard);
    let zero = Controller::zero(VarSet::Sphere);
    let path = PathParametrization::segment(vec![0.3, 0.0, 0.0, 0.0], vec![0.3, 3.0, 0.0, 0.0])?;
    let r = find_survivor_highdim(&sphere, &zero, &path, 15.0, &CaptureRegion::None, 1e-12, &config)?;
    let exact = (2.0 * (1.0 - 0.3f64.sin())).sqrt();
    println!(
        "sphere: dphi0 = {:.10} (energy level {:.10}), horizon {:.2}, {:?}/{:?}",
        r.state_star[1], exact, r.achieved_horizon, r.bracket.fate_lo, r.bracket.fate_hi
    );

    let cart = SystemModel::cart(1.0)?;
    let zero = Controller::zero(VarSet::Cart);
    let path = PathParametrization::segment(vec![FRAC_PI_4, -1.0, 0.0, 0.0], vec![FRAC_PI_4, 2.0, 0.0, 0.0])?;
    let r = find_survivor_highdim(&cart, &zero, &path, 40.0, &CaptureRegion::None, 1e-12, &config)?;
    let end = r.achieved_horizon;
    let run = integrate_closed_loop(&cart, &zero, &r.state_star, 0.0, end, &[], &config)?;
    let j0 = cart.conserved_quantities(&r.state_star)[0].1;
    let drift = run
        .trajectory
        .fold_samples(8, 0.0f64, |acc, _t, x| acc.max((cart.conserved_quantities(x)[0].1 - j0).abs()));
    println!(
        "cart: p0 = {:.10}, horizon {:.2}, momentum drift {:.1e}",
        r.state_star[1], r.achieved_horizon, drift
    );
    Ok(())
}
