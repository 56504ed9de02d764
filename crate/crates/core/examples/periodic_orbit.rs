//! A forced damped pendulum has a periodic solution that never leaves
//! `(0, pi)`, found as a saddle fixed point of the period map.

use std::f64::consts::PI;

use wazewski::dsl::{builtin, Controller, VarSet};
use wazewski::finders::{find_periodic, PeriodicOptions};
use wazewski::SystemModel;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let model = SystemModel::friction(0.5)?;
    let u = Controller::new(VarSet::Planar, &builtin("periodic_forcing", &[0.5, 2.0 * PI])?)?;
    let orbit = find_periodic(&model, &u, &PeriodicOptions::default())?;
    println!("x* = ({:.10}, {:.10}), T = {}", orbit.state_star[0], orbit.state_star[1], orbit.period);
    println!("residual {:.1e} after {} Newton steps from {}", orbit.residual, orbit.newton_iterations, orbit.origin);
    println!("multipliers {:?}", orbit.multipliers.iter().map(|m| m.re).collect::<Vec<_>>());
    println!("index {}, q stays in [{:.4}, {:.4}]", orbit.index, orbit.q_range[0], orbit.q_range[1]);
    Ok(())
}
