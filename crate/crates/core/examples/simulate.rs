//! Integrates the uncontrolled pendulum and writes a sampled trajectory.

use std::f64::consts::FRAC_PI_2;

use wazewski::dsl::{Controller, VarSet};
use wazewski::output::write_trajectory_csv;
use wazewski::{integrate_closed_loop, IntegratorConfig, SystemKind, SystemModel};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let model = SystemModel::simple();
    let zero = Controller::zero(VarSet::Planar);
    let x0 = [FRAC_PI_2, 0.5];
    let run = integrate_closed_loop(&model, &zero, &x0, 0.0, 3.0, &[], &IntegratorConfig::default())?;
    let mut csv = Vec::new();
    let rows = write_trajectory_csv(&mut csv, SystemKind::Simple, &run.trajectory, 0.5)?;
    print!("{}", String::from_utf8(csv)?);
    let e0 = model.conserved_quantities(&x0)[0].1;
    let e1 = model.conserved_quantities(run.trajectory.end_state())[0].1;
    println!("{rows} rows, {} steps, energy change {:.1e}", run.trajectory.step_count(), e1 - e0);
    Ok(())
}
