//! Fates of a few initial states of the uncontrolled pendulum.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

use wazewski::dsl::{Controller, VarSet};
use wazewski::{classify, CaptureRegion, IntegratorConfig, SystemModel};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let model = SystemModel::simple();
    let zero = Controller::zero(VarSet::Planar);
    let config = IntegratorConfig::default();
    for x0 in [[0.0, 0.0], [FRAC_PI_4, 0.0], [FRAC_PI_4, 2.0], [FRAC_PI_2, 0.0], [FRAC_PI_2, 2.0]] {
        let fate = classify(&model, &zero, &x0, 0.0, 20.0, &CaptureRegion::None, &config)?;
        println!("({:.4}, {:.4}) -> {:?} at t = {:.6}", x0[0], x0[1], fate.tag, fate.t_event);
    }
    Ok(())
}
