//! Quadratic capture region for a PD law, and two laws that have none.

use std::f64::consts::FRAC_PI_2;

use wazewski::dsl::{builtin, Controller, VarSet};
use wazewski::lyapunov::build_region;
use wazewski::SystemModel;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let model = SystemModel::simple();
    let upright = [FRAC_PI_2, 0.0];
    for gains in [[2.0, 1.0], [0.5, 1.0], [0.0, 0.0]] {
        let law = builtin("pd", &[gains[0], gains[1], FRAC_PI_2])?;
        let c = Controller::new(VarSet::Planar, &law)?;
        match build_region(&model, &c, &upright, 0.0) {
            Ok(region) => {
                println!("pd{gains:?}: P = {:?}, eps = {:.6}", region.p.rows(), region.eps);
                if let Some(r) = &region.report {
                    println!("  halved {} times, min -dV/dt {:.3e}", r.shrink_count, r.min_margin);
                }
            }
            Err(e) => println!("pd{gains:?}: {e}"),
        }
    }
    Ok(())
}
