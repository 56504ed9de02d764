//! Coarse fate map of the uncontrolled pendulum, and the adjacent cells
//! that bracket a separatrix.

use wazewski::dsl::{Controller, VarSet};
use wazewski::finders::{sweep_basin, GridSpec};
use wazewski::{CaptureRegion, FateTag, IntegratorConfig, SystemModel};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let grid = GridSpec::planar((0.1, 3.0, 15), (-1.5, 1.5, 9));
    let basin = sweep_basin(
        &SystemModel::simple(),
        &Controller::zero(VarSet::Planar),
        &grid,
        60.0,
        &CaptureRegion::None,
        &IntegratorConfig::default(),
    )?;
    for j in (0..9).rev() {
        let row: String = (0..15)
            .map(|i| match basin.cell(i, j).tag {
                FateTag::ExitLeft => 'L',
                FateTag::ExitRight => 'R',
                FateTag::Survived => 'S',
                _ => '?',
            })
            .collect();
        println!("p = {:+.3}  {row}", grid.axes[1].value(j));
    }
    println!("{} adjacent pairs with different fates", basin.adjacent_brackets().len());
    Ok(())
}
