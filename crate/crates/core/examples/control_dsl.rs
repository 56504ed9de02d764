//! Control laws as text: parsing, evaluation, variable checks and errors.

use wazewski::dsl::{builtin, parse, ControlLaw, Controller, VarSet};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let e = parse("sat(-3*(q - pi/2) - p, -1, 1) + 0.1*sin(2*pi*t)")?;
    println!("parsed: {e}");
    let u = e.eval(&[("q", 1.0), ("p", 0.2), ("t", 0.25)])?;
    println!("u(q=1, p=0.2, t=0.25) = {u:.6}");

    let swing = builtin("energy_swingup", &[2.0, 1.5])?;
    let c = Controller::new(VarSet::Planar, &swing)?;
    println!("swing-up bound {:?}, u at (0.5, 1.0) = {:.6}", c.declared_bound(), c.u.eval_raw(&[0.5, 1.0], 0.0)?);

    match ControlLaw::parse("sin(q") {
        Err(err) => println!("rejected: {err}"),
        Ok(_) => unreachable!(),
    }
    match Controller::from_text(VarSet::Planar, "theta + q") {
        Err(err) => println!("rejected: {err}"),
        Ok(_) => unreachable!(),
    }
    Ok(())
}
