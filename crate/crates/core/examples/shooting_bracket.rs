//! Shows how the shooting parameter bracket closes.
use habitform::fbp::{solve_free_boundary_with, FbpOptions};
use habitform::params::ModelParams;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let c = ModelParams::reference().derive()?;
    let s = solve_free_boundary_with(&c, &FbpOptions::default())?;
    for (k, b) in s.history.iter().enumerate() {
        println!("{k:3} eta={:.15} {:>10} at y={:.6e}", b.eta, b.exit.label(), b.exit_y);
    }
    println!("bracket ({:.15}, {:.15}), {} segments", s.eta_bracket.0, s.eta_bracket.1, s.segments);
    println!("H(y_min)/(kappa/rho) = {:.6}", s.h_at_floor() / c.h_top());
    Ok(())
}
