//! Solve the reference model and print the free boundary.
use habitform::fbp::FbpOptions;
use habitform::params::ModelParams;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let policy = habitform::solve(&ModelParams::reference(), &FbpOptions::default())?;
    println!("y*     = {:.10}", policy.dual.y_star());
    println!("x*     = {:.10}", policy.x_star);
    println!("x_min  = {:.10}", policy.x_floor());
    println!("x_max  = {:.4e}", policy.x_max);
    println!("beta^  = {:.6}", policy.beta_hat);
    Ok(())
}
