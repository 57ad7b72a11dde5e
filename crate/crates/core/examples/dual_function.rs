//! Tabulates the dual function and its residual across y*.
use habitform::fbp::FbpOptions;
use habitform::params::ModelParams;
use habitform::verify::log_grid;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let policy = habitform::solve(&ModelParams::reference(), &FbpOptions::default())?;
    let dual = &policy.dual;
    println!("{:>12} {:>14} {:>14} {:>14} {:>10}", "y", "u", "u'", "u''", "residual");
    for y in log_grid(dual.y_min(), 10.0 * dual.y_star(), 15) {
        println!(
            "{y:12.4e} {:14.6e} {:14.6e} {:14.6e} {:10.2e}",
            dual.u(y)?,
            dual.u_prime(y)?,
            dual.u_second(y)?,
            dual.dual_residual(y)?
        );
    }
    println!("pasting mismatch {:.2e}", dual.pasting().max());
    Ok(())
}
