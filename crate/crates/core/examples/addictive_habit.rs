//! With alpha = 1 consumption can never fall below the habit, so the
//! minimum ratio rises to 1/r and the agent needs a large buffer before
//! consuming above habit.
use habitform::fbp::FbpOptions;
use habitform::params::ModelParams;
use habitform::verify::{verify, VerifyOptions};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let params = ModelParams { alpha: 1.0, ..ModelParams::reference() };
    let policy = habitform::solve(&params, &FbpOptions::default())?;
    println!("x_min = {:.12}", policy.x_floor());
    println!("x*    = {:.6}", policy.x_star);
    for x in [50.5, 52.0, policy.x_star, 60.0, 100.0] {
        println!("x={x:8.3} c*={:.6} theta*={:.5}", policy.c_star(x)?, policy.theta_star(x)?);
    }
    let report = verify(&policy, &VerifyOptions::default());
    println!("certificates: {}", if report.passed() { "pass" } else { "fail" });
    for c in report.failures() {
        println!("  {} = {:.3e} (limit {:.1e})", c.name, c.measured, c.threshold);
    }
    Ok(())
}
