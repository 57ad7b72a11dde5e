//! Runs the certificate suite on the solution and on copies with a
//! deliberately misplaced free boundary.
use habitform::fbp::FbpOptions;
use habitform::params::ModelParams;
use habitform::verify::{verify, VerifyOptions};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let policy = habitform::solve(&ModelParams::reference(), &FbpOptions::default())?;
    for factor in [1.0, 1.01, 0.99] {
        let candidate = if factor == 1.0 { policy.clone() } else { policy.with_perturbed_boundary(factor) };
        let report = verify(&candidate, &VerifyOptions::default());
        println!("boundary x{factor}:");
        for c in &report.checks {
            let tag = if c.passed { "ok  " } else { "FAIL" };
            println!("  {tag} {:24} {:10.3e} <= {:.1e}", c.name, c.measured, c.threshold);
        }
    }
    Ok(())
}
