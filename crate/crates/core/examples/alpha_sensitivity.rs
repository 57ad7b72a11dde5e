//! Investment at a fixed ratio for several habit weights, including the
//! addictive case alpha = 1.
use habitform::fbp::FbpOptions;
use habitform::params::ModelParams;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let x = 60.0;
    for alpha in [0.6, 0.75, 0.9, 1.0] {
        let params = ModelParams { alpha, ..ModelParams::reference() };
        let policy = habitform::solve(&params, &FbpOptions::default())?;
        println!(
            "alpha={alpha:.2} x_min={:.4} x*={:.4} theta*({x})={:.5} c*({x})={:.5}",
            policy.x_floor(),
            policy.x_star,
            policy.theta_star(x)?,
            policy.c_star(x)?
        );
    }
    Ok(())
}
