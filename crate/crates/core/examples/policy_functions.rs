//! Optimal consumption, investment and value on a grid of wealth/habit
//! ratios, and where consumption overtakes the certainty equivalent.
use habitform::fbp::FbpOptions;
use habitform::params::ModelParams;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let policy = habitform::solve(&ModelParams::reference(), &FbpOptions::default())?;
    println!("{:>8} {:>10} {:>10} {:>12} {:>10}", "x", "c*", "theta*", "v", "ce");
    for x in [2.8, 3.0, 3.2411, 3.5, 4.0, 5.0, 10.0, 50.0, 1000.0] {
        println!(
            "{x:8.4} {:10.6} {:10.6} {:12.6} {:10.6}",
            policy.c_star(x)?,
            policy.theta_star(x)?,
            policy.value(x)?,
            policy.ce(x)?
        );
    }
    let (x0, c0) = policy.crossing_point()?;
    println!("c* meets the certainty equivalent at x0={x0:.5}, c0={c0:.5}");
    let (inv, cons) = policy.absolute_policy(50.0, 10.0)?;
    println!("wealth 50, habit 10: invest {inv:.4}, consume {cons:.4}");
    Ok(())
}
