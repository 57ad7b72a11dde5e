//! Simulates the optimal policy from x0 = 5 and compares the discounted
//! utility with v(5). Pass a path count as the first argument.
use habitform::fbp::FbpOptions;
use habitform::params::ModelParams;
use habitform::sim::{Control, SimConfig, Simulator};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let n_paths = std::env::args().nth(1).map_or(Ok(2000), |s| s.parse())?;
    let policy = habitform::solve(&ModelParams::reference(), &FbpOptions::default())?;
    let cfg = SimConfig { dt: 1e-3, horizon_t: 60.0, n_paths, seed: 7, x0: 5.0 };
    let v = policy.value(cfg.x0)?;
    let est = Simulator::new(&policy).mc_value(&cfg)?;
    println!("v(5) = {v:.6}");
    println!(
        "MC   = {:.6} +/- {:.2e} (tolerance {:.2e}, {} floor clamps)",
        est.mean,
        est.stderr.unwrap_or(f64::NAN),
        est.tolerance(v, cfg.dt),
        est.clamp_count
    );
    for control in [Control::ScaledInvestment(1.25), Control::ScaledInvestment(0.75), Control::MinimalConsumption] {
        let alt = Simulator::new(&policy).with_control(control).mc_value(&cfg)?;
        println!("{control:?}: {:.6}", alt.mean);
    }

    // One path in absolute terms.
    let path = Simulator::new(&policy).simulate_path(&cfg, 0)?;
    let (w, z) = Simulator::new(&policy).reconstruct_wealth(&path, 5.0);
    let last = path.times.len() - 1;
    println!("path 0 at T: x={:.4} wealth={:.4} habit={:.4}", path.x_values[last], w[last], z[last]);
    Ok(())
}
