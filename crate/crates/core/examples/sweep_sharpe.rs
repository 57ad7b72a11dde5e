//! x* against the Sharpe ratio, moving mu at fixed r and sigma.
use habitform::fbp::FbpOptions;
use habitform::params::ModelParams;
use habitform::sweep::{run_sweep, stepped, SweepSpec};

fn main() {
    let spec = SweepSpec {
        parameter: "sharpe_ratio".into(),
        values: stepped(0.1, 3.0, 0.1),
        base: ModelParams::reference(),
        fbp: FbpOptions::default(),
    };
    let rows = run_sweep(&spec);
    let mut best = (0.0, f64::NEG_INFINITY);
    for row in &rows {
        match &row.result {
            Ok(p) => {
                println!("SR={:.1} x*={:.6}", row.value, p.x_star);
                if p.x_star > best.1 {
                    best = (row.value, p.x_star);
                }
            }
            Err(e) => println!("SR={:.1} failed: {e}", row.value),
        }
    }
    println!("largest x* = {:.6} at SR = {:.1}", best.1, best.0);
}
