//! x* against the habit persistence delta.
use habitform::fbp::FbpOptions;
use habitform::params::ModelParams;
use habitform::sweep::{run_sweep, stepped, SweepSpec};

fn main() {
    let spec = SweepSpec {
        parameter: "delta".into(),
        values: stepped(0.1, 0.5, 0.05),
        base: ModelParams::reference(),
        fbp: FbpOptions::default(),
    };
    for row in run_sweep(&spec) {
        match row.result {
            Ok(p) => println!("delta={:.2} x*={:.6} y*={:.6} residual={:.1e}", row.value, p.x_star, p.y_star, p.max_residual),
            Err(e) => println!("delta={:.2} failed: {e}", row.value),
        }
    }
}
