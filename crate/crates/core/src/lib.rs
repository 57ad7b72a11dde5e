//! Optimal investment and consumption for an agent whose consumption may
//! never fall below a fraction of an exponentially weighted habit.
//!
//! The dual problem reduces to a free-boundary system for (φ, H) on the dual
//! variable y, solved by shooting ([`fbp`]). [`dual`] glues that solution to
//! the closed form above the boundary, [`policy`] inverts it into the value
//! function and optimal controls per unit of habit, [`verify`] turns the
//! optimality conditions into runtime checks and [`sim`] cross-checks the
//! value by Monte Carlo.
//!
//! ```no_run
//! use habitform::{fbp::FbpOptions, params::ModelParams};
//!
//! let policy = habitform::solve(&ModelParams::reference(), &FbpOptions::default()).unwrap();
//! println!("x* = {:.4}", policy.x_star);
//! ```

pub mod cli;
pub mod config;
pub mod dual;
pub mod error;
pub mod fbp;
pub mod interp;
pub mod ode;
pub mod output;
pub mod params;
pub mod policy;
pub mod sim;
pub mod sweep;
pub mod verify;

use error::SolveError;
use fbp::FbpOptions;
use params::ModelParams;
use policy::PolicySolution;

/// Validates `params`, solves the free-boundary problem and builds the policy.
pub fn solve(params: &ModelParams, opts: &FbpOptions) -> Result<PolicySolution, SolveError> {
    let consts = params.derive()?;
    let fbp = fbp::solve_free_boundary_with(&consts, opts)?;
    Ok(PolicySolution::new(dual::DualSolution::new(fbp)))
}
