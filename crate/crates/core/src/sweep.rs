//! One-parameter sweeps. Points are solved independently and in parallel;
//! a failed point becomes an error row and the rest still run.

use rayon::prelude::*;

use crate::fbp::FbpOptions;
use crate::params::ModelParams;
use crate::policy::PolicySolution;
use crate::verify::{log_grid, regime_samples};

pub const SWEEP_PARAMS: [&str; 5] = ["delta", "alpha", "sharpe_ratio", "rho", "gamma"];

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub parameter: String,
    pub values: Vec<f64>,
    pub base: ModelParams,
    pub fbp: FbpOptions,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub y_star: f64,
    pub x_star: f64,
    pub beta_hat: f64,
    /// Larger of the HJB and dual residual maxima.
    pub max_residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub value: f64,
    pub result: Result<SweepPoint, String>,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<(), String> {
        if !SWEEP_PARAMS.contains(&self.parameter.as_str()) {
            return Err(format!(
                "cannot sweep `{}`; choose one of {}",
                self.parameter,
                SWEEP_PARAMS.join(", ")
            ));
        }
        if self.values.is_empty() {
            return Err("sweep needs at least one value".into());
        }
        Ok(())
    }

    /// Base parameters with the swept one replaced.
    pub fn params_at(&self, value: f64) -> Result<ModelParams, String> {
        let mut p = self.base;
        p.set(&self.parameter, value).map_err(|e| e.to_string())?;
        p.validate().map_err(|e| e.to_string())?;
        Ok(p)
    }
}

/// Maximum |HJB| and |dual| residual used in sweep rows.
pub fn max_residual(policy: &PolicySolution) -> f64 {
    let dual = &policy.dual;
    let ys = log_grid(dual.y_min(), 100.0 * dual.y_star(), 400);
    let d = ys
        .iter()
        .map(|&y| dual.dual_residual(y).map(f64::abs).unwrap_or(f64::INFINITY))
        .fold(0.0, f64::max);
    let h = regime_samples(policy, 100)
        .into_iter()
        .map(|x| policy.hjb_residual(x).map(f64::abs).unwrap_or(f64::INFINITY))
        .fold(0.0, f64::max);
    d.max(h)
}

fn solve_point(spec: &SweepSpec, value: f64) -> Result<SweepPoint, String> {
    let params = spec.params_at(value)?;
    let policy = crate::solve(&params, &spec.fbp).map_err(|e| e.to_string())?;
    Ok(SweepPoint {
        y_star: policy.dual.y_star(),
        x_star: policy.x_star,
        beta_hat: policy.beta_hat,
        max_residual: max_residual(&policy),
    })
}

/// Rows in input order.
pub fn run_sweep(spec: &SweepSpec) -> Vec<SweepRow> {
    spec.values
        .par_iter()
        .map(|&value| SweepRow {
            value,
            result: solve_point(spec, value),
        })
        .collect()
}

/// Grid {start, start+step, ..., end} with the endpoint included despite roundoff.
pub fn stepped(start: f64, end: f64, step: f64) -> Vec<f64> {
    let n = ((end - start) / step + 1e-9).floor() as usize;
    // Rounded so that 0.1 + 3·0.05 prints as 0.25.
    (0..=n).map(|k| ((start + step * k as f64) * 1e12).round() / 1e12).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(parameter: &str, values: Vec<f64>) -> SweepSpec {
        SweepSpec {
            parameter: parameter.into(),
            values,
            base: ModelParams::reference(),
            fbp: FbpOptions::default(),
        }
    }

    #[test]
    fn failures_stay_local() {
        // alpha = 1.5 is rejected by validation; its neighbours still solve.
        let rows = run_sweep(&spec("alpha", vec![0.7, 1.5, 0.8]));
        assert_eq!(rows.len(), 3);
        assert!(rows[0].result.is_ok() && rows[2].result.is_ok());
        assert!(rows[1].result.as_ref().unwrap_err().contains("alpha"));
        assert!(rows[0].result.as_ref().unwrap().x_star < rows[2].result.as_ref().unwrap().x_star);
    }

    #[test]
    fn rejects_unsweepable_parameter() {
        assert!(spec("r", vec![0.01]).validate().is_err());
        assert!(spec("delta", vec![]).validate().is_err());
        assert!(spec("delta", vec![0.2]).validate().is_ok());
    }

    #[test]
    fn sharpe_moves_mu() {
        let p = spec("sharpe_ratio", vec![]).params_at(0.25).unwrap();
        assert!((p.mu - 0.07).abs() < 1e-15);
    }

    #[test]
    fn stepped_grid_includes_endpoint() {
        let g = stepped(0.1, 0.5, 0.05);
        assert_eq!(g.len(), 9);
        assert!((g[8] - 0.5).abs() < 1e-12);
    }
}
