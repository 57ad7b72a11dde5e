//! Runtime certificates: each check measures a maximum violation and
//! compares it with a fixed threshold.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::policy::PolicySolution;
use crate::sim::{Control, McEstimate, SimConfig, Simulator};

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub measured: f64,
    pub threshold: f64,
    pub passed: bool,
}

impl Check {
    /// Passes when `measured <= threshold`.
    fn at_most(name: &'static str, measured: f64, threshold: f64) -> Self {
        Self {
            name,
            measured,
            threshold,
            passed: measured <= threshold,
        }
    }

    /// Counts check failures; passes at zero.
    fn count(name: &'static str, failures: usize) -> Self {
        Self::at_most(name, failures as f64, 0.0)
    }
}

#[derive(Debug, Clone)]
pub struct VerifyOptions {
    /// Points on each side of x* for the HJB and policy checks.
    pub points_per_regime: usize,
    pub random_pairs: usize,
    pub dual_grid: usize,
    pub seed: u64,
    pub mc: Option<SimConfig>,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            points_per_regime: 100,
            random_pairs: 50,
            dual_grid: 400,
            seed: 20_240_501,
            mc: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct VerifyReport {
    pub checks: Vec<Check>,
    pub mc: Option<McEstimate>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn get(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|k| match k {
            0 => lo,
            k if k == n - 1 => hi,
            k => (a + (b - a) * k as f64 / (n - 1) as f64).exp(),
        })
        .collect()
}

/// `n` interior points on (x̲, x*) evenly spaced, then `n` on (x*, x_max)
/// evenly spaced in ln x.
pub fn regime_samples(policy: &PolicySolution, n: usize) -> Vec<f64> {
    let (xf, xs, xm) = (policy.x_floor(), policy.x_star, policy.x_max);
    let m = (n + 1) as f64;
    let lower = (1..=n).map(|k| xf + (xs - xf) * k as f64 / m);
    let (a, b) = (xs.ln(), xm.ln());
    let upper = (1..=n).map(move |k| (a + (b - a) * k as f64 / m).exp());
    lower.chain(upper).collect()
}

fn max_abs(it: impl Iterator<Item = f64>) -> f64 {
    // NaN counts as an infinite violation.
    it.map(|v| if v.is_nan() { f64::INFINITY } else { v.abs() })
        .fold(0.0, f64::max)
}

/// Runs the certificate suite. Never panics on a degraded solution; bad
/// values show up as failed checks.
pub fn verify(policy: &PolicySolution, opts: &VerifyOptions) -> VerifyReport {
    let c = &policy.consts;
    let p = &c.params;
    let dual = &policy.dual;
    let mut checks = Vec::new();

    let (f1, f2) = c.quadratic_residuals();
    checks.push(Check::at_most("characteristic_roots", f1.abs().max(f2.abs()), 1e-12));
    checks.push(Check::at_most("smooth_pasting", dual.pasting().max(), 1e-6));
    checks.push(Check::at_most(
        "free_boundary_condition",
        dual.boundary_condition_residual().abs(),
        1e-10,
    ));

    let ys = log_grid(dual.y_min(), 100.0 * dual.y_star(), opts.dual_grid);
    let dual_res = max_abs(ys.iter().map(|&y| dual.dual_residual(y).unwrap_or(f64::NAN)));
    checks.push(Check::at_most("dual_residual", dual_res, 1e-6));

    let remark = max_abs(dual.fbp.phi_ode_residuals().into_iter().map(|(_, r)| r));
    checks.push(Check::at_most("phi_equation_residual", remark, 1e-5));

    // u convex and decreasing with u′ increasing on a dense log grid.
    let ys = log_grid(dual.y_min(), 100.0 * dual.y_star(), 1000);
    let bound = c.dual_upper_bound();
    let mut bad = 0;
    let mut last = f64::NEG_INFINITY;
    for &y in &ys {
        let (Ok(u), Ok(up), Ok(upp)) = (dual.u(y), dual.u_prime(y), dual.u_second(y)) else {
            bad += 1;
            continue;
        };
        // Far above y*, u′ sits at −x̲ to roundoff when |λ| is large, so
        // ties within a few ulps are not counted.
        let increasing = up > last || last - up <= 4.0 * f64::EPSILON * up.abs();
        bad += usize::from(!(up < 0.0 && upp > 0.0 && increasing && u <= bound));
        last = up;
    }
    checks.push(Check::count("dual_convex_decreasing", bad));

    // The regime grids are coarse near x*, where a misplaced switch shows up.
    let mut xs = regime_samples(policy, opts.points_per_regime);
    xs.extend((-10..=10).filter(|&k| k != 0).map(|k| policy.x_star * (1.0 + 0.002 * k as f64)));
    xs.retain(|&x| x > policy.x_floor() && x < policy.x_max);
    xs.sort_by(f64::total_cmp);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let (mut hjb, mut sup) = (0.0f64, f64::NEG_INFINITY);
    let mut vi_bad = 0;
    for &x in &xs {
        let (Ok(d), Ok(theta), Ok(cs)) = (policy.derivatives(x), policy.theta_star(x), policy.c_star(x)) else {
            hjb = f64::INFINITY;
            continue;
        };
        let r = policy.generator_with(x, d, theta, cs);
        hjb = hjb.max(if r.is_nan() { f64::INFINITY } else { r.abs() });
        let spread = theta.abs().max(1.0);
        for _ in 0..opts.random_pairs {
            let th = theta + spread * rng.random_range(-1.0..1.0);
            let cc = p.alpha + rng.random_range(0.0..2.0) * cs;
            sup = sup.max(policy.generator_with(x, d, th, cc));
        }
        let lhs = (1.0 + p.rho * x) * policy.v_prime(x).unwrap_or(f64::NAN);
        let a = c.alpha_pow();
        let ok = if x <= policy.x_star { lhs >= a * (1.0 - 1e-12) } else { lhs < a };
        vi_bad += usize::from(!ok);
    }
    checks.push(Check::at_most("hjb_residual", hjb, 1e-6));
    checks.push(Check::at_most("hjb_supremum", sup, 1e-6));
    checks.push(Check::count("variational_inequality", vi_bad));

    // v and v′ must be continuous where the two branches meet.
    let xw = policy.switch_x();
    let eps = 1e-7 * xw;
    let jump = |f: &dyn Fn(f64) -> Result<f64, crate::error::PolicyError>| match (f(xw - eps), f(xw + eps)) {
        (Ok(a), Ok(b)) => (b - a).abs() / a.abs().max(1.0),
        _ => f64::INFINITY,
    };
    let fit = jump(&|x| policy.value(x)).max(jump(&|x| policy.v_prime(x)));
    checks.push(Check::at_most("primal_smooth_fit", fit, 1e-5));

    // Shapes of the primal functions.
    let mut shape_bad = 0;
    let mut prev: Option<(f64, f64, f64, f64)> = None;
    let mut prev_slope: Option<f64> = None;
    for &x in &xs {
        let (Ok(cs), Ok(th), Ok(v)) = (policy.c_star(x), policy.theta_star(x), policy.value(x)) else {
            shape_bad += 1;
            continue;
        };
        shape_bad += usize::from(!(th > 0.0));
        if let Some((x0, c0, _, v0)) = prev {
            shape_bad += usize::from(cs < c0 || v <= v0);
            let slope = (v - v0) / (x - x0);
            if let Some(s0) = prev_slope {
                shape_bad += usize::from(slope > s0 * (1.0 + 1e-9));
            }
            prev_slope = Some(slope);
        }
        prev = Some((x, cs, th, v));
    }
    checks.push(Check::count("policy_shape", shape_bad));

    let xf = policy.x_floor();
    let at_floor = policy.theta_star(xf).map(f64::abs).unwrap_or(f64::INFINITY);
    checks.push(Check::at_most("theta_at_floor", at_floor, 0.0));
    let slope_formula = (p.mu - p.r) * (1.0 - c.lambda) / (p.sigma * p.sigma);
    let xm = 0.5 * (xf + policy.x_star);
    let slope = policy.theta_star(xm).map(|t| t / (xm - xf)).unwrap_or(f64::NAN);
    checks.push(Check::at_most(
        "theta_slope",
        max_abs(std::iter::once(slope - slope_formula)),
        1e-10,
    ));

    let mut mc = None;
    if let Some(cfg) = &opts.mc {
        match mc_checks(policy, cfg) {
            Ok((est, mut more)) => {
                mc = Some(est);
                checks.append(&mut more);
            }
            Err(_) => checks.push(Check::at_most("mc_value", f64::INFINITY, 0.0)),
        }
    }
    VerifyReport { checks, mc }
}

/// Perturbed admissible policies used for the dominance checks.
pub const PERTURBATIONS: [(&str, Control); 3] = [
    ("mc_dominance_consumption_up", Control::ScaledConsumption(1.1)),
    ("mc_dominance_theta_up", Control::ScaledInvestment(1.25)),
    ("mc_dominance_theta_down", Control::ScaledInvestment(0.75)),
];

/// MC agreement with v(x0) and dominance of the perturbed policies.
///
/// Dominance checks report `mean − v(x0) − 3·stderr − tail_bound`, passing at
/// or below zero.
pub fn mc_checks(policy: &PolicySolution, cfg: &SimConfig) -> Result<(McEstimate, Vec<Check>), crate::error::SimError> {
    let v = policy.value(cfg.x0)?;
    let est = Simulator::new(policy).mc_value(cfg)?;
    let mut checks = vec![Check::at_most("mc_value", (est.mean - v).abs(), est.tolerance(v, cfg.dt))];
    checks.push(Check::count("mc_caps", est.cap_count));
    for (name, control) in PERTURBATIONS {
        let alt = Simulator::new(policy).with_control(control).mc_value(cfg)?;
        let excess = alt.mean - v - 3.0 * alt.stderr.unwrap_or(0.0) - alt.tail_bound;
        checks.push(Check::at_most(name, excess, 0.0));
    }
    Ok((est, checks))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dual::DualSolution;
    use crate::fbp::{solve_free_boundary_with, FbpOptions};
    use crate::params::ModelParams;
    use std::sync::OnceLock;

    fn policy() -> &'static PolicySolution {
        static CELL: OnceLock<PolicySolution> = OnceLock::new();
        CELL.get_or_init(|| {
            let c = ModelParams::reference().derive().unwrap();
            PolicySolution::new(DualSolution::new(solve_free_boundary_with(&c, &FbpOptions::default()).unwrap()))
        })
    }

    #[test]
    fn reference_solution_passes_everything() {
        let report = verify(policy(), &VerifyOptions::default());
        let failed: Vec<_> = report.failures().collect();
        assert!(failed.is_empty(), "{failed:?}");
        assert!(report.get("hjb_residual").unwrap().measured < 1e-6);
    }

    #[test]
    fn corrupted_boundary_fails_hjb() {
        let bad = policy().with_perturbed_boundary(1.01);
        let report = verify(&bad, &VerifyOptions::default());
        let hjb = report.get("hjb_residual").unwrap();
        assert!(!hjb.passed, "{hjb:?}");
        assert!(!report.passed());
    }

    #[test]
    fn grids_have_requested_shape() {
        let g = log_grid(1e-3, 10.0, 5);
        assert_eq!(g.len(), 5);
        assert_eq!((g[0], g[4]), (1e-3, 10.0));
        assert!((g[2] - 0.1).abs() < 1e-15);
        let xs = regime_samples(policy(), 100);
        assert_eq!(xs.len(), 200);
        assert!(xs.windows(2).all(|w| w[0] < w[1]));
        assert!(xs[0] > policy().x_floor() && *xs.last().unwrap() < policy().x_max);
    }
}
