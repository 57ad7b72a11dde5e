//! Primal objects recovered from the dual: the critical ratio x*, value v,
//! consumption c*, investment θ*, certainty equivalent and the dual inverse J.
//!
//! Quantities are per unit of habit. Below x* everything is closed form;
//! above it, J(−x) is found by bisection on φ(y)/y = 1 + ρx.

use crate::dual::DualSolution;
use crate::error::PolicyError;
use crate::params::DerivedConstants;

const ROOT_REL_TOL: f64 = 1e-15;

/// Inverse of y ↦ u′(y) on the covered range.
#[derive(Debug, Clone)]
pub struct DualInverse {
    /// Grid y in increasing order.
    ys: Vec<f64>,
    /// φ(y)/y at the grid nodes, decreasing.
    ratios: Vec<f64>,
}

impl DualInverse {
    pub fn new(dual: &DualSolution) -> Self {
        let (ys, ratios) = dual
            .fbp
            .increasing()
            .map(|(y, phi, _)| (y, phi / y))
            .unzip();
        Self { ys, ratios }
    }

    /// y in [y_min, y*] with φ(y)/y = target, or `None` if out of range.
    fn solve_grid(&self, dual: &DualSolution, target: f64) -> Option<f64> {
        let n = self.ys.len();
        if !(target <= self.ratios[0] && target >= self.ratios[n - 1]) {
            return None;
        }
        // ratios decrease: find the cell with ratios[i] >= target >= ratios[i+1].
        let k = self.ratios.partition_point(|&g| g >= target).clamp(1, n - 1);
        let g = |y: f64| dual.phi_of(y) / y - target;
        Some(bisect_decreasing(g, self.ys[k - 1], self.ys[k]))
    }
}

/// Root of a decreasing function on [lo, hi] by bisection.
fn bisect_decreasing(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..200 {
        if hi - lo <= ROOT_REL_TOL * hi {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[derive(Debug, Clone)]
pub struct PolicySolution {
    pub consts: DerivedConstants,
    pub dual: DualSolution,
    pub inverse: DualInverse,
    pub x_star: f64,
    pub x_max: f64,
    pub beta_hat: f64,
    /// Boundary used to switch branches; equals y* unless perturbed.
    switch_y: f64,
    switch_x: f64,
    /// D in u′(y) = D y^(λ−1) − x̲ for the branch above `switch_y`.
    lower_d: f64,
}

impl PolicySolution {
    pub fn new(dual: DualSolution) -> Self {
        let c = dual.consts;
        let p = &c.params;
        let inverse = DualInverse::new(&dual);
        let fbp = &dual.fbp;
        let x_max = (fbp.phi_at_floor() / fbp.y_min - 1.0) / p.rho;
        let beta_hat = p.rho / c.kappa * fbp.h_at_floor();
        let ys = dual.y_star();
        let mut out = Self {
            consts: c,
            x_star: c.alpha_pow() / (p.rho * ys) - 1.0 / p.rho,
            x_max,
            beta_hat,
            inverse,
            switch_y: ys,
            switch_x: 0.0,
            lower_d: 0.0,
            dual,
        };
        out.set_switch(ys);
        out
    }

    fn set_switch(&mut self, y: f64) {
        let c = &self.consts;
        let p = &c.params;
        self.switch_y = y;
        self.switch_x = c.alpha_pow() / (p.rho * y) - 1.0 / p.rho;
        self.lower_d = (y * (1.0 + p.rho * c.x_floor) - c.alpha_pow()) / (p.rho * y.powf(c.lambda));
    }

    /// Copy whose closed-form branch and switch point use `factor · y*`
    /// instead of y*. Only meant as a negative control for the certificates.
    pub fn with_perturbed_boundary(&self, factor: f64) -> Self {
        let mut out = self.clone();
        out.set_switch(self.dual.y_star() * factor);
        out
    }

    /// Critical ratio at which the active branch switches.
    pub fn switch_x(&self) -> f64 {
        self.switch_x
    }

    pub fn x_floor(&self) -> f64 {
        self.consts.x_floor
    }

    /// x* recomputed as −u′(y*).
    pub fn x_star_from_dual(&self) -> f64 {
        -self.dual.u_prime(self.dual.y_star()).unwrap()
    }

    fn check(&self, x: f64) -> Result<(), PolicyError> {
        if x >= self.consts.x_floor && x <= self.x_max {
            Ok(())
        } else {
            Err(PolicyError::OutOfRange {
                x,
                x_floor: self.consts.x_floor,
                x_max: self.x_max,
            })
        }
    }

    fn lower_branch(&self, x: f64) -> bool {
        x <= self.switch_x
    }

    /// J(ξ) for ξ = −x, i.e. the dual point with u′(J) = −x, which is also v′(x).
    pub fn j(&self, xi: f64) -> Result<f64, PolicyError> {
        let x = -xi;
        self.check(x)?;
        Ok(self.j_unchecked(x))
    }

    fn j_unchecked(&self, x: f64) -> f64 {
        let c = &self.consts;
        if self.lower_branch(x) {
            ((x - c.x_floor) / -self.lower_d).powf(1.0 / (c.lambda - 1.0))
        } else {
            let target = 1.0 + c.params.rho * x;
            match self.inverse.solve_grid(&self.dual, target) {
                Some(y) => y,
                // Only reachable with a perturbed switch below x*.
                None => {
                    let mut hi = 2.0 * self.dual.y_star();
                    while self.dual.phi_of(hi) / hi > target {
                        hi *= 2.0;
                    }
                    bisect_decreasing(|y| self.dual.phi_of(y) / y - target, self.dual.y_star(), hi)
                }
            }
        }
    }

    pub fn v_prime(&self, x: f64) -> Result<f64, PolicyError> {
        self.check(x)?;
        Ok(self.j_unchecked(x))
    }

    /// v″(x) = −1/u″(J(−x)).
    pub fn v_second(&self, x: f64) -> Result<f64, PolicyError> {
        self.check(x)?;
        let c = &self.consts;
        let y = self.j_unchecked(x);
        Ok(if self.lower_branch(x) {
            let upp = self.lower_d * (c.lambda - 1.0) * y.powf(c.lambda - 2.0);
            -1.0 / upp
        } else {
            let phi = self.dual.phi_of(y);
            -c.kappa * y * y / (phi * self.dual.h_of(y))
        })
    }

    pub fn c_star(&self, x: f64) -> Result<f64, PolicyError> {
        self.check(x)?;
        Ok(self.c_unchecked(x))
    }

    fn c_unchecked(&self, x: f64) -> f64 {
        let p = &self.consts.params;
        if self.lower_branch(x) {
            p.alpha
        } else {
            let y = self.j_unchecked(x);
            self.dual.phi_of(y).powf(-1.0 / p.gamma)
        }
    }

    pub fn theta_star(&self, x: f64) -> Result<f64, PolicyError> {
        self.check(x)?;
        Ok(self.theta_unchecked(x))
    }

    fn theta_unchecked(&self, x: f64) -> f64 {
        let c = &self.consts;
        let p = &c.params;
        if self.lower_branch(x) {
            c.constrained_slope * (x - c.x_floor)
        } else {
            let y = self.j_unchecked(x);
            (p.mu - p.r) / (c.kappa * p.sigma * p.sigma) * self.dual.h_of(y) * (1.0 + p.rho * x)
        }
    }

    pub fn value(&self, x: f64) -> Result<f64, PolicyError> {
        self.check(x)?;
        let c = &self.consts;
        let p = &c.params;
        Ok(if self.lower_branch(x) {
            let l = c.lambda;
            let k = (-self.lower_d).powf(-1.0 / (l - 1.0));
            (1.0 - 1.0 / l) * k * (x - c.x_floor).powf(l / (l - 1.0)) + c.floor_value()
        } else {
            let y = self.j_unchecked(x);
            let phi = self.dual.phi_of(y);
            let h = self.dual.h_of(y);
            let g = p.gamma;
            (phi * h + g / (1.0 - g) * phi.powf(1.0 - 1.0 / g) + (p.r + p.rho) / p.rho * (phi - y)) / p.delta
        })
    }

    /// v through the Legendre identity u(J) + xJ, for cross-checking `value`.
    pub fn value_legendre(&self, x: f64) -> Result<f64, PolicyError> {
        self.check(x)?;
        let y = self.j_unchecked(x);
        let u = self.dual.u(y).map_err(|_| PolicyError::OutOfRange {
            x,
            x_floor: self.consts.x_floor,
            x_max: self.x_max,
        })?;
        Ok(u + x * y)
    }

    /// Constant consumption-to-habit ratio with the same utility as v(x).
    pub fn ce(&self, x: f64) -> Result<f64, PolicyError> {
        let p = &self.consts.params;
        let v = self.value(x)?;
        Ok((p.delta * (1.0 - p.gamma) * v).powf(1.0 / (1.0 - p.gamma)))
    }

    /// v′ by a fourth-order central difference of `value`.
    ///
    /// The analytic v′ = J makes ℒ_{θ*,c*}v vanish identically, so the HJB
    /// certificate differentiates v itself. This checks that the value
    /// formula and the inverse J belong to the same solution.
    pub fn v_prime_numeric(&self, x: f64) -> Result<f64, PolicyError> {
        self.check(x)?;
        let h = 1e-4 * (x - self.consts.x_floor).min(x).min(self.x_max - x) / 2.0;
        if !(h > 0.0) {
            return self.v_prime(x);
        }
        let f = |t: f64| self.value(t);
        Ok((8.0 * (f(x + h)? - f(x - h)?) - (f(x + 2.0 * h)? - f(x - 2.0 * h)?)) / (12.0 * h))
    }

    /// Generator ℒ_{θ,c} applied to v at x.
    pub fn generator(&self, x: f64, theta: f64, c: f64) -> Result<f64, PolicyError> {
        let d = self.derivatives(x)?;
        Ok(self.generator_with(x, d, theta, c))
    }

    /// (v, v′, v″) as used by the HJB certificate.
    pub fn derivatives(&self, x: f64) -> Result<(f64, f64, f64), PolicyError> {
        Ok((self.value(x)?, self.v_prime_numeric(x)?, self.v_second(x)?))
    }

    pub fn generator_with(&self, x: f64, (v, v1, v2): (f64, f64, f64), theta: f64, c: f64) -> f64 {
        let p = &self.consts.params;
        -p.delta * v
            + ((p.rho + p.r) * x + (p.mu - p.r) * theta) * v1
            + 0.5 * p.sigma * p.sigma * theta * theta * v2
            + c.powf(1.0 - p.gamma) / (1.0 - p.gamma)
            - c * (1.0 + p.rho * x) * v1
    }

    /// ℒ_{θ*,c*} v(x).
    pub fn hjb_residual(&self, x: f64) -> Result<f64, PolicyError> {
        let theta = self.theta_star(x)?;
        let c = self.c_star(x)?;
        self.generator(x, theta, c)
    }

    /// Root of c*(x) = CE(x) above x*, as (x₀, c₀).
    pub fn crossing_point(&self) -> Result<(f64, f64), PolicyError> {
        let none = PolicyError::NoCrossing {
            x_floor: self.consts.x_floor,
            x_max: self.x_max,
        };
        let gap = |x: f64| -> f64 { self.c_unchecked(x) - self.ce(x).unwrap() };
        // c* = α < CE on (x̲, x*], so the scan starts at x*.
        let start = self.switch_x.max(self.consts.x_floor * (1.0 + 1e-9));
        let n = 400;
        let ratio = (self.x_max / start).ln() / n as f64;
        let mut lo = start;
        if gap(lo) > 0.0 {
            return Err(none);
        }
        for k in 1..=n {
            let hi = if k == n { self.x_max } else { start * (ratio * k as f64).exp() };
            if gap(hi) > 0.0 {
                let (mut a, mut b) = (lo, hi);
                while b - a > 1e-12 * b {
                    let m = 0.5 * (a + b);
                    if gap(m) > 0.0 {
                        b = m;
                    } else {
                        a = m;
                    }
                }
                let x0 = 0.5 * (a + b);
                return Ok((x0, self.c_unchecked(x0)));
            }
            lo = hi;
        }
        Err(none)
    }

    /// Dollar investment and consumption rate at wealth `w` and habit `z`.
    pub fn absolute_policy(&self, w: f64, z: f64) -> Result<(f64, f64), PolicyError> {
        if !(z > 0.0) {
            return Err(PolicyError::NonPositiveHabit(z));
        }
        let x = w / z;
        Ok((z * self.theta_star(x)?, z * self.c_star(x)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fbp::{solve_free_boundary_with, FbpOptions};
    use crate::params::ModelParams;
    use std::sync::OnceLock;

    fn policy() -> &'static PolicySolution {
        static CELL: OnceLock<PolicySolution> = OnceLock::new();
        CELL.get_or_init(|| {
            let c = ModelParams::reference().derive().unwrap();
            let fbp = solve_free_boundary_with(&c, &FbpOptions::default()).unwrap();
            PolicySolution::new(DualSolution::new(fbp))
        })
    }

    fn sample_xs(p: &PolicySolution) -> Vec<f64> {
        let lin = (1..100).map(|k| p.x_floor() + (p.x_star - p.x_floor()) * k as f64 / 100.0);
        let (a, b) = (p.x_star.ln(), p.x_max.ln());
        let log = (1..100).map(move |k| (a + (b - a) * k as f64 / 100.0).exp());
        lin.chain(log).collect()
    }

    #[test]
    fn x_star_two_ways() {
        let p = policy();
        assert!(p.x_star > p.x_floor());
        assert!((p.x_star - p.x_star_from_dual()).abs() < 1e-10);
        assert!((2.7..=3.3).contains(&p.x_star), "{}", p.x_star);
    }

    #[test]
    fn x_star_formula_at_eta2_is_floor() {
        let c = policy().consts;
        let at_eta2 = c.alpha_pow() / (c.params.rho * c.eta2) - 1.0 / c.params.rho;
        assert!((at_eta2 - c.x_floor).abs() < 1e-12);
    }

    #[test]
    fn boundary_values_at_floor() {
        let p = policy();
        let xf = p.x_floor();
        assert_eq!(p.c_star(xf).unwrap(), 0.75);
        assert_eq!(p.theta_star(xf).unwrap(), 0.0);
        assert!((p.value(xf).unwrap() - (-4.444_444_444_444_444)).abs() < 1e-12);
        assert!((p.ce(xf).unwrap() - 0.75).abs() < 1e-12);
    }

    #[test]
    fn continuity_at_x_star() {
        let p = policy();
        let xs = p.x_star;
        let above = xs * (1.0 + 1e-12);
        assert!((p.c_star(above).unwrap() - 0.75).abs() < 1e-6);
        let (t0, t1) = (p.theta_star(xs).unwrap(), p.theta_star(above).unwrap());
        assert!((t0 - t1).abs() < 1e-6 * t0, "{t0} {t1}");
        let (v0, v1) = (p.value(xs).unwrap(), p.value(above).unwrap());
        assert!((v0 - v1).abs() < 1e-8 * v0.abs());
    }

    #[test]
    fn inverse_round_trips() {
        let p = policy();
        assert!((p.j(-p.x_star).unwrap() - p.dual.y_star()).abs() < 1e-8);
        for x in sample_xs(p) {
            let y = p.j(-x).unwrap();
            let back = -p.dual.u_prime(y).unwrap();
            assert!((back - x).abs() < 1e-8 * x.max(1.0), "x={x} back={back}");
            if x > p.x_star {
                let ratio = p.dual.phi_of(y) / y;
                assert!((ratio - (1.0 + x)).abs() < 1e-7 * (1.0 + x));
            }
        }
        assert!(p.j(-(p.x_max * 1.01)).is_err());
    }

    #[test]
    fn closed_form_value_matches_legendre() {
        let p = policy();
        for x in sample_xs(p) {
            let (a, b) = (p.value(x).unwrap(), p.value_legendre(x).unwrap());
            assert!((a - b).abs() < 1e-7, "x={x}: {a} vs {b}");
        }
    }

    #[test]
    fn theta_slope_and_asymptote() {
        let p = policy();
        let c = &p.consts;
        assert!((c.constrained_slope - 5.537_793_876).abs() < 1e-8);
        assert!(c.constrained_slope > c.merton_slope);
        let x = 0.5 * (p.x_floor() + p.x_star);
        let slope = p.theta_star(x).unwrap() / (x - p.x_floor());
        assert!((slope - c.constrained_slope).abs() < 1e-10);
        let far = 0.9 * p.x_max;
        let ratio = p.theta_star(far).unwrap() / far;
        assert!(ratio > 0.0 && ratio <= c.merton_slope, "{ratio}");
    }

    #[test]
    fn shapes_of_policy_and_value() {
        let p = policy();
        let xs = sample_xs(p);
        let mut last_c = 0.0;
        for w in xs.windows(3) {
            let c = p.c_star(w[1]).unwrap();
            assert!(c >= last_c);
            last_c = c;
            assert!(p.theta_star(w[1]).unwrap() > 0.0);
            let (v0, v1, v2) = (p.value(w[0]).unwrap(), p.value(w[1]).unwrap(), p.value(w[2]).unwrap());
            assert!(v1 > v0 && v2 > v1);
            // Second divided difference on a nonuniform grid.
            let dd = ((v2 - v1) / (w[2] - w[1]) - (v1 - v0) / (w[1] - w[0])) / (w[2] - w[0]);
            assert!(dd <= 1e-12, "convexity at {}", w[1]);
        }
    }

    #[test]
    fn hjb_equality_and_inequality() {
        let p = policy();
        for x in sample_xs(p) {
            let r = p.hjb_residual(x).unwrap();
            assert!(r.abs() < 1e-6, "x={x} r={r}");
            let t = p.theta_star(x).unwrap();
            for (dt, c) in [(1.3, 0.75), (0.7, 0.9), (1.0, 2.0), (0.0, 0.75)] {
                assert!(p.generator(x, t * dt, c).unwrap() <= 1e-6);
            }
        }
    }

    #[test]
    fn variational_inequality() {
        let p = policy();
        let a = p.consts.alpha_pow();
        for x in sample_xs(p) {
            let lhs = (1.0 + x) * p.v_prime(x).unwrap();
            if x <= p.x_star {
                assert!(lhs >= a * (1.0 - 1e-12), "x={x}");
            } else {
                assert!(lhs < a, "x={x}");
            }
        }
    }

    #[test]
    fn marginal_value_blows_up_at_floor() {
        let p = policy();
        let span = p.x_star - p.x_floor();
        let at = |eps: f64| p.v_prime(p.x_floor() + eps * span).unwrap() / p.v_prime(p.x_star).unwrap();
        // Ratio is exactly eps^(1/(lambda-1)) on the closed-form branch.
        let expo = 1.0 / (p.consts.lambda - 1.0);
        for eps in [1e-6, 1e-8] {
            assert!((at(eps) - eps.powf(expo)).abs() < 1e-6 * eps.powf(expo));
        }
        assert!(at(1e-8) > 1e3);
    }

    #[test]
    fn crossing_point_near_reported_values() {
        let p = policy();
        let (x0, c0) = p.crossing_point().unwrap();
        assert!((x0 - 3.8).abs() <= 0.3 && (c0 - 0.85).abs() <= 0.05, "{x0} {c0}");
        let below = 0.5 * (p.x_floor() + x0);
        assert!(p.c_star(below).unwrap() < p.ce(below).unwrap());
        let above = 2.0 * x0;
        assert!(p.c_star(above).unwrap() > p.ce(above).unwrap());
    }

    #[test]
    fn absolute_policy_scaling_and_linear_range() {
        let p = policy();
        let c = &p.consts;
        let z = 1.0 / (0.5 * (p.x_floor() + p.x_star));
        let (pi, cons) = p.absolute_policy(1.0, z).unwrap();
        assert!((pi - c.constrained_slope * (1.0 - c.x_floor * z)).abs() < 1e-12);
        assert!(cons >= c.params.alpha * z);
        let (pi2, c2) = p.absolute_policy(2.0, 2.0 * z).unwrap();
        assert!((pi2 - 2.0 * pi).abs() < 1e-12 && (c2 - 2.0 * cons).abs() < 1e-12);
        assert!(p.absolute_policy(1.0, 1.0).is_err());
        assert!(p.absolute_policy(1.0, 0.0).is_err());
        // Small habit: pi approaches beta (mu-r)/sigma^2.
        let (pi_small, _) = p.absolute_policy(1.0, 1.0 / (0.9 * p.x_max)).unwrap();
        assert!(pi_small > 0.0 && pi_small <= c.merton_slope);
    }

    #[test]
    fn perturbed_boundary_breaks_hjb() {
        let p = policy().with_perturbed_boundary(1.01);
        let worst = sample_xs(policy())
            .into_iter()
            .filter_map(|x| p.hjb_residual(x).ok())
            .fold(0.0f64, |m, r| m.max(r.abs()));
        assert!(worst > 1e-6, "{worst}");
    }

    #[test]
    fn out_of_range_queries_error() {
        let p = policy();
        let err = p.c_star(p.x_max * 2.0).unwrap_err();
        assert!(err.to_string().contains(&format!("{}", p.x_max)));
        assert!(p.theta_star(p.x_floor() * 0.99).is_err());
    }
}
