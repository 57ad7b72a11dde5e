//! The dual value function u(y), glued from the closed form above y* and the
//! (φ, H) solution below it.

use crate::error::SolveError;
use crate::fbp::FbpSolution;
use crate::params::DerivedConstants;

#[derive(Debug, Clone)]
pub struct DualSolution {
    pub fbp: FbpSolution,
    /// Coefficient C of the y^λ term for y ≥ y*.
    pub coef_c: f64,
    pub consts: DerivedConstants,
}

/// Relative mismatch of u, u′ and u″ across y*.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pasting {
    pub u: f64,
    pub u_prime: f64,
    pub u_second: f64,
}

impl Pasting {
    pub fn max(&self) -> f64 {
        self.u.max(self.u_prime).max(self.u_second)
    }
}

impl DualSolution {
    pub fn new(fbp: FbpSolution) -> Self {
        let c = fbp.consts;
        let p = &c.params;
        let ys = fbp.y_star;
        let coef_c = (ys * (1.0 + p.rho * c.x_floor) - c.alpha_pow()) / (p.rho * c.lambda * ys.powf(c.lambda));
        Self { fbp, coef_c, consts: c }
    }

    pub fn y_star(&self) -> f64 {
        self.fbp.y_star
    }

    pub fn y_min(&self) -> f64 {
        self.fbp.y_min
    }

    fn check(&self, y: f64) -> Result<(), SolveError> {
        if y >= self.y_min() && y.is_finite() {
            Ok(())
        } else {
            Err(SolveError::Domain(format!(
                "y={y} is below the solved range (y_min={})",
                self.y_min()
            )))
        }
    }

    /// (φ, H) below y*; the closed-form branch above.
    fn phi_h(&self, y: f64) -> (f64, f64) {
        if y >= self.y_star() {
            (self.phi_of(y), self.h_of(y))
        } else {
            (self.fbp.phi_at(y).unwrap(), self.fbp.h_at(y).unwrap())
        }
    }

    pub fn u(&self, y: f64) -> Result<f64, SolveError> {
        self.check(y)?;
        Ok(if y >= self.y_star() {
            self.u_closed(y)
        } else {
            let (phi, h) = self.phi_h(y);
            self.u_from_phi_h(y, phi, h)
        })
    }

    pub fn u_prime(&self, y: f64) -> Result<f64, SolveError> {
        self.check(y)?;
        Ok(if y >= self.y_star() {
            self.u_prime_closed(y)
        } else {
            let (phi, _) = self.phi_h(y);
            (1.0 - phi / y) / self.consts.params.rho
        })
    }

    pub fn u_second(&self, y: f64) -> Result<f64, SolveError> {
        self.check(y)?;
        Ok(if y >= self.y_star() {
            self.u_second_closed(y)
        } else {
            let (phi, h) = self.phi_h(y);
            phi * h / (self.consts.kappa * y * y)
        })
    }

    fn u_closed(&self, y: f64) -> f64 {
        let c = &self.consts;
        self.coef_c * y.powf(c.lambda) - c.x_floor * y + c.floor_value()
    }

    fn u_prime_closed(&self, y: f64) -> f64 {
        let c = &self.consts;
        self.coef_c * c.lambda * y.powf(c.lambda - 1.0) - c.x_floor
    }

    fn u_second_closed(&self, y: f64) -> f64 {
        let l = self.consts.lambda;
        self.coef_c * l * (l - 1.0) * y.powf(l - 2.0)
    }

    fn u_from_phi_h(&self, y: f64, phi: f64, h: f64) -> f64 {
        let p = &self.consts.params;
        let g = p.gamma;
        (phi * h + g / (1.0 - g) * phi.powf(1.0 - 1.0 / g) + (p.r + p.rho - p.delta) / p.rho * (phi - y)) / p.delta
    }

    /// φ(y) = y − ρ y u′(y) on either branch.
    pub fn phi_of(&self, y: f64) -> f64 {
        if y >= self.y_star() {
            y - self.consts.params.rho * y * self.u_prime_closed(y)
        } else {
            self.fbp.phi_at(y).unwrap()
        }
    }

    /// H(y) = κ y² u″(y) / φ(y) on either branch.
    pub fn h_of(&self, y: f64) -> f64 {
        if y >= self.y_star() {
            self.consts.kappa * y * y * self.u_second_closed(y) / self.phi_of(y)
        } else {
            self.fbp.h_at(y).unwrap()
        }
    }

    /// Left minus right side of the applicable dual equation.
    ///
    /// Below y* the second derivative is taken from the slope of the φ
    /// interpolant, u″ = (φ − yφ′)/(ρy²), so the residual measures how well
    /// the interpolated solution satisfies the equation between grid nodes.
    pub fn dual_residual(&self, y: f64) -> Result<f64, SolveError> {
        self.check(y)?;
        let c = &self.consts;
        let p = &c.params;
        if y >= self.y_star() {
            let lhs = -c.kappa * y * y * self.u_second_closed(y)
                + (p.r + p.rho * (1.0 - p.alpha) - p.delta) * y * self.u_prime_closed(y)
                + p.delta * self.u_closed(y);
            let rhs = p.alpha.powf(1.0 - p.gamma) / (1.0 - p.gamma) - p.alpha * y;
            Ok(lhs - rhs)
        } else {
            let (phi, h) = self.phi_h(y);
            let dphi = self.fbp.phi_slope_at(y).unwrap();
            let u = self.u_from_phi_h(y, phi, h);
            let up = (1.0 - phi / y) / p.rho;
            let upp = (phi - y * dphi) / (p.rho * y * y);
            let lhs = -c.kappa * y * y * upp + (p.r + p.rho - p.delta) * y * up + p.delta * u;
            let g = p.gamma;
            let rhs = g / (1.0 - g) * (y - p.rho * y * up).powf(1.0 - 1.0 / g);
            Ok(lhs - rhs)
        }
    }

    /// Mismatch between the two branches evaluated at y*.
    pub fn pasting(&self) -> Pasting {
        let ys = self.y_star();
        let (phi, h) = (self.consts.alpha_pow(), self.fbp.h_at(ys).unwrap());
        let inner_u = self.u_from_phi_h(ys, phi, h);
        let inner_up = (1.0 - phi / ys) / self.consts.params.rho;
        let inner_upp = phi * h / (self.consts.kappa * ys * ys);
        let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs());
        Pasting {
            u: rel(inner_u, self.u_closed(ys)),
            u_prime: rel(inner_up, self.u_prime_closed(ys)),
            u_second: rel(inner_upp, self.u_second_closed(ys)),
        }
    }

    /// Free-boundary condition y* − ρ y* u′(y*) − α^(−γ).
    pub fn boundary_condition_residual(&self) -> f64 {
        let ys = self.y_star();
        ys - self.consts.params.rho * ys * self.u_prime_closed(ys) - self.consts.alpha_pow()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fbp::{solve_free_boundary_with, FbpOptions};
    use crate::params::ModelParams;
    use std::sync::OnceLock;

    fn dual() -> &'static DualSolution {
        static CELL: OnceLock<DualSolution> = OnceLock::new();
        CELL.get_or_init(|| {
            let c = ModelParams::reference().derive().unwrap();
            DualSolution::new(solve_free_boundary_with(&c, &FbpOptions::default()).unwrap())
        })
    }

    #[test]
    fn coefficient_is_positive() {
        assert!(dual().coef_c > 0.0);
    }

    #[test]
    fn closed_branch_at_twice_y_star() {
        let d = dual();
        let c = &d.consts;
        let ys = d.y_star();
        // Hand substitution into the closed form.
        let a = c.alpha_pow();
        let coef = (ys * (1.0 + c.x_floor) - a) / (c.lambda * ys.powf(c.lambda));
        let expected = coef * 2f64.powf(c.lambda) * ys.powf(c.lambda) - c.x_floor * 2.0 * ys + 0.75f64.powi(-1) / (0.3 * -1.0);
        assert!((d.u(2.0 * ys).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn large_y_tends_to_affine_asymptote() {
        let d = dual();
        let c = &d.consts;
        let gap = |y: f64| d.u(y).unwrap() + c.x_floor * y - c.floor_value();
        assert!(gap(1e3).abs() < gap(1e1).abs());
        assert!(gap(1e6).abs() < 1e-6, "{}", gap(1e6));
        let y = 1e8;
        assert!((d.u_prime(y).unwrap() + c.x_floor).abs() < 1e-8);
        assert!((d.u_prime(1e4 * d.y_star()).unwrap() + 2.777_777_777).abs() < 1e-3);
    }

    #[test]
    fn branches_paste_smoothly() {
        let p = dual().pasting();
        assert!(p.max() < 1e-6, "{p:?}");
    }

    #[test]
    fn derivative_at_boundary_is_minus_x_star() {
        let d = dual();
        let ys = d.y_star();
        let below = (1.0 - d.consts.alpha_pow() / ys) / d.consts.params.rho;
        assert!((below - d.u_prime(ys).unwrap()).abs() < 1e-10);
        assert!(d.boundary_condition_residual().abs() < 1e-10);
    }

    #[test]
    fn second_derivative_matches_finite_difference() {
        let d = dual();
        let grid: Vec<(f64, f64, f64)> = d.fbp.increasing().collect();
        let y = grid[grid.len() / 2].0;
        let h = 1e-5 * y;
        let fd = (d.u_prime(y + h).unwrap() - d.u_prime(y - h).unwrap()) / (2.0 * h);
        let exact = d.u_second(y).unwrap();
        assert!((fd - exact).abs() < 1e-5 * exact.abs(), "{fd} {exact}");
    }

    #[test]
    fn residuals_vanish_on_both_branches() {
        let d = dual();
        for k in 0..50 {
            let y = d.y_star() * (1.0 + k as f64);
            assert!(d.dual_residual(y).unwrap().abs() < 1e-10);
        }
        let (lo, hi) = (d.y_min().ln() + 1e-9, d.y_star().ln() - 1e-9);
        for k in 0..=200 {
            let y = (lo + (hi - lo) * k as f64 / 200.0).exp();
            let r = d.dual_residual(y).unwrap();
            assert!(r.abs() < 1e-6, "y={y} r={r}");
        }
    }

    #[test]
    fn dual_is_convex_decreasing_and_bounded() {
        let d = dual();
        let (lo, hi) = (d.y_min().ln(), (100.0 * d.y_star()).ln());
        let bound = d.consts.dual_upper_bound();
        let mut last = f64::NEG_INFINITY;
        for k in 0..1000 {
            let y = (lo + (hi - lo) * k as f64 / 999.0).exp();
            let up = d.u_prime(y).unwrap();
            assert!(up < 0.0);
            assert!(d.u_second(y).unwrap() > 0.0);
            assert!(up > last, "u' not increasing at {y}");
            assert!(d.u(y).unwrap() <= bound);
            last = up;
        }
        let far = 1e4 * d.y_star();
        assert!((far * d.u_second(far).unwrap()).abs() < 1e-6);
    }

    #[test]
    fn below_floor_is_a_domain_error() {
        let d = dual();
        assert!(d.u(0.5 * d.y_min()).is_err());
        assert!(d.u_prime(0.0).is_err());
    }
}
