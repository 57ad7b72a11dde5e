//! Market and preference inputs, and the closed-form constants derived from them.

use std::collections::BTreeMap;
use std::fmt;

use crate::error::ParamError;

/// Black–Scholes market plus habit-formation preferences.
///
/// `delta` is the aggregate discount rate: subjective time preference plus
/// the hazard rate of an exponential lifetime. Only the sum matters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    pub r: f64,
    pub mu: f64,
    pub sigma: f64,
    pub rho: f64,
    pub alpha: f64,
    pub delta: f64,
    pub gamma: f64,
}

/// Names accepted in configuration files and `--set` overrides.
pub const PARAM_KEYS: [&str; 7] = ["r", "mu", "sigma", "rho", "alpha", "delta", "gamma"];

impl ModelParams {
    /// The parameter set used throughout the numerical study.
    pub const fn reference() -> Self {
        Self {
            r: 0.02,
            mu: 0.12,
            sigma: 0.2,
            rho: 1.0,
            alpha: 0.75,
            delta: 0.3,
            gamma: 2.0,
        }
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        let finite = [
            ("r", self.r),
            ("mu", self.mu),
            ("sigma", self.sigma),
            ("rho", self.rho),
            ("alpha", self.alpha),
            ("delta", self.delta),
            ("gamma", self.gamma),
        ];
        for (name, value) in finite {
            if !value.is_finite() {
                return Err(ParamError::NotFinite { name, value });
            }
        }
        if self.r <= 0.0 {
            return Err(ParamError::bound("r", "r must be positive", self.r));
        }
        if self.mu <= self.r {
            return Err(ParamError::bound("mu", "mu must exceed r", self.mu));
        }
        if self.sigma <= 0.0 {
            return Err(ParamError::bound("sigma", "sigma must be positive", self.sigma));
        }
        if self.rho <= 0.0 {
            return Err(ParamError::bound("rho", "rho must be positive", self.rho));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(ParamError::bound("alpha", "alpha must be in (0,1]", self.alpha));
        }
        if self.delta <= 0.0 {
            return Err(ParamError::bound("delta", "delta must be positive", self.delta));
        }
        if self.gamma <= 1.0 {
            return Err(ParamError::bound("gamma", "gamma must exceed 1", self.gamma));
        }
        Ok(())
    }

    pub fn sharpe_ratio(&self) -> f64 {
        (self.mu - self.r) / self.sigma
    }

    /// Reads a parameter by its configuration key.
    pub fn get(&self, key: &str) -> Option<f64> {
        Some(match key {
            "r" => self.r,
            "mu" => self.mu,
            "sigma" => self.sigma,
            "rho" => self.rho,
            "alpha" => self.alpha,
            "delta" => self.delta,
            "gamma" => self.gamma,
            "sharpe_ratio" => self.sharpe_ratio(),
            _ => return None,
        })
    }

    /// Sets a parameter by key. `sharpe_ratio` moves `mu` at fixed `r` and `sigma`.
    pub fn set(&mut self, key: &str, value: f64) -> Result<(), ParamError> {
        match key {
            "r" => self.r = value,
            "mu" => self.mu = value,
            "sigma" => self.sigma = value,
            "rho" => self.rho = value,
            "alpha" => self.alpha = value,
            "delta" => self.delta = value,
            "gamma" => self.gamma = value,
            "sharpe_ratio" => self.mu = self.r + value * self.sigma,
            _ => return Err(ParamError::UnknownKey(key.to_string())),
        }
        Ok(())
    }

    /// Builds parameters from a key-value map, requiring every key in [`PARAM_KEYS`].
    pub fn from_map(map: &BTreeMap<String, f64>) -> Result<Self, ParamError> {
        let fetch = |key: &'static str| map.get(key).copied().ok_or(ParamError::MissingKey(key));
        let params = Self {
            r: fetch("r")?,
            mu: fetch("mu")?,
            sigma: fetch("sigma")?,
            rho: fetch("rho")?,
            alpha: fetch("alpha")?,
            delta: fetch("delta")?,
            gamma: fetch("gamma")?,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn derive(&self) -> Result<DerivedConstants, ParamError> {
        DerivedConstants::new(*self)
    }
}

impl fmt::Display for ModelParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "r={} mu={} sigma={} rho={} alpha={} delta={} gamma={}",
            self.r, self.mu, self.sigma, self.rho, self.alpha, self.delta, self.gamma
        )
    }
}

/// Closed-form constants of the model. Construct through [`ModelParams::derive`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivedConstants {
    pub params: ModelParams,
    /// (mu - r)^2 / (2 sigma^2).
    pub kappa: f64,
    /// Negative root of the characteristic quadratic.
    pub lambda: f64,
    /// Positive root of the characteristic quadratic, always above 1.
    pub lambda_prime: f64,
    /// Minimum wealth-to-habit ratio that avoids bankruptcy.
    pub x_floor: f64,
    pub eta1: f64,
    pub eta2: f64,
    /// Merton fraction (mu - r) / sigma^2.
    pub merton_slope: f64,
    /// Slope of the investment policy below the critical ratio.
    pub constrained_slope: f64,
}

impl DerivedConstants {
    pub fn new(params: ModelParams) -> Result<Self, ParamError> {
        params.validate()?;
        let ModelParams {
            r,
            mu,
            sigma,
            rho,
            alpha,
            delta,
            gamma,
        } = params;

        let excess = mu - r;
        let kappa = excess * excess / (2.0 * sigma * sigma);
        let (lambda, lambda_prime) = quadratic_roots(kappa, r + rho * (1.0 - alpha) - delta, delta);
        let x_floor = alpha / (r + rho * (1.0 - alpha));
        let eta2 = alpha.powf(-gamma) / (1.0 + rho * x_floor);
        let eta1 = lambda / (lambda - 1.0) * eta2;
        let merton_slope = excess / (sigma * sigma);

        Ok(Self {
            params,
            kappa,
            lambda,
            lambda_prime,
            x_floor,
            eta1,
            eta2,
            merton_slope,
            constrained_slope: merton_slope * (1.0 - lambda),
        })
    }

    /// kappa / rho: the upper edge of the admissible H range.
    pub fn h_top(&self) -> f64 {
        self.kappa / self.params.rho
    }

    /// alpha^(-gamma): marginal utility at minimum consumption.
    pub fn alpha_pow(&self) -> f64 {
        self.params.alpha.powf(-self.params.gamma)
    }

    /// Value of consuming at the minimum rate forever.
    pub fn floor_value(&self) -> f64 {
        let p = &self.params;
        p.alpha.powf(1.0 - p.gamma) / (p.delta * (1.0 - p.gamma))
    }

    /// f(xi) = -kappa xi^2 + (kappa + r + rho(1-alpha) - delta) xi + delta.
    pub fn characteristic(&self, xi: f64) -> f64 {
        let p = &self.params;
        let b = self.kappa + p.r + p.rho * (1.0 - p.alpha) - p.delta;
        -self.kappa * xi * xi + b * xi + p.delta
    }

    /// |f(root)| divided by the largest term magnitude, for both roots.
    pub fn quadratic_residuals(&self) -> (f64, f64) {
        let p = &self.params;
        let b = self.kappa + p.r + p.rho * (1.0 - p.alpha) - p.delta;
        let rel = |xi: f64| {
            let scale = (self.kappa * xi * xi).abs() + (b * xi).abs() + p.delta.abs();
            self.characteristic(xi).abs() / scale
        };
        (rel(self.lambda), rel(self.lambda_prime))
    }

    /// H at the trial boundary eta: (kappa/rho) [1 - lambda (1 - eta/eta1)].
    pub fn h_at_boundary(&self, eta: f64) -> f64 {
        self.h_top() * (1.0 - self.lambda * (1.0 - eta / self.eta1))
    }

    /// Upper bound on the dual function used in the transversality argument.
    pub fn dual_upper_bound(&self) -> f64 {
        let p = &self.params;
        (self.kappa + p.r + p.rho - p.delta) * self.alpha_pow() / (p.delta * p.rho)
    }
}

/// Roots of -k xi^2 + (k + c) xi + d = 0 with k, d > 0, ordered (negative, positive).
///
/// Uses the conjugate form for whichever root would suffer cancellation.
fn quadratic_roots(kappa: f64, c: f64, delta: f64) -> (f64, f64) {
    let b = kappa + c;
    let disc = (b * b + 4.0 * delta * kappa).sqrt();
    // Product of roots is -delta/kappa.
    if b >= 0.0 {
        let positive = (b + disc) / (2.0 * kappa);
        let negative = -2.0 * delta / (b + disc);
        (negative, positive)
    } else {
        let negative = (b - disc) / (2.0 * kappa);
        let positive = 2.0 * delta / (disc - b);
        (negative, positive)
    }
}
