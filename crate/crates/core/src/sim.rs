//! Euler–Maruyama simulation of the controlled wealth-to-habit ratio and a
//! Monte Carlo estimate of discounted utility.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{PolicyError, SimError};
use crate::policy::PolicySolution;

/// Nodes of the tabulated policy above x*.
const TABLE_NODES: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    pub dt: f64,
    pub horizon_t: f64,
    pub n_paths: usize,
    pub seed: u64,
    pub x0: f64,
}

impl SimConfig {
    pub fn validate(&self, policy: &PolicySolution) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::Config(m));
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad(format!("dt must be positive (got {})", self.dt));
        }
        if !(self.horizon_t >= self.dt && self.horizon_t.is_finite()) {
            return bad(format!("horizon_T must be at least dt (got {})", self.horizon_t));
        }
        if self.n_paths == 0 {
            return bad("n_paths must be at least 1".into());
        }
        if !(self.x0 >= policy.x_floor() && self.x0 <= policy.x_max) {
            return Err(PolicyError::OutOfRange {
                x: self.x0,
                x_floor: policy.x_floor(),
                x_max: policy.x_max,
            }
            .into());
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.horizon_t / self.dt).round() as usize
    }
}

/// Policy actually applied along a path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Control {
    Optimal,
    /// c = max(α, k·c*) above x*; unchanged below, where more consumption
    /// would push wealth under the floor.
    ScaledConsumption(f64),
    /// θ = k·θ*.
    ScaledInvestment(f64),
    /// c ≡ α with θ = θ*.
    MinimalConsumption,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimPath {
    pub times: Vec<f64>,
    pub x_values: Vec<f64>,
    pub clamp_count: usize,
    pub cap_count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub mean: f64,
    /// `None` for a single path.
    pub stderr: Option<f64>,
    pub tail_bound: f64,
    pub n_paths: usize,
    pub clamp_count: usize,
    pub cap_count: usize,
}

impl McEstimate {
    /// 3·stderr + tail bound + 5·dt·|v| allowance for |mean − v|.
    pub fn tolerance(&self, v: f64, dt: f64) -> f64 {
        3.0 * self.stderr.unwrap_or(0.0) + self.tail_bound + 5.0 * dt * v.abs()
    }
}

/// e^(−δT)·α^(1−γ)/(δ(γ−1)): utility beyond the horizon when c ≥ α.
pub fn tail_bound(policy: &PolicySolution, horizon_t: f64) -> f64 {
    let p = &policy.consts.params;
    (-p.delta * horizon_t).exp() * p.alpha.powf(1.0 - p.gamma) / (p.delta * (p.gamma - 1.0))
}

/// Drift and diffusion of the controlled ratio at x.
pub fn drift_diffusion(policy: &PolicySolution, x: f64) -> Result<(f64, f64), PolicyError> {
    let theta = policy.theta_star(x)?;
    let c = policy.c_star(x)?;
    Ok(coefficients(policy, x, theta, c))
}

fn coefficients(policy: &PolicySolution, x: f64, theta: f64, c: f64) -> (f64, f64) {
    let p = &policy.consts.params;
    let b = (p.r + p.rho) * x + (p.mu - p.r) * theta - (1.0 + p.rho * x) * c;
    (b, p.sigma * theta)
}

/// c* and θ* tabulated on a uniform grid in ln x above x*, cubic Hermite in
/// between; closed form below.
#[derive(Debug, Clone)]
struct PolicyTable {
    x_floor: f64,
    x_switch: f64,
    x_max: f64,
    alpha: f64,
    slope: f64,
    u0: f64,
    du: f64,
    c: Vec<[f64; 2]>,
    theta: Vec<[f64; 2]>,
    /// Flow utility c*^(1−γ)/(1−γ), tabulated to avoid a power per step.
    util: Vec<[f64; 2]>,
    util_floor: f64,
}

impl PolicyTable {
    fn new(policy: &PolicySolution) -> Self {
        let x_switch = policy.switch_x();
        let (u0, u1) = (x_switch.ln(), policy.x_max.ln());
        let du = (u1 - u0) / (TABLE_NODES - 1) as f64;
        let node = |i: usize| if i == TABLE_NODES - 1 { policy.x_max } else { (u0 + du * i as f64).exp() };
        // Slopes in u from a small difference, one-sided at the ends.
        let tab = |f: &dyn Fn(f64) -> f64| -> Vec<[f64; 2]> {
            (0..TABLE_NODES)
                .map(|i| {
                    let x = node(i);
                    let e = 1e-6;
                    let (xa, xb) = match i {
                        0 => (x, x * (1.0 + e)),
                        i if i == TABLE_NODES - 1 => (x * (1.0 - e), x),
                        _ => (x * (1.0 - e), x * (1.0 + e)),
                    };
                    [f(x), (f(xb) - f(xa)) / (xb.ln() - xa.ln()) * du]
                })
                .collect()
        };
        let c = tab(&|x| policy.c_star(x).unwrap());
        let theta = tab(&|x| policy.theta_star(x).unwrap());
        let g = policy.consts.params.gamma;
        let util = tab(&|x| policy.c_star(x).unwrap().powf(1.0 - g) / (1.0 - g));
        Self {
            x_floor: policy.x_floor(),
            x_switch,
            x_max: policy.x_max,
            alpha: policy.consts.params.alpha,
            slope: policy.consts.constrained_slope,
            u0,
            du,
            c,
            theta,
            util,
            util_floor: policy.consts.params.alpha.powf(1.0 - g) / (1.0 - g),
        }
    }

    /// (c*, θ*, utility of c*) at x in [x̲, x_max].
    #[inline]
    fn eval(&self, x: f64) -> (f64, f64, f64) {
        if x <= self.x_switch {
            return (self.alpha, self.slope * (x - self.x_floor), self.util_floor);
        }
        let s = (x.ln() - self.u0) / self.du;
        let i = (s as usize).min(TABLE_NODES - 2);
        let t = s - i as f64;
        let h = |v: &[[f64; 2]]| {
            let (a, b) = (v[i], v[i + 1]);
            let t2 = t * t;
            let t3 = t2 * t;
            (2.0 * t3 - 3.0 * t2 + 1.0) * a[0]
                + (t3 - 2.0 * t2 + t) * a[1]
                + (-2.0 * t3 + 3.0 * t2) * b[0]
                + (t3 - t2) * b[1]
        };
        (h(&self.c), h(&self.theta), h(&self.util))
    }
}

/// Simulation engine bound to one policy.
#[derive(Debug, Clone)]
pub struct Simulator<'a> {
    pub policy: &'a PolicySolution,
    table: PolicyTable,
    control: Control,
    util_scale: f64,
}

impl<'a> Simulator<'a> {
    pub fn new(policy: &'a PolicySolution) -> Self {
        Self {
            policy,
            table: PolicyTable::new(policy),
            control: Control::Optimal,
            util_scale: 1.0,
        }
    }

    pub fn with_control(mut self, control: Control) -> Self {
        self.control = control;
        if let Control::ScaledConsumption(k) = control {
            self.util_scale = k.powf(1.0 - self.policy.consts.params.gamma);
        }
        self
    }

    /// Applied (c, θ) at x.
    pub fn controls_at(&self, x: f64) -> (f64, f64) {
        let (c, theta, _) = self.applied(x);
        (c, theta)
    }

    /// Applied (c, θ) and the flow utility of c.
    #[inline]
    fn applied(&self, x: f64) -> (f64, f64, f64) {
        let t = &self.table;
        let (c, theta, u) = t.eval(x);
        match self.control {
            Control::Optimal => (c, theta, u),
            Control::ScaledConsumption(k) if x > t.x_switch => {
                if k * c > t.alpha {
                    (k * c, theta, self.util_scale * u)
                } else {
                    (t.alpha, theta, t.util_floor)
                }
            }
            Control::ScaledConsumption(_) => (c, theta, u),
            Control::ScaledInvestment(k) => (c, k * theta, u),
            Control::MinimalConsumption => (t.alpha, theta, t.util_floor),
        }
    }

    /// One Euler–Maruyama step from x under controls (c, θ) with clamping;
    /// returns (x_next, clamped, capped).
    #[inline]
    fn step(&self, x: f64, (c, theta, _): (f64, f64, f64), dt: f64, dw: f64) -> (f64, bool, bool) {
        let (b, a) = coefficients(self.policy, x, theta, c);
        let next = x + b * dt + a * dw;
        if next < self.table.x_floor {
            (self.table.x_floor, true, false)
        } else if next > self.table.x_max {
            (self.table.x_max, false, true)
        } else {
            (next, false, false)
        }
    }

    fn rng(cfg: &SimConfig, path_index: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(path_index);
        rng
    }

    pub fn simulate_path(&self, cfg: &SimConfig, path_index: u64) -> Result<SimPath, SimError> {
        cfg.validate(self.policy)?;
        let mut rng = Self::rng(cfg, path_index);
        let sq = cfg.dt.sqrt();
        let increments: Vec<f64> = (0..cfg.steps())
            .map(|_| sq * rng.sample::<f64, _>(StandardNormal))
            .collect();
        Ok(self.simulate_driven(cfg.x0, cfg.dt, &increments))
    }

    /// Path driven by caller-supplied Brownian increments.
    pub fn simulate_driven(&self, x0: f64, dt: f64, increments: &[f64]) -> SimPath {
        let n = increments.len();
        let mut x_values = Vec::with_capacity(n + 1);
        let mut x = x0;
        x_values.push(x);
        let (mut clamp_count, mut cap_count) = (0, 0);
        for &dw in increments {
            let (next, clamped, capped) = self.step(x, self.applied(x), dt, dw);
            clamp_count += clamped as usize;
            cap_count += capped as usize;
            x = next;
            x_values.push(x);
        }
        SimPath {
            times: (0..=n).map(|k| k as f64 * dt).collect(),
            x_values,
            clamp_count,
            cap_count,
        }
    }

    /// Discounted utility of one path by the trapezoidal rule, without
    /// storing the path.
    fn path_utility(&self, cfg: &SimConfig, path_index: u64) -> (f64, usize, usize) {
        let p = &self.policy.consts.params;
        let mut rng = Self::rng(cfg, path_index);
        let (dt, sq) = (cfg.dt, cfg.dt.sqrt());
        let decay = (-p.delta * dt).exp();
        let mut x = cfg.x0;
        let mut disc = 1.0;
        let mut ctl = self.applied(x);
        let mut sum = 0.5 * ctl.2;
        let (mut clamps, mut caps) = (0, 0);
        let n = cfg.steps();
        for k in 1..=n {
            let dw = sq * rng.sample::<f64, _>(StandardNormal);
            let (next, clamped, capped) = self.step(x, ctl, dt, dw);
            clamps += clamped as usize;
            caps += capped as usize;
            x = next;
            ctl = self.applied(x);
            disc *= decay;
            let w = if k == n { 0.5 } else { 1.0 };
            sum += w * disc * ctl.2;
        }
        (sum * dt, clamps, caps)
    }

    pub fn mc_value(&self, cfg: &SimConfig) -> Result<McEstimate, SimError> {
        cfg.validate(self.policy)?;
        let runs: Vec<(f64, usize, usize)> = (0..cfg.n_paths as u64)
            .into_par_iter()
            .map(|i| self.path_utility(cfg, i))
            .collect();
        let values: Vec<f64> = runs.iter().map(|r| r.0).collect();
        let n = values.len() as f64;
        let mean = pairwise_sum(&values) / n;
        let stderr = (values.len() > 1).then(|| {
            let dev: Vec<f64> = values.iter().map(|v| (v - mean) * (v - mean)).collect();
            (pairwise_sum(&dev) / (n - 1.0) / n).sqrt()
        });
        Ok(McEstimate {
            mean,
            stderr,
            tail_bound: tail_bound(self.policy, cfg.horizon_t),
            n_paths: values.len(),
            clamp_count: runs.iter().map(|r| r.1).sum(),
            cap_count: runs.iter().map(|r| r.2).sum(),
        })
    }

    /// Wealth and habit along a simulated path, starting from wealth `w0`.
    ///
    /// Habit follows dZ = −ρ(Z − C)dt with C = c·Z held constant over each
    /// step, which integrates exactly to Z·exp(−ρ(1 − c)dt).
    pub fn reconstruct_wealth(&self, path: &SimPath, w0: f64) -> (Vec<f64>, Vec<f64>) {
        let rho = self.policy.consts.params.rho;
        let mut z = w0 / path.x_values[0];
        let mut ws = Vec::with_capacity(path.x_values.len());
        let mut zs = Vec::with_capacity(path.x_values.len());
        for (k, &x) in path.x_values.iter().enumerate() {
            ws.push(x * z);
            zs.push(z);
            if let Some(&t_next) = path.times.get(k + 1) {
                let c = self.controls_at(x).0;
                z *= (-rho * (1.0 - c) * (t_next - path.times[k])).exp();
            }
        }
        (ws, zs)
    }
}

/// Sum with a fixed pairwise reduction order.
fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 16 {
        v.iter().sum()
    } else {
        let (a, b) = v.split_at(v.len() / 2);
        pairwise_sum(a) + pairwise_sum(b)
    }
}

pub fn simulate_path(policy: &PolicySolution, cfg: &SimConfig, path_index: u64) -> Result<SimPath, SimError> {
    Simulator::new(policy).simulate_path(cfg, path_index)
}

pub fn mc_value(policy: &PolicySolution, cfg: &SimConfig) -> Result<McEstimate, SimError> {
    Simulator::new(policy).mc_value(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dual::DualSolution;
    use crate::fbp::{solve_free_boundary_with, FbpOptions};
    use crate::params::ModelParams;
    use std::sync::OnceLock;

    fn solve(params: ModelParams) -> PolicySolution {
        let c = params.derive().unwrap();
        PolicySolution::new(DualSolution::new(solve_free_boundary_with(&c, &FbpOptions::default()).unwrap()))
    }

    fn policy() -> &'static PolicySolution {
        static CELL: OnceLock<PolicySolution> = OnceLock::new();
        CELL.get_or_init(|| solve(ModelParams::reference()))
    }

    fn cfg(x0: f64, n_paths: usize, horizon_t: f64) -> SimConfig {
        SimConfig {
            dt: 1e-3,
            horizon_t,
            n_paths,
            seed: 7,
            x0,
        }
    }

    #[test]
    fn drift_and_diffusion_vanish_at_floor() {
        let p = policy();
        let (b, a) = drift_diffusion(p, p.x_floor()).unwrap();
        assert!(b.abs() < 1e-14 && a == 0.0);
        let eps = 1e-6;
        let (b, a) = drift_diffusion(p, p.x_floor() + eps).unwrap();
        assert!((b / eps - 0.823_779).abs() < 1e-5, "{}", b / eps);
        assert!((a / eps - 0.2 * p.consts.constrained_slope).abs() < 1e-8);
        let xs = p.x_star;
        let (b0, a0) = drift_diffusion(p, xs).unwrap();
        let (b1, a1) = drift_diffusion(p, xs * (1.0 + 1e-12)).unwrap();
        assert!((b0 - b1).abs() < 1e-6 && (a0 - a1).abs() < 1e-6);
        assert!(drift_diffusion(p, p.x_max * 1.1).is_err());
    }

    #[test]
    fn table_matches_policy() {
        let p = policy();
        let sim = Simulator::new(p);
        let (a, b) = (p.x_star.ln(), p.x_max.ln());
        for k in 0..=500 {
            let x = (a + (b - a) * (k as f64 + 0.37) / 501.0).exp().min(p.x_max);
            let (c, t) = sim.controls_at(x);
            let (ce, te) = (p.c_star(x).unwrap(), p.theta_star(x).unwrap());
            assert!((c - ce).abs() < 1e-8 * ce, "c at {x}: {c} vs {ce}");
            assert!((t - te).abs() < 1e-8 * te, "theta at {x}: {t} vs {te}");
        }
    }

    #[test]
    fn tail_bound_arithmetic() {
        let t = tail_bound(policy(), 60.0);
        let expected = (-18f64).exp() / 0.75 / 0.3;
        assert!((t - expected).abs() < 1e-20);
        assert!((t - 6.8e-8).abs() < 1e-9);
    }

    #[test]
    fn floor_is_absorbing() {
        let p = policy();
        let sim = Simulator::new(p);
        let path = sim.simulate_path(&cfg(p.x_floor(), 1, 5.0), 0).unwrap();
        assert!(path.x_values.iter().all(|&x| (x - p.x_floor()).abs() < 1e-10));
        let est = sim.mc_value(&cfg(p.x_floor(), 1, 60.0)).unwrap();
        assert!(est.stderr.is_none());
        assert!((est.mean - p.value(p.x_floor()).unwrap()).abs() < est.tail_bound + 1e-7, "{}", est.mean);
    }

    #[test]
    fn paths_are_reproducible_and_distinct() {
        let p = policy();
        let sim = Simulator::new(p);
        let c = cfg(5.0, 1, 2.0);
        let a = sim.simulate_path(&c, 3).unwrap();
        let b = sim.simulate_path(&c, 3).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.x_values, sim.simulate_path(&c, 4).unwrap().x_values);
        assert!(a.x_values.iter().all(|&x| x >= p.x_floor()));
        let e1 = sim.mc_value(&cfg(5.0, 20, 1.0)).unwrap();
        let e2 = sim.mc_value(&cfg(5.0, 20, 1.0)).unwrap();
        assert_eq!(e1, e2);
    }

    #[test]
    fn strong_error_shrinks_with_dt() {
        let p = policy();
        let sim = Simulator::new(p);
        let (t_end, fine): (f64, f64) = (1.0, 1e-3 / 8.0);
        let n_fine = (t_end / fine) as usize;
        let mut errs = [0.0; 3];
        for path in 0..100u64 {
            let mut rng = Simulator::rng(&cfg(5.0, 1, 1.0), path);
            let dw: Vec<f64> = (0..n_fine).map(|_| fine.sqrt() * rng.sample::<f64, _>(StandardNormal)).collect();
            let reference = *sim.simulate_driven(4.0, fine, &dw).x_values.last().unwrap();
            for (j, m) in [8usize, 4, 2].into_iter().enumerate() {
                let coarse: Vec<f64> = dw.chunks(m).map(|c| c.iter().sum()).collect();
                let end = *sim.simulate_driven(4.0, fine * m as f64, &coarse).x_values.last().unwrap();
                errs[j] += (end - reference).abs() / 100.0;
            }
        }
        assert!(errs[0] > errs[1] && errs[1] > errs[2], "{errs:?}");
    }

    #[test]
    fn reconstruction_is_consistent() {
        let p = policy();
        let sim = Simulator::new(p);
        let path = sim.simulate_path(&cfg(5.0, 1, 3.0), 1).unwrap();
        let (w, z) = sim.reconstruct_wealth(&path, 10.0);
        assert_eq!(z[0], 2.0);
        for k in 0..w.len() {
            assert!((w[k] / z[k] - path.x_values[k]).abs() < 1e-10 * path.x_values[k]);
            assert!(w[k] > 0.0 && z[k] > 0.0);
        }
        let floor = sim.simulate_path(&cfg(p.x_floor(), 1, 3.0), 0).unwrap();
        let (_, z) = sim.reconstruct_wealth(&floor, 1.0);
        let z0 = z[0];
        for (t, zt) in floor.times.iter().zip(&z) {
            let exact = z0 * (-(1.0 - 0.75) * t).exp();
            assert!((zt - exact).abs() < 1e-12 * exact);
        }
    }

    #[test]
    fn minimal_consumption_is_dominated() {
        let p = policy();
        let sim = Simulator::new(p).with_control(Control::MinimalConsumption);
        let est = sim.mc_value(&cfg(5.0, 10, 60.0)).unwrap();
        // c = alpha along every path: the floor value up to the tail.
        assert!((est.mean - p.value(p.x_floor()).unwrap()).abs() < est.tail_bound + 1e-7);
        assert!(est.mean <= p.value(5.0).unwrap());
    }

    #[test]
    fn config_validation() {
        let p = policy();
        let ok = cfg(5.0, 10, 1.0);
        assert!(ok.validate(p).is_ok());
        assert!(SimConfig { dt: 0.0, ..ok }.validate(p).is_err());
        assert!(SimConfig { horizon_t: 1e-4, ..ok }.validate(p).is_err());
        assert!(SimConfig { n_paths: 0, ..ok }.validate(p).is_err());
        assert!(SimConfig { x0: 1.0, ..ok }.validate(p).is_err());
    }

    #[test]
    fn vanishing_premium_gives_near_deterministic_paths() {
        // The free boundary is not resolvable at mu - r = 1e-8 (the eta
        // bracket is narrower than roundoff), so the solver must refuse.
        let mut params = ModelParams::reference();
        params.mu = params.r + 1e-8;
        let c = params.derive().unwrap();
        assert!(solve_free_boundary_with(&c, &FbpOptions::default()).is_err());
        // theta* is bounded by (mu - r)(1 + rho x)/(rho sigma^2); apply that scale.
        let p = policy();
        let scale = 1e-8 / (p.consts.params.mu - p.consts.params.r);
        let sim = Simulator::new(p).with_control(Control::ScaledInvestment(scale));
        let c = cfg(5.0, 1, 5.0);
        let ends: Vec<f64> = (0..100)
            .map(|i| *sim.simulate_path(&c, i).unwrap().x_values.last().unwrap())
            .collect();
        let mean = ends.iter().sum::<f64>() / 100.0;
        let var = ends.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / 99.0;
        assert!(var < 1e-6, "{var}");
    }
}
