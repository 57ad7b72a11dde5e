//! Backward shooting for the (φ, H) free-boundary system.
//!
//! A trial boundary η fixes φ(η) = α^(-γ) and H(η) on the boundary line. The
//! trajectory is followed toward y = 0 until H leaves (0, κ/ρ). Small η exit
//! through the top, large η through the bottom; y* separates the two.
//!
//! The separating trajectory is unstable when integrated toward y = 0, so a
//! single bisection in η (which bottoms out at roundoff) only follows it part
//! of the way. The solver then re-anchors: at the deepest point where the two
//! bracketing trajectories still agree it bisects again on H with φ held
//! fixed, and repeats until the floor y_min is reached.

use rayon::prelude::*;

use crate::error::SolveError;
use crate::interp::{fornberg_weights, Hermite};
use crate::ode::{integrate_decreasing, OdeControls, Sample, Termination, Trajectory};
use crate::params::DerivedConstants;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ExitKind {
    ExitTop,
    ExitBottom,
    ExitPhiZero,
    ReachedYMin,
    /// The integrator gave up before any boundary contact.
    Stalled(Termination),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Top,
    Bottom,
    Converged,
}

impl ExitKind {
    /// Bisection side. φ → 0 and integrator stalls count as bottom.
    pub fn side(self) -> Side {
        match self {
            ExitKind::ExitTop => Side::Top,
            ExitKind::ReachedYMin => Side::Converged,
            ExitKind::ExitBottom | ExitKind::ExitPhiZero | ExitKind::Stalled(_) => Side::Bottom,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            ExitKind::ExitTop => "top",
            ExitKind::ExitBottom => "bottom",
            ExitKind::ExitPhiZero => "phi_zero",
            ExitKind::ReachedYMin => "y_min",
            ExitKind::Stalled(Termination::StepBudgetExhausted) => "step_budget",
            ExitKind::Stalled(_) => "step_underflow",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShootingOutcome {
    pub eta: f64,
    pub exit: ExitKind,
    /// (y, φ, H) at the first boundary contact.
    pub exit_point: (f64, f64, f64),
    pub trajectory: Trajectory<2>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BracketRecord {
    pub eta: f64,
    pub exit: ExitKind,
    pub exit_y: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FbpOptions {
    pub controls: OdeControls,
    /// Relative width of the final η bracket.
    pub eta_tol: f64,
    /// Floor as a multiple of η₁.
    pub y_min_factor: f64,
    /// Boundary-contact band as a multiple of κ/ρ.
    pub h_tol_factor: f64,
    /// Trial points in the initial parallel scan, endpoints included.
    pub scan_points: usize,
    pub max_segments: usize,
}

impl Default for FbpOptions {
    fn default() -> Self {
        Self {
            // Relative step cap: the kept grid feeds the interpolants that
            // every primal quantity is read from.
            controls: OdeControls {
                max_rel_step: 0.01,
                ..OdeControls::default()
            },
            eta_tol: 1e-12,
            y_min_factor: 1e-6,
            h_tol_factor: 1e-8,
            scan_points: 9,
            max_segments: 100_000,
        }
    }
}

/// Bracketing trajectories count as coincident while H agrees to this
/// fraction of κ/ρ and φ to this relative precision.
const AGREE_REL: f64 = 1e-9;

/// Shots run this far below y_min so the retained grid sits where the
/// unstable mode has already been resolved by the bisection.
const DEEP_FACTOR: f64 = 1e-3;

/// Right-hand side of the system in y, without domain checks.
#[inline]
fn rhs_raw(c: &DerivedConstants, y: f64, phi: f64, h: f64) -> [f64; 2] {
    let p = &c.params;
    let top = c.h_top();
    let f = p.rho / (c.kappa * y) * (top - h);
    let dphi = f * phi;
    let dh = f * (phi.powf(-1.0 / p.gamma) - h - (p.r + p.rho - p.delta) / p.rho)
        + (p.r + p.rho) / (p.rho * phi)
        - p.delta / (p.rho * y);
    [dphi, dh]
}

/// (dφ/dy, dH/dy) at (y, φ, H).
pub fn rhs_phi_h(y: f64, phi: f64, h: f64, consts: &DerivedConstants) -> Result<(f64, f64), SolveError> {
    if !(y > 0.0) {
        return Err(SolveError::Domain(format!("y must be positive (got {y})")));
    }
    if !(phi > 0.0) {
        return Err(SolveError::Domain(format!("phi must be positive (got {phi})")));
    }
    let [a, b] = rhs_raw(consts, y, phi, h);
    Ok((a, b))
}

struct Shooter<'a> {
    c: &'a DerivedConstants,
    controls: OdeControls,
    /// Integration end point.
    y_end: f64,
    h_tol: f64,
    phi_floor: f64,
}

impl Shooter<'_> {
    fn from_point(&self, y0: f64, phi0: f64, h0: f64) -> Result<(ExitKind, Trajectory<2>), SolveError> {
        self.from_point_capped(y0, phi0, h0, self.controls.max_step)
    }

    fn from_point_capped(
        &self,
        y0: f64,
        phi0: f64,
        h0: f64,
        max_step: f64,
    ) -> Result<(ExitKind, Trajectory<2>), SolveError> {
        let c = self.c;
        let controls = OdeControls {
            max_step: max_step.min(self.controls.max_step),
            min_step: self.controls.min_step.min(0.5 * max_step),
            ..self.controls
        };
        let top = c.h_top() - self.h_tol;
        let (h_tol, phi_floor) = (self.h_tol, self.phi_floor);
        let traj = integrate_decreasing(
            |y, s: &[f64; 2]| rhs_raw(c, y, s[0], s[1]),
            y0,
            [phi0, h0],
            self.y_end,
            |_, s| s[1] >= top || s[1] <= h_tol || s[0] <= phi_floor,
            &controls,
        )?;
        let last = traj.last().state;
        let exit = match traj.termination {
            Termination::ReachedEndpoint => ExitKind::ReachedYMin,
            Termination::PredicateHit if last[1] >= top => ExitKind::ExitTop,
            Termination::PredicateHit if last[1] <= h_tol => ExitKind::ExitBottom,
            Termination::PredicateHit => ExitKind::ExitPhiZero,
            other => ExitKind::Stalled(other),
        };
        Ok((exit, traj))
    }

    fn shoot(&self, eta: f64) -> Result<ShootingOutcome, SolveError> {
        let (exit, trajectory) = self.from_point(eta, self.c.alpha_pow(), self.c.h_at_boundary(eta))?;
        let last = trajectory.last();
        Ok(ShootingOutcome {
            eta,
            exit,
            exit_point: (last.t, last.state[0], last.state[1]),
            trajectory,
        })
    }
}

impl<'a> Shooter<'a> {
    fn new(c: &'a DerivedConstants, opts: &FbpOptions, y_end: f64) -> Self {
        Self {
            c,
            controls: opts.controls,
            y_end,
            h_tol: opts.h_tol_factor * c.h_top(),
            phi_floor: 1e-14 * c.alpha_pow(),
        }
    }
}

/// Integrates backward from the trial boundary `eta` and classifies the exit.
pub fn shoot(eta: f64, consts: &DerivedConstants, controls: &OdeControls, y_min: f64) -> Result<ShootingOutcome, SolveError> {
    if !(eta > consts.eta1 && eta < consts.eta2) {
        return Err(SolveError::Domain(format!(
            "trial boundary {eta} outside ({}, {})",
            consts.eta1, consts.eta2
        )));
    }
    let opts = FbpOptions {
        controls: *controls,
        ..FbpOptions::default()
    };
    Shooter::new(consts, &opts, y_min).shoot(eta)
}

#[derive(Debug, Clone)]
pub struct FbpSolution {
    pub consts: DerivedConstants,
    pub y_star: f64,
    /// Final η bracket: top-side and bottom-side ends.
    pub eta_bracket: (f64, f64),
    /// Solution samples with strictly decreasing y, from y_star to y_min.
    pub grid: Vec<Sample<2>>,
    pub y_min: f64,
    pub h_tol: f64,
    pub bisection_iterations: usize,
    /// Re-anchored segments needed to reach y_min.
    pub segments: usize,
    pub total_shots: usize,
    pub history: Vec<BracketRecord>,
    phi_interp: Hermite,
    h_interp: Hermite,
}

impl FbpSolution {
    /// Monotone interpolant of φ on [y_min, y_star].
    pub fn phi_at(&self, y: f64) -> Option<f64> {
        self.phi_interp.eval(y)
    }

    pub fn h_at(&self, y: f64) -> Option<f64> {
        self.h_interp.eval(y)
    }

    /// Slope of the φ interpolant.
    pub fn phi_slope_at(&self, y: f64) -> Option<f64> {
        self.phi_interp.derivative(y)
    }

    /// Grid in increasing y: (y, φ, H).
    pub fn increasing(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        self.grid.iter().rev().map(|s| (s.t, s.state[0], s.state[1]))
    }

    pub fn h_at_floor(&self) -> f64 {
        self.grid.last().unwrap().state[1]
    }

    pub fn phi_at_floor(&self) -> f64 {
        self.grid.last().unwrap().state[0]
    }

    pub(crate) fn phi_nodes(&self) -> (&[f64], &[f64]) {
        (self.phi_interp.nodes(), self.phi_interp.values())
    }

    /// Residual of the second-order equation for φ alone, with φ′ and φ″ from
    /// five-point finite differences on the grid. Returns (y, residual) at
    /// interior points.
    pub fn phi_ode_residuals(&self) -> Vec<(f64, f64)> {
        let p = &self.consts.params;
        let (ys, phis) = self.phi_nodes();
        let n = ys.len();
        let mut out = Vec::with_capacity(n.saturating_sub(4));
        for i in 2..n.saturating_sub(2) {
            let xs = &ys[i - 2..=i + 2];
            let w = fornberg_weights(ys[i], xs, 2);
            let fv = &phis[i - 2..=i + 2];
            let d1: f64 = w[1].iter().zip(fv).map(|(a, b)| a * b).sum();
            let d2: f64 = w[2].iter().zip(fv).map(|(a, b)| a * b).sum();
            let (y, phi) = (ys[i], phis[i]);
            let res = self.consts.h_top() * y * y * d2
                + (phi.powf(-1.0 / p.gamma) - (p.r + p.rho - p.delta) / p.rho) * y * d1
                - p.delta / p.rho * phi
                + (p.r + p.rho) / p.rho * y;
            out.push((y, res));
        }
        out
    }

    /// Largest violation of 0 < φ ≤ α^(-γ), 0 < H ≤ κ/ρ and φ increasing.
    pub fn grid_violations(&self) -> Vec<String> {
        let a = self.consts.alpha_pow();
        let top = self.consts.h_top();
        let mut bad = Vec::new();
        for s in &self.grid {
            let [phi, h] = s.state;
            if !(phi > 0.0 && phi <= a * (1.0 + 1e-14)) {
                bad.push(format!("phi={phi} at y={}", s.t));
            }
            if !(h > 0.0 && h <= top) {
                bad.push(format!("H={h} at y={}", s.t));
            }
        }
        for w in self.grid.windows(2) {
            if !(w[1].state[0] < w[0].state[0]) {
                bad.push(format!("phi not increasing near y={}", w[1].t));
            }
        }
        bad
    }
}

/// Solves with default options except for the ODE controls and η tolerance.
pub fn solve_free_boundary(consts: &DerivedConstants, controls: &OdeControls, eta_tol: f64) -> Result<FbpSolution, SolveError> {
    solve_free_boundary_with(
        consts,
        &FbpOptions {
            controls: *controls,
            eta_tol,
            ..FbpOptions::default()
        },
    )
}

pub fn solve_free_boundary_with(consts: &DerivedConstants, opts: &FbpOptions) -> Result<FbpSolution, SolveError> {
    opts.controls.validate()?;
    if !(opts.eta_tol > 0.0) || opts.scan_points < 2 {
        return Err(SolveError::Controls("eta_tol must be positive and scan_points at least 2".into()));
    }
    let y_min = opts.y_min_factor * consts.eta1;
    let sh = Shooter::new(consts, opts, y_min * DEEP_FACTOR);
    let (e1, e2) = (consts.eta1, consts.eta2);
    let width = e2 - e1;
    let lo0 = e1 + 1e-6 * width;
    let hi0 = e2 - 1e-6 * width;

    let n = opts.scan_points;
    let etas: Vec<f64> = (0..n).map(|i| lo0 + (hi0 - lo0) * i as f64 / (n - 1) as f64).collect();
    let scan: Vec<ShootingOutcome> = etas.par_iter().map(|&e| sh.shoot(e)).collect::<Result<_, _>>()?;
    let mut history: Vec<BracketRecord> = scan.iter().map(record).collect();
    let mut total_shots = scan.len();

    let (first, last) = (scan[0].exit, scan[n - 1].exit);
    if first.side() == last.side() && first.side() != Side::Converged {
        return Err(SolveError::NoSignChange {
            lo: lo0,
            hi: hi0,
            lo_kind: first.label(),
            hi_kind: last.label(),
        });
    }

    // Adjacent top/bottom pair; a converged scan point short-circuits.
    let mut lo: Option<ShootingOutcome> = None;
    let mut hi: Option<ShootingOutcome> = None;
    let mut converged: Option<ShootingOutcome> = None;
    for s in scan {
        match s.exit.side() {
            Side::Converged => {
                converged = Some(s);
                break;
            }
            Side::Top if hi.is_none() => lo = Some(s),
            Side::Bottom if hi.is_none() => hi = Some(s),
            _ => {}
        }
    }
    let mut iterations = 0usize;
    if converged.is_none() {
        let (Some(mut l), Some(mut h)) = (lo, hi) else {
            return Err(SolveError::NoSignChange {
                lo: lo0,
                hi: hi0,
                lo_kind: first.label(),
                hi_kind: last.label(),
            });
        };
        while h.eta - l.eta > opts.eta_tol * l.eta {
            let mid = 0.5 * (l.eta + h.eta);
            if mid <= l.eta || mid >= h.eta {
                break;
            }
            let m = sh.shoot(mid)?;
            iterations += 1;
            total_shots += 1;
            history.push(record(&m));
            match m.exit.side() {
                Side::Top => l = m,
                Side::Bottom => h = m,
                Side::Converged => {
                    converged = Some(m);
                    break;
                }
            }
        }
        lo = Some(l);
        hi = Some(h);
    }

    let (y_star, eta_bracket, grid, segments) = match converged {
        Some(c) => (c.eta, (c.eta, c.eta), c.trajectory.samples, 1),
        None => {
            let (l, h) = (lo.unwrap(), hi.unwrap());
            let bracket = (l.eta, h.eta);
            let (grid, segments, shots) = continue_to_floor(&sh, l.trajectory, h.trajectory, opts.max_segments)?;
            total_shots += shots;
            (l.eta, bracket, grid, segments)
        }
    };

    let grid = truncate(consts, grid, y_min)?;

    let ys: Vec<f64> = grid.iter().rev().map(|s| s.t).collect();
    let phis: Vec<f64> = grid.iter().rev().map(|s| s.state[0]).collect();
    let dphis: Vec<f64> = grid.iter().rev().map(|s| s.deriv[0]).collect();
    let hs: Vec<f64> = grid.iter().rev().map(|s| s.state[1]).collect();
    let dhs: Vec<f64> = grid.iter().rev().map(|s| s.deriv[1]).collect();
    let phi_interp = Hermite::monotone(ys.clone(), phis, dphis);
    let h_interp = Hermite::new(ys, hs, dhs);

    Ok(FbpSolution {
        consts: *consts,
        y_star,
        eta_bracket,
        grid,
        y_min,
        h_tol: sh.h_tol,
        bisection_iterations: iterations,
        segments,
        total_shots,
        history,
        phi_interp,
        h_interp,
    })
}

/// Bound on |∂(dH/dy)/∂H|: the local e-folding rate of the mode that
/// separates top and bottom exits.
fn instability_rate(c: &DerivedConstants, y: f64, phi: f64, h: f64) -> f64 {
    let p = &c.params;
    let scale = p.rho / (c.kappa * y);
    let g = phi.powf(-1.0 / p.gamma) - h - (p.r + p.rho - p.delta) / p.rho;
    scale * (g.abs() + (c.h_top() - h).abs()) + 1.0 / y
}

/// Cuts the grid at `y_min`, ending on an interpolated sample there.
fn truncate(c: &DerivedConstants, mut grid: Vec<Sample<2>>, y_min: f64) -> Result<Vec<Sample<2>>, SolveError> {
    let Some(k) = grid.iter().position(|s| s.t <= y_min) else {
        return Err(SolveError::Underflow {
            reached: grid.last().unwrap().t,
            y_min,
        });
    };
    if grid[k].t < y_min {
        let (a, b) = (grid[k - 1], grid[k]);
        let pair = Trajectory {
            samples: vec![a, b],
            termination: Termination::ReachedEndpoint,
            accepted: 1,
            rejected: 0,
        };
        let state = pair.interpolate(y_min).unwrap();
        grid[k] = Sample {
            t: y_min,
            state,
            deriv: rhs_raw(c, y_min, state[0], state[1]),
        };
    }
    grid.truncate(k + 1);
    Ok(grid)
}

fn record(s: &ShootingOutcome) -> BracketRecord {
    BracketRecord {
        eta: s.eta,
        exit: s.exit,
        exit_y: s.exit_point.0,
    }
}

/// Deepest point where `bottom` still matches `top`: the last agreeing
/// sample index, plus an interpolated point inside the next step if one
/// agrees there too.
fn agreement_point(
    top: &Trajectory<2>,
    bottom: &Trajectory<2>,
    h_tol: f64,
    phi_rel_tol: f64,
) -> (usize, Option<(f64, [f64; 2])>) {
    let agrees = |t: f64, s: &[f64; 2]| match bottom.interpolate(t) {
        Some(o) => (s[1] - o[1]).abs() <= h_tol && (s[0] - o[0]).abs() <= phi_rel_tol * s[0],
        None => false,
    };
    let samples = &top.samples;
    let mut idx = 0;
    for (i, s) in samples.iter().enumerate().skip(1) {
        if !agrees(s.t, &s.state) {
            break;
        }
        idx = i;
    }
    let mut extra = None;
    if idx + 1 < samples.len() {
        const SUB: usize = 32;
        let (t0, t1) = (samples[idx].t, samples[idx + 1].t);
        for k in 1..SUB {
            let t = t0 + (t1 - t0) * k as f64 / SUB as f64;
            let s = top.interpolate(t).unwrap();
            if !agrees(t, &s) {
                break;
            }
            extra = Some((t, s));
        }
    }
    (idx, extra)
}

/// Extends the bracketing pair to y_min by re-anchored bisection on H.
/// Returns the concatenated grid, the segment count and the shots used.
fn continue_to_floor(
    sh: &Shooter,
    mut top: Trajectory<2>,
    mut bottom: Trajectory<2>,
    max_segments: usize,
) -> Result<(Vec<Sample<2>>, usize, usize), SolveError> {
    let c = sh.c;
    let h_top = c.h_top();
    let agree = AGREE_REL * h_top;
    let mut grid: Vec<Sample<2>> = Vec::new();
    let mut shots = 0usize;
    let mut segments = 1usize;

    loop {
        let (idx, extra) = agreement_point(&top, &bottom, agree, AGREE_REL);
        if idx == 0 && extra.is_none() {
            let reached = top.t_end().min(bottom.t_end());
            return Err(SolveError::Underflow { reached, y_min: sh.y_end });
        }
        let skip = usize::from(!grid.is_empty());
        grid.extend_from_slice(&top.samples[skip..=idx]);
        if let Some((t, state)) = extra {
            grid.push(Sample {
                t,
                state,
                deriv: rhs_raw(c, t, state[0], state[1]),
            });
        }
        if segments >= max_segments {
            return Err(SolveError::Underflow {
                reached: grid.last().unwrap().t,
                y_min: sh.y_end,
            });
        }
        let anchor = *grid.last().unwrap();
        let (y0, phi0, h0) = (anchor.t, anchor.state[0], anchor.state[1]);
        let cap = 1.0 / instability_rate(c, y0, phi0, h0);
        let shot = |h: f64| sh.from_point_capped(y0, phi0, h, cap);
        let h_max = h_top - 2.0 * sh.h_tol;
        let h_min = 2.0 * sh.h_tol;

        // Widen until the two ends exit on opposite sides.
        let mut w = agree;
        let (mut a, mut b) = loop {
            let ha = (h0 - w).max(h_min);
            let hb = (h0 + w).min(h_max);
            let ra = shot(ha)?;
            let rb = shot(hb)?;
            shots += 2;
            if ra.0.side() != rb.0.side() || ra.0 == ExitKind::ReachedYMin || rb.0 == ExitKind::ReachedYMin {
                break ((ha, ra), (hb, rb));
            }
            if ha <= h_min && hb >= h_max {
                return Err(SolveError::Underflow { reached: y0, y_min: sh.y_end });
            }
            w *= 4.0;
        };

        let mut done: Option<Trajectory<2>> = None;
        for (_, (k, t)) in [&a, &b] {
            if *k == ExitKind::ReachedYMin {
                done = Some(t.clone());
            }
        }
        while done.is_none() {
            let mid = 0.5 * (a.0 + b.0);
            if mid <= a.0 || mid >= b.0 {
                break;
            }
            let r = shot(mid)?;
            shots += 1;
            if r.0 == ExitKind::ReachedYMin {
                done = Some(r.1);
                break;
            }
            if r.0.side() == a.1 .0.side() {
                a = (mid, r);
            } else {
                b = (mid, r);
            }
        }
        segments += 1;
        if let Some(t) = done {
            grid.extend_from_slice(&t.samples[1..]);
            return Ok((grid, segments, shots));
        }
        let ((_, (ka, ta)), (_, (_, tb))) = (a, b);
        if ka.side() == Side::Top {
            top = ta;
            bottom = tb;
        } else {
            top = tb;
            bottom = ta;
        }
    }
}
