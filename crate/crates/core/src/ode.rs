//! Adaptive Dormand–Prince 5(4) integration toward decreasing `t`, with a stop
//! predicate localized on the continuous extension.
//!
//! States are fixed-size arrays; the systems solved here have two or four
//! components, so everything stays on the stack.

use crate::error::SolveError;

// Butcher tableau (Dormand & Prince 1980).
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

// Difference between the 5th and embedded 4th order weights.
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

// Shampine's continuous extension.
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;
const EVENT_REL_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdeControls {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_step: f64,
    /// Cap on the step as a fraction of |t|; keeps the dense grid even in ln t.
    pub max_rel_step: f64,
    pub min_step: f64,
    pub max_steps: usize,
}

impl Default for OdeControls {
    fn default() -> Self {
        Self {
            rel_tol: 1e-10,
            abs_tol: 1e-12,
            max_step: f64::INFINITY,
            max_rel_step: f64::INFINITY,
            min_step: 1e-300,
            max_steps: 1_000_000,
        }
    }
}

impl OdeControls {
    /// Same controls with both tolerances multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            rel_tol: self.rel_tol * factor,
            abs_tol: self.abs_tol * factor,
            ..*self
        }
    }

    pub fn validate(&self) -> Result<(), SolveError> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && !v.is_nan() {
                Ok(())
            } else {
                Err(SolveError::Controls(format!("{name} must be positive (got {v})")))
            }
        };
        positive("rel_tol", self.rel_tol)?;
        positive("abs_tol", self.abs_tol)?;
        positive("max_step", self.max_step)?;
        positive("max_rel_step", self.max_rel_step)?;
        positive("min_step", self.min_step)?;
        if self.min_step >= self.max_step {
            return Err(SolveError::Controls(format!(
                "min_step {} must be below max_step {}",
                self.min_step, self.max_step
            )));
        }
        if self.max_steps == 0 {
            return Err(SolveError::Controls("max_steps must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Termination {
    PredicateHit,
    ReachedEndpoint,
    StepBudgetExhausted,
    StepUnderflow,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample<const N: usize> {
    pub t: f64,
    pub state: [f64; N],
    pub deriv: [f64; N],
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<const N: usize> {
    /// Strictly decreasing in `t`.
    pub samples: Vec<Sample<N>>,
    pub termination: Termination,
    pub accepted: usize,
    pub rejected: usize,
}

impl<const N: usize> Trajectory<N> {
    pub fn first(&self) -> &Sample<N> {
        &self.samples[0]
    }

    pub fn last(&self) -> &Sample<N> {
        self.samples.last().expect("trajectory has at least one sample")
    }

    /// Smallest `t` reached.
    pub fn t_end(&self) -> f64 {
        self.last().t
    }

    /// Cubic Hermite interpolation from the stored states and derivatives.
    /// Returns `None` outside the covered range.
    pub fn interpolate(&self, t: f64) -> Option<[f64; N]> {
        let s = &self.samples;
        if !(t <= s[0].t && t >= self.t_end()) {
            return None;
        }
        if s.len() == 1 {
            return Some(s[0].state);
        }
        // First index whose t is below the query.
        let mut i = s.partition_point(|p| p.t > t);
        if i == 0 {
            return Some(s[0].state);
        }
        if i == s.len() {
            i -= 1;
        }
        Some(hermite(&s[i - 1], &s[i], t))
    }
}

fn hermite<const N: usize>(a: &Sample<N>, b: &Sample<N>, t: f64) -> [f64; N] {
    let h = b.t - a.t;
    let s = (t - a.t) / h;
    let h00 = (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s);
    let h10 = s * (1.0 - s) * (1.0 - s);
    let h01 = s * s * (3.0 - 2.0 * s);
    let h11 = s * s * (s - 1.0);
    let mut out = [0.0; N];
    for k in 0..N {
        out[k] = h00 * a.state[k] + h10 * h * a.deriv[k] + h01 * b.state[k] + h11 * h * b.deriv[k];
    }
    out
}

fn axpy<const N: usize>(y: &[f64; N], h: f64, terms: &[(f64, &[f64; N])]) -> [f64; N] {
    let mut out = *y;
    for k in 0..N {
        let mut acc = 0.0;
        for (c, v) in terms {
            acc += c * v[k];
        }
        out[k] += h * acc;
    }
    out
}

fn all_finite<const N: usize>(v: &[f64; N]) -> bool {
    v.iter().all(|x| x.is_finite())
}

/// One accepted step's continuous extension.
struct Dense<const N: usize> {
    t0: f64,
    h: f64,
    r: [[f64; N]; 5],
}

impl<const N: usize> Dense<N> {
    fn at(&self, t: f64) -> [f64; N] {
        let th = (t - self.t0) / self.h;
        let th1 = 1.0 - th;
        let mut out = [0.0; N];
        for k in 0..N {
            let r = &self.r;
            out[k] = r[0][k] + th * (r[1][k] + th1 * (r[2][k] + th * (r[3][k] + th1 * r[4][k])));
        }
        out
    }
}

/// Integrates `y' = rhs(t, y)` from `t_start` down to `t_end`, stopping early
/// the first time `stop(t, y)` becomes true.
///
/// Integrator failures (step budget, underflow) are reported through
/// [`Trajectory::termination`] so callers can classify them; only invalid
/// inputs produce an error.
pub fn integrate_decreasing<const N: usize, F, S>(
    mut rhs: F,
    t_start: f64,
    state0: [f64; N],
    t_end: f64,
    mut stop: S,
    controls: &OdeControls,
) -> Result<Trajectory<N>, SolveError>
where
    F: FnMut(f64, &[f64; N]) -> [f64; N],
    S: FnMut(f64, &[f64; N]) -> bool,
{
    controls.validate()?;
    if !(t_end < t_start) {
        return Err(SolveError::Domain(format!(
            "t_end {t_end} must be below t_start {t_start}"
        )));
    }
    if !all_finite(&state0) {
        return Err(SolveError::Domain("initial state is not finite".into()));
    }
    if stop(t_start, &state0) {
        return Err(SolveError::Domain(
            "stop predicate already holds at the initial point".into(),
        ));
    }
    let k1 = rhs(t_start, &state0);
    if !all_finite(&k1) {
        return Err(SolveError::Domain(
            "right-hand side is not finite at the initial point".into(),
        ));
    }

    let OdeControls {
        rel_tol,
        abs_tol,
        max_step,
        max_rel_step,
        min_step,
        max_steps,
    } = *controls;

    let mut samples = vec![Sample {
        t: t_start,
        state: state0,
        deriv: k1,
    }];
    let mut t = t_start;
    let mut y = state0;
    let mut k1 = k1;
    let mut h = initial_step(&mut rhs, t, &y, &k1, t_start - t_end, controls);
    let mut accepted = 0usize;
    let mut rejected = 0usize;
    let mut last_rejected = false;

    let termination = loop {
        if accepted + rejected >= max_steps {
            break Termination::StepBudgetExhausted;
        }
        h = h.min(max_step).min(max_rel_step * t.abs());
        let mut last = false;
        if h >= t - t_end {
            h = t - t_end;
            last = true;
        }
        if h < min_step || t - h == t {
            break Termination::StepUnderflow;
        }
        // Signed step toward smaller t.
        let hs = -h;

        let k2 = rhs(t + C2 * hs, &axpy(&y, hs, &[(A21, &k1)]));
        let k3 = rhs(t + C3 * hs, &axpy(&y, hs, &[(A31, &k1), (A32, &k2)]));
        let k4 = rhs(
            t + C4 * hs,
            &axpy(&y, hs, &[(A41, &k1), (A42, &k2), (A43, &k3)]),
        );
        let k5 = rhs(
            t + C5 * hs,
            &axpy(&y, hs, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]),
        );
        let k6 = rhs(
            t + hs,
            &axpy(
                &y,
                hs,
                &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)],
            ),
        );
        let y_new = axpy(
            &y,
            hs,
            &[(A71, &k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)],
        );
        let t_new = if last { t_end } else { t + hs };
        let k7 = rhs(t_new, &y_new);

        let stages_ok = [&k2, &k3, &k4, &k5, &k6, &k7].iter().all(|k| all_finite(k))
            && all_finite(&y_new);
        let err = if stages_ok {
            let mut sum = 0.0;
            for i in 0..N {
                let e = hs
                    * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
                let sc = abs_tol + rel_tol * y[i].abs().max(y_new[i].abs());
                sum += (e / sc) * (e / sc);
            }
            (sum / N as f64).sqrt()
        } else {
            f64::INFINITY
        };

        if err <= 1.0 {
            accepted += 1;
            let fac = if err == 0.0 {
                FAC_MAX
            } else {
                (SAFETY * err.powf(-0.2)).clamp(FAC_MIN, FAC_MAX)
            };
            // No growth directly after a rejection.
            let fac = if last_rejected { fac.min(1.0) } else { fac };
            last_rejected = false;

            if stop(t_new, &y_new) {
                let mut r = [[0.0; N]; 5];
                for i in 0..N {
                    let dy = y_new[i] - y[i];
                    let bspl = hs * k1[i] - dy;
                    r[0][i] = y[i];
                    r[1][i] = dy;
                    r[2][i] = bspl;
                    r[3][i] = dy - hs * k7[i] - bspl;
                    r[4][i] = hs
                        * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i]
                            + D7 * k7[i]);
                }
                let dense = Dense { t0: t, h: hs, r };
                let (t_hit, y_hit) = localize(&dense, t, t_new, &y_new, &mut stop);
                let d_hit = rhs(t_hit, &y_hit);
                if t_hit < t {
                    samples.push(Sample {
                        t: t_hit,
                        state: y_hit,
                        deriv: d_hit,
                    });
                }
                break Termination::PredicateHit;
            }

            samples.push(Sample {
                t: t_new,
                state: y_new,
                deriv: k7,
            });
            t = t_new;
            y = y_new;
            k1 = k7;
            if last {
                break Termination::ReachedEndpoint;
            }
            h *= fac;
        } else {
            rejected += 1;
            last_rejected = true;
            let fac = if err.is_finite() {
                (SAFETY * err.powf(-0.2)).clamp(FAC_MIN, 1.0)
            } else {
                FAC_MIN
            };
            h *= fac;
        }
    };

    Ok(Trajectory {
        samples,
        termination,
        accepted,
        rejected,
    })
}

/// Bisects the stop predicate on the continuous extension between the last
/// accepted point `t_hi` (predicate false) and `t_lo` (true). Returns the
/// point on the true side.
fn localize<const N: usize, S>(
    dense: &Dense<N>,
    t_hi: f64,
    t_lo: f64,
    y_lo: &[f64; N],
    stop: &mut S,
) -> (f64, [f64; N])
where
    S: FnMut(f64, &[f64; N]) -> bool,
{
    let mut hi = t_hi;
    let mut lo = t_lo;
    let mut y_true = *y_lo;
    while hi - lo > EVENT_REL_TOL * lo.abs().max(f64::MIN_POSITIVE) {
        let mid = 0.5 * (hi + lo);
        if mid <= lo || mid >= hi {
            break;
        }
        let y_mid = dense.at(mid);
        if stop(mid, &y_mid) {
            lo = mid;
            y_true = y_mid;
        } else {
            hi = mid;
        }
    }
    (lo, y_true)
}

/// Starting step size following Hairer, Nørsett & Wanner, section II.4.
fn initial_step<const N: usize, F>(
    rhs: &mut F,
    t: f64,
    y: &[f64; N],
    f0: &[f64; N],
    span: f64,
    c: &OdeControls,
) -> f64
where
    F: FnMut(f64, &[f64; N]) -> [f64; N],
{
    let scale = |i: usize| c.abs_tol + c.rel_tol * y[i].abs();
    let norm = |v: &[f64; N]| {
        let s: f64 = (0..N).map(|i| (v[i] / scale(i)).powi(2)).sum();
        (s / N as f64).sqrt()
    };
    let d0 = norm(y);
    let d1 = norm(f0);
    let mut h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    h0 = h0.min(span).min(c.max_step);
    let y1 = axpy(y, -h0, &[(1.0, f0)]);
    let f1 = rhs(t - h0, &y1);
    let dv: [f64; N] = std::array::from_fn(|i| f1[i] - f0[i]);
    let d2 = if all_finite(&f1) { norm(&dv) / h0 } else { f64::INFINITY };
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    (100.0 * h0).min(h1).min(span).min(c.max_step).max(c.min_step)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn never(_: f64, _: &[f64; 1]) -> bool {
        false
    }

    #[test]
    fn linear_solution_is_tracked() {
        let traj = integrate_decreasing(
            |t, y: &[f64; 1]| [y[0] / t],
            1.0,
            [1.0],
            0.25,
            never,
            &OdeControls::default(),
        )
        .unwrap();
        assert_eq!(traj.termination, Termination::ReachedEndpoint);
        assert_eq!(traj.t_end(), 0.25);
        assert!((traj.last().state[0] - 0.25).abs() < 1e-10);
    }

    #[test]
    fn flat_dynamics_reach_endpoint() {
        let traj = integrate_decreasing(
            |_, _: &[f64; 1]| [0.0],
            1.0,
            [1.5],
            -3.0,
            |_, y| y[0] > 2.0,
            &OdeControls::default(),
        )
        .unwrap();
        assert_eq!(traj.termination, Termination::ReachedEndpoint);
        assert!(traj.samples.iter().all(|s| s.state[0] == 1.5));
    }

    #[test]
    fn event_is_localized_on_inverse_square() {
        let traj = integrate_decreasing(
            |t, y: &[f64; 1]| [-2.0 * y[0] / t],
            1.0,
            [1.0],
            0.01,
            |_, y| y[0] >= 9.0,
            &OdeControls::default(),
        )
        .unwrap();
        assert_eq!(traj.termination, Termination::PredicateHit);
        assert!((traj.t_end() - 1.0 / 3.0).abs() < 1e-8, "{}", traj.t_end());
        assert!(traj.last().state[0] >= 9.0);
    }

    #[test]
    fn samples_strictly_decrease() {
        let traj = integrate_decreasing(
            |t, y: &[f64; 2]| [y[1], -y[0] * t],
            3.0,
            [1.0, 0.0],
            -3.0,
            |_, _| false,
            &OdeControls::default(),
        )
        .unwrap();
        assert!(traj.samples.windows(2).all(|w| w[1].t < w[0].t));
    }

    fn endpoint_error(controls: OdeControls) -> f64 {
        let traj = integrate_decreasing(
            |t, y: &[f64; 1]| [-2.0 * y[0] / t],
            1.0,
            [1.0],
            0.2,
            never,
            &controls,
        )
        .unwrap();
        (traj.last().state[0] - 25.0).abs()
    }

    #[test]
    fn fixed_step_order_is_at_least_four() {
        // Huge tolerances accept every step, so max_step fixes the mesh.
        let fixed = |h: f64| OdeControls {
            rel_tol: 1e6,
            abs_tol: 1e6,
            max_step: h,
            max_rel_step: f64::INFINITY,
            min_step: 1e-12,
            max_steps: 100_000,
        };
        let coarse = endpoint_error(fixed(0.02));
        let fine = endpoint_error(fixed(0.01));
        assert!(coarse / fine >= 16.0, "ratio {}", coarse / fine);
    }

    #[test]
    fn tightening_tolerance_reduces_error() {
        let base = OdeControls::default().scaled(1e3);
        let loose = endpoint_error(base);
        let tight = endpoint_error(base.scaled(0.1));
        assert!(loose / tight >= 4.0, "{loose} {tight}");
    }

    #[test]
    fn identical_inputs_are_bit_identical() {
        let run = || {
            integrate_decreasing(
                |t, y: &[f64; 2]| [y[1] * t.sin(), -y[0]],
                2.0,
                [0.3, 0.7],
                -1.0,
                |_, y| y[0] > 5.0,
                &OdeControls::default(),
            )
            .unwrap()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn budget_exhaustion_is_a_termination_state() {
        let controls = OdeControls {
            max_steps: 3,
            ..OdeControls::default()
        };
        let traj = integrate_decreasing(
            |t, y: &[f64; 1]| [y[0] * t.cos()],
            10.0,
            [1.0],
            0.0,
            never,
            &controls,
        )
        .unwrap();
        assert_eq!(traj.termination, Termination::StepBudgetExhausted);
    }

    #[test]
    fn singular_rhs_underflows_instead_of_panicking() {
        // Blows up at t = 0.5 going down.
        let traj = integrate_decreasing(
            |t, _: &[f64; 1]| [1.0 / (t - 0.5)],
            1.0,
            [0.0],
            0.0,
            never,
            &OdeControls {
                min_step: 1e-14,
                ..OdeControls::default()
            },
        )
        .unwrap();
        assert!(matches!(
            traj.termination,
            Termination::StepUnderflow | Termination::StepBudgetExhausted
        ));
        assert!(traj.t_end() > 0.5);
    }

    #[test]
    fn hermite_interpolation_matches_solution() {
        let traj = integrate_decreasing(
            |t, y: &[f64; 1]| [-2.0 * y[0] / t],
            1.0,
            [1.0],
            0.2,
            never,
            &OdeControls::default(),
        )
        .unwrap();
        for &t in &[0.93, 0.5, 0.37, 0.21] {
            let v = traj.interpolate(t).unwrap()[0];
            assert!((v - t.powi(-2)).abs() < 1e-6 * t.powi(-2), "{t} {v}");
        }
        assert!(traj.interpolate(1.1).is_none());
        assert!(traj.interpolate(0.1).is_none());
    }

    #[test]
    fn invalid_controls_are_rejected() {
        let c = OdeControls {
            min_step: 1.0,
            max_step: 0.5,
            ..OdeControls::default()
        };
        assert!(c.validate().is_err());
        assert!(integrate_decreasing(|_, _: &[f64; 1]| [0.0], 0.0, [0.0], 1.0, never, &OdeControls::default()).is_err());
    }
}
