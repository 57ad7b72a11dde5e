//! Piecewise cubic Hermite interpolation over increasing abscissae.

/// Cubic Hermite interpolant with caller-supplied node slopes.
///
/// [`Hermite::monotone`] limits the slopes (Fritsch–Carlson) so that monotone
/// data yield a monotone interpolant.
#[derive(Debug, Clone, PartialEq)]
pub struct Hermite {
    x: Vec<f64>,
    y: Vec<f64>,
    d: Vec<f64>,
}

impl Hermite {
    /// `x` must be strictly increasing and all slices the same length (≥ 2).
    pub fn new(x: Vec<f64>, y: Vec<f64>, d: Vec<f64>) -> Self {
        assert!(x.len() >= 2 && x.len() == y.len() && x.len() == d.len());
        debug_assert!(x.windows(2).all(|w| w[0] < w[1]));
        Self { x, y, d }
    }

    pub fn monotone(x: Vec<f64>, y: Vec<f64>, mut d: Vec<f64>) -> Self {
        let n = x.len();
        for i in 0..n - 1 {
            let delta = (y[i + 1] - y[i]) / (x[i + 1] - x[i]);
            if delta == 0.0 {
                d[i] = 0.0;
                d[i + 1] = 0.0;
                continue;
            }
            // Slopes of the wrong sign flatten the curve.
            if d[i] * delta < 0.0 {
                d[i] = 0.0;
            }
            if d[i + 1] * delta < 0.0 {
                d[i + 1] = 0.0;
            }
            let a = d[i] / delta;
            let b = d[i + 1] / delta;
            let s = a * a + b * b;
            if s > 9.0 {
                let tau = 3.0 / s.sqrt();
                d[i] = tau * a * delta;
                d[i + 1] = tau * b * delta;
            }
        }
        Self::new(x, y, d)
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.x[0], *self.x.last().unwrap())
    }

    pub fn nodes(&self) -> &[f64] {
        &self.x
    }

    pub fn values(&self) -> &[f64] {
        &self.y
    }

    fn segment(&self, t: f64) -> usize {
        let i = self.x.partition_point(|&v| v <= t);
        i.clamp(1, self.x.len() - 1) - 1
    }

    /// Value at `t`; `None` outside the node range.
    pub fn eval(&self, t: f64) -> Option<f64> {
        let (lo, hi) = self.domain();
        if !(t >= lo && t <= hi) {
            return None;
        }
        let i = self.segment(t);
        let h = self.x[i + 1] - self.x[i];
        let s = (t - self.x[i]) / h;
        let h00 = (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s);
        let h10 = s * (1.0 - s) * (1.0 - s);
        let h01 = s * s * (3.0 - 2.0 * s);
        let h11 = s * s * (s - 1.0);
        Some(h00 * self.y[i] + h10 * h * self.d[i] + h01 * self.y[i + 1] + h11 * h * self.d[i + 1])
    }

    /// First derivative of the interpolant at `t`.
    pub fn derivative(&self, t: f64) -> Option<f64> {
        let (lo, hi) = self.domain();
        if !(t >= lo && t <= hi) {
            return None;
        }
        let i = self.segment(t);
        let h = self.x[i + 1] - self.x[i];
        let s = (t - self.x[i]) / h;
        let d00 = 6.0 * s * (s - 1.0) / h;
        let d10 = (1.0 - s) * (1.0 - 3.0 * s);
        let d01 = -d00;
        let d11 = s * (3.0 * s - 2.0);
        Some(d00 * self.y[i] + d10 * self.d[i] + d01 * self.y[i + 1] + d11 * self.d[i + 1])
    }

    /// Index `i` with `x[i] <= t <= x[i+1]`, for callers bracketing a root.
    pub fn locate(&self, t: f64) -> Option<usize> {
        let (lo, hi) = self.domain();
        (t >= lo && t <= hi).then(|| self.segment(t))
    }
}

/// Finite-difference weights at `z` for derivatives `0..=m` on arbitrary
/// nodes (Fornberg 1988). Returns `w[k][j]`: weight of node `j` for the
/// `k`-th derivative.
pub fn fornberg_weights(z: f64, x: &[f64], m: usize) -> Vec<Vec<f64>> {
    let n = x.len();
    let mut c = vec![vec![0.0; n]; m + 1];
    let mut c1 = 1.0;
    let mut c4 = x[0] - z;
    c[0][0] = 1.0;
    for i in 1..n {
        let mn = i.min(m);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = x[i] - z;
        for j in 0..i {
            let c3 = x[i] - x[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[k][i] = c1 * (k as f64 * c[k - 1][i - 1] - c5 * c[k][i - 1]) / c2;
                }
                c[0][i] = -c1 * c5 * c[0][i - 1] / c2;
            }
            for k in (1..=mn).rev() {
                c[k][j] = (c4 * c[k][j] - k as f64 * c[k - 1][j]) / c3;
            }
            c[0][j] = c4 * c[0][j] / c3;
        }
        c1 = c2;
    }
    c
}
