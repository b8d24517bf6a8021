//! Small numerical utilities: summary statistics, least squares, quadrature,
//! one-dimensional optimisation and the normal distribution.

use serde::{Deserialize, Serialize};

/// A Monte Carlo mean with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanSe {
    pub mean: f64,
    pub se: f64,
}

impl MeanSe {
    pub fn exact(value: f64) -> Self {
        Self { mean: value, se: 0.0 }
    }
}

/// Sample mean and standard error of the mean.
pub fn mean_se(xs: &[f64]) -> MeanSe {
    let n = xs.len();
    if n == 0 {
        return MeanSe { mean: f64::NAN, se: f64::NAN };
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return MeanSe { mean, se: f64::INFINITY };
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    MeanSe { mean, se: (var / n as f64).sqrt() }
}

/// Sample covariance of paired observations.
pub fn covariance(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len();
    assert_eq!(n, ys.len());
    if n < 2 {
        return 0.0;
    }
    let mx = xs.iter().sum::<f64>() / n as f64;
    let my = ys.iter().sum::<f64>() / n as f64;
    xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>() / (n - 1) as f64
}

/// Result of a weighted linear least-squares fit `y ~ X beta`.
#[derive(Clone, Debug)]
pub struct LinearFit {
    pub coef: Vec<f64>,
    /// Standard errors from the inverse normal matrix. When weights are
    /// inverse variances these are absolute.
    pub se: Vec<f64>,
    pub r_squared: f64,
}

/// Weighted least squares with design rows `x[i]`, responses `y[i]` and
/// weights `w[i]`.
pub fn weighted_least_squares(x: &[Vec<f64>], y: &[f64], w: &[f64]) -> Option<LinearFit> {
    let n = y.len();
    let p = x.first()?.len();
    if n < p || x.len() != n || w.len() != n {
        return None;
    }
    let mut a = vec![vec![0.0; p]; p];
    let mut b = vec![0.0; p];
    for i in 0..n {
        for r in 0..p {
            b[r] += w[i] * x[i][r] * y[i];
            for c in 0..p {
                a[r][c] += w[i] * x[i][r] * x[i][c];
            }
        }
    }
    let inv = invert(&a)?;
    let coef: Vec<f64> = (0..p).map(|r| (0..p).map(|c| inv[r][c] * b[c]).sum()).collect();
    let se = (0..p).map(|r| inv[r][r].max(0.0).sqrt()).collect();
    let wsum: f64 = w.iter().sum();
    let ybar = y.iter().zip(w).map(|(y, w)| y * w).sum::<f64>() / wsum;
    let mut ss_res = 0.0;
    let mut ss_tot = 0.0;
    for i in 0..n {
        let pred: f64 = (0..p).map(|r| coef[r] * x[i][r]).sum();
        ss_res += w[i] * (y[i] - pred).powi(2);
        ss_tot += w[i] * (y[i] - ybar).powi(2);
    }
    let r_squared = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    Some(LinearFit { coef, se, r_squared })
}

/// Gauss-Jordan inverse of a small dense matrix.
pub fn invert(a: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = row.clone();
            r.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            r
        })
        .collect();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))?;
        if m[piv][col].abs() < 1e-300 {
            return None;
        }
        m.swap(col, piv);
        let d = m[col][col];
        for v in m[col].iter_mut() {
            *v /= d;
        }
        let pivot = m[col].clone();
        for (r, row) in m.iter_mut().enumerate() {
            let f = row[col];
            if r != col && f != 0.0 {
                for (v, p) in row.iter_mut().zip(&pivot) {
                    *v -= f * p;
                }
            }
        }
    }
    Some(m.into_iter().map(|r| r[n..].to_vec()).collect())
}

/// Adaptive Simpson quadrature of `f` over `[a, b]` to absolute tolerance `tol`.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_rec(&f, a, b, fa, fm, fb, whole, tol, 50)
}

#[allow(clippy::too_many_arguments)]
fn simpson_rec<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

/// Golden-section minimisation of a unimodal function on `[a, b]`.
/// Returns `(argmin, min)`.
pub fn golden_section_min<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a).abs() > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    let x = 0.5 * (a + b);
    (x, f(x))
}

/// Standard normal cumulative distribution function.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-x / std::f64::consts::SQRT_2)
}

/// Standard normal density.
pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Inverse of [`normal_cdf`].
pub fn normal_quantile(p: f64) -> f64 {
    std::f64::consts::SQRT_2 * statrs::function::erf::erf_inv(2.0 * p - 1.0)
}

/// `(e^{2KT} - 1) / K`, continued by its series at `K T -> 0` where it tends to `2T`.
pub fn chi(k: f64, t: f64) -> f64 {
    let x = k * t;
    if x.abs() < 1e-6 {
        2.0 * t * (1.0 + x + 2.0 * x * x / 3.0 + x * x * x / 3.0)
    } else {
        (2.0 * x).exp_m1() / k
    }
}

/// Radical inverse of `i` in base `b`.
pub(crate) fn radical_inverse(mut i: u64, b: u64) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    let inv = 1.0 / b as f64;
    while i > 0 {
        f *= inv;
        r += f * (i % b) as f64;
        i /= b;
    }
    r
}

/// The `i`-th point of the Halton sequence in `[0,1)^dim` (with a one-point
/// offset so the origin is never produced).
pub fn halton(i: u64, dim: usize) -> [f64; 16] {
    const PRIMES: [u64; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];
    let mut out = [0.0; 16];
    for (k, o) in out.iter_mut().enumerate().take(dim) {
        *o = radical_inverse(i + 1, PRIMES[k]);
    }
    out
}
