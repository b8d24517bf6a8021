//! Wasserstein distances between weighted ensembles, on the manifold and on
//! path space under the uniform distance.

mod simplex;
mod sinkhorn;

use crate::diffusion::Ensemble;
use crate::error::{invalid, Error, Result};
use crate::geometry::ModelManifold;
use crate::linalg::Point;
use crate::numerics::mean_se;
use crate::par_map;
use crate::rng::{derive_seed, tags, NoiseStream, NORMALS_PER_BLOCK};
use serde::{Deserialize, Serialize};

/// Default cap on `n * m` for the exact solver.
pub const MAX_EXACT_ENTRIES: usize = 4_000_000;
/// Largest side handled by the exact solver under [`Method::Auto`].
pub const EXACT_ATOM_LIMIT: usize = 1024;
/// Atoms per side in the exact-versus-entropic agreement check.
pub const SPOT_CHECK_ATOMS: usize = 512;
pub const BOOTSTRAP_RESAMPLES: usize = 200;
const WEIGHT_TOL: f64 = 1e-9;

/// Ground metric of a cost matrix.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ground {
    /// Riemannian distance between points (or path endpoints).
    Rho,
    /// Supremum over the shared time grid of the pointwise distance.
    RhoInf,
}

/// Dense `rows x cols` matrix of ground distances.
#[derive(Clone, Debug, PartialEq)]
pub struct CostMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
    ground: Ground,
}

impl CostMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>, ground: Ground) -> Result<Self> {
        if data.len() != rows * cols {
            return invalid(format!("cost data has {} entries, expected {}", data.len(), rows * cols));
        }
        if data.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return invalid("costs must be finite and nonnegative");
        }
        Ok(Self { rows, cols, data, ground })
    }

    /// Fills entry `(i, j)` with `f(i, j)`, rows in parallel.
    pub fn from_fn<F>(rows: usize, cols: usize, ground: Ground, f: F) -> Self
    where
        F: Fn(usize, usize) -> f64 + Sync + Send,
    {
        let idx: Vec<usize> = (0..rows).collect();
        let parts = par_map(&idx, |&i| (0..cols).map(|j| f(i, j)).collect::<Vec<_>>());
        Self { rows, cols, data: parts.concat(), ground }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn ground(&self) -> Ground {
        self.ground
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn max(&self) -> f64 {
        self.data.iter().cloned().fold(0.0, f64::max)
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.rows == self.cols
            && (0..self.rows).all(|i| (0..i).all(|j| (self.get(i, j) - self.get(j, i)).abs() <= tol))
    }

    /// Sub-matrix on the given rows and columns.
    pub fn select(&self, rows: &[usize], cols: &[usize]) -> Self {
        let mut data = Vec::with_capacity(rows.len() * cols.len());
        for &i in rows {
            let row = &self.data[i * self.cols..(i + 1) * self.cols];
            data.extend(cols.iter().map(|&j| row[j]));
        }
        Self { rows: rows.len(), cols: cols.len(), data, ground: self.ground }
    }
}

/// `rho(x_i, y_j)` for two point clouds.
pub fn point_cost(m: &ModelManifold, xs: &[Point], ys: &[Point]) -> CostMatrix {
    CostMatrix::from_fn(xs.len(), ys.len(), Ground::Rho, |i, j| {
        m.distance_from_proxy(m.distance_proxy(&xs[i], &ys[j]))
    })
}

/// Distances between path endpoints.
pub fn endpoint_cost(m: &ModelManifold, a: &Ensemble, b: &Ensemble) -> Result<CostMatrix> {
    for e in [a, b] {
        if e.steps.last() != Some(&e.cfg.n_steps) {
            return invalid("ensemble does not record the terminal time");
        }
    }
    if (a.cfg.t - b.cfg.t).abs() > 1e-12 * a.cfg.t.abs().max(1.0) {
        return invalid("ensembles have different horizons");
    }
    Ok(point_cost(m, &a.endpoints(), &b.endpoints()))
}

/// `rho_inf(gamma_i, eta_j)`: maximum over the shared recorded times.
pub fn uniform_cost(m: &ModelManifold, a: &Ensemble, b: &Ensemble) -> Result<CostMatrix> {
    let times_a = a.times();
    if a.steps.len() != b.steps.len()
        || times_a.iter().zip(b.times()).any(|(s, t)| (s - t).abs() > 1e-12 * s.abs().max(1.0))
    {
        return invalid("ensembles do not share a time grid");
    }
    let slots = a.steps.len();
    let pa: Vec<Vec<Point>> = a.paths.iter().map(|p| (0..slots).map(|k| p.point(k)).collect()).collect();
    let pb: Vec<Vec<Point>> = b.paths.iter().map(|p| (0..slots).map(|k| p.point(k)).collect()).collect();
    Ok(CostMatrix::from_fn(a.len(), b.len(), Ground::RhoInf, |i, j| {
        let q = (0..slots).map(|k| m.distance_proxy(&pa[i][k], &pb[j][k])).fold(0.0, f64::max);
        m.distance_from_proxy(q)
    }))
}

pub fn ground_cost(m: &ModelManifold, a: &Ensemble, b: &Ensemble, ground: Ground) -> Result<CostMatrix> {
    match ground {
        Ground::Rho => endpoint_cost(m, a, b),
        Ground::RhoInf => uniform_cost(m, a, b),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Exact,
    Entropic,
    /// Exact up to [`EXACT_ATOM_LIMIT`] atoms per side, entropic with a
    /// spot check beyond.
    Auto,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOptions {
    pub method: Method,
    pub max_exact_entries: usize,
    /// Final entropic regularisation in units of `C^p`. `None` picks
    /// `1e-5 * median(C^p)`.
    pub epsilon: Option<f64>,
    /// L1 marginal violation at which Sinkhorn stops.
    pub tol: f64,
    /// Sinkhorn iterations per epsilon stage.
    pub max_iter: usize,
    /// Stop epsilon scaling once the certified relative gap is below this.
    pub gap_target: Option<f64>,
    pub bootstrap: usize,
    /// Bootstrap when both sides have at most this many atoms, otherwise
    /// use the first-order dual-potential error.
    pub bootstrap_atoms: usize,
    pub seed: u64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            method: Method::Auto,
            max_exact_entries: MAX_EXACT_ENTRIES,
            epsilon: None,
            tol: 1e-6,
            max_iter: 20_000,
            gap_target: Some(0.01),
            bootstrap: BOOTSTRAP_RESAMPLES,
            bootstrap_atoms: 256,
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PlanEntry {
    pub i: usize,
    pub j: usize,
    pub mass: f64,
}

/// Exact and entropic values on a random sub-problem.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SpotCheck {
    pub atoms: usize,
    pub exact: f64,
    pub entropic: f64,
    pub relative_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TransportResult {
    /// `W_p = cost^(1/p)`.
    pub value: f64,
    pub p: f64,
    /// `sum plan * C^p`.
    pub cost: f64,
    #[serde(skip)]
    pub plan: Vec<PlanEntry>,
    pub method: Method,
    /// Certified lower bound on the optimal `sum plan * C^p`.
    pub lower_bound: f64,
    /// `(cost - lower_bound) / cost`, or the absolute gap when `cost` is 0.
    pub gap: f64,
    /// L1 marginal violation of the plan.
    pub violation: f64,
    pub epsilon: Option<f64>,
    pub iterations: usize,
    /// Standard error of `value` under resampling of the atoms.
    pub se: Option<f64>,
    /// Standard error of `cost`.
    pub se_cost: Option<f64>,
    pub spot_check: Option<SpotCheck>,
    #[serde(skip)]
    duals: (Vec<f64>, Vec<f64>),
}

impl TransportResult {
    /// Dual potentials `(u, v)` with `u_i + v_j <= C_ij^p` on the supports.
    pub fn duals(&self) -> (&[f64], &[f64]) {
        (&self.duals.0, &self.duals.1)
    }

    /// Row and column sums of the plan.
    pub fn marginals(&self, rows: usize, cols: usize) -> (Vec<f64>, Vec<f64>) {
        let mut r = vec![0.0; rows];
        let mut c = vec![0.0; cols];
        for e in &self.plan {
            r[e.i] += e.mass;
            c[e.j] += e.mass;
        }
        (r, c)
    }
}

fn check_weights(w: &[f64], name: &str) -> Result<()> {
    if w.is_empty() {
        return Err(Error::Infeasible(format!("{name} has no atoms")));
    }
    if w.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
        return Err(Error::Infeasible(format!("{name} has negative or non-finite weights")));
    }
    let s: f64 = w.iter().sum();
    if (s - 1.0).abs() > WEIGHT_TOL {
        return Err(Error::Infeasible(format!("{name} sums to {s}, not 1")));
    }
    Ok(())
}

/// Positive-weight subproblem with costs `C^p / scale` in `[0, 1]`.
struct Reduced {
    ia: Vec<usize>,
    ib: Vec<usize>,
    a: Vec<f64>,
    b: Vec<f64>,
    cost: Vec<f64>,
    scale: f64,
}

fn reduce(a: &[f64], b: &[f64], c: &CostMatrix, p: f64) -> Result<Reduced> {
    if c.rows != a.len() || c.cols != b.len() {
        return invalid("weights do not match the cost matrix shape");
    }
    if !(p >= 1.0 && p.is_finite()) {
        return invalid("exponent p must be at least 1");
    }
    check_weights(a, "first marginal")?;
    check_weights(b, "second marginal")?;
    let ia: Vec<usize> = (0..a.len()).filter(|&i| a[i] > 0.0).collect();
    let ib: Vec<usize> = (0..b.len()).filter(|&j| b[j] > 0.0).collect();
    let pow = |x: f64| if p == 1.0 { x } else if p == 2.0 { x * x } else { x.powf(p) };
    let mut cost = Vec::with_capacity(ia.len() * ib.len());
    for &i in &ia {
        let row = &c.data[i * c.cols..(i + 1) * c.cols];
        cost.extend(ib.iter().map(|&j| pow(row[j])));
    }
    let mx = cost.iter().cloned().fold(0.0, f64::max);
    let scale = if mx > 0.0 { mx } else { 1.0 };
    cost.iter_mut().for_each(|x| *x /= scale);
    Ok(Reduced {
        a: ia.iter().map(|&i| a[i]).collect(),
        b: ib.iter().map(|&j| b[j]).collect(),
        ia,
        ib,
        cost,
        scale,
    })
}

/// Feasible dual `(u, v, value)` from column potentials by a double
/// c-transform.
pub(crate) fn c_transform_dual(a: &[f64], b: &[f64], cost: &[f64], v0: &[f64]) -> (Vec<f64>, Vec<f64>, f64) {
    let (n, m) = (a.len(), b.len());
    let u: Vec<f64> = (0..n)
        .map(|i| {
            let row = &cost[i * m..(i + 1) * m];
            (0..m).map(|j| row[j] - v0[j]).fold(f64::INFINITY, f64::min)
        })
        .collect();
    let mut v = vec![f64::INFINITY; m];
    for i in 0..n {
        let row = &cost[i * m..(i + 1) * m];
        for j in 0..m {
            v[j] = v[j].min(row[j] - u[i]);
        }
    }
    let value = a.iter().zip(&u).map(|(x, y)| x * y).sum::<f64>() + b.iter().zip(&v).map(|(x, y)| x * y).sum::<f64>();
    (u, v, value)
}

fn median(xs: &[f64]) -> f64 {
    let stride = (xs.len() / 1_000_000).max(1);
    let mut s: Vec<f64> = xs.iter().step_by(stride).cloned().collect();
    let k = s.len() / 2;
    let (_, med, _) = s.select_nth_unstable_by(k, f64::total_cmp);
    *med
}

#[allow(clippy::too_many_arguments)]
fn finish(
    r: &Reduced,
    a_len: usize,
    b_len: usize,
    p: f64,
    flows: Vec<(usize, usize, f64)>,
    v: &[f64],
    method: Method,
    epsilon: Option<f64>,
    iterations: usize,
) -> TransportResult {
    let m = r.b.len();
    let cost_n: f64 = flows.iter().map(|&(i, j, x)| x * r.cost[i * m + j]).sum();
    let (u, v, dual_n) = c_transform_dual(&r.a, &r.b, &r.cost, v);
    let mut row = vec![0.0; r.a.len()];
    let mut col = vec![0.0; m];
    for &(i, j, x) in &flows {
        row[i] += x;
        col[j] += x;
    }
    let violation = row.iter().zip(&r.a).map(|(x, y)| (x - y).abs()).sum::<f64>()
        + col.iter().zip(&r.b).map(|(x, y)| (x - y).abs()).sum::<f64>();
    let cost = cost_n * r.scale;
    let lower_bound = dual_n.min(cost_n) * r.scale;
    let gap = if cost > 0.0 { (cost - lower_bound) / cost } else { (cost - lower_bound).abs() };
    let mut ua = vec![0.0; a_len];
    let mut vb = vec![0.0; b_len];
    for (k, &i) in r.ia.iter().enumerate() {
        ua[i] = u[k] * r.scale;
    }
    for (k, &j) in r.ib.iter().enumerate() {
        vb[j] = v[k] * r.scale;
    }
    let plan = flows.into_iter().map(|(i, j, mass)| PlanEntry { i: r.ia[i], j: r.ib[j], mass }).collect();
    TransportResult {
        value: cost.max(0.0).powf(1.0 / p),
        p,
        cost,
        plan,
        method,
        lower_bound,
        gap,
        violation,
        epsilon,
        iterations,
        se: None,
        se_cost: None,
        spot_check: None,
        duals: (ua, vb),
    }
}

/// Exact optimal transport by network simplex with the default size cap.
pub fn w_exact(a: &[f64], b: &[f64], c: &CostMatrix, p: f64) -> Result<TransportResult> {
    w_exact_with_limit(a, b, c, p, MAX_EXACT_ENTRIES)
}

pub fn w_exact_with_limit(a: &[f64], b: &[f64], c: &CostMatrix, p: f64, max_entries: usize) -> Result<TransportResult> {
    if c.rows.saturating_mul(c.cols) > max_entries {
        return invalid(format!(
            "exact solver limited to {max_entries} cost entries, got {}x{}",
            c.rows, c.cols
        ));
    }
    let r = reduce(a, b, c, p)?;
    let out = simplex::solve(&r.a, &r.b, &r.cost, usize::MAX)?;
    Ok(finish(&r, a.len(), b.len(), p, out.flows, &out.v, Method::Exact, None, out.iterations))
}

/// Entropic transport run down to regularisation `epsilon` (units of `C^p`)
/// by halving from `0.1 * median(C^p)`, stopping when the L1 marginal
/// violation is at most `tol`.
pub fn w_entropic(a: &[f64], b: &[f64], c: &CostMatrix, p: f64, epsilon: f64, tol: f64) -> Result<TransportResult> {
    let opts = SolverOptions { epsilon: Some(epsilon), tol, gap_target: None, ..SolverOptions::default() };
    entropic(a, b, c, p, &opts)
}

fn entropic(a: &[f64], b: &[f64], c: &CostMatrix, p: f64, opts: &SolverOptions) -> Result<TransportResult> {
    let r = reduce(a, b, c, p)?;
    let med = median(&r.cost);
    let base = if med > 0.0 { med } else { r.cost.iter().sum::<f64>() / r.cost.len() as f64 };
    let base = if base > 0.0 { base } else { 1.0 };
    let epsilon = match opts.epsilon {
        Some(e) if !(e > 0.0) => return invalid("epsilon must be positive"),
        Some(e) => e / r.scale,
        None => 1e-5 * base,
    };
    let params = sinkhorn::SinkhornParams {
        epsilon,
        epsilon0: 0.1 * base,
        tol: opts.tol,
        max_iter: opts.max_iter,
        gap_target: opts.gap_target,
    };
    let out = sinkhorn::solve(&r.a, &r.b, &r.cost, &params)?;
    let mut res = finish(
        &r,
        a.len(),
        b.len(),
        p,
        out.flows,
        &out.v,
        Method::Entropic,
        Some(out.epsilon * r.scale),
        out.iterations,
    );
    res.violation = res.violation.max(out.violation);
    Ok(res)
}

/// Uniform random `k`-subset of `0..n` in increasing order.
fn sample_indices(n: usize, k: usize, stream: &mut NoiseStream) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    let k = k.min(n);
    let mut block = 0u64;
    let mut buf = [0.0; NORMALS_PER_BLOCK];
    for t in 0..k {
        if t % NORMALS_PER_BLOCK == 0 {
            buf = stream.uniforms(block);
            block += 1;
        }
        let r = t + ((buf[t % NORMALS_PER_BLOCK] * (n - t) as f64) as usize).min(n - t - 1);
        idx.swap(t, r);
    }
    let mut out = idx[..k].to_vec();
    out.sort_unstable();
    out
}

fn restrict(w: &[f64], idx: &[usize]) -> Result<Vec<f64>> {
    let s: f64 = idx.iter().map(|&i| w[i]).sum();
    if !(s > 0.0) {
        return Err(Error::Infeasible("subsample carries no mass".into()));
    }
    Ok(idx.iter().map(|&i| w[i] / s).collect())
}

fn spot_check(a: &[f64], b: &[f64], c: &CostMatrix, p: f64, opts: &SolverOptions) -> Result<SpotCheck> {
    let seed = derive_seed(opts.seed, tags::SUBSAMPLE);
    let ia = sample_indices(a.len(), SPOT_CHECK_ATOMS, &mut NoiseStream::new(seed, 0));
    let ib = sample_indices(b.len(), SPOT_CHECK_ATOMS, &mut NoiseStream::new(seed, 1));
    let sub = c.select(&ia, &ib);
    let (sa, sb) = (restrict(a, &ia)?, restrict(b, &ib)?);
    let exact = w_exact_with_limit(&sa, &sb, &sub, p, usize::MAX)?.value;
    let ent = entropic(&sa, &sb, &sub, p, opts)?.value;
    let relative_error = if exact > 0.0 { (ent - exact).abs() / exact } else { ent };
    Ok(SpotCheck { atoms: ia.len().max(ib.len()), exact, entropic: ent, relative_error })
}

/// Solves with the method chosen in `opts`.
pub fn solve(a: &[f64], b: &[f64], c: &CostMatrix, p: f64, opts: &SolverOptions) -> Result<TransportResult> {
    match opts.method {
        Method::Exact => w_exact_with_limit(a, b, c, p, opts.max_exact_entries),
        Method::Entropic => entropic(a, b, c, p, opts),
        Method::Auto => {
            let big = a.len().max(b.len()) > EXACT_ATOM_LIMIT || a.len() * b.len() > opts.max_exact_entries;
            if !big {
                return w_exact_with_limit(a, b, c, p, opts.max_exact_entries);
            }
            let mut res = entropic(a, b, c, p, opts)?;
            res.spot_check = Some(spot_check(a, b, c, p, opts)?);
            Ok(res)
        }
    }
}

/// Atoms of an empirical law: the paths of `ensemble` with probability
/// weights.
#[derive(Clone, Debug)]
pub struct LawSample<'a> {
    pub ensemble: &'a Ensemble,
    pub weights: Vec<f64>,
}

impl<'a> LawSample<'a> {
    pub fn uniform(ensemble: &'a Ensemble) -> Self {
        let n = ensemble.len();
        Self { ensemble, weights: vec![1.0 / n as f64; n] }
    }

    pub fn new(ensemble: &'a Ensemble, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != ensemble.len() {
            return invalid("one weight per path is required");
        }
        check_weights(&weights, "law sample")?;
        Ok(Self { ensemble, weights })
    }

    /// Kish effective sample size.
    pub fn ess(&self) -> f64 {
        1.0 / self.weights.iter().map(|w| w * w).sum::<f64>()
    }
}

/// Empirical `W_p` between two laws with a same-law baseline.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LawComparison {
    pub ground: Ground,
    pub p: f64,
    pub raw: TransportResult,
    /// `W_p` between the first sample and an independent sample of its law.
    pub baseline: TransportResult,
    /// `max(raw^p - baseline^p, 0)`.
    pub adjusted_power: f64,
    pub adjusted_power_se: f64,
    /// `adjusted_power^(1/p)`.
    pub adjusted: f64,
    pub adjusted_se: f64,
    /// `max(raw - baseline, 0)`.
    pub adjusted_linear: f64,
}

fn first_order_var(w: &[f64], pot: &[f64]) -> f64 {
    let mean: f64 = w.iter().zip(pot).map(|(x, y)| x * y).sum();
    w.iter().zip(pot).map(|(x, y)| x * x * (y - mean).powi(2)).sum()
}

fn multinomial_weights(w: &[f64], stream: &mut NoiseStream) -> Vec<f64> {
    let n = w.len();
    let mut counts = vec![0.0; n];
    let mut block = 0u64;
    let mut buf = [0.0; NORMALS_PER_BLOCK];
    for t in 0..n {
        if t % NORMALS_PER_BLOCK == 0 {
            buf = stream.uniforms(block);
            block += 1;
        }
        counts[((buf[t % NORMALS_PER_BLOCK] * n as f64) as usize).min(n - 1)] += 1.0;
    }
    let raw: Vec<f64> = w.iter().zip(&counts).map(|(x, c)| x * c).collect();
    let s: f64 = raw.iter().sum();
    if s > 0.0 {
        raw.iter().map(|x| x / s).collect()
    } else {
        w.to_vec()
    }
}

/// Attaches standard errors to `res` by bootstrap or first-order duals.
fn attach_se(res: &mut TransportResult, a: &[f64], b: &[f64], c: &CostMatrix, p: f64, opts: &SolverOptions, tag: u64) -> Result<()> {
    if opts.bootstrap > 1 && a.len() <= opts.bootstrap_atoms && b.len() <= opts.bootstrap_atoms {
        let seed = derive_seed(derive_seed(opts.seed, tags::BOOTSTRAP), tag);
        let reps: Vec<u64> = (0..opts.bootstrap as u64).collect();
        let vals = par_map(&reps, |&r| -> Result<(f64, f64)> {
            let wa = multinomial_weights(a, &mut NoiseStream::new(seed, 2 * r));
            let wb = multinomial_weights(b, &mut NoiseStream::new(seed, 2 * r + 1));
            let t = w_exact_with_limit(&wa, &wb, c, p, usize::MAX)?;
            Ok((t.value, t.cost))
        });
        let vals = vals.into_iter().collect::<Result<Vec<_>>>()?;
        let sd = |xs: Vec<f64>| mean_se(&xs).se * (xs.len() as f64).sqrt();
        res.se = Some(sd(vals.iter().map(|v| v.0).collect()));
        res.se_cost = Some(sd(vals.iter().map(|v| v.1).collect()));
    } else {
        let (u, v) = res.duals();
        let var = first_order_var(a, u) + first_order_var(b, v);
        let se_cost = var.sqrt();
        res.se_cost = Some(se_cost);
        res.se = Some(if res.value > 0.0 { se_cost / (p * res.value.powf(p - 1.0)) } else { se_cost.powf(1.0 / p) });
    }
    Ok(())
}

/// Empirical `W_p` between the laws sampled by `a` and `b`, with the
/// same-law baseline `W_p(a, baseline)` where `baseline` is an independent
/// sample of the law of `a`.
pub fn w2_laws(
    m: &ModelManifold,
    a: &LawSample,
    b: &LawSample,
    baseline: &LawSample,
    ground: Ground,
    p: f64,
    opts: &SolverOptions,
) -> Result<LawComparison> {
    let c_ab = ground_cost(m, a.ensemble, b.ensemble, ground)?;
    let mut raw = solve(&a.weights, &b.weights, &c_ab, p, opts)?;
    attach_se(&mut raw, &a.weights, &b.weights, &c_ab, p, opts, 0)?;
    drop(c_ab);
    let c_aa = ground_cost(m, a.ensemble, baseline.ensemble, ground)?;
    let mut base = solve(&a.weights, &baseline.weights, &c_aa, p, opts)?;
    attach_se(&mut base, &a.weights, &baseline.weights, &c_aa, p, opts, 1)?;
    Ok(compare(ground, p, raw, base))
}

pub(crate) fn compare(ground: Ground, p: f64, raw: TransportResult, baseline: TransportResult) -> LawComparison {
    let adjusted_power = (raw.cost - baseline.cost).max(0.0);
    let adjusted_power_se = (raw.se_cost.unwrap_or(0.0).powi(2) + baseline.se_cost.unwrap_or(0.0).powi(2)).sqrt();
    let adjusted = adjusted_power.powf(1.0 / p);
    let adjusted_se = if adjusted > 0.0 {
        (adjusted_power_se / (p * adjusted.powf(p - 1.0))).min(adjusted_power_se.powf(1.0 / p))
    } else {
        adjusted_power_se.powf(1.0 / p)
    };
    let adjusted_linear = (raw.value - baseline.value).max(0.0);
    LawComparison { ground, p, raw, baseline, adjusted_power, adjusted_power_se, adjusted, adjusted_se, adjusted_linear }
}
