//! Log-domain Sinkhorn iterations with epsilon scaling.

use super::c_transform_dual;
use crate::error::{Error, Result};

pub(crate) struct SinkhornParams {
    pub epsilon: f64,
    pub epsilon0: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub gap_target: Option<f64>,
}

pub(crate) struct SinkhornOutput {
    pub flows: Vec<(usize, usize, f64)>,
    pub violation: f64,
    pub epsilon: f64,
    pub iterations: usize,
    pub v: Vec<f64>,
}

/// Masses below this are dropped from the returned plan.
const PLAN_CUTOFF: f64 = 1e-15;
/// Iteration budget of an intermediate epsilon stage.
const STAGE_ITER: usize = 1000;
const OMEGA: f64 = 1.5;
/// Marginal violation accepted before an intermediate epsilon stage ends.
const STAGE_TOL: f64 = 1e-3;
/// Stages whose certified gap shrinks by less than this factor count as stalled.
const STALL_RATIO: f64 = 0.9;
/// Consecutive stalled stages after which the best rounded plan is returned.
const STALL_STAGES: usize = 3;

/// Sparse plan entries `(row, col, mass)`.
type Flows = Vec<(usize, usize, f64)>;

struct Scaling<'a> {
    n: usize,
    m: usize,
    la: Vec<f64>,
    lb: Vec<f64>,
    cost: &'a [f64],
    f: Vec<f64>,
    g: Vec<f64>,
    scratch_max: Vec<f64>,
    scratch_sum: Vec<f64>,
}

impl<'a> Scaling<'a> {
    /// Column potentials given the row potentials, by row sweeps.
    fn g_update(&mut self, eps: f64) -> Vec<f64> {
        let (n, m) = (self.n, self.m);
        let acc = &mut self.scratch_sum;
        acc.iter_mut().for_each(|x| *x = 0.0);
        let shift: Vec<f64> = self.g.iter().map(|g| g / eps).collect();
        for i in 0..n {
            let base = self.la[i] + self.f[i] / eps;
            let row = &self.cost[i * m..(i + 1) * m];
            for j in 0..m {
                acc[j] += (base + shift[j] - row[j] / eps).exp();
            }
        }
        if acc.iter().all(|x| x.is_finite() && *x > 0.0) {
            return (0..m).map(|j| self.g[j] - eps * acc[j].ln()).collect();
        }
        let mx = &mut self.scratch_max;
        mx.iter_mut().for_each(|x| *x = f64::NEG_INFINITY);
        for i in 0..n {
            let base = self.la[i] + self.f[i] / eps;
            let row = &self.cost[i * m..(i + 1) * m];
            for j in 0..m {
                mx[j] = mx[j].max(base - row[j] / eps);
            }
        }
        acc.iter_mut().for_each(|x| *x = 0.0);
        for i in 0..n {
            let base = self.la[i] + self.f[i] / eps;
            let row = &self.cost[i * m..(i + 1) * m];
            for j in 0..m {
                acc[j] += (base - row[j] / eps - mx[j]).exp();
            }
        }
        (0..m).map(|j| -eps * (mx[j] + acc[j].ln())).collect()
    }

    fn f_update(&mut self, eps: f64) {
        let m = self.m;
        let shift: Vec<f64> = (0..m).map(|j| self.lb[j] + self.g[j] / eps).collect();
        for i in 0..self.n {
            let row = &self.cost[i * m..(i + 1) * m];
            let fi = self.f[i] / eps;
            let s: f64 = (0..m).map(|j| (shift[j] + fi - row[j] / eps).exp()).sum();
            if s.is_finite() && s > 0.0 {
                self.f[i] -= eps * s.ln();
                continue;
            }
            let mx = (0..m).map(|j| shift[j] - row[j] / eps).fold(f64::NEG_INFINITY, f64::max);
            let s: f64 = (0..m).map(|j| (shift[j] - row[j] / eps - mx).exp()).sum();
            self.f[i] = -eps * (mx + s.ln());
        }
    }

    /// Runs iterations at `eps` until the column violation is at most `tol`.
    /// The column update is over-relaxed by `OMEGA`, falling back to plain
    /// updates when the violation stops decreasing. Returns the iteration
    /// count and the violation reached.
    fn run(&mut self, eps: f64, tol: f64, max_iter: usize) -> (usize, f64) {
        let mut it = 0;
        let mut omega = OMEGA;
        let mut prev = f64::INFINITY;
        loop {
            let g_new = self.g_update(eps);
            if it > 0 {
                let viol: f64 = (0..self.m)
                    .map(|j| self.lb[j].exp() * (((self.g[j] - g_new[j]) / eps).exp() - 1.0).abs())
                    .sum();
                if viol <= tol || it >= max_iter {
                    return (it, viol);
                }
                if viol > prev {
                    omega = 1.0;
                }
                prev = viol;
            }
            if it == 0 {
                self.g = g_new;
            } else {
                for (g, gn) in self.g.iter_mut().zip(&g_new) {
                    *g += omega * (gn - *g);
                }
            }
            self.f_update(eps);
            it += 1;
        }
    }

    fn kernel(&self, eps: f64, i: usize, j: usize, c: f64) -> f64 {
        (self.la[i] + self.lb[j] + (self.f[i] + self.g[j] - c) / eps).exp()
    }

    fn plan(&self, eps: f64) -> (Vec<(usize, usize, f64)>, f64, f64) {
        let m = self.m;
        let mut flows = Vec::new();
        let mut col = vec![0.0; m];
        let mut viol = 0.0;
        for i in 0..self.n {
            let row = &self.cost[i * m..(i + 1) * m];
            let mut rs = 0.0;
            for j in 0..m {
                let p = self.kernel(eps, i, j, row[j]);
                rs += p;
                col[j] += p;
                if p > PLAN_CUTOFF {
                    flows.push((i, j, p));
                }
            }
            viol += (rs - self.la[i].exp()).abs();
        }
        let cviol: f64 = (0..m).map(|j| (col[j] - self.lb[j].exp()).abs()).sum();
        let cost = flows.iter().map(|&(i, j, p)| p * self.cost[i * m + j]).sum();
        (flows, cost, f64::max(viol, cviol))
    }

    /// Projection of the current plan onto the exact coupling polytope:
    /// rows and columns are scaled down to their targets and the deficit is
    /// added back as a rank-one term. Returns the plan and its cost.
    fn rounded(&self, eps: f64) -> (Vec<(usize, usize, f64)>, f64) {
        let (n, m) = (self.n, self.m);
        let mut dense = vec![0.0; n * m];
        for i in 0..n {
            let row = &self.cost[i * m..(i + 1) * m];
            let out = &mut dense[i * m..(i + 1) * m];
            for j in 0..m {
                out[j] = self.kernel(eps, i, j, row[j]);
            }
            let rs: f64 = out.iter().sum();
            let x = (self.la[i].exp() / rs).min(1.0);
            out.iter_mut().for_each(|p| *p *= x);
        }
        let mut col = vec![0.0; m];
        for i in 0..n {
            for j in 0..m {
                col[j] += dense[i * m + j];
            }
        }
        let y: Vec<f64> = (0..m).map(|j| (self.lb[j].exp() / col[j]).min(1.0)).collect();
        let mut err_a = vec![0.0; n];
        let mut err_b: Vec<f64> = self.lb.iter().map(|x| x.exp()).collect();
        for i in 0..n {
            let out = &mut dense[i * m..(i + 1) * m];
            let mut rs = 0.0;
            for j in 0..m {
                out[j] *= y[j];
                rs += out[j];
                err_b[j] -= out[j];
            }
            err_a[i] = (self.la[i].exp() - rs).max(0.0);
        }
        err_b.iter_mut().for_each(|x| *x = x.max(0.0));
        let total: f64 = err_a.iter().sum();
        let mut flows = Vec::new();
        let mut cost = 0.0;
        for i in 0..n {
            let row = &self.cost[i * m..(i + 1) * m];
            for j in 0..m {
                let mut p = dense[i * m + j];
                if total > 0.0 {
                    p += err_a[i] * err_b[j] / total;
                }
                cost += p * row[j];
                if p > PLAN_CUTOFF {
                    flows.push((i, j, p));
                }
            }
        }
        (flows, cost)
    }
}

/// Entropic transport between `a` and `b` with costs scaled to `[0, 1]`.
///
/// With a gap target the result is the cheapest rounded (feasible) plan seen
/// over the epsilon stages, returned once its certified gap meets the target,
/// stops improving, or the final epsilon is reached.
pub(crate) fn solve(a: &[f64], b: &[f64], cost: &[f64], params: &SinkhornParams) -> Result<SinkhornOutput> {
    let (n, m) = (a.len(), b.len());
    if !(params.epsilon > 0.0) {
        return Err(Error::InvalidParameter("epsilon must be positive".into()));
    }
    let mut s = Scaling {
        n,
        m,
        la: a.iter().map(|x| x.ln()).collect(),
        lb: b.iter().map(|x| x.ln()).collect(),
        cost,
        f: vec![0.0; n],
        g: vec![0.0; m],
        scratch_max: vec![0.0; m],
        scratch_sum: vec![0.0; m],
    };
    let mut eps = params.epsilon0.max(params.epsilon);
    let mut total = 0;
    let mut stage_tol = params.tol.max(STAGE_TOL);
    let mut best_plan: Option<(Flows, f64)> = None;
    let mut best_dual = (f64::NEG_INFINITY, Vec::new());
    let mut stalled = 0;
    loop {
        let last = eps <= params.epsilon;
        let cap = if last { params.max_iter } else { params.max_iter.min(STAGE_ITER) };
        let (it, viol) = s.run(eps, if last { params.tol } else { stage_tol }, cap);
        total += it;
        if let Some(target) = params.gap_target {
            let (flows, primal) = s.rounded(eps);
            let (_, _, dual) = c_transform_dual(a, b, cost, &s.g);
            let prev_gap = best_plan.as_ref().map_or(f64::INFINITY, |p| p.1 - best_dual.0);
            if dual > best_dual.0 {
                best_dual = (dual, s.g.clone());
            }
            if best_plan.as_ref().map_or(true, |p| primal < p.1) {
                best_plan = Some((flows, primal));
            }
            let best = best_plan.as_ref().map_or(f64::INFINITY, |p| p.1);
            let gap = best - best_dual.0;
            stalled = if gap > STALL_RATIO * prev_gap { stalled + 1 } else { 0 };
            if gap <= target * best || gap <= 1e-12 || stalled >= STALL_STAGES || last {
                let (flows, _) = best_plan.take().expect("plan recorded");
                return Ok(SinkhornOutput { flows, violation: 0.0, epsilon: eps, iterations: total, v: best_dual.1 });
            }
            stage_tol = params.tol.max(STAGE_TOL.min(0.1 * target * dual.max(0.0)));
        }
        if last {
            if viol > params.tol {
                return Err(Error::NotConverged { iterations: total });
            }
            let (flows, _, violation) = s.plan(eps);
            return Ok(SinkhornOutput { flows, violation, epsilon: eps, iterations: total, v: s.g });
        }
        eps = (0.5 * eps).max(params.epsilon);
    }
}
