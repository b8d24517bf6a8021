//! Primal network simplex for the balanced transportation problem.
//!
//! Nodes `0..n` are sources, `n..n+m` are sinks and `n+m` is the artificial
//! root. Real arc `e = i*m + j` joins source `i` to sink `j`; arc `n*m + u` is
//! the artificial arc of node `u`. The spanning tree is stored as parent,
//! thread and successor-count arrays, and entering arcs are chosen by block
//! search.

use crate::error::{Error, Result};

const NONE: usize = usize::MAX;
const UP: f64 = 1.0;
const DOWN: f64 = -1.0;
/// Reduced-cost threshold for entering arcs, in normalised cost units.
const ENTER_TOL: f64 = 1e-12;

pub(crate) struct SimplexOutput {
    /// Nonzero flows `(i, j, mass)`.
    pub flows: Vec<(usize, usize, f64)>,
    /// Sink potentials; sources follow by c-transform.
    pub v: Vec<f64>,
    pub iterations: usize,
}

struct Network<'a> {
    n: usize,
    m: usize,
    arcs: usize,
    root: usize,
    cost: &'a [f64],
    art: f64,
    flow: Vec<f64>,
    in_tree: Vec<bool>,
    parent: Vec<usize>,
    pred: Vec<usize>,
    pred_dir: Vec<f64>,
    thread: Vec<usize>,
    rev_thread: Vec<usize>,
    succ_num: Vec<usize>,
    last_succ: Vec<usize>,
    pi: Vec<f64>,
    dirty_revs: Vec<usize>,
    block: usize,
    next_arc: usize,
    in_arc: usize,
    join: usize,
    u_in: usize,
    v_in: usize,
    u_out: usize,
    delta: f64,
}

impl<'a> Network<'a> {
    fn new(a: &[f64], b: &[f64], cost: &'a [f64]) -> Self {
        let n = a.len();
        let m = b.len();
        let nodes = n + m;
        let arcs = n * m;
        let cmax = cost.iter().cloned().fold(0.0, f64::max);
        let art = 2.0 * cmax + 1.0;
        let mut net = Self {
            n,
            m,
            arcs,
            root: nodes,
            cost,
            art,
            flow: vec![0.0; arcs + nodes],
            in_tree: vec![false; arcs + nodes],
            parent: vec![NONE; nodes + 1],
            pred: vec![NONE; nodes + 1],
            pred_dir: vec![0.0; nodes + 1],
            thread: vec![0; nodes + 1],
            rev_thread: vec![0; nodes + 1],
            succ_num: vec![0; nodes + 1],
            last_succ: vec![0; nodes + 1],
            pi: vec![0.0; nodes + 1],
            dirty_revs: Vec::new(),
            block: ((arcs as f64).sqrt() as usize).max(10),
            next_arc: 0,
            in_arc: NONE,
            join: NONE,
            u_in: NONE,
            v_in: NONE,
            u_out: NONE,
            delta: 0.0,
        };
        let root = nodes;
        net.thread[root] = 0;
        net.rev_thread[0] = root;
        net.succ_num[root] = nodes + 1;
        net.last_succ[root] = root - 1;
        for u in 0..nodes {
            let e = arcs + u;
            net.parent[u] = root;
            net.pred[u] = e;
            net.thread[u] = u + 1;
            net.rev_thread[u + 1] = u;
            net.succ_num[u] = 1;
            net.last_succ[u] = u;
            net.in_tree[e] = true;
            if u < n {
                net.pred_dir[u] = UP;
                net.pi[u] = 0.0;
                net.flow[e] = a[u];
            } else {
                net.pred_dir[u] = DOWN;
                net.pi[u] = art;
                net.flow[e] = b[u - n];
            }
        }
        net
    }

    fn source(&self, e: usize) -> usize {
        if e < self.arcs {
            e / self.m
        } else if e - self.arcs < self.n {
            e - self.arcs
        } else {
            self.root
        }
    }

    fn target(&self, e: usize) -> usize {
        if e < self.arcs {
            self.n + e % self.m
        } else if e - self.arcs < self.n {
            self.root
        } else {
            e - self.arcs
        }
    }

    fn arc_cost(&self, e: usize) -> f64 {
        if e < self.arcs {
            self.cost[e]
        } else if e - self.arcs < self.n {
            0.0
        } else {
            self.art
        }
    }

    fn find_entering(&mut self) -> bool {
        let (n, m) = (self.n, self.m);
        let mut min = -ENTER_TOL;
        let mut best = NONE;
        let mut cnt = self.block;
        let mut e = self.next_arc;
        let mut i = e / m;
        let mut j = e % m;
        for _ in 0..self.arcs {
            if !self.in_tree[e] {
                let c = self.cost[e] + self.pi[i] - self.pi[n + j];
                if c < min {
                    min = c;
                    best = e;
                }
            }
            e += 1;
            j += 1;
            if j == m {
                j = 0;
                i += 1;
                if i == n {
                    i = 0;
                    e = 0;
                }
            }
            cnt -= 1;
            if cnt == 0 {
                if best != NONE {
                    break;
                }
                cnt = self.block;
            }
        }
        if best == NONE {
            return false;
        }
        self.next_arc = e;
        self.in_arc = best;
        true
    }

    fn find_join(&mut self) {
        let mut u = self.source(self.in_arc);
        let mut v = self.target(self.in_arc);
        while u != v {
            if self.succ_num[u] < self.succ_num[v] {
                u = self.parent[u];
            } else {
                v = self.parent[v];
            }
        }
        self.join = u;
    }

    fn find_leaving(&mut self) -> bool {
        let first = self.source(self.in_arc);
        let second = self.target(self.in_arc);
        let mut delta = f64::INFINITY;
        let mut result = 0;
        let mut u = first;
        while u != self.join {
            if self.pred_dir[u] == UP {
                let d = self.flow[self.pred[u]];
                if d < delta {
                    delta = d;
                    self.u_out = u;
                    result = 1;
                }
            }
            u = self.parent[u];
        }
        u = second;
        while u != self.join {
            if self.pred_dir[u] == DOWN {
                let d = self.flow[self.pred[u]];
                if d <= delta {
                    delta = d;
                    self.u_out = u;
                    result = 2;
                }
            }
            u = self.parent[u];
        }
        if result == 1 {
            self.u_in = first;
            self.v_in = second;
        } else {
            self.u_in = second;
            self.v_in = first;
        }
        self.delta = delta;
        result != 0
    }

    fn change_flow(&mut self) {
        let val = self.delta;
        if val > 0.0 {
            self.flow[self.in_arc] += val;
            let mut u = self.source(self.in_arc);
            while u != self.join {
                self.flow[self.pred[u]] -= self.pred_dir[u] * val;
                u = self.parent[u];
            }
            u = self.target(self.in_arc);
            while u != self.join {
                self.flow[self.pred[u]] += self.pred_dir[u] * val;
                u = self.parent[u];
            }
        }
        self.in_tree[self.in_arc] = true;
        let out = self.pred[self.u_out];
        self.in_tree[out] = false;
        self.flow[out] = 0.0;
    }

    fn update_tree(&mut self) {
        let u_in = self.u_in;
        let v_in = self.v_in;
        let u_out = self.u_out;
        let join = self.join;
        let in_arc = self.in_arc;
        let old_rev_thread = self.rev_thread[u_out];
        let old_succ_num = self.succ_num[u_out];
        let old_last_succ = self.last_succ[u_out];
        let v_out = self.parent[u_out];
        let dir_in = if u_in == self.source(in_arc) { UP } else { DOWN };

        if u_in == u_out {
            self.parent[u_in] = v_in;
            self.pred[u_in] = in_arc;
            self.pred_dir[u_in] = dir_in;
            if self.thread[v_in] != u_out {
                let mut after = self.thread[old_last_succ];
                self.thread[old_rev_thread] = after;
                self.rev_thread[after] = old_rev_thread;
                after = self.thread[v_in];
                self.thread[v_in] = u_out;
                self.rev_thread[u_out] = v_in;
                self.thread[old_last_succ] = after;
                self.rev_thread[after] = old_last_succ;
            }
        } else {
            let thread_continue =
                if old_rev_thread == v_in { self.thread[old_last_succ] } else { self.thread[v_in] };
            let mut stem = u_in;
            let mut par_stem = v_in;
            let mut last = self.last_succ[u_in];
            let mut after = self.thread[last];
            self.thread[v_in] = u_in;
            self.dirty_revs.clear();
            self.dirty_revs.push(v_in);
            while stem != u_out {
                let next_stem = self.parent[stem];
                self.thread[last] = next_stem;
                self.dirty_revs.push(last);
                let before = self.rev_thread[stem];
                self.thread[before] = after;
                self.rev_thread[after] = before;
                self.parent[stem] = par_stem;
                par_stem = stem;
                stem = next_stem;
                last = if self.last_succ[stem] == self.last_succ[par_stem] {
                    self.rev_thread[par_stem]
                } else {
                    self.last_succ[stem]
                };
                after = self.thread[last];
            }
            self.parent[u_out] = par_stem;
            self.thread[last] = thread_continue;
            self.rev_thread[thread_continue] = last;
            self.last_succ[u_out] = last;
            if old_rev_thread != v_in {
                self.thread[old_rev_thread] = after;
                self.rev_thread[after] = old_rev_thread;
            }
            for k in 0..self.dirty_revs.len() {
                let u = self.dirty_revs[k];
                let t = self.thread[u];
                self.rev_thread[t] = u;
            }
            let mut tmp_sc = 0usize;
            let tmp_ls = self.last_succ[u_out];
            let mut u = u_out;
            while u != u_in {
                let p = self.parent[u];
                self.pred[u] = self.pred[p];
                self.pred_dir[u] = -self.pred_dir[p];
                tmp_sc = tmp_sc + self.succ_num[u] - self.succ_num[p];
                self.succ_num[u] = tmp_sc;
                self.last_succ[p] = tmp_ls;
                u = p;
            }
            self.pred[u_in] = in_arc;
            self.pred_dir[u_in] = dir_in;
            self.succ_num[u_in] = old_succ_num;
        }

        let up_limit_out = if self.last_succ[join] == v_in { join } else { NONE };
        let last_succ_out = self.last_succ[u_out];
        let mut u = v_in;
        while u != NONE && self.last_succ[u] == v_in {
            self.last_succ[u] = last_succ_out;
            u = self.parent[u];
        }
        if join != old_rev_thread && v_in != old_rev_thread {
            let mut u = v_out;
            while u != up_limit_out && self.last_succ[u] == old_last_succ {
                self.last_succ[u] = old_rev_thread;
                u = self.parent[u];
            }
        } else if last_succ_out != old_last_succ {
            let mut u = v_out;
            while u != up_limit_out && self.last_succ[u] == old_last_succ {
                self.last_succ[u] = last_succ_out;
                u = self.parent[u];
            }
        }
        let mut u = v_in;
        while u != join {
            self.succ_num[u] += old_succ_num;
            u = self.parent[u];
        }
        let mut u = v_out;
        while u != join {
            self.succ_num[u] -= old_succ_num;
            u = self.parent[u];
        }
    }

    fn update_potential(&mut self) {
        let u_in = self.u_in;
        let sigma = self.pi[self.v_in] - self.pi[u_in] - self.pred_dir[u_in] * self.arc_cost(self.in_arc);
        let end = self.thread[self.last_succ[u_in]];
        let mut u = u_in;
        while u != end {
            self.pi[u] += sigma;
            u = self.thread[u];
        }
    }
}

/// Solves `min <C, P>` over couplings of `a` and `b`. Costs are row-major
/// `n x m` and should be scaled to `[0, 1]`.
pub(crate) fn solve(a: &[f64], b: &[f64], cost: &[f64], max_iter: usize) -> Result<SimplexOutput> {
    let (n, m) = (a.len(), b.len());
    debug_assert_eq!(cost.len(), n * m);
    let mut net = Network::new(a, b, cost);
    let mut iterations = 0;
    while net.find_entering() {
        if iterations >= max_iter {
            return Err(Error::NotConverged { iterations });
        }
        net.find_join();
        if !net.find_leaving() {
            return Err(Error::Infeasible("unbounded pivot".into()));
        }
        net.change_flow();
        net.update_tree();
        net.update_potential();
        iterations += 1;
    }
    let total: f64 = a.iter().sum();
    let stranded: f64 = (net.arcs..net.arcs + n + m).map(|e| net.flow[e]).sum();
    if stranded > 1e-9 * total.max(1.0) {
        return Err(Error::Infeasible(format!("artificial flow {stranded:.3e} remains")));
    }
    let mut flows = Vec::with_capacity(n + m);
    for u in 0..n + m {
        let e = net.pred[u];
        if e < net.arcs && net.flow[e] > 0.0 {
            flows.push((e / m, e % m, net.flow[e]));
        }
    }
    flows.sort_unstable_by_key(|&(i, j, _)| (i, j));
    let v = (0..m).map(|j| net.pi[n + j]).collect();
    Ok(SimplexOutput { flows, v, iterations })
}
