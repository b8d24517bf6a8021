//! Shortest paths on a dense grid graph of a planar flat domain.

use super::{segment_clears_ball, ManifoldKind, ModelManifold, SAMPLE_WINDOW};
use crate::error::{invalid, Result};
use crate::field::ScalarField;
use crate::linalg::{Point, Vector};
use std::cmp::Ordering;
use std::collections::BinaryHeap;

/// Grid graph whose edges join nodes along primitive lattice directions.
/// Edge weights are segment lengths, optionally integrated against a
/// conformal factor `1/f`.
pub struct GeodesicGraph {
    m: ModelManifold,
    origin: [f64; 2],
    h: f64,
    nx: usize,
    ny: usize,
    inside: Vec<bool>,
    offsets: Vec<(i64, i64)>,
    weight: Option<ScalarField>,
}

#[derive(PartialEq)]
struct Item(f64, usize);
impl Eq for Item {}
impl PartialOrd for Item {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Item {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then(other.1.cmp(&self.1))
    }
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a.abs()
    } else {
        gcd(b, a % b)
    }
}

impl GeodesicGraph {
    pub fn new(m: &ModelManifold, spacing: f64, stencil: i64, weight: Option<ScalarField>) -> Result<Self> {
        if m.dim() != 2 || m.ambient_dim() != 2 {
            return invalid("geodesic graph supports two-dimensional flat kinds only");
        }
        if !(spacing > 0.0) || stencil < 1 {
            return invalid("graph spacing and stencil must be positive");
        }
        let (lo, hi) = match m.kind() {
            ManifoldKind::Ball { radius } => ([-radius, -radius], [radius, radius]),
            ManifoldKind::Annulus { outer, .. } => ([-outer, -outer], [outer, outer]),
            ManifoldKind::HalfSpace => ([-SAMPLE_WINDOW, 0.0], [SAMPLE_WINDOW, SAMPLE_WINDOW]),
            _ => ([-SAMPLE_WINDOW, -SAMPLE_WINDOW], [SAMPLE_WINDOW, SAMPLE_WINDOW]),
        };
        let nx = ((hi[0] - lo[0]) / spacing).round() as usize + 1;
        let ny = ((hi[1] - lo[1]) / spacing).round() as usize + 1;
        let mut g = Self {
            m: m.clone(),
            origin: lo,
            h: spacing,
            nx,
            ny,
            inside: Vec::new(),
            offsets: Vec::new(),
            weight,
        };
        g.inside = (0..nx * ny).map(|i| m.contains(&g.node(i))).collect();
        for di in -stencil..=stencil {
            for dj in -stencil..=stencil {
                if (di, dj) != (0, 0) && gcd(di, dj) == 1 {
                    g.offsets.push((di, dj));
                }
            }
        }
        Ok(g)
    }

    fn node(&self, i: usize) -> Point {
        let (a, b) = (i % self.nx, i / self.nx);
        Vector::from_slice(&[self.origin[0] + a as f64 * self.h, self.origin[1] + b as f64 * self.h])
    }

    fn segment_ok(&self, p: &Point, q: &Point) -> bool {
        if !self.m.contains(p) || !self.m.contains(q) {
            return false;
        }
        match self.m.kind() {
            ManifoldKind::Annulus { inner, .. } => segment_clears_ball(p, q, inner),
            _ => true,
        }
    }

    fn cost(&self, p: &Point, q: &Point) -> f64 {
        let len = p.dist(q);
        match &self.weight {
            None => len,
            Some(f) => {
                let mid = (*p + *q) * 0.5;
                let w = |x: &Point| 1.0 / f.value(&self.m, x);
                len * (w(p) + 4.0 * w(&mid) + w(q)) / 6.0
            }
        }
    }

    /// Nodes reachable from `x` by an admissible segment within `radius`.
    fn attach(&self, x: &Point, radius: f64) -> Vec<(usize, f64)> {
        let r = (radius / self.h).ceil() as i64;
        let ci = ((x[0] - self.origin[0]) / self.h).round() as i64;
        let cj = ((x[1] - self.origin[1]) / self.h).round() as i64;
        let mut out = Vec::new();
        for a in ci - r..=ci + r {
            for b in cj - r..=cj + r {
                if a < 0 || b < 0 || a >= self.nx as i64 || b >= self.ny as i64 {
                    continue;
                }
                let i = b as usize * self.nx + a as usize;
                if !self.inside[i] {
                    continue;
                }
                let p = self.node(i);
                if p.dist(x) <= radius && self.segment_ok(x, &p) {
                    out.push((i, self.cost(x, &p)));
                }
            }
        }
        out
    }

    /// Graph approximation of the (weighted) intrinsic distance.
    pub fn distance(&self, x: &Point, y: &Point) -> Result<f64> {
        self.m.check_point(x)?;
        self.m.check_point(y)?;
        if self.segment_ok(x, y) && x.dist(y) <= 2.0 * self.h {
            return Ok(self.cost(x, y));
        }
        let radius = 2.0 * self.h;
        let src = self.attach(x, radius);
        let dst = self.attach(y, radius);
        if src.is_empty() || dst.is_empty() {
            return invalid("graph too coarse near the query points");
        }
        let mut target = vec![f64::INFINITY; self.nx * self.ny];
        for &(i, c) in &dst {
            target[i] = target[i].min(c);
        }
        let mut dist = vec![f64::INFINITY; self.nx * self.ny];
        let mut heap = BinaryHeap::new();
        for &(i, c) in &src {
            if c < dist[i] {
                dist[i] = c;
                heap.push(Item(c, i));
            }
        }
        let mut best = if self.segment_ok(x, y) { self.cost(x, y) } else { f64::INFINITY };
        while let Some(Item(d, i)) = heap.pop() {
            if d > dist[i] || d >= best {
                continue;
            }
            if target[i].is_finite() {
                best = best.min(d + target[i]);
            }
            let p = self.node(i);
            let (a, b) = ((i % self.nx) as i64, (i / self.nx) as i64);
            for &(di, dj) in &self.offsets {
                let (na, nb) = (a + di, b + dj);
                if na < 0 || nb < 0 || na >= self.nx as i64 || nb >= self.ny as i64 {
                    continue;
                }
                let j = nb as usize * self.nx + na as usize;
                if !self.inside[j] {
                    continue;
                }
                let q = self.node(j);
                if !self.segment_ok(&p, &q) {
                    continue;
                }
                let nd = d + self.cost(&p, &q);
                if nd < dist[j] {
                    dist[j] = nd;
                    heap.push(Item(nd, j));
                }
            }
        }
        Ok(best)
    }
}
