//! Constants of the conformal change `<.,.>' = f^{-2} <.,.>`.

use super::{GeodesicGraph, ModelManifold};
use crate::error::{precondition, Result};
use crate::field::{Jet, ScalarField};
use crate::linalg::{Point, Vector};
use serde::Serialize;

#[derive(Clone, Copy, Debug)]
pub struct ConformalOptions {
    /// Size of the quasi-random sample grid.
    pub samples: usize,
    /// Multiplicative enlargement applied to every sampled supremum.
    pub safety: f64,
    /// Polish the best grid points by a compass search.
    pub refine: bool,
}

impl Default for ConformalOptions {
    fn default() -> Self {
        Self { samples: 10_000, safety: 1.01, refine: true }
    }
}

/// Sampled suprema entering the conformal constants.
#[derive(Clone, Copy, Debug, Default, Serialize)]
pub struct Suprema {
    pub f: f64,
    pub grad_f: f64,
    pub z: f64,
    /// `sup (K f^2 - f Δf)^+`
    pub curvature_term: f64,
    /// `K'`: `sup {K f^2 - f Δf + (d-3)|grad f|^2 + 3|Z| f |grad f|}`
    pub k_prime: f64,
    /// `||Z'||'`: `sup |f Z + (d-2) grad f|`
    pub z_prime: f64,
    /// `||grad' f^{-1}||'`: `sup |grad f| / f`
    pub grad_psi_primed: f64,
    /// `||f^{-1}||`
    pub psi: f64,
    /// `||grad f^{-1}||` in the original metric: `sup |grad f| / f^2`
    pub grad_inv_f: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ConformalData {
    pub dim: usize,
    pub k: f64,
    pub sigma: f64,
    /// Raw grid suprema (no safety factor).
    pub raw: Suprema,
    /// Suprema after the safety factor.
    pub enlarged: Suprema,
    pub kappa_f: f64,
    pub kappa_f_raw: f64,
    pub k_psi: f64,
    pub k_psi_raw: f64,
    /// Whether `K_psi <= kappa_f` holds for the raw constants.
    pub k_psi_dominated: bool,
    /// Minimum of `f` over the sample grid.
    pub f_min: f64,
    /// Minimum of `N log f - sigma` over the boundary samples.
    pub boundary_slack: f64,
    pub safety: f64,
    #[serde(skip)]
    f: Option<ScalarField>,
    #[serde(skip)]
    manifold: Option<ModelManifold>,
}

impl ConformalData {
    pub fn field(&self) -> &ScalarField {
        self.f.as_ref().expect("constructed by conformal_rescale")
    }

    /// `<u, v>' = f(x)^{-2} <u, v>`.
    pub fn primed_inner(&self, x: &Point, u: &Vector, v: &Vector) -> f64 {
        let m = self.manifold.as_ref().expect("constructed by conformal_rescale");
        let f = self.field().value(m, x);
        m.inner(x, u, v) / (f * f)
    }

    /// `Z' = f^2 Z + ((d-2)/2) grad f^2`.
    pub fn primed_drift(&self, x: &Point) -> Vector {
        let m = self.manifold.as_ref().expect("constructed by conformal_rescale");
        let j = self.field().jet(m, x);
        let mut z = m.drift_at(x) * (j.value * j.value);
        z.axpy((self.dim as f64 - 2.0) * j.value, &j.grad);
        z
    }

    /// Geodesic graph for the primed distance (two-dimensional flat kinds).
    pub fn primed_graph(&self, spacing: f64, stencil: i64) -> Result<GeodesicGraph> {
        let m = self.manifold.as_ref().expect("constructed by conformal_rescale");
        GeodesicGraph::new(m, spacing, stencil, Some(self.field().clone()))
    }
}

fn kappa(d: usize, s: &Suprema) -> f64 {
    let df = d as f64;
    5.0 * s.f * s.grad_f * s.z + (2.0 * (df - 2.0) + (df - 3.0).max(0.0)) * s.grad_f * s.grad_f + s.curvature_term
}

fn k_psi(s: &Suprema) -> f64 {
    s.k_prime.max(0.0) * s.psi * s.psi + 2.0 * s.z_prime * s.grad_psi_primed * s.psi
}

const N_QUANTITIES: usize = 9;

fn quantities(m: &ModelManifold, x: &Point, j: &Jet, k: f64, z_fixed: Option<f64>) -> [f64; N_QUANTITIES] {
    let d = m.dim() as f64;
    let f = j.value;
    let g = m.norm(x, &j.grad);
    let zvec = m.drift_at(x);
    let zn = m.norm(x, &zvec);
    let curv = k * f * f - f * j.lap;
    let mut zp = zvec * f;
    zp.axpy(d - 2.0, &j.grad);
    [
        f,
        g,
        z_fixed.unwrap_or(zn),
        curv.max(0.0),
        curv + (d - 3.0) * g * g + 3.0 * zn * f * g,
        m.norm(x, &zp),
        g / f,
        1.0 / f,
        g / (f * f),
    ]
}

/// Computes the conformal constants for `f`.
///
/// Fails when `f < 1` somewhere on the sample grid or when the boundary
/// condition `N log f >= sigma` is violated on a boundary sample.
pub fn conformal_rescale(m: &ModelManifold, f: &ScalarField, opts: &ConformalOptions) -> Result<ConformalData> {
    f.validate_for(m)?;
    let curv = m.curvature_constants();
    let k = curv.k;
    let sigma = curv.sigma;
    let grid = m.sample_grid(opts.samples);
    let z_closed = m.drift_sup();

    let mut f_min = f64::INFINITY;
    let mut best = [f64::NEG_INFINITY; N_QUANTITIES];
    let mut best_pts: Vec<Vec<(f64, usize)>> = vec![Vec::new(); N_QUANTITIES];
    for (idx, x) in grid.iter().enumerate() {
        let j = f.jet(m, x);
        f_min = f_min.min(j.value);
        let q = quantities(m, x, &j, k, z_closed);
        for i in 0..N_QUANTITIES {
            if q[i].is_nan() {
                continue;
            }
            best[i] = best[i].max(q[i]);
            let list = &mut best_pts[i];
            list.push((q[i], idx));
            list.sort_by(|a, b| b.0.total_cmp(&a.0));
            list.truncate(3);
        }
    }
    if f_min < 1.0 - 1e-12 {
        let x = grid.iter().min_by(|a, b| f.value(m, a).total_cmp(&f.value(m, b))).expect("nonempty grid");
        return precondition(format!("conformal factor must satisfy f >= 1, found f = {f_min} at {x:?}"));
    }
    let mut boundary_slack = f64::INFINITY;
    if m.has_boundary() {
        for x in m.boundary_samples(opts.samples / 10)? {
            let j = f.jet(m, &x);
            let normal = m.inward_normal(&x)?;
            let nlog = m.inner(&x, &j.grad, &normal) / j.value;
            let slack = nlog - sigma;
            if slack < -1e-9 {
                return precondition(format!(
                    "boundary condition N log f >= sigma fails at {x:?}: N log f = {nlog}, sigma = {sigma}"
                ));
            }
            boundary_slack = boundary_slack.min(slack);
        }
    }

    if opts.refine {
        let scale = refine_scale(m, opts.samples);
        for i in 0..N_QUANTITIES {
            if i == 2 && z_closed.is_some() {
                continue;
            }
            for &(_, idx) in &best_pts[i] {
                let v = compass_max(m, &grid[idx], scale, |x| {
                    let j = f.jet(m, x);
                    quantities(m, x, &j, k, z_closed)[i]
                });
                best[i] = best[i].max(v);
            }
        }
    }

    let raw = Suprema {
        f: best[0],
        grad_f: best[1],
        z: best[2],
        curvature_term: best[3].max(0.0),
        k_prime: best[4],
        z_prime: best[5],
        grad_psi_primed: best[6],
        psi: best[7],
        grad_inv_f: best[8],
    };
    let s = opts.safety;
    let enlarge = |v: f64| if v >= 0.0 { v * s } else { v / s };
    let enlarged = Suprema {
        f: enlarge(raw.f),
        grad_f: enlarge(raw.grad_f),
        z: if z_closed.is_some() { raw.z } else { enlarge(raw.z) },
        curvature_term: enlarge(raw.curvature_term),
        k_prime: enlarge(raw.k_prime),
        z_prime: enlarge(raw.z_prime),
        grad_psi_primed: enlarge(raw.grad_psi_primed),
        psi: enlarge(raw.psi),
        grad_inv_f: enlarge(raw.grad_inv_f),
    };
    let d = m.dim();
    let kappa_f_raw = kappa(d, &raw);
    let k_psi_raw = k_psi(&raw);
    Ok(ConformalData {
        dim: d,
        k,
        sigma,
        raw,
        enlarged,
        kappa_f: kappa(d, &enlarged),
        kappa_f_raw,
        k_psi: k_psi(&enlarged),
        k_psi_raw,
        k_psi_dominated: k_psi_raw <= kappa_f_raw * (1.0 + 1e-12) + 1e-12,
        f_min,
        boundary_slack,
        safety: s,
        f: Some(f.clone()),
        manifold: Some(m.clone()),
    })
}

/// Characteristic grid spacing used as the initial compass step.
pub(crate) fn refine_scale(m: &ModelManifold, samples: usize) -> f64 {
    let extent = match m.kind() {
        super::ManifoldKind::Ball { radius } => 2.0 * radius,
        super::ManifoldKind::Annulus { outer, .. } => 2.0 * outer,
        super::ManifoldKind::Sphere { radius } | super::ManifoldKind::SphericalCap { radius, .. } => 3.0 * radius,
        super::ManifoldKind::Hyperbolic { radius } => 4.0 * radius,
        _ => 2.0 * super::SAMPLE_WINDOW,
    };
    extent / (samples as f64).powf(1.0 / m.dim() as f64)
}

/// Compass search for a local maximum of `q` over `M̄`, starting at `x0`.
/// Moves leaving the domain are snapped to the boundary.
pub(crate) fn compass_max<Q: Fn(&Point) -> f64>(m: &ModelManifold, x0: &Point, step: f64, q: Q) -> f64 {
    let admissible = |y: Point| -> Option<Point> {
        if m.contains(&y) {
            return Some(y);
        }
        if m.has_boundary() && m.constraint_residual(&y) <= 1e-8 {
            let p = m.project_to_boundary(&y).ok()?;
            return m.contains(&p).then_some(p);
        }
        None
    };
    let mut x = *x0;
    let mut fx = q(&x);
    if fx.is_nan() {
        return f64::NEG_INFINITY;
    }
    let mut h = step;
    while h > 1e-10 {
        let frame = m.tangent_basis(&x);
        let mut improved = false;
        for e in frame.vectors() {
            for sgn in [1.0, -1.0] {
                let Some(y) = admissible(m.exp_map(&x, &(*e * (sgn * h)))) else { continue };
                let fy = q(&y);
                if fy > fx {
                    x = y;
                    fx = fy;
                    improved = true;
                }
            }
        }
        if !improved {
            h *= 0.5;
        }
    }
    fx
}
