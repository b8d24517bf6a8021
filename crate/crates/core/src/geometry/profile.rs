//! The boundary profile `phi` used to convexify a boundary with `II >= -sigma`.
//!
//! With `h(s) = cos(sqrt(k) s) - (gamma/sqrt(k)) sin(sqrt(k) s)` and
//! `g(s) = h(s) - h(r)`,
//!
//! ```text
//! alpha   = g(0)^{1-d} int_0^r g^{d-1}
//! phi'(t) = (1/alpha) int_t^r (g(u)/g(t))^{d-1} du      (t < r; 0 beyond)
//! phi(s)  = int_0^s phi'
//! ```
//!
//! The ratio form keeps the integrand in `[0, 1]`, so the singular factor
//! `g(t)^{1-d}` is never evaluated on its own. `phi(0) = 0` and `phi'(0) = 1`.

use crate::error::{invalid, Result};
use crate::numerics::adaptive_simpson;
use serde::Serialize;

const TABLE_INTERVALS: usize = 4096;
const QUAD_TOL: f64 = 1e-13;

#[derive(Clone, Debug)]
pub struct BoundaryProfile {
    pub sigma: f64,
    pub gamma: f64,
    pub k: f64,
    pub r: f64,
    pub d: usize,
    alpha: f64,
    // h(s) = amp cos(w s + shift)
    w: f64,
    amp: f64,
    shift: f64,
    nodes_phi: Vec<f64>,
    nodes_dphi: Vec<f64>,
    nodes_ddphi: Vec<f64>,
}

/// Summary of the profile checks reported alongside the constants.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct ProfileSummary {
    pub alpha: f64,
    pub phi_r: f64,
    pub dphi_0: f64,
    pub dphi_min: f64,
    pub dphi_max: f64,
    pub alpha_lower_bound: f64,
    pub phi_r_upper_bound: f64,
}

impl BoundaryProfile {
    /// Largest admissible `r` from the curvature data alone.
    pub fn admissible_radius(gamma: f64, k: f64) -> f64 {
        (k.sqrt() / (k + gamma * gamma).sqrt()).asin() / k.sqrt()
    }

    pub fn new(sigma: f64, gamma: f64, k: f64, r: f64, d: usize) -> Result<Self> {
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return invalid(format!("sigma must be >= 0, got {sigma}"));
        }
        if !(gamma > 0.0 && gamma.is_finite()) {
            return invalid(format!("gamma must be > 0, got {gamma}"));
        }
        if !(k > 0.0 && k.is_finite()) {
            return invalid(format!("k must be > 0, got {k}"));
        }
        if d < 2 {
            return invalid("profile needs d >= 2");
        }
        let rmax = Self::admissible_radius(gamma, k);
        if !(r > 0.0 && r <= rmax * (1.0 + 1e-12)) {
            return invalid(format!("r = {r} outside the admissible range (0, {rmax}]"));
        }
        let w = k.sqrt();
        let amp = (1.0 + gamma * gamma / k).sqrt();
        let shift = (gamma / w).atan();
        let mut p = Self {
            sigma,
            gamma,
            k,
            r,
            d,
            alpha: 1.0,
            w,
            amp,
            shift,
            nodes_phi: Vec::new(),
            nodes_dphi: Vec::new(),
            nodes_ddphi: Vec::new(),
        };
        p.alpha = p.unscaled_dphi(0.0);
        p.build_table();
        Ok(p)
    }

    /// Variant for use on a specific manifold: checks `r <= i_∂M`.
    pub fn for_boundary_injectivity(sigma: f64, gamma: f64, k: f64, r: f64, d: usize, inj: f64) -> Result<Self> {
        if r > inj * (1.0 + 1e-12) {
            return invalid(format!("r = {r} exceeds the boundary injectivity radius {inj}"));
        }
        Self::new(sigma, gamma, k, r, d)
    }

    pub fn h(&self, s: f64) -> f64 {
        self.amp * (self.w * s + self.shift).cos()
    }

    pub fn dh(&self, s: f64) -> f64 {
        -self.amp * self.w * (self.w * s + self.shift).sin()
    }

    /// `g(s) = h(s) - h(r)` in product form, free of cancellation near `r`.
    fn g(&self, s: f64) -> f64 {
        2.0 * self.amp * (0.5 * self.w * (s + self.r) + self.shift).sin() * (0.5 * self.w * (self.r - s)).sin()
    }

    /// `alpha phi'(t) = int_t^r (g(u)/g(t))^{d-1} du`.
    fn unscaled_dphi(&self, t: f64) -> f64 {
        if t >= self.r {
            return 0.0;
        }
        let gt = self.g(t);
        let e = (self.d - 1) as i32;
        let len = self.r - t;
        adaptive_simpson(|u| (self.g(u) / gt).powi(e), t, self.r, QUAD_TOL * len.max(1e-300))
    }

    fn exact_ddphi(&self, t: f64, unscaled: f64) -> f64 {
        let d = self.d as f64;
        if self.r - t < 1e-9 * self.r {
            return -1.0 / (d * self.alpha);
        }
        ((1.0 - d) * self.dh(t) / self.g(t) * unscaled - 1.0) / self.alpha
    }

    fn build_table(&mut self) {
        let n = TABLE_INTERVALS;
        let h = self.r / n as f64;
        let mut phi = vec![0.0; n + 1];
        let mut dphi = vec![0.0; n + 1];
        let mut ddphi = vec![0.0; n + 1];
        for i in 0..=n {
            let t = i as f64 * h;
            let u = self.unscaled_dphi(t);
            dphi[i] = u / self.alpha;
            ddphi[i] = self.exact_ddphi(t, u);
        }
        dphi[0] = 1.0;
        for i in 0..n {
            let a = i as f64 * h;
            let seg = adaptive_simpson(|t| self.unscaled_dphi(t) / self.alpha, a, a + h, 1e-15);
            phi[i + 1] = phi[i] + seg;
        }
        self.nodes_phi = phi;
        self.nodes_dphi = dphi;
        self.nodes_ddphi = ddphi;
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn phi_r(&self) -> f64 {
        *self.nodes_phi.last().expect("table built")
    }

    fn locate(&self, s: f64) -> (usize, f64, f64) {
        let n = TABLE_INTERVALS;
        let h = self.r / n as f64;
        let x = (s / h).max(0.0);
        let i = (x.floor() as usize).min(n - 1);
        (i, x - i as f64, h)
    }

    /// `phi(s)`, constant `phi(r)` for `s >= r`.
    pub fn phi(&self, s: f64) -> f64 {
        if s >= self.r {
            return self.phi_r();
        }
        if s <= 0.0 {
            return s;
        }
        let (i, t, h) = self.locate(s);
        hermite(self.nodes_phi[i], self.nodes_phi[i + 1], self.nodes_dphi[i] * h, self.nodes_dphi[i + 1] * h, t)
    }

    pub fn dphi(&self, s: f64) -> f64 {
        if s >= self.r {
            return 0.0;
        }
        if s <= 0.0 {
            return 1.0;
        }
        let (i, t, h) = self.locate(s);
        hermite(self.nodes_dphi[i], self.nodes_dphi[i + 1], self.nodes_ddphi[i] * h, self.nodes_ddphi[i + 1] * h, t)
    }

    pub fn ddphi(&self, s: f64) -> f64 {
        if s >= self.r {
            return 0.0;
        }
        let (i, t, _) = self.locate(s.max(0.0));
        self.nodes_ddphi[i] * (1.0 - t) + self.nodes_ddphi[i + 1] * t
    }

    /// `phi'` evaluated by direct quadrature instead of the table.
    pub fn dphi_quadrature(&self, s: f64) -> f64 {
        self.unscaled_dphi(s) / self.alpha
    }

    /// The conformal factor `f = 1 + sigma phi` as a function of `rho_∂`.
    pub fn f_of(&self, s: f64) -> f64 {
        1.0 + self.sigma * self.phi(s)
    }

    /// The reference closed form of `theta`.
    pub fn theta(&self, k_curv: f64, z_sup: f64) -> f64 {
        let (r, d, s) = (self.r, self.d as f64, self.sigma);
        let dm3 = (d - 3.0).max(0.0);
        k_curv * (1.0 + r * d * s + r * r * d * d * s * s / 4.0)
            + (d * s / r) * (2.0 * (d - 2.0) + dm3 + d * d / 2.0) * s * s
            + 5.0 * z_sup * s * (1.0 + r * d * s / 2.0)
    }

    /// `theta` as it follows from the bounds `||f|| <= 1 + rd sigma/2`,
    /// `||grad f|| <= sigma`, `Δf >= -sigma d/r`.
    pub fn theta_from_bounds(&self, k_curv: f64, z_sup: f64) -> f64 {
        let (r, d, s) = (self.r, self.d as f64, self.sigma);
        let dm3 = (d - 3.0).max(0.0);
        k_curv * (1.0 + r * d * s + r * r * d * d * s * s / 4.0)
            + d * s / r
            + (2.0 * (d - 2.0) + dm3 + d * d / 2.0) * s * s
            + 5.0 * z_sup * s * (1.0 + r * d * s / 2.0)
    }

    pub fn summary(&self) -> ProfileSummary {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in &self.nodes_dphi {
            lo = lo.min(*v);
            hi = hi.max(*v);
        }
        ProfileSummary {
            alpha: self.alpha,
            phi_r: self.phi_r(),
            dphi_0: self.dphi_quadrature(0.0),
            dphi_min: lo,
            dphi_max: hi,
            alpha_lower_bound: self.r / self.d as f64,
            phi_r_upper_bound: self.d as f64 * self.r / 2.0,
        }
    }
}

fn hermite(p0: f64, p1: f64, m0: f64, m1: f64, t: f64) -> f64 {
    let t2 = t * t;
    let t3 = t2 * t;
    (2.0 * t3 - 3.0 * t2 + 1.0) * p0 + (t3 - 2.0 * t2 + t) * m0 + (-2.0 * t3 + 3.0 * t2) * p1 + (t3 - t2) * m1
}
