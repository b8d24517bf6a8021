//! Closed-form constants of the variable-coefficient and non-convex bounds.

use crate::error::{precondition, Result};
use crate::field::ScalarField;
use crate::geometry::{compass_max, refine_scale, ConformalOptions, BoundaryProfile, ModelManifold};
use crate::numerics::{chi, golden_section_min};
use serde::Serialize;

const LOG_R_RANGE: f64 = 30.0;
const SCAN_POINTS: usize = 4001;

/// `inf_{R>0} (1 + 1/R) P X exp[2 (1 + R) G X]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct InfOverR {
    pub value: f64,
    /// Minimiser; infinite when `G = 0` (the infimum is the limit `P X`).
    pub r_opt: f64,
    pub value_r1: f64,
    /// Minimum over a log-spaced scan of `R`.
    pub scan_value: f64,
    /// Whether the golden-section minimum matches the scan.
    pub scan_agrees: bool,
}

pub fn inf_over_r(prefactor: f64, x: f64, g: f64) -> InfOverR {
    let h = |r: f64| (1.0 + 1.0 / r) * prefactor * x * (2.0 * (1.0 + r) * g * x).exp();
    let value_r1 = h(1.0);
    if g * x == 0.0 {
        return InfOverR { value: prefactor * x, r_opt: f64::INFINITY, value_r1, scan_value: prefactor * x, scan_agrees: true };
    }
    let log_h = |u: f64| (1.0 + (-u).exp()).ln() + 2.0 * (1.0 + u.exp()) * g * x;
    let (u, _) = golden_section_min(log_h, -LOG_R_RANGE, LOG_R_RANGE, 1e-12);
    let r_opt = u.exp();
    let value = h(r_opt);
    let scan_value = (0..SCAN_POINTS)
        .map(|i| -LOG_R_RANGE + 2.0 * LOG_R_RANGE * i as f64 / (SCAN_POINTS - 1) as f64)
        .map(|u| h(u.exp()))
        .fold(f64::INFINITY, f64::min);
    InfOverR { value, r_opt, value_r1, scan_value, scan_agrees: value <= scan_value * (1.0 + 1e-9) }
}

/// Sampled bounds of a positive coefficient `psi`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PsiBounds {
    pub sup: f64,
    pub inf: f64,
    pub grad_sup: f64,
}

impl PsiBounds {
    /// Grid suprema polished by compass search, enlarged by `opts.safety`.
    pub fn of(m: &ModelManifold, psi: &ScalarField, opts: &ConformalOptions) -> Result<Self> {
        psi.validate_for(m)?;
        if let Some(c) = psi.as_constant() {
            if !(c > 0.0) {
                return precondition(format!("psi must be positive, got {c}"));
            }
            return Ok(Self { sup: c, inf: c, grad_sup: 0.0 });
        }
        let grid = m.sample_grid(opts.samples);
        let value = |x: &_| psi.value(m, x);
        let grad = |x: &_| psi.grad_norm(m, x);
        let argmax = |q: &dyn Fn(&_) -> f64| {
            grid.iter().map(|x| (q(x), x)).max_by(|a, b| a.0.total_cmp(&b.0)).map(|(v, x)| (v, *x)).expect("nonempty grid")
        };
        let (mut sup, x_sup) = argmax(&value);
        let (mut neg_inf, x_inf) = argmax(&|x| -value(x));
        let (mut grad_sup, x_grad) = argmax(&grad);
        if opts.refine {
            let h = refine_scale(m, opts.samples);
            sup = sup.max(compass_max(m, &x_sup, h, value));
            neg_inf = neg_inf.max(compass_max(m, &x_inf, h, |x| -value(x)));
            grad_sup = grad_sup.max(compass_max(m, &x_grad, h, grad));
        }
        let inf = -neg_inf;
        if !(inf > 0.0) {
            return precondition(format!("psi must be bounded below by a positive constant, found {inf}"));
        }
        Ok(Self { sup: sup * opts.safety, inf: inf / opts.safety, grad_sup: grad_sup * opts.safety })
    }
}

/// Constants of the variable-coefficient bounds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct VariableConstants {
    pub k: f64,
    pub z_sup: f64,
    pub psi: PsiBounds,
    /// `K^+ |psi|^2 + 2 |Z| |grad psi| |psi|`
    pub k_psi: f64,
    /// `C(T, psi)` with its minimiser and the value at `R = 1`.
    pub c: InfOverR,
    /// `2 e^{(K_psi + |grad psi|^2) T}`
    pub contraction: f64,
}

pub fn variable_constant(m: &ModelManifold, t: f64, opts: &ConformalOptions) -> Result<VariableConstants> {
    let psi = PsiBounds::of(m, m.psi(), opts)?;
    let k = m.curvature_constants().k;
    let z_sup = match m.drift_sup() {
        Some(z) => z,
        None if psi.grad_sup == 0.0 => 0.0,
        None => return precondition("variable coefficient bound needs a bounded drift"),
    };
    let k_psi = k.max(0.0) * psi.sup * psi.sup + 2.0 * z_sup * psi.grad_sup * psi.sup;
    let x = chi(k_psi, t);
    let c = inf_over_r(psi.sup * psi.sup, x, psi.grad_sup * psi.grad_sup);
    let contraction = 2.0 * ((k_psi + psi.grad_sup * psi.grad_sup) * t).exp();
    Ok(VariableConstants { k, z_sup, psi, k_psi, c, contraction })
}

/// Explicit constants for the boundary profile `f = 1 + sigma phi(rho_∂)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ExplicitConstants {
    pub theta: f64,
    /// `theta` re-derived from the profile bounds.
    pub theta_from_bounds: f64,
    /// `(2 + r d sigma)^2 chi(theta) exp[4 chi(theta)]`
    pub transport: f64,
    /// `(2 + r d sigma)^2 chi exp[4 sigma^2 chi]` at `theta_from_bounds`.
    pub transport_from_bounds: f64,
    /// `(2 + sigma r d) e^{(theta + sigma^2) T}`
    pub contraction: f64,
}

pub fn explicit_constants(p: &BoundaryProfile, k: f64, z_sup: f64, t: f64) -> ExplicitConstants {
    let theta = p.theta(k, z_sup);
    let theta_b = p.theta_from_bounds(k, z_sup);
    let lead = (2.0 + p.r * p.d as f64 * p.sigma).powi(2);
    let x = chi(theta, t);
    let xb = chi(theta_b, t);
    ExplicitConstants {
        theta,
        theta_from_bounds: theta_b,
        transport: lead * x * (4.0 * x).exp(),
        transport_from_bounds: lead * xb * (4.0 * p.sigma * p.sigma * xb).exp(),
        contraction: (2.0 + p.sigma * p.r * p.d as f64) * ((theta + p.sigma * p.sigma) * t).exp(),
    }
}
