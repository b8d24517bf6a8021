//! Semigroup inequalities evaluated on endpoint ensembles.

use super::talagrand::sim;
use super::{chi, CheckOptions, InequalityReport};
use crate::diffusion::{gradient_semigroup, InitialLaw, Record};
use crate::error::{invalid, precondition, Result};
use crate::field::ScalarField;
use crate::geometry::ModelManifold;
use crate::linalg::Point;
use crate::numerics::mean_se;
use crate::rng::{derive_seed, tags};

struct Samples {
    f: Vec<f64>,
    grad_sq: Vec<f64>,
}

fn endpoint_samples(m: &ModelManifold, o: &Point, f: &ScalarField, opts: &CheckOptions, tag: u64) -> Result<Samples> {
    if !m.is_convex() {
        return precondition(format!("{} has a non-convex boundary", m.kind().name()));
    }
    f.validate_for(m)?;
    let ens = sim(m, &InitialLaw::Dirac(*o), opts, tag, &Record::Endpoint)?;
    let mut s = Samples { f: Vec::with_capacity(ens.len()), grad_sq: Vec::with_capacity(ens.len()) };
    for p in &ens.paths {
        let j = f.jet(m, &p.end());
        s.f.push(j.value);
        s.grad_sq.push(m.inner(&p.end(), &j.grad, &j.grad));
    }
    Ok(s)
}

/// Report for `lhs = mean(a)`, `rhs = g(mean(b), mean(c))` with the margin
/// error from the per-sample linearisation `z = -a + g_b b + g_c c`.
fn linearised(
    name: &str,
    anchor: &str,
    a: &[f64],
    rhs: f64,
    rhs_terms: &[(f64, &[f64])],
) -> InequalityReport {
    let n = a.len();
    let la = mean_se(a);
    let r: Vec<f64> = (0..n).map(|i| rhs_terms.iter().map(|(g, v)| g * v[i]).sum()).collect();
    let z: Vec<f64> = (0..n).map(|i| r[i] - a[i]).collect();
    let mut rep = InequalityReport::new(name, anchor, la.mean, rhs, la.se, mean_se(&r).se);
    rep.diagnostics.se_margin = Some(mean_se(&z).se);
    rep.update_verdict();
    rep
}

fn xlogx(x: f64) -> f64 {
    if x > 0.0 {
        x * x.ln()
    } else {
        0.0
    }
}

/// `P_T f^2 log f^2 <= (P_T f^2) log P_T f^2 + 2 chi(K,T) P_T |grad f|^2`
/// for `L = Delta + Z`. The margin against the smaller constant
/// `chi(K,T)/2` is kept as `margin_half_chi`.
pub fn check_logsobolev(m: &ModelManifold, o: &Point, f: &ScalarField, opts: &CheckOptions) -> Result<InequalityReport> {
    let k = m.curvature_constants().k;
    let x = chi(k, opts.sim.t);
    let s = endpoint_samples(m, o, f, opts, tags::ENSEMBLE_A)?;
    let f2: Vec<f64> = s.f.iter().map(|v| v * v).collect();
    let a: Vec<f64> = f2.iter().map(|&v| xlogx(v)).collect();
    let b = mean_se(&f2).mean;
    let c = mean_se(&s.grad_sq).mean;
    let rhs = xlogx(b) + 2.0 * x * c;
    let gb = if b > 0.0 { b.ln() + 1.0 } else { 0.0 };
    let r = linearised(
        "logsobolev",
        "P_T(f^2 log f^2) <= P_T f^2 log P_T f^2 + 2 chi(K,T) P_T|grad f|^2",
        &a,
        rhs,
        &[(gb, &f2), (2.0 * x, &s.grad_sq)],
    );
    let half = xlogx(b) + 0.5 * x * c - r.lhs;
    Ok(r.with_value("k", k).with_value("chi", x).with_value("p_t_grad_sq", c).with_value("margin_half_chi", half))
}

/// `P_T f^2 <= (P_T f)^2 + ((e^{2KT} - 1)/K) P_T |grad f|^2`.
pub fn check_poincare(m: &ModelManifold, o: &Point, f: &ScalarField, opts: &CheckOptions) -> Result<InequalityReport> {
    let k = m.curvature_constants().k;
    let x = chi(k, opts.sim.t);
    let s = endpoint_samples(m, o, f, opts, tags::ENSEMBLE_A)?;
    let f2: Vec<f64> = s.f.iter().map(|v| v * v).collect();
    let mf = mean_se(&s.f).mean;
    let c = mean_se(&s.grad_sq).mean;
    let rhs = mf * mf + x * c;
    let r = linearised(
        "poincare",
        "P_T f^2 <= (P_T f)^2 + chi(K,T) P_T|grad f|^2",
        &f2,
        rhs,
        &[(2.0 * mf, &s.f), (x, &s.grad_sq)],
    );
    Ok(r.with_value("k", k).with_value("chi", x).with_value("p_t_grad_sq", c))
}

/// `|grad P_T f|(x) <= e^{KT} (P_T |grad f|^2(x))^{1/2}` with the gradient
/// from central differences of step `h` under common random numbers.
pub fn check_gradient_estimate(
    m: &ModelManifold,
    x: &Point,
    f: &ScalarField,
    h: f64,
    opts: &CheckOptions,
) -> Result<InequalityReport> {
    if !(h > 0.0) {
        return invalid("difference step must be positive");
    }
    let k = m.curvature_constants().k;
    let t = opts.sim.t;
    let g = gradient_semigroup(m, x, f, &opts.sim.with_seed(derive_seed(opts.sim.seed, tags::ENSEMBLE_A)), h)?;
    let s = endpoint_samples(m, x, f, opts, tags::ENSEMBLE_B)?;
    let q = mean_se(&s.grad_sq);
    let growth = (k * t).exp();
    let root = q.mean.max(0.0).sqrt();
    let se_rhs = if root > 0.0 { growth * q.se / (2.0 * root) } else { growth * q.se.sqrt() };
    let r = InequalityReport::new(
        "gradient-estimate",
        "|grad P_T f|(x) <= e^{KT} (P_T|grad f|^2(x))^{1/2}",
        g.norm.mean,
        growth * root,
        g.norm.se,
        se_rhs,
    );
    Ok(r.with_value("k", k).with_value("h", h).with_value("p_t_grad_sq", q.mean))
}
