//! Wasserstein contraction of the marginal and path laws.

use super::talagrand::{baseline_info, record_for, sim, with_refinement};
use super::{CheckOptions, InequalityReport};
use crate::coupling::{contraction_report, simulate_coupled};
use crate::diffusion::{InitialLaw, Record};
use crate::error::{invalid, precondition, Result};
use crate::geometry::ModelManifold;
use crate::linalg::Point;
use crate::rng::{derive_seed, tags};
use crate::transport::{point_cost, w2_laws, w_exact, Ground, LawSample};

/// Largest number of coupled pairs simulated for the pathwise diagnostics.
const COUPLED_PAIRS: usize = 256;

#[derive(Clone, Debug)]
pub enum ContractionInput {
    /// `W_{p,rho}(P_T(x,.), P_T(y,.)) <= e^{KT} rho(x,y)`.
    Points { x: Point, y: Point },
    /// `W_{p,rho_inf}(Pi_mu, Pi_nu) <= e^{KT} W_{p,rho}(mu, nu)`.
    Measures { mu: (Vec<Point>, Vec<f64>), nu: (Vec<Point>, Vec<f64>) },
}

/// Empirical `W_p` between the laws started from `lx` and `ly`, compared
/// with each closed-form bound in `bounds` (name, anchor, value).
pub(crate) fn law_contraction(
    m: &ModelManifold,
    lx: &InitialLaw,
    ly: &InitialLaw,
    ground: Ground,
    p: f64,
    bounds: &[(&str, &str, f64)],
    opts: &CheckOptions,
) -> Result<Vec<InequalityReport>> {
    let record = record_for(ground, None, opts);
    let a = sim(m, lx, opts, tags::ENSEMBLE_A, &record)?;
    let b = sim(m, ly, opts, tags::ENSEMBLE_B, &record)?;
    let base = sim(m, lx, opts, tags::ENSEMBLE_BASELINE, &record)?;
    let cmp = w2_laws(m, &LawSample::uniform(&a), &LawSample::uniform(&b), &LawSample::uniform(&base), ground, p, &opts.solver)?;
    Ok(bounds
        .iter()
        .map(|&(name, anchor, bound)| {
            let mut r = if opts.power_scale {
                InequalityReport::new(name, anchor, cmp.adjusted_power, bound.powf(p), cmp.adjusted_power_se, 0.0)
            } else {
                InequalityReport::new(name, anchor, cmp.adjusted, bound, cmp.adjusted_se, 0.0)
            };
            r.diagnostics.baseline = Some(baseline_info(&cmp));
            r.diagnostics.values.insert("bound".into(), bound);
            r.diagnostics.values.insert("adjusted".into(), cmp.adjusted);
            r.diagnostics.values.insert("adjusted_se".into(), cmp.adjusted_se);
            r.diagnostics.values.insert("p".into(), p);
            r.update_verdict();
            r
        })
        .collect())
}

/// Contraction at rate `e^{KT}` of the marginal laws from two points, or of
/// the path laws from two finitely supported measures. With
/// `opts.power_scale` both sides are raised to the power `p`.
pub fn check_marginal_contraction(
    m: &ModelManifold,
    input: &ContractionInput,
    p: f64,
    opts: &CheckOptions,
) -> Result<InequalityReport> {
    if !(p >= 1.0) {
        return invalid(format!("p must be at least 1, got {p}"));
    }
    if !m.is_convex() {
        return precondition(format!("{} has a non-convex boundary", m.kind().name()));
    }
    let k = m.curvature_constants().k;
    let t = opts.sim.t;
    let growth = (k * t).exp();
    let power = if opts.power_scale { "^p" } else { "" };
    let mut out = match input {
        ContractionInput::Points { x, y } => {
            let rho = m.distance(x, y)?;
            let anchor = format!("W_p_rho(P_T(x,.), P_T(y,.)){power} <= (e^{{KT}} rho(x,y)){power}");
            let bounds = [("marginal-contraction", anchor.as_str(), growth * rho)];
            let mut r = law_contraction(m, &InitialLaw::Dirac(*x), &InitialLaw::Dirac(*y), Ground::Rho, p, &bounds, opts)?;
            coupled_diagnostics(m, x, y, k, opts, &mut r[0]);
            r[0].diagnostics.values.insert("rho".into(), rho);
            r
        }
        ContractionInput::Measures { mu, nu } => {
            let w0 = measure_distance(m, mu, nu, p)?;
            let anchor = format!("W_p_rho_inf(Pi_mu, Pi_nu){power} <= (e^{{KT}} W_p_rho(mu, nu)){power}");
            let bounds = [("marginal-contraction", anchor.as_str(), growth * w0)];
            let lx = InitialLaw::Atoms { points: mu.0.clone(), weights: mu.1.clone() };
            let ly = InitialLaw::Atoms { points: nu.0.clone(), weights: nu.1.clone() };
            let mut r = with_refinement(opts, true, |o| law_contraction(m, &lx, &ly, Ground::RhoInf, p, &bounds, o))?;
            r[0].diagnostics.values.insert("w_p_mu_nu".into(), w0);
            r
        }
    };
    let mut r = out.remove(0);
    r.diagnostics.values.insert("k".into(), k);
    Ok(r)
}

fn measure_distance(m: &ModelManifold, mu: &(Vec<Point>, Vec<f64>), nu: &(Vec<Point>, Vec<f64>), p: f64) -> Result<f64> {
    let norm = |w: &[f64]| -> Result<Vec<f64>> {
        let s: f64 = w.iter().sum();
        if w.is_empty() || !(s > 0.0) || w.iter().any(|x| !(*x >= 0.0)) {
            return invalid("measure weights must be nonnegative with a positive sum");
        }
        Ok(w.iter().map(|x| x / s).collect())
    };
    if mu.0.len() != mu.1.len() || nu.0.len() != nu.1.len() {
        return invalid("one weight per atom is required");
    }
    let c = point_cost(m, &mu.0, &nu.0);
    Ok(w_exact(&norm(&mu.1)?, &norm(&nu.1)?, &c, p)?.value)
}

/// Pathwise ratios `rho(X_t, Y_t) / (e^{Kt} rho(x,y))` under the
/// parallel-displacement coupling, recorded as diagnostics.
fn coupled_diagnostics(m: &ModelManifold, x: &Point, y: &Point, k: f64, opts: &CheckOptions, r: &mut InequalityReport) {
    let mut cfg = opts.sim.with_seed(derive_seed(opts.sim.seed, tags::ENSEMBLE_Y));
    cfg.n_paths = cfg.n_paths.min(COUPLED_PAIRS);
    let res = simulate_coupled(m, x, y, &cfg, &Record::Endpoint, None).and_then(|e| contraction_report(&e, k, None));
    match res {
        Ok(c) => {
            let v = &mut r.diagnostics.values;
            v.insert("coupled_max_ratio".into(), c.max_ratio);
            v.insert("coupled_mean_ratio".into(), c.mean_ratio.mean);
            v.insert("coupled_excess_constant".into(), c.excess_constant);
        }
        Err(e) => r.diagnostics.notes.push(format!("coupled pairs unavailable: {e}")),
    }
}
