//! Transport-entropy checks `W_2(F Pi, Pi')^2 <= C Pi(F log F)`.

use super::constants::{explicit_constants, inf_over_r, variable_constant};
use super::contraction::law_contraction;
use super::{attach_refined, chi, BaselineInfo, CheckOptions, InequalityReport};
use crate::diffusion::{simulate, Ensemble, InitialLaw, Record};
use crate::error::{precondition, Result};
use crate::field::ScalarField;
use crate::geometry::{conformal_rescale, ConformalOptions, BoundaryProfile, ModelManifold};
use crate::linalg::Point;
use crate::numerics::{mean_se, MeanSe};
use crate::pathlaw::{entropy, mu_f, reweight, site_means, AtomicMeasure, PathDensity};
use crate::rng::{derive_seed, tags, NoiseStream};
use crate::transport::{point_cost, w2_laws, w_exact, Ground, LawComparison, LawSample};
use std::sync::Arc;

/// Resamples used for the error of `W_2(mu_F, mu)`.
const MASS_RESAMPLES: u64 = 200;

pub(crate) fn record_for(ground: Ground, density: Option<&PathDensity>, opts: &CheckOptions) -> Record {
    match ground {
        Ground::RhoInf => Record::Full,
        Ground::Rho => Record::Steps(density.map(|d| d.steps(&opts.sim)).unwrap_or_default()),
    }
}

pub(crate) fn sim(m: &ModelManifold, law: &InitialLaw, opts: &CheckOptions, tag: u64, record: &Record) -> Result<Ensemble> {
    simulate(m, law, &opts.sim.with_seed(derive_seed(opts.sim.seed, tag)), record)
}

pub(crate) fn baseline_info(c: &LawComparison) -> BaselineInfo {
    BaselineInfo {
        raw: c.raw.value,
        raw_se: c.raw.se.unwrap_or(0.0),
        baseline: c.baseline.value,
        baseline_se: c.baseline.se.unwrap_or(0.0),
        adjusted_power: c.adjusted_power,
        adjusted_linear: c.adjusted_linear,
        method: format!("{:?}", c.raw.method).to_lowercase(),
    }
}

/// Empirical pieces of one transport-entropy comparison.
struct Pieces {
    cmp: LawComparison,
    ent: MeanSe,
    ess: f64,
    n: usize,
}

/// `F Pi_mu` against `Pi_{mu_F}` (or `Pi_mu` when `reseed` is false), with
/// the reweighted law as the first sample and an independent reweighted
/// sample as its baseline.
fn pieces(m: &ModelManifold, start: &InitialLaw, density: &PathDensity, reseed: bool, opts: &CheckOptions) -> Result<Pieces> {
    density.validate_for(m, &opts.sim)?;
    let ground = Ground::RhoInf;
    let record = record_for(ground, Some(density), opts);
    let a = sim(m, start, opts, tags::ENSEMBLE_A, &record)?;
    let wa = reweight(m, &a, density)?;
    let base = sim(m, start, opts, tags::ENSEMBLE_BASELINE, &record)?;
    let wbase = reweight(m, &base, density)?;
    let law_b = match start {
        InitialLaw::Atoms { points, weights } if reseed => {
            let site = site_means(m, points, density, &opts.sim, tags::ENSEMBLE_NORMALIZER)?;
            mu_f(points, weights, &site)?.law()
        }
        _ => start.clone(),
    };
    let b = sim(m, &law_b, opts, tags::ENSEMBLE_B, &record)?;
    let ent = entropy(m, &a, density)?;
    let ess = wa.ess();
    let cmp = w2_laws(
        m,
        &LawSample::new(&a, wa.weights)?,
        &LawSample::uniform(&b),
        &LawSample::new(&base, wbase.weights)?,
        ground,
        2.0,
        &opts.solver,
    )?;
    Ok(Pieces { cmp, ent, ess, n: a.len() })
}

fn entropy_report(name: &str, anchor: &str, p: &Pieces, constant: f64) -> InequalityReport {
    let mut r = InequalityReport::new(
        name,
        anchor,
        p.cmp.adjusted_power,
        constant * p.ent.mean,
        p.cmp.adjusted_power_se,
        constant * p.ent.se,
    );
    let d = &mut r.diagnostics;
    d.ess = Some(p.ess);
    d.ess_share = Some(p.ess / p.n as f64);
    d.baseline = Some(baseline_info(&p.cmp));
    d.values.insert("entropy".into(), p.ent.mean);
    d.values.insert("entropy_se".into(), p.ent.se);
    d.values.insert("constant".into(), constant);
    r.update_verdict();
    r
}

/// Runs `f` on the configured grid and, when enabled, on the doubled grid;
/// reports are paired by position.
pub(crate) fn with_refinement<F>(opts: &CheckOptions, refine: bool, f: F) -> Result<Vec<InequalityReport>>
where
    F: Fn(&CheckOptions) -> Result<Vec<InequalityReport>>,
{
    let mut coarse = f(opts)?;
    if refine && opts.grid_refinement {
        let o2 = opts.refined();
        let fine = f(&o2)?;
        for (c, f) in coarse.iter_mut().zip(&fine) {
            attach_refined(c, f, o2.sim.n_steps);
        }
    }
    Ok(coarse)
}

fn require_convex(m: &ModelManifold) -> Result<()> {
    if !m.is_convex() {
        return precondition(format!("{} has a non-convex boundary", m.kind().name()));
    }
    Ok(())
}

/// `W_{2,rho_inf}(F Pi_mu, Pi_{mu_F})^2 <= (2/K)(e^{2KT} - 1) Pi_mu(F log F)`.
pub fn check_pathspace_talagrand(
    m: &ModelManifold,
    start: &InitialLaw,
    density: &PathDensity,
    opts: &CheckOptions,
) -> Result<InequalityReport> {
    require_convex(m)?;
    let k = m.curvature_constants().k;
    let anchor = match start {
        InitialLaw::Dirac(_) => "W2_rho_inf(F Pi_o, Pi_o)^2 <= 2 chi(K,T) Pi_o(F log F)",
        InitialLaw::Atoms { .. } => "W2_rho_inf(F Pi_mu, Pi_{mu_F})^2 <= 2 chi(K,T) Pi_mu(F log F)",
    };
    let mut out = with_refinement(opts, true, |o| {
        let c = 2.0 * chi(k, o.sim.t);
        let p = pieces(m, start, density, true, o)?;
        Ok(vec![entropy_report("pathspace-talagrand", anchor, &p, c).with_value("k", k)])
    })?;
    Ok(out.remove(0))
}

/// `W_{2,rho}(P_T(o,.), f P_T(o,.))^2 <= (2/K)(e^{2KT} - 1) P_T(f log f)(o)`.
pub fn check_endpoint_talagrand(m: &ModelManifold, o: &Point, f: &ScalarField, opts: &CheckOptions) -> Result<InequalityReport> {
    require_convex(m)?;
    let k = m.curvature_constants().k;
    let density = PathDensity::endpoint(f.clone());
    density.validate_for(m, &opts.sim)?;
    let start = InitialLaw::Dirac(*o);
    let record = record_for(Ground::Rho, Some(&density), opts);
    let a = sim(m, &start, opts, tags::ENSEMBLE_A, &record)?;
    let wa = reweight(m, &a, &density)?;
    let base = sim(m, &start, opts, tags::ENSEMBLE_BASELINE, &record)?;
    let wbase = reweight(m, &base, &density)?;
    let b = sim(m, &start, opts, tags::ENSEMBLE_B, &record)?;
    let ent = entropy(m, &a, &density)?;
    let ess = wa.ess();
    let cmp = w2_laws(
        m,
        &LawSample::new(&a, wa.weights)?,
        &LawSample::uniform(&b),
        &LawSample::new(&base, wbase.weights)?,
        Ground::Rho,
        2.0,
        &opts.solver,
    )?;
    let p = Pieces { cmp, ent, ess, n: a.len() };
    let c = 2.0 * chi(k, opts.sim.t);
    Ok(entropy_report(
        "endpoint-talagrand",
        "W2_rho(P_T(o,.), f P_T(o,.))^2 <= 2 chi(K,T) P_T(f log f)(o)",
        &p,
        c,
    )
    .with_value("k", k))
}

/// `W_2(mu_F, mu)` between two measures on the same atoms, with an error
/// from Gaussian resampling of the estimated masses.
fn atom_distance(m: &ModelManifold, points: &[Point], mf: &AtomicMeasure, mu: &[f64], seed: u64) -> Result<MeanSe> {
    let c = point_cost(m, points, points);
    let total: f64 = mu.iter().sum();
    let mu: Vec<f64> = mu.iter().map(|w| w / total).collect();
    let w = w_exact(&mf.masses, &mu, &c, 2.0)?.value;
    if mf.se.iter().all(|s| *s == 0.0) {
        return Ok(MeanSe::exact(w));
    }
    let mut vals = Vec::with_capacity(MASS_RESAMPLES as usize);
    for r in 0..MASS_RESAMPLES {
        let mut stream = NoiseStream::new(seed, r);
        let mut masses = Vec::with_capacity(points.len());
        for (i, (x, s)) in mf.masses.iter().zip(&mf.se).enumerate() {
            let z = stream.normals((i / 8) as u64)[i % 8];
            masses.push((x + s * z).max(0.0));
        }
        let t: f64 = masses.iter().sum();
        if !(t > 0.0) {
            continue;
        }
        masses.iter_mut().for_each(|x| *x /= t);
        vals.push(w_exact(&masses, &mu, &c, 2.0)?.value);
    }
    let spread = mean_se(&vals).se * (vals.len() as f64).sqrt();
    Ok(MeanSe { mean: w, se: spread })
}

/// `sqrt(x)` with a first-order error, continued by `sqrt(se)` near zero.
fn sqrt_se(x: MeanSe) -> MeanSe {
    let v = x.mean.max(0.0).sqrt();
    let se = if v > 0.0 { (x.se / (2.0 * v)).min(x.se.sqrt()) } else { x.se.sqrt() };
    MeanSe { mean: v, se }
}

/// The composite bounds for a finitely supported `mu`:
/// `W_{2,rho_inf}(F Pi_mu, Pi_mu) <= sqrt(2 chi Pi_mu(F log F)) + e^{KT} W_2(mu_F, mu)`
/// and, with `c_mu` the transport-entropy constant of `mu`,
/// `W_{2,rho_inf}(F Pi_mu, Pi_mu)^2 <= (sqrt(2 chi) + sqrt(C))^2 Pi_mu(F log F)`.
pub fn check_composite(
    m: &ModelManifold,
    points: &[Point],
    masses: &[f64],
    density: &PathDensity,
    c_mu: Option<f64>,
    opts: &CheckOptions,
) -> Result<Vec<InequalityReport>> {
    require_convex(m)?;
    if let Some(c) = c_mu {
        if !(c >= 0.0) {
            return precondition("the transport-entropy constant of mu must be nonnegative");
        }
    }
    let k = m.curvature_constants().k;
    let start = InitialLaw::Atoms { points: points.to_vec(), weights: masses.to_vec() };
    with_refinement(opts, true, |o| {
        let t = o.sim.t;
        let x = chi(k, t);
        let p = pieces(m, &start, density, false, o)?;
        let site = site_means(m, points, density, &o.sim, tags::ENSEMBLE_NORMALIZER)?;
        let mf = mu_f(points, masses, &site)?;
        let w_mu = atom_distance(m, points, &mf, masses, derive_seed(o.sim.seed, tags::SUBSAMPLE))?;
        let sqrt_term = sqrt_se(MeanSe { mean: 2.0 * x * p.ent.mean, se: 2.0 * x * p.ent.se });
        let growth = (k * t).exp();
        let sum = sqrt_term.mean + growth * w_mu.mean;
        let sum_se = sqrt_term.se.hypot(growth * w_mu.se);
        let (lhs, se_lhs, rhs, se_rhs) = if o.power_scale {
            (p.cmp.adjusted_power, p.cmp.adjusted_power_se, sum * sum, 2.0 * sum * sum_se)
        } else {
            (p.cmp.adjusted, p.cmp.adjusted_se, sum, sum_se)
        };
        let anchor = if o.power_scale {
            "W2_rho_inf(F Pi_mu, Pi_mu)^2 <= (sqrt(2 chi(K,T) Pi_mu(F log F)) + e^{KT} W2_rho(mu_F, mu))^2"
        } else {
            "W2_rho_inf(F Pi_mu, Pi_mu) <= sqrt(2 chi(K,T) Pi_mu(F log F)) + e^{KT} W2_rho(mu_F, mu)"
        };
        let mut r = InequalityReport::new("composite", anchor, lhs, rhs, se_lhs, se_rhs);
        let d = &mut r.diagnostics;
        d.ess = Some(p.ess);
        d.ess_share = Some(p.ess / p.n as f64);
        d.baseline = Some(baseline_info(&p.cmp));
        d.values.insert("k".into(), k);
        d.values.insert("entropy".into(), p.ent.mean);
        d.values.insert("entropy_se".into(), p.ent.se);
        d.values.insert("w2_mu_f_mu".into(), w_mu.mean);
        d.values.insert("w2_mu_f_mu_se".into(), w_mu.se);
        r.update_verdict();
        let mut out = vec![r];
        if let Some(c) = c_mu {
            let constant = ((2.0 * x).sqrt() + c.sqrt()).powi(2);
            let anchor = "W2_rho_inf(F Pi_mu, Pi_mu)^2 <= (sqrt(2 chi(K,T)) + sqrt(C))^2 Pi_mu(F log F)";
            out.push(entropy_report("composite-constant", anchor, &p, constant).with_value("c_mu", c));
        }
        Ok(out)
    })
}

/// Transport-entropy and contraction bounds for the generator
/// `psi^2 (Δ + Z)`, with `psi` taken from `m`.
pub fn check_variable_coefficient(
    m: &ModelManifold,
    start: &InitialLaw,
    density: &PathDensity,
    pair: Option<(Point, Point)>,
    opts: &CheckOptions,
) -> Result<Vec<InequalityReport>> {
    require_convex(m)?;
    let cons = variable_constant(m, opts.sim.t, &ConformalOptions::default())?;
    let annotate = |mut r: InequalityReport| {
        let v = &mut r.diagnostics.values;
        v.insert("k".into(), cons.k);
        v.insert("k_psi".into(), cons.k_psi);
        v.insert("psi_sup".into(), cons.psi.sup);
        v.insert("psi_inf".into(), cons.psi.inf);
        v.insert("grad_psi_sup".into(), cons.psi.grad_sup);
        v.insert("c_t_psi".into(), cons.c.value);
        v.insert("c_t_psi_r1".into(), cons.c.value_r1);
        v.insert("r_opt".into(), cons.c.r_opt);
        v.insert("r_scan_agrees".into(), f64::from(u8::from(cons.c.scan_agrees)));
        r
    };
    let mut out = with_refinement(opts, true, |o| {
        let p = pieces(m, start, density, true, o)?;
        let anchor = "W2_rho_inf(F Pi_{mu,psi}, Pi_{mu_F,psi})^2 <= 2 C(T,psi) Pi_{mu,psi}(F log F)";
        Ok(vec![entropy_report("variable-coefficient-talagrand", anchor, &p, 2.0 * cons.c.value)])
    })?;
    if let Some((x, y)) = pair {
        let rho = m.distance(&x, &y)?;
        let anchor = "W2_rho_inf(Pi_{x,psi}, Pi_{y,psi}) <= 2 e^{(K_psi + |grad psi|^2) T} rho(x,y)";
        let bounds = [("variable-coefficient-contraction", anchor, cons.contraction * rho)];
        out.extend(with_refinement(opts, true, |o| {
            law_contraction(m, &InitialLaw::Dirac(x), &InitialLaw::Dirac(y), Ground::RhoInf, 2.0, &bounds, o)
        })?);
    }
    Ok(out.into_iter().map(annotate).collect())
}

/// Inputs of the non-convex checks.
#[derive(Clone, Debug)]
pub struct NonconvexInput {
    /// Conformal factor with `f >= 1` and `N log f >= sigma` on the boundary.
    pub f: ScalarField,
    /// Set when `f = 1 + sigma phi(rho_∂)` for this profile, adding the
    /// explicit constants.
    pub profile: Option<Arc<BoundaryProfile>>,
    pub start: InitialLaw,
    pub density: PathDensity,
    pub pair: Option<(Point, Point)>,
}

/// Transport-entropy and contraction bounds on a manifold with
/// `II >= -sigma`, with constants from the conformal factor `f`. Distances
/// are measured in the original metric.
pub fn check_nonconvex(m: &ModelManifold, input: &NonconvexInput, opts: &CheckOptions) -> Result<Vec<InequalityReport>> {
    let t = opts.sim.t;
    let data = conformal_rescale(m, &input.f, &ConformalOptions::default())?;
    let s = data.enlarged;
    let c = inf_over_r(1.0, chi(data.kappa_f, t), s.grad_f * s.grad_f);
    let constant = 2.0 * s.f * s.f * c.value;
    let cor = input.profile.as_ref().map(|p| explicit_constants(p, data.k.max(0.0), s.z, t));
    let annotate = |mut r: InequalityReport| {
        let v = &mut r.diagnostics.values;
        v.insert("k".into(), data.k);
        v.insert("sigma".into(), data.sigma);
        v.insert("kappa_f".into(), data.kappa_f);
        v.insert("kappa_f_raw".into(), data.kappa_f_raw);
        v.insert("f_sup".into(), s.f);
        v.insert("grad_f_sup".into(), s.grad_f);
        v.insert("grad_inv_f_sup".into(), s.grad_inv_f);
        v.insert("z_sup".into(), s.z);
        v.insert("f_min".into(), data.f_min);
        v.insert("boundary_slack".into(), data.boundary_slack);
        v.insert("c_t_f".into(), c.value);
        v.insert("c_t_f_r1".into(), c.value_r1);
        v.insert("r_opt".into(), c.r_opt);
        if let Some(k) = &cor {
            v.insert("theta".into(), k.theta);
            v.insert("theta_from_bounds".into(), k.theta_from_bounds);
            v.insert("explicit_transport".into(), k.transport);
            v.insert("explicit_transport_from_bounds".into(), k.transport_from_bounds);
            v.insert("explicit_contraction".into(), k.contraction);
        }
        if let Some(p) = &input.profile {
            let sm = p.summary();
            v.insert("alpha".into(), sm.alpha);
            v.insert("phi_r".into(), sm.phi_r);
            v.insert("dphi_0".into(), sm.dphi_0);
        }
        r
    };
    let mut out = with_refinement(opts, true, |o| {
        let p = pieces(m, &input.start, &input.density, true, o)?;
        let mut v = vec![entropy_report(
            "nonconvex-talagrand",
            "W2_rho_inf(F Pi_mu, Pi_{mu_F})^2 <= 2 |f|^2 c(T,f) Pi_mu(F log F)",
            &p,
            constant,
        )];
        if let Some(k) = &cor {
            v.push(entropy_report(
                "nonconvex-explicit-talagrand",
                "W2_rho_inf(F Pi_mu, Pi_{mu_F})^2 <= (2 + r d sigma)^2 chi(theta,T) exp[4 chi(theta,T)] Pi_mu(F log F)",
                &p,
                k.transport,
            ));
        }
        Ok(v)
    })?;
    if let Some((x, y)) = input.pair {
        let rho = m.distance(&x, &y)?;
        let factor = 2.0 * s.f * ((data.kappa_f + s.grad_inv_f * s.grad_inv_f) * t).exp();
        let mut bounds = vec![(
            "nonconvex-contraction",
            "W2_rho_inf(Pi_x, Pi_y) <= 2 |f| e^{(kappa_f + |grad f^-1|^2) T} rho(x,y)",
            factor * rho,
        )];
        if let Some(k) = &cor {
            bounds.push((
                "nonconvex-explicit-contraction",
                "W2_rho_inf(Pi_x, Pi_y) <= (2 + sigma r d) e^{(theta + sigma^2) T} rho(x,y)",
                k.contraction * rho,
            ));
        }
        out.extend(with_refinement(opts, true, |o| {
            law_contraction(m, &InitialLaw::Dirac(x), &InitialLaw::Dirac(y), Ground::RhoInf, 2.0, &bounds, o)
        })?);
    }
    Ok(out.into_iter().map(annotate).collect())
}
