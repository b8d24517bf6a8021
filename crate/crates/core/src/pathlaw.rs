//! Densities on path space, reweighted ensembles, relative entropy and the
//! reweighted initial law `mu_F`.

use crate::diffusion::{simulate, Ensemble, InitialLaw, PathSample, Record, SimConfig};
use crate::error::{invalid, precondition, Result};
use crate::field::ScalarField;
use crate::geometry::ModelManifold;
use crate::linalg::Point;
use crate::numerics::{covariance, mean_se, MeanSe};
use crate::rng::derive_seed;
use serde::Serialize;

/// ESS below this share of the ensemble size is flagged.
pub const LOW_ESS_SHARE: f64 = 0.1;

/// Unnormalised density `g` on paths.
#[derive(Clone, Debug)]
pub enum DensityKind {
    /// `g(γ) = f(γ_T)`
    Endpoint(ScalarField),
    /// `g(γ) = prod_j g_j(γ_{t_j})`
    Window { times: Vec<f64>, factors: Vec<ScalarField> },
}

#[derive(Clone, Debug)]
pub struct PathDensity {
    pub kind: DensityKind,
    /// Estimate of `Π(g)`, set by [`PathDensity::with_normalizer`].
    pub normalizer: Option<MeanSe>,
}

impl PathDensity {
    pub fn endpoint(f: ScalarField) -> Self {
        Self { kind: DensityKind::Endpoint(f), normalizer: None }
    }

    pub fn window(times: Vec<f64>, factors: Vec<ScalarField>) -> Result<Self> {
        if times.is_empty() || times.len() != factors.len() {
            return invalid("window density needs one factor per time");
        }
        if times.iter().any(|t| !(*t >= 0.0)) {
            return invalid("window times must be nonnegative");
        }
        Ok(Self { kind: DensityKind::Window { times, factors }, normalizer: None })
    }

    pub fn with_normalizer(mut self, z: MeanSe) -> Self {
        self.normalizer = Some(z);
        self
    }

    pub fn is_trivial(&self) -> bool {
        match &self.kind {
            DensityKind::Endpoint(f) => f.as_constant().is_some(),
            DensityKind::Window { factors, .. } => factors.iter().all(|f| f.as_constant().is_some()),
        }
    }

    pub fn validate_for(&self, m: &ModelManifold, cfg: &SimConfig) -> Result<()> {
        match &self.kind {
            DensityKind::Endpoint(f) => f.validate_for(m),
            DensityKind::Window { times, factors } => {
                for t in times {
                    if *t > cfg.t * (1.0 + 1e-12) {
                        return invalid(format!("window time {t} exceeds the horizon {}", cfg.t));
                    }
                }
                factors.iter().try_for_each(|f| f.validate_for(m))
            }
        }
    }

    /// Grid indices the density reads.
    pub fn steps(&self, cfg: &SimConfig) -> Vec<usize> {
        match &self.kind {
            DensityKind::Endpoint(_) => vec![cfg.n_steps],
            DensityKind::Window { times, .. } => times.iter().map(|&t| cfg.step_index(t)).collect(),
        }
    }

    /// `g(γ)` for a path of `ens`.
    pub fn unnormalized(&self, m: &ModelManifold, ens: &Ensemble, path: &PathSample) -> Result<f64> {
        let v = match &self.kind {
            DensityKind::Endpoint(f) => f.value(m, &path.end()),
            DensityKind::Window { times, factors } => {
                let mut g = 1.0;
                for (t, f) in times.iter().zip(factors) {
                    let k = ens.cfg.step_index(*t);
                    let slot = ens.slot(k).ok_or_else(|| {
                        crate::error::Error::Precondition(format!("ensemble does not record time {t}"))
                    })?;
                    g *= f.value(m, &path.point(slot));
                }
                g
            }
        };
        if !(v >= 0.0) || !v.is_finite() {
            return precondition(format!("density must be finite and nonnegative, got {v}"));
        }
        Ok(v)
    }

    pub fn values(&self, m: &ModelManifold, ens: &Ensemble) -> Result<Vec<f64>> {
        ens.paths.iter().map(|p| self.unnormalized(m, ens, p)).collect()
    }
}

/// Weighted atoms with normalised weights.
#[derive(Clone, Debug)]
pub struct WeightedEnsemble<T> {
    pub atoms: Vec<T>,
    pub weights: Vec<f64>,
}

impl<T> WeightedEnsemble<T> {
    pub fn uniform(atoms: Vec<T>) -> Self {
        let n = atoms.len();
        Self { atoms, weights: vec![1.0 / n as f64; n] }
    }

    /// Normalises `raw` weights; fails when they are all zero.
    pub fn new(atoms: Vec<T>, raw: &[f64]) -> Result<Self> {
        if atoms.len() != raw.len() || atoms.is_empty() {
            return invalid("atoms and weights must have the same nonzero length");
        }
        if raw.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return invalid("weights must be finite and nonnegative");
        }
        let s: f64 = raw.iter().sum();
        if !(s > 0.0) {
            return precondition("all weights are zero");
        }
        Ok(Self { atoms, weights: raw.iter().map(|w| w / s).collect() })
    }

    pub fn ess(&self) -> f64 {
        1.0 / self.weights.iter().map(|w| w * w).sum::<f64>()
    }

    pub fn low_ess(&self) -> bool {
        self.ess() < LOW_ESS_SHARE * self.atoms.len() as f64
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }
}

/// Self-normalised reweighting `w_i ∝ F(γ_i)` of a path ensemble.
pub fn reweight(m: &ModelManifold, ens: &Ensemble, density: &PathDensity) -> Result<WeightedEnsemble<PathSample>> {
    let g = density.values(m, ens)?;
    WeightedEnsemble::new(ens.paths.clone(), &g)
}

/// Estimates `Π(g)` on an ensemble.
pub fn normalizer(m: &ModelManifold, ens: &Ensemble, density: &PathDensity) -> Result<MeanSe> {
    Ok(mean_se(&density.values(m, ens)?))
}

fn xlogx(x: f64) -> f64 {
    if x > 0.0 {
        x * x.ln()
    } else {
        0.0
    }
}

/// `Π(F log F)` with `F = g / Π(g)`.
///
/// Without a stored normalizer the estimate is self-normalised on `ens`;
/// otherwise the stored (independent) normalizer is used. The standard
/// error follows from the delta method.
pub fn entropy(m: &ModelManifold, ens: &Ensemble, density: &PathDensity) -> Result<MeanSe> {
    let g = density.values(m, ens)?;
    let u: Vec<f64> = g.iter().map(|&x| xlogx(x)).collect();
    Ok(entropy_from_samples(&g, &u, density.normalizer))
}

pub(crate) fn entropy_from_samples(g: &[f64], u: &[f64], normalizer: Option<MeanSe>) -> MeanSe {
    let n = g.len() as f64;
    let su = mean_se(u);
    match normalizer {
        None => {
            let sv = mean_se(g);
            let (uu, vv) = (su.mean, sv.mean);
            let ent = uu / vv - vv.ln();
            let (du, dv) = (1.0 / vv, -uu / (vv * vv) - 1.0 / vv);
            let var = du * du * su.se * su.se + dv * dv * sv.se * sv.se + 2.0 * du * dv * covariance(u, g) / n;
            MeanSe { mean: ent, se: var.max(0.0).sqrt() }
        }
        Some(z) => {
            let ent = su.mean / z.mean - z.mean.ln();
            let dv = -su.mean / (z.mean * z.mean) - 1.0 / z.mean;
            let var = (su.se / z.mean).powi(2) + (dv * z.se).powi(2);
            MeanSe { mean: ent, se: var.sqrt() }
        }
    }
}

/// Per-site path means `Π_{x_n}(g)`, each on its own ensemble.
pub fn site_means(
    m: &ModelManifold,
    sites: &[Point],
    density: &PathDensity,
    cfg: &SimConfig,
    tag: u64,
) -> Result<Vec<MeanSe>> {
    let record = Record::Steps(density.steps(cfg));
    sites
        .iter()
        .enumerate()
        .map(|(i, x)| {
            let c = cfg.with_seed(derive_seed(derive_seed(cfg.seed, tag), i as u64));
            let ens = simulate(m, &InitialLaw::Dirac(*x), &c, &record)?;
            normalizer(m, &ens, density)
        })
        .collect()
}

/// Finitely supported measure with per-atom standard errors.
#[derive(Clone, Debug, Serialize)]
pub struct AtomicMeasure {
    #[serde(skip)]
    pub points: Vec<Point>,
    pub masses: Vec<f64>,
    pub se: Vec<f64>,
}

impl AtomicMeasure {
    pub fn law(&self) -> InitialLaw {
        if self.points.len() == 1 {
            InitialLaw::Dirac(self.points[0])
        } else {
            InitialLaw::Atoms { points: self.points.clone(), weights: self.masses.clone() }
        }
    }
}

/// `mu_F(dx) = Π_x(F) mu(dx)`, renormalised, from per-site means.
pub fn mu_f(points: &[Point], masses: &[f64], site: &[MeanSe]) -> Result<AtomicMeasure> {
    if points.len() != masses.len() || points.len() != site.len() || points.is_empty() {
        return invalid("mu_F needs one mass and one site mean per atom");
    }
    let total_mu: f64 = masses.iter().sum();
    let eps: Vec<f64> = masses.iter().map(|w| w / total_mu).collect();
    let s: f64 = eps.iter().zip(site).map(|(e, g)| e * g.mean).sum();
    if !(s > 0.0) {
        return precondition("density integrates to zero against mu");
    }
    let out: Vec<f64> = eps.iter().zip(site).map(|(e, g)| e * g.mean / s).collect();
    let se = (0..points.len())
        .map(|n| {
            (0..points.len())
                .map(|k| {
                    let d = if n == k { eps[n] / s } else { 0.0 } - eps[n] * site[n].mean * eps[k] / (s * s);
                    (d * site[k].se).powi(2)
                })
                .sum::<f64>()
                .sqrt()
        })
        .collect();
    Ok(AtomicMeasure { points: points.to_vec(), masses: out, se })
}
