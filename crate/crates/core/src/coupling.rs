//! Coupling by parallel displacement: `Y` is driven by the noise of `X`
//! transported along the minimal geodesic from `X_t` to `Y_t`.

use crate::diffusion::{PathDrift, PathSample, Record, SimConfig, State, Stepper};
use crate::error::{invalid, precondition, Error, Result};
use crate::geometry::{ManifoldKind, ModelManifold};
use crate::linalg::{Point, Vector};
use crate::numerics::{mean_se, normal_cdf, normal_pdf, MeanSe};
use crate::par_map;
use crate::rng::{derive_seed, tags, NoiseStream};
use serde::Serialize;

/// Largest tolerated share of cut-locus resamples among all steps.
pub const MAX_RESAMPLE_RATE: f64 = 1e-3;
const MAX_ATTEMPTS: u64 = 16;

#[derive(Clone, Debug, PartialEq)]
pub struct CoupledPair {
    pub path_x: PathSample,
    pub path_y: PathSample,
    /// `rho(X_t, Y_t)` at every grid time.
    pub distance_profile: Vec<f64>,
    pub resamples: usize,
}

impl CoupledPair {
    /// `max_t rho(X_t, Y_t)` over the grid.
    pub fn max_distance(&self) -> f64 {
        self.distance_profile.iter().copied().fold(0.0, f64::max)
    }
}

#[derive(Clone, Debug)]
pub struct CoupledEnsemble {
    pub cfg: SimConfig,
    pub steps: Vec<usize>,
    pub pairs: Vec<CoupledPair>,
    pub resamples: usize,
}

fn record_indices(record: &Record, n: usize) -> Vec<usize> {
    match record {
        Record::Full => (0..=n).collect(),
        Record::Endpoint => vec![0, n],
        Record::Steps(s) => {
            let mut v: Vec<usize> = s.iter().copied().filter(|&i| i <= n).collect();
            v.extend([0, n]);
            v.sort_unstable();
            v.dedup();
            v
        }
    }
}

fn couple_one(
    m: &ModelManifold,
    x0: &Point,
    y0: &Point,
    cfg: &SimConfig,
    steps: &[usize],
    index: u64,
    beta: Option<&dyn PathDrift>,
) -> Result<CoupledPair> {
    let stepper = Stepper::new(m, cfg.dt());
    let mut stream = NoiseStream::new(cfg.seed, index);
    let mut spare = NoiseStream::new(derive_seed(cfg.seed, tags::RESAMPLE), index);
    let mut sx = State::new(m, *x0)?;
    let mut y = *y0;
    let mut ly = 0.0;
    let amb = m.ambient_dim();
    let mut px = PathSample::from_parts(amb, Vec::new(), Vec::new());
    let mut py = PathSample::from_parts(amb, Vec::new(), Vec::new());
    let mut profile = Vec::with_capacity(cfg.n_steps + 1);
    let mut resamples = 0;
    let mut next = 0;
    let mut store = |k: usize, x: &State, y: &Point, ly: f64, px: &mut PathSample, py: &mut PathSample| {
        if next < steps.len() && steps[next] == k {
            px.push_point(&x.x, x.l);
            py.push_point(y, ly);
            next += 1;
        }
    };
    store(0, &sx, &y, ly, &mut px, &mut py);
    profile.push(m.distance_unchecked(x0, y0));
    for k in 1..=cfg.n_steps {
        let b = beta.map(|e| e.beta(cfg.time(k - 1), &sx.x));
        if let Some(b) = &b {
            px.drift_energy += m.inner(&sx.x, b, b) * cfg.dt();
        }
        let mut attempt = 0;
        let (nx, ny) = loop {
            let xi = if attempt == 0 {
                stream.normals(k as u64)
            } else {
                spare.normals((attempt - 1) * cfg.n_steps as u64 + k as u64)
            };
            let noise_x = sx.frame.combine(&xi[..m.dim()]);
            let noise_y = m.parallel_transport(&sx.x, &y, &noise_x)?;
            let mut trial = sx;
            let (xn, dlx, left_x) = stepper.advance(&trial.x, &noise_x, b.as_ref())?;
            let (yn, dly, left_y) = stepper.advance(&y, &noise_y, None)?;
            // the next transport needs a unique minimal geodesic
            match m.parallel_transport(&xn, &yn, &noise_x) {
                Err(Error::CutLocus { .. }) if attempt + 1 < MAX_ATTEMPTS => {
                    attempt += 1;
                    resamples += 1;
                    continue;
                }
                Err(e) => return Err(e),
                Ok(_) => {}
            }
            stepper.transport_frame(&trial.x, &xn, &mut trial.frame)?;
            trial.x = xn;
            trial.l += dlx;
            px.reflections += left_x as usize;
            py.reflections += left_y as usize;
            break (trial, (yn, dly));
        };
        sx = nx;
        y = ny.0;
        ly += ny.1;
        px.max_residual = px.max_residual.max(m.constraint_residual(&sx.x));
        py.max_residual = py.max_residual.max(m.constraint_residual(&y));
        profile.push(m.distance_unchecked(&sx.x, &y));
        store(k, &sx, &y, ly, &mut px, &mut py);
    }
    Ok(CoupledPair { path_x: px, path_y: py, distance_profile: profile, resamples })
}

/// Simulates `cfg.n_paths` coupled pairs from `(x, y)`. The optional `beta`
/// adds `sqrt(2) beta dt` to `X` only.
pub fn simulate_coupled(
    m: &ModelManifold,
    x: &Point,
    y: &Point,
    cfg: &SimConfig,
    record: &Record,
    beta: Option<&dyn PathDrift>,
) -> Result<CoupledEnsemble> {
    cfg.validate()?;
    m.check_point(x)?;
    m.check_point(y)?;
    let steps = record_indices(record, cfg.n_steps);
    let idx: Vec<u64> = (0..cfg.n_paths as u64).collect();
    let pairs = par_map(&idx, |&i| couple_one(m, x, y, cfg, &steps, i, beta))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let resamples: usize = pairs.iter().map(|p| p.resamples).sum();
    let total = (cfg.n_steps * cfg.n_paths) as f64;
    if resamples as f64 > MAX_RESAMPLE_RATE * total {
        return precondition(format!(
            "cut-locus resamples on {resamples} of {total} steps exceed the {MAX_RESAMPLE_RATE} rate"
        ));
    }
    Ok(CoupledEnsemble { cfg: *cfg, steps, pairs, resamples })
}

/// Pathwise contraction diagnostics.
#[derive(Clone, Debug, Serialize)]
pub struct ContractionReport {
    pub k: f64,
    pub dt: f64,
    pub initial_distance: f64,
    /// `max_paths max_t rho(X_t,Y_t) / (e^{Kt} rho(x,y))`.
    pub max_ratio: f64,
    pub mean_ratio: MeanSe,
    /// `(max_ratio - 1)^+ / sqrt(dt)`.
    pub excess_constant: f64,
    /// For variable `psi`: `E max_t rho^2` against `(2 e^{(K_psi + |grad psi|^2) T} rho(x,y))^2`.
    pub variable: Option<VariableContraction>,
}

#[derive(Clone, Debug, Serialize)]
pub struct VariableContraction {
    pub k_psi: f64,
    pub grad_psi_sup: f64,
    pub lhs: MeanSe,
    pub rhs: f64,
}

/// Compares coupled distances with `e^{Kt} rho(x, y)`. With `variable =
/// Some((K_psi, |grad psi|_inf))` the mean-square bound for non-constant
/// `psi` is evaluated too.
pub fn contraction_report(ens: &CoupledEnsemble, k: f64, variable: Option<(f64, f64)>) -> Result<ContractionReport> {
    if ens.pairs.is_empty() {
        return invalid("empty coupled ensemble");
    }
    let cfg = ens.cfg;
    let rho0 = ens.pairs[0].distance_profile[0];
    let mut ratios = Vec::with_capacity(ens.pairs.len());
    for p in &ens.pairs {
        let r = if rho0 > 0.0 {
            p.distance_profile
                .iter()
                .enumerate()
                .map(|(i, d)| d / ((k * cfg.time(i)).exp() * rho0))
                .fold(0.0, f64::max)
        } else if p.max_distance() == 0.0 {
            1.0
        } else {
            f64::INFINITY
        };
        ratios.push(r);
    }
    let max_ratio = ratios.iter().copied().fold(0.0, f64::max);
    let variable = variable.map(|(k_psi, g)| {
        let sq: Vec<f64> = ens.pairs.iter().map(|p| p.max_distance().powi(2)).collect();
        let rhs = (2.0 * ((k_psi + g * g) * cfg.t).exp() * rho0).powi(2);
        VariableContraction { k_psi, grad_psi_sup: g, lhs: mean_se(&sq), rhs }
    });
    Ok(ContractionReport {
        k,
        dt: cfg.dt(),
        initial_distance: rho0,
        max_ratio,
        mean_ratio: mean_se(&ratios),
        excess_constant: (max_ratio - 1.0).max(0.0) / cfg.dt().sqrt(),
        variable,
    })
}

/// Drift of the h-transform of `f(x) = e^{a x_1}` on the line or the
/// half-line: `beta = sqrt(2) d/dx log P_{T-t} f`.
pub struct TiltDrift {
    pub a: f64,
    pub horizon: f64,
    pub reflecting: bool,
}

impl TiltDrift {
    /// `P_s f(x)` in closed form (image method on the half-line).
    pub fn semigroup(&self, s: f64, x: f64) -> f64 {
        let a = self.a;
        if !self.reflecting {
            return (a * x + a * a * s).exp();
        }
        if s <= 0.0 {
            return (a * x).exp();
        }
        let sd = (2.0 * s).sqrt();
        (a * a * s).exp() * ((a * x).exp() * normal_cdf((x + 2.0 * a * s) / sd) + (-a * x).exp() * normal_cdf((-x + 2.0 * a * s) / sd))
    }

    /// `d/dx log P_s f(x)`.
    pub fn log_gradient(&self, s: f64, x: f64) -> f64 {
        let a = self.a;
        if !self.reflecting || s <= 0.0 {
            return a;
        }
        let sd = (2.0 * s).sqrt();
        let (u, w) = ((x + 2.0 * a * s) / sd, (-x + 2.0 * a * s) / sd);
        let (ep, em) = ((a * x).exp(), (-a * x).exp());
        let val = ep * normal_cdf(u) + em * normal_cdf(w);
        let der = a * ep * normal_cdf(u) + ep * normal_pdf(u) / sd - a * em * normal_cdf(w) - em * normal_pdf(w) / sd;
        der / val
    }
}

impl PathDrift for TiltDrift {
    fn beta(&self, t: f64, x: &Point) -> Vector {
        let g = self.log_gradient((self.horizon - t).max(0.0), x[0]);
        Vector::from_slice(&[std::f64::consts::SQRT_2 * g])
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct EntropyIdentity {
    /// `∫_0^T E_Q |beta_s|^2 ds`
    pub drift_energy: MeanSe,
    /// `2 E_P[F log F]` with `F = f(X_T) / P_T f(x)`
    pub twice_entropy: MeanSe,
    pub combined_se: f64,
}

/// Both sides of the Girsanov entropy identity for the endpoint density
/// `f = e^{a x}` on the line or the half-line.
pub fn entropy_identity_check(m: &ModelManifold, x: &Point, a: f64, cfg: &SimConfig) -> Result<EntropyIdentity> {
    let reflecting = match m.kind() {
        ManifoldKind::Euclidean if m.dim() == 1 => false,
        ManifoldKind::HalfSpace if m.dim() == 1 => true,
        _ => return invalid("entropy identity is available on the line and the half-line"),
    };
    if !m.drift().is_zero() || m.psi().as_constant() != Some(1.0) {
        return invalid("entropy identity needs Z = 0 and psi = 1");
    }
    if !a.is_finite() {
        return invalid("tilt must be finite");
    }
    m.check_point(x)?;
    let tilt = TiltDrift { a, horizon: cfg.t, reflecting };
    let norm = tilt.semigroup(cfg.t, x[0]);
    let law = crate::diffusion::InitialLaw::Dirac(*x);
    let p = crate::diffusion::simulate(
        m,
        &law,
        &cfg.with_seed(derive_seed(cfg.seed, tags::ENSEMBLE_A)),
        &Record::Endpoint,
    )?;
    let flogf: Vec<f64> = p
        .paths
        .iter()
        .map(|q| {
            let f = (a * q.end()[0]).exp() / norm;
            if f > 0.0 {
                2.0 * f * f.ln()
            } else {
                0.0
            }
        })
        .collect();
    let q = crate::diffusion::simulate_with_drift(
        m,
        &law,
        &cfg.with_seed(derive_seed(cfg.seed, tags::ENSEMBLE_B)),
        &Record::Endpoint,
        Some(&tilt),
    )?;
    let energy: Vec<f64> = q.paths.iter().map(|p| p.drift_energy).collect();
    let (e, h) = (mean_se(&energy), mean_se(&flogf));
    Ok(EntropyIdentity { drift_energy: e, twice_entropy: h, combined_se: (e.se * e.se + h.se * h.se).sqrt() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::{simulate, InitialLaw};
    use crate::geometry::DriftField;

    fn p(c: &[f64]) -> Point {
        Vector::from_slice(c)
    }

    #[test]
    fn identical_starts_stay_together() {
        for m in [
            ModelManifold::new(ManifoldKind::Sphere { radius: 1.0 }, 2).unwrap(),
            ModelManifold::new(ManifoldKind::Ball { radius: 1.0 }, 2).unwrap(),
        ] {
            let x = m.base_point();
            let ens = simulate_coupled(&m, &x, &x, &SimConfig::new(0.5, 100, 20, 1), &Record::Full, None).unwrap();
            for pair in &ens.pairs {
                assert_eq!(pair.path_x.coords(), pair.path_y.coords());
                assert!(pair.distance_profile.iter().all(|d| *d == 0.0));
            }
        }
    }

    #[test]
    fn euclidean_coupling_is_a_translation() {
        let m = ModelManifold::new(ManifoldKind::Euclidean, 2).unwrap();
        let (x, y) = (p(&[0.0, 0.0]), p(&[0.6, 0.8]));
        let ens = simulate_coupled(&m, &x, &y, &SimConfig::new(1.0, 100, 20, 2), &Record::Full, None).unwrap();
        for pair in &ens.pairs {
            assert!(pair.distance_profile.iter().all(|d| (d - 1.0).abs() < 1e-12));
        }
        let rep = contraction_report(&ens, 0.0, None).unwrap();
        assert!((rep.max_ratio - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ou_distance_decays_deterministically() {
        let m = ModelManifold::new(ManifoldKind::Euclidean, 2)
            .unwrap()
            .with_drift(DriftField::RadialLinear { rate: 1.0 })
            .unwrap();
        let (x, y) = (p(&[0.0, 0.0]), p(&[1.0, 0.0]));
        let cfg = SimConfig::new(1.0, 1000, 10, 3);
        let ens = simulate_coupled(&m, &x, &y, &cfg, &Record::Endpoint, None).unwrap();
        for pair in &ens.pairs {
            for (i, d) in pair.distance_profile.iter().enumerate() {
                let want = (-cfg.time(i)).exp();
                assert!((d - want).abs() / want <= 10.0 * cfg.dt());
            }
        }
    }

    #[test]
    fn marginals_replay_exactly() {
        let m = ModelManifold::new(ManifoldKind::SphericalCap { radius: 1.0, angle: 1.2 }, 2).unwrap();
        let x = m.base_point();
        let y = m.exp_map(&x, &p(&[0.5, 0.0, 0.0]));
        let cfg = SimConfig::new(0.3, 60, 10, 4);
        let ens = simulate_coupled(&m, &x, &y, &cfg, &Record::Full, None).unwrap();
        let alone = simulate(&m, &InitialLaw::Dirac(x), &cfg, &Record::Full).unwrap();
        for (pair, path) in ens.pairs.iter().zip(&alone.paths) {
            assert_eq!(pair.resamples, 0);
            assert_eq!(pair.path_x.coords(), path.coords());
            assert_eq!(pair.path_x.local_time, path.local_time);
        }
        for pair in &ens.pairs {
            for (i, d) in pair.distance_profile.iter().enumerate() {
                let want = m.distance_unchecked(&pair.path_x.point(i), &pair.path_y.point(i));
                assert!((d - want).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn hemisphere_pathwise_contraction() {
        let m = ModelManifold::new(ManifoldKind::SphericalCap { radius: 1.0, angle: std::f64::consts::FRAC_PI_2 }, 2).unwrap();
        let k = m.curvature_constants().k;
        let x = m.base_point();
        let y = m.exp_map(&x, &p(&[0.8, 0.0, 0.0]));
        let mut excess = Vec::new();
        for n in [500usize, 1000, 2000] {
            let ens = simulate_coupled(&m, &x, &y, &SimConfig::new(0.5, n, 50, 5), &Record::Endpoint, None).unwrap();
            let rep = contraction_report(&ens, k, None).unwrap();
            excess.push(rep.max_ratio - 1.0);
            assert!(rep.max_ratio <= 1.0 + 5.0 * rep.dt.sqrt(), "{rep:?}");
        }
        assert!(excess[2] <= excess[0].max(1e-12) + 1e-9, "{excess:?}");
    }

    #[test]
    fn entropy_identity_tilt_on_the_line() {
        let m = ModelManifold::new(ManifoldKind::Euclidean, 1).unwrap();
        let r = entropy_identity_check(&m, &p(&[0.0]), 0.0, &SimConfig::new(0.5, 10, 100, 1)).unwrap();
        assert_eq!(r.drift_energy.mean, 0.0);
        assert_eq!(r.twice_entropy.mean, 0.0);
        let a = 0.7;
        let r = entropy_identity_check(&m, &p(&[0.2]), a, &SimConfig::new(0.5, 50, 50_000, 2)).unwrap();
        assert!((r.drift_energy.mean - 2.0 * a * a * 0.5).abs() < 1e-9);
        assert!((r.twice_entropy.mean - r.drift_energy.mean).abs() <= 3.0 * r.combined_se, "{r:?}");
    }

    #[test]
    fn entropy_identity_on_the_half_line() {
        let m = ModelManifold::new(ManifoldKind::HalfSpace, 1).unwrap();
        let r = entropy_identity_check(&m, &p(&[0.3]), -1.0, &SimConfig::new(0.5, 500, 40_000, 3)).unwrap();
        assert!((r.twice_entropy.mean - r.drift_energy.mean).abs() <= 3.0 * r.combined_se, "{r:?}");
        assert!(r.drift_energy.mean > 0.0);
    }

    #[test]
    fn tilt_semigroup_matches_quadrature() {
        let t = TiltDrift { a: -1.3, horizon: 1.0, reflecting: true };
        let (s, x) = (0.4, 0.25);
        let g = |z: f64| (-(z * z) / (4.0 * s)).exp() / (4.0 * std::f64::consts::PI * s).sqrt();
        let q = crate::numerics::adaptive_simpson(|y| (t.a * y).exp() * (g(y - x) + g(y + x)), 0.0, 30.0, 1e-13);
        assert!((t.semigroup(s, x) - q).abs() < 1e-9);
        let h = 1e-5;
        let fd = (t.semigroup(s, x + h).ln() - t.semigroup(s, x - h).ln()) / (2.0 * h);
        assert!((t.log_gradient(s, x) - fd).abs() < 1e-7);
    }
}
