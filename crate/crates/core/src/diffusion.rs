//! Geodesic Euler-Maruyama discretisation of the reflecting diffusion with
//! generator `psi^2 (Δ + Z)`, boundary local time, and Monte Carlo estimators.

use crate::error::{invalid, precondition, Error, Result};
use crate::field::ScalarField;
use crate::geometry::{reflect, step_bound, ModelManifold};
use crate::linalg::{Frame, Point, Vector};
use crate::numerics::{mean_se, weighted_least_squares, MeanSe};
use crate::par_map;
use crate::rng::{derive_seed, NoiseStream};
use serde::{Deserialize, Serialize};

/// Time horizon, grid and Monte Carlo sizes of a simulation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    #[serde(rename = "T")]
    pub t: f64,
    pub n_steps: usize,
    pub n_paths: usize,
    pub seed: u64,
    #[serde(default)]
    pub hitting_radius: Option<f64>,
}

impl SimConfig {
    pub fn new(t: f64, n_steps: usize, n_paths: usize, seed: u64) -> Self {
        Self { t, n_steps, n_paths, seed, hitting_radius: None }
    }

    pub fn with_hitting_radius(mut self, r: f64) -> Self {
        self.hitting_radius = Some(r);
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t.is_finite() && self.t > 0.0) {
            return invalid(format!("T must be positive, got {}", self.t));
        }
        if self.n_steps == 0 || self.n_paths == 0 {
            return invalid("n_steps and n_paths must be at least 1");
        }
        if let Some(r) = self.hitting_radius {
            if !(r > 0.0) {
                return invalid(format!("hitting radius must be positive, got {r}"));
            }
        }
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        self.t / self.n_steps as f64
    }

    /// Time of grid index `i`.
    pub fn time(&self, i: usize) -> f64 {
        if i == self.n_steps {
            self.t
        } else {
            i as f64 * self.dt()
        }
    }

    /// Grid index closest to time `t`.
    pub fn step_index(&self, t: f64) -> usize {
        ((t / self.dt()).round() as usize).min(self.n_steps)
    }
}

/// Position, horizontal frame and cumulative local time.
#[derive(Clone, Copy, Debug)]
pub struct State {
    pub x: Point,
    pub frame: Frame,
    pub l: f64,
}

impl State {
    pub fn new(m: &ModelManifold, x: Point) -> Result<Self> {
        m.check_point(&x)?;
        Ok(Self { x, frame: m.tangent_basis(&x), l: 0.0 })
    }
}

/// An additional tangent drift `b(t, x)` entering as `sqrt(2) b dt`.
pub trait PathDrift: Sync {
    fn beta(&self, t: f64, x: &Point) -> Vector;
}

/// Precomputed per-manifold step data.
pub(crate) struct Stepper<'a> {
    pub m: &'a ModelManifold,
    pub dt: f64,
    sqrt2dt: f64,
    psi_const: Option<f64>,
    bound: f64,
}

impl<'a> Stepper<'a> {
    pub fn new(m: &'a ModelManifold, dt: f64) -> Self {
        Self { m, dt, sqrt2dt: (2.0 * dt).sqrt(), psi_const: m.psi().as_constant(), bound: step_bound(m) }
    }

    pub fn psi(&self, x: &Point) -> f64 {
        self.psi_const.unwrap_or_else(|| self.m.psi().value(self.m, x))
    }

    /// Advances `x` with the tangent noise direction `noise` (an isometric
    /// image of a standard normal vector). Returns the new point, the
    /// local-time increment and whether the candidate left `M̄`.
    pub fn advance(&self, x: &Point, noise: &Vector, extra: Option<&Vector>) -> Result<(Point, f64, bool)> {
        let psi = self.psi(x);
        let mut v = *noise * (self.sqrt2dt * psi);
        v.axpy(self.dt * psi * psi, &self.m.drift_at(x));
        if let Some(b) = extra {
            v.axpy(std::f64::consts::SQRT_2 * self.dt, b);
        }
        let len = self.m.norm(x, &v);
        if !(len <= self.bound) {
            return Err(Error::StepTooLarge { length: len, bound: self.bound });
        }
        let cand = self.m.exp_map(x, &v);
        if !self.m.has_boundary() {
            return Ok((cand, 0.0, false));
        }
        let (y, dl) = reflect(self.m, &cand)?;
        Ok((y, dl, dl > 0.0))
    }

    /// Transports the frame from `x` to `y` and re-orthonormalises it.
    pub fn transport_frame(&self, x: &Point, y: &Point, frame: &mut Frame) -> Result<()> {
        if self.m.ambient_dim() == self.m.dim() {
            return Ok(());
        }
        for e in frame.vectors_mut() {
            *e = self.m.parallel_transport(x, y, e)?;
        }
        self.m.orthonormalize(y, frame);
        Ok(())
    }

    pub fn step(&self, state: &mut State, xi: &[f64], extra: Option<&Vector>) -> Result<(f64, bool)> {
        let d = self.m.dim();
        let noise = state.frame.combine(&xi[..d]);
        let (y, dl, left) = self.advance(&state.x, &noise, extra)?;
        self.transport_frame(&state.x, &y, &mut state.frame)?;
        state.x = y;
        state.l += dl;
        Ok((dl, left))
    }
}

/// One step of the scheme: tangent increment
/// `v = sqrt(2 dt) psi Φξ + dt psi^2 Z`, geodesic move, reflection, frame
/// transport. Returns the local-time increment.
pub fn step(m: &ModelManifold, state: &mut State, dt: f64, xi: &[f64]) -> Result<f64> {
    if !(dt > 0.0) {
        return invalid(format!("dt must be positive, got {dt}"));
    }
    if xi.len() < m.dim() {
        return invalid(format!("need {} normals, got {}", m.dim(), xi.len()));
    }
    Stepper::new(m, dt).step(state, xi, None).map(|(dl, _)| dl)
}

/// Which grid indices of a path are stored.
#[derive(Clone, Debug, PartialEq)]
pub enum Record {
    Full,
    Endpoint,
    /// Sorted grid indices (0 and `n_steps` are always stored).
    Steps(Vec<usize>),
}

impl Record {
    fn indices(&self, n_steps: usize) -> Vec<usize> {
        match self {
            Record::Full => (0..=n_steps).collect(),
            Record::Endpoint => vec![0, n_steps],
            Record::Steps(s) => {
                let mut v: Vec<usize> = s.iter().copied().filter(|&i| i <= n_steps).collect();
                v.push(0);
                v.push(n_steps);
                v.sort_unstable();
                v.dedup();
                v
            }
        }
    }
}

/// Initial law of an ensemble.
#[derive(Clone, Debug)]
pub enum InitialLaw {
    Dirac(Point),
    /// Finitely supported law `sum w_i δ_{x_i}`.
    Atoms { points: Vec<Point>, weights: Vec<f64> },
}

impl InitialLaw {
    pub fn validate(&self, m: &ModelManifold) -> Result<()> {
        match self {
            InitialLaw::Dirac(x) => m.check_point(x),
            InitialLaw::Atoms { points, weights } => {
                if points.is_empty() || points.len() != weights.len() {
                    return invalid("atomic law needs matching nonempty points and weights");
                }
                for p in points {
                    m.check_point(p)?;
                }
                if weights.iter().any(|w| !(*w >= 0.0)) {
                    return invalid("atom weights must be nonnegative");
                }
                let s: f64 = weights.iter().sum();
                if !(s > 0.0) {
                    return invalid("atom weights sum to zero");
                }
                Ok(())
            }
        }
    }

    /// Draws the atom index for a path from the uniforms of block 0.
    fn draw(&self, stream: &mut NoiseStream) -> (Point, Option<usize>) {
        match self {
            InitialLaw::Dirac(x) => (*x, None),
            InitialLaw::Atoms { points, weights } => {
                let u = stream.uniforms(0)[0];
                let total: f64 = weights.iter().sum();
                let mut acc = 0.0;
                for (i, w) in weights.iter().enumerate() {
                    acc += w / total;
                    if u <= acc {
                        return (points[i], Some(i));
                    }
                }
                let last = weights.iter().rposition(|w| *w > 0.0).unwrap_or(points.len() - 1);
                (points[last], Some(last))
            }
        }
    }
}

/// First grid time with `rho(x_0, X_t) >= R`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Hit {
    pub step: usize,
    pub point: Point,
    pub local_time: f64,
}

/// A discretised path stored at the ensemble's recorded indices.
#[derive(Clone, Debug, PartialEq)]
pub struct PathSample {
    ambient: usize,
    coords: Vec<f64>,
    pub local_time: Vec<f64>,
    pub start_atom: Option<usize>,
    pub hit: Option<Hit>,
    /// Steps whose candidate left `M̄`.
    pub reflections: usize,
    /// Worst constraint residual seen along the path.
    pub max_residual: f64,
    /// Worst frame orthonormality residual seen along the path.
    pub max_frame_residual: f64,
    /// `sum |beta|^2 dt` accumulated under an extra drift.
    pub drift_energy: f64,
}

impl PathSample {
    pub fn len(&self) -> usize {
        self.local_time.len()
    }

    pub fn is_empty(&self) -> bool {
        self.local_time.is_empty()
    }

    pub fn point(&self, i: usize) -> Point {
        Vector::from_slice(&self.coords[i * self.ambient..(i + 1) * self.ambient])
    }

    pub fn start(&self) -> Point {
        self.point(0)
    }

    pub fn end(&self) -> Point {
        self.point(self.len() - 1)
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient
    }

    pub(crate) fn from_parts(ambient: usize, coords: Vec<f64>, local_time: Vec<f64>) -> Self {
        Self {
            ambient,
            coords,
            local_time,
            start_atom: None,
            hit: None,
            reflections: 0,
            max_residual: 0.0,
            max_frame_residual: 0.0,
            drift_energy: 0.0,
        }
    }

    pub(crate) fn push_point(&mut self, x: &Point, l: f64) {
        self.coords.extend_from_slice(x.as_slice());
        self.local_time.push(l);
    }

    /// Position at `t ∧ τ_R` for recorded index `i` with grid step `step`.
    pub fn stopped_point(&self, i: usize, step: usize) -> Point {
        match self.hit {
            Some(h) if h.step <= step => h.point,
            _ => self.point(i),
        }
    }

    pub fn stopped_local_time(&self, i: usize, step: usize) -> f64 {
        match self.hit {
            Some(h) if h.step <= step => h.local_time,
            _ => self.local_time[i],
        }
    }
}

/// Independent paths on a shared time grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Ensemble {
    pub cfg: SimConfig,
    pub ambient: usize,
    /// Grid indices stored in every path.
    pub steps: Vec<usize>,
    pub paths: Vec<PathSample>,
}

impl Ensemble {
    pub fn times(&self) -> Vec<f64> {
        self.steps.iter().map(|&i| self.cfg.time(i)).collect()
    }

    /// Position of `step` in the recorded list.
    pub fn slot(&self, step: usize) -> Option<usize> {
        self.steps.binary_search(&step).ok()
    }

    pub fn endpoints(&self) -> Vec<Point> {
        self.paths.iter().map(|p| p.end()).collect()
    }

    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    pub fn max_residual(&self) -> f64 {
        self.paths.iter().map(|p| p.max_residual).fold(0.0, f64::max)
    }
}

/// Simulates one path with index `index`.
pub(crate) fn simulate_path(
    m: &ModelManifold,
    law: &InitialLaw,
    cfg: &SimConfig,
    steps: &[usize],
    index: u64,
    extra: Option<&dyn PathDrift>,
) -> Result<PathSample> {
    let stepper = Stepper::new(m, cfg.dt());
    let mut stream = NoiseStream::new(cfg.seed, index);
    let (x0, atom) = law.draw(&mut stream);
    let mut state = State::new(m, x0)?;
    let amb = m.ambient_dim();
    let mut path = PathSample::from_parts(amb, Vec::with_capacity(steps.len() * amb), Vec::with_capacity(steps.len()));
    path.start_atom = atom;
    let mut next = 0;
    let push = |path: &mut PathSample, i: usize, s: &State, next: &mut usize| {
        if *next < steps.len() && steps[*next] == i {
            path.coords.extend_from_slice(s.x.as_slice());
            path.local_time.push(s.l);
            *next += 1;
        }
    };
    push(&mut path, 0, &state, &mut next);
    let track_frame = amb != m.dim();
    for k in 1..=cfg.n_steps {
        let xi = stream.normals(k as u64);
        let b = extra.map(|e| e.beta(cfg.time(k - 1), &state.x));
        if let Some(b) = &b {
            path.drift_energy += m.inner(&state.x, b, b) * cfg.dt();
        }
        let (_, left) = stepper.step(&mut state, &xi, b.as_ref())?;
        if left {
            path.reflections += 1;
        }
        path.max_residual = path.max_residual.max(m.constraint_residual(&state.x));
        if track_frame {
            path.max_frame_residual = path.max_frame_residual.max(m.frame_residual(&state.x, &state.frame));
        }
        if let (Some(r), None) = (cfg.hitting_radius, path.hit) {
            if m.distance_unchecked(&x0, &state.x) >= r {
                path.hit = Some(Hit { step: k, point: state.x, local_time: state.l });
            }
        }
        push(&mut path, k, &state, &mut next);
    }
    Ok(path)
}

/// Simulates `cfg.n_paths` independent paths from `law`. Path `i` uses noise
/// stream `(cfg.seed, i)`, so the ensemble is reproducible in any order.
pub fn simulate(m: &ModelManifold, law: &InitialLaw, cfg: &SimConfig, record: &Record) -> Result<Ensemble> {
    simulate_with_drift(m, law, cfg, record, None)
}

pub fn simulate_with_drift(
    m: &ModelManifold,
    law: &InitialLaw,
    cfg: &SimConfig,
    record: &Record,
    extra: Option<&dyn PathDrift>,
) -> Result<Ensemble> {
    cfg.validate()?;
    law.validate(m)?;
    let steps = record.indices(cfg.n_steps);
    let idx: Vec<u64> = (0..cfg.n_paths as u64).collect();
    let paths = par_map(&idx, |&i| simulate_path(m, law, cfg, &steps, i, extra));
    let paths = paths.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(Ensemble { cfg: *cfg, ambient: m.ambient_dim(), steps, paths })
}

/// Monte Carlo estimate of `P_T f(x)`.
pub fn semigroup(m: &ModelManifold, x: &Point, f: &ScalarField, cfg: &SimConfig) -> Result<MeanSe> {
    f.validate_for(m)?;
    let ens = simulate(m, &InitialLaw::Dirac(*x), cfg, &Record::Endpoint)?;
    let vals: Vec<f64> = ens.paths.iter().map(|p| f.value(m, &p.end())).collect();
    Ok(mean_se(&vals))
}

/// `|grad P_T f|(x)` by central differences with common random numbers.
#[derive(Clone, Debug, Serialize)]
pub struct GradientEstimate {
    pub norm: MeanSe,
    /// Per-direction difference quotients in an orthonormal basis of `T_x M`.
    pub components: Vec<MeanSe>,
    pub h: f64,
}

pub fn gradient_semigroup(
    m: &ModelManifold,
    x: &Point,
    f: &ScalarField,
    cfg: &SimConfig,
    h: f64,
) -> Result<GradientEstimate> {
    f.validate_for(m)?;
    m.check_point(x)?;
    if !(h > 0.0) {
        return invalid("difference step must be positive");
    }
    let frame = m.tangent_basis(x);
    let mut components = Vec::with_capacity(m.dim());
    for (i, e) in frame.vectors().iter().enumerate() {
        let xp = m.exp_map(x, &(*e * h));
        let xm = m.exp_map(x, &(*e * -h));
        if !m.contains(&xp) || !m.contains(&xm) {
            return precondition(format!("perturbation of size {h} leaves the domain"));
        }
        let c = cfg.with_seed(derive_seed(cfg.seed, 100 + i as u64));
        let ep = simulate(m, &InitialLaw::Dirac(xp), &c, &Record::Endpoint)?;
        let em = simulate(m, &InitialLaw::Dirac(xm), &c, &Record::Endpoint)?;
        let q: Vec<f64> = ep
            .paths
            .iter()
            .zip(&em.paths)
            .map(|(a, b)| (f.value(m, &a.end()) - f.value(m, &b.end())) / (2.0 * h))
            .collect();
        components.push(mean_se(&q));
    }
    let norm = components.iter().map(|c| c.mean * c.mean).sum::<f64>().sqrt();
    let se = if norm > 0.0 {
        components.iter().map(|c| (c.mean / norm * c.se).powi(2)).sum::<f64>().sqrt()
    } else {
        components.iter().map(|c| c.se * c.se).sum::<f64>().sqrt()
    };
    Ok(GradientEstimate { norm: MeanSe { mean: norm, se }, components, h })
}

/// Log-linear fit `log P ~ log c1 - c2 / t`.
#[derive(Clone, Debug, Serialize)]
pub struct TailFit {
    /// `c2`, the slope of `log P` against `-1/t`.
    pub c2: f64,
    /// Slope of `log P` against `1/t` (equals `-c2`).
    pub slope_inv_t: f64,
    pub log_c1: f64,
    pub r_squared: f64,
    /// Times used in the fit.
    pub t_used: Vec<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct HittingTail {
    pub t: Vec<f64>,
    pub p: Vec<MeanSe>,
    pub fit: Option<TailFit>,
}

/// Frequencies of `τ_R <= t`, with a tail fit over `P ∈ (1e-4, 0.5)`.
pub fn hitting_tail(m: &ModelManifold, x0: &Point, r: f64, t_values: &[f64], cfg: &SimConfig) -> Result<HittingTail> {
    if !(r > 0.0) {
        return invalid("hitting radius must be positive");
    }
    let tmax = t_values.iter().copied().fold(0.0, f64::max);
    if !(tmax > 0.0) || t_values.iter().any(|t| *t < 0.0) {
        return invalid("hitting times must be nonnegative with a positive maximum");
    }
    let dt = cfg.dt();
    let n_steps = ((tmax / dt).round() as usize).max(1);
    let c = SimConfig { t: n_steps as f64 * dt, n_steps, hitting_radius: Some(r), ..*cfg };
    let ens = simulate(m, &InitialLaw::Dirac(*x0), &c, &Record::Endpoint)?;
    let n = ens.len() as f64;
    let mut p = Vec::with_capacity(t_values.len());
    for &t in t_values {
        let k = c.step_index(t);
        let hits = ens.paths.iter().filter(|q| q.hit.is_some_and(|h| h.step <= k)).count() as f64;
        let ph = hits / n;
        p.push(MeanSe { mean: ph, se: (ph * (1.0 - ph) / n).sqrt() });
    }
    let fit = tail_fit(t_values, &p);
    Ok(HittingTail { t: t_values.to_vec(), p, fit })
}

pub(crate) fn tail_fit(t: &[f64], p: &[MeanSe]) -> Option<TailFit> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut used = Vec::new();
    for (t, p) in t.iter().zip(p) {
        if p.mean > 1e-4 && p.mean < 0.5 && *t > 0.0 {
            xs.push(vec![1.0, -1.0 / t]);
            ys.push(p.mean.ln());
            used.push(*t);
        }
    }
    if ys.len() < 3 {
        return None;
    }
    let w = vec![1.0; ys.len()];
    let fit = weighted_least_squares(&xs, &ys, &w)?;
    Some(TailFit { c2: fit.coef[1], slope_inv_t: -fit.coef[1], log_c1: fit.coef[0], r_squared: fit.r_squared, t_used: used })
}

#[derive(Clone, Debug, Serialize)]
pub struct LocalTimeProfile {
    pub t: Vec<f64>,
    pub mean: Vec<MeanSe>,
    /// `2 sqrt(t / π)`.
    pub target: Vec<f64>,
    /// Least-squares `C` in `|E l - 2 sqrt(t/π)| ≈ C t`.
    pub c_fit: f64,
    /// Smallest `C` with `|E l - 2 sqrt(t/π)| <= C t` at every `t`.
    pub c_max: f64,
}

/// `E l_{t ∧ τ_R}` for paths started on the boundary.
pub fn local_time_profile(
    m: &ModelManifold,
    x0: &Point,
    r: f64,
    t_values: &[f64],
    cfg: &SimConfig,
) -> Result<LocalTimeProfile> {
    m.check_point(x0)?;
    m.require_on_boundary(x0)?;
    let tmax = t_values.iter().copied().fold(0.0, f64::max);
    if !(tmax > 0.0) || t_values.iter().any(|t| *t < 0.0) {
        return invalid("times must be nonnegative with a positive maximum");
    }
    let dt = cfg.dt();
    let n_steps = ((tmax / dt).round() as usize).max(1);
    let c = SimConfig { t: n_steps as f64 * dt, n_steps, hitting_radius: Some(r), ..*cfg };
    let wanted: Vec<usize> = t_values.iter().map(|&t| c.step_index(t)).collect();
    let ens = simulate(m, &InitialLaw::Dirac(*x0), &c, &Record::Steps(wanted.clone()))?;
    let mut mean = Vec::new();
    let mut target = Vec::new();
    for (&t, &k) in t_values.iter().zip(&wanted) {
        let slot = ens.slot(k).expect("recorded");
        let vals: Vec<f64> = ens.paths.iter().map(|p| p.stopped_local_time(slot, k)).collect();
        mean.push(if k == 0 { MeanSe::exact(0.0) } else { mean_se(&vals) });
        target.push(2.0 * (t / std::f64::consts::PI).sqrt());
    }
    let (mut num, mut den, mut c_max) = (0.0, 0.0, 0.0f64);
    for ((t, m), g) in t_values.iter().zip(&mean).zip(&target) {
        if *t > 0.0 {
            let dev = (m.mean - g).abs();
            num += t * dev;
            den += t * t;
            c_max = c_max.max(dev / t);
        }
    }
    let c_fit = if den > 0.0 { num / den } else { 0.0 };
    Ok(LocalTimeProfile { t: t_values.to_vec(), mean, target, c_fit, c_max })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{DriftField, ManifoldKind};
    use crate::numerics::normal_cdf;

    fn halfline() -> ModelManifold {
        ModelManifold::new(ManifoldKind::HalfSpace, 1).unwrap()
    }

    fn p(c: &[f64]) -> Point {
        Vector::from_slice(c)
    }

    #[test]
    fn mirror_step_on_the_half_line() {
        let m = halfline();
        let mut s = State::new(&m, p(&[0.5])).unwrap();
        let dt: f64 = 0.01;
        let xi = [-0.6 / (2.0 * dt).sqrt()];
        let dl = step(&m, &mut s, dt, &xi).unwrap();
        assert!((s.x[0] - 0.1).abs() < 1e-12);
        assert!((dl - 0.2).abs() < 1e-12);
        assert!((s.l - 0.2).abs() < 1e-12);
    }

    #[test]
    fn interior_step_is_a_geodesic_move() {
        let m = ModelManifold::new(ManifoldKind::Sphere { radius: 1.0 }, 2).unwrap();
        let x = m.base_point();
        let mut s = State::new(&m, x).unwrap();
        let dt: f64 = 1e-3;
        let xi = [0.3, -1.1];
        let v = s.frame.combine(&xi) * (2.0 * dt).sqrt();
        let dl = step(&m, &mut s, dt, &xi).unwrap();
        assert_eq!(dl, 0.0);
        assert!(s.x.dist(&m.exp_map(&x, &v)) < 1e-15);
        assert!(m.frame_residual(&s.x, &s.frame) < 1e-12);
    }

    #[test]
    fn oversized_step_is_rejected() {
        let m = ModelManifold::new(ManifoldKind::Ball { radius: 1.0 }, 2).unwrap();
        let mut s = State::new(&m, p(&[0.0, 0.0])).unwrap();
        assert!(matches!(step(&m, &mut s, 1.0, &[3.0, 0.0]), Err(Error::StepTooLarge { .. })));
    }

    #[test]
    fn single_step_euclidean_endpoint() {
        let m = ModelManifold::new(ManifoldKind::Euclidean, 2).unwrap();
        let x0 = p(&[1.0, -2.0]);
        let cfg = SimConfig::new(0.7, 1, 5, 42);
        let ens = simulate(&m, &InitialLaw::Dirac(x0), &cfg, &Record::Full).unwrap();
        for (i, path) in ens.paths.iter().enumerate() {
            let xi = NoiseStream::new(42, i as u64).normals(1);
            let want = x0 + p(&xi[..2]) * (2.0f64 * 0.7).sqrt();
            assert!(path.end().dist(&want) < 1e-14);
        }
    }

    #[test]
    fn simulation_is_deterministic() {
        let m = ModelManifold::new(ManifoldKind::SphericalCap { radius: 1.0, angle: 1.0 }, 2).unwrap();
        let cfg = SimConfig::new(0.3, 30, 50, 7);
        let law = InitialLaw::Dirac(m.base_point());
        let a = simulate(&m, &law, &cfg, &Record::Full).unwrap();
        let b = simulate(&m, &law, &cfg, &Record::Full).unwrap();
        assert_eq!(a, b);
        let c = simulate(&m, &law, &cfg.with_seed(8), &Record::Full).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn paths_stay_in_domain() {
        let cases = [
            ModelManifold::new(ManifoldKind::Sphere { radius: 1.0 }, 2).unwrap(),
            ModelManifold::new(ManifoldKind::SphericalCap { radius: 1.0, angle: 2.4 }, 2).unwrap(),
            ModelManifold::new(ManifoldKind::Annulus { inner: 1.0, outer: 2.0 }, 2).unwrap(),
            ModelManifold::new(ManifoldKind::Ball { radius: 1.0 }, 3).unwrap(),
            ModelManifold::new(ManifoldKind::Hyperbolic { radius: 1.0 }, 2).unwrap(),
        ];
        for m in cases {
            let cfg = SimConfig::new(0.5, 200, 40, 3);
            let ens = simulate(&m, &InitialLaw::Dirac(m.base_point()), &cfg, &Record::Full).unwrap();
            assert!(ens.max_residual() <= 1e-8, "{}", m.kind().name());
            for path in &ens.paths {
                assert!(path.max_frame_residual <= 1e-8);
                assert_eq!(path.local_time[0], 0.0);
                for i in 0..path.len() {
                    assert!(m.contains(&path.point(i)), "{}", m.kind().name());
                    if i > 0 {
                        assert!(path.local_time[i] >= path.local_time[i - 1]);
                    }
                }
                if !m.has_boundary() {
                    assert_eq!(*path.local_time.last().unwrap(), 0.0);
                }
            }
        }
    }

    #[test]
    fn local_time_inactive_away_from_boundary() {
        let m = ModelManifold::new(ManifoldKind::Ball { radius: 1.0 }, 2).unwrap();
        let cfg = SimConfig::new(0.02, 100, 200, 11);
        let ens = simulate(&m, &InitialLaw::Dirac(p(&[0.0, 0.0])), &cfg, &Record::Full).unwrap();
        let guard = 2.0 * (2.0 * cfg.dt()).sqrt();
        for path in &ens.paths {
            let closest = (0..path.len()).map(|i| 1.0 - path.point(i).norm()).fold(f64::INFINITY, f64::min);
            if closest > guard {
                assert_eq!(*path.local_time.last().unwrap(), 0.0);
            }
        }
    }

    fn ks_folded_normal(ens: &Ensemble, t: f64) -> f64 {
        let mut xs: Vec<f64> = ens.paths.iter().map(|p| p.end()[0]).collect();
        xs.sort_by(f64::total_cmp);
        let n = xs.len() as f64;
        let s = (2.0 * t).sqrt();
        let mut ks = 0.0f64;
        for (i, x) in xs.iter().enumerate() {
            let cdf = 2.0 * normal_cdf(x / s) - 1.0;
            ks = ks.max((cdf - i as f64 / n).abs()).max((cdf - (i + 1) as f64 / n).abs());
        }
        ks
    }

    #[test]
    fn half_line_marginal_is_folded_normal() {
        let m = halfline();
        let cfg = SimConfig::new(0.1, 20, 100_000, 5);
        let ens = simulate(&m, &InitialLaw::Dirac(p(&[0.0])), &cfg, &Record::Endpoint).unwrap();
        let ks = ks_folded_normal(&ens, 0.1);
        assert!(ks <= 0.01, "KS {ks}");
    }

    #[test]
    fn ou_variance() {
        let m = ModelManifold::new(ManifoldKind::Euclidean, 1)
            .unwrap()
            .with_drift(DriftField::RadialLinear { rate: 1.0 })
            .unwrap();
        let cfg = SimConfig::new(1.0, 1000, 100_000, 9);
        let ens = simulate(&m, &InitialLaw::Dirac(p(&[0.0])), &cfg, &Record::Endpoint).unwrap();
        let x2: Vec<f64> = ens.paths.iter().map(|q| q.end()[0].powi(2)).collect();
        let v = mean_se(&x2);
        let want = 1.0 - (-2.0f64).exp();
        assert!((v.mean - want).abs() <= 3.0 * v.se, "{v:?} vs {want}");
    }

    #[test]
    fn weak_order_on_ou_mean() {
        let m = ModelManifold::new(ManifoldKind::Euclidean, 1)
            .unwrap()
            .with_drift(DriftField::RadialLinear { rate: 1.0 })
            .unwrap();
        let f = ScalarField::coord(0);
        let x = p(&[1.0]);
        let exact = (-1.0f64).exp();
        let e1 = semigroup(&m, &x, &f, &SimConfig::new(1.0, 10, 2000, 1)).unwrap().mean - exact;
        let e2 = semigroup(&m, &x, &f, &SimConfig::new(1.0, 20, 2000, 1)).unwrap().mean - exact;
        let ratio = e1 / e2;
        assert!((ratio - 2.0).abs() <= 0.6, "{e1} {e2}");
    }

    #[test]
    fn semigroup_examples() {
        let e = ModelManifold::new(ManifoldKind::Euclidean, 2).unwrap();
        let x = p(&[0.4, -1.0]);
        let cfg = SimConfig::new(0.5, 10, 20_000, 2);
        let one = semigroup(&e, &x, &ScalarField::constant(1.0), &cfg).unwrap();
        assert_eq!((one.mean, one.se), (1.0, 0.0));
        let lin = semigroup(&e, &x, &ScalarField::coord(0), &cfg).unwrap();
        assert!((lin.mean - 0.4).abs() <= 3.0 * lin.se);
        // reflected heat kernel on the half-line
        let h = halfline();
        let x = 0.3;
        let t = 0.4;
        let f = ScalarField::parse("exp(-x1)").unwrap();
        let est = semigroup(&h, &p(&[x]), &f, &SimConfig::new(t, 40, 100_000, 3)).unwrap();
        let kernel = |y: f64| {
            let g = |z: f64| (-(z * z) / (4.0 * t)).exp() / (4.0 * std::f64::consts::PI * t).sqrt();
            (-y).exp() * (g(y - x) + g(y + x))
        };
        let oracle = crate::numerics::adaptive_simpson(kernel, 0.0, 20.0, 1e-12);
        assert!((est.mean - oracle).abs() <= 3.0 * est.se, "{est:?} vs {oracle}");
    }

    #[test]
    fn gradient_semigroup_examples() {
        let e = ModelManifold::new(ManifoldKind::Euclidean, 2).unwrap();
        let x = p(&[0.1, 0.2]);
        let cfg = SimConfig::new(0.5, 10, 200, 4);
        let g = gradient_semigroup(&e, &x, &ScalarField::constant(3.0), &cfg, 1e-3).unwrap();
        assert_eq!(g.norm.mean, 0.0);
        let g = gradient_semigroup(&e, &x, &ScalarField::coord(0), &cfg, 1e-3).unwrap();
        assert!((g.norm.mean - 1.0).abs() < 1e-9);
        let ou = e.clone().with_drift(DriftField::RadialLinear { rate: 1.0 }).unwrap();
        let cfg = SimConfig::new(1.0, 1000, 200, 4);
        let g = gradient_semigroup(&ou, &x, &ScalarField::coord(0), &cfg, 1e-3).unwrap();
        // the Euler factor (1 - dt)^n
        let euler = (1.0f64 - 1e-3).powi(1000);
        assert!((g.norm.mean - euler).abs() < 1e-9);
        assert!((g.norm.mean - (-1.0f64).exp()).abs() < 1e-3);
        let ball = ModelManifold::new(ManifoldKind::Ball { radius: 1.0 }, 2).unwrap();
        assert!(gradient_semigroup(&ball, &p(&[0.9995, 0.0]), &ScalarField::coord(0), &cfg, 1e-3).is_err());
    }

    /// `P(sup_{s<=t} |sqrt(2) B_s| >= a)` by the alternating image series.
    fn two_sided_exit(a: f64, t: f64) -> f64 {
        let s = (2.0 * t).sqrt();
        let mut stay = 0.0;
        for k in -50i32..=50 {
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            stay += sign * (normal_cdf((2 * k + 1) as f64 * a / s) - normal_cdf((2 * k - 1) as f64 * a / s));
        }
        1.0 - stay
    }

    #[test]
    fn hitting_tail_matches_reflection_principle() {
        let m = halfline();
        let ts: Vec<f64> = (1..=10).map(|i| 0.02 * i as f64).collect();
        let cfg = SimConfig::new(0.2, 4000, 20_000, 1);
        let tail = hitting_tail(&m, &p(&[0.0]), 1.0, &ts, &cfg).unwrap();
        assert_eq!(tail.p[0].mean, 0.0);
        for (t, est) in ts.iter().zip(&tail.p) {
            let exact = two_sided_exit(1.0, *t);
            let se = (exact * (1.0 - exact) / 20_000.0).sqrt();
            // discrete monitoring misses a few crossings
            assert!(est.mean <= exact + 3.0 * se + 1e-4, "t={t}: {} vs {exact}", est.mean);
            assert!(est.mean >= 0.8 * exact - 3.0 * se, "t={t}: {} vs {exact}", est.mean);
        }
        let fit = tail.fit.unwrap();
        assert!(fit.c2 > 0.0 && fit.slope_inv_t < 0.0);
        assert!(fit.r_squared >= 0.95, "{}", fit.r_squared);
        let short = hitting_tail(&m, &p(&[0.0]), 1.0, &[1e-3], &cfg).unwrap();
        assert_eq!(short.p[0].mean, 0.0);
    }

    #[test]
    fn local_time_mean_on_the_half_line() {
        let m = halfline();
        let cfg = SimConfig::new(0.04, 40, 100_000, 6);
        let prof = local_time_profile(&m, &p(&[0.0]), 10.0, &[0.0, 0.04], &cfg).unwrap();
        assert_eq!(prof.mean[0].mean, 0.0);
        let (est, want) = (prof.mean[1], 2.0 * (0.04 / std::f64::consts::PI).sqrt());
        assert!((want - 0.22568).abs() < 1e-5);
        assert!((est.mean - want).abs() <= 3.0 * est.se, "{est:?} vs {want}");
        assert!(local_time_profile(&m, &p(&[0.5]), 1.0, &[0.04], &cfg).is_err());
    }

    #[test]
    fn atomic_initial_law_frequencies() {
        let m = ModelManifold::new(ManifoldKind::Euclidean, 1).unwrap();
        let law = InitialLaw::Atoms { points: vec![p(&[0.0]), p(&[5.0])], weights: vec![0.25, 0.75] };
        let ens = simulate(&m, &law, &SimConfig::new(0.1, 1, 20_000, 12), &Record::Endpoint).unwrap();
        let share = ens.paths.iter().filter(|q| q.start_atom == Some(1)).count() as f64 / 20_000.0;
        assert!((share - 0.75).abs() < 4.0 * (0.75f64 * 0.25 / 20_000.0).sqrt());
    }
}
