//! Short-time boundary asymptotics: the second fundamental form seen through
//! gradients and variances of the semigroup at a boundary point.

use super::InequalityReport;
use crate::diffusion::{simulate, InitialLaw, Record, SimConfig};
use crate::error::{invalid, precondition, Result};
use crate::field::ScalarField;
use crate::geometry::ModelManifold;
use crate::linalg::{Point, Vector};
use crate::numerics::{mean_se, weighted_least_squares, MeanSe};
use crate::rng::{derive_seed, tags};
use serde::Serialize;

/// `2 / sqrt(pi)`
pub const SFF_COEFFICIENT: f64 = std::f64::consts::FRAC_2_SQRT_PI;
/// `16 / (3 sqrt(pi))`
pub const VARIANCE_COEFFICIENT: f64 = 8.0 / 3.0 * std::f64::consts::FRAC_2_SQRT_PI;

#[derive(Clone, Debug, Serialize)]
pub struct SffOptions {
    /// Exponent of `E |grad f|^p`.
    pub p: f64,
    pub t_grid: Vec<f64>,
    /// Stopping radius `R` of `t ∧ τ_R`.
    pub radius: Option<f64>,
    pub steps_per_t: usize,
    pub n_paths: usize,
    pub seed: u64,
    /// Polynomial degree in `sqrt(t)` of the extrapolation.
    pub order: usize,
    /// Relative tolerance of the limit against the target.
    pub tolerance: f64,
}

impl SffOptions {
    /// A geometric grid `t0 4^{-k}`, `k < levels`.
    pub fn geometric(t0: f64, levels: usize, steps_per_t: usize, n_paths: usize, seed: u64) -> Self {
        Self {
            p: 2.0,
            t_grid: (0..levels).map(|k| t0 * 4f64.powi(-(k as i32))).collect(),
            radius: None,
            steps_per_t,
            n_paths,
            seed,
            order: 1,
            tolerance: 0.15,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.t_grid.len() < self.order + 2 || self.t_grid.iter().any(|t| !(*t > 0.0)) {
            return invalid(format!("need at least {} positive times for order {}", self.order + 2, self.order));
        }
        if !(self.p >= 1.0) {
            return invalid("p must be at least 1");
        }
        Ok(())
    }

    fn config(&self, k: usize, t: f64, tag: u64) -> SimConfig {
        let mut c = SimConfig::new(t, self.steps_per_t, self.n_paths, derive_seed(derive_seed(self.seed, tag), k as u64));
        c.hitting_radius = self.radius;
        c
    }
}

/// Value, gradient and second fundamental form of `f` at a boundary point
/// where `f` satisfies the Neumann condition.
fn boundary_jet(m: &ModelManifold, o: &Point, f: &ScalarField) -> Result<(Vector, f64, f64)> {
    f.validate_for(m)?;
    m.check_point(o)?;
    m.require_on_boundary(o)?;
    let j = f.jet(m, o);
    let g = j.grad;
    let gn = m.norm(o, &g);
    let normal = m.inward_normal(o)?;
    let nf = m.inner(o, &g, &normal);
    if nf.abs() > 1e-8 * gn.max(1.0) {
        return precondition(format!("f violates the Neumann condition at o: Nf = {nf:.3e}"));
    }
    let ii = m.second_fundamental_form(o, &g)?;
    Ok((g, gn, ii))
}

/// Limit of `(|grad f|^2 / sqrt t) log((E|grad f|^p(X_{t ∧ τ_R}))^{1/p} / |grad f|)`.
#[derive(Clone, Debug, Serialize)]
pub struct SffReport {
    pub t: Vec<f64>,
    pub values: Vec<MeanSe>,
    pub limit: MeanSe,
    /// `(2/sqrt(pi)) II(grad f, grad f)(o)`
    pub target: f64,
    pub relative_error: f64,
    pub grad_norm: f64,
    pub second_fundamental_form: f64,
    pub fit_r_squared: f64,
    pub tolerance: f64,
}

impl SffReport {
    /// `|limit - target| <= tolerance |target|`.
    pub fn report(&self) -> InequalityReport {
        InequalityReport::new(
            "sff-asymptotics",
            "|lim - (2/sqrt(pi)) II(grad f, grad f)| <= tol |(2/sqrt(pi)) II(grad f, grad f)|",
            (self.limit.mean - self.target).abs(),
            self.tolerance * self.target.abs(),
            self.limit.se,
            0.0,
        )
        .with_value("limit", self.limit.mean)
        .with_value("limit_se", self.limit.se)
        .with_value("target", self.target)
        .with_value("relative_error", self.relative_error)
    }
}

/// Weighted fit in `sqrt(t)`; returns the intercept of `y = sum_k c_k t^{k/2}`.
fn extrapolate(t: &[f64], y: &[MeanSe], order: usize) -> Result<(MeanSe, f64)> {
    let x: Vec<Vec<f64>> = t.iter().map(|t| (0..=order).map(|k| t.sqrt().powi(k as i32)).collect()).collect();
    let w: Vec<f64> = y.iter().map(|v| 1.0 / v.se.max(1e-150).powi(2)).collect();
    let vals: Vec<f64> = y.iter().map(|v| v.mean).collect();
    let fit = weighted_least_squares(&x, &vals, &w).ok_or_else(|| crate::Error::Precondition("singular extrapolation".into()))?;
    Ok((MeanSe { mean: fit.coef[0], se: fit.se[0] }, fit.r_squared))
}

pub fn check_sff_asymptotics(m: &ModelManifold, o: &Point, f: &ScalarField, opts: &SffOptions) -> Result<SffReport> {
    opts.validate()?;
    let (_, gn, ii) = boundary_jet(m, o, f)?;
    if !(gn > 0.0) {
        return precondition("|grad f|(o) must be positive");
    }
    let p = opts.p;
    let mut values = Vec::with_capacity(opts.t_grid.len());
    for (k, &t) in opts.t_grid.iter().enumerate() {
        let cfg = opts.config(k, t, tags::TIME_GRID);
        let ens = simulate(m, &InitialLaw::Dirac(*o), &cfg, &Record::Endpoint)?;
        let last = ens.steps.len() - 1;
        let g: Vec<f64> = ens
            .paths
            .iter()
            .map(|path| f.grad_norm(m, &path.stopped_point(last, cfg.n_steps)).powf(p))
            .collect();
        let e = mean_se(&g);
        let scale = gn * gn / (t.sqrt() * p);
        values.push(MeanSe { mean: scale * (e.mean / gn.powf(p)).ln(), se: scale * e.se / e.mean });
    }
    let (limit, r2) = extrapolate(&opts.t_grid, &values, opts.order)?;
    let target = SFF_COEFFICIENT * ii;
    let relative_error = if target != 0.0 { (limit.mean - target).abs() / target.abs() } else { f64::NAN };
    Ok(SffReport {
        t: opts.t_grid.clone(),
        values,
        limit,
        target,
        relative_error,
        grad_norm: gn,
        second_fundamental_form: ii,
        fit_r_squared: r2,
        tolerance: opts.tolerance,
    })
}

/// Fit of `P_t f^2 - (P_t f)^2 = a t + b t^{3/2}` at a boundary point.
#[derive(Clone, Debug, Serialize)]
pub struct VarianceFit {
    pub t: Vec<f64>,
    pub variance: Vec<MeanSe>,
    pub a: MeanSe,
    pub b: MeanSe,
    /// Coefficient of `t^2` when the fit includes it.
    pub c: Option<MeanSe>,
    /// `2 |grad f(o)|^2`
    pub target_a: f64,
    /// `(16 / (3 sqrt(pi))) II(grad f, grad f)(o)`
    pub target_b: f64,
    pub relative_error_a: f64,
    pub relative_error_b: f64,
    pub tolerance_a: f64,
    pub tolerance_b: f64,
}

impl VarianceFit {
    pub fn reports(&self) -> Vec<InequalityReport> {
        let rel = |x: f64, target: f64| if target != 0.0 { (x - target).abs() / target.abs() } else { f64::NAN };
        vec![
            InequalityReport::new(
                "variance-expansion-linear",
                "|a - 2|grad f(o)|^2| <= tol 2|grad f(o)|^2",
                (self.a.mean - self.target_a).abs(),
                self.tolerance_a * self.target_a.abs(),
                self.a.se,
                0.0,
            )
            .with_value("a", self.a.mean)
            .with_value("target", self.target_a)
            .with_value("relative_error", rel(self.a.mean, self.target_a)),
            InequalityReport::new(
                "variance-expansion-boundary",
                "|b - (16/(3 sqrt(pi))) II(grad f, grad f)| <= tol |(16/(3 sqrt(pi))) II(grad f, grad f)|",
                (self.b.mean - self.target_b).abs(),
                self.tolerance_b * self.target_b.abs(),
                self.b.se,
                0.0,
            )
            .with_value("b", self.b.mean)
            .with_value("target", self.target_b)
            .with_value("relative_error", rel(self.b.mean, self.target_b)),
        ]
    }
}

/// Variance profile of `f(X_t)` from `o` over `opts.t_grid`, fitted by
/// weighted least squares. `opts.order >= 2` adds a `t^2` term to absorb
/// the next order of the expansion.
pub fn check_variance_expansion(m: &ModelManifold, o: &Point, f: &ScalarField, opts: &SffOptions) -> Result<VarianceFit> {
    opts.validate()?;
    let (_, gn, ii) = boundary_jet(m, o, f)?;
    let mut variance = Vec::with_capacity(opts.t_grid.len());
    for (k, &t) in opts.t_grid.iter().enumerate() {
        let cfg = opts.config(k, t, tags::TIME_GRID + 1);
        let ens = simulate(m, &InitialLaw::Dirac(*o), &cfg, &Record::Endpoint)?;
        let last = ens.steps.len() - 1;
        let v: Vec<f64> = ens.paths.iter().map(|p| f.value(m, &p.stopped_point(last, cfg.n_steps))).collect();
        variance.push(sample_variance(&v));
    }
    let with_t2 = opts.order >= 2;
    let x: Vec<Vec<f64>> = opts
        .t_grid
        .iter()
        .map(|&t| if with_t2 { vec![t, t.powf(1.5), t * t] } else { vec![t, t.powf(1.5)] })
        .collect();
    let w: Vec<f64> = variance.iter().map(|v| 1.0 / v.se.max(1e-150).powi(2)).collect();
    let y: Vec<f64> = variance.iter().map(|v| v.mean).collect();
    let fit = weighted_least_squares(&x, &y, &w).ok_or_else(|| crate::Error::Precondition("singular variance fit".into()))?;
    let a = MeanSe { mean: fit.coef[0], se: fit.se[0] };
    let b = MeanSe { mean: fit.coef[1], se: fit.se[1] };
    let c = with_t2.then(|| MeanSe { mean: fit.coef[2], se: fit.se[2] });
    let target_a = 2.0 * gn * gn;
    let target_b = VARIANCE_COEFFICIENT * ii;
    let rel = |x: f64, target: f64| if target != 0.0 { (x - target).abs() / target.abs() } else { f64::NAN };
    Ok(VarianceFit {
        t: opts.t_grid.clone(),
        variance,
        a,
        b,
        c,
        target_a,
        target_b,
        relative_error_a: rel(a.mean, target_a),
        relative_error_b: rel(b.mean, target_b),
        tolerance_a: 0.10,
        tolerance_b: 0.25,
    })
}

/// Unbiased sample variance with the standard error `sqrt((m4 - s^4) / n)`.
fn sample_variance(v: &[f64]) -> MeanSe {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let s2 = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let m4 = v.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / n;
    MeanSe { mean: s2, se: ((m4 - s2 * s2).max(0.0) / n).sqrt() }
}
