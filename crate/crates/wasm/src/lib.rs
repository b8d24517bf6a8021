//! Browser bindings. Each operation returns a JSON string; the `*_json`
//! functions are plain Rust and the `wasm_bindgen` wrappers map errors to
//! JavaScript exceptions.

use motc::coupling::simulate_coupled;
use motc::diffusion::{local_time_profile, Record, SimConfig};
use motc::field::ScalarField;
use motc::geometry::{conformal_rescale, ConformalOptions, BoundaryProfile, DriftField, ManifoldKind, ModelManifold};
use motc::linalg::Point;
use serde::Serialize;
use std::f64::consts::FRAC_PI_2;
use std::sync::Arc;
use wasm_bindgen::prelude::*;

/// Largest number of pairs or paths one request may simulate.
pub const MAX_PATHS: usize = 20_000;

fn err(e: impl ToString) -> String {
    e.to_string()
}

/// Demo manifolds in the plane. Points are planar; on the hemisphere
/// `(u, v)` is lifted to `(u, v, sqrt(1 - u^2 - v^2))`.
fn demo_manifold(name: &str) -> Result<ModelManifold, String> {
    let m = match name {
        "euclidean" => ModelManifold::new(ManifoldKind::Euclidean, 2),
        "ou" => ModelManifold::new(ManifoldKind::Euclidean, 2).and_then(|m| m.with_drift(DriftField::RadialLinear { rate: 1.0 })),
        "disk" => ModelManifold::new(ManifoldKind::Ball { radius: 1.0 }, 2),
        "hemisphere" => ModelManifold::new(ManifoldKind::SphericalCap { radius: 1.0, angle: FRAC_PI_2 }, 2),
        other => return Err(format!("unknown manifold `{other}` (expected euclidean, ou, disk or hemisphere)")),
    };
    m.map_err(err)
}

fn lift(m: &ModelManifold, uv: &[f64]) -> Result<Point, String> {
    if uv.len() != 2 {
        return Err(format!("expected 2 coordinates, got {}", uv.len()));
    }
    if m.ambient_dim() == 3 {
        let h = (1.0 - uv[0] * uv[0] - uv[1] * uv[1]).max(0.0).sqrt();
        m.point(&[uv[0], uv[1], h]).map_err(err)
    } else {
        m.point(uv).map_err(err)
    }
}

#[derive(Serialize)]
struct PairOut {
    x: Vec<[f64; 2]>,
    y: Vec<[f64; 2]>,
    distance: Vec<f64>,
}

#[derive(Serialize)]
struct CoupledOut {
    k: f64,
    t: Vec<f64>,
    /// `e^{Kt} rho(x, y)`
    bound: Vec<f64>,
    mean_distance: Vec<f64>,
    pairs: Vec<PairOut>,
}

/// Coupled paths from `x` and `y` with their distance profiles against
/// `e^{Kt} rho(x, y)`.
pub fn coupled_paths_json(manifold: &str, x: &[f64], y: &[f64], t: f64, n_steps: usize, n_pairs: usize, seed: u64) -> Result<String, String> {
    if n_pairs == 0 || n_pairs > MAX_PATHS {
        return Err(format!("n_pairs must be in 1..={MAX_PATHS}"));
    }
    let m = demo_manifold(manifold)?;
    let (px, py) = (lift(&m, x)?, lift(&m, y)?);
    let cfg = SimConfig::new(t, n_steps, n_pairs, seed);
    let ens = simulate_coupled(&m, &px, &py, &cfg, &Record::Full, None).map_err(err)?;
    let k = m.curvature_constants().k;
    let rho0 = m.distance(&px, &py).map_err(err)?;
    let times: Vec<f64> = ens.steps.iter().map(|&i| cfg.time(i)).collect();
    let planar = |p: &motc::diffusion::PathSample| (0..p.len()).map(|i| {
        let q = p.point(i);
        [q[0], q[1]]
    }).collect();
    let mean_distance = (0..times.len())
        .map(|i| ens.pairs.iter().map(|p| p.distance_profile[i]).sum::<f64>() / ens.pairs.len() as f64)
        .collect();
    let out = CoupledOut {
        k,
        bound: times.iter().map(|s| (k * s).exp() * rho0).collect(),
        t: times,
        mean_distance,
        pairs: ens
            .pairs
            .iter()
            .take(8)
            .map(|p| PairOut { x: planar(&p.path_x), y: planar(&p.path_y), distance: p.distance_profile.clone() })
            .collect(),
    };
    serde_json::to_string(&out).map_err(err)
}

/// Mean boundary local time of reflecting Brownian motion on the half-line
/// started at 0, against `2 sqrt(t/pi)`.
pub fn local_time_json(t_max: f64, n_t: usize, n_steps: usize, n_paths: usize, seed: u64) -> Result<String, String> {
    if n_paths == 0 || n_paths > MAX_PATHS {
        return Err(format!("n_paths must be in 1..={MAX_PATHS}"));
    }
    if n_t == 0 || !(t_max > 0.0) {
        return Err("need a positive horizon and at least one time".into());
    }
    let m = ModelManifold::new(ManifoldKind::HalfSpace, 1).map_err(err)?;
    let o = m.point(&[0.0]).map_err(err)?;
    let ts: Vec<f64> = (1..=n_t).map(|i| t_max * i as f64 / n_t as f64).collect();
    let p = local_time_profile(&m, &o, 1e3, &ts, &SimConfig::new(t_max, n_steps, n_paths, seed)).map_err(err)?;
    serde_json::to_string(&serde_json::json!({
        "t": p.t,
        "mean": p.mean.iter().map(|v| v.mean).collect::<Vec<_>>(),
        "se": p.mean.iter().map(|v| v.se).collect::<Vec<_>>(),
        "target": p.target,
        "c_fit": p.c_fit,
    }))
    .map_err(err)
}

/// The boundary profile on the annulus `1 <= |x| <= 4` with its constants.
pub fn annulus_profile_json(sigma: f64, gamma: f64, k: f64, r: f64) -> Result<String, String> {
    let m = ModelManifold::new(ManifoldKind::Annulus { inner: 1.0, outer: 4.0 }, 2).map_err(err)?;
    let inj = m.boundary_injectivity_radius().map_err(err)?;
    let p = Arc::new(BoundaryProfile::for_boundary_injectivity(sigma, gamma, k, r, 2, inj).map_err(err)?);
    let s: Vec<f64> = (0..=100).map(|i| 1.5 * r * i as f64 / 100.0).collect();
    let f = ScalarField::profile("phi", p.clone());
    let opts = ConformalOptions { samples: 2000, ..ConformalOptions::default() };
    let data = conformal_rescale(&m, &f, &opts).map_err(err)?;
    let summary = p.summary();
    serde_json::to_string(&serde_json::json!({
        "s": s,
        "phi": s.iter().map(|&v| p.phi(v)).collect::<Vec<_>>(),
        "dphi": s.iter().map(|&v| p.dphi(v)).collect::<Vec<_>>(),
        "r": r,
        "summary": summary,
        "theta": p.theta(data.k.max(0.0), 0.0),
        "theta_from_bounds": p.theta_from_bounds(data.k.max(0.0), 0.0),
        "kappa_f": data.kappa_f_raw,
    }))
    .map_err(err)
}

#[wasm_bindgen]
pub fn coupled_paths(manifold: &str, x: &[f64], y: &[f64], t: f64, n_steps: usize, n_pairs: usize, seed: u32) -> Result<String, JsError> {
    coupled_paths_json(manifold, x, y, t, n_steps, n_pairs, seed.into()).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn local_time(t_max: f64, n_t: usize, n_steps: usize, n_paths: usize, seed: u32) -> Result<String, JsError> {
    local_time_json(t_max, n_t, n_steps, n_paths, seed.into()).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn annulus_profile(sigma: f64, gamma: f64, k: f64, r: f64) -> Result<String, JsError> {
    annulus_profile_json(sigma, gamma, k, r).map_err(|e| JsError::new(&e))
}
