use super::{ManifoldKind, ModelManifold, SAMPLE_WINDOW};
use crate::linalg::{Point, Vector};
use crate::numerics::{halton, normal_quantile};
use std::f64::consts::TAU;

/// Unit vector in `R^m` from `m` quasi-random coordinates.
fn direction(u: &[f64], m: usize) -> Vector {
    match m {
        1 => Vector::from_slice(&[if u[0] < 0.5 { -1.0 } else { 1.0 }]),
        2 => {
            let (s, c) = (TAU * u[0]).sin_cos();
            Vector::from_slice(&[c, s])
        }
        _ => {
            let mut v = Vector::zeros(m);
            for i in 0..m {
                v[i] = normal_quantile(u[i].clamp(1e-12, 1.0 - 1e-12));
            }
            let n = v.norm();
            if n < 1e-12 {
                Vector::basis(m, 0)
            } else {
                v * (1.0 / n)
            }
        }
    }
}

/// Point on the sphere of radius `a` in `R^{d+1}` at polar angle `phi` from
/// the north pole, with horizontal direction `h` (unit vector of `R^d`).
fn polar_point(a: f64, phi: f64, h: &Vector) -> Point {
    let d = h.len();
    let mut p = Vector::zeros(d + 1);
    for i in 0..d {
        p[i] = a * phi.sin() * h[i];
    }
    p[d] = a * phi.cos();
    p
}

fn interior_point(m: &ModelManifold, i: u64) -> Point {
    let d = m.dim;
    let u = halton(i, d + 1);
    match m.kind {
        ManifoldKind::Euclidean => {
            let mut p = Vector::zeros(d);
            for k in 0..d {
                p[k] = SAMPLE_WINDOW * (2.0 * u[k] - 1.0);
            }
            p
        }
        ManifoldKind::HalfSpace => {
            let mut p = Vector::zeros(d);
            for k in 0..d - 1 {
                p[k] = SAMPLE_WINDOW * (2.0 * u[k] - 1.0);
            }
            p[d - 1] = SAMPLE_WINDOW * u[d - 1];
            p
        }
        ManifoldKind::Ball { radius } => direction(&u[1..], d) * (radius * u[0].powf(1.0 / d as f64)),
        ManifoldKind::Annulus { inner, outer } => {
            let dd = d as f64;
            let r = (inner.powf(dd) + u[0] * (outer.powf(dd) - inner.powf(dd))).powf(1.0 / dd);
            direction(&u[1..], d) * r
        }
        ManifoldKind::Sphere { radius } => {
            let phi = (1.0 - 2.0 * u[0]).clamp(-1.0, 1.0).acos();
            polar_point(radius, phi, &direction(&u[1..], d))
        }
        ManifoldKind::SphericalCap { radius, angle } => {
            let phi = (1.0 - u[0] * (1.0 - angle.cos())).clamp(-1.0, 1.0).acos();
            polar_point(radius, phi, &direction(&u[1..], d))
        }
        ManifoldKind::Hyperbolic { radius } => {
            // geodesic ball of radius 2a around the vertex
            let r = 2.0 * radius * u[0].powf(1.0 / d as f64);
            let h = direction(&u[1..], d);
            let mut v = Vector::zeros(d + 1);
            for k in 0..d {
                v[k + 1] = r * h[k];
            }
            m.exp_map(&m.base_point(), &v)
        }
    }
}

fn boundary_point(m: &ModelManifold, i: u64) -> Point {
    let d = m.dim;
    let u = halton(i, d + 1);
    match m.kind {
        ManifoldKind::HalfSpace => {
            let mut p = Vector::zeros(d);
            for k in 0..d - 1 {
                p[k] = SAMPLE_WINDOW * (2.0 * u[k] - 1.0);
            }
            p
        }
        ManifoldKind::Ball { radius } => direction(&u[..], d) * radius,
        ManifoldKind::Annulus { inner, outer } => {
            let r = if i % 2 == 0 { inner } else { outer };
            direction(&u[1..], d) * r
        }
        ManifoldKind::SphericalCap { radius, angle } => {
            if d == 1 {
                let s = if i % 2 == 0 { 1.0 } else { -1.0 };
                return polar_point(radius, angle, &Vector::from_slice(&[s]));
            }
            polar_point(radius, angle, &direction(&u[..], d))
        }
        _ => unreachable!("boundaryless kinds have no boundary samples"),
    }
}

pub(super) fn boundary_samples(m: &ModelManifold, n: usize) -> Vec<Point> {
    (0..n as u64).map(|i| boundary_point(m, i)).collect()
}

pub(super) fn sample_grid(m: &ModelManifold, n: usize) -> Vec<Point> {
    let nb = if m.has_boundary() { n / 10 } else { 0 };
    let mut pts: Vec<Point> = (0..(n - nb) as u64).map(|i| interior_point(m, i)).collect();
    pts.extend(boundary_samples(m, nb));
    pts
}
