//! Closed-form geometry of the model manifolds.
//!
//! Points of the sphere, spherical caps and hyperbolic space are stored in
//! embedding coordinates (`R^{d+1}`, with the hyperboloid model
//! `-x_0^2 + x_1^2 + ... + x_d^2 = -a^2`, `x_0 > 0`, for hyperbolic space).
//! Flat kinds use Cartesian coordinates in `R^d`. Tangent vectors are ambient
//! vectors at their base point.

mod conformal;
mod curvature;
mod drift;
mod graph;
mod profile;
mod sampling;

pub use conformal::{conformal_rescale, ConformalData, ConformalOptions};
pub(crate) use conformal::{compass_max, refine_scale};
pub use curvature::CurvatureData;
pub use drift::DriftField;
pub use graph::GeodesicGraph;
pub use profile::BoundaryProfile;

use crate::error::{invalid, precondition, Error, Result};
use crate::field::ScalarField;
use crate::linalg::{Frame, Point, Vector, MAX_AMBIENT};
use std::f64::consts::PI;

/// Tolerance on equality constraints such as `|x| = a` on the sphere.
pub const CONSTRAINT_TOL: f64 = 1e-8;
/// Slack allowed on inequality constraints of the closed domain.
pub const DOMAIN_TOL: f64 = 1e-9;
/// Sphere pairs closer than this to antipodal (in angle) are on the cut locus.
pub const CUT_LOCUS_GUARD: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ManifoldKind {
    Euclidean,
    Sphere { radius: f64 },
    Hyperbolic { radius: f64 },
    /// `{x in R^d : x_d >= 0}`
    HalfSpace,
    Ball { radius: f64 },
    /// `{x on the sphere of radius `radius` : angle(x, e_{d+1}) <= angle}`
    SphericalCap { radius: f64, angle: f64 },
    /// `{r_in <= |x| <= r_out}`
    Annulus { inner: f64, outer: f64 },
}

impl ManifoldKind {
    pub fn name(&self) -> &'static str {
        match self {
            ManifoldKind::Euclidean => "euclidean",
            ManifoldKind::Sphere { .. } => "sphere",
            ManifoldKind::Hyperbolic { .. } => "hyperbolic",
            ManifoldKind::HalfSpace => "halfspace",
            ManifoldKind::Ball { .. } => "ball",
            ManifoldKind::SphericalCap { .. } => "spherical-cap",
            ManifoldKind::Annulus { .. } => "annulus",
        }
    }
}

/// Which boundary component a point is attached to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BoundaryPart {
    Single,
    Inner,
    Outer,
}

#[derive(Clone, Debug)]
pub struct ModelManifold {
    kind: ManifoldKind,
    dim: usize,
    drift: DriftField,
    psi: ScalarField,
}

impl ModelManifold {
    pub fn new(kind: ManifoldKind, dim: usize) -> Result<Self> {
        if dim == 0 {
            return invalid("dimension must be at least 1");
        }
        let pos = |v: f64, what: &str| -> Result<()> {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                invalid(format!("{what} must be positive and finite, got {v}"))
            }
        };
        match kind {
            ManifoldKind::Euclidean | ManifoldKind::HalfSpace => {}
            ManifoldKind::Sphere { radius } | ManifoldKind::Hyperbolic { radius } => pos(radius, "radius")?,
            ManifoldKind::Ball { radius } => pos(radius, "ball radius")?,
            ManifoldKind::SphericalCap { radius, angle } => {
                pos(radius, "radius")?;
                if !(angle > 0.0 && angle < PI) {
                    return invalid(format!("cap angle must lie in (0, pi), got {angle}"));
                }
            }
            ManifoldKind::Annulus { inner, outer } => {
                pos(inner, "inner radius")?;
                pos(outer, "outer radius")?;
                if inner >= outer {
                    return invalid(format!("annulus needs inner < outer, got {inner} >= {outer}"));
                }
            }
        }
        let curved_boundary = matches!(
            kind,
            ManifoldKind::Ball { .. } | ManifoldKind::SphericalCap { .. } | ManifoldKind::Annulus { .. }
        );
        if curved_boundary && dim < 2 {
            return invalid(format!("{} requires dimension >= 2", kind.name()));
        }
        let m = Self { kind, dim, drift: DriftField::Zero, psi: ScalarField::constant(1.0) };
        if m.ambient_dim() > MAX_AMBIENT {
            return invalid(format!("ambient dimension {} exceeds {MAX_AMBIENT}", m.ambient_dim()));
        }
        Ok(m)
    }

    pub fn with_drift(mut self, drift: DriftField) -> Result<Self> {
        drift.validate(&self)?;
        self.drift = drift;
        Ok(self)
    }

    /// Sets the diffusion coefficient. It must be strictly positive on the
    /// sample grid.
    pub fn with_psi(mut self, psi: ScalarField) -> Result<Self> {
        psi.validate_for(&self)?;
        let min = self
            .sample_grid(2000)
            .iter()
            .map(|x| psi.value(&self, x))
            .fold(f64::INFINITY, f64::min);
        if !(min > 0.0) {
            return invalid(format!("diffusion coefficient must be positive, sample minimum {min}"));
        }
        self.psi = psi;
        Ok(self)
    }

    pub fn kind(&self) -> ManifoldKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn drift(&self) -> &DriftField {
        &self.drift
    }

    pub fn psi(&self) -> &ScalarField {
        &self.psi
    }

    pub fn ambient_dim(&self) -> usize {
        match self.kind {
            ManifoldKind::Sphere { .. } | ManifoldKind::Hyperbolic { .. } | ManifoldKind::SphericalCap { .. } => {
                self.dim + 1
            }
            _ => self.dim,
        }
    }

    pub fn has_boundary(&self) -> bool {
        !matches!(
            self.kind,
            ManifoldKind::Euclidean | ManifoldKind::Sphere { .. } | ManifoldKind::Hyperbolic { .. }
        )
    }

    /// Whether the boundary is empty or convex (`II >= 0`).
    pub fn is_convex(&self) -> bool {
        match self.kind {
            ManifoldKind::Annulus { .. } => false,
            ManifoldKind::SphericalCap { angle, .. } => angle <= PI / 2.0 + 1e-12,
            _ => true,
        }
    }

    /// Whether the intrinsic distance is the ambient chord (flat convex kinds).
    fn is_flat(&self) -> bool {
        matches!(
            self.kind,
            ManifoldKind::Euclidean | ManifoldKind::HalfSpace | ManifoldKind::Ball { .. } | ManifoldKind::Annulus { .. }
        )
    }

    fn sphere_radius(&self) -> Option<f64> {
        match self.kind {
            ManifoldKind::Sphere { radius } | ManifoldKind::SphericalCap { radius, .. } => Some(radius),
            _ => None,
        }
    }

    // ----- points and tangent spaces -------------------------------------

    /// A canonical interior base point: the origin, the north pole, the
    /// hyperboloid vertex, or a point on the unit-ish circle between the
    /// annulus radii.
    pub fn base_point(&self) -> Point {
        let n = self.ambient_dim();
        match self.kind {
            ManifoldKind::Euclidean | ManifoldKind::Ball { .. } => Vector::zeros(n),
            ManifoldKind::HalfSpace => Vector::basis(n, n - 1),
            ManifoldKind::Sphere { radius } | ManifoldKind::SphericalCap { radius, .. } => {
                Vector::basis(n, n - 1) * radius
            }
            ManifoldKind::Hyperbolic { radius } => Vector::basis(n, 0) * radius,
            ManifoldKind::Annulus { inner, outer } => Vector::basis(n, 0) * (0.5 * (inner + outer)),
        }
    }

    /// Constructs a point from coordinates, checking membership of `M̄`.
    pub fn point(&self, coords: &[f64]) -> Result<Point> {
        if coords.len() != self.ambient_dim() {
            return invalid(format!(
                "{} of dimension {} expects {} coordinates, got {}",
                self.kind.name(),
                self.dim,
                self.ambient_dim(),
                coords.len()
            ));
        }
        let p = Vector::from_slice(coords);
        self.check_point(&p)?;
        Ok(p)
    }

    /// Residual of the equality constraint (0 for flat kinds).
    pub fn constraint_residual(&self, x: &Point) -> f64 {
        match self.kind {
            ManifoldKind::Sphere { radius } | ManifoldKind::SphericalCap { radius, .. } => (x.norm() - radius).abs(),
            ManifoldKind::Hyperbolic { radius } => {
                let q = self.minkowski(x, x);
                (q + radius * radius).abs() / radius + if x[0] > 0.0 { 0.0 } else { 1.0 }
            }
            _ => 0.0,
        }
    }

    /// Amount by which `x` violates the inequality constraints of `M̄` (0 if inside).
    pub fn domain_violation(&self, x: &Point) -> f64 {
        match self.kind {
            ManifoldKind::HalfSpace => (-x[self.dim - 1]).max(0.0),
            ManifoldKind::Ball { radius } => (x.norm() - radius).max(0.0),
            ManifoldKind::Annulus { inner, outer } => {
                let r = x.norm();
                (inner - r).max(r - outer).max(0.0)
            }
            ManifoldKind::SphericalCap { radius, angle } => {
                (self.polar_angle(x) - angle).max(0.0) * radius
            }
            _ => 0.0,
        }
    }

    pub fn contains(&self, x: &Point) -> bool {
        x.len() == self.ambient_dim()
            && x.is_finite()
            && self.constraint_residual(x) <= CONSTRAINT_TOL
            && self.domain_violation(x) <= DOMAIN_TOL
    }

    pub fn check_point(&self, x: &Point) -> Result<()> {
        if x.len() != self.ambient_dim() {
            return invalid(format!("point has {} coordinates, expected {}", x.len(), self.ambient_dim()));
        }
        if !self.contains(x) {
            return Err(Error::OutsideDomain {
                residual: self.constraint_residual(x).max(self.domain_violation(x)),
            });
        }
        Ok(())
    }

    /// Removes round-off from the equality constraint.
    pub fn retract(&self, x: &Point) -> Point {
        match self.kind {
            ManifoldKind::Sphere { radius } | ManifoldKind::SphericalCap { radius, .. } => {
                let n = x.norm();
                *x * (radius / n)
            }
            ManifoldKind::Hyperbolic { radius } => {
                let mut y = *x;
                let s: f64 = y.as_slice()[1..].iter().map(|v| v * v).sum();
                y[0] = (radius * radius + s).sqrt();
                y
            }
            _ => *x,
        }
    }

    fn minkowski(&self, u: &Vector, v: &Vector) -> f64 {
        u.dot(v) - 2.0 * u[0] * v[0]
    }

    /// Riemannian inner product of two tangent vectors at `x`.
    pub fn inner(&self, _x: &Point, u: &Vector, v: &Vector) -> f64 {
        match self.kind {
            ManifoldKind::Hyperbolic { .. } => self.minkowski(u, v),
            _ => u.dot(v),
        }
    }

    pub fn norm(&self, x: &Point, u: &Vector) -> f64 {
        self.inner(x, u, u).max(0.0).sqrt()
    }

    /// Orthogonal projection of an ambient vector onto `T_x M`.
    pub fn project_tangent(&self, x: &Point, v: &Vector) -> Vector {
        match self.kind {
            ManifoldKind::Sphere { radius } | ManifoldKind::SphericalCap { radius, .. } => {
                let mut w = *v;
                w.axpy(-v.dot(x) / (radius * radius), x);
                w
            }
            ManifoldKind::Hyperbolic { radius } => {
                let mut w = *v;
                w.axpy(self.minkowski(v, x) / (radius * radius), x);
                w
            }
            _ => *v,
        }
    }

    /// Normal component of `v` relative to `T_x M` (0 for flat kinds).
    pub fn tangency_residual(&self, x: &Point, v: &Vector) -> f64 {
        match self.kind {
            ManifoldKind::Sphere { radius } | ManifoldKind::SphericalCap { radius, .. } => (v.dot(x) / radius).abs(),
            ManifoldKind::Hyperbolic { radius } => (self.minkowski(v, x) / radius).abs(),
            _ => 0.0,
        }
    }

    /// An orthonormal basis of `T_x M`.
    pub fn tangent_basis(&self, x: &Point) -> Frame {
        let n = self.ambient_dim();
        let mut vecs: Vec<Vector> = Vec::with_capacity(self.dim);
        // For embedded kinds start with the coordinate directions least aligned with x.
        let mut order: Vec<usize> = (0..n).collect();
        if n != self.dim {
            order.sort_by(|&i, &j| x[i].abs().total_cmp(&x[j].abs()));
        }
        for &i in &order {
            if vecs.len() == self.dim {
                break;
            }
            let mut v = self.project_tangent(x, &Vector::basis(n, i));
            for e in &vecs {
                let c = self.inner(x, &v, e);
                v.axpy(-c, e);
            }
            let nv = self.norm(x, &v);
            if nv > 1e-6 {
                vecs.push(v * (1.0 / nv));
            }
        }
        debug_assert_eq!(vecs.len(), self.dim);
        Frame::new(&vecs)
    }

    /// Re-orthonormalises a frame at `x` by Gram-Schmidt after projecting to `T_x M`.
    pub fn orthonormalize(&self, x: &Point, frame: &mut Frame) {
        let dim = frame.dim();
        for i in 0..dim {
            let mut v = self.project_tangent(x, &frame.vectors()[i]);
            for j in 0..i {
                let e = frame.vectors()[j];
                let c = self.inner(x, &v, &e);
                v.axpy(-c, &e);
            }
            let nv = self.norm(x, &v);
            frame.vectors_mut()[i] = v * (1.0 / nv);
        }
    }

    /// Largest deviation of the Gram matrix of `frame` from the identity.
    pub fn frame_residual(&self, x: &Point, frame: &Frame) -> f64 {
        let mut worst = 0.0f64;
        for (i, a) in frame.vectors().iter().enumerate() {
            worst = worst.max(self.tangency_residual(x, a));
            for (j, b) in frame.vectors().iter().enumerate() {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((self.inner(x, a, b) - target).abs());
            }
        }
        worst
    }

    // ----- geodesics -------------------------------------------------------

    /// Intrinsic distance between two points of `M̄`.
    pub fn distance(&self, x: &Point, y: &Point) -> Result<f64> {
        self.check_point(x)?;
        self.check_point(y)?;
        Ok(self.distance_unchecked(x, y))
    }

    /// [`distance`](Self::distance) without membership checks.
    pub fn distance_unchecked(&self, x: &Point, y: &Point) -> f64 {
        match self.kind {
            ManifoldKind::Euclidean | ManifoldKind::HalfSpace | ManifoldKind::Ball { .. } => x.dist(y),
            ManifoldKind::Annulus { inner, .. } => annulus_distance(x, y, inner),
            ManifoldKind::Sphere { radius } => radius * unit_angle(x, y),
            ManifoldKind::SphericalCap { radius, angle } => {
                if angle <= PI / 2.0 || self.cap_arc_clear(x, y) {
                    radius * unit_angle(x, y)
                } else {
                    radius * self.cap_wrap_angle(x, y, angle)
                }
            }
            ManifoldKind::Hyperbolic { radius } => {
                let d = *x - *y;
                let chord = self.minkowski(&d, &d).max(0.0).sqrt();
                2.0 * radius * (chord / (2.0 * radius)).asinh()
            }
        }
    }

    /// A cheap monotone transform of the distance: `distance = from_proxy(proxy)`.
    pub(crate) fn distance_proxy(&self, x: &Point, y: &Point) -> f64 {
        match self.kind {
            ManifoldKind::Euclidean | ManifoldKind::HalfSpace | ManifoldKind::Ball { .. } => {
                let mut s = 0.0;
                for i in 0..x.len() {
                    let d = x[i] - y[i];
                    s += d * d;
                }
                s
            }
            ManifoldKind::Sphere { .. } => {
                let mut s = 0.0;
                for i in 0..x.len() {
                    let d = x[i] - y[i];
                    s += d * d;
                }
                s
            }
            ManifoldKind::SphericalCap { angle, .. } if angle <= PI / 2.0 => {
                let mut s = 0.0;
                for i in 0..x.len() {
                    let d = x[i] - y[i];
                    s += d * d;
                }
                s
            }
            _ => self.distance_unchecked(x, y),
        }
    }

    pub(crate) fn distance_from_proxy(&self, q: f64) -> f64 {
        match self.kind {
            ManifoldKind::Euclidean | ManifoldKind::HalfSpace | ManifoldKind::Ball { .. } => q.sqrt(),
            ManifoldKind::Sphere { radius } => chord_to_arc(q.sqrt(), radius),
            ManifoldKind::SphericalCap { radius, angle } if angle <= PI / 2.0 => chord_to_arc(q.sqrt(), radius),
            _ => q,
        }
    }

    /// Polar angle of a sphere point from the north pole `e_{d+1}`.
    pub(crate) fn polar_angle(&self, x: &Point) -> f64 {
        let n = x.len();
        let z = x[n - 1];
        let h: f64 = x.as_slice()[..n - 1].iter().map(|v| v * v).sum::<f64>().sqrt();
        h.atan2(z)
    }

    /// Whether the minimal great-circle arc from `x` to `y` stays in the cap.
    fn cap_arc_clear(&self, x: &Point, y: &Point) -> bool {
        let ManifoldKind::SphericalCap { angle, .. } = self.kind else { return true };
        let n = x.len();
        let xh = *x * (1.0 / x.norm());
        let yh = *y * (1.0 / y.norm());
        let theta = unit_angle(&xh, &yh);
        if theta < 1e-14 {
            return true;
        }
        let mut u = yh;
        u.axpy(-xh.dot(&yh), &xh);
        let un = u.norm();
        if un < 1e-300 {
            return false;
        }
        let u = u * (1.0 / un);
        let (zx, zu) = (xh[n - 1], u[n - 1]);
        let amp = (zx * zx + zu * zu).sqrt();
        let t0 = zu.atan2(zx);
        let mut zmin = zx.min(yh[n - 1]);
        let mut t = t0 + PI;
        while t > theta {
            t -= 2.0 * PI;
        }
        while t < 0.0 {
            t += 2.0 * PI;
        }
        if t <= theta {
            zmin = zmin.min(-amp);
        }
        zmin >= angle.cos() - 1e-12
    }

    /// Angular length of the shortest path in a cap larger than a hemisphere
    /// whose great-circle arc is blocked by the excluded polar cap.
    fn cap_wrap_angle(&self, x: &Point, y: &Point, angle: f64) -> f64 {
        let n = x.len();
        let beta = PI - angle;
        let ax = PI - self.polar_angle(x);
        let ay = PI - self.polar_angle(y);
        let tangent = |a: f64| (a.cos() / beta.cos()).clamp(-1.0, 1.0).acos();
        let foot = |a: f64| (beta.tan() / a.tan()).clamp(-1.0, 1.0).acos();
        let hx = Vector::from_slice(&x.as_slice()[..n - 1]);
        let hy = Vector::from_slice(&y.as_slice()[..n - 1]);
        let delta = unit_angle(&hx, &hy);
        let wrap = tangent(ax) + tangent(ay) + beta.sin() * (delta - foot(ax) - foot(ay)).max(0.0);
        wrap.max(unit_angle(x, y))
    }

    /// Riemannian exponential map. May leave the domain; the caller reflects.
    pub fn exp_map(&self, x: &Point, v: &Vector) -> Point {
        match self.kind {
            ManifoldKind::Sphere { radius } | ManifoldKind::SphericalCap { radius, .. } => {
                let nv = v.norm();
                if nv < 1e-300 {
                    return *x;
                }
                let th = nv / radius;
                let mut y = *x * th.cos();
                y.axpy(th.sin() * radius / nv, v);
                self.retract(&y)
            }
            ManifoldKind::Hyperbolic { radius } => {
                let nv = self.minkowski(v, v).max(0.0).sqrt();
                if nv < 1e-300 {
                    return *x;
                }
                let th = nv / radius;
                let mut y = *x * th.cosh();
                y.axpy(th.sinh() * radius / nv, v);
                self.retract(&y)
            }
            _ => *x + *v,
        }
    }

    /// Inverse of the exponential map along the minimal geodesic.
    pub fn log_map(&self, x: &Point, y: &Point) -> Result<Vector> {
        self.check_point(x)?;
        self.check_point(y)?;
        match self.kind {
            ManifoldKind::Euclidean | ManifoldKind::HalfSpace | ManifoldKind::Ball { .. } => Ok(*y - *x),
            ManifoldKind::Annulus { inner, .. } => {
                if segment_clears_ball(x, y, inner) {
                    Ok(*y - *x)
                } else {
                    Err(Error::GeodesicLeavesDomain)
                }
            }
            ManifoldKind::Sphere { .. } => self.sphere_log(x, y),
            ManifoldKind::SphericalCap { angle, .. } => {
                if angle > PI / 2.0 && !self.cap_arc_clear(x, y) {
                    return Err(Error::GeodesicLeavesDomain);
                }
                self.sphere_log(x, y)
            }
            ManifoldKind::Hyperbolic { radius } => {
                let d = self.distance_unchecked(x, y);
                let mut u = *y;
                u.axpy(self.minkowski(x, y) / (radius * radius), x);
                let nu = self.minkowski(&u, &u).max(0.0).sqrt();
                if nu < 1e-300 || d == 0.0 {
                    return Ok(Vector::zeros(x.len()));
                }
                Ok(u * (d / nu))
            }
        }
    }

    fn sphere_log(&self, x: &Point, y: &Point) -> Result<Vector> {
        let radius = self.sphere_radius().expect("sphere kind");
        let th = unit_angle(x, y);
        if th > PI - CUT_LOCUS_GUARD {
            return Err(Error::CutLocus { distance: radius * th });
        }
        let mut u = *y;
        u.axpy(-x.dot(y) / (radius * radius), x);
        let nu = u.norm();
        if nu < 1e-300 || th == 0.0 {
            return Ok(Vector::zeros(x.len()));
        }
        Ok(u * (radius * th / nu))
    }

    /// Parallel transport of `v in T_x M` to `T_y M` along the minimal geodesic.
    ///
    /// Flat kinds transport trivially (path independent). Caps transport along
    /// the great circle of the ambient sphere.
    pub fn parallel_transport(&self, x: &Point, y: &Point, v: &Vector) -> Result<Vector> {
        match self.kind {
            ManifoldKind::Sphere { radius } | ManifoldKind::SphericalCap { radius, .. } => {
                let w = self.sphere_log(x, y)?;
                let nw = w.norm();
                if nw < 1e-300 {
                    return Ok(*v);
                }
                let u = w * (1.0 / nw);
                let th = nw / radius;
                let xh = *x * (1.0 / radius);
                let c = v.dot(&u);
                let mut out = *v;
                out.axpy(c * (th.cos() - 1.0), &u);
                out.axpy(-c * th.sin(), &xh);
                Ok(out)
            }
            ManifoldKind::Hyperbolic { radius } => {
                let w = self.log_map(x, y)?;
                let nw = self.minkowski(&w, &w).max(0.0).sqrt();
                if nw < 1e-300 {
                    return Ok(*v);
                }
                let u = w * (1.0 / nw);
                let th = nw / radius;
                let xh = *x * (1.0 / radius);
                let c = self.minkowski(v, &u);
                let mut out = *v;
                out.axpy(c * (th.cosh() - 1.0), &u);
                out.axpy(c * th.sinh(), &xh);
                Ok(out)
            }
            _ => Ok(*v),
        }
    }

    // ----- boundary -----------------------------------------------------

    fn annulus_part(&self, x: &Point) -> BoundaryPart {
        match self.kind {
            ManifoldKind::Annulus { inner, outer } => {
                let r = x.norm();
                if r - inner <= outer - r {
                    BoundaryPart::Inner
                } else {
                    BoundaryPart::Outer
                }
            }
            _ => BoundaryPart::Single,
        }
    }

    /// The boundary component closest to `x`.
    pub fn boundary_part(&self, x: &Point) -> Result<BoundaryPart> {
        if !self.has_boundary() {
            return Err(Error::NoBoundary);
        }
        Ok(self.annulus_part(x))
    }

    /// Distance `rho_∂(x)` to the boundary.
    pub fn boundary_distance(&self, x: &Point) -> Result<f64> {
        if !self.has_boundary() {
            return Err(Error::NoBoundary);
        }
        Ok(self.boundary_distance_unchecked(x))
    }

    pub(crate) fn boundary_distance_unchecked(&self, x: &Point) -> f64 {
        match self.kind {
            ManifoldKind::HalfSpace => x[self.dim - 1],
            ManifoldKind::Ball { radius } => radius - x.norm(),
            ManifoldKind::Annulus { inner, outer } => {
                let r = x.norm();
                (r - inner).min(outer - r)
            }
            ManifoldKind::SphericalCap { radius, angle } => radius * (angle - self.polar_angle(x)),
            _ => f64::INFINITY,
        }
    }

    /// Unit inward normal `N`, i.e. the gradient of `rho_∂` (defined off the
    /// cut locus of the boundary).
    pub fn inward_normal(&self, x: &Point) -> Result<Vector> {
        if !self.has_boundary() {
            return Err(Error::NoBoundary);
        }
        self.inward_normal_unchecked(x)
            .ok_or_else(|| Error::Precondition("inward normal is undefined at this point".into()))
    }

    pub(crate) fn inward_normal_unchecked(&self, x: &Point) -> Option<Vector> {
        let n = x.len();
        match self.kind {
            ManifoldKind::HalfSpace => Some(Vector::basis(n, n - 1)),
            ManifoldKind::Ball { .. } => {
                let r = x.norm();
                (r > 0.0).then(|| *x * (-1.0 / r))
            }
            ManifoldKind::Annulus { .. } => {
                let r = x.norm();
                match self.annulus_part(x) {
                    BoundaryPart::Inner => Some(*x * (1.0 / r)),
                    _ => Some(*x * (-1.0 / r)),
                }
            }
            ManifoldKind::SphericalCap { radius, .. } => {
                let pole = Vector::basis(n, n - 1);
                let mut w = pole;
                w.axpy(-x[n - 1] / (radius * radius), x);
                let nw = w.norm();
                (nw > 1e-12).then(|| w * (1.0 / nw))
            }
            _ => None,
        }
    }

    /// Laplacian of `rho_∂` at `x`, where `rho_∂` is smooth.
    pub(crate) fn boundary_distance_laplacian(&self, x: &Point) -> f64 {
        let d1 = (self.dim - 1) as f64;
        match self.kind {
            ManifoldKind::Ball { .. } => -d1 / x.norm(),
            ManifoldKind::Annulus { .. } => match self.annulus_part(x) {
                BoundaryPart::Inner => d1 / x.norm(),
                _ => -d1 / x.norm(),
            },
            ManifoldKind::SphericalCap { radius, .. } => {
                let phi = self.polar_angle(x);
                -d1 * phi.cos() / (phi.sin() * radius)
            }
            _ => 0.0,
        }
    }

    /// Second fundamental form `II(u, u)` of the boundary at `x`, with `u`
    /// tangent to the boundary.
    pub fn second_fundamental_form(&self, x: &Point, u: &Vector) -> Result<f64> {
        self.second_fundamental_form_bilinear(x, u, u)
    }

    /// Polarised form `II(u, v)`.
    pub fn second_fundamental_form_bilinear(&self, x: &Point, u: &Vector, v: &Vector) -> Result<f64> {
        let normal = self.inward_normal(x)?;
        for w in [u, v] {
            let c = self.inner(x, w, &normal);
            if c.abs() > 1e-8 * w.norm().max(1.0) {
                return Err(Error::NotTangent { normal_component: c });
            }
        }
        Ok(self.boundary_shape(x) * self.inner(x, u, v))
    }

    /// The umbilic shape constant `c` with `II = c <.,.>` at `x`.
    pub(crate) fn boundary_shape(&self, x: &Point) -> f64 {
        match self.kind {
            ManifoldKind::Ball { radius } => 1.0 / radius,
            ManifoldKind::Annulus { inner, outer } => match self.annulus_part(x) {
                BoundaryPart::Inner => -1.0 / inner,
                _ => 1.0 / outer,
            },
            ManifoldKind::SphericalCap { radius, angle } => 1.0 / (angle.tan() * radius),
            _ => 0.0,
        }
    }

    /// Injectivity radius of the normal exponential map of the boundary.
    pub fn boundary_injectivity_radius(&self) -> Result<f64> {
        match self.kind {
            ManifoldKind::HalfSpace => Ok(f64::INFINITY),
            ManifoldKind::Ball { radius } => Ok(radius),
            ManifoldKind::Annulus { inner, outer } => Ok(0.5 * (outer - inner)),
            ManifoldKind::SphericalCap { radius, angle } => Ok(radius * angle),
            _ => Err(Error::NoBoundary),
        }
    }

    /// Nearest point of the boundary to `x`.
    pub fn project_to_boundary(&self, x: &Point) -> Result<Point> {
        if !self.has_boundary() {
            return Err(Error::NoBoundary);
        }
        let mut p = *x;
        match self.kind {
            ManifoldKind::HalfSpace => p[self.dim - 1] = 0.0,
            ManifoldKind::Ball { radius } => p = *x * (radius / x.norm()),
            ManifoldKind::Annulus { inner, outer } => {
                let target = if self.annulus_part(x) == BoundaryPart::Inner { inner } else { outer };
                p = *x * (target / x.norm());
            }
            ManifoldKind::SphericalCap { radius, angle } => p = cap_point_at_angle(x, radius, angle),
            _ => unreachable!(),
        }
        Ok(p)
    }

    // ----- curvature ------------------------------------------------------

    /// `Ric(u, u)` at `x`.
    pub fn ricci(&self, _x: &Point, u: &Vector) -> f64 {
        let d1 = (self.dim as f64 - 1.0).max(0.0);
        match self.kind {
            ManifoldKind::Sphere { radius } | ManifoldKind::SphericalCap { radius, .. } => {
                d1 / (radius * radius) * u.norm_sq()
            }
            ManifoldKind::Hyperbolic { radius } => -d1 / (radius * radius) * self.minkowski(u, u),
            _ => 0.0,
        }
    }

    /// `Ric(u, u) - <grad_u Z, u>` at `x`.
    pub fn bakry_emery(&self, x: &Point, u: &Vector) -> f64 {
        let dz = self.drift.covariant_derivative(self, x, u);
        self.ricci(x, u) - self.inner(x, &dz, u)
    }

    pub fn curvature_constants(&self) -> CurvatureData {
        CurvatureData::of(self)
    }

    /// Value of the drift `Z(x)`.
    pub fn drift_at(&self, x: &Point) -> Vector {
        self.drift.value(self, x)
    }

    /// `sup |Z|` over `M̄`, `None` when unbounded.
    pub fn drift_sup(&self) -> Option<f64> {
        self.drift.sup_norm(self)
    }

    // ----- coordinate functions (used by scalar fields) -----------------

    /// Riemannian gradient of the coordinate function `x -> x_i`.
    pub(crate) fn coordinate_gradient(&self, x: &Point, i: usize) -> Vector {
        let n = x.len();
        let mut e = Vector::basis(n, i);
        if let ManifoldKind::Hyperbolic { .. } = self.kind {
            if i == 0 {
                e[0] = -1.0;
            }
        }
        self.project_tangent(x, &e)
    }

    /// Laplace-Beltrami of the coordinate function `x -> x_i`.
    pub(crate) fn coordinate_laplacian(&self, x: &Point, i: usize) -> f64 {
        let d = self.dim as f64;
        match self.kind {
            ManifoldKind::Sphere { radius } | ManifoldKind::SphericalCap { radius, .. } => -d * x[i] / (radius * radius),
            ManifoldKind::Hyperbolic { radius } => d * x[i] / (radius * radius),
            _ => 0.0,
        }
    }

    // ----- sampling -------------------------------------------------------

    /// Deterministic quasi-random points covering `M̄`; a tenth of them lie on
    /// the boundary when there is one. Unbounded kinds are sampled on a window
    /// of radius [`SAMPLE_WINDOW`].
    pub fn sample_grid(&self, n: usize) -> Vec<Point> {
        sampling::sample_grid(self, n)
    }

    /// Deterministic quasi-random points of `∂M`.
    pub fn boundary_samples(&self, n: usize) -> Result<Vec<Point>> {
        if !self.has_boundary() {
            return Err(Error::NoBoundary);
        }
        Ok(sampling::boundary_samples(self, n))
    }

    /// Checks that `x` is attached to the boundary (within tolerance).
    pub fn require_on_boundary(&self, x: &Point) -> Result<()> {
        let rb = self.boundary_distance(x)?;
        if rb.abs() > 1e-9 {
            return precondition(format!("point is at distance {rb:.3e} from the boundary"));
        }
        Ok(())
    }
}

/// Half-width of the window used to sample unbounded kinds.
pub const SAMPLE_WINDOW: f64 = 4.0;

/// Angle between two nonzero vectors, accurate for small and near-antipodal angles.
pub(crate) fn unit_angle(x: &Vector, y: &Vector) -> f64 {
    let xh = *x * (1.0 / x.norm());
    let yh = *y * (1.0 / y.norm());
    let a = (xh - yh).norm();
    let b = (xh + yh).norm();
    2.0 * a.atan2(b)
}

fn chord_to_arc(chord: f64, radius: f64) -> f64 {
    2.0 * radius * (0.5 * chord / radius).min(1.0).asin()
}

/// Whether the segment `[x, y]` stays outside the open ball of radius `r` at 0.
pub(crate) fn segment_clears_ball(x: &Vector, y: &Vector, r: f64) -> bool {
    let d = *y - *x;
    let dd = d.norm_sq();
    let t = if dd > 0.0 { (-x.dot(&d) / dd).clamp(0.0, 1.0) } else { 0.0 };
    let mut p = *x;
    p.axpy(t, &d);
    p.norm() >= r * (1.0 - 1e-12)
}

/// Shortest length of a curve from `x` to `y` avoiding the open ball of radius `r`.
pub(crate) fn annulus_distance(x: &Vector, y: &Vector, r: f64) -> f64 {
    if segment_clears_ball(x, y, r) {
        return x.dist(y);
    }
    let (rx, ry) = (x.norm().max(r), y.norm().max(r));
    let gamma = unit_angle(x, y);
    let arc = (gamma - (r / rx).min(1.0).acos() - (r / ry).min(1.0).acos()).max(0.0);
    (rx * rx - r * r).max(0.0).sqrt() + (ry * ry - r * r).max(0.0).sqrt() + r * arc
}

fn cap_point_at_angle(x: &Point, radius: f64, angle: f64) -> Point {
    let n = x.len();
    let mut h = *x;
    h[n - 1] = 0.0;
    let nh = h.norm();
    let mut p = if nh > 1e-300 { h * (radius * angle.sin() / nh) } else {
        let mut e = Vector::zeros(n);
        e[0] = radius * angle.sin();
        e
    };
    p[n - 1] = radius * angle.cos();
    p
}

/// Reflection of a candidate point back into `M̄`. Returns the reflected
/// point and the local-time increment, equal to the total distance pushed
/// along the normal (twice the penetration depth).
pub(crate) fn reflect(m: &ModelManifold, cand: &Point) -> Result<(Point, f64)> {
    match m.kind {
        ManifoldKind::HalfSpace => {
            let i = m.dim - 1;
            if cand[i] >= 0.0 {
                return Ok((*cand, 0.0));
            }
            let mut p = *cand;
            p[i] = -cand[i];
            Ok((p, 2.0 * cand[i].abs()))
        }
        ManifoldKind::Ball { radius } => {
            let r = cand.norm();
            if r <= radius {
                return Ok((*cand, 0.0));
            }
            let target = 2.0 * radius - r;
            if target < 0.0 {
                return Err(Error::ReflectionFailed);
            }
            Ok((*cand * (target / r), 2.0 * (r - radius)))
        }
        ManifoldKind::Annulus { inner, outer } => {
            let r = cand.norm();
            if r >= inner && r <= outer {
                return Ok((*cand, 0.0));
            }
            let (target, dl) = if r < inner { (2.0 * inner - r, 2.0 * (inner - r)) } else { (2.0 * outer - r, 2.0 * (r - outer)) };
            if !(target >= inner && target <= outer) || r == 0.0 {
                return Err(Error::ReflectionFailed);
            }
            Ok((*cand * (target / r), dl))
        }
        ManifoldKind::SphericalCap { radius, angle } => {
            let phi = m.polar_angle(cand);
            if phi <= angle {
                return Ok((*cand, 0.0));
            }
            let target = 2.0 * angle - phi;
            if target < 0.0 {
                return Err(Error::ReflectionFailed);
            }
            Ok((cap_point_at_angle(cand, radius, target), 2.0 * radius * (phi - angle)))
        }
        _ => Ok((*cand, 0.0)),
    }
}

/// Largest admissible geodesic step before the scheme loses meaning.
pub(crate) fn step_bound(m: &ModelManifold) -> f64 {
    match m.kind {
        ManifoldKind::Sphere { radius } | ManifoldKind::SphericalCap { radius, .. } => 0.5 * PI * radius,
        ManifoldKind::Ball { radius } => radius,
        ManifoldKind::Annulus { inner, outer } => inner.min(outer - inner),
        _ => f64::INFINITY,
    }
}

#[cfg(test)]
mod tests;
