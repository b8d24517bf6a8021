use super::*;
use crate::field::ScalarField;
use proptest::prelude::*;
use std::f64::consts::{FRAC_PI_2, PI};

fn v(c: &[f64]) -> Vector {
    Vector::from_slice(c)
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

fn library() -> Vec<ModelManifold> {
    vec![
        ModelManifold::new(ManifoldKind::Euclidean, 2).unwrap(),
        ModelManifold::new(ManifoldKind::Sphere { radius: 1.3 }, 2).unwrap(),
        ModelManifold::new(ManifoldKind::Sphere { radius: 1.0 }, 3).unwrap(),
        ModelManifold::new(ManifoldKind::Hyperbolic { radius: 0.8 }, 2).unwrap(),
        ModelManifold::new(ManifoldKind::HalfSpace, 2).unwrap(),
        ModelManifold::new(ManifoldKind::Ball { radius: 1.5 }, 3).unwrap(),
        ModelManifold::new(ManifoldKind::SphericalCap { radius: 1.0, angle: 1.2 }, 2).unwrap(),
        ModelManifold::new(ManifoldKind::SphericalCap { radius: 1.0, angle: 2.3 }, 2).unwrap(),
        ModelManifold::new(ManifoldKind::Annulus { inner: 1.0, outer: 4.0 }, 2).unwrap(),
    ]
}

// ---------- spec examples --------------------------------------------------

#[test]
fn distance_examples() {
    let e = ModelManifold::new(ManifoldKind::Euclidean, 2).unwrap();
    assert!(close(e.distance(&v(&[0.0, 0.0]), &v(&[3.0, 4.0])).unwrap(), 5.0, 1e-14));
    let s = ModelManifold::new(ManifoldKind::Sphere { radius: 1.0 }, 2).unwrap();
    let d = s.distance(&v(&[1.0, 0.0, 0.0]), &v(&[0.0, 1.0, 0.0])).unwrap();
    assert!(close(d, FRAC_PI_2, 1e-14));
    let a = ModelManifold::new(ManifoldKind::Annulus { inner: 1.0, outer: 4.0 }, 2).unwrap();
    let d = a.distance(&v(&[2.0, 0.0]), &v(&[-2.0, 0.0])).unwrap();
    assert!((4.0..=PI + 2.0).contains(&d), "{d}");
    assert!(close(d, 2.0 * 3f64.sqrt() + PI / 3.0, 1e-12));
}

#[test]
fn annulus_distance_matches_graph_oracle() {
    let a = ModelManifold::new(ManifoldKind::Annulus { inner: 1.0, outer: 4.0 }, 2).unwrap();
    let g = GeodesicGraph::new(&a, 0.02, 6, None).unwrap();
    let pairs = [
        ([2.0, 0.0], [-2.0, 0.0]),
        ([1.0, 0.0], [-1.0, 0.0]),
        ([3.5, 0.5], [-1.2, -0.3]),
        ([1.5, 1.5], [-2.5, 0.4]),
        ([2.0, 1.0], [3.0, -1.5]),
    ];
    for (x, y) in pairs {
        let (x, y) = (v(&x), v(&y));
        let closed = a.distance(&x, &y).unwrap();
        let graph = g.distance(&x, &y).unwrap();
        assert!((graph - closed).abs() <= 5e-3 * closed, "{closed} vs graph {graph}");
        assert!(graph >= closed - 1e-9);
    }
}

#[test]
fn exp_map_examples() {
    let e = ModelManifold::new(ManifoldKind::Euclidean, 2).unwrap();
    let y = e.exp_map(&v(&[1.0, 1.0]), &v(&[0.0, 2.0]));
    assert!(y.dist(&v(&[1.0, 3.0])) < 1e-15);
    let s = ModelManifold::new(ManifoldKind::Sphere { radius: 1.0 }, 2).unwrap();
    let y = s.exp_map(&v(&[1.0, 0.0, 0.0]), &v(&[0.0, FRAC_PI_2, 0.0]));
    assert!(y.dist(&v(&[0.0, 1.0, 0.0])) < 1e-15);
}

/// Integrates the geodesic equation of the hyperboloid
/// `x'' = <x', x'>_L x / a^2` with RK4.
fn hyperboloid_geodesic(x0: Vector, v0: Vector, a: f64, t: f64, n: usize) -> Vector {
    let mink = |u: &Vector, w: &Vector| u.dot(w) - 2.0 * u[0] * w[0];
    let rhs = |x: &Vector, p: &Vector| (*p, *x * (mink(p, p) / (a * a)));
    let (mut x, mut p) = (x0, v0);
    let h = t / n as f64;
    for _ in 0..n {
        let (k1x, k1p) = rhs(&x, &p);
        let (k2x, k2p) = rhs(&(x + k1x * (h / 2.0)), &(p + k1p * (h / 2.0)));
        let (k3x, k3p) = rhs(&(x + k2x * (h / 2.0)), &(p + k2p * (h / 2.0)));
        let (k4x, k4p) = rhs(&(x + k3x * h), &(p + k3p * h));
        x += (k1x + k2x * 2.0 + k3x * 2.0 + k4x) * (h / 6.0);
        p += (k1p + k2p * 2.0 + k3p * 2.0 + k4p) * (h / 6.0);
    }
    x
}

#[test]
fn hyperbolic_exp_matches_geodesic_ode() {
    let m = ModelManifold::new(ManifoldKind::Hyperbolic { radius: 1.0 }, 2).unwrap();
    let o = m.base_point();
    let u = v(&[0.0, 0.6, 0.8]);
    let closed = m.exp_map(&o, &u);
    let ode = hyperboloid_geodesic(o, u, 1.0, 1.0, 2000);
    assert!(closed.dist(&ode) < 1e-8, "{:?} vs {:?}", closed, ode);
    assert!(close(m.distance(&o, &closed).unwrap(), 1.0, 1e-12));
}

/// Parallel transport ODE on the sphere along `gamma(t) = exp_x(t w)`:
/// `V' = -<V, gamma'> gamma / a^2`.
fn sphere_transport_ode(m: &ModelManifold, x: &Vector, w: &Vector, v0: &Vector, a: f64, n: usize) -> Vector {
    let gamma = |t: f64| m.exp_map(x, &(*w * t));
    let dgamma = |t: f64| {
        let th = w.norm() / a;
        let u = *w * (1.0 / w.norm());
        let mut d = *x * (-(th * t).sin() * th);
        d.axpy((th * t).cos() * th * a, &u);
        d
    };
    let f = |t: f64, vv: &Vector| gamma(t) * (-vv.dot(&dgamma(t)) / (a * a));
    let h = 1.0 / n as f64;
    let mut vv = *v0;
    for i in 0..n {
        let t = i as f64 * h;
        let k1 = f(t, &vv);
        let k2 = f(t + h / 2.0, &(vv + k1 * (h / 2.0)));
        let k3 = f(t + h / 2.0, &(vv + k2 * (h / 2.0)));
        let k4 = f(t + h, &(vv + k3 * h));
        vv += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
    }
    vv
}

#[test]
fn sphere_transport_matches_ode() {
    let a = 1.0;
    let m = ModelManifold::new(ManifoldKind::Sphere { radius: a }, 2).unwrap();
    let x = v(&[1.0, 0.0, 0.0]);
    let y = v(&[0.0, 0.6, 0.8]);
    let w = m.log_map(&x, &y).unwrap();
    // geodesic tangent goes to geodesic tangent
    let moved = m.parallel_transport(&x, &y, &w).unwrap();
    let back = m.log_map(&y, &x).unwrap() * -1.0;
    assert!(moved.dist(&back) < 1e-12);
    for v0 in [w, v(&[0.0, 0.3, -0.7]), v(&[0.0, 1.0, 0.0])] {
        let v0 = m.project_tangent(&x, &v0);
        let closed = m.parallel_transport(&x, &y, &v0).unwrap();
        let ode = sphere_transport_ode(&m, &x, &w, &v0, a, 2000);
        assert!(closed.dist(&ode) < 1e-8, "{closed:?} vs {ode:?}");
    }
}

#[test]
fn log_map_examples() {
    let s = ModelManifold::new(ManifoldKind::Sphere { radius: 1.0 }, 2).unwrap();
    let x = v(&[1.0, 0.0, 0.0]);
    let l = s.log_map(&x, &v(&[0.0, 0.0, 1.0])).unwrap();
    assert!(l.dist(&v(&[0.0, 0.0, FRAC_PI_2])) < 1e-14);
    assert!(s.log_map(&x, &x).unwrap().norm() == 0.0);
    let e = ModelManifold::new(ManifoldKind::Euclidean, 2).unwrap();
    assert!(e.log_map(&v(&[1.0, 2.0]), &v(&[-1.0, 0.5])).unwrap().dist(&v(&[-2.0, -1.5])) < 1e-15);
    assert!(matches!(s.log_map(&x, &v(&[-1.0, 0.0, 0.0])), Err(Error::CutLocus { .. })));
}

#[test]
fn boundary_examples() {
    let h = ModelManifold::new(ManifoldKind::HalfSpace, 3).unwrap();
    let x = v(&[0.2, -1.0, 0.3]);
    assert!(close(h.boundary_distance(&x).unwrap(), 0.3, 1e-15));
    assert_eq!(h.inward_normal(&x).unwrap(), v(&[0.0, 0.0, 1.0]));
    let b = ModelManifold::new(ManifoldKind::Ball { radius: 1.0 }, 2).unwrap();
    let x = v(&[0.6, 0.8]);
    assert!(b.boundary_distance(&x).unwrap().abs() < 1e-15);
    assert!(b.inward_normal(&x).unwrap().dist(&(x * -1.0)) < 1e-15);
    let a = ModelManifold::new(ManifoldKind::Annulus { inner: 1.0, outer: 4.0 }, 2).unwrap();
    let x = v(&[0.0, 1.0]);
    assert!(a.boundary_distance(&x).unwrap().abs() < 1e-15);
    assert!(a.inward_normal(&x).unwrap().dist(&x) < 1e-15);
    let e = ModelManifold::new(ManifoldKind::Euclidean, 2).unwrap();
    assert!(matches!(e.boundary_distance(&v(&[0.0, 0.0])), Err(Error::NoBoundary)));
}

#[test]
fn second_fundamental_form_examples() {
    let h = ModelManifold::new(ManifoldKind::HalfSpace, 2).unwrap();
    assert_eq!(h.second_fundamental_form(&v(&[0.4, 0.0]), &v(&[1.0, 0.0])).unwrap(), 0.0);
    let b = ModelManifold::new(ManifoldKind::Ball { radius: 2.0 }, 2).unwrap();
    assert!(close(b.second_fundamental_form(&v(&[2.0, 0.0]), &v(&[0.0, 1.0])).unwrap(), 0.5, 1e-15));
    let a = ModelManifold::new(ManifoldKind::Annulus { inner: 1.5, outer: 4.0 }, 2).unwrap();
    let ii = a.second_fundamental_form(&v(&[0.0, 1.5]), &v(&[1.0, 0.0])).unwrap();
    assert!(close(ii, -1.0 / 1.5, 1e-15));
    assert!(matches!(
        b.second_fundamental_form(&v(&[2.0, 0.0]), &v(&[1.0, 0.0])),
        Err(Error::NotTangent { .. })
    ));
}

/// `II(u, u) = -<grad_u N, u>` by differentiating the normal field along a
/// boundary curve through `x` with velocity `u`.
fn sff_by_differences(m: &ModelManifold, x: &Vector, u: &Vector) -> f64 {
    let h = 1e-5;
    let curve = |t: f64| m.project_to_boundary(&m.exp_map(x, &(*u * t))).unwrap();
    let np = m.inward_normal(&curve(h)).unwrap();
    let nm = m.inward_normal(&curve(-h)).unwrap();
    let dn = (np - nm) * (0.5 / h);
    -m.inner(x, &m.project_tangent(x, &dn), u)
}

#[test]
fn second_fundamental_form_matches_normal_variation() {
    for m in library().into_iter().filter(|m| m.has_boundary()) {
        for x in m.boundary_samples(20).unwrap() {
            let n = m.inward_normal(&x).unwrap();
            for e in m.tangent_basis(&x).vectors() {
                let mut u = *e;
                u.axpy(-m.inner(&x, &u, &n), &n);
                if m.norm(&x, &u) < 1e-3 {
                    continue;
                }
                let u = u * (1.0 / m.norm(&x, &u));
                let closed = m.second_fundamental_form(&x, &u).unwrap();
                let fd = sff_by_differences(&m, &x, &u);
                assert!(close(closed, fd, 1e-5), "{} at {x:?}: {closed} vs {fd}", m.kind().name());
            }
        }
    }
}

#[test]
fn curvature_constant_examples() {
    let e = ModelManifold::new(ManifoldKind::Euclidean, 2).unwrap();
    assert_eq!(e.curvature_constants().k, 0.0);
    let h = ModelManifold::new(ManifoldKind::HalfSpace, 2).unwrap();
    assert_eq!(h.curvature_constants().sigma, 0.0);
    let ou = e.clone().with_drift(DriftField::RadialLinear { rate: 0.7 }).unwrap();
    assert!(close(ou.curvature_constants().k, -0.7, 1e-15));
    let s = ModelManifold::new(ManifoldKind::Sphere { radius: 1.0 }, 2).unwrap();
    assert!(close(s.curvature_constants().k, -1.0, 1e-15));
    let a = ModelManifold::new(ManifoldKind::Annulus { inner: 1.0, outer: 4.0 }, 2).unwrap();
    let c = a.curvature_constants();
    assert!(close(c.sigma, 1.0, 1e-15) && close(c.gamma, 0.25, 1e-15));
}

/// `Ric(u,u) - <grad_u Z, u>` with the covariant derivative of `Z` taken by
/// central differences along the geodesic in direction `u`.
fn bakry_emery_by_differences(m: &ModelManifold, x: &Vector, u: &Vector) -> f64 {
    let h = 1e-5;
    let zp = m.drift_at(&m.exp_map(x, &(*u * h)));
    let zm = m.drift_at(&m.exp_map(x, &(*u * -h)));
    let dz = m.project_tangent(x, &((zp - zm) * (0.5 / h)));
    m.ricci(x, u) - m.inner(x, &dz, u)
}

#[test]
fn curvature_constants_bound_sampled_bakry_emery() {
    let cases = vec![
        ModelManifold::new(ManifoldKind::Euclidean, 2)
            .unwrap()
            .with_drift(DriftField::RadialLinear { rate: 1.0 })
            .unwrap(),
        ModelManifold::new(ManifoldKind::Ball { radius: 2.0 }, 3)
            .unwrap()
            .with_drift(DriftField::LinearPotential { coef: v(&[0.3, -0.2, 0.5]) })
            .unwrap(),
        ModelManifold::new(ManifoldKind::Sphere { radius: 1.0 }, 2)
            .unwrap()
            .with_drift(DriftField::HeightPotential { coef: 0.8 })
            .unwrap(),
        ModelManifold::new(ManifoldKind::SphericalCap { radius: 1.5, angle: 1.0 }, 3)
            .unwrap()
            .with_drift(DriftField::HeightPotential { coef: -0.6 })
            .unwrap(),
        ModelManifold::new(ManifoldKind::Hyperbolic { radius: 1.0 }, 3).unwrap(),
        ModelManifold::new(ManifoldKind::Annulus { inner: 1.0, outer: 4.0 }, 2).unwrap(),
    ];
    for m in cases {
        let k = m.curvature_constants().k;
        let mut worst = f64::INFINITY;
        for (i, x) in m.sample_grid(1000).iter().enumerate() {
            let frame = m.tangent_basis(x);
            let u = frame.combine(&crate::numerics::halton(i as u64, m.dim())[..m.dim()].iter().map(|c| c - 0.5).collect::<Vec<_>>());
            let nu = m.norm(x, &u);
            if nu < 1e-6 {
                continue;
            }
            let u = u * (1.0 / nu);
            let fd = bakry_emery_by_differences(&m, x, &u);
            let closed = m.bakry_emery(x, &u);
            assert!(close(fd, closed, 1e-4), "{}: {fd} vs {closed}", m.kind().name());
            assert!(closed >= -k - 1e-10, "{}: Ric - grad Z = {closed} < -K = {}", m.kind().name(), -k);
            worst = worst.min(closed);
        }
        // the constant is attained up to the sampling resolution
        assert!(worst <= -k + 0.05 * (1.0 + k.abs()), "{}: K = {k} not sharp, worst {worst}", m.kind().name());
    }
}

#[test]
fn drift_sup_dominates_samples() {
    let m = ModelManifold::new(ManifoldKind::SphericalCap { radius: 2.0, angle: 2.0 }, 2)
        .unwrap()
        .with_drift(DriftField::HeightPotential { coef: 1.3 })
        .unwrap();
    let sup = m.drift_sup().unwrap();
    for x in m.sample_grid(10_000) {
        assert!(m.norm(&x, &m.drift_at(&x)) <= sup + 1e-12);
    }
}

#[test]
fn frames_are_orthonormal() {
    for m in library() {
        for x in m.sample_grid(200) {
            let f = m.tangent_basis(&x);
            assert!(m.frame_residual(&x, &f) < 1e-12, "{}", m.kind().name());
        }
    }
}

#[test]
fn samples_lie_in_domain() {
    for m in library() {
        for x in m.sample_grid(1000) {
            assert!(m.contains(&x), "{} {x:?}", m.kind().name());
        }
        if m.has_boundary() {
            for x in m.boundary_samples(100).unwrap() {
                assert!(m.boundary_distance(&x).unwrap().abs() < 1e-9);
            }
        }
    }
}

#[test]
fn cap_wrap_distance() {
    // great-circle arc through the excluded polar region is blocked
    let m = ModelManifold::new(ManifoldKind::SphericalCap { radius: 1.0, angle: 2.5 }, 2).unwrap();
    let phi: f64 = 2.45;
    let x = v(&[phi.sin(), 0.0, phi.cos()]);
    let y = v(&[-phi.sin(), 0.0, phi.cos()]);
    let d = m.distance(&x, &y).unwrap();
    let geodesic_on_sphere = 2.0 * (PI - phi);
    assert!(d > geodesic_on_sphere);
    // the wrap is shorter than going around the rim at constant polar angle
    let rim = PI * phi.sin();
    assert!(d < rim);
    assert!(matches!(m.log_map(&x, &y), Err(Error::GeodesicLeavesDomain)));
}

#[test]
fn reflection_examples() {
    let h = ModelManifold::new(ManifoldKind::HalfSpace, 1).unwrap();
    let (p, dl) = reflect(&h, &v(&[-0.1])).unwrap();
    assert!(close(p[0], 0.1, 1e-15) && close(dl, 0.2, 1e-15));
    let (p, dl) = reflect(&h, &v(&[0.4])).unwrap();
    assert!(p[0] == 0.4 && dl == 0.0);
    let b = ModelManifold::new(ManifoldKind::Ball { radius: 1.0 }, 2).unwrap();
    let (p, dl) = reflect(&b, &v(&[1.2, 0.0])).unwrap();
    assert!(p.dist(&v(&[0.8, 0.0])) < 1e-15 && close(dl, 0.4, 1e-15));
    let c = ModelManifold::new(ManifoldKind::SphericalCap { radius: 1.0, angle: FRAC_PI_2 }, 2).unwrap();
    let (p, dl) = reflect(&c, &v(&[0.0, 0.1f64.cos(), -0.1f64.sin()])).unwrap();
    assert!(p.dist(&v(&[0.0, 0.1f64.cos(), 0.1f64.sin()])) < 1e-15 && close(dl, 0.2, 1e-15));
}

#[test]
fn conformal_identity_factor() {
    let m = ModelManifold::new(ManifoldKind::Ball { radius: 1.0 }, 2)
        .unwrap()
        .with_drift(DriftField::LinearPotential { coef: v(&[0.5, 0.0]) })
        .unwrap();
    let c = conformal_rescale(&m, &ScalarField::constant(1.0), &ConformalOptions::default()).unwrap();
    let k = m.curvature_constants().k;
    assert!(close(c.raw.k_prime, k, 1e-12));
    assert!(close(c.raw.grad_f, 0.0, 1e-15));
    assert!(close(c.kappa_f_raw, k.max(0.0), 1e-12));
    let x = v(&[0.3, 0.2]);
    assert!(c.primed_drift(&x).dist(&m.drift_at(&x)) < 1e-15);
    assert!(close(c.primed_inner(&x, &v(&[1.0, 2.0]), &v(&[3.0, -1.0])), 1.0, 1e-15));
}

#[test]
fn conformal_rejects_bad_factor() {
    let a = ModelManifold::new(ManifoldKind::Annulus { inner: 1.0, outer: 4.0 }, 2).unwrap();
    let err = conformal_rescale(&a, &ScalarField::constant(1.0), &ConformalOptions::default()).unwrap_err();
    assert!(err.to_string().contains("N log f"), "{err}");
    let e = ModelManifold::new(ManifoldKind::Euclidean, 2).unwrap();
    let f = ScalarField::parse("0.5 + x1*x1").unwrap();
    assert!(conformal_rescale(&e, &f, &ConformalOptions::default()).is_err());
}

#[test]
fn primed_distance_of_constant_factor_scales() {
    let m = ModelManifold::new(ManifoldKind::Ball { radius: 1.0 }, 2).unwrap();
    let c = conformal_rescale(&m, &ScalarField::constant(2.0), &ConformalOptions { samples: 500, ..Default::default() }).unwrap();
    let g = c.primed_graph(0.02, 6).unwrap();
    let (x, y) = (v(&[-0.5, 0.1]), v(&[0.6, -0.3]));
    let d = g.distance(&x, &y).unwrap();
    assert!(close(d, 0.5 * x.dist(&y), 1e-12), "{d}");
}

// ---------- properties ---------------------------------------------------

fn arb_point(m: ModelManifold) -> impl Strategy<Value = Vector> {
    (0u64..1_000_000).prop_map(move |i| {
        let u = crate::numerics::halton(i, m.ambient_dim() + 1);
        let grid = m.sample_grid(64);
        let base = grid[(u[0] * 64.0) as usize % 64];
        let frame = m.tangent_basis(&base);
        let coeffs: Vec<f64> = (0..m.dim()).map(|k| 0.4 * (u[k + 1] - 0.5)).collect();
        let y = m.exp_map(&base, &frame.combine(&coeffs));
        if m.contains(&y) {
            y
        } else {
            base
        }
    })
}

fn arb_manifold() -> impl Strategy<Value = ModelManifold> {
    (0usize..9).prop_map(|i| library()[i].clone())
}

fn arb_triple() -> impl Strategy<Value = (ModelManifold, Vector, Vector, Vector)> {
    arb_manifold().prop_flat_map(|m| {
        let pm = m.clone();
        (Just(m), arb_point(pm.clone()), arb_point(pm.clone()), arb_point(pm))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn distance_is_a_metric((m, x, y, z) in arb_triple()) {
        let dxy = m.distance(&x, &y).unwrap();
        let dyx = m.distance(&y, &x).unwrap();
        prop_assert!(dxy >= 0.0);
        prop_assert!((dxy - dyx).abs() <= 1e-10);
        prop_assert!(m.distance(&x, &x).unwrap() <= 1e-10);
        if x.dist(&y) > 1e-6 {
            prop_assert!(dxy > 0.0);
        }
        let dxz = m.distance(&x, &z).unwrap();
        let dzy = m.distance(&z, &y).unwrap();
        prop_assert!(dxy <= dxz + dzy + 1e-8, "{}: {} > {} + {}", m.kind().name(), dxy, dxz, dzy);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn exp_log_round_trip((m, x, y, _z) in arb_triple()) {
        match m.log_map(&x, &y) {
            Ok(l) => {
                let back = m.exp_map(&x, &l);
                prop_assert!(m.distance_unchecked(&back, &y) <= 1e-8);
                prop_assert!((m.norm(&x, &l) - m.distance(&x, &y).unwrap()).abs() <= 1e-8);
            }
            Err(Error::GeodesicLeavesDomain) | Err(Error::CutLocus { .. }) => {}
            Err(e) => prop_assert!(false, "{e}"),
        }
    }

    #[test]
    fn transport_is_an_isometry((m, x, y, z) in arb_triple()) {
        if m.log_map(&x, &y).is_err() {
            return Ok(());
        }
        let frame = m.tangent_basis(&x);
        let u = frame.combine(&z.as_slice()[..m.dim()]);
        let w = frame.vectors()[0];
        let pu = m.parallel_transport(&x, &y, &u).unwrap();
        let pw = m.parallel_transport(&x, &y, &w).unwrap();
        prop_assert!(m.tangency_residual(&y, &pu) <= 1e-10);
        prop_assert!((m.norm(&y, &pu) - m.norm(&x, &u)).abs() <= 1e-10);
        prop_assert!((m.inner(&y, &pu, &pw) - m.inner(&x, &u, &w)).abs() <= 1e-10);
        let g = m.log_map(&x, &y).unwrap();
        let pg = m.parallel_transport(&x, &y, &g).unwrap();
        prop_assert!((m.inner(&y, &pu, &pg) - m.inner(&x, &u, &g)).abs() <= 1e-9);
        let back = m.parallel_transport(&y, &x, &pu).unwrap();
        prop_assert!(back.dist(&u) <= 1e-8);
        let same = m.parallel_transport(&x, &x, &u).unwrap();
        prop_assert!(same.dist(&u) <= 1e-12);
    }

    #[test]
    fn second_fundamental_form_polarizes(i in 0u64..10_000, s in -2.0f64..2.0, t in -2.0f64..2.0) {
        for m in library().into_iter().filter(|m| m.has_boundary()) {
            let x = m.boundary_samples(64).unwrap()[(i % 64) as usize];
            let n = m.inward_normal(&x).unwrap();
            let frame = m.tangent_basis(&x);
            let tangential = |c: &[f64]| {
                let mut u = frame.combine(c);
                u.axpy(-m.inner(&x, &u, &n), &n);
                u
            };
            let h = crate::numerics::halton(i, 2 * m.dim());
            let u = tangential(&h[..m.dim()].iter().map(|c| s * (c - 0.5)).collect::<Vec<_>>());
            let w = tangential(&h[m.dim()..2 * m.dim()].iter().map(|c| t * (c - 0.5)).collect::<Vec<_>>());
            let b = m.second_fundamental_form_bilinear(&x, &u, &w).unwrap();
            let pol = 0.25 * (m.second_fundamental_form(&x, &(u + w)).unwrap() - m.second_fundamental_form(&x, &(u - w)).unwrap());
            prop_assert!((b - pol).abs() <= 1e-12);
            prop_assert!((b - m.second_fundamental_form_bilinear(&x, &w, &u).unwrap()).abs() <= 1e-14);
        }
    }
}
