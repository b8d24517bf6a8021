use super::*;
use crate::diffusion::{InitialLaw, SimConfig};
use crate::field::ScalarField;
use crate::geometry::{DriftField, ManifoldKind, ModelManifold};
use crate::pathlaw::PathDensity;
use proptest::prelude::*;

fn euclid(d: usize) -> ModelManifold {
    ModelManifold::new(ManifoldKind::Euclidean, d).unwrap()
}

fn opts(t: f64, n_steps: usize, n_paths: usize, seed: u64) -> CheckOptions {
    CheckOptions::new(SimConfig::new(t, n_steps, n_paths, seed))
}

#[test]
fn chi_is_continuous_at_zero_curvature() {
    for t in [0.1, 1.0, 3.0] {
        let below = chi(-1e-7, t);
        let above = chi(1e-7, t);
        assert!((chi(0.0, t) - 2.0 * t).abs() < 1e-14);
        assert!((below - above).abs() < 1e-5 * t);
        assert!(chi(-2.0, t) > 0.0);
    }
}

#[test]
fn inf_over_r_matches_stationarity_condition() {
    for (p, x, g) in [(1.0, 0.5, 1.0), (2.0, 0.1, 3.0), (0.7, 2.0, 0.05)] {
        let r = inf_over_r(p, x, g);
        // d/dR log h = 0  <=>  R (R + 1) = 1 / (2 G X)
        let c = 1.0 / (2.0 * g * x);
        let r_star = (-1.0 + (1.0 + 4.0 * c).sqrt()) / 2.0;
        assert!((r.r_opt - r_star).abs() < 1e-5 * r_star, "{} vs {}", r.r_opt, r_star);
        let h = (1.0 + 1.0 / r_star) * p * x * (2.0 * (1.0 + r_star) * g * x).exp();
        assert!((r.value - h).abs() < 1e-10 * h);
        assert!(r.scan_agrees);
        assert!(r.value <= r.value_r1);
    }
}

#[test]
fn inf_over_r_without_gradient_is_the_limit() {
    let r = inf_over_r(3.0, 0.25, 0.0);
    assert_eq!(r.value, 0.75);
    assert!(r.r_opt.is_infinite());
    assert_eq!(r.value_r1, 1.5);
}

#[test]
fn verdict_bands() {
    assert_eq!(verdict(1.0, 1.0, 0.0), Verdict::Pass);
    assert_eq!(verdict(1.29, 1.0, 0.1), Verdict::Pass);
    assert_eq!(verdict(1.4, 1.0, 0.1), Verdict::Inconclusive);
    assert_eq!(verdict(1.51, 1.0, 0.1), Verdict::Fail);
    assert_eq!(verdict(f64::NAN, 1.0, 0.1), Verdict::Inconclusive);
    assert_eq!(verdict(1.0 + 1e-14, 1.0, 0.0), Verdict::Pass);
}

#[test]
fn diagnostics_override_the_verdict() {
    let mut r = InequalityReport::new("x", "a <= b", 1.0, 2.0, 0.1, 0.1);
    assert_eq!(r.verdict, Verdict::Pass);
    r.diagnostics.ess_share = Some(0.05);
    r.update_verdict();
    assert_eq!(r.verdict, Verdict::Inconclusive);
    r.diagnostics.ess_share = Some(0.5);
    r.diagnostics.grid_stable = Some(false);
    r.update_verdict();
    assert_eq!(r.verdict, Verdict::Inconclusive);

    let mut s = InequalityReport::new("y", "a <= b", 1.2, 1.0, 1.0, 1.0);
    assert_eq!(s.verdict, Verdict::Pass);
    s.diagnostics.se_margin = Some(0.01);
    s.update_verdict();
    assert_eq!(s.verdict, Verdict::Fail);
    assert!((s.sigmas() + 20.0).abs() < 1e-9);
}

#[test]
fn report_serializes_lowercase_verdict() {
    let r = InequalityReport::new("x", "a <= b", 0.0, 1.0, 0.0, 0.0).with_value("k", 0.0);
    let j = serde_json::to_value(&r).unwrap();
    assert_eq!(j["verdict"], "pass");
    assert_eq!(j["diagnostics"]["values"]["k"], 0.0);
    assert!(j["diagnostics"].get("ess").is_none());
}

#[test]
fn trivial_density_gives_zero_entropy_and_passes() {
    let m = euclid(1);
    let o = m.point(&[0.0]).unwrap();
    let mut c = opts(0.5, 8, 200, 3);
    c.grid_refinement = false;
    let r = check_pathspace_talagrand(&m, &InitialLaw::Dirac(o), &PathDensity::endpoint(ScalarField::constant(1.0)), &c).unwrap();
    assert_eq!(r.rhs, 0.0);
    assert_eq!(r.verdict, Verdict::Pass, "{r:?}");
    assert!(r.lhs <= 3.0 * r.combined_se() + 1e-12);
}

#[test]
fn gaussian_tilt_is_near_equality() {
    // Tilting N(0, 2T) by exp(a x) shifts it by 2Ta: W^2 = 4T^2a^2 = 4T Ent.
    let m = euclid(1);
    let o = m.point(&[0.0]).unwrap();
    let t = 0.5;
    let a = 1.0;
    let c = opts(t, 8, 600, 11);
    let r = check_endpoint_talagrand(&m, &o, &ScalarField::parse("exp(x1)").unwrap(), &c).unwrap();
    let exact = 4.0 * t * t * a * a;
    assert!((r.rhs - exact).abs() < 0.15 * exact, "rhs {} vs {exact}", r.rhs);
    assert!((r.lhs - exact).abs() < 0.2 * exact, "lhs {} vs {exact}", r.lhs);
    assert_ne!(r.verdict, Verdict::Fail, "{r:?}");
}

#[test]
fn ou_marginals_contract_at_the_exact_rate() {
    let m = euclid(1).with_drift(DriftField::RadialLinear { rate: 1.0 }).unwrap();
    assert!((m.curvature_constants().k + 1.0).abs() < 1e-12);
    let x = m.point(&[-0.5]).unwrap();
    let y = m.point(&[0.5]).unwrap();
    let c = opts(1.0, 16, 400, 5);
    let r = check_marginal_contraction(&m, &ContractionInput::Points { x, y }, 2.0, &c).unwrap();
    let bound = (-1.0f64).exp();
    assert!((r.rhs - bound * bound).abs() < 1e-12);
    assert_ne!(r.verdict, Verdict::Fail, "{r:?}");
    assert!(r.diagnostics.values["coupled_max_ratio"] <= 1.0 + 1e-9);
}

#[test]
fn constant_function_is_equality_in_logsobolev() {
    let m = ModelManifold::new(ManifoldKind::Sphere { radius: 1.0 }, 2).unwrap();
    let o = m.base_point();
    let c = opts(0.3, 8, 100, 1);
    let r = check_logsobolev(&m, &o, &ScalarField::constant(2.0), &c).unwrap();
    assert!((r.lhs - r.rhs).abs() < 1e-12);
    assert_eq!(r.verdict, Verdict::Pass);
}

#[test]
fn exponential_is_equality_in_logsobolev_on_the_line() {
    // Under N(0, 2T): Ent(e^{2ax}) = 4 a^2 T E e^{2ax} = 2 chi(0,T) P_T |f'|^2.
    let m = euclid(1);
    let o = m.point(&[0.0]).unwrap();
    let c = opts(0.5, 4, 20000, 4);
    let r = check_logsobolev(&m, &o, &ScalarField::parse("exp(0.5*x1)").unwrap(), &c).unwrap();
    let se = r.diagnostics.se_margin.unwrap();
    assert!((r.lhs - r.rhs).abs() < 4.0 * se, "{r:?}");
    assert!(r.diagnostics.values["margin_half_chi"] < 0.0);
}

#[test]
fn poincare_for_a_coordinate_on_the_line() {
    // P_T x^2 = 2T = chi(0,T) P_T |x'|^2 with P_T x = 0.
    let m = euclid(1);
    let o = m.point(&[0.0]).unwrap();
    let c = opts(0.5, 4, 4000, 2);
    let r = check_poincare(&m, &o, &ScalarField::coord(0), &c).unwrap();
    assert!((r.lhs - 1.0).abs() < 0.1, "{}", r.lhs);
    assert_eq!(r.verdict, Verdict::Pass, "{r:?}");
}

#[test]
fn halfspace_boundary_has_no_second_fundamental_form() {
    let m = ModelManifold::new(ManifoldKind::HalfSpace, 2).unwrap();
    let o = m.point(&[0.0, 0.0]).unwrap();
    let f = ScalarField::parse("x1 + x2^2").unwrap();
    let s = SffOptions::geometric(0.04, 4, 8, 1000, 9);
    let r = check_sff_asymptotics(&m, &o, &f, &s).unwrap();
    assert_eq!(r.target, 0.0);
    assert!(r.limit.mean.abs() < 4.0 * r.limit.se + 0.05, "{:?}", r.limit);
}

#[test]
fn sff_rejects_non_neumann_functions() {
    let m = ModelManifold::new(ManifoldKind::HalfSpace, 2).unwrap();
    let o = m.point(&[0.0, 0.0]).unwrap();
    let s = SffOptions::geometric(0.04, 4, 8, 100, 9);
    assert!(check_sff_asymptotics(&m, &o, &ScalarField::coord(1), &s).is_err());
    let inner = m.point(&[0.0, 1.0]).unwrap();
    assert!(check_sff_asymptotics(&m, &inner, &ScalarField::coord(0), &s).is_err());
}

#[test]
fn nonconvex_checks_require_their_inputs() {
    let m = ModelManifold::new(ManifoldKind::Annulus { inner: 1.0, outer: 2.0 }, 2).unwrap();
    let o = m.point(&[1.5, 0.0]).unwrap();
    let c = opts(0.25, 8, 50, 1);
    assert!(check_logsobolev(&m, &o, &ScalarField::constant(1.0), &c).is_err());
    assert!(check_pathspace_talagrand(&m, &InitialLaw::Dirac(o), &PathDensity::endpoint(ScalarField::constant(1.0)), &c).is_err());
}

#[test]
fn explicit_constants_at_the_reference_profile() {
    let p = crate::geometry::BoundaryProfile::new(1.0, 1.0, 1.0, 0.5, 2).unwrap();
    let c = explicit_constants(&p, 1.0, 0.0, 0.25);
    assert!(c.theta > 0.0 && c.theta_from_bounds > 0.0);
    let x = chi(c.theta, 0.25);
    assert!((c.transport - 9.0 * x * (4.0 * x).exp()).abs() < 1e-9 * c.transport);
    assert!((c.contraction - 3.0 * ((c.theta + 1.0) * 0.25).exp()).abs() < 1e-12);
}

proptest! {
    #[test]
    fn verdict_is_monotone_in_rhs(lhs in -5.0..5.0f64, rhs in -5.0..5.0f64, se in 0.0..1.0f64, bump in 0.0..2.0f64) {
        let rank = |v: Verdict| match v { Verdict::Fail => 0, Verdict::Inconclusive => 1, Verdict::Pass => 2 };
        prop_assert!(rank(verdict(lhs, rhs + bump, se)) >= rank(verdict(lhs, rhs, se)));
        prop_assert!(rank(verdict(lhs, rhs, se + bump)) >= rank(verdict(lhs, rhs, se)));
    }

    #[test]
    fn inf_over_r_is_bracketed(p in 0.1..10.0f64, x in 1e-3..3.0f64, g in 1e-3..3.0f64) {
        let r = inf_over_r(p, x, g);
        prop_assert!(r.value >= p * x * (2.0 * g * x).exp() * (1.0 - 1e-12));
        prop_assert!(r.value <= r.value_r1 * (1.0 + 1e-12));
        prop_assert!(r.scan_agrees);
    }

    #[test]
    fn chi_is_increasing_in_curvature(k1 in -3.0..3.0f64, dk in 0.0..2.0f64, t in 0.01..2.0f64) {
        prop_assert!(chi(k1 + dk, t) >= chi(k1, t) * (1.0 - 1e-12));
    }
}

