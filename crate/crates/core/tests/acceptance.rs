//! Acceptance gate: one pass/fail line per criterion.
//!
//! Run everything with `cargo test --test acceptance`, or a subset by
//! number: `cargo test --test acceptance -- 3 9`.

use motc::coupling::simulate_coupled;
use motc::diffusion::{hitting_tail, local_time_profile, Record, SimConfig};
use motc::field::ScalarField;
use motc::geometry::{conformal_rescale, ConformalOptions, BoundaryProfile, DriftField, ManifoldKind, ModelManifold};
use motc::linalg::Point;
use motc::pathlaw::PathDensity;
use motc::rng::NoiseStream;
use motc::transport::{point_cost, solve, w_exact, CostMatrix, Ground, Method, SolverOptions};
use motc::verify::{
    check_endpoint_talagrand, check_logsobolev, check_marginal_contraction, check_nonconvex, check_pathspace_talagrand,
    check_poincare, check_sff_asymptotics, check_variance_expansion, chi, CheckOptions, ContractionInput,
    InequalityReport, NonconvexInput, SffOptions, Verdict, SFF_COEFFICIENT, VARIANCE_COEFFICIENT,
};
use motc::diffusion::InitialLaw;
use std::f64::consts::PI;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

struct Outcome {
    pass: bool,
    detail: String,
}

type Criterion = (&'static str, fn() -> Outcome);

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn manifold(kind: ManifoldKind, d: usize) -> ModelManifold {
    ModelManifold::new(kind, d).expect("valid manifold")
}

fn field(src: &str) -> ScalarField {
    ScalarField::parse(src).expect("valid field")
}

fn within_3se(r: &InequalityReport) -> bool {
    r.margin.abs() <= 3.0 * r.combined_se()
}

fn brief(r: &InequalityReport) -> String {
    format!(
        "{} lhs={:.5} rhs={:.5} se={:.2e} {}",
        r.name,
        r.lhs,
        r.rhs,
        r.combined_se(),
        r.verdict.as_str()
    )
}

/// Gaussian equality anchor.
fn c1() -> Outcome {
    let start = Instant::now();
    let m = manifold(ManifoldKind::Euclidean, 1);
    let o = m.point(&[0.0]).unwrap();
    let (a, t, n) = (0.8, 0.5, 4096);
    let mut opts = CheckOptions::new(SimConfig::new(t, 4, n, 20_240_501));
    opts.solver.method = Method::Exact;
    opts.solver.max_exact_entries = n * n;
    let r = check_endpoint_talagrand(&m, &o, &field("exp(0.8*x1)"), &opts).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let population = 4.0 * a * a * t * t;
    let ok = within_3se(&r) && r.verdict == Verdict::Pass && secs < 120.0;
    outcome(ok, format!("{} population={population:.5} margin/se={:.2} time={secs:.1}s", brief(&r), r.sigmas()))
}

/// OU contraction anchor.
fn c2() -> Outcome {
    let m = manifold(ManifoldKind::Euclidean, 2).with_drift(DriftField::RadialLinear { rate: 1.0 }).unwrap();
    let x = m.point(&[0.0, 0.0]).unwrap();
    let y = m.point(&[0.6, 0.8]).unwrap();
    let cfg = SimConfig::new(1.0, 10_000, 32, 7);
    let dt = cfg.dt();
    let ens = simulate_coupled(&m, &x, &y, &cfg, &Record::Full, None).unwrap();
    let mut worst = 0.0f64;
    for p in &ens.pairs {
        for (i, &step) in ens.steps.iter().enumerate() {
            worst = worst.max((p.distance_profile[i] - (-cfg.time(step)).exp()).abs());
        }
    }
    let paths_ok = worst <= 10.0 * dt;
    let opts = CheckOptions::new(SimConfig::new(1.0, 64, 1000, 8));
    let r = check_marginal_contraction(&m, &ContractionInput::Points { x, y }, 2.0, &opts).unwrap();
    let ok = paths_ok && within_3se(&r);
    outcome(ok, format!("max|rho_t - e^-t|={worst:.2e} (<= {:.0e}); {} margin/se={:.2}", 10.0 * dt, brief(&r), r.sigmas()))
}

/// Local time at the boundary of the half-line.
fn c3() -> Outcome {
    let start = Instant::now();
    let m = manifold(ManifoldKind::HalfSpace, 1);
    let o = m.point(&[0.0]).unwrap();
    let t: Vec<f64> = (1..=10).map(|k| 0.01 * k as f64).collect();
    let cfg = SimConfig::new(0.1, 1000, 100_000, 31);
    let lt = local_time_profile(&m, &o, 1e3, &t, &cfg).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let mut ok = lt.c_fit.is_finite() && secs < 120.0;
    let mut worst = 0.0f64;
    for ((t, e), g) in lt.t.iter().zip(&lt.mean).zip(&lt.target) {
        let allowed = (3.0 * e.se).max(lt.c_fit * t);
        worst = worst.max((e.mean - g).abs() / allowed);
        ok &= (e.mean - g).abs() <= allowed;
    }
    outcome(ok, format!("C_fit={:.4} C_max={:.4} worst dev/allowed={worst:.2} time={secs:.1}s", lt.c_fit, lt.c_max))
}

/// Short-time hitting tail.
fn c4() -> Outcome {
    let m = manifold(ManifoldKind::HalfSpace, 1);
    let o = m.point(&[0.0]).unwrap();
    let t: Vec<f64> = (0..24).map(|k| 0.02 + 0.02 * k as f64).collect();
    let cfg = SimConfig::new(0.5, 2000, 100_000, 41);
    let h = hitting_tail(&m, &o, 1.0, &t, &cfg).unwrap();
    match h.fit {
        Some(f) => outcome(
            f.r_squared >= 0.95,
            format!("R^2={:.4} c2={:.4} points={}", f.r_squared, f.c2, f.t_used.len()),
        ),
        None => outcome(false, "too few probabilities inside (1e-4, 0.5)".into()),
    }
}

fn sff_case(m: &ModelManifold, o: &Point, f: &str, expected: f64, seed: u64) -> (bool, String) {
    let start = Instant::now();
    let opts = SffOptions::geometric(0.0256, 5, 32, 200_000, seed);
    let r = check_sff_asymptotics(m, o, &field(f), &opts).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let ok = (r.target - expected).abs() < 1e-9 && r.relative_error <= 0.15 && secs < 600.0;
    (
        ok,
        format!(
            "limit={:.4}±{:.4} target={:.4} rel={:.3} time={secs:.0}s",
            r.limit.mean, r.limit.se, r.target, r.relative_error
        ),
    )
}

/// Second fundamental form from the short-time gradient asymptotics.
fn c5() -> Outcome {
    let disk = manifold(ManifoldKind::Ball { radius: 1.0 }, 2);
    let (ok_d, det_d) = sff_case(&disk, &disk.point(&[1.0, 0.0]).unwrap(), "x2*(3 - x1^2 - x2^2)/2", SFF_COEFFICIENT, 51);
    let r_in = 1.0;
    let ann = manifold(ManifoldKind::Annulus { inner: r_in, outer: 4.0 }, 2);
    let (ok_a, det_a) =
        sff_case(&ann, &ann.point(&[r_in, 0.0]).unwrap(), "x2*(1 + 1/(x1^2 + x2^2))/2", -SFF_COEFFICIENT / r_in, 52);
    outcome(ok_d && ok_a, format!("disk: {det_d}; annulus inner: {det_a}"))
}

/// Boundary coefficient of the variance expansion.
fn c6() -> Outcome {
    let disk = manifold(ManifoldKind::Ball { radius: 1.0 }, 2);
    let o = disk.point(&[1.0, 0.0]).unwrap();
    let mut opts = SffOptions::geometric(0.04, 5, 32, 200_000, 61);
    opts.order = 2;
    let v = check_variance_expansion(&disk, &o, &field("x2*(3 - x1^2 - x2^2)/2"), &opts).unwrap();
    let ok = (v.target_b - VARIANCE_COEFFICIENT).abs() < 1e-9 && v.relative_error_b <= 0.25;
    outcome(
        ok,
        format!(
            "b={:.4}±{:.4} target={:.4} rel={:.3}; a={:.4} (target {:.1})",
            v.b.mean, v.b.se, v.target_b, v.relative_error_b, v.a.mean, v.target_a
        ),
    )
}

/// Path-space transport-entropy bound on the hemisphere.
fn c7() -> Outcome {
    let m = manifold(ManifoldKind::SphericalCap { radius: 1.0, angle: PI / 2.0 }, 2);
    let o = m.base_point();
    let densities = [
        ("endpoint exp(0.6 x1)", PathDensity::endpoint(field("exp(0.6*x1)"))),
        ("endpoint 1 + x2^2", PathDensity::endpoint(field("1 + x2^2"))),
        (
            "window exp(0.5 x1) exp(-0.4 x2)",
            PathDensity::window(vec![0.25, 0.5], vec![field("exp(0.5*x1)"), field("exp(-0.4*x2)")]).unwrap(),
        ),
        (
            "window (1 + x1^2) exp(0.4 x2) exp(0.3 x1)",
            PathDensity::window(vec![0.1, 0.3, 0.5], vec![field("1 + x1^2"), field("exp(0.4*x2)"), field("exp(0.3*x1)")])
                .unwrap(),
        ),
    ];
    let mut ok = true;
    let mut parts = Vec::new();
    for (name, d) in &densities {
        let mut good = 0;
        for seed in 0..10u64 {
            let opts = CheckOptions::new(SimConfig::new(0.5, 32, 512, 700 + seed));
            let r = check_pathspace_talagrand(&m, &InitialLaw::Dirac(o), d, &opts).unwrap();
            if r.verdict == Verdict::Pass && r.diagnostics.grid_stable == Some(true) {
                good += 1;
            }
        }
        ok &= good >= 9;
        parts.push(format!("{name}: {good}/10"));
    }
    outcome(ok, parts.join("; "))
}

/// `g(s) = h(s) - h(r)` for `h = cos s - sin s` (k = gamma = 1).
fn radial_g(s: f64, r: f64) -> f64 {
    (s.cos() - s.sin()) - (r.cos() - r.sin())
}

/// `int_t^r g` in closed form.
fn radial_big_g(t: f64, r: f64) -> f64 {
    let prim = |u: f64| u.sin() + u.cos();
    prim(r) - prim(t) - (r.cos() - r.sin()) * (r - t)
}

/// Independent radial evaluation of `sup (-f Δf)^+` on the flat annulus for
/// the d = 2 profile with `k = gamma = 1`.
fn kappa_oracle(sigma: f64, r: f64, r_in: f64, r_out: f64) -> (f64, f64, f64) {
    let alpha = radial_big_g(0.0, r) / radial_g(0.0, r);
    let dphi = |t: f64| if t >= r { 0.0 } else { radial_big_g(t, r) / (alpha * radial_g(t, r)) };
    let ddphi = |t: f64| {
        if t >= r {
            return 0.0;
        }
        let g = radial_g(t, r);
        if g.abs() < 1e-6 {
            return -1.0 / (2.0 * alpha);
        }
        let dh = -t.sin() - t.cos();
        -1.0 / alpha - radial_big_g(t, r) * dh / (alpha * g * g)
    };
    // phi(s) by composite Simpson on a fine grid
    let phi = |s: f64| {
        let s = s.min(r);
        let n = 2000;
        let h = s / n as f64;
        let mut acc = dphi(0.0) + dphi(s);
        for i in 1..n {
            acc += dphi(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        acc * h / 3.0
    };
    let q = |s: f64, inner: bool| {
        let (rad, sign) = if inner { (r_in + s, 1.0) } else { (r_out - s, -1.0) };
        let lap = sigma * (ddphi(s) + sign * dphi(s) / rad);
        (-(1.0 + sigma * phi(s)) * lap).max(0.0)
    };
    let mut best = (f64::NEG_INFINITY, 0.0, true);
    let n = 2000;
    for inner in [true, false] {
        for i in 0..=n {
            let s = r * i as f64 / n as f64;
            let v = q(s, inner);
            if v > best.0 {
                best = (v, s, inner);
            }
        }
    }
    let (_, s0, inner) = best;
    let h = r / n as f64;
    let (lo, hi) = ((s0 - h).max(0.0), (s0 + h).min(r));
    let (mut a, mut b) = (lo, hi);
    let gr = 0.5 * (5f64.sqrt() - 1.0);
    while b - a > 1e-12 {
        let x1 = b - gr * (b - a);
        let x2 = a + gr * (b - a);
        if q(x1, inner) >= q(x2, inner) {
            b = x2;
        } else {
            a = x1;
        }
    }
    let v = q(lo, inner).max(q(hi, inner)).max(q(0.5 * (a + b), inner));
    (v, alpha, phi(r))
}

/// Non-convex pipeline on the annulus.
fn c8() -> Outcome {
    let (r_in, r_out) = (1.0, 4.0);
    let m = manifold(ManifoldKind::Annulus { inner: r_in, outer: r_out }, 2);
    let (sigma, gamma, k, r, d) = (1.0, 1.0, 1.0, 0.5, 2usize);
    let p = Arc::new(BoundaryProfile::for_boundary_injectivity(sigma, gamma, k, r, d, m.boundary_injectivity_radius().unwrap()).unwrap());
    let s = p.summary();
    let profile_ok =
        s.alpha >= r / d as f64 && s.phi_r <= d as f64 * r / 2.0 && (s.dphi_0 - 1.0).abs() <= 1e-8;
    let f = ScalarField::profile("phi", p.clone());
    let data = conformal_rescale(&m, &f, &ConformalOptions::default()).unwrap();
    let (oracle, alpha_oracle, phi_r_oracle) = kappa_oracle(sigma, r, r_in, r_out);
    let kappa_rel = (data.kappa_f_raw - oracle).abs() / oracle;
    let df = d as f64;
    let theta_oracle = (df * sigma / r) * (2.0 * (df - 2.0) + (df - 3.0).max(0.0) + df * df / 2.0) * sigma * sigma;
    let theta = p.theta(data.k.max(0.0), 0.0);
    let theta_rel = (theta - theta_oracle).abs() / theta_oracle;
    let constants_ok = kappa_rel <= 1e-6
        && theta_rel <= 1e-6
        && (s.alpha - alpha_oracle).abs() <= 1e-9
        && (s.phi_r - phi_r_oracle).abs() <= 1e-8;

    let input = NonconvexInput {
        f,
        profile: Some(p),
        start: InitialLaw::Dirac(m.point(&[2.5, 0.0]).unwrap()),
        density: PathDensity::endpoint(field("exp(0.3*x1)")),
        pair: Some((m.point(&[2.0, 0.0]).unwrap(), m.point(&[2.5, 0.0]).unwrap())),
    };
    let opts = CheckOptions::new(SimConfig::new(0.25, 32, 512, 81));
    let reports = check_nonconvex(&m, &input, &opts).unwrap();
    let checks_ok = !reports.is_empty() && reports.iter().all(|r| r.verdict == Verdict::Pass);
    let verdicts: Vec<String> = reports.iter().map(|r| format!("{}={}", r.name, r.verdict.as_str())).collect();
    outcome(
        profile_ok && constants_ok && checks_ok,
        format!(
            "alpha={:.6} (>= {:.3}) phi(r)={:.6} (<= {:.3}) phi'(0)-1={:.1e}; kappa_f={:.8} oracle={oracle:.8} rel={kappa_rel:.1e}; theta={theta} oracle={theta_oracle} ; {}",
            s.alpha,
            r / df,
            s.phi_r,
            df * r / 2.0,
            s.dphi_0 - 1.0,
            data.kappa_f_raw,
            verdicts.join(" ")
        ),
    )
}

fn uniform_block(stream: &mut NoiseStream, n: usize, block: &mut u64) -> Vec<f64> {
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        out.extend(stream.uniforms(*block));
        *block += 1;
    }
    out.truncate(n);
    out
}

/// Minimum over all assignments by enumeration (Heap's algorithm).
fn assignment_oracle(c: &[Vec<f64>]) -> f64 {
    let n = c.len();
    let mut perm: Vec<usize> = (0..n).collect();
    let cost = |p: &[usize]| p.iter().enumerate().map(|(i, &j)| c[i][j]).sum::<f64>();
    let mut best = cost(&perm);
    let mut counters = vec![0usize; n];
    let mut i = 0;
    while i < n {
        if counters[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(counters[i], i);
            }
            best = best.min(cost(&perm));
            counters[i] += 1;
            i = 0;
        } else {
            counters[i] = 0;
            i += 1;
        }
    }
    best
}

/// Entropic against exact, exact against enumeration.
fn c9() -> Outcome {
    let plane = manifold(ManifoldKind::Euclidean, 2);
    let mut stream = NoiseStream::new(9, 0);
    let mut block = 0u64;
    let mut worst_rel = 0.0f64;
    let mut n_inst = 0;
    for k in 0..100usize {
        let n = 16 + (k * 97) % 497;
        let m = 16 + (k * 53 + 11) % 497;
        let u = uniform_block(&mut stream, 2 * (n + m) + n + m, &mut block);
        let shift = 0.5 * (k % 4) as f64;
        let xs: Vec<Point> = (0..n).map(|i| Point::from_slice(&[u[2 * i], u[2 * i + 1]])).collect();
        let ys: Vec<Point> =
            (0..m).map(|j| Point::from_slice(&[u[2 * n + 2 * j] + shift, u[2 * n + 2 * j + 1]])).collect();
        let weights = |w: &[f64], uniform: bool| -> Vec<f64> {
            let raw: Vec<f64> = if uniform { vec![1.0; w.len()] } else { w.iter().map(|x| 0.2 + x).collect() };
            let s: f64 = raw.iter().sum();
            raw.iter().map(|x| x / s).collect()
        };
        let off = 2 * (n + m);
        let a = weights(&u[off..off + n], k % 2 == 0);
        let b = weights(&u[off + n..off + n + m], k % 2 == 0);
        let c = point_cost(&plane, &xs, &ys);
        let p = if k % 3 == 0 { 1.0 } else { 2.0 };
        let ex = w_exact(&a, &b, &c, p).unwrap();
        let opts = SolverOptions { method: Method::Entropic, ..SolverOptions::default() };
        let en = solve(&a, &b, &c, p, &opts).unwrap();
        worst_rel = worst_rel.max((en.value - ex.value).abs() / ex.value);
        n_inst += 1;
    }
    let mut worst_abs = 0.0f64;
    let mut n_small = 0;
    for k in 0..200u64 {
        let u = uniform_block(&mut stream, 64, &mut block);
        let rows: Vec<Vec<f64>> = (0..8).map(|i| (0..8).map(|j| u[8 * i + j]).collect()).collect();
        let p = if k % 2 == 0 { 1.0 } else { 2.0 };
        let data: Vec<f64> = rows.iter().flatten().copied().collect();
        let c = CostMatrix::new(8, 8, data, Ground::Rho).unwrap();
        let w = vec![0.125; 8];
        let ex = w_exact(&w, &w, &c, p).unwrap();
        let pw: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().map(|x| x.powf(p)).collect()).collect();
        let oracle = (assignment_oracle(&pw) / 8.0).powf(1.0 / p);
        worst_abs = worst_abs.max((ex.value - oracle).abs());
        n_small += 1;
    }
    outcome(
        worst_rel <= 0.02 && worst_abs <= 1e-9,
        format!("{n_inst} instances: max |entropic-exact|/exact={worst_rel:.2e}; {n_small} 8x8: max |exact-oracle|={worst_abs:.1e}"),
    )
}

/// Log-Sobolev and Poincare on the unit sphere.
fn c10() -> Outcome {
    let m = manifold(ManifoldKind::Sphere { radius: 1.0 }, 2);
    let o = m.base_point();
    let k = m.curvature_constants().k;
    let mut ok = (k + 1.0).abs() < 1e-12;
    let mut parts = vec![format!("K={k}")];
    let mut half_chi_violations = 0;
    for t in [0.25, 1.0] {
        ok &= chi(k, t) < 2.0 * t;
        parts.push(format!("chi(K,{t})={:.4}<{}", chi(k, t), 2.0 * t));
        for (i, f) in ["1 + 0.5*x3", "exp(0.5*x1)", "cos(x2) + 0.5*x1"].iter().enumerate() {
            let opts = CheckOptions::new(SimConfig::new(t, 32, 20_000, 1000 + i as u64));
            let ls = check_logsobolev(&m, &o, &field(f), &opts).unwrap();
            let pc = check_poincare(&m, &o, &field(f), &opts).unwrap();
            let pass = ls.verdict == Verdict::Pass && pc.verdict == Verdict::Pass;
            ok &= pass;
            if ls.diagnostics.values["margin_half_chi"] < 0.0 {
                half_chi_violations += 1;
            }
            if !pass {
                parts.push(format!("T={t} f={f}: {} | {}", brief(&ls), brief(&pc)));
            }
        }
    }
    parts.push(format!("constant chi/2 violated in {half_chi_violations}/6"));
    outcome(ok, parts.join("; "))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("gaussian equality", c1),
        ("OU contraction", c2),
        ("local time", c3),
        ("hitting tail", c4),
        ("boundary asymptotics", c5),
        ("variance expansion", c6),
        ("hemisphere path-space talagrand", c7),
        ("non-convex pipeline", c8),
        ("solver cross-validation", c9),
        ("log-sobolev and poincare", c10),
    ];
    let wanted: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    if std::env::args().any(|a| a == "--list") {
        for (i, (name, _)) in criteria.iter().enumerate() {
            println!("{}: {name}: test", i + 1);
        }
        return ExitCode::SUCCESS;
    }
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let n = i + 1;
        if !wanted.is_empty() && !wanted.contains(&n) {
            continue;
        }
        let start = Instant::now();
        let res = catch_unwind(AssertUnwindSafe(run));
        let secs = start.elapsed().as_secs_f64();
        let (pass, detail) = match res {
            Ok(o) => (o.pass, o.detail),
            Err(e) => {
                let msg = e
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                (false, format!("panicked: {msg}"))
            }
        };
        if !pass {
            failed += 1;
        }
        println!("criterion {n:>2} {:<4} [{name}] ({secs:.1}s) {detail}", if pass { "PASS" } else { "FAIL" });
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
