use motc::diffusion::{simulate, InitialLaw, Record, SimConfig};
use motc::geometry::{ManifoldKind, ModelManifold};
use motc::io::{read_ensemble, write_ensemble};
use motc::verify::{chi, InequalityReport, Verdict};
use proptest::prelude::*;
use std::f64::consts::FRAC_PI_2;

fn manifold(i: usize) -> ModelManifold {
    let kind = match i {
        0 => ManifoldKind::Euclidean,
        1 => ManifoldKind::Ball { radius: 1.0 },
        2 => ManifoldKind::SphericalCap { radius: 1.0, angle: FRAC_PI_2 },
        _ => ManifoldKind::Annulus { inner: 1.0, outer: 2.0 },
    };
    ModelManifold::new(kind, 2).unwrap()
}

fn start(i: usize, m: &ModelManifold) -> InitialLaw {
    let c: &[f64] = match i {
        0 => &[0.3, -0.2],
        1 => &[0.9, 0.0],
        2 => &[0.6, 0.0, 0.8],
        _ => &[1.05, 0.0],
    };
    InitialLaw::Dirac(m.point(c).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn chi_is_positive_and_continuous(k in -3.0f64..3.0, t in 1e-3f64..2.0) {
        prop_assert!(chi(k, t) > 0.0);
        let h = 1e-9;
        prop_assert!((chi(h, t) - chi(-h, t)).abs() < 1e-7 * (1.0 + t));
        if k.abs() > 1e-6 {
            prop_assert_eq!(chi(k, t) > 2.0 * t, k > 0.0);
        }
    }

    #[test]
    fn verdict_follows_the_sigma_bands(lhs in -5.0f64..5.0, rhs in -5.0f64..5.0, sl in 0.0f64..1.0, sr in 0.0f64..1.0) {
        let r = InequalityReport::new("t", "lhs <= rhs", lhs, rhs, sl, sr);
        let se = (sl * sl + sr * sr).sqrt();
        let slack = 1e-12 * (lhs.abs() + rhs.abs());
        let expected = if lhs <= rhs + 3.0 * se + slack {
            Verdict::Pass
        } else if lhs > rhs + 5.0 * se + slack {
            Verdict::Fail
        } else {
            Verdict::Inconclusive
        };
        prop_assert_eq!(r.verdict, expected);
    }

    #[test]
    fn ensembles_are_reproducible_and_round_trip(i in 0usize..4, seed in 0u64..1_000_000, full in any::<bool>()) {
        let m = manifold(i);
        let law = start(i, &m);
        let cfg = SimConfig::new(0.2, 16, 12, seed);
        let record = if full { Record::Full } else { Record::Endpoint };
        let a = simulate(&m, &law, &cfg, &record).unwrap();
        let b = simulate(&m, &law, &cfg, &record).unwrap();
        prop_assert_eq!(&a, &b);
        for p in &a.paths {
            for j in 0..p.len() {
                let x = p.point(j);
                prop_assert!(m.contains(&x));
                prop_assert!(m.constraint_residual(&x) <= 1e-8);
            }
        }
        let mut buf = Vec::new();
        write_ensemble(&mut buf, &a).unwrap();
        let back = read_ensemble(&mut buf.as_slice()).unwrap();
        prop_assert_eq!(&back.steps, &a.steps);
        prop_assert_eq!(back.cfg, a.cfg);
        prop_assert_eq!(back.paths.len(), a.paths.len());
        for (q, p) in back.paths.iter().zip(&a.paths) {
            prop_assert_eq!(q.coords(), p.coords());
            prop_assert_eq!(&q.local_time, &p.local_time);
        }
    }
}
