use aflow::config::{parse_config, render, InitialData, RunConfig};
use aflow::flow::{PhiSource, RhsMode};
use aflow::forms::{metric_from_psi, psi_from_metric};
use aflow::init::Profile;
use aflow::lattice::GridSpec;
use aflow::monitor::{
    alpha_thresholds, cmp_sign, extension_certificate, mu_exact, AssumptionBounds, Verdict, ENTRY_EXTENSION, ENTRY_K2_SUP,
    ENTRY_SHI_SUP, FLAT_C0,
};
use aflow::snapshot::{decode, encode};
use aflow::tensor::{Mat3, MetricField};
use num_bigint::BigInt;
use num_complex::Complex64 as C;
use num_rational::BigRational;
use proptest::prelude::*;

fn bounds(a0: f64, b: f64, c0: f64) -> AssumptionBounds {
    AssumptionBounds {
        b,
        c0,
        cq: vec![],
        a0,
        measured_at: 0.0,
    }
}

fn big(n: u64) -> BigRational {
    BigRational::from_integer(BigInt::from(n))
}

/// Positive Hermitian matrix `L L* + ε I` from 9 complex entries.
fn hermitian(v: &[f64]) -> Mat3 {
    let l = Mat3::from_fn(|i, j| C::new(v[2 * (3 * i + j)], v[2 * (3 * i + j) + 1]));
    l * l.adjoint() + Mat3::identity() * C::new(0.5, 0.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn thresholds_never_increase(
        a0 in 0.1f64..10.0, b in 0.5f64..5.0, c0 in 1e-3f64..50.0, p in 1.0f64..8.0, k in 1.0f64..4.0,
    ) {
        let base = alpha_thresholds(&bounds(a0, b, c0), p, 0.0);
        for (v, vp) in [
            (bounds(a0 * k, b, c0), p),
            (bounds(a0, b * k, c0), p),
            (bounds(a0, b, c0 * k), p),
            (bounds(a0, b, c0), p * k),
        ] {
            let r = alpha_thresholds(&v, vp, 0.0);
            for (e0, e1) in base.entries.iter().zip(&r.entries) {
                let (x0, x1) = (e0.bound.as_ref().unwrap(), e1.bound.as_ref().unwrap());
                prop_assert!(cmp_sign(x1, x0) <= 0, "{}", e0.name);
            }
        }
    }

    #[test]
    fn integer_inputs_give_exact_rationals(a0 in 1u64..20, b in 1u64..6, c0 in 2u64..40) {
        let r = alpha_thresholds(&bounds(a0 as f64, b as f64, c0 as f64), 3.0, 0.0);
        let lin = |k: u64| (big(k) * big(a0) * big(b * b) * big(c0)).recip();
        let quad = (big(30_000_000) * big(a0) * big(b.pow(6)) * big(c0 * c0)).recip();
        prop_assert_eq!(r.entry(ENTRY_SHI_SUP).unwrap().bound.clone().unwrap(), lin(14));
        prop_assert_eq!(r.entry(ENTRY_K2_SUP).unwrap().bound.clone().unwrap(), lin(26));
        prop_assert_eq!(r.entry(ENTRY_EXTENSION).unwrap().bound.clone().unwrap(), quad);
        prop_assert_eq!(mu_exact(a0 as f64, b as f64, 3.0), (big(300) * big(a0) * big(b * b)).recip());
    }

    #[test]
    fn low_exponents_are_raised(p in 1.0f64..3.0) {
        let b = bounds(1.5, 2.0, 3.0);
        prop_assert_eq!(alpha_thresholds(&b, p, 0.0).entries, alpha_thresholds(&b, 3.0, 0.0).entries);
    }

    #[test]
    fn certificate_splits_at_bound(a0 in 0.1f64..10.0, b in 0.5f64..3.0, c0 in 1e-6f64..20.0) {
        let ab = bounds(a0, b, c0);
        let bound = num_traits::ToPrimitive::to_f64(&extension_certificate(&ab, 0.0).bound).unwrap();
        prop_assert_eq!(extension_certificate(&ab, bound * 0.5).verdict, Verdict::Extendable);
        prop_assert_eq!(extension_certificate(&ab, bound * 2.0).verdict, Verdict::NotCertified);
        // the flat regime certifies any α′
        prop_assert_eq!(extension_certificate(&bounds(a0, b, FLAT_C0), 1e6).verdict, Verdict::Extendable);
    }

    #[test]
    fn psi_roundtrip(v in prop::collection::vec(-1.0f64..1.0, 18)) {
        let grid = GridSpec::new(4, &[0]).unwrap();
        let m = hermitian(&v);
        let mats: Vec<Mat3> = (1..=4).map(|k| m * C::new(k as f64, 0.0)).collect();
        let g = MetricField::from_matrices(&grid, &mats).unwrap();
        let back = metric_from_psi(&psi_from_metric(&g).unwrap()).unwrap();
        prop_assert!(back.max_abs_diff(&g) < 1e-11 * (1.0 + 4.0 * m.norm()).powi(2));
    }

    #[test]
    fn snapshot_bytes_roundtrip(v in prop::collection::vec(-1.0f64..1.0, 18), t in 0.0f64..10.0, a in 0.0f64..1.0) {
        let grid = GridSpec::new(4, &[1]).unwrap();
        let m = hermitian(&v);
        let g = MetricField::from_matrices(&grid, &[m, Mat3::identity(), m.adjoint() * m, m]).unwrap();
        let bytes = encode(&g, t, a);
        let (h, back) = decode(&bytes).unwrap();
        prop_assert_eq!(h.t.to_bits(), t.to_bits());
        prop_assert_eq!(h.alpha_prime.to_bits(), a.to_bits());
        prop_assert_eq!(encode(&back, h.t, h.alpha_prime), bytes);
    }

    #[test]
    fn config_render_roundtrip(
        n in prop::sample::select(vec![4usize, 8, 16, 32]),
        axes in prop::sample::subsequence(vec![0usize, 1, 2, 3, 4, 5], 1..4),
        amp in 1e-4f64..0.1,
        decay in 0.0f64..0.9,
        alpha in 0.0f64..1.0,
        dt in 1e-6f64..1e-2,
        t_max in 1e-3f64..1.0,
        cadence in 1usize..50,
        threads in 0usize..8,
        mode in prop::sample::select(vec![RhsMode::PsiEvolution, RhsMode::MetricEvolution, RhsMode::CrossCheck]),
    ) {
        let mut cfg = RunConfig::default();
        cfg.grid.n = n;
        cfg.grid.active_axes = axes.clone();
        cfg.initial = InitialData::BalancedPsi(Profile::new(amp, &axes[..1]).with_decay(decay));
        cfg.flow.alpha_prime = alpha;
        cfg.flow.phi_source = PhiSource::ConstantForm(vec![alpha, -amp, decay]);
        cfg.flow.dt_initial = dt;
        cfg.flow.t_max = t_max;
        cfg.flow.rhs_mode = mode;
        cfg.monitor.cadence = cadence;
        cfg.output.threads = threads;
        let text = render(&cfg);
        prop_assert_eq!(parse_config(&text).unwrap(), cfg);
    }
}
