use aflow::identities::{
    audit, check_balanced_torsion, check_commutator, check_dilaton_gradient, check_divergence, frame_vector,
    random_vector_field, Verdict, BALANCED_GATE,
};
use aflow::init::{balanced_psi, conformal, Profile};
use aflow::lattice::GridSpec;
use aflow::tensor::{MetricField, Slot, TensorField};
use aflow::Error;

fn balanced(n: usize) -> MetricField {
    let grid = GridSpec::new(n, &[0, 3]).unwrap();
    balanced_psi(&grid, &Profile::new(0.01, &[0, 3]).with_decay(0.05)).unwrap()
}

#[test]
fn conformal_commutator_is_tight() {
    let grid = GridSpec::new(32, &[0, 3]).unwrap();
    let g = conformal(&grid, &Profile::new(0.1, &[0, 3])).unwrap();
    let v = random_vector_field(&grid, 11).unwrap();
    let e = check_commutator(&g, &v, 1, 1, "conformal").unwrap();
    assert_eq!(e.verdict, Verdict::Pass);
    assert!(e.residual <= 1e-8, "{e:?}");
    // every slot type
    let w = TensorField::from_fn(&grid, vec![Slot::Upper, Slot::LowerBar], |idx, pt| {
        v.get(&[idx[0]], pt) * v.get(&[idx[1]], pt).conj()
    })
    .unwrap();
    let e = check_commutator(&g, &w, 1, 1, "conformal").unwrap();
    assert!(e.residual <= 1e-8, "{e:?}");
}

#[test]
fn generic_metric_skips_balanced_identities() {
    let grid = GridSpec::new(8, &[0, 3]).unwrap();
    let g = conformal(&grid, &Profile::new(0.2, &[0, 3])).unwrap();
    for e in [
        check_balanced_torsion(&g, "c").unwrap(),
        check_dilaton_gradient(&g, "c").unwrap(),
    ] {
        assert_eq!(e.verdict, Verdict::NotApplicable);
        assert!(e.residual > BALANCED_GATE);
        assert_eq!(e.tolerance, BALANCED_GATE);
    }
    // the divergence identity is gated too; commutators hold on any metric
    let rep = audit(&g, "c", 1).unwrap();
    for e in &rep.entries {
        let gated = !e.name.starts_with("commutator");
        assert_eq!(e.verdict == Verdict::NotApplicable, gated, "{e:?}");
    }
}

#[test]
fn dilaton_check_is_scale_invariant() {
    let g = balanced(16);
    let a = check_dilaton_gradient(&g, "g").unwrap();
    let b = check_dilaton_gradient(&g.scale(4.0), "4g").unwrap();
    assert_ne!(a.verdict, Verdict::NotApplicable);
    assert!((a.residual - b.residual).abs() <= 1e-3 * a.residual + 1e-14, "{} vs {}", a.residual, b.residual);
    let t1 = check_balanced_torsion(&g, "g").unwrap();
    let t4 = check_balanced_torsion(&g.scale(4.0), "4g").unwrap();
    assert!((t1.residual - t4.residual).abs() <= 1e-3 * t1.residual + 1e-14);
}

#[test]
fn refinement_reduces_residuals() {
    let coarse = audit(&balanced(16), "16", 1).unwrap();
    let fine = audit(&balanced(32), "32", 1).unwrap();
    assert!(fine.all_passed(), "{:#?}", fine.entries);
    for e in &fine.entries {
        let c = coarse.entry(&e.name).unwrap();
        assert!(e.residual <= c.residual.max(1e-11), "{}: {} -> {}", e.name, c.residual, e.residual);
    }
}

#[test]
fn divergence_needs_a_vector() {
    let grid = GridSpec::new(8, &[0]).unwrap();
    let g = MetricField::identity(&grid);
    let covector = TensorField::zeros(&grid, vec![Slot::Lower]).unwrap();
    assert!(matches!(check_divergence(&g, &covector, "flat"), Err(Error::SignatureMismatch { .. })));
    let e = check_divergence(&g, &frame_vector(&grid, 2).unwrap(), "flat").unwrap();
    assert!(e.passed() && e.residual < 1e-14);
}

#[test]
fn audit_is_reproducible() {
    let g = balanced(8);
    assert_eq!(audit(&g, "x", 3).unwrap(), audit(&g, "x", 3).unwrap());
}
