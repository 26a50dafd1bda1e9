use pckv::audit::{audit, AuditOptions};
use pckv::budget::{compose, probs_grr, probs_ue, Mechanism};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn audits_never_exceed_the_composed_budget(
        e1 in 0.05f64..3.0,
        e2 in 0.0f64..3.0,
        d in 2usize..4,
        ell in 1usize..4,
    ) {
        let opts = AuditOptions::default();
        let ue = audit(Mechanism::Ue, d, ell, &probs_ue(e1, e2).unwrap(), &opts).unwrap();
        prop_assert!(ue.slack >= -1e-9, "{ue:?}");
        let grr = audit(Mechanism::Grr, d, ell, &probs_grr(e1, e2, d + ell).unwrap(), &opts).unwrap();
        prop_assert!(grr.slack >= -1e-9, "{grr:?}");
        prop_assert!((ue.theoretical_eps - compose(Mechanism::Ue, e1, e2, ell).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn unary_encoding_is_tight_when_a_full_record_fits(
        e1 in 0.05f64..3.0,
        e2 in 0.0f64..3.0,
        d in 2usize..4,
        ell in 1usize..3,
    ) {
        let r = audit(Mechanism::Ue, d, ell, &probs_ue(e1, e2).unwrap(), &AuditOptions::default()).unwrap();
        prop_assert!(r.is_tight(1e-9), "{r:?}");
    }

    #[test]
    fn zero_values_do_not_raise_the_ratio(
        e1 in 0.05f64..2.0,
        e2 in 0.0f64..2.0,
        ell in 1usize..3,
    ) {
        let wide = AuditOptions { value_grid: vec![-1.0, 0.0, 1.0], ..AuditOptions::default() };
        for (mech, probs) in [
            (Mechanism::Ue, probs_ue(e1, e2).unwrap()),
            (Mechanism::Grr, probs_grr(e1, e2, 2 + ell).unwrap()),
        ] {
            let base = audit(mech, 2, ell, &probs, &AuditOptions::default()).unwrap();
            let with_zero = audit(mech, 2, ell, &probs, &wide).unwrap();
            prop_assert!(with_zero.max_ratio <= base.max_ratio * (1.0 + 1e-12));
        }
    }
}

#[test]
fn exact_and_float_modes_agree() {
    let exact = AuditOptions { exact: true, ..AuditOptions::default() };
    for (e1, e2, d, ell) in [(0.7, 1.2, 2, 1), (1.5, 0.3, 3, 2), (0.2, 2.0, 2, 3)] {
        for (mech, probs) in [
            (Mechanism::Ue, probs_ue(e1, e2).unwrap()),
            (Mechanism::Grr, probs_grr(e1, e2, d + ell).unwrap()),
        ] {
            let q = audit(mech, d, ell, &probs, &exact).unwrap();
            let f = audit(mech, d, ell, &probs, &AuditOptions::default()).unwrap();
            assert!((q.ln_max_ratio - f.ln_max_ratio).abs() < 1e-12, "{mech} {e1} {e2} {d} {ell}");
        }
    }
}
