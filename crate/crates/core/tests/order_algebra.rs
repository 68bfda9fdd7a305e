use heisenberg::ordercalc::{
    forward_table, inverse_table, neumann_inverse, o_add, o_mul, verify_tables, DerivativeRule, EntryStatus, FrameExpansion, OrderScalar,
};
use proptest::prelude::*;

fn scalar() -> impl Strategy<Value = OrderScalar> {
    (any::<bool>(), prop_oneof![Just(None), (0u32..6).prop_map(Some)]).prop_map(|(u, k)| OrderScalar::new(u, k))
}

fn perturbed_identity() -> impl Strategy<Value = FrameExpansion> {
    proptest::array::uniform3(proptest::array::uniform3(prop_oneof![Just(None), (1u32..4).prop_map(Some)]))
        .prop_map(|orders| FrameExpansion::from_orders(orders, true))
}

fn constant(a: OrderScalar) -> f64 {
    if a.unit() {
        1.0
    } else {
        0.0
    }
}

/// A concrete representative `c + r^k` of the class, evaluated at `r`.
fn sample(a: OrderScalar, r: f64) -> f64 {
    constant(a) + a.order().map_or(0.0, |k| r.powi(k as i32))
}

/// `v = c + O(r^k)` with a generous constant in the bound. A unit class must
/// carry a nonzero constant; a bare `O(1)` absorbs any constant.
fn within(a: OrderScalar, c: f64, v: f64, r: f64) -> bool {
    let bound = a.order().map_or(0.0, |k| 8.0 * r.powi(k as i32));
    if a.order() == Some(0) {
        return (v - c).abs() <= bound;
    }
    a.unit() == (c != 0.0) && (v - c).abs() <= bound + 1e-12
}

proptest! {
    #[test]
    fn addition_is_a_commutative_monoid(a in scalar(), b in scalar(), c in scalar()) {
        prop_assert_eq!(o_add(a, b), o_add(b, a));
        prop_assert_eq!(o_add(o_add(a, b), c), o_add(a, o_add(b, c)));
        prop_assert_eq!(o_add(a, OrderScalar::ZERO), a);
    }

    #[test]
    fn multiplication_is_a_commutative_monoid(a in scalar(), b in scalar(), c in scalar()) {
        prop_assert_eq!(o_mul(a, b), o_mul(b, a));
        prop_assert_eq!(o_mul(o_mul(a, b), c), o_mul(a, o_mul(b, c)));
        prop_assert_eq!(o_mul(a, OrderScalar::ONE), a);
        prop_assert!(o_mul(a, OrderScalar::ZERO).is_zero());
    }

    #[test]
    fn distributing_never_loses_information(a in scalar(), b in scalar(), c in scalar()) {
        let lhs = o_mul(a, o_add(b, c));
        let rhs = o_add(o_mul(a, b), o_mul(a, c));
        prop_assert_eq!(lhs.unit(), rhs.unit());
        prop_assert!(lhs.order().unwrap_or(u32::MAX) >= rhs.order().unwrap_or(u32::MAX));
    }

    // the order rules are sound for actual functions of r
    #[test]
    fn representatives_obey_the_rules(a in scalar(), b in scalar(), r in 1e-3f64..0.5) {
        let (fa, fb) = (sample(a, r), sample(b, r));
        prop_assert!(within(o_add(a, b), constant(a) + constant(b), fa + fb, r));
        prop_assert!(within(o_mul(a, b), constant(a) * constant(b), fa * fb, r));
    }

    #[test]
    fn frame_products_associate(a in perturbed_identity(), b in perturbed_identity(), c in perturbed_identity()) {
        prop_assert_eq!(a.mul(&b).mul(&c), a.mul(&b.mul(&c)));
    }

    #[test]
    fn neumann_inverse_is_a_right_inverse_to_leading_order(e in perturbed_identity(), n in 1u32..4) {
        let inv = neumann_inverse(&e, n).unwrap();
        let prod = inv.mul(&e);
        let a = e.perturbation().unwrap();
        let p = prod.perturbation().expect("product stays of the form I + A");
        if let Some(k) = a.min_order() {
            prop_assert!(p.min_order().unwrap_or(u32::MAX) >= k);
        } else {
            prop_assert_eq!(prod, FrameExpansion::identity());
        }
    }
}

#[test]
fn forward_and_inverse_tables_compose_to_identity_form() {
    let f = forward_table().unwrap();
    let i = inverse_table().unwrap();
    assert!(f.mul(&i).perturbation().is_ok());
    assert_eq!(f.mul(&i).perturbation().unwrap().min_order(), Some(1));
}

#[test]
fn strict_rule_only_changes_the_top_row_of_the_second_table() {
    let anisotropic = verify_tables(&DerivativeRule::anisotropic()).unwrap();
    let strict = verify_tables(&DerivativeRule::strict()).unwrap();
    assert_eq!(anisotropic.entries.len(), strict.entries.len());
    for (a, s) in anisotropic.entries.iter().zip(&strict.entries) {
        if a.computed != s.computed {
            assert_eq!(a.row, "^T^T", "{a:?} vs {s:?}");
        }
    }
    assert!(anisotropic.mismatches().iter().all(|e| e.status == EntryStatus::Weaker));
}
