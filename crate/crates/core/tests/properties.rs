use cvgate::fock::{polynomial_operator, FockBasis};
use cvgate::nlsq::{two_mode_cubic, VarianceFunctional};
use cvgate::optimizer::{bfgs::central_gradient, start_point, AnsatzSpec, LambdaBounds, Processing, Search};
use cvgate::quadpoly::{conjugate, shift_polynomial, QuadraturePolynomial, SymplecticTransform};
use proptest::prelude::*;
use std::sync::Arc;

/// Two-mode polynomial with per-mode degree at most `max_deg`.
fn poly(max_deg: u32, x_only: bool) -> impl Strategy<Value = QuadraturePolynomial> {
    let exps = if x_only {
        (0..=max_deg, 0..=max_deg).prop_map(|(a, b)| vec![a, 0, b, 0]).boxed()
    } else {
        (0..=max_deg, 0..=max_deg, 0..=max_deg, 0..=max_deg)
            .prop_filter("degree", move |(a, b, c, d)| a + b <= max_deg && c + d <= max_deg)
            .prop_map(|(a, b, c, d)| vec![a, b, c, d])
            .boxed()
    };
    prop::collection::vec((exps, -2.0f64..2.0), 1..5)
        .prop_map(|terms| QuadraturePolynomial::from_terms(2, terms).unwrap())
}

fn chain() -> impl Strategy<Value = SymplecticTransform> {
    (-3.0f64..3.0, 0.3f64..3.0, 0.3f64..3.0, -3.0f64..3.0)
        .prop_map(|(a, l1, l2, b)| SymplecticTransform::gaussian_chain(a, l1, l2, b).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn operators_exact_under_larger_guard(p in poly(4, false), d1 in 1usize..4, d2 in 1usize..4) {
        let a = polynomial_operator(&p, &FockBasis::new(vec![d1, d2], 4).unwrap()).unwrap();
        let b = polynomial_operator(&p, &FockBasis::new(vec![d1, d2], 9).unwrap()).unwrap();
        for r in 0..a.dim() {
            for c in 0..a.dim() {
                prop_assert!((a.get(r, c) - b.get(r, c)).norm() <= 1e-12);
            }
        }
        prop_assert!(a.hermiticity_residual() <= 1e-12);
    }

    #[test]
    fn feedforward_shift_is_a_cocycle(
        v in poly(3, true),
        q1 in prop::array::uniform2(-2.0f64..2.0),
        q2 in prop::array::uniform2(-2.0f64..2.0),
        x in prop::array::uniform2(-3.0f64..3.0),
    ) {
        let lhs = shift_polynomial(&v, &[q1[0] + q2[0], q1[1] + q2[1]]).unwrap().evaluate_x(&x);
        let rhs = shift_polynomial(&v, &q1).unwrap().evaluate_x(&[x[0] + q2[0], x[1] + q2[1]])
            + shift_polynomial(&v, &q2).unwrap().evaluate_x(&x);
        prop_assert!((lhs - rhs).abs() <= 1e-10 * lhs.abs().max(1.0));
    }

    #[test]
    fn chains_are_symplectic(s in chain(), t in chain()) {
        prop_assert!(s.symplectic_residual() <= 1e-10);
        prop_assert!(s.compose(&t).symplectic_residual() <= 1e-10);
        prop_assert!(s.compose(&s.inverse()).symplectic_residual() <= 1e-10);
    }

    #[test]
    fn conjugation_distributes(a in poly(2, false), b in poly(2, false), s in chain()) {
        let sum = conjugate(&(&a + &b), &s);
        let prod = conjugate(&(&a * &b), &s);
        let (ca, cb) = (conjugate(&a, &s), conjugate(&b, &s));
        let scale = 1e-9 * (1.0 + prod.max_abs_coefficient());
        prop_assert!(sum.approx_eq(&(&ca + &cb), 1e-9));
        prop_assert!(prod.approx_eq(&(&ca * &cb), scale));
        // the inverse undoes the substitution
        prop_assert!(conjugate(&conjugate(&a, &s), &s.inverse()).approx_eq(&a, 1e-8));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn objective_gradient_matches_richardson(seed in 0u64..1000, kappa in 0.1f64..1.5, entangled in any::<bool>()) {
        let spec = if entangled {
            AnsatzSpec::entangled(1, 1, Processing::Full)
        } else {
            AnsatzSpec::factorized(2, 1, Processing::Full)
        };
        let f = Arc::new(VarianceFunctional::new(&two_mode_cubic(kappa), &spec.core_basis()).unwrap());
        let search = Search::for_ansatz(f, &spec, LambdaBounds::default()).unwrap();
        let x = start_point(&search, seed, 0);
        let mut cache = None;
        let mut obj = |y: &[f64]| search.value(&mut cache, y);
        let g0 = central_gradient(&mut obj, &x, 1e-5).unwrap();
        let g1 = central_gradient(&mut obj, &x, 1e-3).unwrap();
        let g2 = central_gradient(&mut obj, &x, 5e-4).unwrap();
        let scale = g0.iter().fold(1e-3f64, |m, v| m.max(v.abs()));
        for i in 0..x.len() {
            let rich = (4.0 * g2[i] - g1[i]) / 3.0;
            prop_assert!((g0[i] - rich).abs() <= 1e-5 * scale, "component {i}: {} vs {rich}", g0[i]);
        }
    }
}
