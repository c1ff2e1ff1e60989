mod common;

use common::*;
use g2coflow::almost_abelian::{
    adjoint_identity_check, codifferential, differential, join, laplacian, split as split_form,
};
use g2coflow::multilinear::MultiIndex;
use g2coflow::stable_forms::{g2_from_phi, standard_omega};
use g2coflow::{Endomorphism, KForm, Metric};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn form_from(dim: usize, degree: usize, coeffs: &[f64]) -> KForm {
    let mut f = KForm::zero(dim, degree);
    for (mi, c) in MultiIndex::all(dim, degree).into_iter().zip(coeffs) {
        f.add_term(mi, *c);
    }
    f
}

fn binom(n: usize, k: usize) -> usize {
    (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
}

fn form_strategy(dim: usize, degree: usize) -> impl Strategy<Value = KForm> {
    prop::collection::vec(-2.0..2.0f64, binom(dim, degree)).prop_map(move |c| form_from(dim, degree, &c))
}

fn matrix_strategy(n: usize) -> impl Strategy<Value = Endomorphism> {
    prop::collection::vec(-1.5..1.5f64, n * n)
        .prop_map(move |v| Endomorphism::new(DMatrix::from_row_slice(n, n, &v)).unwrap())
}

fn degrees(dim: usize) -> impl Strategy<Value = (usize, usize)> {
    (0..=dim).prop_flat_map(move |k| (Just(k), 0..=dim - k))
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn theta_is_a_derivation(a in matrix_strategy(7), (k, m) in degrees(7), seed in any::<u64>()) {
        let mut r = rng(seed);
        let x = random_form(&mut r, 7, k);
        let y = random_form(&mut r, 7, m);
        let lhs = x.wedge(&y).theta(&a);
        let rhs = x.theta(&a).wedge(&y) + x.wedge(&y.theta(&a));
        prop_assert!(lhs.distance(&rhs) < 1e-11);
    }

    #[test]
    fn wedge_is_graded_commutative(x in form_strategy(6, 2), y in form_strategy(6, 3)) {
        prop_assert!(x.wedge(&y).distance(&y.wedge(&x)) < 1e-12);
        prop_assert!(y.wedge(&y).max_abs() < 1e-12);
    }

    #[test]
    fn pullback_is_functorial(p in matrix_strategy(6), q in matrix_strategy(6), x in form_strategy(6, 3)) {
        let p = &p + Endomorphism::identity(6) * 3.0;
        let q = &q + Endomorphism::identity(6) * 3.0;
        let lhs = x.pullback(&(&p * &q)).unwrap();
        let rhs = x.pullback(&p).unwrap().pullback(&q).unwrap();
        prop_assert!(lhs.distance(&rhs) < 1e-9 * (1.0 + lhs.max_abs()));
    }

    #[test]
    fn theta_is_the_derivative_of_pullback(a in matrix_strategy(6), x in form_strategy(6, 3)) {
        let h = 1e-6;
        let fwd = x.pullback(&(&a * -h).exp()).unwrap();
        let bwd = x.pullback(&(&a * h).exp()).unwrap();
        let fd = (fwd - bwd) * (0.5 / h);
        prop_assert!(fd.distance(&x.theta(&a)) < 1e-6);
    }

    #[test]
    fn d_squared_vanishes(seed in any::<u64>(), degree in 0usize..=6) {
        let mut r = rng(seed);
        let alg = algebra(&Endomorphism::new(random_matrix(&mut r, 6, 1.0)).unwrap());
        let f = random_form(&mut r, 7, degree);
        let dd = differential(&alg, &differential(&alg, &f).unwrap()).unwrap();
        prop_assert!(dd.max_abs() < 1e-12);
    }

    #[test]
    fn d_is_a_graded_derivation(seed in any::<u64>(), (k, m) in degrees(7)) {
        let mut r = rng(seed);
        let alg = algebra(&Endomorphism::new(random_matrix(&mut r, 6, 1.0)).unwrap());
        let x = random_form(&mut r, 7, k);
        let y = random_form(&mut r, 7, m);
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        let lhs = differential(&alg, &x.wedge(&y)).unwrap();
        let rhs = differential(&alg, &x).unwrap().wedge(&y) + x.wedge(&differential(&alg, &y).unwrap()) * sign;
        prop_assert!(lhs.distance(&rhs) < 1e-11);
    }

    #[test]
    fn codifferential_is_adjoint_on_unimodular_algebras(seed in any::<u64>(), degree in 0usize..=6) {
        let mut r = rng(seed);
        let alg = algebra(&random_sp(&mut r, &standard_omega(), 1.0));
        let g = random_metric(&mut r, 7);
        let vol = g.volume_form();
        let a = random_form(&mut r, 7, degree);
        let b = random_form(&mut r, 7, degree + 1);
        let lhs = g.inner(&differential(&alg, &a).unwrap(), &b).unwrap();
        let rhs = g.inner(&a, &codifferential(&alg, &g, &vol, &b).unwrap()).unwrap();
        prop_assert!((lhs - rhs).abs() < 1e-9 * (1.0 + lhs.abs()));
    }

    #[test]
    fn laplacian_is_self_adjoint(seed in any::<u64>(), degree in 0usize..=7) {
        let mut r = rng(seed);
        let alg = algebra(&random_sp(&mut r, &standard_omega(), 1.0));
        let g = random_metric(&mut r, 7);
        let vol = g.volume_form();
        let a = random_form(&mut r, 7, degree);
        let b = random_form(&mut r, 7, degree);
        let lhs = g.inner(&laplacian(&alg, &g, &vol, &a).unwrap(), &b).unwrap();
        let rhs = g.inner(&a, &laplacian(&alg, &g, &vol, &b).unwrap()).unwrap();
        prop_assert!((lhs - rhs).abs() < 1e-8 * (1.0 + lhs.abs()));
        let norm = g.inner(&laplacian(&alg, &g, &vol, &a).unwrap(), &a).unwrap();
        prop_assert!(norm > -1e-9);
    }

    #[test]
    fn hodge_star_squares_to_sign(seed in any::<u64>(), degree in 0usize..=7) {
        let mut r = rng(seed);
        let g = random_metric(&mut r, 7);
        let a = random_form(&mut r, 7, degree);
        let twice = g.star(&g.star(&a).unwrap()).unwrap();
        prop_assert!(twice.distance(&a) < 1e-10);
        let vol = g.volume_form();
        let lhs = a.wedge(&g.star(&a).unwrap());
        let rhs = &vol * g.inner(&a, &a).unwrap();
        prop_assert!(lhs.distance(&rhs) < 1e-9 * (1.0 + rhs.max_abs()));
    }

    #[test]
    fn adjoint_identity(seed in any::<u64>(), degree in 0usize..=6) {
        let mut r = rng(seed);
        let (su3, _) = random_su3(&mut r);
        let a = random_sp(&mut r, &su3.omega, 1.0);
        prop_assert!(adjoint_identity_check(&a, &su3, degree).unwrap() < 1e-9);
    }

    #[test]
    fn split_and_join_roundtrip(x in form_strategy(7, 3)) {
        let (a0, a1) = split_form(&x).unwrap();
        prop_assert_eq!(join(&a0, &a1), x);
    }

    #[test]
    fn g2_structure_is_equivariant(seed in any::<u64>()) {
        let mut r = rng(seed);
        let p = Endomorphism::new(DMatrix::identity(7, 7) + random_matrix(&mut r, 7, 0.3)).unwrap();
        let phi = g2coflow::stable_forms::standard_phi().pullback(&p).unwrap();
        let g2 = g2_from_phi(&phi).unwrap();
        let expected = Metric::new(p.transpose().matrix() * p.matrix()).unwrap();
        prop_assert!((g2.metric.matrix() - expected.matrix()).amax() < 1e-10);
        let phi_hat = g2coflow::stable_forms::standard_phi_hat().pullback(&p).unwrap() * g2.orientation();
        prop_assert!(g2.phi_hat.distance(&phi_hat) < 1e-9);
        prop_assert!((g2.metric.inner(&phi, &phi).unwrap() - 7.0).abs() < 1e-9);
    }

    #[test]
    fn json_roundtrip(x in form_strategy(7, 4)) {
        let back = KForm::from_json(&x.to_json()).unwrap();
        prop_assert_eq!(back, x);
    }

    #[test]
    fn expression_roundtrip(x in form_strategy(6, 3)) {
        let back = KForm::parse(6, &x.to_string()).unwrap();
        prop_assert!(back.distance(&x) <= 1e-15 * (1.0 + x.max_abs()));
    }
}
