mod common;

use common::sdp_instances::random_hermitian;
use proptest::prelude::*;
use rabf::hermlinalg::{CVector, HermitianMatrix, C64};
use rabf::rankone::{decompose_d1, eigsum_value, lambda1_program, principal_factor, rank_ratio, reconstruction_error, reduce_rank};
use rabf::sdp::Settings;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn psd_of_rank<R: Rng>(n: usize, r: usize, rng: &mut R) -> HermitianMatrix {
    (0..r).fold(HermitianMatrix::zeros(n), |acc, _| {
        let v = CVector::from_fn(n, |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
        &acc + &HermitianMatrix::outer(&v)
    })
}

#[test]
fn decomposition_equalizes_both_forms() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for _ in 0..100 {
        let n = rng.random_range(2..=7);
        let r = rng.random_range(1..=n);
        let x = psd_of_rank(n, r, &mut rng);
        let a = random_hermitian(n, true, &mut rng);
        let b = random_hermitian(n, true, &mut rng);
        let d = decompose_d1(&x, &a, &b).unwrap();
        assert_eq!(d.vectors.len(), r);
        assert!(reconstruction_error(&x, &d.vectors) <= 1e-9 * (1.0 + x.frobenius()));
        let rf = r as f64;
        for v in &d.vectors {
            // independent recomputation of the equalization property
            assert!((a.quad_form(v) - a.inner(&x) / rf).abs() <= 1e-8 * (1.0 + x.frobenius() * a.frobenius()));
            assert!((b.quad_form(v) - b.inner(&x) / rf).abs() <= 1e-8 * (1.0 + x.frobenius() * b.frobenius()));
        }
    }
}

#[test]
fn decomposition_rejects_mismatched_or_indefinite_input() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = psd_of_rank(3, 2, &mut rng);
    let a = random_hermitian(4, true, &mut rng);
    assert!(decompose_d1(&x, &a, &a).is_err());
    let ind = HermitianMatrix::diag(&[1.0, -1.0, 0.5]);
    let b = random_hermitian(3, true, &mut rng);
    assert!(decompose_d1(&ind, &b, &b).is_err());
}

#[test]
fn eigenvalue_programs_match_eigh() {
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    let settings = Settings::tight(1e-10, 1e-8);
    for _ in 0..15 {
        let n = rng.random_range(2..=9);
        let w = random_hermitian(n, rng.random_bool(0.5), &mut rng);
        let vals = w.eigenvalues().unwrap();
        let (l1, _) = lambda1_program(&w, &settings).unwrap();
        assert!((l1 - vals[0]).abs() <= 1e-7, "{l1} vs {}", vals[0]);
        for k in [1, 2, n] {
            let exact: f64 = vals[..k].iter().sum();
            let got = eigsum_value(&w, k, &settings).unwrap();
            assert!((got - exact).abs() <= 1e-7, "k {k}: {got} vs {exact}");
        }
    }
}

#[test]
fn rank_reduction_preserves_forms() {
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    for _ in 0..20 {
        let n = rng.random_range(3..=6);
        let x = psd_of_rank(n, rng.random_range(2..=n), &mut rng);
        let forms: Vec<HermitianMatrix> = (0..2).map(|_| random_hermitian(n, true, &mut rng)).collect();
        let obj = random_hermitian(n, true, &mut rng);
        let v = reduce_rank(&x, &forms, &obj).unwrap();
        let xx = HermitianMatrix::outer(&v);
        for f in &forms {
            assert!((f.inner(&xx) - f.inner(&x)).abs() <= 1e-8 * (1.0 + f.frobenius() * x.frobenius()));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn principal_factor_recovers_rank_one(re in prop::collection::vec(-1.0f64..1.0, 5), im in prop::collection::vec(-1.0f64..1.0, 5)) {
        let v = CVector::from_fn(5, |i, _| C64::new(re[i], im[i]));
        prop_assume!(v.norm() > 1e-3);
        let x = HermitianMatrix::outer(&v);
        let f = principal_factor(&x).unwrap();
        prop_assert!((HermitianMatrix::outer(&f).as_matrix() - x.as_matrix()).norm() <= 1e-10 * (1.0 + x.frobenius()));
        prop_assert!(rank_ratio(&x).unwrap() <= 1e-12);
    }
}
