use proptest::prelude::*;
use rabf::array_model::{
    admissible_range, gamma_from_min_eig, optimal_sinr, output_sinr, r_hat, sector_sets, simulate, steering, ArrayGeometry,
    QuadSign, Scenario, UncertaintySpec,
};
use rabf::hermlinalg::{vnorm, CVector, HermitianMatrix, C64};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn steering_has_unit_modulus_entries(n in 1usize..20, theta in -90.0f64..90.0) {
        let d = steering(&ArrayGeometry::ula(n), theta);
        prop_assert!(d.iter().all(|z| (z.norm() - 1.0).abs() < 1e-12));
        prop_assert!((vnorm(&d).powi(2) - n as f64).abs() < 1e-9);
    }

    #[test]
    fn mirrored_angle_conjugates_steering(n in 2usize..16, theta in -90.0f64..90.0) {
        let g = ArrayGeometry::ula(n);
        let (a, b) = (steering(&g, theta), steering(&g, -theta));
        prop_assert!((a.map(|z| z.conj()) - b).norm() < 1e-12);
    }

    #[test]
    fn ball_membership_matches_distances(frac in 0.0f64..1.0, eps_frac in 0.05f64..0.9, theta in -60.0f64..60.0) {
        let n = 6;
        let nf = n as f64;
        let a_hat = steering(&ArrayGeometry::ula(n), theta);
        let spec = UncertaintySpec::ball(a_hat.clone(), eps_frac * nf, 0.3 * nf, 0.3 * nf).unwrap();
        // moving along a_hat keeps the point on a ray of the ball
        let scale = 1.0 + frac * (eps_frac * nf).sqrt() / nf.sqrt();
        let a = &a_hat * C64::new(scale, 0.0);
        let dist2 = (scale - 1.0).powi(2) * nf;
        let norm2 = scale * scale * nf;
        let inside = dist2 <= eps_frac * nf && norm2 <= 1.3 * nf;
        prop_assert_eq!(spec.contains(&a, 1e-12), inside);
        prop_assert!(spec.violation(&a_hat) == 0.0);
    }

    #[test]
    fn quad_threshold_range_is_enforced(d in 0.0f64..1.0) {
        let m = HermitianMatrix::diag(&[2.0, 1.0, 0.5]);
        let (lo, hi) = admissible_range(&m, 0.5, 0.5).unwrap();
        prop_assert!((lo - 0.5 * 2.5).abs() < 1e-12 && (hi - 2.0 * 3.5).abs() < 1e-12);
        let delta = lo + d * (hi - lo);
        prop_assert!(UncertaintySpec::quad(m.clone(), delta, 0.5, 0.5, QuadSign::Upper).is_ok());
        prop_assert!(UncertaintySpec::quad(m.clone(), hi + 1.0, 0.5, 0.5, QuadSign::Upper).is_err());
        // the lower-bound set is checked through its upper form (-M, -delta)
        let (l2, h2) = admissible_range(&m.scale(-1.0), 0.5, 0.5).unwrap();
        let d2 = -(l2 + d * (h2 - l2));
        prop_assert!(UncertaintySpec::quad(m.clone(), d2, 0.5, 0.5, QuadSign::Lower).is_ok());
    }
}

#[test]
fn sector_sets_contain_in_sector_steering_vectors() {
    let g = ArrayGeometry::ula(12);
    let (upper, lower) = sector_sets(&g, (0.0, 10.0), 2.4, 2.4, 512, 10_000).unwrap();
    for k in 0..=50 {
        let a = steering(&g, 10.0 * k as f64 / 50.0);
        assert!(upper.violation(&a) <= 1e-8, "upper at step {k}: {}", upper.violation(&a));
        assert!(lower.violation(&a) <= 1e-8, "lower at step {k}: {}", lower.violation(&a));
    }
    // interferer directions are excluded by the upper set
    assert!(upper.violation(&steering(&g, 15.0)) > 0.0);
    assert!(upper.violation(&steering(&g, -15.0)) > 0.0);
}

#[test]
fn simulation_is_seeded_and_sinr_bounded() {
    let sc = Scenario { seed: 3, ..Scenario::default() };
    let a = simulate(&sc).unwrap();
    let b = simulate(&Scenario { seed: 4, ..sc.clone() }).unwrap();
    assert_ne!(a.r_sample, b.r_sample);
    assert_eq!(a.snapshots.len(), sc.snapshots);
    // the phase distortion keeps unit-modulus entries
    assert!(a.a_true.iter().all(|z| (z.norm() - 1.0).abs() < 1e-12));
    let gamma = gamma_from_min_eig(&a.r_sample, 0.1).unwrap();
    let loaded = r_hat(&a.r_sample, gamma).unwrap();
    let lmin = a.r_sample.min_eig().unwrap();
    assert!((loaded.min_eig().unwrap() - 1.1 * lmin).abs() <= 1e-9 * lmin.max(1.0));
    let p = sc.signal_power();
    let opt = optimal_sinr(p, &a.a_true, &a.r_inplus_noise).unwrap();
    let w_opt = a.r_inplus_noise.solve_pd(&a.a_true).unwrap();
    assert!((output_sinr(&w_opt, p, &a.a_true, &a.r_inplus_noise).unwrap() - opt).abs() < 1e-9);
    let w: CVector = steering(&sc.geometry, sc.soi_angle_presumed);
    assert!(output_sinr(&w, p, &a.a_true, &a.r_inplus_noise).unwrap() <= opt + 1e-9);
    assert!(r_hat(&a.r_sample, -1.0).is_err());
}
