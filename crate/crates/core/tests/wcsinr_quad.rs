mod common;

use common::oracles::{gaussian_vector, quad_inner_oracle, quad_inner_pg, random_quad_instance, QuadProjector};
use common::sdp_instances::random_hermitian;
use rabf::array_model::{QuadSign, Scenario, UncertaintySpec};
use rabf::blmi::{BlmiSettings, BlmiStatus};
use rabf::harness::{RunData, SetBundle, SetParams};
use rabf::hermlinalg::{vnorm, HermitianMatrix};
use rabf::wcsinr_quad::{
    blmi_solve_quad, condition_report_quad, inner_min_quad, qmi_beamformer_quad, solve_plain_lmi_quad,
    solve_tightened_lmi_quad,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn section_v(seed: u64) -> (RunData, SetBundle) {
    let sc = Scenario { seed, ..Scenario::default() };
    let sets = SetBundle::new(&sc, &SetParams::defaults(sc.n())).unwrap();
    (RunData::new(sc, 0.1).unwrap(), sets)
}

#[test]
fn inner_minimization_matches_reduced_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for k in 0..12 {
        let sign = if k % 2 == 0 { QuadSign::Upper } else { QuadSign::Lower };
        let (spec, w) = random_quad_instance(sign, &mut rng);
        let oracle = quad_inner_oracle(&w, &spec);
        let got = inner_min_quad(&w, &spec).unwrap();
        assert!((got.value - oracle).abs() <= 1e-5 * oracle, "{sign:?}: sdr {} attained {} viol {:e} oracle {oracle}", got.value, got.attained, spec.violation(&got.minimizer_a));
        assert!(spec.violation(&got.minimizer_a) <= 1e-7);
    }
}

#[test]
fn zero_value_when_orthogonal_directions_are_admissible() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    // the whole shell is admissible, so some a is orthogonal to w
    let spec = UncertaintySpec::quad(HermitianMatrix::identity(3), 3.5, 0.5, 0.5, QuadSign::Upper).unwrap();
    for _ in 0..5 {
        let w = gaussian_vector(3, &mut rng);
        assert!(quad_inner_oracle(&w, &spec) <= 1e-12);
        assert!(inner_min_quad(&w, &spec).unwrap().value <= 1e-6 * w.norm_squared());
    }
}

#[test]
fn ball_set_is_rejected() {
    let a = rabf::array_model::steering(&rabf::array_model::ArrayGeometry::ula(3), 0.0);
    let spec = UncertaintySpec::ball(a.clone(), 1.0, 0.5, 0.5).unwrap();
    assert!(inner_min_quad(&a, &spec).is_err());
}

#[test]
fn sector_sets_satisfy_conditions_and_tightening() {
    for seed in [1u64, 2] {
        let (data, sets) = section_v(seed);
        for spec in [&sets.upper, &sets.lower] {
            let tight = solve_tightened_lmi_quad(&data.r_hat, spec).unwrap();
            let plain = solve_plain_lmi_quad(&data.r_hat, spec).unwrap();
            assert!(tight.objective >= plain.objective * (1.0 - 1e-7));
            let rep = condition_report_quad(&data.r_hat, &tight.primal, &tight.dual, spec).unwrap();
            assert!(rep.all_hold(), "seed {seed}: {:?}", rep.failing());
            assert!(rep.zero_cut.is_some() && rep.rank_one_certificate.is_some());
        }
    }
}

#[test]
fn restriction_gives_robust_rank_one_beamformers() {
    let settings = BlmiSettings::default();
    let (data, sets) = section_v(7);
    for (spec, tag) in [(&sets.upper, "qmi_2"), (&sets.lower, "qmi_3")] {
        let out = blmi_solve_quad(&data.r_hat, spec, &settings).unwrap();
        assert_ne!(out.status, BlmiStatus::NonConverged);
        assert!(out.final_ratio <= 1e-6);
        let gain = inner_min_quad(&out.w, spec).unwrap().value;
        assert!(gain >= 1.0 - 1e-6, "{tag}: gain {gain}");
        let res = qmi_beamformer_quad(&data.r_hat, spec, &settings).unwrap();
        assert_eq!(res.method, tag);
        assert!(vnorm(&(&res.w - &out.w)) <= 1e-6 * vnorm(&out.w));
    }
}

#[test]
fn projected_gradient_agrees_with_reduced_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for k in 0..6 {
        let sign = if k % 2 == 0 { QuadSign::Upper } else { QuadSign::Lower };
        let (spec, w) = random_quad_instance(sign, &mut rng);
        let (pg, a) = quad_inner_pg(&w, &spec, 20, &mut rng);
        assert!(spec.violation(&a) <= 1e-9, "violation {}", spec.violation(&a));
        let oracle = quad_inner_oracle(&w, &spec);
        assert!((pg - oracle).abs() <= 1e-6 * oracle, "{sign:?}: pg {pg} oracle {oracle}");
    }
}

#[test]
fn quad_projection_is_idempotent_and_nearest() {
    let mut rng = ChaCha8Rng::seed_from_u64(24);
    for k in 0..10 {
        let sign = if k % 2 == 0 { QuadSign::Upper } else { QuadSign::Lower };
        let (spec, _) = random_quad_instance(sign, &mut rng);
        let proj = QuadProjector::new(&spec);
        let q = gaussian_vector(3, &mut rng) * rabf::hermlinalg::C64::new(1.5, 0.0);
        let p = proj.project(&q);
        assert!(spec.violation(&p) <= 1e-9);
        assert!(vnorm(&(&proj.project(&p) - &p)) <= 1e-8);
        let d = vnorm(&(&q - &p));
        for _ in 0..300 {
            let c = proj.project(&(&p + gaussian_vector(3, &mut rng) * rabf::hermlinalg::C64::new(0.1, 0.0)));
            assert!(vnorm(&(&q - &c)) >= d - 1e-9);
        }
    }
}

#[test]
fn rank_one_certificate_implies_rank_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut held = 0;
    for k in 0..60 {
        let sign = if k % 2 == 0 { QuadSign::Upper } else { QuadSign::Lower };
        let (spec, _) = random_quad_instance(sign, &mut rng);
        let b = random_hermitian(3, true, &mut rng);
        let load = 10f64.powf(-rng.random_range(0.0..3.0));
        let r = &HermitianMatrix::new(b.as_matrix() * b.as_matrix().adjoint()).unwrap() + &HermitianMatrix::identity(3).scale(load);
        let sol = solve_tightened_lmi_quad(&r, &spec).unwrap();
        let rep = condition_report_quad(&r, &sol.primal, &sol.dual, &spec).unwrap();
        if rep.rank_one_certificate.unwrap() <= 1.0 {
            held += 1;
            assert!(rep.rank_ratio <= 1e-7, "certificate held with rank ratio {:e}", rep.rank_ratio);
        }
    }
    assert!(held > 0, "no instance exercised the certificate");
}
