mod common;

use common::oracles::{ball_inner_exact, ball_inner_pg, ball_projection, gaussian_vector, positive_ball_w, random_ball_spec};
use rabf::array_model::{simulate, Scenario, UncertaintySpec};
use rabf::blmi::{BlmiSettings, BlmiStatus};
use rabf::hermlinalg::{vnorm, HermitianMatrix, C64};
use rabf::wcsinr_a1::{
    blmi_solve, condition_report, inner_min, solve_plain_lmi, solve_tightened_lmi,
    strict_feasibility_witnesses,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn parts(spec: &UncertaintySpec) -> (&rabf::hermlinalg::CVector, f64, f64, f64) {
    let UncertaintySpec::Ball { a_hat, eps, .. } = spec else { unreachable!() };
    let (lo, hi) = spec.shell();
    (a_hat, *eps, lo, hi)
}

fn section_v(seed: u64) -> (HermitianMatrix, UncertaintySpec) {
    let sc = Scenario { seed, ..Scenario::default() };
    let sim = simulate(&sc).unwrap();
    let gamma = rabf::array_model::gamma_from_min_eig(&sim.r_sample, 0.1).unwrap();
    let r = rabf::array_model::r_hat(&sim.r_sample, gamma).unwrap();
    let nf = sc.n() as f64;
    let spec = UncertaintySpec::ball(sc.presumed_steering(), 0.3 * nf, 0.2 * nf, 0.2 * nf).unwrap();
    (r, spec)
}

#[test]
fn projection_lands_in_set_and_is_idempotent() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..50 {
        let n = rng.random_range(2..=5);
        let spec = random_ball_spec(n, &mut rng);
        let (a_hat, eps, lo, hi) = parts(&spec);
        let q = gaussian_vector(n, &mut rng) * C64::new(rng.random_range(0.1..3.0), 0.0);
        let p = ball_projection(&q, a_hat, eps, lo, hi);
        assert!(spec.violation(&p) <= 1e-10, "violation {}", spec.violation(&p));
        let pp = ball_projection(&p, a_hat, eps, lo, hi);
        assert!(vnorm(&(&pp - &p)) <= 1e-9);
        // no sampled set point is closer
        let d = vnorm(&(&q - &p));
        for _ in 0..200 {
            let cand = ball_projection(&(&p + gaussian_vector(n, &mut rng) * C64::new(0.05, 0.0)), a_hat, eps, lo, hi);
            assert!(vnorm(&(&q - &cand)) >= d - 1e-9);
        }
    }
}

#[test]
fn exact_evaluator_agrees_with_projected_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..8 {
        let spec = random_ball_spec(3, &mut rng);
        let (a_hat, eps, lo, hi) = parts(&spec);
        let w = positive_ball_w(&spec, &mut rng);
        let exact = ball_inner_exact(&w, a_hat, eps, lo, hi);
        let (pg, a) = ball_inner_pg(&w, &spec, 30, &mut rng);
        assert!(spec.violation(&a) <= 1e-10);
        assert!((pg - exact).abs() <= 1e-6 * exact, "pg {pg} exact {exact}");
    }
}

#[test]
fn inner_minimization_matches_exact_value() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..40 {
        let n = rng.random_range(2..=6);
        let spec = random_ball_spec(n, &mut rng);
        let (a_hat, eps, lo, hi) = parts(&spec);
        let w = if rng.random_bool(0.7) { positive_ball_w(&spec, &mut rng) } else { gaussian_vector(n, &mut rng) };
        let exact = ball_inner_exact(&w, a_hat, eps, lo, hi);
        let got = inner_min(&w, &spec).unwrap();
        let scale = w.norm_squared() * lo;
        assert!((got.value - exact).abs() <= 1e-6 * scale, "sdr {} exact {exact}", got.value);
        assert!(spec.violation(&got.minimizer_a) <= 1e-7);
        assert!((got.attained - got.value).abs() <= 1e-6 * scale);
    }
}

#[test]
fn witnesses_are_strictly_feasible() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..30 {
        let n = rng.random_range(2..=8);
        let spec = random_ball_spec(n, &mut rng);
        let w = gaussian_vector(n, &mut rng);
        let wit = strict_feasibility_witnesses(&spec, &w).unwrap();
        assert!(wit.strictly_feasible(), "{wit:?}");
        assert!(wit.lambda > 0.0 && wit.lambda <= 0.5);
    }
}

#[test]
fn wrong_set_kind_and_zero_vector_are_rejected() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let spec = random_ball_spec(3, &mut rng);
    let zero = rabf::hermlinalg::CVector::zeros(3);
    assert!(strict_feasibility_witnesses(&spec, &zero).is_err());
    assert!(inner_min(&gaussian_vector(4, &mut rng), &spec).is_err());
    let quad = UncertaintySpec::quad(HermitianMatrix::identity(3), 3.0, 0.5, 0.5, rabf::array_model::QuadSign::Upper).unwrap();
    assert!(inner_min(&gaussian_vector(3, &mut rng), &quad).is_err());
}

#[test]
fn tightened_relaxation_dominates_plain_and_satisfies_conditions() {
    for seed in [1u64, 2, 3] {
        let (r, spec) = section_v(seed);
        let tight = solve_tightened_lmi(&r, &spec).unwrap();
        let plain = solve_plain_lmi(&r, &spec).unwrap();
        assert!(tight.objective >= plain.objective * (1.0 - 1e-7));
        let rep = condition_report(&r, &tight.primal, &tight.dual, &spec).unwrap();
        assert!(rep.all_hold(), "seed {seed}: {:?}", rep.failing());
        assert!((tight.multiplier_corner - tight.dual.z0).abs() <= 1e-6 * (1.0 + tight.dual.z0.abs()));
    }
}

#[test]
fn restriction_returns_robustly_feasible_rank_one_beamformer() {
    let settings = BlmiSettings::default();
    for seed in [4u64, 9] {
        let (r, spec) = section_v(seed);
        let out = blmi_solve(&r, &spec, &settings).unwrap();
        assert_ne!(out.status, BlmiStatus::NonConverged);
        assert!(out.final_ratio <= 1e-6);
        let gain = inner_min(&out.w, &spec).unwrap().value;
        assert!(gain >= 1.0 - 1e-6, "gain {gain}");
        // never better than the relaxation bound
        let tight = solve_tightened_lmi(&r, &spec).unwrap();
        assert!(r.quad_form(&out.w) >= tight.objective * (1.0 - 1e-6));
        let (a_hat, eps, lo, hi) = parts(&spec);
        let exact = ball_inner_exact(&out.w, a_hat, eps, lo, hi);
        assert!((exact - gain).abs() <= 1e-6);
    }
}
