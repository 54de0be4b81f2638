//! Quick self-checks run by `rabf validate`: every check compares a library result with an
//! independent computation on freshly drawn instances.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{build_beamformer, evaluate_worst_case_sinr, Method, RunData, SetBundle, SetParams};
use crate::array_model::{Scenario, UncertaintySpec};
use crate::blmi::BlmiSettings;
use crate::hermlinalg::{CVector, HermitianMatrix, C64};
use crate::rankone::{decompose_d1, eigsum_value, lambda1_program, reconstruction_error};
use crate::sdp::Settings;
use crate::wcsinr_a1::{condition_report, solve_tightened_lmi, strict_feasibility_witnesses};
use crate::wcsinr_quad::{condition_report_quad, solve_tightened_lmi_quad};
use crate::Result;

#[derive(Clone, Debug)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    /// Largest observed error, or the number of failures, depending on the check.
    pub worst: f64,
    pub detail: String,
}

fn hermitian(n: usize, rng: &mut ChaCha8Rng) -> HermitianMatrix {
    HermitianMatrix::from_fn(n, |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
}

fn vector(n: usize, rng: &mut ChaCha8Rng) -> CVector {
    CVector::from_fn(n, |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
}

fn psd_of_rank(n: usize, r: usize, rng: &mut ChaCha8Rng) -> HermitianMatrix {
    (0..r).fold(HermitianMatrix::zeros(n), |acc, _| &acc + &HermitianMatrix::outer(&vector(n, rng)))
}

fn check(name: &'static str, worst: f64, tol: f64, what: &str) -> CheckResult {
    CheckResult { name, passed: worst <= tol, worst, detail: format!("{what}: worst {worst:.3e} (tolerance {tol:.0e})") }
}

fn eig_checks(count: usize, rng: &mut ChaCha8Rng) -> Result<Vec<CheckResult>> {
    let settings = Settings::tight(1e-10, 1e-8);
    let (mut lmax, mut sum) = (0.0f64, 0.0f64);
    for _ in 0..count {
        let n = rng.random_range(2..=8);
        let w = hermitian(n, rng);
        let vals = w.eigenvalues()?;
        let (v, _) = lambda1_program(&w, &settings)?;
        lmax = lmax.max((v - vals[0]).abs());
        for k in [1, 2, n] {
            let t = eigsum_value(&w, k, &settings)?;
            let exact: f64 = vals[..k].iter().sum();
            sum = sum.max((t - exact).abs());
        }
    }
    Ok(vec![
        check("lambda_max_program", lmax, 1e-7, "largest-eigenvalue SDP against eigh"),
        check("eigenvalue_sum_template", sum, 1e-7, "eigenvalue-sum epigraph against eigh partial sums"),
    ])
}

fn decomposition_check(count: usize, rng: &mut ChaCha8Rng) -> Result<CheckResult> {
    let mut worst = 0.0f64;
    for _ in 0..count {
        let n = rng.random_range(2..=6);
        let x = psd_of_rank(n, rng.random_range(1..=n), rng);
        let (a, b) = (hermitian(n, rng), hermitian(n, rng));
        let d = decompose_d1(&x, &a, &b)?;
        let scale = 1.0 + x.frobenius() * (a.frobenius() + b.frobenius());
        worst = worst.max(d.residual_a.max(d.residual_b) / scale).max(reconstruction_error(&x, &d.vectors) / (1.0 + x.frobenius()));
    }
    Ok(check("rank_one_decomposition", worst, 1e-8, "equalization and reconstruction residuals"))
}

fn witness_check(count: usize, rng: &mut ChaCha8Rng) -> Result<CheckResult> {
    let mut failures = 0usize;
    for _ in 0..count {
        let n = rng.random_range(2..=8);
        let nf = n as f64;
        let a_hat = crate::array_model::steering(&crate::array_model::ArrayGeometry::ula(n), rng.random_range(-60.0..60.0));
        let eps = rng.random_range(0.05..0.9) * nf;
        let spec = UncertaintySpec::ball(a_hat, eps, rng.random_range(0.0..0.5) * nf, rng.random_range(0.0..0.5) * nf)?;
        let w = vector(n, rng);
        if !strict_feasibility_witnesses(&spec, &w)?.strictly_feasible() {
            failures += 1;
        }
    }
    Ok(CheckResult {
        name: "strict_feasibility_witnesses",
        passed: failures == 0,
        worst: failures as f64,
        detail: format!("{failures} of {count} witness pairs not strictly feasible"),
    })
}

fn condition_checks(count: usize, seed: u64) -> Result<Vec<CheckResult>> {
    let template = Scenario::default();
    let sets = SetBundle::new(&template, &SetParams::defaults(template.n()))?;
    let (mut a1_fail, mut quad_fail) = (Vec::new(), Vec::new());
    for run in 0..count as u64 {
        let data = RunData::new(Scenario { seed: seed + run, ..template.clone() }, 0.1)?;
        let s = solve_tightened_lmi(&data.r_hat, &sets.ball)?;
        let rep = condition_report(&data.r_hat, &s.primal, &s.dual, &sets.ball)?;
        a1_fail.extend(rep.failing().iter().map(|c| format!("seed {}: {}", seed + run, c.name)));
        for spec in [&sets.upper, &sets.lower] {
            let s = solve_tightened_lmi_quad(&data.r_hat, spec)?;
            let rep = condition_report_quad(&data.r_hat, &s.primal, &s.dual, spec)?;
            quad_fail.extend(rep.failing().iter().map(|c| format!("seed {}: {}", seed + run, c.name)));
        }
    }
    let mk = |name, fails: Vec<String>| CheckResult {
        name,
        passed: fails.is_empty(),
        worst: fails.len() as f64,
        detail: if fails.is_empty() { "all clauses hold".into() } else { fails.join("; ") },
    };
    Ok(vec![mk("ball_set_optimality_conditions", a1_fail), mk("quadratic_set_optimality_conditions", quad_fail)])
}

fn beamformer_checks(count: usize, seed: u64) -> Result<Vec<CheckResult>> {
    let template = Scenario::default();
    let sets = SetBundle::new(&template, &SetParams::defaults(template.n()))?;
    let blmi = BlmiSettings::default();
    let (mut excess, mut consistency) = (f64::NEG_INFINITY, 0.0f64);
    for run in 0..count as u64 {
        let data = RunData::new(Scenario { seed: seed + run, ..template.clone() }, 0.1)?;
        let opt = data.optimal_sinr()?;
        for m in Method::ALL {
            let res = build_beamformer(m, &data, &sets, &blmi)?;
            excess = excess.max(data.output_sinr(&res.w)? - opt);
            if matches!(m, Method::Qmi1 | Method::Qmi2 | Method::Qmi3) {
                let spec = sets.for_method(m).expect("robust method");
                let wc = evaluate_worst_case_sinr(&res.w, spec, &data.r_hat)?;
                // the pipeline normalizes the worst-case gain to one
                let implied = 1.0 / data.r_hat.quad_form(&res.w);
                consistency = consistency.max((wc - implied).abs() / implied);
            }
        }
    }
    Ok(vec![
        CheckResult {
            name: "sinr_upper_bound",
            passed: excess <= 1e-6,
            worst: excess,
            detail: format!("largest output SINR minus optimal SINR: {excess:.3e} dB"),
        },
        check("worst_case_sinr_consistency", consistency, 1e-4, "re-evaluated worst-case SINR against the solver objective"),
    ])
}

/// Runs all checks on `count` instances each (scenario checks use `count.div_ceil(5)` runs).
pub fn validate_suite(count: usize, seed: u64) -> Result<Vec<CheckResult>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let count = count.max(1);
    let mut out = eig_checks(count, &mut rng)?;
    out.push(decomposition_check(count, &mut rng)?);
    out.push(witness_check(count, &mut rng)?);
    let runs = count.div_ceil(5);
    out.extend(condition_checks(runs, seed)?);
    out.extend(beamformer_checks(runs, seed)?);
    Ok(out)
}
