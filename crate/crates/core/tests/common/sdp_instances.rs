//! Random block SDPs with a known optimal primal-dual pair.
//!
//! Each block gets `X* = U diag(l, 0) U^H` and `S* = U diag(0, m) U^H` so that
//! `X* S* = 0`. The first row is `sum_j tr X_j`, which makes the dual strictly
//! feasible; every other row is made orthogonal to a direction `D` along which
//! `X* + t D` becomes positive definite, which makes the primal strictly feasible.

use rabf::hermlinalg::{CMatrix, HermitianMatrix, C64};
use rabf::sdp::{BlockKind, Coef, ConicProgram, Sense, SparseHermitian};
use rand::Rng;

pub struct Instance {
    pub program: ConicProgram,
    pub optimum: f64,
    pub x_star: Vec<HermitianMatrix>,
}

pub fn random_hermitian<R: Rng>(n: usize, complex: bool, rng: &mut R) -> HermitianMatrix {
    HermitianMatrix::from_fn(n, |_, _| {
        let im = if complex { rng.random_range(-1.0..1.0) } else { 0.0 };
        C64::new(rng.random_range(-1.0..1.0), im)
    })
}

pub fn random_unitary<R: Rng>(n: usize, complex: bool, rng: &mut R) -> CMatrix {
    random_hermitian(n, complex, rng).eigh().unwrap().vectors
}

fn from_spectrum(u: &CMatrix, d: &[f64]) -> HermitianMatrix {
    let mut scaled = u.clone();
    for (k, v) in d.iter().enumerate() {
        scaled.column_mut(k).iter_mut().for_each(|z| *z *= *v);
    }
    HermitianMatrix::new(&scaled * u.adjoint()).unwrap()
}

pub fn generate<R: Rng>(dims: &[usize], n_rows: usize, complex: bool, rng: &mut R) -> Instance {
    let mut x_star = Vec::new();
    let mut s_star = Vec::new();
    let mut null_parts = Vec::new();
    for &n in dims {
        let u = random_unitary(n, complex, rng);
        let r = rng.random_range(1..=n);
        let mut lx = vec![0.0; n];
        let mut ls = vec![0.0; n];
        let mut pn = vec![0.0; n];
        for k in 0..n {
            if k < r {
                lx[k] = rng.random_range(0.5..2.0);
            } else {
                ls[k] = rng.random_range(0.5..2.0);
                pn[k] = 1.0;
            }
        }
        x_star.push(from_spectrum(&u, &lx));
        s_star.push(from_spectrum(&u, &ls));
        null_parts.push(from_spectrum(&u, &pn));
    }
    let tr_x: f64 = x_star.iter().map(|x| x.trace()).sum();
    let tr_null: f64 = null_parts.iter().map(|p| p.trace()).sum();
    let c = tr_null / tr_x;
    let d: Vec<HermitianMatrix> = null_parts.iter().zip(&x_star).map(|(p, x)| p - &x.scale(c)).collect();
    let dd: f64 = d.iter().map(|m| m.inner(m)).sum();

    let mut rows: Vec<Vec<HermitianMatrix>> = vec![dims.iter().map(|&n| HermitianMatrix::identity(n)).collect()];
    for _ in 1..n_rows {
        let mut a: Vec<HermitianMatrix> = dims.iter().map(|&n| random_hermitian(n, complex, rng)).collect();
        if dd > 0.0 {
            let proj: f64 = a.iter().zip(&d).map(|(ai, di)| ai.inner(di)).sum::<f64>() / dd;
            a = a.iter().zip(&d).map(|(ai, di)| ai - &di.scale(proj)).collect();
        }
        rows.push(a);
    }
    let y: Vec<f64> = (0..n_rows).map(|_| rng.random_range(-1.0..1.0)).collect();

    let mut program = ConicProgram::new();
    for &n in dims {
        program.add_block(BlockKind::Psd(n));
    }
    for (j, s) in s_star.iter().enumerate() {
        let mut cj = s.clone();
        for (row, yi) in rows.iter().zip(&y) {
            cj = &cj + &row[j].scale(*yi);
        }
        program.add_cost(j, Coef::Matrix(SparseHermitian::from_dense(&cj)));
    }
    let mut optimum = 0.0;
    for (row, yi) in rows.iter().zip(&y) {
        let b: f64 = row.iter().zip(&x_star).map(|(a, x)| a.inner(x)).sum();
        optimum += b * yi;
        let terms = row.iter().enumerate().map(|(j, a)| (j, Coef::Matrix(SparseHermitian::from_dense(a)))).collect();
        program.add_constraint(terms, Sense::Eq, b);
    }
    Instance { program, optimum, x_star }
}
