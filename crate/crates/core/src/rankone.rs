//! Rank-one decomposition equalizing two quadratic forms, and SDP templates for
//! partial eigenvalue sums.

use nalgebra::DMatrix;

use crate::hermlinalg::{CMatrix, CVector, HermitianMatrix, C64};
use crate::sdp::model::{LinExpr, LmiId, MatExpr, MatVar, Model, RowId, Scalar};
use crate::sdp::{Settings, SolveStatus, SparseHermitian};
use crate::{Error, Result};

/// Eigenvalues at or below this fraction of the largest count as zero.
pub const RANK_TOL: f64 = 1e-9;

#[derive(Clone, Debug)]
pub struct DecompositionResult {
    pub vectors: Vec<CVector>,
    /// `max_r |x_r^H A x_r - tr(AX)/R|`
    pub residual_a: f64,
    pub residual_b: f64,
}

/// Real root of `c2 t^2 + 2 c1 t + c0 = 0` when `c0 c2 < 0`, the smaller in magnitude.
fn rotation_root(c2: f64, c1: f64, c0: f64) -> f64 {
    if c2.abs() < 1e-300 {
        return -c0 / (2.0 * c1);
    }
    let disc = (c1 * c1 - c0 * c2).max(0.0).sqrt();
    // numerically stable pair of roots
    let q = -(c1 + c1.signum() * disc);
    let r1 = if q != 0.0 { c0 / q } else { 0.0 };
    let r2 = q / c2;
    if r1.abs() <= r2.abs() {
        r1
    } else {
        r2
    }
}

/// Rotates the pair `(p_i, p_j)` so `p_i` hits `target` for `form`, keeping `p_i p_i^H + p_j p_j^H`.
/// `phase` multiplies `p_j` inside the rotation.
fn rotate_pair(p: &mut [CVector], i: usize, j: usize, fi: f64, fj: f64, cross: C64, phase: C64, target: f64) {
    let c1 = (phase * cross).re;
    let t = rotation_root(fj - target, c1, fi - target);
    let s = (1.0 + t * t).sqrt();
    let pi = p[i].clone();
    let pj = &p[j] * phase;
    p[i] = (&pi + &pj * C64::new(t, 0.0)) / C64::new(s, 0.0);
    p[j] = (&pj - &pi * C64::new(t, 0.0)) / C64::new(s, 0.0);
}

/// Equalizes one form across all vectors by pairwise rotations.
/// When `keep` is set, rotations use the phase that leaves `keep`'s values unchanged.
fn equalize(p: &mut [CVector], form: &HermitianMatrix, keep: Option<&HermitianMatrix>, target: f64) {
    let r = p.len();
    let tol = 1e-14 * (1.0 + target.abs());
    #[cfg(debug_assertions)]
    let total: f64 = p.iter().map(|v| form.quad_form(v)).sum();
    for _ in 0..4 * r {
        let vals: Vec<f64> = p.iter().map(|v| form.quad_form(v)).collect();
        let (mut hi, mut lo) = (0, 0);
        for k in 0..r {
            if vals[k] > vals[hi] {
                hi = k;
            }
            if vals[k] < vals[lo] {
                lo = k;
            }
        }
        if vals[hi] - target <= tol && target - vals[lo] <= tol {
            break;
        }
        // fix whichever extreme is further from the target
        let (i, j) = if vals[hi] - target >= target - vals[lo] { (hi, lo) } else { (lo, hi) };
        let cross = form.bilinear(&p[i], &p[j]);
        let phase = match keep {
            Some(k) => {
                let kij = k.bilinear(&p[i], &p[j]);
                if kij.norm() > 0.0 {
                    C64::new(0.0, 1.0) * kij.conj() / kij.norm()
                } else {
                    C64::new(1.0, 0.0)
                }
            }
            None => C64::new(1.0, 0.0),
        };
        rotate_pair(p, i, j, vals[i], vals[j], cross, phase, target);
        #[cfg(debug_assertions)]
        {
            let now: f64 = p.iter().map(|v| form.quad_form(v)).sum();
            debug_assert!((now - total).abs() <= 1e-8 * (1.0 + total.abs()), "trace drifted: {total} -> {now}");
        }
    }
}

/// Splits PSD `x` into `R = rank(x)` rank-one terms with `x_r^H A x_r = tr(AX)/R` and
/// `x_r^H B x_r = tr(BX)/R` for every `r`.
pub fn decompose_d1(x: &HermitianMatrix, a: &HermitianMatrix, b: &HermitianMatrix) -> Result<DecompositionResult> {
    let n = x.dim();
    if a.dim() != n || b.dim() != n {
        return Err(Error::Dimension("decompose_d1 needs matrices of equal dimension".into()));
    }
    let eig = x.eigh()?;
    let top = eig.values[0];
    let bottom = eig.values[n - 1];
    if bottom < -1e-9 * (1.0 + top.abs().max(bottom.abs())) {
        return Err(Error::Domain(format!("matrix is not PSD (min eigenvalue {bottom:e})")));
    }
    let rank = eig.rank(RANK_TOL);
    let mut p: Vec<CVector> = (0..rank).map(|k| eig.vector(k) * C64::new(eig.values[k].sqrt(), 0.0)).collect();
    if rank == 0 {
        return Ok(DecompositionResult { vectors: p, residual_a: 0.0, residual_b: 0.0 });
    }
    let ta = p.iter().map(|v| a.quad_form(v)).sum::<f64>() / rank as f64;
    let tb = p.iter().map(|v| b.quad_form(v)).sum::<f64>() / rank as f64;
    equalize(&mut p, a, None, ta);
    equalize(&mut p, b, Some(a), tb);
    let residual_a = p.iter().map(|v| (a.quad_form(v) - ta).abs()).fold(0.0, f64::max);
    let residual_b = p.iter().map(|v| (b.quad_form(v) - tb).abs()).fold(0.0, f64::max);
    Ok(DecompositionResult { vectors: p, residual_a, residual_b })
}

/// Rank-one `x x^H` with the same values of `tr(F X)` for every `F` in `forms` and no larger
/// `tr(objective X)`, obtained by repeatedly moving `X` along a direction in its range that
/// keeps all forms fixed until one eigenvalue vanishes.
///
/// Needs `rank(X)^2 > forms.len()` at every step, which holds down to rank one whenever at
/// most three forms are given. With three forms the objective is guaranteed not to increase
/// only when `X` minimizes it over the forms' level set, as for an SDP optimum.
pub fn reduce_rank(x: &HermitianMatrix, forms: &[HermitianMatrix], objective: &HermitianMatrix) -> Result<CVector> {
    let n = x.dim();
    if forms.iter().chain(std::iter::once(objective)).any(|f| f.dim() != n) {
        return Err(Error::Dimension("reduce_rank needs matrices of equal dimension".into()));
    }
    let mut cur = x.clone();
    loop {
        let eig = cur.eigh()?;
        let r = eig.rank(RANK_TOL);
        if r <= 1 {
            return Ok(eig.vector(0) * C64::new(eig.values[0].max(0.0).sqrt(), 0.0));
        }
        let v = CMatrix::from_fn(n, r, |i, k| eig.vectors[(i, k)] * eig.values[k].sqrt());
        let vh = v.adjoint();
        let reduced = |f: &HermitianMatrix| &vh * f.as_matrix() * &v;
        // real basis of r x r Hermitian matrices
        let mut basis = Vec::with_capacity(r * r);
        for k in 0..r {
            for l in k..r {
                let mut b = CMatrix::zeros(r, r);
                if k == l {
                    b[(k, k)] = C64::new(1.0, 0.0);
                    basis.push(b);
                } else {
                    b[(k, l)] = C64::new(1.0, 0.0);
                    b[(l, k)] = C64::new(1.0, 0.0);
                    basis.push(b.clone());
                    b[(k, l)] = C64::new(0.0, 1.0);
                    b[(l, k)] = C64::new(0.0, -1.0);
                    basis.push(b);
                }
            }
        }
        let dim = basis.len();
        let mut rows: Vec<CMatrix> = forms.iter().map(reduced).collect();
        let obj = reduced(objective);
        if dim > rows.len() + 1 {
            rows.push(obj.clone());
        }
        if dim <= rows.len() {
            return Err(Error::Domain(format!("cannot reduce rank {r} under {} forms", forms.len())));
        }
        let mut a = DMatrix::<f64>::zeros(rows.len(), dim);
        for (i, g) in rows.iter().enumerate() {
            let scale = g.iter().map(|z| z.norm()).fold(0.0, f64::max).max(1e-300);
            for (j, b) in basis.iter().enumerate() {
                a[(i, j)] = (g * b).trace().re / scale;
            }
        }
        let ata = a.transpose() * &a;
        let sym = nalgebra::SymmetricEigen::new(ata);
        let kmin = (0..dim).min_by(|&i, &j| sym.eigenvalues[i].total_cmp(&sym.eigenvalues[j])).expect("nonempty");
        let mut delta = CMatrix::zeros(r, r);
        for (j, b) in basis.iter().enumerate() {
            delta += b * C64::new(sym.eigenvectors[(j, kmin)], 0.0);
        }
        let dh = HermitianMatrix::new(delta)?;
        let mu = dh.eigenvalues()?;
        let c = (&obj * dh.as_matrix()).trace().re;
        // candidate steps that zero one eigenvalue of I + t*Delta
        let mut best: Option<(f64, f64)> = None;
        let mut candidates = Vec::new();
        if mu[r - 1] < 0.0 {
            candidates.push(-1.0 / mu[r - 1]);
        }
        if mu[0] > 0.0 {
            candidates.push(-1.0 / mu[0]);
        }
        for t in candidates {
            if best.map_or(true, |(_, b)| t * c < b) {
                best = Some((t, t * c));
            }
        }
        let (t, _) = best.ok_or_else(|| Error::Domain("degenerate rank-reduction direction".into()))?;
        let inner = CMatrix::identity(r, r) + dh.as_matrix() * C64::new(t, 0.0);
        cur = HermitianMatrix::new(&v * inner * &vh)?;
    }
}

/// A matrix entering a template either as a decision variable or as data.
#[derive(Clone, Copy, Debug)]
pub enum MatrixArg<'a> {
    Var(MatVar),
    Fixed(&'a HermitianMatrix),
}

/// Handles of the constraints `t - K s - tr Z >= 0`, `Z - W + s I ⪰ 0`, `Z ⪰ 0`.
#[derive(Clone, Copy, Debug)]
pub struct EigsumHandles {
    pub s: Scalar,
    pub z: MatVar,
    pub row: RowId,
    pub lmi: LmiId,
}

/// Semidefinite representation of `S_K(W) <= t`, the sum of the `K` largest eigenvalues.
#[derive(Clone, Copy, Debug)]
pub struct EigsumEpigraph {
    pub k: usize,
    pub dim: usize,
}

impl EigsumEpigraph {
    pub fn new(k: usize, dim: usize) -> Result<Self> {
        if k == 0 || k > dim {
            return Err(Error::Domain(format!("K = {k} must lie in [1, {dim}]")));
        }
        Ok(Self { k, dim })
    }

    /// Adds the template to `model`, with `t` any linear expression.
    pub fn attach(&self, model: &mut Model, w: MatrixArg<'_>, t: LinExpr) -> EigsumHandles {
        let n = self.dim;
        let s = model.free();
        let z = model.psd(n);
        let row = model.ge(
            t.scalar(s, -(self.k as f64)).mat(z, SparseHermitian::identity(n).scale(-1.0)),
            0.0,
        );
        let mut expr = MatExpr::new(n).var(z, 0, 1.0).scalar(s, SparseHermitian::identity(n));
        expr = match w {
            MatrixArg::Var(v) => expr.var(v, 0, -1.0),
            MatrixArg::Fixed(m) => expr.constant(SparseHermitian::from_dense(&m.scale(-1.0))),
        };
        let lmi = model.lmi(expr);
        EigsumHandles { s, z, row, lmi }
    }
}

/// Minimal `t` with `S_K(W) <= t` for fixed `W`, computed through the template.
pub fn eigsum_value(w: &HermitianMatrix, k: usize, settings: &Settings) -> Result<f64> {
    let tmpl = EigsumEpigraph::new(k, w.dim())?;
    let mut model = Model::new();
    let t = model.free();
    tmpl.attach(&mut model, MatrixArg::Fixed(w), LinExpr::new().scalar(t, 1.0));
    model.minimize(LinExpr::new().scalar(t, 1.0));
    let sol = model.solve(settings)?;
    if sol.status() != SolveStatus::Optimal {
        return Err(Error::Solver { status: sol.status(), context: "eigenvalue-sum template".into() });
    }
    Ok(sol.scalar(t))
}

/// `max tr(W X)` over `tr X = 1, X ⪰ 0`; returns the value and the maximizer.
pub fn lambda1_program(w: &HermitianMatrix, settings: &Settings) -> Result<(f64, HermitianMatrix)> {
    let n = w.dim();
    let mut model = Model::new();
    let x = model.psd(n);
    model.eq(LinExpr::new().mat(x, SparseHermitian::identity(n)), 1.0);
    model.maximize(LinExpr::new().mat(x, SparseHermitian::from_dense(w)));
    let sol = model.solve(settings)?;
    if sol.status() != SolveStatus::Optimal {
        return Err(Error::Solver { status: sol.status(), context: "largest-eigenvalue program".into() });
    }
    Ok((-sol.primal_objective(), sol.value(x).clone()))
}

/// Normalizes the phase of `v` so its largest-magnitude entry is real positive.
pub fn canonical_phase(v: &CVector) -> CVector {
    let k = (0..v.len()).max_by(|&i, &j| v[i].norm().total_cmp(&v[j].norm())).unwrap_or(0);
    if v.is_empty() || v[k].norm() == 0.0 {
        return v.clone();
    }
    let ph = v[k].conj() / v[k].norm();
    v * ph
}

/// Leading scaled eigenvector `sqrt(lambda_1) u_1`.
pub fn principal_factor(x: &HermitianMatrix) -> Result<CVector> {
    let e = x.eigh()?;
    let l = e.values[0].max(0.0);
    Ok(e.vector(0) * C64::new(l.sqrt(), 0.0))
}

/// `lambda_2 / lambda_1` of a PSD matrix (0 for dimension 1 or a zero matrix).
pub fn rank_ratio(x: &HermitianMatrix) -> Result<f64> {
    let v = x.eigenvalues()?;
    if v.len() < 2 || v[0] <= 0.0 {
        return Ok(0.0);
    }
    Ok(v[1].max(0.0) / v[0])
}

pub fn reconstruction_error(x: &HermitianMatrix, vectors: &[CVector]) -> f64 {
    let mut acc = HermitianMatrix::zeros(x.dim());
    for v in vectors {
        acc = &acc + &HermitianMatrix::outer(v);
    }
    (&acc - x).frobenius()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hermlinalg::vnorm;

    #[test]
    fn rank_one_input_returns_its_factor() {
        let v = CVector::from_vec(vec![C64::new(1.0, 0.5), C64::new(-0.3, 0.2), C64::new(0.0, 1.0)]);
        let x = HermitianMatrix::outer(&v);
        let a = HermitianMatrix::diag(&[1.0, 2.0, 3.0]);
        let r = decompose_d1(&x, &a, &HermitianMatrix::identity(3)).unwrap();
        assert_eq!(r.vectors.len(), 1);
        let diff = canonical_phase(&r.vectors[0]) - canonical_phase(&v);
        assert!(vnorm(&diff) < 1e-10);
    }

    #[test]
    fn identity_with_indefinite_form() {
        let x = HermitianMatrix::identity(2);
        let a = HermitianMatrix::diag(&[1.0, -1.0]);
        let r = decompose_d1(&x, &a, &HermitianMatrix::identity(2)).unwrap();
        assert_eq!(r.vectors.len(), 2);
        for v in &r.vectors {
            assert!(a.quad_form(v).abs() < 1e-12);
            assert!((vnorm(v).powi(2) - 1.0).abs() < 1e-12);
        }
        assert!(reconstruction_error(&x, &r.vectors) < 1e-12);
    }

    #[test]
    fn rejects_indefinite_x() {
        let x = HermitianMatrix::diag(&[1.0, -0.1]);
        assert!(decompose_d1(&x, &x, &x).is_err());
    }

    #[test]
    fn eigsum_closed_forms() {
        let s = Settings::new();
        let w = HermitianMatrix::diag(&[3.0, 1.0, 2.0]);
        assert!((eigsum_value(&w, 2, &s).unwrap() - 5.0).abs() < 1e-7);
        assert!((eigsum_value(&w, 3, &s).unwrap() - 6.0).abs() < 1e-7);
        assert!(eigsum_value(&HermitianMatrix::zeros(3), 2, &s).unwrap().abs() < 1e-7);
        assert!(EigsumEpigraph::new(0, 3).is_err());
    }

    #[test]
    fn lambda1_closed_forms() {
        let s = Settings::new();
        let (v, x) = lambda1_program(&HermitianMatrix::diag(&[3.0, 1.0, 2.0]), &s).unwrap();
        assert!((v - 3.0).abs() < 1e-7);
        assert!((x.get(0, 0).re - 1.0).abs() < 1e-6);
        let (v, _) = lambda1_program(&HermitianMatrix::identity(4), &s).unwrap();
        assert!((v - 1.0).abs() < 1e-7);
    }

    #[test]
    fn reduce_rank_keeps_forms_and_objective() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let n = 5;
        let herm = |rng: &mut rand_chacha::ChaCha8Rng| {
            let m = CMatrix::from_fn(n, n, |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
            HermitianMatrix::new(&m + m.adjoint()).unwrap()
        };
        for _ in 0..20 {
            let g = CMatrix::from_fn(n, 4, |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
            let x = HermitianMatrix::new(&g * g.adjoint()).unwrap();
            // with two forms the objective is held fixed as well
            let k = if rng.random_bool(0.5) { 2 } else { 3 };
            let forms: Vec<_> = (0..k).map(|_| herm(&mut rng)).collect();
            let obj = herm(&mut rng);
            let v = reduce_rank(&x, &forms, &obj).unwrap();
            for f in &forms {
                assert!((f.quad_form(&v) - f.inner(&x)).abs() < 1e-8 * (1.0 + f.frobenius() * x.frobenius()));
            }
            if k == 2 {
                assert!((obj.quad_form(&v) - obj.inner(&x)).abs() < 1e-8 * (1.0 + obj.frobenius() * x.frobenius()));
            }
        }
    }
}
