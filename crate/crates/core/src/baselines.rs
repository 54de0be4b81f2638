//! Comparison beamformers: sample-matrix-inversion MVDR, the second-order-cone worst-case
//! beamformer over a ball, and MVDR with steering-vector estimation over an uncertainty set.

use std::collections::BTreeMap;

use crate::array_model::UncertaintySpec;
use crate::hermlinalg::{vdot, vnorm, CVector, HermitianMatrix, C64};
use crate::rankone::{reduce_rank, RANK_TOL};
use crate::sdp::model::{LinExpr, MatExpr, Model, Scalar};
use crate::sdp::{SolveStatus, SparseHermitian};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct BeamformerResult {
    pub w: CVector,
    /// Method-specific objective, `w^H R w` unless stated otherwise.
    pub objective: f64,
    pub method: String,
    pub diagnostics: BTreeMap<String, f64>,
}

impl BeamformerResult {
    pub fn new(method: &str, w: CVector, objective: f64) -> Self {
        Self { w, objective, method: method.to_string(), diagnostics: BTreeMap::new() }
    }

    pub fn with(mut self, key: &str, value: f64) -> Self {
        self.diagnostics.insert(key.to_string(), value);
        self
    }
}

fn condition_number(r: &HermitianMatrix) -> f64 {
    match r.eigenvalues() {
        Ok(v) => v[0].abs() / v[v.len() - 1].abs(),
        Err(_) => f64::INFINITY,
    }
}

/// `w = R^{-1} a / (a^H R^{-1} a)`.
pub fn capon(r: &HermitianMatrix, a: &CVector) -> Result<BeamformerResult> {
    if r.dim() != a.len() {
        return Err(Error::Dimension(format!("covariance is {0}x{0}, steering has {1} entries", r.dim(), a.len())));
    }
    if vnorm(a) == 0.0 {
        return Err(Error::Domain("zero steering vector".into()));
    }
    let ri_a = r
        .solve_pd(a)
        .map_err(|_| Error::Singular(format!("covariance not positive definite (condition number {:e})", condition_number(r))))?;
    let denom = vdot(a, &ri_a).re;
    if !(denom > 0.0) || !denom.is_finite() {
        return Err(Error::Singular(format!("a^H R^-1 a = {denom}, condition number {:e}", condition_number(r))));
    }
    let w = ri_a / C64::new(denom, 0.0);
    Ok(BeamformerResult::new("capon", w, 1.0 / denom))
}

/// Free complex vector as `2n` free scalars: real parts then imaginary parts.
fn complex_vars(model: &mut Model, n: usize) -> Vec<Scalar> {
    (0..2 * n).map(|_| model.free()).collect()
}

/// Arrow matrix `[[t I, u], [u^H, t]]` with `t = t_expr` and `u = G^H w`, where `G` is `n x m`.
fn arrow(m_dim: usize, g: &nalgebra::DMatrix<C64>, w: &[Scalar], t_diag: &[(Scalar, f64)], t_const: f64) -> MatExpr {
    let n = g.nrows();
    let dim = m_dim + 1;
    let mut expr = MatExpr::new(dim);
    for &(s, c) in t_diag {
        expr = expr.scalar(s, SparseHermitian::identity(dim).scale(c));
    }
    if t_const != 0.0 {
        expr = expr.constant(SparseHermitian::identity(dim).scale(t_const));
    }
    for j in 0..n {
        let mut fr = SparseHermitian::new(dim);
        let mut fi = SparseHermitian::new(dim);
        for k in 0..m_dim {
            // u_k = sum_j conj(G_jk) w_j
            let c = g[(j, k)].conj();
            if c != C64::new(0.0, 0.0) {
                fr.push(k, m_dim, c);
                fi.push(k, m_dim, c * C64::new(0.0, 1.0));
            }
        }
        expr = expr.scalar(w[j], fr).scalar(w[n + j], fi);
    }
    expr
}

fn assemble(vars: &[f64]) -> CVector {
    let n = vars.len() / 2;
    CVector::from_fn(n, |j, _| C64::new(vars[j], vars[n + j]))
}

/// `min w^H R w` subject to `Re(w^H a) >= sqrt(eps) ||w|| + 1`, with both cones written as
/// arrow LMIs. The returned `w` is rescaled so the constraint holds with equality.
pub fn socp_worst_case(r_hat: &HermitianMatrix, a_hat: &CVector, eps: f64) -> Result<BeamformerResult> {
    let n = a_hat.len();
    if r_hat.dim() != n {
        return Err(Error::Dimension("covariance and steering sizes differ".into()));
    }
    let na2 = vnorm(a_hat).powi(2);
    if !(eps >= 0.0 && eps < na2) {
        return Err(Error::Domain(format!("need 0 <= eps < ||a||^2 = {na2}, got {eps}")));
    }
    let scale = r_hat.max_eig()?;
    let chol = r_hat
        .scale(1.0 / scale)
        .cholesky()
        .ok_or_else(|| Error::Singular(format!("covariance not positive definite (condition number {:e})", condition_number(r_hat))))?;

    let mut model = Model::new();
    let w = complex_vars(&mut model, n);
    let t = model.free();
    // ||L^H w|| <= t
    model.lmi(arrow(n, &chol, &w, &[(t, 1.0)], 0.0));
    // sqrt(eps) ||w|| <= Re(w^H a) - 1
    let mut lin: Vec<(Scalar, f64)> = Vec::with_capacity(2 * n);
    for j in 0..n {
        lin.push((w[j], a_hat[j].re));
        lin.push((w[n + j], a_hat[j].im));
    }
    let root = eps.sqrt();
    let ident = nalgebra::DMatrix::<C64>::identity(n, n) * C64::new(root, 0.0);
    model.lmi(arrow(n, &ident, &w, &lin, -1.0));
    model.minimize(LinExpr::new().scalar(t, 1.0));
    let sol = model.solve(&crate::blmi::pipeline_solver())?;
    if sol.status() != SolveStatus::Optimal {
        return Err(Error::Solver { status: sol.status(), context: "worst-case SOCP beamformer".into() });
    }
    let vals: Vec<f64> = w.iter().map(|&s| sol.scalar(s)).collect();
    let mut wv = assemble(&vals);
    let margin = vdot(&wv, a_hat).re - root * vnorm(&wv);
    if !(margin > 0.0) {
        return Err(Error::Domain(format!("SOCP solution violates the robust constraint (margin {margin:e})")));
    }
    wv /= C64::new(margin, 0.0);
    let obj = r_hat.quad_form(&wv);
    Ok(BeamformerResult::new("socp", wv, obj).with("iterations", sol.iterations() as f64).with("margin_before_rescale", margin))
}

/// Homogenized quadratic forms `[F_1, ..., F_k]` describing the set, in the dimension the
/// relaxation lives in, with the senses `<= 0` for the set constraints.
pub(crate) struct LiftedSet {
    pub dim: usize,
    /// (form, sense, rhs)
    pub rows: Vec<(HermitianMatrix, crate::sdp::Sense, f64)>,
    /// Forms whose values a rank-one extraction must preserve.
    pub forms: Vec<HermitianMatrix>,
    pub homogeneous: bool,
}

impl LiftedSet {
    pub fn new(spec: &UncertaintySpec) -> Result<Self> {
        use crate::sdp::Sense;
        let n = spec.n();
        let (lo, hi) = spec.shell();
        match spec {
            UncertaintySpec::Ball { a_hat, eps, .. } => {
                let d = n + 1;
                let mut a1 = nalgebra::DMatrix::<C64>::identity(d, d);
                for i in 0..n {
                    a1[(i, n)] = -a_hat[i];
                    a1[(n, i)] = -a_hat[i].conj();
                }
                a1[(n, n)] = C64::new(vnorm(a_hat).powi(2) - eps, 0.0);
                let a1 = HermitianMatrix::new(a1)?;
                let mut diag = vec![1.0; d];
                diag[n] = 0.0;
                let a2 = HermitianMatrix::diag(&diag);
                let mut e = vec![0.0; d];
                e[n] = 1.0;
                let a3 = HermitianMatrix::diag(&e);
                Ok(Self {
                    dim: d,
                    rows: vec![
                        (a1.clone(), Sense::Le, 0.0),
                        (a2.clone(), Sense::Ge, lo),
                        (a2.clone(), Sense::Le, hi),
                        (a3.clone(), Sense::Eq, 1.0),
                    ],
                    forms: vec![a1, a2, a3],
                    homogeneous: true,
                })
            }
            UncertaintySpec::Quad { .. } => {
                let (m, delta) = spec.upper_form().expect("quad");
                let id = HermitianMatrix::identity(n);
                Ok(Self {
                    dim: n,
                    rows: vec![(m.clone(), Sense::Le, delta), (id.clone(), Sense::Ge, lo), (id.clone(), Sense::Le, hi)],
                    forms: vec![m, id],
                    homogeneous: false,
                })
            }
        }
    }

    /// Embeds an `n x n` objective into the lifted dimension.
    pub fn lift(&self, q: &HermitianMatrix) -> HermitianMatrix {
        q.pad_to(self.dim)
    }

    /// Steering vector from a lifted rank-one factor.
    pub fn lower(&self, x: &CVector) -> Result<CVector> {
        if !self.homogeneous {
            return Ok(x.clone());
        }
        let n = self.dim - 1;
        let t = x[n];
        if t.norm() < 1e-12 {
            return Err(Error::Domain("homogenizing coordinate vanished".into()));
        }
        Ok(CVector::from_fn(n, |i, _| x[i] / t))
    }
}

/// Relaxation value and a minimizer of `a^H Q a` over the set.
pub(crate) struct SetMinimum {
    pub value: f64,
    pub minimizer: CVector,
    pub rank: usize,
}

/// Minimizes `a^H Q a` over the set through its semidefinite relaxation and extracts a
/// minimizer from the relaxed solution. `q` is scaled to unit spectral norm internally.
pub(crate) fn minimize_over_set(q: &HermitianMatrix, spec: &UncertaintySpec, pick: Extraction) -> Result<SetMinimum> {
    let lifted = LiftedSet::new(spec)?;
    let qn = q.norms()?.spectral;
    let scale = if qn > 0.0 { qn } else { 1.0 };
    let obj = lifted.lift(&q.scale(1.0 / scale));
    let mut model = Model::new();
    let x = model.psd(lifted.dim);
    for (f, sense, rhs) in &lifted.rows {
        let e = LinExpr::new().mat(x, SparseHermitian::from_dense(f));
        match sense {
            crate::sdp::Sense::Eq => model.eq(e, *rhs),
            crate::sdp::Sense::Le => model.le(e, *rhs),
            crate::sdp::Sense::Ge => model.ge(e, *rhs),
        };
    }
    model.minimize(LinExpr::new().mat(x, SparseHermitian::from_dense(&obj)));
    let sol = model.solve(&crate::blmi::pipeline_solver())?;
    match sol.status() {
        SolveStatus::Optimal => {}
        SolveStatus::PrimalInfeasible => {
            return Err(Error::InvalidSpec("uncertainty set relaxation is infeasible".into()));
        }
        s => return Err(Error::Solver { status: s, context: "uncertainty-set relaxation".into() }),
    }
    let xv = sol.value(x).clone();
    let rank = xv.eigh()?.rank(RANK_TOL);
    let factor = if rank <= 1 {
        crate::rankone::principal_factor(&xv)?
    } else {
        match pick {
            Extraction::Decompose => decompose_pick(&xv, &lifted, &obj)?.map_or_else(|| reduce_rank(&xv, &lifted.forms, &obj), Ok)?,
            Extraction::Reduce => reduce_rank(&xv, &lifted.forms, &obj)?,
        }
    };
    let minimizer = lifted.lower(&factor)?;
    Ok(SetMinimum { value: sol.primal_objective() * scale, minimizer, rank })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Extraction {
    /// Equalizing decomposition first, rank reduction if no term is feasible and optimal.
    Decompose,
    Reduce,
}

/// Splits the relaxed solution with the equalizing decomposition and returns a term that is
/// feasible and no worse than the relaxation value, if any.
fn decompose_pick(x: &HermitianMatrix, lifted: &LiftedSet, obj: &HermitianMatrix) -> Result<Option<CVector>> {
    let (a, b) = if lifted.homogeneous {
        (&lifted.forms[1], &lifted.forms[2])
    } else {
        (&lifted.forms[0], &lifted.forms[1])
    };
    let dec = crate::rankone::decompose_d1(x, a, b)?;
    let r = dec.vectors.len() as f64;
    let target = obj.inner(x);
    let tol = 1e-9 * (1.0 + target.abs());
    let mut best: Option<(f64, CVector)> = None;
    for v in dec.vectors {
        let v = v * C64::new(r.sqrt(), 0.0);
        let val = obj.quad_form(&v);
        let feasible = lifted.rows.iter().all(|(f, sense, rhs)| {
            let fv = f.quad_form(&v);
            let t = 1e-9 * (1.0 + rhs.abs() + f.frobenius());
            match sense {
                crate::sdp::Sense::Eq => (fv - rhs).abs() <= t,
                crate::sdp::Sense::Le => fv <= rhs + t,
                crate::sdp::Sense::Ge => fv >= rhs - t,
            }
        });
        if feasible && val <= target + tol && best.as_ref().map_or(true, |(b, _)| val < *b) {
            best = Some((val, v));
        }
    }
    Ok(best.map(|(_, v)| v))
}

/// Estimates the steering vector as the minimizer of `a^H R^{-1} a` over the set and returns
/// the Capon beamformer for it.
pub fn mvdr_rab(r: &HermitianMatrix, spec: &UncertaintySpec) -> Result<BeamformerResult> {
    if r.dim() != spec.n() {
        return Err(Error::Dimension("covariance and uncertainty set sizes differ".into()));
    }
    let r_inv = r
        .inverse()
        .map_err(|_| Error::Singular(format!("covariance not invertible (condition number {:e})", condition_number(r))))?;
    let found = minimize_over_set(&r_inv, spec, Extraction::Reduce)?;
    let mut res = capon(r, &found.minimizer)?;
    res.method = "mvdr_rab".into();
    res.diagnostics.insert("relaxation_value".into(), found.value);
    res.diagnostics.insert("relaxation_rank".into(), found.rank as f64);
    res.diagnostics.insert("estimate_violation".into(), spec.violation(&found.minimizer));
    Ok(res)
}

/// Steering estimate used by [`mvdr_rab`].
pub fn estimate_steering(r: &HermitianMatrix, spec: &UncertaintySpec) -> Result<(CVector, f64)> {
    let r_inv = r.inverse()?;
    let found = minimize_over_set(&r_inv, spec, Extraction::Reduce)?;
    Ok((found.minimizer, found.value))
}
