//! Worst-case SINR beamformer over the ball-and-shell set
//! `{a : ||a - a_hat||^2 <= eps, N - eta1 <= ||a||^2 <= N + eta2}`.
//!
//! The robust constraint `min_a |w^H a|^2 >= 1` is rewritten by duality of the inner
//! minimization as the matrix inequality
//! `[[w w^H - (y1+y2+y3) I, y1 a_hat], [y1 a_hat^H, -y4 - y1(||a_hat||^2 - eps)]] ⪰ 0`
//! with `(N-eta1) y2 + (N+eta2) y3 + y4 = 1`, `y1 <= 0, y2 >= 0, y3 <= 0`. Replacing `w w^H`
//! by `W ⪰ 0` gives the relaxation solved here; the cut `y1 + y2 + y3 <= 0` is valid for the
//! rank-one problem and tightens it.

use crate::array_model::UncertaintySpec;
use crate::baselines::{minimize_over_set, BeamformerResult, Extraction};
use crate::blmi::{self, BaseRelaxation, BlmiOutcome, BlmiSettings};
use crate::hermlinalg::{vdot, vnorm, CMatrix, CVector, HermitianMatrix, C64};
use crate::rankone::decompose_d1;
use crate::sdp::model::{LinExpr, LmiId, MatExpr, MatVar, Model, RowId, Scalar};
use crate::sdp::{Settings, SolveStatus, SparseHermitian};
use crate::{Error, Result};

/// Tolerance used by the optimality-condition checks.
pub const CONDITION_TOL: f64 = 1e-6;

#[derive(Clone, Debug)]
pub struct InnerMin {
    /// Optimal value of the relaxation, equal to the minimum of `|w^H a|^2` over the set.
    pub value: f64,
    pub minimizer_a: CVector,
    /// `|w^H a|^2` at the extracted minimizer.
    pub attained: f64,
    pub relaxation_rank: usize,
}

fn ball_parts(spec: &UncertaintySpec) -> Result<(&CVector, f64, f64, f64)> {
    match spec {
        UncertaintySpec::Ball { a_hat, eps, eta1, eta2 } => Ok((a_hat, *eps, *eta1, *eta2)),
        _ => Err(Error::InvalidSpec("expected a ball-and-shell uncertainty set".into())),
    }
}

/// `min |w^H a|^2` over the set, through the homogenized relaxation in dimension `N + 1`.
pub fn inner_min(w: &CVector, spec: &UncertaintySpec) -> Result<InnerMin> {
    ball_parts(spec)?;
    inner_min_any(w, spec)
}

pub(crate) fn inner_min_any(w: &CVector, spec: &UncertaintySpec) -> Result<InnerMin> {
    if w.len() != spec.n() {
        return Err(Error::Dimension(format!("w has {} entries, set lives in dimension {}", w.len(), spec.n())));
    }
    let q = HermitianMatrix::outer(w);
    let found = minimize_over_set(&q, spec, Extraction::Decompose)?;
    let attained = vdot(w, &found.minimizer).norm_sqr();
    Ok(InnerMin { value: found.value.max(0.0), minimizer_a: found.minimizer, attained, relaxation_rank: found.rank })
}

/// Strictly feasible points of the inner relaxation and of its dual.
#[derive(Clone, Debug)]
pub struct Witnesses {
    pub lambda: f64,
    /// `X(lambda) = (1 - lambda) [a_hat; 1][a_hat; 1]^H + lambda I`
    pub primal_point: HermitianMatrix,
    /// `tr(A_1 X(lambda))`, negative for a strictly feasible point
    pub primal_ball_value: f64,
    pub primal_min_eig: f64,
    /// `(y1, y2, y3, y4)`
    pub dual_point: [f64; 4],
    /// `-y4 - y1(||a_hat||^2 - eps) - y1^2 a_hat^H (w w^H - y1 I)^{-1} a_hat`, positive when strict
    pub schur_margin: f64,
    pub dual_slack_min_eig: f64,
}

impl Witnesses {
    pub fn strictly_feasible(&self) -> bool {
        self.primal_ball_value < 0.0 && self.primal_min_eig > 0.0 && self.schur_margin > 0.0 && self.dual_slack_min_eig > 0.0
    }
}

/// Builds and checks the interior points of the inner relaxation (primal) and its dual.
pub fn strict_feasibility_witnesses(spec: &UncertaintySpec, w: &CVector) -> Result<Witnesses> {
    let (a_hat, eps, _, _) = ball_parts(spec)?;
    let n = a_hat.len();
    if vnorm(w) == 0.0 {
        return Err(Error::Domain("witnesses need w != 0".into()));
    }
    let na2 = vnorm(a_hat).powi(2);
    let lambda = (0.5f64).min(eps / (2.0 * (na2 - eps + n as f64)));
    let ext = CVector::from_fn(n + 1, |i, _| if i < n { a_hat[i] } else { C64::new(1.0, 0.0) });
    let x = &HermitianMatrix::outer(&ext).scale(1.0 - lambda) + &HermitianMatrix::identity(n + 1).scale(lambda);
    let lifted = crate::baselines::LiftedSet::new(spec)?;
    let primal_ball_value = lifted.forms[0].inner(&x);
    let primal_min_eig = x.min_eig()?;

    let (y1, y2, y3) = (-1.0, 1.0, -1.0);
    let inner = &HermitianMatrix::outer(w) + &HermitianMatrix::identity(n).scale(-y1);
    let q = vdot(a_hat, &inner.solve_pd(a_hat)?).re;
    let bound = y1 * (na2 - eps) + y1 * y1 * q;
    // one unit of slack beyond the strict inequality
    let y4 = -bound - 1.0;
    let schur_margin = -y4 - y1 * (na2 - eps) - y1 * y1 * q;
    let mut slack = CMatrix::zeros(n + 1, n + 1);
    slack.view_mut((0, 0), (n, n)).copy_from(inner.as_matrix());
    for i in 0..n {
        slack[(i, n)] = a_hat[i] * y1;
        slack[(n, i)] = a_hat[i].conj() * y1;
    }
    slack[(n, n)] = C64::new(-y1 * (na2 - eps) - y4, 0.0);
    let dual_slack_min_eig = HermitianMatrix::new(slack)?.min_eig()?;
    Ok(Witnesses {
        lambda,
        primal_point: x,
        primal_ball_value,
        primal_min_eig,
        dual_point: [y1, y2, y3, y4],
        schur_margin,
        dual_slack_min_eig,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct A1Primal {
    pub w_matrix: HermitianMatrix,
    pub y1: f64,
    pub y2: f64,
    pub y3: f64,
    pub y4: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct A1Dual {
    pub z_matrix: HermitianMatrix,
    pub z1_vec: CVector,
    pub z0: f64,
    pub x: f64,
}

#[derive(Clone, Debug)]
pub struct A1Solution {
    pub primal: A1Primal,
    pub dual: A1Dual,
    /// `|p - d| / (1 + |p|)` as reported by the solver, in its internal scaling.
    pub gap: f64,
    /// `tr(R W)`
    pub objective: f64,
    pub iterations: usize,
    /// Bottom-right entry of the constraint multiplier; equals `z0` at optimality.
    pub multiplier_corner: f64,
}

/// Objective scaling: `R / rho` with `rho = 1 / tr(R^{-1})` keeps optimal values of order one.
pub(crate) fn objective_scale(r_hat: &HermitianMatrix) -> Result<f64> {
    let inv = r_hat
        .inverse()
        .map_err(|_| Error::Singular("covariance must be positive definite".into()))?;
    let t = inv.trace();
    if !(t > 0.0) {
        return Err(Error::Singular("covariance must be positive definite".into()));
    }
    Ok(1.0 / t)
}

pub(crate) struct A1Base {
    pub a_hat: CVector,
    pub eps: f64,
    pub eta1: f64,
    pub eta2: f64,
    spec: UncertaintySpec,
}

pub(crate) struct A1Handles {
    pub w: MatVar,
    pub y: [Scalar; 4],
    pub norm: RowId,
    pub lmi: LmiId,
    pub cut: Option<RowId>,
}

impl A1Base {
    fn from_spec(spec: &UncertaintySpec) -> Result<Self> {
        let (a_hat, eps, eta1, eta2) = ball_parts(spec)?;
        Ok(Self { a_hat: a_hat.clone(), eps, eta1, eta2, spec: spec.clone() })
    }

    fn shift(&self) -> f64 {
        vnorm(&self.a_hat).powi(2) - self.eps
    }

    pub fn add(&self, model: &mut Model, cut: bool) -> A1Handles {
        let n = self.a_hat.len();
        let nf = n as f64;
        let w = model.psd(n);
        let y1 = model.nonpos();
        let y2 = model.nonneg();
        let y3 = model.nonpos();
        let y4 = model.free();
        let norm = model.eq(
            LinExpr::new().scalar(y2, nf - self.eta1).scalar(y3, nf + self.eta2).scalar(y4, 1.0),
            1.0,
        );
        let d = n + 1;
        let mut shell = SparseHermitian::new(d);
        for i in 0..n {
            shell.push_real(i, i, -1.0);
        }
        let mut f1 = shell.clone();
        for i in 0..n {
            f1.push(i, n, self.a_hat[i]);
        }
        f1.push_real(n, n, -self.shift());
        let mut f4 = SparseHermitian::new(d);
        f4.push_real(n, n, -1.0);
        let lmi = model.lmi(
            MatExpr::new(d).var(w, 0, 1.0).scalar(y1, f1).scalar(y2, shell.clone()).scalar(y3, shell).scalar(y4, f4),
        );
        let cut = cut.then(|| model.le(LinExpr::new().scalar(y1, 1.0).scalar(y2, 1.0).scalar(y3, 1.0), 0.0));
        A1Handles { w, y: [y1, y2, y3, y4], norm, lmi, cut }
    }

    /// `[[W - y I, y1 a_hat], [y1 a_hat^H, -y4 - y1(||a_hat||^2 - eps)]]` at a given point.
    pub fn block(&self, w: &HermitianMatrix, y: [f64; 4]) -> HermitianMatrix {
        let n = self.a_hat.len();
        let s = y[0] + y[1] + y[2];
        let mut m = CMatrix::zeros(n + 1, n + 1);
        m.view_mut((0, 0), (n, n)).copy_from(w.as_matrix());
        for i in 0..n {
            m[(i, i)] -= C64::new(s, 0.0);
            m[(i, n)] = self.a_hat[i] * y[0];
            m[(n, i)] = self.a_hat[i].conj() * y[0];
        }
        m[(n, n)] = C64::new(-y[3] - y[0] * self.shift(), 0.0);
        HermitianMatrix::new(m).expect("square")
    }
}

impl BaseRelaxation for A1Base {
    fn dim(&self) -> usize {
        self.a_hat.len()
    }

    fn build(&self, model: &mut Model) -> MatVar {
        self.add(model, false).w
    }

    fn worst_case_gain(&self, w: &CVector) -> Result<f64> {
        Ok(inner_min_any(w, &self.spec)?.value)
    }
}

fn solve_lmi(r_hat: &HermitianMatrix, spec: &UncertaintySpec, cut: bool, settings: &Settings) -> Result<A1Solution> {
    let base = A1Base::from_spec(spec)?;
    let n = base.a_hat.len();
    if r_hat.dim() != n {
        return Err(Error::Dimension("covariance and uncertainty set sizes differ".into()));
    }
    let rho = objective_scale(r_hat)?;
    let mut model = Model::new();
    let h = base.add(&mut model, cut);
    model.minimize(LinExpr::new().mat(h.w, SparseHermitian::from_dense(&r_hat.scale(1.0 / rho))));
    let sol = model.solve(settings)?;
    if sol.status() != SolveStatus::Optimal {
        return Err(Error::Solver { status: sol.status(), context: "ball-set relaxation".into() });
    }
    let w_matrix = sol.value(h.w).clone();
    let [y1, y2, y3, y4] = h.y.map(|s| sol.scalar(s));
    let p = sol.lmi_dual(h.lmi);
    let z_matrix = p.submatrix(0, n).scale(rho);
    let z1_vec = CVector::from_fn(n, |i, _| p.get(i, n) * rho);
    let z0 = sol.row_dual(h.norm) * rho;
    let x = h.cut.map_or(0.0, |c| sol.row_dual(c) * rho);
    Ok(A1Solution {
        objective: r_hat.inner(&w_matrix),
        primal: A1Primal { w_matrix, y1, y2, y3, y4 },
        dual: A1Dual { z_matrix, z1_vec, z0, x },
        gap: sol.gap(),
        iterations: sol.iterations(),
        multiplier_corner: p.get(n, n).re * rho,
    })
}

/// Relaxation with the cut `y1 + y2 + y3 <= 0`, together with its dual solution.
pub fn solve_tightened_lmi(r_hat: &HermitianMatrix, spec: &UncertaintySpec) -> Result<A1Solution> {
    solve_lmi(r_hat, spec, true, &crate::blmi::pipeline_solver())
}

/// Relaxation without the cut; its value never exceeds the tightened one.
pub fn solve_plain_lmi(r_hat: &HermitianMatrix, spec: &UncertaintySpec) -> Result<A1Solution> {
    solve_lmi(r_hat, spec, false, &crate::blmi::pipeline_solver())
}

pub fn solve_tightened_lmi_with(r_hat: &HermitianMatrix, spec: &UncertaintySpec, settings: &Settings) -> Result<A1Solution> {
    solve_lmi(r_hat, spec, true, settings)
}

/// One evaluated clause of an optimality condition.
#[derive(Clone, Debug, PartialEq)]
pub struct Clause {
    pub name: &'static str,
    /// False when the clause's hypothesis does not hold; `holds` is then vacuously true.
    pub applicable: bool,
    pub holds: bool,
    /// Signed or absolute residual, depending on the clause.
    pub residual: f64,
}

#[derive(Clone, Debug, Default)]
pub struct ConditionReport {
    pub clauses: Vec<Clause>,
    /// `a_bar = y1 a_hat / sqrt(-y4 - y1(||a_hat||^2 - eps))` for the ball set.
    pub a_bar: Option<CVector>,
    /// `lambda_2(W) / lambda_1(W)`
    pub rank_ratio: f64,
    /// Vector the report identifies as optimal when `W` has higher rank and the cut is tight.
    pub tight_cut_solution: Option<CVector>,
    /// Quadratic-form sets: whether the cut was classified as holding with equality.
    pub zero_cut: Option<bool>,
    /// Quadratic-form sets: `tr(R^{-1} Z)`, whose value `<= 1` certifies a rank-one optimum.
    pub rank_one_certificate: Option<f64>,
}

impl ConditionReport {
    pub(crate) fn push(&mut self, name: &'static str, applicable: bool, holds: bool, residual: f64) {
        self.clauses.push(Clause { name, applicable, holds: !applicable || holds, residual });
    }

    pub fn get(&self, name: &str) -> Option<&Clause> {
        self.clauses.iter().find(|c| c.name == name)
    }

    pub fn holds(&self, name: &str) -> bool {
        self.get(name).is_some_and(|c| c.holds)
    }

    pub fn failing(&self) -> Vec<&Clause> {
        self.clauses.iter().filter(|c| !c.holds).collect()
    }

    pub fn all_hold(&self) -> bool {
        self.clauses.iter().all(|c| c.holds)
    }
}

/// `a_bar` of the Schur-complement form `W - (y1+y2+y3) I ⪰ a_bar a_bar^H`.
pub fn a_bar(primal: &A1Primal, spec: &UncertaintySpec) -> Result<CVector> {
    let (a_hat, eps, _, _) = ball_parts(spec)?;
    let den = -primal.y4 - primal.y1 * (vnorm(a_hat).powi(2) - eps);
    if !(den > 0.0) {
        return Err(Error::Domain(format!("-y4 - y1(||a_hat||^2 - eps) = {den} is not positive")));
    }
    Ok(a_hat * C64::new(primal.y1 / den.sqrt(), 0.0))
}

/// Checks the structural optimality properties of a primal-dual pair of the tightened relaxation.
pub fn condition_report(
    r_hat: &HermitianMatrix,
    primal: &A1Primal,
    dual: &A1Dual,
    spec: &UncertaintySpec,
) -> Result<ConditionReport> {
    let (a_hat, eps, eta1, eta2) = ball_parts(spec)?;
    let n = a_hat.len();
    let nf = n as f64;
    let tol = CONDITION_TOL;
    let na2 = vnorm(a_hat).powi(2);
    let shift = na2 - eps;
    let A1Primal { w_matrix: w, y1, y2, y3, y4 } = primal;
    let (y1, y2, y3, y4) = (*y1, *y2, *y3, *y4);
    let A1Dual { z_matrix: z, z1_vec: z1, z0, x } = dual;
    let (z0, x) = (*z0, *x);
    let y = y1 + y2 + y3;
    let obj = r_hat.inner(w);
    let unit = 1.0 + obj.abs();
    let trz = z.trace();
    let re_az1 = vdot(a_hat, z1).re;
    let mut rep = ConditionReport { rank_ratio: blmi::ratio(w)?, ..Default::default() };

    // complementarity, each product relative to the objective scale
    let base = A1Base::from_spec(spec)?;
    let q = base.block(w, [y1, y2, y3, y4]);
    let mut m = CMatrix::zeros(n + 1, n + 1);
    m.view_mut((0, 0), (n, n)).copy_from(z.as_matrix());
    for i in 0..n {
        m[(i, n)] = z1[i];
        m[(n, i)] = z1[i].conj();
    }
    m[(n, n)] = C64::new(z0, 0.0);
    let m = HermitianMatrix::new(m)?;
    let comp = [
        (r_hat - z).inner(w),
        y1 * (trz - 2.0 * re_az1 + z0 * shift - x),
        y2 * (trz - (nf - eta1) * z0 - x),
        y3 * (trz - (nf + eta2) * z0 - x),
        y * x,
        q.inner(&m),
    ];
    let names = ["complementarity_1", "complementarity_2", "complementarity_3", "complementarity_4", "complementarity_5", "complementarity_6"];
    for (name, c) in names.into_iter().zip(comp) {
        let r = c.abs() / unit;
        rep.push(name, true, r <= tol, r);
    }
    let r = (obj - z0).abs() / unit;
    rep.push("strong_duality", true, r <= tol, r);

    // sign structure of the multipliers
    rep.push("y1_negative", true, y1 < -1e-8, y1);
    let r = y2.abs().min(y3.abs());
    rep.push("y2_y3_complementary", true, r <= 1e-7, r);
    let sum_zero = y.abs() <= tol;
    let r = (y1 + y2).abs().max(y3.abs());
    rep.push("sum_zero_multipliers", sum_zero, r <= tol, r);
    let bound = 1.0 / (2.0 * nf - eps - eta1);
    rep.push("sum_zero_y2_bound", sum_zero, y2 > bound - tol, y2 - bound);
    let den = -y4 - y1 * shift;
    rep.push("corner_positive", true, den > 0.0, den);

    let r_ball = (z0 - (2.0 * re_az1 - (trz - x)) / shift).abs() / unit;
    let r_mult = if (1.0 - y4).abs() > 1e-12 { (z0 - (y1 * x + (y2 + y3) * trz) / (1.0 - y4)).abs() / unit } else { f64::INFINITY };
    rep.push("z0_from_ball_row", true, r_ball <= tol, r_ball);
    rep.push("z0_from_multipliers", (1.0 - y4).abs() > 1e-12, r_mult <= tol, r_mult);
    rep.push("z0_either_form", true, r_ball.min(r_mult) <= tol, r_ball.min(r_mult));

    let abar = if den > 0.0 { Some(a_hat * C64::new(y1 / den.sqrt(), 0.0)) } else { None };
    let rank_one = rep.rank_ratio <= 1e-7;
    if let Some(ab) = &abar {
        let nab = vnorm(ab).powi(2);
        if rank_one {
            let wv = crate::rankone::principal_factor(w)?;
            let nw = vnorm(&wv);
            let res = vnorm(&(r_hat - z).mul_vec(&wv)) / (r_hat.norms()?.spectral * nw.max(1e-300));
            rep.push("null_vector", true, res <= tol, res);
            let nw2 = nw * nw;
            let cross = vdot(ab, &wv).norm_sqr();
            let independent = (nab * nw2 - cross) > 1e-8 * nab * nw2;
            let disc = ((nab + nw2).powi(2) - 4.0 * cross).max(0.0).sqrt();
            let bound = -(nab - nw2 + disc) / 2.0;
            rep.push("eigen_bound", independent, y <= bound + tol * (1.0 + bound.abs()), y - bound);
        }
        let trw = w.trace();
        let cond = y * y + y * (nab - trw) + w.quad_form(ab) - nab * trw;
        rep.push("rank_one_sufficient", !rank_one && y < -tol, cond >= -tol * unit, cond);
        if !rank_one && sum_zero {
            rep.tight_cut_solution = Some(ab.clone());
        }
    }
    rep.a_bar = abar;
    Ok(rep)
}

/// Rank-one optimum built from a higher-rank one when the sufficient condition holds.
/// Returns `None` when the condition fails.
pub fn extract_rank_one_thm2(
    primal: &A1Primal,
    r_hat: &HermitianMatrix,
    spec: &UncertaintySpec,
) -> Result<Option<CVector>> {
    let ab = match a_bar(primal, spec) {
        Ok(v) => v,
        Err(_) => return Ok(None),
    };
    let w = &primal.w_matrix;
    let y = primal.y1 + primal.y2 + primal.y3;
    let nab = vnorm(&ab).powi(2);
    let trw = w.trace();
    let z0 = r_hat.inner(w);
    let z2 = w.quad_form(&ab);
    let cond = y * y + y * (nab - trw) + z2 - nab * trw;
    if cond < -CONDITION_TOL * (1.0 + z0.abs()) || trw <= 0.0 {
        return Ok(None);
    }
    let n = w.dim();
    let id = HermitianMatrix::identity(n);
    let fa = r_hat - &id.scale(z0 / trw);
    let fb = &HermitianMatrix::outer(&ab) - &id.scale(z2 / trw);
    let dec = decompose_d1(w, &fa, &fb)?;
    let w1 = &dec.vectors[0];
    let out = w1 * C64::new(trw.sqrt() / vnorm(w1), 0.0);
    Ok(Some(out))
}

/// Minimum eigenvalue of the constraint block evaluated at `W = w w^H`, relative to its scale.
pub fn block_feasibility(w: &CVector, primal: &A1Primal, spec: &UncertaintySpec) -> Result<f64> {
    let base = A1Base::from_spec(spec)?;
    let b = base.block(&HermitianMatrix::outer(w), [primal.y1, primal.y2, primal.y3, primal.y4]);
    Ok(b.min_eig()? / (1.0 + b.norms()?.spectral))
}

/// Tightened relaxation followed, when its optimum has higher rank, by the iterative
/// rank-one restriction.
pub fn blmi_solve(r_hat: &HermitianMatrix, spec: &UncertaintySpec, settings: &BlmiSettings) -> Result<BlmiOutcome> {
    let base = A1Base::from_spec(spec)?;
    let relaxed = solve_tightened_lmi_with(r_hat, spec, &settings.solver)?;
    let rho = objective_scale(r_hat)?;
    blmi::restrict(&base, &r_hat.scale(1.0 / rho), rho, &relaxed.primal.w_matrix, settings)
}

pub(crate) fn outcome_result(method: &str, r_hat: &HermitianMatrix, out: &BlmiOutcome) -> BeamformerResult {
    let status = match out.status {
        blmi::BlmiStatus::RankOneRelaxation => 0.0,
        blmi::BlmiStatus::RankOneFactor => 1.0,
        blmi::BlmiStatus::Converged => 2.0,
        blmi::BlmiStatus::NonConverged => 3.0,
    };
    BeamformerResult::new(method, out.w.clone(), r_hat.quad_form(&out.w))
        .with("iterations", out.iterations() as f64)
        .with("initial_rank_ratio", out.initial_ratio)
        .with("final_rank_ratio", out.final_ratio)
        .with("status", status)
        .with("doublings", out.history.iter().map(|h| h.doublings).sum::<usize>() as f64)
}

/// [`blmi_solve`] packaged as a beamformer result.
pub fn qmi_beamformer(r_hat: &HermitianMatrix, spec: &UncertaintySpec, settings: &BlmiSettings) -> Result<BeamformerResult> {
    let out = blmi_solve(r_hat, spec, settings)?;
    Ok(outcome_result("qmi_1", r_hat, &out))
}
