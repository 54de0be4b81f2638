//! Worst-case SINR beamformer over quadratic-form sets
//! `{a : a^H M a <= delta, N - eta1 <= ||a||^2 <= N + eta2}`.
//!
//! Lower-bound sets `a^H C a >= delta` are handled through their upper form `(-C, -delta)`.
//! Duality of the inner minimization turns the robust constraint into
//! `W - x M - (y1 + y2) I ⪰ 0` with `delta x + (N-eta1) y1 + (N+eta2) y2 = 1`,
//! `x <= 0, y1 >= 0, y2 <= 0`, tightened by the cut `x lambda_{N-1}(M) + y1 + y2 <= 0`.

use crate::array_model::{QuadSign, UncertaintySpec};
use crate::baselines::BeamformerResult;
use crate::blmi::{self, BaseRelaxation, BlmiOutcome, BlmiSettings};
use crate::hermlinalg::{CVector, HermitianMatrix};
use crate::sdp::model::{LinExpr, LmiId, MatExpr, MatVar, Model, RowId, Scalar};
use crate::sdp::{Settings, SolveStatus, SparseHermitian};
use crate::wcsinr_a1::{inner_min_any, objective_scale, outcome_result, ConditionReport, InnerMin, CONDITION_TOL};
use crate::{Error, Result};

/// Relative size below which the cut counts as active, and `z2` as zero.
pub const BRANCH_TOL: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub struct QuadPrimal {
    pub w_matrix: HermitianMatrix,
    pub x: f64,
    pub y1: f64,
    pub y2: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct QuadDual {
    pub z_matrix: HermitianMatrix,
    pub z1: f64,
    pub z2: f64,
}

#[derive(Clone, Debug)]
pub struct QuadSolution {
    pub primal: QuadPrimal,
    pub dual: QuadDual,
    pub gap: f64,
    /// `tr(R W)`
    pub objective: f64,
    pub iterations: usize,
}

/// Upper form `(M, delta)`, shell bounds and `lambda_{N-1}(M)`, `lambda_N(M)`.
pub(crate) struct QuadBase {
    pub m: HermitianMatrix,
    pub delta: f64,
    pub lo: f64,
    pub hi: f64,
    pub lam_second: f64,
    pub lam_last: f64,
    spec: UncertaintySpec,
}

pub(crate) struct QuadHandles {
    pub w: MatVar,
    pub vars: [Scalar; 3],
    pub norm: RowId,
    pub lmi: LmiId,
    pub cut: Option<RowId>,
}

impl QuadBase {
    pub fn from_spec(spec: &UncertaintySpec) -> Result<Self> {
        let (m, delta) = spec
            .upper_form()
            .ok_or_else(|| Error::InvalidSpec("expected a quadratic-form uncertainty set".into()))?;
        let n = m.dim();
        if n < 2 {
            return Err(Error::InvalidSpec("quadratic-form sets need N >= 2".into()));
        }
        let vals = m.eigenvalues()?;
        let (lo, hi) = spec.shell();
        Ok(Self { delta, lo, hi, lam_second: vals[n - 2], lam_last: vals[n - 1], m, spec: spec.clone() })
    }

    fn add(&self, model: &mut Model, cut: bool) -> QuadHandles {
        let n = self.m.dim();
        let w = model.psd(n);
        let x = model.nonpos();
        let y1 = model.nonneg();
        let y2 = model.nonpos();
        let norm = model.eq(LinExpr::new().scalar(x, self.delta).scalar(y1, self.lo).scalar(y2, self.hi), 1.0);
        let minus_m = SparseHermitian::from_dense(&self.m.scale(-1.0));
        let minus_i = SparseHermitian::identity(n).scale(-1.0);
        let lmi = model.lmi(MatExpr::new(n).var(w, 0, 1.0).scalar(x, minus_m).scalar(y1, minus_i.clone()).scalar(y2, minus_i));
        let cut = cut.then(|| model.le(LinExpr::new().scalar(x, self.lam_second).scalar(y1, 1.0).scalar(y2, 1.0), 0.0));
        QuadHandles { w, vars: [x, y1, y2], norm, lmi, cut }
    }
}

impl BaseRelaxation for QuadBase {
    fn dim(&self) -> usize {
        self.m.dim()
    }

    fn build(&self, model: &mut Model) -> MatVar {
        self.add(model, false).w
    }

    fn worst_case_gain(&self, w: &CVector) -> Result<f64> {
        Ok(inner_min_any(w, &self.spec)?.value)
    }
}

/// `min |w^H a|^2` over the set, with a minimizer from the equalizing decomposition of the
/// relaxed solution.
pub fn inner_min_quad(w: &CVector, spec: &UncertaintySpec) -> Result<InnerMin> {
    QuadBase::from_spec(spec)?;
    inner_min_any(w, spec)
}

fn solve_lmi(r_hat: &HermitianMatrix, spec: &UncertaintySpec, cut: bool, settings: &Settings) -> Result<QuadSolution> {
    let base = QuadBase::from_spec(spec)?;
    if r_hat.dim() != base.m.dim() {
        return Err(Error::Dimension("covariance and uncertainty set sizes differ".into()));
    }
    let rho = objective_scale(r_hat)?;
    let mut model = Model::new();
    let h = base.add(&mut model, cut);
    model.minimize(LinExpr::new().mat(h.w, SparseHermitian::from_dense(&r_hat.scale(1.0 / rho))));
    let sol = model.solve(settings)?;
    if sol.status() != SolveStatus::Optimal {
        return Err(Error::Solver { status: sol.status(), context: "quadratic-set relaxation".into() });
    }
    let w_matrix = sol.value(h.w).clone();
    let [x, y1, y2] = h.vars.map(|s| sol.scalar(s));
    Ok(QuadSolution {
        objective: r_hat.inner(&w_matrix),
        primal: QuadPrimal { w_matrix, x, y1, y2 },
        dual: QuadDual {
            z_matrix: sol.lmi_dual(h.lmi).scale(rho),
            z1: sol.row_dual(h.norm) * rho,
            z2: h.cut.map_or(0.0, |c| -sol.row_dual(c) * rho),
        },
        gap: sol.gap(),
        iterations: sol.iterations(),
    })
}

/// Relaxation with the cut `x lambda_{N-1}(M) + y1 + y2 <= 0`, together with its dual solution.
pub fn solve_tightened_lmi_quad(r_hat: &HermitianMatrix, spec: &UncertaintySpec) -> Result<QuadSolution> {
    solve_lmi(r_hat, spec, true, &blmi::pipeline_solver())
}

/// Relaxation without the cut.
pub fn solve_plain_lmi_quad(r_hat: &HermitianMatrix, spec: &UncertaintySpec) -> Result<QuadSolution> {
    solve_lmi(r_hat, spec, false, &blmi::pipeline_solver())
}

pub fn solve_tightened_lmi_quad_with(r_hat: &HermitianMatrix, spec: &UncertaintySpec, settings: &Settings) -> Result<QuadSolution> {
    solve_lmi(r_hat, spec, true, settings)
}

/// Checks complementarity and the structural optimality properties of a primal-dual pair.
///
/// The pair is classified by the cut: active when its relative slack is within
/// [`BRANCH_TOL`], inactive when the cut multiplier `z2` is, and otherwise by whichever of
/// the two is relatively smaller.
pub fn condition_report_quad(
    r_hat: &HermitianMatrix,
    primal: &QuadPrimal,
    dual: &QuadDual,
    spec: &UncertaintySpec,
) -> Result<ConditionReport> {
    let base = QuadBase::from_spec(spec)?;
    let n = base.m.dim();
    let tol = CONDITION_TOL;
    let QuadPrimal { w_matrix: w, x, y1, y2 } = primal;
    let (x, y1, y2) = (*x, *y1, *y2);
    let QuadDual { z_matrix: z, z1, z2 } = dual;
    let (z1, z2) = (*z1, *z2);
    let (lam, lam_n, delta) = (base.lam_second, base.lam_last, base.delta);
    let obj = r_hat.inner(w);
    let unit = 1.0 + obj.abs();
    let trz = z.trace();
    let tr_mz = base.m.inner(z);
    let y = y1 + y2;
    let slack_matrix = &(w - &base.m.scale(x)) - &HermitianMatrix::identity(n).scale(y);
    let mut rep = ConditionReport { rank_ratio: blmi::ratio(w)?, ..Default::default() };

    let comp = [
        (r_hat - z).inner(w),
        x * (tr_mz - delta * z1 + lam * z2),
        y1 * (trz + z2 - base.lo * z1),
        y2 * (trz + z2 - base.hi * z1),
        z2 * (x * lam + y),
        z.inner(&slack_matrix),
    ];
    let names = ["complementarity_1", "complementarity_2", "complementarity_3", "complementarity_4", "complementarity_5", "complementarity_6"];
    for (name, c) in names.into_iter().zip(comp) {
        let r = c.abs() / unit;
        rep.push(name, true, r <= tol, r);
    }
    let r = (obj - z1).abs() / unit;
    rep.push("strong_duality", true, r <= tol, r);
    let r = (r_hat - z).min_eig()? / r_hat.norms()?.spectral;
    rep.push("dual_slack_psd", true, r >= -tol, r);

    let cut_value = x * lam + y;
    let cut_scale = (x * lam).abs() + y1.abs() + y2.abs();
    let rel_slack = if cut_scale > 0.0 { cut_value.abs() / cut_scale } else { 0.0 };
    let rel_z2 = z2.abs() / z1.abs().max(f64::MIN_POSITIVE);
    let zero_cut = if rel_slack <= BRANCH_TOL {
        true
    } else if rel_z2 <= BRANCH_TOL {
        false
    } else {
        rel_slack < rel_z2
    };
    rep.zero_cut = Some(zero_cut);
    let strict = !zero_cut;

    rep.push("strict_cut_x_negative", strict, x < -BRANCH_TOL, x);
    let r = (z1 - tr_mz / delta).abs() / unit;
    rep.push("strict_cut_z1_formula", strict, r <= tol, r);
    let r = z2.abs() / unit;
    rep.push("strict_cut_z2_zero", strict, r <= tol, r);
    // positivity of y1 + y2 rests on lambda_{N-1}(M) > 0, which lower-bound sets violate
    let positive_second = lam > 0.0;
    rep.push("strict_cut_y_positive", strict && positive_second, y > 0.0, y);

    rep.push("zero_cut_x_negative", zero_cut, x < -BRANCH_TOL, x);
    let r = (z1 - (tr_mz + z2 * lam) / delta).abs() / unit;
    rep.push("zero_cut_z1_formula", zero_cut, r <= tol, r);
    rep.push("zero_cut_y_positive", zero_cut && positive_second, y > 0.0, y);
    let (l1, _) = blmi::eig_pair(w)?;
    let gap_eig = lam - lam_n;
    let r = l1 + x * gap_eig;
    rep.push("zero_cut_lambda1_bound", zero_cut, r >= -tol * (1.0 + l1.abs()), r);
    let rank_one = rep.rank_ratio <= 1e-7;
    let separated = gap_eig > 1e-9 * (1.0 + lam.abs());
    let bound = -x * gap_eig * r_hat.min_eig()?;
    let r = obj - bound;
    rep.push("zero_cut_value_bound", zero_cut && rank_one && separated, r >= -tol * unit, r);

    let cert = r_hat.inverse()?.inner(z);
    rep.rank_one_certificate = Some(cert);
    rep.push("rank_one_certificate", cert <= 1.0, rank_one, rep.rank_ratio);
    Ok(rep)
}

/// Tightened relaxation followed, when its optimum has higher rank, by the iterative
/// rank-one restriction.
pub fn blmi_solve_quad(r_hat: &HermitianMatrix, spec: &UncertaintySpec, settings: &BlmiSettings) -> Result<BlmiOutcome> {
    let base = QuadBase::from_spec(spec)?;
    let relaxed = solve_tightened_lmi_quad_with(r_hat, spec, &settings.solver)?;
    let rho = objective_scale(r_hat)?;
    blmi::restrict(&base, &r_hat.scale(1.0 / rho), rho, &relaxed.primal.w_matrix, settings)
}

/// [`blmi_solve_quad`] packaged as a beamformer result, tagged `qmi_2` for upper-bound sets
/// and `qmi_3` for lower-bound sets.
pub fn qmi_beamformer_quad(r_hat: &HermitianMatrix, spec: &UncertaintySpec, settings: &BlmiSettings) -> Result<BeamformerResult> {
    let method = match spec {
        UncertaintySpec::Quad { sign: QuadSign::Lower, .. } => "qmi_3",
        _ => "qmi_2",
    };
    let out = blmi_solve_quad(r_hat, spec, settings)?;
    Ok(outcome_result(method, r_hat, &out))
}
