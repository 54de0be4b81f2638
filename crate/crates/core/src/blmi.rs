//! Iterative rank-one restriction shared by both beamformer pipelines.
//!
//! A relaxation with a high-rank optimum `W_0` is restricted by `S_2(W) <= lambda_1(W)`,
//! written as `tr(W X) - 2s - tr Z >= 0, Z - W + sI ⪰ 0, tr X = 1, X, Z ⪰ 0`. The bilinear
//! term is linearized at the previous iterate, `tr(W_k X)`, which turns every step into an
//! ordinary SDP.

use crate::hermlinalg::{CVector, HermitianMatrix};
use crate::rankone::{principal_factor, EigsumEpigraph, MatrixArg};
use crate::sdp::model::{LinExpr, MatVar, Model};
use crate::sdp::{Settings, SolveStatus, SparseHermitian};
use crate::Result;

#[derive(Clone, Debug, PartialEq)]
pub struct BlmiSettings {
    /// Stop when `||W_k - W_{k-1}||_2 <= xi`.
    pub xi: f64,
    pub max_outer: usize,
    /// Consecutive `W_k := 2 W_k` enlargements allowed before giving up.
    pub max_doublings: usize,
    /// `W` counts as rank one when `lambda_2 <= rank_tol * lambda_1`.
    pub rank_tol: f64,
    pub solver: Settings,
}

impl Default for BlmiSettings {
    fn default() -> Self {
        Self { xi: 1e-6, max_outer: 100, max_doublings: 10, rank_tol: 1e-7, solver: pipeline_solver() }
    }
}

/// Solver settings used by the beamforming pipelines: aim for a 1e-10 gap so that numerically
/// rank-one optima show up as such, and settle for 1e-8 when the iterates stall.
pub fn pipeline_solver() -> Settings {
    Settings::tight(1e-10, 1e-7)
}

#[derive(Clone, Debug, PartialEq)]
pub struct BlmiIteration {
    pub iteration: usize,
    pub objective: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub gap: f64,
    /// Enlargements applied before this step succeeded.
    pub doublings: usize,
    /// Spectral distance to the previous accepted iterate.
    pub step: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BlmiStatus {
    /// The relaxation already had a rank-one optimum; no restriction steps were run.
    RankOneRelaxation,
    /// The relaxation optimum was above the rank threshold, but its principal factor,
    /// rescaled to be robustly feasible, attains the relaxation value within
    /// [`FACTOR_OPT_TOL`]; no restriction steps were run.
    RankOneFactor,
    Converged,
    NonConverged,
}

#[derive(Clone, Debug)]
pub struct BlmiOutcome {
    pub w: CVector,
    /// Final matrix iterate; `w w^H` when the rescaled principal factor was accepted.
    pub w_matrix: HermitianMatrix,
    pub status: BlmiStatus,
    pub history: Vec<BlmiIteration>,
    /// `lambda_2 / lambda_1` of the relaxation optimum.
    pub initial_ratio: f64,
    pub final_ratio: f64,
}

impl BlmiOutcome {
    pub fn iterations(&self) -> usize {
        self.history.len()
    }
}

/// A base relaxation: adds its variables and constraints to `model` and returns the
/// beamforming matrix variable `W`. The objective is added by the caller.
pub(crate) trait BaseRelaxation {
    fn dim(&self) -> usize;
    fn build(&self, model: &mut Model) -> MatVar;
    /// `min |w^H a|^2` over the uncertainty set.
    fn worst_case_gain(&self, w: &CVector) -> Result<f64>;
}

/// Relative objective excess up to which a rescaled principal factor counts as optimal.
pub const FACTOR_OPT_TOL: f64 = 1e-5;

/// Principal factor of `w0` rescaled so that `min |w^H a|^2 = 1`, if its objective is within
/// [`FACTOR_OPT_TOL`] of the relaxation value `tr(R W_0)`, which bounds every feasible `w`.
fn optimal_factor(base: &dyn BaseRelaxation, r: &HermitianMatrix, w0: &HermitianMatrix) -> Result<Option<CVector>> {
    let w = principal_factor(w0)?;
    let gain = base.worst_case_gain(&w)?;
    if !(gain > 0.0) {
        return Ok(None);
    }
    let w = w / crate::hermlinalg::C64::new(gain.sqrt(), 0.0);
    let relaxed = r.inner(w0);
    let value = r.quad_form(&w);
    Ok(((value - relaxed) <= FACTOR_OPT_TOL * relaxed.abs()).then_some(w))
}

pub(crate) fn eig_pair(w: &HermitianMatrix) -> Result<(f64, f64)> {
    let v = w.eigenvalues()?;
    Ok((v[0], if v.len() > 1 { v[1] } else { 0.0 }))
}

pub(crate) fn ratio(w: &HermitianMatrix) -> Result<f64> {
    let (l1, l2) = eig_pair(w)?;
    Ok(if l1 > 0.0 { l2.max(0.0) / l1 } else { 0.0 })
}

/// Runs the linearized restriction from `w0`. `r_scaled` is the objective matrix as passed to
/// the solver; `scale` converts its objective values back to `w^H R w` units.
pub(crate) fn restrict(
    base: &dyn BaseRelaxation,
    r_scaled: &HermitianMatrix,
    scale: f64,
    w0: &HermitianMatrix,
    settings: &BlmiSettings,
) -> Result<BlmiOutcome> {
    let n = base.dim();
    let initial_ratio = ratio(w0)?;
    if initial_ratio <= settings.rank_tol {
        return Ok(BlmiOutcome {
            w: principal_factor(w0)?,
            w_matrix: w0.clone(),
            status: BlmiStatus::RankOneRelaxation,
            history: Vec::new(),
            initial_ratio,
            final_ratio: initial_ratio,
        });
    }
    if let Some(w) = optimal_factor(base, r_scaled, w0)? {
        let w_matrix = HermitianMatrix::outer(&w);
        return Ok(BlmiOutcome {
            w,
            final_ratio: ratio(&w_matrix)?,
            w_matrix,
            status: BlmiStatus::RankOneFactor,
            history: Vec::new(),
            initial_ratio,
        });
    }
    let template = EigsumEpigraph::new(2.min(n), n)?;
    let cost = SparseHermitian::from_dense(r_scaled);
    let mut wk = w0.clone();
    // last solution of a feasible step; doubled iterates are never returned
    let mut last = w0.clone();
    // iterate with the smallest eigenvalue ratio, returned when the loop does not converge
    let mut best = (initial_ratio, w0.clone());
    let mut history = Vec::new();
    let mut doublings = 0;
    let mut status = BlmiStatus::NonConverged;
    while history.len() < settings.max_outer {
        let mut model = Model::new();
        let w = base.build(&mut model);
        let x = model.psd(n);
        model.eq(LinExpr::new().mat(x, SparseHermitian::identity(n)), 1.0);
        template.attach(&mut model, MatrixArg::Var(w), LinExpr::new().mat(x, SparseHermitian::from_dense(&wk)));
        model.minimize(LinExpr::new().mat(w, cost.clone()));
        let sol = model.solve(&settings.solver)?;
        if sol.status() != SolveStatus::Optimal {
            if doublings >= settings.max_doublings {
                log::warn!("restriction step {} still {:?} after {doublings} enlargements", history.len() + 1, sol.status());
                break;
            }
            log::debug!("restriction step {} returned {:?}; enlarging W_k", history.len() + 1, sol.status());
            wk = wk.scale(2.0);
            doublings += 1;
            continue;
        }
        let next = sol.value(w).clone();
        let step = crate::hermlinalg::spectral_distance(&next, &last)?;
        let (l1, l2) = eig_pair(&next)?;
        history.push(BlmiIteration {
            iteration: history.len() + 1,
            objective: sol.primal_objective() * scale,
            lambda1: l1,
            lambda2: l2,
            gap: sol.gap(),
            doublings,
            step,
        });
        doublings = 0;
        let r = if l1 > 0.0 { l2.max(0.0) / l1 } else { 0.0 };
        if r < best.0 {
            best = (r, next.clone());
        }
        wk = next.clone();
        last = next;
        if step <= settings.xi {
            status = BlmiStatus::Converged;
            break;
        }
    }
    let out = if status == BlmiStatus::Converged { last } else { best.1 };
    let final_ratio = ratio(&out)?;
    Ok(BlmiOutcome { w: principal_factor(&out)?, w_matrix: out, status, history, initial_ratio, final_ratio })
}
