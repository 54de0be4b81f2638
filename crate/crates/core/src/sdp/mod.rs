//! Primal-dual interior-point solver for block semidefinite programs.
//!
//! Programs are stated in primal standard form
//!
//! ```text
//! minimize    sum_j <C_j, X_j>
//! subject to  sum_j <A_ij, X_j>  (=, <=, >=)  b_i
//!             X_j PSD (complex Hermitian), nonnegative, or free
//! ```
//!
//! with `<A, X> = Re tr(A X)`. Complex blocks are solved through their real
//! embedding; blocks whose data is entirely real are solved as real blocks.
//! The dual multiplier `y_i` of constraint `i` follows the Lagrangian
//! `L = <C, X> - sum_i y_i (<A_i, X> - b_i)`, so `y_i >= 0` for `>=` rows and
//! `y_i <= 0` for `<=` rows.

mod kernel;
pub mod model;

use std::fmt::Write as _;

use crate::hermlinalg::{HermitianMatrix, C64};

pub use kernel::IterationRecord;

/// Hermitian coefficient matrix stored by its upper triangle.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseHermitian {
    dim: usize,
    entries: Vec<(usize, usize, C64)>,
}

impl SparseHermitian {
    pub fn new(dim: usize) -> Self {
        Self { dim, entries: Vec::new() }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::new(dim);
        for i in 0..dim {
            m.push(i, i, C64::new(1.0, 0.0));
        }
        m
    }

    /// Sets `A[i][j] += v` and `A[j][i] += conj(v)`. Diagonal entries keep only the real part.
    pub fn push(&mut self, i: usize, j: usize, v: C64) {
        assert!(i < self.dim && j < self.dim, "entry ({i},{j}) outside dim {}", self.dim);
        let (i, j, v) = if i <= j { (i, j, v) } else { (j, i, v.conj()) };
        let v = if i == j { C64::new(v.re, 0.0) } else { v };
        if v == C64::new(0.0, 0.0) {
            return;
        }
        self.entries.push((i, j, v));
    }

    pub fn push_real(&mut self, i: usize, j: usize, v: f64) {
        self.push(i, j, C64::new(v, 0.0));
    }

    pub fn from_dense(h: &HermitianMatrix) -> Self {
        let mut m = Self::new(h.dim());
        for j in 0..h.dim() {
            for i in 0..=j {
                m.push(i, j, h.get(i, j));
            }
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[(usize, usize, C64)] {
        &self.entries
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn is_real(&self) -> bool {
        self.entries.iter().all(|e| e.2.im == 0.0)
    }

    pub fn scale(&self, s: f64) -> Self {
        Self { dim: self.dim, entries: self.entries.iter().map(|&(i, j, v)| (i, j, v * s)).collect() }
    }

    /// Places `self` at offset `off` inside a `dim`-dimensional matrix.
    pub fn shifted(&self, off: usize, dim: usize) -> Self {
        assert!(off + self.dim <= dim);
        Self { dim, entries: self.entries.iter().map(|&(i, j, v)| (i + off, j + off, v)).collect() }
    }

    pub fn to_dense(&self) -> HermitianMatrix {
        let mut m = crate::hermlinalg::CMatrix::zeros(self.dim, self.dim);
        for &(i, j, v) in &self.entries {
            m[(i, j)] += v;
            if i != j {
                m[(j, i)] += v.conj();
            }
        }
        HermitianMatrix::new(m).expect("dim >= 1")
    }

    /// `Re tr(A X)`.
    pub fn inner(&self, x: &HermitianMatrix) -> f64 {
        self.entries
            .iter()
            .map(|&(i, j, v)| {
                if i == j {
                    v.re * x.get(i, i).re
                } else {
                    2.0 * (v.conj() * x.get(i, j)).re
                }
            })
            .sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BlockKind {
    Psd(usize),
    NonNeg(usize),
    Free(usize),
}

impl BlockKind {
    pub fn size(&self) -> usize {
        match *self {
            BlockKind::Psd(n) | BlockKind::NonNeg(n) | BlockKind::Free(n) => n,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Coef {
    Matrix(SparseHermitian),
    /// Sparse `(index, value)` pairs for scalar blocks.
    Vector(Vec<(usize, f64)>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sense {
    Eq,
    Le,
    Ge,
}

#[derive(Clone, Debug)]
pub struct Constraint {
    pub terms: Vec<(usize, Coef)>,
    pub sense: Sense,
    pub rhs: f64,
}

#[derive(Clone, Debug, Default)]
pub struct ConicProgram {
    pub blocks: Vec<BlockKind>,
    pub cost: Vec<(usize, Coef)>,
    pub constraints: Vec<Constraint>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum BlockValue {
    Matrix(HermitianMatrix),
    Vector(Vec<f64>),
}

impl BlockValue {
    pub fn matrix(&self) -> &HermitianMatrix {
        match self {
            BlockValue::Matrix(m) => m,
            BlockValue::Vector(_) => panic!("block holds scalars, not a matrix"),
        }
    }

    pub fn vector(&self) -> &[f64] {
        match self {
            BlockValue::Vector(v) => v,
            BlockValue::Matrix(_) => panic!("block holds a matrix, not scalars"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SolveStatus {
    Optimal,
    PrimalInfeasible,
    DualInfeasible,
    MaxIterations,
    NumericalTrouble,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Settings {
    pub gap_tol: f64,
    pub feas_tol: f64,
    pub max_iter: usize,
    /// Once the iterates stop improving, the best iterate is still reported as optimal when
    /// its gap and residuals are within this tolerance. Only relevant when it is looser than
    /// `gap_tol`/`feas_tol`.
    pub accept_tol: f64,
}

impl Settings {
    pub fn new() -> Self {
        Self { gap_tol: 1e-8, feas_tol: 1e-8, max_iter: 100, accept_tol: 1e-8 }
    }

    /// Aims for `target` but settles for `accept` when progress stalls.
    pub fn tight(target: f64, accept: f64) -> Self {
        Self { gap_tol: target, feas_tol: target, max_iter: 100, accept_tol: accept }
    }
}

/// Relative residuals of the final iterate.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct KktResiduals {
    /// `||b - A(X)|| / (1 + ||b||)`
    pub primal_res: f64,
    /// `||C - A^T y - S|| / (1 + ||C||)`
    pub dual_res: f64,
    /// `<X, S> / (1 + |primal objective|)`
    pub complementarity: f64,
}

/// Direction proving infeasibility.
#[derive(Clone, Debug)]
pub enum Certificate {
    /// Normalized `y` with `b^T y = 1` and `-A^T y` approximately PSD.
    DualRay(Vec<f64>),
    /// Normalized primal point with `<C, X> = -1` and `A(X)` approximately 0.
    PrimalRay(Vec<BlockValue>),
}

#[derive(Clone, Debug)]
pub struct ConicSolution {
    pub status: SolveStatus,
    pub primal: Vec<BlockValue>,
    pub dual: Vec<f64>,
    pub dual_slack: Vec<BlockValue>,
    pub primal_objective: f64,
    pub dual_objective: f64,
    /// `|pobj - dobj| / (1 + |pobj|)`
    pub gap: f64,
    pub kkt_residuals: KktResiduals,
    pub iterations: usize,
    pub history: Vec<IterationRecord>,
    pub certificate: Option<Certificate>,
}

impl ConicSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }

    /// Largest of gap and the two relative feasibility residuals.
    pub fn merit(&self) -> f64 {
        self.gap.max(self.kkt_residuals.primal_res).max(self.kkt_residuals.dual_res)
    }
}

/// Per-condition residuals measured directly on the complex program.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct KktReport {
    /// Constraint violation per row (signed violations of inequalities only).
    pub primal: Vec<f64>,
    /// `||C_j - sum_i y_i A_ij - S_j||_F` per block.
    pub dual: Vec<f64>,
    /// Sign violations of the multipliers and of scalar dual slacks.
    pub dual_sign: f64,
    /// Smallest eigenvalue (or entry) per block, primal and dual slack.
    pub primal_min_eig: Vec<f64>,
    pub dual_min_eig: Vec<f64>,
    /// `<X_j, S_j>` per block.
    pub complementarity: Vec<f64>,
    /// `|y_i| * slack_i` for inequality rows.
    pub row_complementarity: Vec<f64>,
    pub primal_objective: f64,
    pub dual_objective: f64,
}

impl KktReport {
    pub fn max_primal(&self) -> f64 {
        self.primal.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max_dual(&self) -> f64 {
        self.dual.iter().fold(self.dual_sign, |m, v| m.max(*v))
    }

    pub fn max_complementarity(&self) -> f64 {
        self.complementarity
            .iter()
            .chain(&self.row_complementarity)
            .fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn min_cone_eig(&self) -> f64 {
        self.primal_min_eig.iter().chain(&self.dual_min_eig).fold(f64::INFINITY, |m, v| m.min(*v))
    }

    /// All residuals within `tol`, with cone membership checked at `-tol`.
    pub fn accepted(&self, tol: f64) -> bool {
        self.max_primal() <= tol
            && self.max_dual() <= tol
            && self.max_complementarity() <= tol
            && self.min_cone_eig() >= -tol
    }
}

impl ConicProgram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_block(&mut self, kind: BlockKind) -> usize {
        self.blocks.push(kind);
        self.blocks.len() - 1
    }

    pub fn add_cost(&mut self, block: usize, coef: Coef) {
        self.cost.push((block, coef));
    }

    pub fn add_constraint(&mut self, terms: Vec<(usize, Coef)>, sense: Sense, rhs: f64) -> usize {
        self.constraints.push(Constraint { terms, sense, rhs });
        self.constraints.len() - 1
    }

    pub fn validate(&self) -> crate::Result<()> {
        use crate::Error;
        let check = |block: usize, coef: &Coef| -> crate::Result<()> {
            let kind = self
                .blocks
                .get(block)
                .ok_or_else(|| Error::Dimension(format!("block {block} does not exist")))?;
            match (kind, coef) {
                (BlockKind::Psd(n), Coef::Matrix(m)) if m.dim() == *n => Ok(()),
                (BlockKind::NonNeg(n) | BlockKind::Free(n), Coef::Vector(v)) if v.iter().all(|e| e.0 < *n) => Ok(()),
                _ => Err(Error::Dimension(format!("coefficient does not conform to block {block} ({kind:?})"))),
            }
        };
        if self.blocks.iter().any(|b| b.size() == 0) {
            return Err(Error::Dimension("empty block".into()));
        }
        for (b, c) in &self.cost {
            check(*b, c)?;
        }
        for con in &self.constraints {
            for (b, c) in &con.terms {
                check(*b, c)?;
            }
        }
        if self.constraints.is_empty() {
            return Err(Error::Dimension("program has no constraints".into()));
        }
        Ok(())
    }

    fn eval_terms(terms: &[(usize, Coef)], x: &[BlockValue]) -> f64 {
        terms
            .iter()
            .map(|(b, c)| match (c, &x[*b]) {
                (Coef::Matrix(a), BlockValue::Matrix(m)) => a.inner(m),
                (Coef::Vector(a), BlockValue::Vector(v)) => a.iter().map(|&(k, val)| val * v[k]).sum(),
                _ => panic!("coefficient/value kind mismatch"),
            })
            .sum()
    }

    /// Primal objective `sum_j <C_j, X_j>` at `x`.
    pub fn objective(&self, x: &[BlockValue]) -> f64 {
        Self::eval_terms(&self.cost, x)
    }

    /// Value of constraint row `i` at `x`.
    pub fn row_value(&self, i: usize, x: &[BlockValue]) -> f64 {
        Self::eval_terms(&self.constraints[i].terms, x)
    }

    /// `C_j - sum_i y_i A_ij` per block, the dual slack implied by `y`.
    pub fn dual_slack(&self, y: &[f64]) -> Vec<BlockValue> {
        let mut mats: Vec<BlockValue> = self
            .blocks
            .iter()
            .map(|k| match *k {
                BlockKind::Psd(n) => BlockValue::Matrix(HermitianMatrix::zeros(n)),
                BlockKind::NonNeg(n) | BlockKind::Free(n) => BlockValue::Vector(vec![0.0; n]),
            })
            .collect();
        let mut add = |b: usize, c: &Coef, s: f64| match (c, &mut mats[b]) {
            (Coef::Matrix(a), BlockValue::Matrix(m)) => *m = &*m + &a.to_dense().scale(s),
            (Coef::Vector(a), BlockValue::Vector(v)) => a.iter().for_each(|&(k, val)| v[k] += s * val),
            _ => panic!("coefficient/value kind mismatch"),
        };
        for (b, c) in &self.cost {
            add(*b, c, 1.0);
        }
        for (con, &yi) in self.constraints.iter().zip(y) {
            for (b, c) in &con.terms {
                add(*b, c, -yi);
            }
        }
        mats
    }

    /// Writes the program in a plain text format:
    ///
    /// ```text
    /// blocks <count>
    /// block <j> psd|nonneg|free <size>
    /// cost <j>
    /// constraint <i> eq|le|ge <rhs>
    /// term <j>
    /// m <row> <col> <re> <im>      (matrix entry, upper triangle)
    /// v <index> <value>            (scalar entry)
    /// ```
    pub fn dump(&self) -> String {
        let mut out = String::new();
        let coef = |out: &mut String, c: &Coef| match c {
            Coef::Matrix(m) => {
                for &(i, j, v) in m.entries() {
                    let _ = writeln!(out, "m {i} {j} {:e} {:e}", v.re, v.im);
                }
            }
            Coef::Vector(v) => {
                for &(k, val) in v {
                    let _ = writeln!(out, "v {k} {val:e}");
                }
            }
        };
        let _ = writeln!(out, "blocks {}", self.blocks.len());
        for (j, b) in self.blocks.iter().enumerate() {
            let (name, n) = match b {
                BlockKind::Psd(n) => ("psd", n),
                BlockKind::NonNeg(n) => ("nonneg", n),
                BlockKind::Free(n) => ("free", n),
            };
            let _ = writeln!(out, "block {j} {name} {n}");
        }
        for (j, c) in &self.cost {
            let _ = writeln!(out, "cost {j}");
            coef(&mut out, c);
        }
        for (i, con) in self.constraints.iter().enumerate() {
            let sense = match con.sense {
                Sense::Eq => "eq",
                Sense::Le => "le",
                Sense::Ge => "ge",
            };
            let _ = writeln!(out, "constraint {i} {sense} {:e}", con.rhs);
            for (j, c) in &con.terms {
                let _ = writeln!(out, "term {j}");
                coef(&mut out, c);
            }
        }
        out
    }
}

/// Solves `program` with the primal-dual interior-point method.
pub fn solve(program: &ConicProgram, settings: &Settings) -> crate::Result<ConicSolution> {
    program.validate()?;
    Ok(kernel::solve(program, settings))
}

/// Measures feasibility, sign and complementarity residuals of `solution`.
pub fn verify_kkt(program: &ConicProgram, solution: &ConicSolution) -> KktReport {
    verify_point(program, &solution.primal, &solution.dual, &solution.dual_slack)
}

/// Same as [`verify_kkt`] for an arbitrary primal/dual point.
pub fn verify_point(program: &ConicProgram, x: &[BlockValue], y: &[f64], s: &[BlockValue]) -> KktReport {
    let mut report = KktReport {
        primal_objective: program.objective(x),
        dual_objective: program.constraints.iter().zip(y).map(|(c, yi)| c.rhs * yi).sum(),
        ..Default::default()
    };
    for (i, con) in program.constraints.iter().enumerate() {
        let val = program.row_value(i, x);
        let (viol, slack) = match con.sense {
            Sense::Eq => ((val - con.rhs).abs(), 0.0),
            Sense::Le => ((val - con.rhs).max(0.0), con.rhs - val),
            Sense::Ge => ((con.rhs - val).max(0.0), val - con.rhs),
        };
        report.primal.push(viol);
        let sign_viol = match con.sense {
            Sense::Eq => 0.0,
            Sense::Le => y[i].max(0.0),
            Sense::Ge => (-y[i]).max(0.0),
        };
        report.dual_sign = report.dual_sign.max(sign_viol);
        if con.sense != Sense::Eq {
            report.row_complementarity.push((y[i] * slack).abs());
        }
    }
    let implied = program.dual_slack(y);
    for (j, kind) in program.blocks.iter().enumerate() {
        match (&implied[j], &s[j], &x[j]) {
            (BlockValue::Matrix(si), BlockValue::Matrix(sj), BlockValue::Matrix(xj)) => {
                report.dual.push((si - sj).frobenius());
                report.primal_min_eig.push(xj.min_eig().unwrap_or(f64::NEG_INFINITY));
                report.dual_min_eig.push(sj.min_eig().unwrap_or(f64::NEG_INFINITY));
                report.complementarity.push(xj.inner(sj));
            }
            (BlockValue::Vector(si), BlockValue::Vector(sj), BlockValue::Vector(xj)) => {
                let d: f64 = si.iter().zip(sj).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
                report.dual.push(d);
                match kind {
                    BlockKind::NonNeg(_) => {
                        report.primal_min_eig.push(xj.iter().copied().fold(f64::INFINITY, f64::min));
                        report.dual_min_eig.push(sj.iter().copied().fold(f64::INFINITY, f64::min));
                        report.complementarity.push(xj.iter().zip(sj).map(|(a, b)| a * b).sum());
                    }
                    _ => {
                        // free block: dual slack must vanish, already in `dual`
                        let norm = sj.iter().map(|v| v * v).sum::<f64>().sqrt();
                        report.dual.push(norm);
                    }
                }
            }
            _ => panic!("block value kind mismatch"),
        }
    }
    report
}
