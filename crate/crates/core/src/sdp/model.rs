//! Small modeling layer: matrix and scalar variables, linear rows and LMIs.
//!
//! An LMI `F(v) ⪰ 0` is compiled into a fresh PSD block `P` tied entrywise to
//! `F(v)`. The multiplier matrix of the LMI is the dual slack of `P`, which
//! enters the Lagrangian as `-<Z, F(v)>` with `Z ⪰ 0`.

use std::collections::BTreeMap;

use super::{BlockKind, BlockValue, Coef, ConicProgram, ConicSolution, Settings, Sense, SolveStatus, SparseHermitian};
use crate::hermlinalg::{HermitianMatrix, C64};
use crate::Result;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MatVar(usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum ScalarKind {
    NonNeg,
    Free,
}

/// Scalar variable. Nonpositive scalars are stored as negated nonnegatives.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Scalar {
    kind: ScalarKind,
    idx: usize,
    sign: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RowId(usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LmiId(usize);

/// `sum <A_k, X_k> + sum c_k s_k + constant`.
#[derive(Clone, Debug, Default)]
pub struct LinExpr {
    mats: Vec<(MatVar, SparseHermitian)>,
    scalars: Vec<(Scalar, f64)>,
    constant: f64,
}

impl LinExpr {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds `<coef, X>`.
    pub fn mat(mut self, x: MatVar, coef: SparseHermitian) -> Self {
        self.mats.push((x, coef));
        self
    }

    pub fn scalar(mut self, s: Scalar, c: f64) -> Self {
        self.scalars.push((s, c));
        self
    }

    pub fn constant(mut self, c: f64) -> Self {
        self.constant += c;
        self
    }

    fn is_real(&self) -> bool {
        self.mats.iter().all(|(_, c)| c.is_real())
    }
}

/// `sum c_k * (X_k placed at offset o_k) + sum s_k F_k + F_0`, a `dim x dim` Hermitian expression.
#[derive(Clone, Debug)]
pub struct MatExpr {
    dim: usize,
    vars: Vec<(MatVar, usize, f64)>,
    scalars: Vec<(Scalar, SparseHermitian)>,
    constant: SparseHermitian,
}

impl MatExpr {
    pub fn new(dim: usize) -> Self {
        Self { dim, vars: Vec::new(), scalars: Vec::new(), constant: SparseHermitian::new(dim) }
    }

    pub fn var(mut self, x: MatVar, offset: usize, c: f64) -> Self {
        self.vars.push((x, offset, c));
        self
    }

    /// Adds `s * f`, with `f` of dimension `dim`.
    pub fn scalar(mut self, s: Scalar, f: SparseHermitian) -> Self {
        assert_eq!(f.dim(), self.dim);
        self.scalars.push((s, f));
        self
    }

    pub fn constant(mut self, f: SparseHermitian) -> Self {
        assert_eq!(f.dim(), self.dim);
        for &(i, j, v) in f.entries() {
            self.constant.push(i, j, v);
        }
        self
    }

    fn is_real(&self) -> bool {
        self.scalars.iter().all(|(_, f)| f.is_real()) && self.constant.is_real()
    }
}

#[derive(Clone, Debug)]
struct Row {
    expr: LinExpr,
    sense: Sense,
    rhs: f64,
}

#[derive(Clone, Debug)]
struct Lmi {
    expr: MatExpr,
    slack: MatVar,
}

#[derive(Clone, Debug, Default)]
pub struct Model {
    mat_dims: Vec<usize>,
    n_nonneg: usize,
    n_free: usize,
    objective: LinExpr,
    rows: Vec<Row>,
    lmis: Vec<Lmi>,
}

/// Program plus the bookkeeping to read model quantities back.
#[derive(Clone, Debug)]
pub struct Compiled {
    pub program: ConicProgram,
    nonneg_block: Option<usize>,
    free_block: Option<usize>,
    row_index: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct ModelSolution {
    pub solution: ConicSolution,
    compiled: Compiled,
    lmi_slacks: Vec<MatVar>,
}

fn selector(dim: usize, p: usize, q: usize, imag: bool) -> SparseHermitian {
    let mut e = SparseHermitian::new(dim);
    if p == q {
        e.push_real(p, p, 1.0);
    } else if imag {
        e.push(p, q, C64::new(0.0, 0.5));
    } else {
        e.push_real(p, q, 0.5);
    }
    e
}

fn upper_map(f: &SparseHermitian) -> BTreeMap<(usize, usize), C64> {
    let mut map = BTreeMap::new();
    for &(i, j, v) in f.entries() {
        *map.entry((i, j)).or_insert(C64::new(0.0, 0.0)) += v;
    }
    map
}

impl Model {
    pub fn new() -> Self {
        Self::default()
    }

    /// Hermitian PSD matrix variable.
    pub fn psd(&mut self, dim: usize) -> MatVar {
        self.mat_dims.push(dim);
        MatVar(self.mat_dims.len() - 1)
    }

    pub fn nonneg(&mut self) -> Scalar {
        self.n_nonneg += 1;
        Scalar { kind: ScalarKind::NonNeg, idx: self.n_nonneg - 1, sign: 1.0 }
    }

    pub fn nonpos(&mut self) -> Scalar {
        let s = self.nonneg();
        Scalar { sign: -1.0, ..s }
    }

    pub fn free(&mut self) -> Scalar {
        self.n_free += 1;
        Scalar { kind: ScalarKind::Free, idx: self.n_free - 1, sign: 1.0 }
    }

    pub fn dim(&self, x: MatVar) -> usize {
        self.mat_dims[x.0]
    }

    pub fn minimize(&mut self, expr: LinExpr) {
        self.objective = expr;
    }

    /// Maximizes by minimizing the negated expression.
    pub fn maximize(&mut self, expr: LinExpr) {
        let mut e = expr;
        e.mats.iter_mut().for_each(|(_, c)| *c = c.scale(-1.0));
        e.scalars.iter_mut().for_each(|(_, c)| *c = -*c);
        e.constant = -e.constant;
        self.objective = e;
    }

    fn row(&mut self, expr: LinExpr, sense: Sense, rhs: f64) -> RowId {
        self.rows.push(Row { expr, sense, rhs });
        RowId(self.rows.len() - 1)
    }

    pub fn eq(&mut self, expr: LinExpr, rhs: f64) -> RowId {
        self.row(expr, Sense::Eq, rhs)
    }

    pub fn le(&mut self, expr: LinExpr, rhs: f64) -> RowId {
        self.row(expr, Sense::Le, rhs)
    }

    pub fn ge(&mut self, expr: LinExpr, rhs: f64) -> RowId {
        self.row(expr, Sense::Ge, rhs)
    }

    /// Adds `expr ⪰ 0`.
    pub fn lmi(&mut self, expr: MatExpr) -> LmiId {
        for (v, off, _) in &expr.vars {
            assert!(off + self.mat_dims[v.0] <= expr.dim, "variable does not fit in LMI");
        }
        let slack = self.psd(expr.dim);
        self.lmis.push(Lmi { expr, slack });
        LmiId(self.lmis.len() - 1)
    }

    fn is_complex(&self) -> bool {
        !(self.objective.is_real()
            && self.rows.iter().all(|r| r.expr.is_real())
            && self.lmis.iter().all(|l| l.expr.is_real()))
    }

    pub fn compile(&self) -> Compiled {
        let mut prog = ConicProgram::new();
        for &d in &self.mat_dims {
            prog.add_block(BlockKind::Psd(d));
        }
        let nonneg_block = (self.n_nonneg > 0).then(|| prog.add_block(BlockKind::NonNeg(self.n_nonneg)));
        let free_block = (self.n_free > 0).then(|| prog.add_block(BlockKind::Free(self.n_free)));
        let scalar_terms = |scalars: &[(Scalar, f64)]| -> Vec<(usize, Coef)> {
            let mut nn = Vec::new();
            let mut fr = Vec::new();
            for &(s, c) in scalars {
                match s.kind {
                    ScalarKind::NonNeg => nn.push((s.idx, c * s.sign)),
                    ScalarKind::Free => fr.push((s.idx, c * s.sign)),
                }
            }
            let mut out = Vec::new();
            if !nn.is_empty() {
                out.push((nonneg_block.expect("nonneg block"), Coef::Vector(nn)));
            }
            if !fr.is_empty() {
                out.push((free_block.expect("free block"), Coef::Vector(fr)));
            }
            out
        };
        let lin_terms = |e: &LinExpr| -> Vec<(usize, Coef)> {
            let mut out: Vec<(usize, Coef)> = e.mats.iter().map(|(v, c)| (v.0, Coef::Matrix(c.clone()))).collect();
            out.extend(scalar_terms(&e.scalars));
            out
        };
        prog.cost = lin_terms(&self.objective);

        let mut row_index = Vec::with_capacity(self.rows.len());
        for r in &self.rows {
            row_index.push(prog.add_constraint(lin_terms(&r.expr), r.sense, r.rhs - r.expr.constant));
        }

        let complex = self.is_complex();
        for lmi in &self.lmis {
            let e = &lmi.expr;
            let d = e.dim;
            let scalar_maps: Vec<(Scalar, BTreeMap<(usize, usize), C64>)> =
                e.scalars.iter().map(|(s, f)| (*s, upper_map(f))).collect();
            let const_map = upper_map(&e.constant);
            for q in 0..d {
                for p in 0..=q {
                    let parts: &[bool] = if p != q && complex { &[false, true] } else { &[false] };
                    for &imag in parts {
                        let pick = |z: C64| if imag { z.im } else { z.re };
                        let mut terms = vec![(lmi.slack.0, Coef::Matrix(selector(d, p, q, imag)))];
                        for &(v, off, c) in &e.vars {
                            let n = self.mat_dims[v.0];
                            if p >= off && q >= off && p < off + n && q < off + n {
                                terms.push((v.0, Coef::Matrix(selector(n, p - off, q - off, imag).scale(-c))));
                            }
                        }
                        let sc: Vec<(Scalar, f64)> = scalar_maps
                            .iter()
                            .filter_map(|(s, m)| m.get(&(p, q)).map(|z| (*s, -pick(*z))))
                            .filter(|(_, c)| *c != 0.0)
                            .collect();
                        terms.extend(scalar_terms(&sc));
                        let rhs = const_map.get(&(p, q)).map_or(0.0, |z| pick(*z));
                        prog.add_constraint(terms, Sense::Eq, rhs);
                    }
                }
            }
        }
        Compiled { program: prog, nonneg_block, free_block, row_index }
    }

    pub fn solve(&self, settings: &Settings) -> Result<ModelSolution> {
        let compiled = self.compile();
        let solution = super::solve(&compiled.program, settings)?;
        Ok(ModelSolution { solution, compiled, lmi_slacks: self.lmis.iter().map(|l| l.slack).collect() })
    }
}

impl ModelSolution {
    pub fn status(&self) -> SolveStatus {
        self.solution.status
    }

    pub fn program(&self) -> &ConicProgram {
        &self.compiled.program
    }

    /// Objective value in the model's own sense (sign restored for maximization is up to the caller).
    pub fn primal_objective(&self) -> f64 {
        self.solution.primal_objective
    }

    pub fn dual_objective(&self) -> f64 {
        self.solution.dual_objective
    }

    pub fn value(&self, x: MatVar) -> &HermitianMatrix {
        self.solution.primal[x.0].matrix()
    }

    /// Dual slack of a matrix variable's PSD cone.
    pub fn mat_dual(&self, x: MatVar) -> &HermitianMatrix {
        self.solution.dual_slack[x.0].matrix()
    }

    pub fn scalar(&self, s: Scalar) -> f64 {
        let block = match s.kind {
            ScalarKind::NonNeg => self.compiled.nonneg_block,
            ScalarKind::Free => self.compiled.free_block,
        }
        .expect("scalar block present");
        s.sign * self.solution.primal[block].vector()[s.idx]
    }

    /// Multiplier of the sign constraint on a nonnegative or nonpositive scalar.
    pub fn scalar_dual(&self, s: Scalar) -> f64 {
        match s.kind {
            ScalarKind::Free => 0.0,
            ScalarKind::NonNeg => {
                self.solution.dual_slack[self.compiled.nonneg_block.expect("nonneg block")].vector()[s.idx]
            }
        }
    }

    pub fn row_dual(&self, r: RowId) -> f64 {
        self.solution.dual[self.compiled.row_index[r.0]]
    }

    /// Multiplier matrix `Z ⪰ 0` of the LMI.
    pub fn lmi_dual(&self, l: LmiId) -> &HermitianMatrix {
        self.mat_dual(self.lmi_slacks[l.0])
    }

    /// Value of the LMI expression at the solution.
    pub fn lmi_value(&self, l: LmiId) -> &HermitianMatrix {
        self.value(self.lmi_slacks[l.0])
    }

    pub fn iterations(&self) -> usize {
        self.solution.iterations
    }

    pub fn gap(&self) -> f64 {
        self.solution.gap
    }

    pub fn block_values(&self) -> &[BlockValue] {
        &self.solution.primal
    }
}
