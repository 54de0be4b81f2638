//! Infeasible-start HKM predictor-corrector method on real symmetric blocks.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use super::{
    BlockKind, BlockValue, Certificate, Coef, ConicProgram, ConicSolution, KktResiduals, Sense, Settings,
    SolveStatus, SparseHermitian,
};
use crate::hermlinalg::HermitianMatrix;

const STEP_FRACTION: f64 = 0.98;
const STALL_LIMIT: usize = 30;
const INFEAS_TOL: f64 = 1e-8;
const STALL_INFEAS_TOL: f64 = 1e-5;
const REFINE_STEPS: usize = 2;
/// Defect of a refined direction, relative to `1 + ||b||`, above which the Newton system is
/// refactored by QR instead of through its Gram product.
const DEFECT_TOL: f64 = 1e-11;
/// Non-improving iterations after which an iterate within `accept_tol` is reported.
const ACCEPT_STALL: usize = 3;

/// One row of the per-iteration log.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub primal_objective: f64,
    pub dual_objective: f64,
    pub primal_res: f64,
    pub dual_res: f64,
    pub mu: f64,
    pub sigma: f64,
    pub step_primal: f64,
    pub step_dual: f64,
    /// `<X, S>` summed over all cones.
    pub complementarity: f64,
    /// `pobj - dobj` corrected for the current residuals; equals `complementarity`.
    pub weak_duality: f64,
}

/// Real symmetric coefficient stored with both triangles expanded.
#[derive(Clone, Debug)]
struct SymSparse {
    entries: Vec<(usize, usize, f64)>,
}

impl SymSparse {
    fn from_map(map: BTreeMap<(usize, usize), f64>) -> Self {
        Self { entries: map.into_iter().filter(|e| e.1 != 0.0).map(|((i, j), v)| (i, j, v)).collect() }
    }

    fn frob_sq(&self) -> f64 {
        self.entries.iter().map(|e| e.2 * e.2).sum()
    }

    fn scale(&mut self, s: f64) {
        self.entries.iter_mut().for_each(|e| e.2 *= s);
    }

    fn dot(&self, m: &DMatrix<f64>) -> f64 {
        self.entries.iter().map(|&(i, j, v)| v * m[(i, j)]).sum()
    }

    fn add_to(&self, m: &mut DMatrix<f64>, s: f64) {
        for &(i, j, v) in &self.entries {
            m[(i, j)] += s * v;
        }
    }
}

fn expand(h: &SparseHermitian, embedded: bool, map: &mut BTreeMap<(usize, usize), f64>) {
    let n = h.dim();
    let mut add = |i: usize, j: usize, v: f64| *map.entry((i, j)).or_insert(0.0) += v;
    for &(i, j, v) in h.entries() {
        if !embedded {
            add(i, j, v.re);
            if i != j {
                add(j, i, v.re);
            }
            continue;
        }
        let (a, b) = (0.5 * v.re, 0.5 * v.im);
        if i == j {
            add(i, i, a);
            add(i + n, i + n, a);
        } else {
            add(i, j, a);
            add(i + n, j + n, a);
            add(i, j + n, -b);
            add(i + n, j, b);
            add(j, i, a);
            add(j + n, i + n, a);
            add(j, i + n, b);
            add(j + n, i, -b);
        }
    }
}

struct PsdBlock {
    n: usize,
    embedded: bool,
    cost: DMatrix<f64>,
    cons: Vec<(usize, SymSparse)>,
}

/// Where a user block lives in the real problem.
#[derive(Clone, Copy)]
enum Slot {
    Psd(usize),
    Lp(usize),
    Free(usize),
}

struct RealProblem {
    m: usize,
    psd: Vec<PsdBlock>,
    lp_c: DVector<f64>,
    lp_a: DMatrix<f64>,
    fr_c: DVector<f64>,
    fr_a: DMatrix<f64>,
    b: DVector<f64>,
    row_scale: Vec<f64>,
    slots: Vec<Slot>,
}

impl RealProblem {
    fn build(p: &ConicProgram) -> Self {
        let m = p.constraints.len();
        let mut slots = Vec::with_capacity(p.blocks.len());
        let (mut n_psd, mut n_lp, mut n_fr) = (0, 0, 0);
        for kind in &p.blocks {
            match *kind {
                BlockKind::Psd(_) => {
                    slots.push(Slot::Psd(n_psd));
                    n_psd += 1;
                }
                BlockKind::NonNeg(k) => {
                    slots.push(Slot::Lp(n_lp));
                    n_lp += k;
                }
                BlockKind::Free(k) => {
                    slots.push(Slot::Free(n_fr));
                    n_fr += k;
                }
            }
        }
        let n_slack = p.constraints.iter().filter(|c| c.sense != Sense::Eq).count();
        let lp_total = n_lp + n_slack;

        // a PSD block is embedded when any coefficient touching it is complex
        let mut complex = vec![false; n_psd];
        let mut mark = |b: usize, c: &Coef| {
            if let (Slot::Psd(k), Coef::Matrix(h)) = (slots[b], c) {
                complex[k] |= !h.is_real();
            }
        };
        p.cost.iter().for_each(|(b, c)| mark(*b, c));
        p.constraints.iter().flat_map(|c| c.terms.iter()).for_each(|(b, c)| mark(*b, c));

        let psd_user: Vec<usize> = p
            .blocks
            .iter()
            .filter_map(|k| if let BlockKind::Psd(n) = k { Some(*n) } else { None })
            .collect();
        let mut psd: Vec<PsdBlock> = psd_user
            .iter()
            .zip(&complex)
            .map(|(&n, &cx)| {
                let nr = if cx { 2 * n } else { n };
                PsdBlock { n: nr, embedded: cx, cost: DMatrix::zeros(nr, nr), cons: Vec::new() }
            })
            .collect();
        let mut lp_c = DVector::zeros(lp_total);
        let mut lp_a = DMatrix::zeros(m, lp_total);
        let mut fr_c = DVector::zeros(n_fr);
        let mut fr_a = DMatrix::zeros(m, n_fr);

        for (b, c) in &p.cost {
            match (slots[*b], c) {
                (Slot::Psd(k), Coef::Matrix(h)) => {
                    let mut map = BTreeMap::new();
                    expand(h, psd[k].embedded, &mut map);
                    SymSparse::from_map(map).add_to(&mut psd[k].cost, 1.0);
                }
                (Slot::Lp(off), Coef::Vector(v)) => v.iter().for_each(|&(i, val)| lp_c[off + i] += val),
                (Slot::Free(off), Coef::Vector(v)) => v.iter().for_each(|&(i, val)| fr_c[off + i] += val),
                _ => unreachable!("validated"),
            }
        }

        let mut slack = n_lp;
        let mut b = DVector::zeros(m);
        for (i, con) in p.constraints.iter().enumerate() {
            let mut maps: BTreeMap<usize, BTreeMap<(usize, usize), f64>> = BTreeMap::new();
            for (blk, c) in &con.terms {
                match (slots[*blk], c) {
                    (Slot::Psd(k), Coef::Matrix(h)) => expand(h, psd[k].embedded, maps.entry(k).or_default()),
                    (Slot::Lp(off), Coef::Vector(v)) => v.iter().for_each(|&(j, val)| lp_a[(i, off + j)] += val),
                    (Slot::Free(off), Coef::Vector(v)) => v.iter().for_each(|&(j, val)| fr_a[(i, off + j)] += val),
                    _ => unreachable!("validated"),
                }
            }
            for (k, map) in maps {
                let s = SymSparse::from_map(map);
                if !s.entries.is_empty() {
                    psd[k].cons.push((i, s));
                }
            }
            match con.sense {
                Sense::Eq => {}
                Sense::Le => {
                    lp_a[(i, slack)] = 1.0;
                    slack += 1;
                }
                Sense::Ge => {
                    lp_a[(i, slack)] = -1.0;
                    slack += 1;
                }
            }
            b[i] = con.rhs;
        }

        // normalize rows
        let mut row_sq = vec![0.0; m];
        for blk in &psd {
            for (i, s) in &blk.cons {
                row_sq[*i] += s.frob_sq();
            }
        }
        for i in 0..m {
            row_sq[i] += lp_a.row(i).norm_squared() + fr_a.row(i).norm_squared();
        }
        let row_scale: Vec<f64> = row_sq.iter().map(|&s| if s > 0.0 { 1.0 / s.sqrt() } else { 1.0 }).collect();
        for blk in &mut psd {
            for (i, s) in &mut blk.cons {
                s.scale(row_scale[*i]);
            }
        }
        for i in 0..m {
            lp_a.row_mut(i).scale_mut(row_scale[i]);
            fr_a.row_mut(i).scale_mut(row_scale[i]);
            b[i] *= row_scale[i];
        }

        Self { m, psd, lp_c, lp_a, fr_c, fr_a, b, row_scale, slots }
    }

    fn nu(&self) -> f64 {
        (self.psd.iter().map(|b| b.n).sum::<usize>() + self.lp_c.len()) as f64
    }

    fn cost_norm(&self) -> f64 {
        (self.psd.iter().map(|b| b.cost.norm_squared()).sum::<f64>()
            + self.lp_c.norm_squared()
            + self.fr_c.norm_squared())
        .sqrt()
    }
}

#[derive(Clone)]
struct Iterate {
    x: Vec<DMatrix<f64>>,
    s: Vec<DMatrix<f64>>,
    xl: DVector<f64>,
    sl: DVector<f64>,
    xf: DVector<f64>,
    y: DVector<f64>,
}

struct Residuals {
    rp: DVector<f64>,
    rd: Vec<DMatrix<f64>>,
    rdl: DVector<f64>,
    rf: DVector<f64>,
    pobj: f64,
    dobj: f64,
    xs: f64,
    pinf: f64,
    dinf: f64,
    gap: f64,
}

impl Residuals {
    fn merit(&self) -> f64 {
        self.pinf.max(self.dinf).max(self.gap)
    }
}

struct Direction {
    dx: Vec<DMatrix<f64>>,
    ds: Vec<DMatrix<f64>>,
    dxl: DVector<f64>,
    dsl: DVector<f64>,
    dxf: DVector<f64>,
    dy: DVector<f64>,
    /// `||residual of the linearized constraints||` left after refinement
    defect: f64,
}

fn a_op(p: &RealProblem, x: &[DMatrix<f64>], xl: &DVector<f64>, xf: &DVector<f64>) -> DVector<f64> {
    let mut out = &p.lp_a * xl + &p.fr_a * xf;
    for (blk, xm) in p.psd.iter().zip(x) {
        for (i, a) in &blk.cons {
            out[*i] += a.dot(xm);
        }
    }
    out
}

fn at_op(p: &RealProblem, y: &DVector<f64>) -> (Vec<DMatrix<f64>>, DVector<f64>, DVector<f64>) {
    let mats = p
        .psd
        .iter()
        .map(|blk| {
            let mut m = DMatrix::zeros(blk.n, blk.n);
            for (i, a) in &blk.cons {
                a.add_to(&mut m, y[*i]);
            }
            m
        })
        .collect();
    (mats, p.lp_a.tr_mul(y), p.fr_a.tr_mul(y))
}

fn inner(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

fn sym(m: DMatrix<f64>) -> DMatrix<f64> {
    let t = m.transpose();
    (m + t) * 0.5
}

fn residuals(p: &RealProblem, it: &Iterate, bnorm: f64, cnorm: f64) -> Residuals {
    let rp = &p.b - a_op(p, &it.x, &it.xl, &it.xf);
    let (aty, atyl, atyf) = at_op(p, &it.y);
    let rd: Vec<DMatrix<f64>> =
        p.psd.iter().enumerate().map(|(k, blk)| &blk.cost - &aty[k] - &it.s[k]).collect();
    let rdl = &p.lp_c - atyl - &it.sl;
    let rf = &p.fr_c - atyf;
    let pobj = p.psd.iter().zip(&it.x).map(|(b, x)| inner(&b.cost, x)).sum::<f64>()
        + p.lp_c.dot(&it.xl)
        + p.fr_c.dot(&it.xf);
    let dobj = p.b.dot(&it.y);
    let xs = it.x.iter().zip(&it.s).map(|(x, s)| inner(x, s)).sum::<f64>() + it.xl.dot(&it.sl);
    let rd_norm = (rd.iter().map(|m| m.norm_squared()).sum::<f64>() + rdl.norm_squared() + rf.norm_squared()).sqrt();
    Residuals {
        pinf: rp.norm() / (1.0 + bnorm),
        dinf: rd_norm / (1.0 + cnorm),
        gap: (pobj - dobj).abs() / (1.0 + pobj.abs()),
        rp,
        rd,
        rdl,
        rf,
        pobj,
        dobj,
        xs,
    }
}

/// Largest `alpha` with `x + alpha dx` PSD, given the Cholesky factor of `x`.
fn max_step_psd(l: &DMatrix<f64>, dx: &DMatrix<f64>) -> f64 {
    let n = l.nrows();
    let mut t = dx.clone();
    if !l.solve_lower_triangular_mut(&mut t) {
        return 0.0;
    }
    let mut t2 = t.transpose();
    if !l.solve_lower_triangular_mut(&mut t2) {
        return 0.0;
    }
    let t2 = sym(t2);
    let min = if n == 1 {
        t2[(0, 0)]
    } else {
        t2.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min)
    };
    if min >= 0.0 {
        f64::INFINITY
    } else {
        -1.0 / min
    }
}

fn max_step_lp(x: &DVector<f64>, dx: &DVector<f64>) -> f64 {
    x.iter()
        .zip(dx.iter())
        .filter(|(_, d)| **d < 0.0)
        .map(|(xi, d)| -xi / d)
        .fold(f64::INFINITY, f64::min)
}

struct Newton {
    /// Square-root factor of the Schur complement, `M = B B^T`, stored as `B^T`.
    bt: DMatrix<f64>,
    /// Upper-triangular `R` with `M + F F^T = R^T R`.
    r: DMatrix<f64>,
    /// `G = R^-T F` and the LU of `G^T G` for the free-variable columns `F`.
    g: DMatrix<f64>,
    glu: Option<nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>>,
    fr_a: DMatrix<f64>,
    sinv: Vec<DMatrix<f64>>,
    xchol: Vec<DMatrix<f64>>,
    schol: Vec<DMatrix<f64>>,
}

/// Builds the Newton system. Each block contributes `L_S^-1 A_i L_X` to column `i` of `B^T`,
/// so the Schur complement `tr(A_i X A_j S^-1)` is the Gram matrix of those columns and is
/// factored through a QR of `B^T` instead of being formed explicitly.
fn assemble(p: &RealProblem, it: &Iterate, qr: bool) -> Option<Newton> {
    let m = p.m;
    let rows = p.psd.iter().map(|b| b.n * b.n).sum::<usize>() + it.xl.len();
    let mut bt = DMatrix::<f64>::zeros(rows, m);
    let mut sinv = Vec::with_capacity(p.psd.len());
    let mut xchol = Vec::with_capacity(p.psd.len());
    let mut schol = Vec::with_capacity(p.psd.len());
    let mut offset = 0;
    for ((blk, x), s) in p.psd.iter().zip(&it.x).zip(&it.s) {
        let n = blk.n;
        let cs = nalgebra::Cholesky::new(s.clone())?;
        let cx = nalgebra::Cholesky::new(x.clone())?;
        let ls = cs.l();
        let lx = cx.l();
        let mut linv = DMatrix::<f64>::identity(n, n);
        if !ls.solve_lower_triangular_mut(&mut linv) {
            return None;
        }
        for (i, a) in &blk.cons {
            // L_S^-1 A_i L_X as a sum of outer products of triangular columns and rows
            let mut col = bt.column_mut(*i);
            for &(p_, q, v) in &a.entries {
                for c in 0..=q {
                    let f = v * lx[(q, c)];
                    for r in p_..n {
                        col[offset + r + c * n] += f * linv[(r, p_)];
                    }
                }
            }
        }
        sinv.push(cs.inverse());
        schol.push(ls);
        xchol.push(lx);
        offset += n * n;
    }
    for j in 0..it.xl.len() {
        let w = (it.xl[j] / it.sl[j]).sqrt();
        for i in 0..m {
            bt[(offset + j, i)] = w * p.lp_a[(i, j)];
        }
    }
    Newton::factor(bt, p.fr_a.clone(), sinv, xchol, schol, qr)
}

impl Newton {
    fn factor(
        bt: DMatrix<f64>,
        fr_a: DMatrix<f64>,
        sinv: Vec<DMatrix<f64>>,
        xchol: Vec<DMatrix<f64>>,
        schol: Vec<DMatrix<f64>>,
        qr: bool,
    ) -> Option<Self> {
        let m = bt.ncols();
        // factor M + F F^T, which is nonsingular whenever the saddle system is; the
        // right-hand side is shifted by F rf to match
        let rows = bt.nrows() + fr_a.ncols();
        let mut stacked = DMatrix::zeros(rows.max(m), m);
        stacked.view_mut((0, 0), (bt.nrows(), m)).copy_from(&bt);
        stacked.view_mut((bt.nrows(), 0), (fr_a.ncols(), m)).copy_from(&fr_a.transpose());
        // the Gram product and its Cholesky factor are much cheaper than a Householder QR of
        // the tall factor, but square its condition number
        let gram = if qr { None } else { nalgebra::Cholesky::new(stacked.transpose() * &stacked) };
        let r = match gram {
            Some(c) => c.l().transpose(),
            None => stacked.qr().r(),
        };
        let mut g = fr_a.clone();
        if !r.tr_solve_upper_triangular_mut(&mut g) {
            return None;
        }
        let glu = if g.ncols() > 0 { Some(g.tr_mul(&g).lu()) } else { None };
        Some(Self { bt, r, g, glu, fr_a, sinv, xchol, schol })
    }

    /// `R^-1 R^-T v`
    fn schur_solve(&self, v: &DVector<f64>) -> Option<DVector<f64>> {
        let mut z = v.clone();
        if !self.r.tr_solve_upper_triangular_mut(&mut z) {
            return None;
        }
        if !self.r.solve_upper_triangular_mut(&mut z) {
            return None;
        }
        Some(z)
    }

    /// Solves `[[M, F], [F^T, 0]] [dy; dxf] = [h; rf]`.
    fn solve_kkt(&self, rhs: &DVector<f64>) -> Option<DVector<f64>> {
        let m = self.r.nrows();
        let nf = self.fr_a.ncols();
        let rf = rhs.rows(m, nf).into_owned();
        let h = rhs.rows(0, m) + &self.fr_a * &rf;
        let mut dxf = DVector::zeros(nf);
        let mut hh = h.clone();
        if let Some(glu) = &self.glu {
            let mut t = h.clone();
            if !self.r.tr_solve_upper_triangular_mut(&mut t) {
                return None;
            }
            dxf = glu.solve(&(self.g.tr_mul(&t) - rf))?;
            hh -= &self.fr_a * &dxf;
        }
        let dy = self.schur_solve(&hh)?;
        let mut sol = DVector::zeros(m + nf);
        sol.rows_mut(0, m).copy_from(&dy);
        sol.rows_mut(m, nf).copy_from(&dxf);
        if sol.iter().all(|v| v.is_finite()) {
            Some(sol)
        } else {
            None
        }
    }

    /// Adds `delta * max_i M_ii` to the diagonal of the Schur complement.
    fn regularize(&mut self, delta: f64, qr: bool) {
        let m = self.bt.ncols();
        let scale = (0..m).map(|i| self.bt.column(i).norm_squared()).fold(0.0, f64::max).max(1.0);
        let rows = self.bt.nrows();
        let mut bt = DMatrix::zeros(rows + m, m);
        bt.view_mut((0, 0), (rows, m)).copy_from(&self.bt);
        for i in 0..m {
            bt[(rows + i, i)] = (delta * scale).sqrt();
        }
        let fr_a = self.fr_a.clone();
        let (sinv, xchol, schol) = (self.sinv.clone(), self.xchol.clone(), self.schol.clone());
        if let Some(n) = Newton::factor(bt, fr_a, sinv, xchol, schol, qr) {
            *self = n;
        }
    }
}

/// Computes the search direction for centering `sigma_mu` and optional corrector.
fn direction(
    p: &RealProblem,
    it: &Iterate,
    res: &Residuals,
    nt: &Newton,
    sigma_mu: f64,
    corr: Option<&Direction>,
) -> Option<Direction> {
    let m = p.m;
    let nf = p.fr_c.len();
    // T = sigma mu S^-1 - X - (X R_d + dXa dSa) S^-1
    let mut h = res.rp.clone();
    for (k, blk) in p.psd.iter().enumerate() {
        let mut inner_term = &it.x[k] * &res.rd[k];
        if let Some(c) = corr {
            inner_term += &c.dx[k] * &c.ds[k];
        }
        let t = &nt.sinv[k] * sigma_mu - &it.x[k] - inner_term * &nt.sinv[k];
        for (i, a) in &blk.cons {
            h[*i] -= a.dot(&t);
        }
    }
    let mut tl = DVector::zeros(it.xl.len());
    for j in 0..it.xl.len() {
        let mut num = sigma_mu - it.xl[j] * it.sl[j] - it.xl[j] * res.rdl[j];
        if let Some(c) = corr {
            num -= c.dxl[j] * c.dsl[j];
        }
        tl[j] = num / it.sl[j];
    }
    h -= &p.lp_a * &tl;
    let mut rhs = DVector::zeros(m + nf);
    rhs.rows_mut(0, m).copy_from(&h);
    rhs.rows_mut(m, nf).copy_from(&res.rf);
    let sol = nt.solve_kkt(&rhs)?;
    let mut dy = sol.rows(0, m).into_owned();
    let mut dxf = sol.rows(m, nf).into_owned();
    let recover = |dy: &DVector<f64>| {
        let (atdy, atdyl, _) = at_op(p, dy);
        let mut dx = Vec::with_capacity(p.psd.len());
        let mut ds = Vec::with_capacity(p.psd.len());
        for k in 0..p.psd.len() {
            let dsk = &res.rd[k] - &atdy[k];
            let mut prod = &it.x[k] * &dsk;
            if let Some(c) = corr {
                prod += &c.dx[k] * &c.ds[k];
            }
            let dxk = &nt.sinv[k] * sigma_mu - &it.x[k] - sym(prod * &nt.sinv[k]);
            dx.push(dxk);
            ds.push(sym(dsk));
        }
        let dsl = &res.rdl - atdyl;
        let mut dxl = DVector::zeros(it.xl.len());
        for j in 0..it.xl.len() {
            let mut num = sigma_mu - it.xl[j] * it.sl[j] - it.xl[j] * dsl[j];
            if let Some(c) = corr {
                num -= c.dxl[j] * c.dsl[j];
            }
            dxl[j] = num / it.sl[j];
        }
        (dx, ds, dxl, dsl)
    };
    let (mut dx, mut ds, mut dxl, mut dsl) = recover(&dy);
    // refine against the linear operators themselves, which also absorbs rounding made
    // while forming the Schur complement
    let defect = |dx: &[DMatrix<f64>], dxl: &DVector<f64>, dxf: &DVector<f64>, dy: &DVector<f64>| {
        let mut d = DVector::zeros(m + nf);
        d.rows_mut(0, m).copy_from(&(&res.rp - a_op(p, dx, dxl, dxf)));
        d.rows_mut(m, nf).copy_from(&(&res.rf - p.fr_a.tr_mul(dy)));
        d
    };
    let mut d = defect(&dx, &dxl, &dxf, &dy);
    for _ in 0..REFINE_STEPS {
        let before = d.norm();
        if before == 0.0 {
            break;
        }
        let Some(c) = nt.solve_kkt(&d) else { break };
        let dy2 = &dy + c.rows(0, m);
        let dxf2 = &dxf + c.rows(m, nf);
        let (dx2, ds2, dxl2, dsl2) = recover(&dy2);
        let d2 = defect(&dx2, &dxl2, &dxf2, &dy2);
        if !(d2.norm() < 0.5 * before) {
            break;
        }
        (dy, dxf, dx, ds, dxl, dsl, d) = (dy2, dxf2, dx2, ds2, dxl2, dsl2, d2);
    }
    Some(Direction { dx, ds, dxl, dsl, dxf, dy, defect: d.norm() })
}

fn step_lengths(it: &Iterate, nt: &Newton, d: &Direction) -> (f64, f64) {
    let mut ap = max_step_lp(&it.xl, &d.dxl);
    let mut ad = max_step_lp(&it.sl, &d.dsl);
    for k in 0..it.x.len() {
        ap = ap.min(max_step_psd(&nt.xchol[k], &d.dx[k]));
        ad = ad.min(max_step_psd(&nt.schol[k], &d.ds[k]));
    }
    (ap, ad)
}

fn initial_point(p: &RealProblem) -> Iterate {
    let mut x = Vec::new();
    let mut s = Vec::new();
    for blk in &p.psd {
        let n = blk.n as f64;
        let mut xi = 10f64.max(n.sqrt());
        let mut eta = 10f64.max(n.sqrt()).max(blk.cost.norm());
        for (i, a) in &blk.cons {
            let na = a.frob_sq().sqrt();
            xi = xi.max(n * (1.0 + p.b[*i].abs()) / (1.0 + na));
            eta = eta.max(na);
        }
        x.push(DMatrix::identity(blk.n, blk.n) * xi);
        s.push(DMatrix::identity(blk.n, blk.n) * eta);
    }
    let nl = p.lp_c.len();
    let mut xi = 10f64.max((nl as f64).sqrt());
    let mut eta = 10f64.max((nl as f64).sqrt()).max(p.lp_c.norm());
    for i in 0..p.m {
        let na = p.lp_a.row(i).norm();
        if na > 0.0 {
            xi = xi.max((1.0 + p.b[i].abs()) / (1.0 + na));
            eta = eta.max(na);
        }
    }
    Iterate {
        x,
        s,
        xl: DVector::from_element(nl, xi),
        sl: DVector::from_element(nl, eta),
        xf: DVector::zeros(p.fr_c.len()),
        y: DVector::zeros(p.m),
    }
}

/// Ratio measuring how well `y` proves primal infeasibility (small is a proof).
fn dual_ray_ratio(p: &RealProblem, y: &DVector<f64>) -> Option<f64> {
    let by = p.b.dot(y);
    if by <= 0.0 {
        return None;
    }
    let (aty, atyl, atyf) = at_op(p, y);
    let mut viol = atyf.norm() + atyl.iter().map(|v| v.max(0.0)).sum::<f64>();
    for m in aty {
        let top = if m.nrows() == 1 {
            m[(0, 0)]
        } else {
            m.symmetric_eigenvalues().iter().copied().fold(f64::NEG_INFINITY, f64::max)
        };
        viol += top.max(0.0);
    }
    Some(viol / by)
}

/// Ratio measuring how well the primal iterate proves dual infeasibility.
fn primal_ray_ratio(p: &RealProblem, it: &Iterate, res: &Residuals) -> Option<f64> {
    if res.pobj >= 0.0 {
        return None;
    }
    let ax = a_op(p, &it.x, &it.xl, &it.xf);
    Some(ax.norm() / -res.pobj)
}

fn to_complex(blk: &PsdBlock, m: &DMatrix<f64>, dual: bool) -> HermitianMatrix {
    if blk.embedded {
        let h = HermitianMatrix::from_real_embedding(m).expect("even dimension");
        if dual {
            h.scale(2.0)
        } else {
            h
        }
    } else {
        HermitianMatrix::from_real(m).expect("square")
    }
}

fn export(
    prog: &ConicProgram,
    p: &RealProblem,
    it: &Iterate,
    res: &Residuals,
    status: SolveStatus,
    iterations: usize,
    history: Vec<IterationRecord>,
    certificate: Option<Certificate>,
) -> ConicSolution {
    let mut primal = Vec::with_capacity(prog.blocks.len());
    let mut dual_slack = Vec::with_capacity(prog.blocks.len());
    for (b, kind) in prog.blocks.iter().enumerate() {
        match (p.slots[b], kind) {
            (Slot::Psd(k), _) => {
                primal.push(BlockValue::Matrix(to_complex(&p.psd[k], &it.x[k], false)));
                dual_slack.push(BlockValue::Matrix(to_complex(&p.psd[k], &it.s[k], true)));
            }
            (Slot::Lp(off), BlockKind::NonNeg(n)) => {
                primal.push(BlockValue::Vector(it.xl.rows(off, *n).iter().copied().collect()));
                dual_slack.push(BlockValue::Vector(it.sl.rows(off, *n).iter().copied().collect()));
            }
            (Slot::Free(off), BlockKind::Free(n)) => {
                primal.push(BlockValue::Vector(it.xf.rows(off, *n).iter().copied().collect()));
                dual_slack.push(BlockValue::Vector(vec![0.0; *n]));
            }
            _ => unreachable!("slot/kind mismatch"),
        }
    }
    let dual: Vec<f64> = it.y.iter().zip(&p.row_scale).map(|(y, d)| y * d).collect();
    ConicSolution {
        status,
        primal,
        dual,
        dual_slack,
        primal_objective: res.pobj,
        dual_objective: res.dobj,
        gap: res.gap,
        kkt_residuals: KktResiduals {
            primal_res: res.pinf,
            dual_res: res.dinf,
            complementarity: res.xs.abs() / (1.0 + res.pobj.abs()),
        },
        iterations,
        history,
        certificate,
    }
}

fn dual_ray(prog: &ConicProgram, p: &RealProblem, y: &DVector<f64>) -> Certificate {
    let by = p.b.dot(y);
    let _ = prog;
    Certificate::DualRay(y.iter().zip(&p.row_scale).map(|(v, d)| v * d / by).collect())
}

fn primal_ray(prog: &ConicProgram, p: &RealProblem, it: &Iterate, pobj: f64) -> Certificate {
    let scale = 1.0 / pobj.abs();
    let mut out = Vec::new();
    for (b, kind) in prog.blocks.iter().enumerate() {
        match (p.slots[b], kind) {
            (Slot::Psd(k), _) => out.push(BlockValue::Matrix(to_complex(&p.psd[k], &(&it.x[k] * scale), false))),
            (Slot::Lp(off), BlockKind::NonNeg(n)) => {
                out.push(BlockValue::Vector(it.xl.rows(off, *n).iter().map(|v| v * scale).collect()))
            }
            (Slot::Free(off), BlockKind::Free(n)) => {
                out.push(BlockValue::Vector(it.xf.rows(off, *n).iter().map(|v| v * scale).collect()))
            }
            _ => unreachable!("slot/kind mismatch"),
        }
    }
    Certificate::PrimalRay(out)
}

pub(super) fn solve(prog: &ConicProgram, settings: &Settings) -> ConicSolution {
    let p = RealProblem::build(prog);
    log::debug!("conic program: {} rows, blocks {:?}, {} lp, {} free", p.m, p.psd.iter().map(|b| b.n).collect::<Vec<_>>(), p.lp_c.len(), p.fr_c.len());
    let bnorm = p.b.norm();
    let cnorm = p.cost_norm();
    let nu = p.nu();
    let mut it = initial_point(&p);
    let mut history = Vec::new();
    let mut best: Option<(f64, Iterate)> = None;
    let mut stall = 0usize;
    let mut best_merit = f64::INFINITY;
    let (mut last_sigma, mut last_ap, mut last_ad) = (f64::NAN, f64::NAN, f64::NAN);

    for iter in 0..=settings.max_iter {
        let res = residuals(&p, &it, bnorm, cnorm);
        let mu = res.xs / nu;
        let correction = res.rd.iter().zip(&it.x).map(|(r, x)| inner(r, x)).sum::<f64>()
            + res.rdl.dot(&it.xl)
            + res.rf.dot(&it.xf)
            - it.y.dot(&res.rp);
        history.push(IterationRecord {
            iteration: iter,
            primal_objective: res.pobj,
            dual_objective: res.dobj,
            primal_res: res.pinf,
            dual_res: res.dinf,
            mu,
            sigma: last_sigma,
            step_primal: last_ap,
            step_dual: last_ad,
            complementarity: res.xs,
            weak_duality: res.pobj - res.dobj - correction,
        });
        let merit = res.merit();
        if !merit.is_finite() {
            break;
        }
        if best.as_ref().map_or(true, |(bm, _)| merit < *bm) {
            best = Some((merit, it.clone()));
        }
        if res.gap <= settings.gap_tol && res.pinf <= settings.feas_tol && res.dinf <= settings.feas_tol {
            return export(prog, &p, &it, &res, SolveStatus::Optimal, iter, history, None);
        }
        if let Some(r) = dual_ray_ratio(&p, &it.y) {
            if r < INFEAS_TOL {
                let cert = dual_ray(prog, &p, &it.y);
                return export(prog, &p, &it, &res, SolveStatus::PrimalInfeasible, iter, history, Some(cert));
            }
        }
        if let Some(r) = primal_ray_ratio(&p, &it, &res) {
            if r < INFEAS_TOL {
                let cert = primal_ray(prog, &p, &it, res.pobj);
                return export(prog, &p, &it, &res, SolveStatus::DualInfeasible, iter, history, Some(cert));
            }
        }
        if merit < 0.9 * best_merit {
            best_merit = merit;
            stall = 0;
        } else {
            stall += 1;
        }
        if stall >= ACCEPT_STALL && best.as_ref().is_some_and(|(_, b)| acceptable(&residuals(&p, b, bnorm, cnorm), settings)) {
            log::debug!("accepting best iterate after stall at iteration {iter}");
            return finish_best(prog, &p, best, &it, SolveStatus::Optimal, iter, history, bnorm, cnorm, settings);
        }
        if stall >= STALL_LIMIT {
            if dual_ray_ratio(&p, &it.y).is_some_and(|r| r < STALL_INFEAS_TOL) {
                let cert = dual_ray(prog, &p, &it.y);
                return export(prog, &p, &it, &res, SolveStatus::PrimalInfeasible, iter, history, Some(cert));
            }
            if primal_ray_ratio(&p, &it, &res).is_some_and(|r| r < STALL_INFEAS_TOL) {
                let cert = primal_ray(prog, &p, &it, res.pobj);
                return export(prog, &p, &it, &res, SolveStatus::DualInfeasible, iter, history, Some(cert));
            }
            log::debug!("interior point stalled at iteration {iter}, merit {merit:e}");
            return finish_best(prog, &p, best, &it, SolveStatus::NumericalTrouble, iter, history, bnorm, cnorm, settings);
        }
        if iter == settings.max_iter {
            break;
        }

        let mut qr = false;
        let (nt, pred) = loop {
            let Some(mut nt) = assemble(&p, &it, qr) else {
                log::debug!("cone factorization failed at iteration {iter}");
                return finish_best(prog, &p, best, &it, SolveStatus::NumericalTrouble, iter, history, bnorm, cnorm, settings);
            };
            let mut pred = direction(&p, &it, &res, &nt, 0.0, None);
            let mut delta = 1e-14;
            while pred.is_none() && delta <= 1e-8 {
                nt.regularize(delta, qr);
                pred = direction(&p, &it, &res, &nt, 0.0, None);
                delta *= 100.0;
            }
            match pred {
                Some(d) if qr || d.defect <= DEFECT_TOL * (1.0 + bnorm) => break (nt, d),
                _ if !qr => {
                    log::trace!("refactoring the Newton system by QR at iteration {iter} defect {:e}", pred.as_ref().map_or(f64::NAN, |d| d.defect));
                    qr = true;
                }
                _ => {
                    log::debug!("Newton system singular at iteration {iter}");
                    return finish_best(prog, &p, best, &it, SolveStatus::NumericalTrouble, iter, history, bnorm, cnorm, settings);
                }
            }
        };
        let (ap, ad) = step_lengths(&it, &nt, &pred);
        let (ap, ad) = (ap.min(1.0), ad.min(1.0));
        let mut xs_aff = it.xl.iter().zip(pred.dxl.iter()).zip(it.sl.iter().zip(pred.dsl.iter()))
            .map(|((x, dx), (s, ds))| (x + ap * dx) * (s + ad * ds))
            .sum::<f64>();
        for k in 0..it.x.len() {
            xs_aff += inner(&(&it.x[k] + &pred.dx[k] * ap), &(&it.s[k] + &pred.ds[k] * ad));
        }
        let mu_aff = xs_aff / nu;
        let sigma = if mu > 0.0 { (mu_aff / mu).clamp(0.0, 1.0).powi(3) } else { 0.0 };
        let Some(dir) = direction(&p, &it, &res, &nt, sigma * mu, Some(&pred)) else {
            return finish_best(prog, &p, best, &it, SolveStatus::NumericalTrouble, iter, history, bnorm, cnorm, settings);
        };
        let (ap, ad) = step_lengths(&it, &nt, &dir);
        let ap = (STEP_FRACTION * ap).min(1.0);
        let ad = (STEP_FRACTION * ad).min(1.0);
        for k in 0..it.x.len() {
            it.x[k] = sym(&it.x[k] + &dir.dx[k] * ap);
            it.s[k] = sym(&it.s[k] + &dir.ds[k] * ad);
        }
        it.xl += &dir.dxl * ap;
        it.sl += &dir.dsl * ad;
        it.xf += &dir.dxf * ap;
        it.y += &dir.dy * ad;
        last_sigma = sigma;
        last_ap = ap;
        last_ad = ad;
    }
    finish_best(prog, &p, best, &it, SolveStatus::MaxIterations, settings.max_iter, history, bnorm, cnorm, settings)
}

fn acceptable(r: &Residuals, settings: &Settings) -> bool {
    r.gap <= settings.accept_tol && r.pinf <= settings.accept_tol && r.dinf <= settings.accept_tol
}

#[allow(clippy::too_many_arguments)]
fn finish_best(
    prog: &ConicProgram,
    p: &RealProblem,
    best: Option<(f64, Iterate)>,
    current: &Iterate,
    status: SolveStatus,
    iterations: usize,
    history: Vec<IterationRecord>,
    bnorm: f64,
    cnorm: f64,
    settings: &Settings,
) -> ConicSolution {
    let it = best.map(|b| b.1).unwrap_or_else(|| current.clone());
    let res = residuals(p, &it, bnorm, cnorm);
    let status = if acceptable(&res, settings) { SolveStatus::Optimal } else { status };
    if log::log_enabled!(log::Level::Trace) {
        for h in &history {
            log::trace!("{h:?}");
        }
    }
    export(prog, p, &it, &res, status, iterations, history, None)
}
