//! Dense complex Hermitian matrices and the handful of spectral routines the
//! rest of the crate is built on.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

pub type C64 = nalgebra::Complex<f64>;
pub type CVector = DVector<C64>;
pub type CMatrix = DMatrix<C64>;

/// Imaginary unit.
pub const I: C64 = C64::new(0.0, 1.0);

const EIG_EPS: f64 = 1e-15;
const EIG_MAX_ITER: usize = 10_000;

/// Complex Hermitian matrix. Construction symmetrizes `(H + H^H) / 2`.
#[derive(Clone, PartialEq)]
pub struct HermitianMatrix {
    data: CMatrix,
}

impl fmt::Debug for HermitianMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "HermitianMatrix({}x{}) {}", self.dim(), self.dim(), self.data)
    }
}

/// Eigen-decomposition with eigenvalues in descending order.
#[derive(Clone, Debug)]
pub struct EigenDecomposition {
    pub values: Vec<f64>,
    /// Orthonormal eigenvectors, column `k` pairs with `values[k]`.
    pub vectors: CMatrix,
}

impl EigenDecomposition {
    pub fn vector(&self, k: usize) -> CVector {
        self.vectors.column(k).into_owned()
    }

    /// `V diag(values) V^H`.
    pub fn reconstruct(&self) -> HermitianMatrix {
        let n = self.values.len();
        let mut scaled = self.vectors.clone();
        for k in 0..n {
            let lam = self.values[k];
            scaled.column_mut(k).iter_mut().for_each(|z| *z *= lam);
        }
        HermitianMatrix::new_unchecked(&scaled * self.vectors.adjoint())
    }

    pub fn rank(&self, rel_tol: f64) -> usize {
        let top = self.values.first().copied().unwrap_or(0.0);
        if top <= 0.0 {
            return 0;
        }
        self.values.iter().filter(|&&v| v > rel_tol * top).count()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Norms {
    pub trace: f64,
    pub frobenius: f64,
    pub spectral: f64,
    pub min_eig: f64,
}

impl HermitianMatrix {
    pub fn new(m: CMatrix) -> Result<Self> {
        if m.nrows() == 0 || m.nrows() != m.ncols() {
            return Err(Error::Dimension(format!(
                "Hermitian matrix must be square and non-empty, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        Ok(Self::new_unchecked(m))
    }

    /// Symmetrizes without the shape check; callers guarantee a square matrix.
    pub(crate) fn new_unchecked(m: CMatrix) -> Self {
        let adj = m.adjoint();
        let data = (m + adj).map(|z| z * 0.5);
        Self { data }
    }

    pub fn from_real(m: &DMatrix<f64>) -> Result<Self> {
        Self::new(m.map(|x| C64::new(x, 0.0)))
    }

    pub fn from_fn(n: usize, f: impl FnMut(usize, usize) -> C64) -> Self {
        Self::new_unchecked(CMatrix::from_fn(n, n, f))
    }

    pub fn zeros(n: usize) -> Self {
        Self { data: CMatrix::zeros(n, n) }
    }

    pub fn identity(n: usize) -> Self {
        Self { data: CMatrix::identity(n, n) }
    }

    pub fn diag(values: &[f64]) -> Self {
        let n = values.len();
        Self::from_fn(n, |i, j| if i == j { C64::new(values[i], 0.0) } else { C64::new(0.0, 0.0) })
    }

    /// `v v^H`.
    pub fn outer(v: &CVector) -> Self {
        Self::new_unchecked(v * v.adjoint())
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn as_matrix(&self) -> &CMatrix {
        &self.data
    }

    pub fn into_matrix(self) -> CMatrix {
        self.data
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.data[(i, j)]
    }

    pub fn is_real(&self) -> bool {
        self.data.iter().all(|z| z.im == 0.0)
    }

    pub fn scale(&self, s: f64) -> Self {
        Self { data: self.data.map(|z| z * s) }
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim()).map(|i| self.data[(i, i)].re).sum()
    }

    /// Real inner product `Re tr(A B)`.
    pub fn inner(&self, other: &HermitianMatrix) -> f64 {
        // tr(AB) = sum_ij A_ij B_ji = sum_ij A_ij conj(B_ij) for Hermitian B
        self.data
            .iter()
            .zip(other.data.iter())
            .map(|(a, b)| (a * b.conj()).re)
            .sum()
    }

    /// `v^H H v`.
    pub fn quad_form(&self, v: &CVector) -> f64 {
        (v.adjoint() * &self.data * v)[(0, 0)].re
    }

    /// `u^H H v`.
    pub fn bilinear(&self, u: &CVector, v: &CVector) -> C64 {
        (u.adjoint() * &self.data * v)[(0, 0)]
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn mul_vec(&self, v: &CVector) -> CVector {
        &self.data * v
    }

    /// Eigenvalues in descending order with orthonormal eigenvectors.
    pub fn eigh(&self) -> Result<EigenDecomposition> {
        let eig = SymmetricEigen::try_new(self.data.clone(), EIG_EPS, EIG_MAX_ITER)
            .ok_or(Error::EigenNonConvergence { dim: self.dim() })?;
        let n = self.dim();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
        let vectors = CMatrix::from_fn(n, n, |i, j| eig.eigenvectors[(i, order[j])]);
        Ok(EigenDecomposition { values, vectors })
    }

    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        Ok(self.eigh()?.values)
    }

    pub fn max_eig(&self) -> Result<f64> {
        Ok(self.eigenvalues()?[0])
    }

    pub fn min_eig(&self) -> Result<f64> {
        Ok(*self.eigenvalues()?.last().expect("dim >= 1"))
    }

    pub fn norms(&self) -> Result<Norms> {
        let values = self.eigenvalues()?;
        let spectral = values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        Ok(Norms {
            trace: self.trace(),
            frobenius: self.frobenius(),
            spectral,
            min_eig: *values.last().expect("dim >= 1"),
        })
    }

    /// Default PSD tolerance `1e-9 (1 + ||H||_2)`.
    pub fn psd_tolerance(&self) -> Result<f64> {
        Ok(1e-9 * (1.0 + self.norms()?.spectral))
    }

    pub fn is_psd(&self, tol: Option<f64>) -> Result<bool> {
        let norms = self.norms()?;
        let tol = tol.unwrap_or(1e-9 * (1.0 + norms.spectral));
        Ok(norms.min_eig >= -tol)
    }

    /// Lower Cholesky factor `L` with `H = L L^H`, or `None` when a pivot is not positive.
    pub fn cholesky(&self) -> Option<CMatrix> {
        let n = self.dim();
        let a = &self.data;
        let mut l = CMatrix::zeros(n, n);
        for j in 0..n {
            let mut d = a[(j, j)].re;
            for k in 0..j {
                d -= l[(j, k)].norm_sqr();
            }
            if !(d > 0.0) {
                return None;
            }
            let djj = d.sqrt();
            l[(j, j)] = C64::new(djj, 0.0);
            for i in j + 1..n {
                let mut v = a[(i, j)];
                for k in 0..j {
                    v -= l[(i, k)] * l[(j, k)].conj();
                }
                l[(i, j)] = v / djj;
            }
        }
        Some(l)
    }

    pub fn inverse(&self) -> Result<HermitianMatrix> {
        let inv = self
            .data
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::Singular("matrix inverse failed".into()))?;
        Ok(Self::new_unchecked(inv))
    }

    /// Solves `H x = b` for a positive definite `H`.
    pub fn solve_pd(&self, b: &CVector) -> Result<CVector> {
        let l = self
            .cholesky()
            .ok_or_else(|| Error::Singular("matrix is not positive definite".into()))?;
        let n = self.dim();
        let mut z = b.clone();
        for i in 0..n {
            for k in 0..i {
                let t = l[(i, k)] * z[k];
                z[i] -= t;
            }
            z[i] /= l[(i, i)];
        }
        for i in (0..n).rev() {
            for k in i + 1..n {
                let t = l[(k, i)].conj() * z[k];
                z[i] -= t;
            }
            z[i] /= l[(i, i)];
        }
        Ok(z)
    }

    /// `[[Re H, -Im H], [Im H, Re H]]`.
    pub fn real_embedding(&self) -> DMatrix<f64> {
        let n = self.dim();
        DMatrix::from_fn(2 * n, 2 * n, |i, j| {
            let z = self.data[(i % n, j % n)];
            match (i < n, j < n) {
                (true, true) | (false, false) => z.re,
                (true, false) => -z.im,
                (false, true) => z.im,
            }
        })
    }

    /// Inverse of [`Self::real_embedding`], averaging the redundant blocks.
    pub fn from_real_embedding(y: &DMatrix<f64>) -> Result<Self> {
        let m = y.nrows();
        if m == 0 || m % 2 != 0 || y.ncols() != m {
            return Err(Error::Dimension(format!("real embedding must be 2n x 2n, got {}x{}", m, y.ncols())));
        }
        let n = m / 2;
        Ok(Self::from_fn(n, |i, j| {
            C64::new(
                0.5 * (y[(i, j)] + y[(i + n, j + n)]),
                0.5 * (y[(i + n, j)] - y[(i, j + n)]),
            )
        }))
    }

    /// Embeds `self` as the leading principal block of a `dim x dim` zero matrix.
    pub fn pad_to(&self, dim: usize) -> HermitianMatrix {
        let n = self.dim();
        let mut out = CMatrix::zeros(dim, dim);
        out.view_mut((0, 0), (n, n)).copy_from(&self.data);
        Self { data: out }
    }

    pub fn submatrix(&self, start: usize, len: usize) -> HermitianMatrix {
        Self { data: self.data.view((start, start), (len, len)).into_owned() }
    }
}

impl Add for &HermitianMatrix {
    type Output = HermitianMatrix;
    fn add(self, rhs: &HermitianMatrix) -> HermitianMatrix {
        HermitianMatrix { data: &self.data + &rhs.data }
    }
}

impl Sub for &HermitianMatrix {
    type Output = HermitianMatrix;
    fn sub(self, rhs: &HermitianMatrix) -> HermitianMatrix {
        HermitianMatrix { data: &self.data - &rhs.data }
    }
}

impl Neg for &HermitianMatrix {
    type Output = HermitianMatrix;
    fn neg(self) -> HermitianMatrix {
        self.scale(-1.0)
    }
}

impl Mul<f64> for &HermitianMatrix {
    type Output = HermitianMatrix;
    fn mul(self, rhs: f64) -> HermitianMatrix {
        self.scale(rhs)
    }
}

/// Euclidean norm of a complex vector.
pub fn vnorm(v: &CVector) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// `u^H v`.
pub fn vdot(u: &CVector, v: &CVector) -> C64 {
    u.iter().zip(v.iter()).map(|(a, b)| a.conj() * b).sum()
}

/// Spectral norm of a Hermitian matrix difference.
pub fn spectral_distance(a: &HermitianMatrix, b: &HermitianMatrix) -> Result<f64> {
    Ok((a - b).norms()?.spectral)
}
