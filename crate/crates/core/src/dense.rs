//! Small dense kernels: Householder least squares for the per-column
//! approximate-inverse problems, Gram–Schmidt basis growth, eigenpairs of
//! small nonsymmetric matrices and a Bartels–Stewart Lyapunov solver.
//!
//! Everything here operates on reduced-size or per-column problems, so
//! clarity wins over blocking or cache tuning.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;

/// Relative threshold on `|R_jj|` below which a least-squares block is
/// declared rank deficient.
pub const RANK_TOL: f64 = 1e-12;

/// Least-squares solution of `min ‖b − A x‖₂` by Householder QR.
///
/// Returns `None` when `A` is rank deficient (or has more columns than
/// rows). On success also returns the residual norm `‖b − A x‖₂`.
pub fn lstsq(a: &DMatrix<f64>, b: &[f64]) -> Option<(Vec<f64>, f64)> {
    let (m, n) = (a.nrows(), a.ncols());
    assert_eq!(b.len(), m);
    if n == 0 || n > m {
        return None;
    }
    let mut r = a.clone();
    let mut qtb = b.to_vec();
    let mut v = vec![0.0; m];
    for k in 0..n {
        let norm: f64 = (k..m).map(|i| r[(i, k)] * r[(i, k)]).sum::<f64>().sqrt();
        if norm == 0.0 {
            return None;
        }
        let alpha = if r[(k, k)] > 0.0 { -norm } else { norm };
        for i in k..m {
            v[i] = r[(i, k)];
        }
        v[k] -= alpha;
        let vnorm2: f64 = (k..m).map(|i| v[i] * v[i]).sum();
        if vnorm2 > 0.0 {
            for j in k..n {
                let dot: f64 = (k..m).map(|i| v[i] * r[(i, j)]).sum();
                let f = 2.0 * dot / vnorm2;
                for i in k..m {
                    r[(i, j)] -= f * v[i];
                }
            }
            let dot: f64 = (k..m).map(|i| v[i] * qtb[i]).sum();
            let f = 2.0 * dot / vnorm2;
            for i in k..m {
                qtb[i] -= f * v[i];
            }
        }
    }
    let rmax = (0..n).map(|k| r[(k, k)].abs()).fold(0.0, f64::max);
    if (0..n).any(|k| r[(k, k)].abs() <= RANK_TOL * rmax) {
        return None;
    }
    let mut x = vec![0.0; n];
    for k in (0..n).rev() {
        let s: f64 = ((k + 1)..n).map(|j| r[(k, j)] * x[j]).sum();
        x[k] = (qtb[k] - s) / r[(k, k)];
    }
    let resid = qtb[n..].iter().map(|v| v * v).sum::<f64>().sqrt();
    Some((x, resid))
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    y.iter_mut().zip(x).for_each(|(yi, xi)| *yi += alpha * xi);
}

/// Orthonormal basis grown one vector at a time by modified Gram–Schmidt
/// with a second pass.
///
/// Candidates are normalized first; one is rejected as linearly dependent
/// when less than `rank_tol` of its unit length survives orthogonalization.
#[derive(Debug, Clone)]
pub struct OrthoBasis {
    dim: usize,
    columns: Vec<Vec<f64>>,
    rank_tol: f64,
}

impl OrthoBasis {
    pub fn new(dim: usize, rank_tol: f64) -> Self {
        OrthoBasis {
            dim,
            columns: Vec::new(),
            rank_tol,
        }
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    pub fn columns(&self) -> &[Vec<f64>] {
        &self.columns
    }

    /// Try to extend the basis by `v`. Returns whether a column was added.
    pub fn push(&mut self, v: &[f64]) -> bool {
        assert_eq!(v.len(), self.dim);
        let original = norm2(v);
        if original == 0.0 || !original.is_finite() {
            return false;
        }
        let mut w: Vec<f64> = v.iter().map(|x| x / original).collect();
        for _ in 0..2 {
            for q in &self.columns {
                let h = dot(q, &w);
                axpy(-h, q, &mut w);
            }
        }
        let remaining = norm2(&w);
        if remaining <= self.rank_tol {
            return false;
        }
        w.iter_mut().for_each(|x| *x /= remaining);
        self.columns.push(w);
        true
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.dim, self.columns.len());
        for (j, c) in self.columns.iter().enumerate() {
            m.column_mut(j).copy_from_slice(c);
        }
        m
    }
}

fn to_complex(a: &DMatrix<f64>) -> CMatrix {
    a.map(|v| Complex64::new(v, 0.0))
}

/// Complex Schur form `A = U T Uᴴ` with `T` upper triangular.
pub fn complex_schur(a: &DMatrix<f64>) -> Result<(CMatrix, CMatrix)> {
    if a.nrows() != a.ncols() {
        return Err(Error::dim("schur (square)", a.nrows(), a.ncols()));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("non-finite entry in dense matrix".into()));
    }
    let schur = nalgebra::linalg::Schur::try_new(to_complex(a), 1e-15, 10_000)
        .ok_or_else(|| Error::Singular("Schur iteration did not converge".into()))?;
    Ok(schur.unpack())
}

/// Eigenvalues of a real square matrix.
pub fn eigenvalues(a: &DMatrix<f64>) -> Result<Vec<Complex64>> {
    let (_, t) = complex_schur(a)?;
    Ok((0..t.nrows()).map(|i| t[(i, i)]).collect())
}

/// Eigenvalues and unit eigenvectors (columns) of a real square matrix.
pub fn eigen(a: &DMatrix<f64>) -> Result<(Vec<Complex64>, CMatrix)> {
    let (u, t) = complex_schur(a)?;
    let n = t.nrows();
    let scale = t.iter().map(|z| z.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let mut y = CMatrix::zeros(n, n);
    for k in 0..n {
        let lambda = t[(k, k)];
        y[(k, k)] = Complex64::new(1.0, 0.0);
        for i in (0..k).rev() {
            let mut s = t[(i, k)];
            for j in (i + 1)..k {
                s += t[(i, j)] * y[(j, k)];
            }
            let mut d = t[(i, i)] - lambda;
            if d.norm() < 1e-14 * scale {
                d = Complex64::new(1e-14 * scale, 0.0);
            }
            y[(i, k)] = -s / d;
        }
    }
    let mut x = &u * y;
    for k in 0..n {
        let nrm = x.column(k).iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        x.column_mut(k).iter_mut().for_each(|z| *z /= nrm);
    }
    Ok(((0..n).map(|i| t[(i, i)]).collect(), x))
}

/// Real block diagonalization `A = R Λ R⁻¹`.
///
/// Real eigenvalues give 1×1 blocks. A complex pair `a ± ib` (b > 0) with
/// eigenvector `x + iy` gives columns `[x, y]` of `R` and the block
/// `[[a, b], [−b, a]]`. Blocks are ordered by ascending real part, then
/// ascending imaginary magnitude. Also returns the eigenvalues in that
/// order (one entry per eigenvalue, conjugates included).
pub fn real_block_diagonalize(
    a: &DMatrix<f64>,
) -> Result<(DMatrix<f64>, DMatrix<f64>, Vec<Complex64>)> {
    let n = a.nrows();
    let (vals, vecs) = eigen(a)?;
    let scale = vals.iter().map(|z| z.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let imag_tol = 1e-10 * scale;
    // pick representatives: real eigenvalues and the b > 0 member of each pair
    let mut picks: Vec<(Complex64, usize)> = Vec::new();
    for (k, z) in vals.iter().enumerate() {
        if z.im.abs() <= imag_tol || z.im > 0.0 {
            picks.push((*z, k));
        }
    }
    picks.sort_by(|(p, _), (q, _)| {
        p.re.partial_cmp(&q.re)
            .unwrap()
            .then(p.im.abs().partial_cmp(&q.im.abs()).unwrap())
    });
    let mut r = DMatrix::zeros(n, n);
    let mut lam = DMatrix::zeros(n, n);
    let mut ordered = Vec::with_capacity(n);
    let mut col = 0;
    for (z, k) in picks {
        let v = vecs.column(k);
        if z.im.abs() <= imag_tol {
            // rotate the phase so the vector is (numerically) real
            let pivot = v.iter().copied().max_by(|p, q| p.norm().partial_cmp(&q.norm()).unwrap()).unwrap();
            let phase = pivot.conj() / pivot.norm();
            if col >= n {
                return Err(Error::Singular("eigenvalue bookkeeping failed".into()));
            }
            for i in 0..n {
                r[(i, col)] = (v[i] * phase).re;
            }
            lam[(col, col)] = z.re;
            ordered.push(Complex64::new(z.re, 0.0));
            col += 1;
        } else {
            if col + 1 >= n {
                return Err(Error::Singular("unpaired complex eigenvalue".into()));
            }
            for i in 0..n {
                r[(i, col)] = v[i].re;
                r[(i, col + 1)] = v[i].im;
            }
            lam[(col, col)] = z.re;
            lam[(col, col + 1)] = z.im;
            lam[(col + 1, col)] = -z.im;
            lam[(col + 1, col + 1)] = z.re;
            ordered.push(z);
            ordered.push(z.conj());
            col += 2;
        }
    }
    if col != n {
        return Err(Error::Singular("eigenvalues do not pair up".into()));
    }
    let svd = r.clone().svd(false, false);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if smin <= 1e-10 * smax {
        return Err(Error::Singular("reduced matrix is not diagonalizable".into()));
    }
    Ok((r, lam, ordered))
}

/// Solve `A X + X Aᵀ + Q = 0` for real `A`, `Q` by complex Bartels–Stewart.
///
/// Fails when `A` has eigenvalues `λ_i + conj(λ_j) ≈ 0`.
pub fn lyapunov(a: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let (u, t) = complex_schur(a)?;
    let c = -(u.adjoint() * to_complex(q) * &u);
    let mut x = CMatrix::zeros(n, n);
    let scale = t.iter().map(|z| z.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    for j in (0..n).rev() {
        let mut rhs: Vec<Complex64> = (0..n).map(|i| c[(i, j)]).collect();
        for k in (j + 1)..n {
            let f = t[(j, k)].conj();
            for i in 0..n {
                rhs[i] -= f * x[(i, k)];
            }
        }
        let shift = t[(j, j)].conj();
        for i in (0..n).rev() {
            let mut s = rhs[i];
            for l in (i + 1)..n {
                s -= t[(i, l)] * x[(l, j)];
            }
            let d = t[(i, i)] + shift;
            if d.norm() <= 1e-13 * scale {
                return Err(Error::Singular("Lyapunov operator is singular".into()));
            }
            x[(i, j)] = s / d;
        }
    }
    let full = &u * x * u.adjoint();
    let real = full.map(|z| z.re);
    Ok((&real + real.transpose()) * 0.5)
}

/// Solve a small dense square system.
pub fn solve(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    a.clone()
        .lu()
        .solve(b)
        .ok_or_else(|| Error::Singular("dense LU solve".into()))
}

/// Numerical rank via singular values relative to the largest.
pub fn rank(a: &DMatrix<f64>, tol: f64) -> usize {
    if a.is_empty() {
        return 0;
    }
    let sv = a.clone().svd(false, false).singular_values;
    let smax = sv.max();
    sv.iter().filter(|s| **s > tol * smax).count()
}
