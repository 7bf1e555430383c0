//! Kronecker-structured coefficient operators of the form
//!
//! ```text
//! L = −Λ ⊗ Iₙ − I_r ⊗ K − Σⱼ Ňⱼᵀ ⊗ Nⱼ
//! ```
//!
//! acting on `vec(X)` for an `n × r` matrix `X` stored column-major. The
//! big `n·r × n·r` matrix is never formed by [`KroneckerOperator::apply_into`];
//! the identity `(Bᵀ ⊗ A) vec(X) = vec(A X B)` turns the action into
//!
//! ```text
//! L vec(X) = vec(−X Λᵀ − K X − Σⱼ Nⱼ X Ňⱼ)
//! ```
//!
//! `Λ` is a small dense `r × r` matrix. It is diagonal when the reduced
//! matrix has real eigenvalues and block diagonal (2×2 rotation-scaling
//! blocks) when complex-conjugate pairs are kept in real form.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::operator::LinearOperator;
use crate::sparse::SparseMatrix;

/// Default cap on the number of nonzeros produced by explicit assembly.
pub const DEFAULT_ASSEMBLY_CAP: usize = 200_000;

#[derive(Debug, Clone)]
pub struct KroneckerOperator {
    /// `Λ` (`r × r`); the operator applies `−Λ ⊗ Iₙ`.
    pub shift: DMatrix<f64>,
    /// `K` (`n × n`).
    pub base: SparseMatrix,
    /// Pairs `(Ňⱼ, Nⱼ)`; each contributes `−Ňⱼᵀ ⊗ Nⱼ`.
    pub couplers: Vec<(DMatrix<f64>, SparseMatrix)>,
}

impl KroneckerOperator {
    pub fn new(
        shift: DMatrix<f64>,
        base: SparseMatrix,
        couplers: Vec<(DMatrix<f64>, SparseMatrix)>,
    ) -> Result<Self> {
        let r = shift.nrows();
        if shift.ncols() != r {
            return Err(Error::dim("kronecker shift (square)", r, shift.ncols()));
        }
        if !base.is_square() {
            return Err(Error::dim("kronecker base (square)", base.nrows(), base.ncols()));
        }
        let n = base.nrows();
        for (small, big) in &couplers {
            if small.nrows() != r || small.ncols() != r {
                return Err(Error::dim("kronecker coupler (small)", r, small.nrows()));
            }
            if big.nrows() != n || big.ncols() != n {
                return Err(Error::dim("kronecker coupler (large)", n, big.nrows()));
            }
        }
        Ok(KroneckerOperator {
            shift,
            base,
            couplers,
        })
    }

    /// Operator with a diagonal `Λ = diag(shifts)`.
    pub fn with_diagonal_shifts(
        shifts: &[f64],
        base: SparseMatrix,
        couplers: Vec<(DMatrix<f64>, SparseMatrix)>,
    ) -> Result<Self> {
        let shift = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(shifts));
        Self::new(shift, base, couplers)
    }

    pub fn n(&self) -> usize {
        self.base.nrows()
    }

    pub fn r(&self) -> usize {
        self.shift.nrows()
    }

    /// Checked application, `L v`.
    pub fn kron_matvec(&self, v: &[f64]) -> Result<Vec<f64>> {
        let dim = self.dim();
        if v.len() != dim {
            return Err(Error::dim("kron_matvec", dim, v.len()));
        }
        Ok(self.apply(v))
    }

    /// Explicit sparse form of the operator, refusing to build anything
    /// with more than `cap` stored entries.
    pub fn assemble_explicit(&self, cap: usize) -> Result<SparseMatrix> {
        let (n, r) = (self.n(), self.r());
        let shift_nnz = self.shift.iter().filter(|v| **v != 0.0).count();
        let coupler_nnz: usize = self
            .couplers
            .iter()
            .map(|(s, big)| s.iter().filter(|v| **v != 0.0).count() * big.nnz())
            .sum();
        let estimate = shift_nnz * n + r * self.base.nnz() + coupler_nnz;
        if estimate > cap {
            return Err(Error::AssemblyCap {
                needed: estimate,
                cap,
            });
        }
        let mut trips = Vec::with_capacity(estimate);
        // block (k, l) = −Λ[k,l] I − δ_kl K − Σ_j Ň_j[l,k] N_j
        for k in 0..r {
            for l in 0..r {
                let s = self.shift[(k, l)];
                if s != 0.0 {
                    trips.extend((0..n).map(|i| (k * n + i, l * n + i, -s)));
                }
            }
            trips.extend(
                self.base
                    .triplets()
                    .map(|(i, j, v)| (k * n + i, k * n + j, -v)),
            );
            for (small, big) in &self.couplers {
                for l in 0..r {
                    let c = small[(l, k)];
                    if c != 0.0 {
                        trips.extend(big.triplets().map(|(i, j, v)| (k * n + i, l * n + j, -c * v)));
                    }
                }
            }
        }
        SparseMatrix::from_triplets(n * r, n * r, trips)
    }
}

impl LinearOperator for KroneckerOperator {
    fn dim(&self) -> usize {
        self.n() * self.r()
    }

    fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        let (n, r) = (self.n(), self.r());
        // −K X, column by column
        for k in 0..r {
            let yk = &mut y[k * n..(k + 1) * n];
            self.base.matvec_into(&x[k * n..(k + 1) * n], yk);
            yk.iter_mut().for_each(|v| *v = -*v);
        }
        // −X Λᵀ: column k gets −Σ_l Λ[k,l] X[:,l]
        for k in 0..r {
            for l in 0..r {
                let s = self.shift[(k, l)];
                if s == 0.0 {
                    continue;
                }
                let (yk, xl) = (k * n, l * n);
                for i in 0..n {
                    y[yk + i] -= s * x[xl + i];
                }
            }
        }
        // −N X Ň: column k gets −Σ_l Ň[l,k] (N X[:,l])
        let mut nx = vec![0.0; n];
        for (small, big) in &self.couplers {
            for l in 0..r {
                if (0..r).all(|k| small[(l, k)] == 0.0) {
                    continue;
                }
                big.matvec_into(&x[l * n..(l + 1) * n], &mut nx);
                for k in 0..r {
                    let c = small[(l, k)];
                    if c == 0.0 {
                        continue;
                    }
                    for i in 0..n {
                        y[k * n + i] -= c * nx[i];
                    }
                }
            }
        }
    }
}

/// Dense `A ⊗ B`. Test and oracle helper.
pub fn dense_kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let (ar, ac, br, bc) = (a.nrows(), a.ncols(), b.nrows(), b.ncols());
    DMatrix::from_fn(ar * br, ac * bc, |i, j| a[(i / br, j / bc)] * b[(i % br, j % bc)])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense_assembly(op: &KroneckerOperator) -> DMatrix<f64> {
        let n = op.n();
        let r = op.r();
        let mut out = -dense_kron(&op.shift, &DMatrix::identity(n, n))
            - dense_kron(&DMatrix::identity(r, r), &op.base.to_dense());
        for (small, big) in &op.couplers {
            out -= dense_kron(&small.transpose(), &big.to_dense());
        }
        out
    }

    #[test]
    fn r_one_collapses_to_shifted_base() {
        let k = SparseMatrix::from_triplets(2, 2, [(0, 0, 2.0), (0, 1, 1.0), (1, 1, 3.0)]).unwrap();
        let op = KroneckerOperator::with_diagonal_shifts(&[0.5], k.clone(), vec![]).unwrap();
        let v = [1.0, -2.0];
        let expected: Vec<f64> = k
            .matvec(&v)
            .unwrap()
            .iter()
            .zip(v)
            .map(|(kv, vi)| -0.5 * vi - kv)
            .collect();
        assert_eq!(op.kron_matvec(&v).unwrap(), expected);
    }

    #[test]
    fn kron_identity_on_two_by_two() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let b = DMatrix::from_row_slice(2, 2, &[0.5, -1.0, 2.0, 1.5]);
        let x = DMatrix::from_row_slice(2, 2, &[1.0, -1.0, 2.0, 0.25]);
        let lhs = dense_kron(&b.transpose(), &a) * nalgebra::DVector::from_column_slice(x.as_slice());
        let rhs = &a * &x * &b;
        assert!((lhs - nalgebra::DVector::from_column_slice(rhs.as_slice())).norm() < 1e-14);
    }

    #[test]
    fn matches_dense_with_coupler() {
        let k = SparseMatrix::from_triplets(
            3,
            3,
            [(0, 0, -2.0), (0, 1, 1.0), (1, 1, -3.0), (2, 0, 0.5), (2, 2, -1.0)],
        )
        .unwrap();
        let nmat = SparseMatrix::from_triplets(3, 3, [(0, 2, 0.3), (1, 0, -0.2), (2, 2, 0.1)]).unwrap();
        let nred = DMatrix::from_row_slice(2, 2, &[0.1, 0.2, -0.3, 0.4]);
        let op = KroneckerOperator::with_diagonal_shifts(&[-1.0, -2.0], k, vec![(nred, nmat)]).unwrap();
        let v: Vec<f64> = (0..6).map(|i| (i as f64 * 0.7).sin()).collect();
        let got = op.kron_matvec(&v).unwrap();
        let want = dense_assembly(&op) * nalgebra::DVector::from_column_slice(&v);
        for (g, w) in got.iter().zip(want.iter()) {
            assert!((g - w).abs() < 1e-13);
        }
        let explicit = op.assemble_explicit(DEFAULT_ASSEMBLY_CAP).unwrap().to_dense();
        assert!((explicit - dense_assembly(&op)).norm() < 1e-13);
    }

    #[test]
    fn block_diagonal_without_couplers() {
        let k = SparseMatrix::from_diagonal(&[1.0, 2.0, 3.0]);
        let op = KroneckerOperator::with_diagonal_shifts(&[-1.0, -5.0], k, vec![]).unwrap();
        let e = op.assemble_explicit(DEFAULT_ASSEMBLY_CAP).unwrap().to_dense();
        for i in 0..3 {
            assert_eq!(e[(i, i)], 1.0 - (i as f64 + 1.0));
            assert_eq!(e[(3 + i, 3 + i)], 5.0 - (i as f64 + 1.0));
            assert_eq!(e[(i, 3 + i)], 0.0);
        }
    }

    #[test]
    fn rejects_bad_dimensions() {
        let k = SparseMatrix::identity(3);
        let op = KroneckerOperator::with_diagonal_shifts(&[1.0, 2.0], k, vec![]).unwrap();
        assert!(op.kron_matvec(&[1.0; 5]).is_err());
        let bad = KroneckerOperator::with_diagonal_shifts(
            &[1.0],
            SparseMatrix::identity(3),
            vec![(DMatrix::zeros(2, 2), SparseMatrix::identity(3))],
        );
        assert!(bad.is_err());
    }

    #[test]
    fn assembly_cap_enforced() {
        let op = KroneckerOperator::with_diagonal_shifts(&[1.0; 4], SparseMatrix::identity(10), vec![])
            .unwrap();
        assert!(matches!(op.assemble_explicit(10), Err(Error::AssemblyCap { .. })));
    }
}
