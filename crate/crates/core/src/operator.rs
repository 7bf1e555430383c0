//! Matrix-free operator abstraction shared by GMRES, preconditioners and
//! Kronecker-structured coefficient operators.

use nalgebra::DMatrix;

/// A square linear map applied only through vector products.
pub trait LinearOperator: Sync {
    fn dim(&self) -> usize;

    /// `y = op(x)`. Both slices have length [`LinearOperator::dim`].
    fn apply_into(&self, x: &[f64], y: &mut [f64]);

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.dim()];
        self.apply_into(x, &mut y);
        y
    }
}

/// The identity map, used as the "no preconditioner" case.
#[derive(Debug, Clone, Copy)]
pub struct Identity(pub usize);

impl LinearOperator for Identity {
    fn dim(&self) -> usize {
        self.0
    }

    fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        y.copy_from_slice(x);
    }
}

/// A small dense square operator. Used for oracles and validation.
#[derive(Debug, Clone)]
pub struct DenseOperator(pub DMatrix<f64>);

impl LinearOperator for DenseOperator {
    fn dim(&self) -> usize {
        self.0.nrows()
    }

    fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        let m = &self.0;
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = (0..m.ncols()).map(|j| m[(i, j)] * x[j]).sum();
        }
    }
}

impl<T: LinearOperator + ?Sized> LinearOperator for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        (**self).apply_into(x, y)
    }
}

/// Materialize an operator column by column. Only sensible for small `dim`.
pub fn to_dense(op: &dyn LinearOperator) -> DMatrix<f64> {
    let n = op.dim();
    let mut out = DMatrix::zeros(n, n);
    let mut e = vec![0.0; n];
    let mut col = vec![0.0; n];
    for j in 0..n {
        e[j] = 1.0;
        op.apply_into(&e, &mut col);
        out.column_mut(j).copy_from_slice(&col);
        e[j] = 0.0;
    }
    out
}
