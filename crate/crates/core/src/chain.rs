//! Cheap preconditioner updates and the factor chains that carry them.
//!
//! Given a good preconditioner `P_prev` for `A_prev`, the next matrix
//! `A_new` gets `P_new = Q P_prev` where `Q` solves
//!
//! ```text
//! min_Q ‖A_prev − A_new Q‖_F
//! ```
//!
//! column by column, exactly like a sparse approximate inverse but with the
//! columns of `A_prev` as right-hand sides. Enforcing `A_new Q P_prev ≈
//! A_prev P_prev` keeps the preconditioned spectrum close to the one that
//! already worked.
//!
//! `P_new` is never multiplied out. A [`PrecondChain`] holds the base
//! approximate inverse plus the ordered update factors and applies them as
//! successive sparse products, base first and newest factor last. Chains are
//! persistent: extending one returns a new chain that shares every existing
//! factor with the old one.

use std::sync::Arc;
use std::time::Instant;

use nalgebra::DMatrix;

use crate::dense::solve;
use crate::error::{Error, Result};
use crate::operator::{DenseOperator, LinearOperator};
use crate::spai::{minimize_columns, SpaiConfig, Target};
use crate::sparse::SparseMatrix;

/// Which neighbour an update links to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// Same sweep, previous expansion point.
    Horizontal,
    /// Same expansion-point slot, previous sweep.
    Vertical,
}

impl Direction {
    pub fn as_str(&self) -> &'static str {
        match self {
            Direction::Horizontal => "horizontal",
            Direction::Vertical => "vertical",
        }
    }
}

/// `(sweep, point)` coordinate of a linear system in a reduction run.
pub type SystemIndex = (usize, usize);

#[derive(Debug, Clone)]
pub struct UpdateFactor {
    pub q: SparseMatrix,
    pub direction: Direction,
    pub from_index: SystemIndex,
    pub to_index: SystemIndex,
    /// `‖A_prev − A_new Q‖_F` at the computed minimizer.
    pub min_residual: f64,
    /// `‖A_prev − A_new‖_F`, the objective value at `Q = I`.
    pub identity_residual: f64,
    pub build_seconds: f64,
}

impl UpdateFactor {
    pub fn with_link(mut self, direction: Direction, from: SystemIndex, to: SystemIndex) -> Self {
        self.direction = direction;
        self.from_index = from;
        self.to_index = to;
        self
    }
}

/// Solve `min_Q ‖A_prev − A_new Q‖_F` over the pattern chosen by `cfg`
/// (the pattern is taken from `A_new` and always includes the diagonal, so
/// `Q = I` is feasible).
///
/// The returned factor is tagged as a horizontal `(0,0) → (0,0)` link; use
/// [`UpdateFactor::with_link`] to record where it sits in a run.
pub fn update_build(a_prev: &SparseMatrix, a_new: &SparseMatrix, cfg: &SpaiConfig) -> Result<UpdateFactor> {
    if !a_prev.is_square() || !a_new.is_square() {
        return Err(Error::InvalidArgument("update_build needs square matrices".into()));
    }
    if a_prev.nrows() != a_new.nrows() {
        return Err(Error::dim("update_build", a_prev.nrows(), a_new.nrows()));
    }
    let start = Instant::now();
    let out = minimize_columns(a_new, Target::Matrix(a_prev), cfg)?;
    let min_residual = out.frobenius_residual();
    let identity_residual = a_prev.add_scaled(1.0, a_new, -1.0)?.frobenius_norm();
    Ok(UpdateFactor {
        q: out.matrix,
        direction: Direction::Horizontal,
        from_index: (0, 0),
        to_index: (0, 0),
        min_residual,
        identity_residual,
        build_seconds: start.elapsed().as_secs_f64(),
    })
}

/// A base approximate inverse followed by update factors, applied as
/// `Q_last ⋯ Q_first · base`.
#[derive(Debug, Clone)]
pub struct PrecondChain {
    base: Arc<SparseMatrix>,
    updates: Vec<Arc<UpdateFactor>>,
    pub total_build_seconds: f64,
}

impl PrecondChain {
    pub fn new(base: SparseMatrix, build_seconds: f64) -> Result<Self> {
        if !base.is_square() {
            return Err(Error::dim("chain base (square)", base.nrows(), base.ncols()));
        }
        Ok(PrecondChain {
            base: Arc::new(base),
            updates: Vec::new(),
            total_build_seconds: build_seconds,
        })
    }

    pub fn base(&self) -> &SparseMatrix {
        &self.base
    }

    pub fn updates(&self) -> &[Arc<UpdateFactor>] {
        &self.updates
    }

    pub fn len(&self) -> usize {
        self.updates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.updates.is_empty()
    }

    /// Stored entries across the base and all factors; one application costs
    /// this many multiply-adds.
    pub fn nnz(&self) -> usize {
        self.base.nnz() + self.updates.iter().map(|u| u.q.nnz()).sum::<usize>()
    }

    /// New chain whose application is `Q · (self applied)`. `self` is left
    /// untouched and shares its factors with the result.
    pub fn chain_extend(&self, factor: UpdateFactor) -> Result<PrecondChain> {
        let n = self.base.nrows();
        if factor.q.nrows() != n || factor.q.ncols() != n {
            return Err(Error::dim("chain_extend", n, factor.q.nrows()));
        }
        let mut updates = self.updates.clone();
        let secs = factor.build_seconds;
        updates.push(Arc::new(factor));
        Ok(PrecondChain {
            base: Arc::clone(&self.base),
            updates,
            total_build_seconds: self.total_build_seconds + secs,
        })
    }

    /// Checked application.
    pub fn chain_apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        let n = self.dim();
        if x.len() != n {
            return Err(Error::dim("chain_apply", n, x.len()));
        }
        Ok(self.apply(x))
    }
}

impl LinearOperator for PrecondChain {
    fn dim(&self) -> usize {
        self.base.nrows()
    }

    fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        self.base.matvec_into(x, y);
        if self.updates.is_empty() {
            return;
        }
        let mut tmp = vec![0.0; y.len()];
        for f in &self.updates {
            tmp.copy_from_slice(y);
            f.q.matvec_into(&tmp, y);
        }
    }
}

/// Closed-form update for shifted pencils `A(σ) = σ D − K`:
/// `Q = (I + (σ_new − σ_prev) A_prev⁻¹ D)⁻¹`, which satisfies
/// `A_new Q = A_prev` exactly.
///
/// `prev_inv_d` applies `A_prev⁻¹ D`. The operator is materialized densely,
/// so this is a validation oracle for small instances only.
pub fn closed_form_update_qb(
    prev_inv_d: &dyn LinearOperator,
    sigma_prev: f64,
    sigma_new: f64,
) -> Result<DenseOperator> {
    let n = prev_inv_d.dim();
    let delta = sigma_new - sigma_prev;
    if delta == 0.0 {
        return Ok(DenseOperator(DMatrix::identity(n, n)));
    }
    let inner = DMatrix::identity(n, n) + crate::operator::to_dense(prev_inv_d) * delta;
    let inv = solve(&inner, &DMatrix::identity(n, n))
        .map_err(|_| Error::Singular("I + (σ_new − σ_prev) A_prev⁻¹ D".into()))?;
    if inv.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular("I + (σ_new − σ_prev) A_prev⁻¹ D".into()));
    }
    Ok(DenseOperator(inv))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spai::PatternKind;

    fn full_cfg() -> SpaiConfig {
        SpaiConfig {
            pattern: PatternKind::PatternOfAPowK(8),
            ..Default::default()
        }
        .static_pattern()
    }

    #[test]
    fn same_matrix_gives_identity() {
        let a = SparseMatrix::from_triplets(3, 3, [(0, 0, 2.0), (0, 1, 1.0), (1, 1, 3.0), (2, 1, 1.0), (2, 2, 4.0)])
            .unwrap();
        let f = update_build(&a, &a, &SpaiConfig::default()).unwrap();
        assert!((f.q.to_dense() - DMatrix::identity(3, 3)).norm() < 1e-14);
        assert!(f.min_residual < 1e-14);
    }

    #[test]
    fn scaled_identity_update() {
        let f = update_build(&SparseMatrix::identity(3), &SparseMatrix::identity(3).scale(2.0), &full_cfg()).unwrap();
        assert!((f.q.to_dense() - DMatrix::identity(3, 3) * 0.5).norm() < 1e-15);
    }

    #[test]
    fn empty_chain_is_base() {
        let chain = PrecondChain::new(SparseMatrix::identity(2), 0.0).unwrap();
        assert_eq!(chain.chain_apply(&[1.0, -2.0]).unwrap(), vec![1.0, -2.0]);
    }

    #[test]
    fn one_by_one_chain() {
        let chain = PrecondChain::new(SparseMatrix::from_diagonal(&[2.0]), 0.0).unwrap();
        let f = update_build(&SparseMatrix::identity(1), &SparseMatrix::identity(1), &full_cfg()).unwrap();
        let f = UpdateFactor {
            q: SparseMatrix::from_diagonal(&[3.0]),
            ..f
        };
        let ext = chain.chain_extend(f).unwrap();
        assert_eq!(ext.chain_apply(&[1.0]).unwrap(), vec![6.0]);
        // the original is untouched
        assert_eq!(chain.chain_apply(&[1.0]).unwrap(), vec![2.0]);
        assert_eq!(ext.len(), 1);
    }

    #[test]
    fn extend_rejects_wrong_size() {
        let chain = PrecondChain::new(SparseMatrix::identity(2), 0.0).unwrap();
        let f = update_build(&SparseMatrix::identity(3), &SparseMatrix::identity(3), &full_cfg()).unwrap();
        assert!(chain.chain_extend(f).is_err());
        assert!(chain.chain_apply(&[1.0]).is_err());
    }

    #[test]
    fn closed_form_zero_shift_is_identity() {
        let op = closed_form_update_qb(&DenseOperator(DMatrix::from_element(2, 2, 3.0)), 1.5, 1.5).unwrap();
        assert_eq!(op.0, DMatrix::identity(2, 2));
    }

    #[test]
    fn closed_form_detects_singularity() {
        // A_prev⁻¹D = −I and δ = 1 makes I + δ A_prev⁻¹D vanish
        let op = DenseOperator(-DMatrix::identity(2, 2));
        assert!(closed_form_update_qb(&op, 0.0, 1.0).is_err());
    }
}
