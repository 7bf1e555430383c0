//! Sparse approximate inverses by Frobenius-norm minimization.
//!
//! `min_P ‖I − A P‖_F²` splits into one independent least-squares problem
//! per column, `min ‖eₖ − A pₖ‖₂` with `pₖ` restricted to a sparsity
//! pattern. Each column problem only involves the rows of `A` touched by the
//! pattern columns, so it reduces to a tiny dense QR.
//!
//! The same machinery solves the preconditioner update problem
//! `min_Q ‖A_prev − A_new Q‖_F` by swapping the unit right-hand sides for
//! columns of `A_prev` (see [`crate::chain::update_build`]).

use rayon::prelude::*;

use crate::dense::lstsq;
use crate::error::{Error, Result};
use crate::sparse::SparseMatrix;

/// Initial sparsity pattern for each column of the approximate inverse.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PatternKind {
    /// Only the diagonal entry.
    Diagonal,
    /// Structure of the matching column of `A`, plus the diagonal.
    PatternOfA,
    /// Structure of the matching column of `Aᵏ`, plus the diagonal.
    PatternOfAPowK(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpaiConfig {
    pub pattern: PatternKind,
    /// Columns whose residual exceeds `fill_tol · ‖rhs‖` are augmented.
    pub fill_tol: f64,
    pub max_fill_per_col: usize,
    /// Number of augmentation rounds; each adds at most one index.
    pub max_pattern_sweeps: usize,
}

impl Default for SpaiConfig {
    fn default() -> Self {
        SpaiConfig {
            pattern: PatternKind::PatternOfA,
            fill_tol: 1e-4,
            max_fill_per_col: 50,
            max_pattern_sweeps: 3,
        }
    }
}

impl SpaiConfig {
    /// Same pattern and limits, no adaptive augmentation.
    pub fn static_pattern(self) -> Self {
        SpaiConfig {
            max_pattern_sweeps: 0,
            ..self
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fill_tol > 0.0) {
            return Err(Error::InvalidArgument("fill_tol must be positive".into()));
        }
        if self.max_fill_per_col == 0 {
            return Err(Error::InvalidArgument("max_fill_per_col must be at least 1".into()));
        }
        if let PatternKind::PatternOfAPowK(0) = self.pattern {
            return Err(Error::InvalidArgument("pattern power must be at least 1".into()));
        }
        Ok(())
    }
}

/// One solved column of an approximate inverse or update factor.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnSolution {
    /// Row indices of the stored entries, ascending.
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
    /// `‖rhs − A p‖₂` for this column.
    pub residual: f64,
    /// Set when the local block was rank deficient and a fallback was used.
    pub fallback: bool,
}

/// Result of a column-wise Frobenius minimization.
#[derive(Debug, Clone)]
pub struct SpaiOutput {
    pub matrix: SparseMatrix,
    pub column_residuals: Vec<f64>,
    pub fallback_columns: Vec<usize>,
}

impl SpaiOutput {
    /// Objective value `‖Target − A P‖_F` at the computed minimizer.
    pub fn frobenius_residual(&self) -> f64 {
        self.column_residuals.iter().map(|r| r * r).sum::<f64>().sqrt()
    }
}

/// Right-hand sides of the column problems.
#[derive(Debug, Clone, Copy)]
pub(crate) enum Target<'a> {
    Identity,
    Matrix(&'a SparseMatrix),
}

impl Target<'_> {
    fn column(&self, k: usize) -> (Vec<usize>, Vec<f64>) {
        match self {
            Target::Identity => (vec![k], vec![1.0]),
            Target::Matrix(m) => {
                let (rows, vals) = m.columns().column(k);
                (rows.to_vec(), vals.to_vec())
            }
        }
    }
}

/// Build `P ≈ A⁻¹` minimizing `‖I − A P‖_F` over the configured pattern.
pub fn spai_build(a: &SparseMatrix, cfg: &SpaiConfig) -> Result<SpaiOutput> {
    if !a.is_square() {
        return Err(Error::dim("spai_build (square)", a.nrows(), a.ncols()));
    }
    minimize_columns(a, Target::Identity, cfg)
}

/// Solve one column problem `min ‖eₖ − A p‖₂` on a fixed pattern.
pub fn spai_column_solve(a: &SparseMatrix, col: usize, pattern: &[usize]) -> Result<ColumnSolution> {
    if col >= a.ncols() {
        return Err(Error::InvalidArgument(format!("column {col} out of range")));
    }
    let (rows, vals) = Target::Identity.column(col);
    solve_on_pattern(a, col, &rows, &vals, pattern, Target::Identity)
}

/// Initial pattern of column `k` for the given kind.
pub fn initial_pattern(a: &SparseMatrix, k: usize, kind: PatternKind) -> Vec<usize> {
    let depth = match kind {
        PatternKind::Diagonal => return vec![k],
        PatternKind::PatternOfA => 1,
        PatternKind::PatternOfAPowK(p) => p,
    };
    let view = a.columns();
    let mut set = vec![k];
    let mut frontier = vec![k];
    for _ in 0..depth {
        let mut next = Vec::new();
        for &j in &frontier {
            for &i in view.column(j).0 {
                next.push(i);
            }
        }
        next.sort_unstable();
        next.dedup();
        next.retain(|i| set.binary_search(i).is_err());
        set.extend_from_slice(&next);
        set.sort_unstable();
        frontier = next;
    }
    set
}

pub(crate) fn minimize_columns(a: &SparseMatrix, target: Target<'_>, cfg: &SpaiConfig) -> Result<SpaiOutput> {
    cfg.validate()?;
    let n = a.ncols();
    if let Target::Matrix(m) = target {
        if m.nrows() != a.nrows() || m.ncols() != n {
            return Err(Error::dim("column minimization target", n, m.ncols()));
        }
    }
    // build the shadow once before fanning out
    a.columns();
    if let Target::Matrix(m) = target {
        m.columns();
    }
    let columns: Vec<ColumnSolution> = (0..n)
        .into_par_iter()
        .map(|k| adaptive_column(a, k, target, cfg))
        .collect::<Result<_>>()?;

    let mut trips = Vec::new();
    let mut column_residuals = Vec::with_capacity(n);
    let mut fallback_columns = Vec::new();
    for (k, col) in columns.into_iter().enumerate() {
        trips.extend(col.indices.iter().zip(&col.values).map(|(&i, &v)| (i, k, v)));
        column_residuals.push(col.residual);
        if col.fallback {
            fallback_columns.push(k);
        }
    }
    if !fallback_columns.is_empty() {
        log::warn!(
            "{} column(s) fell back to a diagonal entry (rank-deficient local block)",
            fallback_columns.len()
        );
    }
    Ok(SpaiOutput {
        matrix: SparseMatrix::from_triplets(n, n, trips)?,
        column_residuals,
        fallback_columns,
    })
}

fn adaptive_column(a: &SparseMatrix, k: usize, target: Target<'_>, cfg: &SpaiConfig) -> Result<ColumnSolution> {
    let (rhs_rows, rhs_vals) = target.column(k);
    let rhs_norm = rhs_vals.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut pattern = initial_pattern(a, k, cfg.pattern);
    let mut best = solve_on_pattern(a, k, &rhs_rows, &rhs_vals, &pattern, target)?;
    if best.fallback {
        return Ok(best);
    }
    let view = a.columns();
    for _ in 0..cfg.max_pattern_sweeps {
        if best.residual <= cfg.fill_tol * rhs_norm || pattern.len() >= cfg.max_fill_per_col {
            break;
        }
        let residual = residual_vector(a, &best, &rhs_rows, &rhs_vals);
        // largest residual row not yet in the pattern; lowest index on ties
        let candidate = residual
            .iter()
            .filter(|(i, _)| !pattern.contains(i) && !view.column(*i).0.is_empty())
            .fold(None::<(usize, f64)>, |acc, &(i, r)| match acc {
                Some((_, best_r)) if r.abs() <= best_r => acc,
                _ => Some((i, r.abs())),
            });
        let Some((idx, mag)) = candidate else { break };
        if mag == 0.0 {
            break;
        }
        pattern.push(idx);
        let trial = solve_on_pattern(a, k, &rhs_rows, &rhs_vals, &pattern, target)?;
        if trial.fallback {
            pattern.pop();
            break;
        }
        best = trial;
    }
    Ok(best)
}

/// Sparse residual `rhs − A p` as sorted `(row, value)` pairs.
fn residual_vector(a: &SparseMatrix, sol: &ColumnSolution, rhs_rows: &[usize], rhs_vals: &[f64]) -> Vec<(usize, f64)> {
    let view = a.columns();
    let mut entries: Vec<(usize, f64)> = rhs_rows.iter().copied().zip(rhs_vals.iter().copied()).collect();
    for (&j, &pj) in sol.indices.iter().zip(&sol.values) {
        let (rows, vals) = view.column(j);
        entries.extend(rows.iter().zip(vals).map(|(&i, &v)| (i, -v * pj)));
    }
    entries.sort_by_key(|e| e.0);
    let mut out: Vec<(usize, f64)> = Vec::with_capacity(entries.len());
    for (i, v) in entries {
        match out.last_mut() {
            Some(last) if last.0 == i => last.1 += v,
            _ => out.push((i, v)),
        }
    }
    out
}

fn solve_on_pattern(
    a: &SparseMatrix,
    k: usize,
    rhs_rows: &[usize],
    rhs_vals: &[f64],
    pattern: &[usize],
    target: Target<'_>,
) -> Result<ColumnSolution> {
    let (block, rows) = a.extract_column_submatrix(pattern)?;
    let mut b = vec![0.0; rows.len()];
    let mut outside = 0.0;
    for (&i, &v) in rhs_rows.iter().zip(rhs_vals) {
        match rows.binary_search(&i) {
            Ok(pos) => b[pos] = v,
            Err(_) => outside += v * v,
        }
    }
    match lstsq(&block, &b) {
        Some((x, res)) => {
            let mut entries: Vec<(usize, f64)> = pattern.iter().copied().zip(x).collect();
            entries.sort_by_key(|e| e.0);
            Ok(ColumnSolution {
                indices: entries.iter().map(|e| e.0).collect(),
                values: entries.iter().map(|e| e.1).collect(),
                residual: (res * res + outside).sqrt(),
                fallback: false,
            })
        }
        None => Ok(fallback_column(a, k, rhs_rows, rhs_vals, target)),
    }
}

fn fallback_column(a: &SparseMatrix, k: usize, rhs_rows: &[usize], rhs_vals: &[f64], target: Target<'_>) -> ColumnSolution {
    let value = match target {
        Target::Identity => {
            let akk = a.get(k, k);
            if akk != 0.0 { 1.0 / akk } else { 1.0 }
        }
        // unit column keeps the update no worse than reusing as-is
        Target::Matrix(_) => 1.0,
    };
    let mut sol = ColumnSolution {
        indices: vec![k],
        values: vec![value],
        residual: 0.0,
        fallback: true,
    };
    sol.residual = residual_vector(a, &sol, rhs_rows, rhs_vals)
        .iter()
        .map(|(_, v)| v * v)
        .sum::<f64>()
        .sqrt();
    sol
}
