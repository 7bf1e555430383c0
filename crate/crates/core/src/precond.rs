//! Preconditioner policy shared by the reduction drivers: which systems get a
//! fresh approximate inverse, which get an update factor, and what each
//! choice cost.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use crate::chain::{update_build, Direction, PrecondChain, SystemIndex};
use crate::error::{Error, Result};
use crate::operator::{Identity, LinearOperator};
use crate::spai::{spai_build, SpaiConfig};
use crate::sparse::SparseMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PrecondMode {
    /// Plain GMRES.
    None,
    /// A new approximate inverse for every distinct coefficient matrix.
    FreshSpai,
    /// One approximate inverse, then update factors along the sequence.
    ReuseChain,
}

impl fmt::Display for PrecondMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PrecondMode::None => "none",
            PrecondMode::FreshSpai => "spai",
            PrecondMode::ReuseChain => "reuse",
        })
    }
}

impl FromStr for PrecondMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "none" => Ok(PrecondMode::None),
            "spai" | "fresh" => Ok(PrecondMode::FreshSpai),
            "reuse" | "chain" => Ok(PrecondMode::ReuseChain),
            other => Err(Error::Config(format!(
                "unknown preconditioner mode '{other}' (expected none, spai or reuse)"
            ))),
        }
    }
}

/// How the preconditioner for a system was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PrecondKind {
    None,
    Fresh,
    Horizontal,
    Vertical,
    /// Same coefficient matrix as an earlier solve; nothing rebuilt.
    ReusedSameMatrix,
}

impl PrecondKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            PrecondKind::None => "none",
            PrecondKind::Fresh => "fresh",
            PrecondKind::Horizontal => "horizontal",
            PrecondKind::Vertical => "vertical",
            PrecondKind::ReusedSameMatrix => "reused-same-matrix",
        }
    }
}

impl From<Direction> for PrecondKind {
    fn from(d: Direction) -> Self {
        match d {
            Direction::Horizontal => PrecondKind::Horizontal,
            Direction::Vertical => PrecondKind::Vertical,
        }
    }
}

/// Knobs for [`PrecondBuilder`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReuseConfig {
    /// Configuration of fresh approximate inverses.
    pub spai: SpaiConfig,
    /// Configuration of update factors.
    pub update: SpaiConfig,
    /// A chain longer than this is replaced by a fresh approximate inverse.
    pub max_chain_len: Option<usize>,
    /// Compute `‖I − A P‖_F / ‖I‖_F` for fresh builds (free) in reports.
    pub record_standard_residual: bool,
}

impl Default for ReuseConfig {
    fn default() -> Self {
        let spai = SpaiConfig::default();
        ReuseConfig {
            spai,
            update: spai.static_pattern(),
            max_chain_len: Some(16),
            record_standard_residual: true,
        }
    }
}

/// A built preconditioner (or none) and what it cost.
#[derive(Debug, Clone)]
pub struct Built {
    pub chain: Option<PrecondChain>,
    pub kind: PrecondKind,
    pub seconds: f64,
    /// `‖A_prev − A_new Q‖_F` for updates.
    pub min_residual: Option<f64>,
    /// `‖A_prev − A_new‖_F` for updates.
    pub identity_residual: Option<f64>,
    /// `‖A_prev − A_new‖_F / ‖A_prev‖_F` for updates.
    pub diff_ratio: Option<f64>,
    /// `‖I − A P‖_F / ‖I‖_F` for fresh builds.
    pub standard_residual: Option<f64>,
    /// `‖I − A‖_F / ‖I‖_F` of the matrix being preconditioned.
    pub identity_distance: Option<f64>,
}

impl Built {
    fn none() -> Self {
        Built {
            chain: None,
            kind: PrecondKind::None,
            seconds: 0.0,
            min_residual: None,
            identity_residual: None,
            diff_ratio: None,
            standard_residual: None,
            identity_distance: None,
        }
    }

    /// The operator GMRES should use.
    pub fn operator(&self, n: usize) -> Precond<'_> {
        match &self.chain {
            Some(c) => Precond::Chain(c),
            None => Precond::Identity(Identity(n)),
        }
    }
}

/// Either the identity or a borrowed chain.
pub enum Precond<'a> {
    Identity(Identity),
    Chain(&'a PrecondChain),
}

impl LinearOperator for Precond<'_> {
    fn dim(&self) -> usize {
        match self {
            Precond::Identity(i) => i.dim(),
            Precond::Chain(c) => c.dim(),
        }
    }

    fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        match self {
            Precond::Identity(i) => i.apply_into(x, y),
            Precond::Chain(c) => c.apply_into(x, y),
        }
    }
}

/// Applies a [`PrecondMode`] to a sequence of coefficient matrices.
#[derive(Debug, Clone, Copy)]
pub struct PrecondBuilder {
    pub mode: PrecondMode,
    pub cfg: ReuseConfig,
}

impl PrecondBuilder {
    pub fn new(mode: PrecondMode, cfg: ReuseConfig) -> Self {
        PrecondBuilder { mode, cfg }
    }

    pub fn fresh(&self, a: &SparseMatrix) -> Result<Built> {
        let start = Instant::now();
        let out = spai_build(a, &self.cfg.spai)?;
        let seconds = start.elapsed().as_secs_f64();
        let standard = self
            .cfg
            .record_standard_residual
            .then(|| out.frobenius_residual() / (a.nrows() as f64).sqrt());
        Ok(Built {
            chain: Some(PrecondChain::new(out.matrix, seconds)?),
            kind: PrecondKind::Fresh,
            seconds,
            min_residual: None,
            identity_residual: None,
            diff_ratio: None,
            standard_residual: standard,
            identity_distance: Some(standard_ratio(a)),
        })
    }

    /// Preconditioner for `a_new` given the neighbour it would be updated
    /// from. `prev` is ignored unless the mode is [`PrecondMode::ReuseChain`];
    /// without a neighbour a fresh approximate inverse is built.
    pub fn next(
        &self,
        a_new: &SparseMatrix,
        prev: Option<(&SparseMatrix, &PrecondChain)>,
        direction: Direction,
        from: SystemIndex,
        to: SystemIndex,
    ) -> Result<Built> {
        match self.mode {
            PrecondMode::None => Ok(Built::none()),
            PrecondMode::FreshSpai => self.fresh(a_new),
            PrecondMode::ReuseChain => {
                let Some((a_prev, chain)) = prev else {
                    return self.fresh(a_new);
                };
                if self.cfg.max_chain_len.is_some_and(|cap| chain.len() + 1 > cap) {
                    log::info!("chain at {to:?} would exceed {} factors; rebuilding", chain.len());
                    return self.fresh(a_new);
                }
                let factor = update_build(a_prev, a_new, &self.cfg.update)?.with_link(direction, from, to);
                let seconds = factor.build_seconds;
                let min_residual = factor.min_residual;
                let identity_residual = factor.identity_residual;
                let prev_norm = a_prev.frobenius_norm();
                let chain = chain.chain_extend(factor)?;
                Ok(Built {
                    chain: Some(chain),
                    kind: direction.into(),
                    seconds,
                    min_residual: Some(min_residual),
                    identity_residual: Some(identity_residual),
                    diff_ratio: (prev_norm > 0.0).then(|| identity_residual / prev_norm),
                    standard_residual: None,
                    identity_distance: Some(standard_ratio(a_new)),
                })
            }
        }
    }
}

/// `‖I − A‖_F / ‖I‖_F`, how far `A` is from the identity.
pub fn standard_ratio(a: &SparseMatrix) -> f64 {
    let n = a.nrows();
    a.add_scaled(-1.0, &SparseMatrix::identity(n), 1.0)
        .map(|d| d.frobenius_norm() / (n as f64).sqrt())
        .unwrap_or(f64::NAN)
}
