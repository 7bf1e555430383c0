//! Full (non-restarted) GMRES with right preconditioning.
//!
//! Solves `A P x̃ = b` and returns `x = P x̃`. Both `A` and `P` are consumed
//! only through [`LinearOperator`] products, so explicit matrices, Kronecker
//! operators and preconditioner chains all plug in the same way.

use std::time::Instant;

use crate::dense::{axpy, dot, norm2};
use crate::error::{Error, Result};
use crate::operator::LinearOperator;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GmresConfig {
    /// Stop when `‖b − A x‖ ≤ rel_tol · ‖b‖`.
    pub rel_tol: f64,
    pub max_iter: usize,
    pub record_history: bool,
}

impl Default for GmresConfig {
    fn default() -> Self {
        GmresConfig {
            rel_tol: 1e-6,
            max_iter: 1000,
            record_history: true,
        }
    }
}

impl GmresConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0) {
            return Err(Error::InvalidArgument("GMRES rel_tol must be positive".into()));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidArgument("GMRES max_iter must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct GmresReport {
    pub iterations: usize,
    /// Relative residual estimates, starting with 1 for the zero initial guess.
    pub residual_history: Vec<f64>,
    pub converged: bool,
    /// True relative residual `‖b − A x‖ / ‖b‖` of the returned iterate.
    pub relative_residual: f64,
    pub solve_seconds: f64,
}

impl GmresReport {
    pub fn final_residual(&self) -> f64 {
        self.relative_residual
    }
}

/// Loss-of-orthogonality level above which one extra Gram–Schmidt pass runs.
const REORTH_THRESHOLD: f64 = 1e-10;

struct Givens {
    c: f64,
    s: f64,
}

/// Right-preconditioned GMRES from a zero initial guess.
///
/// Breakdown (a singular Hessenberg system) and non-convergence within
/// `max_iter` are returned as errors that still carry the best iterate and
/// its report.
pub fn gmres_right_preconditioned(
    a: &dyn LinearOperator,
    p: &dyn LinearOperator,
    b: &[f64],
    cfg: &GmresConfig,
) -> Result<(Vec<f64>, GmresReport)> {
    cfg.validate()?;
    let n = a.dim();
    if b.len() != n {
        return Err(Error::dim("gmres right-hand side", n, b.len()));
    }
    if p.dim() != n {
        return Err(Error::dim("gmres preconditioner", n, p.dim()));
    }
    let start = Instant::now();
    let bnorm = norm2(b);
    let mut report = GmresReport {
        residual_history: vec![1.0],
        relative_residual: 1.0,
        ..Default::default()
    };
    if bnorm == 0.0 {
        report.converged = true;
        report.relative_residual = 0.0;
        return Ok((vec![0.0; n], report));
    }

    let mut basis: Vec<Vec<f64>> = vec![b.iter().map(|v| v / bnorm).collect()];
    let mut hess: Vec<Vec<f64>> = Vec::new();
    let mut rotations: Vec<Givens> = Vec::new();
    let mut g = vec![bnorm];
    let mut z = vec![0.0; n];
    let mut target = cfg.rel_tol;
    let mut breakdown = false;

    for k in 0..cfg.max_iter {
        p.apply_into(&basis[k], &mut z);
        let mut w = vec![0.0; n];
        a.apply_into(&z, &mut w);

        let mut h = vec![0.0; k + 2];
        let before = norm2(&w);
        for (i, v) in basis.iter().enumerate() {
            let hij = dot(&w, v);
            h[i] = hij;
            axpy(-hij, v, &mut w);
        }
        let mut after = norm2(&w);
        if after > 0.0 && f64::EPSILON * before / after > REORTH_THRESHOLD {
            for (i, v) in basis.iter().enumerate() {
                let c = dot(&w, v);
                h[i] += c;
                axpy(-c, v, &mut w);
            }
            after = norm2(&w);
        }
        h[k + 1] = after;

        for (i, rot) in rotations.iter().enumerate() {
            let (hi, hi1) = (h[i], h[i + 1]);
            h[i] = rot.c * hi + rot.s * hi1;
            h[i + 1] = -rot.s * hi + rot.c * hi1;
        }
        let denom = h[k].hypot(h[k + 1]);
        let small = after <= 1e-14 * before.max(f64::MIN_POSITIVE);
        if denom == 0.0 {
            // singular Hessenberg column: nothing more can be learned
            hess.push(h);
            breakdown = true;
            report.iterations = k + 1;
            break;
        }
        let rot = Givens {
            c: h[k] / denom,
            s: h[k + 1] / denom,
        };
        h[k] = denom;
        h[k + 1] = 0.0;
        let gk = g[k];
        g[k] = rot.c * gk;
        g.push(-rot.s * gk);
        rotations.push(rot);
        hess.push(h);

        let estimate = g[k + 1].abs() / bnorm;
        if cfg.record_history {
            report.residual_history.push(estimate);
        }
        report.iterations = k + 1;

        if estimate <= target || small {
            let x = assemble_solution(p, &basis, &hess, &g, n);
            let true_rel = true_residual(a, &x, b) / bnorm;
            report.relative_residual = true_rel;
            if true_rel <= cfg.rel_tol {
                report.converged = true;
                report.solve_seconds = start.elapsed().as_secs_f64();
                return Ok((x, report));
            }
            if small {
                breakdown = true;
                break;
            }
            // the recursive estimate drifted from the true residual
            target = estimate * cfg.rel_tol / true_rel * 0.5;
        }
        if k + 1 < cfg.max_iter {
            basis.push(w.iter().map(|v| v / after).collect());
        }
    }

    let usable = hess.len().min(g.len().saturating_sub(1));
    let x = if usable == 0 {
        vec![0.0; n]
    } else {
        assemble_solution(p, &basis, &hess[..usable], &g, n)
    };
    report.relative_residual = true_residual(a, &x, b) / bnorm;
    report.solve_seconds = start.elapsed().as_secs_f64();
    if breakdown {
        Err(Error::Breakdown { x, report })
    } else {
        Err(Error::NotConverged { x, report })
    }
}

fn true_residual(a: &dyn LinearOperator, x: &[f64], b: &[f64]) -> f64 {
    let ax = a.apply(x);
    b.iter().zip(&ax).map(|(bi, ai)| (bi - ai).powi(2)).sum::<f64>().sqrt()
}

/// Back-substitute the rotated Hessenberg system and form `x = P V y`.
fn assemble_solution(
    p: &dyn LinearOperator,
    basis: &[Vec<f64>],
    hess: &[Vec<f64>],
    g: &[f64],
    n: usize,
) -> Vec<f64> {
    let m = hess.len();
    let mut y = vec![0.0; m];
    for i in (0..m).rev() {
        let mut s = g[i];
        for j in (i + 1)..m {
            s -= hess[j][i] * y[j];
        }
        y[i] = if hess[i][i] != 0.0 { s / hess[i][i] } else { 0.0 };
    }
    let mut u = vec![0.0; n];
    for (yi, v) in y.iter().zip(basis) {
        axpy(*yi, v, &mut u);
    }
    p.apply(&u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::Identity;
    use crate::sparse::SparseMatrix;

    #[test]
    fn identity_converges_in_one_iteration() {
        let a = SparseMatrix::identity(2);
        let (x, rep) =
            gmres_right_preconditioned(&a, &Identity(2), &[3.0, 4.0], &GmresConfig::default()).unwrap();
        assert_eq!(rep.iterations, 1);
        assert!((x[0] - 3.0).abs() < 1e-14 && (x[1] - 4.0).abs() < 1e-14);
    }

    #[test]
    fn diagonal_system() {
        let a = SparseMatrix::from_diagonal(&[2.0, 3.0]);
        let (x, rep) =
            gmres_right_preconditioned(&a, &Identity(2), &[2.0, 3.0], &GmresConfig::default()).unwrap();
        assert!(rep.converged);
        assert!((x[0] - 1.0).abs() < 1e-12 && (x[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_matrix_breaks_down() {
        let a = SparseMatrix::zeros(3, 3);
        let err = gmres_right_preconditioned(&a, &Identity(3), &[1.0, 0.0, 2.0], &GmresConfig::default())
            .unwrap_err();
        assert!(matches!(err, Error::Breakdown { .. }), "{err:?}");
    }

    #[test]
    fn non_convergence_is_reported() {
        // cyclic shift: GMRES makes no progress until the n-th iteration
        let n = 8;
        let a = SparseMatrix::from_triplets(n, n, (0..n).map(|i| (i, (i + 1) % n, 1.0))).unwrap();
        let mut b = vec![0.0; n];
        b[0] = 1.0;
        let cfg = GmresConfig {
            max_iter: 3,
            ..Default::default()
        };
        match gmres_right_preconditioned(&a, &Identity(n), &b, &cfg) {
            Err(Error::NotConverged { report, .. }) => {
                assert_eq!(report.iterations, 3);
                assert!(!report.converged);
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn rejects_mismatched_rhs() {
        let a = SparseMatrix::identity(2);
        assert!(gmres_right_preconditioned(&a, &Identity(2), &[1.0], &GmresConfig::default()).is_err());
    }
}
