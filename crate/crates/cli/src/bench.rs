//! Preconditioner sequence benchmark on the shifted matrices
//! `Aᵢ = sᵢ² M + sᵢ D + K` of one sweep over the expansion points.
//!
//! Per point it compares a fresh approximate inverse against the update
//! chained from the previous point and, optionally, against an update
//! anchored at the first matrix (`min ‖A₁ − Aᵢ Q‖_F`, `Pᵢ = Q P₁`).

use std::fmt::Write as _;
use std::time::Instant;

use morspai::airga::{shifted_operator, SecondOrderSystem};
use morspai::chain::{update_build, Direction, PrecondChain};
use morspai::gmres::{gmres_right_preconditioned, GmresConfig};
use morspai::operator::{Identity, LinearOperator};
use morspai::precond::ReuseConfig;
use morspai::spai::spai_build;
use morspai::sparse::SparseMatrix;
use morspai::{Error, Result};

/// `‖I − A P‖_F / ‖I‖_F` is computed only up to this dimension.
pub const STANDARD_RESIDUAL_MAX_N: usize = 5000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Solve {
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub point: usize,
    pub shift: f64,
    pub none: Solve,
    pub fresh_seconds: f64,
    pub fresh_standard: Option<f64>,
    pub fresh: Solve,
    /// Absent at the first point, which has no neighbour.
    pub update: Option<UpdateStats>,
    pub first_approach: Option<UpdateStats>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UpdateStats {
    pub seconds: f64,
    pub min_residual: f64,
    pub identity_residual: f64,
    pub standard: Option<f64>,
    pub solve: Solve,
}

fn solve_stats(a: &SparseMatrix, p: &dyn LinearOperator, b: &[f64], cfg: &GmresConfig) -> Result<Solve> {
    match gmres_right_preconditioned(a, p, b, cfg) {
        Ok((_, r)) => Ok(Solve {
            iterations: r.iterations,
            converged: true,
        }),
        Err(Error::NotConverged { report, .. } | Error::Breakdown { report, .. }) => Ok(Solve {
            iterations: report.iterations,
            converged: false,
        }),
        Err(e) => Err(e),
    }
}

/// `‖I − A P‖_F / √n` with `P` applied column by column.
pub fn standard_residual(a: &SparseMatrix, p: &dyn LinearOperator) -> Result<f64> {
    let n = a.nrows();
    let mut e = vec![0.0; n];
    let mut pe = vec![0.0; n];
    let mut ape = vec![0.0; n];
    let mut sum = 0.0;
    for j in 0..n {
        e[j] = 1.0;
        p.apply_into(&e, &mut pe);
        a.apply_into(&pe, &mut ape);
        ape[j] -= 1.0;
        sum += ape.iter().map(|v| v * v).sum::<f64>();
        e[j] = 0.0;
    }
    Ok((sum / n as f64).sqrt())
}

pub fn spai_bench(
    sys: &SecondOrderSystem,
    points: &[f64],
    reuse: &ReuseConfig,
    gmres: &GmresConfig,
    first_approach: bool,
) -> Result<Vec<BenchRow>> {
    let n = sys.n();
    let b = sys.f.column_dense(0);
    let standard = |a: &SparseMatrix, p: &dyn LinearOperator| -> Result<Option<f64>> {
        if n <= STANDARD_RESIDUAL_MAX_N {
            standard_residual(a, p).map(Some)
        } else {
            Ok(None)
        }
    };
    let mats: Vec<SparseMatrix> = points.iter().map(|&s| shifted_operator(sys, s)).collect();
    let mut rows = Vec::with_capacity(points.len());
    let mut chain: Option<PrecondChain> = None;
    let mut first_base: Option<PrecondChain> = None;
    for (i, a) in mats.iter().enumerate() {
        let none = solve_stats(a, &Identity(n), &b, gmres)?;

        let t = Instant::now();
        let fresh = spai_build(a, &reuse.spai)?;
        let fresh_seconds = t.elapsed().as_secs_f64();
        let fresh_chain = PrecondChain::new(fresh.matrix, fresh_seconds)?;
        let fresh_solve = solve_stats(a, &fresh_chain, &b, gmres)?;
        let fresh_standard = standard(a, &fresh_chain)?;

        let update_stats = |prev_a: &SparseMatrix, base: &PrecondChain| -> Result<(UpdateStats, PrecondChain)> {
            let q = update_build(prev_a, a, &reuse.update)?.with_link(Direction::Horizontal, (1, i), (1, i + 1));
            let stats = (q.build_seconds, q.min_residual, q.identity_residual);
            let next = base.chain_extend(q)?;
            let solve = solve_stats(a, &next, &b, gmres)?;
            Ok((
                UpdateStats {
                    seconds: stats.0,
                    min_residual: stats.1,
                    identity_residual: stats.2,
                    standard: standard(a, &next)?,
                    solve,
                },
                next,
            ))
        };

        let (update, next_chain) = match &chain {
            None => (None, fresh_chain.clone()),
            Some(c) => {
                let (s, next) = update_stats(&mats[i - 1], c)?;
                (Some(s), next)
            }
        };
        let first = match (&first_base, first_approach) {
            (Some(base), true) => Some(update_stats(&mats[0], base)?.0),
            _ => None,
        };
        if i == 0 {
            first_base = Some(fresh_chain.clone());
        }
        chain = Some(next_chain);
        rows.push(BenchRow {
            point: i + 1,
            shift: points[i],
            none,
            fresh_seconds,
            fresh_standard,
            fresh: fresh_solve,
            update,
            first_approach: first,
        });
    }
    Ok(rows)
}

pub fn bench_csv(rows: &[BenchRow]) -> String {
    fn opt(v: Option<f64>) -> String {
        v.map(|x| format!("{x:e}")).unwrap_or_default()
    }
    fn solve(s: Option<Solve>) -> String {
        s.map(|s| format!("{},{}", s.iterations, s.converged)).unwrap_or_else(|| ",".into())
    }
    let mut s = String::from(
        "point,shift,none_iterations,none_converged,fresh_seconds,fresh_standard,fresh_iterations,fresh_converged,\
         update_seconds,update_min_residual,update_identity_residual,update_standard,update_iterations,update_converged,\
         first_min_residual,first_identity_residual,first_iterations,first_converged\n",
    );
    for r in rows {
        let u = r.update.as_ref();
        let f = r.first_approach.as_ref();
        let _ = writeln!(
            s,
            "{},{},{},{:.6},{},{},{},{},{},{},{},{},{},{}",
            r.point,
            r.shift,
            solve(Some(r.none)),
            r.fresh_seconds,
            opt(r.fresh_standard),
            solve(Some(r.fresh)),
            u.map(|u| format!("{:.6}", u.seconds)).unwrap_or_default(),
            opt(u.map(|u| u.min_residual)),
            opt(u.map(|u| u.identity_residual)),
            opt(u.and_then(|u| u.standard)),
            solve(u.map(|u| u.solve)),
            opt(f.map(|f| f.min_residual)),
            opt(f.map(|f| f.identity_residual)),
            solve(f.map(|f| f.solve)),
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use morspai::generate::generate_disc_brake_like;

    #[test]
    fn bench_rows_are_consistent() {
        let sys = generate_disc_brake_like(120, 2.0 * std::f64::consts::PI, 5e-2, 5e-6, 3).unwrap();
        let pts = [1.0, 100.0, 300.0];
        let rows = spai_bench(&sys, &pts, &ReuseConfig::default(), &GmresConfig::default(), true).unwrap();
        assert_eq!(rows.len(), 3);
        assert!(rows[0].update.is_none() && rows[0].first_approach.is_none());
        for r in &rows[1..] {
            let u = r.update.as_ref().unwrap();
            assert!(u.min_residual <= u.identity_residual * (1.0 + 1e-12));
            let f = r.first_approach.as_ref().unwrap();
            assert!(f.min_residual <= f.identity_residual * (1.0 + 1e-12));
            assert!(r.fresh.converged);
        }
        // at the second point both update approaches coincide
        let (u, f) = (rows[1].update.as_ref().unwrap(), rows[1].first_approach.as_ref().unwrap());
        assert!((u.min_residual - f.min_residual).abs() <= 1e-12 * u.identity_residual.max(1.0));
        let csv = bench_csv(&rows);
        assert_eq!(csv.lines().count(), 4);
        let cols = csv.lines().next().unwrap().split(',').count();
        assert!(csv.lines().all(|l| l.split(',').count() == cols));
    }

    #[test]
    fn standard_residual_of_exact_inverse_is_zero() {
        let a = SparseMatrix::from_diagonal(&[2.0, 4.0]);
        let p = SparseMatrix::from_diagonal(&[0.5, 0.25]);
        assert_eq!(standard_residual(&a, &p).unwrap(), 0.0);
        assert!((standard_residual(&a, &Identity(2)).unwrap() - ((1.0 + 9.0) / 2.0f64).sqrt()).abs() < 1e-15);
    }
}
