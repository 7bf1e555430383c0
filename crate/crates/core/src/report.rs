//! Per-system timing and iteration records of a reduction run.

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::gmres::GmresReport;
use crate::precond::{Built, PrecondKind, PrecondMode};

/// One group of GMRES solves sharing a coefficient matrix and preconditioner.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    /// 1-based outer sweep.
    pub sweep: usize,
    /// 1-based expansion point within the sweep.
    pub point: usize,
    /// Which projection space the solves feed (`"V"`, `"W"`).
    pub side: String,
    pub shift: f64,
    pub precond_kind: PrecondKind,
    pub precond_build_seconds: f64,
    pub solves: usize,
    pub gmres_iterations: usize,
    pub gmres_seconds: f64,
    pub min_residual: Option<f64>,
    pub identity_residual: Option<f64>,
    pub diff_ratio: Option<f64>,
    pub standard_residual: Option<f64>,
    pub identity_distance: Option<f64>,
}

impl ReportRow {
    pub fn new(sweep: usize, point: usize, side: &str, shift: f64, built: Option<&Built>) -> Self {
        ReportRow {
            sweep,
            point,
            side: side.to_string(),
            shift,
            precond_kind: built.map_or(PrecondKind::ReusedSameMatrix, |b| b.kind),
            precond_build_seconds: built.map_or(0.0, |b| b.seconds),
            solves: 0,
            gmres_iterations: 0,
            gmres_seconds: 0.0,
            min_residual: built.and_then(|b| b.min_residual),
            identity_residual: built.and_then(|b| b.identity_residual),
            diff_ratio: built.and_then(|b| b.diff_ratio),
            standard_residual: built.and_then(|b| b.standard_residual),
            identity_distance: built.and_then(|b| b.identity_distance),
        }
    }

    pub fn record(&mut self, rep: &GmresReport) {
        self.solves += 1;
        self.gmres_iterations += rep.iterations;
        self.gmres_seconds += rep.solve_seconds;
    }

    pub fn mean_iterations(&self) -> f64 {
        if self.solves == 0 {
            0.0
        } else {
            self.gmres_iterations as f64 / self.solves as f64
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Totals {
    pub precond_build_seconds: f64,
    pub solves: usize,
    pub gmres_iterations: usize,
    pub gmres_seconds: f64,
    /// Fresh approximate inverses built.
    pub fresh_builds: usize,
    /// Update factors built.
    pub update_builds: usize,
}

#[derive(Debug, Clone)]
pub struct ReductionReport {
    pub algorithm: String,
    pub precond_mode: PrecondMode,
    pub rows: Vec<ReportRow>,
    pub converged: bool,
    pub sweeps: usize,
    pub reduced_order: usize,
    /// Expansion points (or interpolation points) used by the final sweep.
    pub final_points: Vec<f64>,
    pub warnings: Vec<String>,
    pub total_seconds: f64,
}

impl ReductionReport {
    pub fn new(algorithm: &str, mode: PrecondMode) -> Self {
        ReductionReport {
            algorithm: algorithm.to_string(),
            precond_mode: mode,
            rows: Vec::new(),
            converged: false,
            sweeps: 0,
            reduced_order: 0,
            final_points: Vec::new(),
            warnings: Vec::new(),
            total_seconds: 0.0,
        }
    }

    pub fn warn(&mut self, msg: impl Into<String>) {
        let msg = msg.into();
        log::warn!("{msg}");
        self.warnings.push(msg);
    }

    pub fn totals(&self) -> Totals {
        let mut t = Totals::default();
        for r in &self.rows {
            t.precond_build_seconds += r.precond_build_seconds;
            t.solves += r.solves;
            t.gmres_iterations += r.gmres_iterations;
            t.gmres_seconds += r.gmres_seconds;
            match r.precond_kind {
                PrecondKind::Fresh => t.fresh_builds += 1,
                PrecondKind::Horizontal | PrecondKind::Vertical => t.update_builds += 1,
                PrecondKind::None | PrecondKind::ReusedSameMatrix => {}
            }
        }
        t
    }

    /// Rows that built a preconditioner (or ran without one), skipping the
    /// same-matrix reuse rows.
    pub fn build_rows(&self) -> impl Iterator<Item = &ReportRow> {
        self.rows.iter().filter(|r| r.precond_kind != PrecondKind::ReusedSameMatrix)
    }

    pub fn to_csv(&self) -> String {
        fn opt(v: Option<f64>) -> String {
            v.map(|x| format!("{x:e}")).unwrap_or_default()
        }
        let mut s = String::from(
            "sweep,point,side,shift,precond_kind,precond_build_seconds,solves,gmres_iterations,\
             gmres_seconds,min_residual,identity_residual,diff_ratio,standard_residual,identity_distance\n",
        );
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{:.6},{},{},{:.6},{},{},{},{},{}",
                r.sweep,
                r.point,
                r.side,
                opt(Some(r.shift).filter(|s| s.is_finite())),
                r.precond_kind.as_str(),
                r.precond_build_seconds,
                r.solves,
                r.gmres_iterations,
                r.gmres_seconds,
                opt(r.min_residual),
                opt(r.identity_residual),
                opt(r.diff_ratio),
                opt(r.standard_residual),
                opt(r.identity_distance),
            );
        }
        let t = self.totals();
        let _ = writeln!(
            s,
            "total,,,,,{:.6},{},{},{:.6},,,,,",
            t.precond_build_seconds, t.solves, t.gmres_iterations, t.gmres_seconds
        );
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let io = |source| Error::Io {
            path: path.to_path_buf(),
            source,
        };
        let mut f = std::fs::File::create(path).map_err(io)?;
        f.write_all(self.to_csv().as_bytes()).map_err(io)
    }

    /// Human-readable summary.
    pub fn summary(&self) -> String {
        let t = self.totals();
        let mut s = format!(
            "{} [{}]: r = {}, sweeps = {}, converged = {}\n  precond build {:.3}s ({} fresh, {} updates), \
             {} solves, {} GMRES iterations, GMRES {:.3}s\n",
            self.algorithm,
            self.precond_mode,
            self.reduced_order,
            self.sweeps,
            self.converged,
            t.precond_build_seconds,
            t.fresh_builds,
            t.update_builds,
            t.solves,
            t.gmres_iterations,
            t.gmres_seconds,
        );
        if !self.final_points.is_empty() {
            let pts: Vec<String> = self.final_points.iter().map(|p| format!("{p:.4}")).collect();
            let _ = writeln!(s, "  final points: {}", pts.join(", "));
        }
        for w in &self.warnings {
            let _ = writeln!(s, "  warning: {w}");
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn totals_and_csv() {
        let mut rep = ReductionReport::new("toy", PrecondMode::None);
        let mut row = ReportRow::new(1, 1, "V", 2.0, None);
        row.record(&GmresReport {
            iterations: 7,
            solve_seconds: 0.5,
            ..Default::default()
        });
        rep.rows.push(row);
        let t = rep.totals();
        assert_eq!((t.solves, t.gmres_iterations), (1, 7));
        let csv = rep.to_csv();
        assert_eq!(csv.lines().count(), 3);
        assert!(csv.lines().nth(1).unwrap().starts_with("1,1,V,2e0,reused-same-matrix"));
    }
}
