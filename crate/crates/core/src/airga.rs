//! Adaptive iterative rational global Arnoldi reduction of proportionally
//! damped second-order systems
//!
//! ```text
//! M ẍ + D ẋ + K x = F u,   y = Cᵀ x,   D = α M + β K.
//! ```
//!
//! Each sweep builds a block rational Krylov basis at the current expansion
//! points `s_i` from the moments `A_i⁻¹F, (−A_i⁻¹M) A_i⁻¹F, …` with
//! `A_i = s_i² M + s_i D + K`, grows it until two consecutive temporary
//! reduced models are close in H₂, then moves the expansion points to the
//! dominant poles of the reduced model. Sweeps stop once two consecutive
//! reduced models are close in H₂.

use std::time::Instant;

use nalgebra::DMatrix;

use crate::chain::{Direction, PrecondChain};
use crate::dense::OrthoBasis;
use crate::error::{Error, Result};
use crate::gmres::{gmres_right_preconditioned, GmresConfig};
use crate::lti::{relative_h2_distance, ReducedSecondOrder};
use crate::precond::{Built, PrecondBuilder, PrecondKind, PrecondMode, ReuseConfig};
use crate::report::{ReductionReport, ReportRow};
use crate::sparse::SparseMatrix;

#[derive(Debug, Clone)]
pub struct SecondOrderSystem {
    pub m: SparseMatrix,
    pub d: SparseMatrix,
    pub k: SparseMatrix,
    /// `n × m` input map.
    pub f: SparseMatrix,
    /// `n × q` output map.
    pub c: SparseMatrix,
    /// Proportional damping coefficients, when known.
    pub damping: Option<(f64, f64)>,
}

impl SecondOrderSystem {
    pub fn new(m: SparseMatrix, d: SparseMatrix, k: SparseMatrix, f: SparseMatrix, c: SparseMatrix) -> Result<Self> {
        let n = m.nrows();
        for (name, mat) in [("D", &d), ("K", &k), ("M", &m)] {
            if mat.nrows() != n || mat.ncols() != n {
                return Err(Error::InvalidArgument(format!(
                    "{name} is {}×{}, expected {n}×{n}",
                    mat.nrows(),
                    mat.ncols()
                )));
            }
        }
        if f.nrows() != n || c.nrows() != n {
            return Err(Error::InvalidArgument(format!(
                "input/output maps need {n} rows, got {} and {}",
                f.nrows(),
                c.nrows()
            )));
        }
        if f.ncols() == 0 || c.ncols() == 0 {
            return Err(Error::InvalidArgument("input/output maps need at least one column".into()));
        }
        Ok(SecondOrderSystem {
            m,
            d,
            k,
            f,
            c,
            damping: None,
        })
    }

    /// Record `D = αM + βK`. Returns the relative mismatch
    /// `‖D − αM − βK‖_F / ‖D‖_F`; a mismatch above `1e-12` is logged but the
    /// supplied `D` is kept.
    pub fn with_proportional_damping(mut self, alpha: f64, beta: f64) -> Result<(Self, f64)> {
        let fit = SparseMatrix::linear_combination(&[(1.0, &self.d), (-alpha, &self.m), (-beta, &self.k)])?;
        let dn = self.d.frobenius_norm();
        let mismatch = if dn > 0.0 { fit.frobenius_norm() / dn } else { fit.frobenius_norm() };
        if mismatch > 1e-12 {
            log::warn!("D deviates from {alpha}·M + {beta}·K by {mismatch:.3e} (relative); using D as given");
        }
        self.damping = Some((alpha, beta));
        Ok((self, mismatch))
    }

    pub fn n(&self) -> usize {
        self.m.nrows()
    }

    /// Galerkin projection onto the orthonormal columns of `v`.
    pub fn project(&self, v: &DMatrix<f64>) -> ReducedSecondOrder {
        let proj = |a: &SparseMatrix| v.transpose() * apply_sparse(a, v);
        ReducedSecondOrder {
            m: proj(&self.m),
            d: proj(&self.d),
            k: proj(&self.k),
            f: v.transpose() * self.f.to_dense(),
            c: v.transpose() * self.c.to_dense(),
            v: v.clone(),
        }
    }
}

/// `A · X` for sparse `A` and dense `X`.
pub(crate) fn apply_sparse(a: &SparseMatrix, x: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(a.nrows(), x.ncols());
    let mut y = vec![0.0; a.nrows()];
    for j in 0..x.ncols() {
        a.matvec_into(x.column(j).as_slice(), &mut y);
        out.column_mut(j).copy_from_slice(&y);
    }
    out
}

/// `s² M + s D + K`.
pub fn shifted_operator(sys: &SecondOrderSystem, s: f64) -> SparseMatrix {
    SparseMatrix::linear_combination(&[(s * s, &sys.m), (s, &sys.d), (1.0, &sys.k)])
        .expect("system matrices share one dimension")
}

#[derive(Debug, Clone)]
pub struct AirgaConfig {
    /// Initial expansion points (rad/s), positive and distinct.
    pub expansion_points: Vec<f64>,
    pub r_max: usize,
    pub outer_tol: f64,
    pub inner_tol: f64,
    pub max_outer: usize,
    pub rank_tol: f64,
    pub gmres: GmresConfig,
    pub reuse: ReuseConfig,
}

impl Default for AirgaConfig {
    fn default() -> Self {
        AirgaConfig {
            expansion_points: linspace(1.0, 500.0, 4),
            r_max: 20,
            outer_tol: 1e-4,
            inner_tol: 1e-6,
            max_outer: 20,
            rank_tol: 1e-10,
            gmres: GmresConfig::default(),
            reuse: ReuseConfig::default(),
        }
    }
}

impl AirgaConfig {
    pub fn validate(&self) -> Result<()> {
        let pts = &self.expansion_points;
        if pts.is_empty() {
            return Err(Error::Config("at least one expansion point is required".into()));
        }
        if pts.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::Config("expansion points must be positive and finite".into()));
        }
        let mut sorted = pts.clone();
        sorted.sort_by(f64::total_cmp);
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Config("expansion points must be distinct".into()));
        }
        if self.r_max < pts.len() {
            return Err(Error::Config(format!(
                "r_max = {} is smaller than the number of expansion points {}",
                self.r_max,
                pts.len()
            )));
        }
        if !(self.outer_tol > 0.0 && self.inner_tol > 0.0) || self.max_outer == 0 {
            return Err(Error::Config("tolerances must be positive and max_outer at least 1".into()));
        }
        self.gmres.validate()?;
        self.reuse.spai.validate()?;
        self.reuse.update.validate()
    }
}

pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![a],
        _ => (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect(),
    }
}

/// Solve `A X = B` column by column and record the work in `row`.
pub(crate) fn solve_block(
    a: &SparseMatrix,
    built: &Built,
    rhs: &DMatrix<f64>,
    gmres: &GmresConfig,
    row: &mut ReportRow,
    location: impl Fn(usize) -> String,
) -> Result<DMatrix<f64>> {
    let p = built.operator(a.nrows());
    let mut x = DMatrix::zeros(rhs.nrows(), rhs.ncols());
    for c in 0..rhs.ncols() {
        let (xc, rep) = gmres_right_preconditioned(a, &p, rhs.column(c).as_slice(), gmres).map_err(|e| e.at(location(c)))?;
        row.record(&rep);
        x.column_mut(c).copy_from_slice(&xc);
    }
    Ok(x)
}

/// Frobenius-normalize a block; a zero block is returned unchanged.
fn normalized(x: DMatrix<f64>) -> DMatrix<f64> {
    let n = x.norm();
    if n > 0.0 {
        x / n
    } else {
        x
    }
}

/// Push every column of `x` that adds a new direction. Returns how many did.
fn extend_basis(basis: &mut OrthoBasis, x: &DMatrix<f64>, r_max: usize) -> usize {
    let mut added = 0;
    for c in 0..x.ncols() {
        if basis.len() >= r_max {
            break;
        }
        if basis.push(x.column(c).as_slice()) {
            added += 1;
        }
    }
    added
}

/// Run the reduction. With [`PrecondMode::ReuseChain`] the first system of
/// the first sweep gets a fresh approximate inverse, every other first
/// system an update from the first system of the previous sweep, and every
/// later system of a sweep an update from its predecessor in that sweep.
pub fn airga_reduce(
    sys: &SecondOrderSystem,
    cfg: &AirgaConfig,
    mode: PrecondMode,
) -> Result<(ReducedSecondOrder, ReductionReport)> {
    cfg.validate()?;
    let start = Instant::now();
    let n = sys.n();
    let builder = PrecondBuilder::new(mode, cfg.reuse);
    let mut report = ReductionReport::new("airga", mode);
    let f_dense = sys.f.to_dense();

    let mut points = cfg.expansion_points.clone();
    let mut prev_first: Option<(SparseMatrix, PrecondChain)> = None;
    let mut prev_model: Option<ReducedSecondOrder> = None;
    let mut model = None;

    for z in 1..=cfg.max_outer {
        log::info!("sweep {z}: expansion points {points:?}");
        report.sweeps = z;
        report.final_points = points.clone();
        let mut basis = OrthoBasis::new(n, cfg.rank_tol);
        let mut systems: Vec<(SparseMatrix, Built)> = Vec::with_capacity(points.len());
        let mut blocks = Vec::with_capacity(points.len());

        for (i, &s) in points.iter().enumerate() {
            let a = shifted_operator(sys, s);
            let prev = if i == 0 {
                prev_first.as_ref().map(|(m, c)| (m, c))
            } else {
                let (m, b) = &systems[i - 1];
                b.chain.as_ref().map(|c| (m, c))
            };
            let (dir, from) = if i == 0 { (Direction::Vertical, (z - 1, 1)) } else { (Direction::Horizontal, (z, i)) };
            let built = builder.next(&a, prev, dir, from, (z, i + 1))?;
            let mut row = ReportRow::new(z, i + 1, "V", s, Some(&built));
            let x = solve_block(&a, &built, &f_dense, &cfg.gmres, &mut row, |c| {
                format!("sweep {z}, point {}, moment 0, column {}", i + 1, c + 1)
            })?;
            report.rows.push(row);
            let x = normalized(x);
            extend_basis(&mut basis, &x, cfg.r_max);
            blocks.push(x);
            systems.push((a, built));
        }
        if mode == PrecondMode::ReuseChain {
            let (a, built) = &systems[0];
            prev_first = built.chain.clone().map(|c| (a.clone(), c));
        }

        let mut reuse_rows: Vec<ReportRow> = points
            .iter()
            .enumerate()
            .map(|(i, &s)| ReportRow::new(z, i + 1, "V", s, None))
            .collect();
        let mut temp = sys.project(&basis.to_matrix());
        let mut inner_converged = false;
        let mut j = 1;
        while basis.len() < cfg.r_max {
            let mut added = 0;
            for (i, (a, built)) in systems.iter().enumerate() {
                let rhs = -apply_sparse(&sys.m, &blocks[i]);
                let x = solve_block(a, built, &rhs, &cfg.gmres, &mut reuse_rows[i], |c| {
                    format!("sweep {z}, point {}, moment {j}, column {}", i + 1, c + 1)
                })?;
                let x = normalized(x);
                added += extend_basis(&mut basis, &x, cfg.r_max);
                blocks[i] = x;
            }
            if added == 0 {
                log::info!("sweep {z}: Krylov space exhausted after {j} moments");
                inner_converged = true;
                break;
            }
            let next = sys.project(&basis.to_matrix());
            let dist = relative_h2_distance(&next, &temp);
            temp = next;
            match dist {
                Ok(d) => {
                    log::debug!("sweep {z}, moment {j}: r = {}, inner H2 change {d:.3e}", basis.len());
                    if d < cfg.inner_tol {
                        inner_converged = true;
                        break;
                    }
                }
                Err(e) => log::debug!("sweep {z}, moment {j}: inner H2 change unavailable ({e})"),
            }
            j += 1;
        }
        report.rows.extend(reuse_rows.into_iter().filter(|r| r.solves > 0).map(|mut r| {
            r.precond_kind = if mode == PrecondMode::None { PrecondKind::None } else { PrecondKind::ReusedSameMatrix };
            r
        }));
        if !inner_converged {
            report.warn(format!("sweep {z}: reached r_max = {} before the inner loop converged", cfg.r_max));
        }

        let current = temp;
        report.reduced_order = current.r();
        let outer = prev_model.as_ref().map(|p| relative_h2_distance(&current, p));
        let next_points = next_expansion_points(&current, points.len(), &points);
        model = Some(current.clone());
        if let Some(d) = outer {
            match d {
                Ok(d) => {
                    log::info!("sweep {z}: r = {}, outer H2 change {d:.3e}", current.r());
                    if d < cfg.outer_tol {
                        report.converged = true;
                        break;
                    }
                }
                Err(e) => log::info!("sweep {z}: outer H2 change unavailable ({e})"),
            }
        }
        prev_model = Some(current);
        points = next_points;
    }
    if !report.converged {
        report.warn(format!("outer loop did not converge in {} sweeps", cfg.max_outer));
    }
    report.total_seconds = start.elapsed().as_secs_f64();
    Ok((model.expect("max_outer ≥ 1"), report))
}

/// New expansion points from the poles of a reduced model: the `ell` poles
/// closest to the imaginary axis, mapped to `|Im λ|` (or `|λ|` when real),
/// separated by at least `1e-6 · max`, ascending. Missing points are filled
/// from `previous`.
pub fn next_expansion_points(model: &ReducedSecondOrder, ell: usize, previous: &[f64]) -> Vec<f64> {
    let Ok(poles) = model.poles() else {
        return previous.to_vec();
    };
    let mut poles: Vec<_> = poles.into_iter().filter(|z| z.re.is_finite() && z.im.is_finite()).collect();
    poles.sort_by(|a, b| a.re.abs().total_cmp(&b.re.abs()));
    let candidates: Vec<f64> = poles
        .iter()
        .map(|z| if z.im.abs() > 1e-8 * z.norm() { z.im.abs() } else { z.norm() })
        .filter(|s| *s > 0.0)
        .collect();
    let scale = candidates
        .iter()
        .chain(previous)
        .fold(0.0f64, |m, v| m.max(*v));
    let spacing = 1e-6 * scale;
    let mut chosen: Vec<f64> = Vec::with_capacity(ell);
    for s in candidates.into_iter().chain(previous.iter().copied()) {
        if chosen.len() == ell {
            break;
        }
        if chosen.iter().all(|c| (c - s).abs() > spacing) {
            chosen.push(s);
        }
    }
    chosen.sort_by(f64::total_cmp);
    chosen
}

/// Pointwise relative error `‖H(s) − Ĥ(s)‖_F / ‖H(s)‖_F`.
#[derive(Debug, Clone)]
pub struct ErrorCurve {
    pub s: Vec<f64>,
    pub rel_error: Vec<f64>,
    /// Grid points where the full-order solve failed (entry is NaN).
    pub failed: Vec<usize>,
}

/// Compare full and reduced transfer functions on a grid of real shifts.
/// The full-order side uses GMRES with preconditioners built per `mode`
/// along the grid.
pub fn transfer_function_error(
    sys: &SecondOrderSystem,
    red: &ReducedSecondOrder,
    grid: &[f64],
    gmres: &GmresConfig,
    reuse: &ReuseConfig,
    mode: PrecondMode,
) -> Result<ErrorCurve> {
    if grid.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
        return Err(Error::InvalidArgument("frequency grid must be positive and finite".into()));
    }
    let builder = PrecondBuilder::new(mode, *reuse);
    let f = sys.f.to_dense();
    let ct = sys.c.to_dense().transpose();
    let mut prev: Option<(SparseMatrix, Built)> = None;
    let mut curve = ErrorCurve {
        s: grid.to_vec(),
        rel_error: Vec::with_capacity(grid.len()),
        failed: Vec::new(),
    };
    for (g, &s) in grid.iter().enumerate() {
        let a = shifted_operator(sys, s);
        let built = builder.next(
            &a,
            prev.as_ref().and_then(|(m, b)| b.chain.as_ref().map(|c| (m, c))),
            Direction::Horizontal,
            (1, g),
            (1, g + 1),
        )?;
        let mut row = ReportRow::new(1, g + 1, "V", s, Some(&built));
        let full = solve_block(&a, &built, &f, gmres, &mut row, |c| format!("grid point {}, column {}", g + 1, c + 1));
        let err = match (full, red.transfer(s)) {
            (Ok(x), Ok(hr)) => {
                let h = &ct * x;
                let hn = h.norm();
                (h - hr).norm() / if hn > 0.0 { hn } else { 1.0 }
            }
            (Err(e), _) if e.is_solver_failure() => {
                log::warn!("transfer function error at s = {s}: {e}");
                f64::NAN
            }
            (Err(e), _) => return Err(e),
            (_, Err(e)) => {
                log::warn!("reduced model singular at s = {s}: {e}");
                f64::NAN
            }
        };
        if err.is_nan() {
            curve.failed.push(g);
        }
        curve.rel_error.push(err);
        prev = Some((a, built));
    }
    Ok(curve)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diag_system() -> SecondOrderSystem {
        let n = 4;
        let e1 = SparseMatrix::from_triplets(n, 1, [(0, 0, 1.0)]).unwrap();
        SecondOrderSystem::new(
            SparseMatrix::identity(n),
            SparseMatrix::zeros(n, n),
            SparseMatrix::from_diagonal(&[1.0, 2.0, 3.0, 4.0]),
            e1.clone(),
            e1,
        )
        .unwrap()
    }

    #[test]
    fn shifted_at_zero_is_stiffness() {
        let sys = diag_system();
        assert_eq!(shifted_operator(&sys, 0.0).to_dense(), sys.k.to_dense());
    }

    #[test]
    fn shifted_scalar_arithmetic() {
        let n = 3;
        let sys = SecondOrderSystem::new(
            SparseMatrix::identity(n),
            SparseMatrix::zeros(n, n),
            SparseMatrix::identity(n),
            SparseMatrix::identity(n),
            SparseMatrix::identity(n),
        )
        .unwrap();
        assert_eq!(shifted_operator(&sys, 2.0).to_dense(), DMatrix::identity(n, n) * 5.0);
    }

    #[test]
    fn config_validation() {
        let mut cfg = AirgaConfig::default();
        assert!(cfg.validate().is_ok());
        cfg.expansion_points = vec![1.0, 1.0];
        assert!(cfg.validate().is_err());
        cfg.expansion_points = vec![1.0, 2.0];
        cfg.r_max = 1;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn point_update_uses_imaginary_parts() {
        // λ² + 0.2 λ + 100 has poles −0.1 ± i·√99.99
        let one = |v: f64| DMatrix::from_element(1, 1, v);
        let model = ReducedSecondOrder {
            m: one(1.0),
            d: one(0.2),
            k: one(100.0),
            f: one(1.0),
            c: one(1.0),
            v: one(1.0),
        };
        let pts = next_expansion_points(&model, 2, &[3.0, 7.0]);
        assert_eq!(pts.len(), 2);
        assert!((pts[1] - 99.99f64.sqrt()).abs() < 1e-8, "{pts:?}");
    }

    #[test]
    fn linspace_endpoints() {
        assert_eq!(linspace(1.0, 500.0, 4)[3], 500.0);
        assert_eq!(linspace(2.0, 3.0, 1), vec![2.0]);
    }
}
