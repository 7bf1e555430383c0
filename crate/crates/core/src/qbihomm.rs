//! Higher-order moment matching for single-input single-output
//! quadratic-bilinear systems
//!
//! ```text
//! D ẋ = K x + N x u + H (x ⊗ x) + F u,   y = Cᵀ x.
//! ```
//!
//! The trial vectors are `[(σᵢD − K)⁻¹ D]ʲ (σᵢD − K)⁻¹ F` for `j ≤ P + Q`,
//! the test vectors `[(2σᵢD − K)⁻ᵀ Dᵀ]ʲ (2σᵢD − K)⁻ᵀ C` for `j ≤ Q`. Both
//! sets go into one orthonormal basis `U` and the model is projected with it.
//!
//! All moments at one shift share a coefficient matrix and therefore one
//! preconditioner. With [`PrecondMode::ReuseChain`] the shifts are walked in
//! order and each side keeps a horizontal chain: `σᵢD − K` is updated from
//! `σᵢ₋₁D − K`, and the transposed test-side matrices form their own chain.

use std::time::Instant;

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::airga::solve_block;
use crate::chain::{Direction, PrecondChain};
use crate::dense::OrthoBasis;
use crate::error::{Error, Result};
use crate::gmres::GmresConfig;
use crate::precond::{PrecondBuilder, PrecondMode, ReuseConfig};
use crate::report::{ReductionReport, ReportRow};
use crate::sparse::SparseMatrix;

#[derive(Debug, Clone)]
pub struct QbSystem {
    pub d: SparseMatrix,
    pub k: SparseMatrix,
    pub n: SparseMatrix,
    /// `n × n²`; entry `(a, b·n + c)` multiplies `x_b x_c` in row `a`.
    pub h: SparseMatrix,
    /// `n × 1`.
    pub f: SparseMatrix,
    /// `n × 1`.
    pub c: SparseMatrix,
}

impl QbSystem {
    pub fn new(
        d: SparseMatrix,
        k: SparseMatrix,
        n: SparseMatrix,
        h: SparseMatrix,
        f: SparseMatrix,
        c: SparseMatrix,
    ) -> Result<Self> {
        let dim = d.nrows();
        for (name, m) in [("D", &d), ("K", &k), ("N", &n)] {
            if m.nrows() != dim || m.ncols() != dim {
                return Err(Error::InvalidArgument(format!(
                    "{name} is {}×{}, expected {dim}×{dim}",
                    m.nrows(),
                    m.ncols()
                )));
            }
        }
        if h.nrows() != dim || h.ncols() != dim * dim {
            return Err(Error::InvalidArgument(format!(
                "H is {}×{}, expected {dim}×{}",
                h.nrows(),
                h.ncols(),
                dim * dim
            )));
        }
        for (name, m) in [("F", &f), ("C", &c)] {
            if m.nrows() != dim || m.ncols() != 1 {
                return Err(Error::InvalidArgument(format!(
                    "{name} is {}×{}, expected {dim}×1 (single input and output only)",
                    m.nrows(),
                    m.ncols()
                )));
            }
        }
        Ok(QbSystem { d, k, n, h, f, c })
    }

    pub fn dim(&self) -> usize {
        self.d.nrows()
    }

    /// `σ D − K`.
    pub fn shifted(&self, sigma: f64) -> Result<SparseMatrix> {
        self.d.add_scaled(sigma, &self.k, -1.0)
    }
}

/// Projected model with dense blocks; `h` is `r × r²`.
#[derive(Debug, Clone)]
pub struct ReducedQb {
    pub d: DMatrix<f64>,
    pub k: DMatrix<f64>,
    pub n: DMatrix<f64>,
    pub h: DMatrix<f64>,
    pub f: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub u: DMatrix<f64>,
}

impl ReducedQb {
    pub fn r(&self) -> usize {
        self.u.ncols()
    }
}

#[derive(Debug, Clone)]
pub struct QbConfig {
    /// Interpolation points `σ₁ … σ_ℓ`.
    pub sigmas: Vec<f64>,
    pub p_moments: usize,
    pub q_moments: usize,
    pub gmres: GmresConfig,
    pub reuse: ReuseConfig,
    /// Columns of `[V W]` adding less than this (relative) are dropped.
    pub rank_tol: f64,
}

impl Default for QbConfig {
    fn default() -> Self {
        QbConfig {
            sigmas: vec![1.0, 10.0],
            p_moments: 1,
            q_moments: 1,
            gmres: GmresConfig::default(),
            reuse: ReuseConfig::default(),
            rank_tol: 1e-10,
        }
    }
}

impl QbConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sigmas.is_empty() {
            return Err(Error::Config("at least one interpolation point is required".into()));
        }
        for (i, s) in self.sigmas.iter().enumerate() {
            if !s.is_finite() || *s == 0.0 {
                return Err(Error::Config(format!("interpolation point σ_{} = {s} must be finite and nonzero", i + 1)));
            }
            if self.sigmas[..i].contains(s) {
                return Err(Error::Config(format!("interpolation point σ_{} = {s} is repeated", i + 1)));
            }
        }
        if !(self.rank_tol > 0.0) {
            return Err(Error::Config("rank_tol must be positive".into()));
        }
        self.gmres.validate()
    }
}

/// `Uᵀ H (U ⊗ U)` without forming `U ⊗ U`.
///
/// Row `a` of `H` is first contracted against `U ⊗ U` into an `r²` vector
/// (one `r²` outer-product update per nonzero), then scattered with `U[a, :]`.
pub fn kron_compress_quadratic(h: &SparseMatrix, u: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (n, r) = (u.nrows(), u.ncols());
    if h.nrows() != n {
        return Err(Error::dim("quadratic term rows", n, h.nrows()));
    }
    if h.ncols() != n * n {
        return Err(Error::dim("quadratic term columns", n * n, h.ncols()));
    }
    let mut out = DMatrix::zeros(r, r * r);
    let mut row_acc = vec![0.0; r * r];
    for a in 0..n {
        let (cols, vals) = h.row(a);
        if cols.is_empty() {
            continue;
        }
        row_acc.iter_mut().for_each(|x| *x = 0.0);
        for (&col, &v) in cols.iter().zip(vals) {
            let (b, c) = (col / n, col % n);
            for p in 0..r {
                let ubp = v * u[(b, p)];
                if ubp == 0.0 {
                    continue;
                }
                let dst = &mut row_acc[p * r..(p + 1) * r];
                for (q, d) in dst.iter_mut().enumerate() {
                    *d += ubp * u[(c, q)];
                }
            }
        }
        for t in 0..r {
            let ua = u[(a, t)];
            if ua == 0.0 {
                continue;
            }
            for (col, acc) in row_acc.iter().enumerate() {
                out[(t, col)] += ua * acc;
            }
        }
    }
    Ok(out)
}

/// Galerkin projection of every block onto `u` (orthonormal columns).
pub fn project_qb(sys: &QbSystem, u: &DMatrix<f64>) -> Result<ReducedQb> {
    let ut = u.transpose();
    let proj = |m: &SparseMatrix| -> DMatrix<f64> { &ut * crate::airga::apply_sparse(m, u) };
    Ok(ReducedQb {
        d: proj(&sys.d),
        k: proj(&sys.k),
        n: proj(&sys.n),
        h: kron_compress_quadratic(&sys.h, u)?,
        f: &ut * sys.f.to_dense(),
        c: &ut * sys.c.to_dense(),
        u: u.clone(),
    })
}

/// One side's coefficient matrices, right-hand side and moment count.
struct SideSystems<'a> {
    name: &'static str,
    mats: Vec<SparseMatrix>,
    shifts: Vec<f64>,
    /// Matrix multiplying the previous moment (`D` or `Dᵀ`).
    lift: &'a SparseMatrix,
    rhs: DMatrix<f64>,
    moments: usize,
}

/// Moments at one shift: one preconditioner, `moments + 1` solves.
fn moments_at(
    side: &SideSystems<'_>,
    i: usize,
    built: &crate::precond::Built,
    gmres: &GmresConfig,
) -> Result<(Vec<DMatrix<f64>>, ReportRow)> {
    let a = &side.mats[i];
    let mut row = ReportRow::new(1, i + 1, side.name, side.shifts[i], Some(built));
    let mut out = Vec::with_capacity(side.moments + 1);
    let mut rhs = side.rhs.clone();
    for j in 0..=side.moments {
        if j > 0 {
            rhs = crate::airga::apply_sparse(side.lift, out.last().unwrap());
        }
        let nrm = rhs.norm();
        if nrm > 0.0 {
            rhs /= nrm;
        }
        let name = side.name;
        let sigma = side.shifts[i];
        let x = solve_block(a, built, &rhs, gmres, &mut row, |_| {
            format!("{name} side, shift {sigma} (i = {}), moment j = {j}", i + 1)
        })?;
        out.push(x);
    }
    Ok((out, row))
}

fn run_side(
    side: &SideSystems<'_>,
    builder: &PrecondBuilder,
    gmres: &GmresConfig,
) -> Result<(Vec<DMatrix<f64>>, Vec<ReportRow>)> {
    let build = |i: usize, prev: Option<(&SparseMatrix, &PrecondChain)>| {
        builder
            .next(&side.mats[i], prev, Direction::Horizontal, (1, i), (1, i + 1))
            .map_err(|e| match e {
                Error::Singular(msg) => Error::Singular(format!(
                    "{} side shift {} (i = {}): {msg}",
                    side.name,
                    side.shifts[i],
                    i + 1
                )),
                other => other,
            })
    };
    let per_point: Vec<(Vec<DMatrix<f64>>, ReportRow)> = if builder.mode == PrecondMode::ReuseChain {
        let mut out = Vec::with_capacity(side.mats.len());
        let mut prev: Option<PrecondChain> = None;
        for i in 0..side.mats.len() {
            let link = match &prev {
                Some(c) => Some((&side.mats[i - 1], c)),
                None => None,
            };
            let built = build(i, link)?;
            out.push(moments_at(side, i, &built, gmres)?);
            prev = built.chain;
        }
        out
    } else {
        (0..side.mats.len())
            .into_par_iter()
            .map(|i| {
                let built = build(i, None)?;
                moments_at(side, i, &built, gmres)
            })
            .collect::<Result<_>>()?
    };
    // column order: all shifts for j = 0, then all shifts for j = 1, ...
    let mut cols = Vec::new();
    for j in 0..=side.moments {
        for (xs, _) in &per_point {
            cols.push(xs[j].clone());
        }
    }
    Ok((cols, per_point.into_iter().map(|(_, r)| r).collect()))
}

/// Reduce `sys`; the basis order is the rank of `[V W]`.
pub fn qbihomm_reduce(sys: &QbSystem, cfg: &QbConfig, mode: PrecondMode) -> Result<(ReducedQb, ReductionReport)> {
    cfg.validate()?;
    let start = Instant::now();
    let n = sys.dim();
    let builder = PrecondBuilder::new(mode, cfg.reuse);
    let d_t = sys.d.transpose();

    let v_side = SideSystems {
        name: "V",
        mats: cfg.sigmas.iter().map(|&s| sys.shifted(s)).collect::<Result<_>>()?,
        shifts: cfg.sigmas.clone(),
        lift: &sys.d,
        rhs: sys.f.to_dense(),
        moments: cfg.p_moments + cfg.q_moments,
    };
    let w_side = SideSystems {
        name: "W",
        mats: cfg
            .sigmas
            .iter()
            .map(|&s| sys.shifted(2.0 * s).map(|a| a.transpose()))
            .collect::<Result<_>>()?,
        shifts: cfg.sigmas.iter().map(|s| 2.0 * s).collect(),
        lift: &d_t,
        rhs: sys.c.to_dense(),
        moments: cfg.q_moments,
    };
    let (v_res, w_res) = rayon::join(
        || run_side(&v_side, &builder, &cfg.gmres),
        || run_side(&w_side, &builder, &cfg.gmres),
    );
    let (v_cols, v_rows) = v_res?;
    let (w_cols, w_rows) = w_res?;

    let mut basis = OrthoBasis::new(n, cfg.rank_tol);
    for x in v_cols.iter().chain(&w_cols) {
        basis.push(x.column(0).as_slice());
    }
    if basis.is_empty() {
        return Err(Error::Singular("all moment vectors vanished".into()));
    }
    let u = basis.to_matrix();
    let reduced = project_qb(sys, &u)?;

    let mut report = ReductionReport::new("qbihomm", mode);
    report.rows.extend(v_rows);
    report.rows.extend(w_rows);
    report.converged = true;
    report.sweeps = 1;
    report.reduced_order = u.ncols();
    report.final_points = cfg.sigmas.clone();
    let dropped = v_cols.len() + w_cols.len() - u.ncols();
    if dropped > 0 {
        log::info!("{dropped} dependent moment vectors dropped");
    }
    report.total_seconds = start.elapsed().as_secs_f64();
    Ok((reduced, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dense::solve;
    use crate::kron::dense_kron;
    use crate::precond::PrecondKind;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_sparse(n: usize, m: usize, density: f64, rng: &mut ChaCha8Rng) -> SparseMatrix {
        let mut t = Vec::new();
        for i in 0..n {
            for j in 0..m {
                if rng.gen::<f64>() < density {
                    t.push((i, j, rng.gen_range(-1.0..1.0)));
                }
            }
        }
        SparseMatrix::from_triplets(n, m, t).unwrap()
    }

    #[test]
    fn compress_zero_and_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let h = random_sparse(3, 9, 0.4, &mut rng);
        let eye = DMatrix::identity(3, 3);
        assert_eq!(kron_compress_quadratic(&h, &eye).unwrap(), h.to_dense());
        let u = DMatrix::from_fn(3, 2, |_, _| rng.gen_range(-1.0..1.0));
        let z = kron_compress_quadratic(&SparseMatrix::zeros(3, 9), &u).unwrap();
        assert_eq!(z, DMatrix::zeros(2, 4));
    }

    #[test]
    fn compress_matches_dense_kron() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let h = random_sparse(3, 9, 0.5, &mut rng);
        let u = DMatrix::from_fn(3, 2, |_, _| rng.gen_range(-1.0..1.0));
        let oracle = u.transpose() * h.to_dense() * dense_kron(&u, &u);
        let got = kron_compress_quadratic(&h, &u).unwrap();
        assert!((got - &oracle).norm() <= 1e-13 * oracle.norm());
    }

    #[test]
    fn trivial_scalar_structure() {
        let n = 4;
        let f = SparseMatrix::from_column(&[1.0, 2.0, 0.0, -1.0]);
        let sys = QbSystem::new(
            SparseMatrix::identity(n),
            SparseMatrix::identity(n).scale(-1.0),
            SparseMatrix::zeros(n, n),
            SparseMatrix::zeros(n, n * n),
            f.clone(),
            f.clone(),
        )
        .unwrap();
        let cfg = QbConfig {
            sigmas: vec![1.0],
            p_moments: 0,
            q_moments: 0,
            ..Default::default()
        };
        let (red, rep) = qbihomm_reduce(&sys, &cfg, PrecondMode::None).unwrap();
        // V = F/2 and W = F/3 are parallel, so U is the unit vector along F
        assert_eq!(red.r(), 1);
        let fv = f.to_dense();
        let unit = &fv / fv.norm();
        assert!((red.u.column(0).dot(&unit.column(0)).abs() - 1.0).abs() < 1e-12);
        assert!((red.d[(0, 0)] - 1.0).abs() < 1e-12);
        assert!((red.k[(0, 0)] + 1.0).abs() < 1e-12);
        assert!((red.f[(0, 0)].abs() - fv.norm()).abs() < 1e-12);
        assert_eq!(rep.rows.len(), 2);
    }

    fn random_system(n: usize, seed: u64) -> QbSystem {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut k = random_sparse(n, n, 0.4, &mut rng).to_dense();
        for i in 0..n {
            k[(i, i)] -= 3.0 + n as f64;
        }
        let mut d = random_sparse(n, n, 0.2, &mut rng).to_dense() * 0.1;
        for i in 0..n {
            d[(i, i)] += 1.0;
        }
        QbSystem::new(
            SparseMatrix::from_dense(&d, 0.0),
            SparseMatrix::from_dense(&k, 0.0),
            random_sparse(n, n, 0.3, &mut rng),
            random_sparse(n, n * n, 0.1, &mut rng),
            SparseMatrix::from_column(&(0..n).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<_>>()),
            SparseMatrix::from_column(&(0..n).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<_>>()),
        )
        .unwrap()
    }

    fn tight() -> GmresConfig {
        GmresConfig {
            rel_tol: 1e-13,
            ..Default::default()
        }
    }

    #[test]
    fn span_matches_dense_krylov_vectors() {
        let n = 5;
        let sys = random_system(n, 3);
        let cfg = QbConfig {
            sigmas: vec![0.5, 2.0],
            p_moments: 1,
            q_moments: 1,
            gmres: tight(),
            ..Default::default()
        };
        let (red, _) = qbihomm_reduce(&sys, &cfg, PrecondMode::ReuseChain).unwrap();
        let (d, k) = (sys.d.to_dense(), sys.k.to_dense());
        let mut cols: Vec<DMatrix<f64>> = Vec::new();
        for &s in &cfg.sigmas {
            let a = &d * s - &k;
            let mut x = solve(&a, &sys.f.to_dense()).unwrap();
            cols.push(x.clone());
            for _ in 0..2 {
                x = solve(&a, &(&d * &x)).unwrap();
                cols.push(x.clone());
            }
            let at = (&d * (2.0 * s) - &k).transpose();
            let y = solve(&at, &sys.c.to_dense()).unwrap();
            cols.push(y.clone());
            cols.push(solve(&at, &(d.transpose() * y)).unwrap());
        }
        let u = &red.u;
        assert!((u.transpose() * u - DMatrix::<f64>::identity(u.ncols(), u.ncols())).norm() < 1e-10);
        let mut oracle = OrthoBasis::new(n, 1e-10);
        for c in &cols {
            oracle.push(c.column(0).as_slice());
            let rel = (c - u * (u.transpose() * c)).norm() / c.norm();
            assert!(rel < 1e-9, "oracle vector outside span: {rel:e}");
        }
        assert_eq!(oracle.len(), u.ncols());
    }

    #[test]
    fn reduced_blocks_recomputable() {
        let n = 6;
        let sys = random_system(n, 4);
        let cfg = QbConfig {
            sigmas: vec![1.0, 3.0],
            gmres: tight(),
            ..Default::default()
        };
        let (red, _) = qbihomm_reduce(&sys, &cfg, PrecondMode::FreshSpai).unwrap();
        let u = &red.u;
        let ut = u.transpose();
        assert!((&red.d - &ut * sys.d.to_dense() * u).norm() < 1e-10);
        assert!((&red.k - &ut * sys.k.to_dense() * u).norm() < 1e-10);
        assert!((&red.n - &ut * sys.n.to_dense() * u).norm() < 1e-10);
        assert!((&red.h - &ut * sys.h.to_dense() * dense_kron(u, u)).norm() < 1e-10);
        assert!((&red.c - &ut * sys.c.to_dense()).norm() < 1e-12);
    }

    #[test]
    fn rebuild_counts() {
        let sys = random_system(8, 5);
        let cfg = QbConfig {
            sigmas: vec![1.0, 2.0, 4.0],
            gmres: tight(),
            ..Default::default()
        };
        for (mode, fresh, updates) in [(PrecondMode::FreshSpai, 6, 0), (PrecondMode::ReuseChain, 2, 4)] {
            let (_, rep) = qbihomm_reduce(&sys, &cfg, mode).unwrap();
            let t = rep.totals();
            assert_eq!((t.fresh_builds, t.update_builds), (fresh, updates), "{mode}");
            for side in ["V", "W"] {
                let rows: Vec<_> = rep.rows.iter().filter(|r| r.side == side).collect();
                assert_eq!(rows.len(), 3);
                let moments = if side == "V" { 3 } else { 2 };
                assert!(rows.iter().all(|r| r.solves == moments));
                if mode == PrecondMode::ReuseChain {
                    assert_eq!(rows[0].precond_kind, PrecondKind::Fresh);
                    assert!(rows[1..].iter().all(|r| r.precond_kind == PrecondKind::Horizontal));
                }
            }
        }
    }

    #[test]
    fn config_validation() {
        let mut cfg = QbConfig::default();
        cfg.sigmas = vec![1.0, 1.0];
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        cfg.sigmas = vec![0.0];
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        cfg.sigmas = vec![];
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn rejects_bad_shapes() {
        let n = 3;
        let e = SparseMatrix::identity(n);
        let col = SparseMatrix::from_column(&[1.0, 0.0, 0.0]);
        assert!(QbSystem::new(e.clone(), e.clone(), e.clone(), SparseMatrix::zeros(n, n), col.clone(), col).is_err());
    }
}
