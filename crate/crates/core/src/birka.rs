//! Bilinear iterative rational Krylov reduction of
//!
//! ```text
//! ẋ = K x + Σⱼ Nⱼ x uⱼ + F u,   y = Cᵀ x.
//! ```
//!
//! Every sweep diagonalizes the current reduced `Ǩ = R Λ R⁻¹`, solves two
//! `n·r`-dimensional Kronecker-structured systems for the trial and test
//! bases and projects. The systems are the generalized Sylvester equations
//!
//! ```text
//! K V + V Ǩᵀ + Σⱼ Nⱼ V Ňⱼᵀ + F F̌ᵀ = 0
//! Kᵀ W + W Ǩ + Σⱼ Nⱼᵀ W Ňⱼ + C Č = 0
//! ```
//!
//! written in the eigenbasis of `Ǩ`, where `Λ` is (block) diagonal and the
//! couplings become `Mⱼ = R⁻¹ Ňⱼ R`. Complex eigenvalue pairs stay in real 2×2 block form,
//! so `Λ` is block diagonal rather than diagonal; the test side then carries
//! `Λᵀ`.
//!
//! The Kronecker systems change from sweep to sweep only through the reduced
//! quantities, so with [`PrecondMode::ReuseChain`] each side keeps one chain:
//! a fresh approximate inverse in the first sweep and one update factor per
//! later sweep, computed on the explicitly assembled operators.

use std::time::Instant;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::airga::apply_sparse;
use crate::chain::{Direction, PrecondChain};
use crate::dense::{real_block_diagonalize, solve, OrthoBasis};
use crate::error::{Error, Result};
use crate::gmres::{gmres_right_preconditioned, GmresConfig};
use crate::kron::{KroneckerOperator, DEFAULT_ASSEMBLY_CAP};
use crate::operator::LinearOperator;
use crate::precond::{Built, PrecondBuilder, PrecondMode, ReuseConfig};
use crate::report::{ReductionReport, ReportRow};
use crate::sparse::SparseMatrix;

#[derive(Debug, Clone)]
pub struct BilinearSystem {
    pub k: SparseMatrix,
    pub n: Vec<SparseMatrix>,
    /// `n × m`.
    pub f: SparseMatrix,
    /// `n × q`.
    pub c: SparseMatrix,
}

impl BilinearSystem {
    pub fn new(k: SparseMatrix, n: Vec<SparseMatrix>, f: SparseMatrix, c: SparseMatrix) -> Result<Self> {
        let dim = k.nrows();
        if !k.is_square() {
            return Err(Error::InvalidArgument("K must be square".into()));
        }
        if n.is_empty() || n.len() != f.ncols() {
            return Err(Error::InvalidArgument(format!(
                "need one bilinear coupling per input: {} couplings, {} inputs",
                n.len(),
                f.ncols()
            )));
        }
        if n.iter().any(|nj| nj.nrows() != dim || nj.ncols() != dim) {
            return Err(Error::InvalidArgument(format!("every Nⱼ must be {dim}×{dim}")));
        }
        if f.nrows() != dim || c.nrows() != dim || c.ncols() == 0 {
            return Err(Error::InvalidArgument(format!("F and C need {dim} rows and at least one column")));
        }
        Ok(BilinearSystem { k, n, f, c })
    }

    pub fn dim(&self) -> usize {
        self.k.nrows()
    }

    pub fn inputs(&self) -> usize {
        self.f.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.c.ncols()
    }
}

/// Reduced bilinear model plus the bases it came from.
#[derive(Debug, Clone)]
pub struct BirkaState {
    pub k: DMatrix<f64>,
    pub n: Vec<DMatrix<f64>>,
    /// `r × m`.
    pub f: DMatrix<f64>,
    /// `r × q` (the reduced output map is `Ĉᵀ = Cᵀ V`).
    pub c: DMatrix<f64>,
    /// Eigenvalues of `k`, ordered by real part then imaginary magnitude.
    pub lambda: Vec<Complex64>,
    /// Completed sweeps.
    pub sweep: usize,
    /// Trial and test bases (empty for an initial guess).
    pub v: DMatrix<f64>,
    pub w: DMatrix<f64>,
}

impl BirkaState {
    pub fn r(&self) -> usize {
        self.k.nrows()
    }

    /// Diagonal `Ǩ` with eigenvalues `−logspace(lo, hi)` spanning the
    /// magnitude range of `K`'s spectrum, `Ň = 0`, and random `F̌`, `Č` of
    /// unit Frobenius norm.
    pub fn initial_guess(sys: &BilinearSystem, r: usize, seed: u64) -> Result<Self> {
        if r == 0 || r >= sys.dim() {
            return Err(Error::InvalidArgument(format!("reduced order must be in 1..{}", sys.dim())));
        }
        let (lo, hi) = spectrum_range(&sys.k)?;
        let lambda: Vec<f64> = if r == 1 {
            vec![-(lo * hi).sqrt()]
        } else {
            (0..r)
                .map(|i| -(lo.ln() + (hi.ln() - lo.ln()) * i as f64 / (r - 1) as f64).exp())
                .collect()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut unit = |rows: usize, cols: usize| {
            let m = DMatrix::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0));
            let nrm = m.norm();
            m / nrm
        };
        let f = unit(r, sys.inputs());
        let c = unit(r, sys.outputs());
        let k = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(lambda.clone()));
        let mut lam: Vec<Complex64> = lambda.iter().map(|v| Complex64::new(*v, 0.0)).collect();
        lam.sort_by(|a, b| a.re.total_cmp(&b.re));
        Ok(BirkaState {
            k,
            n: vec![DMatrix::zeros(r, r); sys.n.len()],
            f,
            c,
            lambda: lam,
            sweep: 0,
            v: DMatrix::zeros(0, 0),
            w: DMatrix::zeros(0, 0),
        })
    }
}

/// Estimated `(min, max)` eigenvalue magnitudes of `K`: power iteration
/// for the largest, inverse iteration (preconditioned GMRES) for the
/// smallest.
fn spectrum_range(k: &SparseMatrix) -> Result<(f64, f64)> {
    let n = k.nrows();
    let start: Vec<f64> = (0..n).map(|i| 1.0 + (i % 7) as f64 * 0.1).collect();
    let normalize = |v: &mut Vec<f64>| {
        let s = crate::dense::norm2(v);
        v.iter_mut().for_each(|x| *x /= s);
        s
    };
    let mut v = start.clone();
    normalize(&mut v);
    let mut hi = 0.0;
    for _ in 0..30 {
        v = k.apply(&v);
        hi = normalize(&mut v);
        if hi == 0.0 {
            return Err(Error::Singular("K is zero".into()));
        }
    }
    let p = crate::spai::spai_build(k, &Default::default())?.matrix;
    let cfg = GmresConfig {
        rel_tol: 1e-4,
        max_iter: 500,
        record_history: false,
    };
    let mut v = start;
    normalize(&mut v);
    let mut inv = 0.0;
    for _ in 0..8 {
        match gmres_right_preconditioned(k, &p, &v, &cfg) {
            Ok((x, _)) => {
                v = x;
                inv = normalize(&mut v);
            }
            Err(_) => break,
        }
    }
    let lo = if inv > 0.0 { 1.0 / inv } else { hi * 1e-3 };
    Ok((lo.min(hi), hi))
}

#[derive(Debug, Clone)]
pub struct BirkaConfig {
    pub r: usize,
    /// Relative change of the sorted reduced eigenvalues that ends the loop.
    pub tol: f64,
    pub max_sweeps: usize,
    pub gmres: GmresConfig,
    pub reuse: ReuseConfig,
    /// Nonzero cap for explicit assembly of the Kronecker operators.
    pub assembly_cap: usize,
    pub rank_tol: f64,
    /// Seed for the perturbation used when `Ǩ` is not diagonalizable.
    pub seed: u64,
}

impl Default for BirkaConfig {
    fn default() -> Self {
        BirkaConfig {
            r: 4,
            tol: 1e-4,
            max_sweeps: 50,
            gmres: GmresConfig::default(),
            reuse: ReuseConfig::default(),
            assembly_cap: DEFAULT_ASSEMBLY_CAP,
            rank_tol: 1e-10,
            seed: 0,
        }
    }
}

/// Explicit sparse form of a Kronecker operator, limited to `cap` nonzeros.
pub fn birka_assemble_explicit(op: &KroneckerOperator, cap: usize) -> Result<SparseMatrix> {
    op.assemble_explicit(cap)
}

/// The two Kronecker operators and right-hand sides of one sweep.
struct SweepSystems {
    v_op: KroneckerOperator,
    v_rhs: Vec<f64>,
    w_op: KroneckerOperator,
    w_rhs: Vec<f64>,
}

fn sweep_systems(
    sys: &BilinearSystem,
    sys_t: &(SparseMatrix, Vec<SparseMatrix>),
    state: &BirkaState,
    r_mat: &DMatrix<f64>,
    lam: &DMatrix<f64>,
) -> Result<SweepSystems> {
    let r = state.r();
    let r_inv = solve(r_mat, &DMatrix::identity(r, r))?;
    let r_inv_t = r_inv.transpose();
    // in the eigenbasis the reduced couplings become Mⱼ = R⁻¹ Ňⱼ R, and
    // F̌̌ = F̌ᵀ R⁻ᵀ, Č̌ = Ĉᵀ R
    let m: Vec<DMatrix<f64>> = state.n.iter().map(|nj| &r_inv * nj * r_mat).collect();
    let f_hat = state.f.transpose() * &r_inv_t;
    let c_hat = state.c.transpose() * r_mat;

    // trial side: −Λ ⊗ I − I ⊗ K − Σ Mⱼ ⊗ Nⱼ
    let v_op = KroneckerOperator::new(
        lam.clone(),
        sys.k.clone(),
        m.iter().map(|mj| mj.transpose()).zip(sys.n.iter().cloned()).collect(),
    )?;
    // test side: −Λᵀ ⊗ I − I ⊗ Kᵀ − Σ Mⱼᵀ ⊗ Nⱼᵀ
    let w_op = KroneckerOperator::new(
        lam.transpose(),
        sys_t.0.clone(),
        m.iter().cloned().zip(sys_t.1.iter().cloned()).collect(),
    )?;
    let v_rhs = sys.f.to_dense() * f_hat;
    let w_rhs = sys.c.to_dense() * c_hat;
    Ok(SweepSystems {
        v_op,
        v_rhs: v_rhs.as_slice().to_vec(),
        w_op,
        w_rhs: w_rhs.as_slice().to_vec(),
    })
}

/// Diagonalize, perturbing once on failure.
fn diagonalize(k: &DMatrix<f64>, seed: u64) -> Result<(DMatrix<f64>, DMatrix<f64>, Vec<Complex64>)> {
    match real_block_diagonalize(k) {
        Ok(out) => Ok(out),
        Err(first) => {
            log::warn!("reduced matrix not diagonalizable ({first}); perturbing and retrying");
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let scale = 1e-8 * k.norm().max(f64::MIN_POSITIVE);
            let perturbed = k + DMatrix::from_fn(k.nrows(), k.ncols(), |_, _| scale * rng.gen_range(-1.0..1.0));
            real_block_diagonalize(&perturbed)
        }
    }
}

fn relative_change(new: &[Complex64], old: &[Complex64]) -> f64 {
    let num: f64 = new.iter().zip(old).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
    let den: f64 = old.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
    if den > 0.0 {
        num / den
    } else {
        num
    }
}

/// Orthonormal `n × r` basis of the columns of `x`; errors if rank drops.
fn orth(x: &DMatrix<f64>, rank_tol: f64, side: &str) -> Result<DMatrix<f64>> {
    let mut basis = OrthoBasis::new(x.nrows(), rank_tol);
    for c in 0..x.ncols() {
        basis.push(x.column(c).as_slice());
    }
    if basis.len() < x.ncols() {
        return Err(Error::Singular(format!(
            "{side} basis has rank {} < {}",
            basis.len(),
            x.ncols()
        )));
    }
    Ok(basis.to_matrix())
}

/// Petrov–Galerkin projection with trial basis `v` and test basis `w`.
pub fn petrov_galerkin(sys: &BilinearSystem, v: &DMatrix<f64>, w: &DMatrix<f64>) -> Result<BirkaState> {
    let r = v.ncols();
    let wtv = w.transpose() * v;
    let inv = solve(&wtv, &DMatrix::identity(r, r)).map_err(|_| Error::Singular("WᵀV".into()))?;
    if inv.iter().any(|x| !x.is_finite()) {
        return Err(Error::Singular("WᵀV".into()));
    }
    let left = &inv * w.transpose();
    let k = &left * apply_sparse(&sys.k, v);
    let n = sys.n.iter().map(|nj| &left * apply_sparse(nj, v)).collect();
    let f = &left * sys.f.to_dense();
    let c = v.transpose() * sys.c.to_dense();
    let lambda = crate::dense::eigenvalues(&k)?;
    let mut lambda = lambda;
    lambda.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.abs().total_cmp(&b.im.abs())));
    Ok(BirkaState {
        k,
        n,
        f,
        c,
        lambda,
        sweep: 0,
        v: v.clone(),
        w: w.clone(),
    })
}

/// Per-side bookkeeping across sweeps.
struct Side {
    name: &'static str,
    prev: Option<(SparseMatrix, PrecondChain)>,
}

impl Side {
    #[allow(clippy::too_many_arguments)]
    fn solve(
        &mut self,
        op: &KroneckerOperator,
        rhs: &[f64],
        z: usize,
        builder: &PrecondBuilder,
        cfg: &BirkaConfig,
        report: &mut ReductionReport,
    ) -> Result<Vec<f64>> {
        let (built, explicit) = if builder.mode == PrecondMode::None {
            (builder.next(&SparseMatrix::identity(0), None, Direction::Vertical, (z, 1), (z, 1))?, None)
        } else {
            let a = birka_assemble_explicit(op, cfg.assembly_cap)?;
            let prev = self.prev.as_ref().map(|(m, c)| (m, c));
            let built = builder.next(&a, prev, Direction::Vertical, (z.saturating_sub(1), 1), (z, 1))?;
            (built, Some(a))
        };
        let mut row = ReportRow::new(z, 1, self.name, f64::NAN, Some(&built));
        let p = built.operator(op.dim());
        let out = gmres_right_preconditioned(op, &p, rhs, &cfg.gmres)
            .map_err(|e| e.at(format!("sweep {z}, side {}", self.name)));
        if let Ok((_, rep)) = &out {
            row.record(rep);
        }
        report.rows.push(row);
        if builder.mode == PrecondMode::ReuseChain {
            if let (Some(a), Built { chain: Some(c), .. }) = (explicit, &built) {
                self.prev = Some((a, c.clone()));
            }
        }
        out.map(|(x, _)| x)
    }
}

/// Run the bilinear reduction from `init`.
pub fn birka_reduce(
    sys: &BilinearSystem,
    init: &BirkaState,
    cfg: &BirkaConfig,
    mode: PrecondMode,
) -> Result<(BirkaState, ReductionReport)> {
    if init.r() != cfg.r || init.n.len() != sys.n.len() {
        return Err(Error::InvalidArgument(format!(
            "initial guess has order {} and {} couplings, expected {} and {}",
            init.r(),
            init.n.len(),
            cfg.r,
            sys.n.len()
        )));
    }
    if !(cfg.tol > 0.0) || cfg.max_sweeps == 0 {
        return Err(Error::Config("BIRKA tolerance must be positive and max_sweeps at least 1".into()));
    }
    cfg.gmres.validate()?;
    let start = Instant::now();
    let n = sys.dim();
    let r = cfg.r;
    let sys_t = (sys.k.transpose(), sys.n.iter().map(|m| m.transpose()).collect::<Vec<_>>());
    let builder = PrecondBuilder::new(mode, cfg.reuse);
    let mut report = ReductionReport::new("birka", mode);
    let mut v_side = Side { name: "V", prev: None };
    let mut w_side = Side { name: "W", prev: None };

    let mut state = init.clone();
    let mut prev_lambda: Option<Vec<Complex64>> = None;
    for z in 1..=cfg.max_sweeps + 1 {
        let (r_mat, lam, eig) = diagonalize(&state.k, cfg.seed.wrapping_add(z as u64))?;
        if let Some(prev) = &prev_lambda {
            let change = relative_change(&eig, prev);
            log::info!("sweep {}: eigenvalue change {change:.3e}", z - 1);
            if change < cfg.tol {
                report.converged = true;
                break;
            }
        }
        if z > cfg.max_sweeps {
            break;
        }
        report.sweeps = z;
        let s = sweep_systems(sys, &sys_t, &state, &r_mat, &lam)?;
        let v = v_side.solve(&s.v_op, &s.v_rhs, z, &builder, cfg, &mut report)?;
        let w = w_side.solve(&s.w_op, &s.w_rhs, z, &builder, cfg, &mut report)?;
        let v = orth(&DMatrix::from_column_slice(n, r, &v), cfg.rank_tol, "trial")?;
        let w = orth(&DMatrix::from_column_slice(n, r, &w), cfg.rank_tol, "test")?;
        state = petrov_galerkin(sys, &v, &w)?;
        state.sweep = z;
        prev_lambda = Some(eig);
    }
    if !report.converged {
        report.warn(format!("eigenvalues did not settle within {} sweeps", cfg.max_sweeps));
    }
    report.reduced_order = r;
    report.final_points = state.lambda.iter().map(|l| -l.re).collect();
    report.total_seconds = start.elapsed().as_secs_f64();
    Ok((state, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kron::dense_kron;

    fn toy(n: usize, coupling: f64) -> BilinearSystem {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, -3.0 - i as f64));
            if i + 1 < n {
                t.push((i, i + 1, 1.0));
                t.push((i + 1, i, 0.5));
            }
        }
        let k = SparseMatrix::from_triplets(n, n, t).unwrap();
        let nn = SparseMatrix::from_triplets(n, n, (0..n).map(|i| (i, (i + 1) % n, coupling))).unwrap();
        let f = SparseMatrix::from_triplets(n, 1, [(0, 0, 1.0)]).unwrap();
        let c = SparseMatrix::from_triplets(n, 1, [(n - 1, 0, 1.0), (0, 0, 1.0)]).unwrap();
        BilinearSystem::new(k, vec![nn], f, c).unwrap()
    }

    #[test]
    fn initial_guess_is_stable_and_sorted() {
        let sys = toy(8, 0.1);
        let st = BirkaState::initial_guess(&sys, 3, 1).unwrap();
        assert!(st.lambda.iter().all(|l| l.re < 0.0));
        assert!(st.lambda.windows(2).all(|w| w[0].re <= w[1].re));
        assert!((st.f.norm() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn converges_and_is_deterministic() {
        let sys = toy(6, 0.2);
        let cfg = BirkaConfig {
            r: 2,
            gmres: GmresConfig {
                rel_tol: 1e-12,
                ..Default::default()
            },
            ..Default::default()
        };
        let init = BirkaState::initial_guess(&sys, 2, 5).unwrap();
        let (a, rep) = birka_reduce(&sys, &init, &cfg, PrecondMode::FreshSpai).unwrap();
        let (b, _) = birka_reduce(&sys, &init, &cfg, PrecondMode::FreshSpai).unwrap();
        assert!(rep.converged, "{}", rep.summary());
        assert!(a.lambda.iter().all(|l| l.re < 0.0));
        for (x, y) in a.lambda.iter().zip(&b.lambda) {
            assert!((x - y).norm() <= 1e-10 * x.norm());
        }
    }

    fn residual_outside(x: &DMatrix<f64>, span: &DMatrix<f64>) -> f64 {
        let q = orth(span, 1e-12, "oracle").unwrap();
        (x - &q * (q.transpose() * x)).norm() / x.norm()
    }

    #[test]
    fn eigenbasis_systems_match_untransformed_sylvester() {
        let n = 5;
        let sys = toy(n, 0.3);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let v0 = DMatrix::from_fn(n, 3, |_, _| rng.gen_range(-1.0..1.0));
        let w0 = DMatrix::from_fn(n, 3, |_, _| rng.gen_range(-1.0..1.0));
        let st = petrov_galerkin(&sys, &orth(&v0, 1e-12, "v").unwrap(), &orth(&w0, 1e-12, "w").unwrap()).unwrap();
        let (r_mat, lam, _) = diagonalize(&st.k, 0).unwrap();
        let sys_t = (sys.k.transpose(), sys.n.iter().map(|m| m.transpose()).collect());
        let s = sweep_systems(&sys, &sys_t, &st, &r_mat, &lam).unwrap();

        let solve_op = |op: &KroneckerOperator, rhs: &[f64]| {
            let a = op.assemble_explicit(usize::MAX).unwrap().to_dense();
            let x = solve(&a, &DMatrix::from_column_slice(rhs.len(), 1, rhs)).unwrap();
            DMatrix::from_column_slice(n, 3, x.as_slice())
        };
        let v = solve_op(&s.v_op, &s.v_rhs);
        let w = solve_op(&s.w_op, &s.w_rhs);

        let (k, nn) = (sys.k.to_dense(), sys.n[0].to_dense());
        let eye_n = DMatrix::identity(n, n);
        let eye_r = DMatrix::identity(3, 3);
        // K V + V Ǩᵀ + N V Ňᵀ + F F̌ᵀ = 0
        let lv = -(dense_kron(&st.k, &eye_n) + dense_kron(&eye_r, &k) + dense_kron(&st.n[0], &nn));
        let bv = sys.f.to_dense() * st.f.transpose();
        let v_ref = solve(&lv, &DMatrix::from_column_slice(n * 3, 1, bv.as_slice())).unwrap();
        // Kᵀ W + W Ǩ + Nᵀ W Ň + C Č = 0
        let lw = -(dense_kron(&st.k.transpose(), &eye_n)
            + dense_kron(&eye_r, &k.transpose())
            + dense_kron(&st.n[0].transpose(), &nn.transpose()));
        let bw = sys.c.to_dense() * st.c.transpose();
        let w_ref = solve(&lw, &DMatrix::from_column_slice(n * 3, 1, bw.as_slice())).unwrap();

        let v_ref = DMatrix::from_column_slice(n, 3, v_ref.as_slice());
        let w_ref = DMatrix::from_column_slice(n, 3, w_ref.as_slice());
        assert!(residual_outside(&v_ref, &v) < 1e-10);
        assert!(residual_outside(&w_ref, &w) < 1e-10);
    }

    #[test]
    fn rejects_order_mismatch() {
        let sys = toy(6, 0.2);
        let init = BirkaState::initial_guess(&sys, 2, 5).unwrap();
        let cfg = BirkaConfig {
            r: 3,
            ..Default::default()
        };
        assert!(birka_reduce(&sys, &init, &cfg, PrecondMode::None).is_err());
    }
}
