//! Synthetic test systems.
//!
//! [`generate_disc_brake_like`] builds a rotating-disc style second-order
//! model: a short chain of compliant "pad" masses, driven and observed at its
//! free end, attached to a stiff 2-D grid of lumped masses. The stiffness is
//! `K_Ω = K_E + K_R + Ω² K_G` with an elastic part `K_E` whose grid edge
//! coefficients span several decades (so unpreconditioned Krylov solvers
//! struggle), a small skew-symmetric part `K_R` that makes the shifted
//! matrices non-symmetric, and a mass-like part `K_G`.
//!
//! The pad chain carries the few lightly damped resonances that fall in the
//! low-frequency band; the grid modes sit well above it.
//!
//! [`generate_bilinear`] and [`generate_qb`] build small diffusion-type
//! bilinear and quadratic-bilinear toys for the other two reduction methods.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::airga::SecondOrderSystem;
use crate::birka::BilinearSystem;
use crate::error::{Error, Result};
use crate::qbihomm::QbSystem;
use crate::sparse::SparseMatrix;

/// Shape parameters of [`generate_disc_brake_like_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiscBrakeParams {
    /// Grid stiffness scale; edge stiffnesses are additionally multiplied by
    /// the squared grid width so the lowest grid mode barely moves with `n`.
    pub stiffness: f64,
    /// Edge stiffnesses are `stiffness · 10^u`, `u` uniform in `[0, decades]`.
    pub decades: f64,
    /// Ground springs on the clamped edge, relative to `stiffness`.
    pub clamp: f64,
    /// Skew coupling magnitude relative to the local edge stiffness.
    pub skew: f64,
    /// Scale of the mass-like part `K_G`.
    pub gyro: f64,
    /// Length of the pad chain (capped at `n / 4`).
    pub pad_dofs: usize,
    /// Spring stiffness along the pad chain.
    pub pad_stiffness: f64,
}

impl Default for DiscBrakeParams {
    fn default() -> Self {
        DiscBrakeParams {
            stiffness: 3e8,
            decades: 4.0,
            clamp: 1.0,
            skew: 0.05,
            gyro: 1e3,
            pad_dofs: 6,
            pad_stiffness: 2.5e5,
        }
    }
}

/// Parts of a generated model before damping is applied.
#[derive(Debug, Clone)]
pub struct DiscBrakeParts {
    pub m: SparseMatrix,
    pub k_e: SparseMatrix,
    pub k_r: SparseMatrix,
    pub k_g: SparseMatrix,
}

/// Grid neighbours `(i, j)` with `i < j` for `n` nodes laid out row by row
/// on a grid `nx` wide.
fn grid_edges(n: usize) -> (usize, Vec<(usize, usize)>) {
    let nx = ((n as f64).sqrt().floor() as usize).max(1);
    let mut edges = Vec::with_capacity(2 * n);
    for i in 0..n {
        if i % nx + 1 < nx && i + 1 < n {
            edges.push((i, i + 1));
        }
        if i + nx < n {
            edges.push((i, i + nx));
        }
    }
    (nx, edges)
}

/// Unknowns `0..pad` form the pad chain (unknown 0 is its free end, the last
/// one is attached to the first grid node); the grid occupies the rest.
pub fn disc_brake_parts(n: usize, params: &DiscBrakeParams, seed: u64) -> Result<DiscBrakeParts> {
    if n < 4 {
        return Err(Error::InvalidArgument(format!("generator needs n ≥ 4, got {n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pad = params.pad_dofs.min(n / 4);
    let (nx, grid) = grid_edges(n - pad);
    let scale = params.stiffness * (nx * nx) as f64;

    let masses: Vec<f64> = (0..n).map(|_| rng.gen_range(0.5..1.5)).collect();

    let mut ke = Vec::with_capacity(4 * (grid.len() + pad) + n);
    let mut kr = Vec::with_capacity(2 * (grid.len() + pad));
    let mut spring = |i: usize, j: usize, k: f64, rng: &mut ChaCha8Rng| {
        ke.extend([(i, i, k), (j, j, k), (i, j, -k), (j, i, -k)]);
        let g = params.skew * k * rng.gen_range(-1.0..1.0);
        kr.extend([(i, j, g), (j, i, -g)]);
    };
    for i in 0..pad {
        let k = params.pad_stiffness * rng.gen_range(0.8..1.25);
        spring(i, i + 1, k, &mut rng);
    }
    for &(i, j) in &grid {
        let k = scale * 10f64.powf(rng.gen_range(0.0..=params.decades));
        spring(pad + i, pad + j, k, &mut rng);
    }
    // clamp the first grid column so K_E is positive definite
    for i in (pad..n).step_by(nx) {
        ke.push((i, i, params.clamp * scale));
    }
    Ok(DiscBrakeParts {
        m: SparseMatrix::from_diagonal(&masses),
        k_e: SparseMatrix::from_triplets(n, n, ke)?,
        k_r: SparseMatrix::from_triplets(n, n, kr)?,
        k_g: SparseMatrix::from_diagonal(&masses.iter().map(|m| params.gyro * m).collect::<Vec<_>>()),
    })
}

/// Disc-brake style system with default shape parameters.
pub fn generate_disc_brake_like(n: usize, omega: f64, alpha: f64, beta: f64, seed: u64) -> Result<SecondOrderSystem> {
    generate_disc_brake_like_with(n, omega, alpha, beta, seed, &DiscBrakeParams::default())
}

/// `K_Ω = K_E + K_R + Ω² K_G`, `D = α M + β K_Ω`, `F = C = e₁`.
pub fn generate_disc_brake_like_with(
    n: usize,
    omega: f64,
    alpha: f64,
    beta: f64,
    seed: u64,
    params: &DiscBrakeParams,
) -> Result<SecondOrderSystem> {
    let parts = disc_brake_parts(n, params, seed)?;
    let k = SparseMatrix::linear_combination(&[(1.0, &parts.k_e), (1.0, &parts.k_r), (omega * omega, &parts.k_g)])?;
    let d = SparseMatrix::linear_combination(&[(alpha, &parts.m), (beta, &k)])?;
    let e1 = SparseMatrix::from_triplets(n, 1, [(0, 0, 1.0)])?;
    let sys = SecondOrderSystem::new(parts.m, d, k, e1.clone(), e1)?;
    Ok(sys.with_proportional_damping(alpha, beta)?.0)
}

/// Convection-diffusion on a grid with `m` boundary-controlled inputs.
///
/// `K = −(L + I) + convection` where `L` is the grid graph Laplacian, so every
/// eigenvalue has real part ≤ −1. Input `j` acts on its own slice of the
/// first grid row through `F` and, scaled by `coupling`, through `Nⱼ`.
/// The output is the mean state.
pub fn generate_bilinear(n: usize, m: usize, coupling: f64, seed: u64) -> Result<BilinearSystem> {
    if n < 4 || m == 0 || m > n {
        return Err(Error::InvalidArgument(format!("bilinear generator needs n ≥ 4 and 1 ≤ m ≤ n, got n = {n}, m = {m}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (nx, edges) = grid_edges(n);
    let mut k = Vec::with_capacity(4 * edges.len() + n);
    for i in 0..n {
        k.push((i, i, -1.0));
    }
    for &(i, j) in &edges {
        let w = rng.gen_range(0.5..2.0);
        let v = 0.3 * w * rng.gen_range(-1.0..1.0);
        k.extend([(i, i, -w), (j, j, -w), (i, j, w + v), (j, i, w - v)]);
    }
    let k = SparseMatrix::from_triplets(n, n, k)?;

    let width = nx.min(n);
    let mut f = Vec::new();
    let mut ns = Vec::with_capacity(m);
    for j in 0..m {
        let lo = j * width / m;
        let hi = ((j + 1) * width / m).max(lo + 1);
        let nodes: Vec<usize> = (lo..hi).collect();
        let scale = 1.0 / (nodes.len() as f64).sqrt();
        f.extend(nodes.iter().map(|&i| (i, j, scale)));
        ns.push(SparseMatrix::from_triplets(n, n, nodes.iter().map(|&i| (i, i, -coupling)))?);
    }
    let f = SparseMatrix::from_triplets(n, m, f)?;
    let c = SparseMatrix::from_triplets(n, 1, (0..n).map(|i| (i, 0, 1.0 / n as f64)))?;
    BilinearSystem::new(k, ns, f, c)
}

/// Chain of nonlinear resistor-capacitor stages: `D = I`, `K` a stable
/// tridiagonal with random conductances, a bilinear input coupling at the
/// first node and quadratic terms `x_a x_{a+1}` scaled by `gamma`.
pub fn generate_qb(n: usize, gamma: f64, seed: u64) -> Result<QbSystem> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!("QB generator needs n ≥ 2, got {n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut k = Vec::with_capacity(4 * n);
    for i in 0..n {
        k.push((i, i, -0.5));
    }
    for i in 0..n - 1 {
        let g = rng.gen_range(0.5..2.0);
        k.extend([(i, i, -g), (i + 1, i + 1, -g), (i, i + 1, g), (i + 1, i, g)]);
    }
    let mut h = Vec::with_capacity(2 * n);
    for a in 0..n - 1 {
        let v = gamma * rng.gen_range(0.5..1.5);
        h.push((a, a * n + a + 1, -v));
        h.push((a + 1, a * n + a + 1, v));
    }
    QbSystem::new(
        SparseMatrix::identity(n),
        SparseMatrix::from_triplets(n, n, k)?,
        SparseMatrix::from_triplets(n, n, [(0, 0, -0.5)])?,
        SparseMatrix::from_triplets(n, n * n, h)?,
        SparseMatrix::from_triplets(n, 1, [(0, 0, 1.0)])?,
        SparseMatrix::from_triplets(n, 1, [(0, 0, 1.0)])?,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn no_damping_gives_zero_d() {
        let sys = generate_disc_brake_like(16, 2.0 * std::f64::consts::PI, 0.0, 0.0, 1).unwrap();
        assert_eq!(sys.d.frobenius_norm(), 0.0);
    }

    #[test]
    fn zero_omega_drops_gyroscopic_part() {
        let p = DiscBrakeParams::default();
        let parts = disc_brake_parts(20, &p, 3).unwrap();
        let sys = generate_disc_brake_like(20, 0.0, 0.05, 5e-6, 3).unwrap();
        let expect = parts.k_e.add_scaled(1.0, &parts.k_r, 1.0).unwrap();
        assert_eq!(sys.k.to_dense(), expect.to_dense());
    }

    #[test]
    fn deterministic() {
        let a = generate_disc_brake_like(30, 1.0, 0.05, 5e-6, 9).unwrap();
        let b = generate_disc_brake_like(30, 1.0, 0.05, 5e-6, 9).unwrap();
        assert_eq!(a.k, b.k);
        assert_eq!(a.m, b.m);
        assert_eq!(a.d, b.d);
    }

    #[test]
    fn damping_is_proportional() {
        let (alpha, beta) = (5e-2, 5e-6);
        let sys = generate_disc_brake_like(50, 2.0 * std::f64::consts::PI, alpha, beta, 4).unwrap();
        let fit = SparseMatrix::linear_combination(&[(1.0, &sys.d), (-alpha, &sys.m), (-beta, &sys.k)]).unwrap();
        assert!(fit.frobenius_norm() <= 1e-12 * sys.d.frobenius_norm());
    }

    #[test]
    fn stiffness_is_nonsymmetric_and_mass_positive() {
        let sys = generate_disc_brake_like(25, 2.0 * std::f64::consts::PI, 0.05, 5e-6, 5).unwrap();
        assert!(sys.m.diagonal().iter().all(|v| *v > 0.0));
        assert_ne!(sys.k, sys.k.transpose());
    }

    #[test]
    fn rejects_tiny_n() {
        assert!(generate_disc_brake_like(3, 1.0, 0.0, 0.0, 0).is_err());
    }

    #[test]
    fn bilinear_toy_is_stable() {
        let sys = generate_bilinear(40, 2, 0.5, 1).unwrap();
        assert_eq!((sys.dim(), sys.inputs(), sys.outputs()), (40, 2, 1));
        let eig = crate::dense::eigenvalues(&sys.k.to_dense()).unwrap();
        assert!(eig.iter().all(|l| l.re <= -1.0 + 1e-9));
    }

    #[test]
    fn qb_toy_shapes() {
        let sys = generate_qb(10, 0.1, 2).unwrap();
        assert_eq!(sys.h.ncols(), 100);
        let eig = crate::dense::eigenvalues(&sys.k.to_dense()).unwrap();
        assert!(eig.iter().all(|l| l.re < 0.0));
    }
}
