//! Small dense second-order models and their H₂ norms.

use nalgebra::DMatrix;

use crate::dense::{eigenvalues, lyapunov, solve};
use crate::error::{Error, Result};

/// Reduced second-order model `M̂ ẍ + D̂ ẋ + K̂ x = F̂ u`, `y = Ĉᵀ x`, with the
/// basis `V` it was projected on.
#[derive(Debug, Clone)]
pub struct ReducedSecondOrder {
    pub m: DMatrix<f64>,
    pub d: DMatrix<f64>,
    pub k: DMatrix<f64>,
    pub f: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub v: DMatrix<f64>,
}

impl ReducedSecondOrder {
    pub fn r(&self) -> usize {
        self.m.nrows()
    }

    /// `Ĥ(s) = Ĉᵀ (s² M̂ + s D̂ + K̂)⁻¹ F̂`, a `q × m` matrix.
    pub fn transfer(&self, s: f64) -> Result<DMatrix<f64>> {
        let a = &self.m * (s * s) + &self.d * s + &self.k;
        let x = solve(&a, &self.f)?;
        Ok(self.c.transpose() * x)
    }

    /// First-order realization `(A, B, C)` of size `2r`:
    /// `A = [[0, I], [−M̂⁻¹K̂, −M̂⁻¹D̂]]`, `B = [0; M̂⁻¹F̂]`, `C = [Ĉᵀ, 0]`.
    pub fn first_order(&self) -> Result<FirstOrder> {
        let r = self.r();
        let minv_k = solve(&self.m, &self.k)?;
        let minv_d = solve(&self.m, &self.d)?;
        let minv_f = solve(&self.m, &self.f)?;
        let mut a = DMatrix::zeros(2 * r, 2 * r);
        a.view_mut((0, r), (r, r)).fill_with_identity();
        a.view_mut((r, 0), (r, r)).copy_from(&(-minv_k));
        a.view_mut((r, r), (r, r)).copy_from(&(-minv_d));
        let mut b = DMatrix::zeros(2 * r, self.f.ncols());
        b.view_mut((r, 0), (r, self.f.ncols())).copy_from(&minv_f);
        let mut c = DMatrix::zeros(self.c.ncols(), 2 * r);
        c.view_mut((0, 0), (self.c.ncols(), r)).copy_from(&self.c.transpose());
        Ok(FirstOrder { a, b, c })
    }

    /// Eigenvalues of the quadratic pencil `λ² M̂ + λ D̂ + K̂`.
    pub fn poles(&self) -> Result<Vec<num_complex::Complex64>> {
        eigenvalues(&self.first_order()?.a)
    }
}

/// Dense first-order model `ẋ = A x + B u`, `y = C x`.
#[derive(Debug, Clone)]
pub struct FirstOrder {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
}

impl FirstOrder {
    pub fn h2_norm(&self) -> Result<f64> {
        if self.a.nrows() == 0 {
            return Ok(0.0);
        }
        let max_re = eigenvalues(&self.a)?
            .iter()
            .map(|z| z.re)
            .fold(f64::NEG_INFINITY, f64::max);
        if !(max_re < 0.0) {
            return Err(Error::Unstable);
        }
        let p = lyapunov(&self.a, &(&self.b * self.b.transpose()))?;
        let val = (&self.c * p * self.c.transpose()).trace();
        Ok(val.max(0.0).sqrt())
    }

    /// Realization of `self − other`.
    pub fn difference(&self, other: &FirstOrder) -> Result<FirstOrder> {
        if self.b.ncols() != other.b.ncols() || self.c.nrows() != other.c.nrows() {
            return Err(Error::InvalidArgument("models have different input/output counts".into()));
        }
        let (n1, n2) = (self.a.nrows(), other.a.nrows());
        let mut a = DMatrix::zeros(n1 + n2, n1 + n2);
        a.view_mut((0, 0), (n1, n1)).copy_from(&self.a);
        a.view_mut((n1, n1), (n2, n2)).copy_from(&other.a);
        let mut b = DMatrix::zeros(n1 + n2, self.b.ncols());
        b.view_mut((0, 0), (n1, self.b.ncols())).copy_from(&self.b);
        b.view_mut((n1, 0), (n2, self.b.ncols())).copy_from(&other.b);
        let mut c = DMatrix::zeros(self.c.nrows(), n1 + n2);
        c.view_mut((0, 0), (self.c.nrows(), n1)).copy_from(&self.c);
        c.view_mut((0, n1), (self.c.nrows(), n2)).copy_from(&(-&other.c));
        Ok(FirstOrder { a, b, c })
    }
}

/// `‖G₁ − G₂‖_H₂ / ‖G₂‖_H₂`.
pub fn relative_h2_distance(g1: &ReducedSecondOrder, g2: &ReducedSecondOrder) -> Result<f64> {
    let f1 = g1.first_order()?;
    let f2 = g2.first_order()?;
    let denom = f2.h2_norm()?;
    let num = f1.difference(&f2)?.h2_norm()?;
    if denom == 0.0 {
        return Ok(if num == 0.0 { 0.0 } else { f64::INFINITY });
    }
    Ok(num / denom)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(m: f64, d: f64, k: f64) -> ReducedSecondOrder {
        ReducedSecondOrder {
            m: DMatrix::from_element(1, 1, m),
            d: DMatrix::from_element(1, 1, d),
            k: DMatrix::from_element(1, 1, k),
            f: DMatrix::from_element(1, 1, 1.0),
            c: DMatrix::from_element(1, 1, 1.0),
            v: DMatrix::from_element(1, 1, 1.0),
        }
    }

    #[test]
    fn oscillator_h2_closed_form() {
        // 1/(s² + d s + k) has ‖·‖²_H₂ = 1/(2 d k)
        let g = scalar(1.0, 0.5, 4.0);
        let h2 = g.first_order().unwrap().h2_norm().unwrap();
        assert!((h2 - (1.0f64 / (2.0 * 0.5 * 4.0)).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn distance_to_self_is_zero() {
        let g = scalar(2.0, 1.0, 3.0);
        assert!(relative_h2_distance(&g, &g).unwrap() < 1e-7);
    }

    #[test]
    fn undamped_is_unstable() {
        let g = scalar(1.0, 0.0, 1.0);
        assert!(matches!(g.first_order().unwrap().h2_norm(), Err(Error::Unstable)));
    }

    #[test]
    fn transfer_matches_scalar_formula() {
        let g = scalar(2.0, 1.0, 3.0);
        let s = 1.5;
        let h = g.transfer(s).unwrap()[(0, 0)];
        assert!((h - 1.0 / (2.0 * s * s + s + 3.0)).abs() < 1e-15);
    }
}
