use nalgebra::{DMatrix, DVector};

use super::dense::{SpdFactor, DEFAULT_PIVOT_TOLERANCE};
use crate::error::{Error, Result};

/// A symmetric matrix represented as `diag(d) + G G^T` with `G` of shape `n x r`, `r << n`.
#[derive(Debug, Clone, PartialEq)]
pub struct LowRankPlusDiag {
    pub diag: DVector<f64>,
    pub factors: DMatrix<f64>,
}

impl LowRankPlusDiag {
    pub fn new(diag: DVector<f64>, factors: DMatrix<f64>) -> Result<Self> {
        if factors.nrows() != diag.len() {
            return Err(Error::invalid(format!(
                "low-rank factor has {} rows, diagonal has {}",
                factors.nrows(),
                diag.len()
            )));
        }
        if diag.iter().chain(factors.iter()).any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite entry in low-rank-plus-diagonal matrix"));
        }
        Ok(LowRankPlusDiag { diag, factors })
    }

    pub fn diagonal(diag: DVector<f64>) -> Self {
        let n = diag.len();
        LowRankPlusDiag {
            diag,
            factors: DMatrix::zeros(n, 0),
        }
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn rank(&self) -> usize {
        self.factors.ncols()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = &self.factors * self.factors.transpose();
        for (i, d) in self.diag.iter().enumerate() {
            m[(i, i)] += d;
        }
        m
    }

    pub fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        let mut out = self.diag.component_mul(v);
        if self.rank() > 0 {
            let t = self.factors.tr_mul(v);
            out.gemv(1.0, &self.factors, &t, 1.0);
        }
        out
    }

    /// Inverse via the Woodbury identity. Every diagonal entry must be at least `floor`.
    pub fn invert(&self, floor: f64) -> Result<WoodburyInverse> {
        if !(floor > 0.0) {
            return Err(Error::invalid("diagonal floor must be positive"));
        }
        if let Some((i, d)) = self
            .diag
            .iter()
            .enumerate()
            .find(|(_, d)| !(**d >= floor))
        {
            return Err(Error::SingularCovariance(format!(
                "diagonal entry {i} is {d:e}, below the floor {floor:e}"
            )));
        }
        let inv_diag = self.diag.map(|d| 1.0 / d);
        let mut scaled = self.factors.clone();
        for mut col in scaled.column_iter_mut() {
            col.component_mul_assign(&inv_diag);
        }
        let r = self.rank();
        let mut capacitance = self.factors.tr_mul(&scaled);
        for i in 0..r {
            capacitance[(i, i)] += 1.0;
        }
        super::dense::symmetrize(&mut capacitance);
        let capacitance = SpdFactor::new(&capacitance, DEFAULT_PIVOT_TOLERANCE)?;
        Ok(WoodburyInverse {
            inv_diag,
            scaled_factors: scaled,
            capacitance,
        })
    }
}

/// `(D + G G^T)^{-1} = D^{-1} - D^{-1} G (I + G^T D^{-1} G)^{-1} G^T D^{-1}`.
#[derive(Debug, Clone)]
pub struct WoodburyInverse {
    inv_diag: DVector<f64>,
    scaled_factors: DMatrix<f64>,
    capacitance: SpdFactor,
}

impl WoodburyInverse {
    pub fn dim(&self) -> usize {
        self.inv_diag.len()
    }

    pub fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        let mut out = self.inv_diag.component_mul(v);
        if self.scaled_factors.ncols() > 0 {
            let t = self.capacitance.solve(&self.scaled_factors.tr_mul(v));
            out.gemv(-1.0, &self.scaled_factors, &t, 1.0);
        }
        out
    }

    pub fn apply_matrix(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = m.clone();
        for mut col in out.column_iter_mut() {
            col.component_mul_assign(&self.inv_diag);
        }
        if self.scaled_factors.ncols() > 0 {
            let t = self
                .capacitance
                .solve_matrix(&self.scaled_factors.tr_mul(m));
            out.gemm(-1.0, &self.scaled_factors, &t, 1.0);
        }
        out
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        self.apply_matrix(&DMatrix::identity(self.dim(), self.dim()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn empty_factor_is_diagonal_inverse() {
        let s = LowRankPlusDiag::diagonal(DVector::from_vec(vec![1.0, 1.0]));
        let inv = s.invert(1e-12).unwrap();
        let v = DVector::from_vec(vec![0.3, -2.0]);
        assert_eq!(inv.apply(&v), v);
    }

    #[test]
    fn two_by_two_hand_inversion() {
        // [[2,1],[1,2]]^{-1} (1,0) = (2/3, -1/3)
        let s = LowRankPlusDiag::new(
            DVector::from_vec(vec![1.0, 1.0]),
            DMatrix::from_column_slice(2, 1, &[1.0, 1.0]),
        )
        .unwrap();
        let x = s.invert(1e-12).unwrap().apply(&DVector::from_vec(vec![1.0, 0.0]));
        assert_relative_eq!(x[0], 2.0 / 3.0, epsilon = 1e-15);
        assert_relative_eq!(x[1], -1.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn matches_dense_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 50;
        let diag = DVector::from_fn(n, |_, _| rng.random_range(0.5..2.0));
        let g = DMatrix::from_fn(n, 3, |_, _| rng.random_range(-1.0..1.0));
        let s = LowRankPlusDiag::new(diag, g).unwrap();
        let dense_inv = s.to_dense().try_inverse().unwrap();
        let inv = s.invert(1e-9).unwrap();
        let err = (inv.to_dense() - &dense_inv).amax();
        assert!(err <= 1e-10 * dense_inv.amax(), "err {err:e}");
    }

    #[test]
    fn below_floor_is_singular() {
        let s = LowRankPlusDiag::diagonal(DVector::from_vec(vec![1.0, 1e-13]));
        assert!(matches!(s.invert(1e-12), Err(Error::SingularCovariance(_))));
    }
}
