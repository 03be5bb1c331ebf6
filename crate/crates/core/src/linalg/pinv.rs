use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Default relative singular-value cutoff for a matrix of the given shape.
pub fn default_cutoff(rows: usize, cols: usize) -> f64 {
    1e-10 * rows.max(cols).max(1) as f64
}

/// Singular value decomposition `m = U diag(s) V^T`, singular values in
/// decreasing order. Thin unless `full_v`, in which case `V` is square.
pub(crate) struct Svd {
    pub u: DMatrix<f64>,
    pub s: Vec<f64>,
    pub v: DMatrix<f64>,
}

// nalgebra's bidiagonal SVD loses accuracy on some rank-deficient inputs, so
// the decomposition goes through faer.
pub(crate) fn svd(m: &DMatrix<f64>, full_v: bool) -> Result<Svd> {
    let (rows, cols) = m.shape();
    let f = faer::Mat::<f64>::from_fn(rows, cols, |i, j| m[(i, j)]);
    let k = rows.min(cols);
    if full_v {
        let d = f
            .svd()
            .map_err(|_| Error::invalid("singular value decomposition did not converge"))?;
        let (u, s, v) = (d.U(), d.S(), d.V());
        Ok(Svd {
            u: DMatrix::from_fn(rows, k, |i, j| u[(i, j)]),
            s: (0..k).map(|i| s[i]).collect(),
            v: DMatrix::from_fn(cols, cols, |i, j| v[(i, j)]),
        })
    } else {
        let d = f
            .thin_svd()
            .map_err(|_| Error::invalid("singular value decomposition did not converge"))?;
        let (u, s, v) = (d.U(), d.S(), d.V());
        Ok(Svd {
            u: DMatrix::from_fn(rows, k, |i, j| u[(i, j)]),
            s: (0..k).map(|i| s[i]).collect(),
            v: DMatrix::from_fn(cols, k, |i, j| v[(i, j)]),
        })
    }
}

/// Moore-Penrose pseudoinverse. Singular values below `rel_cutoff * sigma_max`
/// are treated as zero.
pub fn pseudoinverse(m: &DMatrix<f64>, rel_cutoff: f64) -> Result<DMatrix<f64>> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("pseudoinverse of a matrix with non-finite entries"));
    }
    if !(rel_cutoff > 0.0 && rel_cutoff < 1.0) {
        return Err(Error::invalid(format!(
            "relative cutoff must lie in (0, 1), got {rel_cutoff}"
        )));
    }
    let (rows, cols) = m.shape();
    if rows == 0 || cols == 0 || m.amax() == 0.0 {
        return Ok(DMatrix::zeros(cols, rows));
    }
    let d = svd(m, false)?;
    let threshold = rel_cutoff * d.s[0];
    let mut out = DMatrix::zeros(cols, rows);
    for (k, &s) in d.s.iter().enumerate() {
        if s > threshold {
            // out += v_k u_k^T / s
            out.ger(1.0 / s, &d.v.column(k), &d.u.column(k), 1.0);
        }
    }
    Ok(out)
}

/// Numerical rank with the same cutoff convention as [`pseudoinverse`].
pub fn numerical_rank(m: &DMatrix<f64>, rel_cutoff: f64) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 || m.amax() == 0.0 {
        return 0;
    }
    match svd(m, false) {
        Ok(d) => {
            let threshold = rel_cutoff * d.s[0];
            d.s.iter().filter(|&&v| v > threshold && v > 0.0).count()
        }
        Err(_) => 0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_is_its_own_pseudoinverse() {
        let id = DMatrix::<f64>::identity(3, 3);
        assert_eq!(pseudoinverse(&id, 1e-12).unwrap(), id);
    }

    #[test]
    fn zero_matrix_maps_to_transposed_zero() {
        let z = DMatrix::<f64>::zeros(2, 3);
        let p = pseudoinverse(&z, 1e-12).unwrap();
        assert_eq!(p.shape(), (3, 2));
        assert!(p.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn moore_penrose_identities_on_random_matrix() {
        let mut rng = ChaCha8Rng::seed_from_u64(20);
        let a = DMatrix::from_fn(20, 12, |_, _| rng.random_range(-1.0..1.0));
        let p = pseudoinverse(&a, default_cutoff(20, 12)).unwrap();
        let ap = &a * &p;
        let pa = &p * &a;
        assert!((&ap * &a - &a).amax() < 1e-10);
        assert!((&pa * &p - &p).amax() < 1e-10);
        assert!((&ap - ap.transpose()).amax() < 1e-10);
        assert!((&pa - pa.transpose()).amax() < 1e-10);
    }

    #[test]
    fn rank_deficient_input() {
        // rank 1
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert_eq!(numerical_rank(&a, 1e-10), 1);
        let p = pseudoinverse(&a, 1e-10).unwrap();
        assert!((&a * &p * &a - &a).amax() < 1e-12);
    }

    #[test]
    fn rank_one_wide_matrix() {
        // nalgebra's own SVD reconstructs this with an O(1) error
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = DMatrix::from_fn(17, 1, |_, _| rng.random_range(-1.0..1.0));
        let y = DMatrix::from_fn(1, 22, |_, _| rng.random_range(-1.0..1.0));
        let a = &x * &y;
        assert_eq!(numerical_rank(&a, 1e-10), 1);
        let p = pseudoinverse(&a, 1e-10).unwrap();
        assert!((&a * &p * &a - &a).amax() < 1e-12);
        assert!((&p * &a * &p - &p).amax() < 1e-12);
    }

    #[test]
    fn rejects_nan_and_bad_cutoff() {
        let a = DMatrix::from_row_slice(1, 1, &[f64::NAN]);
        assert!(pseudoinverse(&a, 1e-10).is_err());
        assert!(pseudoinverse(&DMatrix::identity(2, 2), 1.0).is_err());
    }
}
