//! Orthonormal sparsity-inducing transforms on row-major images.
//!
//! All bases are orthonormal, so `inverse` is the transpose of `forward` and
//! per-coefficient variances are `diag(T S T^T)`.

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DMatrixView, DMatrixViewMut, DVector};

use crate::error::{Error, Result};
use crate::linalg::check_symmetric;

/// Relative asymmetry tolerated by [`SparsityBasis::component_std`].
pub const COVARIANCE_SYMMETRY_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BasisKind {
    Identity,
    Dct2,
    Haar2,
}

impl fmt::Display for BasisKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BasisKind::Identity => "identity",
            BasisKind::Dct2 => "dct",
            BasisKind::Haar2 => "haar",
        })
    }
}

impl FromStr for BasisKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "identity" | "none" => Ok(BasisKind::Identity),
            "dct" | "dct2" => Ok(BasisKind::Dct2),
            "haar" | "haar2" => Ok(BasisKind::Haar2),
            other => Err(Error::invalid(format!("unknown basis '{other}'"))),
        }
    }
}

/// A 2D orthonormal transform on a `width x height` grid.
#[derive(Debug, Clone)]
pub struct SparsityBasis {
    kind: BasisKind,
    width: usize,
    height: usize,
    haar_levels: usize,
    // DCT-II matrices, rows are basis vectors.
    dct_w: Option<DMatrix<f64>>,
    dct_h: Option<DMatrix<f64>>,
}

impl PartialEq for SparsityBasis {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind
            && self.width == other.width
            && self.height == other.height
            && self.haar_levels == other.haar_levels
    }
}

impl SparsityBasis {
    pub fn new(kind: BasisKind, width: usize, height: usize) -> Result<Self> {
        match kind {
            BasisKind::Identity => Self::identity(width, height),
            BasisKind::Dct2 => Self::dct2(width, height),
            BasisKind::Haar2 => Self::haar2(width, height),
        }
    }

    pub fn identity(width: usize, height: usize) -> Result<Self> {
        check_grid(width, height)?;
        Ok(SparsityBasis {
            kind: BasisKind::Identity,
            width,
            height,
            haar_levels: 0,
            dct_w: None,
            dct_h: None,
        })
    }

    pub fn dct2(width: usize, height: usize) -> Result<Self> {
        check_grid(width, height)?;
        Ok(SparsityBasis {
            kind: BasisKind::Dct2,
            width,
            height,
            haar_levels: 0,
            dct_w: Some(dct_matrix(width)),
            dct_h: Some(dct_matrix(height)),
        })
    }

    /// Haar decomposition at the greatest depth the grid admits.
    pub fn haar2(width: usize, height: usize) -> Result<Self> {
        check_grid(width, height)?;
        let levels = width.trailing_zeros().min(height.trailing_zeros()) as usize;
        Self::haar2_with_levels(width, height, levels)
    }

    pub fn haar2_with_levels(width: usize, height: usize, levels: usize) -> Result<Self> {
        check_grid(width, height)?;
        let block = 1usize
            .checked_shl(levels as u32)
            .ok_or_else(|| Error::invalid("too many Haar levels"))?;
        if width % block != 0 || height % block != 0 {
            return Err(Error::invalid(format!(
                "{levels}-level Haar needs both sides divisible by {block}, grid is {width}x{height}"
            )));
        }
        Ok(SparsityBasis {
            kind: BasisKind::Haar2,
            width,
            height,
            haar_levels: levels,
            dct_w: None,
            dct_h: None,
        })
    }

    pub fn kind(&self) -> BasisKind {
        self.kind
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn haar_levels(&self) -> usize {
        self.haar_levels
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn forward(&self, image: &[f64]) -> Result<Vec<f64>> {
        self.check_len(image.len(), "image")?;
        let mut out = image.to_vec();
        self.forward_in_place(&mut out);
        Ok(out)
    }

    pub fn inverse(&self, coeffs: &[f64]) -> Result<Vec<f64>> {
        self.check_len(coeffs.len(), "coefficient vector")?;
        let mut out = coeffs.to_vec();
        self.inverse_in_place(&mut out);
        Ok(out)
    }

    /// Panics if `data.len() != width * height`.
    pub fn forward_in_place(&self, data: &mut [f64]) {
        assert_eq!(data.len(), self.len());
        match self.kind {
            BasisKind::Identity => {}
            BasisKind::Dct2 => self.dct_apply(data, false),
            BasisKind::Haar2 => haar_forward(data, self.width, self.height, self.haar_levels),
        }
    }

    /// Panics if `data.len() != width * height`.
    pub fn inverse_in_place(&self, data: &mut [f64]) {
        assert_eq!(data.len(), self.len());
        match self.kind {
            BasisKind::Identity => {}
            BasisKind::Dct2 => self.dct_apply(data, true),
            BasisKind::Haar2 => haar_inverse(data, self.width, self.height, self.haar_levels),
        }
    }

    /// Standard deviations of the transform coefficients of a vector with
    /// covariance `sigma`: `sqrt(diag(T sigma T^T))`.
    ///
    /// Applies the fast transform to the columns of `sigma` and then to the rows of
    /// the result, so no dense transform matrix is formed.
    pub fn component_std(&self, sigma: &DMatrix<f64>) -> Result<DVector<f64>> {
        let n = self.len();
        if sigma.shape() != (n, n) {
            return Err(Error::invalid(format!(
                "covariance is {}x{}, basis has {n} components",
                sigma.nrows(),
                sigma.ncols()
            )));
        }
        check_symmetric(sigma, COVARIANCE_SYMMETRY_TOLERANCE)?;
        let variances = match self.kind {
            BasisKind::Identity => sigma.diagonal(),
            _ => {
                let mut work = sigma.clone();
                for col in work.as_mut_slice().chunks_exact_mut(n) {
                    self.forward_in_place(col);
                }
                work.transpose_mut();
                for col in work.as_mut_slice().chunks_exact_mut(n) {
                    self.forward_in_place(col);
                }
                work.diagonal()
            }
        };
        Ok(variances.map(|v| v.max(0.0).sqrt()))
    }

    fn check_len(&self, len: usize, what: &str) -> Result<()> {
        if len != self.len() {
            return Err(Error::invalid(format!(
                "{what} has {len} entries, basis grid is {}x{}",
                self.width, self.height
            )));
        }
        Ok(())
    }

    fn dct_apply(&self, data: &mut [f64], inverse: bool) {
        let cw = self.dct_w.as_ref().expect("dct basis carries its matrices");
        let ch = self.dct_h.as_ref().expect("dct basis carries its matrices");
        // A row-major height x width image is a column-major width x height matrix Z = X^T.
        // Forward: Y = C_h X C_w^T, i.e. Y^T = C_w Z C_h^T.
        let z = DMatrixView::from_slice(data, self.width, self.height).clone_owned();
        let out = if inverse {
            cw.tr_mul(&z) * ch
        } else {
            cw * z * ch.transpose()
        };
        let mut target = DMatrixViewMut::from_slice(data, self.width, self.height);
        target.copy_from(&out);
    }
}

fn check_grid(width: usize, height: usize) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(Error::invalid(format!(
            "grid must be at least 1x1, got {width}x{height}"
        )));
    }
    Ok(())
}

/// Orthonormal DCT-II matrix; row `k` is the `k`-th basis vector.
pub fn dct_matrix(n: usize) -> DMatrix<f64> {
    let nf = n as f64;
    DMatrix::from_fn(n, n, |k, i| {
        let scale = if k == 0 { (1.0 / nf).sqrt() } else { (2.0 / nf).sqrt() };
        scale * (PI * (2.0 * i as f64 + 1.0) * k as f64 / (2.0 * nf)).cos()
    })
}

fn haar_forward(data: &mut [f64], width: usize, height: usize, levels: usize) {
    let mut w = width;
    let mut h = height;
    let mut tmp = vec![0.0; width.max(height)];
    for _ in 0..levels {
        for r in 0..h {
            let row = &mut data[r * width..r * width + w];
            split_pairs(row, &mut tmp[..w]);
        }
        let mut col = vec![0.0; h];
        for c in 0..w {
            for r in 0..h {
                col[r] = data[r * width + c];
            }
            split_pairs(&mut col, &mut tmp[..h]);
            for r in 0..h {
                data[r * width + c] = col[r];
            }
        }
        w /= 2;
        h /= 2;
    }
}

fn haar_inverse(data: &mut [f64], width: usize, height: usize, levels: usize) {
    let mut tmp = vec![0.0; width.max(height)];
    for level in (0..levels).rev() {
        let w = width >> level;
        let h = height >> level;
        let mut col = vec![0.0; h];
        for c in 0..w {
            for r in 0..h {
                col[r] = data[r * width + c];
            }
            merge_pairs(&mut col, &mut tmp[..h]);
            for r in 0..h {
                data[r * width + c] = col[r];
            }
        }
        for r in 0..h {
            let row = &mut data[r * width..r * width + w];
            merge_pairs(row, &mut tmp[..w]);
        }
    }
}

/// `(x0, x1, ...) -> (averages | differences)`, each scaled by `1/sqrt 2`.
fn split_pairs(x: &mut [f64], tmp: &mut [f64]) {
    let half = x.len() / 2;
    for j in 0..half {
        let (a, b) = (x[2 * j], x[2 * j + 1]);
        tmp[j] = (a + b) * FRAC_1_SQRT_2;
        tmp[half + j] = (a - b) * FRAC_1_SQRT_2;
    }
    x.copy_from_slice(tmp);
}

fn merge_pairs(x: &mut [f64], tmp: &mut [f64]) {
    let half = x.len() / 2;
    for j in 0..half {
        let (s, d) = (x[j], x[half + j]);
        tmp[2 * j] = (s + d) * FRAC_1_SQRT_2;
        tmp[2 * j + 1] = (s - d) * FRAC_1_SQRT_2;
    }
    x.copy_from_slice(tmp);
}
