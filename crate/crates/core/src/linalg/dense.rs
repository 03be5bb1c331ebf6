//! Blocked Cholesky factorization and the triangular kernels built on it.
//!
//! The information matrices handled here reach 4096 x 4096 for 64 x 64 images,
//! so every O(n^3) loop is arranged around `gemm` calls on column-major views.

use nalgebra::{DMatrix, DMatrixViewMut, DVector};

use crate::error::{Error, Result};

const PANEL: usize = 64;
const UPDATE_BLOCK: usize = 256;

/// Default relative pivot tolerance for [`SpdFactor::new`].
pub const DEFAULT_PIVOT_TOLERANCE: f64 = 1e-14;

/// Relative symmetry tolerance accepted by [`SpdFactor::new`].
pub const SYMMETRY_TOLERANCE: f64 = 1e-12;

/// Cholesky factor `L` (lower, `source = L L^T`) of a symmetric positive-definite matrix.
#[derive(Debug, Clone)]
pub struct SpdFactor {
    lower: DMatrix<f64>,
    tolerance: f64,
    shift: f64,
}

impl SpdFactor {
    /// Factor `m`, failing if any pivot is `<= tolerance * max(diag)`.
    pub fn new(m: &DMatrix<f64>, tolerance: f64) -> Result<Self> {
        check_symmetric(m, SYMMETRY_TOLERANCE)?;
        let mut lower = m.clone();
        cholesky_in_place(&mut lower, tolerance)?;
        Ok(SpdFactor {
            lower,
            tolerance,
            shift: 0.0,
        })
    }

    /// Factor `m`; if it is numerically singular, factor `m + eps * (tr m / n) I` instead.
    pub fn new_regularized(m: &DMatrix<f64>, eps: f64) -> Result<Self> {
        match SpdFactor::new(m, DEFAULT_PIVOT_TOLERANCE) {
            Ok(f) => Ok(f),
            Err(Error::NotPositiveDefinite { .. }) => {
                let n = m.nrows().max(1);
                let shift = eps * m.trace() / n as f64;
                if !(shift > 0.0) {
                    return Err(Error::SingularCovariance(
                        "matrix has non-positive trace".into(),
                    ));
                }
                let mut shifted = m.clone();
                for i in 0..m.nrows() {
                    shifted[(i, i)] += shift;
                }
                let mut f = SpdFactor::new(&shifted, 0.0)?;
                f.shift = shift;
                Ok(f)
            }
            Err(e) => Err(e),
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.nrows()
    }

    pub fn lower(&self) -> &DMatrix<f64> {
        &self.lower
    }

    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    /// Diagonal shift added by [`SpdFactor::new_regularized`], zero if none was needed.
    pub fn shift(&self) -> f64 {
        self.shift
    }

    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let mut x = b.clone();
        self.solve_in_place(x.as_mut_slice());
        x
    }

    pub fn solve_in_place(&self, x: &mut [f64]) {
        let l = &self.lower;
        let n = l.nrows();
        assert_eq!(x.len(), n, "solve: dimension mismatch");
        // L y = b
        for j in 0..n {
            let col = l.column(j);
            x[j] /= col[j];
            let xj = x[j];
            if xj != 0.0 {
                for i in j + 1..n {
                    x[i] -= col[i] * xj;
                }
            }
        }
        // L^T x = y
        for j in (0..n).rev() {
            let col = l.column(j);
            let mut s = x[j];
            for i in j + 1..n {
                s -= col[i] * x[i];
            }
            x[j] = s / col[j];
        }
    }

    pub fn solve_matrix(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let mut x = b.clone();
        let mut view = x.view_mut((0, 0), b.shape());
        solve_lower_blocked(&self.lower, 0, &mut view);
        solve_upper_blocked(&self.lower, 0, &mut view);
        x
    }

    /// Explicit inverse `(L L^T)^{-1}`, computed one column block at a time and
    /// mirrored from its lower triangle.
    pub fn inverse(&self) -> DMatrix<f64> {
        let n = self.dim();
        let mut inv = DMatrix::<f64>::zeros(n, n);
        let mut j0 = 0;
        while j0 < n {
            let jb = UPDATE_BLOCK.min(n - j0);
            let m = n - j0;
            // Rows above j0 of L^{-1} E_J are zero, and only rows >= j0 of the
            // result are kept, so both solves run on the trailing m x m block.
            let mut rhs = DMatrix::<f64>::zeros(m, jb);
            for c in 0..jb {
                rhs[(c, c)] = 1.0;
            }
            let mut view = rhs.view_mut((0, 0), (m, jb));
            solve_lower_blocked(&self.lower, j0, &mut view);
            solve_upper_blocked(&self.lower, j0, &mut view);
            inv.view_mut((j0, j0), (m, jb)).copy_from(&rhs);
            j0 += jb;
        }
        for j in 0..n {
            for i in j + 1..n {
                inv[(j, i)] = inv[(i, j)];
            }
        }
        inv
    }
}

/// Error unless `max |m - m^T| <= rel * max |m|`.
pub fn check_symmetric(m: &DMatrix<f64>, rel: f64) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::invalid(format!(
            "expected a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    let scale = m.amax();
    if !scale.is_finite() {
        return Err(Error::invalid("matrix has non-finite entries"));
    }
    let n = m.nrows();
    let mut worst: f64 = 0.0;
    for j in 0..n {
        for i in j + 1..n {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    if worst > rel * scale {
        return Err(Error::invalid(format!(
            "matrix is not symmetric (asymmetry {worst:e}, scale {scale:e})"
        )));
    }
    Ok(())
}

/// Replace `m` by `(m + m^T) / 2`.
pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for j in 0..n {
        for i in j + 1..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// In-place lower Cholesky factorization; the strict upper triangle is zeroed.
pub fn cholesky_in_place(a: &mut DMatrix<f64>, tolerance: f64) -> Result<()> {
    let n = a.nrows();
    assert_eq!(n, a.ncols());
    let scale = (0..n).map(|i| a[(i, i)]).fold(0.0_f64, f64::max);
    let threshold = tolerance * scale;

    let mut k = 0;
    while k < n {
        let kb = PANEL.min(n - k);
        factor_panel(a, k, kb, threshold)?;

        let rest = k + kb;
        if rest < n {
            let m = n - rest;
            let panel = a.view((rest, k), (m, kb)).clone_owned();
            // A22 -= L21 L21^T, lower triangle only, one column block at a time.
            let mut c = 0;
            while c < m {
                let cb = UPDATE_BLOCK.min(m - c);
                let rows = m - c;
                let left = panel.view((c, 0), (rows, kb));
                let right = panel.view((c, 0), (cb, kb));
                let mut target = a.view_mut((rest + c, rest + c), (rows, cb));
                target.gemm(-1.0, &left, &right.transpose(), 1.0);
                c += cb;
            }
        }
        k += kb;
    }

    for j in 1..n {
        for i in 0..j {
            a[(i, j)] = 0.0;
        }
    }
    Ok(())
}

/// Unblocked factorization of columns `k..k+kb`, rows `k..n`.
fn factor_panel(a: &mut DMatrix<f64>, k: usize, kb: usize, threshold: f64) -> Result<()> {
    let n = a.nrows();
    let data = a.as_mut_slice();
    for j in k..k + kb {
        let (before, from_j) = data.split_at_mut(j * n);
        let col_j = &mut from_j[..n];
        for p in k..j {
            let col_p = &before[p * n..(p + 1) * n];
            let ljp = col_p[j];
            if ljp != 0.0 {
                for i in j..n {
                    col_j[i] -= col_p[i] * ljp;
                }
            }
        }
        let d = col_j[j];
        if !(d > threshold) || !d.is_finite() {
            return Err(Error::NotPositiveDefinite { index: j, pivot: d });
        }
        let s = d.sqrt();
        for v in &mut col_j[j..n] {
            *v /= s;
        }
    }
    Ok(())
}

/// Solve `L[off.., off..] Y = B` in place, `B` having `n - off` rows.
pub(crate) fn solve_lower_blocked(l: &DMatrix<f64>, off: usize, b: &mut DMatrixViewMut<'_, f64>) {
    let m = l.nrows() - off;
    assert_eq!(b.nrows(), m);
    let mut r = 0;
    while r < m {
        let rb = PANEL.min(m - r);
        {
            let (mut head, mut tail) = b.rows_range_pair_mut(r..r + rb, r + rb..);
            for c in 0..head.ncols() {
                let mut col = head.column_mut(c);
                for j in 0..rb {
                    let lj = l.column(off + r + j);
                    col[j] /= lj[off + r + j];
                    let x = col[j];
                    if x != 0.0 {
                        for i in j + 1..rb {
                            col[i] -= lj[off + r + i] * x;
                        }
                    }
                }
            }
            if r + rb < m {
                let below = l.view((off + r + rb, off + r), (m - r - rb, rb));
                tail.gemm(-1.0, &below, &head, 1.0);
            }
        }
        r += rb;
    }
}

/// Solve `L[off.., off..]^T X = Y` in place.
pub(crate) fn solve_upper_blocked(l: &DMatrix<f64>, off: usize, b: &mut DMatrixViewMut<'_, f64>) {
    let m = l.nrows() - off;
    assert_eq!(b.nrows(), m);
    let mut end = m;
    while end > 0 {
        let rb = PANEL.min(end);
        let r = end - rb;
        {
            let (mut head, tail) = b.rows_range_pair_mut(r..end, end..);
            if end < m {
                let below = l.view((off + end, off + r), (m - end, rb));
                head.gemm_tr(-1.0, &below, &tail, 1.0);
            }
            for c in 0..head.ncols() {
                let mut col = head.column_mut(c);
                for j in (0..rb).rev() {
                    let lj = l.column(off + r + j);
                    let mut s = col[j];
                    for i in j + 1..rb {
                        s -= lj[off + r + i] * col[i];
                    }
                    col[j] = s / lj[off + r + j];
                }
            }
        }
        end = r;
    }
}
