//! Box-constrained projection in a Mahalanobis metric:
//! `argmin_{lo <= v <= hi} (v - u)^T H (v - u)` for symmetric positive-definite `H`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::dense::{SpdFactor, DEFAULT_PIVOT_TOLERANCE};
use crate::error::{Error, Result};

/// The quadratic form `H` of the projection, optionally paired with `H^{-1}`.
///
/// When the inverse is known, subspace solves over a free set `F` use the Schur
/// complement `(H_FF)^{-1} = S_FF - S_FI S_II^{-1} S_IF` whenever the active set
/// `I` is the smaller of the two.
#[derive(Debug, Clone)]
pub struct MahalanobisMetric {
    precision: DMatrix<f64>,
    covariance: Option<Arc<DMatrix<f64>>>,
}

impl MahalanobisMetric {
    pub fn new(precision: DMatrix<f64>) -> Result<Self> {
        if precision.nrows() != precision.ncols() {
            return Err(Error::invalid("metric matrix must be square"));
        }
        if precision.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("metric matrix has non-finite entries"));
        }
        if (0..precision.nrows()).any(|i| !(precision[(i, i)] > 0.0)) {
            return Err(Error::invalid("metric matrix has a non-positive diagonal"));
        }
        Ok(MahalanobisMetric {
            precision,
            covariance: None,
        })
    }

    /// Metric with a known inverse. The caller guarantees `covariance = precision^{-1}`.
    pub fn with_covariance(precision: DMatrix<f64>, covariance: impl Into<Arc<DMatrix<f64>>>) -> Result<Self> {
        let covariance = covariance.into();
        if covariance.shape() != precision.shape() {
            return Err(Error::invalid("covariance and precision shapes differ"));
        }
        let mut m = MahalanobisMetric::new(precision)?;
        m.covariance = Some(covariance);
        Ok(m)
    }

    pub fn identity(n: usize) -> Self {
        MahalanobisMetric {
            precision: DMatrix::identity(n, n),
            covariance: Some(Arc::new(DMatrix::identity(n, n))),
        }
    }

    pub fn dim(&self) -> usize {
        self.precision.nrows()
    }

    pub fn precision(&self) -> &DMatrix<f64> {
        &self.precision
    }

    pub fn covariance(&self) -> Option<&DMatrix<f64>> {
        self.covariance.as_deref()
    }

    /// `(v - u)^T H (v - u)`.
    pub fn distance_sq(&self, v: &DVector<f64>, u: &DVector<f64>) -> f64 {
        let d = v - u;
        d.dot(&(&self.precision * &d))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProjectionMethod {
    /// Bertsekas-style projected Newton with exact subspace solves.
    ProjectedNewton,
    /// Accelerated projected gradient, step `1/L` with `L` from power iteration.
    AcceleratedGradient,
}

#[derive(Debug, Clone, Copy)]
pub struct ProjectionOptions {
    /// Bound on the scaled KKT residual, see [`kkt_residual`].
    pub tol: f64,
    pub max_iter: usize,
    pub method: ProjectionMethod,
}

impl Default for ProjectionOptions {
    fn default() -> Self {
        ProjectionOptions {
            tol: 1e-8,
            max_iter: 10_000,
            method: ProjectionMethod::ProjectedNewton,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Projection {
    pub point: DVector<f64>,
    pub iterations: usize,
    pub residual: f64,
}

/// Scaled KKT residual `max_i |v_i - clamp(v_i - g_i / H_ii)|` with `g = H (v - u)`.
///
/// Zero exactly at the constrained minimizer; measured in the units of `v`.
pub fn kkt_residual(
    v: &DVector<f64>,
    grad: &DVector<f64>,
    hdiag: &DVector<f64>,
    lo: &DVector<f64>,
    hi: &DVector<f64>,
) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..v.len() {
        let step = (v[i] - grad[i] / hdiag[i]).clamp(lo[i], hi[i]);
        worst = worst.max((v[i] - step).abs());
    }
    worst
}

pub fn clamp_to_box(u: &DVector<f64>, lo: &DVector<f64>, hi: &DVector<f64>) -> DVector<f64> {
    DVector::from_fn(u.len(), |i, _| u[i].clamp(lo[i], hi[i]))
}

/// Project `u` onto the box `[lo, hi]` minimizing `(v - u)^T H (v - u)`.
pub fn mahalanobis_project(
    u: &DVector<f64>,
    metric: &MahalanobisMetric,
    lo: &DVector<f64>,
    hi: &DVector<f64>,
    opts: &ProjectionOptions,
) -> Result<Projection> {
    let n = u.len();
    if metric.dim() != n || lo.len() != n || hi.len() != n {
        return Err(Error::invalid(format!(
            "projection dimensions disagree: u {n}, metric {}, box {}/{}",
            metric.dim(),
            lo.len(),
            hi.len()
        )));
    }
    if u.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("projection of a non-finite point"));
    }
    if (0..n).any(|i| !(lo[i] <= hi[i])) {
        return Err(Error::invalid("box lower bound exceeds upper bound"));
    }
    if (0..n).all(|i| lo[i] <= u[i] && u[i] <= hi[i]) {
        return Ok(Projection {
            point: u.clone(),
            iterations: 0,
            residual: 0.0,
        });
    }
    match opts.method {
        ProjectionMethod::ProjectedNewton => projected_newton(u, metric, lo, hi, opts),
        ProjectionMethod::AcceleratedGradient => accelerated_gradient(u, metric, lo, hi, opts),
    }
}

fn projected_newton(
    u: &DVector<f64>,
    metric: &MahalanobisMetric,
    lo: &DVector<f64>,
    hi: &DVector<f64>,
    opts: &ProjectionOptions,
) -> Result<Projection> {
    const ARMIJO: f64 = 1e-4;
    const EPS_ACTIVE: f64 = 1e-3;
    let h = &metric.precision;
    let n = u.len();
    let hdiag = h.diagonal();

    let mut v = clamp_to_box(u, lo, hi);
    let mut hd = h * (&v - u);
    let mut obj = 0.5 * (&v - u).dot(&hd);
    let mut solver = SubspaceSolver::default();

    for it in 0..opts.max_iter {
        let residual = kkt_residual(&v, &hd, &hdiag, lo, hi);
        if residual <= opts.tol {
            return Ok(Projection {
                point: v,
                iterations: it,
                residual,
            });
        }
        let eps = EPS_ACTIVE.min(residual);
        let active: Vec<bool> = (0..n)
            .map(|i| (v[i] <= lo[i] + eps && hd[i] > 0.0) || (v[i] >= hi[i] - eps && hd[i] < 0.0))
            .collect();

        let mut dir = DVector::zeros(n);
        let free: Vec<usize> = (0..n).filter(|&i| !active[i]).collect();
        if !free.is_empty() {
            let g_free = DVector::from_iterator(free.len(), free.iter().map(|&i| hd[i]));
            let step = solver.solve(metric, &active, &free, &g_free)?;
            for (k, &i) in free.iter().enumerate() {
                dir[i] = -step[k];
            }
        }
        for i in 0..n {
            if active[i] {
                dir[i] = -hd[i] / hdiag[i];
            }
        }

        let mut alpha = 1.0;
        loop {
            let cand = DVector::from_fn(n, |i, _| (v[i] + alpha * dir[i]).clamp(lo[i], hi[i]));
            let cand_hd = h * (&cand - u);
            let cand_obj = 0.5 * (&cand - u).dot(&cand_hd);
            let decrease = hd.dot(&(&cand - &v));
            if cand_obj <= obj + ARMIJO * decrease {
                v = cand;
                hd = cand_hd;
                obj = cand_obj;
                break;
            }
            alpha *= 0.5;
            if alpha < 1e-14 {
                // No representable decrease left along this arc.
                let residual = kkt_residual(&v, &hd, &hdiag, lo, hi);
                return if residual <= opts.tol {
                    Ok(Projection {
                        point: v,
                        iterations: it + 1,
                        residual,
                    })
                } else {
                    Err(Error::NonConvergence {
                        iterations: it + 1,
                        residual,
                        best: v,
                    })
                };
            }
        }
    }
    let residual = kkt_residual(&v, &hd, &hdiag, lo, hi);
    if residual <= opts.tol {
        return Ok(Projection {
            point: v,
            iterations: opts.max_iter,
            residual,
        });
    }
    Err(Error::NonConvergence {
        iterations: opts.max_iter,
        residual,
        best: v,
    })
}

/// Solves `H_FF x = r` for the current free set, caching the factorization
/// while the active set is unchanged.
#[derive(Default)]
struct SubspaceSolver {
    key: Vec<bool>,
    factor: Option<CachedFactor>,
}

enum CachedFactor {
    /// Cholesky of `H_FF`.
    Direct(SpdFactor),
    /// Cholesky of `S_II` plus the active index list.
    Schur(SpdFactor, Vec<usize>),
}

impl SubspaceSolver {
    fn solve(
        &mut self,
        metric: &MahalanobisMetric,
        active: &[bool],
        free: &[usize],
        rhs: &DVector<f64>,
    ) -> Result<DVector<f64>> {
        let n = active.len();
        let n_active = n - free.len();
        if self.factor.is_none() || self.key != active {
            let use_schur = metric.covariance.is_some() && n_active < free.len();
            self.factor = Some(if use_schur {
                let cov = metric.covariance.as_ref().unwrap();
                let idx: Vec<usize> = (0..n).filter(|&i| active[i]).collect();
                let sub = principal_submatrix(cov, &idx);
                CachedFactor::Schur(SpdFactor::new_regularized(&sub, 1e-12)?, idx)
            } else {
                let sub = principal_submatrix(&metric.precision, free);
                CachedFactor::Direct(SpdFactor::new(&sub, DEFAULT_PIVOT_TOLERANCE).or_else(
                    |_| SpdFactor::new_regularized(&sub, 1e-12),
                )?)
            });
            self.key = active.to_vec();
        }
        match self.factor.as_ref().unwrap() {
            CachedFactor::Direct(f) => Ok(f.solve(rhs)),
            CachedFactor::Schur(f, idx) => {
                let cov = metric.covariance.as_ref().unwrap();
                if idx.is_empty() {
                    return Ok(gather_mul(cov, free, free, rhs));
                }
                let s_if_r = gather_mul(cov, idx, free, rhs);
                let t = f.solve(&s_if_r);
                let mut out = gather_mul(cov, free, free, rhs);
                out -= gather_mul(cov, free, idx, &t);
                Ok(out)
            }
        }
    }
}

fn principal_submatrix(m: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), idx.len(), |a, b| m[(idx[a], idx[b])])
}

/// `m[rows, cols] * x`.
fn gather_mul(m: &DMatrix<f64>, rows: &[usize], cols: &[usize], x: &DVector<f64>) -> DVector<f64> {
    let mut out = DVector::zeros(rows.len());
    for (c, &j) in cols.iter().enumerate() {
        let xc = x[c];
        if xc == 0.0 {
            continue;
        }
        let col = m.column(j);
        for (r, &i) in rows.iter().enumerate() {
            out[r] += col[i] * xc;
        }
    }
    out
}

/// Largest eigenvalue of a symmetric positive-semidefinite matrix by power iteration.
pub fn largest_eigenvalue(m: &DMatrix<f64>, iterations: usize) -> f64 {
    let n = m.nrows();
    if n == 0 {
        return 0.0;
    }
    let mut x = DVector::from_fn(n, |i, _| 1.0 + (i as f64 * 0.7).sin() * 0.1);
    x.normalize_mut();
    let mut lambda = 0.0;
    for _ in 0..iterations {
        let y = m * &x;
        let norm = y.norm();
        if norm == 0.0 {
            return 0.0;
        }
        let next = x.dot(&y);
        x = y / norm;
        if (next - lambda).abs() <= 1e-12 * next.abs() {
            lambda = next;
            break;
        }
        lambda = next;
    }
    // Power iteration approaches from below; pad so 1/L stays a safe step.
    lambda * 1.01
}

fn accelerated_gradient(
    u: &DVector<f64>,
    metric: &MahalanobisMetric,
    lo: &DVector<f64>,
    hi: &DVector<f64>,
    opts: &ProjectionOptions,
) -> Result<Projection> {
    let h = &metric.precision;
    let hdiag = h.diagonal();
    let lipschitz = largest_eigenvalue(h, 500);
    let step = 1.0 / lipschitz;
    let objective = |v: &DVector<f64>, hd: &DVector<f64>| 0.5 * (v - u).dot(hd);

    let mut x = clamp_to_box(u, lo, hi);
    let mut hx = h * (&x - u);
    let mut obj = objective(&x, &hx);
    let mut y = x.clone();
    let mut t: f64 = 1.0;
    let mut best = (x.clone(), kkt_residual(&x, &hx, &hdiag, lo, hi));

    for it in 0..opts.max_iter {
        if best.1 <= opts.tol {
            return Ok(Projection {
                point: best.0,
                iterations: it,
                residual: best.1,
            });
        }
        let hy = h * (&y - u);
        let next = clamp_to_box(&(&y - &hy * step), lo, hi);
        let h_next = h * (&next - u);
        let next_obj = objective(&next, &h_next);
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        if next_obj > obj && t > 1.0 {
            // Adaptive restart: drop momentum and take a plain gradient step.
            // A plain step never increases the objective beyond rounding, so it is
            // always accepted; restarting on it would repeat it forever.
            y = x.clone();
            t = 1.0;
            continue;
        }
        y = &next + (&next - &x) * ((t - 1.0) / t_next);
        x = next;
        hx = h_next;
        obj = next_obj;
        t = t_next;
        let res = kkt_residual(&x, &hx, &hdiag, lo, hi);
        if res < best.1 {
            best = (x.clone(), res);
        }
    }
    if best.1 <= opts.tol {
        return Ok(Projection {
            point: best.0,
            iterations: opts.max_iter,
            residual: best.1,
        });
    }
    Err(Error::NonConvergence {
        iterations: opts.max_iter,
        residual: best.1,
        best: best.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn unit_box(n: usize) -> (DVector<f64>, DVector<f64>) {
        (DVector::zeros(n), DVector::from_element(n, 1.0))
    }

    #[test]
    fn interior_point_is_unchanged() {
        let m = MahalanobisMetric::new(DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0])).unwrap();
        let (lo, hi) = unit_box(2);
        let u = DVector::from_vec(vec![0.2, 0.7]);
        let p = mahalanobis_project(&u, &m, &lo, &hi, &ProjectionOptions::default()).unwrap();
        assert_eq!(p.point, u);
        assert_eq!(p.iterations, 0);
    }

    #[test]
    fn euclidean_metric_clamps() {
        let (lo, hi) = unit_box(3);
        let u = DVector::from_vec(vec![1.5, -0.5, 0.3]);
        for method in [ProjectionMethod::ProjectedNewton, ProjectionMethod::AcceleratedGradient] {
            let opts = ProjectionOptions {
                method,
                ..Default::default()
            };
            let p = mahalanobis_project(&u, &MahalanobisMetric::identity(3), &lo, &hi, &opts).unwrap();
            assert_eq!(p.point.as_slice(), &[1.0, 0.0, 0.3]);
        }
    }

    #[test]
    fn correlated_metric_two_dimensional() {
        // H = [[2,1],[1,2]]^{-1}, u = (1.5, -0.5); checked through the KKT conditions.
        let sigma = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        let h = sigma.clone().try_inverse().unwrap();
        let m = MahalanobisMetric::with_covariance(h.clone(), sigma).unwrap();
        let (lo, hi) = unit_box(2);
        let u = DVector::from_vec(vec![1.5, -0.5]);
        let p = mahalanobis_project(&u, &m, &lo, &hi, &ProjectionOptions::default()).unwrap();
        let g = &h * (&p.point - &u);
        for i in 0..2 {
            let v = p.point[i];
            if v > 0.0 && v < 1.0 {
                assert!(g[i].abs() < 1e-10);
            } else if v == 0.0 {
                assert!(g[i] >= -1e-10);
            } else {
                assert!(g[i] <= 1e-10);
            }
        }
        assert_relative_eq!(p.point[0], 1.0);
    }

    #[test]
    fn inverted_box_is_rejected() {
        let lo = DVector::from_vec(vec![1.0]);
        let hi = DVector::from_vec(vec![0.0]);
        let u = DVector::from_vec(vec![0.5]);
        assert!(mahalanobis_project(&u, &MahalanobisMetric::identity(1), &lo, &hi, &Default::default()).is_err());
    }

    #[test]
    fn gradient_method_reports_non_convergence_with_best_iterate() {
        // Five gradient steps cannot resolve the coupled coordinate to 1e-12.
        let (lo, hi) = unit_box(2);
        let opts = ProjectionOptions {
            tol: 1e-12,
            max_iter: 5,
            method: ProjectionMethod::AcceleratedGradient,
        };
        let h = DMatrix::from_row_slice(2, 2, &[1.0, 0.9, 0.9, 1.0]);
        let m = MahalanobisMetric::new(h).unwrap();
        // optimum (1, 0.95): the second coordinate is interior
        let u = DVector::from_vec(vec![1.5, 0.5]);
        match mahalanobis_project(&u, &m, &lo, &hi, &opts) {
            Err(Error::NonConvergence { best, iterations, .. }) => {
                assert_eq!(iterations, 5);
                assert!(best.iter().all(|&v| (0.0..=1.0).contains(&v)));
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }
}
