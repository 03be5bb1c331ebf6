//! Measurement reduction: the linear unbiased estimator of `U f`, its box-constrained
//! refinement, and the sparsity-thresholding pipeline built on them.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{
    default_cutoff, mahalanobis_project, pseudoinverse, symmetrize, LowRankPlusDiag, MahalanobisMetric,
    ProjectionOptions, SpdFactor, WoodburyInverse, COVARIANCE_REGULARIZATION, DEFAULT_PIVOT_TOLERANCE,
};
use crate::sensing::{worst_case_f, SensingModel};
use crate::sim::ObjectImage;
use crate::transforms::{BasisKind, SparsityBasis};

pub const DEFAULT_FIXED_POINT_TOL: f64 = 1e-8;
pub const DEFAULT_FIXED_POINT_MAX_ITER: usize = 500;

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub basis: SparsityBasis,
    pub lambda: f64,
    pub fixed_point_tol: f64,
    pub fixed_point_max_iter: usize,
    pub projection: ProjectionOptions,
    /// Take the thresholding deviations from `Sigma_nu` at the refined estimate
    /// instead of the fully transparent object.
    pub reestimate_sigma: bool,
}

impl PipelineConfig {
    pub fn new(basis: SparsityBasis, lambda: f64) -> Self {
        PipelineConfig {
            basis,
            lambda,
            fixed_point_tol: DEFAULT_FIXED_POINT_TOL,
            fixed_point_max_iter: DEFAULT_FIXED_POINT_MAX_ITER,
            projection: ProjectionOptions::default(),
            reestimate_sigma: false,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(Error::invalid(format!("lambda must be finite and >= 0, got {}", self.lambda)));
        }
        if !(self.fixed_point_tol > 0.0) || self.fixed_point_max_iter == 0 {
            return Err(Error::invalid("fixed-point tolerance and iteration limit must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct ReductionEstimate {
    pub estimate: DVector<f64>,
    /// Covariance of the linear estimate, shared with the plan that produced it.
    pub covariance: Arc<DMatrix<f64>>,
    pub worst_case_mse: f64,
    pub iterations_used: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectionInfo {
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineDiagnostics {
    pub initial_projection: ProjectionInfo,
    pub fixed_point_iterations: usize,
    pub fixed_point_converged: bool,
    pub coefficients_zeroed: usize,
    pub coefficients_total: usize,
    pub final_projection: ProjectionInfo,
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    /// Final image, inside `[0, 1]^n`, with the linear-estimate covariance.
    pub estimate: ReductionEstimate,
    pub linear: ReductionEstimate,
    pub constrained: ReductionEstimate,
    pub thresholded: DVector<f64>,
    pub diagnostics: PipelineDiagnostics,
}

impl PipelineOutput {
    pub fn image(&self) -> &DVector<f64> {
        &self.estimate.estimate
    }
}

#[derive(Debug, Clone)]
enum InfoSolver {
    Cholesky(SpdFactor),
    Pseudo(DMatrix<f64>),
}

impl InfoSolver {
    fn new(info: &DMatrix<f64>) -> Result<Self> {
        match SpdFactor::new(info, DEFAULT_PIVOT_TOLERANCE) {
            Ok(f) => Ok(InfoSolver::Cholesky(f)),
            Err(Error::NotPositiveDefinite { .. }) => Ok(InfoSolver::Pseudo(pseudoinverse(
                info,
                default_cutoff(info.nrows(), info.ncols()),
            )?)),
            Err(e) => Err(e),
        }
    }

    fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        match self {
            InfoSolver::Cholesky(f) => f.solve(b),
            InfoSolver::Pseudo(p) => p * b,
        }
    }

    fn solve_matrix(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            InfoSolver::Cholesky(f) => f.solve_matrix(b),
            InfoSolver::Pseudo(p) => p * b,
        }
    }

    fn inverse(&self) -> DMatrix<f64> {
        match self {
            InfoSolver::Cholesky(f) => f.inverse(),
            InfoSolver::Pseudo(p) => p.clone(),
        }
    }
}

/// Everything about the reduction that does not depend on the data: the noise
/// covariance, `(A^T Sigma^-1 A)^-`, `Sigma_R`, the projection metric and the
/// per-basis coefficient deviations. Build once, reuse across measurements.
pub struct ReductionPlan {
    n_pixels: usize,
    n_measurements: usize,
    u: Option<DMatrix<f64>>,
    sigma_inv: WoodburyInverse,
    info: InfoSolver,
    covariance: Arc<DMatrix<f64>>,
    metric: MahalanobisMetric,
    worst_case_mse: f64,
    /// Factor of `A^T Sigma^-1 A + U^T Sigma_R^-1 U` for a non-identity `U`.
    augmented: Option<InfoSolver>,
    std_cache: Mutex<HashMap<(BasisKind, usize, usize, usize), Arc<DVector<f64>>>>,
}

impl std::fmt::Debug for ReductionPlan {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ReductionPlan")
            .field("n_pixels", &self.n_pixels)
            .field("n_measurements", &self.n_measurements)
            .field("identity_u", &self.u.is_none())
            .field("worst_case_mse", &self.worst_case_mse)
            .finish()
    }
}

impl ReductionPlan {
    /// Plan for the covariance of the fully transparent object.
    pub fn worst_case(model: &SensingModel) -> Result<Self> {
        let sigma = model.build_sigma_nu(worst_case_f(model).data())?;
        Self::new(model, &sigma)
    }

    pub fn new(model: &SensingModel, sigma: &LowRankPlusDiag) -> Result<Self> {
        model.check_estimability().into_result()?;
        let info_matrix = model.information_matrix(sigma)?;
        let sigma_inv = sigma.invert(model.covariance_floor())?;
        let info = InfoSolver::new(&info_matrix)?;
        let u = model.ideal_device().cloned();

        let mut covariance = match &u {
            None => info.inverse(),
            Some(u) => u * info.solve_matrix(&u.transpose()),
        };
        symmetrize(&mut covariance);
        let worst_case_mse = covariance.trace();

        let precision = match (&u, &info) {
            (None, InfoSolver::Cholesky(_)) => {
                let mut p = info_matrix.clone();
                symmetrize(&mut p);
                p
            }
            _ => {
                let mut p = SpdFactor::new_regularized(&covariance, COVARIANCE_REGULARIZATION)?.inverse();
                symmetrize(&mut p);
                p
            }
        };
        let augmented = match &u {
            None => None,
            Some(u) => {
                let mut m = &info_matrix + u.transpose() * &precision * u;
                symmetrize(&mut m);
                Some(InfoSolver::new(&m)?)
            }
        };
        let covariance = Arc::new(covariance);
        let metric = MahalanobisMetric::with_covariance(precision, Arc::clone(&covariance))?;
        Ok(ReductionPlan {
            n_pixels: model.n_pixels(),
            n_measurements: model.n_measurements(),
            u,
            sigma_inv,
            info,
            covariance,
            metric,
            worst_case_mse,
            augmented,
            std_cache: Mutex::new(HashMap::new()),
        })
    }

    /// Dimension of the estimated quantity `U f`.
    pub fn output_dim(&self) -> usize {
        self.covariance.nrows()
    }

    pub fn covariance(&self) -> &Arc<DMatrix<f64>> {
        &self.covariance
    }

    pub fn worst_case_mse(&self) -> f64 {
        self.worst_case_mse
    }

    pub fn metric(&self) -> &MahalanobisMetric {
        &self.metric
    }

    fn check_xi(&self, model: &SensingModel, xi: &DVector<f64>) -> Result<()> {
        if model.n_pixels() != self.n_pixels || model.n_measurements() != self.n_measurements {
            return Err(Error::invalid("model does not match the reduction plan"));
        }
        if xi.len() != self.n_measurements {
            return Err(Error::invalid(format!(
                "measurement has {} values, model expects {}",
                xi.len(),
                self.n_measurements
            )));
        }
        if xi.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("measurement has non-finite values"));
        }
        Ok(())
    }

    fn estimate(&self, estimate: DVector<f64>, iterations_used: usize, converged: bool) -> ReductionEstimate {
        ReductionEstimate {
            estimate,
            covariance: Arc::clone(&self.covariance),
            worst_case_mse: self.worst_case_mse,
            iterations_used,
            converged,
        }
    }

    fn apply_u(&self, x: DVector<f64>) -> DVector<f64> {
        match &self.u {
            None => x,
            Some(u) => u * x,
        }
    }

    /// `R* xi = U (A^T Sigma^-1 A)^- A^T Sigma^-1 xi`.
    pub fn linear(&self, model: &SensingModel, xi: &DVector<f64>) -> Result<ReductionEstimate> {
        self.check_xi(model, xi)?;
        let b = model.apply_a_transpose(&self.sigma_inv.apply(xi));
        Ok(self.estimate(self.apply_u(self.info.solve(&b)), 0, true))
    }

    fn unit_box(&self) -> (DVector<f64>, DVector<f64>) {
        let k = self.output_dim();
        (DVector::zeros(k), DVector::from_element(k, 1.0))
    }

    /// Mahalanobis projection onto `[0, 1]^k`. A projection that runs out of
    /// iterations yields its best iterate, flagged as not converged.
    pub fn project(&self, v: &DVector<f64>, opts: &ProjectionOptions) -> Result<(DVector<f64>, ProjectionInfo)> {
        let (lo, hi) = self.unit_box();
        match mahalanobis_project(v, &self.metric, &lo, &hi, opts) {
            Ok(p) => Ok((
                p.point,
                ProjectionInfo {
                    iterations: p.iterations,
                    residual: p.residual,
                    converged: true,
                },
            )),
            Err(Error::NonConvergence {
                iterations,
                residual,
                best,
            }) => Ok((
                best,
                ProjectionInfo {
                    iterations,
                    residual,
                    converged: false,
                },
            )),
            Err(e) => Err(e),
        }
    }

    /// Reduction of the augmented device `(A; U)` with block noise `diag(Sigma_nu, Sigma_R)`,
    /// fed with `(xi, u)`. `r` is `R* xi` and `b` is `A^T Sigma^-1 xi`.
    fn augmented_reduction(&self, r: &DVector<f64>, b: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        match (&self.u, &self.augmented) {
            // A^T S^-1 A + U^T Sigma_R^-1 U = 2 A^T S^-1 A when U = I.
            (None, _) => (r + u) * 0.5,
            (Some(umat), Some(aug)) => {
                let rhs = b + umat.transpose() * (self.metric.precision() * u);
                umat * aug.solve(&rhs)
            }
            (Some(_), None) => unreachable!("augmented solver is built with U"),
        }
    }

    /// Box-constrained refinement: fixed point of `u -> Pi(R~(xi, u))`, started at `Pi(R* xi)`.
    pub fn constrained(
        &self,
        model: &SensingModel,
        xi: &DVector<f64>,
        cfg: &PipelineConfig,
    ) -> Result<(ReductionEstimate, ReductionEstimate, ProjectionInfo)> {
        cfg.validate()?;
        let linear = self.linear(model, xi)?;
        let b = model.apply_a_transpose(&self.sigma_inv.apply(xi));
        let (mut current, initial) = self.project(&linear.estimate, &cfg.projection)?;
        let mut projections_converged = initial.converged;
        let mut converged = false;
        let mut iterations = 0;
        while iterations < cfg.fixed_point_max_iter {
            let mapped = self.augmented_reduction(&linear.estimate, &b, &current);
            let (next, info) = self.project(&mapped, &cfg.projection)?;
            projections_converged &= info.converged;
            iterations += 1;
            let change = (&next - &current).norm();
            let scale = current.norm();
            current = next;
            if change <= cfg.fixed_point_tol * scale || change == 0.0 {
                converged = true;
                break;
            }
        }
        let refined = self.estimate(current, iterations, converged && projections_converged);
        Ok((linear, refined, initial))
    }

    /// Coefficient deviations `sqrt(diag(T Sigma_R T^T))`, cached per basis.
    pub fn component_std(&self, basis: &SparsityBasis) -> Result<Arc<DVector<f64>>> {
        let key = (basis.kind(), basis.width(), basis.height(), basis.haar_levels());
        if let Some(s) = self.std_cache.lock().expect("cache lock").get(&key) {
            return Ok(Arc::clone(s));
        }
        let s = Arc::new(basis.component_std(&self.covariance)?);
        self.std_cache
            .lock()
            .expect("cache lock")
            .insert(key, Arc::clone(&s));
        Ok(s)
    }

    /// Steps 3 to 6 applied to a refined estimate.
    pub fn finish(
        &self,
        refined: &DVector<f64>,
        cfg: &PipelineConfig,
        sigma_std: &DVector<f64>,
    ) -> Result<(DVector<f64>, usize, ProjectionInfo)> {
        let (thresholded, zeroed) =
            threshold_with_std(refined, sigma_std, &cfg.basis, cfg.lambda).map_err(stage("thresholding"))?;
        let (image, info) = self
            .project(&thresholded, &cfg.projection)
            .map_err(stage("final projection"))?;
        Ok((image, zeroed, info))
    }

    pub fn run(&self, model: &SensingModel, xi: &DVector<f64>, cfg: &PipelineConfig) -> Result<PipelineOutput> {
        cfg.validate()?;
        if cfg.basis.len() != self.output_dim() {
            return Err(Error::invalid(format!(
                "basis has {} components, estimate has {}",
                cfg.basis.len(),
                self.output_dim()
            )));
        }
        let (linear, constrained, initial) = self.constrained(model, xi, cfg).map_err(stage("refinement"))?;
        let sigma_std = if cfg.reestimate_sigma && cfg.lambda > 0.0 {
            let f: Vec<f64> = constrained.estimate.iter().map(|v| v.clamp(0.0, 1.0)).collect();
            let sigma = model.build_sigma_nu(&f).map_err(stage("covariance re-estimate"))?;
            let plan = ReductionPlan::new(model, &sigma).map_err(stage("covariance re-estimate"))?;
            plan.component_std(&cfg.basis).map_err(stage("thresholding"))?
        } else {
            self.component_std(&cfg.basis).map_err(stage("thresholding"))?
        };
        let thresholded = threshold_with_std(&constrained.estimate, &sigma_std, &cfg.basis, cfg.lambda)
            .map_err(stage("thresholding"))?
            .0;
        let (image, zeroed, final_info) = self.finish(&constrained.estimate, cfg, &sigma_std)?;
        let diagnostics = PipelineDiagnostics {
            initial_projection: initial,
            fixed_point_iterations: constrained.iterations_used,
            fixed_point_converged: constrained.converged,
            coefficients_zeroed: zeroed,
            coefficients_total: cfg.basis.len(),
            final_projection: final_info,
        };
        let estimate = self.estimate(
            image,
            constrained.iterations_used,
            constrained.converged && final_info.converged,
        );
        Ok(PipelineOutput {
            estimate,
            linear,
            constrained,
            thresholded,
            diagnostics,
        })
    }
}

fn stage(name: &'static str) -> impl Fn(Error) -> Error {
    move |e| match e {
        tagged @ Error::Stage { .. } => tagged,
        other => Error::Stage {
            stage: name,
            source: Box::new(other),
        },
    }
}

/// `R* xi` and its covariance for a given noise covariance.
pub fn linear_reduction(xi: &DVector<f64>, model: &SensingModel, sigma: &LowRankPlusDiag) -> Result<ReductionEstimate> {
    ReductionPlan::new(model, sigma)?.linear(model, xi)
}

/// Box-constrained refinement of `R* xi` onto `[0, 1]^k`.
pub fn constrained_reduction(
    xi: &DVector<f64>,
    model: &SensingModel,
    sigma: &LowRankPlusDiag,
    cfg: &PipelineConfig,
) -> Result<ReductionEstimate> {
    Ok(ReductionPlan::new(model, sigma)?.constrained(model, xi, cfg)?.1)
}

/// Zero every coefficient `(T u)_i` with `|(T u)_i| < lambda * sigma_i` and transform back.
pub fn threshold_in_basis(
    u: &DVector<f64>,
    sigma: &DMatrix<f64>,
    basis: &SparsityBasis,
    lambda: f64,
) -> Result<DVector<f64>> {
    let std = basis.component_std(sigma)?;
    Ok(threshold_with_std(u, &std, basis, lambda)?.0)
}

/// As [`threshold_in_basis`] with precomputed coefficient deviations. Also returns
/// the number of zeroed coefficients.
pub fn threshold_with_std(
    u: &DVector<f64>,
    std: &DVector<f64>,
    basis: &SparsityBasis,
    lambda: f64,
) -> Result<(DVector<f64>, usize)> {
    if u.len() != basis.len() || std.len() != basis.len() {
        return Err(Error::invalid(format!(
            "estimate has {} entries, deviations {}, basis {}",
            u.len(),
            std.len(),
            basis.len()
        )));
    }
    if !(lambda >= 0.0) {
        return Err(Error::invalid(format!("lambda must be >= 0, got {lambda}")));
    }
    if lambda == 0.0 {
        return Ok((u.clone(), 0));
    }
    let mut coeffs = basis.forward(u.as_slice())?;
    let mut zeroed = 0;
    for (c, s) in coeffs.iter_mut().zip(std.iter()) {
        if c.abs() < lambda * s {
            *c = 0.0;
            zeroed += 1;
        }
    }
    basis.inverse_in_place(&mut coeffs);
    Ok((DVector::from_vec(coeffs), zeroed))
}

/// The whole pipeline with the worst-case covariance.
pub fn run_pipeline(xi: &DVector<f64>, model: &SensingModel, cfg: &PipelineConfig) -> Result<PipelineOutput> {
    let plan = ReductionPlan::worst_case(model).map_err(stage("linear reduction"))?;
    plan.run(model, xi, cfg)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub mse: f64,
    /// Peak signal-to-noise ratio in dB for unit peak; `+inf` for a perfect match.
    pub psnr: f64,
}

pub fn metrics(estimate: &[f64], truth: &ObjectImage) -> Result<Metrics> {
    if estimate.len() != truth.len() {
        return Err(Error::invalid(format!(
            "estimate has {} pixels, truth has {}",
            estimate.len(),
            truth.len()
        )));
    }
    let mse = estimate
        .iter()
        .zip(truth.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / truth.len() as f64;
    let psnr = if mse == 0.0 { f64::INFINITY } else { -10.0 * mse.log10() };
    Ok(Metrics { mse, psnr })
}
