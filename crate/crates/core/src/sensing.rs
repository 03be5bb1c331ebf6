//! Measurement model assembly: detector matrices, the stacked matrix `A`,
//! the noise covariance `Sigma_nu(f)` and the ideal device `U`.

use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::linalg::{symmetrize, LowRankPlusDiag, SpdFactor, DEFAULT_PIVOT_TOLERANCE};
use crate::sim::ObjectImage;

/// Digitization variance of a unit-step counter, in counts^2.
pub const DEFAULT_READOUT_VARIANCE: f64 = 1.0 / 12.0;
pub const DEFAULT_P_ACC: f64 = 0.1;
pub const DEFAULT_FLOOR_REL: f64 = 1e-9;
/// `||U (I - A^- A)||_F <= ESTIMABILITY_TOLERANCE * ||U||_F` counts as estimable.
pub const ESTIMABILITY_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Placement {
    /// One detector per pixel, anchored at that pixel and clipped at the far edges.
    Sliding,
    /// Non-overlapping detectors; the last tile on each axis is cropped to the image.
    Tiled,
}

impl std::str::FromStr for Placement {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sliding" => Ok(Placement::Sliding),
            "tiled" => Ok(Placement::Tiled),
            other => Err(Error::invalid(format!("unknown detector placement '{other}'"))),
        }
    }
}

impl std::fmt::Display for Placement {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Placement::Sliding => "sliding",
            Placement::Tiled => "tiled",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct DetectorGeometry {
    pub width: usize,
    pub height: usize,
    pub detector_size: usize,
    pub placement: Placement,
}

impl DetectorGeometry {
    pub fn new(width: usize, height: usize, detector_size: usize, placement: Placement) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid(format!("grid must be at least 1x1, got {width}x{height}")));
        }
        if detector_size == 0 {
            return Err(Error::invalid("detector size must be at least 1"));
        }
        Ok(DetectorGeometry {
            width,
            height,
            detector_size,
            placement,
        })
    }

    pub fn sliding(width: usize, height: usize, detector_size: usize) -> Result<Self> {
        Self::new(width, height, detector_size, Placement::Sliding)
    }

    pub fn n_pixels(&self) -> usize {
        self.width * self.height
    }

    pub fn detector_rows(&self) -> usize {
        self.axis_len(self.height)
    }

    pub fn detector_cols(&self) -> usize {
        self.axis_len(self.width)
    }

    pub fn n_detectors(&self) -> usize {
        self.detector_rows() * self.detector_cols()
    }

    fn axis_len(&self, pixels: usize) -> usize {
        match self.placement {
            Placement::Sliding => pixels,
            Placement::Tiled => pixels.div_ceil(self.detector_size),
        }
    }

    fn spans(&self, pixels: usize) -> Vec<Range<usize>> {
        let s = self.detector_size;
        (0..self.axis_len(pixels))
            .map(|i| {
                let start = match self.placement {
                    Placement::Sliding => i,
                    Placement::Tiled => i * s,
                };
                start..(start + s).min(pixels)
            })
            .collect()
    }
}

/// Box-response detector matrix `B`. Row `p` covers a rectangle of pixels, so
/// `B` is the Kronecker product of a row-axis and a column-axis 0/1 matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectorMatrix {
    geometry: DetectorGeometry,
    row_spans: Vec<Range<usize>>,
    col_spans: Vec<Range<usize>>,
}

impl DetectorMatrix {
    pub fn geometry(&self) -> &DetectorGeometry {
        &self.geometry
    }

    pub fn nrows(&self) -> usize {
        self.row_spans.len() * self.col_spans.len()
    }

    pub fn ncols(&self) -> usize {
        self.geometry.n_pixels()
    }

    /// Pixel rows and columns covered by detector `p`.
    pub fn footprint(&self, p: usize) -> (Range<usize>, Range<usize>) {
        let dc = self.col_spans.len();
        (self.row_spans[p / dc].clone(), self.col_spans[p % dc].clone())
    }

    pub fn footprint_size(&self, p: usize) -> usize {
        let (r, c) = self.footprint(p);
        r.len() * c.len()
    }

    fn for_each_pixel(&self, p: usize, mut visit: impl FnMut(usize)) {
        let w = self.geometry.width;
        let (rows, cols) = self.footprint(p);
        for r in rows {
            for c in cols.clone() {
                visit(r * w + c);
            }
        }
    }

    /// `B f`.
    pub fn apply(&self, f: &[f64]) -> Vec<f64> {
        assert_eq!(f.len(), self.ncols());
        (0..self.nrows())
            .map(|p| {
                let mut acc = 0.0;
                self.for_each_pixel(p, |k| acc += f[k]);
                acc
            })
            .collect()
    }

    /// `B^T y`.
    pub fn apply_transpose(&self, y: &[f64]) -> Vec<f64> {
        assert_eq!(y.len(), self.nrows());
        let mut out = vec![0.0; self.ncols()];
        for (p, &v) in y.iter().enumerate() {
            self.for_each_pixel(p, |k| out[k] += v);
        }
        out
    }

    /// `B^T diag(weights) B`, accumulated into `out`.
    pub fn add_weighted_gram(&self, weights: &[f64], out: &mut DMatrix<f64>) {
        assert_eq!(weights.len(), self.nrows());
        let mut pixels = Vec::with_capacity(self.geometry.detector_size.pow(2));
        for (p, &w) in weights.iter().enumerate() {
            pixels.clear();
            self.for_each_pixel(p, |k| pixels.push(k));
            for &k in &pixels {
                for &l in &pixels {
                    out[(k, l)] += w;
                }
            }
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut b = DMatrix::zeros(self.nrows(), self.ncols());
        for p in 0..self.nrows() {
            self.for_each_pixel(p, |k| b[(p, k)] = 1.0);
        }
        b
    }

    /// 0/1 matrices `(T_rows, T_cols)` with `B = T_rows (x) T_cols`.
    pub fn axis_factors(&self) -> (DMatrix<f64>, DMatrix<f64>) {
        (
            axis_matrix(&self.row_spans, self.geometry.height),
            axis_matrix(&self.col_spans, self.geometry.width),
        )
    }

    /// All singular values of `B`, in descending order.
    pub fn singular_values(&self) -> Vec<f64> {
        let (tr, tc) = self.axis_factors();
        let sr = tr.singular_values();
        let sc = tc.singular_values();
        let mut out: Vec<f64> = sr.iter().flat_map(|a| sc.iter().map(move |b| a * b)).collect();
        out.sort_by(|a, b| b.total_cmp(a));
        out
    }

    pub fn min_singular_value(&self) -> f64 {
        // A wide B has n - m zero singular values that the SVD does not list.
        if self.nrows() < self.ncols() {
            return 0.0;
        }
        self.singular_values().last().copied().unwrap_or(0.0)
    }

    /// Orthonormal basis (as columns) of the null space of `B`.
    pub fn null_space_basis(&self) -> DMatrix<f64> {
        let (tr, tc) = self.axis_factors();
        let (vr, nr) = right_singular_split(&tr);
        let (vc, nc) = right_singular_split(&tc);
        let mut cols = Vec::new();
        for i in 0..vr.ncols() {
            for j in 0..vc.ncols() {
                if i >= nr || j >= nc {
                    cols.push(kron_vec(&vr.column(i).clone_owned(), &vc.column(j).clone_owned()));
                }
            }
        }
        if cols.is_empty() {
            DMatrix::zeros(self.ncols(), 0)
        } else {
            DMatrix::from_columns(&cols)
        }
    }
}

fn axis_matrix(spans: &[Range<usize>], pixels: usize) -> DMatrix<f64> {
    let mut t = DMatrix::zeros(spans.len(), pixels);
    for (i, s) in spans.iter().enumerate() {
        for k in s.clone() {
            t[(i, k)] = 1.0;
        }
    }
    t
}

/// Right singular vectors of `t` as columns of a square matrix, and the numerical rank.
/// Columns past the rank span the null space.
fn right_singular_split(t: &DMatrix<f64>) -> (DMatrix<f64>, usize) {
    let d = crate::linalg::svd(t, true).expect("svd of a small 0/1 matrix");
    let threshold = crate::linalg::default_cutoff(t.nrows(), t.ncols()) * d.s.first().copied().unwrap_or(0.0);
    let rank = d.s.iter().filter(|&&s| s > threshold).count();
    (d.v, rank)
}

fn kron_vec(a: &DVector<f64>, b: &DVector<f64>) -> DVector<f64> {
    DVector::from_iterator(a.len() * b.len(), a.iter().flat_map(|x| b.iter().map(move |y| x * y)))
}

pub fn build_detector_matrix(geometry: &DetectorGeometry) -> DetectorMatrix {
    DetectorMatrix {
        geometry: *geometry,
        row_spans: geometry.spans(geometry.height),
        col_spans: geometry.spans(geometry.width),
    }
}

/// Dense `A = [B C_2; B C_3; B C_4]` with `C_j = arm_scale_j * pixel_area * I`.
pub fn build_a(geometry: &DetectorGeometry, arm_scales: &[f64], pixel_area: f64) -> Result<DMatrix<f64>> {
    check_scales(arm_scales, pixel_area)?;
    let b = build_detector_matrix(geometry).to_dense();
    let m = b.nrows();
    let mut a = DMatrix::zeros(m * arm_scales.len(), b.ncols());
    for (j, s) in arm_scales.iter().enumerate() {
        a.view_mut((j * m, 0), b.shape()).copy_from(&(&b * (s * pixel_area)));
    }
    Ok(a)
}

fn check_scales(arm_scales: &[f64], pixel_area: f64) -> Result<()> {
    if arm_scales.is_empty() {
        return Err(Error::invalid("at least one arm is required"));
    }
    if let Some(s) = arm_scales.iter().find(|s| !(s.is_finite() && **s > 0.0)) {
        return Err(Error::invalid(format!("arm scales must be positive, got {s}")));
    }
    if !(pixel_area.is_finite() && pixel_area > 0.0) {
        return Err(Error::invalid(format!("pixel area must be positive, got {pixel_area}")));
    }
    Ok(())
}

/// Additive per-detector variance from noise photons at `rate` per pixel.
/// Ghost images (`arms > 1`) only see the fraction `p_acc` that falls inside
/// the coincidence window.
pub fn noise_photon_term(rate: f64, arms: usize, p_acc: f64) -> f64 {
    if arms > 1 {
        rate * p_acc
    } else {
        rate
    }
}

/// Physical parameters that fix `A` and `Sigma_nu`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub photons_per_pixel: f64,
    pub noise_photons_per_pixel: f64,
    pub p_acc: f64,
    pub readout_variance: f64,
    /// Relative arm scales; the absolute scale is `photons_per_pixel * relative`.
    pub relative_arm_scales: Vec<f64>,
    pub pixel_area: f64,
    pub floor_rel: f64,
}

impl ModelParams {
    pub fn new(photons_per_pixel: f64) -> Self {
        ModelParams {
            photons_per_pixel,
            noise_photons_per_pixel: 0.0,
            p_acc: DEFAULT_P_ACC,
            readout_variance: DEFAULT_READOUT_VARIANCE,
            relative_arm_scales: vec![1.0; 3],
            pixel_area: 1.0,
            floor_rel: DEFAULT_FLOOR_REL,
        }
    }

    pub fn with_noise_photons(mut self, rate: f64, p_acc: f64) -> Self {
        self.noise_photons_per_pixel = rate;
        self.p_acc = p_acc;
        self
    }

    fn validate(&self) -> Result<()> {
        let nonneg = |name: &str, v: f64| {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(Error::invalid(format!("{name} must be finite and non-negative, got {v}")))
            }
        };
        if !(self.photons_per_pixel.is_finite() && self.photons_per_pixel > 0.0) {
            return Err(Error::invalid(format!(
                "photons per pixel must be positive, got {}",
                self.photons_per_pixel
            )));
        }
        nonneg("noise photons per pixel", self.noise_photons_per_pixel)?;
        nonneg("readout variance", self.readout_variance)?;
        if !(0.0..=1.0).contains(&self.p_acc) {
            return Err(Error::invalid(format!("p_acc must lie in [0, 1], got {}", self.p_acc)));
        }
        if !(self.floor_rel.is_finite() && self.floor_rel > 0.0) {
            return Err(Error::invalid("covariance floor must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    /// Three correlated ghost images.
    Ghost,
    /// One directly detected image.
    Ordinary,
}

/// Outcome of the `U (I - A^- A) = 0` test.
#[derive(Debug, Clone, PartialEq)]
pub struct Estimability {
    pub estimable: bool,
    /// Dimension of the part of the null space of `A` that `U` still sees.
    pub deficiency: usize,
    /// `||U (I - A^- A)||_F`.
    pub residual: f64,
}

impl Estimability {
    pub fn into_result(self) -> Result<()> {
        if self.estimable {
            Ok(())
        } else {
            Err(Error::NotEstimable {
                deficiency: self.deficiency,
                residual: self.residual,
            })
        }
    }
}

/// Estimability of `U` from a dense `A`.
pub fn check_estimability_dense(a: &DMatrix<f64>, u: &DMatrix<f64>) -> Result<Estimability> {
    if a.ncols() != u.ncols() {
        return Err(Error::invalid(format!(
            "A has {} columns, U has {}",
            a.ncols(),
            u.ncols()
        )));
    }
    let (v, rank) = right_singular_split(a);
    let null = v.columns(rank, a.ncols() - rank).clone_owned();
    Ok(estimability_from_null_basis(u, &null))
}

fn estimability_from_null_basis(u: &DMatrix<f64>, null: &DMatrix<f64>) -> Estimability {
    let u_norm = u.norm();
    if null.ncols() == 0 {
        return Estimability {
            estimable: true,
            deficiency: 0,
            residual: 0.0,
        };
    }
    // null has orthonormal columns, so ||U N N^T||_F = ||U N||_F.
    let un = u * null;
    let residual = un.norm();
    let threshold = ESTIMABILITY_TOLERANCE * u_norm;
    let estimable = residual <= threshold;
    let deficiency = if estimable {
        0
    } else {
        un.singular_values().iter().filter(|&&s| s > threshold).count()
    };
    Estimability {
        estimable,
        deficiency,
        residual,
    }
}

/// The linear model `xi = A f + nu` with `A` stacked from identical detector
/// matrices, and the covariance model for `nu`.
///
/// Ghost model: `Sigma_nu(f) = g g^T + diag(sigma')` with `g = gamma A f` and
/// `gamma^2 = 1 / (N n)`. Ordinary model: `Sigma_nu(f) = diag(A f + sigma')`.
#[derive(Debug, Clone)]
pub struct SensingModel {
    kind: ModelKind,
    geometry: DetectorGeometry,
    detector: DetectorMatrix,
    params: ModelParams,
    arm_scales: Vec<f64>,
    sigma_prime: DVector<f64>,
    gamma: f64,
    floor: f64,
    u: Option<DMatrix<f64>>,
}

impl SensingModel {
    pub fn ghost(geometry: DetectorGeometry, params: ModelParams) -> Result<Self> {
        if params.relative_arm_scales.len() != 3 {
            return Err(Error::invalid(format!(
                "ghost model needs three arm scales, got {}",
                params.relative_arm_scales.len()
            )));
        }
        Self::build(ModelKind::Ghost, geometry, params)
    }

    /// Single-arm direct imaging with the same detectors. Any relative arm
    /// scales in `params` are replaced by a single unit scale.
    pub fn ordinary(geometry: DetectorGeometry, mut params: ModelParams) -> Result<Self> {
        params.relative_arm_scales = vec![1.0];
        Self::build(ModelKind::Ordinary, geometry, params)
    }

    fn build(kind: ModelKind, geometry: DetectorGeometry, params: ModelParams) -> Result<Self> {
        params.validate()?;
        let arm_scales: Vec<f64> = params
            .relative_arm_scales
            .iter()
            .map(|s| s * params.photons_per_pixel)
            .collect();
        check_scales(&arm_scales, params.pixel_area)?;
        let detector = build_detector_matrix(&geometry);
        let n = geometry.n_pixels();
        let arms = arm_scales.len();
        let per_pixel = noise_photon_term(params.noise_photons_per_pixel, arms, params.p_acc);
        let m = detector.nrows();
        let mut sigma_prime = DVector::zeros(arms * m);
        for j in 0..arms {
            for p in 0..m {
                sigma_prime[j * m + p] =
                    params.readout_variance + per_pixel * detector.footprint_size(p) as f64;
            }
        }
        let gamma = match kind {
            ModelKind::Ghost => 1.0 / (params.photons_per_pixel * n as f64).sqrt(),
            ModelKind::Ordinary => 0.0,
        };
        let mut model = SensingModel {
            kind,
            geometry,
            detector,
            params,
            arm_scales,
            sigma_prime,
            gamma,
            floor: 0.0,
            u: None,
        };
        // Signal part of the worst-case diagonal sets the floor.
        let af = model.apply_a(&vec![1.0; n]);
        let signal_diag: f64 = match kind {
            ModelKind::Ghost => af.iter().map(|v| (model.gamma * v).powi(2)).sum(),
            ModelKind::Ordinary => af.iter().sum(),
        };
        model.floor = model.params.floor_rel * signal_diag / af.len() as f64;
        let floor = model.floor;
        model.sigma_prime.apply(|v| *v = v.max(floor));
        Ok(model)
    }

    /// Replace the ideal device. `u` must have `n` columns.
    pub fn with_ideal_device(mut self, u: DMatrix<f64>) -> Result<Self> {
        if u.ncols() != self.n_pixels() || u.nrows() == 0 {
            return Err(Error::invalid(format!(
                "U must have {} columns, got {}x{}",
                self.n_pixels(),
                u.nrows(),
                u.ncols()
            )));
        }
        if u.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("U has non-finite entries"));
        }
        self.u = Some(u);
        Ok(self)
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn geometry(&self) -> &DetectorGeometry {
        &self.geometry
    }

    pub fn detector(&self) -> &DetectorMatrix {
        &self.detector
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn arms(&self) -> usize {
        self.arm_scales.len()
    }

    /// Absolute per-arm scales `C_j / pixel_area`.
    pub fn arm_scales(&self) -> &[f64] {
        &self.arm_scales
    }

    pub fn sigma_prime(&self) -> &DVector<f64> {
        &self.sigma_prime
    }

    pub fn covariance_floor(&self) -> f64 {
        self.floor
    }

    /// `None` means `U = I`.
    pub fn ideal_device(&self) -> Option<&DMatrix<f64>> {
        self.u.as_ref()
    }

    pub fn ideal_device_dense(&self) -> DMatrix<f64> {
        self.u
            .clone()
            .unwrap_or_else(|| DMatrix::identity(self.n_pixels(), self.n_pixels()))
    }

    pub fn n_pixels(&self) -> usize {
        self.geometry.n_pixels()
    }

    pub fn n_detectors(&self) -> usize {
        self.detector.nrows()
    }

    pub fn n_measurements(&self) -> usize {
        self.arms() * self.n_detectors()
    }

    fn block_scale(&self, j: usize) -> f64 {
        self.arm_scales[j] * self.params.pixel_area
    }

    pub fn apply_a(&self, f: &[f64]) -> DVector<f64> {
        let bf = self.detector.apply(f);
        let m = bf.len();
        DVector::from_fn(self.n_measurements(), |i, _| self.block_scale(i / m) * bf[i % m])
    }

    pub fn apply_a_transpose(&self, y: &DVector<f64>) -> DVector<f64> {
        let m = self.n_detectors();
        let mut combined = vec![0.0; m];
        for j in 0..self.arms() {
            let c = self.block_scale(j);
            for p in 0..m {
                combined[p] += c * y[j * m + p];
            }
        }
        DVector::from_vec(self.detector.apply_transpose(&combined))
    }

    pub fn a_dense(&self) -> DMatrix<f64> {
        build_a(&self.geometry, &self.arm_scales, self.params.pixel_area)
            .expect("model scales were validated")
    }

    pub fn build_sigma_nu(&self, f: &[f64]) -> Result<LowRankPlusDiag> {
        if f.len() != self.n_pixels() {
            return Err(Error::invalid(format!(
                "object has {} pixels, model has {}",
                f.len(),
                self.n_pixels()
            )));
        }
        let af = self.apply_a(f);
        match self.kind {
            ModelKind::Ghost => {
                let g = af * self.gamma;
                LowRankPlusDiag::new(self.sigma_prime.clone(), DMatrix::from_column_slice(g.len(), 1, g.as_slice()))
            }
            ModelKind::Ordinary => Ok(LowRankPlusDiag::diagonal(&self.sigma_prime + af)),
        }
    }

    /// `A^T Sigma^-1 A` for a covariance in low-rank-plus-diagonal form.
    pub fn information_matrix(&self, sigma: &LowRankPlusDiag) -> Result<DMatrix<f64>> {
        let rows = self.n_measurements();
        if sigma.dim() != rows {
            return Err(Error::invalid(format!(
                "covariance has dimension {}, model has {rows} measurements",
                sigma.dim()
            )));
        }
        if let Some((i, d)) = sigma.diag.iter().enumerate().find(|(_, d)| !(**d >= self.floor && **d > 0.0)) {
            return Err(Error::SingularCovariance(format!(
                "diagonal entry {i} is {d:e}, below the floor {:e}",
                self.floor
            )));
        }
        let n = self.n_pixels();
        let m = self.n_detectors();
        let mut info = DMatrix::zeros(n, n);
        let mut weights = vec![0.0; m];
        for j in 0..self.arms() {
            let c = self.block_scale(j);
            for p in 0..m {
                weights[p] = c * c / sigma.diag[j * m + p];
            }
            self.detector.add_weighted_gram(&weights, &mut info);
        }
        let r = sigma.rank();
        if r > 0 {
            // Woodbury: subtract H^T (I + G^T D^-1 G)^-1 H with H = G^T D^-1 A.
            let mut scaled = sigma.factors.clone();
            for mut col in scaled.column_iter_mut() {
                col.component_div_assign(&sigma.diag);
            }
            let mut cap = sigma.factors.tr_mul(&scaled);
            for i in 0..r {
                cap[(i, i)] += 1.0;
            }
            symmetrize(&mut cap);
            let cap = SpdFactor::new(&cap, DEFAULT_PIVOT_TOLERANCE)?;
            let mut h = DMatrix::zeros(n, r);
            for k in 0..r {
                let col = self.apply_a_transpose(&scaled.column(k).clone_owned());
                h.set_column(k, &col);
            }
            let correction = &h * cap.solve_matrix(&h.transpose());
            info -= correction;
            symmetrize(&mut info);
        }
        Ok(info)
    }

    /// Estimability of `U` from this model's `A`. Uses the Kronecker structure
    /// of the detector matrix, so no dense `A` is formed.
    pub fn check_estimability(&self) -> Estimability {
        // All blocks are positive multiples of B, so null(A) = null(B).
        let null = self.detector.null_space_basis();
        match &self.u {
            None => Estimability {
                estimable: null.ncols() == 0,
                deficiency: null.ncols(),
                residual: if null.ncols() == 0 { 0.0 } else { (null.ncols() as f64).sqrt() },
            },
            Some(u) => estimability_from_null_basis(u, &null),
        }
    }

    /// SHA-256 over every parameter that affects `A` or `Sigma_nu`.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update(b"mgi-model-v1");
        h.update([match self.kind {
            ModelKind::Ghost => 0u8,
            ModelKind::Ordinary => 1u8,
        }]);
        let g = &self.geometry;
        for v in [g.width, g.height, g.detector_size] {
            h.update((v as u64).to_le_bytes());
        }
        h.update([match g.placement {
            Placement::Sliding => 0u8,
            Placement::Tiled => 1u8,
        }]);
        let p = &self.params;
        for v in [
            p.photons_per_pixel,
            p.noise_photons_per_pixel,
            p.p_acc,
            p.readout_variance,
            p.pixel_area,
            p.floor_rel,
        ] {
            h.update(v.to_le_bytes());
        }
        h.update((p.relative_arm_scales.len() as u64).to_le_bytes());
        for v in &p.relative_arm_scales {
            h.update(v.to_le_bytes());
        }
        match &self.u {
            None => h.update([0u8]),
            Some(u) => {
                h.update([1u8]);
                h.update((u.nrows() as u64).to_le_bytes());
                for v in u.iter() {
                    h.update(v.to_le_bytes());
                }
            }
        }
        hex::encode(h.finalize())
    }
}

/// The fully transparent object, which maximizes the reduction error.
pub fn worst_case_f(model: &SensingModel) -> ObjectImage {
    ObjectImage::constant(model.geometry.width, model.geometry.height, 1.0)
        .expect("model grid is non-empty")
}
