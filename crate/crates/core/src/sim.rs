//! Test objects and seeded photon-limited acquisition.

use std::path::PathBuf;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};

use crate::error::{Error, Result};
use crate::sensing::{noise_photon_term, ModelKind, SensingModel};

/// Transparency distribution on a row-major `width x height` grid, values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectImage {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl ObjectImage {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid(format!("grid must be at least 1x1, got {width}x{height}")));
        }
        if data.len() != width * height {
            return Err(Error::invalid(format!(
                "{} values for a {width}x{height} grid",
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::invalid(format!("transparency {v} outside [0, 1]")));
        }
        Ok(ObjectImage { width, height, data })
    }

    pub fn constant(width: usize, height: usize, value: f64) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn to_dvector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.data)
    }

    /// Nearest-neighbour resampling to a new grid.
    pub fn resample(&self, width: usize, height: usize) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid("target grid must be at least 1x1"));
        }
        let data = (0..height)
            .flat_map(|r| {
                let sr = (r * self.height) / height;
                (0..width).map(move |c| (sr, (c * self.width) / width))
            })
            .map(|(sr, sc)| self.get(sr, sc))
            .collect();
        Self::new(width, height, data)
    }
}

/// Two vertical unit bars on an opaque background.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TwoSlit {
    /// Defaults to `width / 8`.
    pub bar_width: Option<usize>,
    /// Defaults to `width / 4`.
    pub gap: Option<usize>,
    /// Defaults to `3 * height / 4`.
    pub length: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ObjectPattern {
    TwoSlit(TwoSlit),
    Bitmap(PathBuf),
    Constant(f64),
}

pub fn gen_object(pattern: &ObjectPattern, width: usize, height: usize) -> Result<ObjectImage> {
    match pattern {
        ObjectPattern::Constant(c) => ObjectImage::constant(width, height, *c),
        ObjectPattern::Bitmap(path) => crate::io::read_pgm(path)?.resample(width, height),
        ObjectPattern::TwoSlit(spec) => two_slit(spec, width, height),
    }
}

fn two_slit(spec: &TwoSlit, width: usize, height: usize) -> Result<ObjectImage> {
    let bar = spec.bar_width.unwrap_or((width / 8).max(1));
    let gap = spec.gap.unwrap_or((width / 4).max(1));
    let length = spec.length.unwrap_or((3 * height / 4).max(1));
    if bar == 0 || gap == 0 || length == 0 {
        return Err(Error::invalid("slit width, gap and length must be positive"));
    }
    if 2 * bar + gap > width || length > height {
        return Err(Error::invalid(format!(
            "two slits of width {bar}, gap {gap}, length {length} do not fit a {width}x{height} grid"
        )));
    }
    let left = (width - 2 * bar - gap) / 2;
    let top = (height - length) / 2;
    let mut data = vec![0.0; width * height];
    for r in top..top + length {
        for c in (left..left + bar).chain(left + bar + gap..left + 2 * bar + gap) {
            data[r * width + c] = 1.0;
        }
    }
    ObjectImage::new(width, height, data)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseMode {
    Gaussian,
    Poisson,
}

impl std::str::FromStr for NoiseMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gaussian" => Ok(NoiseMode::Gaussian),
            "poisson" => Ok(NoiseMode::Poisson),
            other => Err(Error::invalid(format!("unknown noise mode '{other}'"))),
        }
    }
}

impl std::fmt::Display for NoiseMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            NoiseMode::Gaussian => "gaussian",
            NoiseMode::Poisson => "poisson",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AcquisitionConfig {
    pub photons_per_pixel: f64,
    pub noise_photons_per_pixel: f64,
    pub p_acc: f64,
    pub seed: u64,
    pub noise_mode: NoiseMode,
    /// 3 for ghost imaging, 1 for ordinary imaging.
    pub arms: usize,
    /// Multiplies the drawn noise; 0 gives `xi = A f` exactly.
    pub noise_scale: f64,
    /// Subtract the expected noise-photon counts from each detector.
    pub subtract_background: bool,
}

impl AcquisitionConfig {
    pub fn ghost(photons_per_pixel: f64, seed: u64) -> Self {
        AcquisitionConfig {
            photons_per_pixel,
            noise_photons_per_pixel: 0.0,
            p_acc: crate::sensing::DEFAULT_P_ACC,
            seed,
            noise_mode: NoiseMode::Gaussian,
            arms: 3,
            noise_scale: 1.0,
            subtract_background: true,
        }
    }

    pub fn ordinary(photons_per_pixel: f64, seed: u64) -> Self {
        AcquisitionConfig {
            arms: 1,
            ..Self::ghost(photons_per_pixel, seed)
        }
    }

    pub fn with_noise_photons(mut self, rate: f64, p_acc: f64) -> Self {
        self.noise_photons_per_pixel = rate;
        self.p_acc = p_acc;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    fn check_against(&self, model: &SensingModel) -> Result<()> {
        let p = model.params();
        if self.arms != model.arms() {
            return Err(Error::invalid(format!(
                "acquisition has {} arms, model has {}",
                self.arms,
                model.arms()
            )));
        }
        if self.photons_per_pixel != p.photons_per_pixel
            || self.noise_photons_per_pixel != p.noise_photons_per_pixel
            || self.p_acc != p.p_acc
        {
            return Err(Error::invalid(
                "acquisition photon budget, noise-photon rate or p_acc differ from the model",
            ));
        }
        if !(self.noise_scale.is_finite() && self.noise_scale >= 0.0) {
            return Err(Error::invalid(format!(
                "noise scale must be finite and non-negative, got {}",
                self.noise_scale
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Measurement {
    pub xi: DVector<f64>,
    pub config: AcquisitionConfig,
    pub model_fingerprint: String,
    pub detector_rows: usize,
    pub detector_cols: usize,
}

impl Measurement {
    pub fn arms(&self) -> usize {
        self.config.arms
    }
}

/// Three correlated ghost images of `f_true`.
///
/// Gaussian mode draws `nu ~ N(0, Sigma_nu(f_true))`. Poisson mode draws
/// noise-photon counts from a Poisson law and keeps the correlator and readout
/// parts Gaussian, with the same first two moments.
pub fn simulate_gi(f_true: &ObjectImage, model: &SensingModel, cfg: &AcquisitionConfig) -> Result<Measurement> {
    if model.kind() != ModelKind::Ghost {
        return Err(Error::invalid("simulate_gi needs a ghost-imaging model"));
    }
    simulate(f_true, model, cfg)
}

/// Single-arm direct image: shot noise on `A f` and the full noise-photon rate.
pub fn simulate_ordinary(f_true: &ObjectImage, model: &SensingModel, cfg: &AcquisitionConfig) -> Result<Measurement> {
    if model.kind() != ModelKind::Ordinary {
        return Err(Error::invalid("simulate_ordinary needs an ordinary-imaging model"));
    }
    simulate(f_true, model, cfg)
}

fn simulate(f_true: &ObjectImage, model: &SensingModel, cfg: &AcquisitionConfig) -> Result<Measurement> {
    cfg.check_against(model)?;
    let g = model.geometry();
    if f_true.width() != g.width || f_true.height() != g.height {
        return Err(Error::invalid(format!(
            "object is {}x{}, model grid is {}x{}",
            f_true.width(),
            f_true.height(),
            g.width,
            g.height
        )));
    }
    let mean = model.apply_a(f_true.data());
    let rows = mean.len();
    let m = model.n_detectors();
    let photon_rate = noise_photon_term(cfg.noise_photons_per_pixel, cfg.arms, cfg.p_acc);
    let background = DVector::from_fn(rows, |i, _| photon_rate * model.detector().footprint_size(i % m) as f64);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let sigma = model.build_sigma_nu(f_true.data())?;
    let mut noise = DVector::zeros(rows);

    // Correlated part first, then one pass over the detectors.
    if sigma.rank() > 0 {
        let z = DVector::from_fn(sigma.rank(), |_, _| rng.sample::<f64, _>(StandardNormal));
        noise.gemv(1.0, &sigma.factors, &z, 0.0);
    }
    match cfg.noise_mode {
        NoiseMode::Gaussian => {
            for i in 0..rows {
                let z: f64 = rng.sample(StandardNormal);
                noise[i] += sigma.diag[i].sqrt() * z;
            }
        }
        NoiseMode::Poisson => {
            for i in 0..rows {
                let shot = match model.kind() {
                    ModelKind::Ordinary => poisson(&mut rng, mean[i])? - mean[i],
                    ModelKind::Ghost => 0.0,
                };
                let photons = poisson(&mut rng, background[i])? - background[i];
                // The rest of the diagonal (readout and floor) stays Gaussian.
                let shot_var = match model.kind() {
                    ModelKind::Ordinary => mean[i],
                    ModelKind::Ghost => 0.0,
                };
                let rest = (sigma.diag[i] - shot_var - background[i]).max(0.0);
                let z: f64 = rng.sample(StandardNormal);
                noise[i] += shot + photons + rest.sqrt() * z;
            }
        }
    }

    let mut xi = mean + noise * cfg.noise_scale;
    if !cfg.subtract_background {
        xi += &background;
    }
    if xi.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("simulation produced non-finite values"));
    }
    Ok(Measurement {
        xi,
        config: cfg.clone(),
        model_fingerprint: model.fingerprint(),
        detector_rows: g.detector_rows(),
        detector_cols: g.detector_cols(),
    })
}

fn poisson(rng: &mut ChaCha8Rng, lambda: f64) -> Result<f64> {
    if lambda <= 0.0 {
        return Ok(0.0);
    }
    let d = Poisson::new(lambda).map_err(|e| Error::invalid(format!("poisson rate {lambda}: {e}")))?;
    Ok(d.sample(rng))
}
