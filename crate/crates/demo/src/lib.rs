//! Browser front end: simulate a ghost-imaging measurement of a small object,
//! reconstruct it and work out focal lengths for the reference arms.

use mgi_core::io::quantize;
use mgi_core::optics::{magnification, required_focal_length, OpticalSetup};
use mgi_core::reduction::{metrics, PipelineConfig, ReductionPlan};
use mgi_core::sensing::{DetectorGeometry, ModelParams, SensingModel};
use mgi_core::sim::{gen_object, simulate_gi, AcquisitionConfig, NoiseMode, ObjectImage, ObjectPattern, TwoSlit};
use mgi_core::transforms::{BasisKind, SparsityBasis};
use nalgebra::DVector;
use wasm_bindgen::prelude::*;

pub const GRID: usize = 32;
const DETECTOR: usize = 3;

fn msg(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn ring(size: usize) -> ObjectImage {
    let c = (size as f64 - 1.0) / 2.0;
    let (inner, outer) = (size as f64 * 0.2, size as f64 * 0.4);
    let data = (0..size * size)
        .map(|i| {
            let (r, col) = ((i / size) as f64 - c, (i % size) as f64 - c);
            let d = (r * r + col * col).sqrt();
            if (inner..=outer).contains(&d) {
                1.0
            } else {
                0.1
            }
        })
        .collect();
    ObjectImage::new(size, size, data).expect("ring fits its grid")
}

fn object(pattern: &str) -> Result<ObjectImage, String> {
    match pattern {
        "two-slit" => gen_object(&ObjectPattern::TwoSlit(TwoSlit::default()), GRID, GRID).map_err(msg),
        "ring" => Ok(ring(GRID)),
        other => Err(format!("unknown pattern '{other}'")),
    }
}

/// Grayscale values in `[0, 1]` to RGBA bytes for `ImageData`.
fn rgba(values: &[f64]) -> Vec<u8> {
    values
        .iter()
        .flat_map(|&v| {
            let g = quantize(v);
            [g, g, g, 255]
        })
        .collect()
}

#[wasm_bindgen]
pub struct Demo {
    truth: ObjectImage,
    model: SensingModel,
    plan: ReductionPlan,
    xi: Option<DVector<f64>>,
    last_mse: f64,
}

#[wasm_bindgen]
impl Demo {
    /// Builds the model and the reduction plan; the plan is the slow part.
    #[wasm_bindgen(constructor)]
    pub fn new(pattern: &str, photons: f64, noise_photons: f64) -> Result<Demo, String> {
        let truth = object(pattern)?;
        let geometry = DetectorGeometry::sliding(GRID, GRID, DETECTOR).map_err(msg)?;
        let params = ModelParams::new(photons).with_noise_photons(noise_photons, 0.1);
        let model = SensingModel::ghost(geometry, params).map_err(msg)?;
        let plan = ReductionPlan::worst_case(&model).map_err(msg)?;
        Ok(Demo {
            truth,
            model,
            plan,
            xi: None,
            last_mse: f64::NAN,
        })
    }

    pub fn size(&self) -> usize {
        GRID
    }

    #[wasm_bindgen(js_name = detectorSize)]
    pub fn detector_size(&self) -> usize {
        self.model.geometry().detector_rows()
    }

    #[wasm_bindgen(js_name = truthRgba)]
    pub fn truth_rgba(&self) -> Vec<u8> {
        rgba(self.truth.data())
    }

    /// Draws a measurement and returns the first arm's detector counts, scaled to
    /// their maximum.
    pub fn simulate(&mut self, seed: u64) -> Result<Vec<u8>, String> {
        let p = self.model.params();
        let mut cfg = AcquisitionConfig::ghost(p.photons_per_pixel, seed).with_noise_photons(p.noise_photons_per_pixel, p.p_acc);
        cfg.noise_mode = NoiseMode::Poisson;
        let m = simulate_gi(&self.truth, &self.model, &cfg).map_err(msg)?;
        let first: Vec<f64> = m.xi.rows(0, self.model.n_detectors()).iter().copied().collect();
        let peak = first.iter().cloned().fold(f64::MIN_POSITIVE, f64::max);
        self.xi = Some(m.xi);
        Ok(rgba(&first.iter().map(|v| v / peak).collect::<Vec<_>>()))
    }

    /// Reconstructs the last measurement; `basis` is `none`, `dct` or `haar`.
    pub fn reconstruct(&mut self, basis: &str, lambda: f64) -> Result<Vec<u8>, String> {
        let xi = self.xi.as_ref().ok_or("simulate a measurement first")?;
        let kind: BasisKind = basis.parse().map_err(msg)?;
        let basis = SparsityBasis::new(kind, GRID, GRID).map_err(msg)?;
        let out = self.plan.run(&self.model, xi, &PipelineConfig::new(basis, lambda)).map_err(msg)?;
        let image = out.image().as_slice();
        self.last_mse = metrics(image, &self.truth).map_err(msg)?.mse;
        Ok(rgba(image))
    }

    /// Per-pixel MSE of the last reconstruction, NaN before the first one.
    #[wasm_bindgen(js_name = lastMse)]
    pub fn last_mse(&self) -> f64 {
        self.last_mse
    }

    /// Per-pixel MSE bound of the unconstrained linear estimate.
    #[wasm_bindgen(js_name = worstCaseMse)]
    pub fn worst_case_mse(&self) -> f64 {
        self.plan.worst_case_mse() / self.model.n_pixels() as f64
    }
}

/// Focal length that images the object onto the detector of `arm` (2, 3 or 4)
/// for the given lens distances, with the default wavenumbers.
#[wasm_bindgen(js_name = focalLength)]
pub fn focal_length(arm: usize, l1: f64, l2: f64) -> Result<f64, String> {
    setup(arm, l1, l2).and_then(|s| required_focal_length(&s, arm).map_err(msg))
}

#[wasm_bindgen(js_name = imageMagnification)]
pub fn image_magnification(arm: usize, l1: f64, l2: f64) -> Result<f64, String> {
    setup(arm, l1, l2).and_then(|s| magnification(&s, arm).map_err(msg))
}

fn setup(arm: usize, l1: f64, l2: f64) -> Result<OpticalSetup, String> {
    let mut s = OpticalSetup::default();
    let g = s.arm_mut(arm).map_err(msg)?;
    g.l1 = l1;
    g.l2 = l2;
    Ok(s)
}
