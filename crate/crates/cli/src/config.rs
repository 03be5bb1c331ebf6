//! Flat `key = value` experiment configuration.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use mgi_core::optics::{imaging_condition_residual, magnification, required_focal_length, OpticalSetup, REFERENCE_ARMS};
use mgi_core::sensing::Placement;
use mgi_core::sim::NoiseMode;
use mgi_core::transforms::BasisKind;

use crate::error::CliError;

/// Parse `key = value` lines. `#` starts a comment; blank lines are ignored.
/// Duplicate keys and lines without `=` are errors.
pub fn parse_key_values(text: &str) -> Result<BTreeMap<String, String>, String> {
    let mut out = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = match raw.find('#') {
            Some(i) => &raw[..i],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| format!("line {}: expected 'key = value'", lineno + 1))?;
        let key = key.trim();
        if key.is_empty() {
            return Err(format!("line {}: empty key", lineno + 1));
        }
        if out.insert(key.to_string(), value.trim().to_string()).is_some() {
            return Err(format!("line {}: duplicate key '{key}'", lineno + 1));
        }
    }
    Ok(out)
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>, String> {
    value
        .split(',')
        .map(|s| s.trim())
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<T>().map_err(|_| format!("{key}: cannot parse '{s}'")))
        .collect()
}

fn parse_one<T: FromStr>(key: &str, value: &str) -> Result<T, String> {
    value.parse::<T>().map_err(|_| format!("{key}: cannot parse '{value}'"))
}

/// Every setting a config file may carry. Unset fields fall back to command-line
/// flags or built-in defaults.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExperimentConfig {
    pub width: Option<usize>,
    pub height: Option<usize>,
    pub detector_size: Option<usize>,
    pub placement: Option<Placement>,
    pub photons_per_pixel: Option<f64>,
    pub noise_photons_per_pixel: Option<f64>,
    pub p_acc: Option<f64>,
    pub readout_variance: Option<f64>,
    pub noise_mode: Option<NoiseMode>,
    pub noise_scale: Option<f64>,
    pub arm_scales: Option<Vec<f64>>,
    pub pixel_area: Option<f64>,
    pub seeds: Option<Vec<u64>>,
    pub basis: Option<Vec<BasisKind>>,
    pub lambda: Option<Vec<f64>>,
    pub output_dir: Option<PathBuf>,
    pub optics: OpticalSetup,
    /// Focal lengths given explicitly, by arm index 2..4.
    pub focal_given: [bool; 3],
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        let map = parse_key_values(text)?;
        let mut cfg = ExperimentConfig::default();
        let mut optics = OpticalSetup::default();
        let mut distances_changed = false;
        for (key, value) in &map {
            let k = key.as_str();
            let v = value.as_str();
            match k {
                "width" => cfg.width = Some(parse_one(k, v)?),
                "height" => cfg.height = Some(parse_one(k, v)?),
                "size" => {
                    let s = parse_one(k, v)?;
                    cfg.width = Some(s);
                    cfg.height = Some(s);
                }
                "detector_size" => cfg.detector_size = Some(parse_one(k, v)?),
                "placement" => cfg.placement = Some(v.parse().map_err(|e: mgi_core::Error| e.to_string())?),
                "photons_per_pixel" => cfg.photons_per_pixel = Some(parse_one(k, v)?),
                "noise_photons_per_pixel" => cfg.noise_photons_per_pixel = Some(parse_one(k, v)?),
                "p_acc" => cfg.p_acc = Some(parse_one(k, v)?),
                "readout_variance" => cfg.readout_variance = Some(parse_one(k, v)?),
                "noise_mode" => cfg.noise_mode = Some(v.parse().map_err(|e: mgi_core::Error| e.to_string())?),
                "noise_scale" => cfg.noise_scale = Some(parse_one(k, v)?),
                "arm_scales" => cfg.arm_scales = Some(parse_list(k, v)?),
                "pixel_area" => cfg.pixel_area = Some(parse_one(k, v)?),
                "seed" | "seeds" => cfg.seeds = Some(parse_list(k, v)?),
                "basis" => {
                    cfg.basis = Some(
                        v.split(',')
                            .map(|s| s.trim().parse::<BasisKind>().map_err(|e| e.to_string()))
                            .collect::<Result<_, _>>()?,
                    )
                }
                "lambda" => cfg.lambda = Some(parse_list(k, v)?),
                "output_dir" => cfg.output_dir = Some(PathBuf::from(v)),
                "k1" | "k2" | "k3" | "k4" => {
                    let i: usize = k[1..].parse().expect("k1..k4");
                    optics.k[i - 1] = parse_one(k, v)?;
                    distances_changed = true;
                }
                "l11" => {
                    optics.l11 = parse_one(k, v)?;
                    distances_changed = true;
                }
                "l12" => optics.l12 = parse_one(k, v)?,
                "beta" => optics.beta = parse_one(k, v)?,
                "xi" => optics.xi = parse_one(k, v)?,
                "s" => optics.s = parse_one(k, v)?,
                _ => {
                    let arm_key = ["l21", "l22", "f2", "l31", "l32", "f3", "l41", "l42", "f4"].iter().position(|c| *c == k);
                    match arm_key {
                        Some(pos) => {
                            let arm = &mut optics.arms[pos / 3];
                            let value: f64 = parse_one(k, v)?;
                            match pos % 3 {
                                0 => arm.l1 = value,
                                1 => arm.l2 = value,
                                _ => {
                                    arm.focal_length = value;
                                    cfg.focal_given[pos / 3] = true;
                                }
                            }
                            if pos % 3 != 2 {
                                distances_changed = true;
                            }
                        }
                        None => return Err(format!("unknown key '{k}'")),
                    }
                }
            }
        }
        if distances_changed {
            // Focal lengths not given explicitly follow the distances.
            for (i, arm) in REFERENCE_ARMS.iter().enumerate() {
                if !cfg.focal_given[i] {
                    let f = required_focal_length(&optics, *arm).map_err(|e| e.to_string())?;
                    optics.arms[i].focal_length = f;
                }
            }
        }
        cfg.optics = optics;
        Ok(cfg)
    }

    /// The sensing model assumes every arm images the object at unit magnification
    /// and is in focus.
    pub fn check_optics(&self) -> Result<(), CliError> {
        let o = &self.optics;
        o.validate().map_err(|e| CliError::Config(e.to_string()))?;
        for arm in REFERENCE_ARMS {
            let alpha = magnification(o, arm).map_err(|e| CliError::Config(e.to_string()))?;
            if (alpha - 1.0).abs() > 1e-9 {
                return Err(CliError::Config(format!(
                    "arm {arm} has magnification {alpha}; the sensing model needs 1 (set l{arm}2 to the effective object distance)"
                )));
            }
            let f = o.arm(arm).map_err(|e| CliError::Config(e.to_string()))?.focal_length;
            let residual = imaging_condition_residual(o, arm, f).map_err(|e| CliError::Config(e.to_string()))?;
            if residual > 1e-9 {
                return Err(CliError::Config(format!(
                    "arm {arm} is out of focus: f{arm} = {f} leaves imaging-condition residual {residual:e}"
                )));
            }
        }
        Ok(())
    }
}
