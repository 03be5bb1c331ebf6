//! `<measurement>.meta` sidecar: the acquisition settings and the model fingerprint.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use mgi_core::sensing::{DetectorGeometry, ModelKind, ModelParams, Placement, SensingModel};
use mgi_core::sim::NoiseMode;

use crate::config::parse_key_values;
use crate::error::{io_err, CliError};

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub width: usize,
    pub height: usize,
    pub detector_size: usize,
    pub placement: Placement,
    pub params: ModelParams,
}

impl ModelSpec {
    pub fn build(&self) -> Result<SensingModel, CliError> {
        let g = DetectorGeometry::new(self.width, self.height, self.detector_size, self.placement)?;
        Ok(match self.kind {
            ModelKind::Ghost => SensingModel::ghost(g, self.params.clone())?,
            ModelKind::Ordinary => SensingModel::ordinary(g, self.params.clone())?,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementMeta {
    pub model: ModelSpec,
    pub seed: u64,
    pub noise_mode: NoiseMode,
    pub noise_scale: f64,
    pub fingerprint: String,
}

pub fn meta_path(measurement: &Path) -> PathBuf {
    let mut s = measurement.as_os_str().to_owned();
    s.push(".meta");
    PathBuf::from(s)
}

fn list(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

impl MeasurementMeta {
    pub fn to_text(&self) -> String {
        let m = &self.model;
        let p = &m.params;
        let mut out = String::new();
        let kind = match m.kind {
            ModelKind::Ghost => "ghost",
            ModelKind::Ordinary => "ordinary",
        };
        let rows: [(&str, String); 16] = [
            ("kind", kind.into()),
            ("width", m.width.to_string()),
            ("height", m.height.to_string()),
            ("detector_size", m.detector_size.to_string()),
            ("placement", m.placement.to_string()),
            ("photons_per_pixel", p.photons_per_pixel.to_string()),
            ("noise_photons_per_pixel", p.noise_photons_per_pixel.to_string()),
            ("p_acc", p.p_acc.to_string()),
            ("readout_variance", p.readout_variance.to_string()),
            ("arm_scales", list(&p.relative_arm_scales)),
            ("pixel_area", p.pixel_area.to_string()),
            ("floor_rel", p.floor_rel.to_string()),
            ("seed", self.seed.to_string()),
            ("noise_mode", self.noise_mode.to_string()),
            ("noise_scale", self.noise_scale.to_string()),
            ("fingerprint", self.fingerprint.clone()),
        ];
        for (k, v) in rows {
            writeln!(out, "{k} = {v}").expect("write to string");
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        let map = parse_key_values(text)?;
        let get = |k: &str| map.get(k).map(String::as_str).ok_or_else(|| format!("missing key '{k}'"));
        let num = |k: &str| -> Result<f64, String> { get(k)?.parse().map_err(|_| format!("{k}: not a number")) };
        let int = |k: &str| -> Result<usize, String> { get(k)?.parse().map_err(|_| format!("{k}: not an integer")) };
        let kind = match get("kind")? {
            "ghost" => ModelKind::Ghost,
            "ordinary" => ModelKind::Ordinary,
            other => return Err(format!("unknown model kind '{other}'")),
        };
        let arm_scales = get("arm_scales")?
            .split(',')
            .map(|s| s.trim().parse::<f64>().map_err(|_| "arm_scales: not a number".to_string()))
            .collect::<Result<Vec<_>, _>>()?;
        let known = [
            "kind",
            "width",
            "height",
            "detector_size",
            "placement",
            "photons_per_pixel",
            "noise_photons_per_pixel",
            "p_acc",
            "readout_variance",
            "arm_scales",
            "pixel_area",
            "floor_rel",
            "seed",
            "noise_mode",
            "noise_scale",
            "fingerprint",
        ];
        if let Some(k) = map.keys().find(|k| !known.contains(&k.as_str())) {
            return Err(format!("unknown key '{k}'"));
        }
        Ok(MeasurementMeta {
            model: ModelSpec {
                kind,
                width: int("width")?,
                height: int("height")?,
                detector_size: int("detector_size")?,
                placement: get("placement")?.parse().map_err(|e: mgi_core::Error| e.to_string())?,
                params: ModelParams {
                    photons_per_pixel: num("photons_per_pixel")?,
                    noise_photons_per_pixel: num("noise_photons_per_pixel")?,
                    p_acc: num("p_acc")?,
                    readout_variance: num("readout_variance")?,
                    relative_arm_scales: arm_scales,
                    pixel_area: num("pixel_area")?,
                    floor_rel: num("floor_rel")?,
                },
            },
            seed: get("seed")?.parse().map_err(|_| "seed: not an integer".to_string())?,
            noise_mode: get("noise_mode")?.parse().map_err(|e: mgi_core::Error| e.to_string())?,
            noise_scale: num("noise_scale")?,
            fingerprint: get("fingerprint")?.to_string(),
        })
    }

    pub fn write(&self, measurement: &Path) -> Result<(), CliError> {
        let path = meta_path(measurement);
        std::fs::write(&path, self.to_text()).map_err(io_err(&path))
    }

    pub fn read(measurement: &Path) -> Result<Self, CliError> {
        let path = meta_path(measurement);
        let text = std::fs::read_to_string(&path).map_err(io_err(&path))?;
        Self::parse(&text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip() {
        let meta = MeasurementMeta {
            model: ModelSpec {
                kind: ModelKind::Ghost,
                width: 8,
                height: 6,
                detector_size: 3,
                placement: Placement::Sliding,
                params: ModelParams::new(1.5).with_noise_photons(10.0, 0.1),
            },
            seed: 42,
            noise_mode: NoiseMode::Poisson,
            noise_scale: 1.0,
            fingerprint: "abc".into(),
        };
        assert_eq!(MeasurementMeta::parse(&meta.to_text()).unwrap(), meta);
        assert!(MeasurementMeta::parse(&(meta.to_text() + "extra = 1\n")).is_err());
    }
}
