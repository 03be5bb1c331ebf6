//! File formats: 8-bit binary PGM images and `MGIMEAS1` measurement vectors.

use std::fs;
use std::path::Path;

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{DynamicImage, ExtendedColorType, ImageEncoder, ImageFormat};
use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::sim::ObjectImage;

pub const MEASUREMENT_MAGIC: &[u8; 8] = b"MGIMEAS1";
const HEADER_LEN: usize = 8 + 3 * 4;

/// Encode as binary PGM (P5), maxval 255. Values are clamped to `[0, 1]` and rounded.
pub fn encode_pgm(width: usize, height: usize, values: &[f64]) -> Result<Vec<u8>> {
    if values.len() != width * height || width == 0 || height == 0 {
        return Err(Error::invalid(format!(
            "{} values for a {width}x{height} image",
            values.len()
        )));
    }
    let pixels: Vec<u8> = values.iter().map(|v| quantize(*v)).collect();
    let mut out = Vec::new();
    PnmEncoder::new(&mut out)
        .with_subtype(PnmSubtype::Graymap(SampleEncoding::Binary))
        .write_image(&pixels, width as u32, height as u32, ExtendedColorType::L8)
        .map_err(|e| Error::invalid(format!("pgm encoding failed: {e}")))?;
    Ok(out)
}

pub fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Decode any PNM graymap (8 or 16 bit) to transparencies in `[0, 1]`.
pub fn decode_pgm(bytes: &[u8]) -> std::result::Result<ObjectImage, String> {
    let img = image::load_from_memory_with_format(bytes, ImageFormat::Pnm).map_err(|e| e.to_string())?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data: Vec<f64> = match img {
        DynamicImage::ImageLuma8(g) => g.into_raw().into_iter().map(|v| v as f64 / 255.0).collect(),
        other => other
            .into_luma16()
            .into_raw()
            .into_iter()
            .map(|v| v as f64 / 65535.0)
            .collect(),
    };
    ObjectImage::new(w, h, data).map_err(|e| e.to_string())
}

pub fn write_pgm(path: impl AsRef<Path>, image: &ObjectImage) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_pgm(image.width(), image.height(), image.data())?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_pgm(path: impl AsRef<Path>) -> Result<ObjectImage> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pgm(&bytes).map_err(|message| Error::Format {
        path: path.to_path_buf(),
        message,
    })
}

/// Payload of an `MGIMEAS1` file.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementFile {
    pub arms: u32,
    pub detector_rows: u32,
    pub detector_cols: u32,
    /// Arm-major, then row-major within each detector image.
    pub xi: DVector<f64>,
}

impl MeasurementFile {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + 8 * self.xi.len());
        out.extend_from_slice(MEASUREMENT_MAGIC);
        for v in [self.arms, self.detector_rows, self.detector_cols] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for v in self.xi.iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> std::result::Result<Self, String> {
        if bytes.len() < HEADER_LEN {
            return Err(format!("file is {} bytes, shorter than the header", bytes.len()));
        }
        if &bytes[..8] != MEASUREMENT_MAGIC {
            return Err("bad magic, not an MGIMEAS1 file".into());
        }
        let word = |i: usize| u32::from_le_bytes(bytes[8 + 4 * i..12 + 4 * i].try_into().expect("4 bytes"));
        let (arms, detector_rows, detector_cols) = (word(0), word(1), word(2));
        let count = (arms as u64) * (detector_rows as u64) * (detector_cols as u64);
        let payload = &bytes[HEADER_LEN..];
        if payload.len() as u64 != 8 * count {
            return Err(format!(
                "header declares {count} values, payload holds {} bytes",
                payload.len()
            ));
        }
        let xi: Vec<f64> = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        if xi.iter().any(|v| !v.is_finite()) {
            return Err("payload has non-finite values".into());
        }
        Ok(MeasurementFile {
            arms,
            detector_rows,
            detector_cols,
            xi: DVector::from_vec(xi),
        })
    }

    pub fn from_measurement(m: &crate::sim::Measurement) -> Self {
        MeasurementFile {
            arms: m.arms() as u32,
            detector_rows: m.detector_rows as u32,
            detector_cols: m.detector_cols as u32,
            xi: m.xi.clone(),
        }
    }
}

pub fn write_measurement(path: impl AsRef<Path>, m: &MeasurementFile) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, m.to_bytes()).map_err(|e| Error::io(path, e))
}

pub fn read_measurement(path: impl AsRef<Path>) -> Result<MeasurementFile> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    MeasurementFile::from_bytes(&bytes).map_err(|message| Error::Format {
        path: path.to_path_buf(),
        message,
    })
}
