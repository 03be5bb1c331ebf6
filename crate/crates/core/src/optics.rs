//! Geometry of the three reference arms and the correlation kernels they produce.
//!
//! Arms are numbered 2, 3 and 4; arm 1 is the object arm. Lengths are in cm and
//! wavenumbers in cm^-1, so `lambda_1 / lambda_j = k_j / k_1`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

pub const REFERENCE_ARMS: [usize; 3] = [2, 3, 4];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArmKind {
    DownConversion,
    UpConversion,
}

pub fn arm_kind(arm: usize) -> Result<ArmKind> {
    match arm {
        2 | 4 => Ok(ArmKind::DownConversion),
        3 => Ok(ArmKind::UpConversion),
        _ => Err(Error::invalid(format!(
            "reference arm must be 2, 3 or 4, got {arm}"
        ))),
    }
}

/// Beam splitter to lens (`l1`), lens to camera (`l2`), and the lens focal length.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArmGeometry {
    pub l1: f64,
    pub l2: f64,
    pub focal_length: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OpticalSetup {
    /// `k1..k4`.
    pub k: [f64; 4],
    pub l11: f64,
    pub l12: f64,
    /// Arms 2, 3, 4 in that order.
    pub arms: [ArmGeometry; 3],
    pub beta: f64,
    pub xi: f64,
    /// Object-arm beam area, cm^2.
    pub s: f64,
}

impl Default for OpticalSetup {
    /// `k1 = 6e4`, `k3 = 1.7e5`, `beta = 10`, `xi = 0.4`, with `k2` and `k4` from
    /// frequency matching and every arm focused at unit magnification.
    fn default() -> Self {
        let k1 = 6e4;
        let k3 = 1.7e5;
        let k2 = k3 - 2.0 * k1;
        let k4 = k1 + 2.0 * k2;
        let placeholder = ArmGeometry {
            l1: 0.0,
            l2: 1.0,
            focal_length: 1.0,
        };
        let mut setup = OpticalSetup {
            k: [k1, k2, k3, k4],
            l11: 10.0,
            l12: 10.0,
            arms: [placeholder; 3],
            beta: 10.0,
            xi: 0.4,
            s: 1.0,
        };
        setup.arms[0].l1 = 10.0;
        setup.arms[1].l1 = 40.0;
        setup.arms[2].l1 = 10.0;
        setup
            .focus_unit_magnification()
            .expect("default geometry admits imaging on every arm");
        setup
    }
}

impl OpticalSetup {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::invalid(format!("{name} must be positive and finite, got {v}")))
            }
        };
        for (i, &k) in self.k.iter().enumerate() {
            positive(&format!("k{}", i + 1), k)?;
        }
        positive("l11", self.l11)?;
        positive("l12", self.l12)?;
        for (arm, g) in REFERENCE_ARMS.iter().zip(&self.arms) {
            positive(&format!("l{arm}1"), g.l1)?;
            positive(&format!("l{arm}2"), g.l2)?;
            positive(&format!("f{arm}"), g.focal_length)?;
        }
        positive("beta", self.beta)?;
        positive("s", self.s)?;
        if !(self.xi > 0.0 && self.xi <= 1.0) {
            return Err(Error::invalid(format!("xi must lie in (0, 1], got {}", self.xi)));
        }
        Ok(())
    }

    pub fn arm(&self, arm: usize) -> Result<&ArmGeometry> {
        arm_kind(arm)?;
        Ok(&self.arms[arm - 2])
    }

    pub fn arm_mut(&mut self, arm: usize) -> Result<&mut ArmGeometry> {
        arm_kind(arm)?;
        Ok(&mut self.arms[arm - 2])
    }

    /// `lambda_1 / lambda_j`.
    pub fn wavelength_ratio(&self, arm: usize) -> Result<f64> {
        arm_kind(arm)?;
        Ok(self.k[arm - 1] / self.k[0])
    }

    /// Object distance seen through arm `arm`: `l_j1 + r l11` for down-conversion,
    /// `l_31 - r l11` for up-conversion.
    pub fn effective_object_distance(&self, arm: usize) -> Result<f64> {
        let r = self.wavelength_ratio(arm)?;
        let l1 = self.arm(arm)?.l1;
        Ok(match arm_kind(arm)? {
            ArmKind::DownConversion => l1 + r * self.l11,
            ArmKind::UpConversion => l1 - r * self.l11,
        })
    }

    /// Sets `l_j2` equal to the effective object distance and the focal length to
    /// half of it on every arm.
    pub fn focus_unit_magnification(&mut self) -> Result<()> {
        for arm in REFERENCE_ARMS {
            let d = self.effective_object_distance(arm)?;
            if !(d > 0.0) {
                return Err(Error::ImagingImpossible { arm, distance: d });
            }
            let g = self.arm_mut(arm)?;
            g.l2 = d;
            g.focal_length = d / 2.0;
        }
        Ok(())
    }
}

/// Focal length that satisfies the imaging condition of `arm` for the current distances.
pub fn required_focal_length(setup: &OpticalSetup, arm: usize) -> Result<f64> {
    let d = setup.effective_object_distance(arm)?;
    if !(d > 0.0) {
        return Err(Error::ImagingImpossible { arm, distance: d });
    }
    let l2 = setup.arm(arm)?.l2;
    if !(l2 > 0.0) {
        return Err(Error::invalid(format!("l{arm}2 must be positive, got {l2}")));
    }
    Ok(1.0 / (1.0 / l2 + 1.0 / d))
}

/// `|1/f - 1/l_j2 - 1/d_j| * f` for focal length `f`; zero when the arm is in focus.
pub fn imaging_condition_residual(setup: &OpticalSetup, arm: usize, f: f64) -> Result<f64> {
    let d = setup.effective_object_distance(arm)?;
    let l2 = setup.arm(arm)?.l2;
    Ok(((1.0 / f - 1.0 / l2 - 1.0 / d) * f).abs())
}

pub fn magnification(setup: &OpticalSetup, arm: usize) -> Result<f64> {
    let l2 = setup.arm(arm)?.l2;
    if !(l2 > 0.0) {
        return Err(Error::invalid(format!("l{arm}2 must be positive, got {l2}")));
    }
    Ok(setup.effective_object_distance(arm)? / l2)
}

/// Pixelwise second-order correlation profile `arm_scale * s * f` at unit magnification.
pub fn g2_kernel(f: &[f64], arm_scale: f64, s: f64) -> Vec<f64> {
    f.iter().map(|v| arm_scale * s * v).collect()
}

/// Rank-one pixel-integrated ghost-image correlation block
/// `(scale_i s f)(scale_j s f)^T`.
pub fn g4_kernel(f: &[f64], scale_i: f64, scale_j: f64, s: f64) -> DMatrix<f64> {
    let n = f.len();
    let a = scale_i * s;
    let b = scale_j * s;
    DMatrix::from_fn(n, n, |p, q| (a * f[p]) * (b * f[q]))
}
