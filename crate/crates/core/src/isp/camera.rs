//! Reversible radiometric camera model: `I = f(T_s * T_w * kappa)` with a
//! diagonal white-balance matrix `T_w`, a color transform `T_s` and one
//! monotone response polynomial per channel.

use serde::{Deserialize, Serialize};

use super::ops::{invert_matrix, mat_mul, mat_vec, Mat3, IDENTITY};
use super::ClipReport;
use crate::image::{ColorImage, ColorState};
use crate::{Error, Result};

/// Grid used to check monotonicity on `[0, 1]`.
pub const MONOTONE_GRID: usize = 1024;

/// Residual tolerance for inverting a response curve.
pub const INVERSE_TOLERANCE: f64 = 1e-8;

const BISECTION_STEPS: usize = 60;

/// Polynomial with ascending coefficients, degree at most 5.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Polynomial {
    coeffs: Vec<f64>,
}

impl Polynomial {
    pub const MAX_DEGREE: usize = 5;

    pub fn new(coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.is_empty() || coeffs.len() > Self::MAX_DEGREE + 1 {
            return Err(Error::InvalidArgument(format!(
                "polynomial needs 1..={} coefficients, got {}",
                Self::MAX_DEGREE + 1,
                coeffs.len()
            )));
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidArgument("non-finite polynomial coefficient".into()));
        }
        Ok(Polynomial { coeffs })
    }

    pub fn identity() -> Self {
        Polynomial {
            coeffs: vec![0.0, 1.0],
        }
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
    }

    #[inline]
    pub fn derivative(&self, x: f64) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .skip(1)
            .rev()
            .fold(0.0, |acc, (k, &c)| acc * x + k as f64 * c)
    }

    /// Non-negative slope at every grid point and strictly increasing values
    /// between neighbors.
    pub fn check_increasing(&self) -> Result<()> {
        let step = 1.0 / (MONOTONE_GRID - 1) as f64;
        let mut prev = self.eval(0.0);
        for i in 0..MONOTONE_GRID {
            let x = i as f64 * step;
            if self.derivative(x) < 0.0 {
                return Err(Error::NonMonotone(format!("negative slope at x = {x}")));
            }
            if i > 0 {
                let y = self.eval(x);
                if y <= prev {
                    return Err(Error::NonMonotone(format!("flat or decreasing near x = {x}")));
                }
                prev = y;
            }
        }
        Ok(())
    }

    /// Solves `p(y) = v` on `[0, 1]` by bisection for an increasing `p`.
    /// Targets outside `[p(0), p(1)]` return the nearer endpoint and `false`.
    pub fn invert(&self, v: f64) -> (f64, bool) {
        let (lo_v, hi_v) = (self.eval(0.0), self.eval(1.0));
        if v <= lo_v {
            return (0.0, v >= lo_v - INVERSE_TOLERANCE);
        }
        if v >= hi_v {
            return (1.0, v <= hi_v + INVERSE_TOLERANCE);
        }
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        for _ in 0..BISECTION_STEPS {
            let mid = 0.5 * (lo + hi);
            let y = self.eval(mid);
            if (y - v).abs() <= INVERSE_TOLERANCE * 1e-4 {
                return (mid, true);
            }
            if y < v {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        (0.5 * (lo + hi), true)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraModel {
    /// Diagonal of `T_w`.
    pub white_balance: [f64; 3],
    /// `T_s`.
    pub color_transform: Mat3,
    /// Per-channel response `f_k`, with `f_k(0) = 0`.
    pub response: [Polynomial; 3],
}

impl CameraModel {
    pub fn new(white_balance: [f64; 3], color_transform: Mat3, response: [Polynomial; 3]) -> Result<Self> {
        let model = CameraModel {
            white_balance,
            color_transform,
            response,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn identity() -> Self {
        CameraModel {
            white_balance: [1.0; 3],
            color_transform: IDENTITY,
            response: [Polynomial::identity(), Polynomial::identity(), Polynomial::identity()],
        }
    }

    /// Number of free parameters: 9 for `T_s * T_w` plus five non-constant
    /// coefficients per channel.
    pub const PARAMETERS: usize = 9 + 3 * Polynomial::MAX_DEGREE;

    pub fn validate(&self) -> Result<()> {
        invert_matrix(&self.combined())?;
        for (k, f) in self.response.iter().enumerate() {
            if f.eval(0.0) != 0.0 {
                return Err(Error::InvalidArgument(format!("response {k} must satisfy f(0) = 0")));
            }
            f.check_increasing()
                .map_err(|e| Error::NonMonotone(format!("response {k}: {e}")))?;
        }
        Ok(())
    }

    /// `T_s * T_w`.
    pub fn combined(&self) -> Mat3 {
        let w = self.white_balance;
        let diag = [[w[0], 0.0, 0.0], [0.0, w[1], 0.0], [0.0, 0.0, w[2]]];
        mat_mul(&self.color_transform, &diag)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CameraOutput {
    pub image: ColorImage,
    pub clip: ClipReport,
    /// One flag per pixel, set where any channel was clipped or saturated.
    pub clip_mask: Vec<bool>,
}

const CLIP_EPS: f64 = 1e-12;

fn clamp_flag(v: f64, flag: &mut bool) -> f64 {
    if !(-CLIP_EPS..=1.0 + CLIP_EPS).contains(&v) {
        *flag = true;
    }
    v.clamp(0.0, 1.0)
}

/// Renders sensor-linear `kappa` to display-referred intensities.
pub fn render_camera(model: &CameraModel, kappa: &ColorImage) -> Result<CameraOutput> {
    model.validate()?;
    let t = model.combined();
    let n = kappa.height() * kappa.width();
    let mut planes = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    let mut mask = vec![false; n];
    for (i, flag) in mask.iter_mut().enumerate() {
        let px = [0, 1, 2].map(|k| kappa.planes()[k][i]);
        let mixed = mat_vec(&t, px);
        for k in 0..3 {
            let x = clamp_flag(mixed[k], flag);
            planes[k][i] = clamp_flag(model.response[k].eval(x), flag);
        }
    }
    let image = ColorImage::new(kappa.height(), kappa.width(), planes, ColorState::DisplayReferred)?;
    Ok(CameraOutput {
        image,
        clip: ClipReport::from_mask(&mask),
        clip_mask: mask,
    })
}

/// Inverts [`render_camera`]: solves each response by bisection, then
/// applies `(T_s * T_w)^-1`. Saturated inputs (at 1.0) are flagged because the
/// forward clamp may have discarded information there.
pub fn invert_camera(model: &CameraModel, image: &ColorImage) -> Result<CameraOutput> {
    model.validate()?;
    let inv = invert_matrix(&model.combined())?;
    let n = image.height() * image.width();
    let mut planes = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    let mut mask = vec![false; n];
    for (i, flag) in mask.iter_mut().enumerate() {
        let mut linear = [0.0; 3];
        for k in 0..3 {
            let v = image.planes()[k][i];
            if v >= 1.0 {
                *flag = true;
            }
            let (y, inside) = model.response[k].invert(v);
            *flag |= !inside;
            linear[k] = y;
        }
        let kappa = mat_vec(&inv, linear);
        for k in 0..3 {
            planes[k][i] = clamp_flag(kappa[k], flag);
        }
    }
    let image = ColorImage::new(image.height(), image.width(), planes, ColorState::SensorLinear)?;
    Ok(CameraOutput {
        image,
        clip: ClipReport::from_mask(&mask),
        clip_mask: mask,
    })
}
