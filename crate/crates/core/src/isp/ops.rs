//! Per-pixel color operations and Bayer-domain noise.

use nalgebra::Matrix3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::image::{BayerImage, ColorImage};
use crate::{Error, Result};

pub type Mat3 = [[f64; 3]; 3];

pub const IDENTITY: Mat3 = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

/// Smallest `|det|` accepted for a matrix that must be inverted.
pub const MIN_DETERMINANT: f64 = 1e-9;

pub(crate) fn to_na(m: &Mat3) -> Matrix3<f64> {
    Matrix3::from_fn(|r, c| m[r][c])
}

pub(crate) fn from_na(m: &Matrix3<f64>) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for (r, row) in out.iter_mut().enumerate() {
        for (c, v) in row.iter_mut().enumerate() {
            *v = m[(r, c)];
        }
    }
    out
}

/// Inverse of `m`, refusing near-singular matrices.
pub fn invert_matrix(m: &Mat3) -> Result<Mat3> {
    let na = to_na(m);
    let det = na.determinant();
    if !det.is_finite() || det.abs() <= MIN_DETERMINANT {
        return Err(Error::SingularMatrix(det));
    }
    na.try_inverse()
        .map(|inv| from_na(&inv))
        .ok_or(Error::SingularMatrix(det))
}

pub fn mat_mul(a: &Mat3, b: &Mat3) -> Mat3 {
    from_na(&(to_na(a) * to_na(b)))
}

#[inline]
pub fn mat_vec(m: &Mat3, v: [f64; 3]) -> [f64; 3] {
    [0, 1, 2].map(|r| m[r][0] * v[0] + m[r][1] * v[1] + m[r][2] * v[2])
}

pub(crate) fn plane_means(color: &ColorImage) -> [f64; 3] {
    let n = (color.height() * color.width()) as f64;
    color.planes().each_ref().map(|p| p.iter().sum::<f64>() / n)
}

/// Gray-world gains anchored to green: `(mean G / mean R, 1, mean G / mean B)`.
pub fn gray_world_gains(color: &ColorImage) -> Result<[f64; 3]> {
    let [r, g, b] = plane_means(color);
    if r <= 0.0 || g <= 0.0 || b <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "gray world needs positive plane means, got ({r}, {g}, {b})"
        )));
    }
    Ok([g / r, 1.0, g / b])
}

fn map_pixels(color: &ColorImage, f: impl Fn([f64; 3]) -> [f64; 3]) -> ColorImage {
    let mut out = color.clone();
    let planes = out.planes_mut();
    for i in 0..planes[0].len() {
        let v = f([planes[0][i], planes[1][i], planes[2][i]]);
        for k in 0..3 {
            planes[k][i] = v[k];
        }
    }
    out.clamp();
    out
}

/// Multiplies every pixel by `diag(gains)` and clamps.
pub fn apply_white_balance(color: &ColorImage, gains: [f64; 3]) -> ColorImage {
    map_pixels(color, |p| [p[0] * gains[0], p[1] * gains[1], p[2] * gains[2]])
}

/// Multiplies every pixel by `m` and clamps.
pub fn apply_color_matrix(color: &ColorImage, m: &Mat3) -> ColorImage {
    map_pixels(color, |p| mat_vec(m, p))
}

fn check_gamma(a: f64) -> Result<()> {
    if a > 0.0 && a <= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("gamma exponent {a} outside (0, 1]")))
    }
}

/// `v -> v^a`.
pub fn gamma_compress(color: &ColorImage, a: f64) -> Result<ColorImage> {
    check_gamma(a)?;
    Ok(map_pixels(color, |p| p.map(|v| v.max(0.0).powf(a))))
}

/// `v -> v^(1/a)`.
pub fn gamma_expand(color: &ColorImage, a: f64) -> Result<ColorImage> {
    check_gamma(a)?;
    Ok(map_pixels(color, |p| p.map(|v| v.max(0.0).powf(1.0 / a))))
}

/// Adds heteroscedastic noise to values given in DN: a Gaussian term of
/// variance `sigma^2` plus a signal-dependent term of variance
/// `poisson_scale * v`, then clamps to `[0, max_dn]`.
pub(crate) fn noise_in_place(values: &mut [f64], sigma: f64, poisson_scale: f64, seed: u64, max_dn: f64) {
    if sigma == 0.0 && poisson_scale == 0.0 {
        return;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for v in values.iter_mut() {
        let shot: f64 = StandardNormal.sample(&mut rng);
        let read: f64 = StandardNormal.sample(&mut rng);
        let noisy = *v + (poisson_scale * v.max(0.0)).sqrt() * shot + sigma * read;
        *v = noisy.clamp(0.0, max_dn);
    }
}

pub(crate) fn check_noise(sigma: f64, poisson_scale: f64) -> Result<()> {
    if !(sigma.is_finite() && sigma >= 0.0 && poisson_scale.is_finite() && poisson_scale >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "noise parameters must be finite and non-negative (sigma {sigma}, poisson_scale {poisson_scale})"
        )));
    }
    Ok(())
}

/// Noise injection on integer samples: `v <- clamp(round(v + n))`, fully
/// determined by `seed`.
pub fn add_noise(raw: &BayerImage, sigma: f64, poisson_scale: f64, seed: u64) -> Result<BayerImage> {
    check_noise(sigma, poisson_scale)?;
    let max = f64::from(raw.max_value());
    let mut values: Vec<f64> = raw.samples().iter().map(|&s| f64::from(s)).collect();
    noise_in_place(&mut values, sigma, poisson_scale, seed, max);
    let samples = values.iter().map(|v| v.round().clamp(0.0, max) as u16).collect();
    BayerImage::new(raw.height(), raw.width(), raw.bit_depth(), samples, raw.pattern())?
        .with_levels(raw.black_level(), raw.white_level())
}
