//! Full-reference quality metrics and the Fréchet distance between Gaussians.
//!
//! Bayer images are compared on their integer samples. Color images are first
//! quantized to `b` bits so that MSE and PSNR are expressed in code values.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Serialize, Serializer};

use crate::codec::AnyImage;
use crate::image::{max_code, BayerImage, ColorImage};
use crate::{Error, Result};

/// Symmetry and PSD slack for covariance matrices.
pub const COVARIANCE_TOL: f64 = 1e-9;
/// Eigenvalues of `sqrt(S_A) S_B sqrt(S_A)` below `-FRECHET_TOL` are an error.
pub const FRECHET_TOL: f64 = 1e-6;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

fn mismatch(a: (usize, usize), b: (usize, usize)) -> Error {
    Error::DimensionMismatch(format!("{}x{} vs {}x{}", a.0, a.1, b.0, b.1))
}

fn mean_sq_diff(a: impl Iterator<Item = f64>, b: impl Iterator<Item = f64>) -> f64 {
    let mut n = 0usize;
    let mut sum = 0.0;
    for (x, y) in a.zip(b) {
        sum += (x - y) * (x - y);
        n += 1;
    }
    sum / n as f64
}

pub fn mse_bayer(a: &BayerImage, b: &BayerImage) -> Result<f64> {
    if (a.height(), a.width()) != (b.height(), b.width()) {
        return Err(mismatch((a.height(), a.width()), (b.height(), b.width())));
    }
    let f = |s: &u16| f64::from(*s);
    Ok(mean_sq_diff(a.samples().iter().map(f), b.samples().iter().map(f)))
}

/// Mean over the three planes of the per-plane MSE of `b`-bit codes.
pub fn mse_color(a: &ColorImage, b: &ColorImage, bit_depth: u8) -> Result<f64> {
    if (a.height(), a.width()) != (b.height(), b.width()) {
        return Err(mismatch((a.height(), a.width()), (b.height(), b.width())));
    }
    let (qa, qb) = (a.quantized(bit_depth), b.quantized(bit_depth));
    let f = |v: &u32| f64::from(*v);
    let per_plane: f64 = (0..3)
        .map(|k| mean_sq_diff(qa[k].iter().map(f), qb[k].iter().map(f)))
        .sum();
    Ok(per_plane / 3.0)
}

/// `bit_depth` applies to color images; Bayer images use their own codes.
pub fn mse(a: &AnyImage, b: &AnyImage, bit_depth: u8) -> Result<f64> {
    match (a, b) {
        (AnyImage::Bayer(a), AnyImage::Bayer(b)) => mse_bayer(a, b),
        (AnyImage::Color(a), AnyImage::Color(b)) => mse_color(a, b, bit_depth),
        _ => Err(Error::DimensionMismatch("cannot compare a Bayer image with a color image".into())),
    }
}

/// `10 log10((2^b - 1)^2 / mse)`; `+inf` when `mse == 0`.
pub fn psnr_from_mse(mse: f64, bit_depth: u8) -> f64 {
    let peak = f64::from(max_code(bit_depth));
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (peak * peak / mse).log10()
    }
}

pub fn psnr(a: &AnyImage, b: &AnyImage, bit_depth: u8) -> Result<f64> {
    Ok(psnr_from_mse(mse(a, b, bit_depth)?, bit_depth))
}

/// PSNR of the mean MSE, not the mean of per-pair PSNRs.
pub fn ave_psnr(mses: &[f64], bit_depth: u8) -> Result<f64> {
    if mses.is_empty() {
        return Err(Error::InvalidArgument("ave_psnr of an empty list".into()));
    }
    if mses.iter().any(|m| !(m.is_finite() && *m >= 0.0)) {
        return Err(Error::InvalidArgument("MSE values must be finite and >= 0".into()));
    }
    Ok(psnr_from_mse(mses.iter().sum::<f64>() / mses.len() as f64, bit_depth))
}

fn gaussian_kernel() -> [f64; SSIM_WINDOW] {
    let half = (SSIM_WINDOW / 2) as f64;
    let mut k = [0.0; SSIM_WINDOW];
    for (i, v) in k.iter_mut().enumerate() {
        let x = i as f64 - half;
        *v = (-x * x / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let total: f64 = k.iter().sum();
    k.map(|v| v / total)
}

/// Separable valid-mode filtering with the SSIM window.
fn filter_valid(x: &[f64], h: usize, w: usize, k: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let (oh, ow) = (h - SSIM_WINDOW + 1, w - SSIM_WINDOW + 1);
    let mut rows = vec![0.0; h * ow];
    for r in 0..h {
        for c in 0..ow {
            rows[r * ow + c] = (0..SSIM_WINDOW).map(|t| k[t] * x[r * w + c + t]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for r in 0..oh {
        for c in 0..ow {
            out[r * ow + c] = (0..SSIM_WINDOW).map(|t| k[t] * rows[(r + t) * ow + c]).sum();
        }
    }
    out
}

/// Mean SSIM of two single-channel images whose values span `[0, peak]`.
pub fn mssim_plane(a: &[f64], b: &[f64], height: usize, width: usize, peak: f64) -> Result<f64> {
    if a.len() != height * width || b.len() != height * width {
        return Err(Error::DimensionMismatch(format!(
            "planes of {} and {} values for {height}x{width}",
            a.len(),
            b.len()
        )));
    }
    if height < SSIM_WINDOW || width < SSIM_WINDOW {
        return Err(Error::InvalidArgument(format!(
            "{height}x{width} image is smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window"
        )));
    }
    let k = gaussian_kernel();
    let blur = |v: &[f64]| filter_valid(v, height, width, &k);
    let prod = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| p * q).collect::<Vec<f64>>();
    let (mu_a, mu_b) = (blur(a), blur(b));
    let (e_aa, e_bb, e_ab) = (blur(&prod(a, a)), blur(&prod(b, b)), blur(&prod(a, b)));
    let c1 = (SSIM_K1 * peak).powi(2);
    let c2 = (SSIM_K2 * peak).powi(2);
    let mut total = 0.0;
    for i in 0..mu_a.len() {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let va = e_aa[i] - ma * ma;
        let vb = e_bb[i] - mb * mb;
        let cov = e_ab[i] - ma * mb;
        total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
    }
    Ok(total / mu_a.len() as f64)
}

fn luma_codes(img: &ColorImage, peak: f64) -> Vec<f64> {
    let [r, g, b] = img.planes();
    (0..r.len()).map(|i| (r[i] + g[i] + b[i]) / 3.0 * peak).collect()
}

/// MSSIM of the `(R + G + B) / 3` luma for color images, of the samples for
/// Bayer images. `L = 2^b - 1` with `b` the Bayer bit depth or `bit_depth`.
pub fn mssim(a: &AnyImage, b: &AnyImage, bit_depth: u8) -> Result<f64> {
    match (a, b) {
        (AnyImage::Bayer(x), AnyImage::Bayer(y)) => {
            if (x.height(), x.width()) != (y.height(), y.width()) {
                return Err(mismatch((x.height(), x.width()), (y.height(), y.width())));
            }
            let f = |img: &BayerImage| img.samples().iter().map(|&s| f64::from(s)).collect::<Vec<_>>();
            let peak = f64::from(x.max_value().max(y.max_value()));
            mssim_plane(&f(x), &f(y), x.height(), x.width(), peak)
        }
        (AnyImage::Color(x), AnyImage::Color(y)) => {
            if (x.height(), x.width()) != (y.height(), y.width()) {
                return Err(mismatch((x.height(), x.width()), (y.height(), y.width())));
            }
            let peak = f64::from(max_code(bit_depth));
            mssim_plane(&luma_codes(x, peak), &luma_codes(y, peak), x.height(), x.width(), peak)
        }
        _ => Err(Error::DimensionMismatch("cannot compare a Bayer image with a color image".into())),
    }
}

/// Mean and unbiased covariance of a feature set.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianStats {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
}

impl GaussianStats {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let d = mean.len();
        if d == 0 || cov.shape() != (d, d) {
            return Err(Error::DimensionMismatch(format!(
                "mean of length {d} with covariance {:?}",
                cov.shape()
            )));
        }
        if mean.iter().chain(cov.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("statistics must be finite".into()));
        }
        let asym = (&cov - cov.transpose()).amax();
        if asym > COVARIANCE_TOL {
            return Err(Error::InvalidArgument(format!("covariance asymmetric by {asym}")));
        }
        let min_eig = SymmetricEigen::new(cov.clone()).eigenvalues.min();
        if min_eig < -COVARIANCE_TOL {
            return Err(Error::InvalidArgument(format!("covariance has eigenvalue {min_eig}")));
        }
        Ok(GaussianStats { mean, cov })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }
}

pub fn gaussian_stats(features: &[Vec<f64>]) -> Result<GaussianStats> {
    if features.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 feature vectors, got {}",
            features.len()
        )));
    }
    let d = features[0].len();
    if features.iter().any(|f| f.len() != d) {
        return Err(Error::DimensionMismatch("feature vectors differ in length".into()));
    }
    let n = features.len() as f64;
    let mut mean = DVector::zeros(d);
    for f in features {
        mean += DVector::from_column_slice(f);
    }
    mean /= n;
    let mut cov = DMatrix::zeros(d, d);
    for f in features {
        let c = DVector::from_column_slice(f) - &mean;
        cov += &c * c.transpose();
    }
    cov /= n - 1.0;
    GaussianStats::new(mean, cov)
}

/// Square root of a symmetric PSD matrix; eigenvalues in `[-tol, 0)` are
/// treated as 0.
fn sqrt_psd(m: &DMatrix<f64>, tol: f64) -> Result<DMatrix<f64>> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    if let Some(bad) = eig.eigenvalues.iter().find(|&&v| v < -tol) {
        return Err(Error::InvalidArgument(format!("matrix is not PSD (eigenvalue {bad})")));
    }
    let roots = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&roots) * eig.eigenvectors.transpose())
}

/// `|mu_A - mu_B|^2 + Tr(S_A + S_B - 2 (S_A S_B)^(1/2))`, with the trace of
/// the cross term taken as `Tr (S_A^(1/2) S_B S_A^(1/2))^(1/2)`.
pub fn frechet_distance(a: &GaussianStats, b: &GaussianStats) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch(format!("dimensions {} vs {}", a.dim(), b.dim())));
    }
    let root_a = sqrt_psd(&a.cov, FRECHET_TOL)?;
    let inner = &root_a * &b.cov * &root_a;
    let cross = sqrt_psd(&inner, FRECHET_TOL)?.trace();
    let dist = (&a.mean - &b.mean).norm_squared() + a.cov.trace() + b.cov.trace() - 2.0 * cross;
    if dist < -FRECHET_TOL {
        return Err(Error::InvalidArgument(format!("negative Fréchet distance {dist}")));
    }
    Ok(dist.max(0.0))
}

fn malformed(reason: String) -> Error {
    Error::Malformed {
        format: "feature vector file".into(),
        reason,
    }
}

/// Parses `n` and `d` as little-endian `u32`, then `n * d` little-endian `f64`.
pub fn decode_feature_vectors(bytes: &[u8]) -> Result<Vec<Vec<f64>>> {
    if bytes.len() < 8 {
        return Err(malformed("truncated header".into()));
    }
    let n = u32::from_le_bytes(bytes[0..4].try_into().expect("4 bytes")) as usize;
    let d = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes")) as usize;
    let body = &bytes[8..];
    if d == 0 || body.len() as u64 != n as u64 * d as u64 * 8 {
        return Err(malformed(format!("{} data bytes for {n} vectors of dimension {d}", body.len())));
    }
    Ok(body
        .chunks_exact(8 * d)
        .map(|row| {
            row.chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect()
        })
        .collect())
}

pub fn encode_feature_vectors(features: &[Vec<f64>]) -> Result<Vec<u8>> {
    let d = features.first().map_or(0, Vec::len);
    if features.iter().any(|f| f.len() != d) {
        return Err(Error::DimensionMismatch("feature vectors differ in length".into()));
    }
    let mut out = Vec::with_capacity(8 + features.len() * d * 8);
    out.extend_from_slice(&(features.len() as u32).to_le_bytes());
    out.extend_from_slice(&(d as u32).to_le_bytes());
    for v in features.iter().flatten() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

/// Writes `+inf` as the string `"inf"`; JSON has no infinity.
pub fn serialize_db<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_infinite() && *v > 0.0 {
        s.serialize_str("inf")
    } else {
        s.serialize_f64(*v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairMetrics {
    pub name: String,
    pub mse: f64,
    #[serde(serialize_with = "serialize_db")]
    pub psnr: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mssim: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricReport {
    pub pairs: Vec<PairMetrics>,
    #[serde(serialize_with = "serialize_db")]
    pub ave_psnr: f64,
    pub mssim_mean: Option<f64>,
    pub frechet: Option<f64>,
    /// Files present on only one side.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub unpaired: Vec<String>,
}

impl MetricReport {
    /// Aggregates pairs in the given order. `mssim_mean` is set when every
    /// pair carries an MSSIM.
    pub fn from_pairs(pairs: Vec<PairMetrics>, bit_depth: u8, frechet: Option<f64>) -> Result<Self> {
        let mses: Vec<f64> = pairs.iter().map(|p| p.mse).collect();
        let ave = ave_psnr(&mses, bit_depth)?;
        let mssim_mean = pairs
            .iter()
            .map(|p| p.mssim)
            .sum::<Option<f64>>()
            .map(|total| total / pairs.len() as f64);
        Ok(MetricReport {
            pairs,
            ave_psnr: ave,
            mssim_mean,
            frechet,
            unpaired: Vec::new(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cfa::{CfaLayout, CfaPattern};
    use crate::image::ColorState;

    fn gray8(h: usize, w: usize, f: impl Fn(usize, usize) -> u16) -> BayerImage {
        let samples = (0..h * w).map(|i| f(i / w, i % w)).collect();
        BayerImage::new(h, w, 8, samples, CfaPattern::new(CfaLayout::Rggb)).unwrap()
    }

    #[test]
    fn mse_examples() {
        let a = AnyImage::Bayer(gray8(4, 4, |r, c| (r * 4 + c) as u16));
        let b = AnyImage::Bayer(gray8(4, 4, |r, c| (r * 4 + c + 1) as u16));
        assert_eq!(mse(&a, &a, 8).unwrap(), 0.0);
        assert_eq!(mse(&a, &b, 8).unwrap(), 1.0);
        assert_eq!(mse(&b, &a, 8).unwrap(), 1.0);
        let small = AnyImage::Bayer(gray8(2, 2, |_, _| 0));
        assert!(mse(&a, &small, 8).is_err());
    }

    #[test]
    fn color_mse_uses_codes() {
        let a = ColorImage::filled(2, 2, [0.0; 3], ColorState::DisplayReferred).unwrap();
        let b = ColorImage::filled(2, 2, [2.0 / 255.0, 0.0, 0.0], ColorState::DisplayReferred).unwrap();
        // red plane differs by 2 codes, others by 0
        assert!((mse_color(&a, &b, 8).unwrap() - 4.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn psnr_examples() {
        assert!((psnr_from_mse(1.0, 8) - 20.0 * 255f64.log10()).abs() < 1e-12);
        assert!((psnr_from_mse(1.0, 8) - 48.1308).abs() < 1e-3);
        assert!((psnr_from_mse(1.0, 12) - 20.0 * 4095f64.log10()).abs() < 1e-12);
        assert_eq!(psnr_from_mse(0.0, 8), f64::INFINITY);
        // 10 log10(65025 / 2) = 45.12050...
        assert!((ave_psnr(&[1.0, 3.0], 8).unwrap() - 45.120504).abs() < 1e-6);
        assert_eq!(ave_psnr(&[7.5], 10).unwrap(), psnr_from_mse(7.5, 10));
        assert!(ave_psnr(&[], 8).is_err());
        let mean_of_psnr = (psnr_from_mse(1.0, 8) + psnr_from_mse(100.0, 8)) / 2.0;
        assert!((ave_psnr(&[1.0, 100.0], 8).unwrap() - mean_of_psnr).abs() > 1.0);
    }

    #[test]
    fn mssim_examples() {
        let a = gray8(16, 16, |r, c| if (r + c) % 2 == 0 { 255 } else { 0 });
        let inv = gray8(16, 16, |r, c| if (r + c) % 2 == 0 { 0 } else { 255 });
        let (a, inv) = (AnyImage::Bayer(a), AnyImage::Bayer(inv));
        assert_eq!(mssim(&a, &a, 8).unwrap(), 1.0);
        assert!(mssim(&a, &inv, 8).unwrap() < 0.1);
        let tiny = AnyImage::Bayer(gray8(10, 10, |_, _| 0));
        assert!(mssim(&tiny, &tiny, 8).is_err());
    }

    #[test]
    fn mssim_constant_shift() {
        let x: Vec<f64> = (0..400).map(|i| ((i * 37) % 101) as f64).collect();
        let y: Vec<f64> = (0..400).map(|i| ((i * 53) % 97) as f64).collect();
        let base = mssim_plane(&x, &y, 20, 20, 255.0).unwrap();
        let shift = |v: &[f64]| v.iter().map(|p| p + 40.0).collect::<Vec<_>>();
        let moved = mssim_plane(&shift(&x), &shift(&y), 20, 20, 255.0).unwrap();
        // only the luminance term sees the shift
        assert!((base - moved).abs() < 0.05);
        assert_eq!(mssim_plane(&x, &y, 20, 20, 255.0).unwrap(), mssim_plane(&y, &x, 20, 20, 255.0).unwrap());
    }

    #[test]
    fn stats_examples() {
        let s = gaussian_stats(&[vec![0.0, 0.0], vec![2.0, 2.0]]).unwrap();
        assert_eq!(s.mean().as_slice(), &[1.0, 1.0]);
        assert_eq!(s.cov(), &DMatrix::from_element(2, 2, 2.0));
        let same = gaussian_stats(&vec![vec![1.0, 5.0]; 4]).unwrap();
        assert_eq!(same.cov(), &DMatrix::zeros(2, 2));
        assert!(gaussian_stats(&[vec![1.0]]).is_err());
        assert!(gaussian_stats(&[vec![1.0], vec![1.0, 2.0]]).is_err());
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.5, 1.0]);
        assert!(GaussianStats::new(DVector::zeros(2), bad).is_err());
    }

    #[test]
    fn frechet_closed_forms() {
        let g = |m: f64, v: f64| GaussianStats::new(DVector::from_element(1, m), DMatrix::from_element(1, 1, v)).unwrap();
        assert!((frechet_distance(&g(0.0, 1.0), &g(3.0, 1.0)).unwrap() - 9.0).abs() < 1e-9);
        assert!((frechet_distance(&g(0.0, 1.0), &g(0.0, 4.0)).unwrap() - 1.0).abs() < 1e-9);
        assert_eq!(frechet_distance(&g(2.0, 3.0), &g(2.0, 3.0)).unwrap(), 0.0);
        let wide = GaussianStats::new(DVector::zeros(2), DMatrix::identity(2, 2)).unwrap();
        assert!(frechet_distance(&g(0.0, 1.0), &wide).is_err());
    }

    #[test]
    fn feature_vector_file() {
        let feats = vec![vec![1.0, -2.0, 0.5], vec![3.0, 4.0, 5.0]];
        let bytes = encode_feature_vectors(&feats).unwrap();
        assert_eq!(&bytes[..8], &[2, 0, 0, 0, 3, 0, 0, 0]);
        assert_eq!(decode_feature_vectors(&bytes).unwrap(), feats);
        assert!(decode_feature_vectors(&bytes[..bytes.len() - 4]).is_err());
    }

    #[test]
    fn report_json() {
        let pairs = vec![
            PairMetrics { name: "a".into(), mse: 0.0, psnr: f64::INFINITY, mssim: Some(1.0) },
            PairMetrics { name: "b".into(), mse: 0.0, psnr: f64::INFINITY, mssim: Some(1.0) },
        ];
        let r = MetricReport::from_pairs(pairs, 8, None).unwrap();
        let v = serde_json::to_value(&r).unwrap();
        assert_eq!(v["ave_psnr"], "inf");
        assert_eq!(v["pairs"][0]["psnr"], "inf");
        assert_eq!(v["mssim_mean"], 1.0);
        assert!(v["frechet"].is_null());
        assert!(v.get("unpaired").is_none());
    }
}
