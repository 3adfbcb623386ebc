use crate::{Error, Result};

/// Default per-block perceptual weights. Configuration, not derived.
pub const DEFAULT_LAMBDA: [f64; 5] = [1.0 / 32.0, 1.0 / 16.0, 1.0 / 8.0, 1.0 / 4.0, 1.0];
/// Default `(alpha_1, alpha_2)` weights of the feature-matching and
/// perceptual terms. Configuration, not derived.
pub const DEFAULT_ALPHA: (f64, f64) = (10.0, 10.0);

/// One layer's `C x H x W` activations, stored in C order.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTensor {
    layer: usize,
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl FeatureTensor {
    pub fn new(layer: usize, channels: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if channels == 0 || height == 0 || width == 0 {
            return Err(Error::InvalidArgument(format!(
                "feature shape {channels}x{height}x{width} has an empty axis"
            )));
        }
        if data.len() != channels * height * width {
            return Err(Error::DimensionMismatch(format!(
                "{} values for a {channels}x{height}x{width} feature map",
                data.len()
            )));
        }
        Ok(FeatureTensor {
            layer,
            channels,
            height,
            width,
            data,
        })
    }

    pub fn layer(&self) -> usize {
        self.layer
    }

    pub fn shape(&self) -> [usize; 3] {
        [self.channels, self.height, self.width]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// `||a - b||_1 / (C H W)`.
    fn mean_abs_diff(&self, other: &FeatureTensor) -> Result<f64> {
        if self.shape() != other.shape() {
            return Err(Error::DimensionMismatch(format!(
                "layer {}: shape {:?} vs {:?}",
                self.layer,
                self.shape(),
                other.shape()
            )));
        }
        let l1: f64 = self.data.iter().zip(&other.data).map(|(a, b)| (a - b).abs()).sum();
        Ok(l1 / self.data.len() as f64)
    }
}

/// `sum_i ||F_i(x) - F_i(y)||_1 / (C_i H_i W_i)` over paired layers.
pub fn feature_matching_loss(real: &[FeatureTensor], fake: &[FeatureTensor]) -> Result<f64> {
    if real.len() != fake.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} real layers vs {} fake layers",
            real.len(),
            fake.len()
        )));
    }
    real.iter().zip(fake).map(|(a, b)| a.mean_abs_diff(b)).sum()
}

/// `sum_{i=1..5} lambda_i ||B_i(x) - B_i(y)||_1 / (C_i H_i W_i)`.
pub fn perceptual_loss(real: &[FeatureTensor], fake: &[FeatureTensor], lambda: [f64; 5]) -> Result<f64> {
    if real.len() != 5 || fake.len() != 5 {
        return Err(Error::DimensionMismatch(format!(
            "perceptual loss needs 5 block pairs, got {} and {}",
            real.len(),
            fake.len()
        )));
    }
    let mut total = 0.0;
    for ((a, b), l) in real.iter().zip(fake).zip(lambda) {
        total += l * a.mean_abs_diff(b)?;
    }
    Ok(total)
}

pub fn total_loss(l_gan: f64, l_fm: f64, l_vgg: f64, alpha_1: f64, alpha_2: f64) -> f64 {
    l_gan + alpha_1 * l_fm + alpha_2 * l_vgg
}

fn read_u32(bytes: &[u8], at: &mut usize) -> Result<u32> {
    let chunk = bytes
        .get(*at..*at + 4)
        .ok_or_else(|| malformed("truncated header"))?;
    *at += 4;
    Ok(u32::from_le_bytes(chunk.try_into().expect("4 bytes")))
}

fn malformed(reason: &str) -> Error {
    Error::Malformed {
        format: "feature tensor file".into(),
        reason: reason.into(),
    }
}

/// Parses `M`, then `(C, H, W)` per layer as little-endian `u32`, then all
/// layers' `f64` values in C order. Layers are numbered from 1.
pub fn decode_feature_file(bytes: &[u8]) -> Result<Vec<FeatureTensor>> {
    let mut at = 0;
    let m = read_u32(bytes, &mut at)? as usize;
    let mut shapes = Vec::with_capacity(m.min(1024));
    for _ in 0..m {
        let c = read_u32(bytes, &mut at)? as usize;
        let h = read_u32(bytes, &mut at)? as usize;
        let w = read_u32(bytes, &mut at)? as usize;
        shapes.push([c, h, w]);
    }
    let total: usize = shapes.iter().map(|s| s.iter().product::<usize>()).sum();
    if bytes.len() - at != total * 8 {
        return Err(malformed(&format!(
            "expected {} data bytes, found {}",
            total * 8,
            bytes.len() - at
        )));
    }
    let mut values = bytes[at..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
    shapes
        .into_iter()
        .enumerate()
        .map(|(i, [c, h, w])| FeatureTensor::new(i + 1, c, h, w, values.by_ref().take(c * h * w).collect()))
        .collect()
}

pub fn encode_feature_file(layers: &[FeatureTensor]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&(layers.len() as u32).to_le_bytes());
    for t in layers {
        for d in t.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
    }
    for t in layers {
        for v in &t.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(v: f64) -> FeatureTensor {
        FeatureTensor::new(1, 1, 1, 1, vec![v]).unwrap()
    }

    #[test]
    fn feature_matching_examples() {
        assert_eq!(feature_matching_loss(&[scalar(3.0)], &[scalar(5.0)]).unwrap(), 2.0);
        assert_eq!(feature_matching_loss(&[scalar(3.0)], &[scalar(3.0)]).unwrap(), 0.0);
        assert!(feature_matching_loss(&[scalar(3.0)], &[]).is_err());
        let big = FeatureTensor::new(1, 1, 1, 2, vec![0.0, 0.0]).unwrap();
        assert!(feature_matching_loss(&[scalar(3.0)], &[big]).is_err());
    }

    #[test]
    fn tiling_does_not_change_loss() {
        let a = FeatureTensor::new(1, 2, 1, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let b = FeatureTensor::new(1, 2, 1, 2, vec![0.0, 2.5, 3.0, 1.0]).unwrap();
        // 2x tile in both H and W
        let tile = |t: &FeatureTensor| {
            let mut data = Vec::new();
            for c in 0..2 {
                let row = &t.data()[c * 2..c * 2 + 2];
                for _ in 0..2 {
                    for _ in 0..2 {
                        data.extend_from_slice(row);
                    }
                }
            }
            FeatureTensor::new(1, 2, 2, 4, data).unwrap()
        };
        let base = feature_matching_loss(&[a.clone()], &[b.clone()]).unwrap();
        let tiled = feature_matching_loss(&[tile(&a)], &[tile(&b)]).unwrap();
        assert!((base - tiled).abs() < 1e-15);
        assert_eq!(base, (1.0 + 0.5 + 0.0 + 3.0) / 4.0);
    }

    #[test]
    fn perceptual_weights() {
        let real: Vec<_> = (0..5).map(|i| scalar(i as f64)).collect();
        let fake: Vec<_> = (0..5).map(|i| scalar(2.0 * i as f64 + 1.0)).collect();
        let l = perceptual_loss(&real, &fake, DEFAULT_LAMBDA).unwrap();
        let doubled = perceptual_loss(&real, &fake, DEFAULT_LAMBDA.map(|v| 2.0 * v)).unwrap();
        assert!((doubled - 2.0 * l).abs() < 1e-15);
        let first = perceptual_loss(&real, &fake, [1.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(first, feature_matching_loss(&real[..1], &fake[..1]).unwrap());
        assert_eq!(perceptual_loss(&real, &real, DEFAULT_LAMBDA).unwrap(), 0.0);
        assert!(perceptual_loss(&real[..4], &fake[..4], DEFAULT_LAMBDA).is_err());
    }

    #[test]
    fn total_loss_examples() {
        assert_eq!(total_loss(1.5, 2.0, 3.0, 0.0, 0.0), 1.5);
        assert_eq!(total_loss(1.0, 2.0, 3.0, 1.0, 1.0), 6.0);
        let (a1, a2) = DEFAULT_ALPHA;
        assert_eq!(total_loss(1.0, 1.0, 1.0, a1, a2), 21.0);
    }

    #[test]
    fn feature_file_round_trip() {
        let layers = vec![
            FeatureTensor::new(1, 2, 1, 3, vec![0.5, -1.0, 2.0, 3.0, 4.0, 5.0]).unwrap(),
            FeatureTensor::new(2, 1, 2, 1, vec![7.0, f64::MIN_POSITIVE]).unwrap(),
        ];
        let bytes = encode_feature_file(&layers);
        assert_eq!(bytes.len(), 4 + 2 * 12 + 8 * 8);
        assert_eq!(&bytes[..4], &[2, 0, 0, 0]);
        assert_eq!(decode_feature_file(&bytes).unwrap(), layers);
        assert!(decode_feature_file(&bytes[..bytes.len() - 1]).is_err());
        assert!(decode_feature_file(&[1, 0]).is_err());
    }
}
