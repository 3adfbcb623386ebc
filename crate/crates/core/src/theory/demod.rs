use crate::{Error, Result};

/// Convolution weights `w[i][j][kh][kw]` (input channel, output channel,
/// kernel row, kernel column) with per-input-channel style scales.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightTensor {
    in_channels: usize,
    out_channels: usize,
    kernel_h: usize,
    kernel_w: usize,
    weights: Vec<f64>,
    scales: Vec<f64>,
    epsilon: f64,
}

impl WeightTensor {
    /// `epsilon = 0` is accepted so the unit-norm identity can be checked
    /// exactly; demodulating an all-zero output channel then fails.
    pub fn new(
        shape: [usize; 4],
        weights: Vec<f64>,
        scales: Vec<f64>,
        epsilon: f64,
    ) -> Result<Self> {
        let [in_channels, out_channels, kernel_h, kernel_w] = shape;
        if shape.contains(&0) {
            return Err(Error::InvalidArgument(format!("weight shape {shape:?} has an empty axis")));
        }
        if weights.len() != shape.iter().product::<usize>() || scales.len() != in_channels {
            return Err(Error::DimensionMismatch(format!(
                "{} weights and {} scales for shape {shape:?}",
                weights.len(),
                scales.len()
            )));
        }
        if weights.iter().chain(&scales).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("weights and scales must be finite".into()));
        }
        if !(epsilon.is_finite() && epsilon >= 0.0) {
            return Err(Error::InvalidArgument(format!("epsilon {epsilon} must be >= 0")));
        }
        Ok(WeightTensor {
            in_channels,
            out_channels,
            kernel_h,
            kernel_w,
            weights,
            scales,
            epsilon,
        })
    }

    pub fn shape(&self) -> [usize; 4] {
        [self.in_channels, self.out_channels, self.kernel_h, self.kernel_w]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn scales(&self) -> &[f64] {
        &self.scales
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn index(&self, i: usize, j: usize, kh: usize, kw: usize) -> usize {
        ((i * self.out_channels + j) * self.kernel_h + kh) * self.kernel_w + kw
    }

    pub fn get(&self, i: usize, j: usize, kh: usize, kw: usize) -> f64 {
        self.weights[self.index(i, j, kh, kw)]
    }

    pub fn with_scales(mut self, scales: Vec<f64>) -> Result<Self> {
        self.scales = scales;
        Self::new(self.shape(), self.weights, self.scales, self.epsilon)
    }

    /// L2 norm of the weights feeding output channel `j`.
    pub fn output_norm(&self, j: usize) -> f64 {
        let mut sum = 0.0;
        for i in 0..self.in_channels {
            for kh in 0..self.kernel_h {
                for kw in 0..self.kernel_w {
                    sum += self.get(i, j, kh, kw).powi(2);
                }
            }
        }
        sum.sqrt()
    }
}

/// `w'_ijk = s_i w_ijk / sqrt(sum_{i,k} (s_i w_ijk)^2 + eps)`, normalized per
/// output channel `j`. The result carries unit scales.
pub fn weight_demodulate(w: &WeightTensor) -> Result<WeightTensor> {
    let mut out = w.weights.clone();
    for (idx, v) in out.iter_mut().enumerate() {
        let i = idx / (w.out_channels * w.kernel_h * w.kernel_w);
        *v *= w.scales[i];
    }
    let block = w.kernel_h * w.kernel_w;
    for j in 0..w.out_channels {
        let sites = || (0..w.in_channels).flat_map(move |i| (0..block).map(move |k| (i * w.out_channels + j) * block + k));
        let denom = (sites().map(|s| out[s] * out[s]).sum::<f64>() + w.epsilon).sqrt();
        if denom == 0.0 {
            return Err(Error::InvalidArgument(format!(
                "output channel {j} has zero norm and epsilon is 0"
            )));
        }
        for s in sites() {
            out[s] /= denom;
        }
    }
    WeightTensor::new(w.shape(), out, vec![1.0; w.in_channels], w.epsilon)
}
