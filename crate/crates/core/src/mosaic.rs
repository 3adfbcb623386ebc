//! Mosaic and demosaic operators, periodic-shuffle packing and resampling.
//!
//! Every demosaicer here keeps the captured sample untouched at its own site,
//! so selecting the pattern-designated plane at every site ([`mosaic`]) is an
//! exact left inverse of [`demosaic`].
//!
//! Borders use edge replication per color plane: a neighbor that falls off
//! the image is replaced by the nearest captured sample of the same color,
//! which is the mirror position one cell inward.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::cfa::{CfaPattern, Channel};
use crate::image::{max_code, quantize, BayerImage, ColorImage, ColorState, PackedBayer};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DemosaicAlgorithm {
    /// Copies the missing colors from the same 2x2 cell.
    Nearest,
    /// Averages the nearest same-color neighbors.
    Bilinear,
    /// Bilinear green, then bilinear interpolation of the R-G and B-G
    /// color differences.
    Hybrid,
}

impl DemosaicAlgorithm {
    pub const ALL: [DemosaicAlgorithm; 3] = [
        DemosaicAlgorithm::Nearest,
        DemosaicAlgorithm::Bilinear,
        DemosaicAlgorithm::Hybrid,
    ];
}

impl FromStr for DemosaicAlgorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "nearest" => Ok(DemosaicAlgorithm::Nearest),
            "bilinear" => Ok(DemosaicAlgorithm::Bilinear),
            "hybrid" => Ok(DemosaicAlgorithm::Hybrid),
            other => Err(Error::InvalidArgument(format!(
                "unknown demosaic algorithm {other:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResizeFilter {
    /// Area average over the exact source footprint.
    Box,
    /// Linear interpolation at pixel centers.
    Bilinear,
}

impl FromStr for ResizeFilter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "box" => Ok(ResizeFilter::Box),
            "bilinear" => Ok(ResizeFilter::Bilinear),
            other => Err(Error::InvalidArgument(format!("unknown resize filter {other:?}"))),
        }
    }
}

/// Selects at each site the plane designated by `pattern` and quantizes it to
/// `bit_depth` bits. No neighborhood mixing takes place.
pub fn mosaic(color: &ColorImage, pattern: CfaPattern, bit_depth: u8) -> Result<BayerImage> {
    let (h, w) = (color.height(), color.width());
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::OddDimensions { height: h, width: w });
    }
    if !(8..=16).contains(&bit_depth) {
        return Err(Error::InvalidArgument(format!("bit depth {bit_depth} outside [8, 16]")));
    }
    let max = max_code(bit_depth);
    let selected = mosaic_planes(color.planes(), h, w, pattern);
    let samples = selected.iter().map(|&v| quantize(v, max) as u16).collect();
    BayerImage::new(h, w, bit_depth, samples, pattern)
}

/// Real-valued mosaic: the sum over colors of each plane masked by its tiled
/// template.
pub fn mosaic_planes(planes: &[Vec<f64>; 3], height: usize, width: usize, pattern: CfaPattern) -> Vec<f64> {
    let mut out = vec![0.0; height * width];
    for r in 0..height {
        for c in 0..width {
            let i = r * width + c;
            out[i] = planes[pattern.color_at(r, c).index()][i];
        }
    }
    out
}

/// Interpolates the two missing colors at every site.
///
/// Captured samples come out as `sample / (2^b - 1)` exactly.
pub fn demosaic(bayer: &BayerImage, algorithm: DemosaicAlgorithm) -> ColorImage {
    let planes = demosaic_planes(
        &bayer.normalized(),
        bayer.height(),
        bayer.width(),
        bayer.pattern(),
        algorithm,
    );
    // shapes come from a validated BayerImage and all values are finite
    ColorImage::new(bayer.height(), bayer.width(), planes, ColorState::SensorLinear)
        .expect("demosaic output shape")
}

/// Demosaics real-valued samples without clamping. All three algorithms are
/// linear maps of the input.
pub fn demosaic_planes(
    samples: &[f64],
    height: usize,
    width: usize,
    pattern: CfaPattern,
    algorithm: DemosaicAlgorithm,
) -> [Vec<f64>; 3] {
    assert_eq!(samples.len(), height * width);
    assert!(height % 2 == 0 && width % 2 == 0 && height > 0 && width > 0);
    let grid = Grid {
        samples,
        height,
        width,
        pattern,
    };
    match algorithm {
        DemosaicAlgorithm::Nearest => grid.nearest(),
        DemosaicAlgorithm::Bilinear => Channel::ALL.map(|k| grid.bilinear(k, samples)),
        DemosaicAlgorithm::Hybrid => grid.color_difference(),
    }
}

struct Grid<'a> {
    samples: &'a [f64],
    height: usize,
    width: usize,
    pattern: CfaPattern,
}

#[inline]
fn mirror(i: isize, n: usize) -> usize {
    let n = n as isize;
    let j = if i < 0 {
        -i
    } else if i >= n {
        2 * (n - 1) - i
    } else {
        i
    };
    j as usize
}

impl Grid<'_> {
    #[inline]
    fn at(&self, values: &[f64], r: isize, c: isize) -> f64 {
        values[mirror(r, self.height) * self.width + mirror(c, self.width)]
    }

    fn nearest(&self) -> [Vec<f64>; 3] {
        let (h, w) = (self.height, self.width);
        let [red, _, _, blue] = self.pattern.channel_offsets();
        let mut out = [vec![0.0; h * w], vec![0.0; h * w], vec![0.0; h * w]];
        for r in 0..h {
            for c in 0..w {
                let i = r * w + c;
                let (r0, c0) = (r & !1, c & !1);
                let own = self.pattern.color_at(r, c);
                out[Channel::R.index()][i] = self.samples[(r0 + red.0) * w + c0 + red.1];
                out[Channel::B.index()][i] = self.samples[(r0 + blue.0) * w + c0 + blue.1];
                // every row of a Bayer cell holds exactly one green
                out[Channel::G.index()][i] = self.samples[r * w + (c ^ 1)];
                out[own.index()][i] = self.samples[i];
            }
        }
        out
    }

    /// Bilinear estimate of `channel` everywhere, reading known values of that
    /// channel from `values` at its CFA sites.
    fn bilinear(&self, channel: Channel, values: &[f64]) -> Vec<f64> {
        let (h, w) = (self.height, self.width);
        let mut out = vec![0.0; h * w];
        for r in 0..h {
            for c in 0..w {
                let (ri, ci) = (r as isize, c as isize);
                let own = self.pattern.color_at(r, c);
                out[r * w + c] = if own == channel {
                    values[r * w + c]
                } else if channel == Channel::G {
                    0.25 * (self.at(values, ri - 1, ci)
                        + self.at(values, ri + 1, ci)
                        + self.at(values, ri, ci - 1)
                        + self.at(values, ri, ci + 1))
                } else if own == Channel::G {
                    if self.pattern.color_at(r, c ^ 1) == channel {
                        0.5 * (self.at(values, ri, ci - 1) + self.at(values, ri, ci + 1))
                    } else {
                        0.5 * (self.at(values, ri - 1, ci) + self.at(values, ri + 1, ci))
                    }
                } else {
                    0.25 * (self.at(values, ri - 1, ci - 1)
                        + self.at(values, ri - 1, ci + 1)
                        + self.at(values, ri + 1, ci - 1)
                        + self.at(values, ri + 1, ci + 1))
                };
            }
        }
        out
    }

    fn color_difference(&self) -> [Vec<f64>; 3] {
        let green = self.bilinear(Channel::G, self.samples);
        // R-G and B-G are only meaningful at their own sites; elsewhere the
        // entry is never read by `bilinear`
        let diff: Vec<f64> = self
            .samples
            .iter()
            .zip(&green)
            .map(|(&s, &g)| s - g)
            .collect();
        let mut red = self.bilinear(Channel::R, &diff);
        let mut blue = self.bilinear(Channel::B, &diff);
        for r in 0..self.height {
            for c in 0..self.width {
                let i = r * self.width + c;
                let own = self.pattern.color_at(r, c);
                red[i] = if own == Channel::R { self.samples[i] } else { red[i] + green[i] };
                blue[i] = if own == Channel::B { self.samples[i] } else { blue[i] + green[i] };
            }
        }
        [red, green, blue]
    }
}

/// Space-to-depth: a `HxW` mosaic becomes `[R, G1, G2, B]` planes of
/// `(H/2)x(W/2)`, where plane `c` at `(i, j)` is the sample at
/// `(2i + dr, 2j + dc)` for that color's cell offset.
pub fn pack(bayer: &BayerImage) -> PackedBayer {
    let (hh, hw) = (bayer.height() / 2, bayer.width() / 2);
    let offsets = bayer.pattern().channel_offsets();
    let channels = offsets.map(|(dr, dc)| {
        let mut plane = Vec::with_capacity(hh * hw);
        for i in 0..hh {
            for j in 0..hw {
                plane.push(bayer.get(2 * i + dr, 2 * j + dc));
            }
        }
        plane
    });
    PackedBayer {
        half_height: hh,
        half_width: hw,
        bit_depth: bayer.bit_depth(),
        channels,
    }
}

/// Depth-to-space inverse of [`pack`] for the given layout.
pub fn unpack(packed: &PackedBayer, pattern: CfaPattern) -> BayerImage {
    let (h, w) = (2 * packed.half_height, 2 * packed.half_width);
    let mut samples = vec![0u16; h * w];
    for (plane, (dr, dc)) in packed.channels.iter().zip(pattern.channel_offsets()) {
        for i in 0..packed.half_height {
            for j in 0..packed.half_width {
                samples[(2 * i + dr) * w + 2 * j + dc] = plane[i * packed.half_width + j];
            }
        }
    }
    BayerImage::new(h, w, packed.bit_depth, samples, pattern).expect("packed planes are validated")
}

/// Superpixel down-sampling: every output site averages the `factor x factor`
/// same-color sites of its block, keeping the CFA layout.
pub fn bayer_downsample(bayer: &BayerImage, factor: usize) -> Result<BayerImage> {
    if !matches!(factor, 2 | 4 | 8) {
        return Err(Error::InvalidArgument(format!(
            "down-sampling factor {factor} not in {{2, 4, 8}}"
        )));
    }
    let (h, w) = (bayer.height(), bayer.width());
    if h % (2 * factor) != 0 || w % (2 * factor) != 0 {
        return Err(Error::DimensionMismatch(format!(
            "{h}x{w} is not divisible by {}",
            2 * factor
        )));
    }
    let (oh, ow) = (h / factor, w / factor);
    let n = (factor * factor) as u64;
    let mut samples = Vec::with_capacity(oh * ow);
    for r in 0..oh {
        for c in 0..ow {
            let (cell_r, cell_c, dr, dc) = (r / 2, c / 2, r % 2, c % 2);
            let mut sum = 0u64;
            for a in 0..factor {
                for b in 0..factor {
                    let sr = 2 * (cell_r * factor + a) + dr;
                    let sc = 2 * (cell_c * factor + b) + dc;
                    sum += u64::from(bayer.get(sr, sc));
                }
            }
            samples.push(((sum + n / 2) / n) as u16);
        }
    }
    BayerImage::new(oh, ow, bayer.bit_depth(), samples, bayer.pattern())?
        .with_levels(bayer.black_level(), bayer.white_level())
}

/// Separable per-plane resampling, clamped to `[0, 1]`.
pub fn resize_color(
    color: &ColorImage,
    out_h: usize,
    out_w: usize,
    filter: ResizeFilter,
) -> Result<ColorImage> {
    if out_h < 2 || out_w < 2 || out_h % 2 != 0 || out_w % 2 != 0 {
        return Err(Error::InvalidArgument(format!(
            "target size {out_h}x{out_w} must be even and at least 2x2"
        )));
    }
    let (h, w) = (color.height(), color.width());
    let rows = axis_weights(h, out_h, filter);
    let cols = axis_weights(w, out_w, filter);
    let planes = color.planes().each_ref().map(|plane| {
        let mut tmp = vec![0.0; h * out_w];
        for r in 0..h {
            let src = &plane[r * w..(r + 1) * w];
            for (j, taps) in cols.iter().enumerate() {
                tmp[r * out_w + j] = taps.iter().map(|&(k, wt)| wt * src[k]).sum();
            }
        }
        let mut out = vec![0.0; out_h * out_w];
        for (i, taps) in rows.iter().enumerate() {
            for j in 0..out_w {
                out[i * out_w + j] = taps.iter().map(|&(k, wt)| wt * tmp[k * out_w + j]).sum();
            }
        }
        out
    });
    ColorImage::new(out_h, out_w, planes, color.state())
}

fn axis_weights(src: usize, dst: usize, filter: ResizeFilter) -> Vec<Vec<(usize, f64)>> {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|i| match filter {
            ResizeFilter::Box => {
                let (lo, hi) = (i as f64 * scale, (i + 1) as f64 * scale);
                let mut taps = Vec::new();
                let mut k = lo.floor() as usize;
                while (k as f64) < hi && k < src {
                    let overlap = hi.min((k + 1) as f64) - lo.max(k as f64);
                    if overlap > 0.0 {
                        taps.push((k, overlap / scale));
                    }
                    k += 1;
                }
                taps
            }
            ResizeFilter::Bilinear => {
                let x = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, (src - 1) as f64);
                let k = x.floor() as usize;
                let t = x - k as f64;
                if t == 0.0 || k + 1 >= src {
                    vec![(k, 1.0)]
                } else {
                    vec![(k, 1.0 - t), (k + 1, t)]
                }
            }
        })
        .collect()
}
