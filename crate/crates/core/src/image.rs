//! Image containers.

use serde::{Deserialize, Serialize};

use crate::cfa::{CfaLayout, CfaPattern, Channel};
use crate::{Error, Result};

/// Largest representable code for a bit depth, `2^b - 1`.
#[inline]
pub fn max_code(bit_depth: u8) -> u32 {
    (1u32 << bit_depth) - 1
}

/// Quantizes a normalized value to an integer code in `[0, max]`, rounding
/// half away from zero.
#[inline]
pub fn quantize(value: f64, max: u32) -> u32 {
    let scaled = (value * f64::from(max)).round();
    if scaled.is_nan() || scaled <= 0.0 {
        0
    } else if scaled >= f64::from(max) {
        max
    } else {
        scaled as u32
    }
}

/// A single-channel CFA mosaic with unshifted integer samples.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BayerImage {
    height: usize,
    width: usize,
    bit_depth: u8,
    samples: Vec<u16>,
    pattern: CfaPattern,
    black_level: Option<u16>,
    white_level: Option<u16>,
}

impl BayerImage {
    pub fn new(
        height: usize,
        width: usize,
        bit_depth: u8,
        samples: Vec<u16>,
        pattern: CfaPattern,
    ) -> Result<Self> {
        if !(8..=16).contains(&bit_depth) {
            return Err(Error::InvalidImage(format!(
                "bit depth {bit_depth} outside [8, 16]"
            )));
        }
        if height == 0 || width == 0 || height % 2 != 0 || width % 2 != 0 {
            return Err(Error::OddDimensions { height, width });
        }
        if samples.len() != height * width {
            return Err(Error::InvalidImage(format!(
                "{} samples for a {height}x{width} image",
                samples.len()
            )));
        }
        let max = max_code(bit_depth);
        if let Some(&bad) = samples.iter().find(|&&s| u32::from(s) > max) {
            return Err(Error::InvalidImage(format!(
                "sample {bad} exceeds the {bit_depth}-bit range"
            )));
        }
        Ok(BayerImage {
            height,
            width,
            bit_depth,
            samples,
            pattern,
            black_level: None,
            white_level: None,
        })
    }

    pub fn filled(
        height: usize,
        width: usize,
        bit_depth: u8,
        value: u16,
        pattern: CfaPattern,
    ) -> Result<Self> {
        Self::new(height, width, bit_depth, vec![value; height * width], pattern)
    }

    /// Attaches black and white levels; requires `0 <= black < white <= 2^b - 1`.
    pub fn with_levels(mut self, black: Option<u16>, white: Option<u16>) -> Result<Self> {
        check_levels(self.bit_depth, black, white).map_err(Error::InvalidImage)?;
        self.black_level = black;
        self.white_level = white;
        Ok(self)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn bit_depth(&self) -> u8 {
        self.bit_depth
    }

    pub fn max_value(&self) -> u32 {
        max_code(self.bit_depth)
    }

    pub fn pattern(&self) -> CfaPattern {
        self.pattern
    }

    pub fn black_level(&self) -> Option<u16> {
        self.black_level
    }

    pub fn white_level(&self) -> Option<u16> {
        self.white_level
    }

    pub fn samples(&self) -> &[u16] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<u16> {
        self.samples
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> u16 {
        self.samples[row * self.width + col]
    }

    /// Samples divided by `2^b - 1`.
    pub fn normalized(&self) -> Vec<f64> {
        let max = f64::from(self.max_value());
        self.samples.iter().map(|&s| f64::from(s) / max).collect()
    }

    pub fn meta(&self) -> SidecarMeta {
        SidecarMeta {
            pattern: self.pattern.layout(),
            bit_depth: self.bit_depth,
            black_level: self.black_level,
            white_level: self.white_level,
            provenance: None,
        }
    }
}

/// Whether color values are linear in scene radiance or already rendered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColorState {
    SensorLinear,
    DisplayReferred,
}

/// Three real-valued planes in `[R, G, B]` order.
#[derive(Debug, Clone, PartialEq)]
pub struct ColorImage {
    height: usize,
    width: usize,
    planes: [Vec<f64>; 3],
    state: ColorState,
}

impl ColorImage {
    /// Builds an image from planes, clamping every value to `[0, 1]`.
    pub fn new(
        height: usize,
        width: usize,
        planes: [Vec<f64>; 3],
        state: ColorState,
    ) -> Result<Self> {
        let mut img = Self::new_unclamped(height, width, planes, state)?;
        img.clamp();
        Ok(img)
    }

    /// Builds an image without clamping; used for transient values inside a
    /// pipeline.
    pub fn new_unclamped(
        height: usize,
        width: usize,
        planes: [Vec<f64>; 3],
        state: ColorState,
    ) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidImage("empty color image".into()));
        }
        if planes.iter().any(|p| p.len() != height * width) {
            return Err(Error::InvalidImage(format!(
                "plane lengths do not match {height}x{width}"
            )));
        }
        if planes.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidImage("non-finite color value".into()));
        }
        Ok(ColorImage {
            height,
            width,
            planes,
            state,
        })
    }

    pub fn filled(height: usize, width: usize, rgb: [f64; 3], state: ColorState) -> Result<Self> {
        let n = height * width;
        Self::new(height, width, rgb.map(|v| vec![v; n]), state)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn state(&self) -> ColorState {
        self.state
    }

    pub fn set_state(&mut self, state: ColorState) {
        self.state = state;
    }

    pub fn plane(&self, channel: Channel) -> &[f64] {
        &self.planes[channel.index()]
    }

    pub fn planes(&self) -> &[Vec<f64>; 3] {
        &self.planes
    }

    pub fn planes_mut(&mut self) -> &mut [Vec<f64>; 3] {
        &mut self.planes
    }

    pub fn into_planes(self) -> [Vec<f64>; 3] {
        self.planes
    }

    #[inline]
    pub fn pixel(&self, row: usize, col: usize) -> [f64; 3] {
        let i = row * self.width + col;
        [self.planes[0][i], self.planes[1][i], self.planes[2][i]]
    }

    /// Clamps every value to `[0, 1]` and returns how many samples moved.
    pub fn clamp(&mut self) -> usize {
        let mut clipped = 0;
        for v in self.planes.iter_mut().flatten() {
            if *v < 0.0 || *v > 1.0 {
                *v = v.clamp(0.0, 1.0);
                clipped += 1;
            }
        }
        clipped
    }

    /// Codes for an integer container with `2^bit_depth - 1` as full scale.
    pub fn quantized(&self, bit_depth: u8) -> [Vec<u32>; 3] {
        let max = max_code(bit_depth);
        self.planes
            .each_ref()
            .map(|p| p.iter().map(|&v| quantize(v, max)).collect())
    }
}

/// Space-to-depth view of a Bayer image: four `(H/2)x(W/2)` planes in
/// `[R, G1, G2, B]` order regardless of the source layout.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PackedBayer {
    pub(crate) half_height: usize,
    pub(crate) half_width: usize,
    pub(crate) bit_depth: u8,
    pub(crate) channels: [Vec<u16>; 4],
}

impl PackedBayer {
    pub fn new(
        half_height: usize,
        half_width: usize,
        bit_depth: u8,
        channels: [Vec<u16>; 4],
    ) -> Result<Self> {
        if half_height == 0 || half_width == 0 {
            return Err(Error::InvalidImage("empty packed image".into()));
        }
        if !(8..=16).contains(&bit_depth) {
            return Err(Error::InvalidImage(format!(
                "bit depth {bit_depth} outside [8, 16]"
            )));
        }
        if channels.iter().any(|c| c.len() != half_height * half_width) {
            return Err(Error::InvalidImage("packed channel length mismatch".into()));
        }
        let max = max_code(bit_depth);
        if channels.iter().flatten().any(|&s| u32::from(s) > max) {
            return Err(Error::InvalidImage("packed sample out of range".into()));
        }
        Ok(PackedBayer {
            half_height,
            half_width,
            bit_depth,
            channels,
        })
    }

    /// `[4, H/2, W/2]`.
    pub fn shape(&self) -> [usize; 3] {
        [4, self.half_height, self.half_width]
    }

    pub fn bit_depth(&self) -> u8 {
        self.bit_depth
    }

    pub fn channel(&self, index: usize) -> &[u16] {
        &self.channels[index]
    }

    pub fn channels(&self) -> &[Vec<u16>; 4] {
        &self.channels
    }
}

/// JSON metadata stored next to a Bayer PGM.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SidecarMeta {
    pub pattern: CfaLayout,
    pub bit_depth: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub black_level: Option<u16>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub white_level: Option<u16>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<String>,
}

impl SidecarMeta {
    pub fn new(pattern: CfaLayout, bit_depth: u8) -> Self {
        SidecarMeta {
            pattern,
            bit_depth,
            black_level: None,
            white_level: None,
            provenance: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(8..=16).contains(&self.bit_depth) {
            return Err(Error::Sidecar(format!(
                "bit_depth {} outside [8, 16]",
                self.bit_depth
            )));
        }
        check_levels(self.bit_depth, self.black_level, self.white_level).map_err(Error::Sidecar)
    }
}

fn check_levels(bit_depth: u8, black: Option<u16>, white: Option<u16>) -> Result<(), String> {
    let max = max_code(bit_depth);
    if let Some(w) = white {
        if u32::from(w) > max {
            return Err(format!("white level {w} exceeds {max}"));
        }
    }
    if let Some(b) = black {
        let white = white.map_or(max, u32::from);
        if u32::from(b) >= white {
            return Err(format!("black level {b} is not below white level {white}"));
        }
    }
    Ok(())
}
