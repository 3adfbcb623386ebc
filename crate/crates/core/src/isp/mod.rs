//! Configurable ISP pipelines.
//!
//! A pipeline is an ordered list of [`IspStage`]s split by a single
//! `demosaic` stage: Bayer-domain stages (linearize, denoise, noise) come
//! before it and color-domain stages after it. [`run_forward`] develops a RAW
//! mosaic into a display-referred image; [`run_reverse`] walks the same list
//! backwards to synthesize a RAW mosaic from a color image.
//!
//! Every color-domain stage clamps its output to `[0, 1]`. Runs report which
//! pixels were clipped so the gamut loss can be measured.

mod camera;
mod ops;

use serde::{Deserialize, Serialize, Serializer};

use crate::cfa::CfaPattern;
use crate::image::{max_code, BayerImage, ColorImage, ColorState};
use crate::mosaic::{demosaic_planes, mosaic_planes, resize_color, DemosaicAlgorithm, ResizeFilter};
use crate::{Error, Result};

pub use camera::{
    invert_camera, render_camera, CameraModel, CameraOutput, Polynomial, INVERSE_TOLERANCE, MONOTONE_GRID,
};
pub use ops::{
    add_noise, apply_color_matrix, apply_white_balance, gamma_compress, gamma_expand, gray_world_gains,
    invert_matrix, mat_vec, Mat3, IDENTITY, MIN_DETERMINANT,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DenoiseMethod {
    None,
    /// Median over the 3x3 neighborhood of same-color sites.
    BayerMedian3,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WhiteBalanceMode {
    /// Uses the `gains` field.
    Fixed,
    /// Gains from [`gray_world_gains`] of the image being processed.
    GrayWorld,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeedPolicy {
    /// Use the seed supplied with the run (per file in batch jobs).
    #[default]
    Derived,
    Fixed(u64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum IspStage {
    Linearize {
        black: u16,
        white: u16,
    },
    Denoise {
        method: DenoiseMethod,
    },
    Demosaic {
        alg: DemosaicAlgorithm,
    },
    WhiteBalance {
        mode: WhiteBalanceMode,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        gains: Option<[f64; 3]>,
    },
    ColorMatrix {
        m: Mat3,
    },
    Gamma {
        a: f64,
    },
    /// One ascending coefficient list per channel.
    ToneCurve {
        coeffs: [Vec<f64>; 3],
    },
    Resize {
        out_h: usize,
        out_w: usize,
        filter: ResizeFilter,
    },
    Noise {
        sigma: f64,
        poisson_scale: f64,
        #[serde(default)]
        seed_policy: SeedPolicy,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Domain {
    Bayer,
    Split,
    Color,
}

impl IspStage {
    pub fn name(&self) -> &'static str {
        match self {
            IspStage::Linearize { .. } => "linearize",
            IspStage::Denoise { .. } => "denoise",
            IspStage::Demosaic { .. } => "demosaic",
            IspStage::WhiteBalance { .. } => "white_balance",
            IspStage::ColorMatrix { .. } => "color_matrix",
            IspStage::Gamma { .. } => "gamma",
            IspStage::ToneCurve { .. } => "tone_curve",
            IspStage::Resize { .. } => "resize",
            IspStage::Noise { .. } => "noise",
        }
    }

    fn domain(&self) -> Domain {
        match self {
            IspStage::Linearize { .. } | IspStage::Denoise { .. } | IspStage::Noise { .. } => Domain::Bayer,
            IspStage::Demosaic { .. } => Domain::Split,
            _ => Domain::Color,
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Pipeline(format!("{}: {msg}", self.name())));
        match self {
            IspStage::Linearize { black, white } if black >= white => {
                bad(format!("black level {black} not below white level {white}"))
            }
            IspStage::WhiteBalance { mode, gains } => match (mode, gains) {
                (WhiteBalanceMode::Fixed, None) => bad("fixed mode needs gains".into()),
                (WhiteBalanceMode::GrayWorld, Some(_)) => bad("gray_world mode takes no gains".into()),
                (_, Some(g)) if g.iter().any(|v| !(v.is_finite() && *v > 0.0)) => {
                    bad(format!("gains {g:?} must be finite and positive"))
                }
                _ => Ok(()),
            },
            IspStage::ColorMatrix { m } if m.iter().flatten().any(|v| !v.is_finite()) => {
                bad("non-finite matrix entry".into())
            }
            IspStage::Gamma { a } if !(*a > 0.0 && *a <= 1.0) => bad(format!("exponent {a} outside (0, 1]")),
            IspStage::ToneCurve { coeffs } => {
                for c in coeffs {
                    Polynomial::new(c.clone())?;
                }
                Ok(())
            }
            IspStage::Resize { out_h, out_w, .. }
                if *out_h < 2 || *out_w < 2 || out_h % 2 != 0 || out_w % 2 != 0 =>
            {
                bad(format!("target {out_h}x{out_w} must be even and at least 2x2"))
            }
            IspStage::Noise {
                sigma, poisson_scale, ..
            } => ops::check_noise(*sigma, *poisson_scale),
            _ => Ok(()),
        }
    }

    /// Applies a per-pixel color stage without clamping. `None` for stages
    /// that are not per-pixel color maps; gray world needs resolved gains.
    pub fn forward_pixel(&self, px: [f64; 3]) -> Option<[f64; 3]> {
        self.pixel_map(false).map(|f| f(px))
    }

    /// Exact inverse of [`IspStage::forward_pixel`] for invertible stages.
    pub fn inverse_pixel(&self, px: [f64; 3]) -> Option<[f64; 3]> {
        self.pixel_map(true).map(|f| f(px))
    }

    fn pixel_map(&self, inverse: bool) -> Option<PixelMap> {
        Some(match (self, inverse) {
            (IspStage::WhiteBalance { gains: Some(g), .. }, false) => {
                let g = *g;
                Box::new(move |p| [p[0] * g[0], p[1] * g[1], p[2] * g[2]])
            }
            (IspStage::WhiteBalance { gains: Some(g), .. }, true) => {
                let g = *g;
                Box::new(move |p| [p[0] / g[0], p[1] / g[1], p[2] / g[2]])
            }
            (IspStage::ColorMatrix { m }, false) => {
                let m = *m;
                Box::new(move |p| mat_vec(&m, p))
            }
            (IspStage::ColorMatrix { m }, true) => {
                let inv = invert_matrix(m).ok()?;
                Box::new(move |p| mat_vec(&inv, p))
            }
            (IspStage::Gamma { a }, _) => {
                let e = if inverse { 1.0 / a } else { *a };
                Box::new(move |p| p.map(|v| v.max(0.0).powf(e)))
            }
            (IspStage::ToneCurve { coeffs }, _) => {
                let curves: Vec<Polynomial> = coeffs
                    .iter()
                    .map(|c| Polynomial::new(c.clone()))
                    .collect::<Result<_>>()
                    .ok()?;
                if inverse {
                    Box::new(move |p| [0, 1, 2].map(|k| curves[k].invert(p[k]).0))
                } else {
                    Box::new(move |p| [0, 1, 2].map(|k| curves[k].eval(p[k])))
                }
            }
            _ => return None,
        })
    }

    /// Checks that the stage can be walked backwards.
    fn check_invertible(&self) -> Result<()> {
        match self {
            IspStage::Denoise { method } if *method != DenoiseMethod::None => {
                Err(Error::NonInvertible(format!("denoise ({method:?})")))
            }
            IspStage::Resize { .. } => Err(Error::NonInvertible("resize".into())),
            IspStage::ColorMatrix { m } => invert_matrix(m).map(|_| ()),
            IspStage::ToneCurve { coeffs } => {
                for c in coeffs {
                    Polynomial::new(c.clone())?.check_increasing()?;
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

type PixelMap = Box<dyn Fn([f64; 3]) -> [f64; 3]>;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PipelineDoc {
    stages: Vec<IspStage>,
}

/// A validated stage list.
#[derive(Debug, Clone, PartialEq)]
pub struct IspPipeline {
    stages: Vec<IspStage>,
}

impl IspPipeline {
    /// Validates stage parameters and ordering: at most one demosaic, Bayer
    /// stages before it and color stages after it. Without a demosaic all
    /// stages must share one domain.
    pub fn new(stages: Vec<IspStage>) -> Result<Self> {
        for stage in &stages {
            stage.validate()?;
        }
        let split: Vec<usize> = stages
            .iter()
            .enumerate()
            .filter(|(_, s)| s.domain() == Domain::Split)
            .map(|(i, _)| i)
            .collect();
        match split.as_slice() {
            [] => {
                let mixed = stages.iter().any(|s| s.domain() == Domain::Bayer)
                    && stages.iter().any(|s| s.domain() == Domain::Color);
                if mixed {
                    return Err(Error::Pipeline(
                        "Bayer and color stages mixed without a demosaic stage".into(),
                    ));
                }
            }
            [d] => {
                for (i, stage) in stages.iter().enumerate() {
                    let want = if i < *d { Domain::Bayer } else { Domain::Color };
                    if i != *d && stage.domain() != want {
                        return Err(Error::Pipeline(format!(
                            "stage {i} ({}) is on the wrong side of demosaic",
                            stage.name()
                        )));
                    }
                }
            }
            _ => return Err(Error::Pipeline(format!("{} demosaic stages", split.len()))),
        }
        Ok(IspPipeline { stages })
    }

    pub fn stages(&self) -> &[IspStage] {
        &self.stages
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: PipelineDoc =
            serde_json::from_str(text).map_err(|e| Error::Pipeline(format!("config: {e}")))?;
        Self::new(doc.stages)
    }

    /// Canonical JSON: `{"stages": [...]}` with fields in declaration order.
    pub fn to_json(&self) -> String {
        let doc = PipelineDoc {
            stages: self.stages.clone(),
        };
        serde_json::to_string_pretty(&doc).expect("pipeline serializes")
    }

    fn demosaic_index(&self) -> Result<usize> {
        self.stages
            .iter()
            .position(|s| matches!(s, IspStage::Demosaic { .. }))
            .ok_or_else(|| Error::Pipeline("pipeline has no demosaic stage".into()))
    }

    /// Checks every stage can be reversed.
    pub fn check_reversible(&self) -> Result<()> {
        self.demosaic_index()?;
        self.stages.iter().try_for_each(IspStage::check_invertible)
    }
}

/// Fraction of pixels where some sample had to be clamped.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ClipReport {
    pub clipped: usize,
    pub total: usize,
}

impl ClipReport {
    pub fn from_mask(mask: &[bool]) -> Self {
        ClipReport {
            clipped: mask.iter().filter(|&&m| m).count(),
            total: mask.len(),
        }
    }

    pub fn clipped_fraction(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.clipped as f64 / self.total as f64
        }
    }
}

impl Serialize for ClipReport {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut s = serializer.serialize_struct("ClipReport", 1)?;
        s.serialize_field("clipped_fraction", &self.clipped_fraction())?;
        s.end()
    }
}

#[derive(Debug, Clone)]
pub struct ForwardRun {
    pub image: ColorImage,
    pub clip: ClipReport,
    /// Per output pixel.
    pub clip_mask: Vec<bool>,
    /// The pipeline with every gray-world stage replaced by the fixed gains
    /// it applied; reversing this pipeline undoes the run exactly.
    pub resolved: IspPipeline,
}

#[derive(Debug, Clone)]
pub struct ReverseRun {
    pub image: BayerImage,
    pub clip: ClipReport,
    /// Per Bayer site.
    pub clip_mask: Vec<bool>,
}

/// Target of a reverse run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReverseTarget {
    pub bit_depth: u8,
    pub pattern: CfaPattern,
    /// Seed for noise stages with [`SeedPolicy::Derived`].
    pub seed: u64,
    /// Optional resampling applied in the linear domain, after the color
    /// stages are undone and before mosaicking.
    pub linear_resize: Option<(usize, usize, ResizeFilter)>,
}

impl ReverseTarget {
    pub fn new(bit_depth: u8, pattern: CfaPattern) -> Self {
        ReverseTarget {
            bit_depth,
            pattern,
            seed: 0,
            linear_resize: None,
        }
    }
}

const CLIP_EPS: f64 = 1e-12;

#[inline]
fn clamp_unit(v: &mut f64) -> bool {
    let out = *v < -CLIP_EPS || *v > 1.0 + CLIP_EPS;
    *v = v.clamp(0.0, 1.0);
    out
}

struct BayerState {
    values: Vec<f64>,
    /// DN per unit of `values`.
    scale: f64,
    mask: Vec<bool>,
}

fn seed_for(policy: SeedPolicy, run_seed: u64) -> u64 {
    match policy {
        SeedPolicy::Derived => run_seed,
        SeedPolicy::Fixed(s) => s,
    }
}

fn median_same_color(values: &[f64], height: usize, width: usize) -> Vec<f64> {
    let mirror = |i: isize, n: usize| -> usize {
        let n = n as isize;
        (if i < 0 { -i } else if i >= n { 2 * (n - 1) - i } else { i }) as usize
    };
    let mut out = vec![0.0; values.len()];
    let mut window = [0.0f64; 9];
    for r in 0..height {
        for c in 0..width {
            let mut k = 0;
            for dr in [-2isize, 0, 2] {
                for dc in [-2isize, 0, 2] {
                    let rr = mirror(r as isize + dr, height).min(height - 1);
                    let cc = mirror(c as isize + dc, width).min(width - 1);
                    window[k] = values[rr * width + cc];
                    k += 1;
                }
            }
            window.sort_by(f64::total_cmp);
            out[r * width + c] = window[4];
        }
    }
    out
}

/// Develops a RAW mosaic. `seed` feeds noise stages with a derived seed.
pub fn run_forward(pipe: &IspPipeline, raw: &BayerImage, seed: u64) -> Result<ForwardRun> {
    let split = pipe.demosaic_index()?;
    let (h, w) = (raw.height(), raw.width());
    let full = f64::from(raw.max_value());
    let mut bayer = BayerState {
        values: raw.normalized(),
        scale: full,
        mask: vec![false; h * w],
    };
    for stage in &pipe.stages[..split] {
        match stage {
            IspStage::Linearize { black, white } => {
                if f64::from(*white) > full {
                    return Err(Error::Pipeline(format!(
                        "white level {white} exceeds the {}-bit range",
                        raw.bit_depth()
                    )));
                }
                let (b, range) = (f64::from(*black), f64::from(*white) - f64::from(*black));
                for (v, m) in bayer.values.iter_mut().zip(bayer.mask.iter_mut()) {
                    *v = (*v * bayer.scale - b) / range;
                    *m |= clamp_unit(v);
                }
                bayer.scale = range;
            }
            IspStage::Denoise { method } => {
                if *method == DenoiseMethod::BayerMedian3 {
                    bayer.values = median_same_color(&bayer.values, h, w);
                }
            }
            IspStage::Noise {
                sigma,
                poisson_scale,
                seed_policy,
            } => {
                let mut dn: Vec<f64> = bayer.values.iter().map(|v| v * bayer.scale).collect();
                ops::noise_in_place(&mut dn, *sigma, *poisson_scale, seed_for(*seed_policy, seed), bayer.scale);
                bayer.values = dn.into_iter().map(|v| v / bayer.scale).collect();
            }
            _ => unreachable!("validated Bayer-domain stage"),
        }
    }

    let IspStage::Demosaic { alg } = pipe.stages[split] else {
        unreachable!()
    };
    let planes = demosaic_planes(&bayer.values, h, w, raw.pattern(), alg);
    let mut color = ColorImage::new_unclamped(h, w, planes, ColorState::SensorLinear)?;
    let mut mask = bayer.mask;
    clamp_tracked(&mut color, &mut mask);

    let mut resolved = pipe.stages.clone();
    for (offset, stage) in pipe.stages[split + 1..].iter().enumerate() {
        match stage {
            IspStage::WhiteBalance {
                mode: WhiteBalanceMode::GrayWorld,
                ..
            } => {
                let gains = gray_world_gains(&color)?;
                let fixed = IspStage::WhiteBalance {
                    mode: WhiteBalanceMode::Fixed,
                    gains: Some(gains),
                };
                let f = fixed.pixel_map(false).expect("fixed gains");
                map_tracked(&mut color, &mut mask, f);
                resolved[split + 1 + offset] = fixed;
            }
            IspStage::Resize { out_h, out_w, filter } => {
                let (oh, ow) = (*out_h, *out_w);
                let (sh, sw) = (color.height(), color.width());
                color = resize_color(&color, oh, ow, *filter)?;
                mask = (0..oh * ow)
                    .map(|i| {
                        let r = ((i / ow) as f64 + 0.5) * sh as f64 / oh as f64;
                        let c = ((i % ow) as f64 + 0.5) * sw as f64 / ow as f64;
                        mask[(r as usize).min(sh - 1) * sw + (c as usize).min(sw - 1)]
                    })
                    .collect();
            }
            other => {
                let f = other.pixel_map(false).expect("validated color stage");
                map_tracked(&mut color, &mut mask, f);
            }
        }
    }
    color.set_state(ColorState::DisplayReferred);
    Ok(ForwardRun {
        image: color,
        clip: ClipReport::from_mask(&mask),
        clip_mask: mask,
        resolved: IspPipeline { stages: resolved },
    })
}

fn clamp_tracked(color: &mut ColorImage, mask: &mut [bool]) {
    let planes = color.planes_mut();
    for (i, m) in mask.iter_mut().enumerate() {
        for plane in planes.iter_mut() {
            *m |= clamp_unit(&mut plane[i]);
        }
    }
}

fn map_tracked(color: &mut ColorImage, mask: &mut [bool], f: impl Fn([f64; 3]) -> [f64; 3]) {
    let planes = color.planes_mut();
    for (i, m) in mask.iter_mut().enumerate() {
        let mut out = f([planes[0][i], planes[1][i], planes[2][i]]);
        for (k, v) in out.iter_mut().enumerate() {
            *m |= clamp_unit(v);
            planes[k][i] = *v;
        }
    }
}

/// Synthesizes a RAW mosaic from a display-referred image by undoing the
/// pipeline's stages in reverse order, mosaicking and quantizing.
///
/// Noise stages inject noise rather than remove it. An unresolved gray-world
/// stage is undone with unit gains, since a gray-world balanced image is its
/// own gray-world preimage; use [`ForwardRun::resolved`] to undo a known run.
pub fn run_reverse(pipe: &IspPipeline, color: &ColorImage, target: &ReverseTarget) -> Result<ReverseRun> {
    pipe.check_reversible()?;
    let split = pipe.demosaic_index()?;
    let (h, w) = (color.height(), color.width());
    if !(8..=16).contains(&target.bit_depth) {
        return Err(Error::InvalidArgument(format!(
            "bit depth {} outside [8, 16]",
            target.bit_depth
        )));
    }
    let full = f64::from(max_code(target.bit_depth));

    let mut linear = ColorImage::new_unclamped(h, w, color.planes().clone(), ColorState::SensorLinear)?;
    let mut mask = vec![false; h * w];
    for stage in pipe.stages[split + 1..].iter().rev() {
        match stage {
            IspStage::WhiteBalance {
                mode: WhiteBalanceMode::GrayWorld,
                ..
            } => {}
            IspStage::ToneCurve { coeffs } => {
                let curves: Vec<Polynomial> = coeffs
                    .iter()
                    .map(|c| Polynomial::new(c.clone()))
                    .collect::<Result<_>>()?;
                let planes = linear.planes_mut();
                for (i, m) in mask.iter_mut().enumerate() {
                    for (k, curve) in curves.iter().enumerate() {
                        let (y, inside) = curve.invert(planes[k][i]);
                        *m |= !inside;
                        planes[k][i] = y;
                    }
                }
            }
            other => {
                let f = other.pixel_map(true).expect("checked invertible");
                map_tracked(&mut linear, &mut mask, f);
            }
        }
    }

    let (bh, bw) = match target.linear_resize {
        Some((oh, ow, filter)) => {
            let (sh, sw) = (h, w);
            linear = resize_color(&linear, oh, ow, filter)?;
            mask = (0..oh * ow)
                .map(|i| {
                    let r = ((i / ow) as f64 + 0.5) * sh as f64 / oh as f64;
                    let c = ((i % ow) as f64 + 0.5) * sw as f64 / ow as f64;
                    mask[(r as usize).min(sh - 1) * sw + (c as usize).min(sw - 1)]
                })
                .collect();
            (oh, ow)
        }
        None => (h, w),
    };
    if bh % 2 != 0 || bw % 2 != 0 {
        return Err(Error::OddDimensions { height: bh, width: bw });
    }

    // linear values span [black, white] when a linearize stage exists
    let linear_scale = pipe.stages[..split]
        .iter()
        .find_map(|s| match s {
            IspStage::Linearize { black, white } => Some(f64::from(*white) - f64::from(*black)),
            _ => None,
        })
        .unwrap_or(full);
    let mut bayer = BayerState {
        values: mosaic_planes(linear.planes(), bh, bw, target.pattern),
        scale: linear_scale,
        mask,
    };
    let mut levels = (None, None);
    for stage in pipe.stages[..split].iter().rev() {
        match stage {
            IspStage::Linearize { black, white } => {
                if f64::from(*white) > full {
                    return Err(Error::Pipeline(format!(
                        "white level {white} exceeds the {}-bit range",
                        target.bit_depth
                    )));
                }
                let b = f64::from(*black);
                for v in bayer.values.iter_mut() {
                    *v = (*v * bayer.scale + b) / full;
                }
                bayer.scale = full;
                levels = (Some(*black), Some(*white));
            }
            IspStage::Denoise { .. } => {}
            IspStage::Noise {
                sigma,
                poisson_scale,
                seed_policy,
            } => {
                let mut dn: Vec<f64> = bayer.values.iter().map(|v| v * bayer.scale).collect();
                ops::noise_in_place(
                    &mut dn,
                    *sigma,
                    *poisson_scale,
                    seed_for(*seed_policy, target.seed),
                    bayer.scale,
                );
                bayer.values = dn.into_iter().map(|v| v / bayer.scale).collect();
            }
            _ => unreachable!("validated Bayer-domain stage"),
        }
    }

    let max = max_code(target.bit_depth);
    let mut samples = Vec::with_capacity(bayer.values.len());
    for (v, m) in bayer.values.iter().zip(bayer.mask.iter_mut()) {
        let dn = (v * full).round();
        if dn < 0.0 || dn > full {
            *m = true;
        }
        samples.push(dn.clamp(0.0, f64::from(max)) as u16);
    }
    let image = BayerImage::new(bh, bw, target.bit_depth, samples, target.pattern)?
        .with_levels(levels.0, levels.1)?;
    Ok(ReverseRun {
        image,
        clip: ClipReport::from_mask(&bayer.mask),
        clip_mask: bayer.mask,
    })
}

#[cfg(test)]
mod tests;
