//! Netpbm and PNG codecs.
//!
//! Bayer mosaics are stored as binary PGM (`P5`, maxval 65535, samples
//! most-significant byte first, values unshifted) with a JSON sidecar that
//! carries the CFA layout and levels. Color images go to binary PPM (`P6`)
//! or PNG; both are quantized with [`crate::image::quantize`] on write and divided by the
//! file's maxval on read.

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::cfa::CfaPattern;
use crate::image::{max_code, BayerImage, ColorImage, ColorState, PackedBayer, SidecarMeta};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImageKind {
    Bayer,
    Color,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImageFormat {
    /// Binary PGM with maxval 65535.
    Pgm16,
    /// Binary PPM, 8 bits per sample.
    Ppm,
    /// RGB PNG, 8 bits per sample.
    Png,
    /// RGB PNG, 16 bits per sample.
    Png16,
}

impl ImageFormat {
    pub fn name(self) -> &'static str {
        match self {
            ImageFormat::Pgm16 => "pgm16",
            ImageFormat::Ppm => "ppm",
            ImageFormat::Png => "png",
            ImageFormat::Png16 => "png16",
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            ImageFormat::Pgm16 => "pgm",
            ImageFormat::Ppm => "ppm",
            ImageFormat::Png | ImageFormat::Png16 => "png",
        }
    }

    pub fn kind(self) -> ImageKind {
        match self {
            ImageFormat::Pgm16 => ImageKind::Bayer,
            _ => ImageKind::Color,
        }
    }
}

impl FromStr for ImageFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pgm16" | "pgm" => Ok(ImageFormat::Pgm16),
            "ppm" => Ok(ImageFormat::Ppm),
            "png" => Ok(ImageFormat::Png),
            "png16" => Ok(ImageFormat::Png16),
            other => Err(Error::InvalidArgument(format!("unknown image format {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum AnyImage {
    Bayer(BayerImage),
    Color(ColorImage),
}

impl AnyImage {
    pub fn kind(&self) -> ImageKind {
        match self {
            AnyImage::Bayer(_) => ImageKind::Bayer,
            AnyImage::Color(_) => ImageKind::Color,
        }
    }
}

/// Location of the sidecar for a Bayer file: same stem, `.json` extension.
pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

/// Reads an image of the requested kind. For Bayer input the sidecar next to
/// the file wins over `defaults`; one of the two must exist.
pub fn read_image(path: &Path, kind: ImageKind, defaults: Option<&SidecarMeta>) -> Result<AnyImage> {
    match kind {
        ImageKind::Bayer => read_bayer(path, defaults).map(AnyImage::Bayer),
        ImageKind::Color => read_color(path).map(AnyImage::Color),
    }
}

pub fn write_image(img: &AnyImage, path: &Path, format: ImageFormat) -> Result<()> {
    match (img, format) {
        (AnyImage::Bayer(b), ImageFormat::Pgm16) => write_bayer(b, path, None),
        (AnyImage::Color(c), ImageFormat::Ppm | ImageFormat::Png | ImageFormat::Png16) => {
            write_color(c, path, format)
        }
        (AnyImage::Bayer(_), f) => Err(Error::FormatMismatch {
            format: f.name(),
            kind: "bayer",
        }),
        (AnyImage::Color(_), f) => Err(Error::FormatMismatch {
            format: f.name(),
            kind: "color",
        }),
    }
}

pub fn read_sidecar(path: &Path) -> Result<SidecarMeta> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let meta: SidecarMeta =
        serde_json::from_str(&text).map_err(|e| Error::Sidecar(format!("{}: {e}", path.display())))?;
    meta.validate()?;
    Ok(meta)
}

pub fn read_bayer(path: &Path, defaults: Option<&SidecarMeta>) -> Result<BayerImage> {
    let side = sidecar_path(path);
    let meta = if side.exists() {
        read_sidecar(&side)?
    } else {
        let meta = defaults.cloned().ok_or_else(|| {
            Error::Sidecar(format!("no sidecar at {} and no defaults given", side.display()))
        })?;
        meta.validate()?;
        meta
    };
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_bayer(&bytes, &meta)
}

/// Decodes PGM bytes into a Bayer image described by `meta`.
pub fn decode_bayer(bytes: &[u8], meta: &SidecarMeta) -> Result<BayerImage> {
    let pnm = decode_pnm(bytes)?;
    if pnm.channels != 1 {
        return Err(Error::Malformed {
            format: "pgm",
            reason: "expected a P5 graymap".into(),
        });
    }
    if pnm.maxval < max_code(meta.bit_depth) {
        return Err(Error::Malformed {
            format: "pgm",
            reason: format!(
                "maxval {} cannot hold {}-bit samples",
                pnm.maxval, meta.bit_depth
            ),
        });
    }
    if pnm.height % 2 != 0 || pnm.width % 2 != 0 {
        return Err(Error::OddDimensions {
            height: pnm.height,
            width: pnm.width,
        });
    }
    let samples = pnm.samples.into_iter().map(|s| s as u16).collect();
    BayerImage::new(
        pnm.height,
        pnm.width,
        meta.bit_depth,
        samples,
        CfaPattern::new(meta.pattern),
    )?
    .with_levels(meta.black_level, meta.white_level)
}

/// Writes the PGM and its sidecar. `provenance` is recorded in the sidecar.
pub fn write_bayer(img: &BayerImage, path: &Path, provenance: Option<&str>) -> Result<()> {
    fs::write(path, encode_pgm16(img)).map_err(|e| Error::io(path, e))?;
    let mut meta = img.meta();
    meta.provenance = provenance.map(str::to_owned);
    let side = sidecar_path(path);
    let mut text = serde_json::to_string_pretty(&meta)?;
    text.push('\n');
    fs::write(&side, text).map_err(|e| Error::io(&side, e))
}

pub fn encode_pgm16(img: &BayerImage) -> Vec<u8> {
    let header = format!("P5\n{} {}\n65535\n", img.width(), img.height());
    let mut out = Vec::with_capacity(header.len() + 2 * img.samples().len());
    out.extend_from_slice(header.as_bytes());
    for &s in img.samples() {
        out.extend_from_slice(&s.to_be_bytes());
    }
    out
}

pub fn read_color(path: &Path) -> Result<ColorImage> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.starts_with(b"\x89PNG") {
        decode_png(&bytes)
    } else if bytes.starts_with(b"P6") || bytes.starts_with(b"P5") {
        decode_ppm(&bytes)
    } else {
        Err(Error::Malformed {
            format: "color image",
            reason: format!("{}: neither PNG nor binary PPM", path.display()),
        })
    }
}

pub fn write_color(img: &ColorImage, path: &Path, format: ImageFormat) -> Result<()> {
    let bytes = match format {
        ImageFormat::Ppm => encode_ppm(img),
        ImageFormat::Png => encode_png(img, 8)?,
        ImageFormat::Png16 => encode_png(img, 16)?,
        ImageFormat::Pgm16 => {
            return Err(Error::FormatMismatch {
                format: "pgm16",
                kind: "color",
            })
        }
    };
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn encode_ppm(img: &ColorImage) -> Vec<u8> {
    let header = format!("P6\n{} {}\n255\n", img.width(), img.height());
    let q = img.quantized(8);
    let mut out = Vec::with_capacity(header.len() + 3 * q[0].len());
    out.extend_from_slice(header.as_bytes());
    for i in 0..q[0].len() {
        out.extend(q.iter().map(|p| p[i] as u8));
    }
    out
}

/// Decodes `P6` (or `P5`, replicated to gray) into a display-referred image.
pub fn decode_ppm(bytes: &[u8]) -> Result<ColorImage> {
    let pnm = decode_pnm(bytes)?;
    let max = f64::from(pnm.maxval);
    let n = pnm.height * pnm.width;
    let mut planes = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    for i in 0..n {
        for (c, plane) in planes.iter_mut().enumerate() {
            let s = pnm.samples[i * pnm.channels + c.min(pnm.channels - 1)];
            plane[i] = f64::from(s) / max;
        }
    }
    ColorImage::new(pnm.height, pnm.width, planes, ColorState::DisplayReferred)
}

pub fn encode_png(img: &ColorImage, bit_depth: u8) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(
            BufWriter::new(&mut out),
            img.width() as u32,
            img.height() as u32,
        );
        enc.set_color(png::ColorType::Rgb);
        let q = img.quantized(bit_depth);
        let n = q[0].len();
        let data = if bit_depth == 16 {
            enc.set_depth(png::BitDepth::Sixteen);
            let mut data = Vec::with_capacity(6 * n);
            for i in 0..n {
                for p in &q {
                    data.extend_from_slice(&(p[i] as u16).to_be_bytes());
                }
            }
            data
        } else {
            enc.set_depth(png::BitDepth::Eight);
            (0..n).flat_map(|i| q.iter().map(move |p| p[i] as u8)).collect()
        };
        let mut writer = enc.write_header()?;
        writer.write_image_data(&data)?;
    }
    Ok(out)
}

pub fn decode_png(bytes: &[u8]) -> Result<ColorImage> {
    let mut decoder = png::Decoder::new(bytes);
    decoder.set_transformations(png::Transformations::EXPAND);
    let mut reader = decoder.read_info()?;
    let mut buf = vec![0; reader.output_buffer_size()];
    let info = reader.next_frame(&mut buf)?;
    let (height, width) = (info.height as usize, info.width as usize);
    let channels = match info.color_type {
        png::ColorType::Grayscale => 1,
        png::ColorType::GrayscaleAlpha => 2,
        png::ColorType::Rgb => 3,
        png::ColorType::Rgba => 4,
        png::ColorType::Indexed => {
            return Err(Error::Malformed {
                format: "png",
                reason: "palette was not expanded".into(),
            })
        }
    };
    let sixteen = info.bit_depth == png::BitDepth::Sixteen;
    let max = if sixteen { 65535.0 } else { 255.0 };
    let sample = |k: usize| -> f64 {
        if sixteen {
            f64::from(u16::from_be_bytes([buf[2 * k], buf[2 * k + 1]])) / max
        } else {
            f64::from(buf[k]) / max
        }
    };
    let n = height * width;
    let mut planes = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    for i in 0..n {
        for (c, plane) in planes.iter_mut().enumerate() {
            // gray (+alpha) replicates the luma sample; alpha is dropped
            let src = if channels < 3 { 0 } else { c };
            plane[i] = sample(i * channels + src);
        }
    }
    ColorImage::new(height, width, planes, ColorState::DisplayReferred)
}

/// Writes the four packed planes stacked vertically in `[R, G1, G2, B]` order
/// as one `(4 H/2) x (W/2)` PGM, with `meta` as its sidecar.
pub fn write_packed(packed: &PackedBayer, meta: &SidecarMeta, path: &Path) -> Result<()> {
    let [_, hh, hw] = packed.shape();
    let header = format!("P5\n{} {}\n65535\n", hw, 4 * hh);
    let mut out = Vec::with_capacity(header.len() + 8 * hh * hw);
    out.extend_from_slice(header.as_bytes());
    for s in packed.channels().iter().flatten() {
        out.extend_from_slice(&s.to_be_bytes());
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))?;
    let side = sidecar_path(path);
    let mut text = serde_json::to_string_pretty(meta)?;
    text.push('\n');
    fs::write(&side, text).map_err(|e| Error::io(&side, e))
}

/// Inverse of [`write_packed`]; the sidecar is required.
pub fn read_packed(path: &Path) -> Result<(PackedBayer, SidecarMeta)> {
    let meta = read_sidecar(&sidecar_path(path))?;
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let pnm = decode_pnm(&bytes)?;
    if pnm.channels != 1 || pnm.height % 4 != 0 {
        return Err(Error::Malformed {
            format: "packed pgm",
            reason: format!("{}x{} graymap is not four stacked planes", pnm.height, pnm.width),
        });
    }
    let plane = pnm.samples.len() / 4;
    let channels = [0, 1, 2, 3].map(|k| pnm.samples[k * plane..(k + 1) * plane].iter().map(|&s| s as u16).collect());
    let packed = PackedBayer::new(pnm.height / 4, pnm.width, meta.bit_depth, channels)?;
    Ok((packed, meta))
}

struct Pnm {
    width: usize,
    height: usize,
    maxval: u32,
    channels: usize,
    samples: Vec<u32>,
}

fn decode_pnm(bytes: &[u8]) -> Result<Pnm> {
    let malformed = |reason: String| Error::Malformed {
        format: "pnm",
        reason,
    };
    let channels = match bytes.get(..2) {
        Some(b"P5") => 1,
        Some(b"P6") => 3,
        _ => return Err(malformed("missing P5/P6 magic".into())),
    };
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in &mut fields {
        // whitespace and comments between header tokens
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err(malformed("truncated header".into()));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| malformed("header field out of range".into()))?;
    }
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(malformed("no whitespace after maxval".into()));
    }
    pos += 1;
    let [width, height, maxval] = fields;
    if width == 0 || height == 0 {
        return Err(malformed("zero dimension".into()));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(malformed(format!("maxval {maxval} outside [1, 65535]")));
    }
    let bytes_per = if maxval < 256 { 1 } else { 2 };
    let count = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(channels))
        .ok_or_else(|| malformed("dimensions overflow".into()))?;
    let data = &bytes[pos..];
    if data.len() < count * bytes_per {
        return Err(malformed(format!(
            "expected {} data bytes, found {}",
            count * bytes_per,
            data.len()
        )));
    }
    let samples: Vec<u32> = if bytes_per == 1 {
        data[..count].iter().map(|&b| u32::from(b)).collect()
    } else {
        data[..2 * count]
            .chunks_exact(2)
            .map(|c| u32::from(u16::from_be_bytes([c[0], c[1]])))
            .collect()
    };
    let maxval = maxval as u32;
    if let Some(s) = samples.iter().find(|&&s| s > maxval) {
        return Err(malformed(format!("sample {s} exceeds maxval {maxval}")));
    }
    Ok(Pnm {
        width,
        height,
        maxval,
        channels,
        samples,
    })
}
