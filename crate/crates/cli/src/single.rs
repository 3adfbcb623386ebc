//! Single-file wrappers around the mosaic operators.

use std::path::Path;

use anyhow::Context;
use bayerforge::codec::{read_bayer, read_color, read_packed, write_bayer, write_color, write_packed, ImageFormat};
use bayerforge::{mosaic as ops, CfaPattern};

use crate::exit::{CliError, ExitCodeExt, INPUT, PIPELINE};
use crate::{ColorFormat, DemosaicArgs, IoArgs, MosaicArgs};

fn described<T>(r: bayerforge::Result<T>, path: &Path) -> Result<T, CliError> {
    r.with_context(|| path.display().to_string()).exit_with(INPUT)
}

pub fn mosaic(args: &MosaicArgs) -> Result<(), CliError> {
    let color = described(read_color(&args.io.input), &args.io.input)?;
    let raw = ops::mosaic(&color, CfaPattern::new(args.pattern), args.bit_depth).exit_with(PIPELINE)?;
    described(write_bayer(&raw, &args.io.out, Some("mosaic")), &args.io.out)
}

pub fn demosaic(args: &DemosaicArgs) -> Result<(), CliError> {
    let raw = described(read_bayer(&args.io.input, None), &args.io.input)?;
    let is_ppm = args
        .io
        .out
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("ppm"));
    let format = match args.format {
        Some(ColorFormat::Ppm) => ImageFormat::Ppm,
        Some(ColorFormat::Png) => ImageFormat::Png,
        Some(ColorFormat::Png16) => ImageFormat::Png16,
        None if is_ppm => ImageFormat::Ppm,
        None => ImageFormat::Png16,
    };
    let color = ops::demosaic(&raw, args.alg);
    described(write_color(&color, &args.io.out, format), &args.io.out)
}

pub fn pack(args: &IoArgs) -> Result<(), CliError> {
    let raw = described(read_bayer(&args.input, None), &args.input)?;
    described(write_packed(&ops::pack(&raw), &raw.meta(), &args.out), &args.out)
}

pub fn unpack(args: &IoArgs) -> Result<(), CliError> {
    let (packed, meta) = described(read_packed(&args.input), &args.input)?;
    let raw = ops::unpack(&packed, CfaPattern::new(meta.pattern))
        .with_levels(meta.black_level, meta.white_level)
        .exit_with(PIPELINE)?;
    described(write_bayer(&raw, &args.out, meta.provenance.as_deref()), &args.out)
}
