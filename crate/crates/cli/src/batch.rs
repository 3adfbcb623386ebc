//! Directory conversion jobs: discovery, per-file seeds, the worker pool and
//! the manifest.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use bayerforge::codec::{read_bayer, read_color, write_bayer, write_color, ImageFormat};
use bayerforge::isp::{run_forward, run_reverse, IspPipeline, IspStage, ReverseTarget, SeedPolicy};
use bayerforge::mosaic::resize_color;
use bayerforge::CfaPattern;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use walkdir::WalkDir;

use crate::exit::{CliError, ExitCodeExt, INPUT, PIPELINE, USAGE};
use crate::{ColorFormat, DevelopArgs, ResizeOrder, ToRawArgs};

pub const MANIFEST: &str = "manifest.json";
pub const COLOR_EXTENSIONS: &[&str] = &["png", "ppm"];
pub const RAW_EXTENSIONS: &[&str] = &["pgm"];

/// `SHA-256(seed as little-endian u64 || relative path)`, first 8 bytes.
pub fn file_seed(global: u64, rel: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(global.to_le_bytes());
    h.update(rel.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

/// Relative path with `/` separators, independent of the platform.
pub fn rel_string(rel: &Path) -> String {
    rel.components()
        .map(|c| c.as_os_str().to_string_lossy())
        .collect::<Vec<_>>()
        .join("/")
}

fn has_extension(path: &Path, exts: &[&str]) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| exts.iter().any(|x| x.eq_ignore_ascii_case(e)))
}

/// Files under `root` with one of `exts`, relative to `root`, sorted.
pub fn discover(root: &Path, exts: &[&str]) -> Result<Vec<PathBuf>, CliError> {
    if !root.is_dir() {
        return Err(CliError::new(INPUT, format!("{} is not a readable directory", root.display())));
    }
    let mut files = Vec::new();
    for entry in WalkDir::new(root).sort_by_file_name() {
        let entry = entry.with_context(|| format!("walking {}", root.display())).exit_with(INPUT)?;
        if entry.file_type().is_file() && has_extension(entry.path(), exts) {
            let rel = entry.path().strip_prefix(root).expect("walkdir stays under root");
            files.push(rel.to_path_buf());
        }
    }
    files.sort();
    Ok(files)
}

#[derive(Debug, Serialize)]
pub struct FileEntry {
    #[serde(rename = "in")]
    pub input: String,
    pub out: String,
    pub status: &'static str,
    pub clipped_fraction: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    tool_version: &'static str,
    params: Value,
    files: &'a [FileEntry],
}

fn load_pipeline(path: &Path) -> Result<IspPipeline, CliError> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))
        .exit_with(INPUT)?;
    IspPipeline::from_json(&text).exit_with(PIPELINE)
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool, CliError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .exit_with(USAGE)
}

/// Runs `work` on every file in order-preserving parallel fashion. `work`
/// returns the clipped fraction.
fn run_batch(
    input: &Path,
    output: &Path,
    files: &[PathBuf],
    out_ext: &str,
    jobs: usize,
    work: impl Fn(&Path, &Path, &str) -> anyhow::Result<f64> + Sync,
) -> Result<Vec<FileEntry>, CliError> {
    fs::create_dir_all(output)
        .with_context(|| format!("creating {}", output.display()))
        .exit_with(INPUT)?;
    let entries = pool(jobs)?.install(|| {
        files
            .par_iter()
            .map(|rel| {
                let rel_in = rel_string(rel);
                let rel_out = rel.with_extension(out_ext);
                let dst = output.join(&rel_out);
                let result = dst
                    .parent()
                    .map_or(Ok(()), fs::create_dir_all)
                    .map_err(anyhow::Error::from)
                    .and_then(|()| work(&input.join(rel), &dst, &rel_in));
                match result {
                    Ok(clipped) => FileEntry {
                        input: rel_in,
                        out: rel_string(&rel_out),
                        status: "ok",
                        clipped_fraction: Some(clipped),
                        error: None,
                    },
                    Err(e) => {
                        log::warn!("{rel_in}: {e:#}");
                        FileEntry {
                            input: rel_in,
                            out: rel_string(&rel_out),
                            status: "error",
                            clipped_fraction: None,
                            error: Some(format!("{e:#}")),
                        }
                    }
                }
            })
            .collect::<Vec<_>>()
    });
    let failed = entries.iter().filter(|e| e.status != "ok").count();
    log::info!("{} files, {} failed", entries.len(), failed);
    Ok(entries)
}

fn write_manifest(output: &Path, params: Value, files: &[FileEntry]) -> Result<(), CliError> {
    let manifest = Manifest {
        tool_version: env!("CARGO_PKG_VERSION"),
        params,
        files,
    };
    let mut text = serde_json::to_string_pretty(&manifest).exit_with(INPUT)?;
    text.push('\n');
    let path = output.join(MANIFEST);
    fs::write(&path, text)
        .with_context(|| format!("writing {}", path.display()))
        .exit_with(INPUT)
}

fn pipeline_value(pipe: &IspPipeline) -> Value {
    serde_json::from_str(&pipe.to_json()).expect("canonical pipeline JSON")
}

pub fn to_raw(args: &ToRawArgs) -> Result<(), CliError> {
    if let Some((h, w)) = args.size {
        if h < 2 || w < 2 || h % 2 != 0 || w % 2 != 0 {
            return Err(CliError::new(USAGE, format!("--size {h}x{w} must be even and at least 2x2")));
        }
    }
    let base = load_pipeline(&args.config)?;
    base.check_reversible().exit_with(PIPELINE)?;
    // noise goes first so that the reverse walk applies it last, in DN
    let pipe = match args.noise {
        Some((sigma, poisson_scale)) => {
            let mut stages = vec![IspStage::Noise {
                sigma,
                poisson_scale,
                seed_policy: SeedPolicy::Derived,
            }];
            stages.extend_from_slice(base.stages());
            IspPipeline::new(stages).exit_with(PIPELINE)?
        }
        None => base,
    };
    let files = discover(&args.input, COLOR_EXTENSIONS)?;
    let pattern = CfaPattern::new(args.pattern);
    let entries = run_batch(&args.input, &args.out, &files, "pgm", args.jobs, |src, dst, rel| {
        let mut color = read_color(src)?;
        let mut target = ReverseTarget::new(args.bit_depth, pattern);
        target.seed = file_seed(args.seed, rel);
        if let Some((h, w)) = args.size {
            match args.resize_order {
                ResizeOrder::Before => color = resize_color(&color, h, w, args.resize_filter)?,
                ResizeOrder::After => target.linear_resize = Some((h, w, args.resize_filter)),
            }
        }
        let run = run_reverse(&pipe, &color, &target)?;
        write_bayer(&run.image, dst, Some(&format!("to-raw {rel}")))?;
        Ok(run.clip.clipped_fraction())
    })?;
    let params = json!({
        "command": "to-raw",
        "pipeline": pipeline_value(&pipe),
        "pattern": args.pattern,
        "bit_depth": args.bit_depth,
        "size": args.size.map(|(h, w)| format!("{h}x{w}")),
        "resize_order": format!("{:?}", args.resize_order).to_lowercase(),
        "resize_filter": args.resize_filter,
        "noise": args.noise.map(|(s, p)| json!({"sigma": s, "poisson_scale": p})),
        "seed": args.seed,
    });
    write_manifest(&args.out, params, &entries)
}

pub fn develop(args: &DevelopArgs) -> Result<(), CliError> {
    let pipe = load_pipeline(&args.config)?;
    if !pipe.stages().iter().any(|s| matches!(s, IspStage::Demosaic { .. })) {
        return Err(CliError::new(PIPELINE, "develop needs a pipeline with a demosaic stage"));
    }
    let (format, ext) = match args.format {
        ColorFormat::Ppm => (ImageFormat::Ppm, "ppm"),
        ColorFormat::Png => (ImageFormat::Png, "png"),
        ColorFormat::Png16 => (ImageFormat::Png16, "png"),
    };
    let files = discover(&args.input, RAW_EXTENSIONS)?;
    let entries = run_batch(&args.input, &args.out, &files, ext, args.jobs, |src, dst, rel| {
        let raw = read_bayer(src, None)?;
        let run = run_forward(&pipe, &raw, file_seed(args.seed, rel))?;
        write_color(&run.image, dst, format)?;
        Ok(run.clip.clipped_fraction())
    })?;
    let params = json!({
        "command": "develop",
        "pipeline": pipeline_value(&pipe),
        "format": format.name(),
        "seed": args.seed,
    });
    write_manifest(&args.out, params, &entries)
}
