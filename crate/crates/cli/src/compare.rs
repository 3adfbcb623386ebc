//! Metric reports and verification suites.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use bayerforge::codec::{read_bayer, read_color, AnyImage};
use bayerforge::metrics::{
    decode_feature_vectors, frechet_distance, gaussian_stats, mse, mssim, psnr_from_mse, MetricReport, PairMetrics,
};
use bayerforge::theory::run_theory_suite;
use rayon::prelude::*;

use crate::batch::{discover, rel_string, COLOR_EXTENSIONS, RAW_EXTENSIONS};
use crate::exit::{CliError, ExitCodeExt, INPUT, NO_PAIRS, USAGE, VERIFY_FAILED};
use crate::{MetricKind, MetricsArgs, Suite, VerifyArgs};

/// Image files keyed by relative path without extension.
fn by_stem(root: &Path) -> Result<BTreeMap<String, PathBuf>, CliError> {
    let exts: Vec<&str> = COLOR_EXTENSIONS.iter().chain(RAW_EXTENSIONS).copied().collect();
    let mut map = BTreeMap::new();
    for rel in discover(root, &exts)? {
        let stem = rel_string(&rel.with_extension(""));
        if let Some(prev) = map.insert(stem.clone(), rel.clone()) {
            log::warn!("{}: {stem} matches both {} and {}", root.display(), prev.display(), rel.display());
        }
    }
    Ok(map)
}

fn read_any(path: &Path) -> anyhow::Result<AnyImage> {
    let is_raw = path
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("pgm"));
    Ok(if is_raw {
        AnyImage::Bayer(read_bayer(path, None)?)
    } else {
        AnyImage::Color(read_color(path)?)
    })
}

fn peak_bits(img: &AnyImage, requested: Option<u8>) -> u8 {
    match (requested, img) {
        (Some(b), _) => b,
        (None, AnyImage::Bayer(b)) => b.bit_depth(),
        (None, AnyImage::Color(_)) => 8,
    }
}

fn read_features(path: &Path) -> Result<Vec<Vec<f64>>, CliError> {
    let bytes = fs::read(path)
        .with_context(|| format!("reading {}", path.display()))
        .exit_with(INPUT)?;
    decode_feature_vectors(&bytes)
        .with_context(|| path.display().to_string())
        .exit_with(INPUT)
}

fn frechet_from_files(a: &Path, b: &Path) -> Result<f64, CliError> {
    let sa = gaussian_stats(&read_features(a)?).exit_with(INPUT)?;
    let sb = gaussian_stats(&read_features(b)?).exit_with(INPUT)?;
    frechet_distance(&sa, &sb).exit_with(INPUT)
}

pub fn metrics(args: &MetricsArgs) -> Result<(), CliError> {
    let want_mssim = args.metrics.contains(&MetricKind::Mssim);
    let frechet_paths = match (&args.frechet_stats, args.metrics.contains(&MetricKind::Frechet)) {
        (Some(p), _) => Some((p[0].clone(), p[1].clone())),
        (None, true) => return Err(CliError::new(USAGE, "--metrics frechet needs --frechet-stats A B")),
        (None, false) => None,
    };
    let reference = by_stem(&args.reference)?;
    let test = by_stem(&args.test)?;
    let mut unpaired: Vec<String> = Vec::new();
    for stem in reference.keys().filter(|k| !test.contains_key(*k)) {
        log::warn!("{stem}: only in --ref");
        unpaired.push(stem.clone());
    }
    for stem in test.keys().filter(|k| !reference.contains_key(*k)) {
        log::warn!("{stem}: only in --test");
        unpaired.push(stem.clone());
    }
    unpaired.sort();
    let names: Vec<&String> = reference.keys().filter(|k| test.contains_key(*k)).collect();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.jobs)
        .build()
        .exit_with(USAGE)?;
    let results: Vec<Option<(PairMetrics, u8)>> = pool.install(|| {
        names
            .par_iter()
            .map(|name| {
                let pair = || -> anyhow::Result<(PairMetrics, u8)> {
                    let a = read_any(&args.reference.join(&reference[*name]))?;
                    let b = read_any(&args.test.join(&test[*name]))?;
                    let bits = peak_bits(&a, args.bit_depth);
                    let m = mse(&a, &b, bits)?;
                    let s = if want_mssim { Some(mssim(&a, &b, bits)?) } else { None };
                    let metrics = PairMetrics {
                        name: (*name).clone(),
                        mse: m,
                        psnr: psnr_from_mse(m, bits),
                        mssim: s,
                    };
                    Ok((metrics, bits))
                };
                pair().map_err(|e| log::warn!("{name}: excluded: {e:#}")).ok()
            })
            .collect()
    });
    let pairs: Vec<(PairMetrics, u8)> = results.into_iter().flatten().collect();
    if pairs.is_empty() {
        return Err(CliError::new(NO_PAIRS, "no comparable image pairs"));
    }
    let bits = pairs[0].1;
    if pairs.iter().any(|(_, b)| *b != bits) {
        return Err(CliError::new(USAGE, "pairs differ in bit depth; pass --bit-depth"));
    }
    let frechet = match frechet_paths {
        Some((a, b)) => Some(frechet_from_files(&a, &b)?),
        None => None,
    };
    let mut report =
        MetricReport::from_pairs(pairs.into_iter().map(|(p, _)| p).collect(), bits, frechet).exit_with(INPUT)?;
    report.unpaired = unpaired;
    write_json(&args.report, &report)?;
    log::info!("{} pairs, AVE_PSNR {:.4} dB", report.pairs.len(), report.ave_psnr);
    Ok(())
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)
            .with_context(|| format!("creating {}", dir.display()))
            .exit_with(INPUT)?;
    }
    let mut text = serde_json::to_string_pretty(value).exit_with(INPUT)?;
    text.push('\n');
    fs::write(path, text)
        .with_context(|| format!("writing {}", path.display()))
        .exit_with(INPUT)
}

pub fn verify(args: &VerifyArgs) -> Result<(), CliError> {
    let checks = match args.suite {
        Suite::Theory => run_theory_suite(args.seed).exit_with(VERIFY_FAILED)?,
    };
    for c in &checks {
        let verdict = if c.pass { "PASS" } else { "FAIL" };
        let note = if c.expected_violation { " (expected violation)" } else { "" };
        println!("{verdict} {} value={:e} tol={:e}{note}", c.check, c.value, c.tolerance);
    }
    if let Some(path) = &args.report {
        write_json(path, &checks)?;
    }
    let failed = checks.iter().filter(|c| !c.pass).count();
    if failed > 0 {
        return Err(CliError::new(VERIFY_FAILED, format!("{failed} of {} checks failed", checks.len())));
    }
    Ok(())
}
