#![allow(dead_code)]

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use bayerforge::codec::{write_color, ImageFormat};
use bayerforge::{ColorImage, ColorState};
use rand::Rng;
use sha2::{Digest, Sha256};
use walkdir::WalkDir;

pub fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bayerforge"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("spawn bayerforge")
}

pub fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

pub fn p(path: &Path) -> &str {
    path.to_str().expect("utf-8 temp path")
}

/// SHA-256 over every file's relative path and contents, in sorted order.
pub fn tree_hash(root: &Path) -> String {
    let mut h = Sha256::new();
    for entry in WalkDir::new(root).sort_by_file_name() {
        let entry = entry.unwrap();
        if entry.file_type().is_file() {
            let rel = entry.path().strip_prefix(root).unwrap();
            h.update(rel.to_string_lossy().as_bytes());
            h.update([0]);
            h.update(fs::read(entry.path()).unwrap());
        }
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Smooth color gradients with mild texture, in `[0.05, 0.95]`.
pub fn color_image<R: Rng>(rng: &mut R, h: usize, w: usize) -> ColorImage {
    let phase: [f64; 3] = [rng.gen(), rng.gen(), rng.gen()];
    let planes = [0, 1, 2].map(|k| {
        (0..h * w)
            .map(|i| {
                let (r, c) = ((i / w) as f64 / h as f64, (i % w) as f64 / w as f64);
                let base = 0.5 + 0.3 * ((r * 3.0 + phase[k] * 6.0).sin() * (c * 2.0 + phase[k]).cos());
                (base + rng.gen_range(-0.1..0.1)).clamp(0.05, 0.95)
            })
            .collect()
    });
    ColorImage::new(h, w, planes, ColorState::DisplayReferred).unwrap()
}

pub fn write_png(img: &ColorImage, path: &Path) {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).unwrap();
    }
    write_color(img, path, ImageFormat::Png).unwrap();
}

pub fn write_text(path: &Path, text: &str) {
    fs::write(path, text).unwrap();
}

pub fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}
