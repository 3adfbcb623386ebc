use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::cfa::{CfaLayout, Channel};
use crate::mosaic::{demosaic, mosaic};

const SIMPLE: &str = r#"{"stages":[{"type":"linearize","black":64,"white":4095},{"type":"denoise","method":"none"},{"type":"demosaic","alg":"hybrid"},{"type":"white_balance","mode":"gray_world"},{"type":"gamma","a":0.4545}]}"#;

fn rggb() -> CfaPattern {
    CfaPattern::new(CfaLayout::Rggb)
}

fn random_raw(rng: &mut ChaCha8Rng, h: usize, w: usize, lo: u16, hi: u16) -> BayerImage {
    // smooth field plus per-site jitter keeps the demosaic interesting
    let (fr, fc) = (rng.gen_range(0.05..0.3), rng.gen_range(0.05..0.3));
    let samples = (0..h * w)
        .map(|i| {
            let (r, c) = ((i / w) as f64, (i % w) as f64);
            let t = 0.5 + 0.35 * (fr * r).sin() * (fc * c).cos() + rng.gen_range(-0.1..0.1);
            (f64::from(lo) + t.clamp(0.0, 1.0) * f64::from(hi - lo)).round() as u16
        })
        .collect();
    BayerImage::new(h, w, 12, samples, rggb()).unwrap()
}

#[test]
fn simple_document_parses_to_five_stages() {
    let pipe = IspPipeline::from_json(SIMPLE).unwrap();
    let names: Vec<_> = pipe.stages().iter().map(IspStage::name).collect();
    assert_eq!(names, ["linearize", "denoise", "demosaic", "white_balance", "gamma"]);
}

#[test]
fn serialization_is_canonical() {
    let pipe = IspPipeline::from_json(SIMPLE).unwrap();
    let text = pipe.to_json();
    let again = IspPipeline::from_json(&text).unwrap();
    assert_eq!(again, pipe);
    assert_eq!(again.to_json(), text);
}

#[test]
fn schema_violations() {
    let two = r#"{"stages":[{"type":"demosaic","alg":"bilinear"},{"type":"demosaic","alg":"nearest"}]}"#;
    assert!(matches!(IspPipeline::from_json(two), Err(Error::Pipeline(_))));
    let unknown_tag = r#"{"stages":[{"type":"sharpen","amount":1}]}"#;
    assert!(IspPipeline::from_json(unknown_tag).is_err());
    let unknown_key = r#"{"stages":[{"type":"gamma","a":0.5,"b":1}]}"#;
    assert!(IspPipeline::from_json(unknown_key).is_err());
    let top_key = r#"{"stages":[],"extra":1}"#;
    assert!(IspPipeline::from_json(top_key).is_err());
    let bad_gamma = r#"{"stages":[{"type":"demosaic","alg":"bilinear"},{"type":"gamma","a":1.5}]}"#;
    assert!(IspPipeline::from_json(bad_gamma).is_err());
    let wrong_side = r#"{"stages":[{"type":"gamma","a":0.5},{"type":"demosaic","alg":"bilinear"}]}"#;
    assert!(IspPipeline::from_json(wrong_side).is_err());
    let noise_after = r#"{"stages":[{"type":"demosaic","alg":"bilinear"},{"type":"noise","sigma":1,"poisson_scale":0}]}"#;
    assert!(IspPipeline::from_json(noise_after).is_err());
    let gains_missing = r#"{"stages":[{"type":"demosaic","alg":"bilinear"},{"type":"white_balance","mode":"fixed"}]}"#;
    assert!(IspPipeline::from_json(gains_missing).is_err());
}

#[test]
fn fixed_seed_policy_round_trips() {
    let doc = r#"{"stages":[{"type":"noise","sigma":2.0,"poisson_scale":0.5,"seed_policy":{"fixed":9}},{"type":"demosaic","alg":"nearest"}]}"#;
    let pipe = IspPipeline::from_json(doc).unwrap();
    assert!(matches!(
        pipe.stages()[0],
        IspStage::Noise {
            seed_policy: SeedPolicy::Fixed(9),
            ..
        }
    ));
    assert_eq!(IspPipeline::from_json(&pipe.to_json()).unwrap(), pipe);
}

#[test]
fn forward_requires_demosaic() {
    let pipe = IspPipeline::new(vec![IspStage::Linearize { black: 0, white: 255 }]).unwrap();
    let raw = BayerImage::filled(2, 2, 8, 1, rggb()).unwrap();
    assert!(matches!(run_forward(&pipe, &raw, 0), Err(Error::Pipeline(_))));
}

#[test]
fn forward_constant_raw() {
    let pipe = IspPipeline::new(vec![
        IspStage::Linearize { black: 0, white: 4095 },
        IspStage::Demosaic {
            alg: DemosaicAlgorithm::Bilinear,
        },
    ])
    .unwrap();
    let raw = BayerImage::filled(6, 6, 12, 1234, rggb()).unwrap();
    let out = run_forward(&pipe, &raw, 0).unwrap();
    assert_eq!(out.image.state(), ColorState::DisplayReferred);
    assert!(out.image.planes().iter().flatten().all(|&v| v == 1234.0 / 4095.0));
    assert_eq!(out.clip.clipped_fraction(), 0.0);
}

#[test]
fn forward_gamma_half() {
    // linearizing 1000 against a 4000 white level gives exactly 0.25
    let pipe = IspPipeline::new(vec![
        IspStage::Linearize { black: 0, white: 4000 },
        IspStage::Demosaic {
            alg: DemosaicAlgorithm::Nearest,
        },
        IspStage::Gamma { a: 0.5 },
    ])
    .unwrap();
    let raw = BayerImage::filled(2, 2, 12, 1000, rggb()).unwrap();
    let out = run_forward(&pipe, &raw, 0).unwrap();
    assert!(out.image.planes().iter().flatten().all(|&v| v == 0.5));
}

#[test]
fn gray_world_is_resolved() {
    let pipe = IspPipeline::from_json(SIMPLE).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let raw = random_raw(&mut rng, 16, 16, 200, 3000);
    let run = run_forward(&pipe, &raw, 0).unwrap();
    let IspStage::WhiteBalance { mode, gains } = &run.resolved.stages()[3] else {
        panic!("white balance moved");
    };
    assert_eq!(*mode, WhiteBalanceMode::Fixed);
    assert_eq!(gains.unwrap()[1], 1.0);
}

#[test]
fn constant_gray_raw_keeps_unit_gains() {
    let pipe = IspPipeline::from_json(SIMPLE).unwrap();
    let raw = BayerImage::filled(8, 8, 12, 2000, rggb()).unwrap();
    let run = run_forward(&pipe, &raw, 0).unwrap();
    let IspStage::WhiteBalance { gains, .. } = &run.resolved.stages()[3] else {
        panic!()
    };
    assert_eq!(gains.unwrap(), [1.0; 3]);
    let v = run.image.pixel(3, 3);
    assert!(v[0] == v[1] && v[1] == v[2]);
}

#[test]
fn stage_order_matters() {
    let wb = IspStage::WhiteBalance {
        mode: WhiteBalanceMode::Fixed,
        gains: Some([1.6, 1.0, 0.7]),
    };
    let gamma = IspStage::Gamma { a: 0.4545 };
    let demosaic = IspStage::Demosaic {
        alg: DemosaicAlgorithm::Bilinear,
    };
    let a = IspPipeline::new(vec![demosaic.clone(), wb.clone(), gamma.clone()]).unwrap();
    let b = IspPipeline::new(vec![demosaic, gamma, wb]).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let raw = random_raw(&mut rng, 8, 8, 100, 2000);
    let xa = run_forward(&a, &raw, 0).unwrap().image;
    let xb = run_forward(&b, &raw, 0).unwrap().image;
    assert_ne!(xa, xb);
}

#[test]
fn invertible_stages_round_trip_per_pixel() {
    let stages = [
        IspStage::WhiteBalance {
            mode: WhiteBalanceMode::Fixed,
            gains: Some([1.9, 1.0, 0.6]),
        },
        IspStage::ColorMatrix {
            m: [[1.2, -0.1, -0.1], [-0.2, 1.3, -0.1], [0.0, -0.3, 1.3]],
        },
        IspStage::Gamma { a: 0.4545 },
        IspStage::ToneCurve {
            coeffs: [vec![0.0, 0.8, 0.2], vec![0.0, 1.0], vec![0.05, 0.7, 0.0, 0.25]],
        },
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for stage in &stages {
        for _ in 0..200 {
            let px = [rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)];
            let back = stage.inverse_pixel(stage.forward_pixel(px).unwrap()).unwrap();
            for k in 0..3 {
                assert!((back[k] - px[k]).abs() < 1e-9, "{} {px:?} -> {back:?}", stage.name());
            }
        }
    }
}

#[test]
fn reverse_rejects_non_invertible_stages() {
    let color = ColorImage::filled(4, 4, [0.5; 3], ColorState::DisplayReferred).unwrap();
    let target = ReverseTarget::new(12, rggb());
    let denoise = IspPipeline::new(vec![
        IspStage::Denoise {
            method: DenoiseMethod::BayerMedian3,
        },
        IspStage::Demosaic {
            alg: DemosaicAlgorithm::Bilinear,
        },
    ])
    .unwrap();
    assert!(matches!(run_reverse(&denoise, &color, &target), Err(Error::NonInvertible(_))));
    let singular = IspPipeline::new(vec![
        IspStage::Demosaic {
            alg: DemosaicAlgorithm::Bilinear,
        },
        IspStage::ColorMatrix {
            m: [[1.0, 1.0, 0.0], [1.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
        },
    ])
    .unwrap();
    assert!(matches!(run_reverse(&singular, &color, &target), Err(Error::SingularMatrix(_))));
    let bent = IspPipeline::new(vec![
        IspStage::Demosaic {
            alg: DemosaicAlgorithm::Bilinear,
        },
        IspStage::ToneCurve {
            coeffs: [vec![0.0, 2.0, -1.5], vec![0.0, 1.0], vec![0.0, 1.0]],
        },
    ])
    .unwrap();
    assert!(matches!(run_reverse(&bent, &color, &target), Err(Error::NonMonotone(_))));
}

#[test]
fn identity_camera_reverse_is_mosaic() {
    let pipe = IspPipeline::new(vec![
        IspStage::Demosaic {
            alg: DemosaicAlgorithm::Hybrid,
        },
        IspStage::WhiteBalance {
            mode: WhiteBalanceMode::Fixed,
            gains: Some([1.0; 3]),
        },
        IspStage::ColorMatrix { m: IDENTITY },
        IspStage::Gamma { a: 1.0 },
    ])
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let raw = random_raw(&mut rng, 10, 12, 0, 4095);
    let color = demosaic(&raw, DemosaicAlgorithm::Bilinear);
    let out = run_reverse(&pipe, &color, &ReverseTarget::new(12, rggb())).unwrap();
    assert_eq!(out.image, mosaic(&color, rggb(), 12).unwrap());
    assert_eq!(out.image, raw);
}

#[test]
fn reverse_then_forward_recovers_raw() {
    let pipe = IspPipeline::from_json(SIMPLE).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let raw = random_raw(&mut rng, 24, 24, 300, 3500)
        .with_levels(Some(64), Some(4095))
        .unwrap();
    let fwd = run_forward(&pipe, &raw, 0).unwrap();
    let back = run_reverse(&fwd.resolved, &fwd.image, &ReverseTarget::new(12, rggb())).unwrap();
    let close = raw
        .samples()
        .iter()
        .zip(back.image.samples())
        .filter(|(a, b)| (i32::from(**a) - i32::from(**b)).abs() <= 1)
        .count();
    assert!(close as f64 >= 0.99 * raw.samples().len() as f64);
    assert_eq!(back.image.black_level(), Some(64));
}

#[test]
fn supersaturated_color_does_not_invert() {
    let pipe = IspPipeline::new(vec![
        IspStage::Linearize { black: 0, white: 4095 },
        IspStage::Demosaic {
            alg: DemosaicAlgorithm::Nearest,
        },
        IspStage::WhiteBalance {
            mode: WhiteBalanceMode::Fixed,
            gains: Some([2.0, 1.0, 1.0]),
        },
    ])
    .unwrap();
    let raw = BayerImage::filled(4, 4, 12, 3000, rggb()).unwrap();
    let fwd = run_forward(&pipe, &raw, 0).unwrap();
    assert_eq!(fwd.clip.clipped_fraction(), 1.0);
    let back = run_reverse(&fwd.resolved, &fwd.image, &ReverseTarget::new(12, rggb())).unwrap();
    let red_site = back.image.get(0, 0);
    assert_ne!(red_site, 3000);
    assert_eq!(back.image.get(0, 1), 3000);
}

#[test]
fn noise_stage_is_seeded() {
    let pipe = IspPipeline::new(vec![
        IspStage::Linearize { black: 64, white: 4095 },
        IspStage::Noise {
            sigma: 2.0,
            poisson_scale: 0.3,
            seed_policy: SeedPolicy::Derived,
        },
        IspStage::Demosaic {
            alg: DemosaicAlgorithm::Bilinear,
        },
    ])
    .unwrap();
    let color = ColorImage::filled(8, 8, [0.4; 3], ColorState::DisplayReferred).unwrap();
    let mut t = ReverseTarget::new(12, rggb());
    t.seed = 17;
    let a = run_reverse(&pipe, &color, &t).unwrap().image;
    assert_eq!(a, run_reverse(&pipe, &color, &t).unwrap().image);
    t.seed = 18;
    assert_ne!(a, run_reverse(&pipe, &color, &t).unwrap().image);
}

#[test]
fn linear_resize_in_reverse() {
    let pipe = IspPipeline::new(vec![
        IspStage::Demosaic {
            alg: DemosaicAlgorithm::Bilinear,
        },
        IspStage::Gamma { a: 0.5 },
    ])
    .unwrap();
    let color = ColorImage::filled(8, 8, [0.5; 3], ColorState::DisplayReferred).unwrap();
    let mut t = ReverseTarget::new(8, rggb());
    t.linear_resize = Some((4, 6, ResizeFilter::Box));
    let out = run_reverse(&pipe, &color, &t).unwrap().image;
    assert_eq!((out.height(), out.width()), (4, 6));
    assert!(out.samples().iter().all(|&s| s == 64));
}

#[test]
fn denoise_removes_isolated_spike() {
    let pipe = IspPipeline::new(vec![
        IspStage::Denoise {
            method: DenoiseMethod::BayerMedian3,
        },
        IspStage::Demosaic {
            alg: DemosaicAlgorithm::Nearest,
        },
    ])
    .unwrap();
    let mut samples = vec![100u16; 64];
    samples[4 * 8 + 4] = 250;
    let raw = BayerImage::new(8, 8, 8, samples, rggb()).unwrap();
    let out = run_forward(&pipe, &raw, 0).unwrap();
    assert_eq!(out.image.plane(Channel::R)[4 * 8 + 4], 100.0 / 255.0);
}

#[test]
fn forward_resize_stage() {
    let pipe = IspPipeline::new(vec![
        IspStage::Demosaic {
            alg: DemosaicAlgorithm::Bilinear,
        },
        IspStage::Resize {
            out_h: 4,
            out_w: 4,
            filter: ResizeFilter::Bilinear,
        },
    ])
    .unwrap();
    let raw = BayerImage::filled(8, 8, 8, 51, rggb()).unwrap();
    let out = run_forward(&pipe, &raw, 0).unwrap();
    assert_eq!((out.image.height(), out.image.width()), (4, 4));
    assert_eq!(out.clip_mask.len(), 16);
}

#[test]
fn clip_report_json() {
    let report = ClipReport { clipped: 1, total: 4 };
    assert_eq!(serde_json::to_string(&report).unwrap(), r#"{"clipped_fraction":0.25}"#);
}
