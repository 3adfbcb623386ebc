//! Seeded generators of random verification instances.

use rand::seq::SliceRandom;
use rand::Rng;

use super::demod::WeightTensor;
use super::density::{DiscreteDistribution, GriddedDensity, PiecewiseLinearMap};

/// Random distribution on `n` points; roughly a quarter of the points get
/// zero mass when `sparse` is set.
pub fn discrete<R: Rng>(rng: &mut R, n: usize, sparse: bool) -> DiscreteDistribution {
    loop {
        let weights: Vec<f64> = (0..n)
            .map(|_| if sparse && rng.gen_bool(0.25) { 0.0 } else { rng.gen::<f64>() })
            .collect();
        if let Ok(d) = DiscreteDistribution::from_weights(&weights) {
            return d;
        }
    }
}

pub fn permutation<R: Rng>(rng: &mut R, n: usize) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(rng);
    perm
}

/// Mixture of two Gaussian bumps on `[lo, hi]`, gridded with `cells` cells.
pub fn gridded<R: Rng>(rng: &mut R, lo: f64, hi: f64, cells: usize) -> GriddedDensity {
    let span = hi - lo;
    let bump = |rng: &mut R| (lo + span * rng.gen_range(0.2..0.8), span * rng.gen_range(0.05..0.3), rng.gen_range(0.2..1.0));
    let (m1, s1, w1) = bump(rng);
    let (m2, s2, w2) = bump(rng);
    GriddedDensity::from_fn(lo, hi, cells, |x| {
        w1 * (-0.5 * ((x - m1) / s1).powi(2)).exp() + w2 * (-0.5 * ((x - m2) / s2).powi(2)).exp() + 1e-3
    })
    .expect("bump mixture is positive")
}

/// Strictly increasing map on `[lo, hi]` with `segments` pieces, random
/// breakpoints and slopes in `[0.2, 5)`.
pub fn piecewise_linear<R: Rng>(rng: &mut R, lo: f64, hi: f64, segments: usize) -> PiecewiseLinearMap {
    let mut xs: Vec<f64> = (1..segments).map(|_| rng.gen_range(lo..hi)).collect();
    xs.push(lo);
    xs.push(hi);
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    let slopes: Vec<f64> = (1..xs.len()).map(|_| rng.gen_range(0.2..5.0)).collect();
    let y0 = rng.gen_range(-2.0..2.0);
    PiecewiseLinearMap::from_slopes(xs, y0, &slopes).expect("positive slopes")
}

/// Weight tensor with entries in `[-1, 1)`, scales in `[0.1, 3)` and the
/// given epsilon.
pub fn weight_tensor<R: Rng>(rng: &mut R, epsilon: f64) -> WeightTensor {
    let shape = [rng.gen_range(1..=6), rng.gen_range(1..=6), rng.gen_range(1..=3), rng.gen_range(1..=3)];
    let weights = (0..shape.iter().product::<usize>()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let scales = (0..shape[0]).map(|_| rng.gen_range(0.1..3.0)).collect();
    WeightTensor::new(shape, weights, scales, epsilon).expect("valid random tensor")
}
