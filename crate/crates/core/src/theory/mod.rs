//! Exact checks of the transformed-data GAN criterion.
//!
//! With the generator fixed, the optimal discriminator on transformed data is
//! `p_data / (p_data + p_g)` evaluated at the preimage, and the value function
//! at that discriminator is `-ln 4 + 2 JS(p_data || p_g)`. Because JS is
//! invariant under invertible differentiable maps, training on transformed
//! samples still drives `p_g` towards `p_data`. This module evaluates every
//! piece of that argument on finite distributions and 1-D gridded densities.

mod demod;
mod density;
mod jacobian;
mod loss;
pub mod sample;
mod suite;
mod value;

pub use demod::{weight_demodulate, WeightTensor};
pub use density::{
    js_divergence, pushforward, pushforward_many_to_one, verify_js_invariance, verify_js_invariance_many_to_one,
    Density, DiscreteDistribution, GriddedDensity, InvarianceReport, InvertibleMap, PiecewiseLinearMap,
    DISCRETE_INVARIANCE_TOL, GRIDDED_INVARIANCE_TOL,
};
pub use jacobian::{numerical_jacobian, MAX_JACOBIAN_INPUTS};
pub use loss::{
    decode_feature_file, encode_feature_file, feature_matching_loss, perceptual_loss, total_loss, FeatureTensor,
    DEFAULT_ALPHA, DEFAULT_LAMBDA,
};
pub use suite::{run_theory_suite, CheckResult};
pub use value::{gan_value, optimal_discriminator, virtual_criterion, D_CLAMP, LN_4};
