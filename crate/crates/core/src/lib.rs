//! RAW Bayer computational-imaging toolkit.
//!
//! The crate is split along the data flow of a dataset conversion job:
//!
//! - [`cfa`], [`image`] and [`codec`] hold the containers and their file formats.
//! - [`mosaic`] converts between color images and Bayer mosaics, packs mosaics
//!   into four half-resolution planes and resamples both kinds of image.
//! - [`isp`] composes typed stages into a forward (RAW to display) and a
//!   reverse (display to synthetic RAW) pipeline, and models a reversible camera.
//! - [`theory`] evaluates the value function of a GAN trained on transformed
//!   data on exact discrete and gridded distributions, plus the loss arithmetic
//!   used around it.
//! - [`metrics`] implements MSE, PSNR, MSSIM and the Fréchet distance.

pub mod cfa;
pub mod codec;
mod error;
pub mod image;
pub mod isp;
pub mod metrics;
pub mod mosaic;
pub mod theory;

pub use cfa::{CfaLayout, CfaPattern, Channel};
pub use error::{Error, Result};
pub use image::{BayerImage, ColorImage, ColorState, PackedBayer, SidecarMeta};
