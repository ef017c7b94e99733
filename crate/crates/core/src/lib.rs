//! JPEG artifact removal conditioned on quantization tables.
//!
//! The crate bundles everything the pipeline needs: quantization-table
//! math and a marker-level JPEG parser, a deterministic blockwise
//! DCT-quantization degradation simulator, full-reference quality
//! metrics (PSNR / SSIM / PSNR-B / IPSNR), a small reverse-mode autodiff
//! engine, the two-branch restoration network, and a desk-scale
//! training and evaluation harness. The `qgcn` binary exposes all of it
//! on the command line.

pub mod error;
pub mod image;
pub mod jpeg;
pub mod metrics;
pub mod model;
pub mod synth;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
