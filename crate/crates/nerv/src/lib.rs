//! Implicit neural video representation and compression.
//!
//! A video is fitted by a small network that maps a normalized frame index to
//! a full RGB frame (an image-wise implicit representation). The fitted
//! weights *are* the video: compression is magnitude pruning, post-hoc affine
//! quantization and Huffman coding of the weight stream, and decoding is a
//! single feedforward pass per frame at any index, in any order.
//!
//! The crate is organized around that pipeline:
//!
//! - [`nerv`] — the frame-index network (positional encoding, MLP stem,
//!   conv + sub-pixel upscale blocks, bounded head).
//! - [`baselines`] — pixel-wise coordinate MLPs (sine and positional-encoding
//!   variants) used for speed/quality comparisons.
//! - [`training`] — loss, PSNR/SSIM/MS-SSIM metrics, LR schedule, Adam, the
//!   fitting loop, and checkpoints.
//! - [`compression`] — global magnitude pruning, per-tensor quantization,
//!   canonical Huffman coding, and bits-per-pixel accounting.
//! - [`bitstream`] — the `.nrv` container (bit-exact, little-endian).
//! - [`decoder`] — artifact loading, frame decoding, FPS benchmarking.
//! - [`tasks`] — denoising, temporal interpolation, ablation sweeps and
//!   rate-distortion reports.
//! - [`video`] / [`synth`] — frame I/O and deterministic synthetic clips.

pub mod baselines;
pub mod bitstream;
pub mod bytesio;
pub mod compression;
pub mod decoder;
pub mod error;
pub mod nerv;
pub mod synth;
pub mod tasks;
pub mod training;
pub mod video;

pub use error::{NervError, Result};
pub use nerv::{NervConfig, NervModel};
pub use video::VideoTensor;
