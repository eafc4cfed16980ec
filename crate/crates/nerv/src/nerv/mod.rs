//! The frame-index network: positional encoding, MLP stem, stacked
//! conv + sub-pixel upscale blocks, and a bounded head.

pub mod config;
pub mod embed;
pub mod layers;
pub mod model;

pub use config::{derive_stem, Activation, EmbeddingKind, NervConfig, NormKind, UpscaleMode};
pub use embed::positional_encode;
pub use layers::{pixel_shuffle, pixel_unshuffle};
pub use model::{build_model, count_params, FrameIndex, GradSet, NervModel, ParamSet};
