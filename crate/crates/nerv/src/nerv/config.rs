//! Architecture configuration and the shape arithmetic derived from it.

use crate::error::{NervError, Result};

/// Frame-index timestamp embedding fed to the MLP stem.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmbeddingKind {
    /// Raw timestamp as a single input (the "no embedding" ablation arm).
    Identity,
    /// Sinusoidal positional encoding at geometric frequencies `b^k`.
    Positional,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    LeakyRelu,
    Swish,
    Gelu,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormKind {
    None,
    Batch,
    Instance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpscaleMode {
    /// Conv to `C*S^2` channels followed by sub-pixel rearrangement.
    PixelShuffle,
    /// Transposed convolution with kernel S and stride S.
    TransposeConv,
    /// Bilinear resize by S followed by a convolution.
    BilinearConv,
}

/// Everything needed to rebuild the network: parameter tensor shapes are a
/// pure function of this struct.
#[derive(Debug, Clone, PartialEq)]
pub struct NervConfig {
    /// Positional encoding frequency base.
    pub embed_base: f64,
    /// Number of sin/cos frequency pairs; the embedding is `2 * embed_length`
    /// wide.
    pub embed_length: usize,
    pub embedding: EmbeddingKind,
    /// Per-block spatial upscale factors; their product times the stem size
    /// must reach the target resolution exactly.
    pub upscale_factors: Vec<usize>,
    /// Channels of the reshaped MLP output (C1).
    pub stem_channels: usize,
    /// Channels after the first block (C2); later blocks halve.
    pub block_channels: usize,
    pub mlp_hidden: usize,
    /// Spatial size of the reshaped MLP output, `(h0, w0)`.
    pub stem_spatial: (usize, usize),
    pub activation: Activation,
    pub norm: NormKind,
    pub upscale_mode: UpscaleMode,
    /// Odd kernel size for block/head convolutions.
    pub conv_kernel: usize,
    /// Output resolution `(H, W)`.
    pub target_resolution: (usize, usize),
    /// Number of frames the model represents; frame index `i` maps to the
    /// timestamp `(i + 1) / frame_count`.
    pub frame_count: usize,
}

impl NervConfig {
    /// A config with recipe defaults (`b = 1.25`, `l = 80`, GELU, no norm,
    /// sub-pixel upscaling, 3x3 kernels). The stem spatial size is derived
    /// from the target resolution and upscale factors; non-integral stems are
    /// rejected.
    pub fn new(
        target_resolution: (usize, usize),
        frame_count: usize,
        upscale_factors: Vec<usize>,
    ) -> Result<Self> {
        let stem_spatial = derive_stem(target_resolution, &upscale_factors)?;
        Ok(Self {
            embed_base: 1.25,
            embed_length: 80,
            embedding: EmbeddingKind::Positional,
            upscale_factors,
            stem_channels: 48,
            block_channels: 384,
            mlp_hidden: 512,
            stem_spatial,
            activation: Activation::Gelu,
            norm: NormKind::None,
            upscale_mode: UpscaleMode::PixelShuffle,
            conv_kernel: 3,
            target_resolution,
            frame_count,
        })
    }

    /// The ~290k-parameter desk-scale config for 128x128 clips.
    pub fn desk(frame_count: usize) -> Self {
        let mut cfg = Self::new((128, 128), frame_count, vec![2, 2, 2, 2, 2])
            .expect("desk geometry is integral");
        cfg.mlp_hidden = 192;
        cfg.stem_channels = 42;
        cfg.block_channels = 48;
        cfg
    }

    /// Embedding width fed to the MLP.
    pub fn embed_dim(&self) -> usize {
        match self.embedding {
            EmbeddingKind::Identity => 1,
            EmbeddingKind::Positional => 2 * self.embed_length,
        }
    }

    /// Output channels of block `k` (0-based): `max(round(C2 / 2^k), 1)`.
    pub fn block_out_channels(&self, k: usize) -> usize {
        let c = self.block_channels as f64 / (1u64 << k) as f64;
        (c.round() as usize).max(1)
    }

    /// (in, out, scale) for every block in order.
    pub fn block_plan(&self) -> Vec<(usize, usize, usize)> {
        let mut plan = Vec::with_capacity(self.upscale_factors.len());
        let mut c_in = self.stem_channels;
        for (k, &s) in self.upscale_factors.iter().enumerate() {
            let c_out = self.block_out_channels(k);
            plan.push((c_in, c_out, s));
            c_in = c_out;
        }
        plan
    }

    /// Channels entering the head convolution.
    pub fn head_in_channels(&self) -> usize {
        self.block_plan().last().map(|&(_, c, _)| c).unwrap_or(self.stem_channels)
    }

    /// Total scalar parameter count implied by the config. Matches
    /// `count_params` on a built model exactly.
    pub fn param_count(&self) -> usize {
        let k2 = self.conv_kernel * self.conv_kernel;
        let stem_out = self.stem_channels * self.stem_spatial.0 * self.stem_spatial.1;
        let mut n = self.embed_dim() * self.mlp_hidden + self.mlp_hidden;
        n += self.mlp_hidden * stem_out + stem_out;
        for (c_in, c_out, s) in self.block_plan() {
            n += match self.upscale_mode {
                UpscaleMode::PixelShuffle => c_in * c_out * s * s * k2 + c_out * s * s,
                UpscaleMode::TransposeConv => c_in * c_out * s * s + c_out * s * s,
                UpscaleMode::BilinearConv => c_in * c_out * k2 + c_out,
            };
            if self.norm != NormKind::None {
                n += 2 * c_out;
            }
        }
        n += self.head_in_channels() * 3 * k2 + 3;
        n
    }

    /// Scales the channel widths (C1, C2, MLP hidden) by `f`, keeping the
    /// geometry; used by rate-distortion sweeps.
    pub fn scaled(&self, f: f64) -> Result<Self> {
        if !(f > 0.0) || !f.is_finite() {
            return Err(NervError::invalid_config(format!(
                "scale factor must be positive, got {f}"
            )));
        }
        let mut cfg = self.clone();
        cfg.stem_channels = ((self.stem_channels as f64 * f).round() as usize).max(1);
        cfg.block_channels = ((self.block_channels as f64 * f).round() as usize).max(1);
        cfg.mlp_hidden = ((self.mlp_hidden as f64 * f).round() as usize).max(1);
        Ok(cfg)
    }

    /// Re-fits the block width so the total parameter count lands as close
    /// as possible to `target`; used to match budgets across ablation arms.
    pub fn with_block_channels_near(&self, target: usize) -> Self {
        let mut best = self.clone();
        let mut best_err = usize::MAX;
        for c2 in 1..=4096usize {
            let mut cfg = self.clone();
            cfg.block_channels = c2;
            let n = cfg.param_count();
            let err = n.abs_diff(target);
            if err < best_err {
                best_err = err;
                best = cfg;
            }
            if n > 2 * target {
                break;
            }
        }
        best
    }

    pub fn validate(&self) -> Result<()> {
        if self.embed_length < 1 {
            return Err(NervError::invalid_config("embed_length must be >= 1"));
        }
        if !(self.embed_base > 0.0) || !self.embed_base.is_finite() {
            return Err(NervError::invalid_config("embed_base must be positive"));
        }
        if self.upscale_factors.is_empty() || self.upscale_factors.contains(&0) {
            return Err(NervError::invalid_config(
                "upscale_factors must be a non-empty list of positive integers",
            ));
        }
        if self.stem_channels == 0 || self.block_channels == 0 || self.mlp_hidden == 0 {
            return Err(NervError::invalid_config("channel widths must be positive"));
        }
        if self.conv_kernel == 0 || self.conv_kernel % 2 == 0 {
            return Err(NervError::invalid_config(format!(
                "conv_kernel must be odd and positive, got {}",
                self.conv_kernel
            )));
        }
        if self.frame_count == 0 {
            return Err(NervError::invalid_config("frame_count must be >= 1"));
        }
        let derived = derive_stem(self.target_resolution, &self.upscale_factors)?;
        if derived != self.stem_spatial {
            return Err(NervError::invalid_config(format!(
                "stem_spatial {:?} does not reach target {:?} through factors {:?} (expected {:?})",
                self.stem_spatial, self.target_resolution, self.upscale_factors, derived
            )));
        }
        Ok(())
    }
}

/// Stem spatial size `(H / prod(S), W / prod(S))`; rejects non-integral
/// geometry instead of guessing.
pub fn derive_stem(target: (usize, usize), factors: &[usize]) -> Result<(usize, usize)> {
    if factors.is_empty() || factors.contains(&0) {
        return Err(NervError::invalid_config(
            "upscale_factors must be a non-empty list of positive integers",
        ));
    }
    let prod: usize = factors.iter().product();
    let (h, w) = target;
    if h == 0 || w == 0 {
        return Err(NervError::invalid_config("target resolution must be positive"));
    }
    if h % prod != 0 || w % prod != 0 {
        return Err(NervError::invalid_config(format!(
            "target {h}x{w} is not divisible by the upscale product {prod}"
        )));
    }
    Ok((h / prod, w / prod))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stem_is_derived_and_non_integral_is_rejected() {
        assert_eq!(derive_stem((128, 128), &[2, 2, 2, 2, 2]).unwrap(), (4, 4));
        assert_eq!(derive_stem((720, 1280), &[5, 2, 2, 2, 2]).unwrap(), (9, 16));
        assert_eq!(
            derive_stem((1080, 1920), &[5, 3, 2, 2, 2]).unwrap(),
            (9, 16)
        );
        // 1080 / 80 = 13.5: no integral stem exists for this geometry.
        assert!(derive_stem((720, 1080), &[5, 2, 2, 2, 2]).is_err());
    }

    #[test]
    fn channel_schedule_halves_and_floors_at_one() {
        let mut cfg = NervConfig::new((128, 128), 4, vec![2, 2, 2, 2, 2]).unwrap();
        cfg.block_channels = 48;
        let outs: Vec<usize> = (0..5).map(|k| cfg.block_out_channels(k)).collect();
        assert_eq!(outs, vec![48, 24, 12, 6, 3]);
        cfg.block_channels = 3;
        let outs: Vec<usize> = (0..5).map(|k| cfg.block_out_channels(k)).collect();
        assert_eq!(outs, vec![3, 2, 1, 1, 1]);
    }

    #[test]
    fn rounding_is_half_away_from_zero() {
        let mut cfg = NervConfig::new((128, 128), 4, vec![2, 2]).unwrap();
        cfg.block_channels = 9; // 9 / 2 = 4.5 -> 5
        assert_eq!(cfg.block_out_channels(1), 5);
    }

    #[test]
    fn validation_catches_bad_kernel_and_embed() {
        let mut cfg = NervConfig::desk(4);
        cfg.conv_kernel = 4;
        assert!(cfg.validate().is_err());
        let mut cfg = NervConfig::desk(4);
        cfg.embed_length = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = NervConfig::desk(4);
        cfg.embed_base = -1.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn desk_config_is_about_300k_params() {
        let cfg = NervConfig::desk(16);
        let n = cfg.param_count();
        assert!(
            (270_000..=330_000).contains(&n),
            "desk config should be ~300k params, got {n}"
        );
    }
}
