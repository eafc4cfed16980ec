//! The weight-compression pipeline: prune, fine-tune, quantize, entropy-code,
//! plus bits-per-pixel accounting and the per-stage size breakdown.

pub mod huffman;
pub mod prune;
pub mod quant;

pub use huffman::{huffman_decode, huffman_encode, HuffmanCode};
pub use prune::{prune_global, PruneMask};
pub use quant::{dequantize_tensor, quantize_tensor, QuantizedTensor};

use crate::error::{NervError, Result};
use crate::nerv::{NervModel, ParamSet};
use crate::training::{train_with_options, TrainConfig, TrainHistory, TrainOptions};
use crate::video::{VideoDims, VideoTensor};

/// How tensor values enter the symbol stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quantization {
    /// Affine quantization to `2^bit` levels, `bit` in `[1, 16]`.
    Bits(u8),
    /// Raw IEEE f32 bits (two u16 symbols per value). Exact for parameters,
    /// which are stored at f32 precision.
    RawF32,
    /// Raw IEEE f64 bits (four u16 symbols per value). Always exact.
    RawF64,
}

impl Quantization {
    /// Fixed-width bits per original value under this mode.
    pub fn fixed_bits(&self) -> u32 {
        match self {
            Quantization::Bits(b) => *b as u32,
            Quantization::RawF32 => 32,
            Quantization::RawF64 => 64,
        }
    }

    pub(crate) fn tag(&self) -> u8 {
        match self {
            Quantization::Bits(b) => *b,
            Quantization::RawF32 => 32,
            Quantization::RawF64 => 64,
        }
    }

    pub(crate) fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            1..=16 => Ok(Quantization::Bits(tag)),
            32 => Ok(Quantization::RawF32),
            64 => Ok(Quantization::RawF64),
            other => Err(NervError::data(format!("invalid bit-width tag {other}"))),
        }
    }

    /// u16 symbols per original value.
    fn symbols_per_value(&self) -> usize {
        match self {
            Quantization::Bits(_) => 1,
            Quantization::RawF32 => 2,
            Quantization::RawF64 => 4,
        }
    }
}

/// Per-tensor metadata in the artifact. Buffers (normalization running
/// statistics) are recognized by their `.running_` name segment.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorRecord {
    pub name: String,
    pub shape: Vec<usize>,
    pub mode: Quantization,
    pub scale: f32,
    pub mu_min: f32,
    pub n_symbols: u64,
}

impl TensorRecord {
    pub fn element_count(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_buffer(&self) -> bool {
        self.name.contains(".running_")
    }
}

/// A compressed model: config, per-tensor quantization metadata, one
/// Huffman codebook over the concatenated symbol streams, and the packed
/// payload.
#[derive(Debug, Clone, PartialEq)]
pub struct CompressedArtifact {
    pub config: crate::nerv::NervConfig,
    pub tensors: Vec<TensorRecord>,
    pub codebook: HuffmanCode,
    pub payload: Vec<u8>,
    pub payload_bits: u64,
}

impl CompressedArtifact {
    pub fn video_dims(&self) -> VideoDims {
        VideoDims {
            frames: self.config.frame_count,
            height: self.config.target_resolution.0,
            width: self.config.target_resolution.1,
        }
    }

    pub fn total_symbols(&self) -> u64 {
        self.tensors.iter().map(|t| t.n_symbols).sum()
    }

    pub fn total_values(&self) -> usize {
        self.tensors.iter().map(|t| t.element_count()).sum()
    }

    /// Decodes the payload back into parameter and buffer sets. Exactly
    /// reproduces the dequantized values the encoder saw.
    pub fn decode_params(&self) -> Result<(ParamSet, ParamSet)> {
        let symbols = huffman_decode(
            &self.codebook,
            &self.payload,
            self.payload_bits,
            self.total_symbols() as usize,
        )?;
        let mut params = ParamSet::new();
        let mut buffers = ParamSet::new();
        let mut cursor = 0usize;
        for rec in &self.tensors {
            let n_sym = rec.n_symbols as usize;
            let expect = rec.element_count() * rec.mode.symbols_per_value();
            if n_sym != expect {
                return Err(NervError::data(format!(
                    "tensor {} declares {n_sym} symbols but its shape implies {expect}",
                    rec.name
                )));
            }
            let chunk = &symbols[cursor..cursor + n_sym];
            cursor += n_sym;
            let tensor = match rec.mode {
                Quantization::Bits(bit) => dequantize_tensor(&QuantizedTensor {
                    indices: chunk.to_vec(),
                    bit,
                    scale: rec.scale,
                    mu_min: rec.mu_min,
                    shape: rec.shape.clone(),
                })?,
                Quantization::RawF32 => {
                    let vals: Vec<f64> = chunk
                        .chunks_exact(2)
                        .map(|w| {
                            f32::from_bits((w[0] as u32) | ((w[1] as u32) << 16)) as f64
                        })
                        .collect();
                    ndarray::ArrayD::from_shape_vec(ndarray::IxDyn(&rec.shape), vals)
                        .map_err(|e| NervError::shape(e.to_string()))?
                }
                Quantization::RawF64 => {
                    let vals: Vec<f64> = chunk
                        .chunks_exact(4)
                        .map(|w| {
                            let bits = (w[0] as u64)
                                | ((w[1] as u64) << 16)
                                | ((w[2] as u64) << 32)
                                | ((w[3] as u64) << 48);
                            f64::from_bits(bits)
                        })
                        .collect();
                    ndarray::ArrayD::from_shape_vec(ndarray::IxDyn(&rec.shape), vals)
                        .map_err(|e| NervError::shape(e.to_string()))?
                }
            };
            if rec.is_buffer() {
                buffers.insert(rec.name.clone(), tensor);
            } else {
                params.insert(rec.name.clone(), tensor);
            }
        }
        Ok((params, buffers))
    }
}

/// Outcome of the full pipeline: the artifact plus the model state after
/// pruning/fine-tuning (useful for quality comparisons against the dense
/// model).
pub struct CompressOutcome {
    pub artifact: CompressedArtifact,
    pub model: NervModel,
    pub mask: Option<PruneMask>,
    pub finetune_history: Option<TrainHistory>,
}

/// Fine-tunes a pruned model with masked gradients so zeros stay zero.
pub fn finetune(
    model: NervModel,
    mask: &PruneMask,
    video: &VideoTensor,
    cfg: &TrainConfig,
) -> Result<(NervModel, TrainHistory)> {
    train_with_options(
        model,
        video,
        cfg,
        &TrainOptions {
            mask: Some(mask),
            ..TrainOptions::default()
        },
    )
}

/// Runs prune -> fine-tune -> quantize -> Huffman. With `q = 0` the prune and
/// fine-tune stages are skipped; with [`Quantization::RawF32`] the artifact
/// decodes bit-identically to the (f32-precision) input weights.
pub fn compress_model(
    mut model: NervModel,
    q: f64,
    quantization: Quantization,
    finetune_ctx: Option<(&VideoTensor, &TrainConfig)>,
) -> Result<CompressOutcome> {
    let mut mask = None;
    let mut finetune_history = None;
    if q > 0.0 {
        let m = prune_global(&mut model, q)?;
        if let Some((video, cfg)) = finetune_ctx {
            let (tuned, hist) = finetune(model, &m, video, cfg)?;
            model = tuned;
            finetune_history = Some(hist);
        }
        mask = Some(m);
    }

    let mut records = Vec::new();
    let mut symbols: Vec<u16> = Vec::new();
    let tensors = model
        .params
        .iter()
        .chain(model.buffers.iter());
    for (name, tensor) in tensors {
        let start = symbols.len();
        let (scale, mu_min) = match quantization {
            Quantization::Bits(bit) => {
                let qt = quantize_tensor(tensor, bit)?;
                symbols.extend_from_slice(&qt.indices);
                (qt.scale, qt.mu_min)
            }
            Quantization::RawF32 => {
                for &v in tensor.iter() {
                    let bits = (v as f32).to_bits();
                    symbols.push(bits as u16);
                    symbols.push((bits >> 16) as u16);
                }
                (0.0, 0.0)
            }
            Quantization::RawF64 => {
                for &v in tensor.iter() {
                    let bits = v.to_bits();
                    symbols.push(bits as u16);
                    symbols.push((bits >> 16) as u16);
                    symbols.push((bits >> 32) as u16);
                    symbols.push((bits >> 48) as u16);
                }
                (0.0, 0.0)
            }
        };
        records.push(TensorRecord {
            name: name.clone(),
            shape: tensor.shape().to_vec(),
            mode: quantization,
            scale,
            mu_min,
            n_symbols: (symbols.len() - start) as u64,
        });
    }

    let (codebook, payload, payload_bits) = huffman_encode(&symbols)?;
    Ok(CompressOutcome {
        artifact: CompressedArtifact {
            config: model.config.clone(),
            tensors: records,
            codebook,
            payload,
            payload_bits,
        },
        model,
        mask,
        finetune_history,
    })
}

/// Bits-per-pixel: compressed bits over `T * H * W`.
pub fn bpp(artifact_bits: u64, dims: VideoDims) -> f64 {
    artifact_bits as f64 / dims.pixels() as f64
}

#[derive(Debug, Clone)]
pub struct StageRow {
    pub stage: String,
    pub bytes: u64,
    pub bpp: f64,
}

/// Per-stage size breakdown. The `header`, `codebook` and `huffman_payload`
/// rows sum exactly to `file_total`.
#[derive(Debug, Clone)]
pub struct StageReport {
    pub rows: Vec<StageRow>,
}

impl StageReport {
    pub fn for_artifact(artifact: &CompressedArtifact) -> Result<Self> {
        let dims = artifact.video_dims();
        let layout = crate::bitstream::serialized_layout(artifact)?;
        let n_values = artifact.total_values() as u64;
        let fixed_bits: u64 = artifact
            .tensors
            .iter()
            .map(|t| t.element_count() as u64 * t.mode.fixed_bits() as u64)
            .sum();
        let row = |stage: &str, bytes: u64| StageRow {
            stage: stage.to_string(),
            bytes,
            bpp: bpp(bytes * 8, dims),
        };
        Ok(Self {
            rows: vec![
                row("raw_fp32", n_values * 4),
                row("quantized_fixed_width", fixed_bits.div_ceil(8)),
                row("huffman_payload", layout.payload_bytes),
                row("header", layout.header_bytes),
                row("codebook", layout.codebook_bytes),
                row(
                    "file_total",
                    layout.header_bytes + layout.codebook_bytes + layout.payload_bytes,
                ),
            ],
        })
    }

    pub fn get(&self, stage: &str) -> Option<&StageRow> {
        self.rows.iter().find(|r| r.stage == stage)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("stage,bytes,bpp\n");
        for r in &self.rows {
            out.push_str(&format!("{},{},{}\n", r.stage, r.bytes, r.bpp));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nerv::{build_model, NervConfig};

    fn tiny_model() -> NervModel {
        let mut cfg = NervConfig::new((8, 8), 2, vec![2, 2]).unwrap();
        cfg.embed_length = 4;
        cfg.mlp_hidden = 6;
        cfg.stem_channels = 3;
        cfg.block_channels = 4;
        build_model(&cfg, 17).unwrap()
    }

    #[test]
    fn raw_f32_bypass_is_bit_identical() {
        let model = tiny_model();
        let out = compress_model(model.clone(), 0.0, Quantization::RawF32, None).unwrap();
        let (params, buffers) = out.artifact.decode_params().unwrap();
        assert_eq!(params, model.params);
        assert_eq!(buffers, model.buffers);
    }

    #[test]
    fn raw_f64_bypass_is_bit_identical_even_for_unsnapped_values() {
        let mut model = tiny_model();
        model
            .params
            .get_mut("mlp.0.bias")
            .unwrap()
            .mapv_inplace(|v| v + 1.0 / 3.0);
        let out = compress_model(model.clone(), 0.0, Quantization::RawF64, None).unwrap();
        let (params, _) = out.artifact.decode_params().unwrap();
        assert_eq!(params, model.params);
    }

    #[test]
    fn quantized_roundtrip_matches_dequantize_exactly() {
        let model = tiny_model();
        let out = compress_model(model.clone(), 0.0, Quantization::Bits(8), None).unwrap();
        let (params, _) = out.artifact.decode_params().unwrap();
        for (name, original) in model.params.iter() {
            let qt = quantize_tensor(original, 8).unwrap();
            let expect = dequantize_tensor(&qt).unwrap();
            assert_eq!(params.get(name).unwrap(), &expect, "{name}");
        }
    }

    #[test]
    fn stage_sizes_decrease_through_the_pipeline() {
        let mut model = tiny_model();
        prune_global(&mut model, 0.3).unwrap();
        let out = compress_model(model, 0.0, Quantization::Bits(8), None).unwrap();
        let report = StageReport::for_artifact(&out.artifact).unwrap();
        let raw = report.get("raw_fp32").unwrap().bytes;
        let fixed = report.get("quantized_fixed_width").unwrap().bytes;
        let huff = report.get("huffman_payload").unwrap().bytes;
        assert!(raw > fixed, "raw {raw} should exceed fixed {fixed}");
        assert!(fixed > huff, "fixed {fixed} should exceed huffman {huff}");
        let total = report.get("file_total").unwrap().bytes;
        let header = report.get("header").unwrap().bytes;
        let codebook = report.get("codebook").unwrap().bytes;
        assert_eq!(header + codebook + huff, total);
    }

    #[test]
    fn bpp_arithmetic() {
        let dims = VideoDims {
            frames: 132,
            height: 720,
            width: 1080,
        };
        assert_eq!(bpp(0, dims), 0.0);
        let one_mib_bits = 8 * (1u64 << 20);
        let expect = one_mib_bits as f64 / (132.0 * 720.0 * 1080.0);
        assert!((bpp(one_mib_bits, dims) - expect).abs() < 1e-15);
        assert!((bpp(one_mib_bits, dims) - 0.0817).abs() < 5e-4);
    }
}
