//! The evaluation harnesses behind the `eval-*` and `ablate` subcommands.

use std::path::Path;
use std::time::Instant;

use crate::bitstream;
use crate::compression::{bpp, compress_model, Quantization};
use crate::decoder;
use crate::error::{NervError, Result};
use crate::nerv::{build_model, EmbeddingKind, NervConfig, NervModel, NormKind, UpscaleMode};
use crate::tasks::filters::{filter_baseline, FILTER_KINDS};
use crate::tasks::noise::{add_noise, NoiseSpec};
use crate::tasks::EvalRecord;
use crate::training::{
    metrics, train_with_options, LossTerm, LossTerms, TrainConfig, TrainOptions,
};
use crate::video::VideoTensor;

/// Mean per-frame PSNR between two videos of equal shape.
pub fn video_psnr(a: &VideoTensor, b: &VideoTensor) -> Result<f64> {
    let t = a.frame_count();
    if t != b.frame_count() {
        return Err(NervError::shape("frame counts differ".to_string()));
    }
    let mut sum = 0.0;
    for i in 0..t {
        sum += metrics::psnr(&a.frame(i), &b.frame(i))?;
    }
    Ok(sum / t as f64)
}

/// Mean per-frame MS-SSIM between two videos.
pub fn video_ms_ssim(a: &VideoTensor, b: &VideoTensor) -> Result<f64> {
    let dims = a.dims();
    let levels = metrics::max_levels(dims.height, dims.width).max(1);
    let mut sum = 0.0;
    for i in 0..a.frame_count() {
        sum += metrics::ms_ssim_with_levels(&a.frame(i), &b.frame(i), levels)?;
    }
    Ok(sum / a.frame_count() as f64)
}

/// Reconstructs every frame of a fitted model as a video tensor.
pub fn reconstruct_video(model: &NervModel) -> Result<VideoTensor> {
    decoder::decode_video(model, 1)
}

#[derive(Debug, Clone)]
pub struct DenoiseReport {
    pub records: Vec<EvalRecord>,
    pub noisy_psnr: f64,
    pub nerv_psnr: f64,
    pub median_psnr: f64,
}

/// Trains on the corrupted video only (no masks, no noise locations) and
/// scores everything against the clean source: the noisy input itself, the
/// five classical filters, and the fitted model.
pub fn denoise_eval(
    clean: &VideoTensor,
    spec: &NoiseSpec,
    model_cfg: &NervConfig,
    train_cfg: &TrainConfig,
    filter_window: usize,
) -> Result<DenoiseReport> {
    let noisy = add_noise(clean, spec)?;
    let mut records = Vec::new();

    let noisy_psnr = video_psnr(&noisy, clean)?;
    let mut rec = EvalRecord::new("baseline_noisy");
    rec.psnr = Some(noisy_psnr);
    rec.ms_ssim = Some(video_ms_ssim(&noisy, clean)?);
    records.push(rec);

    let mut median_psnr = f64::NAN;
    for kind in FILTER_KINDS {
        let filtered = filter_baseline(&noisy, kind, filter_window)?;
        let p = video_psnr(&filtered, clean)?;
        if kind == crate::tasks::FilterKind::Median {
            median_psnr = p;
        }
        let mut rec = EvalRecord::new(format!("filter_{}", kind.label()));
        rec.psnr = Some(p);
        rec.ms_ssim = Some(video_ms_ssim(&filtered, clean)?);
        records.push(rec);
    }

    let model = build_model(model_cfg, train_cfg.seed)?;
    let start = Instant::now();
    let (model, _) = crate::training::train(model, &noisy, train_cfg)?;
    let encode_seconds = start.elapsed().as_secs_f64();
    let recon = reconstruct_video(&model)?;
    let nerv_psnr = video_psnr(&recon, clean)?;
    let mut rec = EvalRecord::new("nerv");
    rec.params = Some(model.count_params() as u64);
    rec.psnr = Some(nerv_psnr);
    rec.ms_ssim = Some(video_ms_ssim(&recon, clean)?);
    rec.encode_seconds = Some(encode_seconds);
    records.push(rec);

    Ok(DenoiseReport {
        records,
        noisy_psnr,
        nerv_psnr,
        median_psnr,
    })
}

#[derive(Debug, Clone)]
pub struct InterpReport {
    pub records: Vec<EvalRecord>,
    pub train_psnr: f64,
    pub holdout_psnr: f64,
}

/// Trains on frames `{0, stride, 2*stride, ...}` with timestamps normalized
/// over the full index range, then scores seen and held-out frames
/// separately.
pub fn interpolation_eval(
    video: &VideoTensor,
    stride: usize,
    model_cfg: &NervConfig,
    train_cfg: &TrainConfig,
) -> Result<InterpReport> {
    if stride < 2 {
        return Err(NervError::invalid_config("train stride must be >= 2"));
    }
    let t = video.frame_count();
    let train_frames: Vec<usize> = (0..t).step_by(stride).collect();
    if train_frames.len() < 2 {
        return Err(NervError::invalid_config(format!(
            "stride {stride} leaves {} training frames; need at least 2",
            train_frames.len()
        )));
    }
    let holdout: Vec<usize> = (0..t).filter(|i| i % stride != 0).collect();
    if holdout.is_empty() {
        return Err(NervError::invalid_config(
            "stride leaves no held-out frames",
        ));
    }

    let model = build_model(model_cfg, train_cfg.seed)?;
    let opts = TrainOptions {
        frame_subset: Some(&train_frames),
        ..TrainOptions::default()
    };
    let (model, _) = train_with_options(model, video, train_cfg, &opts)?;

    let mean_psnr = |idxs: &[usize]| -> Result<f64> {
        let mut sum = 0.0;
        for &i in idxs {
            let pred = model.frame(i)?;
            sum += metrics::psnr(&pred.view(), &video.frame(i))?;
        }
        Ok(sum / idxs.len() as f64)
    };
    let train_psnr = mean_psnr(&train_frames)?;
    let holdout_psnr = mean_psnr(&holdout)?;

    let mut rec_train = EvalRecord::new("train_frames");
    rec_train.psnr = Some(train_psnr);
    let mut rec_hold = EvalRecord::new("holdout_frames");
    rec_hold.psnr = Some(holdout_psnr);
    Ok(InterpReport {
        records: vec![rec_train, rec_hold],
        train_psnr,
        holdout_psnr,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AblationAxis {
    Embedding,
    Upscale,
    Norm,
    Activation,
    Loss,
}

impl AblationAxis {
    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "embedding" => Ok(Self::Embedding),
            "upscale" => Ok(Self::Upscale),
            "norm" => Ok(Self::Norm),
            "activation" => Ok(Self::Activation),
            "loss" => Ok(Self::Loss),
            other => Err(NervError::invalid_config(format!(
                "unknown ablation axis '{other}'"
            ))),
        }
    }
}

/// One training run per variant at a matched parameter budget (the block
/// width is re-fitted per variant so counts stay close to `budget_params`).
pub fn ablation_sweep(
    video: &VideoTensor,
    axis: AblationAxis,
    base_cfg: &NervConfig,
    train_cfg: &TrainConfig,
    budget_params: usize,
) -> Result<Vec<EvalRecord>> {
    let mut runs: Vec<(String, NervConfig, TrainConfig)> = Vec::new();
    match axis {
        AblationAxis::Embedding => {
            for (label, kind) in [
                ("embedding=none", EmbeddingKind::Identity),
                ("embedding=pe", EmbeddingKind::Positional),
            ] {
                let mut cfg = base_cfg.clone();
                cfg.embedding = kind;
                runs.push((label.to_string(), cfg, train_cfg.clone()));
            }
        }
        AblationAxis::Upscale => {
            for (label, mode) in [
                ("upscale=bilinear_conv", UpscaleMode::BilinearConv),
                ("upscale=transpose_conv", UpscaleMode::TransposeConv),
                ("upscale=pixelshuffle", UpscaleMode::PixelShuffle),
            ] {
                let mut cfg = base_cfg.clone();
                cfg.upscale_mode = mode;
                runs.push((label.to_string(), cfg, train_cfg.clone()));
            }
        }
        AblationAxis::Norm => {
            for (label, norm) in [
                ("norm=batch", NormKind::Batch),
                ("norm=instance", NormKind::Instance),
                ("norm=none", NormKind::None),
            ] {
                let mut cfg = base_cfg.clone();
                cfg.norm = norm;
                runs.push((label.to_string(), cfg, train_cfg.clone()));
            }
        }
        AblationAxis::Activation => {
            use crate::nerv::Activation;
            for (label, act) in [
                ("activation=relu", Activation::Relu),
                ("activation=leaky_relu", Activation::LeakyRelu),
                ("activation=swish", Activation::Swish),
                ("activation=gelu", Activation::Gelu),
            ] {
                let mut cfg = base_cfg.clone();
                cfg.activation = act;
                runs.push((label.to_string(), cfg, train_cfg.clone()));
            }
        }
        AblationAxis::Loss => {
            let combos: [(&str, &[LossTerm]); 6] = [
                ("loss=l2", &[LossTerm::L2]),
                ("loss=l1", &[LossTerm::L1]),
                ("loss=ssim", &[LossTerm::Ssim]),
                ("loss=l2+l1", &[LossTerm::L2, LossTerm::L1]),
                ("loss=l2+ssim", &[LossTerm::L2, LossTerm::Ssim]),
                ("loss=l1+ssim", &[LossTerm::L1, LossTerm::Ssim]),
            ];
            for (label, terms) in combos {
                let mut tc = train_cfg.clone();
                tc.loss_terms = LossTerms::new(terms)?;
                runs.push((label.to_string(), base_cfg.clone(), tc));
            }
        }
    }

    let mut records = Vec::with_capacity(runs.len());
    for (label, cfg, tc) in runs {
        let cfg = cfg.with_block_channels_near(budget_params);
        let model = build_model(&cfg, tc.seed)?;
        let n_params = model.count_params() as u64;
        let start = Instant::now();
        let (model, history) = crate::training::train(model, video, &tc)?;
        let encode_seconds = start.elapsed().as_secs_f64();
        let last = history.records.last().expect("at least one epoch");
        let _ = &model;
        let mut rec = EvalRecord::new(label);
        rec.params = Some(n_params);
        rec.psnr = Some(last.psnr);
        rec.ms_ssim = Some(last.ms_ssim);
        rec.encode_seconds = Some(encode_seconds);
        records.push(rec);
    }
    Ok(records)
}

/// Fit -> compress -> serialize at several model widths; each row reports
/// (bpp, psnr, ms-ssim, encode seconds, decode fps) of the decoded artifact.
/// Larger scales give strictly larger bitstreams.
#[allow(clippy::too_many_arguments)]
pub fn rd_report(
    video: &VideoTensor,
    base_cfg: &NervConfig,
    scales: &[f64],
    q: f64,
    quantization: Quantization,
    train_cfg: &TrainConfig,
    finetune_cfg: Option<&TrainConfig>,
    out_dir: Option<&Path>,
) -> Result<Vec<EvalRecord>> {
    if scales.is_empty() {
        return Err(NervError::invalid_config("need at least one model scale"));
    }
    let mut records = Vec::with_capacity(scales.len());
    for &scale in scales {
        let cfg = base_cfg.scaled(scale)?;
        let model = build_model(&cfg, train_cfg.seed)?;
        let n_params = model.count_params() as u64;
        let start = Instant::now();
        let (model, _) = crate::training::train(model, video, train_cfg)?;
        let finetune_ctx = finetune_cfg.map(|fc| (video, fc));
        let outcome = compress_model(model, q, quantization, finetune_ctx)?;
        let encode_seconds = start.elapsed().as_secs_f64();

        let bytes = bitstream::serialize(&outcome.artifact);
        let label = format!("scale_{scale}");
        if let Some(dir) = out_dir {
            std::fs::create_dir_all(dir)?;
            std::fs::write(dir.join(format!("{label}.nrv")), &bytes)?;
        }
        let decoded = decoder::load(&bytes)?;
        let recon = reconstruct_video(&decoded)?;
        let fps = decoder::benchmark_fps(&decoded, video.frame_count().min(4), decoder::Precision::Full)?;

        let mut rec = EvalRecord::new(label);
        rec.params = Some(n_params);
        rec.bpp = Some(bpp(bytes.len() as u64 * 8, video.dims()));
        rec.psnr = Some(video_psnr(&recon, video)?);
        rec.ms_ssim = Some(video_ms_ssim(&recon, video)?);
        rec.encode_seconds = Some(encode_seconds);
        rec.decode_fps = Some(fps);
        records.push(rec);
    }
    Ok(records)
}
