//! Fitting a model to a video: configuration, the optimization loop,
//! per-epoch history, and checkpoint files.

pub mod adam;
pub mod loss;
pub mod metrics;
pub mod schedule;

use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::bytesio::{ByteReader, ByteWriter};
use crate::compression::prune::PruneMask;
use crate::error::{NervError, Result};
use crate::nerv::{GradSet, NervModel, ParamSet};
use crate::video::VideoTensor;

pub use adam::Adam;
pub use loss::{loss, loss_with_grad, LossTerm, LossTerms};
pub use metrics::{ms_ssim, psnr, ssim, ssim_with_grad};
pub use schedule::lr_at;

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub epochs: usize,
    pub warmup_epochs: usize,
    pub base_lr: f64,
    /// Frames per optimization step.
    pub batch_size: usize,
    /// Weight of the first loss term (see [`LossTerms::weights`]).
    pub loss_alpha: f64,
    pub loss_terms: LossTerms,
    pub seed: u64,
    /// Checkpoint period in epochs; 0 disables periodic checkpoints.
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 150,
            warmup_epochs: 30,
            base_lr: 5e-4,
            batch_size: 1,
            loss_alpha: 0.7,
            loss_terms: LossTerms::l1_ssim(),
            seed: 1,
            checkpoint_every: 0,
        }
    }
}

impl TrainConfig {
    /// The post-pruning recovery recipe: 50 epochs, short warmup.
    pub fn finetune_defaults(seed: u64) -> Self {
        Self {
            epochs: 50,
            warmup_epochs: 5,
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(NervError::invalid_config("epochs must be >= 1"));
        }
        if self.warmup_epochs > self.epochs {
            return Err(NervError::invalid_config(format!(
                "warmup_epochs {} exceeds epochs {}",
                self.warmup_epochs, self.epochs
            )));
        }
        if self.batch_size == 0 {
            return Err(NervError::invalid_config("batch_size must be >= 1"));
        }
        if !(0.0..=1.0).contains(&self.loss_alpha) {
            return Err(NervError::invalid_config(format!(
                "loss_alpha {} outside [0, 1]",
                self.loss_alpha
            )));
        }
        if !(self.base_lr > 0.0) {
            return Err(NervError::invalid_config("base_lr must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub psnr: f64,
    pub ms_ssim: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainHistory {
    pub records: Vec<EpochRecord>,
}

impl TrainHistory {
    pub fn last_psnr(&self) -> Option<f64> {
        self.records.last().map(|r| r.psnr)
    }

    pub fn record_at_epoch(&self, epoch: usize) -> Option<&EpochRecord> {
        self.records.iter().find(|r| r.epoch == epoch)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,loss,psnr,ms_ssim,seconds\n");
        for r in &self.records {
            out.push_str(&format!(
                "{},{},{},{},{:.3}\n",
                r.epoch, r.loss, r.psnr, r.ms_ssim, r.seconds
            ));
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }
}

#[derive(Default)]
pub struct TrainOptions<'a> {
    /// Keep-mask from pruning: gradients of masked-out entries are zeroed
    /// every step so zeros stay zero.
    pub mask: Option<&'a PruneMask>,
    /// Directory for periodic checkpoints (see `checkpoint_every`).
    pub checkpoint_dir: Option<&'a Path>,
    /// Restricts fitting (and the per-epoch metrics) to these frame indices;
    /// timestamps stay normalized over the full video length.
    pub frame_subset: Option<&'a [usize]>,
}

/// Fits the model to the video and returns it with the per-epoch history.
pub fn train(
    model: NervModel,
    video: &VideoTensor,
    cfg: &TrainConfig,
) -> Result<(NervModel, TrainHistory)> {
    train_with_options(model, video, cfg, &TrainOptions::default())
}

pub fn train_with_options(
    mut model: NervModel,
    video: &VideoTensor,
    cfg: &TrainConfig,
    opts: &TrainOptions<'_>,
) -> Result<(NervModel, TrainHistory)> {
    cfg.validate()?;
    check_video_matches(&model, video)?;
    if let Some(mask) = opts.mask {
        mask.check_shapes(&model.params)?;
        mask.apply(&mut model.params);
    }

    let t_frames = video.frame_count();
    let fit_frames: Vec<usize> = match opts.frame_subset {
        Some(subset) => {
            for &i in subset {
                if i >= t_frames {
                    return Err(NervError::domain(format!(
                        "subset frame {i} out of range for {t_frames} frames"
                    )));
                }
            }
            subset.to_vec()
        }
        None => (0..t_frames).collect(),
    };
    if fit_frames.is_empty() {
        return Err(NervError::invalid_config("no frames selected for fitting"));
    }
    let dims = video.dims();
    let msssim_levels = metrics::max_levels(dims.height, dims.width).max(1);
    if msssim_levels < 5 {
        log::debug!(
            "video {}x{} supports {} of 5 MS-SSIM scales",
            dims.height,
            dims.width,
            msssim_levels
        );
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = Adam::new(&model.params);
    let mut history = TrainHistory::default();
    let steps_per_epoch = fit_frames.len().div_ceil(cfg.batch_size);

    for epoch in 1..=cfg.epochs {
        let start = Instant::now();
        let mut order = fit_frames.clone();
        order.shuffle(&mut rng);

        let mut loss_sum = 0.0;
        for (step, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let (batch_loss, mut grads) = batch_loss_and_grads(
                &mut model,
                video,
                chunk,
                cfg.loss_alpha,
                &cfg.loss_terms,
            )?;
            if !batch_loss.is_finite() {
                return Err(NervError::NonFiniteLoss { epoch, step });
            }
            loss_sum += batch_loss * chunk.len() as f64;
            if let Some(mask) = opts.mask {
                mask.apply(&mut grads);
            }
            let epoch_f = (epoch - 1) as f64 + (step + 1) as f64 / steps_per_epoch as f64;
            let lr = lr_at(epoch_f.min(cfg.epochs as f64), cfg)?;
            adam.step(&mut model.params, &grads, lr);
            if let Some(mask) = opts.mask {
                mask.apply(&mut model.params);
            }
        }

        let (mean_psnr, mean_msssim) = evaluate_frames(&model, video, &fit_frames, msssim_levels)?;
        let record = EpochRecord {
            epoch,
            loss: loss_sum / fit_frames.len() as f64,
            psnr: mean_psnr,
            ms_ssim: mean_msssim,
            seconds: start.elapsed().as_secs_f64(),
        };
        log::debug!(
            "epoch {:4}  loss {:.6}  psnr {:.3}  ms-ssim {:.5}  ({:.2}s)",
            record.epoch,
            record.loss,
            record.psnr,
            record.ms_ssim,
            record.seconds
        );
        history.records.push(record);

        if cfg.checkpoint_every > 0 && epoch % cfg.checkpoint_every == 0 {
            if let Some(dir) = opts.checkpoint_dir {
                std::fs::create_dir_all(dir)?;
                save_checkpoint(
                    &dir.join(format!("checkpoint_{epoch:05}.ckpt")),
                    &model,
                    Some(&adam),
                    epoch,
                )?;
            }
        }
    }

    Ok((model, history))
}

/// Mean loss over a set of frames plus parameter gradients of that mean.
/// Also the entry point for the finite-difference gradient checks.
pub fn batch_loss_and_grads(
    model: &mut NervModel,
    video: &VideoTensor,
    frame_indices: &[usize],
    alpha: f64,
    terms: &LossTerms,
) -> Result<(f64, GradSet)> {
    let t_frames = video.frame_count();
    let scale = 1.0 / frame_indices.len() as f64;
    let mut total = 0.0;
    let mut acc = GradSet::new();
    for &idx in frame_indices {
        let fi = crate::nerv::FrameIndex::new(idx, t_frames)?;
        let fwd = model.forward_train(fi.norm)?;
        let target = video.frame(idx);
        let (value, dout) = loss_with_grad(&fwd.out_hwc.view(), &target, alpha, terms)?;
        total += value;
        let grads = model.backward(&fwd, &dout.view());
        add_scaled(&mut acc, &grads, scale);
    }
    Ok((total * scale, acc))
}

/// Mean PSNR / MS-SSIM of the reconstruction against the fitted video.
pub fn evaluate(model: &NervModel, video: &VideoTensor, msssim_levels: usize) -> Result<(f64, f64)> {
    let frames: Vec<usize> = (0..video.frame_count()).collect();
    evaluate_frames(model, video, &frames, msssim_levels)
}

fn evaluate_frames(
    model: &NervModel,
    video: &VideoTensor,
    frames: &[usize],
    msssim_levels: usize,
) -> Result<(f64, f64)> {
    let mut psnr_sum = 0.0;
    let mut ms_sum = 0.0;
    for &i in frames {
        let pred = model.frame(i)?;
        let target = video.frame(i);
        psnr_sum += metrics::psnr(&pred.view(), &target)?;
        ms_sum += metrics::ms_ssim_with_levels(&pred.view(), &target, msssim_levels)?;
    }
    Ok((psnr_sum / frames.len() as f64, ms_sum / frames.len() as f64))
}

fn add_scaled(dst: &mut GradSet, src: &GradSet, scale: f64) {
    for (name, g) in src.iter() {
        match dst.get_mut(name) {
            Some(acc) => acc.scaled_add(scale, g),
            None => dst.insert(name.clone(), g * scale),
        }
    }
}

fn check_video_matches(model: &NervModel, video: &VideoTensor) -> Result<()> {
    let dims = video.dims();
    if (dims.height, dims.width) != model.config.target_resolution {
        return Err(NervError::invalid_config(format!(
            "video {}x{} does not match model resolution {:?}",
            dims.height, dims.width, model.config.target_resolution
        )));
    }
    if dims.frames != model.config.frame_count {
        return Err(NervError::invalid_config(format!(
            "video has {} frames but the model represents {}",
            dims.frames, model.config.frame_count
        )));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Checkpoints

const CKPT_MAGIC: &[u8; 4] = b"NRVC";
const CKPT_VERSION: u16 = 1;

/// Writes config, parameters (f32, exact for snapped params), normalization
/// buffers, optimizer state and the epoch counter.
pub fn save_checkpoint(
    path: &Path,
    model: &NervModel,
    optimizer: Option<&Adam>,
    epoch: usize,
) -> Result<()> {
    let mut w = ByteWriter::new();
    w.put_bytes(CKPT_MAGIC);
    w.put_u16(CKPT_VERSION);
    crate::bitstream::encode_config(&mut w, &model.config);
    w.put_u64(epoch as u64);
    write_param_set_f32(&mut w, &model.params);
    write_param_set_f64(&mut w, &model.buffers);
    match optimizer {
        Some(adam) => {
            w.put_u8(1);
            w.put_u64(adam.steps);
            write_param_set_f64(&mut w, &adam.m);
            write_param_set_f64(&mut w, &adam.v);
        }
        None => w.put_u8(0),
    }
    std::fs::write(path, w.into_bytes())?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<(NervModel, Option<Adam>, usize)> {
    let bytes = std::fs::read(path)?;
    let mut r = ByteReader::new(&bytes);
    let magic = r.get_bytes(4)?;
    if magic != CKPT_MAGIC {
        return Err(NervError::data(format!(
            "{} is not a checkpoint file",
            path.display()
        )));
    }
    let version = r.get_u16()?;
    if version != CKPT_VERSION {
        return Err(NervError::UnsupportedVersion(version));
    }
    let config = crate::bitstream::decode_config(&mut r)?;
    let epoch = r.get_u64()? as usize;
    let params = read_param_set_f32(&mut r)?;
    let buffers = read_param_set_f64(&mut r)?;
    let model = NervModel {
        config,
        params,
        buffers,
    };
    let optimizer = match r.get_u8()? {
        0 => None,
        _ => {
            let steps = r.get_u64()?;
            let m = read_param_set_f64(&mut r)?;
            let v = read_param_set_f64(&mut r)?;
            Some(Adam { m, v, steps })
        }
    };
    Ok((model, optimizer, epoch))
}

fn write_tensor_header(w: &mut ByteWriter, name: &str, shape: &[usize]) {
    w.put_str(name);
    w.put_u8(shape.len() as u8);
    for &d in shape {
        w.put_u32(d as u32);
    }
}

fn read_tensor_header(r: &mut ByteReader<'_>) -> Result<(String, Vec<usize>)> {
    let name = r.get_str()?;
    let rank = r.get_u8()? as usize;
    let mut shape = Vec::with_capacity(rank);
    for _ in 0..rank {
        shape.push(r.get_u32()? as usize);
    }
    Ok((name, shape))
}

fn checked_len(r: &ByteReader<'_>, shape: &[usize], elem_bytes: usize) -> Result<usize> {
    let mut n: usize = 1;
    for &d in shape {
        n = n
            .checked_mul(d)
            .ok_or_else(|| NervError::corrupt(r.offset(), "tensor shape overflow"))?;
    }
    if n.checked_mul(elem_bytes).is_none_or(|b| b > r.remaining()) {
        return Err(NervError::corrupt(r.offset(), "tensor data truncated"));
    }
    Ok(n)
}

fn write_param_set_f32(w: &mut ByteWriter, set: &ParamSet) {
    w.put_u32(set.len() as u32);
    for (name, t) in set.iter() {
        write_tensor_header(w, name, t.shape());
        for &v in t.iter() {
            w.put_f32(v as f32);
        }
    }
}

fn read_param_set_f32(r: &mut ByteReader<'_>) -> Result<ParamSet> {
    let count = r.get_u32()?;
    let mut set = ParamSet::new();
    for _ in 0..count {
        let (name, shape) = read_tensor_header(r)?;
        let n = checked_len(r, &shape, 4)?;
        let mut data = Vec::with_capacity(n);
        for _ in 0..n {
            data.push(r.get_f32()? as f64);
        }
        let t = ndarray::ArrayD::from_shape_vec(ndarray::IxDyn(&shape), data)
            .map_err(|e| NervError::corrupt(r.offset(), e.to_string()))?;
        set.insert(name, t);
    }
    Ok(set)
}

fn write_param_set_f64(w: &mut ByteWriter, set: &ParamSet) {
    w.put_u32(set.len() as u32);
    for (name, t) in set.iter() {
        write_tensor_header(w, name, t.shape());
        for &v in t.iter() {
            w.put_f64(v);
        }
    }
}

fn read_param_set_f64(r: &mut ByteReader<'_>) -> Result<ParamSet> {
    let count = r.get_u32()?;
    let mut set = ParamSet::new();
    for _ in 0..count {
        let (name, shape) = read_tensor_header(r)?;
        let n = checked_len(r, &shape, 8)?;
        let mut data = Vec::with_capacity(n);
        for _ in 0..n {
            data.push(r.get_f64()?);
        }
        let t = ndarray::ArrayD::from_shape_vec(ndarray::IxDyn(&shape), data)
            .map_err(|e| NervError::corrupt(r.offset(), e.to_string()))?;
        set.insert(name, t);
    }
    Ok(set)
}
