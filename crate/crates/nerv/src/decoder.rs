//! Artifact loading and frame decoding. Decoding is stateless per frame, so
//! any index subset, order, or worker count yields identical pixels.

use std::path::Path;
use std::time::Instant;

use ndarray::Array3;
use rayon::prelude::*;

use crate::bitstream;
use crate::error::{NervError, Result};
use crate::nerv::model::{cast_params, chw_to_hwc, forward_generic};
use crate::nerv::NervModel;
use crate::video::{save_frame, VideoTensor};

/// Inference arithmetic width. Stored weights are the dequantized values
/// either way.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Precision {
    Full,
    Half,
}

/// Reconstructs a model from `.nrv` bytes; weights equal the encoder's
/// dequantized tensors exactly.
pub fn load(bytes: &[u8]) -> Result<NervModel> {
    let artifact = bitstream::deserialize(bytes)?;
    let (params, buffers) = artifact.decode_params()?;
    Ok(NervModel {
        config: artifact.config,
        params,
        buffers,
    })
}

pub fn load_file(path: &Path) -> Result<NervModel> {
    let bytes = std::fs::read(path)?;
    load(&bytes)
}

/// Decodes the requested frame indices, optionally in parallel over frames.
/// `workers <= 1` decodes sequentially; the output is identical either way.
pub fn decode_frames(
    model: &NervModel,
    indices: &[usize],
    workers: usize,
) -> Result<Vec<Array3<f64>>> {
    let t = model.config.frame_count;
    for &i in indices {
        if i >= t {
            return Err(NervError::domain(format!(
                "frame index {i} out of range for {t} frames"
            )));
        }
    }
    if workers <= 1 {
        indices.iter().map(|&i| model.frame(i)).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| NervError::data(e.to_string()))?;
        pool.install(|| indices.par_iter().map(|&i| model.frame(i)).collect())
    }
}

/// Decodes every frame into numbered 8-bit PNGs under `dir`.
pub fn decode_to_dir(model: &NervModel, dir: &Path, workers: usize) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let indices: Vec<usize> = (0..model.config.frame_count).collect();
    let frames = decode_frames(model, &indices, workers)?;
    for (i, frame) in frames.iter().enumerate() {
        save_frame(&frame.view(), &dir.join(format!("frame_{i:06}.png")))?;
    }
    Ok(())
}

/// Decodes all frames into a video tensor.
pub fn decode_video(model: &NervModel, workers: usize) -> Result<VideoTensor> {
    let indices: Vec<usize> = (0..model.config.frame_count).collect();
    let frames = decode_frames(model, &indices, workers)?;
    let (h, w) = model.config.target_resolution;
    let mut data = ndarray::Array4::zeros((frames.len(), h, w, 3));
    for (i, f) in frames.iter().enumerate() {
        data.index_axis_mut(ndarray::Axis(0), i).assign(f);
    }
    VideoTensor::from_frames(data)
}

/// Times a decode of `n_frames` frames and reports frames per second.
pub fn benchmark_fps(model: &NervModel, n_frames: usize, precision: Precision) -> Result<f64> {
    if n_frames == 0 {
        return Err(NervError::invalid_config("n_frames must be >= 1"));
    }
    let t = model.config.frame_count;
    let indices: Vec<usize> = (0..n_frames).map(|i| i % t).collect();
    match precision {
        Precision::Full => {
            let start = Instant::now();
            for &i in &indices {
                std::hint::black_box(model.frame(i)?);
            }
            Ok(n_frames as f64 / start.elapsed().as_secs_f64())
        }
        Precision::Half => {
            let params = cast_params::<f32>(model.params.raw());
            let buffers = cast_params::<f32>(model.buffers.raw());
            let start = Instant::now();
            for &i in &indices {
                let t_norm = (i as f64 + 1.0) / t as f64;
                let chw = forward_generic::<f32>(&model.config, &params, &buffers, t_norm)?;
                std::hint::black_box(chw_to_hwc(&chw.view()));
            }
            Ok(n_frames as f64 / start.elapsed().as_secs_f64())
        }
    }
}
