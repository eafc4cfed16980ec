//! Pixel-wise implicit baselines: coordinate -> RGB MLPs with either sine
//! activations or positional-encoded ReLU layers. Reconstructing a `(T, H, W)`
//! video needs `T * H * W` forward samples, against `T` for the image-wise
//! model — these exist to measure that gap.

use std::time::Instant;

use ndarray::{Array1, Array2, Array3, ArrayView1, Ix1, Ix2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{NervError, Result};
use crate::nerv::embed::positional_encode;
use crate::nerv::layers::sigmoid;
use crate::nerv::ParamSet;
use crate::training::{lr_at, Adam, TrainConfig};
use crate::video::{VideoDims, VideoTensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PixelwiseVariant {
    /// Raw coordinates, sine activations (frequency-scaled init).
    SineMlp,
    /// Positional-encoded coordinates, ReLU activations.
    PeReluMlp,
}

#[derive(Debug, Clone)]
pub struct PixelwiseConfig {
    pub variant: PixelwiseVariant,
    /// Number of linear layers including the output head.
    pub depth: usize,
    pub hidden: usize,
    /// Positional-encoding parameters (PeReluMlp only).
    pub embed_base: f64,
    pub embed_length: usize,
    /// Sine frequency scale (SineMlp only).
    pub omega0: f64,
}

impl PixelwiseConfig {
    pub fn sine(hidden: usize) -> Self {
        Self {
            variant: PixelwiseVariant::SineMlp,
            depth: 3,
            hidden,
            embed_base: 2.0,
            embed_length: 10,
            omega0: 30.0,
        }
    }

    pub fn pe_relu(hidden: usize) -> Self {
        Self {
            variant: PixelwiseVariant::PeReluMlp,
            ..Self::sine(hidden)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.depth < 2 {
            return Err(NervError::invalid_config("depth must be >= 2"));
        }
        if self.hidden == 0 {
            return Err(NervError::invalid_config("hidden width must be >= 1"));
        }
        if self.variant == PixelwiseVariant::PeReluMlp && self.embed_length == 0 {
            return Err(NervError::invalid_config("embed_length must be >= 1"));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        match self.variant {
            PixelwiseVariant::SineMlp => 3,
            PixelwiseVariant::PeReluMlp => 6 * self.embed_length,
        }
    }

    pub fn param_count(&self) -> usize {
        let mut n = 0;
        let mut d_in = self.input_dim();
        for layer in 0..self.depth {
            let d_out = if layer + 1 == self.depth { 3 } else { self.hidden };
            n += d_in * d_out + d_out;
            d_in = d_out;
        }
        n
    }

    /// Hidden width whose parameter count is closest to `target`.
    pub fn with_params_near(variant: PixelwiseVariant, target: usize) -> Self {
        let make = |h: usize| match variant {
            PixelwiseVariant::SineMlp => Self::sine(h),
            PixelwiseVariant::PeReluMlp => Self::pe_relu(h),
        };
        let mut best = make(1);
        let mut best_err = usize::MAX;
        for h in 1..=4096 {
            let cfg = make(h);
            let count = cfg.param_count();
            let err = count.abs_diff(target);
            if err < best_err {
                best_err = err;
                best = cfg;
            }
            if count > 2 * target {
                break;
            }
        }
        best
    }
}

#[derive(Debug, Clone)]
pub struct PixelwiseModel {
    pub config: PixelwiseConfig,
    pub params: ParamSet,
}

pub fn build_pixelwise(config: &PixelwiseConfig, seed: u64) -> Result<PixelwiseModel> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = ParamSet::new();
    let mut d_in = config.input_dim();
    for layer in 0..config.depth {
        let d_out = if layer + 1 == config.depth { 3 } else { config.hidden };
        let bound = match (config.variant, layer) {
            // frequency-scaled sine init: first layer 1/in, later sqrt(6/in)/omega0
            (PixelwiseVariant::SineMlp, 0) => 1.0 / d_in as f64,
            (PixelwiseVariant::SineMlp, _) => (6.0 / d_in as f64).sqrt() / config.omega0,
            (PixelwiseVariant::PeReluMlp, _) => 1.0 / (d_in as f64).sqrt(),
        };
        let mut w = Array2::zeros((d_out, d_in));
        for v in w.iter_mut() {
            *v = (rng.random::<f64>() * 2.0 - 1.0) * bound;
        }
        let mut b = Array1::zeros(d_out);
        for v in b.iter_mut() {
            *v = (rng.random::<f64>() * 2.0 - 1.0) * bound;
        }
        params.insert(format!("layers.{layer}.weight"), w.into_dyn());
        params.insert(format!("layers.{layer}.bias"), b.into_dyn());
        d_in = d_out;
    }
    params.snap_to_f32();
    Ok(PixelwiseModel {
        config: config.clone(),
        params,
    })
}

impl PixelwiseModel {
    pub fn count_params(&self) -> usize {
        self.params.count_scalars()
    }

    /// RGB at one normalized coordinate; each of `(x, y, t)` lies in `(0, 1]`.
    pub fn forward(&self, x: f64, y: f64, t: f64) -> Result<[f64; 3]> {
        for v in [x, y, t] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(NervError::domain(format!(
                    "coordinate {v} outside (0, 1]"
                )));
            }
        }
        let coords = Array2::from_shape_vec((1, 3), vec![x, y, t]).unwrap();
        let out = self.forward_batch(&coords);
        Ok([out[(0, 0)], out[(0, 1)], out[(0, 2)]])
    }

    /// Batched forward over `(n, 3)` coordinates in `(0, 1]`.
    pub fn forward_batch(&self, coords: &Array2<f64>) -> Array2<f64> {
        let (h, _) = self.features(coords);
        h
    }

    /// Forward keeping pre-activation caches for backprop.
    fn features(&self, coords: &Array2<f64>) -> (Array2<f64>, Vec<Array2<f64>>) {
        let mut h = self.encode_inputs(coords);
        let mut caches = Vec::with_capacity(self.config.depth + 1);
        for layer in 0..self.config.depth {
            caches.push(h.clone());
            let w = self.view2(&format!("layers.{layer}.weight"));
            let b = self.view1(&format!("layers.{layer}.bias"));
            let mut pre = h.dot(&w.t());
            for mut row in pre.rows_mut() {
                row += &b;
            }
            if layer + 1 == self.config.depth {
                caches.push(pre.clone());
                h = pre.mapv(sigmoid);
            } else {
                caches.push(pre.clone());
                h = match self.config.variant {
                    PixelwiseVariant::SineMlp => {
                        pre.mapv(|v| (self.config.omega0 * v).sin())
                    }
                    PixelwiseVariant::PeReluMlp => pre.mapv(|v| v.max(0.0)),
                };
            }
        }
        (h, caches)
    }

    /// Network input features: raw coordinates remapped to `[-1, 1]` for the
    /// sine variant, per-coordinate positional encoding for the ReLU variant.
    fn encode_inputs(&self, coords: &Array2<f64>) -> Array2<f64> {
        let n = coords.nrows();
        match self.config.variant {
            PixelwiseVariant::SineMlp => coords.mapv(|v| 2.0 * v - 1.0),
            PixelwiseVariant::PeReluMlp => {
                let l = self.config.embed_length;
                let mut out = Array2::zeros((n, 6 * l));
                for (i, row) in coords.rows().into_iter().enumerate() {
                    for (c, &v) in row.iter().enumerate() {
                        let enc =
                            positional_encode(v, self.config.embed_base, l).expect("validated");
                        for (j, &e) in enc.iter().enumerate() {
                            out[(i, c * 2 * l + j)] = e;
                        }
                    }
                }
                out
            }
        }
    }

    /// Mean L2 loss over a coordinate batch plus parameter gradients.
    pub fn loss_and_grads(
        &self,
        coords: &Array2<f64>,
        targets: &Array2<f64>,
    ) -> (f64, ParamSet) {
        let (out, caches) = self.features(coords);
        let n = out.len() as f64;
        let diff = &out - targets;
        let loss = diff.mapv(|d| d * d).sum() / n;

        let mut grads = ParamSet::new();
        // d(mse)/d(out) -> through sigmoid
        let final_pre = &caches[caches.len() - 1];
        let mut delta = ndarray::Zip::from(&diff)
            .and(final_pre)
            .map_collect(|&d, &pre| {
                let y = sigmoid(pre);
                2.0 * d / n * y * (1.0 - y)
            });
        for layer in (0..self.config.depth).rev() {
            let input = &caches[2 * layer];
            let w = self.view2(&format!("layers.{layer}.weight"));
            let dw = delta.t().dot(input);
            let db = delta.sum_axis(ndarray::Axis(0));
            let dinput = delta.dot(&w);
            grads.insert(format!("layers.{layer}.weight"), dw.into_dyn());
            grads.insert(format!("layers.{layer}.bias"), db.into_dyn());
            if layer > 0 {
                let pre_prev = &caches[2 * layer - 1];
                delta = ndarray::Zip::from(&dinput).and(pre_prev).map_collect(
                    |&g, &pre| match self.config.variant {
                        PixelwiseVariant::SineMlp => {
                            g * self.config.omega0 * (self.config.omega0 * pre).cos()
                        }
                        PixelwiseVariant::PeReluMlp => {
                            if pre > 0.0 {
                                g
                            } else {
                                0.0
                            }
                        }
                    },
                );
            }
        }
        (loss, grads)
    }

    /// Reconstructs a full frame by evaluating every pixel coordinate.
    pub fn reconstruct_frame(&self, dims: VideoDims, t_idx: usize) -> Result<Array3<f64>> {
        if t_idx >= dims.frames {
            return Err(NervError::domain(format!(
                "frame index {t_idx} out of range for {} frames",
                dims.frames
            )));
        }
        let coords = frame_coords(dims, t_idx);
        let out = self.forward_batch(&coords);
        let mut frame = Array3::zeros((dims.height, dims.width, 3));
        for y in 0..dims.height {
            for x in 0..dims.width {
                for c in 0..3 {
                    frame[(y, x, c)] = out[(y * dims.width + x, c)];
                }
            }
        }
        Ok(frame)
    }

    fn view2(&self, name: &str) -> ndarray::ArrayView2<'_, f64> {
        self.params
            .get(name)
            .unwrap()
            .view()
            .into_dimensionality::<Ix2>()
            .unwrap()
    }

    fn view1(&self, name: &str) -> ArrayView1<'_, f64> {
        self.params
            .get(name)
            .unwrap()
            .view()
            .into_dimensionality::<Ix1>()
            .unwrap()
    }
}

fn frame_coords(dims: VideoDims, t_idx: usize) -> Array2<f64> {
    let t = (t_idx as f64 + 1.0) / dims.frames as f64;
    let mut coords = Array2::zeros((dims.height * dims.width, 3));
    for y in 0..dims.height {
        for x in 0..dims.width {
            let r = y * dims.width + x;
            coords[(r, 0)] = (x as f64 + 1.0) / dims.width as f64;
            coords[(r, 1)] = (y as f64 + 1.0) / dims.height as f64;
            coords[(r, 2)] = t;
        }
    }
    coords
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Representation {
    PixelWise,
    ImageWise,
}

/// Forward samples needed to reconstruct the whole video: `T * H * W`
/// pixel-wise, `T` image-wise.
pub fn sampling_cost(dims: VideoDims, representation: Representation) -> u64 {
    match representation {
        Representation::PixelWise => dims.pixels(),
        Representation::ImageWise => dims.frames as u64,
    }
}

pub struct PixelwiseTrainOutcome {
    pub model: PixelwiseModel,
    /// (epoch, mean minibatch loss).
    pub losses: Vec<(usize, f64)>,
    /// Wall-clock seconds per epoch.
    pub epoch_seconds: Vec<f64>,
}

/// Fits a pixel-wise model with Adam on random pixel minibatches under L2
/// loss. One epoch is a full pass over all `T * H * W` pixels.
pub fn train_pixelwise(
    model: PixelwiseModel,
    video: &VideoTensor,
    cfg: &TrainConfig,
    pixels_per_step: usize,
) -> Result<PixelwiseTrainOutcome> {
    cfg.validate()?;
    if pixels_per_step == 0 {
        return Err(NervError::invalid_config("pixels_per_step must be >= 1"));
    }
    let dims = video.dims();
    let n_pixels = dims.pixels() as usize;

    let mut coords = Array2::zeros((n_pixels, 3));
    let mut targets = Array2::zeros((n_pixels, 3));
    let mut row = 0;
    for ti in 0..dims.frames {
        let frame = frame_coords(dims, ti);
        coords
            .slice_mut(ndarray::s![row..row + frame.nrows(), ..])
            .assign(&frame);
        let src = video.frame(ti);
        for y in 0..dims.height {
            for x in 0..dims.width {
                for c in 0..3 {
                    targets[(row + y * dims.width + x, c)] = src[(y, x, c)];
                }
            }
        }
        row += dims.height * dims.width;
    }

    let mut model = model;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = Adam::new(&model.params);
    let mut order: Vec<u32> = (0..n_pixels as u32).collect();
    let steps_per_epoch = n_pixels.div_ceil(pixels_per_step);
    let mut losses = Vec::with_capacity(cfg.epochs);
    let mut epoch_seconds = Vec::with_capacity(cfg.epochs);

    for epoch in 1..=cfg.epochs {
        let start = Instant::now();
        rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut rng);
        let mut loss_sum = 0.0;
        for (step, chunk) in order.chunks(pixels_per_step).enumerate() {
            let mut c = Array2::zeros((chunk.len(), 3));
            let mut t = Array2::zeros((chunk.len(), 3));
            for (i, &p) in chunk.iter().enumerate() {
                c.row_mut(i).assign(&coords.row(p as usize));
                t.row_mut(i).assign(&targets.row(p as usize));
            }
            let (loss, grads) = model.loss_and_grads(&c, &t);
            if !loss.is_finite() {
                return Err(NervError::NonFiniteLoss { epoch, step });
            }
            loss_sum += loss;
            let epoch_f = (epoch - 1) as f64 + (step + 1) as f64 / steps_per_epoch as f64;
            let lr = lr_at(epoch_f.min(cfg.epochs as f64), cfg)?;
            adam.step(&mut model.params, &grads, lr);
        }
        losses.push((epoch, loss_sum / steps_per_epoch as f64));
        epoch_seconds.push(start.elapsed().as_secs_f64());
    }

    Ok(PixelwiseTrainOutcome {
        model,
        losses,
        epoch_seconds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth;
    use approx::assert_relative_eq;

    #[test]
    fn sampling_cost_examples() {
        let dims = VideoDims {
            frames: 132,
            height: 720,
            width: 1080,
        };
        assert_eq!(sampling_cost(dims, Representation::PixelWise), 102_643_200);
        assert_eq!(sampling_cost(dims, Representation::ImageWise), 132);
        let unit = VideoDims {
            frames: 1,
            height: 1,
            width: 1,
        };
        assert_eq!(sampling_cost(unit, Representation::PixelWise), 1);
        assert_eq!(sampling_cost(unit, Representation::ImageWise), 1);
    }

    #[test]
    fn forward_is_deterministic_and_bounded() {
        for cfg in [PixelwiseConfig::sine(16), PixelwiseConfig::pe_relu(16)] {
            let model = build_pixelwise(&cfg, 5).unwrap();
            let a = model.forward(0.3, 0.7, 0.5).unwrap();
            let b = model.forward(0.3, 0.7, 0.5).unwrap();
            assert_eq!(a, b);
            assert!(a.iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn out_of_range_coordinates_error() {
        let model = build_pixelwise(&PixelwiseConfig::sine(8), 1).unwrap();
        assert!(model.forward(0.0, 0.5, 0.5).is_err());
        assert!(model.forward(0.5, 1.2, 0.5).is_err());
    }

    #[test]
    fn width_search_hits_parameter_targets() {
        for target in [100_000usize, 300_000, 1_000_000] {
            for variant in [PixelwiseVariant::SineMlp, PixelwiseVariant::PeReluMlp] {
                let cfg = PixelwiseConfig::with_params_near(variant, target);
                let got = cfg.param_count();
                let rel = got.abs_diff(target) as f64 / target as f64;
                assert!(rel < 0.02, "{variant:?} target {target}: got {got}");
            }
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        for cfg in [PixelwiseConfig::sine(6), PixelwiseConfig::pe_relu(6)] {
            let mut model = build_pixelwise(&cfg, 9).unwrap();
            let coords =
                Array2::from_shape_vec((2, 3), vec![0.2, 0.4, 0.5, 0.9, 0.1, 0.5]).unwrap();
            let targets =
                Array2::from_shape_vec((2, 3), vec![0.1, 0.9, 0.3, 0.6, 0.2, 0.8]).unwrap();
            let (_, grads) = model.loss_and_grads(&coords, &targets);
            let h = 1e-6;
            for name in ["layers.0.weight", "layers.1.weight", "layers.2.bias"] {
                let g = grads.get(name).unwrap().clone();
                let orig = model.params.get(name).unwrap().clone();
                let flat = orig.len();
                let probe = [0, flat / 2, flat - 1];
                for &i in &probe {
                    let mut t = orig.clone();
                    t.as_slice_mut().unwrap()[i] += h;
                    model.params.insert(name, t);
                    let (up, _) = model.loss_and_grads(&coords, &targets);
                    let mut t = orig.clone();
                    t.as_slice_mut().unwrap()[i] -= h;
                    model.params.insert(name, t);
                    let (down, _) = model.loss_and_grads(&coords, &targets);
                    model.params.insert(name, orig.clone());
                    let fd = (up - down) / (2.0 * h);
                    assert_relative_eq!(
                        g.as_slice().unwrap()[i],
                        fd,
                        max_relative = 1e-4,
                        epsilon = 1e-9
                    );
                }
            }
        }
    }

    #[test]
    fn short_training_reduces_loss() {
        let video = synth::gradient_texture(2, 12, 12).unwrap();
        let model = build_pixelwise(&PixelwiseConfig::sine(24), 3).unwrap();
        let cfg = TrainConfig {
            epochs: 8,
            warmup_epochs: 1,
            base_lr: 1e-3,
            seed: 2,
            ..TrainConfig::default()
        };
        let out = train_pixelwise(model, &video, &cfg, 72).unwrap();
        assert!(out.losses.last().unwrap().1 < out.losses.first().unwrap().1);
        assert_eq!(out.epoch_seconds.len(), 8);
    }
}
