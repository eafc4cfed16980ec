//! The frame-index network: parameter storage, deterministic construction,
//! pure forward evaluation, and the cached-activation backward pass used by
//! training.

use indexmap::IndexMap;
use ndarray::{Array1, Array2, Array3, ArrayD, ArrayView3, Ix1, Ix2, Ix4, NdFloat};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{NervError, Result};
use crate::nerv::config::{NervConfig, NormKind, UpscaleMode};
use crate::nerv::embed::embed;
use crate::nerv::layers::{
    bilinear_upsample, bilinear_upsample_backward, channel_norm_backward, channel_norm_eval,
    channel_norm_train, col2im, conv2d_backward, conv2d_from_cols, im2col, linear_backward,
    linear_forward, pixel_shuffle, pixel_unshuffle, sigmoid, NormCache,
};

pub(crate) type RawParams<F> = IndexMap<String, ArrayD<F>>;

/// An ordered name -> tensor map. Iteration order is the canonical tensor
/// order used by pruning tie-breaks, checkpoints and the bitstream.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamSet {
    map: RawParams<f64>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: ArrayD<f64>) {
        self.map.insert(name.into(), tensor);
    }

    pub fn get(&self, name: &str) -> Option<&ArrayD<f64>> {
        self.map.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut ArrayD<f64>> {
        self.map.get_mut(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &ArrayD<f64>)> {
        self.map.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut ArrayD<f64>)> {
        self.map.iter_mut()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn count_scalars(&self) -> usize {
        self.map.values().map(|t| t.len()).sum()
    }

    /// Rounds every value to its nearest f32. Parameters are stored at f32
    /// precision while arithmetic runs in f64, so serialized weights carry
    /// exactly the in-memory values.
    pub fn snap_to_f32(&mut self) {
        for t in self.map.values_mut() {
            t.mapv_inplace(|v| v as f32 as f64);
        }
    }

    pub(crate) fn raw(&self) -> &RawParams<f64> {
        &self.map
    }

    fn view2(&self, name: &str) -> ndarray::ArrayView2<'_, f64> {
        self.map[name].view().into_dimensionality::<Ix2>().unwrap()
    }

    fn view1(&self, name: &str) -> ndarray::ArrayView1<'_, f64> {
        self.map[name].view().into_dimensionality::<Ix1>().unwrap()
    }

    fn view4(&self, name: &str) -> ndarray::ArrayView4<'_, f64> {
        self.map[name].view().into_dimensionality::<Ix4>().unwrap()
    }
}

/// Gradients mirror the parameter map.
pub type GradSet = ParamSet;

/// A frame index paired with its normalized timestamp `(raw + 1) / T`, which
/// lies in `(0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameIndex {
    pub raw: usize,
    pub norm: f64,
}

impl FrameIndex {
    pub fn new(raw: usize, frame_count: usize) -> Result<Self> {
        if frame_count == 0 || raw >= frame_count {
            return Err(NervError::domain(format!(
                "frame index {raw} out of range for {frame_count} frames"
            )));
        }
        Ok(Self {
            raw,
            norm: (raw as f64 + 1.0) / frame_count as f64,
        })
    }
}

/// The fitted representation of one video: a config plus named parameter
/// tensors (and normalization running statistics when batch norm is used).
#[derive(Debug, Clone, PartialEq)]
pub struct NervModel {
    pub config: NervConfig,
    pub params: ParamSet,
    pub buffers: ParamSet,
}

/// Builds a model with deterministic fan-in-scaled uniform initialization.
/// The same `(config, seed)` always yields bit-identical tensors.
pub fn build_model(config: &NervConfig, seed: u64) -> Result<NervModel> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = ParamSet::new();
    let mut buffers = ParamSet::new();

    let mut init = |params: &mut ParamSet, name: &str, shape: Vec<usize>, fan_in: usize| {
        let bound = 1.0 / (fan_in as f64).sqrt();
        let mut t = ArrayD::zeros(ndarray::IxDyn(&shape));
        for v in t.iter_mut() {
            *v = (rng.random::<f64>() * 2.0 - 1.0) * bound;
        }
        params.insert(name, t);
    };

    let embed_dim = config.embed_dim();
    let stem_out = config.stem_channels * config.stem_spatial.0 * config.stem_spatial.1;
    let k = config.conv_kernel;

    init(&mut params, "mlp.0.weight", vec![config.mlp_hidden, embed_dim], embed_dim);
    init(&mut params, "mlp.0.bias", vec![config.mlp_hidden], embed_dim);
    init(&mut params, "mlp.1.weight", vec![stem_out, config.mlp_hidden], config.mlp_hidden);
    init(&mut params, "mlp.1.bias", vec![stem_out], config.mlp_hidden);

    for (idx, (c_in, c_out, s)) in config.block_plan().into_iter().enumerate() {
        let (w_shape, fan_in, bias_len) = match config.upscale_mode {
            UpscaleMode::PixelShuffle => (
                vec![c_out * s * s, c_in, k, k],
                c_in * k * k,
                c_out * s * s,
            ),
            UpscaleMode::TransposeConv => (vec![c_out * s * s, c_in, 1, 1], c_in, c_out * s * s),
            UpscaleMode::BilinearConv => (vec![c_out, c_in, k, k], c_in * k * k, c_out),
        };
        init(&mut params, &format!("blocks.{idx}.conv.weight"), w_shape, fan_in);
        init(&mut params, &format!("blocks.{idx}.conv.bias"), vec![bias_len], fan_in);
        if config.norm != NormKind::None {
            params.insert(
                format!("blocks.{idx}.norm.weight"),
                ArrayD::from_elem(ndarray::IxDyn(&[c_out]), 1.0),
            );
            params.insert(
                format!("blocks.{idx}.norm.bias"),
                ArrayD::zeros(ndarray::IxDyn(&[c_out])),
            );
            if config.norm == NormKind::Batch {
                buffers.insert(
                    format!("blocks.{idx}.norm.running_mean"),
                    ArrayD::zeros(ndarray::IxDyn(&[c_out])),
                );
                buffers.insert(
                    format!("blocks.{idx}.norm.running_var"),
                    ArrayD::from_elem(ndarray::IxDyn(&[c_out]), 1.0),
                );
            }
        }
    }

    let c_last = config.head_in_channels();
    init(&mut params, "head.weight", vec![3, c_last, k, k], c_last * k * k);
    init(&mut params, "head.bias", vec![3], c_last * k * k);

    params.snap_to_f32();
    Ok(NervModel {
        config: config.clone(),
        params,
        buffers,
    })
}

/// Exact scalar parameter count.
pub fn count_params(model: &NervModel) -> usize {
    model.params.count_scalars()
}

impl NervModel {
    pub fn count_params(&self) -> usize {
        count_params(self)
    }

    /// Pure forward evaluation at a normalized timestamp in `(0, 1]`,
    /// producing an `(H, W, 3)` image with values in `[0, 1]`.
    pub fn forward(&self, t_norm: f64) -> Result<Array3<f64>> {
        let chw = self.forward_chw(t_norm)?;
        Ok(chw_to_hwc(&chw.view()))
    }

    /// Forward at an integer frame index.
    pub fn frame(&self, index: usize) -> Result<Array3<f64>> {
        let fi = FrameIndex::new(index, self.config.frame_count)?;
        self.forward(fi.norm)
    }

    pub(crate) fn forward_chw(&self, t_norm: f64) -> Result<Array3<f64>> {
        forward_generic(
            &self.config,
            self.params.raw(),
            self.buffers.raw(),
            t_norm,
        )
    }

    /// Training-mode forward that records every intermediate needed by
    /// [`NervModel::backward`]. With batch norm this also updates the running
    /// statistics, which is why the model is exclusively owned here.
    pub(crate) fn forward_train(&mut self, t_norm: f64) -> Result<TrainForward> {
        check_timestamp(t_norm)?;
        let cfg = self.config.clone();
        let act = cfg.activation;

        let x_embed = embed(cfg.embedding, t_norm, cfg.embed_base, cfg.embed_length)?;
        let mlp0_pre = linear_forward(
            &self.params.view2("mlp.0.weight"),
            &self.params.view1("mlp.0.bias"),
            &x_embed.view(),
        );
        let mlp0_out = mlp0_pre.mapv(|v| act.eval(v));
        let mlp1_pre = linear_forward(
            &self.params.view2("mlp.1.weight"),
            &self.params.view1("mlp.1.bias"),
            &mlp0_out.view(),
        );
        let mlp1_out = mlp1_pre.mapv(|v| act.eval(v));
        let (h0, w0) = cfg.stem_spatial;
        let mut x = mlp1_out
            .into_shape_with_order((cfg.stem_channels, h0, w0))
            .unwrap();

        let mut blocks = Vec::with_capacity(cfg.upscale_factors.len());
        for (idx, (c_in, _c_out, s)) in cfg.block_plan().into_iter().enumerate() {
            let wname = format!("blocks.{idx}.conv.weight");
            let bname = format!("blocks.{idx}.conv.bias");
            let w = self.params.view4(&wname);
            let b = self.params.view1(&bname);
            let kernel = w.dim().2;
            let conv_input;
            let bilinear_in_dim;
            match cfg.upscale_mode {
                UpscaleMode::BilinearConv => {
                    bilinear_in_dim = Some(x.dim());
                    conv_input = bilinear_upsample(&x.view(), s);
                }
                _ => {
                    bilinear_in_dim = None;
                    conv_input = x;
                }
            }
            let cols = im2col(&conv_input.view(), kernel);
            let z = conv2d_from_cols(
                &w,
                &b,
                &cols.view(),
                (conv_input.dim().1, conv_input.dim().2),
            );
            let pre_shuffle_dim = z.dim();
            let shuffled = match cfg.upscale_mode {
                UpscaleMode::BilinearConv => z,
                _ => pixel_shuffle(&z.view(), s)?,
            };
            let (normed, norm_cache) = match cfg.norm {
                NormKind::None => (shuffled, None),
                _ => {
                    let gname = format!("blocks.{idx}.norm.weight");
                    let bname2 = format!("blocks.{idx}.norm.bias");
                    let gamma = self.params.view1(&gname).to_owned();
                    let beta = self.params.view1(&bname2).to_owned();
                    let (y, cache, stats) =
                        channel_norm_train(&shuffled.view(), &gamma.view(), &beta.view());
                    if cfg.norm == NormKind::Batch {
                        update_running(&mut self.buffers, idx, &stats.mean, &stats.var);
                    }
                    (y, Some(cache))
                }
            };
            let out = normed.mapv(|v| act.eval(v));
            blocks.push(BlockTape {
                conv_in_dim: conv_input.dim(),
                bilinear_in_dim,
                cols,
                pre_shuffle_dim,
                norm_cache,
                pre_act: normed,
                scale: s,
                c_in,
            });
            x = out;
        }

        let head_cols = im2col(&x.view(), cfg.conv_kernel);
        let head_in_dim = x.dim();
        let z_head = conv2d_from_cols(
            &self.params.view4("head.weight"),
            &self.params.view1("head.bias"),
            &head_cols.view(),
            (x.dim().1, x.dim().2),
        );
        let out_chw = z_head.mapv(sigmoid);
        let out_hwc = chw_to_hwc(&out_chw.view());

        Ok(TrainForward {
            out_hwc,
            tape: Tape {
                x_embed,
                mlp0_pre,
                mlp0_out,
                mlp1_pre,
                blocks,
                head_cols,
                head_in_dim,
                out_chw,
            },
        })
    }

    /// Backpropagates a loss gradient (with respect to the `(H, W, 3)`
    /// output) through the recorded tape, returning parameter gradients.
    pub(crate) fn backward(
        &self,
        fwd: &TrainForward,
        dloss_dout_hwc: &ArrayView3<'_, f64>,
    ) -> GradSet {
        let cfg = &self.config;
        let act = cfg.activation;
        let tape = &fwd.tape;
        let mut grads = GradSet::new();

        let dout_chw = hwc_to_chw(dloss_dout_hwc);
        // sigmoid'(z) from the output value
        let mut dz = &dout_chw * &tape.out_chw.mapv(|y| y * (1.0 - y));

        // head conv
        let (dx, dw, db) = conv2d_backward(
            &self.params.view4("head.weight"),
            &tape.head_cols.view(),
            tape.head_in_dim,
            &dz.view(),
        );
        grads.insert("head.weight", dw.into_dyn());
        grads.insert("head.bias", db.into_dyn());
        dz = dx;

        for (idx, bt) in tape.blocks.iter().enumerate().rev() {
            // activation
            let mut d = ndarray::Zip::from(&dz)
                .and(&bt.pre_act)
                .map_collect(|&g, &pre| g * act.grad(pre));
            // norm
            if let Some(cache) = &bt.norm_cache {
                let gname = format!("blocks.{idx}.norm.weight");
                let gamma = self.params.view1(&gname);
                let (dxn, dgamma, dbeta) = channel_norm_backward(cache, &gamma, &d.view());
                grads.insert(gname, dgamma.into_dyn());
                grads.insert(format!("blocks.{idx}.norm.bias"), dbeta.into_dyn());
                d = dxn;
            }
            // upscale + conv
            let wname = format!("blocks.{idx}.conv.weight");
            let w = self.params.view4(&wname);
            let dconv_out = match cfg.upscale_mode {
                UpscaleMode::BilinearConv => d,
                _ => pixel_unshuffle(&d.view(), bt.scale).expect("tape shapes are consistent"),
            };
            debug_assert_eq!(dconv_out.dim(), bt.pre_shuffle_dim);
            let (dx, dw, db) = conv2d_backward(&w, &bt.cols.view(), bt.conv_in_dim, &dconv_out.view());
            grads.insert(wname, dw.into_dyn());
            grads.insert(format!("blocks.{idx}.conv.bias"), db.into_dyn());
            dz = match bt.bilinear_in_dim {
                Some(in_dim) => bilinear_upsample_backward(&dx.view(), in_dim, bt.scale),
                None => dx,
            };
        }

        // stem reshape + MLP
        let dstem = dz
            .into_shape_with_order(cfg.stem_channels * cfg.stem_spatial.0 * cfg.stem_spatial.1)
            .unwrap();
        let dmlp1_pre = ndarray::Zip::from(&dstem)
            .and(&tape.mlp1_pre)
            .map_collect(|&g, &pre| g * act.grad(pre));
        let (dmlp0_out, dw1, db1) = linear_backward(
            &self.params.view2("mlp.1.weight"),
            &tape.mlp0_out.view(),
            &dmlp1_pre.view(),
        );
        grads.insert("mlp.1.weight", dw1.into_dyn());
        grads.insert("mlp.1.bias", db1.into_dyn());
        let dmlp0_pre = ndarray::Zip::from(&dmlp0_out)
            .and(&tape.mlp0_pre)
            .map_collect(|&g, &pre| g * act.grad(pre));
        let (_, dw0, db0) = linear_backward(
            &self.params.view2("mlp.0.weight"),
            &tape.x_embed.view(),
            &dmlp0_pre.view(),
        );
        grads.insert("mlp.0.weight", dw0.into_dyn());
        grads.insert("mlp.0.bias", db0.into_dyn());

        grads
    }
}

pub(crate) struct TrainForward {
    pub out_hwc: Array3<f64>,
    tape: Tape,
}

struct Tape {
    x_embed: Array1<f64>,
    mlp0_pre: Array1<f64>,
    mlp0_out: Array1<f64>,
    mlp1_pre: Array1<f64>,
    blocks: Vec<BlockTape>,
    head_cols: Array2<f64>,
    head_in_dim: (usize, usize, usize),
    out_chw: Array3<f64>,
}

struct BlockTape {
    conv_in_dim: (usize, usize, usize),
    bilinear_in_dim: Option<(usize, usize, usize)>,
    cols: Array2<f64>,
    pre_shuffle_dim: (usize, usize, usize),
    norm_cache: Option<NormCache>,
    pre_act: Array3<f64>,
    scale: usize,
    #[allow(dead_code)]
    c_in: usize,
}

fn update_running(buffers: &mut ParamSet, idx: usize, mean: &[f64], var: &[f64]) {
    const MOMENTUM: f64 = 0.1;
    let mname = format!("blocks.{idx}.norm.running_mean");
    let vname = format!("blocks.{idx}.norm.running_var");
    if let Some(rm) = buffers.get_mut(&mname) {
        for (r, &m) in rm.iter_mut().zip(mean) {
            *r = (1.0 - MOMENTUM) * *r + MOMENTUM * m;
        }
    }
    if let Some(rv) = buffers.get_mut(&vname) {
        for (r, &v) in rv.iter_mut().zip(var) {
            *r = (1.0 - MOMENTUM) * *r + MOMENTUM * v;
        }
    }
}

fn check_timestamp(t: f64) -> Result<()> {
    if !(t > 0.0 && t <= 1.0) {
        return Err(NervError::domain(format!(
            "timestamp {t} outside (0, 1]"
        )));
    }
    Ok(())
}

/// Evaluation-mode forward shared by the f64 and reduced-precision paths.
pub(crate) fn forward_generic<F: NdFloat>(
    cfg: &NervConfig,
    params: &RawParams<F>,
    buffers: &RawParams<F>,
    t_norm: f64,
) -> Result<Array3<F>> {
    check_timestamp(t_norm)?;
    let act = cfg.activation;
    let view2 = |n: &str| params[n].view().into_dimensionality::<Ix2>().unwrap();
    let view1 = |n: &str| params[n].view().into_dimensionality::<Ix1>().unwrap();
    let view4 = |n: &str| params[n].view().into_dimensionality::<Ix4>().unwrap();

    let x_embed_f64 = embed(cfg.embedding, t_norm, cfg.embed_base, cfg.embed_length)?;
    let x_embed: Array1<F> = x_embed_f64.mapv(|v| F::from(v).unwrap());

    let h = linear_forward(&view2("mlp.0.weight"), &view1("mlp.0.bias"), &x_embed.view())
        .mapv(|v| act.eval(v));
    let h = linear_forward(&view2("mlp.1.weight"), &view1("mlp.1.bias"), &h.view())
        .mapv(|v| act.eval(v));
    let (h0, w0) = cfg.stem_spatial;
    let mut x = h
        .into_shape_with_order((cfg.stem_channels, h0, w0))
        .unwrap();

    for (idx, (_c_in, _c_out, s)) in cfg.block_plan().into_iter().enumerate() {
        let w = view4(&format!("blocks.{idx}.conv.weight"));
        let b = view1(&format!("blocks.{idx}.conv.bias"));
        let z = match cfg.upscale_mode {
            UpscaleMode::BilinearConv => {
                let up = bilinear_upsample(&x.view(), s);
                crate::nerv::layers::conv2d(&w, &b, &up.view())
            }
            _ => {
                let z = crate::nerv::layers::conv2d(&w, &b, &x.view());
                pixel_shuffle(&z.view(), s)?
            }
        };
        let z = match cfg.norm {
            NormKind::None => z,
            NormKind::Instance => instance_norm_eval(cfg, params, idx, &z),
            NormKind::Batch => {
                let gamma = view1(&format!("blocks.{idx}.norm.weight"));
                let beta = view1(&format!("blocks.{idx}.norm.bias"));
                let mean = buffers[&format!("blocks.{idx}.norm.running_mean")]
                    .view()
                    .into_dimensionality::<Ix1>()
                    .unwrap();
                let var = buffers[&format!("blocks.{idx}.norm.running_var")]
                    .view()
                    .into_dimensionality::<Ix1>()
                    .unwrap();
                channel_norm_eval(&z.view(), &gamma, &beta, &mean, &var)
            }
        };
        x = z.mapv(|v| act.eval(v));
    }

    let z = crate::nerv::layers::conv2d(&view4("head.weight"), &view1("head.bias"), &x.view());
    Ok(z.mapv(sigmoid))
}

fn instance_norm_eval<F: NdFloat>(
    cfg: &NervConfig,
    params: &RawParams<F>,
    idx: usize,
    x: &Array3<F>,
) -> Array3<F> {
    let _ = cfg;
    let gamma = params[&format!("blocks.{idx}.norm.weight")]
        .view()
        .into_dimensionality::<Ix1>()
        .unwrap();
    let beta = params[&format!("blocks.{idx}.norm.bias")]
        .view()
        .into_dimensionality::<Ix1>()
        .unwrap();
    let (c, h, w) = x.dim();
    let m = F::from(h * w).unwrap();
    let eps = F::from(1e-5).unwrap();
    let mut y = Array3::zeros((c, h, w));
    for ch in 0..c {
        let plane = x.index_axis(ndarray::Axis(0), ch);
        let mean = plane.sum() / m;
        let mut var = F::zero();
        for &v in plane.iter() {
            var = var + (v - mean) * (v - mean);
        }
        var = var / m;
        let istd = F::one() / (var + eps).sqrt();
        for i in 0..h {
            for j in 0..w {
                y[(ch, i, j)] = gamma[ch] * (x[(ch, i, j)] - mean) * istd + beta[ch];
            }
        }
    }
    y
}

pub(crate) fn chw_to_hwc<F: NdFloat>(x: &ArrayView3<'_, F>) -> Array3<F> {
    let (c, h, w) = x.dim();
    let x = x.as_standard_layout();
    let xs = x.as_slice().unwrap();
    let mut out = Array3::zeros((h, w, c));
    let os = out.as_slice_mut().unwrap();
    for ch in 0..c {
        let plane = &xs[ch * h * w..(ch + 1) * h * w];
        for (o, &v) in os[ch..].iter_mut().step_by(c).zip(plane) {
            *o = v;
        }
    }
    out
}

pub(crate) fn hwc_to_chw(x: &ArrayView3<'_, f64>) -> Array3<f64> {
    let (h, w, c) = x.dim();
    let x = x.as_standard_layout();
    let xs = x.as_slice().unwrap();
    let mut out = Array3::zeros((c, h, w));
    let os = out.as_slice_mut().unwrap();
    for ch in 0..c {
        let plane = &mut os[ch * h * w..(ch + 1) * h * w];
        for (o, &v) in plane.iter_mut().zip(xs[ch..].iter().step_by(c)) {
            *o = v;
        }
    }
    out
}

/// Casts every tensor of a raw parameter map to another float width.
pub(crate) fn cast_params<F: NdFloat>(src: &RawParams<f64>) -> RawParams<F> {
    src.iter()
        .map(|(k, v)| (k.clone(), v.mapv(|x| F::from(x).unwrap())))
        .collect()
}

// keep col2im reachable for the tests below without re-export noise
#[allow(unused_imports)]
use col2im as _col2im_used;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nerv::config::{Activation, EmbeddingKind};

    fn tiny_config() -> NervConfig {
        let mut cfg = NervConfig::new((16, 16), 4, vec![2, 2]).unwrap();
        cfg.embed_length = 8;
        cfg.mlp_hidden = 10;
        cfg.stem_channels = 4;
        cfg.block_channels = 6;
        cfg
    }

    #[test]
    fn build_is_deterministic() {
        let cfg = tiny_config();
        let a = build_model(&cfg, 42).unwrap();
        let b = build_model(&cfg, 42).unwrap();
        assert_eq!(a.params, b.params);
        let c = build_model(&cfg, 43).unwrap();
        assert_ne!(a.params, c.params);
        // shapes are a pure function of config regardless of seed
        for ((n1, t1), (n2, t2)) in a.params.iter().zip(c.params.iter()) {
            assert_eq!(n1, n2);
            assert_eq!(t1.shape(), t2.shape());
        }
    }

    #[test]
    fn param_count_matches_config_formula() {
        for norm in [NormKind::None, NormKind::Batch, NormKind::Instance] {
            for mode in [
                UpscaleMode::PixelShuffle,
                UpscaleMode::TransposeConv,
                UpscaleMode::BilinearConv,
            ] {
                let mut cfg = tiny_config();
                cfg.norm = norm;
                cfg.upscale_mode = mode;
                let model = build_model(&cfg, 1).unwrap();
                assert_eq!(model.count_params(), cfg.param_count(), "{norm:?} {mode:?}");
            }
        }
    }

    #[test]
    fn count_params_on_empty_set_is_zero() {
        assert_eq!(ParamSet::new().count_scalars(), 0);
    }

    #[test]
    fn single_conv_param_count() {
        // 3x3 conv, 64 -> 64 channels with bias: 64*64*9 + 64
        let mut p = ParamSet::new();
        p.insert(
            "conv.weight",
            ArrayD::zeros(ndarray::IxDyn(&[64, 64, 3, 3])),
        );
        p.insert("conv.bias", ArrayD::zeros(ndarray::IxDyn(&[64])));
        assert_eq!(p.count_scalars(), 36_928);
    }

    #[test]
    fn forward_is_pure_and_order_independent() {
        let model = build_model(&tiny_config(), 7).unwrap();
        let a1 = model.forward(0.25).unwrap();
        let a2 = model.forward(0.25).unwrap();
        assert_eq!(a1, a2);
        let b1 = model.forward(0.75).unwrap();
        // evaluate in the other order
        let b2 = model.forward(0.75).unwrap();
        let a3 = model.forward(0.25).unwrap();
        assert_eq!(b1, b2);
        assert_eq!(a1, a3);
    }

    #[test]
    fn forward_output_shape_and_range() {
        let model = build_model(&tiny_config(), 3).unwrap();
        let img = model.forward(1.0).unwrap();
        assert_eq!(img.dim(), (16, 16, 3));
        assert!(img.iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn forward_rejects_out_of_domain_timestamps() {
        let model = build_model(&tiny_config(), 3).unwrap();
        assert!(model.forward(0.0).is_err());
        assert!(model.forward(1.5).is_err());
        assert!(model.forward(-0.1).is_err());
    }

    #[test]
    fn variants_all_run_forward_and_train_tape() {
        for norm in [NormKind::None, NormKind::Batch, NormKind::Instance] {
            for mode in [
                UpscaleMode::PixelShuffle,
                UpscaleMode::TransposeConv,
                UpscaleMode::BilinearConv,
            ] {
                for act in [Activation::Relu, Activation::Gelu] {
                    let mut cfg = tiny_config();
                    cfg.norm = norm;
                    cfg.upscale_mode = mode;
                    cfg.activation = act;
                    let mut model = build_model(&cfg, 5).unwrap();
                    let out = model.forward(0.5).unwrap();
                    assert_eq!(out.dim(), (16, 16, 3));
                    let fwd = model.forward_train(0.5).unwrap();
                    let dloss = Array3::from_elem((16, 16, 3), 1.0 / (16.0 * 16.0 * 3.0));
                    let grads = model.backward(&fwd, &dloss.view());
                    // every trainable tensor receives a gradient
                    for (name, p) in model.params.iter() {
                        let g = grads.get(name).unwrap_or_else(|| panic!("no grad for {name}"));
                        assert_eq!(g.shape(), p.shape());
                    }
                }
            }
        }
    }

    #[test]
    fn identity_embedding_runs() {
        let mut cfg = tiny_config();
        cfg.embedding = EmbeddingKind::Identity;
        let model = build_model(&cfg, 2).unwrap();
        assert_eq!(model.forward(0.5).unwrap().dim(), (16, 16, 3));
    }

    #[test]
    fn params_are_f32_representable() {
        let model = build_model(&tiny_config(), 11).unwrap();
        for (_, t) in model.params.iter() {
            for &v in t.iter() {
                assert_eq!(v, v as f32 as f64);
            }
        }
    }

    #[test]
    fn eval_and_train_forward_agree_without_norm() {
        let mut model = build_model(&tiny_config(), 9).unwrap();
        let eval = model.forward(0.5).unwrap();
        let train = model.forward_train(0.5).unwrap();
        assert_eq!(eval, train.out_hwc);
    }
}
