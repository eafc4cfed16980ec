//! Numeric kernels: linear layers, same-padding convolution via im2col,
//! sub-pixel rearrangement, bilinear resize, activations and per-channel
//! normalization.
//!
//! Forward kernels are generic over the float type so decoding can run at
//! reduced precision; backward kernels are f64 only (training precision).

use ndarray::{
    Array1, Array2, Array3, Array4, ArrayView1, ArrayView2, ArrayView3, ArrayView4, NdFloat,
};

use crate::error::{NervError, Result};
use crate::nerv::config::Activation;

// ---------------------------------------------------------------------------
// Linear

/// `y = W x + b` with `W` of shape `(out, in)`.
pub fn linear_forward<F: NdFloat>(
    w: &ArrayView2<'_, F>,
    b: &ArrayView1<'_, F>,
    x: &ArrayView1<'_, F>,
) -> Array1<F> {
    let mut y = w.dot(x);
    y += b;
    y
}

pub fn linear_backward(
    w: &ArrayView2<'_, f64>,
    x: &ArrayView1<'_, f64>,
    dy: &ArrayView1<'_, f64>,
) -> (Array1<f64>, Array2<f64>, Array1<f64>) {
    let dx = w.t().dot(dy);
    let (out, inp) = w.dim();
    let mut dw: Array2<f64> = Array2::zeros((out, inp));
    let dws = dw.as_slice_mut().unwrap();
    for o in 0..out {
        let g = dy[o];
        if g != 0.0 {
            for (d, &xv) in dws[o * inp..(o + 1) * inp].iter_mut().zip(x.iter()) {
                *d = g * xv;
            }
        }
    }
    (dx, dw, dy.to_owned())
}

// ---------------------------------------------------------------------------
// Convolution (same padding, odd kernel)

/// Valid source/destination spans for one kernel offset of a same-padding
/// convolution: rows `i` in `i_lo..i_hi` and columns `j` in `j_lo..j_hi`
/// touch in-bounds pixels at `(i + a - p, j + b - p)`.
#[inline]
fn tap_spans(n: usize, off: usize, p: usize) -> (usize, usize) {
    (p.saturating_sub(off), n.min(n + p - off))
}

/// Unfolds `(C, H, W)` into `(C*k*k, H*W)` patch columns with zero padding
/// `(k-1)/2` so the convolution preserves spatial size.
pub fn im2col<F: NdFloat>(x: &ArrayView3<'_, F>, k: usize) -> Array2<F> {
    let (c_in, h, w) = x.dim();
    let p = (k - 1) / 2;
    let x = x.as_standard_layout();
    let xs = x.as_slice().unwrap();
    let mut cols = Array2::zeros((c_in * k * k, h * w));
    let cs = cols.as_slice_mut().unwrap();
    for c in 0..c_in {
        for a in 0..k {
            let (i_lo, i_hi) = tap_spans(h, a, p);
            for b in 0..k {
                let (j_lo, j_hi) = tap_spans(w, b, p);
                if j_lo >= j_hi {
                    continue;
                }
                let row_base = ((c * k + a) * k + b) * (h * w);
                let len = j_hi - j_lo;
                for i in i_lo..i_hi {
                    let src = c * h * w + (i + a - p) * w + (j_lo + b - p);
                    let dst = row_base + i * w + j_lo;
                    cs[dst..dst + len].copy_from_slice(&xs[src..src + len]);
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`]: accumulates patch-column gradients back onto the
/// `(C, H, W)` grid.
pub fn col2im(dcols: &ArrayView2<'_, f64>, dim: (usize, usize, usize), k: usize) -> Array3<f64> {
    let (c_in, h, w) = dim;
    let p = (k - 1) / 2;
    let dcols = dcols.as_standard_layout();
    let ds = dcols.as_slice().unwrap();
    let mut dx = Array3::zeros(dim);
    let xs = dx.as_slice_mut().unwrap();
    for c in 0..c_in {
        for a in 0..k {
            let (i_lo, i_hi) = tap_spans(h, a, p);
            for b in 0..k {
                let (j_lo, j_hi) = tap_spans(w, b, p);
                if j_lo >= j_hi {
                    continue;
                }
                let row_base = ((c * k + a) * k + b) * (h * w);
                let len = j_hi - j_lo;
                for i in i_lo..i_hi {
                    let dst = c * h * w + (i + a - p) * w + (j_lo + b - p);
                    let src = row_base + i * w + j_lo;
                    for (d, &s) in xs[dst..dst + len].iter_mut().zip(&ds[src..src + len]) {
                        *d += s;
                    }
                }
            }
        }
    }
    dx
}

/// Convolution over precomputed patch columns. `w` has shape
/// `(C_out, C_in, k, k)`; the output is `(C_out, h, w)`.
pub fn conv2d_from_cols<F: NdFloat>(
    w: &ArrayView4<'_, F>,
    b: &ArrayView1<'_, F>,
    cols: &ArrayView2<'_, F>,
    out_hw: (usize, usize),
) -> Array3<F> {
    let (c_out, c_in, k, _) = w.dim();
    let wm = w.to_shape((c_out, c_in * k * k)).unwrap();
    let mut ymat = wm.dot(cols);
    for (mut row, &bias) in ymat.rows_mut().into_iter().zip(b.iter()) {
        row += bias;
    }
    ymat.into_shape_with_order((c_out, out_hw.0, out_hw.1))
        .unwrap()
}

pub fn conv2d<F: NdFloat>(
    w: &ArrayView4<'_, F>,
    b: &ArrayView1<'_, F>,
    x: &ArrayView3<'_, F>,
) -> Array3<F> {
    let k = w.dim().2;
    let cols = im2col(x, k);
    conv2d_from_cols(w, b, &cols.view(), (x.dim().1, x.dim().2))
}

/// Gradients of a same-padding convolution given the cached input columns.
pub fn conv2d_backward(
    w: &ArrayView4<'_, f64>,
    cols: &ArrayView2<'_, f64>,
    x_dim: (usize, usize, usize),
    dy: &ArrayView3<'_, f64>,
) -> (Array3<f64>, Array4<f64>, Array1<f64>) {
    let (c_out, c_in, k, _) = w.dim();
    let (_, h, wd) = dy.dim();
    let dy_mat = dy.to_shape((c_out, h * wd)).unwrap();
    let dw_mat = dy_mat.dot(&cols.t());
    let dw = dw_mat.into_shape_with_order((c_out, c_in, k, k)).unwrap();
    let db = dy_mat.sum_axis(ndarray::Axis(1));
    let wm = w.to_shape((c_out, c_in * k * k)).unwrap();
    let dcols = wm.t().dot(&dy_mat);
    let dx = col2im(&dcols.view(), x_dim, k);
    (dx, dw, db)
}

// ---------------------------------------------------------------------------
// Sub-pixel rearrangement

/// Rearranges `(C*S^2, h, w)` to `(C, S*h, S*w)` with the channel-major
/// convention `out(c, S*i + a, S*j + d) = in(c*S^2 + a*S + d, i, j)`.
/// A pure permutation of the elements.
pub fn pixel_shuffle<F: NdFloat>(x: &ArrayView3<'_, F>, s: usize) -> Result<Array3<F>> {
    if s == 0 {
        return Err(NervError::invalid_config("shuffle factor must be positive"));
    }
    let (c_big, h, w) = x.dim();
    if c_big % (s * s) != 0 {
        return Err(NervError::shape(format!(
            "channel count {c_big} not divisible by {}^2",
            s
        )));
    }
    let c = c_big / (s * s);
    let x = x.as_standard_layout();
    let xs = x.as_slice().unwrap();
    let (sh, sw) = (s * h, s * w);
    let mut out = Array3::zeros((c, sh, sw));
    let os = out.as_slice_mut().unwrap();
    for ch in 0..c {
        for a in 0..s {
            for d in 0..s {
                let src_plane = (ch * s * s + a * s + d) * (h * w);
                for i in 0..h {
                    let src_row = &xs[src_plane + i * w..src_plane + (i + 1) * w];
                    let dst_base = ch * sh * sw + (s * i + a) * sw + d;
                    let dst = &mut os[dst_base..dst_base + s * (w - 1) + 1];
                    for (o, &v) in dst.iter_mut().step_by(s).zip(src_row) {
                        *o = v;
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Exact inverse of [`pixel_shuffle`]; also its gradient map.
pub fn pixel_unshuffle<F: NdFloat>(y: &ArrayView3<'_, F>, s: usize) -> Result<Array3<F>> {
    if s == 0 {
        return Err(NervError::invalid_config("shuffle factor must be positive"));
    }
    let (c, hs, ws) = y.dim();
    if hs % s != 0 || ws % s != 0 {
        return Err(NervError::shape(format!(
            "spatial {hs}x{ws} not divisible by {s}"
        )));
    }
    let (h, w) = (hs / s, ws / s);
    let y = y.as_standard_layout();
    let ys = y.as_slice().unwrap();
    let mut out = Array3::zeros((c * s * s, h, w));
    let os = out.as_slice_mut().unwrap();
    for ch in 0..c {
        for a in 0..s {
            for d in 0..s {
                let dst_plane = (ch * s * s + a * s + d) * (h * w);
                for i in 0..h {
                    let src_base = ch * hs * ws + (s * i + a) * ws + d;
                    let src = &ys[src_base..src_base + s * (w - 1) + 1];
                    let dst = &mut os[dst_plane + i * w..dst_plane + (i + 1) * w];
                    for (o, &v) in dst.iter_mut().zip(src.iter().step_by(s)) {
                        *o = v;
                    }
                }
            }
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Bilinear resize (integer upscale, half-pixel centers)

fn resize_table(n_in: usize, s: usize) -> Vec<(usize, usize, f64)> {
    let n_out = n_in * s;
    (0..n_out)
        .map(|o| {
            let src = (o as f64 + 0.5) / s as f64 - 0.5;
            let src = src.clamp(0.0, (n_in - 1) as f64);
            let i0 = src.floor() as usize;
            let i1 = (i0 + 1).min(n_in - 1);
            (i0, i1, src - i0 as f64)
        })
        .collect()
}

pub fn bilinear_upsample<F: NdFloat>(x: &ArrayView3<'_, F>, s: usize) -> Array3<F> {
    let (c, h, w) = x.dim();
    let rows = resize_table(h, s);
    let cols = resize_table(w, s);
    let mut out = Array3::zeros((c, h * s, w * s));
    for ch in 0..c {
        for (oy, &(y0, y1, fy)) in rows.iter().enumerate() {
            let fy = F::from(fy).unwrap();
            for (ox, &(x0, x1, fx)) in cols.iter().enumerate() {
                let fx = F::from(fx).unwrap();
                let top = x[(ch, y0, x0)] * (F::one() - fx) + x[(ch, y0, x1)] * fx;
                let bot = x[(ch, y1, x0)] * (F::one() - fx) + x[(ch, y1, x1)] * fx;
                out[(ch, oy, ox)] = top * (F::one() - fy) + bot * fy;
            }
        }
    }
    out
}

pub fn bilinear_upsample_backward(
    dy: &ArrayView3<'_, f64>,
    in_dim: (usize, usize, usize),
    s: usize,
) -> Array3<f64> {
    let (c, h, w) = in_dim;
    let rows = resize_table(h, s);
    let cols = resize_table(w, s);
    let mut dx = Array3::zeros(in_dim);
    for ch in 0..c {
        for (oy, &(y0, y1, fy)) in rows.iter().enumerate() {
            for (ox, &(x0, x1, fx)) in cols.iter().enumerate() {
                let g = dy[(ch, oy, ox)];
                dx[(ch, y0, x0)] += g * (1.0 - fy) * (1.0 - fx);
                dx[(ch, y0, x1)] += g * (1.0 - fy) * fx;
                dx[(ch, y1, x0)] += g * fy * (1.0 - fx);
                dx[(ch, y1, x1)] += g * fy * fx;
            }
        }
    }
    dx
}

// ---------------------------------------------------------------------------
// Activations

const LEAKY_SLOPE: f64 = 0.01;
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)
const GELU_A: f64 = 0.044_715;

impl Activation {
    pub fn eval<F: NdFloat>(self, x: F) -> F {
        match self {
            Activation::Relu => {
                if x > F::zero() {
                    x
                } else {
                    F::zero()
                }
            }
            Activation::LeakyRelu => {
                if x > F::zero() {
                    x
                } else {
                    x * F::from(LEAKY_SLOPE).unwrap()
                }
            }
            Activation::Swish => x / (F::one() + (-x).exp()),
            Activation::Gelu => {
                let c = F::from(GELU_C).unwrap();
                let a = F::from(GELU_A).unwrap();
                let half = F::from(0.5).unwrap();
                let u = c * (x + a * x * x * x);
                half * x * (F::one() + u.tanh())
            }
        }
    }

    /// Derivative with respect to the pre-activation value.
    pub fn grad(self, x: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::LeakyRelu => {
                if x > 0.0 {
                    1.0
                } else {
                    LEAKY_SLOPE
                }
            }
            Activation::Swish => {
                let sig = 1.0 / (1.0 + (-x).exp());
                sig * (1.0 + x * (1.0 - sig))
            }
            Activation::Gelu => {
                let u = GELU_C * (x + GELU_A * x * x * x);
                let t = u.tanh();
                0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
            }
        }
    }
}

pub fn sigmoid<F: NdFloat>(x: F) -> F {
    F::one() / (F::one() + (-x).exp())
}

// ---------------------------------------------------------------------------
// Per-channel normalization over (H, W)

pub struct NormCache {
    pub xhat: Array3<f64>,
    pub inv_std: Vec<f64>,
}

pub struct NormStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

const NORM_EPS: f64 = 1e-5;

/// Normalizes each channel by its own spatial statistics (the training path
/// for batch statistics at batch dimension 1, and the only path for instance
/// normalization). Variance is biased.
pub fn channel_norm_train(
    x: &ArrayView3<'_, f64>,
    gamma: &ArrayView1<'_, f64>,
    beta: &ArrayView1<'_, f64>,
) -> (Array3<f64>, NormCache, NormStats) {
    let (c, h, w) = x.dim();
    let m = (h * w) as f64;
    let mut y = Array3::zeros((c, h, w));
    let mut xhat = Array3::zeros((c, h, w));
    let mut inv_std = Vec::with_capacity(c);
    let mut means = Vec::with_capacity(c);
    let mut vars = Vec::with_capacity(c);
    for ch in 0..c {
        let plane = x.index_axis(ndarray::Axis(0), ch);
        let mean = plane.sum() / m;
        let var = plane.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / m;
        let istd = 1.0 / (var + NORM_EPS).sqrt();
        for i in 0..h {
            for j in 0..w {
                let xh = (plane[(i, j)] - mean) * istd;
                xhat[(ch, i, j)] = xh;
                y[(ch, i, j)] = gamma[ch] * xh + beta[ch];
            }
        }
        inv_std.push(istd);
        means.push(mean);
        vars.push(var);
    }
    (
        y,
        NormCache { xhat, inv_std },
        NormStats {
            mean: means,
            var: vars,
        },
    )
}

pub fn channel_norm_backward(
    cache: &NormCache,
    gamma: &ArrayView1<'_, f64>,
    dy: &ArrayView3<'_, f64>,
) -> (Array3<f64>, Array1<f64>, Array1<f64>) {
    let (c, h, w) = dy.dim();
    let m = (h * w) as f64;
    let mut dx = Array3::zeros((c, h, w));
    let mut dgamma = Array1::zeros(c);
    let mut dbeta = Array1::zeros(c);
    for ch in 0..c {
        let mut sum_dy = 0.0;
        let mut sum_dy_xhat = 0.0;
        for i in 0..h {
            for j in 0..w {
                let g = dy[(ch, i, j)];
                sum_dy += g;
                sum_dy_xhat += g * cache.xhat[(ch, i, j)];
            }
        }
        dgamma[ch] = sum_dy_xhat;
        dbeta[ch] = sum_dy;
        let k = gamma[ch] * cache.inv_std[ch];
        let mean_dy = sum_dy / m;
        let mean_dy_xhat = sum_dy_xhat / m;
        for i in 0..h {
            for j in 0..w {
                dx[(ch, i, j)] = k
                    * (dy[(ch, i, j)] - mean_dy - cache.xhat[(ch, i, j)] * mean_dy_xhat);
            }
        }
    }
    (dx, dgamma, dbeta)
}

/// Normalization with fixed statistics (the evaluation path for batch norm).
pub fn channel_norm_eval<F: NdFloat>(
    x: &ArrayView3<'_, F>,
    gamma: &ArrayView1<'_, F>,
    beta: &ArrayView1<'_, F>,
    mean: &ArrayView1<'_, F>,
    var: &ArrayView1<'_, F>,
) -> Array3<F> {
    let (c, h, w) = x.dim();
    let eps = F::from(NORM_EPS).unwrap();
    let mut y = Array3::zeros((c, h, w));
    for ch in 0..c {
        let istd = F::one() / (var[ch] + eps).sqrt();
        for i in 0..h {
            for j in 0..w {
                y[(ch, i, j)] = gamma[ch] * (x[(ch, i, j)] - mean[ch]) * istd + beta[ch];
            }
        }
    }
    y
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand3(rng: &mut ChaCha8Rng, dim: (usize, usize, usize)) -> Array3<f64> {
        Array3::from_shape_fn(dim, |_| rng.random::<f64>() * 2.0 - 1.0)
    }

    #[test]
    fn conv_matches_direct_computation() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = rand3(&mut rng, (2, 5, 6));
        let w = Array4::from_shape_fn((3, 2, 3, 3), |_| rng.random::<f64>() - 0.5);
        let b = Array1::from_shape_fn(3, |_| rng.random::<f64>() - 0.5);
        let y = conv2d(&w.view(), &b.view(), &x.view());
        assert_eq!(y.dim(), (3, 5, 6));
        // direct sliding-window evaluation
        for o in 0..3 {
            for i in 0..5i64 {
                for j in 0..6i64 {
                    let mut acc = b[o];
                    for c in 0..2 {
                        for a in 0..3i64 {
                            for d in 0..3i64 {
                                let (yy, xx) = (i + a - 1, j + d - 1);
                                if (0..5).contains(&yy) && (0..6).contains(&xx) {
                                    acc += w[(o, c, a as usize, d as usize)]
                                        * x[(c, yy as usize, xx as usize)];
                                }
                            }
                        }
                    }
                    assert_relative_eq!(y[(o, i as usize, j as usize)], acc, epsilon = 1e-12);
                }
            }
        }
    }

    #[test]
    fn conv_backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let x = rand3(&mut rng, (2, 4, 4));
        let mut w = Array4::from_shape_fn((2, 2, 3, 3), |_| rng.random::<f64>() - 0.5);
        let b = Array1::from_shape_fn(2, |_| rng.random::<f64>() - 0.5);
        let dy = rand3(&mut rng, (2, 4, 4));

        let cols = im2col(&x.view(), 3);
        let (dx, dw, db) =
            conv2d_backward(&w.view(), &cols.view(), x.dim(), &dy.view());

        let loss = |w: &Array4<f64>, x: &Array3<f64>| -> f64 {
            let y = conv2d(&w.view(), &b.view(), &x.view());
            (&y * &dy).sum()
        };
        let h = 1e-6;
        // a few weight coordinates
        for &idx in &[(0, 0, 0, 0), (1, 1, 2, 2), (0, 1, 1, 0)] {
            let orig = w[idx];
            w[idx] = orig + h;
            let up = loss(&w, &x);
            w[idx] = orig - h;
            let down = loss(&w, &x);
            w[idx] = orig;
            assert_relative_eq!(dw[idx], (up - down) / (2.0 * h), max_relative = 1e-6);
        }
        // a few input coordinates
        let mut x2 = x.clone();
        for &idx in &[(0, 0, 0), (1, 3, 3), (0, 2, 1)] {
            let orig = x2[idx];
            x2[idx] = orig + h;
            let up = loss(&w, &x2);
            x2[idx] = orig - h;
            let down = loss(&w, &x2);
            x2[idx] = orig;
            assert_relative_eq!(dx[idx], (up - down) / (2.0 * h), max_relative = 1e-6);
        }
        assert_relative_eq!(db[0], dy.index_axis(ndarray::Axis(0), 0).sum(), epsilon = 1e-12);
    }

    #[test]
    fn shuffle_layout_matches_stated_convention() {
        // channels [a, b, c, d] at 1x1, S = 2 -> [[a, b], [c, d]]
        let x = Array3::from_shape_vec((4, 1, 1), vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let y = pixel_shuffle(&x.view(), 2).unwrap();
        assert_eq!(y.dim(), (1, 2, 2));
        assert_eq!(y[(0, 0, 0)], 1.0);
        assert_eq!(y[(0, 0, 1)], 2.0);
        assert_eq!(y[(0, 1, 0)], 3.0);
        assert_eq!(y[(0, 1, 1)], 4.0);
    }

    #[test]
    fn shuffle_index_map_against_bruteforce_oracle() {
        // Enumerate the permutation directly from the convention and compare
        // every element.
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let (c, h, w, s) = (3usize, 2usize, 4usize, 2usize);
        let x = rand3(&mut rng, (c * s * s, h, w));
        let y = pixel_shuffle(&x.view(), s).unwrap();
        for ch in 0..c {
            for i in 0..h {
                for j in 0..w {
                    for a in 0..s {
                        for d in 0..s {
                            assert_eq!(
                                y[(ch, s * i + a, s * j + d)],
                                x[(ch * s * s + a * s + d, i, j)]
                            );
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn shuffle_is_a_bijection_and_unshuffle_inverts() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let x = rand3(&mut rng, (8, 3, 5));
        let y = pixel_shuffle(&x.view(), 2).unwrap();
        // multiset equality
        let mut a: Vec<f64> = x.iter().copied().collect();
        let mut b: Vec<f64> = y.iter().copied().collect();
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        assert_eq!(a, b);
        // exact inverse
        let back = pixel_unshuffle(&y.view(), 2).unwrap();
        assert_eq!(back, x);
    }

    #[test]
    fn shuffle_identity_at_factor_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let x = rand3(&mut rng, (3, 4, 4));
        assert_eq!(pixel_shuffle(&x.view(), 1).unwrap(), x);
    }

    #[test]
    fn shuffle_shape_errors() {
        let x = Array3::<f64>::zeros((5, 2, 2));
        assert!(pixel_shuffle(&x.view(), 2).is_err());
    }

    #[test]
    fn activation_gradients_match_finite_differences() {
        let h = 1e-6;
        for act in [
            Activation::Relu,
            Activation::LeakyRelu,
            Activation::Swish,
            Activation::Gelu,
        ] {
            for &x in &[-1.7, -0.3, 0.4, 1.9] {
                let fd = (act.eval(x + h) - act.eval(x - h)) / (2.0 * h);
                assert_relative_eq!(act.grad(x), fd, max_relative = 1e-6, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn linear_backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let w = Array2::from_shape_fn((3, 4), |_| rng.random::<f64>() - 0.5);
        let b = Array1::from_shape_fn(3, |_| rng.random::<f64>() - 0.5);
        let x = Array1::from_shape_fn(4, |_| rng.random::<f64>() - 0.5);
        let dy = Array1::from_shape_fn(3, |_| rng.random::<f64>() - 0.5);
        let (dx, dw, db) = linear_backward(&w.view(), &x.view(), &dy.view());
        let loss = |w: &Array2<f64>, x: &Array1<f64>| {
            (&linear_forward(&w.view(), &b.view(), &x.view()) * &dy).sum()
        };
        let h = 1e-6;
        let mut w2 = w.clone();
        w2[(1, 2)] += h;
        let up = loss(&w2, &x);
        w2[(1, 2)] -= 2.0 * h;
        let down = loss(&w2, &x);
        assert_relative_eq!(dw[(1, 2)], (up - down) / (2.0 * h), max_relative = 1e-6);
        let mut x2 = x.clone();
        x2[3] += h;
        let up = loss(&w, &x2);
        x2[3] -= 2.0 * h;
        let down = loss(&w, &x2);
        assert_relative_eq!(dx[3], (up - down) / (2.0 * h), max_relative = 1e-6);
        assert_eq!(db, dy);
    }

    #[test]
    fn norm_backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let x = rand3(&mut rng, (2, 3, 3));
        let gamma = Array1::from_shape_fn(2, |_| 0.5 + rng.random::<f64>());
        let beta = Array1::from_shape_fn(2, |_| rng.random::<f64>() - 0.5);
        let dy = rand3(&mut rng, (2, 3, 3));
        let (_, cache, _) = channel_norm_train(&x.view(), &gamma.view(), &beta.view());
        let (dx, dgamma, dbeta) = channel_norm_backward(&cache, &gamma.view(), &dy.view());

        let loss = |x: &Array3<f64>, gamma: &Array1<f64>, beta: &Array1<f64>| {
            let (y, _, _) = channel_norm_train(&x.view(), &gamma.view(), &beta.view());
            (&y * &dy).sum()
        };
        let h = 1e-6;
        let mut x2 = x.clone();
        for &idx in &[(0, 0, 0), (1, 2, 1)] {
            let orig = x2[idx];
            x2[idx] = orig + h;
            let up = loss(&x2, &gamma, &beta);
            x2[idx] = orig - h;
            let down = loss(&x2, &gamma, &beta);
            x2[idx] = orig;
            assert_relative_eq!(dx[idx], (up - down) / (2.0 * h), max_relative = 1e-5, epsilon = 1e-9);
        }
        let mut g2 = gamma.clone();
        g2[0] += h;
        let up = loss(&x, &g2, &beta);
        g2[0] -= 2.0 * h;
        let down = loss(&x, &g2, &beta);
        assert_relative_eq!(dgamma[0], (up - down) / (2.0 * h), max_relative = 1e-5);
        let mut b2 = beta.clone();
        b2[1] += h;
        let up = loss(&x, &gamma, &b2);
        b2[1] -= 2.0 * h;
        let down = loss(&x, &gamma, &b2);
        assert_relative_eq!(dbeta[1], (up - down) / (2.0 * h), max_relative = 1e-5);
    }

    #[test]
    fn bilinear_backward_is_the_adjoint() {
        // <upsample(x), dy> == <x, backward(dy)> for random tensors
        let mut rng = ChaCha8Rng::seed_from_u64(18);
        let x = rand3(&mut rng, (2, 3, 4));
        let dy = rand3(&mut rng, (2, 6, 8));
        let y = bilinear_upsample(&x.view(), 2);
        let dx = bilinear_upsample_backward(&dy.view(), x.dim(), 2);
        let lhs = (&y * &dy).sum();
        let rhs = (&x * &dx).sum();
        assert_relative_eq!(lhs, rhs, max_relative = 1e-12);
    }

    #[test]
    fn bilinear_preserves_constants() {
        let x = Array3::from_elem((1, 3, 3), 0.7);
        let y = bilinear_upsample(&x.view(), 3);
        assert_eq!(y.dim(), (1, 9, 9));
        for &v in y.iter() {
            assert_relative_eq!(v, 0.7, epsilon = 1e-12);
        }
    }
}
