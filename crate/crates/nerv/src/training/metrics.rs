//! Image quality metrics over `(H, W, C)` tensors with values in `[0, 1]`.
//!
//! SSIM uses the canonical parameters: 11x11 Gaussian window with sigma 1.5,
//! stability constants (0.01*R)^2 and (0.03*R)^2 at dynamic range R = 1, and
//! "valid" window placement (no padding), averaged over channels and
//! positions. MS-SSIM is the 5-scale variant with the standard scale weights,
//! 2x2 average-pool downsampling between scales, and the contrast-structure
//! term at all but the coarsest scale.

use ndarray::{Array2, Array3, ArrayView2, ArrayView3};

use crate::error::{NervError, Result};

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
const SSIM_C1: f64 = 0.01 * 0.01;
const SSIM_C2: f64 = 0.03 * 0.03;
const MS_WEIGHTS: [f64; 5] = [0.0448, 0.2856, 0.3001, 0.2363, 0.1333];

/// Peak signal-to-noise ratio in dB, capped at 100 (the MSE = 0 convention).
pub fn psnr(a: &ArrayView3<'_, f64>, b: &ArrayView3<'_, f64>) -> Result<f64> {
    check_same_shape(a, b)?;
    let n = a.len() as f64;
    let mut sq = 0.0;
    for (&x, &y) in a.iter().zip(b.iter()) {
        let d = x - y;
        sq += d * d;
    }
    let mse = sq / n;
    if mse == 0.0 {
        return Ok(100.0);
    }
    Ok((10.0 * (1.0 / mse).log10()).min(100.0))
}

/// Structural similarity index, averaged over channels and window positions.
pub fn ssim(a: &ArrayView3<'_, f64>, b: &ArrayView3<'_, f64>) -> Result<f64> {
    Ok(ssim_and_cs(a, b)?.0)
}

/// SSIM together with its gradient with respect to the first argument.
pub fn ssim_with_grad(
    pred: &ArrayView3<'_, f64>,
    target: &ArrayView3<'_, f64>,
) -> Result<(f64, Array3<f64>)> {
    check_ssim_inputs(pred, target)?;
    let (h, w, channels) = pred.dim();
    let g = gaussian_kernel(SSIM_WINDOW, SSIM_SIGMA);
    let hv = h - SSIM_WINDOW + 1;
    let wv = w - SSIM_WINDOW + 1;
    let n = (channels * hv * wv) as f64;

    let mut total = 0.0;
    let mut grad = Array3::zeros((h, w, channels));
    for c in 0..channels {
        let x = plane(pred, c);
        let y = plane(target, c);
        let mu_x = sep_conv_valid(&x.view(), &g);
        let mu_y = sep_conv_valid(&y.view(), &g);
        let sxx = sep_conv_valid(&(&x * &x).view(), &g);
        let syy = sep_conv_valid(&(&y * &y).view(), &g);
        let sxy = sep_conv_valid(&(&x * &y).view(), &g);

        let mut u_mu: Array2<f64> = Array2::zeros((hv, wv));
        let mut u_sxx: Array2<f64> = Array2::zeros((hv, wv));
        let mut u_sxy: Array2<f64> = Array2::zeros((hv, wv));
        {
            let mxs = mu_x.as_slice().unwrap();
            let mys = mu_y.as_slice().unwrap();
            let sxxs = sxx.as_slice().unwrap();
            let syys = syy.as_slice().unwrap();
            let sxys = sxy.as_slice().unwrap();
            let u_mus = u_mu.as_slice_mut().unwrap();
            let u_sxxs = u_sxx.as_slice_mut().unwrap();
            let u_sxys = u_sxy.as_slice_mut().unwrap();
            for p in 0..hv * wv {
                let (mx, my) = (mxs[p], mys[p]);
                let var_x = sxxs[p] - mx * mx;
                let var_y = syys[p] - my * my;
                let cov = sxys[p] - mx * my;
                let a1 = 2.0 * mx * my + SSIM_C1;
                let a2 = 2.0 * cov + SSIM_C2;
                let b1 = mx * mx + my * my + SSIM_C1;
                let b2 = var_x + var_y + SSIM_C2;
                let s = (a1 * a2) / (b1 * b2);
                total += s;
                u_mus[p] = 2.0 * my * (a2 - a1) / (b1 * b2) + 2.0 * mx * s * (1.0 / b2 - 1.0 / b1);
                u_sxxs[p] = -s / b2;
                u_sxys[p] = 2.0 * a1 / (b1 * b2);
            }
        }

        let back_mu = sep_conv_adjoint(&u_mu.view(), &g, h, w);
        let back_sxx = sep_conv_adjoint(&u_sxx.view(), &g, h, w);
        let back_sxy = sep_conv_adjoint(&u_sxy.view(), &g, h, w);
        let xs = x.as_slice().unwrap();
        let ys = y.as_slice().unwrap();
        let bm = back_mu.as_slice().unwrap();
        let bxx = back_sxx.as_slice().unwrap();
        let bxy = back_sxy.as_slice().unwrap();
        let gs = grad.as_slice_mut().unwrap();
        for p in 0..h * w {
            gs[p * channels + c] = (bm[p] + 2.0 * xs[p] * bxx[p] + ys[p] * bxy[p]) / n;
        }
    }
    Ok((total / n, grad))
}

/// Multi-scale SSIM with the scale count reduced (and weights renormalized)
/// when the image is too small for 5 dyadic scales.
pub fn ms_ssim(a: &ArrayView3<'_, f64>, b: &ArrayView3<'_, f64>) -> Result<f64> {
    let levels = max_levels(a.dim().0, a.dim().1);
    if levels == 0 {
        return Err(NervError::shape(format!(
            "image {}x{} smaller than the {}x{} SSIM window",
            a.dim().0,
            a.dim().1,
            SSIM_WINDOW,
            SSIM_WINDOW
        )));
    }
    if levels < 5 {
        log::warn!(
            "image {}x{} supports only {} of 5 MS-SSIM scales; weights renormalized",
            a.dim().0,
            a.dim().1,
            levels
        );
    }
    ms_ssim_with_levels(a, b, levels)
}

/// MS-SSIM at an explicit scale count in `[1, 5]`.
pub fn ms_ssim_with_levels(
    a: &ArrayView3<'_, f64>,
    b: &ArrayView3<'_, f64>,
    levels: usize,
) -> Result<f64> {
    if levels == 0 || levels > 5 {
        return Err(NervError::invalid_config(format!(
            "MS-SSIM levels must be in [1, 5], got {levels}"
        )));
    }
    let wsum: f64 = MS_WEIGHTS[..levels].iter().sum();
    let weights: Vec<f64> = MS_WEIGHTS[..levels].iter().map(|w| w / wsum).collect();

    if levels == 1 {
        return ssim(a, b);
    }

    let mut cur_a = a.to_owned();
    let mut cur_b = b.to_owned();
    let mut value = 1.0;
    for (level, &weight) in weights.iter().enumerate() {
        let (s, cs) = ssim_and_cs(&cur_a.view(), &cur_b.view())?;
        if level + 1 == levels {
            value *= s.max(0.0).powf(weight);
        } else {
            value *= cs.max(0.0).powf(weight);
            cur_a = downsample2(&cur_a.view());
            cur_b = downsample2(&cur_b.view());
        }
    }
    Ok(value)
}

/// Largest usable MS-SSIM scale count for an `(h, w)` image (0 if even a
/// single SSIM window does not fit).
pub fn max_levels(h: usize, w: usize) -> usize {
    let mut levels = 0;
    let (mut h, mut w) = (h, w);
    while levels < 5 && h >= SSIM_WINDOW && w >= SSIM_WINDOW {
        levels += 1;
        h /= 2;
        w /= 2;
    }
    levels
}

/// Mean SSIM and mean contrast-structure term over all channels/positions.
pub(crate) fn ssim_and_cs(a: &ArrayView3<'_, f64>, b: &ArrayView3<'_, f64>) -> Result<(f64, f64)> {
    check_ssim_inputs(a, b)?;
    let (h, w, channels) = a.dim();
    let g = gaussian_kernel(SSIM_WINDOW, SSIM_SIGMA);
    let hv = h - SSIM_WINDOW + 1;
    let wv = w - SSIM_WINDOW + 1;
    let n = (channels * hv * wv) as f64;

    let mut s_total = 0.0;
    let mut cs_total = 0.0;
    for c in 0..channels {
        let x = plane(a, c);
        let y = plane(b, c);
        let mu_x = sep_conv_valid(&x.view(), &g);
        let mu_y = sep_conv_valid(&y.view(), &g);
        let sxx = sep_conv_valid(&(&x * &x).view(), &g);
        let syy = sep_conv_valid(&(&y * &y).view(), &g);
        let sxy = sep_conv_valid(&(&x * &y).view(), &g);
        let mxs = mu_x.as_slice().unwrap();
        let mys = mu_y.as_slice().unwrap();
        let sxxs = sxx.as_slice().unwrap();
        let syys = syy.as_slice().unwrap();
        let sxys = sxy.as_slice().unwrap();
        for p in 0..hv * wv {
            let (mx, my) = (mxs[p], mys[p]);
            let var_x = sxxs[p] - mx * mx;
            let var_y = syys[p] - my * my;
            let cov = sxys[p] - mx * my;
            let a1 = 2.0 * mx * my + SSIM_C1;
            let a2 = 2.0 * cov + SSIM_C2;
            let b1 = mx * mx + my * my + SSIM_C1;
            let b2 = var_x + var_y + SSIM_C2;
            s_total += (a1 * a2) / (b1 * b2);
            cs_total += a2 / b2;
        }
    }
    Ok((s_total / n, cs_total / n))
}

fn check_same_shape(a: &ArrayView3<'_, f64>, b: &ArrayView3<'_, f64>) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(NervError::shape(format!(
            "image shapes differ: {:?} vs {:?}",
            a.dim(),
            b.dim()
        )));
    }
    Ok(())
}

fn check_ssim_inputs(a: &ArrayView3<'_, f64>, b: &ArrayView3<'_, f64>) -> Result<()> {
    check_same_shape(a, b)?;
    let (h, w, _) = a.dim();
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(NervError::shape(format!(
            "image {h}x{w} smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} SSIM window"
        )));
    }
    Ok(())
}

fn plane(img: &ArrayView3<'_, f64>, c: usize) -> Array2<f64> {
    img.index_axis(ndarray::Axis(2), c).to_owned()
}

pub(crate) fn gaussian_kernel(len: usize, sigma: f64) -> Vec<f64> {
    let half = (len - 1) as f64 / 2.0;
    let mut g: Vec<f64> = (0..len)
        .map(|i| {
            let d = i as f64 - half;
            (-d * d / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let sum: f64 = g.iter().sum();
    for v in &mut g {
        *v /= sum;
    }
    g
}

/// Separable "valid" cross-correlation: rows first, then columns.
fn sep_conv_valid(x: &ArrayView2<'_, f64>, g: &[f64]) -> Array2<f64> {
    let (h, w) = x.dim();
    let k = g.len();
    let wv = w - k + 1;
    let hv = h - k + 1;
    let x = x.as_standard_layout();
    let xs = x.as_slice().unwrap();
    let mut rows: Array2<f64> = Array2::zeros((h, wv));
    let rs = rows.as_slice_mut().unwrap();
    for i in 0..h {
        let src = &xs[i * w..(i + 1) * w];
        let dst = &mut rs[i * wv..(i + 1) * wv];
        for (t, &gt) in g.iter().enumerate() {
            for (d, &s) in dst.iter_mut().zip(&src[t..t + wv]) {
                *d += gt * s;
            }
        }
    }
    let mut out: Array2<f64> = Array2::zeros((hv, wv));
    let os = out.as_slice_mut().unwrap();
    for i in 0..hv {
        let dst = &mut os[i * wv..(i + 1) * wv];
        for (t, &gt) in g.iter().enumerate() {
            let src = &rs[(i + t) * wv..(i + t + 1) * wv];
            for (d, &s) in dst.iter_mut().zip(src) {
                *d += gt * s;
            }
        }
    }
    out
}

/// Adjoint of [`sep_conv_valid`]: scatters a valid-grid field back onto the
/// `(h, w)` image grid.
fn sep_conv_adjoint(u: &ArrayView2<'_, f64>, g: &[f64], h: usize, w: usize) -> Array2<f64> {
    let (hv, wv) = u.dim();
    let u = u.as_standard_layout();
    let us = u.as_slice().unwrap();
    let mut cols: Array2<f64> = Array2::zeros((h, wv));
    let cs = cols.as_slice_mut().unwrap();
    for i in 0..hv {
        let src = &us[i * wv..(i + 1) * wv];
        for (t, &gt) in g.iter().enumerate() {
            let dst = &mut cs[(i + t) * wv..(i + t + 1) * wv];
            for (d, &s) in dst.iter_mut().zip(src) {
                *d += gt * s;
            }
        }
    }
    let mut out: Array2<f64> = Array2::zeros((h, w));
    let os = out.as_slice_mut().unwrap();
    for i in 0..h {
        let src = &cs[i * wv..(i + 1) * wv];
        let dst = &mut os[i * w..(i + 1) * w];
        for (t, &gt) in g.iter().enumerate() {
            for (d, &s) in dst[t..t + wv].iter_mut().zip(src) {
                *d += gt * s;
            }
        }
    }
    out
}

/// 2x2 average pooling with floor sizes (trailing odd row/column dropped).
fn downsample2(x: &ArrayView3<'_, f64>) -> Array3<f64> {
    let (h, w, c) = x.dim();
    let (ho, wo) = (h / 2, w / 2);
    let mut out = Array3::zeros((ho, wo, c));
    for i in 0..ho {
        for j in 0..wo {
            for ch in 0..c {
                out[(i, j, ch)] = 0.25
                    * (x[(2 * i, 2 * j, ch)]
                        + x[(2 * i, 2 * j + 1, ch)]
                        + x[(2 * i + 1, 2 * j, ch)]
                        + x[(2 * i + 1, 2 * j + 1, ch)]);
            }
        }
    }
    out
}

/// SSIM between two constant images, from the closed form where all variance
/// and covariance terms vanish. Used by tests as an independent oracle and by
/// the loss tests for uniform-offset images against a constant target.
pub fn ssim_constant_images(a: f64, b: f64) -> f64 {
    (2.0 * a * b + SSIM_C1) / (a * a + b * b + SSIM_C1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use ndarray::Array3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(rng: &mut ChaCha8Rng, h: usize, w: usize, c: usize) -> Array3<f64> {
        Array3::from_shape_fn((h, w, c), |_| rng.random::<f64>())
    }

    /// Brute-force SSIM: direct window statistics, no separability tricks.
    /// Kept deliberately independent of the production implementation.
    fn naive_ssim_cs(a: &Array3<f64>, b: &Array3<f64>) -> (f64, f64) {
        let (h, w, channels) = a.dim();
        let g = gaussian_kernel(SSIM_WINDOW, SSIM_SIGMA);
        let mut s_sum = 0.0;
        let mut cs_sum = 0.0;
        let mut count = 0usize;
        for c in 0..channels {
            for i in 0..=(h - SSIM_WINDOW) {
                for j in 0..=(w - SSIM_WINDOW) {
                    let mut mx = 0.0;
                    let mut my = 0.0;
                    let mut sxx = 0.0;
                    let mut syy = 0.0;
                    let mut sxy = 0.0;
                    for p in 0..SSIM_WINDOW {
                        for q in 0..SSIM_WINDOW {
                            let wgt = g[p] * g[q];
                            let xv = a[(i + p, j + q, c)];
                            let yv = b[(i + p, j + q, c)];
                            mx += wgt * xv;
                            my += wgt * yv;
                            sxx += wgt * xv * xv;
                            syy += wgt * yv * yv;
                            sxy += wgt * xv * yv;
                        }
                    }
                    let var_x = sxx - mx * mx;
                    let var_y = syy - my * my;
                    let cov = sxy - mx * my;
                    let a1 = 2.0 * mx * my + 1e-4;
                    let a2 = 2.0 * cov + 9e-4;
                    let b1 = mx * mx + my * my + 1e-4;
                    let b2 = var_x + var_y + 9e-4;
                    s_sum += (a1 * a2) / (b1 * b2);
                    cs_sum += a2 / b2;
                    count += 1;
                }
            }
        }
        (s_sum / count as f64, cs_sum / count as f64)
    }

    /// Brute-force MS-SSIM on top of the naive SSIM.
    fn naive_ms_ssim(a: &Array3<f64>, b: &Array3<f64>, levels: usize) -> f64 {
        let wsum: f64 = MS_WEIGHTS[..levels].iter().sum();
        let mut cur_a = a.clone();
        let mut cur_b = b.clone();
        let mut value = 1.0;
        for level in 0..levels {
            let (s, cs) = naive_ssim_cs(&cur_a, &cur_b);
            let w = MS_WEIGHTS[level] / wsum;
            if level + 1 == levels {
                value *= s.max(0.0).powf(w);
            } else {
                value *= cs.max(0.0).powf(w);
                cur_a = downsample2(&cur_a.view());
                cur_b = downsample2(&cur_b.view());
            }
        }
        value
    }

    #[test]
    fn psnr_basics() {
        let a = Array3::zeros((8, 8, 3));
        let b = a.clone();
        assert_eq!(psnr(&a.view(), &b.view()).unwrap(), 100.0);

        let c = Array3::from_elem((8, 8, 3), 0.1);
        assert_relative_eq!(
            psnr(&a.view(), &c.view()).unwrap(),
            20.0,
            max_relative = 1e-12
        );
    }

    #[test]
    fn psnr_shape_mismatch() {
        let a = Array3::<f64>::zeros((8, 8, 3));
        let b = Array3::<f64>::zeros((8, 9, 3));
        assert!(psnr(&a.view(), &b.view()).is_err());
    }

    #[test]
    fn ssim_identity_and_symmetry() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random_image(&mut rng, 16, 20, 3);
        let b = random_image(&mut rng, 16, 20, 3);
        assert_eq!(ssim(&a.view(), &a.view()).unwrap(), 1.0);
        assert_eq!(
            ssim(&a.view(), &b.view()).unwrap(),
            ssim(&b.view(), &a.view()).unwrap()
        );
    }

    #[test]
    fn ssim_constant_closed_form() {
        let a = Array3::from_elem((16, 16, 1), 0.0);
        let b = Array3::from_elem((16, 16, 1), 1.0);
        let got = ssim(&a.view(), &b.view()).unwrap();
        let expect = ssim_constant_images(0.0, 1.0);
        assert_relative_eq!(got, expect, max_relative = 1e-10);
        assert!(got < 0.001, "constant black vs white should be near 0: {got}");
    }

    #[test]
    fn ssim_matches_bruteforce_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..5 {
            let a = random_image(&mut rng, 14, 17, 2);
            let b = random_image(&mut rng, 14, 17, 2);
            let fast = ssim(&a.view(), &b.view()).unwrap();
            let (slow, _) = naive_ssim_cs(&a, &b);
            assert_relative_eq!(fast, slow, max_relative = 1e-10);
        }
    }

    #[test]
    fn ms_ssim_matches_bruteforce_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_image(&mut rng, 48, 48, 3);
        let mut b = a.clone();
        b.mapv_inplace(|v| (v + 0.05).min(1.0));
        let levels = max_levels(48, 48);
        assert_eq!(levels, 3);
        let fast = ms_ssim(&a.view(), &b.view()).unwrap();
        let slow = naive_ms_ssim(&a, &b, levels);
        assert_relative_eq!(fast, slow, max_relative = 1e-10);
    }

    #[test]
    fn ms_ssim_identity_and_one_level_degenerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = random_image(&mut rng, 32, 32, 3);
        let b = random_image(&mut rng, 32, 32, 3);
        assert_relative_eq!(
            ms_ssim(&a.view(), &a.view()).unwrap(),
            1.0,
            max_relative = 1e-12
        );
        assert_eq!(
            ms_ssim_with_levels(&a.view(), &b.view(), 1).unwrap(),
            ssim(&a.view(), &b.view()).unwrap()
        );
    }

    #[test]
    fn ssim_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut a = random_image(&mut rng, 13, 13, 1);
        let b = random_image(&mut rng, 13, 13, 1);
        let (_, grad) = ssim_with_grad(&a.view(), &b.view()).unwrap();
        let h = 1e-6;
        for &(i, j) in &[(0usize, 0usize), (6, 6), (12, 12), (3, 9)] {
            let orig = a[(i, j, 0)];
            a[(i, j, 0)] = orig + h;
            let up = ssim(&a.view(), &b.view()).unwrap();
            a[(i, j, 0)] = orig - h;
            let down = ssim(&a.view(), &b.view()).unwrap();
            a[(i, j, 0)] = orig;
            let fd = (up - down) / (2.0 * h);
            assert_relative_eq!(grad[(i, j, 0)], fd, max_relative = 1e-5, epsilon = 1e-10);
        }
    }

    #[test]
    fn window_larger_than_image_is_rejected() {
        let a = Array3::<f64>::zeros((8, 8, 1));
        assert!(ssim(&a.view(), &a.view()).is_err());
        assert!(ms_ssim(&a.view(), &a.view()).is_err());
    }
}
