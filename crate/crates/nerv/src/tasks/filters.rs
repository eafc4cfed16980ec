//! Classical per-frame spatial filters used as denoising baselines.

use ndarray::{Array3, Array4, ArrayView3};

use crate::error::{NervError, Result};
use crate::video::VideoTensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FilterKind {
    /// Gaussian blur, sigma 1.0.
    Gaussian,
    /// Box mean.
    Uniform,
    Median,
    Minimum,
    Maximum,
}

pub const FILTER_KINDS: [FilterKind; 5] = [
    FilterKind::Gaussian,
    FilterKind::Uniform,
    FilterKind::Median,
    FilterKind::Minimum,
    FilterKind::Maximum,
];

impl FilterKind {
    pub fn label(&self) -> &'static str {
        match self {
            FilterKind::Gaussian => "gaussian",
            FilterKind::Uniform => "uniform",
            FilterKind::Median => "median",
            FilterKind::Minimum => "minimum",
            FilterKind::Maximum => "maximum",
        }
    }
}

const GAUSSIAN_SIGMA: f64 = 1.0;

/// Applies the filter per frame and per channel with reflect padding.
/// The window must be odd and at least 3.
pub fn filter_baseline(video: &VideoTensor, kind: FilterKind, window: usize) -> Result<VideoTensor> {
    if window < 3 || window % 2 == 0 {
        return Err(NervError::invalid_config(format!(
            "filter window must be odd and >= 3, got {window}"
        )));
    }
    let dims = video.dims();
    let mut out = Array4::zeros(video.frames.raw_dim());
    for t in 0..dims.frames {
        let filtered = filter_frame(&video.frame(t), kind, window);
        out.index_axis_mut(ndarray::Axis(0), t).assign(&filtered);
    }
    VideoTensor::from_frames(out)
}

pub fn filter_frame(frame: &ArrayView3<'_, f64>, kind: FilterKind, window: usize) -> Array3<f64> {
    let (h, w, channels) = frame.dim();
    let half = (window / 2) as isize;
    let mut out = Array3::zeros((h, w, channels));
    let weights = match kind {
        FilterKind::Gaussian => Some(crate::training::metrics::gaussian_kernel(
            window,
            GAUSSIAN_SIGMA,
        )),
        _ => None,
    };
    let mut values = Vec::with_capacity(window * window);
    for c in 0..channels {
        for y in 0..h {
            for x in 0..w {
                match kind {
                    FilterKind::Gaussian => {
                        let g = weights.as_ref().unwrap();
                        let mut acc = 0.0;
                        for (a, &ga) in g.iter().enumerate() {
                            let yy = reflect(y as isize + a as isize - half, h);
                            for (b, &gb) in g.iter().enumerate() {
                                let xx = reflect(x as isize + b as isize - half, w);
                                acc += ga * gb * frame[(yy, xx, c)];
                            }
                        }
                        out[(y, x, c)] = acc;
                    }
                    FilterKind::Uniform => {
                        let mut acc = 0.0;
                        for a in -half..=half {
                            let yy = reflect(y as isize + a, h);
                            for b in -half..=half {
                                let xx = reflect(x as isize + b, w);
                                acc += frame[(yy, xx, c)];
                            }
                        }
                        out[(y, x, c)] = acc / (window * window) as f64;
                    }
                    FilterKind::Median | FilterKind::Minimum | FilterKind::Maximum => {
                        values.clear();
                        for a in -half..=half {
                            let yy = reflect(y as isize + a, h);
                            for b in -half..=half {
                                let xx = reflect(x as isize + b, w);
                                values.push(frame[(yy, xx, c)]);
                            }
                        }
                        out[(y, x, c)] = match kind {
                            FilterKind::Median => {
                                values.sort_unstable_by(f64::total_cmp);
                                values[values.len() / 2]
                            }
                            FilterKind::Minimum => {
                                values.iter().copied().fold(f64::INFINITY, f64::min)
                            }
                            _ => values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                        };
                    }
                }
            }
        }
    }
    out
}

/// Reflect indexing without edge repetition: -1 -> 1, n -> n-2.
fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let mut i = i;
    loop {
        if i < 0 {
            i = -i;
        } else if i >= n {
            i = 2 * n - 2 - i;
        } else {
            return i as usize;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth;
    use approx::assert_relative_eq;
    use ndarray::Array4;

    #[test]
    fn constant_frames_are_preserved_by_all_filters() {
        let v = VideoTensor::from_frames(Array4::from_elem((1, 8, 8, 3), 0.4)).unwrap();
        for kind in FILTER_KINDS {
            let f = filter_baseline(&v, kind, 3).unwrap();
            for &x in f.frames.iter() {
                assert_relative_eq!(x, 0.4, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn median_rejects_a_single_impulse() {
        let mut frames = Array4::zeros((1, 9, 9, 3));
        frames[(0, 4, 4, 0)] = 1.0;
        let v = VideoTensor::from_frames(frames).unwrap();
        let f = filter_baseline(&v, FilterKind::Median, 3).unwrap();
        assert!(f.frames.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn even_window_is_invalid() {
        let v = synth::gradient_texture(1, 8, 8).unwrap();
        assert!(filter_baseline(&v, FilterKind::Median, 4).is_err());
        assert!(filter_baseline(&v, FilterKind::Median, 1).is_err());
    }

    #[test]
    fn translation_equivariant_on_interior_pixels() {
        // filter(shift(x)) == shift(filter(x)) away from borders
        let v = synth::gradient_texture(1, 12, 12).unwrap();
        let mut shifted = Array4::zeros((1, 12, 12, 3));
        for y in 0..12 {
            for x in 0..11 {
                for c in 0..3 {
                    shifted[(0, y, x + 1, c)] = v.frames[(0, y, x, c)];
                }
            }
        }
        let shifted = VideoTensor::from_frames(shifted).unwrap();
        for kind in FILTER_KINDS {
            let fa = filter_baseline(&v, kind, 3).unwrap();
            let fb = filter_baseline(&shifted, kind, 3).unwrap();
            for y in 2..10 {
                for x in 2..10 {
                    for c in 0..3 {
                        assert_relative_eq!(
                            fa.frames[(0, y, x, c)],
                            fb.frames[(0, y, x + 1, c)],
                            epsilon = 1e-12
                        );
                    }
                }
            }
        }
    }
}
