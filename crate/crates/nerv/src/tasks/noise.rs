//! Deterministic pixel-corruption patterns for the denoising evaluation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{NervError, Result};
use crate::video::VideoTensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoisePattern {
    /// Chosen pixels become 1.0 on all channels.
    White,
    /// Chosen pixels become 0.0.
    Black,
    /// Chosen pixels become 0.0 or 1.0 with equal probability.
    SaltPepper,
    /// Chosen pixels get an independent uniform RGB color.
    Random,
}

#[derive(Debug, Clone, Copy)]
pub struct NoiseSpec {
    pub pattern: NoisePattern,
    /// Fraction of pixels perturbed per frame; exactly
    /// `floor(density * H * W)` pixels change.
    pub density: f64,
    pub seed: u64,
}

/// Perturbs exactly `floor(density * H * W)` distinct pixels per frame at
/// locations drawn from a per-frame stream of the seed, so the corruption is
/// reproducible pixel-for-pixel.
pub fn add_noise(video: &VideoTensor, spec: &NoiseSpec) -> Result<VideoTensor> {
    if !(0.0..=1.0).contains(&spec.density) {
        return Err(NervError::invalid_config(format!(
            "noise density {} outside [0, 1]",
            spec.density
        )));
    }
    let dims = video.dims();
    let per_frame = (spec.density * (dims.height * dims.width) as f64).floor() as usize;
    let mut frames = video.frames.clone();
    for t in 0..dims.frames {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        rng.set_stream(t as u64 + 1);
        let mut positions: Vec<u32> = (0..(dims.height * dims.width) as u32).collect();
        // partial Fisher-Yates: the first `per_frame` entries become the sample
        for i in 0..per_frame {
            let j = rng.random_range(i..positions.len());
            positions.swap(i, j);
        }
        for &p in &positions[..per_frame] {
            let (y, x) = ((p as usize) / dims.width, (p as usize) % dims.width);
            let value: [f64; 3] = match spec.pattern {
                NoisePattern::White => [1.0; 3],
                NoisePattern::Black => [0.0; 3],
                NoisePattern::SaltPepper => {
                    if rng.random::<bool>() {
                        [1.0; 3]
                    } else {
                        [0.0; 3]
                    }
                }
                NoisePattern::Random => {
                    [rng.random::<f64>(), rng.random::<f64>(), rng.random::<f64>()]
                }
            };
            for c in 0..3 {
                frames[(t, y, x, c)] = value[c];
            }
        }
    }
    VideoTensor::from_frames(frames)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth;

    fn changed_pixels(a: &VideoTensor, b: &VideoTensor, t: usize) -> usize {
        let fa = a.frame(t);
        let fb = b.frame(t);
        let (h, w, _) = fa.dim();
        let mut n = 0;
        for y in 0..h {
            for x in 0..w {
                if (0..3).any(|c| fa[(y, x, c)] != fb[(y, x, c)]) {
                    n += 1;
                }
            }
        }
        n
    }

    #[test]
    fn zero_density_is_identity() {
        let v = synth::gradient_texture(3, 16, 16).unwrap();
        let spec = NoiseSpec {
            pattern: NoisePattern::SaltPepper,
            density: 0.0,
            seed: 1,
        };
        let noisy = add_noise(&v, &spec).unwrap();
        assert_eq!(noisy.frames, v.frames);
    }

    #[test]
    fn full_density_white_is_all_ones() {
        let v = synth::gradient_texture(2, 8, 8).unwrap();
        let spec = NoiseSpec {
            pattern: NoisePattern::White,
            density: 1.0,
            seed: 1,
        };
        let noisy = add_noise(&v, &spec).unwrap();
        assert!(noisy.frames.iter().all(|&x| x == 1.0));
    }

    #[test]
    fn exact_pixel_count_and_reproducibility() {
        let v = synth::gradient_texture(4, 20, 20).unwrap();
        let spec = NoiseSpec {
            pattern: NoisePattern::SaltPepper,
            density: 0.05,
            seed: 7,
        };
        let noisy = add_noise(&v, &spec).unwrap();
        let expected = (0.05f64 * 400.0).floor() as usize; // 20
        for t in 0..4 {
            // perturbed-to-same-value collisions are possible in principle but
            // the synthetic clip has no exact 0/1 pixels
            assert_eq!(changed_pixels(&v, &noisy, t), expected, "frame {t}");
        }
        let again = add_noise(&v, &spec).unwrap();
        assert_eq!(noisy.frames, again.frames);
        assert_ne!(noisy.frame(0), noisy.frame(1));
    }

    #[test]
    fn density_out_of_range_is_invalid() {
        let v = synth::gradient_texture(1, 8, 8).unwrap();
        let spec = NoiseSpec {
            pattern: NoisePattern::White,
            density: 1.5,
            seed: 0,
        };
        assert!(add_noise(&v, &spec).is_err());
    }
}
