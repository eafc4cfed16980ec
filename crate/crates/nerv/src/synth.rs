//! Deterministic synthetic clips used by the test suites, the evaluation
//! harness, and the `synth` CLI subcommand. All generators are closed-form in
//! (frame, y, x), so repeated calls are bit-identical.

use ndarray::Array4;

use crate::error::Result;
use crate::video::VideoTensor;

use std::f64::consts::TAU;

/// Smooth translating gradient plus a plaid texture that slides exactly one
/// pixel per frame. Bounded away from 0/1 so a logistic head can match it.
pub fn gradient_texture(frames: usize, height: usize, width: usize) -> Result<VideoTensor> {
    let mut data = Array4::zeros((frames, height, width, 3));
    let fw = width as f64;
    let fh = height as f64;
    let ft = frames.max(1) as f64;
    for i in 0..frames {
        let tau = i as f64 / ft;
        let shift = i as f64 / fw; // 1 px/frame in normalized units
        for y in 0..height {
            let v = y as f64 / fh;
            for x in 0..width {
                let u = x as f64 / fw;
                let grad_a = (TAU * (1.0 * (u + 0.5 * tau) + 0.6 * v)).sin();
                let grad_b = (TAU * (0.7 * u - 0.9 * (v - 0.4 * tau))).sin();
                let plaid = (TAU * 5.0 * (u - shift)).sin() * (TAU * 5.0 * v).sin();
                let fine = (TAU * 9.0 * (u - shift) + TAU * 3.0 * v).sin();
                data[(i, y, x, 0)] = 0.50 + 0.24 * grad_a + 0.13 * plaid + 0.06 * fine;
                data[(i, y, x, 1)] = 0.48 + 0.24 * grad_b + 0.13 * plaid - 0.06 * fine;
                data[(i, y, x, 2)] = 0.52 - 0.20 * grad_a + 0.10 * grad_b + 0.11 * plaid;
            }
        }
    }
    VideoTensor::from_frames(data)
}

/// A soft-edged bright square translating one pixel per frame over a static
/// smooth background; the slow, smooth motion makes held-out frame indices
/// interpolable.
pub fn translating_shape(frames: usize, height: usize, width: usize) -> Result<VideoTensor> {
    let mut data = Array4::zeros((frames, height, width, 3));
    let fw = width as f64;
    let fh = height as f64;
    let side = (height.min(width) as f64 * 0.28).max(4.0);
    let edge = 2.0; // soft edge width in pixels
    let y0 = fh * 0.5 - side * 0.5;
    let x_start = fw * 0.15;
    for i in 0..frames {
        let x0 = x_start + i as f64; // 1 px/frame
        for y in 0..height {
            let v = y as f64 / fh;
            for x in 0..width {
                let u = x as f64 / fw;
                let bg_a = (TAU * (0.8 * u + 0.5 * v)).sin();
                let bg_b = (TAU * (0.4 * u - 0.7 * v)).sin();
                let xf = x as f64;
                let yf = y as f64;
                let inside = soft_step((xf - x0) / edge)
                    * soft_step((x0 + side - xf) / edge)
                    * soft_step((yf - y0) / edge)
                    * soft_step((y0 + side - yf) / edge);
                data[(i, y, x, 0)] = 0.38 + 0.14 * bg_a + 0.42 * inside;
                data[(i, y, x, 1)] = 0.36 + 0.14 * bg_b + 0.30 * inside;
                data[(i, y, x, 2)] = 0.42 - 0.12 * bg_a + 0.18 * inside;
            }
        }
    }
    VideoTensor::from_frames(data)
}

/// A clip whose frames are all identical (static content).
pub fn static_clip(frames: usize, height: usize, width: usize) -> Result<VideoTensor> {
    let one = gradient_texture(1, height, width)?;
    let mut data = Array4::zeros((frames, height, width, 3));
    for i in 0..frames {
        data.index_axis_mut(ndarray::Axis(0), i).assign(&one.frame(0));
    }
    VideoTensor::from_frames(data)
}

fn soft_step(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generators_are_deterministic() {
        let a = gradient_texture(3, 16, 16).unwrap();
        let b = gradient_texture(3, 16, 16).unwrap();
        assert_eq!(a.frames, b.frames);
        assert_eq!(a.fingerprint, b.fingerprint);
    }

    #[test]
    fn values_in_unit_range() {
        let v = gradient_texture(4, 12, 20).unwrap();
        assert!(v.frames.iter().all(|&x| (0.0..=1.0).contains(&x)));
        let s = translating_shape(4, 24, 24).unwrap();
        assert!(s.frames.iter().all(|&x| (0.0..=1.0).contains(&x)));
    }

    #[test]
    fn shape_actually_moves() {
        let v = translating_shape(8, 32, 32).unwrap();
        let d = (&v.frame(7) - &v.frame(0)).mapv(f64::abs).sum();
        assert!(d > 1.0, "translation should change pixels, got {d}");
    }

    #[test]
    fn static_clip_is_static() {
        let v = static_clip(5, 16, 16).unwrap();
        assert_eq!(v.frame(0), v.frame(4));
    }
}
