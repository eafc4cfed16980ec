//! Frame-sequence container and PNG directory I/O.

use std::path::Path;

use ndarray::{Array3, Array4, ArrayView3};

use crate::error::{NervError, Result};

/// A frame sequence with pixel values in `[0, 1]`, shape `(T, H, W, 3)`.
#[derive(Debug, Clone)]
pub struct VideoTensor {
    pub frames: Array4<f64>,
    /// Content hash of the source pixel data (FNV-1a over 8-bit encoding).
    pub fingerprint: u64,
    /// Source filenames in load order; synthetic clips use generated names.
    pub filenames: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VideoDims {
    pub frames: usize,
    pub height: usize,
    pub width: usize,
}

impl VideoDims {
    pub fn pixels(&self) -> u64 {
        self.frames as u64 * self.height as u64 * self.width as u64
    }
}

impl VideoTensor {
    /// Wraps a `(T, H, W, 3)` tensor, clamping values into `[0, 1]`.
    pub fn from_frames(mut frames: Array4<f64>) -> Result<Self> {
        let &[t, _, _, c] = frames.shape() else {
            unreachable!()
        };
        if t == 0 {
            return Err(NervError::data("video must contain at least one frame"));
        }
        if c != 3 {
            return Err(NervError::shape(format!(
                "expected 3 channels, got {c}"
            )));
        }
        frames.mapv_inplace(|v| v.clamp(0.0, 1.0));
        let fingerprint = fingerprint_frames(&frames);
        let filenames = (0..t).map(|i| format!("frame_{i:06}.png")).collect();
        Ok(Self {
            frames,
            fingerprint,
            filenames,
        })
    }

    pub fn dims(&self) -> VideoDims {
        let s = self.frames.shape();
        VideoDims {
            frames: s[0],
            height: s[1],
            width: s[2],
        }
    }

    pub fn frame_count(&self) -> usize {
        self.frames.shape()[0]
    }

    pub fn frame(&self, t: usize) -> ArrayView3<'_, f64> {
        self.frames.index_axis(ndarray::Axis(0), t)
    }
}

/// FNV-1a over the 8-bit encoding of every pixel, so that a decoded PNG
/// directory and the tensor it was saved from fingerprint identically.
fn fingerprint_frames(frames: &Array4<f64>) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &v in frames.iter() {
        let byte = to_u8(v);
        h ^= byte as u64;
        h = h.wrapping_mul(0x1000_0000_01b3);
    }
    h
}

/// `[0,1]` to 8-bit with round-half-away-from-zero.
pub fn to_u8(v: f64) -> u8 {
    let scaled = (v * 255.0).round(); // f64::round is half-away-from-zero
    scaled.clamp(0.0, 255.0) as u8
}

/// Loads every image file in a directory, ordered by lexicographic filename.
///
/// 8-bit and 16-bit images are scaled to `[0, 1]`. All frames must share one
/// resolution.
pub fn load_frames(dir: &Path) -> Result<VideoTensor> {
    let mut names: Vec<String> = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let entry = entry?;
        if !entry.file_type()?.is_file() {
            continue;
        }
        let name = entry.file_name().to_string_lossy().into_owned();
        let lower = name.to_ascii_lowercase();
        if lower.ends_with(".png")
            || lower.ends_with(".jpg")
            || lower.ends_with(".jpeg")
            || lower.ends_with(".bmp")
        {
            names.push(name);
        }
    }
    if names.is_empty() {
        return Err(NervError::data(format!(
            "no image files found in {}",
            dir.display()
        )));
    }
    names.sort();

    let mut frames: Option<Array4<f64>> = None;
    let mut dims = (0usize, 0usize);
    for (i, name) in names.iter().enumerate() {
        let img = image::open(dir.join(name))?;
        let (w, h) = (img.width() as usize, img.height() as usize);
        let frame = decode_image(img);
        if let Some(ref mut all) = frames {
            if (h, w) != dims {
                return Err(NervError::data(format!(
                    "mixed resolutions: {name} is {h}x{w}, expected {}x{}",
                    dims.0, dims.1
                )));
            }
            all.index_axis_mut(ndarray::Axis(0), i).assign(&frame);
        } else {
            dims = (h, w);
            let mut all = Array4::zeros((names.len(), h, w, 3));
            all.index_axis_mut(ndarray::Axis(0), 0).assign(&frame);
            frames = Some(all);
        }
    }
    let frames = frames.unwrap();
    let fingerprint = fingerprint_frames(&frames);
    Ok(VideoTensor {
        frames,
        fingerprint,
        filenames: names,
    })
}

fn decode_image(img: image::DynamicImage) -> Array3<f64> {
    use image::DynamicImage;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut out = Array3::zeros((h, w, 3));
    match img {
        DynamicImage::ImageRgb16(buf) => {
            for (y, x, p) in buf.enumerate_pixels().map(|(x, y, p)| (y, x, p)) {
                for c in 0..3 {
                    out[(y as usize, x as usize, c)] = p.0[c] as f64 / 65535.0;
                }
            }
        }
        DynamicImage::ImageLuma16(buf) => {
            for (x, y, p) in buf.enumerate_pixels() {
                let v = p.0[0] as f64 / 65535.0;
                for c in 0..3 {
                    out[(y as usize, x as usize, c)] = v;
                }
            }
        }
        other => {
            let rgb = other.to_rgb8();
            for (x, y, p) in rgb.enumerate_pixels() {
                for c in 0..3 {
                    out[(y as usize, x as usize, c)] = p.0[c] as f64 / 255.0;
                }
            }
        }
    }
    out
}

/// Writes frames as `frame_NNNNNN.png` (8-bit RGB) under `dir`.
pub fn save_frames(video: &VideoTensor, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for t in 0..video.frame_count() {
        save_frame(&video.frame(t), &dir.join(format!("frame_{t:06}.png")))?;
    }
    Ok(())
}

/// Writes one `(H, W, 3)` frame in `[0,1]` as an 8-bit PNG.
pub fn save_frame(frame: &ArrayView3<'_, f64>, path: &Path) -> Result<()> {
    let (h, w, _) = frame.dim();
    let mut buf = image::RgbImage::new(w as u32, h as u32);
    for y in 0..h {
        for x in 0..w {
            let px = [
                to_u8(frame[(y, x, 0)]),
                to_u8(frame[(y, x, 1)]),
                to_u8(frame[(y, x, 2)]),
            ];
            buf.put_pixel(x as u32, y as u32, image::Rgb(px));
        }
    }
    buf.save(path)?;
    Ok(())
}
