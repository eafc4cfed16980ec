//! Post-hoc per-tensor affine quantization.
//!
//! `index = clamp(round((x - mu_min) / scale), 0, 2^bit - 1)` with
//! `scale = (max - min) / (2^bit - 1)`, rounding half away from zero, and
//! `dequantize(index) = index * scale + mu_min`. The quantization parameters
//! are stored as f32 (their overhead is negligible next to the index
//! stream). `mu_min` is rounded toward -inf and `scale` toward +inf so the
//! level grid always spans `[min, max]`; each index is then nudged to the
//! truly nearest level. For f32-representable inputs (model parameters are
//! stored at f32 precision) this guarantees the per-element error bound
//! `|x - dequantize(quantize(x))| <= scale / 2`.

use ndarray::ArrayD;

use crate::error::{NervError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedTensor {
    /// Level indices in `[0, 2^bit - 1]`.
    pub indices: Vec<u16>,
    pub bit: u8,
    pub scale: f32,
    pub mu_min: f32,
    pub shape: Vec<usize>,
}

pub fn quantize_tensor(x: &ArrayD<f64>, bit: u8) -> Result<QuantizedTensor> {
    if !(1..=16).contains(&bit) {
        return Err(NervError::invalid_config(format!(
            "bit width must be in [1, 16], got {bit}"
        )));
    }
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    for &v in x.iter() {
        if !v.is_finite() {
            return Err(NervError::data("cannot quantize non-finite values"));
        }
        min = min.min(v);
        max = max.max(v);
    }
    if x.is_empty() {
        return Ok(QuantizedTensor {
            indices: Vec::new(),
            bit,
            scale: 0.0,
            mu_min: 0.0,
            shape: x.shape().to_vec(),
        });
    }
    if min == max {
        // constant tensor: all indices 0, reproduced exactly by mu_min
        return Ok(QuantizedTensor {
            indices: vec![0; x.len()],
            bit,
            scale: 0.0,
            mu_min: min as f32,
            shape: x.shape().to_vec(),
        });
    }

    let levels = (1u32 << bit) - 1;
    // round mu_min down and scale up so the grid spans [min, max]
    let mut mu_min = min as f32;
    if (mu_min as f64) > min {
        mu_min = mu_min.next_down();
    }
    let exact_scale = (max - mu_min as f64) / levels as f64;
    let mut scale = exact_scale as f32;
    if (scale as f64) < exact_scale {
        scale = scale.next_up();
    }

    let m = mu_min as f64;
    let s = scale as f64;
    let indices = x
        .iter()
        .map(|&v| {
            let u = (v - m) / s;
            let mut idx = u.round().clamp(0.0, levels as f64) as u32;
            // pick the truly nearest level (floating-point slop can land the
            // rounded index one step off at the grid edges)
            let err = |i: u32| (v - (i as f64 * s + m)).abs();
            if idx > 0 && err(idx - 1) < err(idx) {
                idx -= 1;
            } else if idx < levels && err(idx + 1) < err(idx) {
                idx += 1;
            }
            idx as u16
        })
        .collect();

    Ok(QuantizedTensor {
        indices,
        bit,
        scale,
        mu_min,
        shape: x.shape().to_vec(),
    })
}

pub fn dequantize_tensor(q: &QuantizedTensor) -> Result<ArrayD<f64>> {
    let n: usize = q.shape.iter().product();
    if n != q.indices.len() {
        return Err(NervError::shape(format!(
            "index count {} does not match shape {:?}",
            q.indices.len(),
            q.shape
        )));
    }
    let s = q.scale as f64;
    let m = q.mu_min as f64;
    let data: Vec<f64> = q.indices.iter().map(|&i| i as f64 * s + m).collect();
    ArrayD::from_shape_vec(ndarray::IxDyn(&q.shape), data)
        .map_err(|e| NervError::shape(e.to_string()))
}
