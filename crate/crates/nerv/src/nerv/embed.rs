//! Timestamp embedding.

use ndarray::Array1;

use crate::error::{NervError, Result};
use crate::nerv::config::EmbeddingKind;

/// Sinusoidal positional encoding of a timestamp:
/// `[sin(b^0 pi t), cos(b^0 pi t), ..., sin(b^(l-1) pi t), cos(b^(l-1) pi t)]`.
pub fn positional_encode(t_norm: f64, b: f64, l: usize) -> Result<Vec<f64>> {
    if l < 1 {
        return Err(NervError::invalid_config("embed length must be >= 1"));
    }
    if !(b > 0.0) || !b.is_finite() {
        return Err(NervError::invalid_config("embed base must be positive"));
    }
    let mut out = Vec::with_capacity(2 * l);
    let mut freq = 1.0;
    for _ in 0..l {
        let arg = freq * std::f64::consts::PI * t_norm;
        out.push(arg.sin());
        out.push(arg.cos());
        freq *= b;
    }
    Ok(out)
}

pub fn embed(kind: EmbeddingKind, t_norm: f64, b: f64, l: usize) -> Result<Array1<f64>> {
    match kind {
        EmbeddingKind::Identity => Ok(Array1::from_elem(1, t_norm)),
        EmbeddingKind::Positional => Ok(Array1::from_vec(positional_encode(t_norm, b, l)?)),
    }
}
