//! Learning-rate schedule: linear warmup from zero followed by cosine decay
//! to zero.

use crate::error::{NervError, Result};
use crate::training::TrainConfig;

/// Learning rate at a (possibly fractional) epoch in `[0, epochs]`.
pub fn lr_at(epoch: f64, cfg: &TrainConfig) -> Result<f64> {
    let total = cfg.epochs as f64;
    let warmup = cfg.warmup_epochs as f64;
    if !(0.0..=total).contains(&epoch) {
        return Err(NervError::domain(format!(
            "epoch {epoch} outside [0, {total}]"
        )));
    }
    if epoch < warmup {
        return Ok(cfg.base_lr * epoch / warmup);
    }
    if total > warmup {
        let phase = (epoch - warmup) / (total - warmup);
        Ok(cfg.base_lr * 0.5 * (1.0 + (std::f64::consts::PI * phase).cos()))
    } else {
        Ok(cfg.base_lr)
    }
}
