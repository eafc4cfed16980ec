//! Reconstruction loss: a weighted combination of L2, L1 and (1 - SSIM)
//! terms over a predicted/target frame pair.

use ndarray::{Array3, ArrayView3};

use crate::error::{NervError, Result};
use crate::training::metrics::ssim_with_grad;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum LossTerm {
    L2,
    L1,
    Ssim,
}

/// A non-empty, deduplicated set of loss terms in canonical (L2, L1, SSIM)
/// order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LossTerms(Vec<LossTerm>);

impl LossTerms {
    pub fn new(terms: &[LossTerm]) -> Result<Self> {
        let mut t = terms.to_vec();
        t.sort();
        t.dedup();
        if t.is_empty() {
            return Err(NervError::invalid_config("loss term set must be non-empty"));
        }
        Ok(Self(t))
    }

    /// The default recipe: alpha * L1 + (1 - alpha) * (1 - SSIM).
    pub fn l1_ssim() -> Self {
        Self(vec![LossTerm::L1, LossTerm::Ssim])
    }

    pub fn terms(&self) -> &[LossTerm] {
        &self.0
    }

    /// Per-term weights: a single term gets weight 1; two terms split as
    /// (alpha, 1 - alpha) in canonical order; all three split as
    /// (alpha/2, alpha/2, 1 - alpha).
    pub fn weights(&self, alpha: f64) -> Vec<f64> {
        match self.0.len() {
            1 => vec![1.0],
            2 => vec![alpha, 1.0 - alpha],
            _ => vec![alpha / 2.0, alpha / 2.0, 1.0 - alpha],
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        let mut terms = Vec::new();
        for part in s.split(['+', ',']) {
            match part.trim().to_ascii_lowercase().as_str() {
                "l2" | "mse" => terms.push(LossTerm::L2),
                "l1" => terms.push(LossTerm::L1),
                "ssim" => terms.push(LossTerm::Ssim),
                other => {
                    return Err(NervError::invalid_config(format!(
                        "unknown loss term '{other}'"
                    )))
                }
            }
        }
        Self::new(&terms)
    }
}

impl std::fmt::Display for LossTerms {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let names: Vec<&str> = self
            .0
            .iter()
            .map(|t| match t {
                LossTerm::L2 => "l2",
                LossTerm::L1 => "l1",
                LossTerm::Ssim => "ssim",
            })
            .collect();
        write!(f, "{}", names.join("+"))
    }
}

/// Per-frame loss value.
pub fn loss(
    pred: &ArrayView3<'_, f64>,
    target: &ArrayView3<'_, f64>,
    alpha: f64,
    terms: &LossTerms,
) -> Result<f64> {
    Ok(loss_with_grad(pred, target, alpha, terms)?.0)
}

/// Loss value plus its gradient with respect to the prediction.
pub fn loss_with_grad(
    pred: &ArrayView3<'_, f64>,
    target: &ArrayView3<'_, f64>,
    alpha: f64,
    terms: &LossTerms,
) -> Result<(f64, Array3<f64>)> {
    if pred.dim() != target.dim() {
        return Err(NervError::shape(format!(
            "loss shapes differ: {:?} vs {:?}",
            pred.dim(),
            target.dim()
        )));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(NervError::invalid_config(format!(
            "loss alpha {alpha} outside [0, 1]"
        )));
    }
    let n = pred.len() as f64;
    let weights = terms.weights(alpha);

    let mut value = 0.0;
    let mut grad = Array3::zeros(pred.dim());
    for (&term, &w) in terms.terms().iter().zip(&weights) {
        if w == 0.0 {
            continue;
        }
        match term {
            LossTerm::L2 => {
                let mut acc = 0.0;
                ndarray::Zip::from(&mut grad)
                    .and(pred)
                    .and(target)
                    .for_each(|g, &p, &t| {
                        let d = p - t;
                        acc += d * d;
                        *g += w * 2.0 * d / n;
                    });
                value += w * acc / n;
            }
            LossTerm::L1 => {
                let mut acc = 0.0;
                ndarray::Zip::from(&mut grad)
                    .and(pred)
                    .and(target)
                    .for_each(|g, &p, &t| {
                        let d = p - t;
                        acc += d.abs();
                        *g += w * d.signum() / n;
                    });
                value += w * acc / n;
            }
            LossTerm::Ssim => {
                let (s, ds) = ssim_with_grad(pred, target)?;
                value += w * (1.0 - s);
                grad.scaled_add(-w, &ds);
            }
        }
    }
    Ok((value, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::training::metrics::ssim_constant_images;
    use approx::assert_relative_eq;
    use ndarray::Array3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_at_identical_inputs_for_any_combination() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let x = Array3::from_shape_fn((12, 12, 3), |_| rng.random::<f64>());
        for terms in [
            LossTerms::new(&[LossTerm::L2]).unwrap(),
            LossTerms::new(&[LossTerm::L1]).unwrap(),
            LossTerms::new(&[LossTerm::Ssim]).unwrap(),
            LossTerms::new(&[LossTerm::L2, LossTerm::L1]).unwrap(),
            LossTerms::new(&[LossTerm::L2, LossTerm::Ssim]).unwrap(),
            LossTerms::l1_ssim(),
        ] {
            for alpha in [0.0, 0.3, 0.7, 1.0] {
                let v = loss(&x.view(), &x.view(), alpha, &terms).unwrap();
                assert!(v.abs() < 1e-12, "{terms} alpha={alpha}: {v}");
            }
        }
    }

    #[test]
    fn alpha_one_reduces_to_mean_absolute_error() {
        let a = Array3::from_elem((12, 12, 3), 0.3);
        let b = Array3::from_elem((12, 12, 3), 0.55);
        let v = loss(&a.view(), &b.view(), 1.0, &LossTerms::l1_ssim()).unwrap();
        assert_relative_eq!(v, 0.25, max_relative = 1e-12);
    }

    #[test]
    fn uniform_offset_matches_constant_closed_form() {
        // target constant 0.4, prediction constant 0.5, alpha = 0.7:
        // 0.7 * 0.1 + 0.3 * (1 - ssim_constant(0.5, 0.4))
        let target = Array3::from_elem((16, 16, 3), 0.4);
        let pred = Array3::from_elem((16, 16, 3), 0.5);
        let v = loss(&pred.view(), &target.view(), 0.7, &LossTerms::l1_ssim()).unwrap();
        let expect = 0.7 * 0.1 + 0.3 * (1.0 - ssim_constant_images(0.5, 0.4));
        assert_relative_eq!(v, expect, max_relative = 1e-9);
    }

    #[test]
    fn empty_term_set_is_rejected() {
        assert!(LossTerms::new(&[]).is_err());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let mut pred = Array3::from_shape_fn((13, 13, 3), |_| 0.2 + 0.6 * rng.random::<f64>());
        let target = Array3::from_shape_fn((13, 13, 3), |_| 0.2 + 0.6 * rng.random::<f64>());
        let terms = LossTerms::l1_ssim();
        let (_, grad) = loss_with_grad(&pred.view(), &target.view(), 0.7, &terms).unwrap();
        let h = 1e-6;
        for &idx in &[(0, 0, 0), (6, 6, 1), (12, 12, 2), (3, 9, 0)] {
            let orig = pred[idx];
            pred[idx] = orig + h;
            let up = loss(&pred.view(), &target.view(), 0.7, &terms).unwrap();
            pred[idx] = orig - h;
            let down = loss(&pred.view(), &target.view(), 0.7, &terms).unwrap();
            pred[idx] = orig;
            let fd = (up - down) / (2.0 * h);
            assert_relative_eq!(grad[idx], fd, max_relative = 1e-5, epsilon = 1e-10);
        }
    }

    #[test]
    fn parses_term_sets() {
        assert_eq!(LossTerms::parse("l1+ssim").unwrap(), LossTerms::l1_ssim());
        assert_eq!(
            LossTerms::parse("L2").unwrap(),
            LossTerms::new(&[LossTerm::L2]).unwrap()
        );
        assert!(LossTerms::parse("huber").is_err());
    }
}
