//! Global unstructured magnitude pruning.

use indexmap::IndexMap;
use ndarray::ArrayD;

use crate::error::{NervError, Result};
use crate::nerv::{NervModel, ParamSet};

/// Keep-masks matching every parameter tensor (`true` = keep). Bias and other
/// rank-<2 tensors are never pruned, so their masks are all-true.
#[derive(Debug, Clone)]
pub struct PruneMask {
    masks: IndexMap<String, ArrayD<bool>>,
    pub sparsity: f64,
}

/// Weight matrices and kernels are prunable; biases and normalization
/// vectors are not.
pub fn is_prunable(tensor: &ArrayD<f64>) -> bool {
    tensor.ndim() >= 2
}

impl PruneMask {
    pub fn get(&self, name: &str) -> Option<&ArrayD<bool>> {
        self.masks.get(name)
    }

    pub fn zero_count(&self) -> usize {
        self.masks
            .values()
            .map(|m| m.iter().filter(|&&keep| !keep).count())
            .sum()
    }

    pub fn check_shapes(&self, params: &ParamSet) -> Result<()> {
        for (name, t) in params.iter() {
            match self.masks.get(name) {
                Some(m) if m.shape() == t.shape() => {}
                Some(m) => {
                    return Err(NervError::shape(format!(
                        "mask for {name} has shape {:?}, tensor is {:?}",
                        m.shape(),
                        t.shape()
                    )))
                }
                None => {
                    return Err(NervError::shape(format!("no mask for tensor {name}")));
                }
            }
        }
        Ok(())
    }

    /// Zeroes masked-out entries in-place; used on parameters and gradients.
    pub fn apply(&self, set: &mut ParamSet) {
        for (name, t) in set.iter_mut() {
            if let Some(mask) = self.masks.get(name) {
                for (v, &keep) in t.iter_mut().zip(mask.iter()) {
                    if !keep {
                        *v = 0.0;
                    }
                }
            }
        }
    }
}

/// Zeroes the `floor(q * N)` prunable parameters with smallest magnitude,
/// jointly across tensors. Ties break by tensor order, then element index,
/// so repeated runs at the same `q` pick identical entries.
pub fn prune_global(model: &mut NervModel, q: f64) -> Result<PruneMask> {
    if !(0.0..1.0).contains(&q) {
        return Err(NervError::invalid_config(format!(
            "sparsity must be in [0, 1), got {q}"
        )));
    }

    let mut entries: Vec<(f64, u32, u32)> = Vec::new();
    for (t_idx, (_, tensor)) in model.params.iter().enumerate() {
        if !is_prunable(tensor) {
            continue;
        }
        for (e_idx, &v) in tensor.iter().enumerate() {
            entries.push((v.abs(), t_idx as u32, e_idx as u32));
        }
    }
    let n_zero = (q * entries.len() as f64).floor() as usize;
    entries.sort_unstable_by(|a, b| {
        a.0.total_cmp(&b.0)
            .then(a.1.cmp(&b.1))
            .then(a.2.cmp(&b.2))
    });

    let mut masks: IndexMap<String, ArrayD<bool>> = model
        .params
        .iter()
        .map(|(name, t)| (name.clone(), ArrayD::from_elem(t.raw_dim(), true)))
        .collect();
    let names: Vec<String> = model.params.iter().map(|(n, _)| n.clone()).collect();
    for &(_, t_idx, e_idx) in entries.iter().take(n_zero) {
        let name = &names[t_idx as usize];
        masks[name].as_slice_mut().unwrap()[e_idx as usize] = false;
        model
            .params
            .get_mut(name)
            .unwrap()
            .as_slice_mut()
            .unwrap()[e_idx as usize] = 0.0;
    }

    Ok(PruneMask { masks, sparsity: q })
}
