//! Adam optimizer with (0.9, 0.999) betas and eps 1e-8. Updated parameters
//! are snapped back to f32 precision after every step (parameters are stored
//! at f32 precision; optimizer state and arithmetic stay f64).

use ndarray::ArrayD;

use crate::nerv::{GradSet, ParamSet};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct Adam {
    pub m: ParamSet,
    pub v: ParamSet,
    pub steps: u64,
}

impl Adam {
    pub fn new(params: &ParamSet) -> Self {
        let mut m = ParamSet::new();
        let mut v = ParamSet::new();
        for (name, t) in params.iter() {
            m.insert(name.clone(), ArrayD::zeros(t.raw_dim()));
            v.insert(name.clone(), ArrayD::zeros(t.raw_dim()));
        }
        Self { m, v, steps: 0 }
    }

    pub fn step(&mut self, params: &mut ParamSet, grads: &GradSet, lr: f64) {
        self.steps += 1;
        let t = self.steps as f64;
        let bc1 = 1.0 - ADAM_BETA1.powf(t);
        let bc2 = 1.0 - ADAM_BETA2.powf(t);
        for (name, p) in params.iter_mut() {
            let Some(g) = grads.get(name) else { continue };
            let m = self.m.get_mut(name).expect("moment state matches params");
            let v = self.v.get_mut(name).expect("moment state matches params");
            let ps = p.as_slice_mut().unwrap();
            let gs = g.as_slice().unwrap();
            let ms = m.as_slice_mut().unwrap();
            let vs = v.as_slice_mut().unwrap();
            for i in 0..ps.len() {
                let gv = gs[i];
                ms[i] = ADAM_BETA1 * ms[i] + (1.0 - ADAM_BETA1) * gv;
                vs[i] = ADAM_BETA2 * vs[i] + (1.0 - ADAM_BETA2) * gv * gv;
                let mhat = ms[i] / bc1;
                let vhat = vs[i] / bc2;
                ps[i] = (ps[i] - lr * mhat / (vhat.sqrt() + ADAM_EPS)) as f32 as f64;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::ArrayD;

    #[test]
    fn descends_a_quadratic() {
        // minimize f(x) = (x - 3)^2 from x = 0
        let mut params = ParamSet::new();
        params.insert("x", ArrayD::zeros(ndarray::IxDyn(&[1])));
        let mut adam = Adam::new(&params);
        for _ in 0..2000 {
            let x = params.get("x").unwrap()[[0]];
            let mut grads = GradSet::new();
            grads.insert(
                "x",
                ArrayD::from_elem(ndarray::IxDyn(&[1]), 2.0 * (x - 3.0)),
            );
            adam.step(&mut params, &grads, 0.05);
        }
        let x = params.get("x").unwrap()[[0]];
        assert!((x - 3.0).abs() < 1e-2, "x = {x}");
    }

    #[test]
    fn zero_gradient_leaves_parameters_fixed() {
        let mut params = ParamSet::new();
        params.insert("w", ArrayD::from_elem(ndarray::IxDyn(&[3]), 0.25));
        let before = params.get("w").unwrap().clone();
        let mut adam = Adam::new(&params);
        let mut grads = GradSet::new();
        grads.insert("w", ArrayD::zeros(ndarray::IxDyn(&[3])));
        for _ in 0..5 {
            adam.step(&mut params, &grads, 0.1);
        }
        assert_eq!(params.get("w").unwrap(), &before);
    }

    #[test]
    fn parameters_stay_f32_representable() {
        let mut params = ParamSet::new();
        params.insert("w", ArrayD::from_elem(ndarray::IxDyn(&[4]), 0.1));
        let mut adam = Adam::new(&params);
        let mut grads = GradSet::new();
        grads.insert(
            "w",
            ArrayD::from_shape_fn(ndarray::IxDyn(&[4]), |i| 0.01 * (i[0] as f64 + 1.0)),
        );
        adam.step(&mut params, &grads, 0.003);
        for &v in params.get("w").unwrap().iter() {
            assert_eq!(v, v as f32 as f64);
        }
    }
}
