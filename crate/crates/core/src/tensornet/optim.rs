use super::ParamSet;
use crate::math;

/// Update rule applied after a backward pass.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Optimizer {
    Sgd { lr: f64 },
    Adam { lr: f64, beta1: f64, beta2: f64, eps: f64 },
}

impl Optimizer {
    pub fn adam(lr: f64) -> Self {
        Optimizer::Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn step(&self, params: &mut ParamSet) {
        match *self {
            Optimizer::Sgd { lr } => sgd_step(params, lr),
            Optimizer::Adam {
                lr,
                beta1,
                beta2,
                eps,
            } => adam_step(params, lr, beta1, beta2, eps),
        }
    }
}

/// `w ← w − lr·g`, then zero the gradients.
pub fn sgd_step(params: &mut ParamSet, lr: f64) {
    for e in params.entries_mut().iter_mut().filter(|e| e.trainable) {
        for (w, &g) in e.value.data_mut().iter_mut().zip(e.grad.data()) {
            *w -= lr * g;
        }
    }
    params.zero_grads();
}

/// Bias-corrected Adam; moment estimates live in the [`ParamSet`].
pub fn adam_step(params: &mut ParamSet, lr: f64, beta1: f64, beta2: f64, eps: f64) {
    params.adam_steps += 1;
    let t = params.adam_steps as i32;
    let c1 = 1.0 - math::powi(beta1, t);
    let c2 = 1.0 - math::powi(beta2, t);
    for e in params.entries_mut().iter_mut().filter(|e| e.trainable) {
        let grads = e.grad.data();
        let values = e.value.data_mut();
        for i in 0..values.len() {
            let g = grads[i];
            let m = beta1 * e.first_moment[i] + (1.0 - beta1) * g;
            let v = beta2 * e.second_moment[i] + (1.0 - beta2) * g * g;
            e.first_moment[i] = m;
            e.second_moment[i] = v;
            values[i] -= lr * (m / c1) / (math::sqrt(v / c2) + eps);
        }
    }
    params.zero_grads();
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensornet::Tensor;

    fn single(w: f64, g: f64) -> ParamSet {
        let mut p = ParamSet::new();
        p.push("w", Tensor::scalar(w), true).unwrap();
        p.entries_mut()[0].grad = Tensor::scalar(g);
        p
    }

    #[test]
    fn sgd_single_weight() {
        let mut p = single(1.0, 2.0);
        sgd_step(&mut p, 0.1);
        assert!((p.get("w").unwrap().data()[0] - 0.8).abs() < 1e-15);
        assert_eq!(p.grad("w").unwrap().data()[0], 0.0);
    }

    #[test]
    fn zero_grad_leaves_params() {
        let mut p = single(1.5, 0.0);
        let before = p.clone();
        sgd_step(&mut p, 0.1);
        assert!(p.bit_eq(&before));
        adam_step(&mut p, 0.1, 0.9, 0.999, 1e-8);
        assert!(p.bit_eq(&before));
    }

    #[test]
    fn adam_first_step_is_sign_step() {
        // m̂ = g, v̂ = g², so Δ = -lr·g/(|g| + eps)
        for &g in &[3.0, -0.25, 1e-3] {
            let mut p = single(0.0, g);
            adam_step(&mut p, 0.01, 0.9, 0.999, 1e-8);
            let expected = -0.01 * g / (g.abs() + 1e-8);
            let got = p.get("w").unwrap().data()[0];
            assert!((got - expected).abs() < 1e-15, "g={g}: {got} vs {expected}");
        }
    }

    #[test]
    fn buffers_untouched() {
        let mut p = ParamSet::new();
        p.push("buf", Tensor::scalar(1.0), false).unwrap();
        p.entries_mut()[0].grad = Tensor::scalar(5.0);
        sgd_step(&mut p, 1.0);
        assert_eq!(p.get("buf").unwrap().data()[0], 1.0);
    }
}
