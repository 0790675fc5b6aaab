//! AdamW with decoupled weight decay and a cosine learning-rate schedule
//! with linear warmup.

use std::collections::HashMap;

use crate::error::{arg_err, dim_err, Result};
use crate::tensor::{Elem, Tensor};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPS: f64 = 1e-8;

/// Cosine-decayed learning rate: linear warmup to `base_lr` over `warmup`
/// steps, then half-cosine decay to 0 at `total`.
pub fn cosine_lr(step: usize, total: usize, base_lr: f64, warmup: usize) -> Result<f64> {
    if total <= warmup {
        return Err(arg_err!(
            "schedule needs total steps ({total}) > warmup steps ({warmup})"
        ));
    }
    if step > total {
        return Err(arg_err!("step {step} exceeds total {total}"));
    }
    if step < warmup {
        return Ok(base_lr * step as f64 / warmup as f64);
    }
    let progress = (step - warmup) as f64 / (total - warmup) as f64;
    Ok(base_lr * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos()))
}

/// Optimizer state: lazily-allocated per-parameter moment pairs plus the
/// schedule configuration.
#[derive(Debug, Clone)]
pub struct OptimState<E: Elem> {
    pub step: usize,
    pub base_lr: f64,
    pub weight_decay: f64,
    pub total_steps: usize,
    pub warmup_steps: usize,
    moments: HashMap<String, (Tensor<E>, Tensor<E>)>,
}

impl<E: Elem> OptimState<E> {
    pub fn new(
        base_lr: f64,
        weight_decay: f64,
        total_steps: usize,
        warmup_steps: usize,
    ) -> Result<Self> {
        // fail fast on an unusable schedule
        cosine_lr(0, total_steps, base_lr, warmup_steps)?;
        Ok(OptimState {
            step: 0,
            base_lr,
            weight_decay,
            total_steps,
            warmup_steps,
            moments: HashMap::new(),
        })
    }

    /// Learning rate the next `adamw_step` call will use.
    pub fn current_lr(&self) -> f64 {
        cosine_lr(self.step, self.total_steps, self.base_lr, self.warmup_steps)
            .expect("schedule validated at construction")
    }
}

/// Update one named parameter at learning rate `lr` using the state's
/// current (already advanced) step for bias correction. Callers iterating
/// parameters one at a time advance the step once via `begin_step`.
pub fn adamw_update_one<E: Elem>(
    state: &mut OptimState<E>,
    lr: f64,
    name: &str,
    param: &mut Tensor<E>,
    grad: &Tensor<E>,
) -> Result<()> {
    if param.dims() != grad.dims() {
        return Err(dim_err!(
            "'{name}': parameter dims {:?} != gradient dims {:?}",
            param.dims(),
            grad.dims()
        ));
    }
    let t = state.step as i32;
    let (b1, b2) = (E::from_f64(BETA1), E::from_f64(BETA2));
    let (nb1, nb2) = (E::from_f64(1.0 - BETA1), E::from_f64(1.0 - BETA2));
    let decay = E::from_f64(1.0 - lr * state.weight_decay);
    let lr_e = E::from_f64(lr);
    let eps = E::from_f64(EPS);
    let ibc1 = E::from_f64(1.0 / (1.0 - BETA1.powi(t)));
    let ibc2 = E::from_f64(1.0 / (1.0 - BETA2.powi(t)));
    let (m, v) = state
        .moments
        .entry(name.to_string())
        .or_insert_with(|| (Tensor::zeros(param.dims()), Tensor::zeros(param.dims())));
    let pd = param.data_mut();
    let g = grad.data();
    let md = m.data_mut();
    let vd = v.data_mut();
    for i in 0..pd.len() {
        pd[i] = pd[i] * decay;
        md[i] = b1 * md[i] + nb1 * g[i];
        vd[i] = b2 * vd[i] + nb2 * g[i] * g[i];
        let m_hat = md[i] * ibc1;
        let v_hat = vd[i] * ibc2;
        pd[i] = pd[i] - lr_e * m_hat / (v_hat.sqrt() + eps);
    }
    Ok(())
}

/// Advance the step counter and return the learning rate for this step.
pub fn begin_step<E: Elem>(state: &mut OptimState<E>) -> f64 {
    let lr = state.current_lr();
    state.step += 1;
    lr
}

/// One AdamW update over a set of named parameters. Decoupled weight decay
/// is applied first, then the bias-corrected Adam step; the step counter
/// advances once per call.
pub fn adamw_step<E: Elem>(
    state: &mut OptimState<E>,
    params: &mut [(&str, &mut Tensor<E>, &Tensor<E>)],
) -> Result<()> {
    let lr = begin_step(state);
    for (name, param, grad) in params.iter_mut() {
        adamw_update_one(state, lr, name, param, grad)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_endpoints() {
        assert!((cosine_lr(100, 100, 1.0, 10).unwrap()).abs() < 1e-15);
        assert!((cosine_lr(10, 100, 1.0, 10).unwrap() - 1.0).abs() < 1e-15);
        assert!((cosine_lr(55, 100, 1.0, 10).unwrap() - 0.5).abs() < 1e-12);
        assert!((cosine_lr(5, 100, 1.0, 10).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(cosine_lr(0, 10, 1.0, 10).unwrap_err().category(), "argument");
        assert_eq!(cosine_lr(11, 10, 1.0, 0).unwrap_err().category(), "argument");
    }

    #[test]
    fn zero_grads_zero_wd_is_identity() {
        let mut s = OptimState::<f64>::new(1e-3, 0.0, 100, 0).unwrap();
        let mut p = Tensor::rand_uniform(
            [1, 4, 1, 1],
            -1.0,
            1.0,
            &mut rand_chacha::ChaCha8Rng::seed_from_u64(0),
        );
        let before = p.data().to_vec();
        let g = Tensor::zeros([1, 4, 1, 1]);
        adamw_step(&mut s, &mut [("p", &mut p, &g)]).unwrap();
        assert_eq!(p.data(), &before[..]);
        assert_eq!(s.step, 1);
    }

    #[test]
    fn zero_grads_decay_scales_exactly() {
        let mut s = OptimState::<f64>::new(0.1, 0.5, 100, 0).unwrap();
        let mut p = Tensor::full([1, 2, 1, 1], 2.0);
        let g = Tensor::zeros([1, 2, 1, 1]);
        adamw_step(&mut s, &mut [("p", &mut p, &g)]).unwrap();
        let want = 2.0 * (1.0 - 0.1 * 0.5);
        assert!(p.data().iter().all(|&v| (v - want).abs() < 1e-15));
    }

    #[test]
    fn quadratic_converges() {
        // f(w) = (w - 3)^2, grad = 2(w - 3)
        let mut s = OptimState::<f64>::new(0.05, 0.0, 4000, 0).unwrap();
        let mut w = Tensor::zeros([1, 1, 1, 1]);
        for _ in 0..2000 {
            let g = Tensor::full([1, 1, 1, 1], 2.0 * (w.data()[0] - 3.0));
            adamw_step(&mut s, &mut [("w", &mut w, &g)]).unwrap();
        }
        assert!((w.data()[0] - 3.0).abs() < 1e-3, "w = {}", w.data()[0]);
    }

    #[test]
    fn grad_shape_mismatch_rejected() {
        let mut s = OptimState::<f64>::new(0.1, 0.0, 10, 0).unwrap();
        let mut p = Tensor::zeros([1, 2, 1, 1]);
        let g = Tensor::zeros([1, 3, 1, 1]);
        let err = adamw_step(&mut s, &mut [("p", &mut p, &g)]).unwrap_err();
        assert_eq!(err.category(), "dimension");
    }

    use rand::SeedableRng;
}
