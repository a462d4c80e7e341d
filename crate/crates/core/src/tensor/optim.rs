use std::collections::HashMap;

use super::{ParamId, ParamStore, Result, TensorError};
use crate::Scalar;

/// First-order update rule applied to a subset of a [`ParamStore`].
pub trait Optimizer<T: Scalar> {
    /// Apply one update. The whole step is refused if any gradient is non-finite.
    fn step(&mut self, store: &mut ParamStore<T>, grads: &[(ParamId, &[T])]) -> Result<()>;

    fn learning_rate(&self) -> f64;
}

fn check_finite<T: Scalar>(store: &ParamStore<T>, grads: &[(ParamId, &[T])]) -> Result<()> {
    for (id, g) in grads {
        let p = store.get(*id);
        if g.len() != p.value.numel() {
            return Err(TensorError::ShapeMismatch {
                op: "optimizer",
                lhs: p.value.shape().to_vec(),
                rhs: vec![g.len()],
            });
        }
        if g.iter().any(|x| !x.is_finite()) {
            return Err(TensorError::NonFiniteGradient(p.name.clone()));
        }
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub struct Sgd {
    pub lr: f64,
}

impl<T: Scalar> Optimizer<T> for Sgd {
    fn step(&mut self, store: &mut ParamStore<T>, grads: &[(ParamId, &[T])]) -> Result<()> {
        check_finite(store, grads)?;
        let lr = T::lit(self.lr);
        for (id, g) in grads {
            for (p, &gv) in store.get_mut(*id).value.data_mut().iter_mut().zip(g.iter()) {
                *p = *p - lr * gv;
            }
        }
        Ok(())
    }

    fn learning_rate(&self) -> f64 {
        self.lr
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

struct Moments<T> {
    m: Vec<T>,
    v: Vec<T>,
    t: i32,
}

/// Adam with bias-corrected moment estimates. Step counts are tracked per parameter.
pub struct Adam<T> {
    pub config: AdamConfig,
    state: HashMap<ParamId, Moments<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            state: HashMap::new(),
        }
    }
}

impl<T: Scalar> Optimizer<T> for Adam<T> {
    fn step(&mut self, store: &mut ParamStore<T>, grads: &[(ParamId, &[T])]) -> Result<()> {
        check_finite(store, grads)?;
        let c = self.config;
        let (b1, b2) = (T::lit(c.beta1), T::lit(c.beta2));
        let (one, eps) = (T::one(), T::lit(c.eps));
        for (id, g) in grads {
            let st = self.state.entry(*id).or_insert_with(|| Moments {
                m: vec![T::zero(); g.len()],
                v: vec![T::zero(); g.len()],
                t: 0,
            });
            st.t += 1;
            let bc1 = T::lit(1.0 - c.beta1.powi(st.t));
            let bc2 = T::lit(1.0 - c.beta2.powi(st.t));
            let lr = T::lit(c.lr);
            let p = store.get_mut(*id).value.data_mut();
            for i in 0..g.len() {
                let gv = g[i];
                st.m[i] = b1 * st.m[i] + (one - b1) * gv;
                st.v[i] = b2 * st.v[i] + (one - b2) * gv * gv;
                let mh = st.m[i] / bc1;
                let vh = st.v[i] / bc2;
                p[i] = p[i] - lr * mh / (vh.sqrt() + eps);
            }
        }
        Ok(())
    }

    fn learning_rate(&self) -> f64 {
        self.config.lr
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{ParamGroup, Tensor};

    fn store(v: f64) -> (ParamStore<f64>, ParamId) {
        let mut s = ParamStore::new();
        let id = s.add("p", ParamGroup::MiNetwork, Tensor::scalar(v));
        (s, id)
    }

    #[test]
    fn sgd_definition() {
        let (mut s, id) = store(1.0);
        Sgd { lr: 0.1 }.step(&mut s, &[(id, &[2.0])]).unwrap();
        assert!((s.value(id).data()[0] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn zero_lr_is_identity() {
        let (mut s, id) = store(1.5);
        Sgd { lr: 0.0 }.step(&mut s, &[(id, &[2.0])]).unwrap();
        let mut adam = Adam::new(AdamConfig {
            lr: 0.0,
            ..Default::default()
        });
        adam.step(&mut s, &[(id, &[2.0])]).unwrap();
        assert_eq!(s.value(id).data()[0], 1.5);
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let (mut s, id) = store(1.0);
        let mut adam = Adam::new(AdamConfig::default());
        adam.step(&mut s, &[(id, &[1.0])]).unwrap();
        // bias-corrected m = v = 1 at t = 1, so the step is lr / (1 + eps)
        let moved = 1.0 - s.value(id).data()[0];
        assert!((moved - 0.001).abs() < 1e-9, "{moved}");
    }

    #[test]
    fn non_finite_gradient_refused() {
        let (mut s, id) = store(1.0);
        let err = Sgd { lr: 0.1 }.step(&mut s, &[(id, &[f64::NAN])]).unwrap_err();
        assert!(matches!(err, TensorError::NonFiniteGradient(_)));
        assert_eq!(s.value(id).data()[0], 1.0);
    }
}
