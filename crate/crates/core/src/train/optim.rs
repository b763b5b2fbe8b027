//! AdamW with decoupled weight decay.

use msprl_tensor::{Element, Tensor};

use crate::error::{Error, Result};
use crate::net::ParamStore;

pub const ADAM_EPS: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamW {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamW {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: ADAM_EPS,
            weight_decay: 1e-4,
        }
    }
}

/// Moment buffers shaped like the parameters, in registry order.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState<E: Element = f32> {
    pub step: u64,
    pub m: Vec<Tensor<E>>,
    pub v: Vec<Tensor<E>>,
}

impl<E: Element> OptimizerState<E> {
    pub fn new(params: &ParamStore<E>) -> Self {
        let zeros = || params.iter().map(|p| Tensor::zeros(p.tensor.shape())).collect();
        Self {
            step: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    pub fn matches(&self, params: &ParamStore<E>) -> bool {
        self.m.len() == params.len()
            && self.v.len() == params.len()
            && params
                .iter()
                .zip(self.m.iter().zip(&self.v))
                .all(|(p, (m, v))| m.shape() == p.tensor.shape() && v.shape() == p.tensor.shape())
    }
}

impl AdamW {
    /// One update of every parameter. `grads[i]` belongs to parameter `i`.
    pub fn step<E: Element>(
        &self,
        params: &mut ParamStore<E>,
        grads: &[Option<Vec<E>>],
        state: &mut OptimizerState<E>,
        lr: f64,
    ) -> Result<()> {
        if grads.len() != params.len() || !state.matches(params) {
            return Err(Error::InvalidArgument(format!(
                "optimizer got {} gradients for {} parameters",
                grads.len(),
                params.len()
            )));
        }
        for (i, g) in grads.iter().enumerate() {
            match g {
                Some(g) if g.len() == params.get(i).tensor.len() => {}
                _ => {
                    return Err(Error::InvalidArgument(format!(
                        "missing gradient for {}",
                        params.get(i).name
                    )))
                }
            }
        }
        state.step += 1;
        let t = state.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let decay = 1.0 - lr * self.weight_decay;
        for (i, g) in grads.iter().enumerate() {
            let g = g.as_deref().unwrap_or_default();
            let p = params.get_mut(i).tensor.data_mut();
            let m = state.m[i].data_mut();
            let v = state.v[i].data_mut();
            for j in 0..p.len() {
                let gj = g[j].to_f64();
                let mj = self.beta1 * m[j].to_f64() + (1.0 - self.beta1) * gj;
                let vj = self.beta2 * v[j].to_f64() + (1.0 - self.beta2) * gj * gj;
                m[j] = E::from_f64(mj);
                v[j] = E::from_f64(vj);
                let m_hat = mj / bc1;
                let v_hat = vj / bc2;
                let pj = p[j].to_f64() * decay;
                p[j] = E::from_f64(pj - lr * m_hat / (v_hat.sqrt() + self.eps));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store(values: &[f64]) -> ParamStore<f64> {
        let mut s = ParamStore::new();
        s.push("p".into(), Tensor::from_vec([values.len()], values.to_vec()).unwrap());
        s
    }

    #[test]
    fn missing_gradient_is_an_error() {
        let mut p = store(&[1.0]);
        let mut st = OptimizerState::new(&p);
        assert!(AdamW::default().step(&mut p, &[None], &mut st, 0.1).is_err());
        assert!(AdamW::default().step(&mut p, &[], &mut st, 0.1).is_err());
        assert_eq!(st.step, 0);
    }
}
