use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::ParamSet;

/// Adam with bias-corrected moments.
///
/// Moments are kept for every parameter; parameters that do not require a
/// gradient (frozen embeddings) are skipped entirely.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
    t: u64,
}

impl<T: Scalar> Adam<T> {
    pub fn new(params: &ParamSet<T>) -> Self {
        let zeros = || {
            params
                .iter()
                .map(|(_, _, t)| vec![T::zero(); t.numel()])
                .collect()
        };
        Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: zeros(),
            v: zeros(),
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// One update with learning rate `lr`. Parameters without an allocated
    /// gradient are treated as having a zero gradient.
    pub fn step(&mut self, params: &mut ParamSet<T>, lr: f64) -> Result<()> {
        if self.m.len() != params.len() {
            return Err(Error::Contract(
                "optimizer state does not match the parameter set".into(),
            ));
        }
        self.t += 1;
        let t = self.t as i32;
        let (b1, b2) = (T::lit(self.beta1), T::lit(self.beta2));
        let c1 = T::one() - b1.powi(t);
        let c2 = T::one() - b2.powi(t);
        let (lr, eps) = (T::lit(lr), T::lit(self.eps));
        for (i, id) in params.ids().collect::<Vec<_>>().into_iter().enumerate() {
            let p = params.get_mut(id);
            if !p.requires_grad() {
                continue;
            }
            let Some(grad) = p.grad().map(<[T]>::to_vec) else {
                let (m, v) = (&mut self.m[i], &mut self.v[i]);
                m.iter_mut().for_each(|x| *x *= b1);
                v.iter_mut().for_each(|x| *x *= b2);
                continue;
            };
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for (k, x) in p.data_mut().iter_mut().enumerate() {
                let g = grad[k];
                m[k] = b1 * m[k] + (T::one() - b1) * g;
                v[k] = b2 * v[k] + (T::one() - b2) * g * g;
                let m_hat = m[k] / c1;
                let v_hat = v[k] / c2;
                *x -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
