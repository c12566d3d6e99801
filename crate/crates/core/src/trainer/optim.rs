//! Adam with bias correction and the cosine-annealed learning rate.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct Adam<S> {
    pub beta1: S,
    pub beta2: S,
    pub eps: S,
    /// Updates applied so far.
    pub step: u64,
    pub m: Vec<Tensor<S>>,
    pub v: Vec<Tensor<S>>,
}

impl<S: Scalar> Adam<S> {
    /// Zero moments shaped like `params`.
    pub fn new(params: &[&Tensor<S>], beta1: S, beta2: S, eps: S) -> Self {
        let zeros: Vec<Tensor<S>> = params.iter().map(|p| Tensor::zeros(p.shape())).collect();
        Self {
            beta1,
            beta2,
            eps,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    /// θ ← θ − lr·m̂/(√v̂ + eps) with m̂ = m/(1 − β₁ᵗ), v̂ = v/(1 − β₂ᵗ).
    pub fn update(&mut self, params: &mut [&mut Tensor<S>], grads: &[&Tensor<S>], lr: S) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::Shape(format!(
                "adam holds {} moments for {} parameters and {} gradients",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.shape() != self.m[i].shape() || g.shape() != self.m[i].shape() {
                return Err(Error::Shape(format!(
                    "adam slot {i}: moment {:?}, parameter {:?}, gradient {:?}",
                    self.m[i].shape(),
                    p.shape(),
                    g.shape()
                )));
            }
        }
        self.step += 1;
        let t = i32::try_from(self.step).unwrap_or(i32::MAX);
        let c1 = S::one() - self.beta1.powi(t);
        let c2 = S::one() - self.beta2.powi(t);
        let (b1, b2) = (self.beta1, self.beta2);
        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let m = self.m[i].data_mut();
            let v = self.v[i].data_mut();
            for (k, (w, &gk)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
                m[k] = b1 * m[k] + (S::one() - b1) * gk;
                v[k] = b2 * v[k] + (S::one() - b2) * gk * gk;
                let m_hat = m[k] / c1;
                let v_hat = v[k] / c2;
                *w -= lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

/// base − (base − min)·(1 − cos(π·epoch/total))/2 for 0 ≤ epoch ≤ total.
/// Written from the base side so epoch 0 returns `base` exactly.
pub fn cosine_lr<S: Scalar>(epoch: usize, total: usize, base: S, min: S) -> Result<S> {
    if epoch > total {
        return Err(Error::Invalid(format!("epoch {epoch} beyond schedule of {total}")));
    }
    if total == 0 {
        return Ok(base);
    }
    let phase = S::PI() * S::of_usize(epoch) / S::of_usize(total);
    Ok(base - (base - min) * (S::one() - phase.cos()) / S::of(2.0))
}
