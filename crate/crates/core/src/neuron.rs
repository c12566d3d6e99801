//! Iterative leaky integrate-and-fire dynamics with hard reset, the triangle
//! surrogate derivative, and the per-step temporal Jacobian factor ξ.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LIFParams<S> {
    /// Leak factor, 1/τ.
    pub gamma: S,
    pub u_th: S,
    pub u_reset: S,
    /// Half-width of the triangle surrogate; its peak is 1/α.
    pub alpha: S,
}

impl<S: Scalar> Default for LIFParams<S> {
    fn default() -> Self {
        Self {
            gamma: S::of(0.5),
            u_th: S::one(),
            u_reset: S::zero(),
            alpha: S::one(),
        }
    }
}

impl<S: Scalar> LIFParams<S> {
    pub fn new(gamma: S, u_th: S, u_reset: S, alpha: S) -> Result<Self> {
        let p = Self {
            gamma,
            u_th,
            u_reset,
            alpha,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn from_tau(tau: S, u_th: S, u_reset: S, alpha: S) -> Result<Self> {
        if !(tau >= S::one()) {
            return Err(Error::Invalid(format!("tau must be >= 1, got {tau}")));
        }
        Self::new(S::one() / tau, u_th, u_reset, alpha)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > S::zero() && self.gamma <= S::one()) {
            return Err(Error::Invalid(format!("gamma must lie in (0, 1], got {}", self.gamma)));
        }
        if !(self.alpha > S::zero()) {
            return Err(Error::Invalid(format!("alpha must be positive, got {}", self.alpha)));
        }
        if !self.u_th.is_finite() || !self.u_reset.is_finite() {
            return Err(Error::Invalid("threshold and reset must be finite".into()));
        }
        Ok(())
    }

    /// (1/α²)·max(0, α − |u − u_th|)
    #[inline]
    pub fn surrogate(&self, u: S) -> S {
        let d = self.alpha - (u - self.u_th).abs();
        if d > S::zero() {
            d / self.alpha / self.alpha
        } else {
            S::zero()
        }
    }

    /// ∂u(t+1)/∂u(t) through the leak and the reset, with the surrogate
    /// standing in for ∂s/∂u: γ(1 − s − (u − u_reset)·H(u)).
    #[inline]
    pub fn xi(&self, u: S, s: S) -> S {
        self.gamma * (S::one() - s - (u - self.u_reset) * self.surrogate(u))
    }
}

/// Spike nonlinearity used in the forward pass.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Firing {
    /// Θ(u − u_th), strict: the threshold itself does not fire.
    #[default]
    Heaviside,
    /// C¹ ramp whose derivative is exactly the triangle surrogate. Used as a
    /// differentiable stand-in so BPTT can be checked by finite differences.
    SmoothRamp,
}

impl Firing {
    #[inline]
    pub fn fire<S: Scalar>(self, u: S, p: &LIFParams<S>) -> S {
        let v = u - p.u_th;
        match self {
            Firing::Heaviside => {
                if v > S::zero() {
                    S::one()
                } else {
                    S::zero()
                }
            }
            Firing::SmoothRamp => {
                let a = p.alpha;
                let two_a2 = S::of(2.0) * a * a;
                if v <= -a {
                    S::zero()
                } else if v <= S::zero() {
                    (v + a) * (v + a) / two_a2
                } else if v < a {
                    S::one() - (a - v) * (a - v) / two_a2
                } else {
                    S::one()
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LIFStepResult<S> {
    /// Charged potential before reset.
    pub u_pre: Tensor<S>,
    pub s: Tensor<S>,
    /// Potential after hard reset.
    pub u_post: Tensor<S>,
}

pub fn heaviside<S: Scalar>(x: &Tensor<S>) -> Tensor<S> {
    Tensor::from_parts(
        x.shape().to_vec(),
        x.data()
            .iter()
            .map(|&v| if v > S::zero() { S::one() } else { S::zero() })
            .collect(),
    )
}

pub fn lif_step<S: Scalar>(u_prev: &Tensor<S>, x_in: &Tensor<S>, p: &LIFParams<S>) -> Result<LIFStepResult<S>> {
    lif_step_with(u_prev, x_in, p, Firing::Heaviside)
}

pub fn lif_step_with<S: Scalar>(
    u_prev: &Tensor<S>,
    x_in: &Tensor<S>,
    p: &LIFParams<S>,
    firing: Firing,
) -> Result<LIFStepResult<S>> {
    if u_prev.shape() != x_in.shape() {
        return Err(Error::Shape(format!(
            "lif_step: potential {:?} vs input {:?}",
            u_prev.shape(),
            x_in.shape()
        )));
    }
    let u_pre = u_prev.zip_map(x_in, |u, x| p.gamma * u + x)?;
    let s = u_pre.map(|u| firing.fire(u, p))?;
    let u_post = u_pre.zip_map(&s, |u, s| (S::one() - s) * u + s * p.u_reset)?;
    Ok(LIFStepResult { u_pre, s, u_post })
}

pub fn surrogate_grad<S: Scalar>(u: &Tensor<S>, p: &LIFParams<S>) -> Tensor<S> {
    Tensor::from_parts(u.shape().to_vec(), u.data().iter().map(|&v| p.surrogate(v)).collect())
}

pub fn xi_factor<S: Scalar>(u: &Tensor<S>, s: &Tensor<S>, p: &LIFParams<S>) -> Result<Tensor<S>> {
    u.zip_map(s, |u, s| p.xi(u, s))
}

/// Elementwise ∏ₜ ξ(t) over a trace of (u(t), s(t)) pairs.
pub fn xi_product<S: Scalar>(trace: &[(Tensor<S>, Tensor<S>)], p: &LIFParams<S>) -> Result<Tensor<S>> {
    let ((u0, s0), rest) = trace
        .split_first()
        .ok_or_else(|| Error::Invalid("xi_product of an empty trace".into()))?;
    let mut acc = xi_factor(u0, s0, p)?;
    for (u, s) in rest {
        let xi = xi_factor(u, s, p)?;
        acc = acc.zip_map(&xi, |a, b| a * b)?;
    }
    Ok(acc)
}
