//! Training objectives over per-timestep readouts O(t) of shape `[T, B, n]`.
//!
//! * SDT-CE / SDT-MSE: the loss of the time-averaged output.
//! * TET: per-timestep cross-entropy mixed with an MSE pull toward φ.
//! * TRT: per-timestep cross-entropy/MSE blend plus the temporal weight
//!   regularizer r(t), whose strength decays with t at rate δ.
//!
//! Every loss returns its gradient with respect to O so the network backward
//! pass can consume it directly; TRT additionally returns the regularizer's
//! gradient with respect to the spiking-layer weights.

use crate::error::{Error, Result};
use crate::scalar::{sign0, Scalar};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LossKind {
    SdtCe,
    SdtMse,
    Tet,
    Trt,
}

impl LossKind {
    pub fn name(self) -> &'static str {
        match self {
            LossKind::SdtCe => "sdt_ce",
            LossKind::SdtMse => "sdt_mse",
            LossKind::Tet => "tet",
            LossKind::Trt => "trt",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sdt_ce" | "sdt" | "sce" => Some(LossKind::SdtCe),
            "sdt_mse" | "smse" => Some(LossKind::SdtMse),
            "tet" => Some(LossKind::Tet),
            "trt" => Some(LossKind::Trt),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossConfig<S> {
    pub kind: LossKind,
    /// CE/MSE mix of TRT.
    pub eta: S,
    /// CE/MSE mix of TET.
    pub mu: S,
    pub lambda: S,
    pub delta: S,
    pub epsilon: S,
    /// TET regression target.
    pub phi: S,
}

impl<S: Scalar> Default for LossConfig<S> {
    fn default() -> Self {
        Self {
            kind: LossKind::Trt,
            eta: S::of(0.05),
            mu: S::of(0.05),
            lambda: S::of(1e-5),
            delta: S::of(0.25),
            epsilon: S::of(1e-5),
            phi: S::zero(),
        }
    }
}

impl<S: Scalar> LossConfig<S> {
    pub fn with_kind(kind: LossKind) -> Self {
        Self {
            kind,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |x: S| x >= S::zero() && x <= S::one();
        if !unit(self.eta) || !unit(self.mu) {
            return Err(Error::Invalid("eta and mu must lie in [0, 1]".into()));
        }
        if !(self.epsilon > S::zero()) {
            return Err(Error::Invalid("epsilon must be positive".into()));
        }
        if !(self.lambda >= S::zero()) || !(self.delta >= S::zero()) {
            return Err(Error::Invalid("lambda and delta must be non-negative".into()));
        }
        if !self.phi.is_finite() {
            return Err(Error::Invalid("phi must be finite".into()));
        }
        Ok(())
    }

    /// Coefficients of the (ce, mse) components in the total; reg enters with
    /// weight one.
    pub fn component_weights(&self) -> (S, S) {
        match self.kind {
            LossKind::SdtCe => (S::one(), S::zero()),
            LossKind::SdtMse => (S::zero(), S::one()),
            LossKind::Tet => (S::one() - self.mu, self.mu),
            LossKind::Trt => (S::one() - self.eta, self.eta),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LossValue<S> {
    pub total: S,
    pub ce: S,
    pub mse: S,
    pub reg: S,
    /// ∂total/∂O(t), `[T, B, n]`.
    pub output_grad: Tensor<S>,
    /// ∂total/∂W for each spiking-layer weight; empty unless TRT.
    pub reg_grad: Vec<Tensor<S>>,
}

fn check_logits<S: Scalar>(logits: &Tensor<S>, labels: &[usize]) -> Result<(usize, usize)> {
    if logits.rank() != 2 {
        return Err(Error::Shape(format!("logits must be [B, n], got {:?}", logits.shape())));
    }
    let (b, n) = (logits.shape()[0], logits.shape()[1]);
    if labels.len() != b {
        return Err(Error::Shape(format!("{} labels for batch of {}", labels.len(), b)));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= n) {
        return Err(Error::Invalid(format!("label {bad} out of range for {n} classes")));
    }
    if b == 0 {
        return Err(Error::Invalid("empty batch".into()));
    }
    Ok((b, n))
}

fn check_outputs<S: Scalar>(o: &Tensor<S>) -> Result<(usize, usize, usize)> {
    if o.rank() != 3 || o.shape()[0] == 0 {
        return Err(Error::Shape(format!(
            "outputs must be [T>=1, B, n], got {:?}",
            o.shape()
        )));
    }
    Ok((o.shape()[0], o.shape()[1], o.shape()[2]))
}

/// Numerically stable softmax of one row.
pub fn softmax_row<S: Scalar>(z: &[S]) -> Vec<S> {
    let m = z.iter().copied().fold(S::neg_infinity(), S::max);
    let e: Vec<S> = z.iter().map(|&v| (v - m).exp()).collect();
    let sum = e.iter().fold(S::zero(), |a, &b| a + b);
    e.into_iter().map(|v| v / sum).collect()
}

/// log Softmax of one row.
pub fn log_softmax_row<S: Scalar>(z: &[S]) -> Vec<S> {
    let m = z.iter().copied().fold(S::neg_infinity(), S::max);
    let lse = m + z.iter().fold(S::zero(), |a, &v| a + (v - m).exp()).ln();
    z.iter().map(|&v| v - lse).collect()
}

pub fn one_hot<S: Scalar>(labels: &[usize], classes: usize) -> Result<Tensor<S>> {
    let mut t = Tensor::zeros(&[labels.len(), classes]);
    for (b, &y) in labels.iter().enumerate() {
        if y >= classes {
            return Err(Error::Invalid(format!("label {y} out of range for {classes} classes")));
        }
        t.data_mut()[b * classes + y] = S::one();
    }
    Ok(t)
}

/// Batch-mean cross-entropy and its gradient (Softmax(z) − ŷ)/B.
pub fn softmax_ce<S: Scalar>(logits: &Tensor<S>, labels: &[usize]) -> Result<(S, Tensor<S>)> {
    let (b, n) = check_logits(logits, labels)?;
    let bs = S::of_usize(b);
    let mut loss = S::zero();
    let mut grad = vec![S::zero(); b * n];
    for (r, &y) in labels.iter().enumerate() {
        let z = &logits.data()[r * n..(r + 1) * n];
        let ls = log_softmax_row(z);
        loss -= ls[y];
        for (c, g) in grad[r * n..(r + 1) * n].iter_mut().enumerate() {
            let target = if c == y { S::one() } else { S::zero() };
            *g = (ls[c].exp() - target) / bs;
        }
    }
    let grad = Tensor::new(vec![b, n], grad)?;
    Ok((loss / bs, grad))
}

/// Batch mean of (1/n)Σᵢ(oᵢ − yᵢ)² and its gradient 2(o − y)/(n·B).
pub fn mse<S: Scalar>(output: &Tensor<S>, target: &Tensor<S>) -> Result<(S, Tensor<S>)> {
    if output.shape() != target.shape() || output.rank() != 2 {
        return Err(Error::Shape(format!(
            "mse: output {:?} vs target {:?}",
            output.shape(),
            target.shape()
        )));
    }
    let (b, n) = (output.shape()[0], output.shape()[1]);
    if b == 0 || n == 0 {
        return Err(Error::Invalid("mse of an empty batch".into()));
    }
    let denom = S::of_usize(b * n);
    let mut loss = S::zero();
    let mut grad = Vec::with_capacity(b * n);
    for (&o, &y) in output.data().iter().zip(target.data()) {
        let d = o - y;
        loss += d * d;
        grad.push(S::of(2.0) * d / denom);
    }
    Ok((loss / denom, Tensor::new(vec![b, n], grad)?))
}

/// O(t) for one timestep, `[B, n]`.
fn step<S: Scalar>(o: &Tensor<S>, t: usize) -> Tensor<S> {
    o.slice0(t).expect("timestep in range")
}

/// Writes `g` (shape `[B, n]`) into row-block `t` of `dst` scaled by `k`.
fn put_step<S: Scalar>(dst: &mut [S], t: usize, g: &Tensor<S>, k: S) {
    let len = g.len();
    for (d, &v) in dst[t * len..(t + 1) * len].iter_mut().zip(g.data()) {
        *d += v * k;
    }
}

fn replicate<S: Scalar>(g: &Tensor<S>, t_steps: usize) -> Vec<S> {
    let inv_t = S::one() / S::of_usize(t_steps);
    let mut out = vec![S::zero(); t_steps * g.len()];
    for t in 0..t_steps {
        put_step(&mut out, t, g, inv_t);
    }
    out
}

/// Cross-entropy of the time-averaged output.
pub fn sdt_ce_loss<S: Scalar>(o: &Tensor<S>, labels: &[usize]) -> Result<LossValue<S>> {
    let (t_steps, _, _) = check_outputs(o)?;
    let mean = o.reduce_mean(0)?;
    let (ce, g) = softmax_ce(&mean, labels)?;
    Ok(LossValue {
        total: ce,
        ce,
        mse: S::zero(),
        reg: S::zero(),
        output_grad: Tensor::new(o.shape().to_vec(), replicate(&g, t_steps))?,
        reg_grad: Vec::new(),
    })
}

/// MSE of the time-averaged output against one-hot targets.
pub fn sdt_mse_loss<S: Scalar>(o: &Tensor<S>, onehot: &Tensor<S>) -> Result<LossValue<S>> {
    let (t_steps, b, n) = check_outputs(o)?;
    if onehot.shape() != [b, n] {
        return Err(Error::Shape(format!(
            "targets {:?} do not match outputs [{b}, {n}]",
            onehot.shape()
        )));
    }
    for (r, row) in onehot.data().chunks(n).enumerate() {
        let s = row.iter().fold(S::zero(), |a, &v| a + v);
        if (s - S::one()).abs() > S::of(1e-9) {
            return Err(Error::Invalid(format!("target row {r} sums to {s}, not 1")));
        }
    }
    let mean = o.reduce_mean(0)?;
    let (m, g) = mse(&mean, onehot)?;
    Ok(LossValue {
        total: m,
        ce: S::zero(),
        mse: m,
        reg: S::zero(),
        output_grad: Tensor::new(o.shape().to_vec(), replicate(&g, t_steps))?,
        reg_grad: Vec::new(),
    })
}

/// Per-timestep mean of the CE and MSE terms with weights (w_ce, w_mse).
fn per_step_mix<S: Scalar>(
    o: &Tensor<S>,
    labels: &[usize],
    target: &Tensor<S>,
    w_ce: S,
    w_mse: S,
) -> Result<(S, S, Vec<S>)> {
    let (t_steps, _, _) = check_outputs(o)?;
    let inv_t = S::one() / S::of_usize(t_steps);
    let mut ce = S::zero();
    let mut ms = S::zero();
    let mut grad = vec![S::zero(); o.len()];
    for t in 0..t_steps {
        let ot = step(o, t);
        let (c, gc) = softmax_ce(&ot, labels)?;
        let (m, gm) = mse(&ot, target)?;
        ce += c;
        ms += m;
        put_step(&mut grad, t, &gc, w_ce * inv_t);
        put_step(&mut grad, t, &gm, w_mse * inv_t);
    }
    Ok((ce * inv_t, ms * inv_t, grad))
}

pub fn tet_loss<S: Scalar>(o: &Tensor<S>, labels: &[usize], cfg: &LossConfig<S>) -> Result<LossValue<S>> {
    cfg.validate()?;
    let (_, b, n) = check_outputs(o)?;
    let target = Tensor::full(&[b, n], cfg.phi);
    let (w_ce, w_mse) = (S::one() - cfg.mu, cfg.mu);
    let (ce, ms, grad) = per_step_mix(o, labels, &target, w_ce, w_mse)?;
    Ok(LossValue {
        total: w_ce * ce + w_mse * ms,
        ce,
        mse: ms,
        reg: S::zero(),
        output_grad: Tensor::new(o.shape().to_vec(), grad)?,
        reg_grad: Vec::new(),
    })
}

/// exp(δ(t − 1)) − 1, the growth term of the regularizer's denominator.
fn decay_term<S: Scalar>(t: usize, delta: S) -> S {
    (delta * S::of_usize(t - 1)).exp_m1()
}

fn check_t(t: usize) -> Result<()> {
    if t == 0 {
        return Err(Error::Invalid("timesteps are 1-based".into()));
    }
    Ok(())
}

/// r(t) = Σ λ·W² / (1 + (|W| + ε)·(exp(δ(t−1)) − 1)) over every element of
/// the given weights.
pub fn trt_regularizer<S: Scalar>(weights: &[&Tensor<S>], t: usize, cfg: &LossConfig<S>) -> Result<S> {
    check_t(t)?;
    let e = decay_term(t, cfg.delta);
    let mut acc = S::zero();
    for w in weights {
        for &x in w.data() {
            acc += x * x / (S::one() + (x.abs() + cfg.epsilon) * e);
        }
    }
    Ok(cfg.lambda * acc)
}

/// ∂r(t)/∂W = λ[2W/D − W²·sign(W)·E/D²] with D = 1 + (|W| + ε)E.
pub fn trt_regularizer_grad<S: Scalar>(
    weights: &[&Tensor<S>],
    t: usize,
    cfg: &LossConfig<S>,
) -> Result<Vec<Tensor<S>>> {
    check_t(t)?;
    let e = decay_term(t, cfg.delta);
    weights
        .iter()
        .map(|w| {
            w.map(|x| {
                let d = S::one() + (x.abs() + cfg.epsilon) * e;
                cfg.lambda * (S::of(2.0) * x / d - x * x * sign0(x) * e / (d * d))
            })
        })
        .collect()
}

pub fn trt_loss<S: Scalar>(
    o: &Tensor<S>,
    labels: &[usize],
    weights: &[&Tensor<S>],
    cfg: &LossConfig<S>,
) -> Result<LossValue<S>> {
    cfg.validate()?;
    let (t_steps, _, n) = check_outputs(o)?;
    let target = one_hot(labels, n)?;
    let (w_ce, w_mse) = (S::one() - cfg.eta, cfg.eta);
    let (ce, ms, grad) = per_step_mix(o, labels, &target, w_ce, w_mse)?;

    let inv_t = S::one() / S::of_usize(t_steps);
    let mut reg = S::zero();
    let mut reg_grad: Vec<Tensor<S>> = weights.iter().map(|w| Tensor::zeros(w.shape())).collect();
    for t in 1..=t_steps {
        reg += trt_regularizer(weights, t, cfg)?;
        for (acc, g) in reg_grad.iter_mut().zip(trt_regularizer_grad(weights, t, cfg)?) {
            acc.add_assign(&g)?;
        }
    }
    reg *= inv_t;
    for g in &mut reg_grad {
        *g = g.scale(inv_t)?;
    }
    Ok(LossValue {
        total: w_ce * ce + w_mse * ms + reg,
        ce,
        mse: ms,
        reg,
        output_grad: Tensor::new(o.shape().to_vec(), grad)?,
        reg_grad,
    })
}

/// Dispatches on `cfg.kind`. `hidden_weights` is only read by TRT.
pub fn compute_loss<S: Scalar>(
    o: &Tensor<S>,
    labels: &[usize],
    hidden_weights: &[&Tensor<S>],
    cfg: &LossConfig<S>,
) -> Result<LossValue<S>> {
    match cfg.kind {
        LossKind::SdtCe => sdt_ce_loss(o, labels),
        LossKind::SdtMse => {
            let (_, _, n) = check_outputs(o)?;
            sdt_mse_loss(o, &one_hot(labels, n)?)
        }
        LossKind::Tet => tet_loss(o, labels, cfg),
        LossKind::Trt => trt_loss(o, labels, hidden_weights, cfg),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{seeded_normal, Rng};
    use proptest::prelude::*;

    type T = Tensor<f64>;

    /// Fourth-order central differences, element by element.
    fn fd_check(f: impl Fn(&T) -> f64, x: &T, analytic: &T, tol: f64) {
        let h = 1e-3;
        for i in 0..x.len() {
            let at = |d: f64| {
                let mut xp = x.clone();
                xp.data_mut()[i] += d;
                f(&xp)
            };
            let fd = (-at(2.0 * h) + 8.0 * at(h) - 8.0 * at(-h) + at(-2.0 * h)) / (12.0 * h);
            let an = analytic.data()[i];
            assert!(
                (fd - an).abs() <= tol * fd.abs().max(an.abs()) + 1e-12,
                "i={i} fd={fd} analytic={an}"
            );
        }
    }

    #[test]
    fn ce_symmetric_logits() {
        let z = T::zeros(&[1, 2]);
        let (l, g) = softmax_ce(&z, &[0]).unwrap();
        assert!((l - 2f64.ln()).abs() < 1e-15);
        assert_eq!(g.data(), &[-0.5, 0.5]);
        let z = T::zeros(&[2, 2]);
        let (_, g) = softmax_ce(&z, &[0, 1]).unwrap();
        assert_eq!(g.data(), &[-0.25, 0.25, 0.25, -0.25]);
    }

    #[test]
    fn ce_saturates() {
        let z = T::from_f64(&[1, 3], &[800.0, 0.0, -5.0]).unwrap();
        let (l, _) = softmax_ce(&z, &[0]).unwrap();
        assert!(l.abs() < 1e-300);
    }

    #[test]
    fn ce_rejects_bad_label() {
        assert!(softmax_ce(&T::zeros(&[1, 3]), &[3]).is_err());
    }

    #[test]
    fn ce_gradient_matches_fd() {
        let z = seeded_normal(&mut Rng::new(1), &[4, 3], 0.0, 2.0).unwrap();
        let labels = [0, 2, 1, 2];
        let (_, g) = softmax_ce(&z, &labels).unwrap();
        fd_check(|z| softmax_ce(z, &labels).unwrap().0, &z, &g, 1e-8);
    }

    #[test]
    fn sdt_ce_constant_outputs() {
        let o1 = seeded_normal(&mut Rng::new(2), &[3, 4], 0.0, 1.0).unwrap();
        let o = T::stack(&[o1.clone(), o1.clone()]).unwrap();
        let labels = [1, 0, 3];
        let l = sdt_ce_loss(&o, &labels).unwrap();
        assert_eq!(l.total, softmax_ce(&o1, &labels).unwrap().0);
        let g = &l.output_grad;
        assert_eq!(g.slice0(0).unwrap(), g.slice0(1).unwrap());
    }

    #[test]
    fn sdt_gradients_match_fd() {
        let o = seeded_normal(&mut Rng::new(3), &[3, 2, 4], 0.0, 1.0).unwrap();
        let labels = [3, 1];
        let l = sdt_ce_loss(&o, &labels).unwrap();
        fd_check(|o| sdt_ce_loss(o, &labels).unwrap().total, &o, &l.output_grad, 1e-8);

        let y = one_hot::<f64>(&labels, 4).unwrap();
        let l = sdt_mse_loss(&o, &y).unwrap();
        fd_check(|o| sdt_mse_loss(o, &y).unwrap().total, &o, &l.output_grad, 1e-8);
    }

    #[test]
    fn sdt_mse_examples() {
        let y = T::from_f64(&[1, 2], &[0.0, 1.0]).unwrap();
        let o = T::from_f64(&[1, 1, 2], &[0.0, 1.0]).unwrap();
        assert_eq!(sdt_mse_loss(&o, &y).unwrap().total, 0.0);
        let o = T::from_f64(&[1, 1, 2], &[1.0, 0.0]).unwrap();
        assert_eq!(sdt_mse_loss(&o, &y).unwrap().total, 1.0);
        let bad = T::from_f64(&[1, 2], &[0.5, 0.2]).unwrap();
        assert!(sdt_mse_loss(&o, &bad).is_err());
        assert!(sdt_mse_loss(&o, &T::zeros(&[1, 3])).is_err());
    }

    #[test]
    fn tet_examples() {
        let o = seeded_normal(&mut Rng::new(4), &[3, 2, 3], 0.0, 1.0).unwrap();
        let labels = [0, 2];
        let mut cfg = LossConfig::with_kind(LossKind::Tet);
        cfg.mu = 0.0;
        let l = tet_loss(&o, &labels, &cfg).unwrap();
        let manual: f64 = (0..3)
            .map(|t| softmax_ce(&o.slice0(t).unwrap(), &labels).unwrap().0)
            .sum::<f64>()
            / 3.0;
        assert!((l.total - manual).abs() < 1e-15);

        cfg.mu = 1.0;
        cfg.phi = 0.3;
        let flat = T::full(&[3, 2, 3], 0.3);
        assert_eq!(tet_loss(&flat, &labels, &cfg).unwrap().total, 0.0);

        cfg.mu = 0.5;
        cfg.phi = 0.0;
        let l = tet_loss(&o, &labels, &cfg).unwrap();
        let mse_part: f64 = (0..3)
            .map(|t| mse(&o.slice0(t).unwrap(), &T::zeros(&[2, 3])).unwrap().0)
            .sum::<f64>()
            / 3.0;
        assert!((l.total - 0.5 * (manual + mse_part)).abs() < 1e-14);
        fd_check(|o| tet_loss(o, &labels, &cfg).unwrap().total, &o, &l.output_grad, 1e-8);
    }

    #[test]
    fn regularizer_examples() {
        let w = T::from_f64(&[3], &[0.5, -1.5, 2.0]).unwrap();
        let mut cfg = LossConfig::<f64> {
            lambda: 0.3,
            ..Default::default()
        };
        let l2 = 0.3 * w.sum_sq();
        assert_eq!(trt_regularizer(&[&w], 1, &cfg).unwrap(), l2);
        let g1 = trt_regularizer_grad(&[&w], 1, &cfg).unwrap();
        for (g, x) in g1[0].data().iter().zip(w.data()) {
            assert_eq!(*g, 2.0 * 0.3 * x);
        }

        cfg.delta = 0.0;
        for t in 1..6 {
            assert!((trt_regularizer(&[&w], t, &cfg).unwrap() - l2).abs() < 1e-15);
        }

        let one = T::from_f64(&[1], &[1.0]).unwrap();
        let cfg = LossConfig {
            lambda: 0.1,
            epsilon: 0.0,
            delta: 2f64.ln(),
            ..LossConfig::default()
        };
        assert!((trt_regularizer(&[&one], 2, &cfg).unwrap() - 0.05).abs() < 1e-16);

        let zero = T::zeros(&[2]);
        let g = trt_regularizer_grad(&[&zero], 4, &LossConfig::default()).unwrap();
        assert!(g[0].data().iter().all(|&x| x == 0.0));
        assert!(trt_regularizer(&[&w], 0, &cfg).is_err());
    }

    #[test]
    fn trt_degenerates() {
        let o = seeded_normal(&mut Rng::new(5), &[4, 3, 3], 0.0, 1.0).unwrap();
        let w = seeded_normal(&mut Rng::new(6), &[5, 3], 0.0, 1.0).unwrap();
        let labels = [2, 0, 1];
        let tet_cfg = LossConfig::<f64> {
            kind: LossKind::Tet,
            mu: 0.0,
            ..LossConfig::default()
        };
        let trt_cfg = LossConfig::<f64> {
            kind: LossKind::Trt,
            eta: 0.0,
            lambda: 0.0,
            ..LossConfig::default()
        };
        let a = tet_loss(&o, &labels, &tet_cfg).unwrap();
        let b = trt_loss(&o, &labels, &[&w], &trt_cfg).unwrap();
        assert!((a.total - b.total).abs() < 1e-12);
        assert_eq!(a.output_grad, b.output_grad);

        let pure_mse = LossConfig {
            kind: LossKind::Trt,
            eta: 1.0,
            lambda: 0.0,
            ..LossConfig::default()
        };
        let y = one_hot::<f64>(&labels, 3).unwrap();
        let manual: f64 = (0..4).map(|t| mse(&o.slice0(t).unwrap(), &y).unwrap().0).sum::<f64>() / 4.0;
        assert!((trt_loss(&o, &labels, &[&w], &pure_mse).unwrap().total - manual).abs() < 1e-14);
    }

    #[test]
    fn trt_components_recombine_and_grad_matches_fd() {
        let o = seeded_normal(&mut Rng::new(7), &[3, 2, 4], 0.0, 1.0).unwrap();
        let w = seeded_normal(&mut Rng::new(8), &[3, 2], 0.0, 1.0).unwrap();
        let labels = [1, 3];
        let cfg = LossConfig::<f64> {
            lambda: 0.05,
            ..LossConfig::default()
        };
        let l = trt_loss(&o, &labels, &[&w], &cfg).unwrap();
        assert!((l.total - ((1.0 - cfg.eta) * l.ce + cfg.eta * l.mse + l.reg)).abs() < 1e-12);
        fd_check(
            |o| trt_loss(o, &labels, &[&w], &cfg).unwrap().total,
            &o,
            &l.output_grad,
            1e-8,
        );
        fd_check(
            |w| trt_loss(&o, &labels, &[w], &cfg).unwrap().total,
            &w,
            &l.reg_grad[0],
            1e-8,
        );
    }

    proptest! {
        #[test]
        fn regularizer_decays(xs in proptest::collection::vec(-3.0f64..3.0, 1..8), delta in 0.01f64..1.0) {
            prop_assume!(xs.iter().any(|&x| x != 0.0));
            let w = T::from_f64(&[xs.len()], &xs).unwrap();
            let cfg = LossConfig { lambda: 0.7, delta, ..LossConfig::default() };
            let mut prev = trt_regularizer(&[&w], 1, &cfg).unwrap();
            for t in 2..30 {
                let r = trt_regularizer(&[&w], t, &cfg).unwrap();
                prop_assert!(r < prev);
                prev = r;
            }
            let far = 1 + (700.0 / delta) as usize;
            prop_assert!(trt_regularizer(&[&w], far, &cfg).unwrap() < 1e-100);
        }

        #[test]
        fn regularizer_grad_magnitude_non_increasing(x in -4.0f64..4.0, delta in 0.01f64..1.0, eps in 1e-6f64..0.1) {
            let w = T::from_f64(&[1], &[x]).unwrap();
            let cfg = LossConfig { lambda: 1.0, delta, epsilon: eps, ..LossConfig::default() };
            let mut prev = f64::INFINITY;
            for t in 1..40 {
                let g = trt_regularizer_grad(&[&w], t, &cfg).unwrap()[0].data()[0].abs();
                prop_assert!(g <= prev * (1.0 + 1e-12));
                prev = g;
            }
        }

        #[test]
        fn sdt_ce_bounded_by_per_step_mean(seed in 0u64..500) {
            let o = seeded_normal(&mut Rng::new(seed), &[4, 3, 5], 0.0, 2.0).unwrap();
            let labels = [0, 4, 2];
            let sdt = sdt_ce_loss(&o, &labels).unwrap().total;
            let tet = tet_loss(&o, &labels, &LossConfig { kind: LossKind::Tet, mu: 0.0, ..LossConfig::default() }).unwrap().total;
            prop_assert!(sdt <= tet + 1e-12);
        }
    }
}
