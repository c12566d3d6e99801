use crate::error::{Error, Result};
use crate::rng::{seeded_normal, Rng};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

use super::spec::NetworkSpec;

#[derive(Clone, Debug, PartialEq)]
pub struct NormParams<S> {
    pub scale: Tensor<S>,
    pub shift: Tensor<S>,
    pub running_mean: Tensor<S>,
    pub running_var: Tensor<S>,
}

impl<S: Scalar> NormParams<S> {
    pub fn new(channels: usize) -> Self {
        Self {
            scale: Tensor::full(&[channels], S::one()),
            shift: Tensor::zeros(&[channels]),
            running_mean: Tensor::zeros(&[channels]),
            running_var: Tensor::full(&[channels], S::one()),
        }
    }

    pub fn channels(&self) -> usize {
        self.scale.len()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerParams<S> {
    pub weight: Tensor<S>,
    pub bias: Tensor<S>,
    pub norm: Option<NormParams<S>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Parameters<S> {
    pub layers: Vec<LayerParams<S>>,
}

impl<S: Scalar> Parameters<S> {
    /// He-normal weights (std = sqrt(2 / fan_in)), zero biases, unit norm
    /// scales and zero shifts.
    pub fn init(spec: &NetworkSpec<S>, rng: &mut Rng) -> Result<Self> {
        spec.validate()?;
        let layers = spec
            .layers
            .iter()
            .map(|l| {
                let std = (S::of(2.0) / S::of_usize(l.kind.fan_in())).sqrt();
                Ok(LayerParams {
                    weight: seeded_normal(rng, &l.kind.weight_shape(), S::zero(), std)?,
                    bias: Tensor::zeros(&[l.kind.channels()]),
                    norm: l.has_norm.then(|| NormParams::new(l.kind.channels())),
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self { layers })
    }

    pub fn zeros(spec: &NetworkSpec<S>) -> Self {
        let layers = spec
            .layers
            .iter()
            .map(|l| LayerParams {
                weight: Tensor::zeros(&l.kind.weight_shape()),
                bias: Tensor::zeros(&[l.kind.channels()]),
                norm: l.has_norm.then(|| NormParams::new(l.kind.channels())),
            })
            .collect();
        Self { layers }
    }

    pub fn check_against(&self, spec: &NetworkSpec<S>) -> Result<()> {
        if self.layers.len() != spec.layers.len() {
            return Err(Error::Shape(format!(
                "parameters have {} layers, spec has {}",
                self.layers.len(),
                spec.layers.len()
            )));
        }
        for (i, (p, l)) in self.layers.iter().zip(&spec.layers).enumerate() {
            if p.weight.shape() != l.kind.weight_shape().as_slice()
                || p.bias.len() != l.kind.channels()
                || p.norm.is_some() != l.has_norm
                || p.norm.as_ref().is_some_and(|n| n.channels() != l.kind.channels())
            {
                return Err(Error::Shape(format!("layer {i} parameters do not match spec")));
            }
        }
        Ok(())
    }

    /// Synaptic weights of the spiking layers (readout excluded); the set the
    /// temporal regularizer acts on.
    pub fn hidden_weights(&self) -> Vec<&Tensor<S>> {
        let n = self.layers.len().saturating_sub(1);
        self.layers[..n].iter().map(|l| &l.weight).collect()
    }

    pub fn all_weights(&self) -> Vec<&Tensor<S>> {
        self.layers.iter().map(|l| &l.weight).collect()
    }

    /// Trainable tensors in the canonical order shared with [`Gradients`].
    pub fn trainable_mut(&mut self) -> Vec<&mut Tensor<S>> {
        let mut out = Vec::new();
        for l in &mut self.layers {
            out.push(&mut l.weight);
            out.push(&mut l.bias);
            if let Some(n) = &mut l.norm {
                out.push(&mut n.scale);
                out.push(&mut n.shift);
            }
        }
        out
    }

    pub fn trainable(&self) -> Vec<&Tensor<S>> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.push(&l.weight);
            out.push(&l.bias);
            if let Some(n) = &l.norm {
                out.push(&n.scale);
                out.push(&n.shift);
            }
        }
        out
    }

    /// Names matching [`Parameters::trainable`].
    pub fn trainable_names(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (i, l) in self.layers.iter().enumerate() {
            out.push(format!("layer{i}.weight"));
            out.push(format!("layer{i}.bias"));
            if l.norm.is_some() {
                out.push(format!("layer{i}.norm.scale"));
                out.push(format!("layer{i}.norm.shift"));
            }
        }
        out
    }

    /// Every stored tensor, trainable or not, with a stable name.
    pub fn named(&self) -> Vec<(String, &Tensor<S>)> {
        let mut out = Vec::new();
        for (i, l) in self.layers.iter().enumerate() {
            out.push((format!("layer{i}.weight"), &l.weight));
            out.push((format!("layer{i}.bias"), &l.bias));
            if let Some(n) = &l.norm {
                out.push((format!("layer{i}.norm.scale"), &n.scale));
                out.push((format!("layer{i}.norm.shift"), &n.shift));
                out.push((format!("layer{i}.norm.running_mean"), &n.running_mean));
                out.push((format!("layer{i}.norm.running_var"), &n.running_var));
            }
        }
        out
    }

    pub fn named_mut(&mut self) -> Vec<(String, &mut Tensor<S>)> {
        let mut out = Vec::new();
        for (i, l) in self.layers.iter_mut().enumerate() {
            out.push((format!("layer{i}.weight"), &mut l.weight));
            out.push((format!("layer{i}.bias"), &mut l.bias));
            if let Some(n) = &mut l.norm {
                out.push((format!("layer{i}.norm.scale"), &mut n.scale));
                out.push((format!("layer{i}.norm.shift"), &mut n.shift));
                out.push((format!("layer{i}.norm.running_mean"), &mut n.running_mean));
                out.push((format!("layer{i}.norm.running_var"), &mut n.running_var));
            }
        }
        out
    }

    pub fn num_trainable(&self) -> usize {
        self.trainable().iter().map(|t| t.len()).sum()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerGrads<S> {
    pub weight: Tensor<S>,
    pub bias: Tensor<S>,
    pub scale: Option<Tensor<S>>,
    pub shift: Option<Tensor<S>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Gradients<S> {
    pub layers: Vec<LayerGrads<S>>,
}

impl<S: Scalar> Gradients<S> {
    pub fn zeros_like(params: &Parameters<S>) -> Self {
        let layers = params
            .layers
            .iter()
            .map(|l| LayerGrads {
                weight: Tensor::zeros(l.weight.shape()),
                bias: Tensor::zeros(l.bias.shape()),
                scale: l.norm.as_ref().map(|n| Tensor::zeros(n.scale.shape())),
                shift: l.norm.as_ref().map(|n| Tensor::zeros(n.shift.shape())),
            })
            .collect();
        Self { layers }
    }

    /// Same order as [`Parameters::trainable`].
    pub fn tensors(&self) -> Vec<&Tensor<S>> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.push(&l.weight);
            out.push(&l.bias);
            if let (Some(a), Some(b)) = (&l.scale, &l.shift) {
                out.push(a);
                out.push(b);
            }
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor<S>> {
        let mut out = Vec::new();
        for l in &mut self.layers {
            out.push(&mut l.weight);
            out.push(&mut l.bias);
            if let (Some(a), Some(b)) = (&mut l.scale, &mut l.shift) {
                out.push(a);
                out.push(b);
            }
        }
        out
    }

    pub fn add_assign(&mut self, other: &Self) -> Result<()> {
        let theirs = other.tensors();
        let mine = self.tensors_mut();
        if mine.len() != theirs.len() {
            return Err(Error::Shape("gradient sets differ in structure".into()));
        }
        for (a, b) in mine.into_iter().zip(theirs) {
            a.add_assign(b)?;
        }
        Ok(())
    }

    /// Adds per-layer weight gradients for the spiking layers, as produced by
    /// the temporal regularizer.
    pub fn add_hidden_weight_grads(&mut self, extra: &[Tensor<S>]) -> Result<()> {
        let n = self.layers.len().saturating_sub(1);
        if extra.len() != n {
            return Err(Error::Shape(format!(
                "{} weight gradients for {} spiking layers",
                extra.len(),
                n
            )));
        }
        for (l, g) in self.layers[..n].iter_mut().zip(extra) {
            l.weight.add_assign(g)?;
        }
        Ok(())
    }

    pub fn flat(&self) -> Vec<S> {
        self.tensors()
            .into_iter()
            .flat_map(|t| t.data().iter().copied())
            .collect()
    }

    pub fn is_all_zero(&self) -> bool {
        self.tensors().iter().all(|t| t.data().iter().all(|&x| x == S::zero()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neuron::LIFParams;

    #[test]
    fn init_is_deterministic() {
        let spec = NetworkSpec::<f64>::dense(&[4, 4, 2], true, LIFParams::default(), 2).unwrap();
        let a = Parameters::init(&spec, &mut Rng::new(5)).unwrap();
        let b = Parameters::init(&spec, &mut Rng::new(5)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.layers[0].weight.len(), 16);
        let norm = a.layers[0].norm.as_ref().unwrap();
        assert!(norm.scale.data().iter().all(|&x| x == 1.0));
        assert!(norm.shift.data().iter().all(|&x| x == 0.0));
        assert!(a.layers[1].norm.is_none());
    }

    #[test]
    fn init_std_matches_fan_in() {
        let spec = NetworkSpec::<f64>::dense(&[512, 512, 2], false, LIFParams::default(), 1).unwrap();
        let p = Parameters::init(&spec, &mut Rng::new(1)).unwrap();
        let w = &p.layers[0].weight;
        let n = w.len() as f64;
        let mean = w.sum() / n;
        let std = (w.data().iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
        let target = (2.0f64 / 512.0).sqrt();
        assert!((std / target - 1.0).abs() < 0.05, "std {std} target {target}");
    }

    #[test]
    fn names_follow_trainable_order() {
        let spec = NetworkSpec::<f64>::dense(&[3, 4, 2], true, LIFParams::default(), 1).unwrap();
        let p = Parameters::init(&spec, &mut Rng::new(1)).unwrap();
        let g = Gradients::zeros_like(&p);
        assert_eq!(p.trainable_names().len(), p.trainable().len());
        assert_eq!(g.tensors().len(), p.trainable().len());
        for (a, b) in g.tensors().iter().zip(p.trainable()) {
            assert_eq!(a.shape(), b.shape());
        }
    }
}
