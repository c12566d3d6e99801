use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

use super::norm::{tdbn_forward, update_running, BatchStats};
use super::params::Parameters;
use super::spec::NetworkSpec;
use super::{affine, Mode};

/// Cached quantities of one spiking layer, each shaped `[T, B, features]`.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerTrace<S> {
    /// Affine output before normalization.
    pub pre_norm: Tensor<S>,
    /// Pre-synaptic input X(t) fed to the neurons.
    pub x: Tensor<S>,
    /// Charged membrane potential before reset.
    pub u: Tensor<S>,
    /// Spike output s(t).
    pub s: Tensor<S>,
    pub stats: Option<BatchStats<S>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ForwardTrace<S> {
    pub mode: Mode,
    pub time_steps: usize,
    pub batch: usize,
    pub input: Tensor<S>,
    /// One entry per spiking layer.
    pub layers: Vec<LayerTrace<S>>,
    /// Readout O(t), `[T, B, classes]`.
    pub outputs: Tensor<S>,
}

impl<S: Scalar> ForwardTrace<S> {
    /// Input of layer `i`: the network input or the spikes of layer `i − 1`.
    pub fn layer_input(&self, i: usize) -> &Tensor<S> {
        if i == 0 {
            &self.input
        } else {
            &self.layers[i - 1].s
        }
    }

    /// Folds the training-mode batch statistics into the running averages.
    pub fn update_running_stats(&self, spec: &NetworkSpec<S>, params: &mut Parameters<S>) {
        for (lt, lp) in self.layers.iter().zip(params.layers.iter_mut()) {
            if let (Some(stats), Some(norm)) = (&lt.stats, lp.norm.as_mut()) {
                update_running(norm, stats, &spec.norm);
            }
        }
    }
}

/// Runs the network for `T` steps over `input` of shape `[T, B, features]`.
///
/// Layers are evaluated one at a time over the whole window: the affine map
/// and the normalization see all `T·B` rows at once, then the neurons are
/// integrated forward in time from u(0) = 0.
pub fn forward<S: Scalar>(
    spec: &NetworkSpec<S>,
    params: &Parameters<S>,
    input: &Tensor<S>,
    mode: Mode,
) -> Result<ForwardTrace<S>> {
    spec.validate()?;
    params.check_against(spec)?;
    let t_steps = spec.time_steps;
    let in_f = spec.input_features();
    if input.rank() != 3 || input.shape()[0] != t_steps || input.shape()[2] != in_f {
        return Err(Error::Shape(format!(
            "input {:?} does not match [T={}, B, {}]",
            input.shape(),
            t_steps,
            in_f
        )));
    }
    input.ensure_finite("network input")?;
    let batch = input.shape()[1];
    let rows = t_steps * batch;
    let lif = &spec.lif;

    let mut layers = Vec::with_capacity(spec.hidden_layers());
    for (i, (ls, lp)) in spec.layers.iter().zip(&params.layers).enumerate() {
        if ls.is_readout {
            break;
        }
        let a = if i == 0 {
            input.data()
        } else {
            layers.last().map(|l: &LayerTrace<S>| l.s.data()).unwrap_or(&[])
        };
        let feat = ls.kind.out_features();
        let shape = vec![t_steps, batch, feat];
        let z = affine::forward(&ls.kind, a, lp.weight.data(), lp.bias.data(), rows);
        let pre_norm = Tensor::from_parts(shape.clone(), z);
        pre_norm.ensure_finite(&format!("layer {i} affine"))?;
        let (x, stats) = match &lp.norm {
            Some(norm) => tdbn_forward(&pre_norm, norm, ls.kind.spatial(), &spec.norm, mode)?,
            None => (pre_norm.clone(), None),
        };

        let per_step = batch * feat;
        let xd = x.data();
        let mut u = vec![S::zero(); rows * feat];
        let mut s = vec![S::zero(); rows * feat];
        let mut membrane = vec![S::zero(); per_step];
        for t in 0..t_steps {
            let off = t * per_step;
            for j in 0..per_step {
                let charged = lif.gamma * membrane[j] + xd[off + j];
                let spike = spec.firing.fire(charged, lif);
                u[off + j] = charged;
                s[off + j] = spike;
                membrane[j] = (S::one() - spike) * charged + spike * lif.u_reset;
            }
        }
        let u = Tensor::from_parts(shape.clone(), u);
        u.ensure_finite(&format!("layer {i} membrane"))?;
        layers.push(LayerTrace {
            pre_norm,
            x,
            u,
            s: Tensor::from_parts(shape, s),
            stats,
        });
    }

    let ro = spec.layers.len() - 1;
    let ro_spec = &spec.layers[ro];
    let ro_params = &params.layers[ro];
    let a = if ro == 0 { input } else { &layers[ro - 1].s };
    let o = affine::forward(
        &ro_spec.kind,
        a.data(),
        ro_params.weight.data(),
        ro_params.bias.data(),
        rows,
    );
    let outputs = Tensor::from_parts(vec![t_steps, batch, spec.classes()], o);
    outputs.ensure_finite("readout")?;

    Ok(ForwardTrace {
        mode,
        time_steps: t_steps,
        batch,
        input: input.clone(),
        layers,
        outputs,
    })
}
