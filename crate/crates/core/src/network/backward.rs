//! Backpropagation through time.
//!
//! For spiking layer `i` the cotangent of the charged potential splits into a
//! spatial part, the gradient arriving from the layer above at the same step
//! times the surrogate, and a temporal part carried back from step `t + 1`
//! through the factor ξ(t):
//!
//! ```text
//! ∇P(t) = ∂L/∂s(t) · H(u(t))
//! ∇T(t) = ∂L/∂u(t+1) · ξ(t),      ∇T(T) = 0
//! ∂L/∂u(t) = ∇P(t) + ∇T(t)
//! ```
//!
//! Unrolling the recursion gives ∇T(t) as the sum over later steps of ∇P(t')
//! times the product of ξ between them. The reset path is not detached.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

use super::affine;
use super::forward::ForwardTrace;
use super::norm::tdbn_backward;
use super::params::{Gradients, LayerGrads, Parameters};
use super::spec::NetworkSpec;

#[derive(Clone, Debug, PartialEq)]
pub struct GradComponentRow<S> {
    /// Spiking layer index, 0-based.
    pub layer: usize,
    /// Timestep, 1-based.
    pub t: usize,
    /// ‖∇P(t)‖₂ over batch and units.
    pub spatial: S,
    /// ‖∇T(t)‖₂ over batch and units.
    pub temporal: S,
}

#[derive(Clone, Debug)]
pub struct TemporalGradComponents<S> {
    pub rows: Vec<GradComponentRow<S>>,
    /// Parameter gradients driven by ∇P alone. The readout, which has no
    /// temporal path, is attributed here in full.
    pub spatial: Gradients<S>,
    /// Parameter gradients driven by ∇T alone.
    pub temporal: Gradients<S>,
    /// ∇P per spiking layer, `[T, B, units]`.
    pub spatial_signal: Vec<Tensor<S>>,
    /// ∇T per spiking layer, `[T, B, units]`.
    pub temporal_signal: Vec<Tensor<S>>,
}

impl<S: Scalar> TemporalGradComponents<S> {
    pub fn recombined(&self) -> Result<Gradients<S>> {
        let mut g = self.spatial.clone();
        g.add_assign(&self.temporal)?;
        Ok(g)
    }

    pub fn row(&self, layer: usize, t: usize) -> Option<&GradComponentRow<S>> {
        self.rows.iter().find(|r| r.layer == layer && r.t == t)
    }
}

pub fn backward<S: Scalar>(
    spec: &NetworkSpec<S>,
    params: &Parameters<S>,
    trace: &ForwardTrace<S>,
    d_out: &Tensor<S>,
) -> Result<Gradients<S>> {
    Ok(run(spec, params, trace, d_out, false)?.0)
}

pub fn temporal_grad_components<S: Scalar>(
    spec: &NetworkSpec<S>,
    params: &Parameters<S>,
    trace: &ForwardTrace<S>,
    d_out: &Tensor<S>,
) -> Result<TemporalGradComponents<S>> {
    let (_, parts) = run(spec, params, trace, d_out, true)?;
    Ok(parts.expect("decomposition requested"))
}

fn check(
    spec: &NetworkSpec<impl Scalar>,
    params: &Parameters<impl Scalar>,
    trace: &ForwardTrace<impl Scalar>,
    d_out: &Tensor<impl Scalar>,
) -> Result<()> {
    if d_out.shape() != trace.outputs.shape() {
        return Err(Error::Shape(format!(
            "output cotangent {:?} vs outputs {:?}",
            d_out.shape(),
            trace.outputs.shape()
        )));
    }
    if trace.layers.len() != spec.hidden_layers()
        || trace.time_steps != spec.time_steps
        || params.layers.len() != spec.layers.len()
    {
        return Err(Error::Shape("trace does not match network".into()));
    }
    for (i, lt) in trace.layers.iter().enumerate() {
        let f = spec.layers[i].kind.out_features();
        if lt.u.shape() != [trace.time_steps, trace.batch, f] {
            return Err(Error::Shape(format!("trace layer {i} extents")));
        }
    }
    Ok(())
}

/// Gradients of layer `i`'s parameters given the cotangent of its norm
/// output (or affine output, without norm). Returns the input cotangent when
/// `want_input`.
fn layer_params_backward<S: Scalar>(
    spec: &NetworkSpec<S>,
    params: &Parameters<S>,
    trace: &ForwardTrace<S>,
    i: usize,
    d_x: &[S],
    want_input: bool,
) -> Result<(LayerGrads<S>, Option<Vec<S>>)> {
    let ls = &spec.layers[i];
    let lp = &params.layers[i];
    let lt = &trace.layers[i];
    let rows = trace.time_steps * trace.batch;
    let channels = ls.kind.channels();
    let (d_pre, scale, shift) = match &lp.norm {
        Some(norm) => {
            let g = tdbn_backward(
                d_x,
                &lt.pre_norm,
                norm,
                ls.kind.spatial(),
                &spec.norm,
                lt.stats.as_ref(),
            )?;
            (
                g.d_input,
                Some(Tensor::from_parts(vec![channels], g.d_scale)),
                Some(Tensor::from_parts(vec![channels], g.d_shift)),
            )
        }
        None => (d_x.to_vec(), None, None),
    };
    let ag = affine::backward(
        &ls.kind,
        trace.layer_input(i).data(),
        lp.weight.data(),
        &d_pre,
        rows,
        want_input,
    );
    Ok((
        LayerGrads {
            weight: Tensor::from_parts(lp.weight.shape().to_vec(), ag.d_weight),
            bias: Tensor::from_parts(vec![channels], ag.d_bias),
            scale,
            shift,
        },
        ag.d_input,
    ))
}

fn slice_norm<S: Scalar>(x: &[S]) -> S {
    x.iter().fold(S::zero(), |acc, &v| acc + v * v).sqrt()
}

fn run<S: Scalar>(
    spec: &NetworkSpec<S>,
    params: &Parameters<S>,
    trace: &ForwardTrace<S>,
    d_out: &Tensor<S>,
    decompose: bool,
) -> Result<(Gradients<S>, Option<TemporalGradComponents<S>>)> {
    check(spec, params, trace, d_out)?;
    let t_steps = trace.time_steps;
    let batch = trace.batch;
    let rows = t_steps * batch;
    let lif = &spec.lif;
    let ro = spec.layers.len() - 1;

    let mut grads = Gradients::zeros_like(params);
    let ag = affine::backward(
        &spec.layers[ro].kind,
        trace.layer_input(ro).data(),
        params.layers[ro].weight.data(),
        d_out.data(),
        rows,
        ro > 0,
    );
    grads.layers[ro].weight = Tensor::from_parts(params.layers[ro].weight.shape().to_vec(), ag.d_weight);
    grads.layers[ro].bias = Tensor::from_parts(vec![spec.classes()], ag.d_bias);

    let mut parts = decompose.then(|| {
        let mut spatial = Gradients::zeros_like(params);
        spatial.layers[ro] = grads.layers[ro].clone();
        TemporalGradComponents {
            rows: Vec::new(),
            spatial,
            temporal: Gradients::zeros_like(params),
            spatial_signal: vec![Tensor::zeros(&[0]); ro],
            temporal_signal: vec![Tensor::zeros(&[0]); ro],
        }
    });

    let mut d_s = ag.d_input.unwrap_or_default();
    for i in (0..ro).rev() {
        let lt = &trace.layers[i];
        let feat = spec.layers[i].kind.out_features();
        let per_step = batch * feat;
        let u = lt.u.data();
        let s = lt.s.data();

        let mut d_x = vec![S::zero(); rows * feat];
        let mut p_sig = vec![S::zero(); if decompose { rows * feat } else { 0 }];
        let mut t_sig = vec![S::zero(); if decompose { rows * feat } else { 0 }];
        let mut carry = vec![S::zero(); per_step];
        for t in (0..t_steps).rev() {
            let off = t * per_step;
            for j in 0..per_step {
                let k = off + j;
                let h = lif.surrogate(u[k]);
                let spatial = d_s[k] * h;
                let temporal = carry[j] * lif.xi(u[k], s[k]);
                let total = spatial + temporal;
                d_x[k] = total;
                carry[j] = total;
                if decompose {
                    p_sig[k] = spatial;
                    t_sig[k] = temporal;
                }
            }
        }

        let (lg, d_in) = layer_params_backward(spec, params, trace, i, &d_x, i > 0)?;
        grads.layers[i] = lg;

        if let Some(parts) = parts.as_mut() {
            let (gp, _) = layer_params_backward(spec, params, trace, i, &p_sig, false)?;
            let (gt, _) = layer_params_backward(spec, params, trace, i, &t_sig, false)?;
            parts.spatial.layers[i] = gp;
            parts.temporal.layers[i] = gt;
            for t in 0..t_steps {
                let r = t * per_step..(t + 1) * per_step;
                parts.rows.push(GradComponentRow {
                    layer: i,
                    t: t + 1,
                    spatial: slice_norm(&p_sig[r.clone()]),
                    temporal: slice_norm(&t_sig[r]),
                });
            }
            let shape = vec![t_steps, batch, feat];
            parts.spatial_signal[i] = Tensor::from_parts(shape.clone(), p_sig);
            parts.temporal_signal[i] = Tensor::from_parts(shape, t_sig);
        }

        d_s = d_in.unwrap_or_default();
    }

    for g in grads.tensors() {
        g.ensure_finite("backward")?;
    }
    if let Some(p) = parts.as_mut() {
        p.rows.sort_by_key(|r| (r.layer, r.t));
    }
    Ok((grads, parts))
}
