//! Layer stack, T-step forward pass and exact BPTT.

mod affine;
pub mod backward;
pub mod forward;
pub mod norm;
pub mod params;
pub mod spec;

pub use backward::{backward, temporal_grad_components, GradComponentRow, TemporalGradComponents};
pub use forward::{forward, ForwardTrace, LayerTrace};
pub use norm::{tdbn_forward, BatchStats};
pub use params::{Gradients, LayerGrads, LayerParams, NormParams, Parameters};
pub use spec::{LayerKind, LayerSpec, NetworkSpec, NormConfig};

use crate::error::Result;
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Normalization behaviour of a forward pass.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics over the flattened T·B rows.
    Train,
    /// Running statistics.
    Eval,
}

/// A network definition together with its parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Model<S> {
    pub spec: NetworkSpec<S>,
    pub params: Parameters<S>,
}

impl<S: Scalar> Model<S> {
    pub fn new(spec: NetworkSpec<S>, rng: &mut Rng) -> Result<Self> {
        let params = Parameters::init(&spec, rng)?;
        Ok(Self { spec, params })
    }

    pub fn forward(&self, input: &Tensor<S>, mode: Mode) -> Result<ForwardTrace<S>> {
        forward(&self.spec, &self.params, input, mode)
    }

    pub fn backward(&self, trace: &ForwardTrace<S>, d_out: &Tensor<S>) -> Result<Gradients<S>> {
        backward(&self.spec, &self.params, trace, d_out)
    }

    pub fn temporal_grad_components(
        &self,
        trace: &ForwardTrace<S>,
        d_out: &Tensor<S>,
    ) -> Result<TemporalGradComponents<S>> {
        temporal_grad_components(&self.spec, &self.params, trace, d_out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neuron::{Firing, LIFParams};
    use crate::rng::seeded_normal;

    fn lif() -> LIFParams<f64> {
        LIFParams::new(0.5, 1.0, 0.0, 1.0).unwrap()
    }

    #[test]
    fn zero_weights_emit_bias() {
        let spec = NetworkSpec::dense(&[3, 4, 2], true, lif(), 3).unwrap();
        let mut params = Parameters::zeros(&spec);
        params.layers[1].bias = Tensor::from_f64(&[2], &[0.5, -0.25]).unwrap();
        let input = seeded_normal(&mut Rng::new(1), &[3, 2, 3], 0.0, 1.0).unwrap();
        let trace = forward(&spec, &params, &input, Mode::Train).unwrap();
        for row in trace.outputs.data().chunks(2) {
            assert_eq!(row, &[0.5, -0.25]);
        }
    }

    #[test]
    fn single_readout_is_affine_map() {
        let spec = NetworkSpec::dense(&[2, 2], false, lif(), 1).unwrap();
        let mut params = Parameters::zeros(&spec);
        params.layers[0].weight = Tensor::eye(2);
        let input = Tensor::from_f64(&[1, 2, 2], &[0.1, 0.2, -0.3, 0.4]).unwrap();
        let trace = forward(&spec, &params, &input, Mode::Eval).unwrap();
        assert_eq!(trace.outputs.data(), input.data());
    }

    #[test]
    fn forward_is_deterministic() {
        let spec = NetworkSpec::dense(&[5, 6, 3], true, lif(), 4).unwrap();
        let model = Model::new(spec, &mut Rng::new(8)).unwrap();
        let input = seeded_normal(&mut Rng::new(9), &[4, 3, 5], 0.5, 1.0).unwrap();
        let a = model.forward(&input, Mode::Train).unwrap();
        let b = model.forward(&input, Mode::Train).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn input_shape_checked() {
        let spec = NetworkSpec::dense(&[5, 3], false, lif(), 4).unwrap();
        let model = Model::new(spec, &mut Rng::new(8)).unwrap();
        assert!(model.forward(&Tensor::zeros(&[3, 1, 5]), Mode::Eval).is_err());
        assert!(model.forward(&Tensor::zeros(&[4, 1, 4]), Mode::Eval).is_err());
    }

    #[test]
    fn zero_cotangent_gives_zero_gradients() {
        let spec = NetworkSpec::dense(&[4, 5, 3], true, lif(), 3).unwrap();
        let model = Model::new(spec, &mut Rng::new(2)).unwrap();
        let input = seeded_normal(&mut Rng::new(3), &[3, 2, 4], 1.0, 1.0).unwrap();
        let trace = model.forward(&input, Mode::Train).unwrap();
        let g = model.backward(&trace, &Tensor::zeros(trace.outputs.shape())).unwrap();
        assert!(g.is_all_zero());
    }

    #[test]
    fn cotangent_shape_checked() {
        let spec = NetworkSpec::dense(&[4, 5, 3], true, lif(), 3).unwrap();
        let model = Model::new(spec, &mut Rng::new(2)).unwrap();
        let input = Tensor::zeros(&[3, 2, 4]);
        let trace = model.forward(&input, Mode::Train).unwrap();
        assert!(model.backward(&trace, &Tensor::zeros(&[3, 2, 2])).is_err());
    }

    #[test]
    fn last_step_has_no_temporal_component() {
        let spec = NetworkSpec::dense(&[4, 5, 5, 3], true, lif(), 4)
            .unwrap()
            .with_firing(Firing::SmoothRamp);
        let model = Model::new(spec, &mut Rng::new(6)).unwrap();
        let input = seeded_normal(&mut Rng::new(7), &[4, 3, 4], 1.0, 1.0).unwrap();
        let trace = model.forward(&input, Mode::Train).unwrap();
        let d_out = seeded_normal(&mut Rng::new(8), trace.outputs.shape(), 0.0, 1.0).unwrap();
        let parts = model.temporal_grad_components(&trace, &d_out).unwrap();
        for layer in 0..2 {
            assert_eq!(parts.row(layer, 4).unwrap().temporal, 0.0);
        }
        assert_eq!(parts.rows.len(), 2 * 4);
    }

    #[test]
    fn single_step_is_pure_spatial_chain_rule() {
        let spec = NetworkSpec::dense(&[3, 4, 2], false, lif(), 1)
            .unwrap()
            .with_firing(Firing::SmoothRamp);
        let model = Model::new(spec, &mut Rng::new(3)).unwrap();
        let input = seeded_normal(&mut Rng::new(4), &[1, 2, 3], 1.0, 1.0).unwrap();
        let trace = model.forward(&input, Mode::Train).unwrap();
        let d_out = seeded_normal(&mut Rng::new(5), trace.outputs.shape(), 0.0, 1.0).unwrap();
        let parts = model.temporal_grad_components(&trace, &d_out).unwrap();
        assert!(parts.temporal.is_all_zero());
        assert_eq!(parts.spatial, model.backward(&trace, &d_out).unwrap());

        // Hand chain rule: dW0 = Σ_b (W1ᵀ dO ⊙ H(u)) xᵀ
        let w1 = &model.params.layers[1].weight;
        let mut expected = vec![0.0; 12];
        for b in 0..2 {
            for h in 0..4 {
                let mut ds = 0.0;
                for o in 0..2 {
                    ds += d_out.data()[b * 2 + o] * w1.data()[o * 4 + h];
                }
                let du = ds * model.spec.lif.surrogate(trace.layers[0].u.data()[b * 4 + h]);
                for i in 0..3 {
                    expected[h * 3 + i] += du * input.data()[b * 3 + i];
                }
            }
        }
        let got = model.backward(&trace, &d_out).unwrap();
        for (a, b) in got.layers[0].weight.data().iter().zip(&expected) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn conv_layer_gradients_match_finite_differences() {
        use super::spec::LayerKind;
        let spec = NetworkSpec {
            layers: vec![
                LayerSpec {
                    kind: LayerKind::Conv2d {
                        in_channels: 2,
                        out_channels: 2,
                        kernel: 3,
                        stride: 1,
                        padding: 1,
                        in_h: 3,
                        in_w: 3,
                    },
                    has_norm: true,
                    is_readout: false,
                },
                LayerSpec::readout(18, 2),
            ],
            lif: lif(),
            time_steps: 3,
            firing: Firing::SmoothRamp,
            norm: NormConfig::default(),
        };
        let model = Model::new(spec.clone(), &mut Rng::new(21)).unwrap();
        let input = seeded_normal(&mut Rng::new(22), &[3, 2, 18], 0.5, 1.0).unwrap();
        let w_out = seeded_normal(&mut Rng::new(23), &[3, 2, 2], 0.0, 1.0).unwrap();
        let loss = |p: &Parameters<f64>| {
            forward(&spec, p, &input, Mode::Train)
                .unwrap()
                .outputs
                .dot(&w_out)
                .unwrap()
        };
        let trace = model.forward(&input, Mode::Train).unwrap();
        let g = model.backward(&trace, &w_out).unwrap();
        let h = 1e-5;
        let analytic = g.flat();
        let mut k = 0;
        let n_tensors = model.params.trainable().len();
        for ti in 0..n_tensors {
            let len = model.params.trainable()[ti].len();
            for e in 0..len {
                let mut pp = model.params.clone();
                pp.trainable_mut()[ti].data_mut()[e] += h;
                let mut pm = model.params.clone();
                pm.trainable_mut()[ti].data_mut()[e] -= h;
                let fd = (loss(&pp) - loss(&pm)) / (2.0 * h);
                let an = analytic[k];
                assert!(
                    (fd - an).abs() <= 1e-6 * fd.abs().max(an.abs()) + 1e-8,
                    "tensor {ti} elem {e}: fd {fd} analytic {an}"
                );
                k += 1;
            }
        }
    }
}
