//! Batch normalization with the time axis folded into the batch axis.
//!
//! Activations are laid out `[T, B, C·P]` where `P` is the number of spatial
//! positions per channel (1 for dense layers). Statistics for channel `c` are
//! taken over all `T·B·P` entries belonging to it.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

use super::params::NormParams;
use super::spec::NormConfig;
use super::Mode;

/// Per-channel statistics of one training-mode batch (biased variance).
#[derive(Clone, Debug, PartialEq)]
pub struct BatchStats<S> {
    pub mean: Vec<S>,
    pub var: Vec<S>,
    /// Entries per channel, T·B·P.
    pub count: usize,
}

fn geometry(x: &Tensor<impl Scalar>, channels: usize, spatial: usize) -> Result<usize> {
    let features = channels * spatial;
    if features == 0 || !x.len().is_multiple_of(features) {
        return Err(Error::Shape(format!(
            "tdbn: {} elements do not tile {} channels x {} positions",
            x.len(),
            channels,
            spatial
        )));
    }
    let rows = x.len() / features;
    if rows == 0 {
        return Err(Error::Invalid("tdbn: zero flattened extent".into()));
    }
    Ok(rows)
}

/// Mean and biased variance per channel, two-pass, in index order.
pub fn batch_stats<S: Scalar>(x: &Tensor<S>, channels: usize, spatial: usize) -> Result<BatchStats<S>> {
    let rows = geometry(x, channels, spatial)?;
    let features = channels * spatial;
    let data = x.data();
    let count = rows * spatial;
    let n = S::of_usize(count);
    let mut mean = vec![S::zero(); channels];
    for r in 0..rows {
        for c in 0..channels {
            let base = r * features + c * spatial;
            for p in 0..spatial {
                mean[c] += data[base + p];
            }
        }
    }
    for m in &mut mean {
        *m /= n;
    }
    let mut var = vec![S::zero(); channels];
    for r in 0..rows {
        for c in 0..channels {
            let base = r * features + c * spatial;
            for p in 0..spatial {
                let d = data[base + p] - mean[c];
                var[c] += d * d;
            }
        }
    }
    for v in &mut var {
        *v /= n;
    }
    Ok(BatchStats { mean, var, count })
}

/// Normalizes `x`. Training mode standardizes with the batch statistics and
/// returns them so the caller can fold them into the running averages; eval
/// mode uses the running statistics stored in `params`.
pub fn tdbn_forward<S: Scalar>(
    x: &Tensor<S>,
    params: &NormParams<S>,
    spatial: usize,
    cfg: &NormConfig<S>,
    mode: Mode,
) -> Result<(Tensor<S>, Option<BatchStats<S>>)> {
    let channels = params.channels();
    let rows = geometry(x, channels, spatial)?;
    let (mean, var, stats) = match mode {
        Mode::Train => {
            let st = batch_stats(x, channels, spatial)?;
            (st.mean.clone(), st.var.clone(), Some(st))
        }
        Mode::Eval => (
            params.running_mean.data().to_vec(),
            params.running_var.data().to_vec(),
            None,
        ),
    };
    let features = channels * spatial;
    let inv_std: Vec<S> = var.iter().map(|&v| S::one() / (v + cfg.eps).sqrt()).collect();
    let scale = params.scale.data();
    let shift = params.shift.data();
    let src = x.data();
    let mut out = vec![S::zero(); src.len()];
    for r in 0..rows {
        for c in 0..channels {
            let base = r * features + c * spatial;
            for p in 0..spatial {
                let xh = (src[base + p] - mean[c]) * inv_std[c];
                out[base + p] = scale[c] * xh + shift[c];
            }
        }
    }
    let out = Tensor::from_parts(x.shape().to_vec(), out);
    out.ensure_finite("tdbn_forward")?;
    Ok((out, stats))
}

/// Exponential moving average update of the running statistics; the running
/// variance uses the unbiased estimate.
pub fn update_running<S: Scalar>(params: &mut NormParams<S>, stats: &BatchStats<S>, cfg: &NormConfig<S>) {
    let m = cfg.momentum;
    let correction = if stats.count > 1 {
        S::of_usize(stats.count) / S::of_usize(stats.count - 1)
    } else {
        S::one()
    };
    for (rm, &bm) in params.running_mean.data_mut().iter_mut().zip(&stats.mean) {
        *rm = (S::one() - m) * *rm + m * bm;
    }
    for (rv, &bv) in params.running_var.data_mut().iter_mut().zip(&stats.var) {
        *rv = (S::one() - m) * *rv + m * bv * correction;
    }
}

pub struct NormGrads<S> {
    pub d_input: Vec<S>,
    pub d_scale: Vec<S>,
    pub d_shift: Vec<S>,
}

/// Backward of [`tdbn_forward`]. `x` is the pre-normalization input and
/// `stats` the batch statistics of the forward pass (None in eval mode).
pub fn tdbn_backward<S: Scalar>(
    d_out: &[S],
    x: &Tensor<S>,
    params: &NormParams<S>,
    spatial: usize,
    cfg: &NormConfig<S>,
    stats: Option<&BatchStats<S>>,
) -> Result<NormGrads<S>> {
    let channels = params.channels();
    let rows = geometry(x, channels, spatial)?;
    if d_out.len() != x.len() {
        return Err(Error::Shape("tdbn_backward: cotangent extent".into()));
    }
    let features = channels * spatial;
    let src = x.data();
    let scale = params.scale.data();
    let (mean, var) = match stats {
        Some(st) => (st.mean.clone(), st.var.clone()),
        None => (params.running_mean.data().to_vec(), params.running_var.data().to_vec()),
    };
    let inv_std: Vec<S> = var.iter().map(|&v| S::one() / (v + cfg.eps).sqrt()).collect();

    let mut d_scale = vec![S::zero(); channels];
    let mut d_shift = vec![S::zero(); channels];
    for r in 0..rows {
        for c in 0..channels {
            let base = r * features + c * spatial;
            for p in 0..spatial {
                let xh = (src[base + p] - mean[c]) * inv_std[c];
                d_scale[c] += d_out[base + p] * xh;
                d_shift[c] += d_out[base + p];
            }
        }
    }

    let mut d_input = vec![S::zero(); x.len()];
    match stats {
        None => {
            for r in 0..rows {
                for c in 0..channels {
                    let k = scale[c] * inv_std[c];
                    let base = r * features + c * spatial;
                    for p in 0..spatial {
                        d_input[base + p] = d_out[base + p] * k;
                    }
                }
            }
        }
        Some(st) => {
            // dx = γ·inv_std/M · (M·dy − Σdy − x̂·Σ(dy·x̂))
            let m = S::of_usize(st.count);
            for r in 0..rows {
                for c in 0..channels {
                    let base = r * features + c * spatial;
                    let k = scale[c] * inv_std[c] / m;
                    for p in 0..spatial {
                        let xh = (src[base + p] - mean[c]) * inv_std[c];
                        d_input[base + p] = k * (m * d_out[base + p] - d_shift[c] - xh * d_scale[c]);
                    }
                }
            }
        }
    }
    Ok(NormGrads {
        d_input,
        d_scale,
        d_shift,
    })
}
