//! Analysis instruments: per-timestep Fisher trace and its centroid, the
//! spatial/temporal gradient split over a leak sweep, spike firing rates and
//! filter-normalized 2D loss slices.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::network::{ForwardTrace, Mode, Model};
use crate::objectives::{sdt_ce_loss, softmax_row};
use crate::rng::{seeded_normal, Rng};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Relative level below which a temporal gradient counts as vanished.
pub const VANISH_RATIO: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct FisherProfile<S> {
    pub epoch: usize,
    /// I_t for t = 1..T.
    pub traces: Vec<S>,
    /// Information centroid; `None` when every trace is zero.
    pub ic: Option<S>,
}

impl<S: Scalar> FisherProfile<S> {
    pub fn new(epoch: usize, traces: Vec<S>) -> Self {
        let ic = information_centroid(&traces).ok();
        Self { epoch, traces, ic }
    }
}

/// Σ t·I_t / Σ I_t with 1-based t.
pub fn information_centroid<S: Scalar>(profile: &[S]) -> Result<S> {
    let mut mass = S::zero();
    let mut moment = S::zero();
    for (i, &v) in profile.iter().enumerate() {
        if !(v >= S::zero()) || !v.is_finite() {
            return Err(Error::Invalid(format!(
                "Fisher trace I_{} = {v} is not a finite non-negative value",
                i + 1
            )));
        }
        mass += v;
        moment += S::of_usize(i + 1) * v;
    }
    if !(mass > S::zero()) {
        return Err(Error::Invalid("information centroid of an all-zero profile".into()));
    }
    // One refinement pass on the centred residual removes the rounding of
    // the raw moment, so a point mass lands exactly on its index.
    let ic = moment / mass;
    let residual = profile
        .iter()
        .enumerate()
        .fold(S::zero(), |acc, (i, &v)| acc + (S::of_usize(i + 1) - ic) * v);
    Ok(ic + residual / mass)
}

fn check_samples<S: Scalar>(model: &Model<S>, inputs: &Tensor<S>) -> Result<usize> {
    let t_steps = model.spec.time_steps;
    if inputs.rank() != 3 || inputs.shape()[0] != t_steps || inputs.shape()[2] != model.spec.input_features() {
        return Err(Error::Shape(format!(
            "Fisher samples {:?} do not match [T={t_steps}, N, {}]",
            inputs.shape(),
            model.spec.input_features()
        )));
    }
    let n = inputs.shape()[1];
    if n == 0 {
        return Err(Error::Invalid("Fisher trace of an empty sample".into()));
    }
    Ok(n)
}

/// I_t for every cutoff t = 1..T over the samples `inputs` (`[T, N, F]`).
///
/// For each sample the evaluation-mode network is run once; because it is
/// causal, the first t outputs coincide with a run truncated at t. With
/// p = Softmax(mean_{τ≤t} O(τ)) and g_k the weight gradient of the k-th
/// averaged logit, the per-class gradient of log p_c is Σ_k (e_c − p)_k g_k,
/// so the expected squared norm reduces to quadratic forms in the Gram
/// matrix G = [g_j·g_k].
pub fn fisher_profile<S: Scalar>(model: &Model<S>, inputs: &Tensor<S>) -> Result<Vec<S>> {
    let n_samples = check_samples(model, inputs)?;
    let t_steps = model.spec.time_steps;
    let classes = model.spec.classes();
    let mut acc = vec![S::zero(); t_steps];

    for sample in 0..n_samples {
        let x = inputs.select1(&[sample])?;
        let trace = model.forward(&x, Mode::Eval)?;
        let o = trace.outputs.data();
        let mut running = vec![S::zero(); classes];
        for t in 1..=t_steps {
            for (r, &v) in running.iter_mut().zip(&o[(t - 1) * classes..t * classes]) {
                *r += v;
            }
            let inv_t = S::one() / S::of_usize(t);
            let mean: Vec<S> = running.iter().map(|&v| v * inv_t).collect();
            let p = softmax_row(&mean);

            let mut g: Vec<Vec<S>> = Vec::with_capacity(classes);
            for k in 0..classes {
                let mut d_out = Tensor::zeros(trace.outputs.shape());
                for tau in 0..t {
                    d_out.data_mut()[tau * classes + k] = inv_t;
                }
                let grads = model.backward(&trace, &d_out)?;
                g.push(
                    grads
                        .layers
                        .iter()
                        .flat_map(|l| l.weight.data().iter().copied())
                        .collect(),
                );
            }
            let mut gram = vec![S::zero(); classes * classes];
            for j in 0..classes {
                for k in j..classes {
                    let d = g[j].iter().zip(&g[k]).fold(S::zero(), |a, (&x, &y)| a + x * y);
                    gram[j * classes + k] = d;
                    gram[k * classes + j] = d;
                }
            }
            let mut expected = S::zero();
            let mut v = vec![S::zero(); classes];
            for c in 0..classes {
                for (k, vk) in v.iter_mut().enumerate() {
                    *vk = if k == c { S::one() } else { S::zero() } - p[k];
                }
                let mut q = S::zero();
                for j in 0..classes {
                    for k in 0..classes {
                        q += v[j] * gram[j * classes + k] * v[k];
                    }
                }
                expected += p[c] * q.max(S::zero());
            }
            acc[t - 1] += expected;
        }
    }
    let inv_n = S::one() / S::of_usize(n_samples);
    Ok(acc.into_iter().map(|v| v * inv_n).collect())
}

/// I_t at a single cutoff.
pub fn fisher_trace<S: Scalar>(model: &Model<S>, inputs: &Tensor<S>, t: usize) -> Result<S> {
    if t == 0 || t > model.spec.time_steps {
        return Err(Error::Invalid(format!(
            "cutoff t = {t} outside 1..={}",
            model.spec.time_steps
        )));
    }
    Ok(fisher_profile(model, inputs)?[t - 1])
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProbeRow<S> {
    pub gamma: S,
    pub layer: usize,
    pub t: usize,
    pub grad_p: S,
    pub grad_t: S,
    /// ‖∇T(t)‖ below [`VANISH_RATIO`] times the layer's largest ‖∇T‖.
    pub vanished: bool,
}

/// Spatial and temporal gradient norms per layer and timestep for each leak
/// factor in `gammas`, driven by the time-averaged cross-entropy on
/// `(input, labels)`. Parameters are shared across the sweep; only γ changes.
pub fn vanishing_probe<S: Scalar>(
    model: &Model<S>,
    input: &Tensor<S>,
    labels: &[usize],
    gammas: &[S],
) -> Result<Vec<ProbeRow<S>>> {
    let mut rows = Vec::new();
    for &gamma in gammas {
        let probe = Model {
            spec: model.spec.clone().with_gamma(gamma),
            params: model.params.clone(),
        };
        probe.spec.validate()?;
        let trace = probe.forward(input, Mode::Train)?;
        let d_out = sdt_ce_loss(&trace.outputs, labels)?.output_grad;
        let parts = probe.temporal_grad_components(&trace, &d_out)?;
        for layer in 0..probe.spec.hidden_layers() {
            let layer_rows: Vec<_> = parts.rows.iter().filter(|r| r.layer == layer).collect();
            let peak = layer_rows.iter().fold(S::zero(), |m, r| m.max(r.temporal));
            let cut = S::of(VANISH_RATIO) * peak;
            rows.extend(layer_rows.into_iter().map(|r| ProbeRow {
                gamma,
                layer,
                t: r.t,
                grad_p: r.spatial,
                grad_t: r.temporal,
                vanished: r.temporal < cut,
            }));
        }
    }
    Ok(rows)
}

/// Average spike firing rate of each selected spiking layer: the mean of
/// s(t) over neurons, batch and time.
pub fn asfr<S: Scalar>(trace: &ForwardTrace<S>, layers: &[usize]) -> Result<Vec<S>> {
    layers
        .iter()
        .map(|&i| {
            let lt = trace.layers.get(i).ok_or_else(|| {
                Error::Invalid(format!(
                    "layer {i} is not a spiking layer (network has {} spiking layers)",
                    trace.layers.len()
                ))
            })?;
            if lt.s.is_empty() {
                return Ok(S::zero());
            }
            Ok(lt.s.sum() / S::of_usize(lt.s.len()))
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LandscapeConfig<S> {
    /// Grid points along the first direction; odd.
    pub ka: usize,
    /// Grid points along the second direction; odd.
    pub kb: usize,
    /// Largest offset along each normalized direction.
    pub span: S,
    pub seeds: (u64, u64),
}

impl<S: Scalar> Default for LandscapeConfig<S> {
    fn default() -> Self {
        Self {
            ka: 21,
            kb: 21,
            span: S::one(),
            seeds: (1, 2),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LandscapeGrid<S> {
    pub seeds: (u64, u64),
    pub a: Vec<S>,
    pub b: Vec<S>,
    /// Row-major over (a, b); non-finite evaluations are stored as NaN.
    pub loss: Vec<S>,
}

impl<S: Scalar> LandscapeGrid<S> {
    pub fn at(&self, i: usize, j: usize) -> S {
        self.loss[i * self.b.len() + j]
    }

    pub fn center(&self) -> S {
        self.at(self.a.len() / 2, self.b.len() / 2)
    }
}

/// A random direction over every weight tensor, rescaled so each output row
/// (dense unit or conv filter) has the norm of the matching weight row.
pub fn filter_normalized_direction<S: Scalar>(model: &Model<S>, seed: u64) -> Result<Vec<Tensor<S>>> {
    let mut rng = Rng::new(seed);
    model
        .params
        .all_weights()
        .into_iter()
        .map(|w| {
            let mut d = seeded_normal(&mut rng, w.shape(), S::zero(), S::one())?;
            let rows = w.shape()[0];
            let per = w.len().checked_div(rows).unwrap_or(0);
            for r in 0..rows {
                let span = r * per..(r + 1) * per;
                let wn = w.data()[span.clone()].iter().fold(S::zero(), |a, &x| a + x * x).sqrt();
                let dr = &mut d.data_mut()[span];
                let dn = dr.iter().fold(S::zero(), |a, &x| a + x * x).sqrt();
                let k = if dn > S::zero() { wn / dn } else { S::zero() };
                for v in dr {
                    *v *= k;
                }
            }
            Ok(d)
        })
        .collect()
}

fn grid_axis<S: Scalar>(k: usize, span: S) -> Result<Vec<S>> {
    if k.is_multiple_of(2) {
        return Err(Error::Invalid(format!(
            "grid size {k} must be odd to contain the origin"
        )));
    }
    let c = k / 2;
    if c == 0 {
        return Ok(vec![S::zero()]);
    }
    let step = span / S::of_usize(c);
    Ok((0..k)
        .map(|i| {
            let off = i as i64 - c as i64;
            S::of(off as f64) * step
        })
        .collect())
}

/// Evaluates `loss` at W + a·d₁ + b·d₂ over the grid with two seeded,
/// filter-normalized directions. The model's weights are restored exactly.
pub fn landscape_2d<S: Scalar>(
    model: &mut Model<S>,
    loss: impl FnMut(&Model<S>) -> Result<S>,
    cfg: &LandscapeConfig<S>,
) -> Result<LandscapeGrid<S>> {
    let d1 = filter_normalized_direction(model, cfg.seeds.0)?;
    let d2 = filter_normalized_direction(model, cfg.seeds.1)?;
    let mut grid = landscape_with_directions(model, loss, &d1, &d2, cfg)?;
    grid.seeds = cfg.seeds;
    Ok(grid)
}

/// As [`landscape_2d`] with caller-supplied directions.
pub fn landscape_with_directions<S: Scalar>(
    model: &mut Model<S>,
    mut loss: impl FnMut(&Model<S>) -> Result<S>,
    d1: &[Tensor<S>],
    d2: &[Tensor<S>],
    cfg: &LandscapeConfig<S>,
) -> Result<LandscapeGrid<S>> {
    let snapshot: Vec<Tensor<S>> = model.params.all_weights().into_iter().cloned().collect();
    for d in [d1, d2] {
        if d.len() != snapshot.len() || d.iter().zip(&snapshot).any(|(d, w)| d.shape() != w.shape()) {
            return Err(Error::Shape("landscape direction does not match the weights".into()));
        }
    }
    let a = grid_axis(cfg.ka, cfg.span)?;
    let b = grid_axis(cfg.kb, cfg.span)?;
    let mut values = Vec::with_capacity(a.len() * b.len());
    let mut outcome = Ok(());
    'grid: for &ai in &a {
        for &bj in &b {
            for (l, w0) in snapshot.iter().enumerate() {
                let w = &mut model.params.layers[l].weight;
                if ai == S::zero() && bj == S::zero() {
                    w.data_mut().copy_from_slice(w0.data());
                    continue;
                }
                for (k, dst) in w.data_mut().iter_mut().enumerate() {
                    *dst = w0.data()[k] + (ai * d1[l].data()[k] + bj * d2[l].data()[k]);
                }
            }
            match loss(model) {
                Ok(v) if v.is_finite() => values.push(v),
                Ok(_) | Err(Error::NonFinite(_)) => values.push(S::nan()),
                Err(e) => {
                    outcome = Err(e);
                    break 'grid;
                }
            }
        }
    }
    for (l, w0) in snapshot.into_iter().enumerate() {
        model.params.layers[l].weight = w0;
    }
    outcome?;
    Ok(LandscapeGrid {
        seeds: (0, 0),
        a,
        b,
        loss: values,
    })
}

pub fn fisher_csv<S: Scalar>(profiles: &[FisherProfile<S>]) -> String {
    let mut out = String::from("epoch,t,I_t,IC\n");
    for p in profiles {
        let ic = p.ic.map(|v| v.to_string()).unwrap_or_default();
        for (i, v) in p.traces.iter().enumerate() {
            let _ = writeln!(out, "{},{},{},{}", p.epoch, i + 1, v, ic);
        }
    }
    out
}

pub fn probe_csv<S: Scalar>(rows: &[ProbeRow<S>]) -> String {
    let mut out = String::from("layer,t,grad_p,grad_t,gamma,vanished\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.layer, r.t, r.grad_p, r.grad_t, r.gamma, r.vanished as u8
        );
    }
    out
}

pub fn landscape_csv<S: Scalar>(grid: &LandscapeGrid<S>) -> String {
    let mut out = String::from("a,b,loss\n");
    for (i, a) in grid.a.iter().enumerate() {
        for (j, b) in grid.b.iter().enumerate() {
            let _ = writeln!(out, "{},{},{}", a, b, grid.at(i, j));
        }
    }
    out
}

pub fn asfr_csv<S: Scalar>(layers: &[usize], rates: &[S]) -> String {
    let mut out = String::from("layer,rate\n");
    for (l, r) in layers.iter().zip(rates) {
        let _ = writeln!(out, "{l},{r}");
    }
    out
}
