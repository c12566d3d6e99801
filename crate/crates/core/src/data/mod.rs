//! Desk-scale data sources: the synthetic temporal spike task, CSV images
//! fed by direct encoding, and event streams binned into frames.

pub mod events;
pub mod images;
pub mod spikes;
pub mod synth;

pub use events::{bin_events, load_events, normalize_by_max, Event, EventStream};
pub use images::{direct_encode, load_csv_images, write_csv_images, ImageSet};
pub use spikes::{load_spike_csv, write_spike_csv};
pub use synth::{synth_generate, SyntheticTaskSpec};

use std::path::Path;

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Labelled inputs, each a `[T, features...]` block stored sample-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset<S> {
    pub time_steps: usize,
    /// Per-step extents of one sample, e.g. `[neurons]` or `[C, H, W]`.
    pub feature_shape: Vec<usize>,
    pub classes: usize,
    inputs: Vec<S>,
    labels: Vec<usize>,
}

impl<S: Scalar> Dataset<S> {
    pub fn new(
        time_steps: usize,
        feature_shape: Vec<usize>,
        classes: usize,
        inputs: Vec<S>,
        labels: Vec<usize>,
    ) -> Result<Self> {
        let per: usize = time_steps * feature_shape.iter().product::<usize>();
        if time_steps == 0 || per == 0 || classes == 0 {
            return Err(Error::Invalid("dataset extents must be positive".into()));
        }
        if inputs.len() != per * labels.len() {
            return Err(Error::Shape(format!(
                "{} values for {} samples of {per}",
                inputs.len(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= classes) {
            return Err(Error::Invalid(format!(
                "label {bad} out of range for {classes} classes"
            )));
        }
        if inputs.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("dataset inputs".into()));
        }
        Ok(Self {
            time_steps,
            feature_shape,
            classes,
            inputs,
            labels,
        })
    }

    /// Builds a dataset from per-sample tensors shaped `[T, features...]`.
    pub fn from_samples(samples: &[Tensor<S>], labels: Vec<usize>, classes: usize) -> Result<Self> {
        let first = samples
            .first()
            .ok_or_else(|| Error::Invalid("dataset without samples".into()))?;
        if first.rank() < 2 {
            return Err(Error::Shape(format!(
                "sample must be [T, ...], got {:?}",
                first.shape()
            )));
        }
        if samples.len() != labels.len() {
            return Err(Error::Shape(format!(
                "{} samples, {} labels",
                samples.len(),
                labels.len()
            )));
        }
        let mut inputs = Vec::with_capacity(first.len() * samples.len());
        for s in samples {
            if s.shape() != first.shape() {
                return Err(Error::Shape(format!("sample {:?} vs {:?}", s.shape(), first.shape())));
            }
            inputs.extend_from_slice(s.data());
        }
        Self::new(first.shape()[0], first.shape()[1..].to_vec(), classes, inputs, labels)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn features(&self) -> usize {
        self.feature_shape.iter().product()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn labels_mut(&mut self) -> &mut [usize] {
        &mut self.labels
    }

    /// Sample `i` as `[T, features]` values.
    pub fn sample(&self, i: usize) -> &[S] {
        let per = self.time_steps * self.features();
        &self.inputs[i * per..(i + 1) * per]
    }

    /// Network input `[T, B, features]` for the given samples.
    pub fn batch(&self, indices: &[usize]) -> Result<(Tensor<S>, Vec<usize>)> {
        let f = self.features();
        let b = indices.len();
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.len()) {
            return Err(Error::Invalid(format!("sample {bad} out of range for {}", self.len())));
        }
        let mut data = vec![S::zero(); self.time_steps * b * f];
        for (slot, &i) in indices.iter().enumerate() {
            let s = self.sample(i);
            for t in 0..self.time_steps {
                let dst = (t * b + slot) * f;
                data[dst..dst + f].copy_from_slice(&s[t * f..(t + 1) * f]);
            }
        }
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        Ok((Tensor::new(vec![self.time_steps, b, f], data)?, labels))
    }

    /// Every sample in order.
    pub fn all(&self) -> Result<(Tensor<S>, Vec<usize>)> {
        self.batch(&(0..self.len()).collect::<Vec<_>>())
    }

    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let per = self.time_steps * self.features();
        let mut inputs = Vec::with_capacity(per * indices.len());
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.len() {
                return Err(Error::Invalid(format!("sample {i} out of range for {}", self.len())));
            }
            inputs.extend_from_slice(self.sample(i));
            labels.push(self.labels[i]);
        }
        Self::new(
            self.time_steps,
            self.feature_shape.clone(),
            self.classes,
            inputs,
            labels,
        )
    }

    /// Replaces a fraction of the labels by a different, uniformly drawn
    /// class. Returns how many labels were changed.
    pub fn corrupt_labels(&mut self, fraction: f64, seed: u64) -> Result<usize> {
        if !(0.0..=1.0).contains(&fraction) {
            return Err(Error::Invalid(format!("label noise {fraction} outside [0, 1]")));
        }
        if self.classes < 2 {
            return Ok(0);
        }
        let mut rng = Rng::with_stream(seed, 7);
        let mut order: Vec<usize> = (0..self.len()).collect();
        rng.shuffle(&mut order);
        let k = (fraction * self.len() as f64).round() as usize;
        for &i in &order[..k] {
            let shift = 1 + rng.below(self.classes - 1);
            self.labels[i] = (self.labels[i] + shift) % self.classes;
        }
        Ok(k)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetSplit<S> {
    pub train: Dataset<S>,
    pub test: Dataset<S>,
    /// Indices into the source dataset, in split order.
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
    pub ratio: f64,
    pub seed: u64,
}

/// Seeded shuffle followed by a prefix/suffix split with
/// round(N·ratio) training samples.
pub fn split<S: Scalar>(data: &Dataset<S>, ratio: f64, seed: u64) -> Result<DatasetSplit<S>> {
    if data.len() < 10 {
        return Err(Error::Invalid(format!(
            "need at least 10 samples to split, got {}",
            data.len()
        )));
    }
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::Invalid(format!("split ratio {ratio} outside (0, 1)")));
    }
    let mut order: Vec<usize> = (0..data.len()).collect();
    Rng::with_stream(seed, 5).shuffle(&mut order);
    let n_train = ((data.len() as f64 * ratio).round() as usize).clamp(1, data.len() - 1);
    let (tr, te) = order.split_at(n_train);
    Ok(DatasetSplit {
        train: data.subset(tr)?,
        test: data.subset(te)?,
        train_indices: tr.to_vec(),
        test_indices: te.to_vec(),
        ratio,
        seed,
    })
}

pub(crate) fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Parses `key=value` tokens of a `# kind k=v ...` header line.
pub(crate) fn header_fields(path: &Path, line: &str, kind: &str, keys: &[&str]) -> Result<Vec<usize>> {
    let rest = line
        .strip_prefix('#')
        .map(str::trim)
        .and_then(|r| r.strip_prefix(kind))
        .ok_or_else(|| Error::parse(path, 1, format!("expected header '# {kind} ...'")))?;
    let mut out = vec![None; keys.len()];
    for tok in rest.split_whitespace() {
        let (k, v) = tok
            .split_once('=')
            .ok_or_else(|| Error::parse(path, 1, format!("malformed header field '{tok}'")))?;
        let slot = keys
            .iter()
            .position(|&key| key == k)
            .ok_or_else(|| Error::parse(path, 1, format!("unknown header field '{k}'")))?;
        let n: usize = v
            .parse()
            .map_err(|_| Error::parse(path, 1, format!("header field '{k}' is not a count: '{v}'")))?;
        out[slot] = Some(n);
    }
    out.into_iter()
        .zip(keys)
        .map(|(v, k)| v.ok_or_else(|| Error::parse(path, 1, format!("header lacks '{k}'"))))
        .collect()
}
