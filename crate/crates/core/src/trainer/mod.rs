//! The training loop: per-batch forward over T steps, loss and regularizer,
//! BPTT, Adam with a per-epoch cosine schedule, evaluation, Fisher tracking,
//! metrics persistence and checkpoints.

pub mod checkpoint;
pub mod config;
pub mod optim;

pub use checkpoint::Checkpoint;
pub use config::{DataKind, Precision, TrainConfig};
pub use optim::{cosine_lr, Adam};

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::data::{self, Dataset, DatasetSplit};
use crate::diagnostics::{fisher_csv, fisher_profile, FisherProfile};
use crate::error::{Error, Result};
use crate::network::{LayerKind, LayerSpec, Mode, Model, NetworkSpec, NormConfig};
use crate::neuron::Firing;
use crate::objectives::{compute_loss, softmax_ce, LossConfig};
use crate::rng::Rng;
use crate::scalar::Scalar;

const INIT_STREAM: u64 = 1;
const SHUFFLE_STREAM: u64 = 2;

/// Loads or generates the full dataset described by `cfg`.
pub fn load_dataset<S: Scalar>(cfg: &TrainConfig) -> Result<Dataset<S>> {
    let path = Path::new(&cfg.data_path);
    match cfg.data_kind {
        DataKind::Synthetic => data::synth_generate(&cfg.synth_spec(), cfg.data_count),
        DataKind::Spikes => {
            let d = data::load_spike_csv(path)?;
            if d.time_steps != cfg.time_steps {
                return Err(Error::Config(format!(
                    "{} holds {} steps but time_steps={}",
                    path.display(),
                    d.time_steps,
                    cfg.time_steps
                )));
            }
            Ok(d)
        }
        DataKind::Images => data::load_csv_images(path)?.to_dataset(cfg.time_steps),
        DataKind::Events => load_event_index(path, cfg),
    }
}

/// Index file: a header `# event-index classes=N`, then `label,file` rows
/// with files relative to the index.
fn load_event_index<S: Scalar>(path: &Path, cfg: &TrainConfig) -> Result<Dataset<S>> {
    let text = data::read_text(path)?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| Error::parse(path, 1, "empty event index"))?;
    let classes = data::header_fields(path, header, "event-index", &["classes"])?[0];
    let base = path.parent().unwrap_or(Path::new("."));
    let mut samples = Vec::new();
    let mut labels = Vec::new();
    for (i, line) in lines {
        let n = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let (label, file) = line
            .split_once(',')
            .ok_or_else(|| Error::parse(path, n, "expected label,file"))?;
        let label: usize = label
            .trim()
            .parse()
            .map_err(|_| Error::parse(path, n, format!("label is not a class index: '{label}'")))?;
        if label >= classes {
            return Err(Error::parse(
                path,
                n,
                format!("label {label} out of range for {classes} classes"),
            ));
        }
        let ev = data::load_events(&base.join(file.trim()))?;
        let h = if cfg.frame_height == 0 {
            ev.height as usize
        } else {
            cfg.frame_height
        };
        let w = if cfg.frame_width == 0 {
            ev.width as usize
        } else {
            cfg.frame_width
        };
        let frames = data::bin_events(&ev, cfg.time_steps, h, w)?;
        samples.push(data::normalize_by_max(&frames)?);
        labels.push(label);
    }
    Dataset::from_samples(&samples, labels, classes)
}

/// Seeded 9:1-style split with label noise injected into the training part.
pub fn prepare_split<S: Scalar>(cfg: &TrainConfig, full: &Dataset<S>) -> Result<DatasetSplit<S>> {
    let mut s = data::split(full, cfg.data_split, cfg.data_seed)?;
    if cfg.label_noise > 0.0 {
        s.train.corrupt_labels(cfg.label_noise, cfg.data_seed)?;
    }
    Ok(s)
}

/// Layer stack for samples of `feature_shape`: optional 3×3 conv layers, the
/// hidden dense layers, then the readout.
pub fn build_spec<S: Scalar>(cfg: &TrainConfig, feature_shape: &[usize], classes: usize) -> Result<NetworkSpec<S>> {
    let mut layers = Vec::new();
    let mut features: usize = feature_shape.iter().product();
    if !cfg.conv.is_empty() {
        let &[mut c, h, w] = feature_shape else {
            return Err(Error::Config(format!(
                "model.conv needs [C, H, W] samples, got {feature_shape:?}"
            )));
        };
        for &oc in &cfg.conv {
            layers.push(LayerSpec {
                kind: LayerKind::Conv2d {
                    in_channels: c,
                    out_channels: oc,
                    kernel: 3,
                    stride: 1,
                    padding: 1,
                    in_h: h,
                    in_w: w,
                },
                has_norm: cfg.norm,
                is_readout: false,
            });
            c = oc;
        }
        features = c * h * w;
    }
    for &width in &cfg.hidden {
        layers.push(LayerSpec::dense(features, width, cfg.norm));
        features = width;
    }
    layers.push(LayerSpec::readout(features, classes));
    let spec = NetworkSpec {
        layers,
        lif: cfg.lif()?,
        time_steps: cfg.time_steps,
        firing: Firing::Heaviside,
        norm: NormConfig::default(),
    };
    spec.validate()?;
    Ok(spec)
}

/// Sample-weighted running means of the loss components over an epoch.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochStats<S> {
    pub total: S,
    pub ce: S,
    pub mse: S,
    pub reg: S,
    pub samples: usize,
}

impl<S: Scalar> EpochStats<S> {
    fn empty() -> Self {
        Self {
            total: S::zero(),
            ce: S::zero(),
            mse: S::zero(),
            reg: S::zero(),
            samples: 0,
        }
    }

    /// Folds in a batch mean; a single batch reproduces its values exactly.
    fn push(&mut self, b: usize, total: S, ce: S, mse: S, reg: S) {
        self.samples += b;
        let k = S::of_usize(b) / S::of_usize(self.samples);
        self.total += (total - self.total) * k;
        self.ce += (ce - self.ce) * k;
        self.mse += (mse - self.mse) * k;
        self.reg += (reg - self.reg) * k;
    }
}

/// One pass over `data` in shuffled batches; the final short batch is kept.
pub fn train_epoch<S: Scalar>(
    model: &mut Model<S>,
    data: &Dataset<S>,
    loss: &LossConfig<S>,
    batch_size: usize,
    optimizer: &mut Adam<S>,
    rng: &mut Rng,
    lr: S,
) -> Result<EpochStats<S>> {
    if data.is_empty() {
        return Err(Error::Invalid("training set is empty".into()));
    }
    if batch_size == 0 {
        return Err(Error::Invalid("batch size must be positive".into()));
    }
    let mut order: Vec<usize> = (0..data.len()).collect();
    rng.shuffle(&mut order);
    let mut stats = EpochStats::empty();
    for (bi, chunk) in order.chunks(batch_size).enumerate() {
        let (x, y) = data.batch(chunk)?;
        let trace = model.forward(&x, Mode::Train)?;
        let lv = compute_loss(&trace.outputs, &y, &model.params.hidden_weights(), loss)?;
        if !lv.total.is_finite() {
            return Err(Error::NonFinite(format!(
                "loss at batch {bi}: total={} ce={} mse={} reg={}",
                lv.total, lv.ce, lv.mse, lv.reg
            )));
        }
        let mut grads = model.backward(&trace, &lv.output_grad)?;
        if !lv.reg_grad.is_empty() {
            grads.add_hidden_weight_grads(&lv.reg_grad)?;
        }
        trace.update_running_stats(&model.spec, &mut model.params);
        optimizer.update(&mut model.params.trainable_mut(), &grads.tensors(), lr)?;
        stats.push(chunk.len(), lv.total, lv.ce, lv.mse, lv.reg);
    }
    Ok(stats)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalResult<S> {
    /// Cross-entropy of the time-averaged output.
    pub loss: S,
    pub accuracy: S,
}

/// Evaluation-mode loss and accuracy of the time-averaged readout. The model
/// is not modified.
pub fn evaluate<S: Scalar>(model: &Model<S>, data: &Dataset<S>, batch_size: usize) -> Result<EvalResult<S>> {
    if data.is_empty() {
        return Err(Error::Invalid("evaluation set is empty".into()));
    }
    let order: Vec<usize> = (0..data.len()).collect();
    let mut loss = S::zero();
    let mut seen = 0usize;
    let mut correct = 0usize;
    let n = model.spec.classes();
    for chunk in order.chunks(batch_size.max(1)) {
        let (x, y) = data.batch(chunk)?;
        let mean = model.forward(&x, Mode::Eval)?.outputs.reduce_mean(0)?;
        let (l, _) = softmax_ce(&mean, &y)?;
        seen += chunk.len();
        loss += (l - loss) * (S::of_usize(chunk.len()) / S::of_usize(seen));
        for (row, &label) in mean.data().chunks(n).zip(&y) {
            let mut best = 0;
            for (k, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = k;
                }
            }
            correct += (best == label) as usize;
        }
    }
    Ok(EvalResult {
        loss,
        accuracy: S::of_usize(correct) / S::of_usize(data.len()),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRecord<S> {
    pub epoch: usize,
    pub lr: S,
    pub train_total: S,
    pub train_ce: S,
    pub train_mse: S,
    pub train_reg: S,
    pub test_loss: S,
    pub test_acc: S,
    pub fisher: Option<FisherProfile<S>>,
    pub seconds: f64,
}

pub const METRICS_HEADER: &str = "epoch,lr,train_total,train_ce,train_mse,train_reg,test_loss,test_acc,ic,seconds";

impl<S: Scalar> MetricsRecord<S> {
    pub fn ic(&self) -> Option<S> {
        self.fisher.as_ref().and_then(|f| f.ic)
    }

    pub fn csv_row(&self) -> String {
        let ic = self.ic().map(|v| v.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.epoch,
            self.lr,
            self.train_total,
            self.train_ce,
            self.train_mse,
            self.train_reg,
            self.test_loss,
            self.test_acc,
            ic,
            self.seconds
        )
    }
}

/// Complete training state: everything a checkpoint must carry.
#[derive(Clone, Debug)]
pub struct Trainer<S> {
    pub config: TrainConfig,
    pub model: Model<S>,
    pub optimizer: Adam<S>,
    /// Batch-order source.
    pub rng: Rng,
    /// Completed epochs.
    pub epoch: usize,
    pub data: DatasetSplit<S>,
}

impl<S: Scalar> Trainer<S> {
    pub fn new(config: TrainConfig) -> Result<Self> {
        let full = load_dataset(&config)?;
        Self::with_dataset(config, &full)
    }

    /// As [`Trainer::new`] with an already loaded dataset.
    pub fn with_dataset(config: TrainConfig, full: &Dataset<S>) -> Result<Self> {
        config.validate()?;
        if full.time_steps != config.time_steps {
            return Err(Error::Config(format!(
                "dataset has {} steps but time_steps={}",
                full.time_steps, config.time_steps
            )));
        }
        let data = prepare_split(&config, full)?;
        let spec = build_spec(&config, &full.feature_shape, full.classes)?;
        let model = Model::new(spec, &mut Rng::with_stream(config.seed, INIT_STREAM))?;
        let optimizer = Adam::new(
            &model.params.trainable(),
            S::of(config.beta1),
            S::of(config.beta2),
            S::of(config.adam_eps),
        );
        Ok(Self {
            rng: Rng::with_stream(config.seed, SHUFFLE_STREAM),
            config,
            model,
            optimizer,
            epoch: 0,
            data,
        })
    }

    /// Learning rate of 1-based epoch `e`.
    pub fn lr_for(&self, e: usize) -> Result<S> {
        cosine_lr(
            e - 1,
            self.config.epochs,
            S::of(self.config.lr),
            S::of(self.config.min_lr),
        )
    }

    fn fisher_due(&self, e: usize) -> bool {
        let k = self.config.diag_every;
        k > 0 && (e == 1 || e.is_multiple_of(k) || e == self.config.epochs)
    }

    /// Samples the Fisher profile is measured on: a fixed prefix of the
    /// training split.
    pub fn fisher_inputs(&self) -> Result<crate::tensor::Tensor<S>> {
        let n = self.config.fisher_samples.min(self.data.train.len());
        Ok(self.data.train.batch(&(0..n).collect::<Vec<_>>())?.0)
    }

    /// Trains one epoch, evaluates, and measures the Fisher profile when due.
    pub fn run_epoch(&mut self) -> Result<MetricsRecord<S>> {
        if self.epoch >= self.config.epochs {
            return Err(Error::Invalid(format!("all {} epochs already ran", self.config.epochs)));
        }
        let e = self.epoch + 1;
        let start = Instant::now();
        let lr = self.lr_for(e)?;
        let loss = self.config.loss::<S>();
        let stats = train_epoch(
            &mut self.model,
            &self.data.train,
            &loss,
            self.config.batch_size,
            &mut self.optimizer,
            &mut self.rng,
            lr,
        )
        .map_err(|err| match err {
            Error::NonFinite(m) => Error::NonFinite(format!("epoch {e}, {m}")),
            other => other,
        })?;
        let eval = evaluate(&self.model, &self.data.test, self.config.batch_size)?;
        let fisher = if self.fisher_due(e) {
            Some(FisherProfile::new(
                e,
                fisher_profile(&self.model, &self.fisher_inputs()?)?,
            ))
        } else {
            None
        };
        self.epoch = e;
        Ok(MetricsRecord {
            epoch: e,
            lr,
            train_total: stats.total,
            train_ce: stats.ce,
            train_mse: stats.mse,
            train_reg: stats.reg,
            test_loss: eval.loss,
            test_acc: eval.accuracy,
            fisher,
            seconds: if self.config.wallclock {
                start.elapsed().as_secs_f64()
            } else {
                0.0
            },
        })
    }
}

/// Files of a run directory.
#[derive(Clone, Debug)]
pub struct RunPaths {
    pub root: PathBuf,
    pub config: PathBuf,
    pub metrics: PathBuf,
    pub fisher: PathBuf,
    pub checkpoint: PathBuf,
}

impl RunPaths {
    pub fn new(root: &Path) -> Self {
        Self {
            root: root.to_path_buf(),
            config: root.join("config.txt"),
            metrics: root.join("metrics.csv"),
            fisher: root.join("fisher.csv"),
            checkpoint: root.join("checkpoints").join("last.ckpt"),
        }
    }
}

fn append(path: &Path, text: &str) -> Result<()> {
    let mut f = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}

/// Runs the remaining epochs of `trainer`, writing the run directory at
/// `root`. A fresh run (epoch 0) starts the files; a resumed one appends.
/// After every epoch the metrics row is written and the checkpoint replaced.
pub fn run_training<S: Scalar>(trainer: &mut Trainer<S>, root: &Path) -> Result<Vec<MetricsRecord<S>>> {
    let paths = RunPaths::new(root);
    let ckpt_dir = paths.checkpoint.parent().expect("checkpoint has a directory");
    std::fs::create_dir_all(ckpt_dir).map_err(|e| Error::io(ckpt_dir, e))?;
    if trainer.epoch == 0 {
        std::fs::write(&paths.config, trainer.config.to_text()).map_err(|e| Error::io(&paths.config, e))?;
        std::fs::write(&paths.metrics, format!("{METRICS_HEADER}\n")).map_err(|e| Error::io(&paths.metrics, e))?;
        if trainer.config.diag_every > 0 {
            std::fs::write(&paths.fisher, fisher_csv::<S>(&[])).map_err(|e| Error::io(&paths.fisher, e))?;
        }
    }
    let mut records = Vec::new();
    while trainer.epoch < trainer.config.epochs {
        let rec = trainer.run_epoch()?;
        append(&paths.metrics, &format!("{}\n", rec.csv_row()))?;
        if let Some(f) = &rec.fisher {
            let mut rows = String::new();
            for line in fisher_csv(std::slice::from_ref(f)).lines().skip(1) {
                let _ = writeln!(rows, "{line}");
            }
            append(&paths.fisher, &rows)?;
        }
        Checkpoint::capture(trainer).save(&paths.checkpoint)?;
        records.push(rec);
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn tiny_config() -> TrainConfig {
        let mut c = TrainConfig::default();
        c.apply_overrides([
            ("epochs", "2"),
            ("batch_size", "16"),
            ("time_steps", "4"),
            ("model.hidden", "12"),
            ("data.count", "60"),
            ("synth.classes", "3"),
            ("synth.neurons", "12"),
            ("synth.window", "2"),
            ("diag.every", "1"),
            ("diag.fisher_samples", "4"),
            ("log.wallclock", "false"),
        ])
        .unwrap();
        c
    }

    #[test]
    fn epoch_stats_of_one_batch_are_that_batch() {
        let mut s = EpochStats::<f64>::empty();
        s.push(7, 0.123456789, 0.1, 0.2, 0.3);
        assert_eq!((s.total, s.ce, s.mse, s.reg), (0.123456789, 0.1, 0.2, 0.3));
    }

    #[test]
    fn single_batch_epoch_reports_batch_loss() {
        let mut c = tiny_config();
        c.set("batch_size", "1000").unwrap();
        let mut t = Trainer::<f64>::new(c.clone()).unwrap();
        let model0 = t.model.clone();
        let rec = t.run_epoch().unwrap();

        // Same batch order, evaluated directly on the initial model.
        let mut rng = Rng::with_stream(c.seed, SHUFFLE_STREAM);
        let mut order: Vec<usize> = (0..t.data.train.len()).collect();
        rng.shuffle(&mut order);
        let (x, y) = t.data.train.batch(&order).unwrap();
        let trace = model0.forward(&x, Mode::Train).unwrap();
        let lv = compute_loss(&trace.outputs, &y, &model0.params.hidden_weights(), &c.loss()).unwrap();
        assert_eq!(rec.train_total, lv.total);
        assert_eq!(rec.train_reg, lv.reg);
    }

    #[test]
    fn loss_components_add_up() {
        let mut t = Trainer::<f64>::new(tiny_config()).unwrap();
        let eta = t.config.eta;
        for _ in 0..2 {
            let r = t.run_epoch().unwrap();
            let recombined = (1.0 - eta) * r.train_ce + eta * r.train_mse + r.train_reg;
            assert!((r.train_total - recombined).abs() <= 1e-10);
            assert!(r.ic().is_some());
        }
        assert!(t.run_epoch().is_err());
    }

    #[test]
    fn evaluate_is_pure() {
        let t = Trainer::<f64>::new(tiny_config()).unwrap();
        let before = t.model.clone();
        let a = evaluate(&t.model, &t.data.test, 4).unwrap();
        let b = evaluate(&t.model, &t.data.test, 4).unwrap();
        assert_eq!(a, b);
        assert_eq!(t.model, before);
        let empty = t.data.test.subset(&[]);
        assert!(empty.is_err() || evaluate(&t.model, &empty.unwrap(), 4).is_err());
    }

    #[test]
    fn uniform_predictor() {
        let t = Trainer::<f64>::new(tiny_config()).unwrap();
        let model = Model {
            params: crate::network::Parameters::zeros(&t.model.spec),
            spec: t.model.spec.clone(),
        };
        let r = evaluate(&model, &t.data.train, 8).unwrap();
        assert!((r.loss - 3f64.ln()).abs() < 1e-12);
        let zeros = t.data.train.labels().iter().filter(|&&y| y == 0).count();
        assert_eq!(r.accuracy, zeros as f64 / t.data.train.len() as f64);
    }

    #[test]
    fn conv_spec_from_config() {
        let mut c = tiny_config();
        c.set("model.conv", "2").unwrap();
        let spec = build_spec::<f64>(&c, &[2, 3, 3], 4).unwrap();
        assert_eq!(spec.layers.len(), 3);
        assert_eq!(spec.layers[1].kind.in_features(), 18);
        assert!(build_spec::<f64>(&c, &[12], 4).is_err());
    }
}
