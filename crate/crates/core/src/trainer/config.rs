//! Flat `key=value` run configuration with dotted keys.
//!
//! A config file holds one `key = value` pair per line; `#` starts a comment.
//! Overrides given later (for example on the command line) replace earlier
//! values. Unknown keys are rejected. [`TrainConfig::to_text`] renders every
//! key in sorted order, and parsing that text reproduces the config exactly.

use std::path::Path;

use crate::data::SyntheticTaskSpec;
use crate::error::{Error, Result};
use crate::neuron::LIFParams;
use crate::objectives::{LossConfig, LossKind};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Precision {
    F32,
    F64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DataKind {
    /// Generated in memory from the `synth.*` keys.
    Synthetic,
    /// Spike-train CSV.
    Spikes,
    /// Image CSV, direct-encoded.
    Images,
    /// Index CSV of `label,file` rows pointing at event files.
    Events,
}

impl DataKind {
    fn name(self) -> &'static str {
        match self {
            DataKind::Synthetic => "synthetic",
            DataKind::Spikes => "spikes",
            DataKind::Images => "images",
            DataKind::Events => "events",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub seed: u64,
    pub precision: Precision,
    pub epochs: usize,
    pub batch_size: usize,
    pub time_steps: usize,

    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub min_lr: f64,

    pub tau: f64,
    pub u_th: f64,
    pub u_reset: f64,
    pub alpha: f64,

    pub loss_kind: LossKind,
    pub eta: f64,
    pub mu: f64,
    pub lambda: f64,
    pub delta: f64,
    pub epsilon: f64,
    pub phi: f64,

    /// Conv channels (3×3, stride 1, padding 1) ahead of the dense layers.
    pub conv: Vec<usize>,
    /// Hidden dense widths.
    pub hidden: Vec<usize>,
    pub norm: bool,

    pub data_kind: DataKind,
    pub data_path: String,
    pub data_count: usize,
    pub data_split: f64,
    /// Fraction of training labels replaced by a wrong class.
    pub label_noise: f64,
    pub data_seed: u64,
    /// Event frame extents; 0 keeps the sensor size.
    pub frame_height: usize,
    pub frame_width: usize,

    pub synth_classes: usize,
    pub synth_neurons: usize,
    pub synth_window: usize,
    pub synth_base_rate: f64,
    pub synth_peak_rate: f64,
    pub synth_noise_rate: f64,

    /// Epochs between Fisher profiles; 0 disables them.
    pub diag_every: usize,
    pub fisher_samples: usize,

    /// Record wall-clock seconds in metrics.csv; when off the column is 0.
    pub wallclock: bool,
    pub run_dir: String,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let synth = SyntheticTaskSpec::default();
        let loss = LossConfig::<f64>::default();
        Self {
            seed: 0,
            precision: Precision::F64,
            epochs: 20,
            batch_size: 64,
            time_steps: 10,
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            min_lr: 0.0,
            tau: 2.0,
            u_th: 1.0,
            u_reset: 0.0,
            alpha: 1.0,
            loss_kind: loss.kind,
            eta: loss.eta,
            mu: loss.mu,
            lambda: loss.lambda,
            delta: loss.delta,
            epsilon: loss.epsilon,
            phi: loss.phi,
            conv: Vec::new(),
            hidden: vec![128],
            norm: true,
            data_kind: DataKind::Synthetic,
            data_path: String::new(),
            data_count: 1000,
            data_split: 0.9,
            label_noise: 0.0,
            data_seed: 0,
            frame_height: 0,
            frame_width: 0,
            synth_classes: synth.classes,
            synth_neurons: synth.neurons,
            synth_window: synth.window,
            synth_base_rate: synth.base_rate,
            synth_peak_rate: synth.peak_rate,
            synth_noise_rate: synth.noise_rate,
            diag_every: 5,
            fisher_samples: 32,
            wallclock: true,
            run_dir: "run".into(),
        }
    }
}

pub const KEYS: &[&str] = &[
    "batch_size",
    "data.count",
    "data.height",
    "data.kind",
    "data.label_noise",
    "data.path",
    "data.seed",
    "data.split",
    "data.width",
    "diag.every",
    "diag.fisher_samples",
    "epochs",
    "lif.alpha",
    "lif.tau",
    "lif.u_reset",
    "lif.u_th",
    "log.wallclock",
    "loss.delta",
    "loss.epsilon",
    "loss.eta",
    "loss.kind",
    "loss.lambda",
    "loss.mu",
    "loss.phi",
    "model.conv",
    "model.hidden",
    "model.norm",
    "optim.beta1",
    "optim.beta2",
    "optim.eps",
    "optim.lr",
    "optim.min_lr",
    "precision",
    "run.dir",
    "seed",
    "synth.base_rate",
    "synth.classes",
    "synth.neurons",
    "synth.noise_rate",
    "synth.peak_rate",
    "synth.window",
    "time_steps",
];

fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Config(format!("'{key}': cannot parse '{v}'")))
}

fn flag(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::Config(format!("'{key}': expected true or false, got '{v}'"))),
    }
}

fn list(key: &str, v: &str) -> Result<Vec<usize>> {
    if v.is_empty() || v == "none" {
        return Ok(Vec::new());
    }
    v.split(',').map(|x| num(key, x.trim())).collect()
}

fn render_list(v: &[usize]) -> String {
    if v.is_empty() {
        "none".into()
    } else {
        v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
    }
}

impl TrainConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "seed" => self.seed = num(key, v)?,
            "precision" => {
                self.precision = match v {
                    "f32" => Precision::F32,
                    "f64" => Precision::F64,
                    _ => return Err(Error::Config(format!("'precision': expected f32 or f64, got '{v}'"))),
                }
            }
            "epochs" => self.epochs = num(key, v)?,
            "batch_size" => self.batch_size = num(key, v)?,
            "time_steps" => self.time_steps = num(key, v)?,
            "optim.lr" => self.lr = num(key, v)?,
            "optim.beta1" => self.beta1 = num(key, v)?,
            "optim.beta2" => self.beta2 = num(key, v)?,
            "optim.eps" => self.adam_eps = num(key, v)?,
            "optim.min_lr" => self.min_lr = num(key, v)?,
            "lif.tau" => self.tau = num(key, v)?,
            "lif.u_th" => self.u_th = num(key, v)?,
            "lif.u_reset" => self.u_reset = num(key, v)?,
            "lif.alpha" => self.alpha = num(key, v)?,
            "loss.kind" => {
                self.loss_kind =
                    LossKind::parse(v).ok_or_else(|| Error::Config(format!("'loss.kind': unknown objective '{v}'")))?
            }
            "loss.eta" => self.eta = num(key, v)?,
            "loss.mu" => self.mu = num(key, v)?,
            "loss.lambda" => self.lambda = num(key, v)?,
            "loss.delta" => self.delta = num(key, v)?,
            "loss.epsilon" => self.epsilon = num(key, v)?,
            "loss.phi" => self.phi = num(key, v)?,
            "model.conv" => self.conv = list(key, v)?,
            "model.hidden" => self.hidden = list(key, v)?,
            "model.norm" => self.norm = flag(key, v)?,
            "data.kind" => {
                self.data_kind = match v {
                    "synthetic" => DataKind::Synthetic,
                    "spikes" => DataKind::Spikes,
                    "images" => DataKind::Images,
                    "events" => DataKind::Events,
                    _ => return Err(Error::Config(format!("'data.kind': unknown source '{v}'"))),
                }
            }
            "data.path" => self.data_path = v.to_string(),
            "data.count" => self.data_count = num(key, v)?,
            "data.split" => self.data_split = num(key, v)?,
            "data.label_noise" => self.label_noise = num(key, v)?,
            "data.seed" => self.data_seed = num(key, v)?,
            "data.height" => self.frame_height = num(key, v)?,
            "data.width" => self.frame_width = num(key, v)?,
            "synth.classes" => self.synth_classes = num(key, v)?,
            "synth.neurons" => self.synth_neurons = num(key, v)?,
            "synth.window" => self.synth_window = num(key, v)?,
            "synth.base_rate" => self.synth_base_rate = num(key, v)?,
            "synth.peak_rate" => self.synth_peak_rate = num(key, v)?,
            "synth.noise_rate" => self.synth_noise_rate = num(key, v)?,
            "diag.every" => self.diag_every = num(key, v)?,
            "diag.fisher_samples" => self.fisher_samples = num(key, v)?,
            "log.wallclock" => self.wallclock = flag(key, v)?,
            "run.dir" => self.run_dir = v.to_string(),
            _ => return Err(Error::Config(format!("unknown key '{key}'"))),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        Some(match key {
            "seed" => self.seed.to_string(),
            "precision" => match self.precision {
                Precision::F32 => "f32".into(),
                Precision::F64 => "f64".into(),
            },
            "epochs" => self.epochs.to_string(),
            "batch_size" => self.batch_size.to_string(),
            "time_steps" => self.time_steps.to_string(),
            "optim.lr" => self.lr.to_string(),
            "optim.beta1" => self.beta1.to_string(),
            "optim.beta2" => self.beta2.to_string(),
            "optim.eps" => self.adam_eps.to_string(),
            "optim.min_lr" => self.min_lr.to_string(),
            "lif.tau" => self.tau.to_string(),
            "lif.u_th" => self.u_th.to_string(),
            "lif.u_reset" => self.u_reset.to_string(),
            "lif.alpha" => self.alpha.to_string(),
            "loss.kind" => self.loss_kind.name().into(),
            "loss.eta" => self.eta.to_string(),
            "loss.mu" => self.mu.to_string(),
            "loss.lambda" => self.lambda.to_string(),
            "loss.delta" => self.delta.to_string(),
            "loss.epsilon" => self.epsilon.to_string(),
            "loss.phi" => self.phi.to_string(),
            "model.conv" => render_list(&self.conv),
            "model.hidden" => render_list(&self.hidden),
            "model.norm" => self.norm.to_string(),
            "data.kind" => self.data_kind.name().into(),
            "data.path" => self.data_path.clone(),
            "data.count" => self.data_count.to_string(),
            "data.split" => self.data_split.to_string(),
            "data.label_noise" => self.label_noise.to_string(),
            "data.seed" => self.data_seed.to_string(),
            "data.height" => self.frame_height.to_string(),
            "data.width" => self.frame_width.to_string(),
            "synth.classes" => self.synth_classes.to_string(),
            "synth.neurons" => self.synth_neurons.to_string(),
            "synth.window" => self.synth_window.to_string(),
            "synth.base_rate" => self.synth_base_rate.to_string(),
            "synth.peak_rate" => self.synth_peak_rate.to_string(),
            "synth.noise_rate" => self.synth_noise_rate.to_string(),
            "diag.every" => self.diag_every.to_string(),
            "diag.fisher_samples" => self.fisher_samples.to_string(),
            "log.wallclock" => self.wallclock.to_string(),
            "run.dir" => self.run_dir.clone(),
            _ => return None,
        })
    }

    /// Applies `key=value` lines; `#` comments and blank lines are skipped.
    /// Errors carry `origin` (a path) and the 1-based line number.
    pub fn apply_text(&mut self, text: &str, origin: &Path) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(origin, i + 1, format!("expected key=value, got '{line}'")))?;
            self.set(k.trim(), v)
                .map_err(|e| Error::parse(origin, i + 1, e.to_string()))?;
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::default();
        cfg.apply_text(&text, path)?;
        Ok(cfg)
    }

    pub fn apply_overrides<'a>(&mut self, pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Result<()> {
        for (k, v) in pairs {
            self.set(k, v)?;
        }
        Ok(())
    }

    /// Every key in sorted order as `key=value` lines.
    pub fn to_text(&self) -> String {
        KEYS.iter()
            .map(|k| format!("{k}={}\n", self.get(k).expect("listed key")))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.epochs == 0 || self.batch_size == 0 || self.time_steps == 0 {
            return bad("epochs, batch_size and time_steps must be positive".into());
        }
        if !(self.lr > 0.0) || !(self.min_lr >= 0.0) || self.min_lr > self.lr {
            return bad(format!(
                "need 0 <= optim.min_lr <= optim.lr, lr > 0 (lr={}, min={})",
                self.lr, self.min_lr
            ));
        }
        for (k, b) in [("optim.beta1", self.beta1), ("optim.beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return bad(format!("{k} must lie in [0, 1), got {b}"));
            }
        }
        if !(self.adam_eps > 0.0) {
            return bad("optim.eps must be positive".into());
        }
        self.lif::<f64>()?;
        self.loss::<f64>().validate()?;
        if self.hidden.is_empty() && self.conv.is_empty() {
            return bad("model needs at least one spiking layer".into());
        }
        if self.hidden.iter().chain(&self.conv).any(|&w| w == 0) {
            return bad("layer widths must be positive".into());
        }
        if !(self.data_split > 0.0 && self.data_split < 1.0) {
            return bad(format!("data.split must lie in (0, 1), got {}", self.data_split));
        }
        if !(0.0..=1.0).contains(&self.label_noise) {
            return bad(format!("data.label_noise must lie in [0, 1], got {}", self.label_noise));
        }
        if self.fisher_samples == 0 {
            return bad("diag.fisher_samples must be positive".into());
        }
        if self.data_kind != DataKind::Synthetic && self.data_path.is_empty() {
            return bad(format!("data.kind={} needs data.path", self.data_kind.name()));
        }
        if self.data_kind == DataKind::Synthetic {
            self.synth_spec().validate()?;
        }
        Ok(())
    }

    pub fn lif<S: Scalar>(&self) -> Result<LIFParams<S>> {
        LIFParams::from_tau(
            S::of(self.tau),
            S::of(self.u_th),
            S::of(self.u_reset),
            S::of(self.alpha),
        )
        .map_err(|e| Error::Config(e.to_string()))
    }

    pub fn loss<S: Scalar>(&self) -> LossConfig<S> {
        LossConfig {
            kind: self.loss_kind,
            eta: S::of(self.eta),
            mu: S::of(self.mu),
            lambda: S::of(self.lambda),
            delta: S::of(self.delta),
            epsilon: S::of(self.epsilon),
            phi: S::of(self.phi),
        }
    }

    pub fn synth_spec(&self) -> SyntheticTaskSpec {
        SyntheticTaskSpec {
            classes: self.synth_classes,
            neurons: self.synth_neurons,
            time_steps: self.time_steps,
            window: self.synth_window,
            base_rate: self.synth_base_rate,
            peak_rate: self.synth_peak_rate,
            noise_rate: self.synth_noise_rate,
            seed: self.data_seed,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_the_reference_settings() {
        let c = TrainConfig::default();
        assert_eq!((c.lr, c.batch_size, c.beta1, c.beta2), (1e-3, 64, 0.9, 0.999));
        assert_eq!((c.tau, c.u_th, c.u_reset, c.alpha, c.min_lr), (2.0, 1.0, 0.0, 1.0, 0.0));
        assert_eq!(c.adam_eps, 1e-8);
        c.validate().unwrap();
    }

    #[test]
    fn keys_are_sorted_and_complete() {
        let mut sorted = KEYS.to_vec();
        sorted.sort_unstable();
        assert_eq!(sorted, KEYS);
        let c = TrainConfig::default();
        for k in KEYS {
            assert!(c.get(k).is_some(), "{k}");
        }
    }

    #[test]
    fn echo_round_trips() {
        let mut c = TrainConfig::default();
        c.apply_overrides([
            ("optim.lr", "3.3e-4"),
            ("model.hidden", "32,16"),
            ("loss.kind", "tet"),
            ("log.wallclock", "false"),
        ])
        .unwrap();
        let text = c.to_text();
        let mut d = TrainConfig::default();
        d.apply_text(&text, Path::new("echo")).unwrap();
        assert_eq!(c, d);
        assert_eq!(d.to_text(), text);
    }

    #[test]
    fn parse_errors_name_the_line() {
        let mut c = TrainConfig::default();
        let err = c
            .apply_text("epochs=3\n# note\nbogus.key=1\n", Path::new("c.txt"))
            .unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
        let err = c.apply_text("epochs\n", Path::new("c.txt")).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
        assert!(c.set("epochs", "many").is_err());
        assert!(c.set("model.norm", "maybe").is_err());
    }

    #[test]
    fn overrides_win_and_validation_rejects_nonsense() {
        let mut c = TrainConfig::default();
        c.apply_text("epochs = 3  # short\n", Path::new("c")).unwrap();
        c.apply_overrides([("epochs", "5")]).unwrap();
        assert_eq!(c.epochs, 5);
        for (k, v) in [
            ("optim.lr", "0"),
            ("lif.tau", "0.5"),
            ("optim.beta1", "1"),
            ("data.split", "1"),
            ("loss.eta", "2"),
        ] {
            let mut bad = c.clone();
            bad.set(k, v).unwrap();
            assert!(bad.validate().is_err(), "{k}={v}");
        }
    }
}
