//! Versioned text checkpoints.
//!
//! ```text
//! trt-checkpoint 1
//! precision f64
//! epoch <completed epochs>
//! rng <seed> <stream> <word position>
//! adam_step <updates>
//! config <line count>
//! <key=value lines, sorted>
//! tensor <name> <rank> <dims...>
//! <values, space separated, shortest round-trip exponent form>
//! ...
//! end
//! ```
//!
//! Tensors are the parameters and normalization running statistics, then the
//! Adam moments named `adam.m.<param>` and `adam.v.<param>`. Values are
//! written so that parsing restores the same bits, hence save → load → save
//! reproduces the file byte for byte.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::rng::{Rng, RngState};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

use super::config::TrainConfig;
use super::Trainer;

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &str = "trt-checkpoint";

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint<S> {
    pub config: TrainConfig,
    pub epoch: usize,
    pub rng: RngState,
    pub adam_step: u64,
    /// Named tensors in file order.
    pub tensors: Vec<(String, Tensor<S>)>,
}

impl<S: Scalar> Checkpoint<S> {
    pub fn capture(t: &Trainer<S>) -> Self {
        let mut tensors: Vec<(String, Tensor<S>)> = t
            .model
            .params
            .named()
            .into_iter()
            .map(|(n, x)| (n, x.clone()))
            .collect();
        let names = t.model.params.trainable_names();
        for (n, m) in names.iter().zip(&t.optimizer.m) {
            tensors.push((format!("adam.m.{n}"), m.clone()));
        }
        for (n, v) in names.iter().zip(&t.optimizer.v) {
            tensors.push((format!("adam.v.{n}"), v.clone()));
        }
        Self {
            config: t.config.clone(),
            epoch: t.epoch,
            rng: t.rng.state(),
            adam_step: t.optimizer.step,
            tensors,
        }
    }

    pub fn to_text(&self) -> String {
        let cfg = self.config.to_text();
        let mut out = String::new();
        let _ = writeln!(out, "{MAGIC} {FORMAT_VERSION}");
        let _ = writeln!(out, "precision {}", S::NAME);
        let _ = writeln!(out, "epoch {}", self.epoch);
        let _ = writeln!(out, "rng {} {} {}", self.rng.seed, self.rng.stream, self.rng.word_pos);
        let _ = writeln!(out, "adam_step {}", self.adam_step);
        let _ = writeln!(out, "config {}", cfg.lines().count());
        out.push_str(&cfg);
        for (name, t) in &self.tensors {
            let _ = write!(out, "tensor {name} {}", t.rank());
            for d in t.shape() {
                let _ = write!(out, " {d}");
            }
            out.push('\n');
            let mut first = true;
            for v in t.data() {
                if !first {
                    out.push(' ');
                }
                first = false;
                let _ = write!(out, "{v:e}");
            }
            out.push('\n');
        }
        out.push_str("end\n");
        out
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut lines = text.lines().enumerate().peekable();
        let mut next = |what: &str| {
            lines
                .next()
                .map(|(i, l)| (i + 1, l))
                .ok_or_else(|| Error::parse(path, text.lines().count() + 1, format!("truncated: expected {what}")))
        };
        let field = |(n, line): (usize, &str), key: &str| -> Result<Vec<String>> {
            let mut it = line.split_whitespace();
            if it.next() != Some(key) {
                return Err(Error::parse(path, n, format!("expected '{key}'")));
            }
            Ok(it.map(str::to_string).collect())
        };
        let int = |n: usize, s: &str| -> Result<u128> {
            s.parse()
                .map_err(|_| Error::parse(path, n, format!("not an integer: '{s}'")))
        };

        let l = next("header")?;
        let v = field(l, MAGIC)?;
        if v.len() != 1 || v[0] != FORMAT_VERSION.to_string() {
            return Err(Error::parse(
                path,
                l.0,
                format!("unsupported checkpoint version {:?}", v),
            ));
        }
        let l = next("precision")?;
        let p = field(l, "precision")?;
        if p.first().map(String::as_str) != Some(S::NAME) {
            return Err(Error::parse(
                path,
                l.0,
                format!("checkpoint precision {p:?} does not match {}", S::NAME),
            ));
        }
        let l = next("epoch")?;
        let epoch = int(l.0, field(l, "epoch")?.first().map(String::as_str).unwrap_or(""))? as usize;
        let l = next("rng")?;
        let r = field(l, "rng")?;
        if r.len() != 3 {
            return Err(Error::parse(path, l.0, "rng needs seed, stream and position"));
        }
        let rng = RngState {
            seed: int(l.0, &r[0])? as u64,
            stream: int(l.0, &r[1])? as u64,
            word_pos: int(l.0, &r[2])?,
        };
        let l = next("adam_step")?;
        let adam_step = int(l.0, field(l, "adam_step")?.first().map(String::as_str).unwrap_or(""))? as u64;
        let l = next("config")?;
        let count = int(l.0, field(l, "config")?.first().map(String::as_str).unwrap_or(""))? as usize;
        let mut config = TrainConfig::default();
        for _ in 0..count {
            let (n, line) = next("config line")?;
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(path, n, "expected key=value"))?;
            config.set(k, v).map_err(|e| Error::parse(path, n, e.to_string()))?;
        }

        let mut tensors = Vec::new();
        loop {
            let (n, line) = next("tensor or end")?;
            if line == "end" {
                break;
            }
            let h = field((n, line), "tensor")?;
            if h.len() < 2 {
                return Err(Error::parse(path, n, "tensor header needs a name and rank"));
            }
            let rank = int(n, &h[1])? as usize;
            if h.len() != 2 + rank {
                return Err(Error::parse(path, n, format!("rank {rank} with {} dims", h.len() - 2)));
            }
            let shape = h[2..]
                .iter()
                .map(|d| int(n, d).map(|v| v as usize))
                .collect::<Result<Vec<_>>>()?;
            let (vn, vals) = next("tensor values")?;
            let data = vals
                .split_whitespace()
                .map(|s| S::parse_exact(s).ok_or_else(|| Error::parse(path, vn, format!("bad value '{s}'"))))
                .collect::<Result<Vec<_>>>()?;
            let t = Tensor::new(shape, data).map_err(|e| Error::parse(path, vn, e.to_string()))?;
            tensors.push((h[0].clone(), t));
        }
        Ok(Self {
            config,
            epoch,
            rng,
            adam_step,
            tensors,
        })
    }

    /// Writes to a temporary sibling, then renames over `path`.
    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let mut tmp = path.as_os_str().to_owned();
        tmp.push(".tmp");
        let tmp = std::path::PathBuf::from(tmp);
        std::fs::write(&tmp, self.to_text()).map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    /// Rebuilds the trainer: data and architecture from the config echo,
    /// then every stored tensor, the optimizer state, the batch-order RNG and
    /// the epoch counter.
    pub fn restore(&self) -> Result<Trainer<S>> {
        let mut t = Trainer::new(self.config.clone())?;
        self.apply(&mut t)?;
        Ok(t)
    }

    /// Overwrites the state of a trainer built from the same config.
    pub fn apply(&self, t: &mut Trainer<S>) -> Result<()> {
        let mut stored: std::collections::HashMap<&str, &Tensor<S>> =
            self.tensors.iter().map(|(n, x)| (n.as_str(), x)).collect();
        if stored.len() != self.tensors.len() {
            return Err(Error::Invalid("checkpoint repeats a tensor name".into()));
        }
        let mut take = |name: &str, dst: &mut Tensor<S>| -> Result<()> {
            let src = stored
                .remove(name)
                .ok_or_else(|| Error::Invalid(format!("checkpoint lacks '{name}'")))?;
            if src.shape() != dst.shape() {
                return Err(Error::Shape(format!(
                    "'{name}': stored {:?}, model {:?}",
                    src.shape(),
                    dst.shape()
                )));
            }
            dst.clone_from(src);
            Ok(())
        };
        for (name, dst) in t.model.params.named_mut() {
            take(&name, dst)?;
        }
        let names = t.model.params.trainable_names();
        for (n, m) in names.iter().zip(t.optimizer.m.iter_mut()) {
            take(&format!("adam.m.{n}"), m)?;
        }
        for (n, v) in names.iter().zip(t.optimizer.v.iter_mut()) {
            take(&format!("adam.v.{n}"), v)?;
        }
        if let Some(extra) = stored.keys().next() {
            return Err(Error::Invalid(format!("checkpoint holds unknown tensor '{extra}'")));
        }
        t.optimizer.step = self.adam_step;
        t.rng = Rng::from_state(&self.rng);
        t.epoch = self.epoch;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trainer::tests::tiny_config;

    #[test]
    fn save_load_save_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let mut t = Trainer::<f64>::new(tiny_config()).unwrap();
        t.run_epoch().unwrap();
        let a = dir.path().join("a.ckpt");
        let b = dir.path().join("b.ckpt");
        Checkpoint::capture(&t).save(&a).unwrap();
        let loaded = Checkpoint::<f64>::load(&a).unwrap();
        loaded.save(&b).unwrap();
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
        assert_eq!(loaded, Checkpoint::capture(&t));
        assert!(!dir.path().join("a.ckpt.tmp").exists());
    }

    #[test]
    fn restore_reproduces_state() {
        let mut t = Trainer::<f64>::new(tiny_config()).unwrap();
        t.run_epoch().unwrap();
        let r = Checkpoint::capture(&t).restore().unwrap();
        assert_eq!(r.model, t.model);
        assert_eq!(r.optimizer, t.optimizer);
        assert_eq!(r.rng.state(), t.rng.state());
        assert_eq!(r.epoch, 1);
    }

    #[test]
    fn rejects_foreign_or_damaged_files() {
        let t = Trainer::<f64>::new(tiny_config()).unwrap();
        let text = Checkpoint::capture(&t).to_text();
        let p = Path::new("x.ckpt");
        assert!(Checkpoint::<f32>::parse(&text, p).is_err());
        assert!(Checkpoint::<f64>::parse(&text.replace("trt-checkpoint 1", "trt-checkpoint 9"), p).is_err());
        let cut: String = text.lines().take(60).map(|l| format!("{l}\n")).collect();
        assert!(Checkpoint::<f64>::parse(&cut, p).is_err());
        let mut ck = Checkpoint::<f64>::parse(&text, p).unwrap();
        ck.tensors.pop();
        assert!(ck.restore().is_err());
    }
}
