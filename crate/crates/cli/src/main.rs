//! `trt`: train, evaluate and inspect spiking networks.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, CommandFactory, Parser, Subcommand};

use trt_core::data::{synth_generate, write_spike_csv};
use trt_core::diagnostics::{
    asfr, asfr_csv, fisher_csv, fisher_profile, landscape_2d, landscape_csv, probe_csv, vanishing_probe, FisherProfile,
    LandscapeConfig,
};
use trt_core::trainer::{config::KEYS, evaluate, run_training, Checkpoint, Precision, TrainConfig, Trainer};
use trt_core::{Mode, Scalar};

#[derive(Parser)]
#[command(
    name = "trt",
    version,
    about = "Spiking network training with temporal regularization"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train a model. Settings come from an optional config file, then
    /// `--key=value` overrides. `--resume` continues from the run's checkpoint.
    Train {
        #[arg(
            trailing_var_arg = true,
            allow_hyphen_values = true,
            value_name = "[CONFIG] [--key=value]... [--resume]"
        )]
        args: Vec<String>,
    },
    /// Evaluate a checkpoint on the test split of its data (or of data
    /// selected by `--data.*` overrides).
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(trailing_var_arg = true, allow_hyphen_values = true, value_name = "--key=value")]
        args: Vec<String>,
    },
    /// Diagnostics on a checkpoint; CSVs go to the run directory or `--out`.
    Diagnose {
        #[command(subcommand)]
        what: Diagnose,
    },
    /// Write a synthetic spike dataset as CSV.
    GenData {
        #[arg(long)]
        out: PathBuf,
        #[arg(trailing_var_arg = true, allow_hyphen_values = true, value_name = "--key=value")]
        args: Vec<String>,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Output directory; defaults to the run directory holding the checkpoint.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Diagnose {
    /// Per-timestep Fisher trace and information centroid.
    Fisher(Common),
    /// Spatial/temporal gradient norms over a sweep of leak factors.
    Tgrad {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_value = "0.5,0.75,0.9,0.99")]
        gammas: Vec<f64>,
    },
    /// 2D loss slice along filter-normalized random directions.
    Landscape {
        #[command(flatten)]
        common: Common,
        /// Points per axis (odd).
        #[arg(long, default_value_t = 21)]
        grid: usize,
        #[arg(long, default_value_t = 1.0)]
        span: f64,
        #[arg(long, value_delimiter = ',', num_args = 2, default_values_t = [1u64, 2])]
        seeds: Vec<u64>,
    },
    /// Average spike firing rate of every spiking layer on the test split.
    Asfr(Common),
}

/// `--key=value` tokens into pairs; the names must be config keys.
fn parse_overrides(args: &[String]) -> Result<Vec<(String, String)>> {
    args.iter()
        .map(|a| {
            let Some(body) = a.strip_prefix("--") else {
                bail!("unexpected argument '{a}'");
            };
            let Some((k, v)) = body.split_once('=') else {
                bail!("expected --key=value, got '{a}'");
            };
            if !KEYS.contains(&k) {
                bail!("unknown flag '--{k}'");
            }
            Ok((k.to_string(), v.to_string()))
        })
        .collect()
}

fn apply(cfg: &mut TrainConfig, pairs: &[(String, String)]) -> Result<()> {
    cfg.apply_overrides(pairs.iter().map(|(k, v)| (k.as_str(), v.as_str())))?;
    Ok(())
}

fn checkpoint_precision(path: &Path) -> Result<Precision> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    match text.lines().nth(1) {
        Some("precision f32") => Ok(Precision::F32),
        Some("precision f64") => Ok(Precision::F64),
        _ => bail!("{} is not a checkpoint", path.display()),
    }
}

fn run_dir_of(ckpt: &Path, out: &Option<PathBuf>) -> PathBuf {
    if let Some(o) = out {
        return o.clone();
    }
    let dir = ckpt.parent().unwrap_or(Path::new("."));
    if dir.file_name().is_some_and(|n| n == "checkpoints") {
        dir.parent().unwrap_or(Path::new(".")).to_path_buf()
    } else {
        dir.to_path_buf()
    }
}

fn write(dir: &Path, name: &str, body: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let p = dir.join(name);
    std::fs::write(&p, body).with_context(|| format!("writing {}", p.display()))?;
    Ok(p)
}

fn train<S: Scalar>(cfg: TrainConfig, resume: bool) -> Result<()> {
    let root = PathBuf::from(&cfg.run_dir);
    let mut trainer = if resume {
        let ck = Checkpoint::<S>::load(&root.join("checkpoints").join("last.ckpt"))?;
        let mut stored = ck.config.clone();
        stored.epochs = cfg.epochs;
        if stored != cfg {
            bail!("--resume only allows changing epochs; the stored config differs");
        }
        let mut t = Trainer::new(stored)?;
        ck.apply(&mut t)?;
        t
    } else {
        Trainer::<S>::new(cfg)?
    };
    for r in run_training(&mut trainer, &root)? {
        println!("{}", r.csv_row());
    }
    println!("run directory: {}", root.display());
    Ok(())
}

fn restore<S: Scalar>(ckpt: &Path, overrides: &[(String, String)]) -> Result<Trainer<S>> {
    let ck = Checkpoint::<S>::load(ckpt)?;
    let mut cfg = ck.config.clone();
    apply(&mut cfg, overrides)?;
    let mut t = Trainer::new(cfg)?;
    ck.apply(&mut t)?;
    Ok(t)
}

fn eval<S: Scalar>(ckpt: &Path, overrides: &[(String, String)]) -> Result<()> {
    let t = restore::<S>(ckpt, overrides)?;
    let r = evaluate(&t.model, &t.data.test, t.config.batch_size)?;
    println!("test_loss,test_acc\n{},{}", r.loss, r.accuracy);
    Ok(())
}

fn diagnose<S: Scalar>(what: &Diagnose) -> Result<()> {
    let common = match what {
        Diagnose::Fisher(c) | Diagnose::Asfr(c) => c,
        Diagnose::Tgrad { common, .. } | Diagnose::Landscape { common, .. } => common,
    };
    let mut t = restore::<S>(&common.checkpoint, &[])?;
    let dir = run_dir_of(&common.checkpoint, &common.out);
    let path = match what {
        Diagnose::Fisher(_) => {
            let profile = FisherProfile::new(t.epoch, fisher_profile(&t.model, &t.fisher_inputs()?)?);
            write(&dir, "diag_fisher.csv", &fisher_csv(&[profile]))?
        }
        Diagnose::Tgrad { gammas, .. } => {
            let n = t.config.batch_size.min(t.data.train.len());
            let (x, y) = t.data.train.batch(&(0..n).collect::<Vec<_>>())?;
            let g: Vec<S> = gammas.iter().map(|&v| S::of(v)).collect();
            write(
                &dir,
                "diag_tgrad.csv",
                &probe_csv(&vanishing_probe(&t.model, &x, &y, &g)?),
            )?
        }
        Diagnose::Landscape { grid, span, seeds, .. } => {
            let cfg = LandscapeConfig {
                ka: *grid,
                kb: *grid,
                span: S::of(*span),
                seeds: (seeds[0], seeds[1]),
            };
            let test = t.data.test.clone();
            let bs = t.config.batch_size;
            let g = landscape_2d(&mut t.model, |m| Ok(evaluate(m, &test, bs)?.loss), &cfg)?;
            write(&dir, "diag_landscape.csv", &landscape_csv(&g))?
        }
        Diagnose::Asfr(_) => {
            let (x, _) = t.data.test.all()?;
            let trace = t.model.forward(&x, Mode::Eval)?;
            let layers: Vec<usize> = (0..t.model.spec.hidden_layers()).collect();
            write(&dir, "diag_asfr.csv", &asfr_csv(&layers, &asfr(&trace, &layers)?))?
        }
    };
    print!("{}", std::fs::read_to_string(&path)?);
    eprintln!("wrote {}", path.display());
    Ok(())
}

fn gen_data(out: &Path, overrides: &[(String, String)]) -> Result<()> {
    let mut cfg = TrainConfig::default();
    apply(&mut cfg, overrides)?;
    let spec = cfg.synth_spec();
    let d = synth_generate::<f64>(&spec, cfg.data_count)?;
    write_spike_csv(out, &d)?;
    println!(
        "wrote {} samples ({} steps x {} neurons, {} classes) to {}",
        d.len(),
        d.time_steps,
        d.features(),
        d.classes,
        out.display()
    );
    Ok(())
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::Train { args } => {
            let mut rest: &[String] = &args;
            let mut cfg = match rest.first() {
                Some(first) if !first.starts_with("--") => {
                    rest = &rest[1..];
                    TrainConfig::from_file(Path::new(first))?
                }
                _ => TrainConfig::default(),
            };
            let resume = rest.iter().any(|a| a == "--resume");
            let flags: Vec<String> = rest.iter().filter(|a| *a != "--resume").cloned().collect();
            apply(&mut cfg, &parse_overrides(&flags)?)?;
            cfg.validate()?;
            match cfg.precision {
                Precision::F64 => train::<f64>(cfg, resume),
                Precision::F32 => train::<f32>(cfg, resume),
            }
        }
        Cmd::Eval { checkpoint, args } => {
            let o = parse_overrides(&args)?;
            match checkpoint_precision(&checkpoint)? {
                Precision::F64 => eval::<f64>(&checkpoint, &o),
                Precision::F32 => eval::<f32>(&checkpoint, &o),
            }
        }
        Cmd::Diagnose { what } => {
            let ckpt = match &what {
                Diagnose::Fisher(c) | Diagnose::Asfr(c) => &c.checkpoint,
                Diagnose::Tgrad { common, .. } | Diagnose::Landscape { common, .. } => &common.checkpoint,
            };
            match checkpoint_precision(ckpt)? {
                Precision::F64 => diagnose::<f64>(&what),
                Precision::F32 => diagnose::<f32>(&what),
            }
        }
        Cmd::GenData { out, args } => gen_data(&out, &parse_overrides(&args)?),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let is_usage_error = |e: &anyhow::Error| {
        let m = e.to_string();
        m.starts_with("unknown flag") || m.starts_with("unexpected argument") || m.starts_with("expected --key")
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if is_usage_error(&e) => {
            eprintln!("error: {e}\n");
            let _ = Cli::command().print_help();
            ExitCode::from(2)
        }
        Err(e) => {
            // Core errors already embed their cause; only add outer context.
            let mut msg = e.to_string();
            if let Some(inner) = e.chain().nth(1) {
                if !e.downcast_ref::<trt_core::Error>().is_some() {
                    msg = format!("{msg}: {inner}");
                }
            }
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
