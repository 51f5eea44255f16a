//! `lunet` command line: generate-data, train, eval, predict, gradcheck.
//!
//! Settings come from a flat `key = value` file (`--config`) overridden by
//! flags. The fully resolved settings are written to `<out>/config.ini`,
//! which can be passed back through `--config` to repeat a run.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{
    binary_change_image, load_class_map, read_dataset, render_pseudocolor, sample_dir, save_class_map, save_raster,
    save_rgb, write_dataset, generate_dataset, Sample, SceneSpec,
};
use crate::error::{Error, Result};
use crate::metrics::ConfusionMatrix;
use crate::model::{build_model, load_checkpoint, save_checkpoint, Arch, ArchConfig, ModelGraph};
use crate::recurrent::OutputPeephole;
use crate::tensor::{LossKind, Real, Tensor};
use crate::train::{evaluate, fit_with, gradcheck_model, label_classes, Batch, TrainConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_FAILURE: i32 = 2;

/// Largest relative error `gradcheck` accepts.
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;

#[derive(Parser, Debug)]
#[command(name = "lunet", version, about = "Recurrent UNet change detection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic dataset to --out
    GenerateData(Common),
    /// Train a model; writes model.ckpt and train.ndjson
    Train(Common),
    /// Score a checkpoint (or saved predictions) on a dataset; writes metrics.json
    Eval(Common),
    /// Write per-sample change maps
    Predict(Common),
    /// Finite-difference check of every layer at desk scale
    Gradcheck(Common),
}

#[derive(Args, Debug, Default)]
struct Common {
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    #[arg(long, value_parser = parse_arch)]
    arch: Option<Arch>,
    /// Seeds training, initialization and scene generation
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long, value_enum)]
    precision: Option<Precision>,
}

fn parse_arch(s: &str) -> std::result::Result<Arch, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, ValueEnum)]
pub enum Precision {
    #[default]
    F32,
    F64,
}

impl Precision {
    fn name(self) -> &'static str {
        match self {
            Precision::F32 => "f32",
            Precision::F64 => "f64",
        }
    }
}

/// Everything a run needs, after the config file and flags are merged.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub arch: ArchConfig,
    pub train: TrainConfig,
    pub scene: SceneSpec,
    /// Scenes written by generate-data, or generated in memory when no
    /// `data` directory is given.
    pub samples: usize,
    pub precision: Precision,
    pub data: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    /// Directory of saved predictions for `eval`, laid out like `predict` output.
    pub predictions: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            arch: ArchConfig::default(),
            train: TrainConfig::default(),
            scene: SceneSpec::default(),
            samples: 20,
            precision: Precision::F32,
            data: None,
            checkpoint: None,
            predictions: None,
        }
    }
}

fn bad(key: &str, value: &str, what: &str) -> Error {
    Error::config(key, format!("`{value}` is not {what}"))
}

fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| bad(key, value, "a valid number"))
}

fn boolean(key: &str, value: &str) -> Result<bool> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(bad(key, value, "a boolean")),
    }
}

fn optional(value: &str) -> Option<&str> {
    match value {
        "" | "none" => None,
        v => Some(v),
    }
}

impl RunConfig {
    /// Parses `key = value` lines. `#` and `;` start comments; `[section]`
    /// headers are ignored.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut init_seed_set = false;
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with(';') || line.starts_with('[') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::config(format!("line {}", n + 1), format!("expected key = value, got `{line}`")))?;
            let key = key.trim();
            init_seed_set |= key == "init_seed";
            cfg.set(key, value.trim())?;
        }
        if !init_seed_set {
            cfg.arch.init_seed = cfg.train.seed;
        }
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let (a, t, s) = (&mut self.arch, &mut self.train, &mut self.scene);
        match key {
            "arch" => a.arch = value.parse()?,
            "depth" => a.depth = num(key, value)?,
            "bands" => {
                a.in_bands = num(key, value)?;
                s.bands = a.in_bands;
            }
            "phases" => {
                a.phases = num(key, value)?;
                s.phases = a.phases;
            }
            "base_channels" => a.base_channels = num(key, value)?,
            "kernel_size" => a.kernel_size = num(key, value)?,
            "num_classes" => a.num_classes = num(key, value)?,
            "atrous_rates" => {
                a.atrous_rates = optional(value)
                    .map(|v| v.split(',').map(|r| num(key, r.trim())).collect::<Result<Vec<usize>>>())
                    .transpose()?
            }
            "peephole" => a.peephole = boolean(key, value)?,
            "output_peephole" => {
                a.output_peephole = match value {
                    "previous" => OutputPeephole::Previous,
                    "current" => OutputPeephole::Current,
                    _ => return Err(bad(key, value, "`previous` or `current`")),
                }
            }
            "init_seed" => a.init_seed = num(key, value)?,
            "learning_rate" | "lr" => t.learning_rate = num(key, value)?,
            "beta1" => t.beta1 = num(key, value)?,
            "beta2" => t.beta2 = num(key, value)?,
            "epsilon" => t.epsilon = num(key, value)?,
            "batch_size" => t.batch_size = num(key, value)?,
            "epochs" => t.epochs = num(key, value)?,
            "seed" => t.seed = num(key, value)?,
            "loss" => {
                t.loss = match optional(value) {
                    None => None,
                    Some("sigmoid-bce") => Some(LossKind::SigmoidBce),
                    Some("softmax-ce") => Some(LossKind::SoftmaxCe),
                    Some(_) => return Err(bad(key, value, "sigmoid-bce, softmax-ce or none")),
                }
            }
            "grad_clip" => t.grad_clip = optional(value).map(|v| num(key, v)).transpose()?,
            "validation_fraction" => t.validation_fraction = num(key, value)?,
            "calibration_samples" => t.calibration_samples = num(key, value)?,
            "width" => s.width = num(key, value)?,
            "height" => s.height = num(key, value)?,
            "objects_min" => s.objects_min = num(key, value)?,
            "objects_max" => s.objects_max = num(key, value)?,
            "object_min_size" => s.object_min_size = num(key, value)?,
            "object_max_size" => s.object_max_size = num(key, value)?,
            "initial_presence" => s.initial_presence = num(key, value)?,
            "appear_prob" => s.appear_prob = num(key, value)?,
            "disappear_prob" => s.disappear_prob = num(key, value)?,
            "texture_amplitude" => s.texture_amplitude = num(key, value)?,
            "texture_waves" => s.texture_waves = num(key, value)?,
            "noise_sigma" => s.noise_sigma = num(key, value)?,
            "jitter" => s.jitter = num(key, value)?,
            "data_seed" => s.seed = num(key, value)?,
            "samples" => self.samples = num(key, value)?,
            "precision" => {
                self.precision = match value {
                    "f32" => Precision::F32,
                    "f64" => Precision::F64,
                    _ => return Err(bad(key, value, "f32 or f64")),
                }
            }
            "data" => self.data = optional(value).map(PathBuf::from),
            "checkpoint" => self.checkpoint = optional(value).map(PathBuf::from),
            "predictions" => self.predictions = optional(value).map(PathBuf::from),
            _ => return Err(Error::config(key, "unknown key")),
        }
        Ok(())
    }

    /// Every setting, one `key = value` per line, in a form [`RunConfig::parse`]
    /// reads back to an equal value.
    pub fn to_ini(&self) -> String {
        let (a, t, s) = (&self.arch, &self.train, &self.scene);
        let opt_path = |p: &Option<PathBuf>| p.as_ref().map_or("none".to_string(), |p| p.display().to_string());
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        kv("arch", a.arch.to_string());
        kv("depth", a.depth.to_string());
        kv("bands", a.in_bands.to_string());
        kv("phases", a.phases.to_string());
        kv("base_channels", a.base_channels.to_string());
        kv("kernel_size", a.kernel_size.to_string());
        kv("num_classes", a.num_classes.to_string());
        kv(
            "atrous_rates",
            a.atrous_rates.as_ref().map_or("none".into(), |r| {
                r.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
            }),
        );
        kv("peephole", a.peephole.to_string());
        kv(
            "output_peephole",
            match a.output_peephole {
                OutputPeephole::Previous => "previous",
                OutputPeephole::Current => "current",
            }
            .into(),
        );
        kv("init_seed", a.init_seed.to_string());
        kv("learning_rate", format!("{:?}", t.learning_rate));
        kv("beta1", format!("{:?}", t.beta1));
        kv("beta2", format!("{:?}", t.beta2));
        kv("epsilon", format!("{:?}", t.epsilon));
        kv("batch_size", t.batch_size.to_string());
        kv("epochs", t.epochs.to_string());
        kv("seed", t.seed.to_string());
        kv(
            "loss",
            match t.loss {
                None => "none",
                Some(LossKind::SigmoidBce) => "sigmoid-bce",
                Some(LossKind::SoftmaxCe) => "softmax-ce",
            }
            .into(),
        );
        kv("grad_clip", t.grad_clip.map_or("none".into(), |c| format!("{c:?}")));
        kv("validation_fraction", format!("{:?}", t.validation_fraction));
        kv("calibration_samples", t.calibration_samples.to_string());
        kv("width", s.width.to_string());
        kv("height", s.height.to_string());
        kv("objects_min", s.objects_min.to_string());
        kv("objects_max", s.objects_max.to_string());
        kv("object_min_size", s.object_min_size.to_string());
        kv("object_max_size", s.object_max_size.to_string());
        kv("initial_presence", format!("{:?}", s.initial_presence));
        kv("appear_prob", format!("{:?}", s.appear_prob));
        kv("disappear_prob", format!("{:?}", s.disappear_prob));
        kv("texture_amplitude", format!("{:?}", s.texture_amplitude));
        kv("texture_waves", s.texture_waves.to_string());
        kv("noise_sigma", format!("{:?}", s.noise_sigma));
        kv("jitter", s.jitter.to_string());
        kv("data_seed", s.seed.to_string());
        kv("samples", self.samples.to_string());
        kv("precision", self.precision.name().into());
        kv("data", opt_path(&self.data));
        kv("checkpoint", opt_path(&self.checkpoint));
        kv("predictions", opt_path(&self.predictions));
        out
    }

    fn validate(&self) -> Result<()> {
        self.arch.validate()?;
        self.train.validate()?;
        self.scene.validate()?;
        if self.samples == 0 {
            return Err(Error::config("samples", "must be at least 1"));
        }
        Ok(())
    }
}

/// Usage problems exit with 1, everything after resolution with 2.
enum Failure {
    Usage(String),
    Runtime(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Runtime(e)
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Runtime(e.into())
    }
}

fn resolve(common: &Common) -> std::result::Result<RunConfig, Failure> {
    let usage = |e: Error| Failure::Usage(e.to_string());
    let mut cfg = match &common.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Failure::Usage(format!("cannot read config {}: {e}", path.display())))?;
            RunConfig::parse(&text).map_err(usage)?
        }
        None => RunConfig::default(),
    };
    if let Some(arch) = common.arch {
        cfg.arch.arch = arch;
    }
    if let Some(seed) = common.seed {
        cfg.train.seed = seed;
        cfg.arch.init_seed = seed;
        cfg.scene.seed = seed;
    }
    if let Some(e) = common.epochs {
        cfg.train.epochs = e;
    }
    if let Some(lr) = common.lr {
        cfg.train.learning_rate = lr;
    }
    if let Some(p) = common.precision {
        cfg.precision = p;
    }
    cfg.validate().map_err(usage)?;
    Ok(cfg)
}

fn out_dir(common: &Common) -> std::result::Result<&Path, Failure> {
    common
        .out
        .as_deref()
        .ok_or_else(|| Failure::Usage("--out DIR is required for this command".into()))
}

fn prepare_out(out: &Path, cfg: &RunConfig) -> Result<()> {
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let path = out.join("config.ini");
    fs::write(&path, cfg.to_ini()).map_err(|e| Error::io(path, e))
}

fn write_file(path: PathBuf, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(&path, contents).map_err(|e| Error::io(path, e))
}

fn dataset(cfg: &RunConfig) -> Result<Vec<Sample>> {
    match &cfg.data {
        Some(dir) => read_dataset(dir),
        None => generate_dataset(&cfg.scene, cfg.samples),
    }
}

fn require<'a>(p: &'a Option<PathBuf>, key: &str) -> std::result::Result<&'a Path, Failure> {
    p.as_deref()
        .ok_or_else(|| Failure::Usage(format!("`{key}` must be set in the config for this command")))
}

fn cmd_generate(common: &Common) -> std::result::Result<(), Failure> {
    let cfg = resolve(common)?;
    let out = out_dir(common)?;
    let samples = generate_dataset(&cfg.scene, cfg.samples)?;
    write_dataset(out, &samples, Some(&cfg.scene))?;
    prepare_out(out, &cfg)?;
    println!("wrote {} samples to {}", samples.len(), out.display());
    Ok(())
}

fn train_as<T: Real>(cfg: &RunConfig, out: &Path) -> Result<()> {
    let samples = dataset(cfg)?;
    let mut model: ModelGraph<T> = match &cfg.checkpoint {
        Some(p) => load_checkpoint(p)?,
        None => build_model(&cfg.arch)?,
    };
    let log_path = out.join("train.ndjson");
    let mut log_text = String::new();
    let log = fit_with(&mut model, &samples, &cfg.train, |s| {
        log_text.push_str(&serde_json::to_string(s).unwrap_or_default());
        log_text.push('\n');
    })?;
    write_file(log_path, log_text)?;
    write_file(out.join("epochs.json"), serde_json::to_string_pretty(&log.epochs)?)?;
    save_checkpoint(&model, out.join("model.ckpt"))?;
    if let Some(last) = log.epochs.last() {
        println!("epoch {} mean loss {:.6}", last.epoch + 1, last.mean_loss);
        if let Some(v) = &last.validation {
            println!("validation accuracy {:.4} kappa {:.4}", v.accuracy, v.kappa);
        }
    }
    println!("checkpoint {}", out.join("model.ckpt").display());
    Ok(())
}

fn cmd_train(common: &Common) -> std::result::Result<(), Failure> {
    let cfg = resolve(common)?;
    let out = out_dir(common)?;
    prepare_out(out, &cfg)?;
    match cfg.precision {
        Precision::F32 => train_as::<f32>(&cfg, out)?,
        Precision::F64 => train_as::<f64>(&cfg, out)?,
    }
    Ok(())
}

fn prediction_path(root: &Path, index: usize) -> PathBuf {
    sample_dir(root, index).join("prediction.png")
}

fn eval_as<T: Real>(cfg: &RunConfig, samples: &[Sample]) -> Result<ConfusionMatrix> {
    let path = cfg
        .checkpoint
        .as_deref()
        .ok_or_else(|| Error::config("checkpoint", "required when `predictions` is not set"))?;
    let model: ModelGraph<T> = load_checkpoint(path)?;
    let refs: Vec<&Sample> = samples.iter().collect();
    evaluate(&model, &refs, cfg.train.batch_size)
}

fn cmd_eval(common: &Common) -> std::result::Result<(), Failure> {
    let cfg = resolve(common)?;
    let out = out_dir(common)?;
    let data = require(&cfg.data, "data")?;
    if cfg.predictions.is_none() && cfg.checkpoint.is_none() {
        return Err(Failure::Usage("eval needs `checkpoint` or `predictions` in the config".into()));
    }
    prepare_out(out, &cfg)?;
    let samples = read_dataset(data)?;
    let cm = match &cfg.predictions {
        Some(dir) => {
            let classes = if cfg.arch.num_classes == 1 { 2 } else { cfg.arch.num_classes };
            let mut cm = ConfusionMatrix::new(classes);
            for (i, s) in samples.iter().enumerate() {
                cm.accumulate(&load_class_map(prediction_path(dir, i))?, &s.label)?;
            }
            cm
        }
        None => match cfg.precision {
            Precision::F32 => eval_as::<f32>(&cfg, &samples)?,
            Precision::F64 => eval_as::<f64>(&cfg, &samples)?,
        },
    };
    let report = cm.report()?;
    write_file(out.join("metrics.json"), serde_json::to_string_pretty(&report)?)?;
    print!("{}", report.table(&cfg.arch.arch.to_string()));
    Ok(())
}

fn predict_as<T: Real>(cfg: &RunConfig, samples: &[Sample], out: &Path) -> Result<()> {
    let model: ModelGraph<T> = load_checkpoint(require_path(&cfg.checkpoint)?)?;
    let classes = label_classes(&model);
    for (i, s) in samples.iter().enumerate() {
        let batch = Batch::<T>::from_samples(&[s])?;
        let map = model.predict(&batch.images)?;
        let dir = sample_dir(out, i);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        for t in 0..s.phases() {
            save_raster(&s.images.outer(t)?, dir.join(format!("phase_{}.png", t + 1)))?;
        }
        save_class_map(&map, dir.join("prediction.png"))?;
        let rendered = if classes == 2 {
            binary_change_image(&map)?
        } else {
            render_pseudocolor(&map, classes)?
        };
        save_rgb(&rendered, dir.join("change.png"))?;
    }
    println!("wrote {} change maps to {}", samples.len(), out.display());
    Ok(())
}

fn require_path(p: &Option<PathBuf>) -> Result<&Path> {
    p.as_deref().ok_or_else(|| Error::config("checkpoint", "must be set"))
}

fn cmd_predict(common: &Common) -> std::result::Result<(), Failure> {
    let cfg = resolve(common)?;
    let out = out_dir(common)?;
    require(&cfg.checkpoint, "checkpoint")?;
    prepare_out(out, &cfg)?;
    let samples = dataset(&cfg)?;
    match cfg.precision {
        Precision::F32 => predict_as::<f32>(&cfg, &samples, out)?,
        Precision::F64 => predict_as::<f64>(&cfg, &samples, out)?,
    }
    Ok(())
}

/// Desk-scale variant of `arch` used by `gradcheck`: depth 2, four base
/// channels, one 8×8 sample.
pub fn gradcheck_config(arch: &ArchConfig) -> ArchConfig {
    let mut c = arch.clone();
    c.depth = 2;
    c.base_channels = c.base_channels.min(4);
    c.atrous_rates = c.atrous_rates.map(|r| r.into_iter().take(2).collect());
    c
}

/// Random 8×8 single-sample input for [`gradcheck_config`] models.
pub fn gradcheck_input(config: &ArchConfig, seed: u64) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn([config.phases, 1, config.in_bands, 8, 8], |_| rng.gen_range(0.0..1.0))
}

fn cmd_gradcheck(common: &Common) -> std::result::Result<(), Failure> {
    let cfg = resolve(common)?;
    let arch = gradcheck_config(&cfg.arch);
    let mut model = build_model::<f64>(&arch)?;
    let input = gradcheck_input(&arch, cfg.train.seed);
    let rows = gradcheck_model(&mut model, &input, 1e-5, 8, cfg.train.seed)?;
    let mut table = format!("{:<24}{:>8}{:>11}{:>14}  result\n", "layer", "probes", "discarded", "max rel err");
    let mut ok = true;
    for r in &rows {
        let pass = r.probes > 0 && r.max_rel_error <= GRADCHECK_TOLERANCE;
        ok &= pass;
        let _ = writeln!(
            table,
            "{:<24}{:>8}{:>11}{:>14.3e}  {}",
            r.layer,
            r.probes,
            r.discarded,
            r.max_rel_error,
            if pass { "pass" } else { "FAIL" }
        );
    }
    print!("{table}");
    if let Some(out) = &common.out {
        prepare_out(out, &cfg)?;
        write_file(out.join("gradcheck.json"), serde_json::to_string_pretty(&rows)?)?;
    }
    if ok {
        Ok(())
    } else {
        Err(Failure::Runtime(Error::InvalidArgument(format!(
            "gradient check failed: some layer exceeds {GRADCHECK_TOLERANCE:e}"
        ))))
    }
}

/// Parses `argv` (program name first), runs the command and returns the
/// process exit code.
pub fn run_command<I, A>(argv: I) -> i32
where
    I: IntoIterator<Item = A>,
    A: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let result = match &cli.command {
        Command::GenerateData(c) => cmd_generate(c),
        Command::Train(c) => cmd_train(c),
        Command::Eval(c) => cmd_eval(c),
        Command::Predict(c) => cmd_predict(c),
        Command::Gradcheck(c) => cmd_gradcheck(c),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}\n");
            let mut cmd = <Cli as clap::CommandFactory>::command();
            eprintln!("{}", cmd.render_usage());
            EXIT_USAGE
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            EXIT_FAILURE
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ini_round_trip() {
        let mut c = RunConfig::default();
        c.arch.arch = Arch::AlUnet;
        c.arch.atrous_rates = Some(vec![1, 2, 5]);
        c.train.grad_clip = Some(5.0);
        c.train.learning_rate = 3e-4;
        c.data = Some("some/dir".into());
        assert_eq!(RunConfig::parse(&c.to_ini()).unwrap(), c);
    }

    #[test]
    fn parse_comments_and_errors() {
        let c = RunConfig::parse("# c\n[model]\narch = alunet\n; x\nlr=0.01\nseed = 4\n").unwrap();
        assert_eq!(c.arch.arch, Arch::AlUnet);
        assert_eq!(c.train.learning_rate, 0.01);
        assert_eq!(c.arch.init_seed, 4);
        assert!(RunConfig::parse("bogus = 1").unwrap_err().to_string().contains("bogus"));
        assert!(RunConfig::parse("depth three").is_err());
        assert!(RunConfig::parse("depth = x").is_err());
    }

    #[test]
    fn usage_errors_exit_one() {
        assert_eq!(run_command(["lunet"]), EXIT_USAGE);
        assert_eq!(run_command(["lunet", "frobnicate"]), EXIT_USAGE);
        assert_eq!(run_command(["lunet", "train"]), EXIT_USAGE);
        assert_eq!(run_command(["lunet", "train", "--config", "/nonexistent/x.ini", "--out", "/tmp/x"]), EXIT_USAGE);
    }
}
