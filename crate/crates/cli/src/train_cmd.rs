//! `apcd train`: runs a registered algorithm and writes its artifacts.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::Args;

use apcd::formats::{
    apply_train_setting, format_metrics_record, parse_checkpoint, parse_dataset, parse_metrics, parse_model,
    write_checkpoint, write_model, KeyValues, META_HEADER,
};
use apcd::registry::{AlgorithmRegistry, TrainProblem};
use apcd::trainer::{dataset_digest, Checkpoint, MetricsRecord, TrainConfig, TrainObserver};
use apcd::synth::random_parameters;
use apcd::PairwiseModel;

use crate::error::{create_dir, read_file, write_file, CliError};
use crate::settings::Settings;
use crate::ConfigArgs;

pub const FINAL_MODEL_FILE: &str = "model.txt";
pub const METRICS_FILE: &str = "metrics.txt";
pub const CHECKPOINT_FILE: &str = "checkpoint.txt";
pub const RUN_META_FILE: &str = "run.meta";

#[derive(Args)]
pub struct TrainArgs {
    /// Model file giving the graph and the hidden set. Training starts from
    /// small random parameters (`init=random`, scale `init_scale`), from zero
    /// (`init=zero`) or from the file's parameters (`init=model`).
    #[arg(long)]
    pub model: PathBuf,
    /// Training dataset.
    #[arg(long)]
    pub data: PathBuf,
    /// Run directory for the final model, metrics, checkpoint and metadata.
    #[arg(long)]
    pub out: PathBuf,
    /// Continues from a checkpoint written by the same config.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    #[command(flatten)]
    pub config: ConfigArgs,
}

struct FileObserver {
    metrics: BufWriter<File>,
    metrics_path: PathBuf,
    checkpoint_path: PathBuf,
    /// Also keeps every checkpoint as `checkpoint-<t>.txt`.
    keep_checkpoints: bool,
}

impl FileObserver {
    fn io(&self, e: std::io::Error) -> apcd::ApcdError {
        apcd::ApcdError::Io(std::io::Error::new(e.kind(), format!("{}: {e}", self.metrics_path.display())))
    }
}

impl TrainObserver for FileObserver {
    fn on_record(&mut self, record: &MetricsRecord) -> apcd::Result<()> {
        writeln!(self.metrics, "{}", format_metrics_record(record)).map_err(|e| self.io(e))?;
        self.metrics.flush().map_err(|e| self.io(e))
    }

    fn on_checkpoint(&mut self, checkpoint: &Checkpoint) -> apcd::Result<()> {
        let text = write_checkpoint(checkpoint);
        let fail = |e: CliError| apcd::ApcdError::Internal(e.to_string());
        if self.keep_checkpoints {
            let numbered = self
                .checkpoint_path
                .with_file_name(format!("checkpoint-{}.txt", checkpoint.state.t));
            write_file(&numbered, &text).map_err(fail)?;
        }
        write_file(&self.checkpoint_path, &text).map_err(fail)
    }
}

fn build_config(s: &Settings, num_data: usize) -> Result<TrainConfig, CliError> {
    let mut config = TrainConfig::default();
    for (key, value) in s.entries() {
        let known = apply_train_setting(&mut config, key, value).map_err(|e| CliError::Usage(e.to_string()))?;
        if known {
            s.mark_used(key);
        }
    }
    if let Some(epochs) = s.get::<usize>("epochs")? {
        if s.entries().iter().any(|(k, _)| k == "iterations") {
            return Err(CliError::Usage("set either epochs or iterations, not both".into()));
        }
        config.iterations = epochs * config.iterations_per_epoch(num_data);
    }
    Ok(config)
}

/// Keeps the metrics lines written up to the checkpoint and drops the rest.
fn truncate_metrics(path: &Path, through_iteration: usize) -> Result<String, CliError> {
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(String::new()),
        Err(e) => return Err(CliError::io(path, e)),
    };
    let (_, records) = parse_metrics(&text)?;
    let mut kept: Vec<&str> = text.lines().filter(|l| l.trim_start().starts_with('#')).collect();
    let lines: Vec<&str> = text
        .lines()
        .filter(|l| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
        .collect();
    kept.extend(
        lines
            .iter()
            .zip(&records)
            .filter(|(_, r)| r.iteration <= through_iteration)
            .map(|(l, _)| *l),
    );
    Ok(kept.iter().map(|l| format!("{l}\n")).collect())
}

pub fn run(args: &TrainArgs) -> Result<(), CliError> {
    let s = Settings::load(&args.config)?;
    let model_file = parse_model(&read_file(&args.model)?)?;
    let data = parse_dataset(&read_file(&args.data)?)?;
    let config = build_config(&s, data.len())?;
    let init: String = s.get_or("init", "random".to_string())?;
    let init_scale: f64 = s.get_or("init_scale", 0.1)?;
    let experiment: String = s.get_or("experiment", "default".to_string())?;
    let keep_checkpoints: bool = s.get_or("keep_checkpoints", false)?;
    s.finish()?;

    let registry = AlgorithmRegistry::with_builtins();
    let algorithm = registry
        .get(&config.variant)
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let model0 = match init.as_str() {
        "zero" => PairwiseModel::zeros(model_file.model.topology().clone()),
        "random" => random_parameters(model_file.model.topology().clone(), init_scale, config.seed)
            .map_err(|e| CliError::Usage(e.to_string()))?,
        "model" => model_file.model.clone(),
        other => return Err(CliError::Usage(format!("init must be zero, random or model, got {other:?}"))),
    };
    let mut config = config;
    config.variant = algorithm.name().to_string();
    let digest = config.digest();
    let data_digest = dataset_digest(&data);

    create_dir(&args.out)?;
    let metrics_path = args.out.join(METRICS_FILE);
    let resume = match &args.resume {
        Some(path) => {
            if !algorithm.supports_resume() {
                return Err(CliError::Usage(format!("{} runs cannot be resumed", algorithm.name())));
            }
            let cp = parse_checkpoint(&read_file(path)?)?;
            let kept = truncate_metrics(&metrics_path, cp.state.t)?;
            write_file(&metrics_path, &kept)?;
            Some(cp)
        }
        None => {
            let header = format!(
                "# apcd-metrics v1 experiment={experiment} variant={} seed={} config_digest={digest} dataset_digest={data_digest}\n",
                config.variant, config.seed
            );
            write_file(&metrics_path, &header)?;
            None
        }
    };
    let metrics = std::fs::OpenOptions::new()
        .append(true)
        .open(&metrics_path)
        .map_err(|e| CliError::io(&metrics_path, e))?;
    let mut observer = FileObserver {
        metrics: BufWriter::new(metrics),
        metrics_path: metrics_path.clone(),
        checkpoint_path: args.out.join(CHECKPOINT_FILE),
        keep_checkpoints,
    };

    let problem = TrainProblem {
        model0,
        part: &model_file.partition,
        data: &data,
    };
    let outcome = algorithm.train(problem, &config, &mut observer, resume)?;
    if let Some(w) = &outcome.schedule_warning {
        eprintln!("apcd: warning: schedule pair fails the convergence conditions: {w}");
    }

    let comments = vec![format!(
        "experiment={experiment} variant={} seed={} config_digest={digest} dataset_digest={data_digest}",
        config.variant, config.seed
    )];
    write_file(
        &args.out.join(FINAL_MODEL_FILE),
        &write_model(&outcome.model, &model_file.partition, &comments),
    )?;
    let mut meta = KeyValues::new();
    meta.set("experiment", &experiment);
    meta.set("variant", &config.variant);
    meta.set("seed", config.seed);
    meta.set("config_digest", &digest);
    meta.set("dataset_digest", &data_digest);
    meta.set("iterations", config.iterations);
    meta.set("records", outcome.trace.len());
    if let Some(w) = &outcome.schedule_warning {
        meta.set("schedule_warning", w);
    }
    for line in config.canonical_text().lines() {
        if let Some((k, v)) = line.split_once('=') {
            meta.set(&format!("config.{k}"), v);
        }
    }
    write_file(&args.out.join(RUN_META_FILE), &meta.write(META_HEADER))?;
    if let Some(last) = outcome.trace.last() {
        let ll = last.exact_loglik.map_or(String::new(), |v| format!(", exact loglik {v:.6}"));
        let g = last
            .exact_grad_norm
            .map_or(String::new(), |v| format!(", exact gradient norm {v:.3e}"));
        println!("{}: {} iterations{ll}{g}", config.variant, last.iteration);
    }
    Ok(())
}
