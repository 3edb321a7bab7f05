//! `apcd eval`: Parzen, AIS and (small models) exact evaluation.

use std::path::PathBuf;

use clap::Args;

use apcd::eval::{
    ais_log_partition, ais_test_loglik, default_sigma_grid, parzen_evaluate, stationarity_report_with, visible_vectors,
    AisPlan, EvalReport,
};
use apcd::exact::Enumerator;
use apcd::formats::{fmt_f64, parse_dataset, parse_model, write_eval_report, KeyValues};
use apcd::synth::{generate_samples, split_tail, DEFAULT_SWEEPS_PER_SAMPLE};
use apcd::trainer::{dataset_digest, short_digest};
use apcd::Configuration;

use crate::error::{read_file, write_file, CliError};
use crate::settings::{parse_float_list, Settings};
use crate::ConfigArgs;

#[derive(Args)]
pub struct EvalArgs {
    /// Model to evaluate; its hidden set decides which coordinates are scored.
    #[arg(long)]
    pub model: PathBuf,
    /// Test dataset.
    #[arg(long)]
    pub test: PathBuf,
    /// Bandwidth selection set. Without it the last `validation_fraction`
    /// of the test file is held out for selection.
    #[arg(long)]
    pub validation: Option<PathBuf>,
    /// Training dataset, used for the stationarity report and `--reference`.
    #[arg(long)]
    pub train: Option<PathBuf>,
    /// Scores the training data itself as the Parzen sample set instead of
    /// model samples.
    #[arg(long)]
    pub reference: bool,
    /// Report file.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub config: ConfigArgs,
}

fn load_data(path: &PathBuf) -> Result<Vec<Configuration>, CliError> {
    Ok(parse_dataset(&read_file(path)?)?)
}

pub fn run(args: &EvalArgs) -> Result<(), CliError> {
    let s = Settings::load(&args.config)?;
    let samples: usize = s.get_or("samples", 2000)?;
    let sweeps: usize = s.get_or("sweeps", DEFAULT_SWEEPS_PER_SAMPLE)?;
    let seed: u64 = s.get_or("seed", 0)?;
    let sigma_grid = match s.raw("sigma_grid") {
        Some(text) => parse_float_list(text)?,
        None => default_sigma_grid(),
    };
    let validation_fraction: f64 = s.get_or("validation_fraction", 0.2)?;
    let ais_steps: usize = s.get_or("ais_steps", 1000)?;
    let ais_chains: usize = s.get_or("ais_chains", 100)?;
    let ais_sweeps: usize = s.get_or("ais_sweeps", 1)?;
    let ladder: String = s.get_or("ais_ladder", "uniform".to_string())?;
    let beta_min: f64 = s.get_or("ais_beta_min", 1e-3)?;
    let ais_test: bool = s.get_or("ais_test", false)?;
    let exact_limit: usize = s.get_or("exact_limit", apcd::exact::DEFAULT_ENUMERATION_LIMIT)?;
    s.finish()?;

    let model_text = read_file(&args.model)?;
    let mf = parse_model(&model_text)?;
    let (model, part) = (&mf.model, &mf.partition);
    let test_all = load_data(&args.test)?;
    let (test, validation) = match &args.validation {
        Some(p) => (test_all, load_data(p)?),
        None => {
            let (a, b) = split_tail(&test_all, validation_fraction);
            if a.is_empty() || b.is_empty() {
                return Err(CliError::Usage("test set too small to hold out a validation split".into()));
            }
            (a, b)
        }
    };
    let train = args.train.as_ref().map(load_data).transpose()?;
    let plan = match ladder.as_str() {
        "uniform" => AisPlan::uniform(ais_steps, ais_chains, ais_sweeps),
        "geometric" => AisPlan::geometric(ais_steps, beta_min, ais_chains, ais_sweeps),
        other => return Err(CliError::Usage(format!("ais_ladder must be uniform or geometric, got {other:?}"))),
    }
    .map_err(|e| CliError::Usage(e.to_string()))?;

    let parzen_samples = if args.reference {
        let Some(train) = &train else {
            return Err(CliError::Usage("--reference needs --train".into()));
        };
        visible_vectors(part, train)
    } else {
        visible_vectors(part, &generate_samples(model, samples, sweeps, seed))
    };
    let parzen = parzen_evaluate(
        parzen_samples,
        &visible_vectors(part, &validation),
        &visible_vectors(part, &test),
        &sigma_grid,
    )?;
    let log_z = ais_log_partition(model, &plan, seed);
    let ais_ll = if ais_test {
        Some(ais_test_loglik(model, part, &test, &plan, seed)?.mean())
    } else {
        None
    };
    let enumerator = Enumerator::with_limit(exact_limit);
    let (exact_loglik, grad_norm) = if enumerator.fits(model.num_nodes()) {
        let ll = enumerator.marginal_loglik(model, part, &test)?;
        let stat_data = train.as_deref().unwrap_or(&test);
        let st = stationarity_report_with(model, part, stat_data, &enumerator)?;
        (Some(ll), Some(st.grad_norm))
    } else {
        (None, None)
    };
    let report = EvalReport {
        parzen_mean: parzen.mean,
        parzen_sem: parzen.sem,
        sigma: parzen.sigma,
        ais_log_z: log_z.log_z,
        ais_weight_var: log_z.log_weight_variance,
        ais_test_loglik: ais_ll,
        exact_loglik,
        grad_norm,
    };

    let mut extra = KeyValues::new();
    let mut settings_text = String::new();
    for (k, v) in s.entries() {
        settings_text.push_str(&format!("{k}={v}\n"));
    }
    extra.set("seed", seed);
    extra.set("config_digest", short_digest(settings_text.as_bytes()));
    extra.set("model_digest", short_digest(model_text.as_bytes()));
    extra.set("test_digest", dataset_digest(&test));
    extra.set("validation_digest", dataset_digest(&validation));
    extra.set("parzen_source", if args.reference { "train" } else { "model" });
    extra.set("parzen_samples", if args.reference { train.as_ref().map_or(0, Vec::len) } else { samples });
    extra.set("ais_ladder", &ladder);
    extra.set("ais_steps", ais_steps);
    extra.set("ais_chains", ais_chains);
    extra.set("ais_high_variance", log_z.high_variance);
    if let Some(c) = mf.comments.iter().find(|c| c.contains("config_digest=")) {
        extra.set("model_provenance", c);
    }
    write_file(&args.out, &write_eval_report(&report, &extra))?;
    println!(
        "parzen {} ± {} (sigma {}), AIS log Z {}",
        fmt_f64(report.parzen_mean),
        fmt_f64(report.parzen_sem),
        report.sigma,
        fmt_f64(report.ais_log_z)
    );
    if log_z.high_variance {
        eprintln!("apcd: warning: AIS log-weight variance {} is high", log_z.log_weight_variance);
    }
    Ok(())
}
