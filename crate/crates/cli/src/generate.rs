//! `apcd generate`: random grid model plus train and test datasets.

use std::path::Path;

use apcd::exact::Enumerator;
use apcd::formats::{fmt_f64, write_dataset, write_model, KeyValues, META_HEADER};
use apcd::rng::splitmix64;
use apcd::synth::{generate_samples, random_grid_model, sample_exact, select_hidden, GridSpec, DEFAULT_SWEEPS_PER_SAMPLE};
use apcd::trainer::{dataset_digest, short_digest};

use crate::error::{create_dir, write_file, CliError};
use crate::settings::Settings;
use crate::ConfigArgs;

pub const MODEL_FILE: &str = "truth.model";
pub const TRAIN_FILE: &str = "train.data";
pub const TEST_FILE: &str = "test.data";
pub const META_FILE: &str = "metadata.txt";

/// Seeds for the independent pieces of one generated experiment.
struct Seeds {
    model: u64,
    hidden: u64,
    train: u64,
    test: u64,
}

impl Seeds {
    fn derive(master: u64) -> Self {
        let d = |k: u64| splitmix64(master ^ splitmix64(k));
        Seeds {
            model: d(1),
            hidden: d(2),
            train: d(3),
            test: d(4),
        }
    }
}

pub fn run(out: &Path, args: &ConfigArgs) -> Result<(), CliError> {
    let s = Settings::load(args)?;
    let defaults = GridSpec::default();
    let spec = GridSpec {
        rows: s.get_or("rows", defaults.rows)?,
        cols: s.get_or("cols", defaults.cols)?,
        bias_low: s.get_or("bias_low", defaults.bias_low)?,
        bias_high: s.get_or("bias_high", defaults.bias_high)?,
        weight_std: s.get_or("weight_std", defaults.weight_std)?,
        hidden_fraction: s.get_or("hidden_fraction", defaults.hidden_fraction)?,
    };
    let train_count: usize = s.get_or("train_count", 2000)?;
    let test_count: usize = s.get_or("test_count", 2000)?;
    let sweeps: usize = s.get_or("sweeps", DEFAULT_SWEEPS_PER_SAMPLE)?;
    let sampler: String = s.get_or("sampler", "gibbs".to_string())?;
    let master: u64 = s.get_or("seed", 0)?;
    let experiment: String = s.get_or("experiment", "default".to_string())?;
    s.finish()?;
    spec.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    if train_count == 0 {
        return Err(CliError::Usage("train_count must be positive".into()));
    }

    let seeds = Seeds::derive(master);
    let model = random_grid_model(&spec, seeds.model)?;
    let part = select_hidden(model.topology(), spec.hidden_fraction, seeds.hidden)?;
    let (train, test) = match sampler.as_str() {
        "gibbs" => (
            generate_samples(&model, train_count, sweeps, seeds.train),
            generate_samples(&model, test_count, sweeps, seeds.test),
        ),
        "exact" => {
            let en = Enumerator::default();
            (
                sample_exact(&model, train_count, seeds.train, &en)?,
                sample_exact(&model, test_count, seeds.test, &en)?,
            )
        }
        other => return Err(CliError::Usage(format!("sampler must be gibbs or exact, got {other:?}"))),
    };

    let mut meta = KeyValues::new();
    meta.set("experiment", &experiment);
    meta.set("seed", master);
    meta.set("model_seed", seeds.model);
    meta.set("hidden_seed", seeds.hidden);
    meta.set("train_seed", seeds.train);
    meta.set("test_seed", seeds.test);
    meta.set("rows", spec.rows);
    meta.set("cols", spec.cols);
    meta.set("bias_low", fmt_f64(spec.bias_low));
    meta.set("bias_high", fmt_f64(spec.bias_high));
    meta.set("weight_std", fmt_f64(spec.weight_std));
    meta.set("weight_variance", fmt_f64(spec.weight_std * spec.weight_std));
    meta.set("hidden_fraction", fmt_f64(spec.hidden_fraction));
    meta.set("hidden_count", part.hidden().len());
    meta.set("sampler", &sampler);
    meta.set("sweeps_per_sample", sweeps);
    meta.set("train_count", train.len());
    meta.set("test_count", test.len());
    meta.set("train_digest", dataset_digest(&train));
    meta.set("test_digest", dataset_digest(&test));
    let config_digest = short_digest(meta.write(META_HEADER).as_bytes());
    meta.set("config_digest", &config_digest);

    let tag = |kind: &str| vec![format!("experiment={experiment} kind={kind} seed={master} config_digest={config_digest}")];
    create_dir(out)?;
    write_file(&out.join(MODEL_FILE), &write_model(&model, &part, &tag("truth")))?;
    write_file(&out.join(TRAIN_FILE), &write_dataset(&train, &tag("train")))?;
    write_file(&out.join(TEST_FILE), &write_dataset(&test, &tag("test")))?;
    write_file(&out.join(META_FILE), &meta.write(META_HEADER))?;
    println!(
        "wrote {} nodes, {} hidden, {} train / {} test samples to {}",
        model.num_nodes(),
        part.hidden().len(),
        train.len(),
        test.len(),
        out.display()
    );
    Ok(())
}
