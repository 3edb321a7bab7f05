//! `apcd report`: aligned comparison of finished runs.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use clap::Args;

use apcd::formats::{fmt_f64, parse_eval_report, parse_metrics, render_table, render_tsv, KeyValues, META_HEADER};
use apcd::eval::EvalReport;
use apcd::trainer::MetricsRecord;

use crate::error::{read_file, write_file, CliError};
use crate::train_cmd::{METRICS_FILE, RUN_META_FILE};

pub const EVAL_FILE: &str = "eval.txt";

#[derive(Args)]
pub struct ReportArgs {
    /// Run directories written by `apcd train`.
    #[arg(required = true)]
    pub runs: Vec<PathBuf>,
    /// Text report; printed to stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Tab-separated trace table for plotting.
    #[arg(long)]
    pub tsv: Option<PathBuf>,
    /// Metric to tabulate. Defaults to `exact_loglik` when every record has
    /// it, otherwise `grad_norm_estimate`.
    #[arg(long)]
    pub metric: Option<String>,
}

struct Run {
    label: String,
    meta: KeyValues,
    records: Vec<MetricsRecord>,
    eval: Option<EvalReport>,
}

fn metric(r: &MetricsRecord, name: &str) -> Result<Option<f64>, CliError> {
    Ok(match name {
        "a" => r.a,
        "b" => r.b,
        "grad_norm_estimate" => r.grad_norm_estimate,
        "exact_loglik" => r.exact_loglik,
        "exact_grad_norm" => r.exact_grad_norm,
        "inner_grad_norm" => r.inner_grad_norm,
        other => return Err(CliError::Usage(format!("unknown metric {other:?}"))),
    })
}

fn load_run(dir: &Path) -> Result<Run, CliError> {
    let meta = KeyValues::parse(&read_file(&dir.join(RUN_META_FILE))?, Some(META_HEADER))?;
    let (_, records) = parse_metrics(&read_file(&dir.join(METRICS_FILE))?)?;
    let eval_path = dir.join(EVAL_FILE);
    let eval = if eval_path.exists() {
        Some(parse_eval_report(&read_file(&eval_path)?)?.0)
    } else {
        None
    };
    let label = format!("{}:{}", meta.get("variant").unwrap_or("?"), meta.get("seed").unwrap_or("?"));
    Ok(Run {
        label,
        meta,
        records,
        eval,
    })
}

/// All runs must share one value of `key`.
fn require_same(runs: &[Run], key: &str) -> Result<(), CliError> {
    let values: BTreeSet<&str> = runs.iter().map(|r| r.meta.get(key).unwrap_or("")).collect();
    if values.len() > 1 {
        let list: Vec<&str> = values.into_iter().collect();
        return Err(CliError::Validation(format!("runs disagree on {key}: {}", list.join(", "))));
    }
    Ok(())
}

pub fn run(args: &ReportArgs) -> Result<(), CliError> {
    let mut runs = args.runs.iter().map(|d| load_run(d)).collect::<Result<Vec<_>, _>>()?;
    require_same(&runs, "dataset_digest")?;
    require_same(&runs, "experiment")?;
    let mut seen = std::collections::BTreeMap::<String, usize>::new();
    for r in &mut runs {
        let n = seen.entry(r.label.clone()).or_insert(0);
        *n += 1;
        if *n > 1 {
            r.label = format!("{}#{n}", r.label);
        }
    }

    let metric_name = match &args.metric {
        Some(m) => m.clone(),
        None if runs.iter().flat_map(|r| &r.records).all(|r| r.exact_loglik.is_some()) => "exact_loglik".into(),
        None => "grad_norm_estimate".into(),
    };
    let iterations: BTreeSet<usize> = runs.iter().flat_map(|r| r.records.iter().map(|x| x.iteration)).collect();
    let mut headers = vec!["iteration".to_string()];
    headers.extend(runs.iter().map(|r| r.label.clone()));
    let mut rows = Vec::new();
    for &it in &iterations {
        let mut row = vec![it.to_string()];
        for r in &runs {
            let cell = match r.records.iter().find(|x| x.iteration == it) {
                Some(rec) => metric(rec, &metric_name)?.map_or("-".into(), fmt_f64),
                None => "-".into(),
            };
            row.push(cell);
        }
        rows.push(row);
    }

    let summary_headers: Vec<String> = ["run", "variant", "seed", "iterations", "final", "parzen_mean", "parzen_sem", "sigma"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let mut summary = Vec::new();
    for r in &runs {
        let last = r.records.last();
        let final_value = match last {
            Some(rec) => metric(rec, &metric_name)?.map_or("-".into(), fmt_f64),
            None => "-".into(),
        };
        let (pm, ps, sg) = match &r.eval {
            Some(e) => (fmt_f64(e.parzen_mean), fmt_f64(e.parzen_sem), fmt_f64(e.sigma)),
            None => ("-".into(), "-".into(), "-".into()),
        };
        summary.push(vec![
            r.label.clone(),
            r.meta.get("variant").unwrap_or("?").to_string(),
            r.meta.get("seed").unwrap_or("?").to_string(),
            last.map_or("0".into(), |x| x.iteration.to_string()),
            final_value,
            pm,
            ps,
            sg,
        ]);
    }

    let mut text = format!(
        "# experiment={} dataset_digest={} metric={metric_name}\n",
        runs[0].meta.get("experiment").unwrap_or(""),
        runs[0].meta.get("dataset_digest").unwrap_or("")
    );
    text.push_str(&render_table(&headers, &rows));
    text.push('\n');
    text.push_str(&render_table(&summary_headers, &summary));
    match &args.out {
        Some(p) => write_file(p, &text)?,
        None => print!("{text}"),
    }
    if let Some(p) = &args.tsv {
        write_file(p, &render_tsv(&headers, &rows))?;
    }
    Ok(())
}
