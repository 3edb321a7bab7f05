//! Text file formats.
//!
//! All floating-point values are written with 17 significant digits
//! (`{:.16e}`), which round-trips every `f64` bit-exactly. Lines starting
//! with `#` in model, dataset and metrics files are comments; the writers use
//! them to carry seeds and digests.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use crate::baselines::{HybridRamp, RampWeight};
use crate::error::{invalid, ApcdError, Result};
use crate::eval::EvalReport;
use crate::model::{Configuration, GraphTopology, PairwiseModel, VariablePartition};
use crate::rng::{decode_rng, encode_rng};
use crate::sampler::{Chain, ChainPool, KernelParams};
use crate::schedule::ScheduleSpec;
use crate::stats::StatsVector;
use crate::trainer::{Checkpoint, MetricsRecord, TrainConfig, TrainerState};

pub const MODEL_HEADER: &str = "apcd-model v1";
pub const DATA_HEADER: &str = "apcd-data v1";
pub const META_HEADER: &str = "apcd-meta v1";
pub const CHECKPOINT_HEADER: &str = "apcd-checkpoint v1";
pub const EVAL_HEADER: &str = "apcd-eval v1";

/// 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn parse_err<T>(line: usize, message: impl Into<String>) -> Result<T> {
    Err(ApcdError::Parse {
        line,
        message: message.into(),
    })
}

fn parse_num<T: FromStr>(line: usize, field: &str, what: &str) -> Result<T> {
    field
        .parse()
        .or_else(|_| parse_err(line, format!("bad {what} {field:?}")))
}

/// Non-blank, non-comment lines with 1-based line numbers.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

fn comment_lines(text: &str) -> Vec<String> {
    text.lines()
        .filter_map(|l| l.trim().strip_prefix('#'))
        .map(|c| c.trim().to_string())
        .collect()
}

fn expect_header(text: &str, header: &str) -> Result<()> {
    match text.lines().next().map(str::trim) {
        Some(h) if h == header => Ok(()),
        Some(h) => parse_err(1, format!("expected header {header:?}, found {h:?}")),
        None => parse_err(1, format!("empty file, expected header {header:?}")),
    }
}

// ---------------------------------------------------------------------------
// Model files

#[derive(Debug, Clone, PartialEq)]
pub struct ModelFile {
    pub model: PairwiseModel,
    pub partition: VariablePartition,
    pub comments: Vec<String>,
}

fn write_model_body(out: &mut String, model: &PairwiseModel) {
    let topo = model.topology();
    let _ = writeln!(out, "nodes {}", topo.num_nodes());
    for &(i, j) in topo.edges() {
        let _ = writeln!(out, "edge {i} {j}");
    }
    for (i, b) in model.node_bias().iter().enumerate() {
        let _ = writeln!(out, "bias {i} {}", fmt_f64(*b));
    }
    for (&(i, j), w) in topo.edges().iter().zip(model.edge_weight()) {
        let _ = writeln!(out, "weight {i} {j} {}", fmt_f64(*w));
    }
}

/// Serializes a model with its hidden set. `comments` become `# …` lines.
pub fn write_model(model: &PairwiseModel, partition: &VariablePartition, comments: &[String]) -> String {
    let mut out = format!("{MODEL_HEADER}\n");
    for c in comments {
        let _ = writeln!(out, "# {c}");
    }
    write_model_body(&mut out, model);
    for &h in partition.hidden() {
        let _ = writeln!(out, "hidden {h}");
    }
    out
}

/// Parses model lines. Missing biases and weights default to 0.
fn parse_model_lines<'a>(lines: impl Iterator<Item = (usize, &'a str)>) -> Result<(PairwiseModel, Vec<usize>)> {
    let mut nodes: Option<usize> = None;
    let mut edges = Vec::new();
    let mut biases: Vec<(usize, usize, f64)> = Vec::new();
    let mut weights: Vec<(usize, usize, usize, f64)> = Vec::new();
    let mut hidden = Vec::new();
    for (ln, line) in lines {
        let f: Vec<&str> = line.split_whitespace().collect();
        match (f[0], f.len()) {
            ("nodes", 2) => {
                if nodes.is_some() {
                    return parse_err(ln, "duplicate nodes line");
                }
                nodes = Some(parse_num(ln, f[1], "node count")?);
            }
            ("edge", 3) => edges.push((parse_num(ln, f[1], "node index")?, parse_num(ln, f[2], "node index")?)),
            ("bias", 3) => biases.push((ln, parse_num(ln, f[1], "node index")?, parse_num(ln, f[2], "bias")?)),
            ("weight", 4) => weights.push((
                ln,
                parse_num(ln, f[1], "node index")?,
                parse_num(ln, f[2], "node index")?,
                parse_num(ln, f[3], "weight")?,
            )),
            ("hidden", 2) => hidden.push(parse_num(ln, f[1], "node index")?),
            _ => return parse_err(ln, format!("unrecognised model line {line:?}")),
        }
    }
    let Some(n) = nodes else {
        return parse_err(0, "model has no nodes line");
    };
    let topo = GraphTopology::new(n, &edges)?;
    let mut bias = vec![0.0; n];
    let mut seen = vec![false; n];
    for (ln, i, v) in biases {
        if i >= n || seen[i] {
            return parse_err(ln, format!("bias for invalid or repeated node {i}"));
        }
        seen[i] = true;
        bias[i] = v;
    }
    let mut weight = vec![0.0; topo.num_edges()];
    let mut seen = vec![false; topo.num_edges()];
    for (ln, i, j, v) in weights {
        match topo.edge_index(i, j) {
            Some(e) if !seen[e] => {
                seen[e] = true;
                weight[e] = v;
            }
            _ => return parse_err(ln, format!("weight for missing or repeated edge ({i}, {j})")),
        }
    }
    Ok((PairwiseModel::new(topo, bias, weight)?, hidden))
}

pub fn parse_model(text: &str) -> Result<ModelFile> {
    expect_header(text, MODEL_HEADER)?;
    let (model, hidden) = parse_model_lines(content_lines(text).skip(1))?;
    let partition = VariablePartition::from_hidden(model.num_nodes(), &hidden)?;
    Ok(ModelFile {
        model,
        partition,
        comments: comment_lines(text),
    })
}

// ---------------------------------------------------------------------------
// Datasets and metadata

pub fn write_dataset(data: &[Configuration], comments: &[String]) -> String {
    let mut out = format!("{DATA_HEADER}\n");
    for c in comments {
        let _ = writeln!(out, "# {c}");
    }
    for v in data {
        out.push_str(&v.to_bitstring());
        out.push('\n');
    }
    out
}

pub fn parse_dataset(text: &str) -> Result<Vec<Configuration>> {
    expect_header(text, DATA_HEADER)?;
    let data: Vec<Configuration> = content_lines(text)
        .skip(1)
        .map(|(ln, l)| {
            Configuration::parse_bitstring(l).map_err(|e| ApcdError::Parse {
                line: ln,
                message: e.to_string(),
            })
        })
        .collect::<Result<_>>()?;
    if let Some(first) = data.first() {
        if let Some(pos) = data.iter().position(|v| v.len() != first.len()) {
            return invalid(format!("dataset row {} has length {} but row 1 has {}", pos + 1, data[pos].len(), first.len()));
        }
    }
    Ok(data)
}

/// Header line plus ordered `key=value` lines.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct KeyValues {
    entries: Vec<(String, String)>,
}

impl KeyValues {
    pub fn new() -> Self {
        Self::default()
    }

    /// Sets `key`, replacing an earlier value in place.
    pub fn set(&mut self, key: &str, value: impl ToString) {
        let value = value.to_string();
        match self.entries.iter_mut().find(|(k, _)| k == key) {
            Some(e) => e.1 = value,
            None => self.entries.push((key.to_string(), value)),
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn require(&self, key: &str) -> Result<&str> {
        self.get(key)
            .ok_or_else(|| ApcdError::InvalidInput(format!("missing key {key:?}")))
    }

    pub fn get_parsed<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.get(key)
            .map(|v| {
                v.parse()
                    .map_err(|_| ApcdError::InvalidInput(format!("bad value {v:?} for key {key:?}")))
            })
            .transpose()
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }

    pub fn write(&self, header: &str) -> String {
        let mut out = format!("{header}\n");
        for (k, v) in &self.entries {
            let _ = writeln!(out, "{k}={v}");
        }
        out
    }

    /// Parses `key=value` lines (spaces around `=` allowed). When `header`
    /// is given the first line must match it.
    pub fn parse(text: &str, header: Option<&str>) -> Result<Self> {
        if let Some(h) = header {
            expect_header(text, h)?;
        }
        let mut kv = KeyValues::new();
        let skip = usize::from(header.is_some());
        for (ln, line) in content_lines(text).skip(skip) {
            let Some((k, v)) = line.split_once('=') else {
                return parse_err(ln, format!("expected key=value, found {line:?}"));
            };
            let k = k.trim();
            if k.is_empty() {
                return parse_err(ln, "empty key");
            }
            if kv.get(k).is_some() {
                return parse_err(ln, format!("duplicate key {k:?}"));
            }
            kv.set(k, v.trim());
        }
        Ok(kv)
    }
}

// ---------------------------------------------------------------------------
// Checkpoints

fn write_stats_line(out: &mut String, tag: &str, index: Option<usize>, s: &StatsVector) {
    out.push_str(tag);
    if let Some(i) = index {
        let _ = write!(out, " {i}");
    }
    for v in s.iter() {
        out.push(' ');
        out.push_str(&fmt_f64(*v));
    }
    out.push('\n');
}

fn write_chain(out: &mut String, tag: &str, chain: &Chain) {
    let _ = writeln!(out, "{tag} {} {}", chain.state.to_bitstring(), encode_rng(&chain.rng));
}

pub fn write_checkpoint(cp: &Checkpoint) -> String {
    let s = &cp.state;
    let mut out = format!("{CHECKPOINT_HEADER}\n");
    let _ = writeln!(out, "variant {}", cp.variant);
    let _ = writeln!(out, "config_digest {}", cp.config_digest);
    let _ = writeln!(out, "seed {}", cp.seed);
    let _ = writeln!(out, "schedule_a {}", cp.schedule_a);
    let _ = writeln!(out, "schedule_b {}", cp.schedule_b);
    let _ = writeln!(out, "iteration {}", s.t);
    write_model_body(&mut out, &s.model);
    write_stats_line(&mut out, "empirical_mean", None, &s.empirical_mean);
    let _ = writeln!(out, "per_data_means {}", s.per_data_means.len());
    for (n, m) in s.per_data_means.iter().enumerate() {
        write_stats_line(&mut out, "mean", Some(n), m);
    }
    let _ = writeln!(out, "aux_means {}", s.aux_means.len());
    for (n, m) in s.aux_means.iter().enumerate() {
        write_stats_line(&mut out, "aux", Some(n), m);
    }
    let per = s.pool.e_chains.first().map_or(0, Vec::len);
    let _ = writeln!(out, "e_chains {} {per}", s.pool.e_chains.len());
    for chains in &s.pool.e_chains {
        for c in chains {
            write_chain(&mut out, "echain", c);
        }
    }
    let _ = writeln!(out, "m_chains {}", s.pool.m_chains.len());
    for c in &s.pool.m_chains {
        write_chain(&mut out, "mchain", c);
    }
    out.push_str("end\n");
    out
}

/// Sequential reader over the lines of a checkpoint.
struct Cursor<'a> {
    lines: std::iter::Peekable<std::iter::Enumerate<std::str::Lines<'a>>>,
    last: usize,
}

impl<'a> Cursor<'a> {
    fn new(text: &'a str) -> Self {
        Cursor {
            lines: text.lines().enumerate().peekable(),
            last: 0,
        }
    }

    fn next_fields(&mut self, tag: &str) -> Result<Vec<&'a str>> {
        let Some((i, line)) = self.lines.next() else {
            return parse_err(self.last + 1, format!("unexpected end of file, expected {tag:?}"));
        };
        self.last = i + 1;
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.first() != Some(&tag) {
            return parse_err(self.last, format!("expected {tag:?}, found {line:?}"));
        }
        Ok(f[1..].to_vec())
    }

    fn single(&mut self, tag: &str) -> Result<&'a str> {
        let f = self.next_fields(tag)?;
        if f.len() != 1 {
            return parse_err(self.last, format!("{tag} takes one value"));
        }
        Ok(f[0])
    }

    fn parsed<T: FromStr>(&mut self, tag: &str) -> Result<T> {
        let v = self.single(tag)?;
        parse_num(self.last, v, tag)
    }

    fn peek_tag(&mut self) -> Option<&'a str> {
        self.lines.peek().and_then(|(_, l)| l.split_whitespace().next())
    }

    fn stats(&mut self, tag: &str, index: Option<usize>, topo: &GraphTopology) -> Result<StatsVector> {
        let f = self.next_fields(tag)?;
        let values = match index {
            Some(i) => {
                if f.first().map(|s| s.parse::<usize>()) != Some(Ok(i)) {
                    return parse_err(self.last, format!("expected {tag} index {i}"));
                }
                &f[1..]
            }
            None => &f[..],
        };
        let flat = values
            .iter()
            .map(|v| parse_num(self.last, v, "value"))
            .collect::<Result<Vec<f64>>>()?;
        if flat.len() != topo.stats_dim() {
            return parse_err(self.last, format!("expected {} values, found {}", topo.stats_dim(), flat.len()));
        }
        StatsVector::from_flat(&flat, topo.num_nodes())
    }

    fn chain(&mut self, tag: &str, n_nodes: usize) -> Result<Chain> {
        let f = self.next_fields(tag)?;
        if f.len() != 2 {
            return parse_err(self.last, format!("{tag} needs a state and an rng"));
        }
        let state = Configuration::parse_bitstring(f[0])?;
        if state.len() != n_nodes {
            return parse_err(self.last, "chain state has the wrong length");
        }
        Ok(Chain {
            state,
            rng: decode_rng(f[1])?,
        })
    }
}

pub fn parse_checkpoint(text: &str) -> Result<Checkpoint> {
    expect_header(text, CHECKPOINT_HEADER)?;
    let mut c = Cursor::new(text);
    c.lines.next();
    c.last = 1;
    let variant = c.single("variant")?.to_string();
    let config_digest = c.single("config_digest")?.to_string();
    let seed = c.parsed("seed")?;
    let schedule_a = c.single("schedule_a")?.to_string();
    let schedule_b = c.single("schedule_b")?.to_string();
    let t = c.parsed("iteration")?;

    let mut model_lines = Vec::new();
    while let Some(tag) = c.peek_tag() {
        if !matches!(tag, "nodes" | "edge" | "bias" | "weight") {
            break;
        }
        let (i, l) = c.lines.next().expect("peeked");
        c.last = i + 1;
        model_lines.push((i + 1, l.trim()));
    }
    let (model, hidden) = parse_model_lines(model_lines.into_iter())?;
    if !hidden.is_empty() {
        return invalid("checkpoint models carry no hidden set");
    }
    let topo = model.topology().clone();
    let n = topo.num_nodes();

    let empirical_mean = c.stats("empirical_mean", None, &topo)?;
    let count: usize = c.parsed("per_data_means")?;
    let per_data_means = (0..count)
        .map(|i| c.stats("mean", Some(i), &topo))
        .collect::<Result<Vec<_>>>()?;
    let count: usize = c.parsed("aux_means")?;
    let aux_means = (0..count)
        .map(|i| c.stats("aux", Some(i), &topo))
        .collect::<Result<Vec<_>>>()?;
    let f = c.next_fields("e_chains")?;
    if f.len() != 2 {
        return parse_err(c.last, "e_chains needs a datum count and a chain count");
    }
    let (num_data, per): (usize, usize) = (parse_num(c.last, f[0], "count")?, parse_num(c.last, f[1], "count")?);
    let e_chains = (0..num_data)
        .map(|_| (0..per).map(|_| c.chain("echain", n)).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;
    let count: usize = c.parsed("m_chains")?;
    let m_chains = (0..count).map(|_| c.chain("mchain", n)).collect::<Result<Vec<_>>>()?;
    c.next_fields("end")?;
    if c.lines.any(|(_, l)| !l.trim().is_empty()) {
        return parse_err(c.last + 1, "trailing content after end");
    }
    Ok(Checkpoint {
        variant,
        config_digest,
        seed,
        schedule_a,
        schedule_b,
        state: TrainerState {
            t,
            model,
            per_data_means,
            empirical_mean,
            aux_means,
            pool: ChainPool { e_chains, m_chains },
        },
    })
}

// ---------------------------------------------------------------------------
// Metrics

const METRIC_FIELDS: [&str; 6] = ["a", "b", "grad_norm_estimate", "exact_loglik", "exact_grad_norm", "inner_grad_norm"];

fn metric_values(r: &MetricsRecord) -> [Option<f64>; 6] {
    [r.a, r.b, r.grad_norm_estimate, r.exact_loglik, r.exact_grad_norm, r.inner_grad_norm]
}

/// One tab-separated `key=value` line; absent fields are omitted.
pub fn format_metrics_record(r: &MetricsRecord) -> String {
    let mut out = format!(
        "variant={}\titeration={}\ttimestamp={}",
        r.variant,
        r.iteration,
        fmt_f64(r.timestamp)
    );
    for (name, v) in METRIC_FIELDS.iter().zip(metric_values(r)) {
        if let Some(v) = v {
            let _ = write!(out, "\t{name}={}", fmt_f64(v));
        }
    }
    out
}

pub fn parse_metrics_record(line: &str, ln: usize) -> Result<MetricsRecord> {
    let mut fields = BTreeMap::new();
    for part in line.split('\t') {
        let Some((k, v)) = part.split_once('=') else {
            return parse_err(ln, format!("bad field {part:?}"));
        };
        fields.insert(k, v);
    }
    let get = |k: &str| fields.get(k).copied();
    let opt = |k: &str| get(k).map(|v| parse_num::<f64>(ln, v, k)).transpose();
    let Some(variant) = get("variant") else {
        return parse_err(ln, "record has no variant");
    };
    Ok(MetricsRecord {
        variant: variant.to_string(),
        iteration: parse_num(ln, get("iteration").unwrap_or(""), "iteration")?,
        timestamp: opt("timestamp")?.unwrap_or(0.0),
        a: opt("a")?,
        b: opt("b")?,
        grad_norm_estimate: opt("grad_norm_estimate")?,
        exact_loglik: opt("exact_loglik")?,
        exact_grad_norm: opt("exact_grad_norm")?,
        inner_grad_norm: opt("inner_grad_norm")?,
    })
}

/// Records and leading `#` comments of a metrics file.
pub fn parse_metrics(text: &str) -> Result<(Vec<String>, Vec<MetricsRecord>)> {
    let records = content_lines(text)
        .map(|(ln, l)| parse_metrics_record(l, ln))
        .collect::<Result<_>>()?;
    Ok((comment_lines(text), records))
}

// ---------------------------------------------------------------------------
// Training config

/// Keys accepted by [`apply_train_setting`].
pub const TRAIN_KEYS: &[&str] = &[
    "variant",
    "e_ell",
    "e_chains",
    "m_ell",
    "m_chains",
    "schedule_a",
    "schedule_b",
    "a_clock",
    "iterations",
    "batch_size",
    "log_interval",
    "checkpoint_every",
    "seed",
    "strict_schedules",
    "exact_limit",
    "mean_field_iters",
    "hybrid_switch",
    "hybrid_weight",
    "em_max_outer",
    "em_inner_tol",
    "em_step",
    "em_max_inner",
];

/// Applies one setting. Returns `Ok(false)` when the key is not a training
/// key, so callers can handle their own keys.
pub fn apply_train_setting(config: &mut TrainConfig, key: &str, value: &str) -> Result<bool> {
    fn p<T: FromStr>(key: &str, value: &str) -> Result<T> {
        value
            .parse()
            .map_err(|_| ApcdError::InvalidInput(format!("bad value {value:?} for {key}")))
    }
    match key {
        "variant" => config.variant = value.to_string(),
        "e_ell" => config.e_kernel = KernelParams { ell: p(key, value)?, ..config.e_kernel },
        "e_chains" => config.e_kernel = KernelParams { num_chains: p(key, value)?, ..config.e_kernel },
        "m_ell" => config.m_kernel = KernelParams { ell: p(key, value)?, ..config.m_kernel },
        "m_chains" => config.m_kernel = KernelParams { num_chains: p(key, value)?, ..config.m_kernel },
        "schedule_a" => config.schedule_a = value.parse::<ScheduleSpec>()?,
        "schedule_b" => config.schedule_b = value.parse::<ScheduleSpec>()?,
        "a_clock" => config.a_clock = value.parse()?,
        "iterations" => config.iterations = p(key, value)?,
        "batch_size" => config.batch_size = p(key, value)?,
        "log_interval" => config.log_interval = p(key, value)?,
        "checkpoint_every" => config.checkpoint_every = p(key, value)?,
        "seed" => config.seed = p(key, value)?,
        "strict_schedules" => config.strict_schedules = p(key, value)?,
        "exact_limit" => config.exact_limit = p(key, value)?,
        "mean_field_iters" => config.mean_field_iters = p(key, value)?,
        "hybrid_switch" => config.hybrid = HybridRamp { switch_fraction: p(key, value)?, ..config.hybrid },
        "hybrid_weight" => config.hybrid = HybridRamp { weight: value.parse::<RampWeight>()?, ..config.hybrid },
        "em_max_outer" => config.em.max_outer = p(key, value)?,
        "em_inner_tol" => config.em.inner_tol = p(key, value)?,
        "em_step" => config.em.step = p(key, value)?,
        "em_max_inner" => config.em.max_inner = p(key, value)?,
        _ => return Ok(false),
    }
    Ok(true)
}

// ---------------------------------------------------------------------------
// Evaluation reports

pub fn write_eval_report(report: &EvalReport, extra: &KeyValues) -> String {
    let mut kv = extra.clone();
    kv.set("parzen_mean", fmt_f64(report.parzen_mean));
    kv.set("parzen_sem", fmt_f64(report.parzen_sem));
    kv.set("sigma", fmt_f64(report.sigma));
    kv.set("ais_log_z", fmt_f64(report.ais_log_z));
    kv.set("ais_log_weight_variance", fmt_f64(report.ais_weight_var));
    for (key, v) in [
        ("ais_test_loglik", report.ais_test_loglik),
        ("exact_loglik", report.exact_loglik),
        ("exact_grad_norm", report.grad_norm),
    ] {
        if let Some(v) = v {
            kv.set(key, fmt_f64(v));
        }
    }
    kv.write(EVAL_HEADER)
}

/// Parses an eval report, returning the numbers and the full key set.
pub fn parse_eval_report(text: &str) -> Result<(EvalReport, KeyValues)> {
    let kv = KeyValues::parse(text, Some(EVAL_HEADER))?;
    let req = |k: &str| -> Result<f64> { kv.get_parsed(k)?.ok_or_else(|| ApcdError::InvalidInput(format!("eval report lacks {k}"))) };
    let report = EvalReport {
        parzen_mean: req("parzen_mean")?,
        parzen_sem: req("parzen_sem")?,
        sigma: req("sigma")?,
        ais_log_z: req("ais_log_z")?,
        ais_weight_var: req("ais_log_weight_variance")?,
        ais_test_loglik: kv.get_parsed("ais_test_loglik")?,
        exact_loglik: kv.get_parsed("exact_loglik")?,
        grad_norm: kv.get_parsed("exact_grad_norm")?,
    };
    Ok((report, kv))
}

// ---------------------------------------------------------------------------
// Tables

/// Space-aligned table with a header row. Cells are left-aligned in the
/// first column and right-aligned elsewhere.
pub fn render_table(headers: &[String], rows: &[Vec<String>]) -> String {
    let cols = headers.len();
    let mut widths: Vec<usize> = headers.iter().map(|h| h.chars().count()).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let render = |cells: &[String]| -> String {
        let mut line = String::new();
        for (c, w) in widths.iter().enumerate().take(cols) {
            let cell = cells.get(c).map_or("", String::as_str);
            if c > 0 {
                line.push_str("  ");
            }
            let pad = w - cell.chars().count();
            if c == 0 {
                line.push_str(cell);
                line.push_str(&" ".repeat(pad));
            } else {
                line.push_str(&" ".repeat(pad));
                line.push_str(cell);
            }
        }
        line.trim_end().to_string()
    };
    let mut out = render(headers);
    out.push('\n');
    for row in rows {
        out.push_str(&render(row));
        out.push('\n');
    }
    out
}

/// Tab-separated version of a table for plotting tools.
pub fn render_tsv(headers: &[String], rows: &[Vec<String>]) -> String {
    let mut out = headers.join("\t");
    out.push('\n');
    for row in rows {
        out.push_str(&row.join("\t"));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trainer::{ApcdEstimator, Trainer};

    fn sample_model() -> (PairwiseModel, VariablePartition) {
        let t = GraphTopology::new(3, &[(0, 1), (1, 2)]).unwrap();
        let m = PairwiseModel::new(t, vec![0.1, -2.5, 1.0 / 3.0], vec![-0.0, 1e-300]).unwrap();
        (m, VariablePartition::from_hidden(3, &[1]).unwrap())
    }

    #[test]
    fn seventeen_digits() {
        assert_eq!(fmt_f64(0.1), "1.0000000000000001e-1");
        assert_eq!(fmt_f64(1.0 / 3.0).parse::<f64>().unwrap(), 1.0 / 3.0);
    }

    #[test]
    fn model_round_trip() {
        let (m, p) = sample_model();
        let text = write_model(&m, &p, &["seed=4".into()]);
        assert!(text.starts_with("apcd-model v1\n# seed=4\nnodes 3\nedge 0 1\nedge 1 2\nbias 0 "));
        let back = parse_model(&text).unwrap();
        assert_eq!(back.model, m);
        assert_eq!(back.model.edge_weight()[0].to_bits(), (-0.0f64).to_bits());
        assert_eq!(back.partition, p);
        assert_eq!(back.comments, vec!["seed=4"]);
        assert_eq!(write_model(&back.model, &back.partition, &back.comments), text);
    }

    #[test]
    fn model_parse_errors() {
        assert!(parse_model("apcd-model v2\nnodes 1\n").is_err());
        assert!(parse_model("apcd-model v1\nnodes 2\nweight 0 1 1.0\n").is_err());
        assert!(parse_model("apcd-model v1\nnodes 2\nbias 0 1\nbias 0 2\n").is_err());
        assert!(parse_model("apcd-model v1\nnodes 2\nfoo\n").is_err());
        let m = parse_model("apcd-model v1\nnodes 2\nedge 1 0\nweight 0 1 0.5\n").unwrap();
        assert_eq!(m.model.edge_weight(), &[0.5]);
    }

    #[test]
    fn dataset_round_trip() {
        let data = vec![
            Configuration::parse_bitstring("0110").unwrap(),
            Configuration::parse_bitstring("1111").unwrap(),
        ];
        let text = write_dataset(&data, &["seed=1".into()]);
        assert_eq!(text, "apcd-data v1\n# seed=1\n0110\n1111\n");
        assert_eq!(parse_dataset(&text).unwrap(), data);
        assert!(parse_dataset("apcd-data v1\n01\n011\n").is_err());
        assert!(parse_dataset("apcd-data v1\n012\n").is_err());
    }

    #[test]
    fn key_values() {
        let kv = KeyValues::parse("# c\nrows = 3\nname=x y\n", None).unwrap();
        assert_eq!(kv.get("rows"), Some("3"));
        assert_eq!(kv.get("name"), Some("x y"));
        assert!(KeyValues::parse("a=1\na=2\n", None).is_err());
        assert!(KeyValues::parse("novalue\n", None).is_err());
    }

    #[test]
    fn checkpoint_round_trip_is_byte_identical() {
        let (m, p) = sample_model();
        let data = vec![
            Configuration::parse_bitstring("101").unwrap(),
            Configuration::parse_bitstring("000").unwrap(),
        ];
        let config = TrainConfig {
            e_kernel: KernelParams::new(2, 3).unwrap(),
            m_kernel: KernelParams::new(1, 4).unwrap(),
            iterations: 5,
            ..TrainConfig::default()
        };
        let mut tr = Trainer::new(m, &p, &data, config, Box::new(ApcdEstimator)).unwrap();
        tr.step().unwrap();
        tr.step().unwrap();
        let cp = tr.checkpoint();
        let text = write_checkpoint(&cp);
        let back = parse_checkpoint(&text).unwrap();
        assert_eq!(back, cp);
        assert_eq!(write_checkpoint(&back), text);
        assert!(parse_checkpoint(&text.replace("end\n", "")).is_err());
    }

    #[test]
    fn metrics_round_trip() {
        let r = MetricsRecord {
            variant: "apcd".into(),
            iteration: 10,
            timestamp: 0.25,
            a: Some(0.1),
            b: None,
            grad_norm_estimate: Some(3.0),
            exact_loglik: Some(-2.0),
            exact_grad_norm: None,
            inner_grad_norm: None,
        };
        let line = format_metrics_record(&r);
        assert!(!line.contains("b="));
        assert_eq!(parse_metrics_record(&line, 1).unwrap(), r);
        let (comments, recs) = parse_metrics(&format!("# seed=1\n{line}\n")).unwrap();
        assert_eq!(comments, vec!["seed=1"]);
        assert_eq!(recs, vec![r]);
    }

    #[test]
    fn train_settings() {
        let mut c = TrainConfig::default();
        assert!(apply_train_setting(&mut c, "m_chains", "7").unwrap());
        assert!(apply_train_setting(&mut c, "schedule_a", "log:2").unwrap());
        assert!(apply_train_setting(&mut c, "hybrid_weight", "const:0.3").unwrap());
        assert!(!apply_train_setting(&mut c, "rows", "3").unwrap());
        assert!(apply_train_setting(&mut c, "m_ell", "x").is_err());
        assert_eq!(c.m_kernel.num_chains, 7);
        assert_eq!(c.hybrid.weight, RampWeight::Constant(0.3));
        for key in TRAIN_KEYS {
            let mut probe = TrainConfig::default();
            assert!(apply_train_setting(&mut probe, key, "").is_err() || *key == "variant");
        }
    }

    #[test]
    fn eval_report_round_trip() {
        let r = EvalReport {
            parzen_mean: -3.5,
            parzen_sem: 0.1,
            sigma: 0.3,
            ais_log_z: 4.0,
            ais_weight_var: 0.01,
            ais_test_loglik: None,
            exact_loglik: Some(-3.0),
            grad_norm: Some(1e-3),
        };
        let mut extra = KeyValues::new();
        extra.set("seed", 5);
        let text = write_eval_report(&r, &extra);
        let (back, kv) = parse_eval_report(&text).unwrap();
        assert_eq!(back, r);
        assert_eq!(kv.get("seed"), Some("5"));
    }

    #[test]
    fn table_alignment() {
        let t = render_table(
            &["iter".into(), "apcd".into()],
            &[vec!["10".into(), "-1.5".into()], vec!["100".into(), "-12.25".into()]],
        );
        assert_eq!(t, "iter    apcd\n10      -1.5\n100   -12.25\n");
    }
}
