//! The persistent-chain E/M training loop.
//!
//! Each iteration `t` runs an E step that refreshes the per-data empirical
//! means `μ̂^n` of the current batch and re-averages them into `μ̂`, then an
//! M step that advances the free chains and moves `θ` along
//! `μ̂ − (1/M) Σ_m φ(x̂^m)` with step `b(t)`.
//!
//! How the E step obtains its per-data means is delegated to an
//! [`EStepEstimator`]. [`ApcdEstimator`] is the sampled moving average; the
//! mean-field and hybrid estimators live in [`crate::baselines`].

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use sha2::{Digest, Sha256};

use crate::baselines::HybridRamp;
use crate::error::{invalid, ApcdError, Result};
use crate::exact::Enumerator;
use crate::model::{Configuration, PairwiseModel, VariablePartition};
use crate::sampler::{ChainPool, KernelParams};
use crate::schedule::{validate_schedule_pair, ScheduleSpec, ScheduleVerdict};
use crate::stats::{average_stats, StatsVector};

/// Abort threshold on `max |θ|`.
pub const DIVERGENCE_BOUND: f64 = 1e6;

#[derive(Debug, Clone, PartialEq)]
pub struct ExactEmConfig {
    pub max_outer: usize,
    pub inner_tol: f64,
    pub step: f64,
    pub max_inner: usize,
}

impl Default for ExactEmConfig {
    fn default() -> Self {
        ExactEmConfig {
            max_outer: 500,
            inner_tol: 1e-8,
            step: 1.0,
            max_inner: 200_000,
        }
    }
}

/// Counter fed to a step-size schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepClock {
    Iteration,
    /// Completed epochs. With rotating mini-batches this is the number of
    /// earlier updates of each datum in the batch.
    Epoch,
}

impl fmt::Display for StepClock {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StepClock::Iteration => "iteration",
            StepClock::Epoch => "epoch",
        })
    }
}

impl FromStr for StepClock {
    type Err = ApcdError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "iteration" => Ok(StepClock::Iteration),
            "epoch" => Ok(StepClock::Epoch),
            _ => invalid(format!("step clock must be iteration or epoch, got {s:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub variant: String,
    /// Clamped chains per datum and sweeps per E step.
    pub e_kernel: KernelParams,
    /// Free chains and sweeps per M step.
    pub m_kernel: KernelParams,
    pub schedule_a: ScheduleSpec,
    pub schedule_b: ScheduleSpec,
    /// What `t` in `a(t)` counts.
    pub a_clock: StepClock,
    pub iterations: usize,
    /// Data per iteration; 0 means the full dataset.
    pub batch_size: usize,
    /// Iterations between metric records; 0 means ten epochs.
    pub log_interval: usize,
    /// Iterations between checkpoints; 0 disables them.
    pub checkpoint_every: usize,
    pub seed: u64,
    /// Refuse schedule pairs that fail the two-time-scale conditions when the
    /// algorithm requires them.
    pub strict_schedules: bool,
    /// Exact metrics are recorded when the model has at most this many nodes.
    pub exact_limit: usize,
    pub mean_field_iters: usize,
    pub hybrid: HybridRamp,
    pub em: ExactEmConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            variant: "apcd".to_string(),
            e_kernel: KernelParams { ell: 100, num_chains: 1 },
            m_kernel: KernelParams { ell: 10, num_chains: 100 },
            schedule_a: ScheduleSpec::PowerLaw { c: 1.0, p: 2.0 / 3.0 },
            schedule_b: ScheduleSpec::PowerLaw { c: 1.0, p: 1.0 },
            a_clock: StepClock::Iteration,
            iterations: 1000,
            batch_size: 0,
            log_interval: 0,
            checkpoint_every: 0,
            seed: 0,
            strict_schedules: true,
            exact_limit: 16,
            mean_field_iters: 30,
            hybrid: HybridRamp::default(),
            em: ExactEmConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn iterations_per_epoch(&self, num_data: usize) -> usize {
        if self.batch_size == 0 || self.batch_size >= num_data {
            1
        } else {
            num_data.div_ceil(self.batch_size)
        }
    }

    pub fn effective_log_interval(&self, num_data: usize) -> usize {
        if self.log_interval > 0 {
            self.log_interval
        } else {
            10 * self.iterations_per_epoch(num_data)
        }
    }

    /// Schedules with the epoch length filled in.
    pub fn resolved_schedules(&self, num_data: usize) -> (ScheduleSpec, ScheduleSpec) {
        let ipe = self.iterations_per_epoch(num_data);
        let ipe_a = match self.a_clock {
            StepClock::Iteration => ipe,
            StepClock::Epoch => 1,
        };
        (
            self.schedule_a.with_iters_per_epoch(ipe_a),
            self.schedule_b.with_iters_per_epoch(ipe),
        )
    }

    pub fn validate(&self, num_data: usize) -> Result<()> {
        self.e_kernel.validate()?;
        self.m_kernel.validate()?;
        if self.batch_size > num_data {
            return invalid(format!(
                "batch size {} exceeds the dataset size {num_data}",
                self.batch_size
            ));
        }
        if !(0.0..=1.0).contains(&self.hybrid.switch_fraction) {
            return invalid("hybrid switch fraction must lie in [0, 1]");
        }
        Ok(())
    }

    /// Sorted `key=value` lines that identify the run.
    pub fn canonical_text(&self) -> String {
        let mut entries = [
            ("variant", self.variant.clone()),
            ("e_ell", self.e_kernel.ell.to_string()),
            ("e_chains", self.e_kernel.num_chains.to_string()),
            ("m_ell", self.m_kernel.ell.to_string()),
            ("m_chains", self.m_kernel.num_chains.to_string()),
            ("schedule_a", self.schedule_a.to_string()),
            ("schedule_b", self.schedule_b.to_string()),
            ("a_clock", self.a_clock.to_string()),
            ("iterations", self.iterations.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("seed", self.seed.to_string()),
            ("mean_field_iters", self.mean_field_iters.to_string()),
            ("hybrid_switch", self.hybrid.switch_fraction.to_string()),
            ("hybrid_weight", self.hybrid.weight.to_string()),
            ("em_max_outer", self.em.max_outer.to_string()),
            ("em_inner_tol", self.em.inner_tol.to_string()),
            ("em_step", self.em.step.to_string()),
        ];
        entries.sort();
        entries.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    pub fn digest(&self) -> String {
        short_digest(self.canonical_text().as_bytes())
    }
}

/// First 16 hex digits of SHA-256.
pub fn short_digest(bytes: &[u8]) -> String {
    let full = Sha256::digest(bytes);
    hex::encode(&full[..8])
}

pub fn dataset_digest(data: &[Configuration]) -> String {
    let mut text = String::new();
    for v in data {
        text.push_str(&v.to_bitstring());
        text.push('\n');
    }
    short_digest(text.as_bytes())
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainerState {
    /// Completed iterations.
    pub t: usize,
    pub model: PairwiseModel,
    /// `μ̂^n`, the means fed to the global average.
    pub per_data_means: Vec<StatsVector>,
    /// `μ̂ = (1/N) Σ_n μ̂^n`.
    pub empirical_mean: StatsVector,
    /// Sampled moving averages kept alongside the fed means by estimators
    /// that fuse two E-step estimates. Empty otherwise.
    pub aux_means: Vec<StatsVector>,
    pub pool: ChainPool,
}

/// Convex update `(1 − a)·current + a·fresh`; exact at `a = 0` and `a = 1`.
pub fn moving_average(current: &mut StatsVector, fresh: &StatsVector, a: f64) {
    let keep = 1.0 - a;
    for (c, f) in current.iter_mut().zip(fresh.iter()) {
        *c = keep * *c + a * f;
    }
}

fn check_step(name: &str, value: f64) -> Result<()> {
    if value.is_finite() && value >= 0.0 {
        Ok(())
    } else {
        Err(ApcdError::Internal(format!("step size {name} = {value} is not a non-negative number")))
    }
}

/// Sampled E step for the data in `batch`.
///
/// Advances each datum's clamped chains `ell` sweeps, moves `μ̂^n` toward the
/// fresh chain average with step `a_t`, then recomputes `μ̂` from all `N`
/// per-data means.
pub fn e_step(
    state: &mut TrainerState,
    part: &VariablePartition,
    data: &[Configuration],
    kernel: KernelParams,
    a_t: f64,
    batch: &[usize],
) -> Result<()> {
    check_step("a", a_t)?;
    if state.per_data_means.len() != data.len() {
        return invalid("state holds means for a different number of data");
    }
    state.pool.advance_e(&state.model, part, data, kernel.ell, batch)?;
    let topo = state.model.topology();
    for &n in batch {
        let fresh = state.pool.e_sample_mean(topo, n);
        moving_average(&mut state.per_data_means[n], &fresh, a_t);
    }
    state.empirical_mean = average_stats(&state.per_data_means)?;
    Ok(())
}

/// M step: advances the free chains and applies
/// `θ ← θ + b_t (μ̂ − (1/M) Σ_m φ(x̂^m))`. Returns the gradient estimate.
pub fn m_step(state: &mut TrainerState, kernel: KernelParams, b_t: f64) -> Result<StatsVector> {
    check_step("b", b_t)?;
    state.pool.advance_m(&state.model, kernel.ell);
    let model_mean = state.pool.m_sample_mean(state.model.topology());
    let direction = state.empirical_mean.sub(&model_mean);
    apply_update(state, &direction, b_t)?;
    Ok(direction)
}

/// `θ ← θ + b_t · direction` with the divergence guard.
pub fn apply_update(state: &mut TrainerState, direction: &StatsVector, b_t: f64) -> Result<()> {
    if b_t != 0.0 {
        state.model.add_scaled(b_t, direction);
    }
    let max = state.model.max_abs_param();
    if !max.is_finite() || max > DIVERGENCE_BOUND {
        return Err(ApcdError::Divergence {
            iteration: state.t,
            reason: format!("max |theta| = {max}"),
        });
    }
    Ok(())
}

/// Everything an estimator may read during one E step.
pub struct StepContext<'a> {
    pub part: &'a VariablePartition,
    pub data: &'a [Configuration],
    pub config: &'a TrainConfig,
    pub t: usize,
    pub a_t: f64,
}

/// Strategy for producing the per-data empirical means.
pub trait EStepEstimator: Send + Sync {
    fn name(&self) -> &'static str;

    /// Clamped chains to allocate per datum.
    fn e_chains_per_datum(&self, config: &TrainConfig) -> usize;

    /// Fills `per_data_means` (and `aux_means` if used) for a fresh state.
    fn initialize(&self, ctx: &StepContext, state: &mut TrainerState) -> Result<()>;

    /// Updates the means of `batch` and re-averages `empirical_mean`.
    fn update(&self, ctx: &StepContext, state: &mut TrainerState, batch: &[usize]) -> Result<()>;
}

/// Sampled moving-average E step.
#[derive(Debug, Clone, Copy, Default)]
pub struct ApcdEstimator;

impl EStepEstimator for ApcdEstimator {
    fn name(&self) -> &'static str {
        "apcd"
    }

    fn e_chains_per_datum(&self, config: &TrainConfig) -> usize {
        config.e_kernel.num_chains
    }

    fn initialize(&self, _ctx: &StepContext, state: &mut TrainerState) -> Result<()> {
        let topo = state.model.topology();
        state.per_data_means = (0..state.pool.num_data())
            .map(|n| state.pool.e_sample_mean(topo, n))
            .collect();
        state.empirical_mean = average_stats(&state.per_data_means)?;
        Ok(())
    }

    fn update(&self, ctx: &StepContext, state: &mut TrainerState, batch: &[usize]) -> Result<()> {
        e_step(state, ctx.part, ctx.data, ctx.config.e_kernel, ctx.a_t, batch)
    }
}

/// One named-field metrics record.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRecord {
    pub variant: String,
    pub iteration: usize,
    /// Seconds since the run (or resume) started. Not part of the
    /// deterministic trace.
    pub timestamp: f64,
    pub a: Option<f64>,
    pub b: Option<f64>,
    pub grad_norm_estimate: Option<f64>,
    pub exact_loglik: Option<f64>,
    pub exact_grad_norm: Option<f64>,
    pub inner_grad_norm: Option<f64>,
}

impl MetricsRecord {
    /// Bitwise equality of every field except the wall-clock timestamp.
    pub fn same_values(&self, other: &MetricsRecord) -> bool {
        fn eq(a: Option<f64>, b: Option<f64>) -> bool {
            a.map(f64::to_bits) == b.map(f64::to_bits)
        }
        self.variant == other.variant
            && self.iteration == other.iteration
            && eq(self.a, other.a)
            && eq(self.b, other.b)
            && eq(self.grad_norm_estimate, other.grad_norm_estimate)
            && eq(self.exact_loglik, other.exact_loglik)
            && eq(self.exact_grad_norm, other.exact_grad_norm)
            && eq(self.inner_grad_norm, other.inner_grad_norm)
    }
}

/// Compares two traces with [`MetricsRecord::same_values`].
pub fn same_trace(a: &[MetricsRecord], b: &[MetricsRecord]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.same_values(y))
}

/// Saved training state. Resuming from it continues the exact trajectory of
/// the uninterrupted run.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub variant: String,
    pub config_digest: String,
    pub seed: u64,
    pub schedule_a: String,
    pub schedule_b: String,
    pub state: TrainerState,
}

pub trait TrainObserver {
    fn on_record(&mut self, _record: &MetricsRecord) -> Result<()> {
        Ok(())
    }

    fn on_checkpoint(&mut self, _checkpoint: &Checkpoint) -> Result<()> {
        Ok(())
    }
}

pub struct NullObserver;

impl TrainObserver for NullObserver {}

/// Collects checkpoints in memory.
#[derive(Default)]
pub struct CheckpointCollector {
    pub checkpoints: Vec<Checkpoint>,
}

impl TrainObserver for CheckpointCollector {
    fn on_checkpoint(&mut self, checkpoint: &Checkpoint) -> Result<()> {
        self.checkpoints.push(checkpoint.clone());
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepInfo {
    pub iteration: usize,
    pub a_t: f64,
    pub b_t: f64,
    pub grad_norm_estimate: f64,
}

/// Checks the schedule pair against the two-time-scale conditions.
///
/// Returns `Err` when the pair is invalid and `strict` is set, otherwise
/// the failure reason (if any) as a warning.
pub fn check_schedules(config: &TrainConfig, strict: bool) -> Result<Option<String>> {
    match validate_schedule_pair(&config.schedule_a, &config.schedule_b) {
        ScheduleVerdict::Invalid(reason) if strict => Err(ApcdError::Schedule(reason)),
        ScheduleVerdict::Invalid(reason) => Ok(Some(reason)),
        _ => Ok(None),
    }
}

/// Persistent-chain trainer over a borrowed dataset.
pub struct Trainer<'a> {
    part: &'a VariablePartition,
    data: &'a [Configuration],
    config: TrainConfig,
    schedule_a: ScheduleSpec,
    schedule_b: ScheduleSpec,
    estimator: Box<dyn EStepEstimator>,
    state: TrainerState,
    exact: Enumerator,
}

impl<'a> Trainer<'a> {
    pub fn new(
        model0: PairwiseModel,
        part: &'a VariablePartition,
        data: &'a [Configuration],
        config: TrainConfig,
        estimator: Box<dyn EStepEstimator>,
    ) -> Result<Self> {
        Self::check_inputs(&model0, part, data, &config)?;
        let pool = ChainPool::new(
            config.seed,
            model0.topology(),
            part,
            data,
            estimator.e_chains_per_datum(&config),
            config.m_kernel.num_chains,
        )?;
        let empirical_mean = model0.topology().zero_stats();
        let state = TrainerState {
            t: 0,
            model: model0,
            per_data_means: Vec::new(),
            empirical_mean,
            aux_means: Vec::new(),
            pool,
        };
        let mut trainer = Self::assemble(part, data, config, estimator, state);
        let ctx = StepContext {
            part: trainer.part,
            data: trainer.data,
            config: &trainer.config,
            t: 0,
            a_t: trainer.schedule_a.value(trainer.a_index(0)),
        };
        trainer.estimator.initialize(&ctx, &mut trainer.state)?;
        Ok(trainer)
    }

    /// Continues from a checkpoint written by a run with the same config.
    pub fn resume(
        checkpoint: Checkpoint,
        part: &'a VariablePartition,
        data: &'a [Configuration],
        config: TrainConfig,
        estimator: Box<dyn EStepEstimator>,
    ) -> Result<Self> {
        Self::check_inputs(&checkpoint.state.model, part, data, &config)?;
        if checkpoint.config_digest != config.digest() {
            return invalid(format!(
                "checkpoint config digest {} does not match the current config {}",
                checkpoint.config_digest,
                config.digest()
            ));
        }
        if checkpoint.variant != estimator.name() {
            return invalid(format!(
                "checkpoint was written by {:?}, not {:?}",
                checkpoint.variant,
                estimator.name()
            ));
        }
        let state = checkpoint.state;
        if state.per_data_means.len() != data.len() || state.pool.num_data() != data.len() {
            return invalid("checkpoint was written for a dataset of a different size");
        }
        Ok(Self::assemble(part, data, config, estimator, state))
    }

    fn check_inputs(
        model: &PairwiseModel,
        part: &VariablePartition,
        data: &[Configuration],
        config: &TrainConfig,
    ) -> Result<()> {
        if data.is_empty() {
            return invalid("training data is empty");
        }
        part.check_for(model.topology())?;
        data.iter().try_for_each(|v| v.check_for(model.topology()))?;
        config.validate(data.len())
    }

    fn assemble(
        part: &'a VariablePartition,
        data: &'a [Configuration],
        config: TrainConfig,
        estimator: Box<dyn EStepEstimator>,
        state: TrainerState,
    ) -> Self {
        let (schedule_a, schedule_b) = config.resolved_schedules(data.len());
        let exact = Enumerator::with_limit(config.exact_limit);
        Trainer {
            part,
            data,
            config,
            schedule_a,
            schedule_b,
            estimator,
            state,
            exact,
        }
    }

    pub fn state(&self) -> &TrainerState {
        &self.state
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn model(&self) -> &PairwiseModel {
        &self.state.model
    }

    pub fn into_model(self) -> PairwiseModel {
        self.state.model
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            variant: self.estimator.name().to_string(),
            config_digest: self.config.digest(),
            seed: self.config.seed,
            schedule_a: self.config.schedule_a.to_string(),
            schedule_b: self.config.schedule_b.to_string(),
            state: self.state.clone(),
        }
    }

    fn a_index(&self, t: usize) -> usize {
        match self.config.a_clock {
            StepClock::Iteration => t,
            StepClock::Epoch => t / self.config.iterations_per_epoch(self.data.len()),
        }
    }

    /// Data indices updated at iteration `t`: a contiguous window that
    /// rotates through the dataset.
    pub fn batch_at(&self, t: usize) -> Vec<usize> {
        let n = self.data.len();
        let b = self.config.batch_size;
        if b == 0 || b >= n {
            return (0..n).collect();
        }
        let start = (t * b) % n;
        (0..b).map(|k| (start + k) % n).collect()
    }

    /// Runs one E step and one M step.
    pub fn step(&mut self) -> Result<StepInfo> {
        let t = self.state.t;
        let a_t = self.schedule_a.value(self.a_index(t));
        let b_t = self.schedule_b.value(t);
        let batch = self.batch_at(t);
        let ctx = StepContext {
            part: self.part,
            data: self.data,
            config: &self.config,
            t,
            a_t,
        };
        self.estimator.update(&ctx, &mut self.state, &batch)?;
        let direction = m_step(&mut self.state, self.config.m_kernel, b_t)?;
        self.state.t += 1;
        Ok(StepInfo {
            iteration: self.state.t,
            a_t,
            b_t,
            grad_norm_estimate: direction.norm(),
        })
    }

    fn record(&self, info: &StepInfo, started: Instant) -> Result<MetricsRecord> {
        let (exact_loglik, exact_grad_norm) = if self.exact.fits(self.state.model.num_nodes()) {
            let ll = self.exact.marginal_loglik(&self.state.model, self.part, self.data)?;
            let g = self.exact.gradient_mmle(&self.state.model, self.part, self.data)?;
            (Some(ll), Some(g.norm()))
        } else {
            (None, None)
        };
        Ok(MetricsRecord {
            variant: self.estimator.name().to_string(),
            iteration: info.iteration,
            timestamp: started.elapsed().as_secs_f64(),
            a: Some(info.a_t),
            b: Some(info.b_t),
            grad_norm_estimate: Some(info.grad_norm_estimate),
            exact_loglik,
            exact_grad_norm,
            inner_grad_norm: None,
        })
    }

    /// Runs until `config.iterations` iterations are complete, emitting
    /// records every log interval (and after the last iteration) and
    /// checkpoints every `checkpoint_every` iterations.
    pub fn run(&mut self, observer: &mut dyn TrainObserver) -> Result<Vec<MetricsRecord>> {
        let started = Instant::now();
        let interval = self.config.effective_log_interval(self.data.len());
        let every = self.config.checkpoint_every;
        let mut trace = Vec::new();
        while self.state.t < self.config.iterations {
            let info = self.step()?;
            let t = self.state.t;
            if t % interval == 0 || t == self.config.iterations {
                let record = self.record(&info, started)?;
                observer.on_record(&record)?;
                trace.push(record);
            }
            if every > 0 && (t % every == 0 || t == self.config.iterations) {
                observer.on_checkpoint(&self.checkpoint())?;
            }
        }
        Ok(trace)
    }
}

/// APCD training: sampled E step, persistent-chain M step.
pub fn train(
    model0: PairwiseModel,
    part: &VariablePartition,
    data: &[Configuration],
    config: &TrainConfig,
) -> Result<(PairwiseModel, Vec<MetricsRecord>)> {
    let mut config = config.clone();
    config.variant = "apcd".into();
    check_schedules(&config, config.strict_schedules)?;
    let mut trainer = Trainer::new(model0, part, data, config, Box::new(ApcdEstimator))?;
    let trace = trainer.run(&mut NullObserver)?;
    Ok((trainer.into_model(), trace))
}
