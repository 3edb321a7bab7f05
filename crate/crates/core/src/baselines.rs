//! Baseline and hybrid training methods.
//!
//! * Mean-field PCD: the E step uses the naive mean-field fixed point of the
//!   clamped model instead of clamped chains; the M step is unchanged.
//! * Hybrid APCD: both E-step estimates are maintained and fused with a
//!   weight that ramps from mean field toward the sampled estimate.
//! * Exact EM: enumeration-based E step and a gradient-ascent M step, used as
//!   an oracle on small graphs.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{invalid, ApcdError, Result};
use crate::exact::Enumerator;
use crate::model::{Configuration, GraphTopology, PairwiseModel, VariablePartition};
use crate::stats::{average_stats, logistic, StatsVector};
use crate::trainer::{
    check_schedules, moving_average, EStepEstimator, ExactEmConfig, MetricsRecord, NullObserver, StepContext,
    TrainConfig, Trainer, TrainerState,
};

/// Per-datum mean-field marginals of the hidden nodes, in
/// `part.hidden()` order.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanFieldState {
    pub q: Vec<f64>,
}

/// Sequential naive mean-field updates `q_i ← σ(θ_i + Σ_j θ_ij m_j)` over the
/// hidden nodes in ascending order, starting from `q = 0.5`. `m_j` is the
/// clamped value for visible neighbours and the current `q_j` otherwise.
pub fn mean_field_posterior(
    model: &PairwiseModel,
    part: &VariablePartition,
    v: &Configuration,
    iters: usize,
) -> MeanFieldState {
    let m = mean_field_marginals(model, part, v, iters);
    MeanFieldState {
        q: part.hidden().iter().map(|&i| m[i]).collect(),
    }
}

/// Full-length marginal vector: visible entries are `v`, hidden ones `q`.
fn mean_field_marginals(model: &PairwiseModel, part: &VariablePartition, v: &Configuration, iters: usize) -> Vec<f64> {
    let mut m: Vec<f64> = (0..model.num_nodes())
        .map(|i| if part.is_hidden(i) { 0.5 } else { v.get(i) as f64 })
        .collect();
    let topo = model.topology();
    for _ in 0..iters {
        for &i in part.hidden() {
            let mut field = model.node_bias()[i];
            for &(j, e) in topo.neighbors(i) {
                field += model.edge_weight()[e] * m[j];
            }
            m[i] = logistic(field);
        }
    }
    m
}

/// Expected sufficient statistics under the factorized distribution.
pub fn mf_stats(topology: &GraphTopology, part: &VariablePartition, v: &Configuration, q: &MeanFieldState) -> StatsVector {
    let mut m: Vec<f64> = (0..topology.num_nodes()).map(|i| v.get(i) as f64).collect();
    for (&i, &qi) in part.hidden().iter().zip(&q.q) {
        m[i] = qi;
    }
    marginals_to_stats(topology, &m)
}

fn marginals_to_stats(topology: &GraphTopology, m: &[f64]) -> StatsVector {
    let edge = topology.edges().iter().map(|&(i, j)| m[i] * m[j]).collect();
    StatsVector::new(m.to_vec(), edge)
}

fn mean_field_stats(model: &PairwiseModel, part: &VariablePartition, v: &Configuration, iters: usize) -> StatsVector {
    marginals_to_stats(model.topology(), &mean_field_marginals(model, part, v, iters))
}

fn mean_field_batch(
    model: &PairwiseModel,
    part: &VariablePartition,
    data: &[Configuration],
    batch: &[usize],
    iters: usize,
) -> Vec<StatsVector> {
    batch
        .par_iter()
        .map(|&n| mean_field_stats(model, part, &data[n], iters))
        .collect()
}

/// Mean-field E step: per-data means are assigned directly.
#[derive(Debug, Clone, Copy, Default)]
pub struct MfpcdEstimator;

impl EStepEstimator for MfpcdEstimator {
    fn name(&self) -> &'static str {
        "mfpcd"
    }

    fn e_chains_per_datum(&self, _config: &TrainConfig) -> usize {
        0
    }

    fn initialize(&self, ctx: &StepContext, state: &mut TrainerState) -> Result<()> {
        let all: Vec<usize> = (0..ctx.data.len()).collect();
        state.per_data_means = mean_field_batch(&state.model, ctx.part, ctx.data, &all, ctx.config.mean_field_iters);
        state.empirical_mean = average_stats(&state.per_data_means)?;
        Ok(())
    }

    fn update(&self, ctx: &StepContext, state: &mut TrainerState, batch: &[usize]) -> Result<()> {
        let fresh = mean_field_batch(&state.model, ctx.part, ctx.data, batch, ctx.config.mean_field_iters);
        for (&n, s) in batch.iter().zip(fresh) {
            state.per_data_means[n] = s;
        }
        state.empirical_mean = average_stats(&state.per_data_means)?;
        Ok(())
    }
}

/// Fusion weight after the switch point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RampWeight {
    /// Rises linearly from 0 to 1 over the post-switch iterations.
    Linear,
    Constant(f64),
}

impl fmt::Display for RampWeight {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RampWeight::Linear => write!(f, "linear"),
            RampWeight::Constant(c) => write!(f, "const:{c}"),
        }
    }
}

impl FromStr for RampWeight {
    type Err = ApcdError;

    fn from_str(s: &str) -> Result<Self> {
        if s == "linear" {
            return Ok(RampWeight::Linear);
        }
        let value = s
            .strip_prefix("const:")
            .and_then(|v| v.parse::<f64>().ok())
            .ok_or_else(|| ApcdError::InvalidInput(format!("bad ramp weight {s:?}")))?;
        if !(0.0..=1.0).contains(&value) {
            return invalid(format!("ramp weight {value} outside [0, 1]"));
        }
        Ok(RampWeight::Constant(value))
    }
}

/// Schedule for the hybrid fusion weight `λ(t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HybridRamp {
    pub switch_fraction: f64,
    pub weight: RampWeight,
}

impl Default for HybridRamp {
    fn default() -> Self {
        HybridRamp {
            switch_fraction: 0.5,
            weight: RampWeight::Linear,
        }
    }
}

impl HybridRamp {
    pub fn switch_iteration(&self, total: usize) -> usize {
        (self.switch_fraction * total as f64).floor() as usize
    }

    /// `λ(t)`: zero before the switch; afterwards the configured weight.
    pub fn lambda(&self, t: usize, total: usize) -> f64 {
        let switch = self.switch_iteration(total);
        if t < switch {
            return 0.0;
        }
        match self.weight {
            RampWeight::Constant(c) => c,
            RampWeight::Linear => {
                let span = total.saturating_sub(switch).max(1);
                ((t - switch + 1) as f64 / span as f64).min(1.0)
            }
        }
    }
}

/// `(1 − λ)·mean_field + λ·sampled`
pub fn fuse_means(mean_field: &StatsVector, sampled: &StatsVector, lambda: f64) -> StatsVector {
    let keep = 1.0 - lambda;
    StatsVector::new(
        mean_field.node.iter().zip(&sampled.node).map(|(m, s)| keep * m + lambda * s).collect(),
        mean_field.edge.iter().zip(&sampled.edge).map(|(m, s)| keep * m + lambda * s).collect(),
    )
}

/// Hybrid E step: keeps the sampled moving averages in `aux_means` and
/// feeds the fused estimate to the M step.
#[derive(Debug, Clone, Copy, Default)]
pub struct HybridEstimator {
    pub ramp: HybridRamp,
}

impl EStepEstimator for HybridEstimator {
    fn name(&self) -> &'static str {
        "hapcd"
    }

    fn e_chains_per_datum(&self, config: &TrainConfig) -> usize {
        config.e_kernel.num_chains
    }

    fn initialize(&self, ctx: &StepContext, state: &mut TrainerState) -> Result<()> {
        let topo = state.model.topology();
        state.aux_means = (0..ctx.data.len()).map(|n| state.pool.e_sample_mean(topo, n)).collect();
        let all: Vec<usize> = (0..ctx.data.len()).collect();
        let mf = mean_field_batch(&state.model, ctx.part, ctx.data, &all, ctx.config.mean_field_iters);
        let lambda = self.ramp.lambda(0, ctx.config.iterations);
        state.per_data_means = mf
            .iter()
            .zip(&state.aux_means)
            .map(|(m, s)| fuse_means(m, s, lambda))
            .collect();
        state.empirical_mean = average_stats(&state.per_data_means)?;
        Ok(())
    }

    fn update(&self, ctx: &StepContext, state: &mut TrainerState, batch: &[usize]) -> Result<()> {
        if ctx.a_t.is_nan() || ctx.a_t < 0.0 {
            return Err(ApcdError::Internal(format!("step size a = {} is negative", ctx.a_t)));
        }
        state
            .pool
            .advance_e(&state.model, ctx.part, ctx.data, ctx.config.e_kernel.ell, batch)?;
        let topo = state.model.topology();
        for &n in batch {
            let fresh = state.pool.e_sample_mean(topo, n);
            moving_average(&mut state.aux_means[n], &fresh, ctx.a_t);
        }
        let mf = mean_field_batch(&state.model, ctx.part, ctx.data, batch, ctx.config.mean_field_iters);
        let lambda = self.ramp.lambda(ctx.t, ctx.config.iterations);
        for (&n, m) in batch.iter().zip(&mf) {
            state.per_data_means[n] = fuse_means(m, &state.aux_means[n], lambda);
        }
        state.empirical_mean = average_stats(&state.per_data_means)?;
        Ok(())
    }
}

pub fn train_mfpcd(
    model0: PairwiseModel,
    part: &VariablePartition,
    data: &[Configuration],
    config: &TrainConfig,
) -> Result<(PairwiseModel, Vec<MetricsRecord>)> {
    let mut config = config.clone();
    config.variant = "mfpcd".into();
    check_schedules(&config, false)?;
    let mut trainer = Trainer::new(model0, part, data, config, Box::new(MfpcdEstimator))?;
    let trace = trainer.run(&mut NullObserver)?;
    Ok((trainer.into_model(), trace))
}

pub fn train_hapcd(
    model0: PairwiseModel,
    part: &VariablePartition,
    data: &[Configuration],
    config: &TrainConfig,
    ramp: HybridRamp,
) -> Result<(PairwiseModel, Vec<MetricsRecord>)> {
    if !(0.0..=1.0).contains(&ramp.switch_fraction) {
        return invalid("switch fraction must lie in [0, 1]");
    }
    let mut config = config.clone();
    config.variant = "hapcd".into();
    config.hybrid = ramp;
    check_schedules(&config, false)?;
    let mut trainer = Trainer::new(model0, part, data, config, Box::new(HybridEstimator { ramp }))?;
    let trace = trainer.run(&mut NullObserver)?;
    Ok((trainer.into_model(), trace))
}

/// Result of fitting canonical parameters to a target mean.
#[derive(Debug, Clone)]
pub struct MomentFit {
    pub model: PairwiseModel,
    pub grad_norm: f64,
    pub iterations: usize,
}

/// Gradient ascent on `⟨θ, target⟩ − A(θ)` with exact mean parameters.
///
/// Each iteration tries the base step and halves it until the objective does
/// not decrease (up to rounding). Stops once `‖target − μ(θ)‖ < tol` or after
/// `max_iters` iterations.
pub fn fit_mean_params(
    model0: &PairwiseModel,
    target: &StatsVector,
    tol: f64,
    step: f64,
    max_iters: usize,
    enumerator: &Enumerator,
) -> Result<MomentFit> {
    if !target.same_shape(&model0.topology().zero_stats()) {
        return invalid("target mean has the wrong dimension");
    }
    let objective = |m: &PairwiseModel| -> Result<f64> { Ok(m.params().dot(target) - enumerator.log_partition(m)?) };
    let mut model = model0.clone();
    let mut current = objective(&model)?;
    let mut grad = target.sub(&enumerator.mean_params(&model)?);
    let mut iterations = 0;
    while grad.norm() >= tol && iterations < max_iters {
        let mut s = step;
        let mut accepted = None;
        for _ in 0..60 {
            let mut candidate = model.clone();
            candidate.add_scaled(s, &grad);
            let value = objective(&candidate)?;
            if value.is_finite() && value >= current - 1e-13 * current.abs().max(1.0) {
                accepted = Some((candidate, value));
                break;
            }
            s *= 0.5;
        }
        let Some((candidate, value)) = accepted else {
            break;
        };
        model = candidate;
        current = value;
        grad = target.sub(&enumerator.mean_params(&model)?);
        iterations += 1;
    }
    Ok(MomentFit {
        grad_norm: grad.norm(),
        model,
        iterations,
    })
}

/// Minimum marginal log-likelihood gain that keeps exact EM iterating.
pub const EM_IMPROVEMENT_TOL: f64 = 1e-9;

/// Exact EM with explicit settings and enumeration limit.
pub fn train_exact_em_with(
    model0: PairwiseModel,
    part: &VariablePartition,
    data: &[Configuration],
    config: &ExactEmConfig,
    enumerator: &Enumerator,
) -> Result<(PairwiseModel, Vec<MetricsRecord>)> {
    if data.is_empty() {
        return invalid("training data is empty");
    }
    part.check_for(model0.topology())?;
    if !enumerator.fits(model0.num_nodes()) {
        return Err(ApcdError::Capacity {
            requested: model0.num_nodes(),
            limit: enumerator.max_nodes,
        });
    }
    let started = std::time::Instant::now();
    let mut model = model0;
    let mut trace = Vec::new();
    let mut previous = enumerator.marginal_loglik(&model, part, data)?;
    for outer in 1..=config.max_outer {
        let target = enumerator.average_posterior_mean(&model, part, data)?;
        let fit = fit_mean_params(&model, &target, config.inner_tol, config.step, config.max_inner, enumerator)?;
        model = fit.model;
        let ll = enumerator.marginal_loglik(&model, part, data)?;
        let grad = enumerator.gradient_mmle(&model, part, data)?;
        trace.push(MetricsRecord {
            variant: "exact-em".into(),
            iteration: outer,
            timestamp: started.elapsed().as_secs_f64(),
            a: None,
            b: None,
            grad_norm_estimate: None,
            exact_loglik: Some(ll),
            exact_grad_norm: Some(grad.norm()),
            inner_grad_norm: Some(fit.grad_norm),
        });
        let gain = ll - previous;
        previous = ll;
        if gain < EM_IMPROVEMENT_TOL {
            break;
        }
    }
    Ok((model, trace))
}

pub fn train_exact_em(
    model0: PairwiseModel,
    part: &VariablePartition,
    data: &[Configuration],
    max_outer: usize,
    inner_tol: f64,
) -> Result<(PairwiseModel, Vec<MetricsRecord>)> {
    let config = ExactEmConfig {
        max_outer,
        inner_tol,
        ..ExactEmConfig::default()
    };
    train_exact_em_with(model0, part, data, &config, &Enumerator::default())
}
