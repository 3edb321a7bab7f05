//! Model evaluation: Parzen window scores, annealed importance sampling and
//! stationarity diagnostics.

use rand::Rng;
use rayon::prelude::*;

use crate::error::{invalid, Result};
use crate::exact::Enumerator;
use crate::model::{Configuration, PairwiseModel, VariablePartition};
use crate::rng::{stream, StreamRole};
use crate::sampler::gibbs_sweep_free;
use crate::stats::{log_mean_exp, log_sum_exp, mean_and_variance};

/// Default bandwidth grid `{0.1, 0.2, …, 1.0}`.
pub fn default_sigma_grid() -> Vec<f64> {
    (1..=10).map(|k| k as f64 / 10.0).collect()
}

/// Visible coordinates of each configuration as real vectors.
pub fn visible_vectors(part: &VariablePartition, configs: &[Configuration]) -> Vec<Vec<f64>> {
    configs.iter().map(|c| part.visible_values(c)).collect()
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Isotropic Gaussian kernel density estimate.
#[derive(Debug, Clone)]
pub struct ParzenEstimator {
    samples: Vec<Vec<f64>>,
    sigma: f64,
}

impl ParzenEstimator {
    pub fn new(samples: Vec<Vec<f64>>, sigma: f64) -> Result<Self> {
        let Some(first) = samples.first() else {
            return invalid("Parzen estimator needs at least one reference sample");
        };
        if !(sigma.is_finite() && sigma > 0.0) {
            return invalid(format!("bandwidth must be positive, got {sigma}"));
        }
        let d = first.len();
        if samples.iter().any(|s| s.len() != d) {
            return invalid("reference samples have inconsistent dimensions");
        }
        Ok(ParzenEstimator { samples, sigma })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn dim(&self) -> usize {
        self.samples[0].len()
    }

    pub fn samples(&self) -> &[Vec<f64>] {
        &self.samples
    }
}

fn log_density_from_sq_dists(sq_dists: &[f64], dim: usize, sigma: f64) -> f64 {
    let inv = 1.0 / (2.0 * sigma * sigma);
    let lme = log_sum_exp(sq_dists.iter().map(|d| -d * inv)) - (sq_dists.len() as f64).ln();
    lme - 0.5 * dim as f64 * (2.0 * std::f64::consts::PI * sigma * sigma).ln()
}

/// `log[(1/S) Σ_s exp(−‖x − s‖² / 2σ²)] − (D/2) log(2πσ²)`
pub fn parzen_log_density(est: &ParzenEstimator, x: &[f64]) -> Result<f64> {
    if x.len() != est.dim() {
        return invalid(format!("point has dimension {} but samples have {}", x.len(), est.dim()));
    }
    let sq: Vec<f64> = est.samples.iter().map(|s| squared_distance(x, s)).collect();
    Ok(log_density_from_sq_dists(&sq, est.dim(), est.sigma))
}

/// Mean and standard error of a list of scores. The standard error uses
/// the population standard deviation over `√n`, so it is 0 for one value.
pub fn mean_and_sem(values: &[f64]) -> (f64, f64) {
    let (mean, var) = mean_and_variance(values);
    (mean, (var / values.len() as f64).sqrt())
}

pub fn parzen_avg_loglik(est: &ParzenEstimator, testset: &[Vec<f64>]) -> Result<(f64, f64)> {
    if testset.is_empty() {
        return invalid("Parzen test set is empty");
    }
    let scores = testset
        .par_iter()
        .map(|x| parzen_log_density(est, x))
        .collect::<Result<Vec<f64>>>()?;
    Ok(mean_and_sem(&scores))
}

/// Squared distances from every query point to every reference sample,
/// reusable across bandwidths.
struct DistanceTable {
    rows: Vec<Vec<f64>>,
    dim: usize,
}

impl DistanceTable {
    fn new(samples: &[Vec<f64>], queries: &[Vec<f64>]) -> Result<Self> {
        let dim = samples.first().map_or(0, Vec::len);
        if queries.iter().any(|q| q.len() != dim) {
            return invalid("query points and samples have different dimensions");
        }
        let rows = queries
            .par_iter()
            .map(|q| samples.iter().map(|s| squared_distance(q, s)).collect())
            .collect();
        Ok(DistanceTable { rows, dim })
    }

    fn scores(&self, sigma: f64) -> Vec<f64> {
        self.rows
            .iter()
            .map(|r| log_density_from_sq_dists(r, self.dim, sigma))
            .collect()
    }
}

/// Bandwidth from `grid` with the best validation log-likelihood; ties go
/// to the smaller value.
pub fn parzen_select_sigma(samples: &[Vec<f64>], validation: &[Vec<f64>], sigma_grid: &[f64]) -> Result<f64> {
    if sigma_grid.is_empty() {
        return invalid("bandwidth grid is empty");
    }
    if samples.is_empty() || validation.is_empty() {
        return invalid("bandwidth selection needs samples and validation points");
    }
    if sigma_grid.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
        return invalid("bandwidths must be positive");
    }
    let table = DistanceTable::new(samples, validation)?;
    let mut grid = sigma_grid.to_vec();
    grid.sort_by(|a, b| a.total_cmp(b));
    let mut best = (grid[0], f64::NEG_INFINITY);
    for &sigma in &grid {
        let (mean, _) = mean_and_sem(&table.scores(sigma));
        if mean > best.1 {
            best = (sigma, mean);
        }
    }
    Ok(best.0)
}

/// Parzen score of `test` against `samples`, with the bandwidth chosen on
/// `validation`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParzenScore {
    pub mean: f64,
    pub sem: f64,
    pub sigma: f64,
}

pub fn parzen_evaluate(
    samples: Vec<Vec<f64>>,
    validation: &[Vec<f64>],
    test: &[Vec<f64>],
    sigma_grid: &[f64],
) -> Result<ParzenScore> {
    let sigma = parzen_select_sigma(&samples, validation, sigma_grid)?;
    let est = ParzenEstimator::new(samples, sigma)?;
    let (mean, sem) = parzen_avg_loglik(&est, test)?;
    Ok(ParzenScore { mean, sem, sigma })
}

/// Log-weight variance above which an AIS estimate is flagged.
pub const AIS_HIGH_VARIANCE: f64 = 1.0;

/// Annealing ladder and chain budget.
#[derive(Debug, Clone, PartialEq)]
pub struct AisPlan {
    betas: Vec<f64>,
    pub chains: usize,
    pub sweeps_per_temperature: usize,
}

impl AisPlan {
    pub fn new(betas: Vec<f64>, chains: usize, sweeps_per_temperature: usize) -> Result<Self> {
        if betas.len() < 2 || betas[0] != 0.0 || *betas.last().unwrap() != 1.0 {
            return invalid("AIS ladder must start at 0 and end at 1");
        }
        if betas.windows(2).any(|w| !(w[1] > w[0])) {
            return invalid("AIS ladder must be strictly increasing");
        }
        if chains == 0 || sweeps_per_temperature == 0 {
            return invalid("AIS needs at least one chain and one sweep per temperature");
        }
        Ok(AisPlan {
            betas,
            chains,
            sweeps_per_temperature,
        })
    }

    /// `steps` equal increments from 0 to 1.
    pub fn uniform(steps: usize, chains: usize, sweeps_per_temperature: usize) -> Result<Self> {
        if steps == 0 {
            return invalid("AIS needs at least one step");
        }
        let mut betas: Vec<f64> = (0..=steps).map(|k| k as f64 / steps as f64).collect();
        betas[steps] = 1.0;
        Self::new(betas, chains, sweeps_per_temperature)
    }

    /// `β_0 = 0`, then `steps` geometrically spaced values from `beta_min` to 1.
    pub fn geometric(steps: usize, beta_min: f64, chains: usize, sweeps_per_temperature: usize) -> Result<Self> {
        if steps == 0 || !(beta_min > 0.0 && beta_min < 1.0) {
            return invalid("geometric ladder needs steps >= 1 and beta_min in (0, 1)");
        }
        let mut betas = vec![0.0];
        if steps == 1 {
            betas.push(1.0);
        } else {
            let ratio = (1.0 / beta_min).ln() / (steps - 1) as f64;
            betas.extend((0..steps).map(|k| beta_min * (ratio * k as f64).exp()));
            betas[steps] = 1.0;
        }
        Self::new(betas, chains, sweeps_per_temperature)
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AisEstimate {
    pub log_z: f64,
    pub log_weight_variance: f64,
    pub high_variance: bool,
}

impl AisEstimate {
    fn from_log_weights(log_base: f64, log_weights: &[f64]) -> Self {
        let (_, var) = mean_and_variance(log_weights);
        AisEstimate {
            log_z: log_base + log_mean_exp(log_weights),
            log_weight_variance: var,
            high_variance: var > AIS_HIGH_VARIANCE,
        }
    }
}

/// One AIS chain. `energy` is the annealed log-weight, `transition` moves the
/// state with the kernel for the given ladder index.
fn ais_chain(
    plan: &AisPlan,
    mut state: Configuration,
    rng: &mut crate::rng::ChainRng,
    energy: impl Fn(&Configuration) -> f64,
    mut transition: impl FnMut(usize, &mut Configuration, &mut crate::rng::ChainRng),
) -> f64 {
    let betas = plan.betas();
    let mut log_w = 0.0;
    for k in 1..betas.len() {
        log_w += (betas[k] - betas[k - 1]) * energy(&state);
        if k + 1 < betas.len() {
            for _ in 0..plan.sweeps_per_temperature {
                transition(k, &mut state, rng);
            }
        }
    }
    log_w
}

fn scaled_ladder(model: &PairwiseModel, plan: &AisPlan) -> Vec<PairwiseModel> {
    plan.betas().iter().map(|&b| model.scaled(b)).collect()
}

/// Estimates `log Z(θ)` by annealing from the uniform distribution
/// (`log Z_0 = |V| log 2`) along `p_k ∝ exp(β_k ⟨θ, φ(x)⟩)`.
pub fn ais_log_partition(model: &PairwiseModel, plan: &AisPlan, seed: u64) -> AisEstimate {
    let n = model.num_nodes();
    let ladder = scaled_ladder(model, plan);
    let log_weights: Vec<f64> = (0..plan.chains)
        .into_par_iter()
        .map(|c| {
            let mut rng = stream(seed, StreamRole::Ais, 0, c as u64);
            let bits = (0..n).map(|_| rng.random::<bool>() as u8).collect();
            let start = Configuration::from_bits(bits).expect("binary");
            ais_chain(
                plan,
                start,
                &mut rng,
                |x| model.energy_unchecked(x),
                |k, x, r| gibbs_sweep_free(&ladder[k], x, r),
            )
        })
        .collect();
    AisEstimate::from_log_weights(n as f64 * std::f64::consts::LN_2, &log_weights)
}

/// Estimates `log Σ_h exp⟨θ, φ(v, h)⟩` by AIS over the hidden nodes.
///
/// The hidden-independent part `⟨θ, φ(v, 0)⟩` is added exactly; only the
/// remainder is annealed, from the uniform distribution over hidden states.
pub fn ais_clamped_log_sum(
    model: &PairwiseModel,
    part: &VariablePartition,
    v: &Configuration,
    plan: &AisPlan,
    seed: u64,
) -> Result<AisEstimate> {
    v.check_for(model.topology())?;
    part.check_for(model.topology())?;
    let mut base = v.clone();
    for &i in part.hidden() {
        base.set(i, 0);
    }
    let constant = model.energy_unchecked(&base);
    if part.hidden().is_empty() {
        return Ok(AisEstimate {
            log_z: constant,
            log_weight_variance: 0.0,
            high_variance: false,
        });
    }
    let ladder = scaled_ladder(model, plan);
    let log_weights: Vec<f64> = (0..plan.chains)
        .into_par_iter()
        .map(|c| {
            let mut rng = stream(seed, StreamRole::AisClamped, 0, c as u64);
            let mut start = base.clone();
            for &i in part.hidden() {
                start.set(i, rng.random::<bool>() as u8);
            }
            ais_chain(
                plan,
                start,
                &mut rng,
                |x| model.energy_unchecked(x) - constant,
                |k, x, r| {
                    for &i in part.hidden() {
                        let p = crate::sampler::conditional_on(&ladder[k], x, i);
                        let u: f64 = r.random();
                        x.set(i, (u < p) as u8);
                    }
                },
            )
        })
        .collect();
    let mut est = AisEstimate::from_log_weights(part.hidden().len() as f64 * std::f64::consts::LN_2, &log_weights);
    est.log_z += constant;
    Ok(est)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AisTestEstimate {
    /// Per-datum estimates of `log p_θ(v)`.
    pub per_datum: Vec<f64>,
    pub log_partition: AisEstimate,
}

impl AisTestEstimate {
    pub fn mean(&self) -> f64 {
        self.per_datum.iter().sum::<f64>() / self.per_datum.len() as f64
    }
}

/// `log p_θ(v) ≈ AIS(log Σ_h exp⟨θ, φ(v, h)⟩) − AIS(log Z)` for each datum.
/// Every datum uses the same chain streams, so identical points get
/// identical estimates.
pub fn ais_test_loglik(
    model: &PairwiseModel,
    part: &VariablePartition,
    testset: &[Configuration],
    plan: &AisPlan,
    seed: u64,
) -> Result<AisTestEstimate> {
    if testset.is_empty() {
        return invalid("AIS test set is empty");
    }
    let log_partition = ais_log_partition(model, plan, seed);
    let per_datum = testset
        .iter()
        .map(|v| Ok(ais_clamped_log_sum(model, part, v, plan, seed)?.log_z - log_partition.log_z))
        .collect::<Result<Vec<f64>>>()?;
    Ok(AisTestEstimate {
        per_datum,
        log_partition,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StationarityReport {
    pub grad_norm: f64,
    pub node_norm: f64,
    pub edge_norm: f64,
}

/// Norms of the exact marginal log-likelihood gradient.
pub fn stationarity_report(
    model: &PairwiseModel,
    part: &VariablePartition,
    data: &[Configuration],
) -> Result<StationarityReport> {
    stationarity_report_with(model, part, data, &Enumerator::default())
}

pub fn stationarity_report_with(
    model: &PairwiseModel,
    part: &VariablePartition,
    data: &[Configuration],
    enumerator: &Enumerator,
) -> Result<StationarityReport> {
    let g = enumerator.gradient_mmle(model, part, data)?;
    Ok(StationarityReport {
        grad_norm: g.norm(),
        node_norm: g.node_norm(),
        edge_norm: g.edge_norm(),
    })
}

/// Summary written by the `eval` command.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub parzen_mean: f64,
    pub parzen_sem: f64,
    pub sigma: f64,
    pub ais_log_z: f64,
    pub ais_weight_var: f64,
    pub ais_test_loglik: Option<f64>,
    pub exact_loglik: Option<f64>,
    pub grad_norm: Option<f64>,
}
