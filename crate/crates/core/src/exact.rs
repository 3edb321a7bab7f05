//! Brute-force enumeration oracles.
//!
//! Every quantity here is computed by summing over all `2^k` assignments of
//! the free nodes, so it is exact up to floating point and only usable on
//! small graphs. Sums of exponentials are always max-shifted.

use rayon::prelude::*;

use crate::error::{invalid, ApcdError, Result};
use crate::model::{Configuration, PairwiseModel, VariablePartition};
use crate::stats::{LogSumExp, StatsVector};

pub const DEFAULT_ENUMERATION_LIMIT: usize = 20;

/// Visits every assignment of `free` (all other entries taken from `base`),
/// in Gray-code order. The closure sees the configuration and its `⟨θ,φ⟩`.
fn for_each_assignment(
    model: &PairwiseModel,
    free: &[usize],
    base: &Configuration,
    mut visit: impl FnMut(&Configuration, f64),
) {
    let mut x = base.clone();
    for &i in free {
        x.set(i, 0);
    }
    let count: u64 = 1 << free.len();
    visit(&x, model.energy_unchecked(&x));
    for k in 1..count {
        let flip = free[k.trailing_zeros() as usize];
        x.set(flip, 1 - x.get(flip));
        visit(&x, model.energy_unchecked(&x));
    }
}

fn add_weighted(model: &PairwiseModel, x: &Configuration, weight: f64, acc: &mut StatsVector) {
    for (i, a) in acc.node.iter_mut().enumerate() {
        if x.get(i) == 1 {
            *a += weight;
        }
    }
    for (a, &(i, j)) in acc.edge.iter_mut().zip(model.topology().edges()) {
        if x.get(i) == 1 && x.get(j) == 1 {
            *a += weight;
        }
    }
}

/// Enumeration oracle with a configurable size limit.
#[derive(Debug, Clone, Copy)]
pub struct Enumerator {
    pub max_nodes: usize,
}

impl Default for Enumerator {
    fn default() -> Self {
        Enumerator {
            max_nodes: DEFAULT_ENUMERATION_LIMIT,
        }
    }
}

impl Enumerator {
    pub fn with_limit(max_nodes: usize) -> Self {
        Enumerator { max_nodes }
    }

    fn check(&self, requested: usize) -> Result<()> {
        if requested > self.max_nodes || requested >= 63 {
            return Err(ApcdError::Capacity {
                requested,
                limit: self.max_nodes,
            });
        }
        Ok(())
    }

    pub fn fits(&self, num_nodes: usize) -> bool {
        self.check(num_nodes).is_ok()
    }

    fn all_nodes(model: &PairwiseModel) -> Vec<usize> {
        (0..model.num_nodes()).collect()
    }

    /// `A(θ) = log Σ_x exp⟨θ, φ(x)⟩`.
    pub fn log_partition(&self, model: &PairwiseModel) -> Result<f64> {
        self.check(model.num_nodes())?;
        let mut lse = LogSumExp::default();
        let base = Configuration::zeros(model.num_nodes());
        for_each_assignment(model, &Self::all_nodes(model), &base, |_, e| lse.add(e));
        Ok(lse.value())
    }

    /// `μ(θ) = Σ_x φ(x) p_θ(x) = ∇A(θ)`.
    pub fn mean_params(&self, model: &PairwiseModel) -> Result<StatsVector> {
        let log_z = self.log_partition(model)?;
        let mut acc = model.topology().zero_stats();
        let base = Configuration::zeros(model.num_nodes());
        for_each_assignment(model, &Self::all_nodes(model), &base, |x, e| {
            add_weighted(model, x, (e - log_z).exp(), &mut acc);
        });
        Ok(acc)
    }

    /// Probability of every configuration, indexed by
    /// [`Configuration::from_index`] order.
    pub fn distribution(&self, model: &PairwiseModel) -> Result<Vec<f64>> {
        let n = model.num_nodes();
        self.check(n)?;
        let energies: Vec<f64> = (0..1u64 << n)
            .map(|k| model.energy_unchecked(&Configuration::from_index(k, n)))
            .collect();
        let mut lse = LogSumExp::default();
        energies.iter().for_each(|&e| lse.add(e));
        let log_z = lse.value();
        Ok(energies.into_iter().map(|e| (e - log_z).exp()).collect())
    }

    fn check_visible(model: &PairwiseModel, part: &VariablePartition, v: &Configuration) -> Result<()> {
        v.check_for(model.topology())?;
        part.check_for(model.topology())
    }

    /// `log Σ_h exp⟨θ, φ(v, h)⟩`, the log of the clamped partition sum.
    pub fn clamped_log_sum(
        &self,
        model: &PairwiseModel,
        part: &VariablePartition,
        v: &Configuration,
    ) -> Result<f64> {
        Self::check_visible(model, part, v)?;
        self.check(part.hidden().len())?;
        let mut lse = LogSumExp::default();
        for_each_assignment(model, part.hidden(), v, |_, e| lse.add(e));
        Ok(lse.value())
    }

    /// `Σ_h φ(v, h) p_θ(h | v)`. Visible node and visible–visible edge
    /// entries are set from `v` directly.
    pub fn posterior_mean(
        &self,
        model: &PairwiseModel,
        part: &VariablePartition,
        v: &Configuration,
    ) -> Result<StatsVector> {
        let log_sum = self.clamped_log_sum(model, part, v)?;
        let mut acc = model.topology().zero_stats();
        for_each_assignment(model, part.hidden(), v, |x, e| {
            add_weighted(model, x, (e - log_sum).exp(), &mut acc);
        });
        for &i in part.visible() {
            acc.node[i] = v.get(i) as f64;
        }
        for (e, &(i, j)) in model.topology().edges().iter().enumerate() {
            if !part.is_hidden(i) && !part.is_hidden(j) {
                acc.edge[e] = (v.get(i) & v.get(j)) as f64;
            }
        }
        Ok(acc)
    }

    /// Probabilities `p_θ(h | v)` indexed by the bits of the hidden
    /// assignment (hidden node `part.hidden()[k]` in bit `k`).
    pub fn conditional_distribution(
        &self,
        model: &PairwiseModel,
        part: &VariablePartition,
        v: &Configuration,
    ) -> Result<Vec<f64>> {
        Self::check_visible(model, part, v)?;
        let hidden = part.hidden();
        self.check(hidden.len())?;
        let mut x = v.clone();
        let energies: Vec<f64> = (0..1u64 << hidden.len())
            .map(|k| {
                for (b, &i) in hidden.iter().enumerate() {
                    x.set(i, ((k >> b) & 1) as u8);
                }
                model.energy_unchecked(&x)
            })
            .collect();
        let mut lse = LogSumExp::default();
        energies.iter().for_each(|&e| lse.add(e));
        let log_z = lse.value();
        Ok(energies.into_iter().map(|e| (e - log_z).exp()).collect())
    }

    fn check_data(model: &PairwiseModel, data: &[Configuration]) -> Result<()> {
        if data.is_empty() {
            return invalid("dataset is empty");
        }
        data.iter().try_for_each(|v| v.check_for(model.topology()))
    }

    /// `(1/N) Σ_n log p_θ(v^n)`.
    pub fn marginal_loglik(
        &self,
        model: &PairwiseModel,
        part: &VariablePartition,
        data: &[Configuration],
    ) -> Result<f64> {
        Self::check_data(model, data)?;
        part.check_for(model.topology())?;
        let log_z = self.log_partition(model)?;
        let per_datum = data
            .par_iter()
            .map(|v| self.clamped_log_sum(model, part, v))
            .collect::<Result<Vec<f64>>>()?;
        let total: f64 = per_datum.iter().sum();
        Ok(total / data.len() as f64 - log_z)
    }

    /// `(1/N) Σ_n μ*(θ; v^n)`, the data-averaged exact posterior mean.
    pub fn average_posterior_mean(
        &self,
        model: &PairwiseModel,
        part: &VariablePartition,
        data: &[Configuration],
    ) -> Result<StatsVector> {
        Self::check_data(model, data)?;
        let per_datum = data
            .par_iter()
            .map(|v| self.posterior_mean(model, part, v))
            .collect::<Result<Vec<_>>>()?;
        crate::stats::average_stats(&per_datum)
    }

    /// `∂l(θ; v)/∂θ = (1/N) Σ_n μ*(θ; v^n) − μ(θ)`.
    pub fn gradient_mmle(
        &self,
        model: &PairwiseModel,
        part: &VariablePartition,
        data: &[Configuration],
    ) -> Result<StatsVector> {
        let empirical = self.average_posterior_mean(model, part, data)?;
        let mean = self.mean_params(model)?;
        Ok(empirical.sub(&mean))
    }
}

pub fn exact_log_partition(model: &PairwiseModel) -> Result<f64> {
    Enumerator::default().log_partition(model)
}

pub fn exact_mean_params(model: &PairwiseModel) -> Result<StatsVector> {
    Enumerator::default().mean_params(model)
}

pub fn exact_posterior_mean(
    model: &PairwiseModel,
    part: &VariablePartition,
    v: &Configuration,
) -> Result<StatsVector> {
    Enumerator::default().posterior_mean(model, part, v)
}

pub fn exact_marginal_loglik(
    model: &PairwiseModel,
    part: &VariablePartition,
    data: &[Configuration],
) -> Result<f64> {
    Enumerator::default().marginal_loglik(model, part, data)
}

pub fn exact_gradient_mmle(
    model: &PairwiseModel,
    part: &VariablePartition,
    data: &[Configuration],
) -> Result<StatsVector> {
    Enumerator::default().gradient_mmle(model, part, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::GraphTopology;
    use crate::stats::logistic;

    fn cfg(bits: &[u8]) -> Configuration {
        Configuration::from_bits(bits.to_vec()).unwrap()
    }

    fn pair_model(b0: f64, b1: f64, w: f64) -> PairwiseModel {
        PairwiseModel::new(GraphTopology::new(2, &[(0, 1)]).unwrap(), vec![b0, b1], vec![w]).unwrap()
    }

    fn single(b: f64) -> PairwiseModel {
        PairwiseModel::new(GraphTopology::new(1, &[]).unwrap(), vec![b], vec![]).unwrap()
    }

    #[test]
    fn log_partition_small_cases() {
        assert!((exact_log_partition(&single(0.0)).unwrap() - 2f64.ln()).abs() < 1e-15);
        for w in [-2.0, 0.0, 0.7, 5.0] {
            let a = exact_log_partition(&pair_model(0.0, 0.0, w)).unwrap();
            assert!((a - (3.0 + f64::exp(w)).ln()).abs() < 1e-14, "w={w}");
        }
        let chain = GraphTopology::new(3, &[(0, 1), (1, 2)]).unwrap();
        let a = exact_log_partition(&PairwiseModel::zeros(chain)).unwrap();
        assert!((a - 8f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn log_partition_survives_large_parameters() {
        let a = exact_log_partition(&pair_model(400.0, 400.0, 400.0)).unwrap();
        assert!((a - 1200.0).abs() < 1e-9);
    }

    #[test]
    fn mean_params_small_cases() {
        assert!((exact_mean_params(&single(0.0)).unwrap().node[0] - 0.5).abs() < 1e-15);
        let m = exact_mean_params(&pair_model(0.0, 0.0, 0.0)).unwrap();
        assert_eq!(m, StatsVector::new(vec![0.5, 0.5], vec![0.25]));
        let w: f64 = 1.3;
        let m = exact_mean_params(&pair_model(0.0, 0.0, w)).unwrap();
        assert!((m.edge[0] - w.exp() / (3.0 + w.exp())).abs() < 1e-15);
    }

    #[test]
    fn capacity_is_refused() {
        let t = GraphTopology::new(21, &[]).unwrap();
        let err = exact_log_partition(&PairwiseModel::zeros(t.clone())).unwrap_err();
        assert!(matches!(err, ApcdError::Capacity { requested: 21, limit: 20 }));
        assert!(Enumerator::with_limit(21).log_partition(&PairwiseModel::zeros(t)).is_ok());
    }

    #[test]
    fn posterior_mean_cases() {
        let m = pair_model(0.4, -0.2, 0.9);
        let none = VariablePartition::all_visible(2);
        let v = cfg(&[1, 0]);
        assert_eq!(
            exact_posterior_mean(&m, &none, &v).unwrap(),
            StatsVector::new(vec![1.0, 0.0], vec![0.0])
        );

        let disconnected = PairwiseModel::new(GraphTopology::new(2, &[]).unwrap(), vec![1.0, 0.0], vec![]).unwrap();
        let part = VariablePartition::from_hidden(2, &[1]).unwrap();
        let pm = exact_posterior_mean(&disconnected, &part, &cfg(&[1, 0])).unwrap();
        assert!((pm.node[1] - 0.5).abs() < 1e-15);

        let w = -1.7;
        let m = pair_model(0.0, 0.0, w);
        let pm = exact_posterior_mean(&m, &part, &cfg(&[1, 0])).unwrap();
        assert!((pm.node[1] - logistic(w)).abs() < 1e-15);
        assert!((pm.edge[0] - logistic(w)).abs() < 1e-15);
        assert_eq!(pm.node[0], 1.0);
    }

    #[test]
    fn marginal_loglik_cases() {
        let t = GraphTopology::new(4, &[(0, 1), (1, 2), (2, 3)]).unwrap();
        let zero = PairwiseModel::zeros(t);
        let part = VariablePartition::from_hidden(4, &[1, 3]).unwrap();
        let data = vec![cfg(&[1, 0, 0, 0]), cfg(&[0, 1, 1, 1])];
        let ll = exact_marginal_loglik(&zero, &part, &data).unwrap();
        assert!((ll + 2.0 * 2f64.ln()).abs() < 1e-14);

        let ll = exact_marginal_loglik(&single(0.0), &VariablePartition::all_visible(1), &[cfg(&[1])]).unwrap();
        assert!((ll - 0.5f64.ln()).abs() < 1e-15);

        assert!(exact_marginal_loglik(&zero, &part, &[]).is_err());
    }

    #[test]
    fn marginal_loglik_without_hidden_is_plain_loglik() {
        let m = pair_model(0.3, -1.1, 2.0);
        let data = vec![cfg(&[1, 1]), cfg(&[0, 1]), cfg(&[1, 1])];
        let ll = exact_marginal_loglik(&m, &VariablePartition::all_visible(2), &data).unwrap();
        let a = exact_log_partition(&m).unwrap();
        let direct: f64 = data
            .iter()
            .map(|x| crate::model::log_unnormalized(&m, x).unwrap() - a)
            .sum::<f64>()
            / 3.0;
        assert!((ll - direct).abs() < 1e-14);
    }

    #[test]
    fn gradient_vanishes_for_balanced_data_at_zero() {
        let m = pair_model(0.0, 0.0, 0.0);
        let part = VariablePartition::from_hidden(2, &[1]).unwrap();
        let data = vec![cfg(&[1, 0]), cfg(&[0, 0])];
        let g = exact_gradient_mmle(&m, &part, &data).unwrap();
        assert!(g.max_abs() < 1e-15, "{g:?}");
    }

    #[test]
    fn distribution_sums_to_one() {
        let m = pair_model(0.3, -0.4, 1.5);
        let p = Enumerator::default().distribution(&m).unwrap();
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        let part = VariablePartition::from_hidden(2, &[0]).unwrap();
        let c = Enumerator::default().conditional_distribution(&m, &part, &cfg(&[0, 1])).unwrap();
        assert!((c[1] - logistic(0.3 + 1.5)).abs() < 1e-15);
    }
}
