//! Gibbs kernels and persistent chain pools.
//!
//! One transition of either kernel is one systematic-scan sweep: every free
//! node is resampled from its full conditional in ascending index order.
//! The free kernel targets `p_θ(x)`, the clamped kernel targets `p_θ(h | v)`
//! and never touches visible coordinates.

use rand::Rng;
use rayon::prelude::*;

use crate::error::{invalid, Result};
use crate::model::{accumulate_stats, Configuration, GraphTopology, PairwiseModel, VariablePartition};
use crate::rng::{stream, ChainRng, StreamRole};
use crate::stats::{logistic, StatsVector};

/// `p(x_i = 1 | x_{-i}) = σ(θ_i + Σ_j θ_ij x_j)`.
#[inline]
pub fn conditional_on(model: &PairwiseModel, x: &Configuration, i: usize) -> f64 {
    logistic(model.local_field(x, i))
}

#[inline]
fn resample_node<R: Rng + ?Sized>(model: &PairwiseModel, x: &mut Configuration, i: usize, rng: &mut R) {
    let p = conditional_on(model, x, i);
    let u: f64 = rng.random();
    x.set(i, (u < p) as u8);
}

/// One free sweep over all nodes, in place.
pub fn gibbs_sweep_free<R: Rng + ?Sized>(model: &PairwiseModel, x: &mut Configuration, rng: &mut R) {
    for i in 0..model.num_nodes() {
        resample_node(model, x, i, rng);
    }
}

fn sweep_hidden<R: Rng + ?Sized>(
    model: &PairwiseModel,
    part: &VariablePartition,
    h: &mut Configuration,
    rng: &mut R,
) {
    for &i in part.hidden() {
        resample_node(model, h, i, rng);
    }
}

/// One clamped sweep over the hidden nodes, in place. `h` must agree with
/// `v` on every visible node.
pub fn gibbs_sweep_clamped<R: Rng + ?Sized>(
    model: &PairwiseModel,
    part: &VariablePartition,
    v: &Configuration,
    h: &mut Configuration,
    rng: &mut R,
) -> Result<()> {
    h.check_for(model.topology())?;
    v.check_for(model.topology())?;
    if let Some(&i) = part.visible().iter().find(|&&i| h.get(i) != v.get(i)) {
        return invalid(format!("chain state disagrees with the clamped value at visible node {i}"));
    }
    sweep_hidden(model, part, h, rng);
    Ok(())
}

/// Transitions per sample (`ℓ`) and number of chains (`M`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KernelParams {
    pub ell: usize,
    pub num_chains: usize,
}

impl KernelParams {
    pub fn new(ell: usize, num_chains: usize) -> Result<Self> {
        let kp = KernelParams { ell, num_chains };
        kp.validate()?;
        Ok(kp)
    }

    pub fn validate(&self) -> Result<()> {
        if self.ell == 0 || self.num_chains == 0 {
            return invalid(format!(
                "kernel needs ell >= 1 and at least one chain (got ell={}, chains={})",
                self.ell, self.num_chains
            ));
        }
        Ok(())
    }
}

/// A persistent chain: its current state and its private random stream.
#[derive(Debug, Clone, PartialEq)]
pub struct Chain {
    pub state: Configuration,
    pub rng: ChainRng,
}

/// Persistent chains for both steps: `N × M_E` clamped chains and `M_M`
/// free chains.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainPool {
    pub e_chains: Vec<Vec<Chain>>,
    pub m_chains: Vec<Chain>,
}

impl ChainPool {
    /// Fresh pool. Every chain starts from uniform random bits drawn from its
    /// own stream; E chains copy the visible bits of their datum.
    pub fn new(
        master_seed: u64,
        topology: &GraphTopology,
        part: &VariablePartition,
        data: &[Configuration],
        e_chains_per_datum: usize,
        m_chains: usize,
    ) -> Result<Self> {
        part.check_for(topology)?;
        data.iter().try_for_each(|v| v.check_for(topology))?;
        let n_nodes = topology.num_nodes();
        let e_chains = data
            .iter()
            .enumerate()
            .map(|(n, v)| {
                (0..e_chains_per_datum)
                    .map(|m| {
                        let mut rng = stream(master_seed, StreamRole::EChain, n as u64, m as u64);
                        let mut state = v.clone();
                        for &i in part.hidden() {
                            state.set(i, rng.random::<bool>() as u8);
                        }
                        Chain { state, rng }
                    })
                    .collect()
            })
            .collect();
        let m_chains = (0..m_chains)
            .map(|m| {
                let mut rng = stream(master_seed, StreamRole::MChain, 0, m as u64);
                let bits = (0..n_nodes).map(|_| rng.random::<bool>() as u8).collect();
                Chain {
                    state: Configuration::from_bits(bits).expect("binary by construction"),
                    rng,
                }
            })
            .collect();
        Ok(ChainPool { e_chains, m_chains })
    }

    pub fn num_data(&self) -> usize {
        self.e_chains.len()
    }

    pub fn e_chains_per_datum(&self) -> usize {
        self.e_chains.first().map_or(0, Vec::len)
    }

    /// Applies `ell` clamped sweeps to every E chain of the data indices in
    /// `batch`. Chains of other data are left untouched.
    pub fn advance_e(
        &mut self,
        model: &PairwiseModel,
        part: &VariablePartition,
        data: &[Configuration],
        ell: usize,
        batch: &[usize],
    ) -> Result<()> {
        if self.e_chains.len() != data.len() {
            return invalid(format!(
                "pool holds chains for {} data but {} were given",
                self.e_chains.len(),
                data.len()
            ));
        }
        if ell == 0 {
            return Ok(());
        }
        let mut selected = vec![false; data.len()];
        for &n in batch {
            if n >= data.len() {
                return invalid(format!("batch index {n} out of range"));
            }
            selected[n] = true;
        }
        self.e_chains
            .par_iter_mut()
            .enumerate()
            .filter(|(n, _)| selected[*n])
            .for_each(|(_, chains)| {
                for chain in chains.iter_mut() {
                    for _ in 0..ell {
                        sweep_hidden(model, part, &mut chain.state, &mut chain.rng);
                    }
                }
            });
        Ok(())
    }

    pub fn advance_e_all(
        &mut self,
        model: &PairwiseModel,
        part: &VariablePartition,
        data: &[Configuration],
        ell: usize,
    ) -> Result<()> {
        let all: Vec<usize> = (0..data.len()).collect();
        self.advance_e(model, part, data, ell, &all)
    }

    /// Applies `ell` free sweeps to every M chain.
    pub fn advance_m(&mut self, model: &PairwiseModel, ell: usize) {
        self.m_chains.par_iter_mut().for_each(|chain| {
            for _ in 0..ell {
                gibbs_sweep_free(model, &mut chain.state, &mut chain.rng);
            }
        });
    }

    /// `(1/M) Σ_m φ(v^n, ĥ^{n,m})`
    pub fn e_sample_mean(&self, topology: &GraphTopology, n: usize) -> StatsVector {
        sample_mean(topology, self.e_chains[n].iter().map(|c| &c.state))
    }

    /// `(1/M) Σ_m φ(x̂^m)`
    pub fn m_sample_mean(&self, topology: &GraphTopology) -> StatsVector {
        sample_mean(topology, self.m_chains.iter().map(|c| &c.state))
    }
}

fn sample_mean<'a>(topology: &GraphTopology, states: impl Iterator<Item = &'a Configuration>) -> StatsVector {
    let mut acc = topology.zero_stats();
    let mut count = 0usize;
    for s in states {
        accumulate_stats(topology, s, &mut acc);
        count += 1;
    }
    if count > 0 {
        acc.scale(1.0 / count as f64);
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::Enumerator;

    fn cfg(bits: &[u8]) -> Configuration {
        Configuration::from_bits(bits.to_vec()).unwrap()
    }

    fn star() -> GraphTopology {
        GraphTopology::new(3, &[(0, 1), (0, 2)]).unwrap()
    }

    #[test]
    fn conditional_small_cases() {
        let zero = PairwiseModel::zeros(star());
        assert_eq!(conditional_on(&zero, &cfg(&[0, 0, 0]), 0), 0.5);

        let m = PairwiseModel::new(star(), vec![1.0, 0.0, 0.0], vec![-1.0, 4.0]).unwrap();
        assert_eq!(conditional_on(&m, &cfg(&[0, 1, 0]), 0), 0.5);

        let m = PairwiseModel::new(star(), vec![2.0, 0.0, 0.0], vec![1.0, 1.0]).unwrap();
        assert!((conditional_on(&m, &cfg(&[1, 0, 0]), 0) - 0.8807970779778823).abs() < 1e-12);
    }

    #[test]
    fn saturated_free_sweep_gives_all_ones() {
        let m = PairwiseModel::new(star(), vec![50.0; 3], vec![0.0; 2]).unwrap();
        let mut rng = stream(1, StreamRole::MChain, 0, 0);
        let mut x = cfg(&[0, 0, 0]);
        for _ in 0..100 {
            gibbs_sweep_free(&m, &mut x, &mut rng);
            assert_eq!(x, cfg(&[1, 1, 1]));
        }
    }

    #[test]
    fn uniform_free_sweep_produces_fair_coins() {
        let m = PairwiseModel::zeros(star());
        let mut rng = stream(2, StreamRole::MChain, 0, 0);
        let mut x = cfg(&[0, 0, 0]);
        let sweeps = 40_000;
        let mut ones = [0usize; 3];
        let mut pair_01 = 0usize;
        for _ in 0..sweeps {
            gibbs_sweep_free(&m, &mut x, &mut rng);
            for (i, o) in ones.iter_mut().enumerate() {
                *o += x.get(i) as usize;
            }
            pair_01 += (x.get(0) & x.get(1)) as usize;
        }
        let se = (0.25 / sweeps as f64).sqrt();
        for o in ones {
            assert!((o as f64 / sweeps as f64 - 0.5).abs() < 4.0 * se);
        }
        let se_pair = (0.25 * 0.75 / sweeps as f64).sqrt();
        assert!((pair_01 as f64 / sweeps as f64 - 0.25).abs() < 4.0 * se_pair);
    }

    #[test]
    fn clamped_sweep_cases() {
        let m = PairwiseModel::new(star(), vec![0.3, 0.1, -0.2], vec![0.5, 0.5]).unwrap();
        let all_visible = VariablePartition::all_visible(3);
        let v = cfg(&[1, 0, 1]);
        let mut h = v.clone();
        let mut rng = stream(3, StreamRole::EChain, 0, 0);
        gibbs_sweep_clamped(&m, &all_visible, &v, &mut h, &mut rng).unwrap();
        assert_eq!(h, v);

        let part = VariablePartition::from_hidden(3, &[2]).unwrap();
        let mut bad = cfg(&[0, 0, 1]);
        assert!(gibbs_sweep_clamped(&m, &part, &v, &mut bad, &mut rng).is_err());
    }

    #[test]
    fn clamped_frequency_matches_exact_posterior() {
        let w = 1.2;
        let t = GraphTopology::new(2, &[(0, 1)]).unwrap();
        let m = PairwiseModel::new(t, vec![0.0, -0.4], vec![w]).unwrap();
        let part = VariablePartition::from_hidden(2, &[1]).unwrap();
        let v = cfg(&[1, 0]);
        let exact = Enumerator::default().posterior_mean(&m, &part, &v).unwrap().node[1];
        assert!((exact - logistic(w - 0.4)).abs() < 1e-15);
        let mut h = v.clone();
        let mut rng = stream(4, StreamRole::EChain, 0, 0);
        let sweeps = 50_000;
        let mut ones = 0usize;
        for _ in 0..sweeps {
            gibbs_sweep_clamped(&m, &part, &v, &mut h, &mut rng).unwrap();
            assert_eq!(h.get(0), 1);
            ones += h.get(1) as usize;
        }
        let se = (exact * (1.0 - exact) / sweeps as f64).sqrt();
        assert!((ones as f64 / sweeps as f64 - exact).abs() < 4.0 * se);
    }

    fn pool_fixture() -> (PairwiseModel, VariablePartition, Vec<Configuration>) {
        let t = GraphTopology::new(4, &[(0, 1), (1, 2), (2, 3), (0, 3)]).unwrap();
        let m = PairwiseModel::new(t, vec![0.2, -0.3, 0.1, 0.4], vec![0.5, -0.5, 0.3, 0.2]).unwrap();
        let part = VariablePartition::from_hidden(4, &[1, 3]).unwrap();
        let data = vec![cfg(&[1, 0, 0, 0]), cfg(&[0, 0, 1, 0]), cfg(&[1, 0, 1, 0])];
        (m, part, data)
    }

    #[test]
    fn zero_transitions_leave_pool_unchanged() {
        let (m, part, data) = pool_fixture();
        let mut pool = ChainPool::new(9, m.topology(), &part, &data, 3, 4).unwrap();
        let before = pool.clone();
        pool.advance_e_all(&m, &part, &data, 0).unwrap();
        pool.advance_m(&m, 0);
        assert_eq!(pool, before);
    }

    #[test]
    fn pools_are_seed_deterministic_and_clamped() {
        let (m, part, data) = pool_fixture();
        let run = |seed| {
            let mut pool = ChainPool::new(seed, m.topology(), &part, &data, 3, 4).unwrap();
            for _ in 0..5 {
                pool.advance_e_all(&m, &part, &data, 2).unwrap();
                pool.advance_m(&m, 2);
            }
            pool
        };
        let a = run(5);
        assert_eq!(a, run(5));
        assert_ne!(a, run(6));
        for (n, chains) in a.e_chains.iter().enumerate() {
            for c in chains {
                for &i in part.visible() {
                    assert_eq!(c.state.get(i), data[n].get(i));
                }
            }
        }
    }

    #[test]
    fn advance_e_only_touches_the_batch() {
        let (m, part, data) = pool_fixture();
        let mut pool = ChainPool::new(1, m.topology(), &part, &data, 2, 1).unwrap();
        let before = pool.clone();
        pool.advance_e(&m, &part, &data, 3, &[1]).unwrap();
        assert_eq!(pool.e_chains[0], before.e_chains[0]);
        assert_eq!(pool.e_chains[2], before.e_chains[2]);
        assert_ne!(pool.e_chains[1], before.e_chains[1]);
        assert!(pool.advance_e(&m, &part, &data[..2], 1, &[0]).is_err());
        assert!(pool.advance_e(&m, &part, &data, 1, &[7]).is_err());
    }

    #[test]
    fn uniform_targets_average_to_one_half() {
        let t = GraphTopology::new(4, &[(0, 1), (1, 2), (2, 3)]).unwrap();
        let m = PairwiseModel::zeros(t.clone());
        let part = VariablePartition::from_hidden(4, &[0, 2]).unwrap();
        let data = vec![cfg(&[0, 1, 0, 1])];
        let mut pool = ChainPool::new(3, &t, &part, &data, 4000, 4000).unwrap();
        pool.advance_e_all(&m, &part, &data, 1).unwrap();
        pool.advance_m(&m, 1);
        let e = pool.e_sample_mean(&t, 0);
        let mm = pool.m_sample_mean(&t);
        let tol = 4.0 * (0.25f64 / 4000.0).sqrt();
        for &i in part.hidden() {
            assert!((e.node[i] - 0.5).abs() < tol);
        }
        for i in 0..4 {
            assert!((mm.node[i] - 0.5).abs() < tol);
        }
    }
}
