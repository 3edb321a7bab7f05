//! Brute-force oracles written independently of the library's enumeration
//! code, plus random instance builders for tests.
#![allow(dead_code)]

use apcd::{Configuration, GraphTopology, PairwiseModel, VariablePartition};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

pub fn rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

/// Bits of `index` as a 0/1 vector, node 0 in the lowest bit.
pub fn bits(index: usize, n: usize) -> Vec<u8> {
    (0..n).map(|i| ((index >> i) & 1) as u8).collect()
}

pub fn index_of(x: &[u8]) -> usize {
    x.iter().enumerate().map(|(i, &b)| (b as usize) << i).sum()
}

pub fn energy(model: &PairwiseModel, x: &[u8]) -> f64 {
    let mut e = 0.0;
    for (i, b) in model.node_bias().iter().enumerate() {
        e += b * x[i] as f64;
    }
    for (k, &(i, j)) in model.topology().edges().iter().enumerate() {
        e += model.edge_weight()[k] * (x[i] * x[j]) as f64;
    }
    e
}

/// Statistics vector flattened: nodes then edges.
pub fn stats(model: &PairwiseModel, x: &[u8]) -> Vec<f64> {
    let mut s: Vec<f64> = x.iter().map(|&b| b as f64).collect();
    for &(i, j) in model.topology().edges() {
        s.push((x[i] * x[j]) as f64);
    }
    s
}

fn lse(v: &[f64]) -> f64 {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Probability of every configuration, indexed by [`index_of`].
pub fn distribution(model: &PairwiseModel) -> Vec<f64> {
    let n = model.num_nodes();
    let e: Vec<f64> = (0..1usize << n).map(|k| energy(model, &bits(k, n))).collect();
    let z = lse(&e);
    e.iter().map(|v| (v - z).exp()).collect()
}

pub fn log_partition(model: &PairwiseModel) -> f64 {
    let n = model.num_nodes();
    let e: Vec<f64> = (0..1usize << n).map(|k| energy(model, &bits(k, n))).collect();
    lse(&e)
}

/// Configurations that agree with `v` on the visible nodes.
pub fn completions(part: &VariablePartition, v: &Configuration) -> Vec<Vec<u8>> {
    let h = part.hidden();
    (0..1usize << h.len())
        .map(|k| {
            let mut x = v.bits().to_vec();
            for (b, &node) in h.iter().enumerate() {
                x[node] = ((k >> b) & 1) as u8;
            }
            x
        })
        .collect()
}

pub fn posterior_mean(model: &PairwiseModel, part: &VariablePartition, v: &Configuration) -> Vec<f64> {
    let xs = completions(part, v);
    let e: Vec<f64> = xs.iter().map(|x| energy(model, x)).collect();
    let z = lse(&e);
    let mut mean = vec![0.0; model.topology().stats_dim()];
    for (x, ex) in xs.iter().zip(&e) {
        let w = (ex - z).exp();
        for (m, s) in mean.iter_mut().zip(stats(model, x)) {
            *m += w * s;
        }
    }
    mean
}

pub fn avg_posterior_mean(model: &PairwiseModel, part: &VariablePartition, data: &[Configuration]) -> Vec<f64> {
    let mut acc = vec![0.0; model.topology().stats_dim()];
    for v in data {
        for (a, p) in acc.iter_mut().zip(posterior_mean(model, part, v)) {
            *a += p / data.len() as f64;
        }
    }
    acc
}

pub fn mean_params(model: &PairwiseModel) -> Vec<f64> {
    let n = model.num_nodes();
    let p = distribution(model);
    let mut mean = vec![0.0; model.topology().stats_dim()];
    for (k, pk) in p.iter().enumerate() {
        for (m, s) in mean.iter_mut().zip(stats(model, &bits(k, n))) {
            *m += pk * s;
        }
    }
    mean
}

pub fn marginal_loglik(model: &PairwiseModel, part: &VariablePartition, data: &[Configuration]) -> f64 {
    let log_z = log_partition(model);
    let total: f64 = data
        .iter()
        .map(|v| {
            let e: Vec<f64> = completions(part, v).iter().map(|x| energy(model, x)).collect();
            lse(&e)
        })
        .sum();
    total / data.len() as f64 - log_z
}

/// `p(x_i = 1 | rest)` computed from the energy difference.
pub fn conditional(model: &PairwiseModel, x: &[u8], i: usize) -> f64 {
    let mut one = x.to_vec();
    one[i] = 1;
    let mut zero = x.to_vec();
    zero[i] = 0;
    let d = energy(model, &one) - energy(model, &zero);
    1.0 / (1.0 + (-d).exp())
}

/// Random graph on `n` nodes with each pair present with probability `density`.
pub fn random_topology(r: &mut impl Rng, n: usize, density: f64) -> GraphTopology {
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if r.random::<f64>() < density {
                edges.push((i, j));
            }
        }
    }
    GraphTopology::new(n, &edges).unwrap()
}

pub fn random_model(r: &mut impl Rng, topology: GraphTopology, scale: f64) -> PairwiseModel {
    let b = (0..topology.num_nodes()).map(|_| r.random_range(-scale..scale)).collect();
    let w = (0..topology.num_edges()).map(|_| r.random_range(-scale..scale)).collect();
    PairwiseModel::new(topology, b, w).unwrap()
}

pub fn random_partition(r: &mut impl Rng, n: usize) -> VariablePartition {
    let hidden: Vec<usize> = (0..n).filter(|_| r.random::<bool>()).collect();
    VariablePartition::from_hidden(n, &hidden).unwrap()
}

pub fn random_data(r: &mut impl Rng, n: usize, count: usize) -> Vec<Configuration> {
    (0..count)
        .map(|_| Configuration::from_bits((0..n).map(|_| r.random::<bool>() as u8).collect()).unwrap())
        .collect()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
