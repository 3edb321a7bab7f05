//! Random grid models and synthetic datasets.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::error::{invalid, Result};
use crate::exact::Enumerator;
use crate::model::{Configuration, GraphTopology, PairwiseModel, VariablePartition};
use crate::rng::{stream, StreamRole};
use crate::sampler::gibbs_sweep_free;

/// Desk-scale default for sweeps per generated sample.
pub const DEFAULT_SWEEPS_PER_SAMPLE: usize = 2000;

/// 4-neighbour lattice. Node `(r, c)` has index `r·cols + c`; each node adds
/// its right edge, then its lower edge.
pub fn grid_topology(rows: usize, cols: usize) -> Result<GraphTopology> {
    if rows == 0 || cols == 0 {
        return invalid(format!("grid dimensions must be positive, got {rows}x{cols}"));
    }
    let mut edges = Vec::with_capacity(rows * (cols - 1) + cols * (rows - 1));
    for r in 0..rows {
        for c in 0..cols {
            let i = r * cols + c;
            if c + 1 < cols {
                edges.push((i, i + 1));
            }
            if r + 1 < rows {
                edges.push((i, i + cols));
            }
        }
    }
    GraphTopology::new(rows * cols, &edges)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub rows: usize,
    pub cols: usize,
    pub bias_low: f64,
    pub bias_high: f64,
    /// Standard deviation of the Gaussian edge weights.
    pub weight_std: f64,
    pub hidden_fraction: f64,
}

impl GridSpec {
    pub fn new(rows: usize, cols: usize) -> Self {
        GridSpec {
            rows,
            cols,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows == 0 || self.cols == 0 {
            return invalid("grid dimensions must be positive");
        }
        if !(self.bias_low.is_finite() && self.bias_high.is_finite() && self.bias_low <= self.bias_high) {
            return invalid(format!("bad bias range [{}, {}]", self.bias_low, self.bias_high));
        }
        if !(self.weight_std.is_finite() && self.weight_std > 0.0) {
            return invalid(format!("weight std must be positive, got {}", self.weight_std));
        }
        if !(0.0..1.0).contains(&self.hidden_fraction) {
            return invalid(format!("hidden fraction must lie in [0, 1), got {}", self.hidden_fraction));
        }
        Ok(())
    }

    pub fn num_nodes(&self) -> usize {
        self.rows * self.cols
    }
}

impl Default for GridSpec {
    /// Biases on `[−3, 3]`, weights with variance 0.5, half the nodes hidden.
    fn default() -> Self {
        GridSpec {
            rows: 10,
            cols: 10,
            bias_low: -3.0,
            bias_high: 3.0,
            weight_std: 0.5f64.sqrt(),
            hidden_fraction: 0.5,
        }
    }
}

pub fn random_grid_model(spec: &GridSpec, seed: u64) -> Result<PairwiseModel> {
    spec.validate()?;
    let topology = grid_topology(spec.rows, spec.cols)?;
    let mut rng = stream(seed, StreamRole::ModelParams, 0, 0);
    let bias = (0..topology.num_nodes())
        .map(|_| rng.random_range(spec.bias_low..=spec.bias_high))
        .collect();
    let normal = Normal::new(0.0, spec.weight_std).map_err(|e| crate::ApcdError::InvalidInput(e.to_string()))?;
    let weights = (0..topology.num_edges()).map(|_| normal.sample(&mut rng)).collect();
    PairwiseModel::new(topology, bias, weights)
}

/// Parameters drawn i.i.d. from `Normal(0, std²)`, used to start training
/// away from the all-zero point, where hidden nodes are exchangeable and the
/// marginal likelihood gradient can vanish.
pub fn random_parameters(topology: GraphTopology, std: f64, seed: u64) -> Result<PairwiseModel> {
    if std == 0.0 {
        return Ok(PairwiseModel::zeros(topology));
    }
    let normal = Normal::new(0.0, std).map_err(|e| crate::ApcdError::InvalidInput(e.to_string()))?;
    let mut rng = stream(seed, StreamRole::ModelParams, 1, 0);
    let bias = (0..topology.num_nodes()).map(|_| normal.sample(&mut rng)).collect();
    let weights = (0..topology.num_edges()).map(|_| normal.sample(&mut rng)).collect();
    PairwiseModel::new(topology, bias, weights)
}

/// Each sample runs its own chain from a uniform random start for
/// `sweeps_per_sample` full sweeps.
pub fn generate_samples(model: &PairwiseModel, count: usize, sweeps_per_sample: usize, seed: u64) -> Vec<Configuration> {
    let n = model.num_nodes();
    (0..count)
        .into_par_iter()
        .map(|s| {
            let mut rng = stream(seed, StreamRole::DataSample, s as u64, 0);
            let bits = (0..n).map(|_| rng.random::<bool>() as u8).collect();
            let mut x = Configuration::from_bits(bits).expect("binary");
            for _ in 0..sweeps_per_sample {
                gibbs_sweep_free(model, &mut x, &mut rng);
            }
            x
        })
        .collect()
}

/// Independent exact draws by inverting the enumerated distribution.
pub fn sample_exact(model: &PairwiseModel, count: usize, seed: u64, enumerator: &Enumerator) -> Result<Vec<Configuration>> {
    let probs = enumerator.distribution(model)?;
    let mut cdf = Vec::with_capacity(probs.len());
    let mut acc = 0.0;
    for p in &probs {
        acc += p;
        cdf.push(acc);
    }
    let mut rng = stream(seed, StreamRole::ExactSample, 0, 0);
    let n = model.num_nodes();
    Ok((0..count)
        .map(|_| {
            let u: f64 = rng.random::<f64>() * acc;
            let idx = cdf.partition_point(|&c| c <= u).min(cdf.len() - 1);
            Configuration::from_index(idx as u64, n)
        })
        .collect())
}

/// `⌊fraction·|V|⌋` hidden nodes chosen uniformly without replacement.
pub fn select_hidden(topology: &GraphTopology, fraction: f64, seed: u64) -> Result<VariablePartition> {
    if !(0.0..1.0).contains(&fraction) {
        return invalid(format!("hidden fraction must lie in [0, 1), got {fraction}"));
    }
    let n = topology.num_nodes();
    let k = (fraction * n as f64).floor() as usize;
    let mut rng = stream(seed, StreamRole::HiddenSelection, 0, 0);
    let mut hidden = rand::seq::index::sample(&mut rng, n, k).into_vec();
    hidden.sort_unstable();
    VariablePartition::from_hidden(n, &hidden)
}

/// Splits off the last `⌊fraction·len⌋` items.
pub fn split_tail<T: Clone>(items: &[T], fraction: f64) -> (Vec<T>, Vec<T>) {
    let tail = ((fraction.clamp(0.0, 1.0)) * items.len() as f64).floor() as usize;
    let cut = items.len() - tail;
    (items[..cut].to_vec(), items[cut..].to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_sizes() {
        assert!(grid_topology(0, 3).is_err());
        for (r, c, n, e) in [(1, 1, 1, 0), (2, 2, 4, 4), (3, 3, 9, 12)] {
            let t = grid_topology(r, c).unwrap();
            assert_eq!((t.num_nodes(), t.num_edges()), (n, e));
        }
        let t = grid_topology(2, 2).unwrap();
        assert_eq!(t.edges(), &[(0, 1), (0, 2), (1, 3), (2, 3)]);
    }

    #[test]
    fn random_model_ranges_and_determinism() {
        let spec = GridSpec::new(5, 6);
        let a = random_grid_model(&spec, 3).unwrap();
        assert!(a.node_bias().iter().all(|b| (-3.0..=3.0).contains(b)));
        assert_eq!(a, random_grid_model(&spec, 3).unwrap());
        assert_ne!(a, random_grid_model(&spec, 4).unwrap());
    }

    #[test]
    fn weight_moments() {
        let spec = GridSpec::new(225, 225);
        let m = random_grid_model(&spec, 11).unwrap();
        let w = m.edge_weight();
        assert!(w.len() > 100_000);
        let (mean, var) = crate::stats::mean_and_variance(w);
        let n = w.len() as f64;
        assert!(mean.abs() < 3.0 * (0.5 / n).sqrt());
        // Var of the sample variance of a Gaussian is 2σ⁴/n.
        assert!((var - 0.5).abs() < 3.0 * (2.0 * 0.25 / n).sqrt());
    }

    #[test]
    fn zero_sweeps_return_initial_states_and_samples_are_deterministic() {
        let m = random_grid_model(&GridSpec::new(2, 3), 1).unwrap();
        let a = generate_samples(&m, 20, 0, 9);
        let b = generate_samples(&m, 20, 5, 9);
        assert_eq!(a.len(), 20);
        assert_ne!(a, b);
        assert_eq!(b, generate_samples(&m, 20, 5, 9));
        assert!(b.iter().all(|x| x.len() == 6));
    }

    #[test]
    fn hidden_selection() {
        let t = grid_topology(30, 30).unwrap();
        let p = select_hidden(&t, 0.5, 2).unwrap();
        assert_eq!(p.hidden().len(), 450);
        assert_eq!(p, select_hidden(&t, 0.5, 2).unwrap());
        assert!(select_hidden(&t, 0.0, 2).unwrap().hidden().is_empty());
        assert!(select_hidden(&t, 1.0, 2).is_err());
    }

    #[test]
    fn tail_split() {
        let (a, b) = split_tail(&[1, 2, 3, 4, 5], 0.2);
        assert_eq!(a, vec![1, 2, 3, 4]);
        assert_eq!(b, vec![5]);
    }
}
