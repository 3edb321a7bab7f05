//! Pairwise binary exponential-family model.
//!
//! `p_θ(x) ∝ exp(Σ_i θ_i x_i + Σ_(i,j)∈E θ_ij x_i x_j)` for `x ∈ {0,1}^V`.

use std::fmt;

use crate::error::{invalid, Result};
use crate::stats::StatsVector;

/// Undirected graph over binary variables.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GraphTopology {
    num_nodes: usize,
    edges: Vec<(usize, usize)>,
    /// Per node: `(neighbor, edge index)`.
    adjacency: Vec<Vec<(usize, usize)>>,
}

impl GraphTopology {
    /// Builds a topology from an edge list. Endpoint order within a pair is
    /// normalized so that `i < j`; the edge order is preserved.
    pub fn new(num_nodes: usize, edges: &[(usize, usize)]) -> Result<Self> {
        if num_nodes == 0 {
            return invalid("a topology needs at least one node");
        }
        let mut adjacency = vec![Vec::new(); num_nodes];
        let mut normalized = Vec::with_capacity(edges.len());
        let mut seen = std::collections::HashSet::with_capacity(edges.len());
        for (idx, &(a, b)) in edges.iter().enumerate() {
            if a >= num_nodes || b >= num_nodes {
                return invalid(format!("edge ({a}, {b}) references a node >= {num_nodes}"));
            }
            if a == b {
                return invalid(format!("self-loop on node {a}"));
            }
            let (i, j) = if a < b { (a, b) } else { (b, a) };
            if !seen.insert((i, j)) {
                return invalid(format!("duplicate edge ({i}, {j})"));
            }
            normalized.push((i, j));
            adjacency[i].push((j, idx));
            adjacency[j].push((i, idx));
        }
        Ok(GraphTopology {
            num_nodes,
            edges: normalized,
            adjacency,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn neighbors(&self, node: usize) -> &[(usize, usize)] {
        &self.adjacency[node]
    }

    pub fn edge_index(&self, a: usize, b: usize) -> Option<usize> {
        let (i, j) = if a < b { (a, b) } else { (b, a) };
        self.adjacency
            .get(i)?
            .iter()
            .find(|&&(n, _)| n == j)
            .map(|&(_, e)| e)
    }

    /// Dimension of the statistics / parameter space, `|V| + |E|`.
    pub fn stats_dim(&self) -> usize {
        self.num_nodes + self.edges.len()
    }

    pub fn zero_stats(&self) -> StatsVector {
        StatsVector::zeros(self.num_nodes, self.edges.len())
    }
}

/// A binary assignment to every node.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Configuration(Vec<u8>);

impl Configuration {
    pub fn zeros(len: usize) -> Self {
        Configuration(vec![0; len])
    }

    pub fn from_bits(bits: Vec<u8>) -> Result<Self> {
        if let Some(b) = bits.iter().find(|&&b| b > 1) {
            return invalid(format!("configuration entry {b} is not binary"));
        }
        Ok(Configuration(bits))
    }

    /// Decodes the low `len` bits of `index`, node 0 in the least significant bit.
    pub fn from_index(index: u64, len: usize) -> Self {
        Configuration((0..len).map(|i| ((index >> i) & 1) as u8).collect())
    }

    pub fn parse_bitstring(text: &str) -> Result<Self> {
        let bits = text
            .trim()
            .chars()
            .map(|c| match c {
                '0' => Ok(0u8),
                '1' => Ok(1u8),
                other => invalid(format!("unexpected character {other:?} in bit-string")),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Configuration(bits))
    }

    pub fn to_bitstring(&self) -> String {
        self.0.iter().map(|&b| if b == 1 { '1' } else { '0' }).collect()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    #[inline]
    pub fn get(&self, i: usize) -> u8 {
        self.0[i]
    }

    #[inline]
    pub fn set(&mut self, i: usize, value: u8) {
        debug_assert!(value <= 1);
        self.0[i] = value;
    }

    pub fn bits(&self) -> &[u8] {
        &self.0
    }

    pub fn check_for(&self, topology: &GraphTopology) -> Result<()> {
        if self.0.len() != topology.num_nodes() {
            return invalid(format!(
                "configuration has {} entries but the topology has {} nodes",
                self.0.len(),
                topology.num_nodes()
            ));
        }
        Ok(())
    }
}

impl fmt::Debug for Configuration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Configuration({})", self.to_bitstring())
    }
}

/// Split of the nodes into visible and hidden sets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VariablePartition {
    visible: Vec<usize>,
    hidden: Vec<usize>,
    is_hidden: Vec<bool>,
}

impl VariablePartition {
    pub fn from_hidden(num_nodes: usize, hidden: &[usize]) -> Result<Self> {
        let mut is_hidden = vec![false; num_nodes];
        for &h in hidden {
            if h >= num_nodes {
                return invalid(format!("hidden node {h} out of range for {num_nodes} nodes"));
            }
            if is_hidden[h] {
                return invalid(format!("hidden node {h} listed twice"));
            }
            is_hidden[h] = true;
        }
        let hidden: Vec<usize> = (0..num_nodes).filter(|&i| is_hidden[i]).collect();
        let visible: Vec<usize> = (0..num_nodes).filter(|&i| !is_hidden[i]).collect();
        Ok(VariablePartition {
            visible,
            hidden,
            is_hidden,
        })
    }

    pub fn all_visible(num_nodes: usize) -> Self {
        VariablePartition {
            visible: (0..num_nodes).collect(),
            hidden: Vec::new(),
            is_hidden: vec![false; num_nodes],
        }
    }

    pub fn visible(&self) -> &[usize] {
        &self.visible
    }

    pub fn hidden(&self) -> &[usize] {
        &self.hidden
    }

    pub fn num_nodes(&self) -> usize {
        self.is_hidden.len()
    }

    #[inline]
    pub fn is_hidden(&self, node: usize) -> bool {
        self.is_hidden[node]
    }

    pub fn check_for(&self, topology: &GraphTopology) -> Result<()> {
        if self.num_nodes() != topology.num_nodes() {
            return invalid(format!(
                "partition covers {} nodes but the topology has {}",
                self.num_nodes(),
                topology.num_nodes()
            ));
        }
        Ok(())
    }

    /// Copies the visible coordinates of `configuration` into a dense vector.
    pub fn visible_values(&self, configuration: &Configuration) -> Vec<f64> {
        self.visible
            .iter()
            .map(|&i| configuration.get(i) as f64)
            .collect()
    }
}

/// Canonical parameters bound to a topology.
#[derive(Debug, Clone, PartialEq)]
pub struct PairwiseModel {
    topology: GraphTopology,
    node_bias: Vec<f64>,
    edge_weight: Vec<f64>,
}

impl PairwiseModel {
    pub fn new(topology: GraphTopology, node_bias: Vec<f64>, edge_weight: Vec<f64>) -> Result<Self> {
        if node_bias.len() != topology.num_nodes() || edge_weight.len() != topology.num_edges() {
            return invalid(format!(
                "parameter dimension ({} biases, {} weights) does not match topology ({} nodes, {} edges)",
                node_bias.len(),
                edge_weight.len(),
                topology.num_nodes(),
                topology.num_edges()
            ));
        }
        if !node_bias.iter().chain(&edge_weight).all(|v| v.is_finite()) {
            return invalid("model parameters must be finite");
        }
        Ok(PairwiseModel {
            topology,
            node_bias,
            edge_weight,
        })
    }

    pub fn zeros(topology: GraphTopology) -> Self {
        let n = topology.num_nodes();
        let e = topology.num_edges();
        PairwiseModel {
            topology,
            node_bias: vec![0.0; n],
            edge_weight: vec![0.0; e],
        }
    }

    pub fn from_params(topology: GraphTopology, params: &StatsVector) -> Result<Self> {
        PairwiseModel::new(topology, params.node.clone(), params.edge.clone())
    }

    pub fn topology(&self) -> &GraphTopology {
        &self.topology
    }

    pub fn num_nodes(&self) -> usize {
        self.topology.num_nodes()
    }

    pub fn node_bias(&self) -> &[f64] {
        &self.node_bias
    }

    pub fn edge_weight(&self) -> &[f64] {
        &self.edge_weight
    }

    pub fn params(&self) -> StatsVector {
        StatsVector::new(self.node_bias.clone(), self.edge_weight.clone())
    }

    /// `θ ← θ + scale · direction`. Does not check finiteness; callers that
    /// can diverge use [`PairwiseModel::max_abs_param`].
    pub fn add_scaled(&mut self, scale: f64, direction: &StatsVector) {
        for (t, d) in self.node_bias.iter_mut().zip(&direction.node) {
            *t += scale * d;
        }
        for (t, d) in self.edge_weight.iter_mut().zip(&direction.edge) {
            *t += scale * d;
        }
    }

    pub fn max_abs_param(&self) -> f64 {
        self.node_bias
            .iter()
            .chain(&self.edge_weight)
            .fold(0.0f64, |m, v| if v.is_nan() { f64::NAN } else { m.max(v.abs()) })
    }

    /// The model with every parameter multiplied by `beta`.
    pub fn scaled(&self, beta: f64) -> PairwiseModel {
        PairwiseModel {
            topology: self.topology.clone(),
            node_bias: self.node_bias.iter().map(|v| v * beta).collect(),
            edge_weight: self.edge_weight.iter().map(|v| v * beta).collect(),
        }
    }

    /// `θ_i + Σ_j θ_ij x_j`, the logit of the full conditional of node `i`.
    #[inline]
    pub fn local_field(&self, x: &Configuration, i: usize) -> f64 {
        let mut field = self.node_bias[i];
        for &(j, e) in self.topology.neighbors(i) {
            if x.get(j) == 1 {
                field += self.edge_weight[e];
            }
        }
        field
    }

    /// `⟨θ, φ(x)⟩` without the dimension check.
    #[inline]
    pub(crate) fn energy_unchecked(&self, x: &Configuration) -> f64 {
        let mut total = 0.0;
        for (i, &b) in self.node_bias.iter().enumerate() {
            if x.get(i) == 1 {
                total += b;
            }
        }
        for (&(i, j), &w) in self.topology.edges().iter().zip(&self.edge_weight) {
            if x.get(i) == 1 && x.get(j) == 1 {
                total += w;
            }
        }
        total
    }
}

/// Sufficient statistics `φ(x)`: node entries `x_i`, edge entries `x_i x_j`.
pub fn suff_stats(topology: &GraphTopology, x: &Configuration) -> Result<StatsVector> {
    x.check_for(topology)?;
    Ok(suff_stats_unchecked(topology, x))
}

pub(crate) fn suff_stats_unchecked(topology: &GraphTopology, x: &Configuration) -> StatsVector {
    let node = x.bits().iter().map(|&b| b as f64).collect();
    let edge = topology
        .edges()
        .iter()
        .map(|&(i, j)| (x.get(i) & x.get(j)) as f64)
        .collect();
    StatsVector::new(node, edge)
}

/// Adds `φ(x)` into `acc` in place.
pub(crate) fn accumulate_stats(topology: &GraphTopology, x: &Configuration, acc: &mut StatsVector) {
    for (a, &b) in acc.node.iter_mut().zip(x.bits()) {
        *a += b as f64;
    }
    for (a, &(i, j)) in acc.edge.iter_mut().zip(topology.edges()) {
        *a += (x.get(i) & x.get(j)) as f64;
    }
}

/// `⟨θ, φ(x)⟩`.
pub fn log_unnormalized(model: &PairwiseModel, x: &Configuration) -> Result<f64> {
    x.check_for(model.topology())?;
    Ok(model.energy_unchecked(x))
}
