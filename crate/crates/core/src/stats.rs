//! Statistics vectors and small numeric helpers shared by every module.
//!
//! A [`StatsVector`] lives in the space of sufficient statistics of the
//! pairwise binary family: one coordinate per node followed by one per edge.
//! The same layout is used for sufficient statistics of a single
//! configuration, mean parameters, empirical means and for gradients and the
//! canonical parameters themselves.

use crate::error::{invalid, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct StatsVector {
    pub node: Vec<f64>,
    pub edge: Vec<f64>,
}

impl StatsVector {
    pub fn zeros(num_nodes: usize, num_edges: usize) -> Self {
        StatsVector {
            node: vec![0.0; num_nodes],
            edge: vec![0.0; num_edges],
        }
    }

    pub fn new(node: Vec<f64>, edge: Vec<f64>) -> Self {
        StatsVector { node, edge }
    }

    /// Builds a vector from the flat layout (nodes first, then edges).
    pub fn from_flat(flat: &[f64], num_nodes: usize) -> Result<Self> {
        if flat.len() < num_nodes {
            return invalid(format!(
                "flat vector of length {} is shorter than the node block {}",
                flat.len(),
                num_nodes
            ));
        }
        Ok(StatsVector {
            node: flat[..num_nodes].to_vec(),
            edge: flat[num_nodes..].to_vec(),
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.node.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edge.len()
    }

    pub fn dim(&self) -> usize {
        self.node.len() + self.edge.len()
    }

    pub fn same_shape(&self, other: &StatsVector) -> bool {
        self.node.len() == other.node.len() && self.edge.len() == other.edge.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.node.iter().chain(self.edge.iter())
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.node.iter_mut().chain(self.edge.iter_mut())
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.iter().copied().collect()
    }

    pub fn dot(&self, other: &StatsVector) -> f64 {
        debug_assert!(self.same_shape(other));
        self.iter().zip(other.iter()).map(|(a, b)| a * b).sum()
    }

    /// `self += scale * other`
    pub fn axpy(&mut self, scale: f64, other: &StatsVector) {
        debug_assert!(self.same_shape(other));
        for (a, b) in self.iter_mut().zip(other.iter()) {
            *a += scale * b;
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for a in self.iter_mut() {
            *a *= factor;
        }
    }

    pub fn sub(&self, other: &StatsVector) -> StatsVector {
        debug_assert!(self.same_shape(other));
        StatsVector {
            node: self.node.iter().zip(&other.node).map(|(a, b)| a - b).collect(),
            edge: self.edge.iter().zip(&other.edge).map(|(a, b)| a - b).collect(),
        }
    }

    pub fn norm(&self) -> f64 {
        self.iter().map(|a| a * a).sum::<f64>().sqrt()
    }

    pub fn node_norm(&self) -> f64 {
        self.node.iter().map(|a| a * a).sum::<f64>().sqrt()
    }

    pub fn edge_norm(&self) -> f64 {
        self.edge.iter().map(|a| a * a).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.iter().fold(0.0, |m, a| m.max(a.abs()))
    }

    pub fn max_abs_diff(&self, other: &StatsVector) -> f64 {
        self.iter()
            .zip(other.iter())
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.iter().all(|a| a.is_finite())
    }
}

/// Coordinate-wise arithmetic mean of a non-empty list of statistics.
pub fn average_stats(stats: &[StatsVector]) -> Result<StatsVector> {
    let Some(first) = stats.first() else {
        return invalid("cannot average an empty list of statistics");
    };
    let mut acc = StatsVector::zeros(first.num_nodes(), first.num_edges());
    for s in stats {
        if !s.same_shape(first) {
            return invalid("statistics vectors have inconsistent dimensions");
        }
        acc.axpy(1.0, s);
    }
    acc.scale(1.0 / stats.len() as f64);
    Ok(acc)
}

/// Streaming log-sum-exp with a running max shift.
#[derive(Debug, Clone, Copy)]
pub struct LogSumExp {
    max: f64,
    sum: f64,
}

impl Default for LogSumExp {
    fn default() -> Self {
        LogSumExp {
            max: f64::NEG_INFINITY,
            sum: 0.0,
        }
    }
}

impl LogSumExp {
    pub fn add(&mut self, value: f64) {
        if value == f64::NEG_INFINITY {
            return;
        }
        if value > self.max {
            self.sum = self.sum * (self.max - value).exp() + 1.0;
            self.max = value;
        } else {
            self.sum += (value - self.max).exp();
        }
    }

    pub fn value(&self) -> f64 {
        if self.sum == 0.0 {
            f64::NEG_INFINITY
        } else {
            self.max + self.sum.ln()
        }
    }
}

pub fn log_sum_exp(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut acc = LogSumExp::default();
    for v in values {
        acc.add(v);
    }
    acc.value()
}

/// `log((1/n) Σ exp(v))`
pub fn log_mean_exp(values: &[f64]) -> f64 {
    log_sum_exp(values.iter().copied()) - (values.len() as f64).ln()
}

#[inline]
pub fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Mean and population variance.
pub fn mean_and_variance(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_node(node: [f64; 2], edge: f64) -> StatsVector {
        StatsVector::new(node.to_vec(), vec![edge])
    }

    #[test]
    fn average_of_single_element_is_identity() {
        let s = two_node([1.0, 0.0], 0.0);
        assert_eq!(average_stats(&[s.clone()]).unwrap(), s);
    }

    #[test]
    fn average_of_opposite_corners_is_midpoint() {
        let a = two_node([1.0, 1.0], 1.0);
        let b = two_node([0.0, 0.0], 0.0);
        assert_eq!(average_stats(&[a, b]).unwrap(), two_node([0.5, 0.5], 0.5));
    }

    #[test]
    fn average_is_order_invariant() {
        let list = vec![
            two_node([1.0, 1.0], 1.0),
            two_node([0.0, 1.0], 0.0),
            two_node([1.0, 0.0], 0.0),
        ];
        let mut rev = list.clone();
        rev.reverse();
        assert_eq!(average_stats(&list).unwrap(), average_stats(&rev).unwrap());
    }

    #[test]
    fn average_rejects_empty_and_ragged() {
        assert!(average_stats(&[]).is_err());
        let a = two_node([1.0, 1.0], 1.0);
        let b = StatsVector::new(vec![1.0], vec![]);
        assert!(average_stats(&[a, b]).is_err());
    }

    #[test]
    fn log_sum_exp_is_shift_stable() {
        let v = log_sum_exp([1000.0, 1000.0]);
        assert!((v - (1000.0 + 2f64.ln())).abs() < 1e-12);
        assert_eq!(log_sum_exp(std::iter::empty()), f64::NEG_INFINITY);
        let w = log_sum_exp([-1.0, 0.5, 3.0]);
        let direct = ((-1f64).exp() + 0.5f64.exp() + 3f64.exp()).ln();
        assert!((w - direct).abs() < 1e-14);
    }

    #[test]
    fn logistic_matches_definition_on_both_branches() {
        assert_eq!(logistic(0.0), 0.5);
        assert!((logistic(2.0) - 0.8807970779778823).abs() < 1e-15);
        assert!((logistic(-2.0) - (1.0 - 0.8807970779778823)).abs() < 1e-15);
        assert!(logistic(-800.0) >= 0.0);
        assert_eq!(logistic(800.0), 1.0);
    }
}
