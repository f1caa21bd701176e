//! Similarity scores between a reference network and a reconstruction.

use std::collections::HashSet;

use thiserror::Error;

use crate::graph::{Pair, WeightedNetwork};

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("dimension mismatch: {a} vs {b} nodes")]
    DimensionMismatch { a: usize, b: usize },
}

fn union_pairs(a: &WeightedNetwork, b: &WeightedNetwork) -> Vec<Pair> {
    let mut set: HashSet<Pair> = a.edges().map(|(p, _)| p).collect();
    set.extend(b.edges().map(|(p, _)| p));
    let mut v: Vec<Pair> = set.into_iter().collect();
    v.sort_unstable();
    v
}

/// Weighted overlap score in [0, 1]:
/// `1 - sum |W_ij - V_ij| / sum (|W_ij| + |V_ij|)`, and 1 when both networks
/// are empty.
pub fn jaccard_weighted(a: &WeightedNetwork, b: &WeightedNetwork) -> Result<f64, MetricError> {
    if a.n_nodes() != b.n_nodes() {
        return Err(MetricError::DimensionMismatch {
            a: a.n_nodes(),
            b: b.n_nodes(),
        });
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for (i, j) in union_pairs(a, b) {
        let wa = a.weight(i, j);
        let wb = b.weight(i, j);
        num += (wa - wb).abs();
        den += wa.abs() + wb.abs();
    }
    if den == 0.0 {
        return Ok(1.0);
    }
    Ok(1.0 - num / den)
}

/// The same overlap score applied to the binarized supports:
/// `1 - |symdiff| / (E_a + E_b)`, and 1 when both are empty.
pub fn jaccard_binary(a: &WeightedNetwork, b: &WeightedNetwork) -> Result<f64, MetricError> {
    if a.n_nodes() != b.n_nodes() {
        return Err(MetricError::DimensionMismatch {
            a: a.n_nodes(),
            b: b.n_nodes(),
        });
    }
    let sa: HashSet<Pair> = a.edges().map(|(p, _)| p).collect();
    let sb: HashSet<Pair> = b.edges().map(|(p, _)| p).collect();
    let inter = sa.intersection(&sb).count();
    let den = sa.len() + sb.len();
    if den == 0 {
        return Ok(1.0);
    }
    let symdiff = den - 2 * inter;
    Ok(1.0 - symdiff as f64 / den as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{WeightTarget, WeightedNetwork};

    fn net(n: usize, edges: &[(usize, usize, f64)]) -> WeightedNetwork {
        let mut w = WeightedNetwork::new(n, 1e-8, 1.0);
        for &(i, j, v) in edges {
            w.set_entry_target(i, j, WeightTarget::NewValue(v)).unwrap();
        }
        w
    }

    #[test]
    fn identical_nonempty_is_one() {
        let a = net(4, &[(0, 1, 0.5), (1, 2, -0.3)]);
        assert_eq!(jaccard_weighted(&a, &a).unwrap(), 1.0);
        assert_eq!(jaccard_binary(&a, &a).unwrap(), 1.0);
    }

    #[test]
    fn empty_vs_nonempty_is_zero() {
        let a = net(4, &[(0, 1, 0.5)]);
        let b = net(4, &[]);
        assert_eq!(jaccard_weighted(&a, &b).unwrap(), 0.0);
        assert_eq!(jaccard_binary(&a, &b).unwrap(), 0.0);
    }

    #[test]
    fn both_empty_is_one() {
        let a = net(4, &[]);
        assert_eq!(jaccard_weighted(&a, &a).unwrap(), 1.0);
        assert_eq!(jaccard_binary(&a, &a).unwrap(), 1.0);
    }

    #[test]
    fn single_entry_partial_overlap() {
        // W_01 = 1 vs 0.5: 1 - 0.5/1.5 = 2/3.
        let a = net(3, &[(0, 1, 1.0)]);
        let b = net(3, &[(0, 1, 0.5)]);
        let s = jaccard_weighted(&a, &b).unwrap();
        assert!((s - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn binary_overlap_score() {
        // Supports {a, b} vs {b, c}: symdiff 2 of total 4 -> 1/2.
        let a = net(4, &[(0, 1, 1.0), (1, 2, 1.0)]);
        let b = net(4, &[(1, 2, 1.0), (2, 3, 1.0)]);
        let s = jaccard_binary(&a, &b).unwrap();
        assert!((s - 0.5).abs() < 1e-12);
        // Disjoint supports.
        let c = net(4, &[(0, 3, 1.0)]);
        assert_eq!(jaccard_binary(&a, &c).unwrap(), 0.0);
    }

    #[test]
    fn symmetric_and_bounded() {
        let a = net(5, &[(0, 1, 0.7), (2, 3, -0.2)]);
        let b = net(5, &[(0, 1, 0.2), (1, 4, 0.9)]);
        let ab = jaccard_weighted(&a, &b).unwrap();
        let ba = jaccard_weighted(&b, &a).unwrap();
        assert_eq!(ab, ba);
        assert!((0.0..=1.0).contains(&ab));
        assert_eq!(
            jaccard_binary(&a, &b).unwrap(),
            jaccard_binary(&b, &a).unwrap()
        );
        assert!(matches!(
            jaccard_weighted(&a, &net(4, &[])),
            Err(MetricError::DimensionMismatch { .. })
        ));
    }
}
