use rand::seq::SliceRandom;

use super::{EmbeddingMatrix, ModelTag};
use crate::graph::ReplyGraph;
use crate::util;

const LPA_STREAM: u64 = 0x4c50_41;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommunityAssignment {
    /// Dense community id per node, numbered by smallest member node.
    pub labels: Vec<usize>,
    pub n_communities: usize,
}

impl CommunityAssignment {
    fn from_raw(raw: &[usize]) -> Self {
        let mut map = vec![usize::MAX; raw.len()];
        let mut next = 0;
        let labels = raw
            .iter()
            .map(|&l| {
                if map[l] == usize::MAX {
                    map[l] = next;
                    next += 1;
                }
                map[l]
            })
            .collect();
        CommunityAssignment {
            labels,
            n_communities: next,
        }
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.n_communities];
        for &l in &self.labels {
            s[l] += 1;
        }
        s
    }
}

/// Most frequent label among `node`'s neighbours; ties go to the smallest
/// label. `None` for isolated nodes.
fn majority_label(g: &ReplyGraph, labels: &[usize], node: usize, scratch: &mut Vec<usize>) -> Option<usize> {
    scratch.clear();
    scratch.extend(g.neighbors(node).iter().map(|&(u, _)| labels[u as usize]));
    if scratch.is_empty() {
        return None;
    }
    scratch.sort_unstable();
    let (mut best, mut best_count) = (scratch[0], 0);
    let mut i = 0;
    while i < scratch.len() {
        let l = scratch[i];
        let mut j = i;
        while j < scratch.len() && scratch[j] == l {
            j += 1;
        }
        if j - i > best_count {
            best = l;
            best_count = j - i;
        }
        i = j;
    }
    Some(best)
}

/// Asynchronous label propagation with node order chosen by `order` for
/// each sweep. Stops after a sweep without changes or `max_iters` sweeps.
pub fn propagate_with_order<F>(g: &ReplyGraph, max_iters: usize, mut order: F) -> CommunityAssignment
where
    F: FnMut(usize, &mut Vec<usize>),
{
    let n = g.n_nodes();
    let mut labels: Vec<usize> = (0..n).collect();
    let mut nodes: Vec<usize> = (0..n).collect();
    let mut scratch = Vec::new();
    for iter in 0..max_iters {
        order(iter, &mut nodes);
        let mut changed = false;
        for &v in &nodes {
            if let Some(l) = majority_label(g, &labels, v, &mut scratch) {
                if l != labels[v] {
                    labels[v] = l;
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    CommunityAssignment::from_raw(&labels)
}

/// Label propagation with a seeded random node order per sweep.
pub fn label_propagation(g: &ReplyGraph, max_iters: usize, seed: u64) -> CommunityAssignment {
    let mut rng = util::rng(util::derive_seed(seed, LPA_STREAM, 0));
    propagate_with_order(g, max_iters.max(1), |_, nodes| nodes.shuffle(&mut rng))
}

/// One-hot membership over the `dim - 1` largest communities, with the last
/// column collecting all smaller ones. When there are fewer than `dim`
/// communities every community gets its own column.
pub fn community_features(c: &CommunityAssignment, node_ids: &[u64], dim: usize) -> EmbeddingMatrix {
    assert_eq!(c.labels.len(), node_ids.len());
    assert!(dim >= 1);
    let sizes = c.sizes();
    let mut rank: Vec<usize> = (0..c.n_communities).collect();
    rank.sort_by_key(|&k| (std::cmp::Reverse(sizes[k]), k));
    let own_columns = if c.n_communities <= dim { c.n_communities } else { dim - 1 };
    let mut column = vec![dim - 1; c.n_communities];
    for (r, &k) in rank.iter().take(own_columns).enumerate() {
        column[k] = r;
    }
    let mut data = vec![0.0; node_ids.len() * dim];
    for (i, &l) in c.labels.iter().enumerate() {
        data[i * dim + column[l]] = 1.0;
    }
    EmbeddingMatrix::new(node_ids.to_vec(), dim, data, ModelTag::CommunityIndicator)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_triangles() -> ReplyGraph {
        ReplyGraph::from_edges(
            [(0, 1, 1), (1, 2, 1), (0, 2, 1), (3, 4, 1), (4, 5, 1), (3, 5, 1), (2, 3, 1)],
            [],
        )
        .unwrap()
    }

    #[test]
    fn bridged_triangles_hand_simulated_order() {
        // Sweep order 5,4,3,2,1,0: 5 takes 3 (tie 3/4), 4 takes 3, 3 keeps 3,
        // 2 takes 0 (tie 0/1/3), then 1 and 0 take 0; the second sweep is stable.
        let c = propagate_with_order(&two_triangles(), 10, |_, nodes| {
            *nodes = (0..6).rev().collect();
        });
        assert_eq!(c.n_communities, 2);
        assert_eq!(c.labels, vec![0, 0, 0, 1, 1, 1]);
    }

    #[test]
    fn bridged_triangles_seeded() {
        let c = label_propagation(&two_triangles(), 50, 1);
        assert_eq!(c.labels.len(), 6);
        assert!(c.n_communities >= 1 && c.n_communities <= 2);
        assert_eq!(c, label_propagation(&two_triangles(), 50, 1));
    }

    #[test]
    fn edgeless_graph_keeps_singletons() {
        let g = ReplyGraph::from_edges([], [1, 2, 3]).unwrap();
        let c = label_propagation(&g, 5, 0);
        assert_eq!(c.n_communities, 3);
    }

    #[test]
    fn complete_graph_collapses() {
        let edges: Vec<_> = (0..5u64).flat_map(|a| (a + 1..5).map(move |b| (a, b, 1))).collect();
        let g = ReplyGraph::from_edges(edges, []).unwrap();
        for seed in 0..20 {
            assert_eq!(label_propagation(&g, 20, seed).n_communities, 1, "seed {seed}");
        }
    }

    #[test]
    fn indicator_columns() {
        let c = CommunityAssignment { labels: vec![0, 1, 1, 2, 2, 2], n_communities: 3 };
        let ids: Vec<u64> = (0..6).collect();
        let m = community_features(&c, &ids, 128);
        assert_eq!(m.dim(), 128);
        // largest community (2) takes column 0, then 1, then 0
        assert_eq!(m.row(3)[0], 1.0);
        assert_eq!(m.row(1)[1], 1.0);
        assert_eq!(m.row(0)[2], 1.0);
        for i in 0..6 {
            assert_eq!(m.row(i).iter().sum::<f64>(), 1.0);
            assert!(m.row(i)[3..].iter().all(|&x| x == 0.0));
        }
    }

    #[test]
    fn small_communities_share_other_column() {
        // sizes 5,4,3,2,1 -> with dim 4, ranks 4 and 5 land in column 3
        let mut labels = Vec::new();
        for (k, size) in [5usize, 4, 3, 2, 1].into_iter().enumerate() {
            labels.extend(std::iter::repeat(k).take(size));
        }
        let c = CommunityAssignment { labels: labels.clone(), n_communities: 5 };
        let ids: Vec<u64> = (0..labels.len() as u64).collect();
        let m = community_features(&c, &ids, 4);
        let fifth = labels.iter().position(|&l| l == 4).unwrap();
        assert_eq!(m.row(fifth), &[0.0, 0.0, 0.0, 1.0]);
        let fourth = labels.iter().position(|&l| l == 3).unwrap();
        assert_eq!(m.row(fourth), &[0.0, 0.0, 0.0, 1.0]);
        assert_eq!(m.row(0), &[1.0, 0.0, 0.0, 0.0]);
        for i in 0..labels.len() {
            assert_eq!(m.row(i).iter().sum::<f64>(), 1.0);
        }
    }
}
