use std::thread;

use rand::Rng;

use crate::graph::ReplyGraph;
use crate::util;

const WALK_STREAM: u64 = 0x5741_4c4b;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WalkParams {
    pub walks_per_node: usize,
    pub walk_length: usize,
    /// Step with probability proportional to edge weight instead of uniformly.
    pub weighted: bool,
    pub threads: usize,
}

impl Default for WalkParams {
    fn default() -> Self {
        WalkParams {
            walks_per_node: 10,
            walk_length: 80,
            weighted: false,
            threads: 1,
        }
    }
}

/// Truncated random walks, `walks_per_node` rounds over all nodes.
/// Walk `r * n_nodes + v` is round `r` started at node `v`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WalkCorpus {
    pub walks: Vec<Vec<u32>>,
    pub walk_length: usize,
    pub walks_per_node: usize,
    pub seed: u64,
    pub n_nodes: usize,
}

impl WalkCorpus {
    /// Occurrences of each node across all walks.
    pub fn node_counts(&self) -> Vec<u64> {
        let mut counts = vec![0u64; self.n_nodes];
        for w in &self.walks {
            for &v in w {
                counts[v as usize] += 1;
            }
        }
        counts
    }
}

fn walks_from(g: &ReplyGraph, start: usize, params: &WalkParams, seed: u64, cum: &[Vec<u64>]) -> Vec<Vec<u32>> {
    // Each start node owns its generator, so the corpus does not depend on
    // how nodes are spread across threads.
    let mut rng = util::rng(util::derive_seed(seed, WALK_STREAM, start as u64));
    (0..params.walks_per_node)
        .map(|_| {
            let mut walk = Vec::with_capacity(params.walk_length);
            walk.push(start as u32);
            let mut cur = start;
            while walk.len() < params.walk_length {
                let nbrs = g.neighbors(cur);
                if nbrs.is_empty() {
                    break;
                }
                let pick = if params.weighted {
                    let c = &cum[cur];
                    let r = rng.gen_range(0..*c.last().unwrap());
                    c.partition_point(|&x| x <= r)
                } else {
                    rng.gen_range(0..nbrs.len())
                };
                cur = nbrs[pick].0 as usize;
                walk.push(cur as u32);
            }
            walk
        })
        .collect()
}

/// `walks_per_node` walks of up to `walk_length` nodes from every node.
/// Isolated nodes yield single-node walks.
pub fn generate_walks(g: &ReplyGraph, params: &WalkParams, seed: u64) -> WalkCorpus {
    assert!(params.walks_per_node >= 1 && params.walk_length >= 1);
    let n = g.n_nodes();
    let cum: Vec<Vec<u64>> = if params.weighted {
        (0..n)
            .map(|v| {
                let mut acc = 0u64;
                g.neighbors(v)
                    .iter()
                    .map(|&(_, w)| {
                        acc += w as u64;
                        acc
                    })
                    .collect()
            })
            .collect()
    } else {
        Vec::new()
    };

    let threads = params.threads.max(1).min(n.max(1));
    let per_node: Vec<Vec<Vec<u32>>> = if threads <= 1 {
        (0..n).map(|v| walks_from(g, v, params, seed, &cum)).collect()
    } else {
        let chunk = n.div_ceil(threads);
        thread::scope(|s| {
            let handles: Vec<_> = (0..threads)
                .map(|t| {
                    let cum = &cum;
                    s.spawn(move || {
                        (t * chunk..((t + 1) * chunk).min(n))
                            .map(|v| walks_from(g, v, params, seed, cum))
                            .collect::<Vec<_>>()
                    })
                })
                .collect();
            handles
                .into_iter()
                .flat_map(|h| h.join().expect("walk worker panicked"))
                .collect()
        })
    };

    let mut walks = vec![Vec::new(); n * params.walks_per_node];
    for (v, node_walks) in per_node.into_iter().enumerate() {
        for (r, w) in node_walks.into_iter().enumerate() {
            walks[r * n + v] = w;
        }
    }
    WalkCorpus {
        walks,
        walk_length: params.walk_length,
        walks_per_node: params.walks_per_node,
        seed,
        n_nodes: n,
    }
}

/// Symmetric `(target, context)` pairs at fixed walk offsets. Pairs are
/// produced lazily so a corpus can be replayed once per epoch.
#[derive(Debug, Clone)]
pub struct PairStream<'a> {
    corpus: &'a WalkCorpus,
    offsets: Vec<usize>,
}

/// Pairs at exactly offset `scale`.
pub fn extract_pairs(corpus: &WalkCorpus, scale: usize) -> PairStream<'_> {
    PairStream::new(corpus, vec![scale])
}

impl<'a> PairStream<'a> {
    pub fn new(corpus: &'a WalkCorpus, offsets: Vec<usize>) -> Self {
        assert!(offsets.iter().all(|&k| k >= 1), "offsets must be positive");
        PairStream { corpus, offsets }
    }

    pub fn corpus(&self) -> &'a WalkCorpus {
        self.corpus
    }

    pub fn len(&self) -> usize {
        self.corpus
            .walks
            .iter()
            .map(|w| self.pairs_in(w.len()))
            .sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn pairs_in(&self, walk_len: usize) -> usize {
        self.offsets
            .iter()
            .map(|&k| 2 * walk_len.saturating_sub(k))
            .sum()
    }

    pub fn len_in(&self, walks: std::ops::Range<usize>) -> usize {
        self.corpus.walks[walks]
            .iter()
            .map(|w| self.pairs_in(w.len()))
            .sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        self.iter_walks(0..self.corpus.walks.len())
    }

    /// Pairs from a contiguous range of walks, in order: walk, position,
    /// offset, then `(w_i, w_i+k)` before `(w_i+k, w_i)`.
    pub fn iter_walks(&self, walks: std::ops::Range<usize>) -> impl Iterator<Item = (u32, u32)> + '_ {
        let offsets = &self.offsets;
        self.corpus.walks[walks].iter().flat_map(move |w| {
            (0..w.len()).flat_map(move |i| {
                offsets
                    .iter()
                    .filter(move |&&k| i + k < w.len())
                    .flat_map(move |&k| [(w[i], w[i + k]), (w[i + k], w[i])])
            })
        })
    }
}
