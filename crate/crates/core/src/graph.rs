//! Undirected, weighted user reply graph.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::io::{self, BufRead, Write};

use crate::error::{Error, Result};
use crate::ingest::Dataset;

/// Adjacency-list graph over dense node indices. Node ids are kept in
/// ascending user-id order, neighbour lists in ascending index order.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ReplyGraph {
    node_ids: Vec<u64>,
    adjacency: Vec<Vec<(u32, u32)>>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BuildReport {
    pub reply_events: usize,
    pub self_replies: usize,
    /// Replies whose parent tweet is not in the dataset.
    pub dangling_parents: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FilterMode {
    /// One cut against the original degrees.
    #[default]
    SinglePass,
    /// Repeat until every remaining node passes (the k-core).
    Iterative,
}

impl ReplyGraph {
    /// Builds a graph from `(user_a, user_b, weight)` triples. Repeated pairs
    /// accumulate weight; `extra_nodes` adds isolated vertices.
    pub fn from_edges(
        edges: impl IntoIterator<Item = (u64, u64, u32)>,
        extra_nodes: impl IntoIterator<Item = u64>,
    ) -> Result<Self> {
        let mut agg: BTreeMap<(u64, u64), u32> = BTreeMap::new();
        let mut ids: Vec<u64> = extra_nodes.into_iter().collect();
        for (a, b, w) in edges {
            if a == b {
                return Err(Error::InvalidInput(format!("self-loop on node {a}")));
            }
            if w == 0 {
                return Err(Error::InvalidInput(format!("zero weight on edge {a}-{b}")));
            }
            let key = (a.min(b), a.max(b));
            *agg.entry(key).or_default() += w;
            ids.push(a);
            ids.push(b);
        }
        ids.sort_unstable();
        ids.dedup();
        let mut g = ReplyGraph {
            adjacency: vec![Vec::new(); ids.len()],
            node_ids: ids,
        };
        for ((a, b), w) in agg {
            let ia = g.node_index(a).unwrap();
            let ib = g.node_index(b).unwrap();
            g.adjacency[ia].push((ib as u32, w));
            g.adjacency[ib].push((ia as u32, w));
        }
        for list in &mut g.adjacency {
            list.sort_unstable();
        }
        Ok(g)
    }

    pub fn n_nodes(&self) -> usize {
        self.node_ids.len()
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn node_ids(&self) -> &[u64] {
        &self.node_ids
    }

    pub fn node_index(&self, user_id: u64) -> Option<usize> {
        self.node_ids.binary_search(&user_id).ok()
    }

    /// Distinct-neighbour count.
    pub fn degree(&self, node: usize) -> usize {
        self.adjacency[node].len()
    }

    pub fn neighbors(&self, node: usize) -> &[(u32, u32)] {
        &self.adjacency[node]
    }

    pub fn weight(&self, a: usize, b: usize) -> Option<u32> {
        let list = &self.adjacency[a];
        list.binary_search_by_key(&(b as u32), |&(n, _)| n)
            .ok()
            .map(|i| list[i].1)
    }

    /// Each undirected edge once, as `(a, b, weight)` with `a < b`.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, u32)> + '_ {
        self.adjacency.iter().enumerate().flat_map(|(a, list)| {
            list.iter()
                .filter(move |&&(b, _)| a < b as usize)
                .map(move |&(b, w)| (a, b as usize, w))
        })
    }

    fn induced(&self, keep: &[bool]) -> ReplyGraph {
        let mut remap = vec![u32::MAX; self.n_nodes()];
        let mut node_ids = Vec::new();
        for (i, &k) in keep.iter().enumerate() {
            if k {
                remap[i] = node_ids.len() as u32;
                node_ids.push(self.node_ids[i]);
            }
        }
        let adjacency = self
            .adjacency
            .iter()
            .zip(keep)
            .filter(|(_, &k)| k)
            .map(|(list, _)| {
                list.iter()
                    .filter(|&&(n, _)| keep[n as usize])
                    .map(|&(n, w)| (remap[n as usize], w))
                    .collect()
            })
            .collect();
        ReplyGraph {
            node_ids,
            adjacency,
        }
    }

    pub fn write_edge_list<W: Write>(&self, mut w: W) -> io::Result<()> {
        let mut lines: Vec<(u64, u64, u32)> = self
            .edges()
            .map(|(a, b, wt)| (self.node_ids[a], self.node_ids[b], wt))
            .collect();
        lines.sort_unstable();
        for (a, b, wt) in lines {
            writeln!(w, "{a} {b} {wt}")?;
        }
        Ok(())
    }

    /// Reads `user_a user_b weight` lines; `#` lines are comments. Returns
    /// the graph and the config hash found in the trailer, if any.
    pub fn read_edge_list<R: BufRead>(reader: R) -> Result<(Self, Option<String>)> {
        let mut edges = Vec::new();
        let mut hash = None;
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            let t = line.trim();
            if t.is_empty() {
                continue;
            }
            if t.starts_with('#') {
                if let Some(h) = crate::util::trailer_hash(t) {
                    hash = Some(h.to_string());
                }
                continue;
            }
            let bad = || Error::format("edge list", format!("line {}: {t:?}", i + 1));
            let mut parts = t.split_whitespace();
            let a = parts.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
            let b = parts.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
            let w = parts.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
            if parts.next().is_some() {
                return Err(bad());
            }
            edges.push((a, b, w));
        }
        Ok((Self::from_edges(edges, [])?, hash))
    }
}

/// One node per user in the dataset, one edge per replying pair.
pub fn build_graph(d: &Dataset) -> (ReplyGraph, BuildReport) {
    let author: HashMap<u64, u64> = d
        .records()
        .iter()
        .map(|r| (r.tweet_id, r.user_id))
        .collect();
    let mut report = BuildReport::default();
    let mut agg: HashMap<(usize, usize), u32> = HashMap::new();
    for r in d.records() {
        let Some(parent) = r.parent_tweet_id else {
            continue;
        };
        report.reply_events += 1;
        let Some(&parent_user) = author.get(&parent) else {
            report.dangling_parents += 1;
            continue;
        };
        if parent_user == r.user_id {
            report.self_replies += 1;
            continue;
        }
        let a = d.user_index(r.user_id).unwrap();
        let b = d.user_index(parent_user).unwrap();
        *agg.entry((a.min(b), a.max(b))).or_default() += 1;
    }
    let mut adjacency = vec![Vec::new(); d.users().len()];
    for (&(a, b), &w) in &agg {
        adjacency[a].push((b as u32, w));
        adjacency[b].push((a as u32, w));
    }
    for list in &mut adjacency {
        list.sort_unstable();
    }
    let g = ReplyGraph {
        node_ids: d.users().to_vec(),
        adjacency,
    };
    (g, report)
}

/// Drops nodes with fewer than `min_degree` distinct neighbours.
pub fn degree_filter(g: &ReplyGraph, min_degree: usize, mode: FilterMode) -> ReplyGraph {
    if min_degree == 0 {
        return g.clone();
    }
    let n = g.n_nodes();
    let mut keep: Vec<bool> = (0..n).map(|i| g.degree(i) >= min_degree).collect();
    if mode == FilterMode::Iterative {
        // Peel: a removed node lowers its neighbours' live degree.
        let mut live: Vec<usize> = (0..n).map(|i| g.degree(i)).collect();
        let mut queue: VecDeque<usize> = (0..n).filter(|&i| !keep[i]).collect();
        while let Some(v) = queue.pop_front() {
            for &(u, _) in g.neighbors(v) {
                let u = u as usize;
                live[u] -= 1;
                if keep[u] && live[u] < min_degree {
                    keep[u] = false;
                    queue.push_back(u);
                }
            }
        }
    }
    g.induced(&keep)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Components {
    /// Component id per node, numbered in order of smallest member.
    pub labels: Vec<usize>,
    pub count: usize,
}

impl Components {
    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.count];
        for &l in &self.labels {
            sizes[l] += 1;
        }
        sizes
    }
}

pub fn connected_components(g: &ReplyGraph) -> Components {
    let n = g.n_nodes();
    let mut labels = vec![usize::MAX; n];
    let mut count = 0;
    let mut queue = VecDeque::new();
    for start in 0..n {
        if labels[start] != usize::MAX {
            continue;
        }
        labels[start] = count;
        queue.push_back(start);
        while let Some(v) = queue.pop_front() {
            for &(u, _) in g.neighbors(v) {
                let u = u as usize;
                if labels[u] == usize::MAX {
                    labels[u] = count;
                    queue.push_back(u);
                }
            }
        }
        count += 1;
    }
    Components { labels, count }
}
