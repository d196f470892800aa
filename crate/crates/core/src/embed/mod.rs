//! Node representations for the reply graph: DeepWalk, Walklets and
//! label-propagation community indicators.

mod community;
mod skipgram;
mod walks;

use std::fmt;
use std::io::{self, BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use community::{community_features, label_propagation, propagate_with_order, CommunityAssignment};
pub use skipgram::{
    pair_gradient, pair_loss, train_skipgram, NegativeTable, SkipGramModel, SkipGramParams, SkipGramTrainer,
};
pub use walks::{extract_pairs, generate_walks, PairStream, WalkCorpus, WalkParams};

use crate::error::{Error, Result};
use crate::graph::ReplyGraph;
use crate::util;

const SGD_STREAM: u64 = 0x5347_44;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    DeepWalk,
    Walklets,
    #[serde(rename = "labelprop")]
    LabelProp,
}

impl FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "deepwalk" => Ok(ModelKind::DeepWalk),
            "walklets" => Ok(ModelKind::Walklets),
            "labelprop" => Ok(ModelKind::LabelProp),
            other => Err(format!("unknown embedding model {other:?}")),
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::DeepWalk => "deepwalk",
            ModelKind::Walklets => "walklets",
            ModelKind::LabelProp => "labelprop",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelTag {
    DeepWalk,
    Walklets,
    CommunityIndicator,
}

/// Dense `n_nodes × dim` matrix keyed by user id.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    node_ids: Vec<u64>,
    dim: usize,
    data: Vec<f64>,
    tag: ModelTag,
}

impl EmbeddingMatrix {
    /// `node_ids` must be ascending.
    pub fn new(node_ids: Vec<u64>, dim: usize, data: Vec<f64>, tag: ModelTag) -> Self {
        assert_eq!(data.len(), node_ids.len() * dim);
        debug_assert!(node_ids.windows(2).all(|w| w[0] < w[1]));
        EmbeddingMatrix { node_ids, dim, data, tag }
    }

    pub fn n_nodes(&self) -> usize {
        self.node_ids.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn tag(&self) -> ModelTag {
        self.tag
    }

    pub fn node_ids(&self) -> &[u64] {
        &self.node_ids
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn row_for_user(&self, user_id: u64) -> Option<&[f64]> {
        self.node_ids.binary_search(&user_id).ok().map(|i| self.row(i))
    }

    /// Columns `[start, start + width)` as a new matrix.
    pub fn columns(&self, start: usize, width: usize) -> EmbeddingMatrix {
        assert!(start + width <= self.dim);
        let data = (0..self.n_nodes())
            .flat_map(|i| self.row(i)[start..start + width].iter().copied())
            .collect();
        EmbeddingMatrix::new(self.node_ids.clone(), width, data, self.tag)
    }

    /// Header `n_nodes dim`, then `user_id f_1 ... f_dim` per node.
    pub fn write_text<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "{} {}", self.n_nodes(), self.dim)?;
        let mut line = String::new();
        for (i, id) in self.node_ids.iter().enumerate() {
            line.clear();
            line.push_str(&id.to_string());
            for x in self.row(i) {
                line.push(' ');
                line.push_str(&x.to_string());
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    /// Inverse of [`write_text`](Self::write_text); also returns the config
    /// hash trailer when present.
    pub fn read_text<R: BufRead>(reader: R) -> Result<(Self, Option<String>)> {
        let bad = |m: String| Error::format("embedding", m);
        let mut lines = reader.lines();
        let header = lines.next().ok_or_else(|| bad("empty file".into()))??;
        let mut h = header.split_whitespace().map(str::parse::<usize>);
        let (n, dim) = match (h.next(), h.next(), h.next()) {
            (Some(Ok(n)), Some(Ok(d)), None) => (n, d),
            _ => return Err(bad(format!("bad header {header:?}"))),
        };
        let mut rows: Vec<(u64, Vec<f64>)> = Vec::with_capacity(n);
        let mut hash = None;
        for (i, line) in lines.enumerate() {
            let line = line?;
            let t = line.trim();
            if t.is_empty() {
                continue;
            }
            if t.starts_with('#') {
                if let Some(x) = util::trailer_hash(t) {
                    hash = Some(x.to_string());
                }
                continue;
            }
            let mut parts = t.split_whitespace();
            let id: u64 = parts
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| bad(format!("line {}: bad user id", i + 2)))?;
            let vals: Vec<f64> = parts
                .map(str::parse)
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| bad(format!("line {}: {e}", i + 2)))?;
            if vals.len() != dim {
                return Err(bad(format!("line {}: expected {dim} values, got {}", i + 2, vals.len())));
            }
            rows.push((id, vals));
        }
        if rows.len() != n {
            return Err(bad(format!("header promises {n} rows, found {}", rows.len())));
        }
        rows.sort_by_key(|r| r.0);
        if rows.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(bad("duplicate user id".into()));
        }
        let node_ids = rows.iter().map(|r| r.0).collect();
        let data = rows.into_iter().flat_map(|r| r.1).collect();
        // The text format does not record the producing model.
        Ok((EmbeddingMatrix::new(node_ids, dim, data, ModelTag::DeepWalk), hash))
    }
}

/// Every knob of the embedding stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbedConfig {
    pub model: ModelKind,
    pub dim: usize,
    pub walks_per_node: usize,
    pub walk_length: usize,
    /// DeepWalk context window.
    pub window: usize,
    /// Walklets offsets, one block of `dim / scales.len()` columns each.
    pub scales: Vec<usize>,
    pub epochs: usize,
    pub negatives: usize,
    pub alpha: f64,
    pub lr: f64,
    pub weighted: bool,
    pub labelprop_iters: usize,
    /// Lock-free parallel SGD across `threads`. Off by default: the result
    /// then depends only on the seed, not on the thread count.
    pub hogwild: bool,
}

impl Default for EmbedConfig {
    fn default() -> Self {
        EmbedConfig {
            model: ModelKind::Walklets,
            dim: 128,
            walks_per_node: 10,
            walk_length: 80,
            window: 5,
            scales: vec![1, 2, 3, 4],
            epochs: 5,
            negatives: 5,
            alpha: 0.75,
            lr: 0.025,
            weighted: false,
            labelprop_iters: 100,
            hogwild: false,
        }
    }
}

impl EmbedConfig {
    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        let positive = [
            ("dim", self.dim),
            ("walks_per_node", self.walks_per_node),
            ("walk_length", self.walk_length),
            ("window", self.window),
            ("epochs", self.epochs),
            ("negatives", self.negatives),
            ("labelprop_iters", self.labelprop_iters),
        ];
        for (name, v) in positive {
            if v == 0 {
                errs.push(format!("embed.{name} must be positive"));
            }
        }
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            errs.push(format!("embed.lr must be positive, got {}", self.lr));
        }
        if !self.alpha.is_finite() || self.alpha < 0.0 {
            errs.push(format!("embed.alpha must be non-negative, got {}", self.alpha));
        }
        if self.model == ModelKind::Walklets {
            if self.scales.is_empty() || self.scales.contains(&0) {
                errs.push("embed.scales must be a non-empty list of positive offsets".into());
            } else if self.dim % self.scales.len() != 0 {
                errs.push(format!(
                    "embed.dim {} is not divisible by the {} Walklets scales",
                    self.dim,
                    self.scales.len()
                ));
            }
        }
        errs
    }

    pub fn walk_params(&self, threads: usize) -> WalkParams {
        WalkParams {
            walks_per_node: self.walks_per_node,
            walk_length: self.walk_length,
            weighted: self.weighted,
            threads,
        }
    }

    pub fn sgd_params(&self, dim: usize, threads: usize) -> SkipGramParams {
        SkipGramParams {
            dim,
            epochs: self.epochs,
            negatives: self.negatives,
            alpha: self.alpha,
            lr_start: self.lr,
            threads: if self.hogwild { threads } else { 1 },
        }
    }
}

/// Seed for the skip-gram model trained on block `block` (DeepWalk uses 0).
fn sgd_seed(seed: u64, block: usize) -> u64 {
    util::derive_seed(seed, SGD_STREAM, block as u64)
}

/// Input vectors of a trained model, with rows of nodes that never occur in
/// a training pair set to zero.
fn to_rows(model: &SkipGramModel, pairs: &PairStream) -> Vec<Vec<f64>> {
    let mut seen = vec![false; model.n_nodes];
    for w in &pairs.corpus().walks {
        if w.len() > 1 {
            for &v in w {
                seen[v as usize] = true;
            }
        }
    }
    (0..model.n_nodes)
        .map(|i| {
            if seen[i] {
                model.input_row(i).to_vec()
            } else {
                vec![0.0; model.dim]
            }
        })
        .collect()
}

/// DeepWalk on a prepared corpus: one skip-gram model over offsets
/// `1..=window`.
pub fn deepwalk_from_corpus(
    g: &ReplyGraph,
    corpus: &WalkCorpus,
    window: usize,
    params: SkipGramParams,
    seed: u64,
) -> Result<EmbeddingMatrix> {
    if window == 0 {
        return Err(Error::Config("window must be at least 1".into()));
    }
    let pairs = PairStream::new(corpus, (1..=window).collect());
    let model = train_skipgram(&pairs, g.n_nodes(), params, sgd_seed(seed, 0))?;
    let data = to_rows(&model, &pairs).concat();
    Ok(EmbeddingMatrix::new(g.node_ids().to_vec(), params.dim, data, ModelTag::DeepWalk))
}

/// Walklets on a prepared corpus: an independent `dim / scales.len()`
/// model per offset, concatenated in the given scale order.
pub fn walklets_from_corpus(
    g: &ReplyGraph,
    corpus: &WalkCorpus,
    dim: usize,
    scales: &[usize],
    params: SkipGramParams,
    seed: u64,
) -> Result<EmbeddingMatrix> {
    if scales.is_empty() || dim % scales.len() != 0 {
        return Err(Error::Config(format!(
            "dimension {dim} is not divisible by {} scales",
            scales.len()
        )));
    }
    let sub = dim / scales.len();
    let n = g.n_nodes();
    let mut data = vec![0.0; n * dim];
    for (b, &k) in scales.iter().enumerate() {
        let pairs = extract_pairs(corpus, k);
        if pairs.is_empty() {
            // walks too short for this offset: leave the block at zero
            log::warn!("no walk pairs at offset {k}; block left empty");
            continue;
        }
        let model = train_skipgram(&pairs, n, SkipGramParams { dim: sub, ..params }, sgd_seed(seed, b))?;
        for (i, row) in to_rows(&model, &pairs).into_iter().enumerate() {
            data[i * dim + b * sub..i * dim + (b + 1) * sub].copy_from_slice(&row);
        }
    }
    Ok(EmbeddingMatrix::new(g.node_ids().to_vec(), dim, data, ModelTag::Walklets))
}

pub fn deepwalk(g: &ReplyGraph, cfg: &EmbedConfig, threads: usize, seed: u64) -> Result<EmbeddingMatrix> {
    let corpus = generate_walks(g, &cfg.walk_params(threads), seed);
    deepwalk_from_corpus(g, &corpus, cfg.window, cfg.sgd_params(cfg.dim, threads), seed)
}

pub fn walklets(g: &ReplyGraph, cfg: &EmbedConfig, threads: usize, seed: u64) -> Result<EmbeddingMatrix> {
    let corpus = generate_walks(g, &cfg.walk_params(threads), seed);
    walklets_from_corpus(g, &corpus, cfg.dim, &cfg.scales, cfg.sgd_params(cfg.dim, threads), seed)
}

/// Runs the configured model. An empty graph yields an empty matrix.
pub fn embed_graph(g: &ReplyGraph, cfg: &EmbedConfig, threads: usize, seed: u64) -> Result<EmbeddingMatrix> {
    let errs = cfg.validate();
    if !errs.is_empty() {
        return Err(Error::Config(errs.join("; ")));
    }
    let tag = match cfg.model {
        ModelKind::DeepWalk => ModelTag::DeepWalk,
        ModelKind::Walklets => ModelTag::Walklets,
        ModelKind::LabelProp => ModelTag::CommunityIndicator,
    };
    if g.edge_count() == 0 {
        return Ok(EmbeddingMatrix::new(
            g.node_ids().to_vec(),
            cfg.dim,
            vec![0.0; g.n_nodes() * cfg.dim],
            tag,
        ));
    }
    match cfg.model {
        ModelKind::DeepWalk => deepwalk(g, cfg, threads, seed),
        ModelKind::Walklets => walklets(g, cfg, threads, seed),
        ModelKind::LabelProp => {
            let c = label_propagation(g, cfg.labelprop_iters, seed);
            Ok(community_features(&c, g.node_ids(), cfg.dim))
        }
    }
}
