//! Text, history and embedding feature blocks.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::{self, BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::embed::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::ingest::{StanceLabel, TweetRecord};
use crate::util;

/// Lowercased alphanumeric runs of at least two characters. Whitespace
/// tokens starting with `http` or `@` are dropped first.
pub fn tokenize(text: &str) -> Vec<String> {
    let lower = text.to_lowercase();
    lower
        .split_whitespace()
        .filter(|w| !w.starts_with("http") && !w.starts_with('@'))
        .flat_map(|w| w.split(|c: char| !c.is_alphanumeric()))
        .filter(|t| t.chars().count() >= 2)
        .map(str::to_owned)
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    terms: Vec<String>,
    df: Vec<usize>,
    idf: Vec<f64>,
    index: HashMap<String, usize>,
    n_docs: usize,
}

impl Vocabulary {
    /// Keeps the `max_terms` terms with highest document frequency (ties
    /// lexicographic) and weights them by `ln((1 + N) / (1 + df)) + 1`.
    pub fn fit<'a, I>(docs: I, max_terms: usize) -> Result<Self>
    where
        I: IntoIterator<Item = &'a str>,
    {
        let mut df: BTreeMap<String, usize> = BTreeMap::new();
        let mut n_docs = 0;
        for doc in docs {
            n_docs += 1;
            let mut toks = tokenize(doc);
            toks.sort_unstable();
            toks.dedup();
            for t in toks {
                *df.entry(t).or_default() += 1;
            }
        }
        if n_docs == 0 {
            return Err(Error::InvalidInput("cannot fit a vocabulary on zero documents".into()));
        }
        let mut ranked: Vec<(String, usize)> = df.into_iter().collect();
        // BTreeMap order is lexicographic; a stable sort keeps it within ties
        ranked.sort_by(|a, b| b.1.cmp(&a.1));
        ranked.truncate(max_terms);
        let n = n_docs as f64;
        let idf = ranked
            .iter()
            .map(|(_, d)| ((1.0 + n) / (1.0 + *d as f64)).ln() + 1.0)
            .collect();
        let index = ranked.iter().enumerate().map(|(i, (t, _))| (t.clone(), i)).collect();
        let (terms, df) = ranked.into_iter().unzip();
        Ok(Vocabulary {
            terms,
            df,
            idf,
            index,
            n_docs,
        })
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn df(&self) -> &[usize] {
        &self.df
    }

    pub fn idf(&self) -> &[f64] {
        &self.idf
    }

    pub fn n_docs(&self) -> usize {
        self.n_docs
    }

    pub fn term_index(&self, term: &str) -> Option<usize> {
        self.index.get(term).copied()
    }

    /// Raw count × idf per term, L2-normalised; all-zero when no term of
    /// the vocabulary occurs.
    pub fn tfidf(&self, doc: &str) -> Vec<f64> {
        let mut v = vec![0.0; self.len()];
        for t in tokenize(doc) {
            if let Some(i) = self.term_index(&t) {
                v[i] += 1.0;
            }
        }
        for (x, idf) in v.iter_mut().zip(&self.idf) {
            *x *= idf;
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        }
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct HistoryStats {
    pub n_pro: usize,
    pub n_skeptic: usize,
    pub skeptic_ratio: f64,
    pub has_history: bool,
}

impl HistoryStats {
    pub fn to_array(self) -> [f64; 4] {
        [
            self.n_pro as f64,
            self.n_skeptic as f64,
            self.skeptic_ratio,
            if self.has_history { 1.0 } else { 0.0 },
        ]
    }
}

/// Per-user labeled timeline answering "what was known strictly before t".
#[derive(Debug, Clone, Default)]
pub struct HistoryIndex {
    // times ascending, with running skeptic counts
    by_user: HashMap<u64, (Vec<i64>, Vec<usize>)>,
}

impl HistoryIndex {
    pub fn new<I>(labels: I) -> Self
    where
        I: IntoIterator<Item = (u64, i64, StanceLabel)>,
    {
        let mut raw: HashMap<u64, Vec<(i64, bool)>> = HashMap::new();
        for (u, t, s) in labels {
            raw.entry(u).or_default().push((t, s.is_positive()));
        }
        let by_user = raw
            .into_iter()
            .map(|(u, mut v)| {
                v.sort_unstable();
                let times = v.iter().map(|x| x.0).collect();
                let mut acc = 0;
                let skeptic = v
                    .iter()
                    .map(|x| {
                        acc += x.1 as usize;
                        acc
                    })
                    .collect();
                (u, (times, skeptic))
            })
            .collect();
        HistoryIndex { by_user }
    }

    /// Statistics over the user's labels with timestamp strictly below `t`.
    /// Unknown users have an empty history.
    pub fn stats(&self, user_id: u64, t: i64) -> HistoryStats {
        let Some((times, skeptic)) = self.by_user.get(&user_id) else {
            return HistoryStats::default();
        };
        let k = times.partition_point(|&x| x < t);
        if k == 0 {
            return HistoryStats::default();
        }
        let n_skeptic = skeptic[k - 1];
        let n_pro = k - n_skeptic;
        HistoryStats {
            n_pro,
            n_skeptic,
            skeptic_ratio: n_skeptic as f64 / k as f64,
            has_history: true,
        }
    }
}

/// Which optional blocks to include; text is always present.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FeatureMask {
    pub history: bool,
    pub embedding: bool,
}

impl FeatureMask {
    pub const TEXT: FeatureMask = FeatureMask { history: false, embedding: false };
    pub const TEXT_HISTORY: FeatureMask = FeatureMask { history: true, embedding: false };
    pub const TEXT_EMBEDDING: FeatureMask = FeatureMask { history: false, embedding: true };
    pub const ALL: FeatureMask = FeatureMask { history: true, embedding: true };

    /// The four ablation rows, in report order.
    pub const ABLATION: [FeatureMask; 4] = [
        FeatureMask::TEXT,
        FeatureMask::TEXT_HISTORY,
        FeatureMask::TEXT_EMBEDDING,
        FeatureMask::ALL,
    ];

    pub fn widths(self, vocab: usize, dim: usize) -> BlockWidths {
        BlockWidths {
            text: vocab,
            history: if self.history { 4 } else { 0 },
            embedding: if self.embedding { dim } else { 0 },
        }
    }
}

impl fmt::Display for FeatureMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("text")?;
        if self.embedding {
            f.write_str("+embedding")?;
        }
        if self.history {
            f.write_str("+history")?;
        }
        Ok(())
    }
}

impl FromStr for FeatureMask {
    type Err = String;

    /// Comma- or plus-separated block names, e.g. `text,embedding`.
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let mut mask = FeatureMask::TEXT;
        let mut text = false;
        for part in s.split([',', '+']).map(str::trim) {
            match part {
                "text" => text = true,
                "history" => mask.history = true,
                "embedding" => mask.embedding = true,
                other => return Err(format!("unknown feature block {other:?}")),
            }
        }
        if !text {
            return Err(format!("feature mask {s:?} must include text"));
        }
        Ok(mask)
    }
}

impl Serialize for FeatureMask {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for FeatureMask {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockWidths {
    pub text: usize,
    pub history: usize,
    pub embedding: usize,
}

impl BlockWidths {
    pub fn total(self) -> usize {
        self.text + self.history + self.embedding
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub tweet_id: u64,
    pub created_at: i64,
    pub user_id: u64,
    pub label: StanceLabel,
    pub text: Vec<f64>,
    /// Empty when the mask excludes history.
    pub history: Vec<f64>,
    /// Empty when the mask excludes the embedding.
    pub embedding: Vec<f64>,
}

impl FeatureVector {
    pub fn widths(&self) -> BlockWidths {
        BlockWidths {
            text: self.text.len(),
            history: self.history.len(),
            embedding: self.embedding.len(),
        }
    }

    /// Blocks concatenated as text, history, embedding.
    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.text
            .iter()
            .chain(&self.history)
            .chain(&self.embedding)
            .copied()
    }

    pub fn to_dense(&self) -> Vec<f64> {
        self.values().collect()
    }
}

/// Everything needed to turn a labeled tweet into a feature vector.
pub struct FeatureContext<'a> {
    pub vocab: &'a Vocabulary,
    pub embeddings: &'a EmbeddingMatrix,
    pub history: &'a HistoryIndex,
}

pub fn assemble(
    tweet: &TweetRecord,
    label: StanceLabel,
    ctx: &FeatureContext,
    mask: FeatureMask,
) -> FeatureVector {
    let history = if mask.history {
        ctx.history.stats(tweet.user_id, tweet.created_at).to_array().to_vec()
    } else {
        Vec::new()
    };
    let embedding = if mask.embedding {
        match ctx.embeddings.row_for_user(tweet.user_id) {
            Some(r) => r.to_vec(),
            None => vec![0.0; ctx.embeddings.dim()],
        }
    } else {
        Vec::new()
    };
    FeatureVector {
        tweet_id: tweet.tweet_id,
        created_at: tweet.created_at,
        user_id: tweet.user_id,
        label,
        text: ctx.vocab.tfidf(&tweet.text),
        history,
        embedding,
    }
}

/// A feature file: block widths, the number of leading training rows, and
/// one row per labeled tweet in time order.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub widths: BlockWidths,
    pub train_rows: usize,
    pub rows: Vec<FeatureRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRow {
    pub tweet_id: u64,
    pub label: StanceLabel,
    pub values: Vec<f64>,
}

impl FeatureTable {
    pub fn from_vectors(train: &[FeatureVector], test: &[FeatureVector]) -> Result<Self> {
        let first = train
            .first()
            .or(test.first())
            .ok_or_else(|| Error::InvalidInput("no feature vectors".into()))?;
        let widths = first.widths();
        let rows = train
            .iter()
            .chain(test)
            .map(|f| {
                if f.widths() != widths {
                    return Err(Error::InvalidInput("inconsistent block widths".into()));
                }
                Ok(FeatureRow {
                    tweet_id: f.tweet_id,
                    label: f.label,
                    values: f.to_dense(),
                })
            })
            .collect::<Result<_>>()?;
        Ok(FeatureTable {
            widths,
            train_rows: train.len(),
            rows,
        })
    }

    pub fn write_text<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(
            w,
            "text={} history={} embedding={} train_rows={}",
            self.widths.text, self.widths.history, self.widths.embedding, self.train_rows
        )?;
        let mut line = String::new();
        for r in &self.rows {
            line.clear();
            line.push_str(&format!("{} {}", r.tweet_id, r.label.as_str()));
            for x in &r.values {
                line.push(' ');
                line.push_str(&x.to_string());
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    pub fn read_text<R: BufRead>(reader: R) -> Result<(Self, Option<String>)> {
        let bad = |m: String| Error::format("feature", m);
        let mut lines = reader.lines();
        let header = lines.next().ok_or_else(|| bad("empty file".into()))??;
        let mut fields = HashMap::new();
        for part in header.split_whitespace() {
            let (k, v) = part.split_once('=').ok_or_else(|| bad(format!("bad header {header:?}")))?;
            let v: usize = v.parse().map_err(|_| bad(format!("bad header value {part:?}")))?;
            fields.insert(k.to_string(), v);
        }
        let get = |k: &str| fields.get(k).copied().ok_or_else(|| bad(format!("header lacks {k}")));
        let widths = BlockWidths {
            text: get("text")?,
            history: get("history")?,
            embedding: get("embedding")?,
        };
        let train_rows = get("train_rows")?;
        let mut rows = Vec::new();
        let mut hash = None;
        for (i, line) in lines.enumerate() {
            let line = line?;
            let t = line.trim();
            if t.is_empty() {
                continue;
            }
            if t.starts_with('#') {
                if let Some(h) = util::trailer_hash(t) {
                    hash = Some(h.to_string());
                }
                continue;
            }
            let lineno = i + 2;
            let mut parts = t.split_whitespace();
            let tweet_id = parts
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| bad(format!("line {lineno}: bad tweet id")))?;
            let label = parts
                .next()
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| bad(format!("line {lineno}: bad label")))?;
            let values: Vec<f64> = parts
                .map(str::parse)
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| bad(format!("line {lineno}: {e}")))?;
            if values.len() != widths.total() {
                return Err(bad(format!(
                    "line {lineno}: expected {} values, got {}",
                    widths.total(),
                    values.len()
                )));
            }
            rows.push(FeatureRow { tweet_id, label, values });
        }
        if train_rows > rows.len() {
            return Err(bad(format!("train_rows {train_rows} exceeds {} rows", rows.len())));
        }
        Ok((FeatureTable { widths, train_rows, rows }, hash))
    }
}
