//! Tweet records, label normalisation and the line-delimited JSON reader.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::io::{self, BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Annotation as it appears in the input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RawLabel {
    Pro,
    Skeptic,
    Anti,
    Irrelevant,
}

impl RawLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            RawLabel::Pro => "pro",
            RawLabel::Skeptic => "skeptic",
            RawLabel::Anti => "anti",
            RawLabel::Irrelevant => "irrelevant",
        }
    }

    /// Anti-vaccine annotations fold into the skeptic class; irrelevant
    /// posts carry no stance.
    pub fn stance(self) -> Option<StanceLabel> {
        match self {
            RawLabel::Pro => Some(StanceLabel::ProVax),
            RawLabel::Skeptic | RawLabel::Anti => Some(StanceLabel::VaxSkeptic),
            RawLabel::Irrelevant => None,
        }
    }
}

impl FromStr for RawLabel {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "pro" => Ok(RawLabel::Pro),
            "skeptic" => Ok(RawLabel::Skeptic),
            "anti" => Ok(RawLabel::Anti),
            "irrelevant" => Ok(RawLabel::Irrelevant),
            other => Err(other.to_string()),
        }
    }
}

impl fmt::Display for RawLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Binary stance. `VaxSkeptic` is the positive class throughout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum StanceLabel {
    ProVax,
    VaxSkeptic,
}

impl StanceLabel {
    pub fn is_positive(self) -> bool {
        self == StanceLabel::VaxSkeptic
    }

    pub fn from_positive(positive: bool) -> Self {
        if positive {
            StanceLabel::VaxSkeptic
        } else {
            StanceLabel::ProVax
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            StanceLabel::ProVax => "pro",
            StanceLabel::VaxSkeptic => "skeptic",
        }
    }
}

impl FromStr for StanceLabel {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "pro" => Ok(StanceLabel::ProVax),
            "skeptic" => Ok(StanceLabel::VaxSkeptic),
            other => Err(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TweetRecord {
    pub tweet_id: u64,
    pub user_id: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub parent_tweet_id: Option<u64>,
    pub created_at: i64,
    pub text: String,
    #[serde(rename = "label", skip_serializing_if = "Option::is_none")]
    pub raw_label: Option<RawLabel>,
}

impl TweetRecord {
    pub fn stance(&self) -> Option<StanceLabel> {
        self.raw_label.and_then(RawLabel::stance)
    }

    fn check(&self) -> std::result::Result<(), String> {
        if self.created_at <= 0 {
            return Err(format!("created_at must be positive, got {}", self.created_at));
        }
        if self.parent_tweet_id == Some(self.tweet_id) {
            return Err(format!("tweet {} lists itself as parent", self.tweet_id));
        }
        Ok(())
    }
}

#[derive(Deserialize)]
struct WireRecord {
    tweet_id: u64,
    user_id: u64,
    #[serde(default)]
    parent_tweet_id: Option<u64>,
    created_at: i64,
    text: String,
    #[serde(default)]
    label: Option<String>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ParseOptions {
    /// Skip malformed lines instead of failing. Duplicate ids and unknown
    /// labels stay fatal.
    pub skip_bad_lines: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ParseReport {
    pub lines_read: usize,
    pub skipped_lines: usize,
}

/// Immutable, timestamp-ordered collection of tweets.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    records: Vec<TweetRecord>,
    users: Vec<u64>,
    labeled: Vec<(usize, StanceLabel)>,
}

impl Dataset {
    /// Validates and orders `records` (by `created_at`, then `tweet_id`).
    /// Reported line numbers are 1-based positions in `records`.
    pub fn from_records(records: Vec<TweetRecord>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(records.len());
        for (i, r) in records.iter().enumerate() {
            r.check().map_err(|message| Error::Parse { line: i + 1, message })?;
            if !seen.insert(r.tweet_id) {
                return Err(Error::DuplicateTweet {
                    line: i + 1,
                    tweet_id: r.tweet_id,
                });
            }
        }
        Ok(Self::assemble(records))
    }

    fn assemble(mut records: Vec<TweetRecord>) -> Self {
        records.sort_by_key(|r| (r.created_at, r.tweet_id));
        let mut users: Vec<u64> = records.iter().map(|r| r.user_id).collect();
        users.sort_unstable();
        users.dedup();
        let labeled = records
            .iter()
            .enumerate()
            .filter_map(|(i, r)| r.stance().map(|s| (i, s)))
            .collect();
        Dataset {
            records,
            users,
            labeled,
        }
    }

    pub fn records(&self) -> &[TweetRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Distinct user ids in ascending order; position is the dense node index.
    pub fn users(&self) -> &[u64] {
        &self.users
    }

    pub fn user_index(&self, user_id: u64) -> Option<usize> {
        self.users.binary_search(&user_id).ok()
    }

    /// Records carrying a stance label, in dataset order.
    pub fn labeled(&self) -> impl ExactSizeIterator<Item = (&TweetRecord, StanceLabel)> + '_ {
        self.labeled.iter().map(|&(i, s)| (&self.records[i], s))
    }

    pub fn labeled_len(&self) -> usize {
        self.labeled.len()
    }

    /// Number of records that reply to another tweet.
    pub fn reply_candidates(&self) -> usize {
        self.records
            .iter()
            .filter(|r| r.parent_tweet_id.is_some())
            .count()
    }

    /// Keeps only threads whose seed tweet gathered at least `min_replies`
    /// replies, counted recursively. Replies whose chain does not reach a
    /// seed in the dataset are dropped along with failing threads.
    pub fn retain_threads_with_replies(&self, min_replies: usize) -> Dataset {
        let by_id: HashMap<u64, usize> = self
            .records
            .iter()
            .enumerate()
            .map(|(i, r)| (r.tweet_id, i))
            .collect();
        let mut root: Vec<Option<usize>> = vec![None; self.records.len()];
        for i in 0..self.records.len() {
            // Follow parent links; cycles are impossible to root and stay None.
            let mut cur = i;
            let mut steps = 0;
            let found = loop {
                if let Some(r) = root[cur] {
                    break Some(r);
                }
                match self.records[cur].parent_tweet_id {
                    None => break Some(cur),
                    Some(p) => match by_id.get(&p) {
                        Some(&j) if steps < self.records.len() => {
                            cur = j;
                            steps += 1;
                        }
                        _ => break None,
                    },
                }
            };
            root[i] = found;
        }
        let mut replies = vec![0usize; self.records.len()];
        for (i, r) in root.iter().enumerate() {
            if let Some(r) = *r {
                if r != i {
                    replies[r] += 1;
                }
            }
        }
        let kept = self
            .records
            .iter()
            .zip(&root)
            .filter(|(_, r)| matches!(r, Some(r) if replies[*r] >= min_replies))
            .map(|(rec, _)| rec.clone())
            .collect();
        Dataset::assemble(kept)
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> io::Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// Counts of each class among labeled records and the pro fraction
/// (zero when nothing is labeled).
pub fn class_balance(d: &Dataset) -> (usize, usize, f64) {
    let pro = d.labeled().filter(|(_, s)| *s == StanceLabel::ProVax).count();
    let skeptic = d.labeled_len() - pro;
    let total = pro + skeptic;
    let frac = if total == 0 {
        0.0
    } else {
        pro as f64 / total as f64
    };
    (pro, skeptic, frac)
}

fn parse_line(line: &str, lineno: usize) -> Result<TweetRecord> {
    let wire: WireRecord = serde_json::from_str(line).map_err(|e| Error::Parse {
        line: lineno,
        message: e.to_string(),
    })?;
    let raw_label = match wire.label {
        None => None,
        Some(s) => Some(
            s.parse::<RawLabel>()
                .map_err(|value| Error::UnknownLabel { line: lineno, value })?,
        ),
    };
    let rec = TweetRecord {
        tweet_id: wire.tweet_id,
        user_id: wire.user_id,
        parent_tweet_id: wire.parent_tweet_id,
        created_at: wire.created_at,
        text: wire.text,
        raw_label,
    };
    rec.check().map_err(|message| Error::Parse {
        line: lineno,
        message,
    })?;
    Ok(rec)
}

/// Reads newline-delimited JSON tweet records. Blank lines are ignored.
pub fn parse_jsonl<R: BufRead>(reader: R, opts: ParseOptions) -> Result<(Dataset, ParseReport)> {
    let mut records = Vec::new();
    let mut seen = HashSet::new();
    let mut report = ParseReport::default();
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        report.lines_read += 1;
        let rec = match parse_line(&line, lineno) {
            Ok(r) => r,
            Err(Error::Parse { .. }) if opts.skip_bad_lines => {
                report.skipped_lines += 1;
                continue;
            }
            Err(e) => return Err(e),
        };
        if !seen.insert(rec.tweet_id) {
            return Err(Error::DuplicateTweet {
                line: lineno,
                tweet_id: rec.tweet_id,
            });
        }
        records.push(rec);
    }
    if report.skipped_lines > 0 {
        log::warn!("skipped {} malformed lines", report.skipped_lines);
    }
    Ok((Dataset::assemble(records), report))
}
