//! Synthetic tweet/reply datasets with a planted community-stance link.
//!
//! Users are split into two stochastic-block-model communities (sized by
//! `pro_prior`). A user's stance equals their community's stance with
//! probability `rho`, otherwise it is redrawn from the prior, which keeps the
//! marginal stance rate at `pro_prior`. Every SBM edge becomes one or more
//! reply events. Tweet text mixes Zipf-distributed background words with
//! uniformly drawn stance-topic words; the two topic vocabularies share an
//! `overlap` fraction of their terms.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{Dataset, RawLabel, StanceLabel, TweetRecord};
use crate::util;

const DAY: i64 = 86_400;
const STREAM: u64 = 0x5e7d;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub users: usize,
    pub p_in: f64,
    pub p_out: f64,
    /// Probability that a user's stance is their community's stance.
    pub rho: f64,
    /// Marginal probability of a pro-vaccine user.
    pub pro_prior: f64,
    /// Probability that a single tweet follows its author's stance.
    pub tweet_consistency: f64,
    pub tweets_per_user: usize,
    /// Fraction of seed tweets annotated with a stance.
    pub label_fraction: f64,
    /// Additional fraction of seed tweets annotated as irrelevant.
    pub irrelevant_fraction: f64,
    /// Share of skeptic annotations written as `anti`.
    pub anti_share: f64,
    pub background_words: usize,
    pub topic_words: usize,
    /// Fraction of topic terms shared between the two stances.
    pub overlap: f64,
    /// Probability that a token is drawn from the stance topic.
    pub topic_rate: f64,
    pub words_per_tweet: usize,
    pub max_replies_per_edge: usize,
    pub days: u32,
    pub start_time: i64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            users: 2000,
            p_in: 0.02,
            p_out: 0.002,
            rho: 0.85,
            pro_prior: 0.72,
            tweet_consistency: 0.9,
            tweets_per_user: 4,
            label_fraction: 0.5,
            irrelevant_fraction: 0.05,
            anti_share: 0.25,
            background_words: 3000,
            topic_words: 200,
            overlap: 0.5,
            topic_rate: 0.15,
            words_per_tweet: 8,
            max_replies_per_edge: 3,
            days: 90,
            // 2021-01-07T00:00:00Z
            start_time: 1_609_977_600,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        for (name, v) in [
            ("p_in", self.p_in),
            ("p_out", self.p_out),
            ("rho", self.rho),
            ("pro_prior", self.pro_prior),
            ("tweet_consistency", self.tweet_consistency),
            ("label_fraction", self.label_fraction),
            ("irrelevant_fraction", self.irrelevant_fraction),
            ("anti_share", self.anti_share),
            ("overlap", self.overlap),
            ("topic_rate", self.topic_rate),
        ] {
            if !(0.0..=1.0).contains(&v) {
                errs.push(format!("synthetic.{name} must be in [0,1], got {v}"));
            }
        }
        if self.label_fraction + self.irrelevant_fraction > 1.0 {
            errs.push("synthetic.label_fraction + irrelevant_fraction must not exceed 1".into());
        }
        if self.users < 2 {
            errs.push("synthetic.users must be at least 2".into());
        }
        for (name, v) in [
            ("tweets_per_user", self.tweets_per_user),
            ("background_words", self.background_words),
            ("topic_words", self.topic_words),
            ("words_per_tweet", self.words_per_tweet),
            ("max_replies_per_edge", self.max_replies_per_edge),
        ] {
            if v == 0 {
                errs.push(format!("synthetic.{name} must be positive"));
            }
        }
        if self.days == 0 {
            errs.push("synthetic.days must be positive".into());
        }
        if self.start_time <= 0 {
            errs.push("synthetic.start_time must be positive".into());
        }
        errs
    }

    /// Size of the pro community; the rest of the users form the other one.
    pub fn pro_community_size(&self) -> usize {
        ((self.pro_prior * self.users as f64).round() as usize).min(self.users)
    }
}

/// Planted structure behind a generated dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticTruth {
    pub user_ids: Vec<u64>,
    pub community: Vec<usize>,
    pub stance: Vec<StanceLabel>,
}

pub fn user_id_of(index: usize) -> u64 {
    100_000 + index as u64
}

pub fn generate_synthetic(cfg: &SyntheticConfig, seed: u64) -> Result<Dataset> {
    generate_with_truth(cfg, seed).map(|(d, _)| d)
}

struct Lexicon {
    background: Vec<String>,
    background_cdf: Vec<f64>,
    topic: Vec<String>,
    /// First topic index of each stance's window.
    offsets: [usize; 2],
}

impl Lexicon {
    fn new(cfg: &SyntheticConfig) -> Self {
        let shared = (cfg.overlap * cfg.topic_words as f64).round() as usize;
        let shift = cfg.topic_words - shared;
        Lexicon {
            background: (0..cfg.background_words).map(|i| format!("w{i}")).collect(),
            background_cdf: zipf_cdf(cfg.background_words),
            topic: (0..cfg.topic_words + shift).map(|i| format!("t{i}")).collect(),
            offsets: [0, shift],
        }
    }

    fn text(&self, cfg: &SyntheticConfig, stance: StanceLabel, rng: &mut ChaCha8Rng) -> String {
        let offset = self.offsets[stance.is_positive() as usize];
        let words: Vec<&str> = (0..cfg.words_per_tweet)
            .map(|_| {
                if rng.gen_bool(cfg.topic_rate) {
                    self.topic[offset + rng.gen_range(0..cfg.topic_words)].as_str()
                } else {
                    self.background[sample_cdf(&self.background_cdf, rng)].as_str()
                }
            })
            .collect();
        words.join(" ")
    }
}

fn zipf_cdf(n: usize) -> Vec<f64> {
    let mut acc = 0.0;
    let mut cdf: Vec<f64> = (0..n)
        .map(|r| {
            acc += 1.0 / (r as f64 + 1.0);
            acc
        })
        .collect();
    for c in &mut cdf {
        *c /= acc;
    }
    cdf
}

fn sample_cdf(cdf: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let u: f64 = rng.gen();
    cdf.partition_point(|&c| c < u).min(cdf.len() - 1)
}

fn flip(s: StanceLabel) -> StanceLabel {
    StanceLabel::from_positive(!s.is_positive())
}

pub fn generate_with_truth(cfg: &SyntheticConfig, seed: u64) -> Result<(Dataset, SyntheticTruth)> {
    let errs = cfg.validate();
    if !errs.is_empty() {
        return Err(Error::Config(errs.join("; ")));
    }
    // separate streams, so text and labeling settings leave the graph alone
    let mut rng = util::rng(util::derive_seed(seed, STREAM, 0));
    let n = cfg.users;
    let n_pro = cfg.pro_community_size();

    let community: Vec<usize> = (0..n).map(|u| usize::from(u >= n_pro)).collect();
    let stance: Vec<StanceLabel> = community
        .iter()
        .map(|&c| {
            if rng.gen_bool(cfg.rho) {
                StanceLabel::from_positive(c == 1)
            } else {
                StanceLabel::from_positive(!rng.gen_bool(cfg.pro_prior))
            }
        })
        .collect();

    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            let p = if community[u] == community[v] {
                cfg.p_in
            } else {
                cfg.p_out
            };
            if p > 0.0 && rng.gen_bool(p) {
                edges.push((u, v));
            }
        }
    }

    let lex = Lexicon::new(cfg);
    let span = cfg.days as i64 * DAY;
    let tweet_stance = |s: StanceLabel, rng: &mut ChaCha8Rng| {
        if rng.gen_bool(cfg.tweet_consistency) {
            s
        } else {
            flip(s)
        }
    };

    let mut rng = util::rng(util::derive_seed(seed, STREAM, 1));
    let mut records = Vec::new();
    // per user: indices into `records` of their seed tweets
    let mut seeds_of: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut seed_stance = Vec::new();
    for u in 0..n {
        for _ in 0..cfg.tweets_per_user {
            let s = tweet_stance(stance[u], &mut rng);
            let idx = records.len();
            records.push(TweetRecord {
                tweet_id: idx as u64 + 1,
                user_id: user_id_of(u),
                parent_tweet_id: None,
                created_at: cfg.start_time + rng.gen_range(0..span),
                text: lex.text(cfg, s, &mut rng),
                raw_label: None,
            });
            seeds_of[u].push(idx);
            seed_stance.push(s);
        }
    }
    let n_seeds = records.len();

    for &(a, b) in &edges {
        let events = rng.gen_range(1..=cfg.max_replies_per_edge);
        for _ in 0..events {
            let (from, to) = if rng.gen_bool(0.5) { (a, b) } else { (b, a) };
            let parent = seeds_of[to][rng.gen_range(0..seeds_of[to].len())];
            let parent_time = records[parent].created_at;
            let s = tweet_stance(stance[from], &mut rng);
            let idx = records.len();
            records.push(TweetRecord {
                tweet_id: idx as u64 + 1,
                user_id: user_id_of(from),
                parent_tweet_id: Some(records[parent].tweet_id),
                created_at: parent_time + rng.gen_range(60..2 * DAY),
                text: lex.text(cfg, s, &mut rng),
                raw_label: None,
            });
        }
    }

    let mut rng = util::rng(util::derive_seed(seed, STREAM, 2));
    let mut order: Vec<usize> = (0..n_seeds).collect();
    order.shuffle(&mut rng);
    let n_labeled = (cfg.label_fraction * n_seeds as f64).round() as usize;
    let n_irrelevant = ((cfg.irrelevant_fraction * n_seeds as f64).round() as usize)
        .min(n_seeds - n_labeled);
    for (k, &i) in order.iter().enumerate() {
        records[i].raw_label = if k < n_labeled {
            Some(match seed_stance[i] {
                StanceLabel::ProVax => RawLabel::Pro,
                StanceLabel::VaxSkeptic if rng.gen_bool(cfg.anti_share) => RawLabel::Anti,
                StanceLabel::VaxSkeptic => RawLabel::Skeptic,
            })
        } else if k < n_labeled + n_irrelevant {
            Some(RawLabel::Irrelevant)
        } else {
            break;
        };
    }

    let truth = SyntheticTruth {
        user_ids: (0..n).map(user_id_of).collect(),
        community,
        stance,
    };
    Ok((Dataset::from_records(records)?, truth))
}
