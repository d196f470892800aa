//! Temporal evaluation: split, metrics, the feature ablation, sliding-window
//! AUC and the 2-D projection / density exports.

mod metrics;
mod project;
mod split;
mod window;

use std::collections::BTreeMap;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};

pub use metrics::{accuracy, auc};
pub use project::{kde_at, kde_grid, kde_on, linspace, padded_bounds, project_2d, scott_bandwidth, KdeGrid, Projection};
pub use split::{temporal_split, train_size, TemporalSplit};
pub use window::{day_aligned_period, sliding_window, sliding_window_over, Prediction, WindowStat, DAY_SECS};

use crate::embed::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::features::{assemble, FeatureContext, FeatureMask, FeatureVector, HistoryIndex, Vocabulary};
use crate::ingest::{Dataset, StanceLabel, TweetRecord};
use crate::model::{self, classify_proba, Design, LogRegModel, TrainParams};

/// Percentage change of `metric` relative to `baseline`.
pub fn gain_pct(metric: f64, baseline: f64) -> f64 {
    100.0 * (metric - baseline) / baseline
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub split_frac: f64,
    pub vocab_size: usize,
    pub lambda: f64,
    pub epochs: usize,
    pub lr: f64,
    pub threshold: f64,
    pub window_days: u32,
    pub stride_days: u32,
    pub masks: Vec<FeatureMask>,
    pub kde_grid: usize,
    /// Fixed KDE bandwidth; Scott's rule per group when absent.
    pub bandwidth: Option<f64>,
    /// Restricts the projection to users active in `[active_from, active_to)`.
    pub active_from: Option<i64>,
    pub active_to: Option<i64>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            split_frac: 0.7,
            vocab_size: 1000,
            lambda: 1e-4,
            epochs: 1000,
            lr: 0.1,
            threshold: 0.5,
            window_days: 7,
            stride_days: 1,
            masks: FeatureMask::ABLATION.to_vec(),
            kde_grid: 100,
            bandwidth: None,
            active_from: None,
            active_to: None,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if !(self.split_frac > 0.0 && self.split_frac < 1.0) {
            errs.push(format!("split_frac must be in (0,1), got {}", self.split_frac));
        }
        if self.vocab_size == 0 {
            errs.push("vocab_size must be positive".into());
        }
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            errs.push(format!("lambda must be non-negative, got {}", self.lambda));
        }
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            errs.push(format!("lr must be positive, got {}", self.lr));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            errs.push(format!("threshold must be in [0,1], got {}", self.threshold));
        }
        if self.window_days == 0 || self.stride_days == 0 {
            errs.push("window_days and stride_days must be positive".into());
        }
        if self.masks.is_empty() {
            errs.push("at least one feature mask is required".into());
        }
        if self.kde_grid == 0 {
            errs.push("kde_grid must be positive".into());
        }
        if let Some(h) = self.bandwidth {
            if !(h > 0.0) {
                errs.push(format!("bandwidth must be positive, got {h}"));
            }
        }
        if let (Some(a), Some(b)) = (self.active_from, self.active_to) {
            if a >= b {
                errs.push(format!("active_from {a} must precede active_to {b}"));
            }
        }
        errs
    }

    pub fn active_filter(&self) -> Option<ActiveFilter> {
        if self.active_from.is_none() && self.active_to.is_none() {
            return None;
        }
        Some(ActiveFilter {
            from: self.active_from.unwrap_or(i64::MIN),
            to: self.active_to.unwrap_or(i64::MAX),
        })
    }

    pub fn train_params(&self) -> TrainParams {
        TrainParams {
            lambda: self.lambda,
            epochs: self.epochs,
            lr: self.lr,
            init: model::Init::Zeros,
        }
    }
}

/// Split, vocabulary and history shared by every mask of one evaluation.
pub struct Prepared<'a> {
    pub split: TemporalSplit<(&'a TweetRecord, StanceLabel)>,
    pub vocab: Vocabulary,
    pub history: HistoryIndex,
}

/// Splits the labeled tweets in time and fits the vocabulary on the
/// training part only. The history index holds every label; lookups only
/// see labels strictly earlier than the tweet being featurised.
pub fn prepare<'a>(d: &'a Dataset, cfg: &EvalConfig) -> Result<Prepared<'a>> {
    let labeled: Vec<(&TweetRecord, StanceLabel)> = d.labeled().collect();
    let split = temporal_split(&labeled, cfg.split_frac, |x| x.0.created_at)?;
    let vocab = Vocabulary::fit(split.train.iter().map(|x| x.0.text.as_str()), cfg.vocab_size)?;
    let history = HistoryIndex::new(labeled.iter().map(|(r, s)| (r.user_id, r.created_at, *s)));
    Ok(Prepared { split, vocab, history })
}

impl Prepared<'_> {
    pub fn features(&self, emb: &EmbeddingMatrix, mask: FeatureMask) -> (Vec<FeatureVector>, Vec<FeatureVector>) {
        let ctx = FeatureContext {
            vocab: &self.vocab,
            embeddings: emb,
            history: &self.history,
        };
        let build = |xs: &[(&TweetRecord, StanceLabel)]| -> Vec<FeatureVector> {
            xs.iter().map(|(r, s)| assemble(r, *s, &ctx, mask)).collect()
        };
        (build(&self.split.train), build(&self.split.test))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MaskResult {
    pub mask: FeatureMask,
    pub width: usize,
    pub auc: f64,
    pub accuracy: f64,
    /// Relative to the text-only row; absent for that row itself or when no
    /// text-only row was evaluated.
    pub auc_gain_pct: Option<f64>,
    pub accuracy_gain_pct: Option<f64>,
    pub final_train_loss: f64,
    pub windows: Vec<WindowStat>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SplitSummary {
    pub n_labeled: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub boundary_time: i64,
    pub test_pos: usize,
    pub test_neg: usize,
    pub vocab_terms: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub config_hash: String,
    pub embedding_model: String,
    pub seeds: BTreeMap<String, u64>,
    pub split: SplitSummary,
    pub rows: Vec<MaskResult>,
}

impl EvalReport {
    /// Pretty JSON with a fixed key order.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises") + "\n"
    }

    pub fn row(&self, mask: FeatureMask) -> Option<&MaskResult> {
        self.rows.iter().find(|r| r.mask == mask)
    }

    pub fn write_windows_csv<W: Write>(&self, mask: FeatureMask, mut w: W) -> io::Result<()> {
        writeln!(w, "window_start,window_end,n_pos,n_neg,auc")?;
        if let Some(row) = self.row(mask) {
            for s in &row.windows {
                let auc = s.auc.map(|a| a.to_string()).unwrap_or_default();
                writeln!(w, "{},{},{},{},{}", s.window_start, s.window_end, s.n_pos, s.n_neg, auc)?;
            }
        }
        Ok(())
    }
}

pub struct MaskOutcome {
    pub result: MaskResult,
    pub model: LogRegModel,
    pub train: Vec<FeatureVector>,
    pub test: Vec<FeatureVector>,
}

fn design(xs: &[FeatureVector]) -> Result<Design> {
    let dense: Vec<Vec<f64>> = xs.iter().map(FeatureVector::to_dense).collect();
    Design::from_dense(&dense)
}

/// Fits the classifier on training feature vectors.
pub fn fit(train: &[FeatureVector], cfg: &EvalConfig) -> Result<LogRegModel> {
    let y: Vec<StanceLabel> = train.iter().map(|f| f.label).collect();
    model::train(&design(train)?, &y, cfg.train_params())
}

/// Scores the test vectors and computes AUC, accuracy and the window series.
pub fn score(model: &LogRegModel, test: &[FeatureVector], mask: FeatureMask, cfg: &EvalConfig) -> Result<MaskResult> {
    let scores = model.predict_design(&design(test)?)?;
    let positive: Vec<bool> = test.iter().map(|f| f.label.is_positive()).collect();
    let predicted: Vec<StanceLabel> = scores.iter().map(|&s| classify_proba(s, cfg.threshold)).collect();
    let actual: Vec<StanceLabel> = test.iter().map(|f| f.label).collect();
    let preds: Vec<Prediction> = test
        .iter()
        .zip(&scores)
        .map(|(f, &score)| Prediction {
            created_at: f.created_at,
            score,
            label: f.label,
        })
        .collect();
    Ok(MaskResult {
        mask,
        width: model.dim(),
        auc: auc(&scores, &positive)?,
        accuracy: accuracy(&predicted, &actual)?,
        auc_gain_pct: None,
        accuracy_gain_pct: None,
        final_train_loss: model.final_loss,
        windows: sliding_window(&preds, cfg.window_days, cfg.stride_days),
    })
}

/// Trains on the training features of one mask and scores the test part.
pub fn evaluate_mask(p: &Prepared, emb: &EmbeddingMatrix, mask: FeatureMask, cfg: &EvalConfig) -> Result<MaskOutcome> {
    let (train, test) = p.features(emb, mask);
    let model = fit(&train, cfg)?;
    let result = score(&model, &test, mask, cfg)?;
    Ok(MaskOutcome { result, model, train, test })
}

/// Fills in gains relative to the text-only row, when there is one.
pub fn fill_gains(rows: &mut [MaskResult]) {
    let Some((base_auc, base_acc)) = rows
        .iter()
        .find(|r| r.mask == FeatureMask::TEXT)
        .map(|r| (r.auc, r.accuracy))
    else {
        return;
    };
    for r in rows.iter_mut().filter(|r| r.mask != FeatureMask::TEXT) {
        r.auc_gain_pct = Some(gain_pct(r.auc, base_auc));
        r.accuracy_gain_pct = Some(gain_pct(r.accuracy, base_acc));
    }
}

impl SplitSummary {
    pub fn new(p: &Prepared) -> Self {
        let test_pos = p.split.test.iter().filter(|x| x.1.is_positive()).count();
        SplitSummary {
            n_labeled: p.split.train.len() + p.split.test.len(),
            n_train: p.split.train.len(),
            n_test: p.split.test.len(),
            boundary_time: p.split.boundary_time,
            test_pos,
            test_neg: p.split.test.len() - test_pos,
            vocab_terms: p.vocab.len(),
        }
    }
}

pub struct Ablation {
    pub report: EvalReport,
    pub outcomes: Vec<MaskOutcome>,
}

/// Evaluates every configured mask on one shared temporal split.
pub fn run_ablation(
    d: &Dataset,
    emb: &EmbeddingMatrix,
    embedding_model: &str,
    cfg: &EvalConfig,
    config_hash: &str,
    seeds: BTreeMap<String, u64>,
) -> Result<Ablation> {
    let errs = cfg.validate();
    if !errs.is_empty() {
        return Err(Error::Config(errs.join("; ")));
    }
    let p = prepare(d, cfg)?;
    let outcomes = cfg
        .masks
        .iter()
        .map(|&m| evaluate_mask(&p, emb, m, cfg))
        .collect::<Result<Vec<_>>>()?;
    let mut rows: Vec<MaskResult> = outcomes.iter().map(|o| o.result.clone()).collect();
    fill_gains(&mut rows);
    let report = EvalReport {
        config_hash: config_hash.to_string(),
        embedding_model: embedding_model.to_string(),
        seeds,
        split: SplitSummary::new(&p),
        rows,
    };
    Ok(Ablation { report, outcomes })
}

/// Restricts the projection to users who posted within `[from, to)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ActiveFilter {
    pub from: i64,
    pub to: i64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectedUser {
    pub user_id: u64,
    pub xy: [f64; 2],
    pub group: StanceLabel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupDensity {
    pub users: Vec<ProjectedUser>,
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    pub pro: Vec<f64>,
    pub skeptic: Vec<f64>,
    pub bandwidth: [f64; 2],
    pub explained: [f64; 2],
}

impl GroupDensity {
    pub fn write_kde_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "x,y,density_pro,density_skeptic")?;
        let mut k = 0;
        for y in &self.ys {
            for x in &self.xs {
                writeln!(w, "{x},{y},{},{}", self.pro[k], self.skeptic[k])?;
                k += 1;
            }
        }
        Ok(())
    }

    pub fn write_points_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "user_id,x,y,group")?;
        for u in &self.users {
            writeln!(w, "{},{},{},{}", u.user_id, u.xy[0], u.xy[1], u.group.as_str())?;
        }
        Ok(())
    }
}

/// Projects the embeddings of users labeled in `tweets` to 2-D and
/// estimates one density per stance group on a shared grid. A user's
/// group is the majority of their labels; tied users are left out, as are
/// users without an embedding row.
pub fn group_density(
    d: &Dataset,
    tweets: &[(&TweetRecord, StanceLabel)],
    emb: &EmbeddingMatrix,
    filter: Option<ActiveFilter>,
    grid: usize,
    bandwidth: Option<f64>,
) -> Result<GroupDensity> {
    let active: Option<std::collections::HashSet<u64>> = filter.map(|f| {
        d.records()
            .iter()
            .filter(|r| r.created_at >= f.from && r.created_at < f.to)
            .map(|r| r.user_id)
            .collect()
    });
    let mut votes: std::collections::BTreeMap<u64, (usize, usize)> = Default::default();
    for (r, s) in tweets {
        let e = votes.entry(r.user_id).or_default();
        if s.is_positive() {
            e.1 += 1;
        } else {
            e.0 += 1;
        }
    }
    let mut ids = Vec::new();
    let mut groups = Vec::new();
    let mut rows = Vec::new();
    for (&u, &(pro, sk)) in &votes {
        if pro == sk || active.as_ref().is_some_and(|a| !a.contains(&u)) {
            continue;
        }
        let Some(row) = emb.row_for_user(u) else { continue };
        if row.iter().all(|&x| x == 0.0) {
            continue;
        }
        ids.push(u);
        groups.push(StanceLabel::from_positive(sk > pro));
        rows.push(row.to_vec());
    }
    let proj = project_2d(&rows)?;
    let pick = |want: StanceLabel| -> Vec<[f64; 2]> {
        proj.coords
            .iter()
            .zip(&groups)
            .filter(|(_, &g)| g == want)
            .map(|(c, _)| *c)
            .collect()
    };
    let pro_pts = pick(StanceLabel::ProVax);
    let sk_pts = pick(StanceLabel::VaxSkeptic);
    let h_pro = bandwidth.unwrap_or_else(|| scott_bandwidth(&pro_pts));
    let h_sk = bandwidth.unwrap_or_else(|| scott_bandwidth(&sk_pts));
    let (lo, hi) = padded_bounds(&proj.coords, 3.0 * h_pro.max(h_sk));
    let xs = linspace(lo[0], hi[0], grid);
    let ys = linspace(lo[1], hi[1], grid);
    let pro = kde_on(&pro_pts, h_pro, &xs, &ys).density;
    let skeptic = kde_on(&sk_pts, h_sk, &xs, &ys).density;
    let users = ids
        .into_iter()
        .zip(proj.coords)
        .zip(groups)
        .map(|((user_id, xy), group)| ProjectedUser { user_id, xy, group })
        .collect();
    Ok(GroupDensity {
        users,
        xs,
        ys,
        pro,
        skeptic,
        bandwidth: [h_pro, h_sk],
        explained: proj.explained,
    })
}
