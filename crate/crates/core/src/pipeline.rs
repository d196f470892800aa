//! End-to-end orchestration: configuration, validation, the artifact hash
//! guard and the staged run.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::{self, File};
use std::io::{self, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::embed::{embed_graph, EmbedConfig, EmbeddingMatrix};
use crate::error::{Error, Result};
use crate::eval::{self, fill_gains, group_density, prepare, EvalConfig, EvalReport, GroupDensity, SplitSummary};
use crate::features::{FeatureMask, FeatureTable};
use crate::graph::{build_graph, degree_filter, FilterMode, ReplyGraph};
use crate::ingest::{parse_jsonl, Dataset, ParseOptions, ParseReport};
use crate::model::LogRegModel;
use crate::synth::{generate_synthetic, SyntheticConfig};
use crate::util;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Seeds {
    /// Synthetic data generation.
    pub data: u64,
    /// Walks, skip-gram training and label propagation.
    pub embedding: u64,
}

impl Default for Seeds {
    fn default() -> Self {
        Seeds { data: 42, embedding: 42 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// JSONL tweet file; mutually exclusive with `synthetic`.
    pub input: Option<PathBuf>,
    pub synthetic: Option<SyntheticConfig>,
    pub skip_bad_lines: bool,
    /// Keep only seed threads with at least this many replies.
    pub min_thread_replies: Option<usize>,
    pub min_degree: usize,
    /// Iterated k-core instead of a single degree cut.
    pub core: bool,
    pub seeds: Seeds,
    /// Worker cap; does not enter the config hash.
    pub threads: usize,
    pub embed: EmbedConfig,
    pub eval: EvalConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            input: None,
            synthetic: None,
            skip_bad_lines: false,
            min_thread_replies: None,
            min_degree: 3,
            core: false,
            seeds: Seeds::default(),
            threads: 1,
            embed: EmbedConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    pub fn filter_mode(&self) -> FilterMode {
        if self.core {
            FilterMode::Iterative
        } else {
            FilterMode::SinglePass
        }
    }

    /// Hex SHA-256 of the canonical JSON form of every setting that can
    /// change an artifact.
    pub fn config_hash(&self) -> String {
        let mut canon = self.clone();
        canon.threads = 0;
        let json = serde_json::to_vec(&canon).expect("config serialises");
        hex::encode(Sha256::digest(json))
    }

    /// Hash of the settings that determine the artifacts of `stage` and
    /// every stage before it. Eval and export depend on everything and use
    /// the full config hash.
    pub fn stage_hash(&self, stage: Stage) -> String {
        if stage >= Stage::Eval {
            return self.config_hash();
        }
        let mut canon = self.clone();
        canon.threads = 0;
        let c = serde_json::to_value(&canon).expect("config serialises");
        let mut v = serde_json::Map::new();
        let mut take = |key: &str, value: &serde_json::Value| {
            v.insert(key.to_string(), value.clone());
        };
        for k in ["input", "synthetic", "skip_bad_lines", "min_thread_replies", "min_degree", "core"] {
            take(k, &c[k]);
        }
        take("seed_data", &c["seeds"]["data"]);
        if stage >= Stage::Embed {
            take("embed", &c["embed"]);
            take("seed_embedding", &c["seeds"]["embedding"]);
        }
        if stage >= Stage::Features {
            take("split_frac", &c["eval"]["split_frac"]);
            take("vocab_size", &c["eval"]["vocab_size"]);
        }
        if stage >= Stage::Train {
            for k in ["lambda", "epochs", "lr"] {
                take(k, &c["eval"][k]);
            }
        }
        // serde_json maps are key-sorted, so this is canonical
        let json = serde_json::to_vec(&serde_json::Value::Object(v)).expect("view serialises");
        hex::encode(Sha256::digest(json))
    }

    pub fn guard(&self, stage: Stage, force: bool) -> HashGuard {
        HashGuard {
            expected: self.stage_hash(stage),
            force,
        }
    }

    pub fn seed_map(&self) -> BTreeMap<String, u64> {
        BTreeMap::from([
            ("data".to_string(), self.seeds.data),
            ("embedding".to_string(), self.seeds.embedding),
        ])
    }

    /// All range and consistency checks; `require_source` additionally
    /// demands exactly one of `input` and `synthetic`.
    pub fn check(&self, require_source: bool) -> Vec<String> {
        let mut errs = Vec::new();
        match (&self.input, &self.synthetic) {
            (Some(_), Some(_)) => errs.push("input and synthetic are mutually exclusive".into()),
            (None, None) if require_source => errs.push("either input or synthetic must be set".into()),
            _ => {}
        }
        if let Some(p) = &self.input {
            if !p.is_file() {
                errs.push(format!("input {} does not exist", p.display()));
            }
        }
        if let Some(s) = &self.synthetic {
            errs.extend(s.validate().into_iter().map(|e| format!("synthetic: {e}")));
        }
        if self.threads == 0 {
            errs.push("threads must be at least 1".into());
        }
        if self.min_thread_replies == Some(0) {
            errs.push("min_thread_replies must be positive when set".into());
        }
        errs.extend(self.embed.validate());
        errs.extend(self.eval.validate());
        errs
    }
}

/// Validates a full pipeline configuration, collecting every problem.
pub fn validate_config(cfg: &PipelineConfig) -> std::result::Result<(), Vec<String>> {
    let errs = cfg.check(true);
    if errs.is_empty() {
        Ok(())
    } else {
        Err(errs)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Config,
    Ingest,
    Graph,
    Embed,
    Features,
    Train,
    Eval,
    Export,
}

impl Stage {
    pub fn exit_code(self) -> i32 {
        match self {
            Stage::Config => 2,
            Stage::Ingest => 3,
            Stage::Graph => 4,
            Stage::Embed => 5,
            Stage::Features => 6,
            Stage::Train => 7,
            Stage::Eval => 8,
            Stage::Export => 9,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Stage::Config => "config",
            Stage::Ingest => "ingest",
            Stage::Graph => "graph",
            Stage::Embed => "embed",
            Stage::Features => "features",
            Stage::Train => "train",
            Stage::Eval => "eval",
            Stage::Export => "export",
        }
    }
}

#[derive(Debug, thiserror::Error)]
#[error("{} stage failed: {source}", stage.name())]
pub struct StageError {
    pub stage: Stage,
    #[source]
    pub source: Error,
}

pub trait AtStage<T> {
    fn at(self, stage: Stage) -> std::result::Result<T, StageError>;
}

impl<T, E: Into<Error>> AtStage<T> for std::result::Result<T, E> {
    fn at(self, stage: Stage) -> std::result::Result<T, StageError> {
        self.map_err(|e| StageError { stage, source: e.into() })
    }
}

/// Writes an artifact atomically, followed by the config-hash trailer.
pub fn write_artifact<F>(path: &Path, hash: Option<&str>, body: F) -> io::Result<()>
where
    F: FnOnce(&mut dyn Write) -> io::Result<()>,
{
    util::write_atomic(path, |w| {
        body(w)?;
        util::write_trailer(w, hash)
    })
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::Io(io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

pub fn read_dataset(path: &Path, skip_bad_lines: bool) -> Result<(Dataset, ParseReport)> {
    parse_jsonl(open(path)?, ParseOptions { skip_bad_lines })
}

pub fn read_graph(path: &Path) -> Result<(ReplyGraph, Option<String>)> {
    ReplyGraph::read_edge_list(open(path)?)
}

pub fn read_embeddings(path: &Path) -> Result<(EmbeddingMatrix, Option<String>)> {
    EmbeddingMatrix::read_text(open(path)?)
}

pub fn read_features(path: &Path) -> Result<(FeatureTable, Option<String>)> {
    FeatureTable::read_text(open(path)?)
}

pub fn read_model(path: &Path) -> Result<(LogRegModel, Option<String>)> {
    LogRegModel::read_text(open(path)?)
}

/// Refuses input artifacts produced under a different configuration.
#[derive(Debug, Clone)]
pub struct HashGuard {
    pub expected: String,
    pub force: bool,
}

impl HashGuard {
    pub fn check(&self, path: &Path, found: Option<&str>) -> Result<()> {
        match found {
            None => {
                log::warn!("{} carries no config hash", path.display());
                Ok(())
            }
            Some(h) if h == self.expected => Ok(()),
            Some(h) if self.force => {
                log::warn!("{} has config hash {h}, expected {}; continuing (--force)", path.display(), self.expected);
                Ok(())
            }
            Some(h) => Err(Error::HashMismatch {
                path: path.display().to_string(),
                found: h.to_string(),
                expected: self.expected.clone(),
            }),
        }
    }
}

/// The configured dataset: parsed from `input` or generated.
pub fn load_dataset(cfg: &PipelineConfig) -> Result<Dataset> {
    let d = match (&cfg.input, &cfg.synthetic) {
        (Some(p), _) => {
            let (d, report) = read_dataset(p, cfg.skip_bad_lines)?;
            if report.skipped_lines > 0 {
                log::warn!("skipped {} malformed lines of {}", report.skipped_lines, report.lines_read);
            }
            d
        }
        (None, Some(s)) => generate_synthetic(s, cfg.seeds.data)?,
        (None, None) => return Err(Error::Config("either input or synthetic must be set".into())),
    };
    Ok(match cfg.min_thread_replies {
        Some(k) => d.retain_threads_with_replies(k),
        None => d,
    })
}

/// Reply graph after the degree filter.
pub fn graph_stage(d: &Dataset, cfg: &PipelineConfig) -> ReplyGraph {
    let (g, report) = build_graph(d);
    log::info!(
        "reply graph: {} users, {} edges ({} reply events, {} self replies, {} dangling)",
        g.n_nodes(),
        g.edge_count(),
        report.reply_events,
        report.self_replies,
        report.dangling_parents
    );
    let f = degree_filter(&g, cfg.min_degree, cfg.filter_mode());
    log::info!("after degree filter {}: {} users, {} edges", cfg.min_degree, f.n_nodes(), f.edge_count());
    f
}

pub fn embed_stage(g: &ReplyGraph, cfg: &PipelineConfig) -> Result<EmbeddingMatrix> {
    embed_graph(g, &cfg.embed, cfg.threads, cfg.seeds.embedding)
}

/// File-name stem for a mask, e.g. `text_embedding_history`.
pub fn mask_stem(mask: FeatureMask) -> String {
    mask.to_string().replace('+', "_")
}

/// Writes the report and the plot-ready CSVs: one window series per mask,
/// the two group densities and the projected points.
pub fn write_eval_outputs(
    report_path: &Path,
    csv_dir: &Path,
    report: &EvalReport,
    density: &GroupDensity,
) -> io::Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for row in &report.rows {
        let path = csv_dir.join(format!("windows_{}.csv", mask_stem(row.mask)));
        util::write_atomic(&path, |w| report.write_windows_csv(row.mask, w))?;
        files.push(path);
    }
    let kde = csv_dir.join("kde.csv");
    util::write_atomic(&kde, |w| density.write_kde_csv(w))?;
    let points = csv_dir.join("projection.csv");
    util::write_atomic(&points, |w| density.write_points_csv(w))?;
    util::write_atomic(report_path, |w| w.write_all(report.to_json().as_bytes()))?;
    files.extend([kde, points, report_path.to_path_buf()]);
    Ok(files)
}

#[derive(Debug)]
pub struct RunOutput {
    pub report: EvalReport,
    pub files: Vec<PathBuf>,
}

pub const PARTIAL_MARKER: &str = ".partial";

/// Runs every stage and writes its artifacts under `out_dir`. While the run
/// is in progress `out_dir/.partial` names the current stage; it is removed
/// only on success.
pub fn run_pipeline(cfg: &PipelineConfig, out_dir: &Path) -> std::result::Result<RunOutput, StageError> {
    validate_config(cfg).map_err(|errs| StageError {
        stage: Stage::Config,
        source: Error::Config(errs.join("; ")),
    })?;
    let hash = cfg.config_hash();
    fs::create_dir_all(out_dir).at(Stage::Config)?;
    let marker = out_dir.join(PARTIAL_MARKER);
    let mark = |stage: Stage| fs::write(&marker, format!("{}\n", stage.name())).at(stage);
    let mut files = Vec::new();
    let mut save = |name: String, stage: Stage, body: &dyn Fn(&mut dyn Write) -> io::Result<()>| {
        let path = out_dir.join(name);
        write_artifact(&path, Some(&cfg.stage_hash(stage)), body).at(stage)?;
        files.push(path);
        Ok::<_, StageError>(())
    };

    mark(Stage::Ingest)?;
    let d = load_dataset(cfg).at(Stage::Ingest)?;
    log::info!("dataset: {} tweets, {} labeled, {} users", d.len(), d.labeled_len(), d.users().len());

    mark(Stage::Graph)?;
    let g = graph_stage(&d, cfg);
    save("graph.edges".into(), Stage::Graph, &|w| g.write_edge_list(w))?;

    mark(Stage::Embed)?;
    let emb = embed_stage(&g, cfg).at(Stage::Embed)?;
    save("embeddings.txt".into(), Stage::Embed, &|w| emb.write_text(w))?;

    mark(Stage::Features)?;
    let p = prepare(&d, &cfg.eval).at(Stage::Features)?;
    let mut rows = Vec::new();
    for &mask in &cfg.eval.masks {
        let stem = mask_stem(mask);
        mark(Stage::Features)?;
        let (train, test) = p.features(&emb, mask);
        let table = FeatureTable::from_vectors(&train, &test).at(Stage::Features)?;
        save(format!("features_{stem}.txt"), Stage::Features, &|w| table.write_text(w))?;

        mark(Stage::Train)?;
        let model = eval::fit(&train, &cfg.eval).at(Stage::Train)?;
        save(format!("model_{stem}.txt"), Stage::Train, &|w| model.write_text(w))?;

        mark(Stage::Eval)?;
        let row = eval::score(&model, &test, mask, &cfg.eval).at(Stage::Eval)?;
        log::info!("{mask}: auc {:.4} accuracy {:.4}", row.auc, row.accuracy);
        rows.push(row);
    }
    fill_gains(&mut rows);
    let report = EvalReport {
        config_hash: hash.clone(),
        embedding_model: cfg.embed.model.to_string(),
        seeds: cfg.seed_map(),
        split: SplitSummary::new(&p),
        rows,
    };

    mark(Stage::Export)?;
    let density = group_density(
        &d,
        &p.split.test,
        &emb,
        cfg.eval.active_filter(),
        cfg.eval.kde_grid,
        cfg.eval.bandwidth,
    )
    .at(Stage::Export)?;
    let written = write_eval_outputs(&out_dir.join("report.json"), out_dir, &report, &density).at(Stage::Export)?;
    files.extend(written);

    fs::remove_file(&marker).at(Stage::Export)?;
    Ok(RunOutput { report, files })
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_with_a_source() {
        let mut cfg = PipelineConfig::default();
        assert_eq!(validate_config(&cfg).unwrap_err().len(), 1);
        cfg.synthetic = Some(SyntheticConfig::default());
        assert!(validate_config(&cfg).is_ok());
    }

    #[test]
    fn errors_are_aggregated() {
        let mut cfg = PipelineConfig {
            synthetic: Some(SyntheticConfig::default()),
            ..PipelineConfig::default()
        };
        cfg.eval.split_frac = 1.0;
        cfg.eval.lr = -1.0;
        cfg.embed.dim = 100;
        cfg.embed.scales = vec![1, 2, 3];
        let errs = validate_config(&cfg).unwrap_err();
        assert_eq!(errs.len(), 3, "{errs:?}");
        assert!(errs.iter().any(|e| e.contains("split_frac must be in (0,1)")));
        cfg.eval.split_frac = 0.7;
        cfg.eval.lr = 0.1;
        cfg.embed.scales = vec![1, 2, 3, 4];
        assert!(validate_config(&cfg).is_ok());
    }

    #[test]
    fn stage_hashes_cover_upstream_settings_only() {
        let a = PipelineConfig::default();
        let mut b = a.clone();
        b.embed.dim = 64;
        assert_eq!(a.stage_hash(Stage::Graph), b.stage_hash(Stage::Graph));
        assert_ne!(a.stage_hash(Stage::Embed), b.stage_hash(Stage::Embed));
        let mut c = a.clone();
        c.eval.lambda = 1.0;
        assert_eq!(a.stage_hash(Stage::Features), c.stage_hash(Stage::Features));
        assert_ne!(a.stage_hash(Stage::Train), c.stage_hash(Stage::Train));
        assert_eq!(a.stage_hash(Stage::Eval), a.config_hash());
        let d = PipelineConfig { min_degree: 1, ..a.clone() };
        for st in [Stage::Graph, Stage::Embed, Stage::Features, Stage::Train] {
            assert_ne!(a.stage_hash(st), d.stage_hash(st));
        }
    }

    #[test]
    fn hash_ignores_threads_only() {
        let a = PipelineConfig::default();
        let b = PipelineConfig { threads: 8, ..a.clone() };
        assert_eq!(a.config_hash(), b.config_hash());
        let c = PipelineConfig { min_degree: 2, ..a.clone() };
        assert_ne!(a.config_hash(), c.config_hash());
        assert_eq!(a.config_hash().len(), 64);
    }

    #[test]
    fn toml_round_trip() {
        let cfg = PipelineConfig {
            synthetic: Some(SyntheticConfig::default()),
            ..PipelineConfig::default()
        };
        let back = PipelineConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(cfg, back);
        let partial = PipelineConfig::from_toml("min_degree = 2\n[embed]\ndim = 64\n").unwrap();
        assert_eq!(partial.min_degree, 2);
        assert_eq!(partial.embed.dim, 64);
        assert_eq!(partial.eval.vocab_size, 1000);
        assert!(PipelineConfig::from_toml("bogus = 1").is_err());
    }

    #[test]
    fn guard() {
        let g = HashGuard { expected: "ab".into(), force: false };
        let p = Path::new("x");
        assert!(g.check(p, Some("ab")).is_ok());
        assert!(g.check(p, None).is_ok());
        assert!(matches!(g.check(p, Some("cd")), Err(Error::HashMismatch { .. })));
        assert!(HashGuard { force: true, ..g }.check(p, Some("cd")).is_ok());
    }
}
