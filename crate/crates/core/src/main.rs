use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use stance_graph::embed::{embed_graph, EmbeddingMatrix, ModelKind};
use stance_graph::eval::{group_density, run_ablation};
use stance_graph::features::{FeatureMask, FeatureTable};
use stance_graph::ingest::class_balance;
use stance_graph::model::{self, Design};
use stance_graph::pipeline::{
    self, read_dataset, read_embeddings, read_features, read_graph, write_artifact, AtStage, HashGuard, PipelineConfig,
    Stage, StageError,
};
use stance_graph::synth::{generate_synthetic, SyntheticConfig};
use stance_graph::{Error, StanceLabel};

#[derive(Parser)]
#[command(name = "stance-graph", version, about = "Stance classification from text, label history and reply-graph embeddings")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML pipeline configuration; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Worker thread cap.
    #[arg(long, env = "STANCE_GRAPH_THREADS")]
    threads: Option<usize>,
    /// Accept input artifacts written under a different configuration.
    #[arg(long)]
    force: bool,
    /// Log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count)]
    verbose: u8,
}

#[derive(Args, Clone, Default)]
struct EmbedFlags {
    #[arg(long)]
    model: Option<ModelKind>,
    #[arg(long)]
    dim: Option<usize>,
    /// Walks per node.
    #[arg(long)]
    walks: Option<usize>,
    /// Walk length.
    #[arg(long)]
    length: Option<usize>,
    #[arg(long)]
    window: Option<usize>,
    /// Comma-separated Walklets offsets.
    #[arg(long, value_delimiter = ',')]
    scales: Option<Vec<usize>>,
    /// Skip-gram epochs.
    #[arg(long = "embed-epochs")]
    embed_epochs: Option<usize>,
    #[arg(long)]
    negatives: Option<usize>,
    #[arg(long = "embed-lr")]
    embed_lr: Option<f64>,
    #[arg(long)]
    weighted: bool,
    /// Lock-free parallel SGD (not bit-reproducible).
    #[arg(long)]
    hogwild: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset as JSONL.
    Synth {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        users: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Parse and validate a JSONL dataset and print a summary.
    Ingest {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        skip_bad_lines: bool,
        /// Write the normalised, time-sorted dataset here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build the degree-filtered reply graph and write an edge list.
    BuildGraph {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        min_degree: Option<usize>,
        /// Iterate the degree cut to a fixpoint (k-core).
        #[arg(long)]
        core: bool,
        #[arg(long)]
        skip_bad_lines: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train node embeddings on an edge list.
    Embed {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        graph: PathBuf,
        #[command(flatten)]
        flags: EmbedFlags,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Assemble the feature table for one mask.
    Features {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        embeddings: PathBuf,
        /// Blocks to include, e.g. `text,embedding,history`.
        #[arg(long, default_value = "text,embedding,history")]
        mask: FeatureMask,
        /// Settings the embeddings were trained with, for the hash check.
        #[command(flatten)]
        flags: EmbedFlags,
        #[arg(long)]
        split_frac: Option<f64>,
        #[arg(long)]
        vocab_size: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit logistic regression on the training rows of a feature table.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        features: PathBuf,
        #[command(flatten)]
        flags: EmbedFlags,
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the feature ablation and write the report and CSVs.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        graph: PathBuf,
        /// Reuse trained embeddings instead of training from the graph.
        #[arg(long)]
        embeddings: Option<PathBuf>,
        #[command(flatten)]
        flags: EmbedFlags,
        #[arg(long)]
        seed: Option<u64>,
        /// Evaluate only these masks (repeatable); default is the full ablation.
        #[arg(long)]
        mask: Vec<FeatureMask>,
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        csv_dir: PathBuf,
    },
    /// Run every stage from one configuration.
    Run {
        #[command(flatten)]
        common: Common,
        /// JSONL input; overrides the configured source.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Use the default synthetic generator when no source is configured.
        #[arg(long)]
        synthetic: bool,
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        flags: EmbedFlags,
        #[arg(long)]
        mask: Vec<FeatureMask>,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

impl Common {
    fn load(&self) -> Result<PipelineConfig, StageError> {
        let mut cfg = match &self.config {
            Some(p) => PipelineConfig::load(p).at(Stage::Config)?,
            None => PipelineConfig::default(),
        };
        if let Some(t) = self.threads {
            cfg.threads = t;
        }
        Ok(cfg)
    }
}

impl EmbedFlags {
    fn apply(&self, cfg: &mut PipelineConfig) {
        let e = &mut cfg.embed;
        if let Some(m) = self.model {
            e.model = m;
        }
        macro_rules! set {
            ($($flag:ident => $field:ident),*) => {
                $(if let Some(v) = self.$flag.clone() { e.$field = v; })*
            };
        }
        set!(dim => dim, walks => walks_per_node, length => walk_length, window => window,
             scales => scales, embed_epochs => epochs, negatives => negatives, embed_lr => lr);
        e.weighted |= self.weighted;
        e.hogwild |= self.hogwild;
    }
}

fn check(cfg: &PipelineConfig) -> Result<(), StageError> {
    let errs = cfg.check(false);
    if errs.is_empty() {
        Ok(())
    } else {
        Err(StageError {
            stage: Stage::Config,
            source: Error::Config(errs.join("; ")),
        })
    }
}

fn load_embeddings(path: &Path, g: &HashGuard, stage: Stage) -> Result<EmbeddingMatrix, StageError> {
    let (m, h) = read_embeddings(path).at(stage)?;
    g.check(path, h.as_deref()).at(stage)?;
    Ok(m)
}

fn run(cli: Cli) -> Result<(), StageError> {
    match cli.command {
        Command::Synth { common, seed, users, out } => {
            // either a pipeline config with a [synthetic] table or a bare
            // generator config
            let (mut synth, data_seed) = match &common.config {
                None => (SyntheticConfig::default(), PipelineConfig::default().seeds.data),
                Some(p) => {
                    let text = std::fs::read_to_string(p).at(Stage::Config)?;
                    match PipelineConfig::from_toml(&text) {
                        Ok(c) => (c.synthetic.unwrap_or_default(), c.seeds.data),
                        Err(_) => {
                            let s: SyntheticConfig =
                                toml::from_str(&text).map_err(|e| Error::Config(e.to_string())).at(Stage::Config)?;
                            (s, PipelineConfig::default().seeds.data)
                        }
                    }
                }
            };
            if let Some(u) = users {
                synth.users = u;
            }
            let errs = synth.validate();
            if !errs.is_empty() {
                return Err(Error::Config(errs.join("; "))).at(Stage::Config);
            }
            let d = generate_synthetic(&synth, seed.unwrap_or(data_seed)).at(Stage::Ingest)?;
            write_plain(&out, |w| d.write_jsonl(w)).at(Stage::Ingest)?;
            log::info!("wrote {} tweets ({} labeled) to {}", d.len(), d.labeled_len(), out.display());
        }
        Command::Ingest {
            common,
            input,
            skip_bad_lines,
            out,
        } => {
            let cfg = common.load()?;
            let (d, report) = read_dataset(&input, skip_bad_lines || cfg.skip_bad_lines).at(Stage::Ingest)?;
            let (pro, sk, frac) = class_balance(&d);
            let summary = serde_json::json!({
                "lines_read": report.lines_read,
                "skipped_lines": report.skipped_lines,
                "tweets": d.len(),
                "users": d.users().len(),
                "labeled": d.labeled_len(),
                "pro": pro,
                "skeptic": sk,
                "pro_fraction": frac,
                "reply_candidates": d.reply_candidates(),
            });
            print_out(&format!("{}\n", serde_json::to_string_pretty(&summary).expect("summary serialises")));
            if let Some(out) = out {
                write_plain(&out, |w| d.write_jsonl(w)).at(Stage::Ingest)?;
            }
        }
        Command::BuildGraph {
            common,
            input,
            min_degree,
            core,
            skip_bad_lines,
            out,
        } => {
            let mut cfg = common.load()?;
            if let Some(k) = min_degree {
                cfg.min_degree = k;
            }
            cfg.core |= core;
            check(&cfg)?;
            let (d, _) = read_dataset(&input, skip_bad_lines || cfg.skip_bad_lines).at(Stage::Ingest)?;
            let g = pipeline::graph_stage(&d, &cfg);
            let hash = cfg.stage_hash(Stage::Graph);
            write_artifact(&out, Some(&hash), |w| g.write_edge_list(w)).at(Stage::Graph)?;
        }
        Command::Embed {
            common,
            graph,
            flags,
            seed,
            out,
        } => {
            let mut cfg = common.load()?;
            flags.apply(&mut cfg);
            if let Some(s) = seed {
                cfg.seeds.embedding = s;
            }
            check(&cfg)?;
            let (g, h) = read_graph(&graph).at(Stage::Graph)?;
            cfg.guard(Stage::Graph, common.force).check(&graph, h.as_deref()).at(Stage::Embed)?;
            let emb = pipeline::embed_stage(&g, &cfg).at(Stage::Embed)?;
            write_artifact(&out, Some(&cfg.stage_hash(Stage::Embed)), |w| emb.write_text(w)).at(Stage::Embed)?;
        }
        Command::Features {
            common,
            dataset,
            embeddings,
            mask,
            flags,
            split_frac,
            vocab_size,
            out,
        } => {
            let mut cfg = common.load()?;
            flags.apply(&mut cfg);
            if let Some(f) = split_frac {
                cfg.eval.split_frac = f;
            }
            if let Some(v) = vocab_size {
                cfg.eval.vocab_size = v;
            }
            check(&cfg)?;
            let (d, _) = read_dataset(&dataset, cfg.skip_bad_lines).at(Stage::Ingest)?;
            let emb = load_embeddings(&embeddings, &cfg.guard(Stage::Embed, common.force), Stage::Features)?;
            let p = stance_graph::eval::prepare(&d, &cfg.eval).at(Stage::Features)?;
            let (train, test) = p.features(&emb, mask);
            let table = FeatureTable::from_vectors(&train, &test).at(Stage::Features)?;
            write_artifact(&out, Some(&cfg.stage_hash(Stage::Features)), |w| table.write_text(w)).at(Stage::Features)?;
        }
        Command::Train {
            common,
            features,
            flags,
            lambda,
            epochs,
            lr,
            out,
        } => {
            let mut cfg = common.load()?;
            flags.apply(&mut cfg);
            if let Some(l) = lambda {
                cfg.eval.lambda = l;
            }
            if let Some(e) = epochs {
                cfg.eval.epochs = e;
            }
            if let Some(r) = lr {
                cfg.eval.lr = r;
            }
            check(&cfg)?;
            let (table, h) = read_features(&features).at(Stage::Features)?;
            cfg.guard(Stage::Features, common.force).check(&features, h.as_deref()).at(Stage::Train)?;
            let train = &table.rows[..table.train_rows];
            let x = Design::from_dense(&train.iter().map(|r| r.values.as_slice()).collect::<Vec<_>>()).at(Stage::Train)?;
            let y: Vec<StanceLabel> = train.iter().map(|r| r.label).collect();
            let m = model::train(&x, &y, cfg.eval.train_params()).at(Stage::Train)?;
            log::info!("trained on {} rows, final loss {}", train.len(), m.final_loss);
            write_artifact(&out, Some(&cfg.stage_hash(Stage::Train)), |w| m.write_text(w)).at(Stage::Train)?;
        }
        Command::Eval {
            common,
            dataset,
            graph,
            embeddings,
            flags,
            seed,
            mask,
            report,
            csv_dir,
        } => {
            let mut cfg = common.load()?;
            flags.apply(&mut cfg);
            if let Some(s) = seed {
                cfg.seeds.embedding = s;
            }
            if !mask.is_empty() {
                cfg.eval.masks = mask;
            }
            check(&cfg)?;
            let (d, _) = read_dataset(&dataset, cfg.skip_bad_lines).at(Stage::Ingest)?;
            let (g, h) = read_graph(&graph).at(Stage::Graph)?;
            cfg.guard(Stage::Graph, common.force).check(&graph, h.as_deref()).at(Stage::Eval)?;
            let emb = match &embeddings {
                Some(p) => load_embeddings(p, &cfg.guard(Stage::Embed, common.force), Stage::Eval)?,
                None => embed_graph(&g, &cfg.embed, cfg.threads, cfg.seeds.embedding).at(Stage::Embed)?,
            };
            let ab = run_ablation(&d, &emb, &cfg.embed.model.to_string(), &cfg.eval, &cfg.config_hash(), cfg.seed_map())
                .at(Stage::Eval)?;
            let p = stance_graph::eval::prepare(&d, &cfg.eval).at(Stage::Eval)?;
            let density = group_density(
                &d,
                &p.split.test,
                &emb,
                cfg.eval.active_filter(),
                cfg.eval.kde_grid,
                cfg.eval.bandwidth,
            )
            .at(Stage::Export)?;
            pipeline::write_eval_outputs(&report, &csv_dir, &ab.report, &density).at(Stage::Export)?;
            print_rows(&ab.report);
        }
        Command::Run {
            common,
            input,
            synthetic,
            seed,
            flags,
            mask,
            out_dir,
        } => {
            let mut cfg = common.load()?;
            if let Some(i) = input {
                cfg.input = Some(i);
                cfg.synthetic = None;
            } else if synthetic && cfg.input.is_none() && cfg.synthetic.is_none() {
                cfg.synthetic = Some(SyntheticConfig::default());
            }
            if let Some(s) = seed {
                cfg.seeds.data = s;
                cfg.seeds.embedding = s;
            }
            flags.apply(&mut cfg);
            if !mask.is_empty() {
                cfg.eval.masks = mask;
            }
            let out = pipeline::run_pipeline(&cfg, &out_dir)?;
            print_rows(&out.report);
        }
    }
    Ok(())
}

fn write_plain<F>(path: &Path, body: F) -> std::io::Result<()>
where
    F: FnOnce(&mut dyn std::io::Write) -> std::io::Result<()>,
{
    write_artifact(path, None, body)
}

/// Writes to stdout, ignoring a closed pipe (e.g. `| head`).
fn print_out(text: &str) {
    let _ = std::io::stdout().lock().write_all(text.as_bytes());
}

fn print_rows(report: &stance_graph::eval::EvalReport) {
    let mut out = format!("{:<24} {:>8} {:>9} {:>9}\n", "features", "auc", "accuracy", "gain_%");
    for r in &report.rows {
        let gain = r.auc_gain_pct.map(|g| format!("{g:.2}")).unwrap_or_else(|| "-".into());
        out += &format!("{:<24} {:>8.4} {:>9.4} {:>9}\n", r.mask.to_string(), r.auc, r.accuracy, gain);
    }
    print_out(&out);
}

fn verbosity(cmd: &Command) -> u8 {
    match cmd {
        Command::Synth { common, .. }
        | Command::Ingest { common, .. }
        | Command::BuildGraph { common, .. }
        | Command::Embed { common, .. }
        | Command::Features { common, .. }
        | Command::Train { common, .. }
        | Command::Eval { common, .. }
        | Command::Run { common, .. } => common.verbose,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match verbosity(&cli.command) {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.stage.exit_code() as u8)
        }
    }
}
