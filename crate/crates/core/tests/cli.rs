use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_stance-graph");

const SMALL: &str = r#"
min_degree = 1

[synthetic]
users = 120
p_in = 0.15
p_out = 0.01

[embed]
dim = 8
scales = [1, 2]
walks_per_node = 2
walk_length = 10
epochs = 1

[eval]
vocab_size = 60
epochs = 100
kde_grid = 20
"#;

struct Work {
    dir: tempfile::TempDir,
}

impl Work {
    fn new() -> Self {
        let w = Work {
            dir: tempfile::tempdir().unwrap(),
        };
        fs::write(w.path("config.toml"), SMALL).unwrap();
        w
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn run(&self, args: &[&str]) -> Output {
        Command::new(BIN)
            .args(args)
            .env_remove("STANCE_GRAPH_THREADS")
            .env_remove("RUST_LOG")
            .output()
            .unwrap()
    }

    /// Runs with `--config config.toml` appended.
    fn run_cfg(&self, args: &[&str]) -> Output {
        let cfg = self.path("config.toml");
        let mut all: Vec<&str> = args.to_vec();
        all.extend(["--config", cfg.to_str().unwrap()]);
        self.run(&all)
    }

    fn p(&self, name: &str) -> String {
        self.path(name).to_str().unwrap().to_owned()
    }
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap_or(-1)
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn assert_ok(o: &Output) {
    assert_eq!(code(o), 0, "stderr: {}", stderr(o));
}

fn stage_by_stage(w: &Work) {
    assert_ok(&w.run_cfg(&["synth", "--seed", "5", "--out", &w.p("d.jsonl")]));
    assert_ok(&w.run_cfg(&["build-graph", "--input", &w.p("d.jsonl"), "--out", &w.p("g.edges")]));
    assert_ok(&w.run_cfg(&["embed", "--graph", &w.p("g.edges"), "--out", &w.p("e.txt")]));
}

#[test]
fn stage_by_stage_workflow() {
    let w = Work::new();
    stage_by_stage(&w);

    let ingest = w.run_cfg(&["ingest", "--input", &w.p("d.jsonl")]);
    assert_ok(&ingest);
    let summary: serde_json::Value = serde_json::from_slice(&ingest.stdout).unwrap();
    let frac = summary["pro_fraction"].as_f64().unwrap();
    assert!(frac > 0.0 && frac < 1.0);
    assert!(summary["labeled"].as_u64().unwrap() > 0);

    assert_ok(&w.run_cfg(&[
        "features",
        "--dataset",
        &w.p("d.jsonl"),
        "--embeddings",
        &w.p("e.txt"),
        "--out",
        &w.p("f.txt"),
    ]));
    assert_ok(&w.run_cfg(&["train", "--features", &w.p("f.txt"), "--out", &w.p("m.txt")]));
    let model = fs::read_to_string(w.path("m.txt")).unwrap();
    assert!(model.lines().last().unwrap().starts_with("# config_hash="));

    let eval = w.run_cfg(&[
        "eval",
        "--dataset",
        &w.p("d.jsonl"),
        "--graph",
        &w.p("g.edges"),
        "--embeddings",
        &w.p("e.txt"),
        "--report",
        &w.p("report.json"),
        "--csv-dir",
        &w.p("csv"),
    ]);
    assert_ok(&eval);
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(w.path("report.json")).unwrap()).unwrap();
    assert_eq!(report["rows"].as_array().unwrap().len(), 4);
    assert!(w.path("csv/kde.csv").exists());
    assert!(w.path("csv/projection.csv").exists());
}

#[test]
fn single_mask_gives_one_row() {
    let w = Work::new();
    stage_by_stage(&w);
    let eval = w.run_cfg(&[
        "eval",
        "--dataset",
        &w.p("d.jsonl"),
        "--graph",
        &w.p("g.edges"),
        "--embeddings",
        &w.p("e.txt"),
        "--mask",
        "text",
        "--report",
        &w.p("report.json"),
        "--csv-dir",
        &w.p("csv"),
    ]);
    assert_ok(&eval);
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(w.path("report.json")).unwrap()).unwrap();
    let rows = report["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0]["mask"], "text");
}

#[test]
fn mismatched_artifact_is_refused_unless_forced() {
    let w = Work::new();
    stage_by_stage(&w);
    let args = |force: bool| {
        let mut a = vec![
            "eval".to_string(),
            "--dataset".into(),
            w.p("d.jsonl"),
            "--graph".into(),
            w.p("g.edges"),
            "--embeddings".into(),
            w.p("e.txt"),
            "--embed-epochs".into(),
            "2".into(),
            "--report".into(),
            w.p("r.json"),
            "--csv-dir".into(),
            w.p("csv"),
        ];
        if force {
            a.push("--force".into());
        }
        a
    };
    let refused = w.run_cfg(&args(false).iter().map(String::as_str).collect::<Vec<_>>());
    assert_eq!(code(&refused), 8, "stderr: {}", stderr(&refused));
    assert!(stderr(&refused).contains("config hash"), "{}", stderr(&refused));
    assert!(!w.path("r.json").exists());

    let forced = w.run_cfg(&args(true).iter().map(String::as_str).collect::<Vec<_>>());
    assert_ok(&forced);
    assert!(w.path("r.json").exists());
}

#[test]
fn embedding_flags_need_no_new_graph() {
    let w = Work::new();
    stage_by_stage(&w);
    let o = w.run_cfg(&["embed", "--graph", &w.p("g.edges"), "--dim", "4", "--out", &w.p("e4.txt")]);
    assert_ok(&o);
}

#[test]
fn indivisible_walklets_dimension_is_a_config_error() {
    let w = Work::new();
    let o = w.run_cfg(&["run", "--dim", "100", "--scales", "1,2,3", "--out-dir", &w.p("out")]);
    assert_eq!(code(&o), 2, "stderr: {}", stderr(&o));
    assert!(stderr(&o).contains("100"), "{}", stderr(&o));
}

#[test]
fn aggregated_config_errors() {
    let w = Work::new();
    let bad = w.path("bad.toml");
    fs::write(&bad, "[synthetic]\nusers = 50\n[eval]\nsplit_frac = 1.5\nvocab_size = 0\n[embed]\ndim = 0\n").unwrap();
    let o = w.run(&["run", "--config", bad.to_str().unwrap(), "--out-dir", &w.p("out")]);
    assert_eq!(code(&o), 2);
    let err = stderr(&o);
    assert!(err.contains("split_frac") && err.contains("vocab_size") && err.contains("dim"), "{err}");
}

#[test]
fn unknown_config_key_is_rejected() {
    let w = Work::new();
    let bad = w.path("bad.toml");
    fs::write(&bad, "min_degre = 2\n").unwrap();
    let o = w.run(&["run", "--synthetic", "--config", bad.to_str().unwrap(), "--out-dir", &w.p("out")]);
    assert_eq!(code(&o), 2, "stderr: {}", stderr(&o));
}

#[test]
fn malformed_input_exits_with_ingest_code() {
    let w = Work::new();
    fs::write(w.path("bad.jsonl"), "{\"tweet_id\": 1}\nnot json\n").unwrap();
    let o = w.run(&["ingest", "--input", &w.p("bad.jsonl")]);
    assert_eq!(code(&o), 3, "stderr: {}", stderr(&o));
    assert!(stderr(&o).starts_with("error:"));

    let missing = w.run(&["build-graph", "--input", &w.p("missing.jsonl"), "--out", &w.p("g.edges")]);
    assert_eq!(code(&missing), 3);
}

#[test]
fn corrupt_embeddings_exit_with_stage_code() {
    let w = Work::new();
    stage_by_stage(&w);
    fs::write(w.path("e.txt"), "3 oops\n").unwrap();
    let o = w.run_cfg(&[
        "features",
        "--dataset",
        &w.p("d.jsonl"),
        "--embeddings",
        &w.p("e.txt"),
        "--out",
        &w.p("f.txt"),
    ]);
    assert_eq!(code(&o), 6, "stderr: {}", stderr(&o));
}

fn files(dir: &Path) -> Vec<String> {
    let mut v: Vec<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    v.sort();
    v
}

#[test]
fn run_writes_all_outputs_and_clears_marker() {
    let w = Work::new();
    let o = w.run_cfg(&["run", "--seed", "3", "--out-dir", &w.p("out")]);
    assert_ok(&o);
    let names = files(&w.path("out"));
    for want in ["graph.edges", "embeddings.txt", "report.json", "kde.csv", "projection.csv"] {
        assert!(names.iter().any(|n| n == want), "{want} missing from {names:?}");
    }
    assert!(names.iter().all(|n| !n.ends_with(".partial")), "{names:?}");
    assert_eq!(names.iter().filter(|n| n.starts_with("model_")).count(), 4);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("text+embedding+history"), "{stdout}");
}

#[test]
fn failed_run_leaves_partial_marker() {
    let w = Work::new();
    // one labeled tweet cannot be split
    let rec = r#"{"tweet_id": 1, "user_id": 1, "created_at": 10, "text": "hello there", "label": "pro"}"#;
    fs::write(w.path("one.jsonl"), format!("{rec}\n")).unwrap();
    let o = w.run_cfg(&["run", "--input", &w.p("one.jsonl"), "--out-dir", &w.p("out")]);
    assert_ne!(code(&o), 0);
    assert!(w.path("out/.partial").exists());
}

#[test]
fn thread_count_leaves_results_unchanged() {
    let w = Work::new();
    assert_ok(&w.run_cfg(&["run", "--seed", "4", "--out-dir", &w.p("a")]));
    assert_ok(&w.run_cfg(&["run", "--seed", "4", "--threads", "3", "--out-dir", &w.p("b")]));
    for name in files(&w.path("a")) {
        assert_eq!(
            fs::read(w.path("a").join(&name)).unwrap(),
            fs::read(w.path("b").join(&name)).unwrap(),
            "{name} differs"
        );
    }
}
