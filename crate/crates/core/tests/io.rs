use std::fs;

use stance_graph::embed::{embed_graph, EmbedConfig, ModelKind};
use stance_graph::graph::{build_graph, degree_filter, FilterMode};
use stance_graph::model::{train, Design, TrainParams};
use stance_graph::pipeline::{read_dataset, read_embeddings, read_graph, read_model, write_artifact};
use stance_graph::synth::{generate_synthetic, SyntheticConfig};
use stance_graph::StanceLabel;

fn small() -> SyntheticConfig {
    SyntheticConfig {
        users: 80,
        p_in: 0.2,
        p_out: 0.01,
        ..SyntheticConfig::default()
    }
}

#[test]
fn dataset_survives_write_and_reparse() {
    let dir = tempfile::tempdir().unwrap();
    let d = generate_synthetic(&small(), 1).unwrap();
    let path = dir.path().join("d.jsonl");
    let mut buf = Vec::new();
    d.write_jsonl(&mut buf).unwrap();
    fs::write(&path, &buf).unwrap();
    let (back, report) = read_dataset(&path, false).unwrap();
    assert_eq!(back, d);
    assert_eq!(report.lines_read, d.len());
    let mut again = Vec::new();
    back.write_jsonl(&mut again).unwrap();
    assert_eq!(again, buf);
}

#[test]
fn artifacts_keep_values_and_hash() {
    let dir = tempfile::tempdir().unwrap();
    let d = generate_synthetic(&small(), 2).unwrap();
    let g = degree_filter(&build_graph(&d).0, 1, FilterMode::SinglePass);
    let gp = dir.path().join("g.edges");
    write_artifact(&gp, Some("abc123"), |w| g.write_edge_list(w)).unwrap();
    let (g2, h) = read_graph(&gp).unwrap();
    assert_eq!(h.as_deref(), Some("abc123"));
    assert_eq!(g2.edge_count(), g.edge_count());
    assert_eq!(g2.edges().collect::<Vec<_>>(), g.edges().collect::<Vec<_>>());

    let cfg = EmbedConfig {
        model: ModelKind::DeepWalk,
        dim: 6,
        walks_per_node: 2,
        walk_length: 8,
        epochs: 1,
        ..EmbedConfig::default()
    };
    let e = embed_graph(&g, &cfg, 1, 3).unwrap();
    let ep = dir.path().join("e.txt");
    write_artifact(&ep, Some("def"), |w| e.write_text(w)).unwrap();
    let (e2, h) = read_embeddings(&ep).unwrap();
    assert_eq!(h.as_deref(), Some("def"));
    assert_eq!(e2.node_ids(), e.node_ids());
    for i in 0..e.n_nodes() {
        assert_eq!(e2.row(i), e.row(i), "row {i} lost precision");
    }

    let rows = [vec![1.0, 0.5], vec![-1.0, 0.25], vec![0.3, -2.0]];
    let y = [StanceLabel::VaxSkeptic, StanceLabel::ProVax, StanceLabel::ProVax];
    let m = train(&Design::from_dense(&rows).unwrap(), &y, TrainParams::default()).unwrap();
    let mp = dir.path().join("m.txt");
    write_artifact(&mp, None, |w| m.write_text(w)).unwrap();
    let (m2, h) = read_model(&mp).unwrap();
    assert_eq!(h, None);
    assert_eq!(m2, m);

    let leftovers: Vec<_> = fs::read_dir(dir.path())
        .unwrap()
        .filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "partial"))
        .collect();
    assert!(leftovers.is_empty());
}

#[test]
fn lenient_parsing_counts_skipped_lines() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.jsonl");
    fs::write(
        &path,
        concat!(
            r#"{"tweet_id": 1, "user_id": 7, "created_at": 100, "text": "a b", "label": "pro"}"#,
            "\n{broken\n\n",
            r#"{"tweet_id": 2, "user_id": 8, "parent_tweet_id": 1, "created_at": 50, "text": "c"}"#,
            "\n"
        ),
    )
    .unwrap();
    assert!(read_dataset(&path, false).is_err());
    let (d, report) = read_dataset(&path, true).unwrap();
    assert_eq!(d.len(), 2);
    assert_eq!(report.skipped_lines, 1);
    assert_eq!(d.records()[0].tweet_id, 2);
}
