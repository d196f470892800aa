use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use stance_graph::embed::{generate_walks, PairStream, SkipGramParams, SkipGramTrainer, WalkParams};
use stance_graph::graph::ReplyGraph;
use stance_graph::model::{classify_proba, train, train_traced, Design, Init, TrainParams};
use stance_graph::StanceLabel;

fn two_cliques() -> ReplyGraph {
    let mut edges = Vec::new();
    for base in [0u64, 8] {
        for a in base..base + 8 {
            for b in a + 1..base + 8 {
                edges.push((a, b, 1));
            }
        }
    }
    edges.push((7, 8, 1));
    ReplyGraph::from_edges(edges, []).unwrap()
}

#[test]
fn skipgram_corpus_loss_is_non_increasing() {
    let g = two_cliques();
    let walks = WalkParams {
        walks_per_node: 5,
        walk_length: 20,
        ..WalkParams::default()
    };
    let corpus = generate_walks(&g, &walks, 3);
    let pairs = PairStream::new(&corpus, vec![1, 2]);
    let params = SkipGramParams {
        dim: 8,
        epochs: 10,
        negatives: 5,
        alpha: 0.75,
        lr_start: 0.025,
        threads: 1,
    };
    let mut trainer = SkipGramTrainer::new(&pairs, g.n_nodes(), params, 9).unwrap();
    let mut prev = trainer.model().corpus_loss(&pairs, 77);
    let first = prev;
    for epoch in 0..params.epochs {
        trainer.run_epoch().unwrap();
        let loss = trainer.model().corpus_loss(&pairs, 77);
        assert!(loss <= prev + 1e-3, "epoch {epoch}: {loss} after {prev}");
        prev = loss;
    }
    assert!(prev < first, "no progress: {first} -> {prev}");
}

fn random_problem(seed: u64, n: usize, d: usize) -> (Design, Vec<StanceLabel>) {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| r.gen_range(-1.0..1.0)).collect()).collect();
    let y = rows
        .iter()
        .map(|x| StanceLabel::from_positive(x[0] - 0.5 * x[1] + r.gen_range(-0.8..0.8) > 0.0))
        .collect();
    (Design::from_dense(&rows).unwrap(), y)
}

#[test]
fn regularised_objective_has_one_minimiser() {
    let (x, y) = random_problem(1, 60, 5);
    let fit = |seed| {
        let p = TrainParams {
            lambda: 0.1,
            epochs: 3000,
            lr: 0.5,
            init: Init::Random { seed },
        };
        train(&x, &y, p).unwrap()
    };
    let (a, b) = (fit(1), fit(2));
    assert_ne!(a.seed, b.seed);
    for (wa, wb) in a.weights.iter().zip(&b.weights) {
        assert!((wa - wb).abs() < 1e-4, "{wa} vs {wb}");
    }
    assert!((a.bias - b.bias).abs() < 1e-4);
}

#[test]
fn full_batch_loss_is_non_increasing_at_small_lr() {
    for seed in 0..5 {
        let (x, y) = random_problem(seed, 40, 4);
        let p = TrainParams {
            lr: 0.01,
            epochs: 300,
            ..TrainParams::default()
        };
        let (_, trace) = train_traced(&x, &y, p).unwrap();
        for w in trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "{} after {}", w[1], w[0]);
        }
    }
}

#[test]
fn probabilities_stay_open_and_classes_monotone_in_threshold() {
    let (x, y) = random_problem(4, 50, 3);
    let m = train(&x, &y, TrainParams::default()).unwrap();
    for v in [-1e6, 1e6] {
        let p = m.predict_proba(&[v, -v, v]).unwrap();
        assert!((0.0..=1.0).contains(&p));
    }
    for v in [-3.0, 0.0, 3.0] {
        let p = m.predict_proba(&[v, -v, v]).unwrap();
        assert!(p > 0.0 && p < 1.0);
    }
    let p = m.predict_proba(&[0.3, -0.2, 0.1]).unwrap();
    let mut last = true;
    for t in [0.0, 0.2, 0.4, 0.6, 0.8, 1.0] {
        let positive = classify_proba(p, t).is_positive();
        assert!(last || !positive, "classification not monotone at threshold {t}");
        last = positive;
    }
}
