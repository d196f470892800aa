use stance_graph::graph::{build_graph, connected_components};
use stance_graph::ingest::class_balance;
use stance_graph::synth::{generate_with_truth, SyntheticConfig};

fn balance_config() -> SyntheticConfig {
    SyntheticConfig {
        users: 1000,
        p_in: 0.02,
        p_out: 0.001,
        rho: 0.9,
        ..SyntheticConfig::default()
    }
}

/// Labeled pro fraction against `expected` with a binomial 3σ band.
fn assert_within_three_sigma(cfg: &SyntheticConfig, expected: f64) {
    for seed in 0..5 {
        let (d, _) = generate_with_truth(cfg, seed).unwrap();
        let (pro, skeptic, frac) = class_balance(&d);
        let n = (pro + skeptic) as f64;
        let sigma = (expected * (1.0 - expected) / n).sqrt();
        assert!(
            (frac - expected).abs() <= 3.0 * sigma,
            "seed {seed}: pro fraction {frac:.4}, expected {expected:.4} ± {:.4}",
            3.0 * sigma
        );
    }
}

#[test]
fn class_balance_matches_prior() {
    let cfg = SyntheticConfig {
        tweet_consistency: 1.0,
        ..balance_config()
    };
    assert_within_three_sigma(&cfg, cfg.pro_prior);
}

#[test]
fn class_balance_matches_prior_after_tweet_noise() {
    let cfg = balance_config();
    // a tweet keeps its author's stance with probability c, else flips
    let c = cfg.tweet_consistency;
    let expected = cfg.pro_prior * c + (1.0 - cfg.pro_prior) * (1.0 - c);
    assert_within_three_sigma(&cfg, expected);
}

#[test]
fn full_correlation_without_cross_edges_gives_two_components() {
    let cfg = SyntheticConfig {
        users: 80,
        p_in: 1.0,
        p_out: 0.0,
        rho: 1.0,
        ..SyntheticConfig::default()
    };
    let (d, truth) = generate_with_truth(&cfg, 11).unwrap();
    let (g, _) = build_graph(&d);
    let comps = connected_components(&g);
    let mut sizes = comps.sizes();
    sizes.sort_unstable();
    assert_eq!(sizes, vec![80 - cfg.pro_community_size(), cfg.pro_community_size()]);
    for (c, s) in truth.community.iter().zip(&truth.stance) {
        assert_eq!(*c == 1, s.is_positive());
    }
}

#[test]
fn invalid_probabilities_are_config_errors() {
    for cfg in [
        SyntheticConfig { p_in: 1.5, ..balance_config() },
        SyntheticConfig { rho: -0.1, ..balance_config() },
        SyntheticConfig { overlap: 2.0, ..balance_config() },
    ] {
        let err = generate_with_truth(&cfg, 0).unwrap_err();
        assert!(matches!(err, stance_graph::Error::Config(_)), "{err}");
    }
}
