use graph_cde::dataset::Dataset;
use graph_cde::homophily::edge_homophily;
use graph_cde::synth::{gaussian_bank, generate, load_bank, FeatureSource, SynthConfig};

#[test]
fn measured_homophily_tracks_target() {
    for step in 1..=9 {
        let h = step as f64 / 10.0;
        for seed in 0..5 {
            let ds = generate(&SynthConfig {
                h_target: h,
                seed,
                ..SynthConfig::default()
            })
            .unwrap();
            let measured = edge_homophily(&ds.graph, &ds.labels).unwrap();
            assert!((measured - h).abs() <= 0.05, "h {h} seed {seed}: {measured}");
            assert_eq!(ds.meta.h_edge, Some(measured));
        }
    }
}

#[test]
fn each_node_starts_its_quota() {
    let cfg = SynthConfig {
        h_target: 0.4,
        seed: 8,
        ..SynthConfig::default()
    };
    let ds = generate(&cfg).unwrap();
    let per_node = cfg.intra_edges_per_node + cfg.inter_edges_per_node();
    let y = ds.labels.labels();
    for u in 0..ds.graph.num_nodes() {
        let nb = ds.graph.neighbors(u);
        assert!(!nb.contains(&u));
        // undirected symmetrization can only add partners
        assert!(nb.len() >= per_node);
        let same = nb.iter().filter(|&&v| y[v] == y[u]).count();
        assert!(same >= cfg.intra_edges_per_node);
        assert!(nb.len() - same >= cfg.inter_edges_per_node());
    }
    assert!(ds.graph.is_undirected());
}

#[test]
fn gaussian_classes_separate_by_nearest_mean() {
    let ds = generate(&SynthConfig {
        h_target: 0.5,
        feature_source: FeatureSource::Gaussian {
            dim: 16,
            class_mean_scale: 8.0,
            noise_sigma: 1.0,
        },
        seed: 3,
        ..SynthConfig::default()
    })
    .unwrap();
    let (n, d, c) = (ds.meta.num_nodes, ds.features.cols(), ds.meta.num_classes);
    let mut means = vec![vec![0.0; d]; c];
    let mut counts = vec![0.0; c];
    for i in 0..n {
        let k = ds.labels.get(i);
        counts[k] += 1.0;
        means[k].iter_mut().zip(ds.features.row(i)).for_each(|(m, x)| *m += x);
    }
    for (m, cnt) in means.iter_mut().zip(&counts) {
        m.iter_mut().for_each(|v| *v /= cnt);
    }
    let correct = (0..n)
        .filter(|&i| {
            let x = ds.features.row(i);
            let nearest = (0..c)
                .min_by(|&a, &b| {
                    let da: f64 = x.iter().zip(&means[a]).map(|(p, q)| (p - q).powi(2)).sum();
                    let db: f64 = x.iter().zip(&means[b]).map(|(p, q)| (p - q).powi(2)).sum();
                    da.total_cmp(&db)
                })
                .unwrap();
            nearest == ds.labels.get(i)
        })
        .count();
    assert!(correct as f64 / n as f64 > 0.99);
}

#[test]
fn gaussian_means_are_orthogonal_with_given_norm() {
    let bank = gaussian_bank(4, 6, 2.5, 0.0, 3, 11).unwrap();
    let means: Vec<&[f64]> = (0..4).map(|k| bank.pool(k).row(0)).collect();
    for a in 0..4 {
        let norm = means[a].iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((norm - 2.5).abs() < 1e-12);
        for b in 0..a {
            let dot: f64 = means[a].iter().zip(means[b]).map(|(x, y)| x * y).sum();
            assert!(dot.abs() < 1e-10);
        }
    }
}

#[test]
fn bank_features_come_from_own_class_pool() {
    let dir = tempfile::tempdir().unwrap();
    let src = generate(&SynthConfig {
        h_target: 0.5,
        num_classes: 3,
        nodes_per_class: 12,
        intra_edges_per_node: 4,
        seed: 21,
        ..SynthConfig::default()
    })
    .unwrap();
    src.save(dir.path()).unwrap();

    let bank = load_bank(dir.path()).unwrap();
    assert_eq!(bank.num_classes(), 3);
    for k in 0..3 {
        let count = src.labels.labels().iter().filter(|&&y| y == k).count();
        assert_eq!(bank.pool(k).rows(), count);
    }

    let ds = generate(&SynthConfig {
        h_target: 0.3,
        num_classes: 3,
        nodes_per_class: 20,
        intra_edges_per_node: 5,
        feature_source: FeatureSource::Bank(dir.path().to_path_buf()),
        seed: 2,
        ..SynthConfig::default()
    })
    .unwrap();
    for i in 0..ds.meta.num_nodes {
        let k = ds.labels.get(i);
        let row = ds.features.row(i);
        assert!((0..bank.pool(k).rows()).any(|r| bank.pool(k).row(r) == row), "node {i}");
    }
}

#[test]
fn bank_with_too_few_classes() {
    let dir = tempfile::tempdir().unwrap();
    generate(&SynthConfig {
        num_classes: 2,
        nodes_per_class: 10,
        intra_edges_per_node: 3,
        ..SynthConfig::default()
    })
    .unwrap()
    .save(dir.path())
    .unwrap();
    let err = generate(&SynthConfig {
        feature_source: FeatureSource::Bank(dir.path().to_path_buf()),
        ..SynthConfig::default()
    })
    .unwrap_err();
    assert_eq!(err.code(), "E_CONFIG");
}

#[test]
fn generated_dataset_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let ds = generate(&SynthConfig {
        h_target: 0.2,
        seed: 5,
        ..SynthConfig::default()
    })
    .unwrap();
    ds.save(dir.path()).unwrap();
    let back = Dataset::load(dir.path()).unwrap();
    assert_eq!(back.graph, ds.graph);
    assert_eq!(back.labels, ds.labels);
    assert_eq!(back.split, ds.split);
    assert_eq!(back.meta, ds.meta);
    let diff = back
        .features
        .data()
        .iter()
        .zip(ds.features.data())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    assert_eq!(diff, 0.0);
}

#[test]
fn infeasible_targets() {
    for cfg in [
        SynthConfig {
            h_target: 0.01,
            ..SynthConfig::default()
        },
        SynthConfig {
            intra_edges_per_node: 100,
            ..SynthConfig::default()
        },
    ] {
        assert_eq!(generate(&cfg).unwrap_err().code(), "E_INFEASIBLE");
    }
    let zero = SynthConfig {
        h_target: 0.0,
        ..SynthConfig::default()
    };
    assert_eq!(generate(&zero).unwrap_err().code(), "E_CONFIG");
}
