use graph_cde::graph::{Graph, LabelSet, SplitMask};
use graph_cde::homophily::{adjusted_homophily, edge_homophily, homophily_report};
use graph_cde::Error;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Dense adjacency evaluation straight from the definitions.
fn brute_force(n: usize, raw: &[(usize, usize)], undirected: bool, y: &[usize], classes: usize) -> (Option<f64>, Option<f64>) {
    let mut adj = vec![vec![false; n]; n];
    for &(u, v) in raw {
        if u != v {
            adj[u][v] = true;
            if undirected {
                adj[v][u] = true;
            }
        }
    }
    let mut m = 0usize;
    let mut same = 0usize;
    let mut deg = vec![0usize; n];
    for u in 0..n {
        for v in 0..n {
            let counted = adj[u][v] && (!undirected || u < v);
            if counted {
                m += 1;
                deg[u] += 1;
                deg[v] += 1;
                if y[u] == y[v] {
                    same += 1;
                }
            }
        }
    }
    if m == 0 {
        return (None, None);
    }
    let h = same as f64 / m as f64;
    let mut mass = vec![0.0f64; classes];
    for u in 0..n {
        mass[y[u]] += deg[u] as f64;
    }
    let b: f64 = mass.iter().map(|d| (d / (2.0 * m as f64)).powi(2)).sum();
    let adj_h = if (1.0 - b).abs() < 1e-15 {
        None
    } else {
        Some((h - b) / (1.0 - b))
    };
    (Some(h), adj_h)
}

#[test]
fn hundred_random_graphs_match_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut checked_adj = 0;
    for trial in 0..100 {
        let n = rng.random_range(2..=30);
        let classes = rng.random_range(1..=4).max(2);
        let undirected = trial % 3 != 0;
        let m = rng.random_range(1..=3 * n);
        let raw: Vec<(usize, usize)> = (0..m).map(|_| (rng.random_range(0..n), rng.random_range(0..n))).collect();
        let y: Vec<usize> = (0..n).map(|_| rng.random_range(0..classes)).collect();
        let g = Graph::build(&raw, n, undirected, trial % 2 == 0).unwrap();
        let labels = LabelSet::new(y.clone(), classes).unwrap();

        let (h_ref, adj_ref) = brute_force(n, &raw, undirected, &y, classes);
        match h_ref {
            None => {
                assert!(matches!(edge_homophily(&g, &labels), Err(Error::UndefinedMetric(_))));
                continue;
            }
            Some(h) => assert!((edge_homophily(&g, &labels).unwrap() - h).abs() < 1e-12, "trial {trial}"),
        }
        match adj_ref {
            None => assert!(adjusted_homophily(&g, &labels).is_err()),
            Some(a) => {
                assert!((adjusted_homophily(&g, &labels).unwrap() - a).abs() < 1e-12, "trial {trial}");
                checked_adj += 1;
            }
        }
    }
    assert!(checked_adj > 80);
}

#[test]
fn four_cycle_exact() {
    let g = Graph::build(&[(0, 1), (1, 2), (2, 3), (3, 0)], 4, true, false).unwrap();
    let y = LabelSet::new(vec![0, 0, 1, 1], 2).unwrap();
    let r = homophily_report(&g, &y).unwrap();
    assert_eq!(r.h_edge, 0.5);
    assert_eq!(r.h_adj, Some(0.0));
    assert_eq!(r.degree_sums, vec![4, 4]);
}

#[test]
fn single_class_mass_is_undefined() {
    let g = Graph::build(&[(0, 1), (1, 2)], 4, true, false).unwrap();
    let y = LabelSet::new(vec![0, 0, 0, 1], 2).unwrap();
    let r = homophily_report(&g, &y).unwrap();
    assert_eq!(r.h_edge, 1.0);
    assert_eq!(r.h_adj, None);
}

#[test]
fn self_loops_do_not_count() {
    let plain = Graph::build(&[(0, 1), (1, 2), (2, 3)], 4, true, false).unwrap();
    let looped = plain.with_self_loops();
    let y = LabelSet::new(vec![0, 1, 1, 0], 2).unwrap();
    assert_eq!(homophily_report(&plain, &y).unwrap(), homophily_report(&looped, &y).unwrap());
    assert_eq!(looped.without_self_loops(), plain);
}

#[test]
fn labels_out_of_range_rejected() {
    assert!(LabelSet::new(vec![0, 3], 3).is_err());
}

#[test]
fn split_validation() {
    assert!(SplitMask::new(vec![0], vec![0], vec![1], 3).is_err());
    assert!(SplitMask::new(vec![0], vec![1], vec![5], 3).is_err());
    let s = SplitMask::random(100, 0.6, 0.2, 9).unwrap();
    assert_eq!((s.train.len(), s.val.len(), s.test.len()), (60, 20, 20));
    let mut all: Vec<usize> = s.train.iter().chain(&s.val).chain(&s.test).copied().collect();
    all.sort_unstable();
    assert_eq!(all, (0..100).collect::<Vec<_>>());
}

fn arb_graph() -> impl Strategy<Value = (usize, Vec<(usize, usize)>, Vec<usize>, bool)> {
    (2usize..20).prop_flat_map(|n| {
        (
            Just(n),
            prop::collection::vec((0..n, 0..n), 1..40),
            prop::collection::vec(0usize..3, n),
            any::<bool>(),
        )
    })
}

proptest! {
    #[test]
    fn invariant_under_class_relabeling((n, edges, y, und) in arb_graph(), shift in 1usize..3) {
        let g = Graph::build(&edges, n, und, false).unwrap();
        let a = LabelSet::new(y.clone(), 3).unwrap();
        let b = LabelSet::new(y.iter().map(|c| (c + shift) % 3).collect(), 3).unwrap();
        let (ra, rb) = (homophily_report(&g, &a), homophily_report(&g, &b));
        if let (Ok(ra), Ok(rb)) = (ra, rb) {
            prop_assert!((ra.h_edge - rb.h_edge).abs() < 1e-12);
            match (ra.h_adj, rb.h_adj) {
                (Some(x), Some(z)) => prop_assert!((x - z).abs() < 1e-12),
                (None, None) => {}
                other => prop_assert!(false, "{other:?}"),
            }
        }
    }

    #[test]
    fn invariant_under_node_permutation((n, edges, y, und) in arb_graph(), seed in any::<u64>()) {
        let g = Graph::build(&edges, n, und, false).unwrap();
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let mut y2 = vec![0; n];
        for (i, &p) in perm.iter().enumerate() {
            y2[p] = y[i];
        }
        let r1 = homophily_report(&g, &LabelSet::new(y, 3).unwrap());
        let r2 = homophily_report(&g.permuted(&perm).unwrap(), &LabelSet::new(y2, 3).unwrap());
        if let (Ok(r1), Ok(r2)) = (r1, r2) {
            prop_assert!((r1.h_edge - r2.h_edge).abs() < 1e-12);
            prop_assert_eq!(r1.num_edges, r2.num_edges);
        }
    }

    #[test]
    fn csr_round_trip((n, mut edges, _y, und) in arb_graph(), loops in any::<bool>()) {
        edges.retain(|(u, v)| u != v);
        let g = Graph::build(&edges, n, und, loops).unwrap();
        let off = g.offsets();
        prop_assert_eq!(off[n], g.num_stored_edges());
        for i in 0..n {
            let nb = g.neighbors(i);
            prop_assert!(nb.windows(2).all(|w| w[0] < w[1]));
            prop_assert!(g.sources()[off[i]..off[i + 1]].iter().all(|&s| s == i));
            if loops {
                prop_assert!(nb.contains(&i));
            }
        }
        let rebuilt = Graph::build(&g.unique_edges(), n, und, loops).unwrap();
        prop_assert_eq!(&rebuilt, &g);
        let degree_total: usize = g.degrees().iter().sum();
        prop_assert_eq!(degree_total, 2 * g.unique_edges().len());
    }
}
