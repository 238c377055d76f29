//! Graph storage in compressed sparse row form, labels and node splits.
//!
//! Graphs are always stored as directed edge sets. An undirected graph is
//! realized by symmetrizing the input at build time, so message passing has
//! a single code path. Edge `e` runs from `sources()[e]` to `targets()[e]`
//! and the edges of node `i` occupy `offsets()[i]..offsets()[i + 1]`; in
//! message-passing terms node `i` aggregates over its targets.

use std::collections::HashSet;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Graph {
    num_nodes: usize,
    offsets: Arc<[usize]>,
    targets: Arc<[usize]>,
    sources: Arc<[usize]>,
    edge_weight: Arc<[f64]>,
    undirected: bool,
    self_loops_added: bool,
}

impl Graph {
    /// Builds a deduplicated CSR graph. Neighbor lists are sorted ascending.
    pub fn build(
        edges: &[(usize, usize)],
        num_nodes: usize,
        undirected: bool,
        add_self_loops: bool,
    ) -> Result<Self> {
        let mut pairs = Vec::with_capacity(edges.len() * if undirected { 2 } else { 1 } + num_nodes);
        for &(src, dst) in edges {
            if src >= num_nodes || dst >= num_nodes {
                return Err(Error::EdgeOutOfRange { src, dst, num_nodes });
            }
            pairs.push((src, dst));
            if undirected {
                pairs.push((dst, src));
            }
        }
        if add_self_loops {
            pairs.extend((0..num_nodes).map(|i| (i, i)));
        }
        pairs.sort_unstable();
        pairs.dedup();

        let mut offsets = vec![0usize; num_nodes + 1];
        for &(src, _) in &pairs {
            offsets[src + 1] += 1;
        }
        for i in 0..num_nodes {
            offsets[i + 1] += offsets[i];
        }
        let sources: Vec<usize> = pairs.iter().map(|p| p.0).collect();
        let targets: Vec<usize> = pairs.iter().map(|p| p.1).collect();
        let edge_weight = vec![1.0; pairs.len()];

        Ok(Self {
            num_nodes,
            offsets: offsets.into(),
            targets: targets.into(),
            sources: sources.into(),
            edge_weight: edge_weight.into(),
            undirected,
            self_loops_added: add_self_loops,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    /// Number of stored directed edges, self-loops included.
    pub fn num_stored_edges(&self) -> usize {
        self.targets.len()
    }

    pub fn is_undirected(&self) -> bool {
        self.undirected
    }

    pub fn self_loops_added(&self) -> bool {
        self.self_loops_added
    }

    pub fn offsets(&self) -> &Arc<[usize]> {
        &self.offsets
    }

    pub fn targets(&self) -> &Arc<[usize]> {
        &self.targets
    }

    pub fn sources(&self) -> &Arc<[usize]> {
        &self.sources
    }

    /// Per-edge weights. Always 1.0 for graphs built from edge lists.
    pub fn edge_weights(&self) -> &[f64] {
        &self.edge_weight
    }

    pub fn neighbors(&self, node: usize) -> &[usize] {
        &self.targets[self.offsets[node]..self.offsets[node + 1]]
    }

    /// Iterates stored directed edges in CSR order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.sources.iter().copied().zip(self.targets.iter().copied())
    }

    /// Inter-node edges with each undirected edge reported once as `(u, v)`
    /// with `u < v`. Directed graphs report every stored non-loop edge.
    pub fn unique_edges(&self) -> Vec<(usize, usize)> {
        self.edges()
            .filter(|&(u, v)| u != v && (!self.undirected || u < v))
            .collect()
    }

    /// Node degrees excluding self-loops. For undirected graphs this is the
    /// neighbor count; for directed graphs it is in-degree plus out-degree,
    /// so that degrees always sum to twice the number of unique edges.
    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0usize; self.num_nodes];
        for (u, v) in self.unique_edges() {
            deg[u] += 1;
            deg[v] += 1;
        }
        deg
    }

    pub fn has_empty_neighborhood(&self) -> Option<usize> {
        (0..self.num_nodes).find(|&i| self.offsets[i] == self.offsets[i + 1])
    }

    /// Same graph with one self-loop per node.
    pub fn with_self_loops(&self) -> Self {
        if self.self_loops_added {
            return self.clone();
        }
        let edges: Vec<_> = self.edges().collect();
        // indices already validated
        let mut g = Self::build(&edges, self.num_nodes, false, true).expect("valid edges");
        g.undirected = self.undirected;
        g
    }

    /// Same graph with every self-loop removed.
    pub fn without_self_loops(&self) -> Self {
        let edges: Vec<_> = self.edges().filter(|(u, v)| u != v).collect();
        let mut g = Self::build(&edges, self.num_nodes, false, false).expect("valid edges");
        g.undirected = self.undirected;
        g
    }

    /// Relabels nodes so that old node `i` becomes `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.num_nodes {
            return Err(Error::Contract("permutation length differs from node count".into()));
        }
        let edges: Vec<_> = self.edges().map(|(u, v)| (perm[u], perm[v])).collect();
        let mut g = Self::build(&edges, self.num_nodes, false, false)?;
        g.undirected = self.undirected;
        g.self_loops_added = self.self_loops_added;
        Ok(g)
    }
}

/// One class index per node.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelSet {
    labels: Vec<usize>,
    num_classes: usize,
}

impl LabelSet {
    pub fn new(labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if num_classes < 2 {
            return Err(Error::Config(format!("need at least 2 classes, got {num_classes}")));
        }
        if let Some((node, &y)) = labels.iter().enumerate().find(|(_, &y)| y >= num_classes) {
            return Err(Error::Config(format!(
                "node {node} has label {y}, outside 0..{num_classes}"
            )));
        }
        Ok(Self { labels, num_classes })
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn get(&self, node: usize) -> usize {
        self.labels[node]
    }
}

/// Disjoint train/validation/test node sets.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SplitMask {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl SplitMask {
    pub fn new(train: Vec<usize>, val: Vec<usize>, test: Vec<usize>, num_nodes: usize) -> Result<Self> {
        let mut seen = HashSet::new();
        for (name, set) in [("train", &train), ("val", &val), ("test", &test)] {
            for &i in set {
                if i >= num_nodes {
                    return Err(Error::Config(format!("{name} split holds node {i} >= {num_nodes}")));
                }
                if !seen.insert(i) {
                    return Err(Error::Config(format!("node {i} appears in more than one split slot")));
                }
            }
        }
        Ok(Self { train, val, test })
    }

    /// Uniform random split with the given train and validation fractions;
    /// the remainder is the test set.
    pub fn random(num_nodes: usize, train_frac: f64, val_frac: f64, seed: u64) -> Result<Self> {
        if !(train_frac > 0.0 && val_frac >= 0.0 && train_frac + val_frac <= 1.0 + 1e-12) {
            return Err(Error::Config(format!(
                "bad split fractions train={train_frac} val={val_frac}"
            )));
        }
        let mut idx: Vec<usize> = (0..num_nodes).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        idx.shuffle(&mut rng);
        let n_train = ((num_nodes as f64) * train_frac).round() as usize;
        let n_val = (((num_nodes as f64) * val_frac).round() as usize).min(num_nodes - n_train);
        let test = idx.split_off(n_train + n_val);
        let val = idx.split_off(n_train);
        Ok(Self { train: idx, val, test })
    }

    pub fn ensure_nonempty(&self) -> Result<()> {
        if self.train.is_empty() || self.val.is_empty() || self.test.is_empty() {
            return Err(Error::Config(format!(
                "split has an empty part (train {}, val {}, test {})",
                self.train.len(),
                self.val.len(),
                self.test.len()
            )));
        }
        Ok(())
    }
}
