//! Synthetic regular graphs with a controlled edge homophily.
//!
//! Every node starts `intra` edges to distinct random nodes of its own class
//! and `round(intra / h - intra)` edges to distinct random nodes of other
//! classes. The union is symmetrized and deduplicated, so the realized
//! homophily lands close to (not exactly on) the target.

use std::path::{Path, PathBuf};

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::dataset::{Dataset, DatasetMeta};
use crate::error::{Error, Result};
use crate::graph::{Graph, LabelSet, SplitMask};
use crate::homophily::edge_homophily;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSource {
    Gaussian {
        dim: usize,
        class_mean_scale: f64,
        noise_sigma: f64,
    },
    /// Dataset directory whose features are pooled by label.
    Bank(PathBuf),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub h_target: f64,
    pub num_classes: usize,
    pub nodes_per_class: usize,
    pub intra_edges_per_node: usize,
    pub feature_source: FeatureSource,
    pub train_frac: f64,
    pub val_frac: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            h_target: 0.5,
            num_classes: 5,
            nodes_per_class: 100,
            intra_edges_per_node: 10,
            feature_source: FeatureSource::Gaussian {
                dim: 16,
                class_mean_scale: 1.0,
                noise_sigma: 1.0,
            },
            train_frac: 0.6,
            val_frac: 0.2,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn num_nodes(&self) -> usize {
        self.num_classes * self.nodes_per_class
    }

    /// Inter-class edges started by each node.
    pub fn inter_edges_per_node(&self) -> usize {
        let intra = self.intra_edges_per_node as f64;
        (intra / self.h_target - intra).round().max(0.0) as usize
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.h_target > 0.0 && self.h_target <= 1.0) {
            return Err(Error::Config(format!("h_target {} outside (0, 1]", self.h_target)));
        }
        if self.num_classes < 2 {
            return Err(Error::Config("need at least 2 classes".into()));
        }
        if self.nodes_per_class < 2 {
            return Err(Error::Config("nodes_per_class must be at least 2".into()));
        }
        if self.intra_edges_per_node < 1 {
            return Err(Error::Config("intra_edges_per_node must be at least 1".into()));
        }
        if self.intra_edges_per_node >= self.nodes_per_class {
            return Err(Error::Infeasible(format!(
                "{} intra-class partners requested, only {} other nodes per class",
                self.intra_edges_per_node,
                self.nodes_per_class - 1
            )));
        }
        let inter = self.inter_edges_per_node();
        let available = self.num_nodes() - self.nodes_per_class;
        if inter > available {
            return Err(Error::Infeasible(format!(
                "h_target {} needs {inter} inter-class partners per node, only {available} exist",
                self.h_target
            )));
        }
        if let FeatureSource::Gaussian { dim, noise_sigma, .. } = self.feature_source {
            if dim == 0 || !(noise_sigma >= 0.0) {
                return Err(Error::Config("gaussian features need dim >= 1 and noise_sigma >= 0".into()));
            }
        }
        Ok(())
    }
}

/// Per-class pools of feature vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureBank {
    pools: Vec<Tensor>,
}

impl FeatureBank {
    pub fn new(pools: Vec<Tensor>) -> Result<Self> {
        let dim = pools.first().map_or(0, Tensor::cols);
        if let Some(k) = pools.iter().position(|p| p.rows() == 0) {
            return Err(Error::Config(format!("feature bank class {k} is empty")));
        }
        if pools.iter().any(|p| p.cols() != dim) {
            return Err(Error::dim("FeatureBank::new", "pools differ in feature dimension"));
        }
        Ok(Self { pools })
    }

    pub fn num_classes(&self) -> usize {
        self.pools.len()
    }

    pub fn dim(&self) -> usize {
        self.pools[0].cols()
    }

    pub fn pool(&self, class: usize) -> &Tensor {
        &self.pools[class]
    }
}

fn orthonormal_directions(count: usize, dim: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut dirs: Vec<Vec<f64>> = Vec::with_capacity(count);
    while dirs.len() < count {
        let mut v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        // Gram-Schmidt while there is room, plain random directions after that
        if dirs.len() < dim {
            for d in &dirs {
                let dot: f64 = v.iter().zip(d).map(|(a, b)| a * b).sum();
                v.iter_mut().zip(d).for_each(|(a, b)| *a -= dot * b);
            }
        }
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm > 1e-8 {
            dirs.push(v.into_iter().map(|a| a / norm).collect());
        }
    }
    dirs
}

/// Class `k`'s pool is `pool_size` draws of `scale * u_k + noise_sigma * N(0, I)`
/// with `u_k` random unit directions, mutually orthogonal when `dim >= num_classes`.
pub fn gaussian_bank(
    num_classes: usize,
    dim: usize,
    class_mean_scale: f64,
    noise_sigma: f64,
    pool_size: usize,
    seed: u64,
) -> Result<FeatureBank> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let means = orthonormal_directions(num_classes, dim, &mut rng);
    let pools = means
        .iter()
        .map(|mu| {
            let data = (0..pool_size)
                .flat_map(|_| mu.iter().map(|m| class_mean_scale * m).collect::<Vec<_>>())
                .map(|m| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    m + noise_sigma * z
                })
                .collect();
            Tensor::new(pool_size, dim, data)
        })
        .collect::<Result<Vec<_>>>()?;
    FeatureBank::new(pools)
}

/// Groups a dataset directory's feature rows by label.
pub fn load_bank(path: &Path) -> Result<FeatureBank> {
    let ds = Dataset::load(path)?;
    bank_from_dataset(&ds)
}

pub fn bank_from_dataset(ds: &Dataset) -> Result<FeatureBank> {
    let dim = ds.features.cols();
    let mut rows: Vec<Vec<f64>> = vec![Vec::new(); ds.labels.num_classes()];
    for (i, &y) in ds.labels.labels().iter().enumerate() {
        rows[y].extend_from_slice(ds.features.row(i));
    }
    let pools = rows
        .into_iter()
        .map(|data| Tensor::new(data.len() / dim.max(1), dim, data))
        .collect::<Result<Vec<_>>>()?;
    FeatureBank::new(pools)
}

fn stream(seed: u64, salt: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(salt);
    rng
}

/// Undirected edge list, labels and features. Node `i` has class `i / nodes_per_class`.
pub fn generate(cfg: &SynthConfig) -> Result<Dataset> {
    cfg.validate()?;
    let (c, m) = (cfg.num_classes, cfg.nodes_per_class);
    let n = cfg.num_nodes();
    let inter = cfg.inter_edges_per_node();
    let mut rng = stream(cfg.seed, 1);

    let mut edges = Vec::with_capacity(n * (cfg.intra_edges_per_node + inter));
    for u in 0..n {
        let k = u / m;
        let base = k * m;
        // own class minus u itself: index j maps to base + j, skipping u
        for j in sample(&mut rng, m - 1, cfg.intra_edges_per_node) {
            let v = base + j;
            edges.push((u, if v >= u { v + 1 } else { v }));
        }
        // all other classes: index j maps past the own-class block
        for j in sample(&mut rng, n - m, inter) {
            edges.push((u, if j >= base { j + m } else { j }));
        }
    }
    let graph = Graph::build(&edges, n, true, false)?;
    let labels = LabelSet::new((0..n).map(|i| i / m).collect(), c)?;

    let bank = match &cfg.feature_source {
        FeatureSource::Gaussian {
            dim,
            class_mean_scale,
            noise_sigma,
        } => gaussian_bank(c, *dim, *class_mean_scale, *noise_sigma, m, cfg.seed ^ 0x6a09_e667)?,
        FeatureSource::Bank(path) => load_bank(path)?,
    };
    if bank.num_classes() < c {
        return Err(Error::Config(format!(
            "feature bank has {} classes, generator needs {c}",
            bank.num_classes()
        )));
    }
    let features = match cfg.feature_source {
        // one independent draw per node
        FeatureSource::Gaussian { .. } => {
            let mut rows = Vec::with_capacity(n);
            for k in 0..c {
                for r in 0..m {
                    rows.push(bank.pool(k).row(r).to_vec());
                }
            }
            Tensor::from_rows(&rows)?
        }
        FeatureSource::Bank(_) => {
            let mut frng = stream(cfg.seed, 2);
            let rows: Vec<Vec<f64>> = (0..n)
                .map(|i| {
                    let pool = bank.pool(i / m);
                    pool.row(frng.random_range(0..pool.rows())).to_vec()
                })
                .collect();
            Tensor::from_rows(&rows)?
        }
    };

    let split = SplitMask::random(n, cfg.train_frac, cfg.val_frac, cfg.seed ^ 0xbb67_ae85)?;
    let h_edge = edge_homophily(&graph, &labels)?;
    Ok(Dataset {
        meta: DatasetMeta {
            num_nodes: n,
            num_classes: c,
            feature_dim: features.cols(),
            undirected: true,
            seed: Some(cfg.seed),
            h_target: Some(cfg.h_target),
            h_edge: Some(h_edge),
        },
        graph,
        labels,
        features,
        split: Some(split),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(h: f64, seed: u64) -> SynthConfig {
        SynthConfig {
            h_target: h,
            seed,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn inter_counts() {
        assert_eq!(cfg(1.0, 0).inter_edges_per_node(), 0);
        assert_eq!(cfg(0.5, 0).inter_edges_per_node(), 10);
        assert_eq!(cfg(0.3, 0).inter_edges_per_node(), 23);
        assert_eq!(cfg(0.1, 0).inter_edges_per_node(), 90);
    }

    #[test]
    fn h_one_is_intra_only() {
        let ds = generate(&cfg(1.0, 3)).unwrap();
        assert_eq!(ds.meta.h_edge, Some(1.0));
        assert!(ds.graph.degrees().iter().all(|&d| d >= 10));
    }

    #[test]
    fn infeasible_targets_rejected() {
        let mut c = cfg(0.01, 0);
        assert!(matches!(generate(&c), Err(Error::Infeasible(_))));
        c.h_target = 0.0;
        assert!(matches!(generate(&c), Err(Error::Config(_))));
        c = cfg(0.5, 0);
        c.nodes_per_class = 10;
        assert!(matches!(generate(&c), Err(Error::Infeasible(_))));
    }

    #[test]
    fn deterministic_and_seed_sensitive() {
        let a = generate(&cfg(0.5, 7)).unwrap();
        let b = generate(&cfg(0.5, 7)).unwrap();
        let d = generate(&cfg(0.5, 8)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.graph.unique_edges(), d.graph.unique_edges());
    }

    #[test]
    fn zero_noise_pools_are_constant() {
        let bank = gaussian_bank(3, 4, 2.0, 0.0, 5, 1).unwrap();
        for k in 0..3 {
            let p = bank.pool(k);
            for r in 1..5 {
                assert_eq!(p.row(r), p.row(0));
            }
            let norm: f64 = p.row(0).iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((norm - 2.0).abs() < 1e-12);
        }
        let dot: f64 = bank.pool(0).row(0).iter().zip(bank.pool(1).row(0)).map(|(a, b)| a * b).sum();
        assert!(dot.abs() < 1e-12);
    }

    #[test]
    fn empty_bank_class_rejected() {
        assert!(FeatureBank::new(vec![Tensor::zeros(2, 3), Tensor::zeros(0, 3)]).is_err());
    }
}
