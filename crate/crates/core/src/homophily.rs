//! Edge homophily and class-adjusted homophily.
//!
//! Both metrics ignore self-loops and count each undirected edge once.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Graph, LabelSet};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HomophilyReport {
    pub num_nodes: usize,
    pub num_edges: usize,
    pub num_classes: usize,
    pub h_edge: f64,
    /// `None` when only one class carries degree mass.
    pub h_adj: Option<f64>,
    pub degree_sums: Vec<usize>,
}

fn check_labels(g: &Graph, y: &LabelSet) -> Result<()> {
    if y.len() != g.num_nodes() {
        return Err(Error::Contract(format!(
            "{} labels for {} nodes",
            y.len(),
            g.num_nodes()
        )));
    }
    Ok(())
}

/// Fraction of edges whose endpoints share a label.
pub fn edge_homophily(g: &Graph, y: &LabelSet) -> Result<f64> {
    check_labels(g, y)?;
    let edges = g.unique_edges();
    if edges.is_empty() {
        return Err(Error::UndefinedMetric("graph has no inter-node edges".into()));
    }
    let intra = edges.iter().filter(|&&(u, v)| y.get(u) == y.get(v)).count();
    Ok(intra as f64 / edges.len() as f64)
}

/// Per-class degree sums `D_k`.
pub fn class_degree_sums(g: &Graph, y: &LabelSet) -> Result<Vec<usize>> {
    check_labels(g, y)?;
    let mut sums = vec![0usize; y.num_classes()];
    for (node, d) in g.degrees().into_iter().enumerate() {
        sums[y.get(node)] += d;
    }
    Ok(sums)
}

/// Edge homophily recentered against the degree-weighted class baseline
/// `sum_k D_k^2 / (2|E|)^2`.
pub fn adjusted_homophily(g: &Graph, y: &LabelSet) -> Result<f64> {
    let h_edge = edge_homophily(g, y)?;
    let two_m = 2.0 * g.unique_edges().len() as f64;
    let baseline: f64 = class_degree_sums(g, y)?
        .iter()
        .map(|&d| (d as f64 / two_m).powi(2))
        .sum();
    let denom = 1.0 - baseline;
    if denom.abs() < 1e-15 {
        return Err(Error::UndefinedMetric(
            "a single class carries all degree mass".into(),
        ));
    }
    Ok((h_edge - baseline) / denom)
}

pub fn homophily_report(g: &Graph, y: &LabelSet) -> Result<HomophilyReport> {
    let h_edge = edge_homophily(g, y)?;
    let h_adj = match adjusted_homophily(g, y) {
        Ok(v) => Some(v),
        Err(Error::UndefinedMetric(_)) => None,
        Err(e) => return Err(e),
    };
    Ok(HomophilyReport {
        num_nodes: g.num_nodes(),
        num_edges: g.unique_edges().len(),
        num_classes: y.num_classes(),
        h_edge,
        h_adj,
        degree_sums: class_degree_sums(g, y)?,
    })
}
