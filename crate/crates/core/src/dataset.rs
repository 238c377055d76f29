//! On-disk dataset directories.
//!
//! ```text
//! <dir>/meta.json      {"num_nodes": N, "num_classes": C, "feature_dim": r, "undirected": bool, ...}
//! <dir>/edges.tsv      "u<TAB>v" per line, 0-based
//! <dir>/features.csv   N rows of r comma-separated reals
//! <dir>/labels.txt     N lines, one class index each
//! <dir>/splits/{train,val,test}.txt   optional, node indices one per line
//! ```

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::graph::{Graph, LabelSet, SplitMask};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub num_nodes: usize,
    pub num_classes: usize,
    pub feature_dim: usize,
    pub undirected: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h_target: Option<f64>,
    /// Edge homophily measured on the written graph.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h_edge: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub meta: DatasetMeta,
    /// Stored without added self-loops.
    pub graph: Graph,
    pub labels: LabelSet,
    pub features: Tensor,
    pub split: Option<SplitMask>,
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn parse_err(path: &Path, line: usize, detail: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        detail: detail.into(),
    }
}

/// Non-empty lines with their 1-based line numbers.
fn lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty())
}

fn parse_index_list(path: &Path) -> Result<Vec<usize>> {
    let text = read(path)?;
    lines(&text)
        .map(|(n, l)| l.parse().map_err(|_| parse_err(path, n, format!("bad node index `{l}`"))))
        .collect()
}

pub fn read_meta(dir: &Path) -> Result<DatasetMeta> {
    let path = dir.join("meta.json");
    serde_json::from_str(&read(&path)?).map_err(|e| parse_err(&path, e.line(), e.to_string()))
}

pub fn read_edges(path: &Path) -> Result<Vec<(usize, usize)>> {
    let text = read(path)?;
    let mut edges = Vec::new();
    for (n, l) in lines(&text) {
        let mut parts = l.split_whitespace();
        let (Some(u), Some(v), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(parse_err(path, n, "expected `u<TAB>v`"));
        };
        let u = u.parse().map_err(|_| parse_err(path, n, format!("bad node index `{u}`")))?;
        let v = v.parse().map_err(|_| parse_err(path, n, format!("bad node index `{v}`")))?;
        edges.push((u, v));
    }
    Ok(edges)
}

pub fn read_features(path: &Path, dim: Option<usize>) -> Result<Tensor> {
    let text = read(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (n, l) in lines(&text) {
        let row = l
            .split(',')
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| parse_err(path, n, format!("bad real `{}`", s.trim())))
            })
            .collect::<Result<Vec<_>>>()?;
        let expected = dim.or(rows.first().map(Vec::len)).unwrap_or(row.len());
        if row.len() != expected {
            return Err(parse_err(path, n, format!("{} values, expected {expected}", row.len())));
        }
        rows.push(row);
    }
    Tensor::from_rows(&rows)
}

pub fn read_labels(path: &Path) -> Result<Vec<usize>> {
    let text = read(path)?;
    lines(&text)
        .map(|(n, l)| l.parse().map_err(|_| parse_err(path, n, format!("bad class index `{l}`"))))
        .collect()
}

impl Dataset {
    pub fn load(dir: &Path) -> Result<Self> {
        let meta = read_meta(dir)?;
        let edges_path = dir.join("edges.tsv");
        let edges = read_edges(&edges_path)?;
        let graph = Graph::build(&edges, meta.num_nodes, meta.undirected, false).map_err(|e| match e {
            Error::EdgeOutOfRange { src, dst, .. } => {
                let line = edges.iter().position(|&p| p == (src, dst)).map_or(0, |i| i + 1);
                parse_err(&edges_path, line, e.to_string())
            }
            other => other,
        })?;

        let feat_path = dir.join("features.csv");
        let features = read_features(&feat_path, Some(meta.feature_dim))?;
        if features.rows() != meta.num_nodes {
            return Err(parse_err(
                &feat_path,
                features.rows(),
                format!("{} feature rows for {} nodes", features.rows(), meta.num_nodes),
            ));
        }

        let label_path = dir.join("labels.txt");
        let raw_labels = read_labels(&label_path)?;
        if raw_labels.len() != meta.num_nodes {
            return Err(parse_err(
                &label_path,
                raw_labels.len(),
                format!("{} labels for {} nodes", raw_labels.len(), meta.num_nodes),
            ));
        }
        if let Some(i) = raw_labels.iter().position(|&y| y >= meta.num_classes) {
            return Err(parse_err(&label_path, i + 1, format!("class {} >= {}", raw_labels[i], meta.num_classes)));
        }
        let labels = LabelSet::new(raw_labels, meta.num_classes)?;

        let split_dir = dir.join("splits");
        let split = if split_dir.join("train.txt").exists() {
            Some(Self::load_split(&split_dir, meta.num_nodes)?)
        } else {
            None
        };
        Ok(Self {
            meta,
            graph,
            labels,
            features,
            split,
        })
    }

    /// Reads `train.txt`, `val.txt` and `test.txt` from `dir`.
    pub fn load_split(dir: &Path, num_nodes: usize) -> Result<SplitMask> {
        SplitMask::new(
            parse_index_list(&dir.join("train.txt"))?,
            parse_index_list(&dir.join("val.txt"))?,
            parse_index_list(&dir.join("test.txt"))?,
            num_nodes,
        )
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let write = |name: &str, fill: &dyn Fn(&mut dyn Write) -> std::io::Result<()>| -> Result<()> {
            let path: PathBuf = dir.join(name);
            let file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
            let mut w = BufWriter::new(file);
            fill(&mut w).and_then(|_| w.flush()).map_err(|e| Error::io(&path, e))
        };

        let meta = serde_json::to_string_pretty(&self.meta)?;
        write("meta.json", &|w| writeln!(w, "{meta}"))?;
        write("edges.tsv", &|w| {
            for (u, v) in self.graph.unique_edges() {
                writeln!(w, "{u}\t{v}")?;
            }
            Ok(())
        })?;
        write("features.csv", &|w| {
            for r in 0..self.features.rows() {
                let row: Vec<String> = self.features.row(r).iter().map(f64::to_string).collect();
                writeln!(w, "{}", row.join(","))?;
            }
            Ok(())
        })?;
        write("labels.txt", &|w| {
            for y in self.labels.labels() {
                writeln!(w, "{y}")?;
            }
            Ok(())
        })?;
        if let Some(split) = &self.split {
            let sd = dir.join("splits");
            fs::create_dir_all(&sd).map_err(|e| Error::io(&sd, e))?;
            for (name, ids) in [("train", &split.train), ("val", &split.val), ("test", &split.test)] {
                write(&format!("splits/{name}.txt"), &|w| {
                    for i in ids {
                        writeln!(w, "{i}")?;
                    }
                    Ok(())
                })?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_fixture(dir: &Path, edges: &str, labels: &str) {
        fs::write(
            dir.join("meta.json"),
            r#"{"num_nodes": 4, "num_classes": 2, "feature_dim": 2, "undirected": true}"#,
        )
        .unwrap();
        fs::write(dir.join("edges.tsv"), edges).unwrap();
        fs::write(dir.join("features.csv"), "1,0\n0,1\n1,1\n0.5,-2\n").unwrap();
        fs::write(dir.join("labels.txt"), labels).unwrap();
    }

    #[test]
    fn loads_four_cycle() {
        let tmp = tempfile::tempdir().unwrap();
        write_fixture(tmp.path(), "0\t1\n1\t2\n2\t3\n3\t0\n", "0\n0\n1\n1\n");
        let ds = Dataset::load(tmp.path()).unwrap();
        assert_eq!(ds.graph.unique_edges().len(), 4);
        assert_eq!(ds.features.row(3), &[0.5, -2.0]);
        assert!(ds.split.is_none());
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let tmp = tempfile::tempdir().unwrap();
        write_fixture(tmp.path(), "0\t1\n1\tx\n", "0\n0\n1\n1\n");
        match Dataset::load(tmp.path()) {
            Err(Error::Parse { line, path, .. }) => {
                assert_eq!(line, 2);
                assert!(path.ends_with("edges.tsv"));
            }
            other => panic!("{other:?}"),
        }
        write_fixture(tmp.path(), "0\t1\n1\t9\n", "0\n0\n1\n1\n");
        assert!(matches!(Dataset::load(tmp.path()), Err(Error::Parse { line: 2, .. })));
        write_fixture(tmp.path(), "0\t1\n", "0\n0\n7\n1\n");
        assert!(matches!(Dataset::load(tmp.path()), Err(Error::Parse { line: 3, .. })));
    }

    #[test]
    fn save_load_round_trip() {
        let tmp = tempfile::tempdir().unwrap();
        write_fixture(tmp.path(), "0\t1\n1\t2\n2\t3\n3\t0\n", "0\n0\n1\n1\n");
        let mut ds = Dataset::load(tmp.path()).unwrap();
        ds.split = Some(SplitMask::new(vec![0, 1], vec![2], vec![3], 4).unwrap());
        ds.meta.seed = Some(11);
        let out = tmp.path().join("copy");
        ds.save(&out).unwrap();
        assert_eq!(Dataset::load(&out).unwrap(), ds);
    }
}
