//! Results tables: one CSV row per training run plus JSON sidecars.
//!
//! Column order of the run table is fixed:
//!
//! ```text
//! dataset,diffusion,convection,conv_target,sigma,solver,T,tau,hidden_dim,lr,wd,
//! dropout,seed,split,epochs_run,best_epoch,train_metric,val_metric,test_metric,wall_clock_s
//! ```

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dynamics::{Activation, ConvTarget, DiffusionKind};
use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::solver::Method;
use crate::train::TrainReport;

/// Version tag written into every sidecar.
pub const VERSION: &str = concat!("graph-cde ", env!("CARGO_PKG_VERSION"));

pub const RUN_COLUMNS: [&str; 20] = [
    "dataset",
    "diffusion",
    "convection",
    "conv_target",
    "sigma",
    "solver",
    "T",
    "tau",
    "hidden_dim",
    "lr",
    "wd",
    "dropout",
    "seed",
    "split",
    "epochs_run",
    "best_epoch",
    "train_metric",
    "val_metric",
    "test_metric",
    "wall_clock_s",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub dataset: String,
    pub diffusion: DiffusionKind,
    pub convection: bool,
    pub conv_target: ConvTarget,
    pub sigma: Activation,
    pub solver: Method,
    #[serde(rename = "T")]
    pub time: f64,
    pub tau: f64,
    pub hidden_dim: usize,
    pub lr: f64,
    pub wd: f64,
    pub dropout: f64,
    pub seed: u64,
    pub split: String,
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub train_metric: f64,
    pub val_metric: f64,
    pub test_metric: f64,
    pub wall_clock_s: f64,
}

impl RunRecord {
    pub fn new(dataset: &str, split: &str, cfg: &ModelConfig, report: &TrainReport) -> Self {
        Self {
            dataset: dataset.to_string(),
            diffusion: cfg.diffusion,
            convection: cfg.convection,
            conv_target: cfg.conv_target,
            sigma: cfg.activation,
            solver: cfg.solver.method,
            time: cfg.solver.time,
            tau: cfg.solver.step_size,
            hidden_dim: cfg.hidden_dim,
            lr: cfg.learning_rate,
            wd: cfg.weight_decay,
            dropout: cfg.dropout,
            seed: cfg.seed,
            split: split.to_string(),
            epochs_run: report.epochs_run(),
            best_epoch: report.best_epoch,
            train_metric: report.train_metric,
            val_metric: report.val_metric,
            test_metric: report.test_metric,
            wall_clock_s: report.wall_clock_s,
        }
    }

    /// Variant label, e.g. `cde-grand-gat`.
    pub fn variant(&self) -> String {
        ModelConfig {
            diffusion: self.diffusion,
            convection: self.convection,
            ..ModelConfig::default()
        }
        .variant_name()
    }
}

/// Full configuration and per-epoch history of one run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSidecar {
    pub version: String,
    pub dataset: String,
    pub split: String,
    pub config: ModelConfig,
    pub report: TrainReport,
}

impl RunSidecar {
    pub fn new(dataset: &str, split: &str, cfg: &ModelConfig, report: &TrainReport) -> Self {
        Self {
            version: VERSION.to_string(),
            dataset: dataset.to_string(),
            split: split.to_string(),
            config: cfg.clone(),
            report: report.clone(),
        }
    }
}

/// Appends rows to a CSV table, writing the header only when the file is new
/// or empty. An existing file must carry the same header.
pub fn append_rows<T: Serialize>(path: &Path, columns: &[&str], rows: &[T]) -> Result<()> {
    let existing = match File::open(path) {
        Ok(f) => {
            let mut first = String::new();
            BufReader::new(f)
                .read_line(&mut first)
                .map_err(|e| Error::io(path, e))?;
            Some(first.trim_end().to_string())
        }
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => None,
        Err(e) => return Err(Error::io(path, e)),
    };
    let expected = columns.join(",");
    let need_header = match existing.as_deref() {
        None | Some("") => true,
        Some(h) if h == expected => false,
        Some(h) => {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: 1,
                detail: format!("existing header `{h}` differs from `{expected}`"),
            })
        }
    };
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(file);
    if need_header {
        w.write_record(columns)?;
    }
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn append_runs(path: &Path, rows: &[RunRecord]) -> Result<()> {
    append_rows(path, &RUN_COLUMNS, rows)
}

pub fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = csv::Reader::from_reader(file);
    r.deserialize()
        .enumerate()
        .map(|(i, row)| {
            row.map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: i + 2,
                detail: e.to_string(),
            })
        })
        .collect()
}

pub fn read_runs(path: &Path) -> Result<Vec<RunRecord>> {
    read_rows(path)
}

/// Appends one JSON object per line.
pub fn append_sidecar(path: &Path, sidecar: &RunSidecar) -> Result<()> {
    let mut f = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    let line = serde_json::to_string(sidecar)?;
    writeln!(f, "{line}").map_err(|e| Error::io(path, e))
}

pub const SUMMARY_COLUMNS: [&str; 7] = ["h", "variant", "seeds", "mean_test", "std_test", "mean_val", "std_val"];

/// Mean and sample standard deviation over seeds for one `(h, variant)` cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub h: f64,
    pub variant: String,
    pub seeds: usize,
    pub mean_test: f64,
    pub std_test: f64,
    pub mean_val: f64,
    pub std_val: f64,
}

/// Mean and sample standard deviation (0 for fewer than two values).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

impl SummaryRow {
    pub fn from_runs(h: f64, variant: &str, runs: &[&RunRecord]) -> Self {
        let test: Vec<f64> = runs.iter().map(|r| r.test_metric).collect();
        let val: Vec<f64> = runs.iter().map(|r| r.val_metric).collect();
        let (mean_test, std_test) = mean_std(&test);
        let (mean_val, std_val) = mean_std(&val);
        Self {
            h,
            variant: variant.to_string(),
            seeds: runs.len(),
            mean_test,
            std_test,
            mean_val,
            std_val,
        }
    }
}
