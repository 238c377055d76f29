//! Accuracy versus edge homophily on synthetic graphs.

use rayon::prelude::*;

use crate::dataset::Dataset;
use crate::dynamics::DiffusionKind;
use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::records::{RunRecord, SummaryRow};
use crate::synth::{generate, SynthConfig};
use crate::train::train;

/// Parses `[cde-]grand-{lap,gat,trans}` or `[cde-]graphbel`; bare `grand`
/// means `grand-gat`.
pub fn parse_variant(name: &str) -> Result<(DiffusionKind, bool)> {
    let (convection, rest) = match name.strip_prefix("cde-") {
        Some(rest) => (true, rest),
        None => (false, name),
    };
    let diffusion = match rest {
        "grand" | "grand-gat" => DiffusionKind::Gat,
        "grand-lap" => DiffusionKind::Lap,
        "grand-trans" => DiffusionKind::Trans,
        "graphbel" => DiffusionKind::GraphBel,
        _ => return Err(Error::Config(format!("unknown model variant `{name}`"))),
    };
    Ok((diffusion, convection))
}

#[derive(Clone, Debug)]
pub struct SweepConfig {
    pub hs: Vec<f64>,
    pub variants: Vec<String>,
    pub seeds: Vec<u64>,
    /// Generator settings; `h_target` and `seed` are overwritten per cell.
    pub synth: SynthConfig,
    /// Model settings; variant and seed are overwritten per run.
    pub model: ModelConfig,
    /// Worker threads for concurrent trainings.
    pub jobs: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepResult {
    /// Ordered by `h`, then variant, then seed.
    pub runs: Vec<RunRecord>,
    /// One row per `(h, variant)`, same order.
    pub summary: Vec<SummaryRow>,
}

pub fn dataset_id(h: f64, seed: u64) -> String {
    format!("synth-h{h}-s{seed}")
}

pub fn split_label(synth: &SynthConfig) -> String {
    let test = 1.0 - synth.train_frac - synth.val_frac;
    format!("random:{}/{}/{}", synth.train_frac, synth.val_frac, (test * 1e9).round() / 1e9)
}

pub fn run_sweep(cfg: &SweepConfig) -> Result<SweepResult> {
    let variants = cfg
        .variants
        .iter()
        .map(|v| parse_variant(v).map(|p| (v.clone(), p)))
        .collect::<Result<Vec<_>>>()?;
    if cfg.hs.is_empty() || cfg.seeds.is_empty() || variants.is_empty() {
        return Err(Error::Config("sweep needs at least one h, seed and variant".into()));
    }

    let mut datasets: Vec<(f64, u64, Dataset)> = Vec::new();
    for &h in &cfg.hs {
        for &seed in &cfg.seeds {
            let ds = generate(&SynthConfig {
                h_target: h,
                seed,
                ..cfg.synth.clone()
            })?;
            datasets.push((h, seed, ds));
        }
    }

    let mut tasks = Vec::new();
    for (di, (h, seed, _)) in datasets.iter().enumerate() {
        for (vi, (_, (diffusion, convection))) in variants.iter().enumerate() {
            let model = ModelConfig {
                diffusion: *diffusion,
                convection: *convection,
                seed: *seed,
                ..cfg.model.clone()
            };
            tasks.push((*h, vi, *seed, di, model));
        }
    }

    let split = split_label(&cfg.synth);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let outcomes: Vec<Result<(f64, usize, u64, RunRecord)>> = pool.install(|| {
        tasks
            .par_iter()
            .map(|(h, vi, seed, di, model)| {
                let ds = &datasets[*di].2;
                let split_mask = ds.split.as_ref().expect("generated datasets carry a split");
                let out = train(&ds.graph, &ds.features, &ds.labels, split_mask, model)?;
                let rec = RunRecord::new(&dataset_id(*h, *seed), &split, model, &out.report);
                Ok((*h, *vi, *seed, rec))
            })
            .collect()
    });
    let mut runs = outcomes.into_iter().collect::<Result<Vec<_>>>()?;
    runs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

    let mut summary = Vec::new();
    for &h in &cfg.hs {
        for (vi, (name, _)) in variants.iter().enumerate() {
            let cell: Vec<&RunRecord> = runs
                .iter()
                .filter(|r| r.0 == h && r.1 == vi)
                .map(|r| &r.3)
                .collect();
            summary.push(SummaryRow::from_runs(h, name, &cell));
        }
    }
    Ok(SweepResult {
        runs: runs.into_iter().map(|r| r.3).collect(),
        summary,
    })
}
