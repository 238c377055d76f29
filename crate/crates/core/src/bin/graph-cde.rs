use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use graph_cde::dataset::Dataset;
use graph_cde::diagnostics::{fixture, gradcheck_configs, model_grad_check};
use graph_cde::dynamics::{Activation, ConvTarget, DiffusionKind};
use graph_cde::graph::SplitMask;
use graph_cde::homophily::homophily_report;
use graph_cde::metrics::Metric;
use graph_cde::model::ModelConfig;
use graph_cde::records::{self, RunRecord, RunSidecar, SUMMARY_COLUMNS};
use graph_cde::solver::{Method, SolverConfig};
use graph_cde::sweep::{run_sweep, SweepConfig};
use graph_cde::synth::{generate, FeatureSource, SynthConfig};
use graph_cde::train::train;
use graph_cde::{Error, Result};

#[derive(Parser)]
#[command(name = "graph-cde", version, about = "Graph neural convection-diffusion for node classification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic graph with a target edge homophily.
    GenSynth(GenSynthArgs),
    /// Print edge and adjusted homophily of a dataset.
    Homophily {
        dataset: PathBuf,
    },
    /// Train one model and append a row to a results table.
    Train(TrainArgs),
    /// Accuracy versus homophily over synthetic graphs.
    Sweep(SweepArgs),
    /// Compare analytic and finite-difference gradients for every model variant.
    Gradcheck(GradcheckArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 5)]
    classes: usize,
    #[arg(long, default_value_t = 100)]
    nodes_per_class: usize,
    #[arg(long, default_value_t = 10)]
    intra: usize,
    /// Gaussian feature dimension.
    #[arg(long, default_value_t = 16)]
    dim: usize,
    #[arg(long, default_value_t = 1.0)]
    mean_scale: f64,
    #[arg(long, default_value_t = 1.0)]
    noise: f64,
    /// Sample features from this dataset's class pools instead of Gaussians.
    #[arg(long)]
    bank: Option<PathBuf>,
}

impl SynthArgs {
    fn config(&self, h: f64, seed: u64) -> SynthConfig {
        let feature_source = match &self.bank {
            Some(p) => FeatureSource::Bank(p.clone()),
            None => FeatureSource::Gaussian {
                dim: self.dim,
                class_mean_scale: self.mean_scale,
                noise_sigma: self.noise,
            },
        };
        SynthConfig {
            h_target: h,
            num_classes: self.classes,
            nodes_per_class: self.nodes_per_class,
            intra_edges_per_node: self.intra,
            feature_source,
            seed,
            ..SynthConfig::default()
        }
    }
}

#[derive(Args)]
struct GenSynthArgs {
    #[arg(long)]
    h: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    synth: SynthArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum OnOff {
    On,
    Off,
}

#[derive(Args)]
struct ModelArgs {
    #[arg(long, value_enum, default_value = "gat")]
    diffusion: DiffusionArg,
    #[arg(long, value_enum, default_value = "on")]
    convection: OnOff,
    #[arg(long, value_enum, default_value = "xj")]
    conv_target: TargetArg,
    #[arg(long, value_enum, default_value = "tanh")]
    sigma: SigmaArg,
    #[arg(long, value_enum, default_value = "euler")]
    solver: SolverArg,
    #[arg(long, default_value_t = 1.0)]
    time: f64,
    #[arg(long, default_value_t = 1.0)]
    step_size: f64,
    #[arg(long, default_value_t = 64)]
    hidden_dim: usize,
    #[arg(long, default_value_t = 0.01)]
    lr: f64,
    #[arg(long, default_value_t = 0.001)]
    weight_decay: f64,
    #[arg(long, default_value_t = 0.2)]
    dropout: f64,
    #[arg(long, default_value_t = 200)]
    epochs: usize,
    #[arg(long, default_value_t = 100)]
    patience: usize,
    #[arg(long, value_enum, default_value = "acc")]
    metric: MetricArg,
}

#[derive(Clone, Copy, ValueEnum)]
enum DiffusionArg {
    Lap,
    Gat,
    Trans,
    Graphbel,
}

#[derive(Clone, Copy, ValueEnum)]
enum TargetArg {
    Xj,
    Xi,
}

#[derive(Clone, Copy, ValueEnum)]
enum SigmaArg {
    Tanh,
    Sigmoid,
    Id,
}

#[derive(Clone, Copy, ValueEnum)]
enum SolverArg {
    Euler,
    Rk4,
}

#[derive(Clone, Copy, ValueEnum)]
enum MetricArg {
    Acc,
    Auc,
}

impl ModelArgs {
    fn config(&self, seed: u64) -> ModelConfig {
        ModelConfig {
            hidden_dim: self.hidden_dim,
            diffusion: match self.diffusion {
                DiffusionArg::Lap => DiffusionKind::Lap,
                DiffusionArg::Gat => DiffusionKind::Gat,
                DiffusionArg::Trans => DiffusionKind::Trans,
                DiffusionArg::Graphbel => DiffusionKind::GraphBel,
            },
            convection: matches!(self.convection, OnOff::On),
            activation: match self.sigma {
                SigmaArg::Tanh => Activation::Tanh,
                SigmaArg::Sigmoid => Activation::Sigmoid,
                SigmaArg::Id => Activation::Identity,
            },
            conv_target: match self.conv_target {
                TargetArg::Xj => ConvTarget::NeighborXj,
                TargetArg::Xi => ConvTarget::SelfXi,
            },
            solver: SolverConfig::new(
                match self.solver {
                    SolverArg::Euler => Method::Euler,
                    SolverArg::Rk4 => Method::Rk4,
                },
                self.time,
                self.step_size,
            ),
            dropout: self.dropout,
            learning_rate: self.lr,
            weight_decay: self.weight_decay,
            max_epochs: self.epochs,
            patience: self.patience,
            seed,
            metric: match self.metric {
                MetricArg::Acc => Metric::Accuracy,
                MetricArg::Auc => Metric::RocAuc,
            },
            ..ModelConfig::default()
        }
    }
}

#[derive(Args)]
struct TrainArgs {
    dataset: PathBuf,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// `fixed` (masks under <dataset>/splits), `fixed:K` (masks under
    /// <dataset>/splits/K) or `random:TRAIN/VAL/TEST`.
    #[arg(long, default_value = "random:0.6/0.2/0.2")]
    split: String,
    /// Results table; a JSON-lines sidecar is written next to it.
    #[arg(long, default_value = "runs.csv")]
    out: PathBuf,
    /// Save the best-validation parameters here.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long, value_delimiter = ',', default_value = "0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9")]
    h: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "cde-grand-gat,grand-gat")]
    variants: Vec<String>,
    /// Number of seeds, 0..S.
    #[arg(long, default_value_t = 5)]
    seeds: u64,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Output directory for runs.csv and summary.csv.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    synth: SynthArgs,
    #[command(flatten)]
    model: ModelArgs,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 8)]
    nodes: usize,
    #[arg(long, default_value_t = 4)]
    hidden_dim: usize,
    #[arg(long, default_value_t = 1e-5)]
    eps: f64,
    #[arg(long, default_value_t = 1e-4)]
    tol: f64,
    #[arg(long, value_enum, default_value = "tanh")]
    sigma: SigmaArg,
    #[arg(long, value_enum, default_value = "euler")]
    solver: SolverArg,
    #[arg(long, default_value_t = 1.0)]
    time: f64,
    #[arg(long, default_value_t = 0.5)]
    step_size: f64,
}

fn split_for(arg: &str, ds: &Dataset, dir: &Path, seed: u64) -> Result<SplitMask> {
    if let Some(k) = arg.strip_prefix("fixed:") {
        let k: usize = k
            .parse()
            .map_err(|_| Error::Config(format!("--split fixed:K needs an integer K, got `{arg}`")))?;
        return Dataset::load_split(&dir.join("splits").join(k.to_string()), ds.meta.num_nodes);
    }
    if arg == "fixed" {
        return match &ds.split {
            Some(s) => Ok(s.clone()),
            None => Err(Error::Config(format!(
                "--split fixed needs {}",
                dir.join("splits").join("train.txt").display()
            ))),
        };
    }
    let fracs = arg
        .strip_prefix("random:")
        .map(|r| r.split('/').map(str::parse::<f64>).collect::<std::result::Result<Vec<_>, _>>());
    match fracs {
        Some(Ok(f)) if f.len() == 3 && (f.iter().sum::<f64>() - 1.0).abs() < 1e-9 => {
            SplitMask::random(ds.meta.num_nodes, f[0], f[1], seed)
        }
        _ => Err(Error::Config(format!(
            "--split must be `fixed` or `random:TRAIN/VAL/TEST` summing to 1, got `{arg}`"
        ))),
    }
}

fn cmd_gen_synth(a: &GenSynthArgs) -> Result<()> {
    let ds = generate(&a.synth.config(a.h, a.seed))?;
    ds.save(&a.out)?;
    println!(
        "wrote {} ({} nodes, {} edges, h_edge {:.4})",
        a.out.display(),
        ds.meta.num_nodes,
        ds.graph.unique_edges().len(),
        ds.meta.h_edge.unwrap_or(f64::NAN)
    );
    Ok(())
}

fn cmd_homophily(path: &Path) -> Result<()> {
    let ds = Dataset::load(path)?;
    let r = homophily_report(&ds.graph, &ds.labels)?;
    println!("nodes     {}", r.num_nodes);
    println!("edges     {}", r.num_edges);
    println!("classes   {}", r.num_classes);
    println!("h_edge    {:.6}", r.h_edge);
    match r.h_adj {
        Some(v) => println!("h_adj     {v:.6}"),
        None => println!("h_adj     undefined"),
    }
    println!("{}", serde_json::to_string(&r)?);
    Ok(())
}

fn dataset_name(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

fn cmd_train(a: &TrainArgs) -> Result<()> {
    let cfg = a.model.config(a.seed);
    cfg.validate()?;
    let ds = Dataset::load(&a.dataset)?;
    if cfg.metric == Metric::RocAuc && ds.meta.num_classes != 2 {
        return Err(Error::Config(format!(
            "--metric auc needs 2 classes, dataset has {}",
            ds.meta.num_classes
        )));
    }
    let split = split_for(&a.split, &ds, &a.dataset, a.seed)?;
    let out = train(&ds.graph, &ds.features, &ds.labels, &split, &cfg)?;
    let name = dataset_name(&a.dataset);
    let record = RunRecord::new(&name, &a.split, &cfg, &out.report);
    records::append_runs(&a.out, std::slice::from_ref(&record))?;
    records::append_sidecar(
        &a.out.with_extension("jsonl"),
        &RunSidecar::new(&name, &a.split, &cfg, &out.report),
    )?;
    if let Some(path) = &a.checkpoint {
        out.model.params().save(path)?;
    }
    println!(
        "{} {}: train {:.4} val {:.4} test {:.4} (best epoch {} of {})",
        cfg.variant_name(),
        cfg.metric.name(),
        record.train_metric,
        record.val_metric,
        record.test_metric,
        record.best_epoch,
        record.epochs_run
    );
    Ok(())
}

fn cmd_sweep(a: &SweepArgs) -> Result<()> {
    let cfg = SweepConfig {
        hs: a.h.clone(),
        variants: a.variants.clone(),
        seeds: (0..a.seeds).collect(),
        synth: a.synth.config(0.5, 0),
        model: a.model.config(0),
        jobs: a.jobs,
    };
    let result = run_sweep(&cfg)?;
    std::fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;
    records::append_runs(&a.out.join("runs.csv"), &result.runs)?;
    records::append_rows(&a.out.join("summary.csv"), &SUMMARY_COLUMNS, &result.summary)?;
    for row in &result.summary {
        println!(
            "h={:<4} {:<16} test {:.4} +- {:.4} ({} seeds)",
            row.h, row.variant, row.mean_test, row.std_test, row.seeds
        );
    }
    Ok(())
}

fn cmd_gradcheck(a: &GradcheckArgs) -> Result<bool> {
    let fx = fixture(a.nodes, 3, 7)?;
    let base = ModelConfig {
        hidden_dim: a.hidden_dim,
        activation: match a.sigma {
            SigmaArg::Tanh => Activation::Tanh,
            SigmaArg::Sigmoid => Activation::Sigmoid,
            SigmaArg::Id => Activation::Identity,
        },
        solver: SolverConfig::new(
            match a.solver {
                SolverArg::Euler => Method::Euler,
                SolverArg::Rk4 => Method::Rk4,
            },
            a.time,
            a.step_size,
        ),
        ..ModelConfig::default()
    };
    let mut all_ok = true;
    for cfg in gradcheck_configs(&base) {
        let report = model_grad_check(&cfg, &fx, a.eps)?;
        let ok = report.max_rel_error < a.tol;
        all_ok &= ok;
        let label = format!("{} target={}", cfg.variant_name(), cfg.conv_target.name());
        if ok {
            println!("pass  {label:<32} max rel err {:.3e}", report.max_rel_error);
        } else {
            let (param, err) = report.worst_param().map_or(("?", f64::NAN), |(n, e)| (n.as_str(), *e));
            println!("FAIL  {label:<32} max rel err {:.3e} in `{param}` ({err:.3e})", report.max_rel_error);
        }
    }
    Ok(all_ok)
}

fn run(cli: &Cli) -> Result<bool> {
    match &cli.command {
        Command::GenSynth(a) => cmd_gen_synth(a).map(|_| true),
        Command::Homophily { dataset } => cmd_homophily(dataset).map(|_| true),
        Command::Train(a) => cmd_train(a).map(|_| true),
        Command::Sweep(a) => cmd_sweep(a).map(|_| true),
        Command::Gradcheck(a) => cmd_gradcheck(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("error[E_GRADCHECK]: gradient check failed");
            ExitCode::FAILURE
        }
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("error[{}]: {msg}", e.code());
            ExitCode::FAILURE
        }
    }
}
