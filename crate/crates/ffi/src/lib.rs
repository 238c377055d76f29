//! C ABI over `graph-cde`.
//!
//! Objects cross the boundary as opaque pointers that the caller releases
//! with the matching `*_free` function. Every fallible call returns a
//! [`GcdeStatus`]; on failure, [`gcde_last_error`] holds a message for the
//! calling thread until its next failing call.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use graph_cde::dataset::Dataset;
use graph_cde::dynamics::{Activation, ConvTarget, DiffusionKind};
use graph_cde::graph::{Graph, LabelSet, SplitMask};
use graph_cde::homophily::homophily_report;
use graph_cde::model::ModelConfig;
use graph_cde::solver::{Method, SolverConfig};
use graph_cde::synth::{generate, FeatureSource, SynthConfig};
use graph_cde::train::train;
use graph_cde::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GcdeStatus {
    Ok = 0,
    Graph = 1,
    Metric = 2,
    Dimension = 3,
    Contract = 4,
    Numeric = 5,
    Diverged = 6,
    Config = 7,
    Infeasible = 8,
    Parse = 9,
    Io = 10,
    NullPointer = 11,
    InvalidUtf8 = 12,
    Panic = 13,
}

impl From<&Error> for GcdeStatus {
    fn from(e: &Error) -> Self {
        match e.code() {
            "E_GRAPH" => GcdeStatus::Graph,
            "E_METRIC" => GcdeStatus::Metric,
            "E_DIM" => GcdeStatus::Dimension,
            "E_CONTRACT" => GcdeStatus::Contract,
            "E_NUMERIC" => GcdeStatus::Numeric,
            "E_DIVERGED" => GcdeStatus::Diverged,
            "E_CONFIG" => GcdeStatus::Config,
            "E_INFEASIBLE" => GcdeStatus::Infeasible,
            "E_PARSE" => GcdeStatus::Parse,
            _ => GcdeStatus::Io,
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("no interior NUL");
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

struct Failure(GcdeStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure((&e).into(), format!("error[{}]: {e}", e.code()))
    }
}

fn null(what: &str) -> Failure {
    Failure(GcdeStatus::NullPointer, format!("`{what}` is null"))
}

/// Runs `f`, converting errors and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> GcdeStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => GcdeStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            GcdeStatus::Panic
        }
    }
}

unsafe fn path_arg(p: *const c_char, what: &str) -> Result<PathBuf, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(PathBuf::from)
        .map_err(|_| Failure(GcdeStatus::InvalidUtf8, format!("`{what}` is not UTF-8")))
}

unsafe fn slice_arg<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

/// Message for the last failed call on this thread, or NULL. The pointer is
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn gcde_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn gcde_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Opaque CSR graph.
pub struct GcdeGraph(Graph);

/// Opaque dataset: graph, features, labels and an optional split.
pub struct GcdeDataset(Dataset);

/// Builds a deduplicated graph from `num_edges` pairs `(src[k], dst[k])`.
///
/// # Safety
/// `src` and `dst` must point to `num_edges` readable values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gcde_graph_new(
    src: *const usize,
    dst: *const usize,
    num_edges: usize,
    num_nodes: usize,
    undirected: bool,
    out: *mut *mut GcdeGraph,
) -> GcdeStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let s = slice_arg(src, num_edges, "src")?;
        let d = slice_arg(dst, num_edges, "dst")?;
        let edges: Vec<(usize, usize)> = s.iter().copied().zip(d.iter().copied()).collect();
        let g = Graph::build(&edges, num_nodes, undirected, false)?;
        *out = Box::into_raw(Box::new(GcdeGraph(g)));
        Ok(())
    })
}

/// # Safety
/// `graph` must come from `gcde_graph_new` and not be freed twice. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn gcde_graph_free(graph: *mut GcdeGraph) {
    if !graph.is_null() {
        drop(Box::from_raw(graph));
    }
}

/// # Safety
/// `graph` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn gcde_graph_num_nodes(graph: *const GcdeGraph) -> usize {
    graph.as_ref().map_or(0, |g| g.0.num_nodes())
}

/// Number of distinct edges, counting each undirected edge once.
///
/// # Safety
/// `graph` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn gcde_graph_num_edges(graph: *const GcdeGraph) -> usize {
    graph.as_ref().map_or(0, |g| g.0.unique_edges().len())
}

/// Edge homophily and adjusted homophily for `labels` (one per node).
/// `*h_adj_defined` is false, and `*h_adj` NaN, when the adjusted value is undefined.
///
/// # Safety
/// `labels` must hold `gcde_graph_num_nodes(graph)` values; outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn gcde_homophily(
    graph: *const GcdeGraph,
    labels: *const usize,
    num_classes: usize,
    h_edge: *mut f64,
    h_adj: *mut f64,
    h_adj_defined: *mut bool,
) -> GcdeStatus {
    guard(|| {
        let g = &graph.as_ref().ok_or_else(|| null("graph"))?.0;
        let y = slice_arg(labels, g.num_nodes(), "labels")?;
        let (he, ha, hd) = (
            out_arg(h_edge, "h_edge")?,
            out_arg(h_adj, "h_adj")?,
            out_arg(h_adj_defined, "h_adj_defined")?,
        );
        let report = homophily_report(g, &LabelSet::new(y.to_vec(), num_classes)?)?;
        *he = report.h_edge;
        *ha = report.h_adj.unwrap_or(f64::NAN);
        *hd = report.h_adj.is_some();
        Ok(())
    })
}

/// Loads a dataset directory.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gcde_dataset_load(path: *const c_char, out: *mut *mut GcdeDataset) -> GcdeStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let ds = Dataset::load(&path_arg(path, "path")?)?;
        *out = Box::into_raw(Box::new(GcdeDataset(ds)));
        Ok(())
    })
}

/// Synthetic graph with Gaussian class features and a 60/20/20 random split.
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct GcdeSynthConfig {
    pub h_target: f64,
    pub num_classes: usize,
    pub nodes_per_class: usize,
    pub intra_edges_per_node: usize,
    pub feature_dim: usize,
    pub class_mean_scale: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

/// Fills `cfg` with the library defaults.
///
/// # Safety
/// `cfg` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gcde_synth_config_default(cfg: *mut GcdeSynthConfig) -> GcdeStatus {
    guard(|| {
        let cfg = out_arg(cfg, "cfg")?;
        let d = SynthConfig::default();
        let FeatureSource::Gaussian {
            dim,
            class_mean_scale,
            noise_sigma,
        } = d.feature_source
        else {
            unreachable!("default source is gaussian")
        };
        *cfg = GcdeSynthConfig {
            h_target: d.h_target,
            num_classes: d.num_classes,
            nodes_per_class: d.nodes_per_class,
            intra_edges_per_node: d.intra_edges_per_node,
            feature_dim: dim,
            class_mean_scale,
            noise_sigma,
            seed: d.seed,
        };
        Ok(())
    })
}

/// # Safety
/// `cfg` must be readable; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gcde_dataset_generate(cfg: *const GcdeSynthConfig, out: *mut *mut GcdeDataset) -> GcdeStatus {
    guard(|| {
        let c = *cfg.as_ref().ok_or_else(|| null("cfg"))?;
        let out = out_arg(out, "out")?;
        let ds = generate(&SynthConfig {
            h_target: c.h_target,
            num_classes: c.num_classes,
            nodes_per_class: c.nodes_per_class,
            intra_edges_per_node: c.intra_edges_per_node,
            feature_source: FeatureSource::Gaussian {
                dim: c.feature_dim,
                class_mean_scale: c.class_mean_scale,
                noise_sigma: c.noise_sigma,
            },
            seed: c.seed,
            ..SynthConfig::default()
        })?;
        *out = Box::into_raw(Box::new(GcdeDataset(ds)));
        Ok(())
    })
}

/// Writes the dataset directory format to `path`.
///
/// # Safety
/// `ds` must be a live handle; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn gcde_dataset_save(ds: *const GcdeDataset, path: *const c_char) -> GcdeStatus {
    guard(|| {
        let ds = &ds.as_ref().ok_or_else(|| null("ds"))?.0;
        ds.save(&path_arg(path, "path")?)?;
        Ok(())
    })
}

/// # Safety
/// `ds` must come from a `gcde_dataset_*` constructor and not be freed twice. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn gcde_dataset_free(ds: *mut GcdeDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// # Safety
/// `ds` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn gcde_dataset_num_nodes(ds: *const GcdeDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.0.meta.num_nodes)
}

/// # Safety
/// `ds` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn gcde_dataset_num_classes(ds: *const GcdeDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.0.meta.num_classes)
}

/// Edge homophily of the dataset graph.
///
/// # Safety
/// `ds` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn gcde_dataset_h_edge(ds: *const GcdeDataset, out: *mut f64) -> GcdeStatus {
    guard(|| {
        let ds = &ds.as_ref().ok_or_else(|| null("ds"))?.0;
        *out_arg(out, "out")? = graph_cde::homophily::edge_homophily(&ds.graph, &ds.labels)?;
        Ok(())
    })
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GcdeDiffusion {
    Lap = 0,
    Gat = 1,
    Trans = 2,
    GraphBel = 3,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GcdeActivation {
    Tanh = 0,
    Sigmoid = 1,
    Identity = 2,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GcdeConvTarget {
    Xj = 0,
    Xi = 1,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GcdeSolver {
    Euler = 0,
    Rk4 = 1,
}

/// Model and optimizer settings. Start from `gcde_train_config_default`.
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct GcdeTrainConfig {
    pub hidden_dim: usize,
    pub diffusion: GcdeDiffusion,
    pub convection: bool,
    pub conv_target: GcdeConvTarget,
    pub activation: GcdeActivation,
    pub solver: GcdeSolver,
    pub time: f64,
    pub step_size: f64,
    pub dropout: f64,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct GcdeTrainResult {
    pub train_accuracy: f64,
    pub val_accuracy: f64,
    pub test_accuracy: f64,
    pub best_epoch: usize,
    pub epochs_run: usize,
}

/// # Safety
/// `cfg` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gcde_train_config_default(cfg: *mut GcdeTrainConfig) -> GcdeStatus {
    guard(|| {
        let d = ModelConfig::default();
        *out_arg(cfg, "cfg")? = GcdeTrainConfig {
            hidden_dim: d.hidden_dim,
            diffusion: GcdeDiffusion::Gat,
            convection: d.convection,
            conv_target: GcdeConvTarget::Xj,
            activation: GcdeActivation::Tanh,
            solver: GcdeSolver::Euler,
            time: d.solver.time,
            step_size: d.solver.step_size,
            dropout: d.dropout,
            learning_rate: d.learning_rate,
            weight_decay: d.weight_decay,
            max_epochs: d.max_epochs,
            patience: d.patience,
            seed: d.seed,
        };
        Ok(())
    })
}

fn model_config(c: &GcdeTrainConfig) -> ModelConfig {
    ModelConfig {
        hidden_dim: c.hidden_dim,
        diffusion: match c.diffusion {
            GcdeDiffusion::Lap => DiffusionKind::Lap,
            GcdeDiffusion::Gat => DiffusionKind::Gat,
            GcdeDiffusion::Trans => DiffusionKind::Trans,
            GcdeDiffusion::GraphBel => DiffusionKind::GraphBel,
        },
        convection: c.convection,
        activation: match c.activation {
            GcdeActivation::Tanh => Activation::Tanh,
            GcdeActivation::Sigmoid => Activation::Sigmoid,
            GcdeActivation::Identity => Activation::Identity,
        },
        conv_target: match c.conv_target {
            GcdeConvTarget::Xj => ConvTarget::NeighborXj,
            GcdeConvTarget::Xi => ConvTarget::SelfXi,
        },
        solver: SolverConfig::new(
            match c.solver {
                GcdeSolver::Euler => Method::Euler,
                GcdeSolver::Rk4 => Method::Rk4,
            },
            c.time,
            c.step_size,
        ),
        dropout: c.dropout,
        learning_rate: c.learning_rate,
        weight_decay: c.weight_decay,
        max_epochs: c.max_epochs,
        patience: c.patience,
        seed: c.seed,
        ..ModelConfig::default()
    }
}

/// Trains on the dataset's stored split, or a seeded 60/20/20 random split
/// when it has none, and reports accuracies of the best-validation model.
///
/// # Safety
/// `ds` must be a live handle, `cfg` readable and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn gcde_train(
    ds: *const GcdeDataset,
    cfg: *const GcdeTrainConfig,
    out: *mut GcdeTrainResult,
) -> GcdeStatus {
    guard(|| {
        let ds = &ds.as_ref().ok_or_else(|| null("ds"))?.0;
        let cfg = model_config(cfg.as_ref().ok_or_else(|| null("cfg"))?);
        let out = out_arg(out, "out")?;
        let split = match &ds.split {
            Some(s) => s.clone(),
            None => SplitMask::random(ds.meta.num_nodes, 0.6, 0.2, cfg.seed)?,
        };
        let r = train(&ds.graph, &ds.features, &ds.labels, &split, &cfg)?.report;
        *out = GcdeTrainResult {
            train_accuracy: r.train_metric,
            val_accuracy: r.val_metric,
            test_accuracy: r.test_metric,
            best_epoch: r.best_epoch,
            epochs_run: r.epochs_run(),
        };
        Ok(())
    })
}
