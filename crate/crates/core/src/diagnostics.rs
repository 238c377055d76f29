//! Whole-model gradient checks on a small fixture graph.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{grad_check, GradCheckReport, ParamSet, Tape, Tensor};
use crate::dynamics::{ConvTarget, DiffusionKind};
use crate::error::Result;
use crate::graph::{Graph, LabelSet};
use crate::model::{CdeModel, ModelConfig};

/// Random graph with self-loops, features, labels and a loss mask.
#[derive(Clone, Debug)]
pub struct Fixture {
    pub graph: Graph,
    pub features: Tensor,
    pub labels: LabelSet,
    pub mask: Vec<usize>,
}

/// `nodes` nodes on a ring plus random chords, `in_dim` features, 3 classes;
/// the loss uses every other node.
pub fn fixture(nodes: usize, in_dim: usize, seed: u64) -> Result<Fixture> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges: Vec<(usize, usize)> = (0..nodes).map(|i| (i, (i + 1) % nodes)).collect();
    for _ in 0..nodes {
        edges.push((rng.random_range(0..nodes), rng.random_range(0..nodes)));
    }
    let graph = Graph::build(&edges, nodes, true, true)?;
    let features = Tensor::new(
        nodes,
        in_dim,
        (0..nodes * in_dim).map(|_| rng.random_range(-1.0..1.0)).collect(),
    )?;
    let labels = LabelSet::new((0..nodes).map(|i| i % 3).collect(), 3)?;
    let mask = (0..nodes).step_by(2).collect();
    Ok(Fixture {
        graph,
        features,
        labels,
        mask,
    })
}

/// Every diffusion variant with convection off, on with `xj`, on with `xi`.
pub fn gradcheck_configs(base: &ModelConfig) -> Vec<ModelConfig> {
    let mut out = Vec::new();
    for diffusion in DiffusionKind::ALL {
        for convection in [false, true] {
            for conv_target in [ConvTarget::NeighborXj, ConvTarget::SelfXi] {
                out.push(ModelConfig {
                    diffusion,
                    convection,
                    conv_target,
                    ..base.clone()
                });
            }
        }
    }
    out
}

/// Parameters drawn uniformly from `[-scale, scale]`, so that no block
/// (biases, zero-initialized weights) sits at a special point.
pub fn randomized(params: &ParamSet, scale: f64, seed: u64) -> ParamSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = params.clone();
    for (_, t) in out.iter_mut() {
        t.data_mut()
            .iter_mut()
            .for_each(|v| *v = rng.random_range(-scale..scale));
    }
    out
}

/// Mean masked cross-entropy of the full model and its parameter gradients.
/// Dropout runs in training mode with a fixed seed, so the loss is a
/// deterministic function of the parameters.
pub fn model_loss_and_grads(model: &CdeModel, fx: &Fixture, params: &ParamSet) -> Result<(f64, ParamSet)> {
    let mut tape = Tape::with_precision(model.config().precision());
    let raw = tape.constant(fx.features.clone());
    let logits = model.forward_with(&mut tape, params, &fx.graph, raw, true, 17)?;
    let targets: Arc<[usize]> = fx.labels.labels().into();
    let mask: Arc<[usize]> = fx.mask.as_slice().into();
    let loss = tape.cross_entropy_with_logits(logits, &targets, &mask)?;
    tape.backward(loss)?;
    Ok((tape.value(loss).data()[0], tape.param_grads()))
}

pub fn model_grad_check(cfg: &ModelConfig, fx: &Fixture, eps: f64) -> Result<GradCheckReport> {
    let model = CdeModel::new(cfg.clone(), fx.features.cols(), fx.labels.num_classes())?;
    let params = randomized(model.params(), 0.5, cfg.seed ^ 0x5eed);
    grad_check(|p| model_loss_and_grads(&model, fx, p), &params, eps)
}
