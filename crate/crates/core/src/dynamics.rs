//! Right-hand sides of the graph PDEs.
//!
//! Node features are the rows of `X` (`N x r`). Per-edge quantities are
//! `E x 1` or `E x r` tensors aligned with the CSR edge order of the graph,
//! so edge `e` goes from node `sources()[e]` (the aggregating node `i`) to
//! `targets()[e]` (its neighbor `j`).
//!
//! Learnable matrices act on row vectors, i.e. `x W` rather than `W x`.

use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::graph::Graph;

pub const DEFAULT_LEAKY_SLOPE: f64 = 0.2;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Tanh,
    Sigmoid,
    #[serde(rename = "id", alias = "identity")]
    Identity,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl Activation {
    pub fn apply(self, tape: &mut Tape, x: Var) -> Var {
        match self {
            Activation::Tanh => tape.tanh(x),
            Activation::Sigmoid => tape.sigmoid(x),
            Activation::Identity => x,
        }
    }

    /// Scalar value.
    pub fn eval(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Sigmoid => sigmoid(z),
            Activation::Identity => z,
        }
    }

    /// Scalar value and derivative.
    pub fn eval_with_derivative(self, z: f64) -> (f64, f64) {
        match self {
            Activation::Tanh => {
                let y = z.tanh();
                (y, 1.0 - y * y)
            }
            Activation::Sigmoid => {
                let y = sigmoid(z);
                (y, y * (1.0 - y))
            }
            Activation::Identity => (z, 1.0),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
            Activation::Sigmoid => "sigmoid",
            Activation::Identity => "id",
        }
    }
}

/// Which node state the velocity multiplies in the convection term.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConvTarget {
    /// `sum_j V_ij * x_j`
    #[default]
    #[serde(rename = "xj")]
    NeighborXj,
    /// `sum_j V_ij * x_i`
    #[serde(rename = "xi")]
    SelfXi,
}

impl ConvTarget {
    pub fn name(self) -> &'static str {
        match self {
            ConvTarget::NeighborXj => "xj",
            ConvTarget::SelfXi => "xi",
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DiffusionKind {
    Lap,
    #[default]
    Gat,
    Trans,
    GraphBel,
}

impl DiffusionKind {
    pub const ALL: [DiffusionKind; 4] = [
        DiffusionKind::Lap,
        DiffusionKind::Gat,
        DiffusionKind::Trans,
        DiffusionKind::GraphBel,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DiffusionKind::Lap => "lap",
            DiffusionKind::Gat => "gat",
            DiffusionKind::Trans => "trans",
            DiffusionKind::GraphBel => "graphbel",
        }
    }
}

/// GAT-style attention: `W` is `r x r`, `a` is `2r x 1`.
#[derive(Clone, Copy, Debug)]
pub struct GatAttention {
    pub w: Var,
    pub a: Var,
    pub leaky_slope: f64,
}

/// Dot-product attention with `W_K`, `W_Q` of shape `r x d_k`.
#[derive(Clone, Copy, Debug)]
pub struct TransAttention {
    pub w_k: Var,
    pub w_q: Var,
    pub d_k: usize,
    /// Divide logits by `sqrt(d_k)` instead of `d_k`.
    pub sqrt_scaling: bool,
}

/// How the GraphBel map `B_S` is derived from the attention.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BelNormalization {
    /// `b_ij = a_ij / sqrt(sum_k a_ik^2)`
    #[default]
    L2Row,
    /// `b_ij = 1`
    Ones,
}

#[derive(Clone, Copy, Debug)]
pub struct GraphBelParams {
    pub attention: GatAttention,
    pub normalization: BelNormalization,
}

/// How per-edge convection fluxes are combined at a node.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConvAggregation {
    /// `sum_j`, the plain form.
    #[default]
    Sum,
    /// `1/|N_i| sum_j`; keeps the flux bounded on high-degree nodes.
    Mean,
}

/// Velocity `V_ij = act((x_j - x_i) W)` with `W` of shape `r x r`.
#[derive(Clone, Copy, Debug)]
pub struct Convection {
    pub w: Var,
    pub activation: Activation,
    pub target: ConvTarget,
    pub aggregation: ConvAggregation,
}

#[derive(Clone, Copy, Debug)]
pub enum Diffusion {
    /// Constant row-normalized adjacency, computed once.
    Lap { attention: Var },
    Gat(GatAttention),
    Trans(TransAttention),
    GraphBel(GraphBelParams),
}

impl Diffusion {
    pub fn kind(&self) -> DiffusionKind {
        match self {
            Diffusion::Lap { .. } => DiffusionKind::Lap,
            Diffusion::Gat(_) => DiffusionKind::Gat,
            Diffusion::Trans(_) => DiffusionKind::Trans,
            Diffusion::GraphBel(_) => DiffusionKind::GraphBel,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct DynamicsSpec {
    pub diffusion: Diffusion,
    pub convection: Option<Convection>,
}

fn require_neighbors(g: &Graph, op: &str) -> Result<()> {
    if let Some(node) = g.has_empty_neighborhood() {
        return Err(Error::Contract(format!(
            "{op}: node {node} has an empty neighborhood; add self-loops"
        )));
    }
    Ok(())
}

fn check_features(tape: &Tape, x: Var, g: &Graph, op: &'static str) -> Result<()> {
    let rows = tape.value(x).rows();
    if rows != g.num_nodes() {
        return Err(Error::dim(op, format!("{rows} feature rows for {} nodes", g.num_nodes())));
    }
    Ok(())
}

/// Per-edge GAT weights `softmax_j LeakyReLU(a^T [x_i W || x_j W])`.
pub fn gat_attention(tape: &mut Tape, x: Var, g: &Graph, p: &GatAttention) -> Result<Var> {
    require_neighbors(g, "gat_attention")?;
    check_features(tape, x, g, "gat_attention")?;
    let h = tape.matmul(x, p.w)?;
    let r = tape.value(h).cols();
    if tape.value(p.a).shape() != (2 * r, 1) {
        return Err(Error::dim(
            "gat_attention",
            format!("attention vector {:?}, expected ({}, 1)", tape.value(p.a).shape(), 2 * r),
        ));
    }
    let a_src = tape.slice_rows(p.a, 0, r)?;
    let a_dst = tape.slice_rows(p.a, r, 2 * r)?;
    let s_src = tape.matmul(h, a_src)?;
    let s_dst = tape.matmul(h, a_dst)?;
    let e_src = tape.row_gather(s_src, g.sources())?;
    let e_dst = tape.row_gather(s_dst, g.targets())?;
    let logits = tape.add(e_src, e_dst)?;
    let logits = tape.leaky_relu(logits, p.leaky_slope);
    tape.segment_softmax(logits, g.offsets())
}

/// Per-edge weights `softmax_j (x_i W_K) . (x_j W_Q) / d_k`.
pub fn trans_attention(tape: &mut Tape, x: Var, g: &Graph, p: &TransAttention) -> Result<Var> {
    require_neighbors(g, "trans_attention")?;
    check_features(tape, x, g, "trans_attention")?;
    if p.d_k == 0 {
        return Err(Error::Config("d_k must be at least 1".into()));
    }
    let k = tape.matmul(x, p.w_k)?;
    let q = tape.matmul(x, p.w_q)?;
    let dots = tape.edge_dot(k, q, g.sources(), g.targets())?;
    let scale = if p.sqrt_scaling {
        1.0 / (p.d_k as f64).sqrt()
    } else {
        1.0 / p.d_k as f64
    };
    let logits = tape.scale(dots, scale);
    tape.segment_softmax(logits, g.offsets())
}

/// Row-normalized adjacency weights `1 / |N_i|`.
pub fn lap_weights(g: &Graph) -> Result<Tensor> {
    require_neighbors(g, "lap_attention")?;
    let off = g.offsets();
    let mut w = Vec::with_capacity(g.num_stored_edges());
    for i in 0..g.num_nodes() {
        let deg = off[i + 1] - off[i];
        w.extend(std::iter::repeat_n(1.0 / deg as f64, deg));
    }
    Ok(Tensor::column(w))
}

pub fn lap_attention(tape: &mut Tape, g: &Graph) -> Result<Var> {
    Ok(tape.constant(lap_weights(g)?))
}

/// `sum_j a_ij x_j` for per-edge weights `a` (`E x 1`).
fn weighted_aggregate(tape: &mut Tape, x: Var, g: &Graph, weights: Var) -> Result<Var> {
    tape.edge_aggregate(weights, x, g.offsets(), g.targets())
}

/// `(A - I) X`: `dx_i = sum_j a_ij x_j - x_i`.
pub fn grand_rhs(tape: &mut Tape, x: Var, g: &Graph, attention: Var) -> Result<Var> {
    check_features(tape, x, g, "grand_rhs")?;
    if tape.value(attention).shape() != (g.num_stored_edges(), 1) {
        return Err(Error::dim(
            "grand_rhs",
            format!("attention {:?} for {} edges", tape.value(attention).shape(), g.num_stored_edges()),
        ));
    }
    let agg = weighted_aggregate(tape, x, g, attention)?;
    tape.sub(agg, x)
}

/// Convection term `sum_j act((x_j - x_i) W) * x_j` (or `* x_i`).
pub fn convection_rhs(tape: &mut Tape, x: Var, g: &Graph, p: &Convection) -> Result<Var> {
    check_features(tape, x, g, "convection_rhs")?;
    // (x_j - x_i) W == x_j W - x_i W; projecting first keeps the matmul N-sized.
    let proj = tape.matmul(x, p.w)?;
    let flux = tape.edge_convection(proj, x, g.offsets(), g.targets(), p.activation, p.target)?;
    match p.aggregation {
        ConvAggregation::Sum => Ok(flux),
        ConvAggregation::Mean => {
            require_neighbors(g, "convection_rhs")?;
            let off = g.offsets();
            let inv = (0..g.num_nodes()).map(|i| 1.0 / (off[i + 1] - off[i]) as f64).collect();
            let inv = tape.constant(Tensor::column(inv));
            tape.mul_col(flux, inv)
        }
    }
}

/// `(A_S * B_S - Psi) X` with `Psi_ii = sum_j (A_S * B_S)_ij`.
pub fn graphbel_rhs(tape: &mut Tape, x: Var, g: &Graph, p: &GraphBelParams) -> Result<Var> {
    let a = gat_attention(tape, x, g, &p.attention)?;
    let coeff = match p.normalization {
        BelNormalization::Ones => a,
        BelNormalization::L2Row => {
            let sq = tape.mul(a, a)?;
            let row_sq = tape.segment_sum(sq, g.offsets(), g.num_nodes())?;
            let per_edge = tape.row_gather(row_sq, g.sources())?;
            let norm = tape.sqrt(per_edge);
            let b = tape.div(a, norm)?;
            tape.mul(a, b)?
        }
    };
    let psi = tape.segment_sum(coeff, g.offsets(), g.num_nodes())?;
    let agg = weighted_aggregate(tape, x, g, coeff)?;
    let self_term = tape.mul_col(x, psi)?;
    tape.sub(agg, self_term)
}

pub fn diffusion_rhs(tape: &mut Tape, x: Var, g: &Graph, d: &Diffusion) -> Result<Var> {
    match d {
        Diffusion::Lap { attention } => grand_rhs(tape, x, g, *attention),
        Diffusion::Gat(p) => {
            let a = gat_attention(tape, x, g, p)?;
            grand_rhs(tape, x, g, a)
        }
        Diffusion::Trans(p) => {
            let a = trans_attention(tape, x, g, p)?;
            grand_rhs(tape, x, g, a)
        }
        Diffusion::GraphBel(p) => graphbel_rhs(tape, x, g, p),
    }
}

/// Full right-hand side: diffusion plus, when enabled, convection.
///
/// The dynamics are autonomous; `t` is accepted so solvers can treat every
/// right-hand side uniformly.
pub fn cde_rhs(tape: &mut Tape, _t: f64, x: Var, g: &Graph, spec: &DynamicsSpec) -> Result<Var> {
    let diffusion = diffusion_rhs(tape, x, g, &spec.diffusion)?;
    match &spec.convection {
        Some(conv) => {
            let c = convection_rhs(tape, x, g, conv)?;
            tape.add(diffusion, c)
        }
        None => Ok(diffusion),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(rows: usize, cols: usize, data: &[f64]) -> Tensor {
        Tensor::new(rows, cols, data.to_vec()).unwrap()
    }

    #[test]
    fn gat_uniform_on_identical_features() {
        let g = Graph::build(&[(0, 1), (1, 2), (0, 2), (2, 3)], 4, true, true).unwrap();
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::filled(4, 2, 0.3));
        let p = GatAttention {
            w: tape.constant(t(2, 2, &[0.5, -1.0, 2.0, 0.1])),
            a: tape.constant(t(4, 1, &[1.0, -0.4, 0.3, 2.0])),
            leaky_slope: DEFAULT_LEAKY_SLOPE,
        };
        let a = gat_attention(&mut tape, x, &g, &p).unwrap();
        for (e, (i, _)) in g.edges().enumerate() {
            let expected = 1.0 / g.neighbors(i).len() as f64;
            assert!((tape.value(a).data()[e] - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn single_self_loop_has_unit_weight() {
        let g = Graph::build(&[], 1, true, true).unwrap();
        let mut tape = Tape::new();
        let x = tape.constant(t(1, 2, &[0.4, -0.9]));
        let gat = GatAttention {
            w: tape.constant(Tensor::identity(2)),
            a: tape.constant(t(4, 1, &[1.0, 2.0, 3.0, 4.0])),
            leaky_slope: 0.2,
        };
        let trans = TransAttention {
            w_k: tape.constant(Tensor::identity(2)),
            w_q: tape.constant(Tensor::identity(2)),
            d_k: 2,
            sqrt_scaling: false,
        };
        let a1 = gat_attention(&mut tape, x, &g, &gat).unwrap();
        let a2 = trans_attention(&mut tape, x, &g, &trans).unwrap();
        assert_eq!(tape.value(a1).data(), &[1.0]);
        assert_eq!(tape.value(a2).data(), &[1.0]);
    }

    #[test]
    fn trans_zero_weights_are_uniform() {
        let g = Graph::build(&[(0, 1), (1, 2)], 3, true, true).unwrap();
        let mut tape = Tape::new();
        let x = tape.constant(t(3, 2, &[1.0, 2.0, -3.0, 0.5, 0.0, 1.0]));
        let p = TransAttention {
            w_k: tape.constant(Tensor::zeros(2, 3)),
            w_q: tape.constant(Tensor::zeros(2, 3)),
            d_k: 3,
            sqrt_scaling: false,
        };
        let a = trans_attention(&mut tape, x, &g, &p).unwrap();
        assert_eq!(tape.value(a).data(), &[0.5, 0.5, 1. / 3., 1. / 3., 1. / 3., 0.5, 0.5]);
    }

    #[test]
    fn attention_needs_self_loops() {
        let g = Graph::build(&[(0, 1)], 3, true, false).unwrap();
        let mut tape = Tape::new();
        assert!(matches!(lap_attention(&mut tape, &g), Err(Error::Contract(_))));
    }

    #[test]
    fn lap_weights_examples() {
        let g = Graph::build(&[(0, 1)], 2, true, true).unwrap();
        assert_eq!(lap_weights(&g).unwrap().data(), &[0.5; 4]);
        let c4 = Graph::build(&[(0, 1), (1, 2), (2, 3), (3, 0)], 4, true, true).unwrap();
        assert!(lap_weights(&c4).unwrap().data().iter().all(|&w| w == 1.0 / 3.0));
    }

    #[test]
    fn grand_two_nodes_by_hand() {
        // a_12 = a_21 = 1 and no self-loops: dX = (A - I) X
        let g = Graph::build(&[(0, 1)], 2, true, false).unwrap();
        let mut tape = Tape::new();
        let x = tape.constant(t(2, 2, &[1.0, 0.0, 0.0, 1.0]));
        let a = tape.constant(t(2, 1, &[1.0, 1.0]));
        let dx = grand_rhs(&mut tape, x, &g, a).unwrap();
        assert_eq!(tape.value(dx).data(), &[-1.0, 1.0, 1.0, -1.0]);
    }

    #[test]
    fn grand_isolated_self_loop_is_stationary() {
        let g = Graph::build(&[], 1, true, true).unwrap();
        let mut tape = Tape::new();
        let x = tape.constant(t(1, 3, &[0.2, -4.0, 7.0]));
        let a = lap_attention(&mut tape, &g).unwrap();
        let dx = grand_rhs(&mut tape, x, &g, a).unwrap();
        assert_eq!(tape.value(dx).data(), &[0.0; 3]);
    }

    #[test]
    fn convection_two_nodes_by_hand() {
        let g = Graph::build(&[(0, 1)], 2, true, false).unwrap();
        let mut tape = Tape::new();
        let x = tape.constant(t(2, 2, &[1.0, 0.0, 0.0, 2.0]));
        let p = Convection {
            w: tape.constant(Tensor::identity(2)),
            activation: Activation::Identity,
            target: ConvTarget::NeighborXj,
            aggregation: ConvAggregation::Sum,
        };
        let dx = convection_rhs(&mut tape, x, &g, &p).unwrap();
        assert_eq!(tape.value(dx).data(), &[0.0, 4.0, 1.0, 0.0]);
    }

    #[test]
    fn convection_vanishes_for_zero_weight_or_identical_nodes() {
        let g = Graph::build(&[(0, 1), (1, 2)], 3, true, true).unwrap();
        let mut tape = Tape::new();
        let x = tape.constant(t(3, 2, &[1.0, 2.0, -3.0, 0.5, 0.0, 1.0]));
        let zero = Convection {
            w: tape.constant(Tensor::zeros(2, 2)),
            activation: Activation::Tanh,
            target: ConvTarget::NeighborXj,
            aggregation: ConvAggregation::Sum,
        };
        let dx = convection_rhs(&mut tape, x, &g, &zero).unwrap();
        assert!(tape.value(dx).data().iter().all(|&v| v == 0.0));

        let same = tape.constant(Tensor::filled(3, 2, 0.7));
        let p = Convection {
            w: tape.constant(t(2, 2, &[1.0, 2.0, 3.0, 4.0])),
            activation: Activation::Tanh,
            target: ConvTarget::SelfXi,
            aggregation: ConvAggregation::Sum,
        };
        let dx = convection_rhs(&mut tape, same, &g, &p).unwrap();
        assert!(tape.value(dx).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn graphbel_with_ones_matches_grand() {
        let g = Graph::build(&[(0, 1), (1, 2), (2, 0), (2, 3)], 4, true, true).unwrap();
        let mut tape = Tape::new();
        let x = tape.constant(t(4, 2, &[0.1, 0.2, -1.0, 0.5, 0.3, 0.3, 2.0, -0.4]));
        let att = GatAttention {
            w: tape.constant(t(2, 2, &[0.5, -1.0, 2.0, 0.1])),
            a: tape.constant(t(4, 1, &[1.0, -0.4, 0.3, 2.0])),
            leaky_slope: 0.2,
        };
        let bel = graphbel_rhs(
            &mut tape,
            x,
            &g,
            &GraphBelParams {
                attention: att,
                normalization: BelNormalization::Ones,
            },
        )
        .unwrap();
        let grand = diffusion_rhs(&mut tape, x, &g, &Diffusion::Gat(att)).unwrap();
        for (a, b) in tape.value(bel).data().iter().zip(tape.value(grand).data()) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn feature_row_mismatch_is_a_dimension_error() {
        let g = Graph::build(&[(0, 1)], 2, true, true).unwrap();
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::zeros(3, 2));
        let a = lap_attention(&mut tape, &g).unwrap();
        assert!(matches!(grand_rhs(&mut tape, x, &g, a), Err(Error::Dimension { .. })));
    }
}
