//! Encoder, integrated convection-diffusion block and decoder.
//!
//! `logits = decode(integrate(cde_rhs, encode(raw), solver))`

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{ParamSet, Precision, Tape, Tensor, Var};
use crate::dynamics::{
    self, Activation, BelNormalization, ConvAggregation, ConvTarget, Convection, Diffusion, DiffusionKind,
    DynamicsSpec, GatAttention, GraphBelParams, TransAttention, DEFAULT_LEAKY_SLOPE,
};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::metrics::Metric;
use crate::solver::{self, SolverConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub hidden_dim: usize,
    pub diffusion: DiffusionKind,
    pub convection: bool,
    /// Velocity activation; the encoder uses the same nonlinearity.
    pub activation: Activation,
    pub conv_target: ConvTarget,
    pub solver: SolverConfig,
    pub dropout: f64,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub metric: Metric,
    pub leaky_slope: f64,
    /// Attention key dimension for the transformer variant; defaults to `hidden_dim`.
    pub d_k: Option<usize>,
    pub trans_sqrt_scaling: bool,
    pub bel_normalization: BelNormalization,
    /// Round every forward value to `f32`.
    pub single_precision: bool,
    pub conv_init: ConvInit,
    pub conv_aggregation: ConvAggregation,
}

/// Initial value of the convection weight.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConvInit {
    #[default]
    Glorot,
    /// Start from the pure diffusion model (zero velocity everywhere).
    Zeros,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            hidden_dim: 64,
            diffusion: DiffusionKind::Gat,
            convection: true,
            activation: Activation::Tanh,
            conv_target: ConvTarget::NeighborXj,
            solver: SolverConfig::default(),
            dropout: 0.2,
            learning_rate: 0.01,
            weight_decay: 0.001,
            max_epochs: 200,
            patience: 100,
            seed: 0,
            metric: Metric::Accuracy,
            leaky_slope: DEFAULT_LEAKY_SLOPE,
            d_k: None,
            trans_sqrt_scaling: false,
            bel_normalization: BelNormalization::L2Row,
            single_precision: false,
            conv_init: ConvInit::Glorot,
            conv_aggregation: ConvAggregation::Sum,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_dim == 0 {
            return Err(Error::Config("hidden_dim must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config(format!("learning rate must be positive, got {}", self.learning_rate)));
        }
        if self.weight_decay < 0.0 {
            return Err(Error::Config("weight decay must be non-negative".into()));
        }
        if self.d_k == Some(0) {
            return Err(Error::Config("d_k must be at least 1".into()));
        }
        self.solver.steps()?;
        Ok(())
    }

    pub fn precision(&self) -> Precision {
        if self.single_precision {
            Precision::F32
        } else {
            Precision::F64
        }
    }

    pub fn d_k(&self) -> usize {
        self.d_k.unwrap_or(self.hidden_dim)
    }

    /// Short variant label such as `cde-grand-gat` or `graphbel`.
    pub fn variant_name(&self) -> String {
        let base = match self.diffusion {
            DiffusionKind::GraphBel => "graphbel".to_string(),
            k => format!("grand-{}", k.name()),
        };
        if self.convection {
            format!("cde-{base}")
        } else {
            base
        }
    }
}

/// Encoder weights: `X(0) = act(raw W1 + b1) W2 + b2`.
#[derive(Clone, Copy, Debug)]
pub struct EncoderParams {
    pub w1: Var,
    pub b1: Var,
    pub w2: Var,
    pub b2: Var,
}

/// Decoder weights: `logits = X(T) W + b`.
#[derive(Clone, Copy, Debug)]
pub struct DecoderParams {
    pub w: Var,
    pub b: Var,
}

/// Dropout applied to the encoder input.
pub fn encode(
    tape: &mut Tape,
    raw: Var,
    p: &EncoderParams,
    activation: Activation,
    dropout: f64,
    seed: u64,
    training: bool,
) -> Result<Var> {
    let x = tape.dropout(raw, dropout, seed, training)?;
    let h = tape.matmul(x, p.w1)?;
    let h = tape.add_row(h, p.b1)?;
    let h = activation.apply(tape, h);
    let out = tape.matmul(h, p.w2)?;
    tape.add_row(out, p.b2)
}

/// Dropout applied to the decoder input.
pub fn decode(
    tape: &mut Tape,
    x: Var,
    p: &DecoderParams,
    dropout: f64,
    seed: u64,
    training: bool,
) -> Result<Var> {
    let x = tape.dropout(x, dropout, seed, training)?;
    let logits = tape.matmul(x, p.w)?;
    tape.add_row(logits, p.b)
}

pub mod names {
    pub const ENC_W1: &str = "enc.w1";
    pub const ENC_B1: &str = "enc.b1";
    pub const ENC_W2: &str = "enc.w2";
    pub const ENC_B2: &str = "enc.b2";
    pub const DEC_W: &str = "dec.w";
    pub const DEC_B: &str = "dec.b";
    pub const ATT_W: &str = "diff.w";
    pub const ATT_A: &str = "diff.a";
    pub const TRANS_WK: &str = "diff.wk";
    pub const TRANS_WQ: &str = "diff.wq";
    pub const CONV_W: &str = "conv.w";
}

#[derive(Clone, Debug, PartialEq)]
pub struct CdeModel {
    cfg: ModelConfig,
    in_dim: usize,
    num_classes: usize,
    params: ParamSet,
}

fn stream_seed(seed: u64, name: &str) -> u64 {
    // FNV-1a over the name, folded into the seed
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h ^ seed.wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

fn glorot(rows: usize, cols: usize, seed: u64, name: &str) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, name));
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    let data = (0..rows * cols)
        .map(|_| rng.random_range(-bound..bound))
        .collect();
    Tensor::new(rows, cols, data).expect("shape")
}

impl CdeModel {
    /// Glorot-uniform weights and zero biases. Every tensor draws from its
    /// own seeded stream, so toggling a block leaves the others unchanged.
    pub fn new(cfg: ModelConfig, in_dim: usize, num_classes: usize) -> Result<Self> {
        cfg.validate()?;
        if in_dim == 0 || num_classes < 2 {
            return Err(Error::Config(format!(
                "need in_dim >= 1 and >= 2 classes, got {in_dim} and {num_classes}"
            )));
        }
        let h = cfg.hidden_dim;
        let s = cfg.seed;
        let mut p = ParamSet::new();
        p.insert(names::ENC_W1, glorot(in_dim, h, s, names::ENC_W1));
        p.insert(names::ENC_B1, Tensor::zeros(1, h));
        p.insert(names::ENC_W2, glorot(h, h, s, names::ENC_W2));
        p.insert(names::ENC_B2, Tensor::zeros(1, h));
        p.insert(names::DEC_W, glorot(h, num_classes, s, names::DEC_W));
        p.insert(names::DEC_B, Tensor::zeros(1, num_classes));
        match cfg.diffusion {
            DiffusionKind::Lap => {}
            DiffusionKind::Gat | DiffusionKind::GraphBel => {
                p.insert(names::ATT_W, glorot(h, h, s, names::ATT_W));
                p.insert(names::ATT_A, glorot(2 * h, 1, s, names::ATT_A));
            }
            DiffusionKind::Trans => {
                p.insert(names::TRANS_WK, glorot(h, cfg.d_k(), s, names::TRANS_WK));
                p.insert(names::TRANS_WQ, glorot(h, cfg.d_k(), s, names::TRANS_WQ));
            }
        }
        if cfg.convection {
            let w = match cfg.conv_init {
                ConvInit::Glorot => glorot(h, h, s, names::CONV_W),
                ConvInit::Zeros => Tensor::zeros(h, h),
            };
            p.insert(names::CONV_W, w);
        }
        Ok(Self {
            cfg,
            in_dim,
            num_classes,
            params: p,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    /// Replaces the parameters; names and shapes must match the current set.
    pub fn set_params(&mut self, params: ParamSet) -> Result<()> {
        let same = params.len() == self.params.len()
            && self
                .params
                .iter()
                .all(|(n, t)| params.get(n).is_some_and(|o| o.shape() == t.shape()));
        if !same {
            return Err(Error::Contract("parameter set does not match the model layout".into()));
        }
        self.params = params;
        Ok(())
    }

    /// Registers the parameters on `tape` and runs encode, integrate and
    /// decode. `g` must already carry self-loops when attention is used.
    pub fn forward_with(
        &self,
        tape: &mut Tape,
        params: &ParamSet,
        g: &Graph,
        raw: Var,
        training: bool,
        dropout_seed: u64,
    ) -> Result<Var> {
        let raw_cols = tape.value(raw).cols();
        if raw_cols != self.in_dim {
            return Err(Error::dim(
                "encode",
                format!("raw features have {raw_cols} columns, model expects {}", self.in_dim),
            ));
        }
        let bound = tape.bind_params(params);
        let var = |name: &str| -> Result<Var> {
            bound
                .iter()
                .find(|(n, _)| n == name)
                .map(|(_, v)| *v)
                .ok_or_else(|| Error::Contract(format!("missing parameter `{name}`")))
        };
        let cfg = &self.cfg;

        let enc = EncoderParams {
            w1: var(names::ENC_W1)?,
            b1: var(names::ENC_B1)?,
            w2: var(names::ENC_W2)?,
            b2: var(names::ENC_B2)?,
        };
        let dec = DecoderParams {
            w: var(names::DEC_W)?,
            b: var(names::DEC_B)?,
        };
        let gat = || -> Result<GatAttention> {
            Ok(GatAttention {
                w: var(names::ATT_W)?,
                a: var(names::ATT_A)?,
                leaky_slope: cfg.leaky_slope,
            })
        };
        let diffusion = match cfg.diffusion {
            DiffusionKind::Lap => Diffusion::Lap {
                attention: dynamics::lap_attention(tape, g)?,
            },
            DiffusionKind::Gat => Diffusion::Gat(gat()?),
            DiffusionKind::Trans => Diffusion::Trans(TransAttention {
                w_k: var(names::TRANS_WK)?,
                w_q: var(names::TRANS_WQ)?,
                d_k: cfg.d_k(),
                sqrt_scaling: cfg.trans_sqrt_scaling,
            }),
            DiffusionKind::GraphBel => Diffusion::GraphBel(GraphBelParams {
                attention: gat()?,
                normalization: cfg.bel_normalization,
            }),
        };
        let convection = if cfg.convection {
            Some(Convection {
                w: var(names::CONV_W)?,
                activation: cfg.activation,
                target: cfg.conv_target,
                aggregation: cfg.conv_aggregation,
            })
        } else {
            None
        };
        let spec = DynamicsSpec {
            diffusion,
            convection,
        };

        let x0 = encode(tape, raw, &enc, cfg.activation, cfg.dropout, dropout_seed, training)?;
        let mut rhs = |tape: &mut Tape, t: f64, x: Var| dynamics::cde_rhs(tape, t, x, g, &spec);
        let xt = solver::integrate(tape, &mut rhs, x0, &cfg.solver, true)?;
        decode(tape, xt, &dec, cfg.dropout, dropout_seed ^ 0x5bd1_e995, training)
    }

    pub fn forward(&self, tape: &mut Tape, g: &Graph, raw: Var, training: bool, dropout_seed: u64) -> Result<Var> {
        self.forward_with(tape, &self.params, g, raw, training, dropout_seed)
    }

    /// Inference logits without gradient tracking.
    pub fn predict(&self, g: &Graph, features: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::with_precision(self.cfg.precision());
        tape.set_grad_enabled(false);
        let raw = tape.constant(features.clone());
        let logits = self.forward(&mut tape, g, raw, false, 0)?;
        Ok(tape.value(logits).clone())
    }
}
