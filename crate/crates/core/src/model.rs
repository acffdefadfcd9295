//! The detector network: GCN encoder, masked GCN autoencoder, average
//! readout, bilinear discriminator, contrastive head and the scheduled loss.
//!
//! Training and inference run on whole batches of discrimination pairs: the
//! subgraphs of a batch are stacked into one tall attribute matrix and
//! propagated with a block-diagonal normalized adjacency, so every layer is
//! one dense product plus one sparse product. The per-instance methods on
//! [`Dslad`] and the plain-number loss functions below express the same
//! equations one node at a time.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::{AttributedGraph, NodeId, SubgraphView};
use crate::rng::{self, tag};
use crate::sampler::{stack_attributes, NegativeMode, PairBatch};
use crate::scalar::Scalar;
use crate::tensor::{self, CsrMatrix, Gradients, Parameter, Tape, Tensor};

macro_rules! keyword_enum {
    ($name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        impl FromStr for $name {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($text => Ok($name::$variant),)+
                    other => Err(Error::Config(format!(
                        concat!("unknown ", stringify!($name), " {:?}; expected one of: ", $($text, " "),+),
                        other
                    ))),
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(match self {
                    $($name::$variant => $text,)+
                })
            }
        }
    };
}

/// Positive sample used by the contrastive objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Augmentation {
    /// Readout of the target's own masked subgraph.
    #[default]
    Local,
    /// The target's row of the encoder applied to the whole unmasked graph.
    Global,
}

keyword_enum!(Augmentation { Local => "local_aug", Global => "global_aug" });

/// Mapping from training progress to the discrimination weight.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PiKind {
    Constant,
    #[default]
    Linear,
    OneMinusExp,
    Sigmoid,
    Tanh,
}

keyword_enum!(PiKind {
    Constant => "constant",
    Linear => "linear",
    OneMinusExp => "one_minus_exp",
    Sigmoid => "sigmoid",
    Tanh => "tanh",
});

/// Which parts of the objective and score are active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AblationVariant {
    #[default]
    Full,
    /// Contrastive learning removed; the schedule is pinned to 1.
    NoCl,
    /// Context term removed; alpha forced to 0.
    NoCon,
    /// Reconstruction term removed; alpha forced to 1.
    NoRec,
}

keyword_enum!(AblationVariant {
    Full => "full",
    NoCl => "no_cl",
    NoCon => "no_con",
    NoRec => "no_rec",
});

impl FromStr for NegativeMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "shift" => Ok(NegativeMode::Shift),
            "fresh" => Ok(NegativeMode::Fresh),
            other => Err(Error::Config(format!(
                "unknown negative mode {other:?}; expected shift or fresh"
            ))),
        }
    }
}

impl fmt::Display for NegativeMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NegativeMode::Shift => "shift",
            NegativeMode::Fresh => "fresh",
        })
    }
}

/// Parses a config value, naming the key on failure.
pub fn parse_value<V: FromStr>(key: &str, value: &str) -> Result<V> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("invalid value {value:?} for {key}")))
}

/// `pi(beta)` for the given schedule, with `beta` clamped to `[0, 1]`.
pub fn pi_schedule(kind: PiKind, beta: f64) -> f64 {
    let b = beta.clamp(0.0, 1.0);
    match kind {
        PiKind::Constant => 0.5,
        PiKind::Linear => b,
        PiKind::OneMinusExp => 1.0 - (-b).exp(),
        PiKind::Sigmoid => 1.0 / (1.0 + (-b).exp()),
        PiKind::Tanh => b.tanh(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub hidden_dim: usize,
    pub encoder_layers: usize,
    pub alpha: f64,
    pub lambda: f64,
    pub tau: f64,
    pub aug: Augmentation,
    pub pi_kind: PiKind,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub normalize_embeddings: bool,
    pub negative_mode: NegativeMode,
    pub variant: AblationVariant,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            hidden_dim: 64,
            encoder_layers: 1,
            alpha: 0.6,
            lambda: 1.0,
            tau: 0.5,
            aug: Augmentation::Local,
            pi_kind: PiKind::Linear,
            epochs: 100,
            batch_size: 300,
            learning_rate: 1e-3,
            normalize_embeddings: false,
            negative_mode: NegativeMode::Shift,
            variant: AblationVariant::Full,
        }
    }
}

/// Weights applied to the three loss components.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub con: f64,
    pub rec: f64,
    pub cl: f64,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha must lie in (0, 1), got {}", self.alpha));
        }
        if self.lambda.is_nan() || self.lambda <= 0.0 {
            return bad(format!("lambda must be positive, got {}", self.lambda));
        }
        if self.tau.is_nan() || self.tau <= 0.0 {
            return bad(format!("tau must be positive, got {}", self.tau));
        }
        if self.encoder_layers == 0 {
            return bad("encoder layers must be at least 1".into());
        }
        if self.hidden_dim == 0 {
            return bad("hidden dimension must be positive".into());
        }
        if self.batch_size < 2 {
            return bad(format!("batch size must be at least 2, got {}", self.batch_size));
        }
        if self.learning_rate.is_nan() || self.learning_rate <= 0.0 {
            return bad(format!("learning rate must be positive, got {}", self.learning_rate));
        }
        Ok(())
    }

    /// Alpha after the ablation variant is applied.
    pub fn effective_alpha(&self) -> f64 {
        match self.variant {
            AblationVariant::NoCon => 0.0,
            AblationVariant::NoRec => 1.0,
            _ => self.alpha,
        }
    }

    pub fn pi(&self, beta: f64) -> f64 {
        match self.variant {
            AblationVariant::NoCl => 1.0,
            _ => pi_schedule(self.pi_kind, beta),
        }
    }

    pub fn loss_weights(&self, beta: f64) -> LossWeights {
        let pi = self.pi(beta);
        let alpha = self.effective_alpha();
        LossWeights {
            con: pi * alpha,
            rec: pi * (1.0 - alpha),
            cl: self.lambda * (1.0 - pi),
        }
    }

    /// Training progress at the start of `epoch`: 0 for the first epoch and
    /// 1 for the last.
    pub fn beta(&self, epoch: usize) -> f64 {
        if self.epochs <= 1 {
            0.0
        } else {
            epoch as f64 / (self.epochs - 1) as f64
        }
    }

    /// Flat `key = value` form, also used as the checkpoint header.
    pub fn to_pairs(&self) -> Vec<(&'static str, String)> {
        vec![
            ("hidden_dim", self.hidden_dim.to_string()),
            ("encoder_layers", self.encoder_layers.to_string()),
            ("alpha", self.alpha.to_string()),
            ("lambda", self.lambda.to_string()),
            ("tau", self.tau.to_string()),
            ("aug", self.aug.to_string()),
            ("pi_kind", self.pi_kind.to_string()),
            ("epochs", self.epochs.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("learning_rate", self.learning_rate.to_string()),
            ("normalize_embeddings", self.normalize_embeddings.to_string()),
            ("negative_mode", self.negative_mode.to_string()),
            ("variant", self.variant.to_string()),
        ]
    }

    /// Sets one key from its text form. Returns `Ok(false)` for keys this
    /// config does not own.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        match key {
            "hidden_dim" => self.hidden_dim = parse_value(key, value)?,
            "encoder_layers" => self.encoder_layers = parse_value(key, value)?,
            "alpha" => self.alpha = parse_value(key, value)?,
            "lambda" => self.lambda = parse_value(key, value)?,
            "tau" => self.tau = parse_value(key, value)?,
            "aug" => self.aug = value.parse()?,
            "pi_kind" => self.pi_kind = value.parse()?,
            "epochs" => self.epochs = parse_value(key, value)?,
            "batch_size" => self.batch_size = parse_value(key, value)?,
            "learning_rate" => self.learning_rate = parse_value(key, value)?,
            "normalize_embeddings" => self.normalize_embeddings = parse_value(key, value)?,
            "negative_mode" => self.negative_mode = value.parse()?,
            "variant" => self.variant = value.parse()?,
            _ => return Ok(false),
        }
        Ok(true)
    }
}

/// All trainable weights. The encoder and the autoencoder never share
/// parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T> {
    pub encoder: Vec<Parameter<T>>,
    pub ae_encoder: Vec<Parameter<T>>,
    pub ae_decoder: Vec<Parameter<T>>,
    pub disc: Parameter<T>,
}

/// Parameters recorded on a tape.
#[derive(Debug, Clone)]
pub struct BoundParams {
    pub encoder: Vec<Tensor>,
    pub ae_encoder: Vec<Tensor>,
    pub ae_decoder: Vec<Tensor>,
    pub disc: Tensor,
}

impl<T: Scalar> ModelParams<T> {
    /// Glorot-initialized weights for `in_dim` attributes.
    pub fn init<R: Rng + ?Sized>(in_dim: usize, cfg: &ModelConfig, rng: &mut R) -> Self {
        let d = cfg.hidden_dim;
        let layers = cfg.encoder_layers;
        let dims_in: Vec<usize> = std::iter::once(in_dim).chain(std::iter::repeat_n(d, layers)).collect();
        let dims_out: Vec<usize> = std::iter::repeat_n(d, layers).chain(std::iter::once(in_dim)).collect();
        let stack = |prefix: &str, dims: &[usize], rng: &mut R| {
            dims.windows(2)
                .enumerate()
                .map(|(i, w)| Parameter::new(format!("{prefix}.{i}"), tensor::xavier_init(w[0], w[1], rng)))
                .collect::<Vec<_>>()
        };
        let encoder = stack("encoder", &dims_in, rng);
        let ae_encoder = stack("ae_encoder", &dims_in, rng);
        let ae_decoder = stack("ae_decoder", &dims_out, rng);
        let disc = Parameter::new("disc", tensor::xavier_init(d, d, rng));
        Self {
            encoder,
            ae_encoder,
            ae_decoder,
            disc,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.encoder[0].value.nrows()
    }

    pub fn hidden_dim(&self) -> usize {
        self.disc.value.nrows()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Parameter<T>> {
        self.encoder
            .iter()
            .chain(&self.ae_encoder)
            .chain(&self.ae_decoder)
            .chain(std::iter::once(&self.disc))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Parameter<T>> {
        self.encoder
            .iter_mut()
            .chain(&mut self.ae_encoder)
            .chain(&mut self.ae_decoder)
            .chain(std::iter::once(&mut self.disc))
    }

    fn bind_with(&self, tape: &Tape<T>, trainable: bool) -> Result<BoundParams> {
        let b = |p: &Parameter<T>| {
            if trainable {
                tape.leaf(p.value.clone())
            } else {
                tape.constant(p.value.clone())
            }
        };
        let all = |ps: &[Parameter<T>]| ps.iter().map(b).collect::<Result<Vec<_>>>();
        Ok(BoundParams {
            encoder: all(&self.encoder)?,
            ae_encoder: all(&self.ae_encoder)?,
            ae_decoder: all(&self.ae_decoder)?,
            disc: b(&self.disc)?,
        })
    }

    /// Records the weights as trainable leaves.
    pub fn bind(&self, tape: &Tape<T>) -> Result<BoundParams> {
        self.bind_with(tape, true)
    }

    /// Records the weights as constants, for inference.
    pub fn bind_frozen(&self, tape: &Tape<T>) -> Result<BoundParams> {
        self.bind_with(tape, false)
    }

    /// Adds the gradients of a backward pass into each parameter.
    pub fn accumulate(&mut self, grads: &Gradients<T>, bound: &BoundParams) {
        let tensors = bound
            .encoder
            .iter()
            .chain(&bound.ae_encoder)
            .chain(&bound.ae_decoder)
            .chain(std::iter::once(&bound.disc));
        for (p, &t) in self.iter_mut().zip(tensors) {
            p.accumulate(grads, t);
        }
    }
}

/// `D^-1/2 (A + I) D^-1/2` of the whole graph in CSR form.
pub fn normalized_adjacency<T: Scalar>(g: &AttributedGraph<T>) -> CsrMatrix<T> {
    let n = g.num_nodes();
    let inv_sqrt: Vec<T> = (0..n)
        .map(|v| T::lit((g.neighbors(v).len() + 1) as f64).sqrt().recip())
        .collect();
    let rows = (0..n)
        .map(|u| {
            let mut row: Vec<(usize, T)> = g.neighbors(u).iter().map(|&v| (v, inv_sqrt[u] * inv_sqrt[v])).collect();
            let pos = row.partition_point(|&(v, _)| v < u);
            row.insert(pos, (u, inv_sqrt[u] * inv_sqrt[u]));
            row
        })
        .collect();
    CsrMatrix::from_rows(n, rows).expect("neighbors in range")
}

fn block_adjacency<T: Scalar>(subs: &[&SubgraphView<T>]) -> Arc<CsrMatrix<T>> {
    let blocks: Vec<Array2<T>> = subs.iter().map(|s| s.normalized_adjacency()).collect();
    Arc::new(CsrMatrix::block_diagonal(&blocks))
}

/// Averages rows `1..K` of each stacked K-row block.
fn readout_matrix<T: Scalar>(n: usize, k: usize) -> Arc<CsrMatrix<T>> {
    let w = T::lit((k - 1) as f64).recip();
    let rows = (0..n).map(|i| (1..k).map(|j| (i * k + j, w)).collect()).collect();
    Arc::new(CsrMatrix::from_rows(n * k, rows).expect("rows in range"))
}

/// `relu(x W)` per layer.
fn mlp<T: Scalar>(tape: &Tape<T>, layers: &[Tensor], x: Tensor) -> Result<Tensor> {
    layers.iter().try_fold(x, |h, &w| tape.relu(tape.matmul(h, w)?))
}

/// `act(Â H W)` per layer; the last layer is linear when `linear_last`.
fn gcn<T: Scalar>(
    tape: &Tape<T>,
    layers: &[Tensor],
    adj: &Arc<CsrMatrix<T>>,
    x: Tensor,
    linear_last: bool,
) -> Result<Tensor> {
    let mut h = x;
    for (i, &w) in layers.iter().enumerate() {
        let z = tape.spmm(adj, tape.matmul(h, w)?)?;
        h = if linear_last && i + 1 == layers.len() {
            z
        } else {
            tape.relu(z)?
        };
    }
    Ok(h)
}

fn autoencoder<T: Scalar>(tape: &Tape<T>, p: &BoundParams, adj: &Arc<CsrMatrix<T>>, x: Tensor) -> Result<Tensor> {
    let h = gcn(tape, &p.ae_encoder, adj, x, false)?;
    gcn(tape, &p.ae_decoder, adj, h, true)
}

fn clamp_eps<T: Scalar>() -> T {
    T::lit(1e-12).max(T::epsilon())
}

/// Tensors produced by one batched forward pass.
#[derive(Debug, Clone, Copy)]
pub struct BatchTensors {
    /// `n x 1` positive-pair discriminator outputs.
    pub s_pos: Tensor,
    /// `n x 1` negative-pair discriminator outputs.
    pub s_neg: Tensor,
    /// `n x 1` squared reconstruction errors of the masked targets.
    pub rec_err: Tensor,
    pub l_con: Tensor,
    pub l_rec: Tensor,
    pub l_cl: Option<Tensor>,
    pub total: Tensor,
}

/// Runs the whole objective on one batch.
///
/// `full_adj` is the normalized adjacency of `graph` and is required when
/// the contrastive term uses global augmentation. With `with_cl` false the
/// contrastive term is skipped and excluded from `total`.
#[allow(clippy::too_many_arguments)]
pub fn forward_batch<T: Scalar>(
    tape: &Tape<T>,
    p: &BoundParams,
    cfg: &ModelConfig,
    graph: &AttributedGraph<T>,
    batch: &PairBatch<T>,
    full_adj: Option<&Arc<CsrMatrix<T>>>,
    beta: f64,
    with_cl: bool,
) -> Result<BatchTensors> {
    let n = batch.len();
    let k = batch.subgraph_size();
    if k < 2 {
        return Err(Error::Config("readout needs subgraphs of at least two nodes".into()));
    }
    let pos: Vec<&SubgraphView<T>> = batch.positives.iter().collect();
    let pool = readout_matrix::<T>(n, k);

    let adj_pos = block_adjacency(&pos);
    let x_pos = tape.constant(stack_attributes(&pos))?;
    let z_pos = gcn(tape, &p.encoder, &adj_pos, x_pos, false)?;
    let g_pos = tape.spmm(&pool, z_pos)?;
    let g_neg = match &batch.negatives {
        crate::sampler::Negatives::Shift => {
            let shift: Vec<usize> = (0..n).map(|i| (i + 1) % n).collect();
            tape.row_select(g_pos, &shift)?
        }
        crate::sampler::Negatives::Fresh(negs) => {
            let neg: Vec<&SubgraphView<T>> = negs.iter().collect();
            let adj_neg = block_adjacency(&neg);
            let x_neg = tape.constant(stack_attributes(&neg))?;
            let z_neg = gcn(tape, &p.encoder, &adj_neg, x_neg, false)?;
            tape.spmm(&pool, z_neg)?
        }
    };

    let x_t = tape.constant(graph.attributes().select(Axis(0), &batch.targets))?;
    let e = mlp(tape, &p.encoder, x_t)?;

    let logit = |g: Tensor| -> Result<Tensor> { tape.dot_rows(tape.matmul(g, p.disc)?, e) };
    let (z_pos, z_neg) = (logit(g_pos)?, logit(g_neg)?);
    let s_pos = tape.sigmoid(z_pos)?;
    let s_neg = tape.sigmoid(z_neg)?;
    // sigmoid(clamp(z, -m, m)) equals clamp(sigmoid(z), eps, 1 - eps), and
    // -ln sigmoid(z) = softplus(-z), -ln(1 - sigmoid(z)) = softplus(z).
    let eps = clamp_eps::<T>();
    let m = ((T::one() - eps) / eps).ln();
    let nll_pos = tape.softplus(tape.mul_scalar(tape.clamp(z_pos, -m, m)?, -T::one())?)?;
    let nll_neg = tape.softplus(tape.clamp(z_neg, -m, m)?)?;
    let l_con = tape.mul_scalar(tape.add(tape.mean(nll_pos)?, tape.mean(nll_neg)?)?, T::lit(0.5))?;

    let u = autoencoder(tape, p, &adj_pos, x_pos)?;
    let target_rows: Vec<usize> = (0..n).map(|i| i * k).collect();
    let u_t = tape.row_select(u, &target_rows)?;
    let rec_err = tape.l2_norm_sq_rows(tape.sub(u_t, x_t)?)?;
    let l_rec = tape.mean(rec_err)?;

    let w = cfg.loss_weights(beta);
    let mut total = tape.add(tape.mul_scalar(l_con, T::lit(w.con))?, tape.mul_scalar(l_rec, T::lit(w.rec))?)?;

    let l_cl = if with_cl {
        let e_plus = match cfg.aug {
            Augmentation::Local => g_pos,
            Augmentation::Global => {
                let adj = full_adj.ok_or_else(|| {
                    Error::Config("global augmentation needs the full-graph adjacency".into())
                })?;
                let x_all = tape.constant(graph.attributes().clone())?;
                let f = gcn(tape, &p.encoder, adj, x_all, false)?;
                tape.row_select(f, &batch.targets)?
            }
        };
        let (e, e_plus, e_minus) = if cfg.normalize_embeddings {
            let eps = T::lit(1e-12);
            (
                tape.normalize_rows(e, eps)?,
                tape.normalize_rows(e_plus, eps)?,
                tape.normalize_rows(g_neg, eps)?,
            )
        } else {
            (e, e_plus, g_neg)
        };
        let inv_tau = T::lit(cfg.tau.recip());
        let a = tape.mul_scalar(tape.dot_rows(e, e_plus)?, inv_tau)?;
        let b = tape.mul_scalar(tape.dot_rows(e, e_minus)?, inv_tau)?;
        let l_cl = tape.mean(tape.softplus(tape.sub(b, a)?)?)?;
        total = tape.add(total, tape.mul_scalar(l_cl, T::lit(w.cl))?)?;
        Some(l_cl)
    } else {
        None
    };

    Ok(BatchTensors {
        s_pos,
        s_neg,
        rec_err,
        l_con,
        l_rec,
        l_cl,
        total,
    })
}

/// Loss components of one batch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossParts<T> {
    pub l_con: T,
    pub l_rec: T,
    pub l_cl: T,
    pub total: T,
}

/// A model: configuration plus weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Dslad<T> {
    pub config: ModelConfig,
    pub params: ModelParams<T>,
}

impl<T: Scalar> Dslad<T> {
    /// Fresh weights drawn from the stream keyed by `seed`.
    pub fn new(in_dim: usize, config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let params = ModelParams::init(in_dim, &config, &mut rng::stream(seed, &[tag::INIT]));
        Ok(Self { config, params })
    }

    fn frozen(&self) -> Result<(Tape<T>, BoundParams)> {
        let tape = Tape::new();
        let bound = self.params.bind_frozen(&tape)?;
        Ok((tape, bound))
    }

    fn row(x: ArrayView1<'_, T>) -> Array2<T> {
        x.to_owned().insert_axis(Axis(0))
    }

    /// Encoder applied to one node seen as a single-node graph.
    pub fn embed_node(&self, x: ArrayView1<'_, T>) -> Result<Array1<T>> {
        let (tape, p) = self.frozen()?;
        let x = tape.constant(Self::row(x))?;
        let e = mlp(&tape, &p.encoder, x)?;
        Ok(tape.value(e).row(0).to_owned())
    }

    /// Encoder output `Z` (K x d) on a subgraph.
    pub fn embed_subgraph(&self, sub: &SubgraphView<T>) -> Result<Array2<T>> {
        let (tape, p) = self.frozen()?;
        let adj = block_adjacency(&[sub]);
        let x = tape.constant(sub.local_attributes.clone())?;
        Ok(tape.value(gcn(&tape, &p.encoder, &adj, x, false)?))
    }

    /// Autoencoder output `U` (K x d0) on a subgraph; row 0 reconstructs the
    /// target.
    pub fn reconstruct(&self, sub: &SubgraphView<T>) -> Result<Array2<T>> {
        let (tape, p) = self.frozen()?;
        let adj = block_adjacency(&[sub]);
        let x = tape.constant(sub.local_attributes.clone())?;
        Ok(tape.value(autoencoder(&tape, &p, &adj, x)?))
    }

    /// Positive sample of the contrastive objective for `target`.
    pub fn positive_embedding(
        &self,
        target: NodeId,
        sub: &SubgraphView<T>,
        graph: &AttributedGraph<T>,
    ) -> Result<Array1<T>> {
        match self.config.aug {
            Augmentation::Local => readout(self.embed_subgraph(sub)?.view(), 0),
            Augmentation::Global => {
                let (tape, p) = self.frozen()?;
                let adj = Arc::new(normalized_adjacency(graph));
                let x = tape.constant(graph.attributes().clone())?;
                let f = gcn(&tape, &p.encoder, &adj, x, false)?;
                Ok(tape.value(tape.row_select(f, &[target])?).row(0).to_owned())
            }
        }
    }

    /// `(disc(g_pos, e), disc(g_neg, e))`.
    pub fn context_scores(
        &self,
        e: ArrayView1<'_, T>,
        g_pos: ArrayView1<'_, T>,
        g_neg: ArrayView1<'_, T>,
    ) -> (T, T) {
        let w = &self.params.disc.value;
        (disc(g_pos, e, w), disc(g_neg, e, w))
    }

    /// Loss components on one batch at progress `beta`, without gradients.
    pub fn batch_losses(&self, graph: &AttributedGraph<T>, batch: &PairBatch<T>, beta: f64) -> Result<LossParts<T>> {
        let (tape, p) = self.frozen()?;
        let full = (self.config.aug == Augmentation::Global).then(|| Arc::new(normalized_adjacency(graph)));
        let out = forward_batch(&tape, &p, &self.config, graph, batch, full.as_ref(), beta, true)?;
        Ok(LossParts {
            l_con: tape.scalar(out.l_con),
            l_rec: tape.scalar(out.l_rec),
            l_cl: out.l_cl.map_or(T::zero(), |t| tape.scalar(t)),
            total: tape.scalar(out.total),
        })
    }
}

/// Mean of the rows of `z` other than `target`.
pub fn readout<T: Scalar>(z: ArrayView2<'_, T>, target: usize) -> Result<Array1<T>> {
    let k = z.nrows();
    if k < 2 || target >= k {
        return Err(Error::Config(format!("readout needs at least two rows, got {k}")));
    }
    let total = z.sum_axis(Axis(0)) - z.row(target);
    Ok(total / T::lit((k - 1) as f64))
}

/// `sigmoid(g W e^T)`.
pub fn disc<T: Scalar>(g: ArrayView1<'_, T>, e: ArrayView1<'_, T>, w: &Array2<T>) -> T {
    tensor::sigmoid(g.dot(w).dot(&e))
}

/// Binary cross-entropy over positive and negative discriminator outputs,
/// with scores clamped away from 0 and 1.
pub fn loss_con<T: Scalar>(s_pos: &[T], s_neg: &[T]) -> T {
    let eps = clamp_eps::<T>();
    let hi = T::one() - eps;
    let mean = |it: &mut dyn Iterator<Item = T>, n: usize| it.fold(T::zero(), |a, b| a + b) / T::lit(n as f64);
    let lp = mean(&mut s_pos.iter().map(|&s| s.max(eps).min(hi).ln()), s_pos.len());
    let ln = mean(&mut s_neg.iter().map(|&s| (T::one() - s).max(eps).min(hi).ln()), s_neg.len());
    -(lp + ln) * T::lit(0.5)
}

/// Mean squared L2 distance between reconstructed and true target rows.
pub fn loss_rec<T: Scalar>(u_rows: ArrayView2<'_, T>, x_rows: ArrayView2<'_, T>) -> Result<T> {
    if u_rows.dim() != x_rows.dim() || u_rows.nrows() == 0 {
        return Err(Error::Shape(format!(
            "loss_rec: {:?} vs {:?}",
            u_rows.dim(),
            x_rows.dim()
        )));
    }
    let d = &u_rows - &x_rows;
    Ok(d.mapv(|v| v * v).sum() / T::lit(u_rows.nrows() as f64))
}

/// InfoNCE with one positive and one negative per node, computed as
/// `softplus((e.e- - e.e+) / tau)`.
pub fn loss_cl<T: Scalar>(e: ArrayView2<'_, T>, e_pos: ArrayView2<'_, T>, e_neg: ArrayView2<'_, T>, tau: f64) -> T {
    let inv = T::lit(tau.recip());
    let n = e.nrows();
    (0..n)
        .map(|i| {
            let a = e.row(i).dot(&e_pos.row(i)) * inv;
            let b = e.row(i).dot(&e_neg.row(i)) * inv;
            tensor::softplus(b - a)
        })
        .fold(T::zero(), |s, x| s + x)
        / T::lit(n as f64)
}

pub fn total_loss<T: Scalar>(l_con: T, l_rec: T, l_cl: T, alpha: f64, lambda: f64, pi: f64) -> T {
    let (a, l, p) = (T::lit(alpha), T::lit(lambda), T::lit(pi));
    p * (a * l_con + (T::one() - a) * l_rec) + l * (T::one() - p) * l_cl
}
