//! Epoch/batch training loop.

use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::AttributedGraph;
use crate::model::{forward_batch, normalized_adjacency, Augmentation, Dslad, ModelConfig};
use crate::rng::{self, tag};
use crate::sampler::{EpochPlan, PairBatch, RwrConfig};
use crate::scalar::Scalar;
use crate::tensor::{Adam, Tape};

/// Loss components of one epoch, averaged over its targets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub beta: f64,
    pub pi: f64,
    pub l_con: f64,
    pub l_rec: f64,
    pub l_cl: f64,
    pub total: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutput<T> {
    pub model: Dslad<T>,
    pub history: Vec<EpochLoss>,
}

/// Trains a freshly initialized model.
///
/// Each epoch shuffles the nodes, splits them into batches, builds one
/// positive and one negative pair per target and takes one Adam step per
/// batch on the scheduled objective. All randomness derives from `seed`.
pub fn train<T: Scalar>(
    graph: &AttributedGraph<T>,
    cfg: &ModelConfig,
    rwr: &RwrConfig,
    seed: u64,
) -> Result<TrainOutput<T>> {
    rwr.validate()?;
    let model = Dslad::new(graph.num_features(), cfg.clone(), seed)?;
    train_from(model, graph, rwr, seed)
}

/// Continues training `model` for `model.config.epochs` epochs.
pub fn train_from<T: Scalar>(
    mut model: Dslad<T>,
    graph: &AttributedGraph<T>,
    rwr: &RwrConfig,
    seed: u64,
) -> Result<TrainOutput<T>> {
    let cfg = model.config.clone();
    if model.params.in_dim() != graph.num_features() {
        return Err(Error::Shape(format!(
            "model expects {} attributes, graph has {}",
            model.params.in_dim(),
            graph.num_features()
        )));
    }
    let adam = Adam {
        lr: cfg.learning_rate,
        ..Adam::default()
    };
    let full_adj = (cfg.aug == Augmentation::Global).then(|| Arc::new(normalized_adjacency(graph)));
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let beta = cfg.beta(epoch);
        let plan = EpochPlan::new(
            graph.num_nodes(),
            cfg.batch_size,
            &mut rng::stream(seed, &[tag::EPOCH_ORDER, epoch as u64]),
        )?;
        let key = rng::mix(seed, &[tag::TRAIN_SUBGRAPH, epoch as u64]);
        let mut sums = [0.0f64; 4];
        for (b, targets) in plan.batches.iter().enumerate() {
            let diag = |e: Error| match e {
                Error::Numeric(m) => Error::Numeric(format!("epoch {epoch}, batch {b}: {m}")),
                other => other,
            };
            let batch = PairBatch::sample(graph, targets, rwr, key, cfg.negative_mode)?;
            let tape = Tape::new();
            let bound = model.params.bind(&tape)?;
            let out = forward_batch(&tape, &bound, &cfg, graph, &batch, full_adj.as_ref(), beta, true)
                .map_err(diag)?;
            let grads = tape.backward(out.total).map_err(diag)?;
            model.params.accumulate(&grads, &bound);
            adam.step(model.params.iter_mut());
            if let Some(p) = model.params.iter().find(|p| p.value.iter().any(|v| !v.is_finite())) {
                return Err(diag(Error::Numeric(format!("parameter {} diverged", p.name))));
            }
            let w = targets.len() as f64;
            let l_cl = out.l_cl.map_or(0.0, |t| tape.scalar(t).to_f64_lossy());
            for (s, v) in sums.iter_mut().zip([
                tape.scalar(out.l_con).to_f64_lossy(),
                tape.scalar(out.l_rec).to_f64_lossy(),
                l_cl,
                tape.scalar(out.total).to_f64_lossy(),
            ]) {
                *s += w * v;
            }
        }
        let n = graph.num_nodes() as f64;
        history.push(EpochLoss {
            epoch,
            beta,
            pi: cfg.pi(beta),
            l_con: sums[0] / n,
            l_rec: sums[1] / n,
            l_cl: sums[2] / n,
            total: sums[3] / n,
        });
    }
    Ok(TrainOutput { model, history })
}
