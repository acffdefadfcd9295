#![allow(dead_code)]

use dslad::eval::Experiment;
use dslad::graph::AttributedGraph;
use dslad::injector::{inject, InjectionConfig};
use dslad::model::{forward_batch, AblationVariant, Augmentation, Dslad, ModelConfig, PiKind};
use dslad::sampler::{NegativeMode, PairBatch, RwrConfig};
use dslad::scoring::MinMaxMode;
use dslad::synthetic::{gen_synthetic, SyntheticConfig};
use dslad::{SubgraphView, Tape};
use ndarray::{Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type G = AttributedGraph<f64>;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Erdos-Renyi graph with standard-normal-ish attributes.
pub fn random_graph(n: usize, d: usize, p: f64, r: &mut impl Rng) -> G {
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if r.random::<f64>() < p {
                edges.push((u, v));
            }
        }
    }
    let x = Array2::from_shape_fn((n, d), |_| r.random_range(-1.5..1.5));
    AttributedGraph::from_edges(edges, x, None).unwrap()
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn relu(m: Array2<f64>) -> Array2<f64> {
    m.mapv(|v| v.max(0.0))
}

/// `D^-1/2 (A + I) D^-1/2` built directly from a 0/1 adjacency.
pub fn dense_norm_adj(adj: &Array2<u8>) -> Array2<f64> {
    let k = adj.nrows();
    let a = Array2::from_shape_fn((k, k), |(i, j)| if i == j { 1.0 } else { f64::from(adj[[i, j]]) });
    let d: Vec<f64> = a.rows().into_iter().map(|r| r.sum()).collect();
    Array2::from_shape_fn((k, k), |(i, j)| a[[i, j]] / (d[i] * d[j]).sqrt())
}

/// Stacked GCN layers on a dense normalized adjacency.
pub fn dense_gcn(a_hat: &Array2<f64>, x: &Array2<f64>, ws: &[Array2<f64>], linear_last: bool) -> Array2<f64> {
    let mut h = x.clone();
    for (i, w) in ws.iter().enumerate() {
        let z = a_hat.dot(&h.dot(w));
        h = if linear_last && i + 1 == ws.len() { z } else { relu(z) };
    }
    h
}

pub fn weights(ps: &[dslad::Parameter<f64>]) -> Vec<Array2<f64>> {
    ps.iter().map(|p| p.value.clone()).collect()
}

pub fn oracle_embed_subgraph(m: &Dslad<f64>, sub: &SubgraphView<f64>) -> Array2<f64> {
    let a = dense_norm_adj(&sub.local_adjacency);
    dense_gcn(&a, &sub.local_attributes, &weights(&m.params.encoder), false)
}

pub fn oracle_reconstruct(m: &Dslad<f64>, sub: &SubgraphView<f64>) -> Array2<f64> {
    let a = dense_norm_adj(&sub.local_adjacency);
    let h = dense_gcn(&a, &sub.local_attributes, &weights(&m.params.ae_encoder), false);
    dense_gcn(&a, &h, &weights(&m.params.ae_decoder), true)
}

pub fn oracle_embed_node(m: &Dslad<f64>, x: &Array1<f64>) -> Array1<f64> {
    let mut h = x.clone().insert_axis(Axis(0));
    for w in weights(&m.params.encoder) {
        h = relu(h.dot(&w));
    }
    h.row(0).to_owned()
}

pub fn oracle_readout(z: &Array2<f64>) -> Array1<f64> {
    let k = z.nrows();
    let mut s = Array1::zeros(z.ncols());
    for r in 1..k {
        s += &z.row(r);
    }
    s / (k - 1) as f64
}

/// Full-graph encoder row of `target`, from a dense adjacency.
pub fn oracle_global_positive(m: &Dslad<f64>, g: &G, target: usize) -> Array1<f64> {
    let a = dense_norm_adj(&g.dense_adjacency());
    dense_gcn(&a, g.attributes(), &weights(&m.params.encoder), false)
        .row(target)
        .to_owned()
}

/// Loss components of one batch, one target at a time.
pub struct OracleLosses {
    pub s_pos: Vec<f64>,
    pub s_neg: Vec<f64>,
    pub rec: Vec<f64>,
    pub l_con: f64,
    pub l_rec: f64,
    pub l_cl: f64,
    pub total: f64,
}

pub fn oracle_losses(m: &Dslad<f64>, g: &G, batch: &PairBatch<f64>, beta: f64) -> OracleLosses {
    let cfg = &m.config;
    let w = &m.params.disc.value;
    let n = batch.len();
    let (mut s_pos, mut s_neg, mut rec, mut cl) = (vec![], vec![], vec![], vec![]);
    for i in 0..n {
        let v = batch.targets[i];
        let e = oracle_embed_node(m, &g.attribute_row(v).to_owned());
        let g_pos = oracle_readout(&oracle_embed_subgraph(m, &batch.positives[i]));
        let g_neg = oracle_readout(&oracle_embed_subgraph(m, batch.negative(i)));
        s_pos.push(sigmoid(g_pos.dot(w).dot(&e)));
        s_neg.push(sigmoid(g_neg.dot(w).dot(&e)));
        let u = oracle_reconstruct(m, &batch.positives[i]);
        let diff = &u.row(0) - &g.attribute_row(v);
        rec.push(diff.dot(&diff));
        let e_plus = match cfg.aug {
            Augmentation::Local => g_pos.clone(),
            Augmentation::Global => oracle_global_positive(m, g, v),
        };
        let unit = |x: &Array1<f64>| {
            if cfg.normalize_embeddings {
                x / x.dot(x).sqrt().max(1e-12)
            } else {
                x.clone()
            }
        };
        let (e, ep, en) = (unit(&e), unit(&e_plus), unit(&g_neg));
        let a = (e.dot(&ep) / cfg.tau).exp();
        let b = (e.dot(&en) / cfg.tau).exp();
        cl.push(-(a / (a + b)).ln());
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let l_con = -0.5 * (mean(&s_pos.iter().map(|s| s.ln()).collect::<Vec<_>>())
        + mean(&s_neg.iter().map(|s| (1.0 - s).ln()).collect::<Vec<_>>()));
    let l_rec = mean(&rec);
    let l_cl = mean(&cl);
    let pi = cfg.pi(beta);
    let alpha = cfg.effective_alpha();
    let total = pi * (alpha * l_con + (1.0 - alpha) * l_rec) + cfg.lambda * (1.0 - pi) * l_cl;
    OracleLosses {
        s_pos,
        s_neg,
        rec,
        l_con,
        l_rec,
        l_cl,
        total,
    }
}

/// A randomly configured micro model plus one sampled batch.
pub struct Micro {
    pub graph: G,
    pub model: Dslad<f64>,
    pub batch: PairBatch<f64>,
    pub beta: f64,
}

/// Pre-activations of every ReLU in a dense GCN stack.
fn gcn_pre_activations(a_hat: &Array2<f64>, x: &Array2<f64>, ws: &[Array2<f64>], linear_last: bool, out: &mut Vec<f64>) -> Array2<f64> {
    let mut h = x.clone();
    for (i, w) in ws.iter().enumerate() {
        let z = a_hat.dot(&h.dot(w));
        if linear_last && i + 1 == ws.len() {
            h = z;
        } else {
            out.extend(z.iter().copied());
            h = relu(z);
        }
    }
    h
}

/// Smallest nonzero |pre-activation| over all ReLUs evaluated by the batch
/// objective. Exact zeros come from all-zero rows and stay zero under
/// weight perturbations.
pub fn relu_margin(m: &Micro) -> f64 {
    let mut z = Vec::new();
    let enc = weights(&m.model.params.encoder);
    let subs = m.batch.positives.iter().chain((0..m.batch.len()).map(|i| m.batch.negative(i)));
    for sub in subs {
        let a = dense_norm_adj(&sub.local_adjacency);
        gcn_pre_activations(&a, &sub.local_attributes, &enc, false, &mut z);
    }
    for sub in &m.batch.positives {
        let a = dense_norm_adj(&sub.local_adjacency);
        let h = gcn_pre_activations(&a, &sub.local_attributes, &weights(&m.model.params.ae_encoder), false, &mut z);
        gcn_pre_activations(&a, &h, &weights(&m.model.params.ae_decoder), true, &mut z);
    }
    let x_t = m.graph.attributes().select(Axis(0), &m.batch.targets);
    gcn_pre_activations(&Array2::eye(x_t.nrows()), &x_t, &enc, false, &mut z);
    if m.model.config.aug == Augmentation::Global {
        let a = dense_norm_adj(&m.graph.dense_adjacency());
        gcn_pre_activations(&a, m.graph.attributes(), &enc, false, &mut z);
    }
    z.into_iter().filter(|v| *v != 0.0).map(f64::abs).fold(f64::INFINITY, f64::min)
}

/// Draws micro-instances from `seed` onwards until one keeps every ReLU at
/// least `margin` away from its kink, so that central differences are a
/// valid oracle.
pub fn smooth_micro_instance(seed: u64, k: usize, d: usize, d0: usize, margin: f64) -> Micro {
    (0..)
        .map(|i| micro_instance(seed.wrapping_mul(1_000_003).wrapping_add(i), k, d, d0))
        .find(|m| relu_margin(m) >= margin)
        .unwrap()
}

pub fn micro_instance(seed: u64, k: usize, d: usize, d0: usize) -> Micro {
    let mut r = rng(seed);
    let n = r.random_range(6..11);
    let graph = random_graph(n, d0, 0.4, &mut r);
    let cfg = ModelConfig {
        hidden_dim: d,
        encoder_layers: r.random_range(1..3),
        alpha: r.random_range(0.0..1.0),
        lambda: r.random_range(0.5..3.0),
        tau: r.random_range(0.3..1.0),
        aug: if r.random() { Augmentation::Global } else { Augmentation::Local },
        pi_kind: [PiKind::Linear, PiKind::Sigmoid, PiKind::Tanh][r.random_range(0..3)],
        normalize_embeddings: r.random_bool(0.3),
        negative_mode: if r.random() { NegativeMode::Fresh } else { NegativeMode::Shift },
        variant: AblationVariant::Full,
        ..Default::default()
    };
    let model = Dslad::new(d0, cfg, r.random()).unwrap();
    // Spread the weights so that ReLUs and the discriminator are not
    // all in their flat regions.
    let mut model = model;
    for p in model.params.iter_mut() {
        p.value.mapv_inplace(|v| v * 1.5);
    }
    let size = r.random_range(2..=n);
    let targets: Vec<usize> = rand::seq::index::sample(&mut r, n, size).into_vec();
    let batch = PairBatch::sample(&graph, &targets, &RwrConfig::new(k), r.random(), model.config.negative_mode).unwrap();
    Micro {
        graph,
        model,
        batch,
        beta: r.random_range(0.0..1.0),
    }
}

/// Largest relative difference between tape gradients and central
/// differences with step `h`, over every parameter entry. The denominator
/// is floored at `floor * max(1, |loss|)`, the scale below which a
/// difference quotient is dominated by rounding.
pub fn gradient_check(m: &Micro, h: f64, floor: f64) -> f64 {
    let tape = Tape::new();
    let bound = m.model.params.bind(&tape).unwrap();
    let full = (m.model.config.aug == Augmentation::Global)
        .then(|| std::sync::Arc::new(dslad::model::normalized_adjacency(&m.graph)));
    let out = forward_batch(&tape, &bound, &m.model.config, &m.graph, &m.batch, full.as_ref(), m.beta, true).unwrap();
    let floor = floor * tape.scalar(out.total).abs().max(1.0);
    let grads = tape.backward(out.total).unwrap();
    let leaves: Vec<dslad::Tensor> = bound
        .encoder
        .iter()
        .chain(&bound.ae_encoder)
        .chain(&bound.ae_decoder)
        .chain(std::iter::once(&bound.disc))
        .copied()
        .collect();
    let mut worst: f64 = 0.0;
    let count = m.model.params.iter().count();
    for (pi, leaf) in (0..count).zip(leaves) {
        let analytic = grads.get(leaf).unwrap().clone();
        let dims = analytic.dim();
        for r in 0..dims.0 {
            for c in 0..dims.1 {
                let eval = |delta: f64| {
                    let mut model = m.model.clone();
                    model.params.iter_mut().nth(pi).unwrap().value[[r, c]] += delta;
                    model.batch_losses(&m.graph, &m.batch, m.beta).unwrap().total
                };
                let numeric = (eval(h) - eval(-h)) / (2.0 * h);
                let a = analytic[[r, c]];
                let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(floor);
                worst = worst.max(rel);
            }
        }
    }
    worst
}

/// Fraction of (anomaly, normal) pairs ranked correctly, ties counting
/// one half.
pub fn pairwise_auc(scores: &[f64], labels: &[u8]) -> f64 {
    let mut wins = 0.0;
    let mut pairs = 0.0;
    for (i, &si) in scores.iter().enumerate() {
        if labels[i] != 1 {
            continue;
        }
        for (j, &sj) in scores.iter().enumerate() {
            if labels[j] != 0 {
                continue;
            }
            pairs += 1.0;
            if si > sj {
                wins += 1.0;
            } else if si == sj {
                wins += 0.5;
            }
        }
    }
    wins / pairs
}

/// 500-node, 4-community synthetic graph with two 5-cliques and ten
/// attribute anomalies.
pub fn planted(seed: u64) -> G {
    let s = gen_synthetic::<f64>(&SyntheticConfig::new(500, 50, 4, seed)).unwrap();
    let cfg = InjectionConfig {
        clique_count: 2,
        clique_size: 5,
        attr_anomaly_count: 10,
        seed,
        ..Default::default()
    };
    inject(&s.graph, &cfg).unwrap().0
}

pub fn planted_experiment(epochs: usize, variant: AblationVariant) -> Experiment {
    Experiment {
        model: ModelConfig {
            epochs,
            alpha: 0.6,
            lambda: 1.0,
            pi_kind: PiKind::Linear,
            variant,
            ..Default::default()
        },
        rwr: RwrConfig::new(4),
        rounds: 16,
        minmax: MinMaxMode::PerRound,
    }
}
