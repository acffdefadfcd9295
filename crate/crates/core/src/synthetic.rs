//! Community-structured random attributed graphs for desk-scale runs.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::graph::AttributedGraph;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticConfig {
    pub n_nodes: usize,
    pub n_features: usize,
    pub communities: usize,
    /// Expected number of neighbors inside a node's own community.
    pub intra_degree: f64,
    /// Expected number of neighbors in other communities.
    pub inter_degree: f64,
    /// Standard deviation of per-node noise around the community centroid.
    pub noise: f64,
    /// When set, every feature row is rescaled to this L2 norm.
    pub row_norm: Option<f64>,
    pub seed: u64,
}

impl SyntheticConfig {
    pub fn new(n_nodes: usize, n_features: usize, communities: usize, seed: u64) -> Self {
        Self {
            n_nodes,
            n_features,
            communities,
            intra_degree: 6.0,
            inter_degree: 0.5,
            noise: 1.0,
            row_norm: Some((n_features as f64).sqrt()),
            seed,
        }
    }
}

/// A generated graph with each node's community.
#[derive(Debug, Clone)]
pub struct SyntheticGraph<T> {
    pub graph: AttributedGraph<T>,
    pub community: Vec<usize>,
}

/// Planted-partition graph with Gaussian community features.
///
/// Nodes are assigned to communities in shuffled round-robin order. Each
/// pair is linked independently, with probabilities chosen to meet the
/// expected intra and inter degrees. Features are a standard normal
/// community centroid plus `noise`-scaled standard normal noise.
pub fn gen_synthetic<T: Scalar>(cfg: &SyntheticConfig) -> Result<SyntheticGraph<T>> {
    if cfg.n_nodes < 20 {
        return Err(Error::Config(format!("need at least 20 nodes, got {}", cfg.n_nodes)));
    }
    if cfg.communities == 0 || cfg.communities > cfg.n_nodes || cfg.n_features == 0 {
        return Err(Error::Config("communities and features must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n = cfg.n_nodes;
    let mut community: Vec<usize> = (0..n).map(|v| v % cfg.communities).collect();
    community.shuffle(&mut rng);

    let size = n as f64 / cfg.communities as f64;
    let p_in = (cfg.intra_degree / (size - 1.0).max(1.0)).min(1.0);
    let p_out = if cfg.communities > 1 {
        (cfg.inter_degree / (n as f64 - size)).min(1.0)
    } else {
        0.0
    };
    let mut edges = Vec::new();
    for u in 0..n {
        for v in (u + 1)..n {
            let p = if community[u] == community[v] { p_in } else { p_out };
            if rng.random::<f64>() < p {
                edges.push((u, v));
            }
        }
    }

    let mut normal = || -> f64 { rng.sample(StandardNormal) };
    let centroids = Array2::from_shape_simple_fn((cfg.communities, cfg.n_features), &mut normal);
    let mut x = Array2::from_shape_fn((n, cfg.n_features), |(v, j)| {
        centroids[[community[v], j]] + cfg.noise * normal()
    });
    if let Some(target) = cfg.row_norm {
        for mut row in x.rows_mut() {
            let norm = row.dot(&row).sqrt();
            if norm > 0.0 {
                row.mapv_inplace(|v| v * target / norm);
            }
        }
    }
    let x = x.mapv(T::lit);
    Ok(SyntheticGraph {
        graph: AttributedGraph::from_edges(edges, x, None)?,
        community,
    })
}
