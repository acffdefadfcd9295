//! Anomaly injection: dense cliques (structural) and copied far-away
//! attribute rows (attribute), with ground-truth labels.

use std::collections::HashSet;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{AttributedGraph, NodeId};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InjectionConfig {
    pub clique_count: usize,
    pub clique_size: usize,
    pub attr_anomaly_count: usize,
    pub candidate_pool: usize,
    pub seed: u64,
}

impl Default for InjectionConfig {
    fn default() -> Self {
        Self {
            clique_count: 0,
            clique_size: 15,
            attr_anomaly_count: 0,
            candidate_pool: 50,
            seed: 0,
        }
    }
}

impl InjectionConfig {
    /// Splits `total` anomalies evenly between cliques of `clique_size` and
    /// attribute anomalies; `total` must be a multiple of `2 * clique_size`.
    pub fn balanced(total: usize, clique_size: usize, seed: u64) -> Result<Self> {
        if clique_size == 0 || !total.is_multiple_of(2 * clique_size) {
            return Err(Error::Config(format!(
                "{total} anomalies cannot be split evenly into cliques of {clique_size}"
            )));
        }
        Ok(Self {
            clique_count: total / (2 * clique_size),
            clique_size,
            attr_anomaly_count: total / 2,
            seed,
            ..Self::default()
        })
    }

    pub fn structural_total(&self) -> usize {
        self.clique_count * self.clique_size
    }

    pub fn validate(&self, num_nodes: usize) -> Result<()> {
        let needed = self.structural_total() + self.attr_anomaly_count;
        if needed > num_nodes {
            return Err(Error::Config(format!(
                "{needed} anomalies requested but the graph has {num_nodes} nodes"
            )));
        }
        if self.attr_anomaly_count > 0 && self.candidate_pool == 0 {
            return Err(Error::Config("candidate pool must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InjectionReport {
    pub structural_nodes: Vec<NodeId>,
    pub attribute_nodes: Vec<NodeId>,
    /// Donor row copied onto each attribute anomaly, aligned with
    /// `attribute_nodes`.
    pub donors: Vec<NodeId>,
    pub edges_added: usize,
    pub edges_before: usize,
    pub edges_after: usize,
    pub seed: u64,
}

/// Connects `clique_count` disjoint groups of `clique_size` uniformly drawn
/// nodes into cliques.
pub fn inject_structural<T: Scalar, R: Rng + ?Sized>(
    g: &AttributedGraph<T>,
    cfg: &InjectionConfig,
    rng: &mut R,
) -> Result<(AttributedGraph<T>, Vec<NodeId>, usize)> {
    let n = g.num_nodes();
    let total = cfg.structural_total();
    if total > n {
        return Err(Error::Config(format!(
            "{total} clique members requested but the graph has {n} nodes"
        )));
    }
    if total == 0 {
        return Ok((g.clone(), Vec::new(), 0));
    }
    let chosen = index::sample(rng, n, total).into_vec();
    let mut new_edges = Vec::new();
    for group in chosen.chunks(cfg.clique_size) {
        for (i, &u) in group.iter().enumerate() {
            for &v in &group[i + 1..] {
                if !g.has_edge(u, v) {
                    new_edges.push((u, v));
                }
            }
        }
    }
    let added = new_edges.len();
    let out = AttributedGraph::from_edges(
        g.edges().chain(new_edges),
        g.attributes().clone(),
        g.labels().map(<[u8]>::to_vec),
    )?;
    Ok((out, chosen, added))
}

/// Overwrites the attributes of `attr_anomaly_count` nodes outside
/// `exclude` with the row of the most distant of `candidate_pool` random
/// other nodes. Distances use the attributes as they were before injection.
///
/// Draw order: one `index::sample` over the eligible nodes, then, per
/// chosen node in that order, one `index::sample` of candidates over the
/// other `N - 1` nodes. Returns the chosen nodes and their donors.
pub fn inject_attribute<T: Scalar, R: Rng + ?Sized>(
    g: &AttributedGraph<T>,
    cfg: &InjectionConfig,
    exclude: &HashSet<NodeId>,
    rng: &mut R,
) -> Result<(AttributedGraph<T>, Vec<NodeId>, Vec<NodeId>)> {
    let n = g.num_nodes();
    let count = cfg.attr_anomaly_count;
    if count == 0 {
        return Ok((g.clone(), Vec::new(), Vec::new()));
    }
    let eligible: Vec<NodeId> = (0..n).filter(|v| !exclude.contains(v)).collect();
    if eligible.len() < count {
        return Err(Error::Config(format!(
            "{count} attribute anomalies requested but only {} nodes are eligible",
            eligible.len()
        )));
    }
    if n < 2 || cfg.candidate_pool == 0 {
        return Err(Error::Config("attribute injection needs at least one candidate".into()));
    }
    let chosen: Vec<NodeId> = index::sample(rng, eligible.len(), count)
        .into_iter()
        .map(|i| eligible[i])
        .collect();
    let original = g.attributes();
    let mut attrs = original.clone();
    let mut donors = Vec::with_capacity(count);
    let pool = cfg.candidate_pool.min(n - 1);
    for &v in &chosen {
        let x = original.row(v);
        let mut best = (T::neg_infinity(), v);
        for c in index::sample(rng, n - 1, pool) {
            let u = if c >= v { c + 1 } else { c };
            let dist = x
                .iter()
                .zip(original.row(u))
                .map(|(&a, &b)| (a - b) * (a - b))
                .fold(T::zero(), |s, t| s + t);
            if dist > best.0 {
                best = (dist, u);
            }
        }
        attrs.row_mut(v).assign(&original.row(best.1));
        donors.push(best.1);
    }
    Ok((g.clone().with_attributes(attrs)?, chosen, donors))
}

/// Runs structural then attribute injection on disjoint node sets and
/// labels the union.
pub fn inject<T: Scalar>(
    g: &AttributedGraph<T>,
    cfg: &InjectionConfig,
) -> Result<(AttributedGraph<T>, Vec<u8>, InjectionReport)> {
    cfg.validate(g.num_nodes())?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let edges_before = g.num_edges();
    let (g1, structural, edges_added) = inject_structural(g, cfg, &mut rng)?;
    let exclude: HashSet<NodeId> = structural.iter().copied().collect();
    let (g2, attribute, donors) = inject_attribute(&g1, cfg, &exclude, &mut rng)?;
    let mut labels = vec![0u8; g.num_nodes()];
    for &v in structural.iter().chain(&attribute) {
        labels[v] = 1;
    }
    let out = g2.with_labels(Some(labels.clone()))?;
    let report = InjectionReport {
        structural_nodes: structural,
        attribute_nodes: attribute,
        donors,
        edges_added,
        edges_before,
        edges_after: out.num_edges(),
        seed: cfg.seed,
    };
    Ok((out, labels, report))
}
