//! Discrimination pair construction: target batches, random walk with
//! restart subgraphs, and attribute masking.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::graph::{AttributedGraph, NodeId, SubgraphView};
use crate::rng::{self, tag};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RwrConfig {
    pub subgraph_size: usize,
    pub restart_prob: f64,
    pub max_steps: usize,
}

impl RwrConfig {
    /// Restart probability 0.1 and a step cap of `50 * K`.
    pub fn new(subgraph_size: usize) -> Self {
        Self {
            subgraph_size,
            restart_prob: 0.1,
            max_steps: 50 * subgraph_size,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.subgraph_size < 2 {
            return Err(Error::Config(format!(
                "subgraph size must be at least 2, got {}",
                self.subgraph_size
            )));
        }
        if !(self.restart_prob > 0.0 && self.restart_prob < 1.0) {
            return Err(Error::Config(format!(
                "restart probability must lie in (0, 1), got {}",
                self.restart_prob
            )));
        }
        if self.max_steps < self.subgraph_size {
            return Err(Error::Config(format!(
                "max steps {} below subgraph size {}",
                self.max_steps, self.subgraph_size
            )));
        }
        Ok(())
    }
}

impl Default for RwrConfig {
    fn default() -> Self {
        Self::new(4)
    }
}

/// How the subgraph of a negative pair is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NegativeMode {
    /// Reuse the positive subgraph of the next target in the batch.
    #[default]
    Shift,
    /// Draw a new subgraph rooted at the next target in the batch.
    Fresh,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Polarity {
    Positive,
    Negative,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscriminationPair<T> {
    pub target: NodeId,
    pub subgraph: SubgraphView<T>,
    pub polarity: Polarity,
}

/// Walks from `start`, restarting with probability `restart_prob`, until
/// `K` distinct nodes are seen or the step budget runs out. Short results
/// are padded with `start`.
///
/// Each step draws one `f64` for the restart decision and, when moving, one
/// index into the current node's sorted neighbor list.
pub fn rwr_sample<T: Scalar, R: Rng + ?Sized>(
    g: &AttributedGraph<T>,
    start: NodeId,
    cfg: &RwrConfig,
    rng: &mut R,
) -> Result<Vec<NodeId>> {
    g.degree(start)?;
    let k = cfg.subgraph_size;
    let mut visited = Vec::with_capacity(k);
    visited.push(start);
    let mut current = start;
    let mut steps = 0;
    while visited.len() < k && steps < cfg.max_steps && !g.neighbors(start).is_empty() {
        steps += 1;
        if rng.random::<f64>() < cfg.restart_prob {
            current = start;
            continue;
        }
        let nbrs = g.neighbors(current);
        current = nbrs[rng.random_range(0..nbrs.len())];
        if !visited.contains(&current) {
            visited.push(current);
        }
    }
    visited.resize(k, start);
    Ok(visited)
}

/// Zeroes the target row (local index 0).
pub fn mask_target<T: Scalar>(mut sub: SubgraphView<T>) -> SubgraphView<T> {
    sub.local_attributes.row_mut(0).fill(T::zero());
    sub
}

/// Zeroes rows that are padding copies of the target.
pub fn mask_padding<T: Scalar>(mut sub: SubgraphView<T>) -> SubgraphView<T> {
    let target = sub.target();
    for p in 1..sub.len() {
        if sub.node_ids[p] == target {
            sub.local_attributes.row_mut(p).fill(T::zero());
        }
    }
    sub
}

/// Samples the masked subgraph rooted at `target`.
pub fn sample_subgraph<T: Scalar, R: Rng + ?Sized>(
    g: &AttributedGraph<T>,
    target: NodeId,
    cfg: &RwrConfig,
    rng: &mut R,
) -> Result<SubgraphView<T>> {
    let ids = rwr_sample(g, target, cfg, rng)?;
    Ok(mask_padding(mask_target(g.induced_subgraph(&ids)?)))
}

/// Negative subgraphs of a [`PairBatch`].
#[derive(Debug, Clone, PartialEq)]
pub enum Negatives<T> {
    /// Target `i` uses the positive subgraph of target `(i + 1) mod n`.
    Shift,
    /// Target `i` uses its own freshly drawn subgraph rooted at target
    /// `(i + 1) mod n`.
    Fresh(Vec<SubgraphView<T>>),
}

/// One positive and one negative subgraph per target of a batch.
#[derive(Debug, Clone, PartialEq)]
pub struct PairBatch<T> {
    pub targets: Vec<NodeId>,
    pub positives: Vec<SubgraphView<T>>,
    pub negatives: Negatives<T>,
}

impl<T: Scalar> PairBatch<T> {
    /// Subgraph randomness for target `v` comes from the stream keyed by
    /// `(key, v)`; fresh negatives use a separately tagged stream.
    pub fn sample(
        g: &AttributedGraph<T>,
        batch: &[NodeId],
        cfg: &RwrConfig,
        key: u64,
        mode: NegativeMode,
    ) -> Result<Self> {
        let n = batch.len();
        if n < 2 {
            return Err(Error::Config(format!(
                "a batch needs at least two targets to form negatives, got {n}"
            )));
        }
        let positives = batch
            .iter()
            .map(|&v| sample_subgraph(g, v, cfg, &mut rng::stream(key, &[v as u64])))
            .collect::<Result<Vec<_>>>()?;
        let negatives = match mode {
            NegativeMode::Shift => Negatives::Shift,
            NegativeMode::Fresh => Negatives::Fresh(
                (0..n)
                    .map(|i| {
                        let mut r = rng::stream(key, &[tag::FRESH_NEGATIVE, batch[i] as u64]);
                        sample_subgraph(g, batch[(i + 1) % n], cfg, &mut r)
                    })
                    .collect::<Result<Vec<_>>>()?,
            ),
        };
        Ok(Self {
            targets: batch.to_vec(),
            positives,
            negatives,
        })
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn subgraph_size(&self) -> usize {
        self.positives[0].len()
    }

    pub fn negative(&self, i: usize) -> &SubgraphView<T> {
        match &self.negatives {
            Negatives::Shift => &self.positives[(i + 1) % self.len()],
            Negatives::Fresh(v) => &v[i],
        }
    }

    /// The batch as explicit pairs: `n` positives in batch order followed
    /// by the `n` matching negatives.
    pub fn pairs(&self) -> Vec<DiscriminationPair<T>> {
        let pos = self.targets.iter().zip(&self.positives).map(|(&v, s)| DiscriminationPair {
            target: v,
            subgraph: s.clone(),
            polarity: Polarity::Positive,
        });
        let neg = self.targets.iter().enumerate().map(|(i, &v)| DiscriminationPair {
            target: v,
            subgraph: self.negative(i).clone(),
            polarity: Polarity::Negative,
        });
        pos.chain(neg).collect()
    }
}

/// Builds one positive and one negative pair per target; see
/// [`PairBatch::pairs`] for the ordering.
pub fn build_pairs<T: Scalar>(
    g: &AttributedGraph<T>,
    batch: &[NodeId],
    cfg: &RwrConfig,
    key: u64,
    mode: NegativeMode,
) -> Result<Vec<DiscriminationPair<T>>> {
    Ok(PairBatch::sample(g, batch, cfg, key, mode)?.pairs())
}

/// Shuffled partition of all nodes into near-equal batches of at most
/// `batch_size` nodes, each holding at least two.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EpochPlan {
    pub batches: Vec<Vec<NodeId>>,
}

impl EpochPlan {
    pub fn new<R: Rng + ?Sized>(num_nodes: usize, batch_size: usize, rng: &mut R) -> Result<Self> {
        if batch_size < 2 {
            return Err(Error::Config(format!("batch size must be at least 2, got {batch_size}")));
        }
        if num_nodes < 2 {
            return Err(Error::Config(format!("need at least two nodes, got {num_nodes}")));
        }
        let mut order: Vec<NodeId> = (0..num_nodes).collect();
        order.shuffle(rng);
        // Never emit a single-node batch; with an odd node count and
        // batch size 2 one batch holds three nodes.
        let count = num_nodes.div_ceil(batch_size).min(num_nodes / 2);
        let (base, extra) = (num_nodes / count, num_nodes % count);
        let mut batches = Vec::with_capacity(count);
        let mut it = order.into_iter();
        for b in 0..count {
            let len = base + usize::from(b < extra);
            batches.push(it.by_ref().take(len).collect());
        }
        Ok(Self { batches })
    }
}

/// Stacks the attribute rows of several subgraphs into one matrix.
pub(crate) fn stack_attributes<T: Scalar>(subs: &[&SubgraphView<T>]) -> Array2<T> {
    let k = subs.first().map_or(0, |s| s.len());
    let d = subs.first().map_or(0, |s| s.local_attributes.ncols());
    let mut out = Array2::zeros((subs.len() * k, d));
    for (i, s) in subs.iter().enumerate() {
        out.slice_mut(ndarray::s![i * k..(i + 1) * k, ..])
            .assign(&s.local_attributes);
    }
    out
}
