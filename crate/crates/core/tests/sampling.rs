mod common;

use std::collections::{HashSet, VecDeque};

use common::*;
use dslad::graph::AttributedGraph;
use dslad::sampler::{build_pairs, rwr_sample, sample_subgraph, EpochPlan, NegativeMode, Polarity, RwrConfig};
use ndarray::Array2;
use rand::Rng;

/// Independent walker following the documented draw order.
fn replay(adj: &[Vec<usize>], start: usize, cfg: &RwrConfig, r: &mut impl Rng) -> Vec<usize> {
    let mut seen = vec![start];
    let mut at = start;
    let mut steps = 0;
    if adj[start].is_empty() {
        return vec![start; cfg.subgraph_size];
    }
    while seen.len() < cfg.subgraph_size && steps < cfg.max_steps {
        steps += 1;
        let u: f64 = r.random();
        if u < cfg.restart_prob {
            at = start;
            continue;
        }
        at = adj[at][r.random_range(0..adj[at].len())];
        if !seen.contains(&at) {
            seen.push(at);
        }
    }
    while seen.len() < cfg.subgraph_size {
        seen.push(start);
    }
    seen
}

fn adjacency_lists(g: &G) -> Vec<Vec<usize>> {
    (0..g.num_nodes()).map(|v| g.neighbors(v).to_vec()).collect()
}

fn reachable(g: &G, s: usize) -> HashSet<usize> {
    let mut seen = HashSet::from([s]);
    let mut q = VecDeque::from([s]);
    while let Some(u) = q.pop_front() {
        for &v in g.neighbors(u) {
            if seen.insert(v) {
                q.push_back(v);
            }
        }
    }
    seen
}

#[test]
fn star_graph_replay() {
    let n = 9;
    let x = Array2::from_shape_fn((n, 2), |(r, c)| (r + c) as f64);
    let g = AttributedGraph::from_edges((1..n).map(|l| (0, l)), x, None).unwrap();
    let adj = adjacency_lists(&g);
    for seed in 0..200 {
        for k in [2, 4, 6] {
            let cfg = RwrConfig::new(k);
            let start = (seed as usize) % n;
            let got = rwr_sample(&g, start, &cfg, &mut rng(seed)).unwrap();
            let want = replay(&adj, start, &cfg, &mut rng(seed));
            assert_eq!(got, want);
            if start != 0 {
                assert_eq!(got[1], 0, "a leaf's first new node is the hub");
            }
        }
    }
}

#[test]
fn random_graph_replay() {
    for seed in 0..300 {
        let mut r = rng(seed);
        let g = random_graph(r.random_range(2..15), 2, r.random_range(0.0..0.5), &mut r);
        let cfg = RwrConfig {
            subgraph_size: r.random_range(2..6),
            restart_prob: r.random_range(0.05..0.9),
            max_steps: r.random_range(5..60),
        };
        let start = r.random_range(0..g.num_nodes());
        let got = rwr_sample(&g, start, &cfg, &mut rng(seed + 10_000)).unwrap();
        assert_eq!(got, replay(&adjacency_lists(&g), start, &cfg, &mut rng(seed + 10_000)));
    }
}

#[test]
fn outputs_are_reachable_or_padding() {
    for seed in 0..500 {
        let mut r = rng(seed);
        let g = random_graph(r.random_range(1..20), 3, r.random_range(0.0..0.3), &mut r);
        let k = r.random_range(2..8);
        let start = r.random_range(0..g.num_nodes());
        let ids = rwr_sample(&g, start, &RwrConfig::new(k), &mut r).unwrap();
        assert_eq!(ids.len(), k);
        assert_eq!(ids[0], start);
        let reach = reachable(&g, start);
        assert!(ids.iter().all(|v| reach.contains(v)));
        let distinct: HashSet<_> = ids.iter().collect();
        let non_pad = ids.iter().skip(1).filter(|&&v| v != start).count();
        assert_eq!(distinct.len(), non_pad + 1, "no repeats apart from padding");
    }
}

#[test]
fn isolated_target_is_all_padding_and_zeroed() {
    let x = Array2::from_elem((3, 2), 4.0);
    let g = AttributedGraph::from_edges([(1, 2)], x, None).unwrap();
    let sub = sample_subgraph(&g, 0, &RwrConfig::new(4), &mut rng(0)).unwrap();
    assert_eq!(sub.node_ids, vec![0; 4]);
    assert!(sub.local_attributes.iter().all(|&v| v == 0.0));
}

#[test]
fn pairs_have_masked_targets_and_both_polarities() {
    let mut r = rng(1);
    let g = random_graph(12, 3, 0.3, &mut r);
    for mode in [NegativeMode::Shift, NegativeMode::Fresh] {
        let batch: Vec<usize> = (0..12).collect();
        let pairs = build_pairs(&g, &batch, &RwrConfig::new(4), 77, mode).unwrap();
        assert_eq!(pairs.len(), 24);
        for (i, p) in pairs.iter().enumerate() {
            assert!(p.subgraph.local_attributes.row(0).iter().all(|&v| v == 0.0));
            let expected = if i < 12 { Polarity::Positive } else { Polarity::Negative };
            assert_eq!(p.polarity, expected);
            assert_eq!(p.target, batch[i % 12]);
            match p.polarity {
                Polarity::Positive => assert_eq!(p.subgraph.target(), p.target),
                Polarity::Negative => assert_eq!(p.subgraph.target(), batch[(i % 12 + 1) % 12]),
            }
        }
    }
}

#[test]
fn epoch_plan_partitions_nodes() {
    for seed in 0..200 {
        let mut r = rng(seed);
        let n = r.random_range(2..200);
        let bs = r.random_range(2..50);
        let plan = EpochPlan::new(n, bs, &mut r).unwrap();
        let mut all: Vec<usize> = plan.batches.iter().flatten().copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..n).collect::<Vec<_>>());
        assert!(plan.batches.iter().all(|b| b.len() >= 2));
        if bs > 2 || n % 2 == 0 {
            assert!(plan.batches.iter().all(|b| b.len() <= bs));
        }
    }
}
