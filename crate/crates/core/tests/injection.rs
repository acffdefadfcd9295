mod common;

use std::collections::HashSet;

use common::*;
use dslad::graph::AttributedGraph;
use dslad::injector::{inject, InjectionConfig};
use ndarray::Array2;
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn donors_match_brute_force_replay() {
    for seed in 0..50 {
        let mut r = rng(seed);
        let g = random_graph(20, 4, 0.2, &mut r);
        let cfg = InjectionConfig {
            clique_count: 0,
            attr_anomaly_count: 3,
            candidate_pool: 5,
            seed,
            ..Default::default()
        };
        let (out, labels, report) = inject(&g, &cfg).unwrap();

        let mut replay = ChaCha8Rng::seed_from_u64(seed);
        let chosen = index::sample(&mut replay, 20, 3).into_vec();
        assert_eq!(report.attribute_nodes, chosen);
        for (i, &v) in chosen.iter().enumerate() {
            let candidates: Vec<usize> = index::sample(&mut replay, 19, 5)
                .into_iter()
                .map(|c| if c >= v { c + 1 } else { c })
                .collect();
            let dist = |u: usize| {
                let d = &g.attribute_row(v) - &g.attribute_row(u);
                d.dot(&d)
            };
            let best = candidates
                .iter()
                .copied()
                .fold(None::<usize>, |b, u| match b {
                    Some(b) if dist(b) >= dist(u) => Some(b),
                    _ => Some(u),
                })
                .unwrap();
            assert_eq!(report.donors[i], best);
            assert_eq!(out.attribute_row(v), g.attribute_row(best));
            assert_eq!(labels[v], 1);
        }
        assert_eq!(labels.iter().filter(|&&l| l == 1).count(), 3);
        assert_eq!(out.num_edges(), g.num_edges());
    }
}

#[test]
fn two_cliques_of_fifteen_on_empty_graph() {
    let x = Array2::from_shape_fn((100, 3), |(r, c)| (r * c) as f64);
    let g = AttributedGraph::from_edges(std::iter::empty(), x, None).unwrap();
    let cfg = InjectionConfig {
        clique_count: 2,
        clique_size: 15,
        seed: 4,
        ..Default::default()
    };
    let (out, labels, report) = inject(&g, &cfg).unwrap();
    assert_eq!(report.edges_added, 210);
    assert_eq!(out.num_edges(), 210);
    assert_eq!(labels.iter().filter(|&&l| l == 1).count(), 30);
    for &v in &report.structural_nodes {
        assert_eq!(out.degree(v).unwrap(), 14);
    }
}

#[test]
fn clique_edges_counted_against_existing_edges() {
    for seed in 0..20 {
        let mut r = rng(seed);
        let g = random_graph(60, 3, 0.1, &mut r);
        let cfg = InjectionConfig {
            clique_count: 2,
            clique_size: 15,
            attr_anomaly_count: 10,
            candidate_pool: 50,
            seed,
        };
        let (out, labels, report) = inject(&g, &cfg).unwrap();
        assert_eq!(report.edges_before, g.num_edges());
        assert_eq!(report.edges_after, report.edges_before + report.edges_added);
        assert_eq!(out.num_edges(), report.edges_after);
        assert!(report.edges_added <= 210);
        for group in report.structural_nodes.chunks(15) {
            for &u in group {
                for &v in group {
                    assert!(u == v || out.has_edge(u, v));
                }
            }
        }
        let s: HashSet<_> = report.structural_nodes.iter().collect();
        assert!(report.attribute_nodes.iter().all(|v| !s.contains(v)));
        assert_eq!(labels.iter().filter(|&&l| l == 1).count(), 40);
        assert_eq!(out.labels().unwrap(), labels.as_slice());
    }
}

#[test]
fn same_seed_same_result() {
    let g = random_graph(40, 3, 0.1, &mut rng(0));
    let cfg = InjectionConfig::balanced(20, 5, 8).unwrap();
    let a = inject(&g, &cfg).unwrap();
    let b = inject(&g, &cfg).unwrap();
    assert_eq!(a.0, b.0);
    assert_eq!(a.2, b.2);
}
