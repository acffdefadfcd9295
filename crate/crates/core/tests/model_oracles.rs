mod common;

use common::*;
use dslad::graph::AttributedGraph;
use dslad::model::{disc, loss_cl, loss_con, loss_rec, pi_schedule, readout, Augmentation, Dslad, ModelConfig, PiKind};
use dslad::sampler::{sample_subgraph, RwrConfig};
use ndarray::{array, Array2};
use rand::Rng;

fn close(a: &Array2<f64>, b: &Array2<f64>, tol: f64) -> bool {
    a.dim() == b.dim() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol * (1.0 + y.abs()))
}

#[test]
fn subgraph_passes_match_dense_oracle() {
    for seed in 0..30 {
        let mut r = rng(seed);
        let g = random_graph(12, 5, 0.3, &mut r);
        let cfg = ModelConfig {
            hidden_dim: 6,
            encoder_layers: r.random_range(1..4),
            ..Default::default()
        };
        let m = Dslad::<f64>::new(5, cfg, seed).unwrap();
        let k = r.random_range(2..7);
        let sub = sample_subgraph(&g, r.random_range(0..12), &RwrConfig::new(k), &mut r).unwrap();
        assert!(close(&m.embed_subgraph(&sub).unwrap(), &oracle_embed_subgraph(&m, &sub), 1e-12));
        assert!(close(&m.reconstruct(&sub).unwrap(), &oracle_reconstruct(&m, &sub), 1e-12));
    }
}

#[test]
fn positive_embeddings_match_oracle() {
    let mut r = rng(7);
    let g = random_graph(10, 4, 0.35, &mut r);
    let sub = sample_subgraph(&g, 3, &RwrConfig::new(4), &mut r).unwrap();
    for aug in [Augmentation::Local, Augmentation::Global] {
        let m = Dslad::<f64>::new(4, ModelConfig { hidden_dim: 5, aug, ..Default::default() }, 2).unwrap();
        let got = m.positive_embedding(3, &sub, &g).unwrap();
        let want = match aug {
            Augmentation::Local => oracle_readout(&oracle_embed_subgraph(&m, &sub)),
            Augmentation::Global => oracle_global_positive(&m, &g, 3),
        };
        for (a, b) in got.iter().zip(&want) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn single_node_graph_embedding_equals_node_embedding() {
    let g = AttributedGraph::from_edges(std::iter::empty(), array![[0.3, -1.2, 2.0]], None).unwrap();
    let m = Dslad::<f64>::new(3, ModelConfig { hidden_dim: 4, encoder_layers: 2, ..Default::default() }, 9).unwrap();
    let sub = g.induced_subgraph(&[0]).unwrap();
    let z = m.embed_subgraph(&sub).unwrap();
    let e = m.embed_node(g.attribute_row(0)).unwrap();
    for (a, b) in z.row(0).iter().zip(&e) {
        assert!((a - b).abs() < 1e-15);
    }
}

#[test]
fn spot_values() {
    let ln2 = std::f64::consts::LN_2;
    assert!((loss_con(&[0.5; 4], &[0.5; 4]) - ln2).abs() < 1e-12);
    let e = array![[1.0, 2.0], [-0.5, 0.25]];
    assert!((loss_cl(e.view(), e.view(), e.view(), 0.5) - ln2).abs() < 1e-12);
    let w = Array2::<f64>::zeros((2, 2));
    assert_eq!(disc(array![3.0, -1.0].view(), array![0.2, 7.0].view(), &w), 0.5);
    assert_eq!(pi_schedule(PiKind::Linear, 0.0), 0.0);
    assert_eq!(pi_schedule(PiKind::Linear, 1.0), 1.0);
}

#[test]
fn loss_cl_matches_textbook_form() {
    let mut r = rng(3);
    for _ in 0..50 {
        let n = r.random_range(1..6);
        let mut m = || Array2::<f64>::from_shape_fn((n, 4), |_| r.random_range(-1.0..1.0));
        let (e, p, q) = (m(), m(), m());
        let tau = 0.5_f64;
        let want: f64 = (0..n)
            .map(|i| {
                let a = (e.row(i).dot(&p.row(i)) / tau).exp();
                let b = (e.row(i).dot(&q.row(i)) / tau).exp();
                -(a / (a + b)).ln()
            })
            .sum::<f64>()
            / n as f64;
        assert!((loss_cl(e.view(), p.view(), q.view(), tau) - want).abs() < 1e-9);
    }
}

#[test]
fn loss_cl_is_stable_for_large_logits() {
    let e = array![[100.0_f64, 0.0]];
    let p = array![[-100.0, 0.0]];
    let q = array![[100.0, 0.0]];
    let l = loss_cl(e.view(), p.view(), q.view(), 0.5);
    assert!((l - 40000.0).abs() < 1e-6);
}

#[test]
fn reconstruction_and_readout_by_hand() {
    let u = array![[1.0, 2.0], [0.0, 0.0]];
    let x = array![[1.0, 0.0], [3.0, 4.0]];
    assert_eq!(loss_rec(u.view(), x.view()).unwrap(), (4.0 + 25.0) / 2.0);
    assert_eq!(loss_rec(x.view(), x.view()).unwrap(), 0.0);
    let z = array![[100.0, 100.0], [1.0, 2.0], [3.0, 4.0]];
    assert_eq!(readout(z.view(), 0).unwrap(), array![2.0, 3.0]);
    assert!(readout(z.slice(ndarray::s![0..1, ..]), 0).is_err());
}

#[test]
fn f32_model_tracks_f64() {
    let mut r = rng(5);
    let g = random_graph(8, 3, 0.4, &mut r);
    let sub = sample_subgraph(&g, 0, &RwrConfig::new(4), &mut r).unwrap();
    let cfg = ModelConfig { hidden_dim: 4, ..Default::default() };
    let m64 = Dslad::<f64>::new(3, cfg.clone(), 1).unwrap();
    let m32 = Dslad::<f32>::new(3, cfg, 1).unwrap();
    let sub32 = dslad::SubgraphView {
        node_ids: sub.node_ids.clone(),
        local_adjacency: sub.local_adjacency.clone(),
        local_attributes: sub.local_attributes.mapv(|v| v as f32),
    };
    let a = m64.reconstruct(&sub).unwrap();
    let b = m32.reconstruct(&sub32).unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert!((x - f64::from(*y)).abs() < 1e-4);
    }
}
