//! Self-supervised anomaly detection on attributed graphs.
//!
//! Nodes are scored by how poorly they agree with subgraphs sampled around
//! them (context anomaly) and by how poorly their masked attributes can be
//! reconstructed from those subgraphs (reconstruction anomaly). Training
//! shifts weight from a contrastive representation objective to the
//! discrimination objectives as epochs progress.
//!
//! Numeric code is generic over [`Scalar`]; the aliases below fix it to
//! `f64`, which is what the command-line tool uses.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod error;
pub mod eval;
pub mod graph;
pub mod injector;
pub mod model;
pub mod rng;
pub mod sampler;
pub mod scalar;
pub mod scoring;
pub mod synthetic;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
pub use graph::{NodeId, SubgraphView};
pub use scalar::Scalar;
pub use tensor::{Adam, CsrMatrix, Gradients, Parameter, Tape, Tensor};

pub type AttributedGraph = graph::AttributedGraph<f64>;
pub type Model = model::Dslad<f64>;
pub type ModelParams = model::ModelParams<f64>;
pub type PairBatch = sampler::PairBatch<f64>;
pub type RoundScores = scoring::RoundScores<f64>;
pub type ScoreTable = scoring::ScoreTable<f64>;
pub type TrainOutput = trainer::TrainOutput<f64>;
