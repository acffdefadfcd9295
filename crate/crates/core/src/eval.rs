//! ROC-AUC, repeated-seed evaluation, ablations and hyperparameter sweeps.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::{write_with, AttributedGraph};
use crate::model::{AblationVariant, ModelConfig};
use crate::sampler::RwrConfig;
use crate::scalar::Scalar;
use crate::scoring::{score_all, MinMaxMode};
use crate::trainer::train;

/// Area under the ROC curve via the Mann-Whitney statistic; tied scores
/// share their average rank. Label 1 marks the positive (anomalous) class.
pub fn roc_auc<T: Scalar>(scores: &[T], labels: &[u8]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Eval(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Eval("NaN score".into()));
    }
    let n_pos = labels.iter().filter(|&&l| l == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::Eval("ROC-AUC needs both anomalous and normal nodes".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).expect("no NaN"));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // ranks i+1 ..= j+1 share their mean
        let avg = (i + j + 2) as f64 / 2.0;
        rank_sum += avg * order[i..=j].iter().filter(|&&k| labels[k] == 1).count() as f64;
        i = j + 1;
    }
    let (p, q) = (n_pos as f64, n_neg as f64);
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * q))
}

/// Everything needed to train and score once, apart from the seed.
#[derive(Debug, Clone, PartialEq)]
pub struct Experiment {
    pub model: ModelConfig,
    pub rwr: RwrConfig,
    pub rounds: usize,
    pub minmax: MinMaxMode,
}

impl Default for Experiment {
    fn default() -> Self {
        Self {
            model: ModelConfig::default(),
            rwr: RwrConfig::default(),
            rounds: 256,
            minmax: MinMaxMode::PerRound,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalResult {
    pub auc_mean: f64,
    pub auc_std: f64,
    pub aucs: Vec<f64>,
    pub seeds: Vec<u64>,
    pub n_anomalies: usize,
    pub n_normal: usize,
    pub runtime_s: f64,
}

impl EvalResult {
    fn from_runs(seeds: &[u64], aucs: Vec<f64>, labels: &[u8], runtime_s: f64) -> Self {
        let n = aucs.len() as f64;
        let mean = aucs.iter().sum::<f64>() / n;
        let std = if aucs.len() > 1 {
            (aucs.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        let n_anomalies = labels.iter().filter(|&&l| l == 1).count();
        Self {
            auc_mean: mean,
            auc_std: std,
            aucs,
            seeds: seeds.to_vec(),
            n_anomalies,
            n_normal: labels.len() - n_anomalies,
            runtime_s,
        }
    }
}

fn labels_of<T: Scalar>(graph: &AttributedGraph<T>) -> Result<&[u8]> {
    graph
        .labels()
        .ok_or_else(|| Error::Eval("evaluation needs a labeled graph".into()))
}

/// Trains with `seed`, scores with `seed` and returns the AUC.
pub fn evaluate_seed<T: Scalar>(graph: &AttributedGraph<T>, exp: &Experiment, seed: u64) -> Result<f64> {
    let labels = labels_of(graph)?;
    let trained = train(graph, &exp.model, &exp.rwr, seed)?;
    let table = score_all(&trained.model, graph, &exp.rwr, exp.rounds, seed, exp.minmax)?;
    roc_auc(&table.s_final, labels)
}

/// Runs every `(experiment, seed)` combination in parallel and summarizes
/// each experiment over its seeds.
pub fn evaluate_many<T: Scalar>(
    graph: &AttributedGraph<T>,
    exps: &[Experiment],
    seeds: &[u64],
) -> Result<Vec<EvalResult>> {
    let labels = labels_of(graph)?;
    if seeds.is_empty() {
        return Err(Error::Config("at least one seed is required".into()));
    }
    let jobs: Vec<(usize, u64)> = (0..exps.len())
        .flat_map(|e| seeds.iter().map(move |&s| (e, s)))
        .collect();
    let runs = jobs
        .par_iter()
        .map(|&(e, s)| {
            let start = Instant::now();
            evaluate_seed(graph, &exps[e], s).map(|auc| (auc, start.elapsed().as_secs_f64()))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(runs
        .chunks(seeds.len())
        .map(|chunk| {
            let aucs = chunk.iter().map(|r| r.0).collect();
            let runtime = chunk.iter().map(|r| r.1).sum();
            EvalResult::from_runs(seeds, aucs, labels, runtime)
        })
        .collect())
}

pub fn evaluate<T: Scalar>(graph: &AttributedGraph<T>, exp: &Experiment, seeds: &[u64]) -> Result<EvalResult> {
    Ok(evaluate_many(graph, std::slice::from_ref(exp), seeds)?.remove(0))
}

/// Evaluates each ablation variant of `base` over `seeds`.
pub fn run_ablation<T: Scalar>(
    graph: &AttributedGraph<T>,
    base: &Experiment,
    variants: &[AblationVariant],
    seeds: &[u64],
) -> Result<Vec<(AblationVariant, EvalResult)>> {
    let exps: Vec<Experiment> = variants
        .iter()
        .map(|&v| {
            let mut e = base.clone();
            e.model.variant = v;
            e
        })
        .collect();
    Ok(variants.iter().copied().zip(evaluate_many(graph, &exps, seeds)?).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    SubgraphSize,
    Alpha,
    Lambda,
    PiKind,
    Aug,
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "K" | "k" | "subgraph_size" => Ok(Self::SubgraphSize),
            "alpha" => Ok(Self::Alpha),
            "lambda" => Ok(Self::Lambda),
            "pi_kind" | "pi" => Ok(Self::PiKind),
            "aug" => Ok(Self::Aug),
            other => Err(Error::Config(format!(
                "unknown sweep axis {other:?}; expected K, alpha, lambda, pi_kind or aug"
            ))),
        }
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::SubgraphSize => "K",
            Self::Alpha => "alpha",
            Self::Lambda => "lambda",
            Self::PiKind => "pi_kind",
            Self::Aug => "aug",
        })
    }
}

fn parse_value<V: FromStr>(axis: SweepAxis, v: &str) -> Result<V> {
    v.trim()
        .parse()
        .map_err(|_| Error::Config(format!("bad {axis} value {v:?}")))
}

impl SweepAxis {
    /// `base` with this axis set to `value`.
    pub fn apply(self, base: &Experiment, value: &str) -> Result<Experiment> {
        let mut e = base.clone();
        match self {
            Self::SubgraphSize => {
                let k: usize = parse_value(self, value)?;
                e.rwr = RwrConfig {
                    subgraph_size: k,
                    max_steps: 50 * k,
                    ..e.rwr
                };
                e.rwr.validate()?;
            }
            Self::Alpha => e.model.alpha = parse_value(self, value)?,
            Self::Lambda => e.model.lambda = parse_value(self, value)?,
            Self::PiKind => e.model.pi_kind = value.trim().parse()?,
            Self::Aug => e.model.aug = value.trim().parse()?,
        }
        e.model.validate()?;
        Ok(e)
    }
}

/// Expands `a..b` integer ranges (inclusive) and comma lists.
pub fn expand_values(text: &str) -> Result<Vec<String>> {
    let mut out = Vec::new();
    for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        match part.split_once("..") {
            Some((a, b)) => {
                let bad = || Error::Config(format!("bad range {part:?}"));
                let a: i64 = a.trim().parse().map_err(|_| bad())?;
                let b: i64 = b.trim().parse().map_err(|_| bad())?;
                if a > b {
                    return Err(bad());
                }
                out.extend((a..=b).map(|v| v.to_string()));
            }
            None => out.push(part.to_string()),
        }
    }
    Ok(out)
}

/// One evaluation per value of `axis`.
pub fn run_sweep<T: Scalar>(
    graph: &AttributedGraph<T>,
    base: &Experiment,
    axis: SweepAxis,
    values: &[String],
    seeds: &[u64],
) -> Result<Vec<(String, EvalResult)>> {
    if values.is_empty() {
        return Err(Error::Config("sweep needs at least one value".into()));
    }
    let exps = values
        .iter()
        .map(|v| axis.apply(base, v))
        .collect::<Result<Vec<_>>>()?;
    Ok(values.iter().cloned().zip(evaluate_many(graph, &exps, seeds)?).collect())
}

/// `value,mean_auc,std_auc` rows.
pub fn write_sweep_csv(path: impl AsRef<Path>, rows: &[(String, EvalResult)]) -> Result<()> {
    write_summary_csv(path, "value", rows)
}

/// `<key>,mean_auc,std_auc` rows.
pub fn write_summary_csv(path: impl AsRef<Path>, key: &str, rows: &[(String, EvalResult)]) -> Result<()> {
    write_with(path.as_ref(), |w| {
        writeln!(w, "{key},mean_auc,std_auc")?;
        for (v, r) in rows {
            writeln!(w, "{v},{:.16e},{:.16e}", r.auc_mean, r.auc_std)?;
        }
        Ok(())
    })
}

/// `{key -> {auc_mean, auc_std, seeds, runtime_s, ...}}`.
pub fn metrics_json<'a>(rows: impl IntoIterator<Item = (String, &'a EvalResult)>) -> serde_json::Value {
    let map = rows
        .into_iter()
        .map(|(k, r)| (k, serde_json::to_value(r).expect("serializable")))
        .collect::<serde_json::Map<_, _>>();
    serde_json::Value::Object(map)
}
