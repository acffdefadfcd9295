//! Run configuration: a flat `key = value` file overridden by flags.

use std::fs;
use std::path::{Path, PathBuf};

use serde_json::json;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::eval::{expand_values, Experiment, SweepAxis};
use crate::injector::InjectionConfig;
use crate::model::{parse_value, AblationVariant, ModelConfig};
use crate::sampler::RwrConfig;
use crate::scoring::MinMaxMode;
use crate::synthetic::SyntheticConfig;

/// Environment variable consulted when no seed is configured.
pub const SEED_ENV: &str = "DSLAD_SEED";

/// Every config key with a one-line description, in manifest order.
pub const KEYS: &[(&str, &str)] = &[
    ("edges", "edge list, one `u<TAB>v` pair per line"),
    ("features", "comma-separated feature matrix, one row per node"),
    ("labels", "0/1 anomaly labels, one per line"),
    ("checkpoint", "model checkpoint to score with"),
    ("scores", "scores.csv to evaluate"),
    ("n_nodes", "synthetic graph size"),
    ("n_features", "synthetic feature dimension"),
    ("communities", "synthetic community count"),
    ("clique_count", "number of injected cliques"),
    ("clique_size", "nodes per injected clique"),
    ("attr_anomaly_count", "number of attribute anomalies"),
    ("candidate_pool", "candidates examined per attribute anomaly"),
    ("subgraph_size", "RWR subgraph size K"),
    ("restart_prob", "RWR restart probability"),
    ("max_steps", "RWR step cap; auto means 50 * subgraph_size"),
    ("hidden_dim", "embedding dimension"),
    ("encoder_layers", "GCN layers in the encoder and in each autoencoder half"),
    ("alpha", "context weight in the loss and the fused score"),
    ("lambda", "contrastive loss weight"),
    ("tau", "contrastive temperature"),
    ("aug", "contrastive positive: local_aug or global_aug"),
    ("pi_kind", "schedule: constant, linear, one_minus_exp, sigmoid or tanh"),
    ("epochs", "training epochs"),
    ("batch_size", "targets per batch"),
    ("learning_rate", "Adam step size"),
    ("normalize_embeddings", "L2-normalize embeddings in the contrastive loss"),
    ("negative_mode", "negative subgraphs: shift or fresh"),
    ("variant", "ablation variant: full, no_cl, no_con or no_rec"),
    ("rounds", "inference rounds R"),
    ("minmax", "score scaling: per_round, pooled or average_first"),
    ("seed", "master seed (falls back to DSLAD_SEED)"),
    ("seeds", "seed list for eval, ablate and sweep, e.g. 0..7 or 1,5,9"),
    ("variants", "comma-separated ablation variants"),
    ("axis", "sweep axis: K, alpha, lambda, pi_kind or aug"),
    ("values", "sweep values, e.g. 2..10 or 0.2,0.4"),
];

/// Fully resolved settings of one command invocation.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub edges: Option<PathBuf>,
    pub features: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub scores: Option<PathBuf>,
    pub n_nodes: usize,
    pub n_features: usize,
    pub communities: usize,
    pub injection: InjectionConfig,
    pub rwr: RwrConfig,
    /// `None` tracks `50 * subgraph_size`.
    pub max_steps: Option<usize>,
    pub model: ModelConfig,
    pub rounds: usize,
    pub minmax: MinMaxMode,
    pub seed: u64,
    pub seeds: String,
    pub variants: String,
    pub axis: String,
    pub values: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            edges: None,
            features: None,
            labels: None,
            checkpoint: None,
            scores: None,
            n_nodes: 500,
            n_features: 50,
            communities: 4,
            injection: InjectionConfig {
                clique_count: 5,
                attr_anomaly_count: 75,
                ..InjectionConfig::default()
            },
            rwr: RwrConfig::default(),
            max_steps: None,
            model: ModelConfig::default(),
            rounds: 256,
            minmax: MinMaxMode::PerRound,
            seed: 0,
            seeds: "0..7".into(),
            variants: "full,no_cl,no_con,no_rec".into(),
            axis: "K".into(),
            values: "2..10".into(),
        }
    }
}

fn path_value(v: &str) -> Option<PathBuf> {
    (!v.is_empty()).then(|| PathBuf::from(v))
}

fn show_path(p: &Option<PathBuf>) -> String {
    p.as_ref().map(|p| p.display().to_string()).unwrap_or_default()
}

impl RunConfig {
    /// Defaults, with the seed taken from `DSLAD_SEED` when it is set.
    pub fn from_env() -> Result<Self> {
        let mut c = Self::default();
        if let Ok(v) = std::env::var(SEED_ENV) {
            c.seed = parse_value(SEED_ENV, &v)?;
        }
        Ok(c)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        if self.model.set(key, value)? {
            return Ok(());
        }
        match key {
            "edges" => self.edges = path_value(value),
            "features" => self.features = path_value(value),
            "labels" => self.labels = path_value(value),
            "checkpoint" => self.checkpoint = path_value(value),
            "scores" => self.scores = path_value(value),
            "n_nodes" => self.n_nodes = parse_value(key, value)?,
            "n_features" => self.n_features = parse_value(key, value)?,
            "communities" => self.communities = parse_value(key, value)?,
            "clique_count" => self.injection.clique_count = parse_value(key, value)?,
            "clique_size" => self.injection.clique_size = parse_value(key, value)?,
            "attr_anomaly_count" => self.injection.attr_anomaly_count = parse_value(key, value)?,
            "candidate_pool" => self.injection.candidate_pool = parse_value(key, value)?,
            "subgraph_size" => self.rwr.subgraph_size = parse_value(key, value)?,
            "restart_prob" => self.rwr.restart_prob = parse_value(key, value)?,
            "max_steps" => {
                self.max_steps = match value {
                    "auto" => None,
                    v => Some(parse_value(key, v)?),
                }
            }
            "rounds" => self.rounds = parse_value(key, value)?,
            "minmax" => self.minmax = value.parse()?,
            "seed" => self.seed = parse_value(key, value)?,
            "seeds" => self.seeds = value.into(),
            "variants" => self.variants = value.into(),
            "axis" => self.axis = value.into(),
            "values" => self.values = value.into(),
            other => return Err(Error::Config(format!("unknown config key {other:?}"))),
        }
        self.rwr.max_steps = self.max_steps.unwrap_or(50 * self.rwr.subgraph_size);
        Ok(())
    }

    /// Applies a `key = value` file. Blank lines and `#` comments are
    /// ignored.
    pub fn apply_file(&mut self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("{}:{}: expected `key = value`", path.display(), i + 1))
            })?;
            self.set(k.trim(), v.trim())
                .map_err(|e| Error::Config(format!("{}:{}: {e}", path.display(), i + 1)))?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.rwr.validate()?;
        self.model.validate()?;
        if self.rounds == 0 {
            return Err(Error::Config("rounds must be at least 1".into()));
        }
        Ok(())
    }

    /// Every key in [`KEYS`] order with its value in text form.
    pub fn to_pairs(&self) -> Vec<(&'static str, String)> {
        let mut all: Vec<(&'static str, String)> = vec![
            ("edges", show_path(&self.edges)),
            ("features", show_path(&self.features)),
            ("labels", show_path(&self.labels)),
            ("checkpoint", show_path(&self.checkpoint)),
            ("scores", show_path(&self.scores)),
            ("n_nodes", self.n_nodes.to_string()),
            ("n_features", self.n_features.to_string()),
            ("communities", self.communities.to_string()),
            ("clique_count", self.injection.clique_count.to_string()),
            ("clique_size", self.injection.clique_size.to_string()),
            ("attr_anomaly_count", self.injection.attr_anomaly_count.to_string()),
            ("candidate_pool", self.injection.candidate_pool.to_string()),
            ("subgraph_size", self.rwr.subgraph_size.to_string()),
            ("restart_prob", self.rwr.restart_prob.to_string()),
            (
                "max_steps",
                self.max_steps.map_or_else(|| "auto".into(), |m| m.to_string()),
            ),
        ];
        all.extend(self.model.to_pairs());
        all.extend([
            ("rounds", self.rounds.to_string()),
            ("minmax", self.minmax.to_string()),
            ("seed", self.seed.to_string()),
            ("seeds", self.seeds.clone()),
            ("variants", self.variants.clone()),
            ("axis", self.axis.clone()),
            ("values", self.values.clone()),
        ]);
        all
    }

    pub fn get(&self, key: &str) -> Option<String> {
        self.to_pairs().into_iter().find(|(k, _)| *k == key).map(|(_, v)| v)
    }

    pub fn synthetic(&self) -> SyntheticConfig {
        SyntheticConfig::new(self.n_nodes, self.n_features, self.communities, self.seed)
    }

    pub fn injection(&self) -> InjectionConfig {
        InjectionConfig {
            seed: self.seed,
            ..self.injection
        }
    }

    pub fn experiment(&self) -> Experiment {
        Experiment {
            model: self.model.clone(),
            rwr: self.rwr,
            rounds: self.rounds,
            minmax: self.minmax,
        }
    }

    pub fn seed_list(&self) -> Result<Vec<u64>> {
        let seeds = expand_values(&self.seeds)?
            .iter()
            .map(|s| parse_value("seeds", s))
            .collect::<Result<Vec<u64>>>()?;
        if seeds.is_empty() {
            return Err(Error::Config("seeds is empty".into()));
        }
        Ok(seeds)
    }

    pub fn variant_list(&self) -> Result<Vec<AblationVariant>> {
        self.variants
            .split(',')
            .map(str::trim)
            .filter(|v| !v.is_empty())
            .map(str::parse)
            .collect()
    }

    pub fn sweep_axis(&self) -> Result<SweepAxis> {
        self.axis.parse()
    }

    pub fn value_list(&self) -> Result<Vec<String>> {
        expand_values(&self.values)
    }

    /// Path-valued key that the current command cannot run without.
    pub fn required<'a>(key: &str, value: &'a Option<PathBuf>) -> Result<&'a Path> {
        value
            .as_deref()
            .ok_or_else(|| Error::Config(format!("{key} is required")))
    }

    /// JSON manifest: command, resolved keys, seed and a SHA-256 over the
    /// canonical `key = value` text of the configuration.
    pub fn manifest(&self, command: &str) -> serde_json::Value {
        let pairs = self.to_pairs();
        let canonical: String = pairs.iter().map(|(k, v)| format!("{k} = {v}\n")).collect();
        let digest = Sha256::digest(format!("command = {command}\n{canonical}").as_bytes());
        let hash: String = digest.iter().map(|b| format!("{b:02x}")).collect();
        let config: serde_json::Map<String, serde_json::Value> =
            pairs.into_iter().map(|(k, v)| (k.to_string(), json!(v))).collect();
        json!({
            "command": command,
            "seed": self.seed,
            "config": config,
            "config_sha256": hash,
        })
    }
}
