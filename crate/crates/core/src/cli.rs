//! The `dslad` command-line tool.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::parser::ValueSource;
use clap::{Arg, ArgMatches, Args, Command as ClapCommand, FromArgMatches, Parser, Subcommand};

use crate::config::{RunConfig, KEYS};
use crate::error::{Error, Result};
use crate::eval::{evaluate, metrics_json, roc_auc, run_ablation, run_sweep, write_summary_csv, write_sweep_csv};
use crate::graph::{load_graph, read_labels, write_with};
use crate::injector::inject;
use crate::model::Dslad;
use crate::scoring::{read_final_scores, score_all, write_scores_csv};
use crate::synthetic::gen_synthetic;
use crate::trainer::{train, EpochLoss};

#[derive(Debug, Parser)]
#[command(name = "dslad", version, about = "Self-supervised anomaly detection on attributed graphs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a community-structured synthetic graph.
    GenSynthetic(RunArgs),
    /// Inject clique and attribute anomalies into a graph.
    Inject(RunArgs),
    /// Train a model and write a checkpoint.
    Train(RunArgs),
    /// Score every node with a trained checkpoint.
    Score(RunArgs),
    /// ROC-AUC of a scores file, or train-and-score over several seeds.
    Eval(RunArgs),
    /// Compare ablation variants over several seeds.
    Ablate(RunArgs),
    /// Sweep one hyperparameter over several seeds.
    Sweep(RunArgs),
}

impl Command {
    fn parts(&self) -> (&'static str, &RunArgs) {
        match self {
            Command::GenSynthetic(a) => ("gen-synthetic", a),
            Command::Inject(a) => ("inject", a),
            Command::Train(a) => ("train", a),
            Command::Score(a) => ("score", a),
            Command::Eval(a) => ("eval", a),
            Command::Ablate(a) => ("ablate", a),
            Command::Sweep(a) => ("sweep", a),
        }
    }
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Flat `key = value` config file; flags take precedence.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Directory receiving every output.
    #[arg(long, value_name = "DIR", default_value = "out")]
    pub out_dir: PathBuf,
    /// Worker threads for parallel scoring and evaluation; 0 uses all cores.
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,
    #[command(flatten)]
    pub keys: KeyFlags,
}

/// One `--<key> <value>` flag per config key, holding only the values
/// given on the command line.
#[derive(Debug, Clone, Default)]
pub struct KeyFlags(pub Vec<(&'static str, String)>);

impl FromArgMatches for KeyFlags {
    fn from_arg_matches(m: &ArgMatches) -> std::result::Result<Self, clap::Error> {
        let mut flags = Self::default();
        flags.update_from_arg_matches(m)?;
        Ok(flags)
    }

    fn update_from_arg_matches(&mut self, m: &ArgMatches) -> std::result::Result<(), clap::Error> {
        for &(key, _) in KEYS {
            if m.value_source(key) == Some(ValueSource::CommandLine) {
                if let Some(v) = m.get_one::<String>(key) {
                    self.0.retain(|(k, _)| *k != key);
                    self.0.push((key, v.clone()));
                }
            }
        }
        Ok(())
    }
}

impl Args for KeyFlags {
    fn augment_args(cmd: ClapCommand) -> ClapCommand {
        let defaults = RunConfig::default();
        KEYS.iter().fold(cmd.next_help_heading("Config keys"), |cmd, &(key, help)| {
            let default = defaults.get(key).unwrap_or_default();
            let shown = if default.is_empty() { "none".to_string() } else { default };
            cmd.arg(
                Arg::new(key)
                    .long(key)
                    .value_name("VALUE")
                    .help(format!("{help} [default: {shown}]")),
            )
        })
    }

    fn augment_args_for_update(cmd: ClapCommand) -> ClapCommand {
        Self::augment_args(cmd)
    }
}

impl RunArgs {
    /// Defaults, then `DSLAD_SEED`, then the config file, then flags.
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = RunConfig::from_env()?;
        if let Some(path) = &self.config {
            cfg.apply_file(path)?;
        }
        for (k, v) in &self.keys.0 {
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Parses the process arguments, runs the command and maps the outcome to
/// an exit code: 0 success, 1 usage or config error, 2 runtime error.
pub fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { 1 } else { 2 })
        }
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    let (name, args) = cli.command.parts();
    let cfg = args.resolve()?;
    if args.jobs > 0 {
        // Fails only if a pool already exists, which is harmless.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(args.jobs).build_global();
    }
    let out = args.out_dir.as_path();
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    match &cli.command {
        Command::GenSynthetic(_) => cmd_gen_synthetic(&cfg, out)?,
        Command::Inject(_) => cmd_inject(&cfg, out)?,
        Command::Train(_) => cmd_train(&cfg, out)?,
        Command::Score(_) => cmd_score(&cfg, out)?,
        Command::Eval(_) => cmd_eval(&cfg, out)?,
        Command::Ablate(_) => cmd_ablate(&cfg, out)?,
        Command::Sweep(_) => cmd_sweep(&cfg, out)?,
    }
    write_json(&out.join("manifest.json"), &cfg.manifest(name))
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    write_with(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value).map_err(std::io::Error::other)?;
        w.write_all(b"\n")
    })
}

fn graph(cfg: &RunConfig, labels: bool) -> Result<crate::AttributedGraph> {
    let edges = RunConfig::required("edges", &cfg.edges)?;
    let features = RunConfig::required("features", &cfg.features)?;
    let labels = if labels {
        Some(RunConfig::required("labels", &cfg.labels)?)
    } else {
        cfg.labels.as_deref()
    };
    load_graph(edges, features, labels)
}

pub fn cmd_gen_synthetic(cfg: &RunConfig, out: &Path) -> Result<()> {
    let s = gen_synthetic::<f64>(&cfg.synthetic())?;
    s.graph.write_edges(out.join("edges.tsv"))?;
    s.graph.write_features(out.join("features.csv"))?;
    println!(
        "generated {} nodes, {} edges",
        s.graph.num_nodes(),
        s.graph.num_edges()
    );
    Ok(())
}

pub fn cmd_inject(cfg: &RunConfig, out: &Path) -> Result<()> {
    let g = graph(cfg, false)?;
    let (g, _, report) = inject(&g, &cfg.injection())?;
    g.write_dir(out)?;
    let report = serde_json::to_value(&report).map_err(|e| Error::Validation(e.to_string()))?;
    write_json(&out.join("report.json"), &report)?;
    println!(
        "injected {} structural and {} attribute anomalies",
        cfg.injection.structural_total(),
        cfg.injection.attr_anomaly_count
    );
    Ok(())
}

fn write_history(path: &Path, history: &[EpochLoss]) -> Result<()> {
    write_with(path, |w| {
        writeln!(w, "epoch,beta,pi,l_con,l_rec,l_cl,total")?;
        for h in history {
            writeln!(
                w,
                "{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                h.epoch, h.beta, h.pi, h.l_con, h.l_rec, h.l_cl, h.total
            )?;
        }
        Ok(())
    })
}

pub fn cmd_train(cfg: &RunConfig, out: &Path) -> Result<()> {
    let g = graph(cfg, false)?;
    let trained = train(&g, &cfg.model, &cfg.rwr, cfg.seed)?;
    trained.model.save(out.join("checkpoint.txt"))?;
    write_history(&out.join("loss_history.csv"), &trained.history)?;
    if let Some(last) = trained.history.last() {
        println!("epoch {} total loss {:.6}", last.epoch, last.total);
    }
    Ok(())
}

pub fn cmd_score(cfg: &RunConfig, out: &Path) -> Result<()> {
    let g = graph(cfg, false)?;
    let model = Dslad::<f64>::load(RunConfig::required("checkpoint", &cfg.checkpoint)?)?;
    let table = score_all(&model, &g, &cfg.rwr, cfg.rounds, cfg.seed, cfg.minmax)?;
    write_scores_csv(out.join("scores.csv"), &table)?;
    if let Some(labels) = g.labels() {
        println!("auc={:?}", roc_auc(&table.s_final, labels)?);
    }
    Ok(())
}

pub fn cmd_eval(cfg: &RunConfig, out: &Path) -> Result<()> {
    let metrics = if let Some(scores) = &cfg.scores {
        let scores = read_final_scores(scores)?;
        let labels = read_labels(RunConfig::required("labels", &cfg.labels)?)?;
        let auc = roc_auc(&scores, &labels)?;
        println!("auc={auc:?}");
        let n_anomalies = labels.iter().filter(|&&l| l == 1).count();
        serde_json::json!({
            "scores": {
                "auc": auc,
                "n_anomalies": n_anomalies,
                "n_normal": labels.len() - n_anomalies,
            }
        })
    } else {
        let g = graph(cfg, true)?;
        let r = evaluate(&g, &cfg.experiment(), &cfg.seed_list()?)?;
        println!("auc={:?} std={:?}", r.auc_mean, r.auc_std);
        metrics_json([(cfg.model.variant.to_string(), &r)])
    };
    write_json(&out.join("metrics.json"), &metrics)
}

pub fn cmd_ablate(cfg: &RunConfig, out: &Path) -> Result<()> {
    let g = graph(cfg, true)?;
    let rows: Vec<(String, _)> = run_ablation(&g, &cfg.experiment(), &cfg.variant_list()?, &cfg.seed_list()?)?
        .into_iter()
        .map(|(v, r)| (v.to_string(), r))
        .collect();
    for (v, r) in &rows {
        println!("{v}: auc={:?} std={:?}", r.auc_mean, r.auc_std);
    }
    write_summary_csv(out.join("ablation.csv"), "variant", &rows)?;
    write_json(&out.join("metrics.json"), &metrics_json(rows.iter().map(|(k, r)| (k.clone(), r))))
}

pub fn cmd_sweep(cfg: &RunConfig, out: &Path) -> Result<()> {
    let g = graph(cfg, true)?;
    let axis = cfg.sweep_axis()?;
    let rows = run_sweep(&g, &cfg.experiment(), axis, &cfg.value_list()?, &cfg.seed_list()?)?;
    for (v, r) in &rows {
        println!("{axis}={v}: auc={:?} std={:?}", r.auc_mean, r.auc_std);
    }
    write_sweep_csv(out.join("sweep.csv"), &rows)?;
    write_json(
        &out.join("metrics.json"),
        &metrics_json(rows.iter().map(|(k, r)| (format!("{axis}={k}"), r))),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn flags_override_and_unknown_flags_fail() {
        let cli = Cli::try_parse_from(["dslad", "train", "--alpha", "0.3", "--epochs", "2"]).unwrap();
        let (_, args) = cli.command.parts();
        let cfg = args.resolve().unwrap();
        assert_eq!(cfg.model.alpha, 0.3);
        assert_eq!(cfg.model.epochs, 2);
        assert!(Cli::try_parse_from(["dslad", "train", "--alpah", "0.3"]).is_err());
    }

    #[test]
    fn help_lists_every_key_with_default() {
        let help = Cli::command()
            .find_subcommand_mut("score")
            .unwrap()
            .render_long_help()
            .to_string();
        for (k, _) in KEYS {
            assert!(help.contains(&format!("--{k}")), "missing {k}");
        }
        assert!(help.contains("[default: 256]"));
    }
}
