//! Per-node anomaly scores: raw context and reconstruction scores per
//! round, MinMax scaling, fusion, and averaging over rounds.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::{write_with, AttributedGraph};
use crate::model::{forward_batch, Dslad};
use crate::rng::{self, tag};
use crate::sampler::{EpochPlan, PairBatch, RwrConfig};
use crate::scalar::Scalar;
use crate::tensor::Tape;

/// When MinMax statistics are taken.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MinMaxMode {
    /// Scale and fuse each round, then average the fused scores.
    #[default]
    PerRound,
    /// Scale every round with min/max pooled over all rounds.
    Pooled,
    /// Average raw scores over rounds, then scale and fuse once.
    AverageFirst,
}

impl FromStr for MinMaxMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "per_round" => Ok(Self::PerRound),
            "pooled" => Ok(Self::Pooled),
            "average_first" => Ok(Self::AverageFirst),
            other => Err(Error::Config(format!(
                "unknown minmax mode {other:?}; expected per_round, pooled or average_first"
            ))),
        }
    }
}

impl fmt::Display for MinMaxMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::PerRound => "per_round",
            Self::Pooled => "pooled",
            Self::AverageFirst => "average_first",
        })
    }
}

/// Raw scores of one inference round.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundScores<T> {
    /// Negative-pair score minus positive-pair score, in (-1, 1).
    pub s_con: Vec<T>,
    /// Squared reconstruction error of the masked target.
    pub s_rec: Vec<T>,
}

/// Scores every node once.
///
/// The node order is shuffled with the `(seed, round)` stream and split
/// into batches of the model's batch size; negatives come from the next
/// target of the same batch. Node `v`'s subgraph is drawn from the stream
/// keyed by `(seed, round, v)`.
pub fn infer_round<T: Scalar>(
    model: &Dslad<T>,
    graph: &AttributedGraph<T>,
    rwr: &RwrConfig,
    seed: u64,
    round: u64,
) -> Result<RoundScores<T>> {
    let n = graph.num_nodes();
    let cfg = &model.config;
    let plan = EpochPlan::new(n, cfg.batch_size, &mut rng::stream(seed, &[tag::ROUND_ORDER, round]))?;
    let key = rng::mix(seed, &[tag::ROUND_SUBGRAPH, round]);
    let mut s_con = vec![T::zero(); n];
    let mut s_rec = vec![T::zero(); n];
    for targets in &plan.batches {
        let batch = PairBatch::sample(graph, targets, rwr, key, cfg.negative_mode)?;
        let tape = Tape::new();
        let p = model.params.bind_frozen(&tape)?;
        let out = forward_batch(&tape, &p, cfg, graph, &batch, None, 1.0, false)?;
        let (pos, neg, rec) = (tape.value(out.s_pos), tape.value(out.s_neg), tape.value(out.rec_err));
        for (i, &v) in targets.iter().enumerate() {
            s_con[v] = neg[[i, 0]] - pos[[i, 0]];
            s_rec[v] = rec[[i, 0]];
        }
    }
    Ok(RoundScores { s_con, s_rec })
}

fn bounds<T: Scalar>(xs: impl Iterator<Item = T>) -> Option<(T, T)> {
    xs.fold(None, |acc, x| match acc {
        None => Some((x, x)),
        Some((lo, hi)) => Some((lo.min(x), hi.max(x))),
    })
}

fn scale<T: Scalar>(xs: &[T], lo: T, hi: T) -> Vec<T> {
    if hi > lo {
        let span = hi - lo;
        xs.iter().map(|&x| ((x - lo) / span).max(T::zero()).min(T::one())).collect()
    } else {
        vec![T::zero(); xs.len()]
    }
}

/// Affine rescaling to `[0, 1]`; a constant input maps to all zeros.
pub fn minmax<T: Scalar>(scores: &[T]) -> Vec<T> {
    match bounds(scores.iter().copied()) {
        Some((lo, hi)) => scale(scores, lo, hi),
        None => Vec::new(),
    }
}

/// `alpha * con + (1 - alpha) * rec`.
pub fn fuse<T: Scalar>(con: &[T], rec: &[T], alpha: f64) -> Vec<T> {
    let a = T::lit(alpha);
    con.iter().zip(rec).map(|(&c, &r)| a * c + (T::one() - a) * r).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreTable<T> {
    /// Raw scores averaged over rounds.
    pub s_con_raw: Vec<T>,
    pub s_rec_raw: Vec<T>,
    /// Scaled scores averaged over rounds.
    pub s_con_scaled: Vec<T>,
    pub s_rec_scaled: Vec<T>,
    pub s_final: Vec<T>,
    pub rounds_used: usize,
}

fn mean_of<T: Scalar>(rows: &[Vec<T>]) -> Vec<T> {
    let r = T::lit(rows.len() as f64);
    let mut out = vec![T::zero(); rows.first().map_or(0, Vec::len)];
    for row in rows {
        for (o, &x) in out.iter_mut().zip(row) {
            *o += x;
        }
    }
    out.iter_mut().for_each(|o| *o /= r);
    out
}

/// Combines round outputs into the final table.
pub fn aggregate<T: Scalar>(rounds: &[RoundScores<T>], alpha: f64, mode: MinMaxMode) -> Result<ScoreTable<T>> {
    if rounds.is_empty() {
        return Err(Error::Config("at least one round is required".into()));
    }
    let con: Vec<Vec<T>> = rounds.iter().map(|r| r.s_con.clone()).collect();
    let rec: Vec<Vec<T>> = rounds.iter().map(|r| r.s_rec.clone()).collect();
    let s_con_raw = mean_of(&con);
    let s_rec_raw = mean_of(&rec);
    let (s_con_scaled, s_rec_scaled) = match mode {
        MinMaxMode::PerRound => (
            mean_of(&con.iter().map(|r| minmax(r)).collect::<Vec<_>>()),
            mean_of(&rec.iter().map(|r| minmax(r)).collect::<Vec<_>>()),
        ),
        MinMaxMode::Pooled => {
            let pooled = |fam: &[Vec<T>]| {
                let (lo, hi) = bounds(fam.iter().flatten().copied()).unwrap_or((T::zero(), T::zero()));
                mean_of(&fam.iter().map(|r| scale(r, lo, hi)).collect::<Vec<_>>())
            };
            (pooled(&con), pooled(&rec))
        }
        MinMaxMode::AverageFirst => (minmax(&s_con_raw), minmax(&s_rec_raw)),
    };
    let s_final = fuse(&s_con_scaled, &s_rec_scaled, alpha);
    Ok(ScoreTable {
        s_con_raw,
        s_rec_raw,
        s_con_scaled,
        s_rec_scaled,
        s_final,
        rounds_used: rounds.len(),
    })
}

/// Runs `rounds` inference rounds (in parallel) and aggregates them with
/// the model's effective alpha.
pub fn score_all<T: Scalar>(
    model: &Dslad<T>,
    graph: &AttributedGraph<T>,
    rwr: &RwrConfig,
    rounds: usize,
    seed: u64,
    mode: MinMaxMode,
) -> Result<ScoreTable<T>> {
    if rounds == 0 {
        return Err(Error::Config("rounds must be at least 1".into()));
    }
    rwr.validate()?;
    let outputs = (0..rounds as u64)
        .into_par_iter()
        .map(|r| infer_round(model, graph, rwr, seed, r))
        .collect::<Result<Vec<_>>>()?;
    aggregate(&outputs, model.config.effective_alpha(), mode)
}

/// Writes `node_id,s_con,s_rec,s_final` with 17 significant digits; the
/// score columns are the scaled, round-averaged families.
pub fn write_scores_csv<T: Scalar>(path: impl AsRef<Path>, table: &ScoreTable<T>) -> Result<()> {
    write_with(path.as_ref(), |w| {
        writeln!(w, "node_id,s_con,s_rec,s_final")?;
        for (i, ((c, r), f)) in table
            .s_con_scaled
            .iter()
            .zip(&table.s_rec_scaled)
            .zip(&table.s_final)
            .enumerate()
        {
            let (c, r, f) = (c.to_f64_lossy(), r.to_f64_lossy(), f.to_f64_lossy());
            writeln!(w, "{i},{c:.16e},{r:.16e},{f:.16e}")?;
        }
        Ok(())
    })
}

/// Reads the `s_final` column of a scores file, indexed by node id.
pub fn read_final_scores(path: impl AsRef<Path>) -> Result<Vec<f64>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let perr = |line: usize, msg: String| Error::Parse {
        path: path.display().to_string(),
        line,
        msg,
    };
    let mut lines = text.lines().enumerate();
    let header = lines.next().map(|(_, h)| h.trim()).unwrap_or_default();
    let cols: Vec<&str> = header.split(',').collect();
    let id_col = cols.iter().position(|&c| c == "node_id");
    let score_col = cols
        .iter()
        .position(|&c| c == "s_final")
        .ok_or_else(|| perr(1, "missing s_final column".into()))?;
    let mut scores = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if let Some(c) = id_col {
            let id: usize = fields
                .get(c)
                .and_then(|f| f.trim().parse().ok())
                .ok_or_else(|| perr(i + 1, "bad node_id".into()))?;
            if id != scores.len() {
                return Err(perr(i + 1, format!("expected node {}, found {id}", scores.len())));
            }
        }
        let s: f64 = fields
            .get(score_col)
            .and_then(|f| f.trim().parse().ok())
            .ok_or_else(|| perr(i + 1, "bad s_final value".into()))?;
        scores.push(s);
    }
    Ok(scores)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minmax_cases() {
        assert_eq!(minmax(&[1.0, 3.0, 5.0]), vec![0.0, 0.5, 1.0]);
        assert_eq!(minmax(&[2.0, 2.0, 2.0]), vec![0.0; 3]);
        assert_eq!(minmax::<f64>(&[]), Vec::<f64>::new());
    }

    #[test]
    fn fusion_endpoints() {
        let con = [0.1, 0.9];
        let rec = [0.7, 0.2];
        assert_eq!(fuse(&con, &rec, 1.0), con.to_vec());
        assert_eq!(fuse(&con, &rec, 0.0), rec.to_vec());
    }

    #[test]
    fn aggregation_modes() {
        let rounds = vec![
            RoundScores {
                s_con: vec![0.0, 1.0, 2.0],
                s_rec: vec![1.0, 1.0, 1.0],
            },
            RoundScores {
                s_con: vec![0.0, 4.0, 2.0],
                s_rec: vec![0.0, 2.0, 4.0],
            },
        ];
        let t = aggregate(&rounds, 0.5, MinMaxMode::PerRound).unwrap();
        assert_eq!(t.s_con_scaled, vec![0.0, 0.75, 0.75]);
        assert_eq!(t.s_rec_scaled, vec![0.0, 0.25, 0.5]);
        assert_eq!(t.s_final, vec![0.0, 0.5, 0.625]);
        let p = aggregate(&rounds, 0.5, MinMaxMode::Pooled).unwrap();
        assert_eq!(p.s_con_scaled, vec![0.0, 0.625, 0.5]);
        let a = aggregate(&rounds, 0.5, MinMaxMode::AverageFirst).unwrap();
        assert_eq!(a.s_con_raw, vec![0.0, 2.5, 2.0]);
        assert_eq!(a.s_con_scaled, vec![0.0, 1.0, 0.8]);
        assert!(aggregate::<f64>(&[], 0.5, MinMaxMode::PerRound).is_err());
    }

    #[test]
    fn scores_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scores.csv");
        let t = aggregate(
            &[RoundScores {
                s_con: vec![0.25, -0.5, 0.1],
                s_rec: vec![3.0, 1.0, 2.0],
            }],
            0.6,
            MinMaxMode::PerRound,
        )
        .unwrap();
        write_scores_csv(&path, &t).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("node_id,s_con,s_rec,s_final\n0,1.0000000000000000e0,"));
        assert_eq!(read_final_scores(&path).unwrap(), t.s_final);
    }
}
