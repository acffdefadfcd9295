//! Plain-text model checkpoints.
//!
//! ```text
//! dslad-checkpoint 1
//! in_dim 50
//! config hidden_dim 64
//! ...
//! tensor encoder.0 50 64
//! <50 lines of 64 space-separated values>
//! ...
//! ```
//!
//! Values use the shortest decimal form that parses back to the same
//! number, so a save/load round trip is exact. Optimizer state is not
//! stored.

use std::fs;
use std::io::Write;
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::graph::write_with;
use crate::model::{Dslad, ModelConfig, ModelParams};
use crate::scalar::Scalar;

const MAGIC: &str = "dslad-checkpoint 1";

impl<T: Scalar> Dslad<T> {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_with(path.as_ref(), |w| {
            writeln!(w, "{MAGIC}")?;
            writeln!(w, "in_dim {}", self.params.in_dim())?;
            for (k, v) in self.config.to_pairs() {
                writeln!(w, "config {k} {v}")?;
            }
            for p in self.params.iter() {
                let (r, c) = p.value.dim();
                writeln!(w, "tensor {} {r} {c}", p.name)?;
                for row in p.value.rows() {
                    let mut first = true;
                    for x in row {
                        if !first {
                            w.write_all(b" ")?;
                        }
                        first = false;
                        write!(w, "{x}")?;
                    }
                    w.write_all(b"\n")?;
                }
            }
            Ok(())
        })
    }

    /// Reads a checkpoint written by [`Dslad::save`]. Tensor names and
    /// shapes must be exactly those implied by the stored configuration.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let err = |line: usize, msg: String| Error::Parse {
            path: path.display().to_string(),
            line,
            msg,
        };
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        match lines.next() {
            Some((_, MAGIC)) => {}
            _ => return Err(err(1, format!("expected header {MAGIC:?}"))),
        }
        let (n, line) = lines.next().ok_or_else(|| err(2, "missing in_dim".into()))?;
        let in_dim: usize = line
            .strip_prefix("in_dim ")
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| err(n, "expected `in_dim <n>`".into()))?;

        let mut config = ModelConfig::default();
        let mut pending = None;
        for (n, line) in lines.by_ref() {
            if let Some(rest) = line.strip_prefix("config ") {
                let (k, v) = rest
                    .split_once(' ')
                    .ok_or_else(|| err(n, "expected `config <key> <value>`".into()))?;
                if !config.set(k, v)? {
                    return Err(err(n, format!("unknown config key {k:?}")));
                }
            } else {
                pending = Some((n, line));
                break;
            }
        }
        config.validate()?;

        let mut tensors: Vec<(String, Array2<T>)> = Vec::new();
        while let Some((n, header)) = pending.take() {
            let f: Vec<&str> = header.split(' ').collect();
            let (name, rows, cols) = match f.as_slice() {
                ["tensor", name, r, c] => match (r.parse::<usize>(), c.parse::<usize>()) {
                    (Ok(r), Ok(c)) => (name.to_string(), r, c),
                    _ => return Err(err(n, "bad tensor shape".into())),
                },
                _ => return Err(err(n, format!("expected tensor header, found {header:?}"))),
            };
            let mut values = Vec::with_capacity(rows * cols);
            for _ in 0..rows {
                let (n, line) = lines
                    .next()
                    .ok_or_else(|| err(n, format!("tensor {name} truncated")))?;
                let before = values.len();
                for field in line.split(' ') {
                    let x: T = field
                        .parse()
                        .map_err(|_| err(n, format!("bad number {field:?}")))?;
                    values.push(x);
                }
                if values.len() - before != cols {
                    return Err(err(n, format!("expected {cols} values in tensor {name}")));
                }
            }
            let value = Array2::from_shape_vec((rows, cols), values).map_err(|e| Error::Shape(e.to_string()))?;
            tensors.push((name, value));
            pending = lines.next().filter(|(_, l)| !l.is_empty());
        }
        if let Some((n, _)) = lines.find(|(_, l)| !l.is_empty()) {
            return Err(err(n, "unexpected content after the last tensor".into()));
        }

        let mut params: ModelParams<T> = ModelParams::init(in_dim, &config, &mut crate::rng::stream(0, &[]));
        let expected = params.iter().count();
        if tensors.len() != expected {
            return Err(Error::Validation(format!(
                "checkpoint has {} tensors, configuration implies {expected}",
                tensors.len()
            )));
        }
        for (p, (name, value)) in params.iter_mut().zip(tensors) {
            if p.name != name || p.value.dim() != value.dim() {
                return Err(Error::Validation(format!(
                    "tensor {name} {:?} does not match expected {} {:?}",
                    value.dim(),
                    p.name,
                    p.value.dim()
                )));
            }
            if value.iter().any(|x| !x.is_finite()) {
                return Err(Error::Validation(format!("tensor {name} has non-finite values")));
            }
            *p = crate::tensor::Parameter::new(name, value);
        }
        Ok(Self { config, params })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_exact() {
        let cfg = ModelConfig {
            hidden_dim: 5,
            encoder_layers: 2,
            alpha: 0.3,
            ..Default::default()
        };
        let m = Dslad::<f64>::new(7, cfg, 3).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.txt");
        m.save(&path).unwrap();
        assert_eq!(Dslad::<f64>::load(&path).unwrap(), m);
    }

    #[test]
    fn f32_round_trip() {
        let m = Dslad::<f32>::new(3, ModelConfig { hidden_dim: 4, ..Default::default() }, 1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.txt");
        m.save(&path).unwrap();
        assert_eq!(Dslad::<f32>::load(&path).unwrap(), m);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let m = Dslad::<f64>::new(3, ModelConfig { hidden_dim: 4, ..Default::default() }, 1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.txt");
        m.save(&path).unwrap();
        let text = fs::read_to_string(&path).unwrap().replace("config hidden_dim 4", "config hidden_dim 5");
        fs::write(&path, text).unwrap();
        assert!(matches!(Dslad::<f64>::load(&path), Err(Error::Validation(_))));
    }

    #[test]
    fn bad_header_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.txt");
        fs::write(&path, "not a checkpoint\n").unwrap();
        assert!(matches!(Dslad::<f64>::load(&path), Err(Error::Parse { line: 1, .. })));
    }
}
