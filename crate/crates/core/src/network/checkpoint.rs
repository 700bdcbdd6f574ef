//! Plain-text checkpoints.
//!
//! ```text
//! mhd-pinn-checkpoint 1
//! spec {"input_dim":2,...}
//! meta {...}                  (optional, one line)
//! params 12345
//! 0.123...                    (one value per line, layout order)
//! ```
//!
//! Values are written with Rust's shortest round-trip formatting, so a
//! read after a write is bit-exact.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{MultiscaleNetwork, NetworkError, NetworkSpec};

const MAGIC: &str = "mhd-pinn-checkpoint 1";

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed checkpoint at line {line}: {msg}")]
    Format { line: usize, msg: String },
    #[error(transparent)]
    Network(#[from] NetworkError),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub spec: NetworkSpec,
    /// Free-form single-line metadata (the runner stores its config here).
    pub meta: Option<String>,
    pub params: Vec<f64>,
}

impl Checkpoint {
    pub fn to_text(&self) -> String {
        let mut s = String::with_capacity(self.params.len() * 24 + 256);
        s.push_str(MAGIC);
        s.push('\n');
        let spec = serde_json::to_string(&self.spec).expect("spec serializes");
        writeln!(s, "spec {spec}").unwrap();
        if let Some(m) = &self.meta {
            writeln!(s, "meta {}", m.replace('\n', " ")).unwrap();
        }
        writeln!(s, "params {}", self.params.len()).unwrap();
        for v in &self.params {
            writeln!(s, "{v:?}").unwrap();
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self, CheckpointError> {
        let err = |line: usize, msg: &str| CheckpointError::Format {
            line,
            msg: msg.to_string(),
        };
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        match lines.next() {
            Some((_, l)) if l.trim() == MAGIC => {}
            _ => return Err(err(1, "missing header")),
        }
        let (ln, l) = lines.next().ok_or_else(|| err(2, "missing spec"))?;
        let spec_json = l.strip_prefix("spec ").ok_or_else(|| err(ln, "expected `spec`"))?;
        let spec: NetworkSpec = serde_json::from_str(spec_json).map_err(|e| err(ln, &e.to_string()))?;
        let (mut ln, mut l) = lines.next().ok_or_else(|| err(3, "missing params"))?;
        let mut meta = None;
        if let Some(m) = l.strip_prefix("meta ") {
            meta = Some(m.to_string());
            (ln, l) = lines.next().ok_or_else(|| err(ln + 1, "missing params"))?;
        }
        let n: usize = l
            .strip_prefix("params ")
            .and_then(|v| v.trim().parse().ok())
            .ok_or_else(|| err(ln, "expected `params <count>`"))?;
        let mut params = Vec::with_capacity(n);
        for (ln, l) in lines {
            if l.trim().is_empty() {
                continue;
            }
            params.push(l.trim().parse::<f64>().map_err(|e| err(ln, &e.to_string()))?);
        }
        if params.len() != n {
            return Err(err(ln, &format!("declared {n} parameters, found {}", params.len())));
        }
        let net = MultiscaleNetwork::new(spec.clone())?;
        if net.param_count() != n {
            return Err(NetworkError::ParamCount {
                expected: net.param_count(),
                got: n,
            }
            .into());
        }
        Ok(Checkpoint { spec, meta, params })
    }
}

pub fn write_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<(), CheckpointError> {
    fs::write(path, ckpt.to_text())?;
    Ok(())
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint, CheckpointError> {
    Checkpoint::from_text(&fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let spec = NetworkSpec::multiscale(3, 3, 2, 0.1, 4, 1.0, 2, 7, 3);
        let net = MultiscaleNetwork::new(spec.clone()).unwrap();
        let mut params = net.init_params(9).into_values();
        params[0] = 1.0 / 3.0;
        params[1] = -0.0;
        params[2] = 5e-324;
        let ck = Checkpoint {
            spec,
            meta: Some("{\"a\":1}".into()),
            params,
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ck.txt");
        write_checkpoint(&path, &ck).unwrap();
        let back = read_checkpoint(&path).unwrap();
        assert_eq!(back.meta, ck.meta);
        assert!(back.params.iter().zip(&ck.params).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn wrong_count_is_rejected() {
        let spec = NetworkSpec::plain(1, 1, 1, 2);
        let text = format!("{MAGIC}\nspec {}\nparams 2\n1.0\n2.0\n", serde_json::to_string(&spec).unwrap());
        assert!(matches!(
            Checkpoint::from_text(&text),
            Err(CheckpointError::Network(NetworkError::ParamCount { expected: 7, got: 2 }))
        ));
    }
}
