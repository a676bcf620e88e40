//! Run configuration: flat dotted keys read from a TOML file, overridable
//! from the command line, and echoed in full next to every output.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use hggnn_core::ablation::ExperimentConfig;
use hggnn_core::data::SegmentMode;
use hggnn_core::graph::GraphConfig;
use hggnn_core::metrics::Averaging;
use hggnn_core::model::{LossMode, ModelConfig};
use hggnn_core::train::TrainConfig;

use crate::error::{AppError, Result};

/// Every key with its default and a one-line description.
pub const KEYS: &[(&str, &str, &str)] = &[
    ("data.path", "", "interaction log (TSV)"),
    ("data.gap_seconds", "3600", "inactivity gap that closes a session"),
    ("data.min_session_len", "3", "shorter sessions are dropped"),
    ("data.min_user_sessions", "5", "users with fewer sessions are dropped"),
    ("data.test_percent", "20", "share of each user's latest sessions used for test"),
    ("graph.S", "8", "transition edges kept per item and direction"),
    ("graph.K", "10", "maximum similarity edges per item"),
    ("graph.self_loops", "true", "keep a -> a transitions"),
    ("model.d", "128", "embedding size"),
    ("model.layers", "2", "graph layers"),
    ("encoder.Lmax", "20", "longest prefix fed to the session encoder"),
    ("encoder.gate", "scalar", "fusion gate width: scalar | vector"),
    ("loss.mode", "literal", "literal | categorical"),
    ("train.lr", "0.001", "Adam learning rate"),
    ("train.batch", "512", "mini-batch size"),
    ("train.epochs", "30", "fixed epoch budget"),
    ("train.seed", "42", "seed for initialization and shuffling"),
    ("train.segment", "all-prefixes", "train examples per session: all-prefixes | last-only"),
    ("train.validation", "false", "hold out 10% of train examples and keep the best epoch"),
    ("eval.ks", "5,10", "cutoffs for HR@k and MRR@k"),
    ("eval.average", "example", "metric averaging: example | user"),
    ("threads", "1", "worker threads for evaluation"),
];

#[derive(Clone, Debug, PartialEq)]
pub struct Config {
    pub data_path: PathBuf,
    pub gap_seconds: u64,
    pub min_session_len: usize,
    pub min_user_sessions: usize,
    pub test_percent: usize,
    pub graph: GraphConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub segment: SegmentMode,
    pub ks: Vec<usize>,
    pub averaging: Averaging,
    pub threads: usize,
}

impl Default for Config {
    fn default() -> Self {
        let mut c = Config {
            data_path: PathBuf::new(),
            gap_seconds: 0,
            min_session_len: 0,
            min_user_sessions: 0,
            test_percent: 0,
            graph: GraphConfig::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            segment: SegmentMode::default(),
            ks: Vec::new(),
            averaging: Averaging::default(),
            threads: 1,
        };
        for (k, v, _) in KEYS {
            c.set(k, v).expect("defaults parse");
        }
        c
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| AppError::usage(format!("config key {key}: cannot parse {value:?}")))
}

fn at_least<T: PartialOrd + std::fmt::Display + Copy>(key: &str, v: T, min: T) -> Result<T> {
    if v < min {
        return Err(AppError::usage(format!("config key {key}: must be at least {min}")));
    }
    Ok(v)
}

impl Config {
    /// Sets one key from its text form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "data.path" => self.data_path = PathBuf::from(value),
            "data.gap_seconds" => self.gap_seconds = at_least(key, parse(key, value)?, 1)?,
            "data.min_session_len" => self.min_session_len = at_least(key, parse(key, value)?, 2)?,
            "data.min_user_sessions" => self.min_user_sessions = at_least(key, parse(key, value)?, 1)?,
            "data.test_percent" => {
                let p: usize = parse(key, value)?;
                if !(1..=99).contains(&p) {
                    return Err(AppError::usage("config key data.test_percent: must lie in 1..=99"));
                }
                self.test_percent = p;
            }
            "graph.S" => self.graph.sample_size = at_least(key, parse(key, value)?, 1)?,
            "graph.K" => self.graph.similar_k = parse(key, value)?,
            "graph.self_loops" => self.graph.keep_self_loops = parse(key, value)?,
            "model.d" => self.model.dim = at_least(key, parse(key, value)?, 1)?,
            "model.layers" => self.model.layers = parse(key, value)?,
            "encoder.Lmax" => self.model.max_len = at_least(key, parse(key, value)?, 1)?,
            "encoder.gate" => {
                self.model.vector_gate = match value {
                    "scalar" => false,
                    "vector" => true,
                    _ => return Err(AppError::usage("config key encoder.gate: expected scalar or vector")),
                }
            }
            "loss.mode" => {
                self.model.loss = LossMode::parse(value)
                    .ok_or_else(|| AppError::usage("config key loss.mode: expected literal or categorical"))?
            }
            "train.lr" => {
                let lr: f64 = parse(key, value)?;
                if !(lr > 0.0 && lr.is_finite()) {
                    return Err(AppError::usage("config key train.lr: must be positive"));
                }
                self.train.lr = lr;
            }
            "train.batch" => self.train.batch_size = at_least(key, parse(key, value)?, 1)?,
            "train.epochs" => self.train.epochs = at_least(key, parse(key, value)?, 1)?,
            "train.seed" => self.train.seed = parse(key, value)?,
            "train.segment" => {
                self.segment = SegmentMode::parse(value)
                    .ok_or_else(|| AppError::usage("config key train.segment: expected all-prefixes or last-only"))?
            }
            "train.validation" => self.train.validation = parse(key, value)?,
            "eval.ks" => {
                let ks = value
                    .split(',')
                    .map(|k| at_least(key, parse::<usize>(key, k)?, 1))
                    .collect::<Result<Vec<_>>>()?;
                if ks.is_empty() {
                    return Err(AppError::usage("config key eval.ks: needs at least one cutoff"));
                }
                self.ks = ks;
            }
            "eval.average" => {
                self.averaging = Averaging::parse(value)
                    .ok_or_else(|| AppError::usage("config key eval.average: expected example or user"))?
            }
            "threads" => self.threads = at_least(key, parse(key, value)?, 1)?,
            _ => {
                let valid: Vec<&str> = KEYS.iter().map(|k| k.0).collect();
                return Err(AppError::usage(format!(
                    "unknown config key {key:?}; valid keys: {}",
                    valid.join(", ")
                )));
            }
        }
        Ok(())
    }

    /// Current value of `key` in the text form accepted by [`Config::set`].
    pub fn get(&self, key: &str) -> Option<String> {
        Some(match key {
            "data.path" => self.data_path.display().to_string(),
            "data.gap_seconds" => self.gap_seconds.to_string(),
            "data.min_session_len" => self.min_session_len.to_string(),
            "data.min_user_sessions" => self.min_user_sessions.to_string(),
            "data.test_percent" => self.test_percent.to_string(),
            "graph.S" => self.graph.sample_size.to_string(),
            "graph.K" => self.graph.similar_k.to_string(),
            "graph.self_loops" => self.graph.keep_self_loops.to_string(),
            "model.d" => self.model.dim.to_string(),
            "model.layers" => self.model.layers.to_string(),
            "encoder.Lmax" => self.model.max_len.to_string(),
            "encoder.gate" => String::from(if self.model.vector_gate { "vector" } else { "scalar" }),
            "loss.mode" => self.model.loss.as_str().to_string(),
            "train.lr" => format!("{:?}", self.train.lr),
            "train.batch" => self.train.batch_size.to_string(),
            "train.epochs" => self.train.epochs.to_string(),
            "train.seed" => self.train.seed.to_string(),
            "train.segment" => self.segment.as_str().to_string(),
            "train.validation" => self.train.validation.to_string(),
            "eval.ks" => self.ks.iter().map(|k| k.to_string()).collect::<Vec<_>>().join(","),
            "eval.average" => self.averaging.as_str().to_string(),
            "threads" => self.threads.to_string(),
            _ => return None,
        })
    }

    /// Applies every key of a TOML document. Nested tables are flattened
    /// to dotted keys, so `[train]\nseed = 1` and `train.seed = 1` agree.
    pub fn apply_toml(&mut self, text: &str) -> Result<()> {
        let table: toml::Table = toml::from_str(text).map_err(|e| AppError::usage(format!("config: {e}")))?;
        let mut flat = Vec::new();
        flatten("", &table, &mut flat)?;
        for (k, v) in flat {
            self.set(&k, &v)?;
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| AppError::io(path, e))?;
        let mut c = Config::default();
        c.apply_toml(&text)?;
        Ok(c)
    }

    /// The full resolved configuration as TOML with one dotted key per line.
    pub fn to_toml(&self) -> String {
        let mut s = String::new();
        for (k, _, doc) in KEYS {
            let v = self.get(k).unwrap_or_default();
            let _ = writeln!(s, "# {doc}");
            let _ = writeln!(s, "{k} = {}", toml_value(k, &v));
        }
        s
    }

    pub fn experiment(&self) -> ExperimentConfig {
        ExperimentConfig {
            graph: self.graph,
            model: self.model,
            train: self.train,
            segment: self.segment,
            ks: self.ks.clone(),
            averaging: self.averaging,
        }
    }
}

fn toml_value(key: &str, v: &str) -> String {
    match key {
        "data.path" | "encoder.gate" | "loss.mode" | "train.segment" | "eval.average" => {
            toml::Value::String(v.to_string()).to_string()
        }
        "eval.ks" => format!("[{}]", v.replace(',', ", ")),
        _ => v.to_string(),
    }
}

fn flatten(prefix: &str, table: &toml::Table, out: &mut Vec<(String, String)>) -> Result<()> {
    for (k, v) in table {
        let key = if prefix.is_empty() {
            k.clone()
        } else {
            format!("{prefix}.{k}")
        };
        match v {
            toml::Value::Table(t) => flatten(&key, t, out)?,
            toml::Value::String(s) => out.push((key, s.clone())),
            toml::Value::Integer(i) => out.push((key, i.to_string())),
            toml::Value::Float(f) => out.push((key, format!("{f:?}"))),
            toml::Value::Boolean(b) => out.push((key, b.to_string())),
            toml::Value::Array(items) => {
                let parts = items
                    .iter()
                    .map(|x| match x {
                        toml::Value::Integer(i) => Ok(i.to_string()),
                        _ => Err(AppError::usage(format!("config key {key}: expected a list of integers"))),
                    })
                    .collect::<Result<Vec<_>>>()?;
                out.push((key, parts.join(",")));
            }
            toml::Value::Datetime(_) => {
                return Err(AppError::usage(format!("config key {key}: dates are not supported")));
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = Config::default();
        assert_eq!(c.model.dim, 128);
        assert_eq!(c.model.layers, 2);
        assert_eq!(c.graph.sample_size, 8);
        assert_eq!(c.graph.similar_k, 10);
        assert_eq!(c.train.batch_size, 512);
        assert_eq!(c.train.lr, 0.001);
        assert_eq!(c.ks, vec![5, 10]);
        assert_eq!(c.threads, 1);
    }

    #[test]
    fn dotted_and_nested_keys_agree() {
        let mut a = Config::default();
        a.apply_toml("train.seed = 7\nmodel.d = 16\neval.ks = [1, 20]\n").unwrap();
        let mut b = Config::default();
        b.apply_toml("[train]\nseed = 7\n[model]\nd = 16\n[eval]\nks = [1, 20]\n").unwrap();
        assert_eq!(a, b);
        assert_eq!(a.train.seed, 7);
        assert_eq!(a.ks, vec![1, 20]);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let mut c = Config::default();
        let e = c.apply_toml("train.sed = 7\n").unwrap_err();
        assert!(e.to_string().contains("train.sed"));
        assert_eq!(e.exit_code(), 1);
    }

    #[test]
    fn resolved_text_reloads_identically() {
        let mut c = Config::default();
        c.set("data.path", "some dir/\"x\".tsv").unwrap();
        c.set("train.lr", "0.0123").unwrap();
        c.set("encoder.gate", "vector").unwrap();
        let mut back = Config::default();
        back.apply_toml(&c.to_toml()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn out_of_range_values() {
        let mut c = Config::default();
        assert!(c.set("train.batch", "0").is_err());
        assert!(c.set("train.lr", "-1").is_err());
        assert!(c.set("loss.mode", "hinge").is_err());
        assert!(c.set("eval.ks", "5,,10").is_err());
    }
}
