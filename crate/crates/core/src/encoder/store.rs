//! Text store of hidden states exported from an external encoder.
//!
//! ```text
//! H=<hidden size>
//! <pair_id>.<side>\t<T>\t<T×H whitespace-separated values, row-major>
//! ```
//!
//! Rows must line up with the sentence tokenized by the configured
//! vocabulary and wrapped as `[CLS] … [SEP]`. The embedding of the bare word
//! "null" is stored under the reserved pair id [`NULL_PAIR_ID`], side 1.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;

use super::HiddenStates;
use crate::corpus::Side;
use crate::error::{Error, Result};
use crate::numgrad::Tensor;

pub const NULL_PAIR_ID: &str = "__null__";

#[derive(Clone, Debug, PartialEq)]
pub struct PrecomputedStore {
    hidden: usize,
    records: BTreeMap<(String, Side), Tensor>,
}

fn parse_key(key: &str) -> Option<(String, Side)> {
    let (id, side) = key.rsplit_once('.')?;
    let side = Side::from_number(side.parse().ok()?)?;
    Some((id.to_string(), side))
}

impl PrecomputedStore {
    pub fn new(hidden: usize) -> Self {
        PrecomputedStore {
            hidden,
            records: BTreeMap::new(),
        }
    }

    pub fn hidden_size(&self) -> usize {
        self.hidden
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn insert(&mut self, pair_id: &str, side: Side, states: Tensor) -> Result<()> {
        match states.shape() {
            [_, h] if *h == self.hidden => {}
            s => {
                return Err(Error::Format(format!(
                    "{pair_id}.{}: shape {s:?} does not match H={}",
                    side.number(),
                    self.hidden
                )))
            }
        }
        states.check_finite(pair_id)?;
        self.records.insert((pair_id.to_string(), side), states);
        Ok(())
    }

    /// Exact lookup; `None` when the key is absent.
    pub fn lookup(&self, pair_id: &str, side: Side) -> Option<HiddenStates> {
        self.records
            .get(&(pair_id.to_string(), side))
            .map(|t| HiddenStates::new(t.clone()).expect("validated on insert"))
    }

    pub fn null_states(&self) -> Option<HiddenStates> {
        self.lookup(NULL_PAIR_ID, Side::First)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut lines = BufReader::new(file).lines();
        let header = match lines.next() {
            Some(l) => l.map_err(|e| Error::io(path, e))?,
            None => return Err(Error::Format(format!("{}: empty store", path.display()))),
        };
        let hidden: usize = header
            .trim()
            .strip_prefix("H=")
            .and_then(|v| v.parse().ok())
            .filter(|&h| h > 0)
            .ok_or_else(|| Error::Format(format!("{}: bad header `{header}`", path.display())))?;
        let mut store = PrecomputedStore::new(hidden);
        for (n, line) in lines.enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let lineno = n + 2;
            let bad = |m: &str| Error::Format(format!("{}:{lineno}: {m}", path.display()));
            let mut cols = line.splitn(3, '\t');
            let key = cols.next().unwrap_or_default();
            let (id, side) = parse_key(key).ok_or_else(|| bad("key must be <pair_id>.<1|2>"))?;
            let t: usize = cols
                .next()
                .and_then(|c| c.trim().parse().ok())
                .filter(|&t| t > 0)
                .ok_or_else(|| bad("bad token count"))?;
            let values: Vec<f64> = cols
                .next()
                .unwrap_or_default()
                .split_whitespace()
                .map(|v| v.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| bad("unparsable value"))?;
            if values.len() != t * hidden {
                return Err(bad(&format!(
                    "{} values do not fill {t}×{hidden}; hidden size differs from header",
                    values.len()
                )));
            }
            if store.records.contains_key(&(id.clone(), side)) {
                return Err(bad(&format!("duplicate key {key}")));
            }
            store.insert(&id, side, Tensor::matrix(t, hidden, values)?)?;
        }
        Ok(store)
    }

    /// Writes the store; values use shortest round-trip formatting, so a
    /// reload is bit-identical.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = format!("H={}\n", self.hidden);
        for ((id, side), t) in &self.records {
            let _ = write!(out, "{id}.{}\t{}\t", side.number(), t.shape()[0]);
            let mut first = true;
            for v in t.data() {
                if !first {
                    out.push(' ');
                }
                first = false;
                let _ = write!(out, "{v:?}");
            }
            out.push('\n');
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}
