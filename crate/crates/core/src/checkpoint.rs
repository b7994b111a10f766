//! Plain-text parameter checkpoints: one parameter per line as
//! `name TAB shape TAB values`, where shape is written like `2x64` and values
//! are space-separated in row-major order.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::numgrad::{Parameter, Tensor};

pub fn to_string(params: &[Parameter]) -> String {
    let mut out = String::new();
    for p in params {
        let shape: Vec<String> = p.value.shape().iter().map(|d| d.to_string()).collect();
        let _ = write!(out, "{}\t{}\t", p.name, shape.join("x"));
        for (i, v) in p.value.data().iter().enumerate() {
            if i > 0 {
                out.push(' ');
            }
            let _ = write!(out, "{v:?}");
        }
        out.push('\n');
    }
    out
}

pub fn parse(text: &str) -> Result<Vec<Parameter>> {
    let mut params = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |m: String| Error::Format(format!("checkpoint line {}: {m}", n + 1));
        let cols: Vec<&str> = line.splitn(3, '\t').collect();
        let [name, shape, values] = cols[..] else {
            return Err(bad(
                "expected name, shape and values separated by tabs".into()
            ));
        };
        let shape: Vec<usize> = shape
            .split('x')
            .map(|d| d.parse())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| bad(format!("bad shape `{shape}`")))?;
        let values: Vec<f64> = values
            .split_whitespace()
            .map(|v| v.parse())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| bad("unparsable value".into()))?;
        let value = Tensor::new(shape, values).map_err(|e| bad(e.to_string()))?;
        params.push(Parameter::new(name, value));
    }
    Ok(params)
}

pub fn save(params: &[Parameter], path: &Path) -> Result<()> {
    fs::write(path, to_string(params)).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<Vec<Parameter>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse(&text)
}

/// Looks up a parameter by name and checks its shape.
pub fn take(params: &[Parameter], name: &str, shape: &[usize]) -> Result<Tensor> {
    let p = params
        .iter()
        .find(|p| p.name == name)
        .ok_or_else(|| Error::Format(format!("checkpoint lacks `{name}`")))?;
    if p.value.shape() != shape {
        return Err(Error::Format(format!(
            "`{name}` has shape {:?}, expected {shape:?}",
            p.value.shape()
        )));
    }
    Ok(p.value.clone())
}
