//! CSV embedding files.
//!
//! ```text
//! m=<dim>,K=<classes>
//! <label>,<v0>,<v1>,...,<v{m-1}>
//! ```
//!
//! Floats are written in shortest round-trip form, so a save/load cycle
//! reproduces every value exactly.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use serde::Serialize;

use crate::data::LabeledEmbeddings;
use crate::error::{Error, Result};

pub fn load_embeddings(path: impl AsRef<Path>) -> Result<LabeledEmbeddings> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_embeddings(file, &path.display().to_string())
}

/// Parses the CSV format from any reader; `source` names it in errors.
pub fn parse_embeddings<R: Read>(reader: R, source: &str) -> Result<LabeledEmbeddings> {
    let err = |line: usize, message: String| Error::Parse {
        path: source.to_string(),
        line,
        message,
    };
    let mut lines = BufReader::new(reader).lines().enumerate();
    let (dim, num_classes) = match lines.next() {
        Some((_, line)) => {
            let line = line.map_err(|e| Error::io(source, e))?;
            parse_header(line.trim()).map_err(|m| err(1, m))?
        }
        None => return Err(err(1, "missing header".into())),
    };

    let mut vectors = Vec::new();
    let mut labels = Vec::new();
    for (idx, line) in lines {
        let lineno = idx + 1;
        let line = line.map_err(|e| Error::io(source, e))?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != dim + 1 {
            return Err(err(
                lineno,
                format!("expected {} fields, found {}", dim + 1, fields.len()),
            ));
        }
        let label: usize = fields[0]
            .parse()
            .map_err(|_| err(lineno, format!("invalid label `{}`", fields[0])))?;
        if label >= num_classes {
            return Err(err(
                lineno,
                format!("label {label} out of range [0, {num_classes})"),
            ));
        }
        let mut v = Vec::with_capacity(dim);
        for (c, field) in fields[1..].iter().enumerate() {
            let x: f64 = field
                .parse()
                .map_err(|_| err(lineno, format!("invalid number `{field}` in column {c}")))?;
            if !x.is_finite() {
                return Err(err(lineno, format!("non-finite value in column {c}")));
            }
            v.push(x);
        }
        vectors.push(v);
        labels.push(label);
    }
    if vectors.is_empty() {
        return Err(err(1, "file contains no rows".into()));
    }
    LabeledEmbeddings::new(dim, num_classes, vectors, labels)
}

fn parse_header(line: &str) -> std::result::Result<(usize, usize), String> {
    let bad = || format!("malformed header `{line}` (expected `m=<dim>,K=<classes>`)");
    let (m, k) = line.split_once(',').ok_or_else(bad)?;
    let dim = m
        .trim()
        .strip_prefix("m=")
        .and_then(|v| v.parse::<usize>().ok())
        .ok_or_else(bad)?;
    let classes = k
        .trim()
        .strip_prefix("K=")
        .and_then(|v| v.parse::<usize>().ok())
        .ok_or_else(bad)?;
    if dim == 0 || classes == 0 {
        return Err(bad());
    }
    Ok((dim, classes))
}

pub fn format_embeddings(data: &LabeledEmbeddings) -> String {
    let mut out = String::with_capacity(data.len() * (data.dim() * 20 + 4));
    let _ = writeln!(out, "m={},K={}", data.dim(), data.num_classes());
    for (v, l) in data.vectors().iter().zip(data.labels()) {
        let _ = write!(out, "{l}");
        for x in v {
            let _ = write!(out, ",{x:?}");
        }
        out.push('\n');
    }
    out
}

pub fn save_embeddings(data: &LabeledEmbeddings, path: impl AsRef<Path>) -> Result<()> {
    if data.is_empty() {
        return Err(Error::invalid("refusing to write an empty dataset"));
    }
    let path = path.as_ref();
    fs::write(path, format_embeddings(data)).map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize>(value: &T, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}
