//! Line-delimited dataset files and explanation-tuple files.
//!
//! A dataset file starts with a header object
//! `{"num_classes": .., "embedding_dim": .., "name": ..}` followed by one
//! record object per line with the keys `id`, `text`, `label`,
//! `prediction`, `loss` and `embedding`. Blank lines are ignored.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::Deserialize;
use serde_json::{Map, Value};

use crate::model::{validate_dataset, Dataset, ExplanationTuple, Record, Violation};

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("dataset is invalid: {}", join_violations(.0))]
    Validation(Vec<Violation>),
    #[error("dataset has no records")]
    EmptyDataset,
}

fn join_violations(v: &[Violation]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}

#[derive(Deserialize)]
struct Header {
    num_classes: usize,
    embedding_dim: usize,
    #[serde(default)]
    name: String,
}

const RECORD_KEYS: [&str; 6] = ["id", "text", "label", "prediction", "loss", "embedding"];

fn parse_record(line: usize, text: &str) -> Result<Record, IngestError> {
    let parse = |reason: String| IngestError::Parse { line, reason };
    let value: Value = serde_json::from_str(text).map_err(|e| parse(e.to_string()))?;
    let obj = value
        .as_object()
        .ok_or_else(|| parse("record is not an object".into()))?;
    if let Some(missing) = RECORD_KEYS.iter().find(|k| !obj.contains_key(**k)) {
        return Err(parse(format!("missing field {missing}")));
    }
    serde_json::from_value(value).map_err(|e| parse(e.to_string()))
}

/// Parses dataset text. `fallback_name` is used when the header has none.
pub fn parse_dataset(text: &str, fallback_name: &str) -> Result<Dataset, IngestError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| !l.trim().is_empty());
    let Some((hline, htext)) = lines.next() else {
        return Err(IngestError::EmptyDataset);
    };
    let header: Header = serde_json::from_str(htext).map_err(|e| IngestError::Parse {
        line: hline,
        reason: format!("bad header: {e}"),
    })?;
    let records = lines
        .map(|(line, l)| parse_record(line, l))
        .collect::<Result<Vec<_>, _>>()?;
    if records.is_empty() {
        return Err(IngestError::EmptyDataset);
    }
    let dataset = Dataset {
        name: if header.name.is_empty() {
            fallback_name.to_string()
        } else {
            header.name
        },
        num_classes: header.num_classes,
        embedding_dim: header.embedding_dim,
        records,
    };
    let violations = validate_dataset(&dataset);
    if violations.is_empty() {
        Ok(dataset)
    } else {
        Err(IngestError::Validation(violations))
    }
}

/// Reads and validates a dataset file; records keep file order.
pub fn load_dataset(path: &Path) -> Result<Dataset, IngestError> {
    let io = |source| IngestError::Io {
        path: path.display().to_string(),
        source,
    };
    let file = fs::File::open(path).map_err(io)?;
    let mut text = String::new();
    for line in BufReader::new(file).lines() {
        text.push_str(&line.map_err(io)?);
        text.push('\n');
    }
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("dataset");
    parse_dataset(&text, stem)
}

/// 17 significant digits: enough for every `f64` to read back bit-exact.
fn push_float(out: &mut String, x: f64) {
    write!(out, "{x:.16e}").expect("write to string");
}

/// Serializes a dataset in the file format read by [`parse_dataset`].
pub fn dataset_to_string(dataset: &Dataset) -> String {
    let mut out = String::new();
    let mut header = Map::new();
    header.insert("num_classes".into(), dataset.num_classes.into());
    header.insert("embedding_dim".into(), dataset.embedding_dim.into());
    header.insert("name".into(), dataset.name.clone().into());
    out.push_str(&Value::Object(header).to_string());
    out.push('\n');
    for r in &dataset.records {
        out.push_str("{\"id\":");
        out.push_str(&Value::from(r.id.as_str()).to_string());
        out.push_str(",\"text\":");
        out.push_str(&Value::from(r.text.as_str()).to_string());
        write!(out, ",\"label\":{},\"prediction\":{},\"loss\":", r.label, r.prediction).expect("write to string");
        push_float(&mut out, r.loss);
        out.push_str(",\"embedding\":[");
        for (i, x) in r.embedding.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            push_float(&mut out, *x);
        }
        out.push_str("]}\n");
    }
    out
}

pub fn write_dataset(path: &Path, dataset: &Dataset) -> Result<(), IngestError> {
    fs::write(path, dataset_to_string(dataset)).map_err(|source| IngestError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_tuple(path: &Path) -> Result<ExplanationTuple, IngestError> {
    let text = fs::read_to_string(path).map_err(|source| IngestError::Io {
        path: path.display().to_string(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|e| IngestError::Parse {
        line: e.line(),
        reason: e.to_string(),
    })
}

pub fn write_tuple(path: &Path, tuple: &ExplanationTuple) -> Result<(), IngestError> {
    let mut text = serde_json::to_string_pretty(tuple).expect("serializable");
    text.push('\n');
    fs::write(path, text).map_err(|source| IngestError::Io {
        path: path.display().to_string(),
        source,
    })
}
