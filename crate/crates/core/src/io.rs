//! CSV formats for predictions and labels.
//!
//! - predictions: header `id,<label_0>,...,<label_{C-1}>`, one row per example;
//! - labels (gold or predicted): header `id,label`.

use std::fs;
use std::path::Path;

use crate::ensemble::{argmax_labels, ClassAssignments, GoldLabels, LabelSet, PredictionMatrix};
use crate::error::{Error, Result};

pub fn read_text(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    String::from_utf8(bytes).map_err(|e| Error::data(format!("{}: not valid UTF-8 ({e})", path.display())))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn reader(text: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes())
}

fn line_of(record: &csv::StringRecord) -> u64 {
    record.position().map_or(0, |p| p.line())
}

fn csv_error(source: &str, e: csv::Error) -> Error {
    Error::data(format!("{source}: {e}"))
}

fn header_fields(rdr: &mut csv::Reader<&[u8]>, source: &str) -> Result<Vec<String>> {
    Ok(rdr
        .headers()
        .map_err(|e| csv_error(source, e))?
        .iter()
        .map(|h| h.trim_start_matches('\u{feff}').to_string())
        .collect())
}

/// True when the header is exactly `id,label`.
pub fn is_label_header(text: &str) -> bool {
    let mut rdr = reader(text);
    match rdr.headers() {
        Ok(h) => {
            let fields: Vec<String> = h
                .iter()
                .map(|f| f.trim_start_matches('\u{feff}').to_ascii_lowercase())
                .collect();
            fields == ["id", "label"]
        }
        Err(_) => false,
    }
}

/// Parses a prediction CSV whose label columns must follow `labels` order.
pub fn parse_predictions(
    text: &str,
    labels: &LabelSet,
    model_name: &str,
    split_name: &str,
    source: &str,
) -> Result<PredictionMatrix> {
    let mut rdr = reader(text);
    let header = header_fields(&mut rdr, source)?;
    if header.first().map(|h| h.to_ascii_lowercase()).as_deref() != Some("id") {
        return Err(Error::data(format!("{source}: first column must be 'id'")));
    }
    let columns = &header[1..];
    if columns.len() != labels.len()
        || columns.iter().enumerate().any(|(i, c)| labels.index_of(c) != Some(i))
    {
        return Err(Error::data(format!(
            "{source}: label columns [{}] do not match the label set [{}]",
            columns.join(","),
            labels.names().join(",")
        )));
    }
    let mut rows = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| csv_error(source, e))?;
        let line = line_of(&record);
        let id = record.get(0).unwrap_or_default().to_string();
        if id.is_empty() {
            return Err(Error::data(format!("{source}: line {line}: empty id")));
        }
        let values = record
            .iter()
            .skip(1)
            .map(|v| {
                v.parse::<f64>().map_err(|_| {
                    Error::data(format!("{source}: line {line}: '{v}' is not a number"))
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push((id, values));
    }
    PredictionMatrix::new(model_name, split_name, labels.len(), rows)
        .map_err(|e| Error::data(format!("{source}: {e}")))
}

pub fn read_predictions(
    path: &Path,
    labels: &LabelSet,
    model_name: &str,
    split_name: &str,
) -> Result<PredictionMatrix> {
    parse_predictions(&read_text(path)?, labels, model_name, split_name, &path.display().to_string())
}

/// Parses an `id,label` CSV; label strings are matched against `labels`.
pub fn parse_labels(text: &str, labels: &LabelSet, source: &str) -> Result<ClassAssignments> {
    let mut rdr = reader(text);
    let header = header_fields(&mut rdr, source)?;
    let header: Vec<String> = header.iter().map(|h| h.to_ascii_lowercase()).collect();
    if header != ["id", "label"] {
        return Err(Error::data(format!(
            "{source}: expected header 'id,label', found '{}'",
            header.join(",")
        )));
    }
    let mut entries = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| csv_error(source, e))?;
        let line = line_of(&record);
        let id = record.get(0).unwrap_or_default();
        let label = record.get(1).unwrap_or_default();
        if id.is_empty() {
            return Err(Error::data(format!("{source}: line {line}: empty id")));
        }
        let class = labels.index_of(label).ok_or_else(|| {
            Error::data(format!("{source}: line {line}: unknown label '{label}'"))
        })?;
        entries.push((id.to_string(), class));
    }
    ClassAssignments::new(labels.len(), entries).map_err(|e| Error::data(format!("{source}: {e}")))
}

pub fn read_labels(path: &Path, labels: &LabelSet) -> Result<GoldLabels> {
    parse_labels(&read_text(path)?, labels, &path.display().to_string())
}

/// Reads hard predictions from either an `id,label` file or a probability file (argmax).
pub fn read_class_predictions(path: &Path, labels: &LabelSet) -> Result<ClassAssignments> {
    let text = read_text(path)?;
    let source = path.display().to_string();
    if is_label_header(&text) {
        parse_labels(&text, labels, &source)
    } else {
        let m = parse_predictions(&text, labels, "predictions", "", &source)?;
        Ok(argmax_labels(&m))
    }
}

/// Formats with 9 significant digits, trailing zeros removed.
pub fn format_probability(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    let exponent = x.abs().log10().floor() as i32;
    if (-5..9).contains(&exponent) {
        let decimals = (8 - exponent).max(0) as usize;
        let s = format!("{x:.decimals$}");
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    } else {
        format!("{x:.8e}")
    }
}

fn finish(writer: csv::Writer<Vec<u8>>) -> String {
    String::from_utf8(writer.into_inner().expect("in-memory writer")).expect("utf-8 output")
}

pub fn predictions_to_csv(m: &PredictionMatrix, labels: &LabelSet) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["id".to_string()];
    header.extend(labels.names().iter().cloned());
    w.write_record(&header).expect("in-memory write");
    for (id, row) in m.rows() {
        let mut record = vec![id.to_string()];
        record.extend(row.iter().map(|&p| format_probability(p)));
        w.write_record(&record).expect("in-memory write");
    }
    finish(w)
}

pub fn labels_to_csv(assignments: &ClassAssignments, labels: &LabelSet) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["id", "label"]).expect("in-memory write");
    for (id, class) in assignments.iter() {
        w.write_record([id, labels.name(class)]).expect("in-memory write");
    }
    finish(w)
}
