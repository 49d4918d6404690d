//! Corpus bookkeeping: per-label class counts and out-of-vocabulary rates.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;
use unicode_general_category::{get_general_category, GeneralCategory};

use crate::ensemble::LabelSet;
use crate::error::{Error, Result};

/// Bucket for labels outside the label set.
pub const OTHER_LABEL: &str = "other";

const HEADER_NAMES: [&str; 8] = [
    "text", "label", "labels", "tweet", "tweets", "comment", "category", "id",
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusRecord {
    pub text: String,
    pub label: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorpusFormat {
    /// `text<TAB>label`, header optional.
    Tsv,
    /// Comma-separated `text,label` with standard quoting, header optional.
    Csv,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnknownLabel {
    pub line: u64,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct LoadedCorpus {
    pub records: Vec<CorpusRecord>,
    /// Labels not found in the label set; the records are kept.
    pub unknown_labels: Vec<UnknownLabel>,
}

fn looks_like_header(fields: &[&str], labels: &LabelSet) -> bool {
    fields.iter().any(|f| {
        let f = f.trim().to_lowercase();
        HEADER_NAMES.contains(&f.as_str())
    }) && fields.get(1).is_none_or(|l| labels.index_of(l).is_none())
}

/// Reads a labelled corpus. The first row is skipped when it looks like a header.
pub fn load_corpus(path: &Path, format: CorpusFormat, labels: &LabelSet) -> Result<LoadedCorpus> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let text = String::from_utf8(bytes)
        .map_err(|e| Error::data(format!("{}: not valid UTF-8 ({e})", path.display())))?;
    parse_corpus(&text, format, labels)
}

pub fn parse_corpus(text: &str, format: CorpusFormat, labels: &LabelSet) -> Result<LoadedCorpus> {
    let mut builder = csv::ReaderBuilder::new();
    builder.has_headers(false).flexible(true);
    match format {
        CorpusFormat::Tsv => builder.delimiter(b'\t').quoting(false),
        CorpusFormat::Csv => builder.delimiter(b','),
    };
    let mut reader = builder.from_reader(text.as_bytes());
    let mut out = LoadedCorpus::default();
    let mut first = true;
    for row in reader.records() {
        let row = row.map_err(|e| Error::data(format!("corpus parse error: {e}")))?;
        let line = row.position().map_or(0, |p| p.line());
        let fields: Vec<&str> = row.iter().map(|f| f.trim_end_matches('\r')).collect();
        if fields.iter().all(|f| f.trim().is_empty()) {
            continue;
        }
        if std::mem::take(&mut first) && looks_like_header(&fields, labels) {
            continue;
        }
        if fields.len() < 2 || fields[1].trim().is_empty() {
            return Err(Error::data(format!("line {line}: missing label column")));
        }
        let text = fields[0].trim();
        if text.is_empty() {
            return Err(Error::data(format!("line {line}: empty text")));
        }
        let label = fields[1].trim().to_string();
        if labels.index_of(&label).is_none() {
            out.unknown_labels.push(UnknownLabel {
                line,
                label: label.clone(),
            });
        }
        out.records.push(CorpusRecord {
            text: text.to_string(),
            label,
        });
    }
    Ok(out)
}

/// Per-label counts for each split, in label-set order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ClassCountTable {
    pub labels: Vec<String>,
    pub splits: Vec<SplitCounts>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SplitCounts {
    pub split: String,
    /// One entry per label, in table order.
    pub counts: Vec<u64>,
    /// Records whose label is outside the label set.
    pub other: u64,
    pub total: u64,
}

pub fn class_counts(records: &[CorpusRecord], labels: &LabelSet) -> SplitCounts {
    let mut counts = vec![0u64; labels.len()];
    let mut other = 0;
    for r in records {
        match labels.index_of(&r.label) {
            Some(i) => counts[i] += 1,
            None => other += 1,
        }
    }
    SplitCounts {
        split: String::new(),
        total: counts.iter().sum::<u64>() + other,
        counts,
        other,
    }
}

impl ClassCountTable {
    pub fn new(labels: &LabelSet) -> Self {
        ClassCountTable {
            labels: labels.names().to_vec(),
            splits: Vec::new(),
        }
    }

    pub fn add_split(&mut self, name: impl Into<String>, records: &[CorpusRecord], labels: &LabelSet) {
        let mut counts = class_counts(records, labels);
        counts.split = name.into();
        self.splits.push(counts);
    }

    /// Aligned text table: one row per label, one column per split, then totals.
    pub fn to_text(&self) -> String {
        let show_other = self.splits.iter().any(|s| s.other > 0);
        let mut row_names: Vec<&str> = self.labels.iter().map(String::as_str).collect();
        if show_other {
            row_names.push(OTHER_LABEL);
        }
        row_names.push("Total");
        let name_width = row_names.iter().map(|n| n.chars().count()).max().unwrap_or(5).max(5);
        let col_width = self
            .splits
            .iter()
            .map(|s| s.split.chars().count().max(s.total.to_string().len()))
            .max()
            .unwrap_or(5)
            .max(5);

        let mut out = String::new();
        let _ = write!(out, "{:<name_width$}", "label");
        for s in &self.splits {
            let _ = write!(out, "  {:>col_width$}", s.split);
        }
        out.push('\n');
        for (i, name) in row_names.iter().enumerate() {
            let _ = write!(out, "{name:<name_width$}");
            for s in &self.splits {
                let v = if i < self.labels.len() {
                    s.counts[i]
                } else if show_other && i == self.labels.len() {
                    s.other
                } else {
                    s.total
                };
                let _ = write!(out, "  {v:>col_width$}");
            }
            out.push('\n');
        }
        out
    }
}

fn is_punctuation(c: char) -> bool {
    matches!(
        get_general_category(c),
        GeneralCategory::ConnectorPunctuation
            | GeneralCategory::DashPunctuation
            | GeneralCategory::OpenPunctuation
            | GeneralCategory::ClosePunctuation
            | GeneralCategory::InitialPunctuation
            | GeneralCategory::FinalPunctuation
            | GeneralCategory::OtherPunctuation
    )
}

/// Whitespace split, edge punctuation stripped, lowercased; empty and
/// all-digit tokens are dropped.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|piece| piece.trim_matches(is_punctuation).to_lowercase())
        .filter(|t| !t.is_empty() && !t.chars().all(char::is_numeric))
        .collect()
}

pub const TOKENIZER_DESCRIPTION: &str =
    "unicode-whitespace split; strip edge unicode punctuation (P*); lowercase; drop empty and all-digit tokens";

/// Loads a vocabulary: one entry per line (first tab-separated field), lowercased.
pub fn load_vocabulary(path: &Path) -> Result<HashSet<String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(parse_vocabulary(&text))
}

pub fn parse_vocabulary(text: &str) -> HashSet<String> {
    text.lines()
        .filter_map(|line| line.split('\t').next())
        .map(|w| w.trim().to_lowercase())
        .filter(|w| !w.is_empty())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum OovUnit {
    /// Distinct word types.
    Types,
    /// Every token occurrence.
    Tokens,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OovReport {
    pub unit: OovUnit,
    pub total: u64,
    pub oov: u64,
    pub oov_rate: f64,
    pub vocabulary_size: usize,
    pub tokenizer: String,
}

/// Share of corpus words absent from `vocab`.
pub fn oov_rate(records: &[CorpusRecord], vocab: &HashSet<String>, unit: OovUnit) -> Result<OovReport> {
    if records.is_empty() {
        return Err(Error::data("OOV rate of an empty corpus is undefined"));
    }
    if vocab.is_empty() {
        return Err(Error::data("vocabulary is empty"));
    }
    let tokens = records.iter().flat_map(|r| tokenize(&r.text));
    let (total, oov) = match unit {
        OovUnit::Types => {
            let types: HashSet<String> = tokens.collect();
            let oov = types.iter().filter(|t| !vocab.contains(*t)).count();
            (types.len() as u64, oov as u64)
        }
        OovUnit::Tokens => tokens.fold((0u64, 0u64), |(n, o), t| {
            (n + 1, o + u64::from(!vocab.contains(&t)))
        }),
    };
    if total == 0 {
        return Err(Error::data("corpus contains no word tokens"));
    }
    Ok(OovReport {
        unit,
        total,
        oov,
        oov_rate: oov as f64 / total as f64,
        vocabulary_size: vocab.len(),
        tokenizer: TOKENIZER_DESCRIPTION.to_string(),
    })
}

/// Counts labels verbatim, without mapping to a label set. Handy for spotting variants.
pub fn raw_label_histogram(records: &[CorpusRecord]) -> BTreeMap<String, u64> {
    let mut out = BTreeMap::new();
    for r in records {
        *out.entry(r.label.clone()).or_insert(0) += 1;
    }
    out
}
