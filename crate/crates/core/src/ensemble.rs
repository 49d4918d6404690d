//! Labels, per-model prediction matrices, model pools and weighted soft voting.
//!
//! Every matrix in a run shares one [`LabelSet`]; examples are joined across
//! models and gold labels by id, never by row position.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;

use crate::error::{Error, Result};

/// Maximum deviation of a probability row sum from 1 accepted by validation.
pub const ROW_SUM_TOLERANCE: f64 = 1e-6;
/// Rows whose sum lies within this distance of 1 are silently renormalized on ingestion.
pub const RENORMALIZE_BAND: f64 = 1e-3;
/// Maximum deviation of an ensemble weight vector sum from 1.
pub const WEIGHT_SUM_TOLERANCE: f64 = 1e-9;

/// The six labels of the Dravidian offensive-language shared task, in reporting order.
pub const CANONICAL_LABELS: [&str; 6] = [
    "not-offensive",
    "offensive-untargeted",
    "offensive-targeted-individual",
    "offensive-targeted-group",
    "offensive-targeted-other",
    "not-in-indented-language",
];

// Spellings found in the released shared-task files, after folding.
const LABEL_ALIASES: [(&str, &str); 8] = [
    ("offensive-untargetede", "offensive-untargeted"),
    ("offensive-targeted-insult-individual", "offensive-targeted-individual"),
    ("offensive-targeted-insult-group", "offensive-targeted-group"),
    ("offensive-targeted-insult-other", "offensive-targeted-other"),
    ("not-in-intended-language", "not-in-indented-language"),
    ("not-tamil", "not-in-indented-language"),
    ("not-kannada", "not-in-indented-language"),
    ("not-malayalam", "not-in-indented-language"),
];

fn casefold(s: &str) -> String {
    s.trim().to_lowercase()
}

fn fold_separators(s: &str) -> String {
    casefold(s)
        .chars()
        .map(|c| if c == '_' || c.is_whitespace() { '-' } else { c })
        .collect()
}

/// Ordered list of class names, shared by every matrix and label list in a run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelSet {
    names: Vec<String>,
}

impl LabelSet {
    pub fn new<S: AsRef<str>>(names: &[S]) -> Result<Self> {
        if names.len() < 2 {
            return Err(Error::config(format!(
                "a label set needs at least 2 classes, got {}",
                names.len()
            )));
        }
        let mut seen = HashSet::new();
        for name in names {
            let key = casefold(name.as_ref());
            if key.is_empty() {
                return Err(Error::config("empty class name in label set"));
            }
            if !seen.insert(key) {
                return Err(Error::config(format!(
                    "duplicate class name '{}' in label set",
                    name.as_ref().trim()
                )));
            }
        }
        Ok(LabelSet {
            names: names.iter().map(|n| n.as_ref().trim().to_string()).collect(),
        })
    }

    /// The six shared-task labels.
    pub fn canonical() -> Self {
        LabelSet::new(&CANONICAL_LABELS).expect("canonical labels are valid")
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, index: usize) -> &str {
        &self.names[index]
    }

    /// Case-insensitive lookup. Falls back to separator folding (`_`, space, `-`
    /// are equivalent) and then to the known shared-task spelling variants.
    pub fn index_of(&self, label: &str) -> Option<usize> {
        let key = casefold(label);
        if let Some(i) = self.names.iter().position(|n| casefold(n) == key) {
            return Some(i);
        }
        let folded = fold_separators(label);
        let find = |k: &str| self.names.iter().position(|n| fold_separators(n) == k);
        if let Some(i) = find(&folded) {
            return Some(i);
        }
        LABEL_ALIASES
            .iter()
            .find(|(variant, _)| *variant == folded)
            .and_then(|(_, canonical)| find(canonical))
    }
}

/// An ordered list of (example id, class index) pairs.
///
/// Used both for gold labels and for hard predictions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassAssignments {
    n_classes: usize,
    ids: Vec<String>,
    classes: Vec<usize>,
}

pub type GoldLabels = ClassAssignments;

impl ClassAssignments {
    pub fn new(n_classes: usize, entries: Vec<(String, usize)>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(entries.len());
        let mut ids = Vec::with_capacity(entries.len());
        let mut classes = Vec::with_capacity(entries.len());
        for (id, class) in entries {
            if class >= n_classes {
                return Err(Error::data(format!(
                    "class index {class} for id '{id}' is out of range for {n_classes} classes"
                )));
            }
            if !seen.insert(id.clone()) {
                return Err(Error::data(format!("duplicate example id '{id}'")));
            }
            ids.push(id);
            classes.push(class);
        }
        Ok(ClassAssignments {
            n_classes,
            ids,
            classes,
        })
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn classes(&self) -> &[usize] {
        &self.classes
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, usize)> {
        self.ids.iter().map(String::as_str).zip(self.classes.iter().copied())
    }

    /// Lookup table from id to class index.
    pub fn by_id(&self) -> HashMap<&str, usize> {
        self.iter().collect()
    }
}

/// One model's class distribution for every example of a split.
///
/// Construction only checks shape; probability invariants are checked by
/// [`PredictionMatrix::diagnose`] and [`validate_pool`] so that bad inputs can
/// be reported rather than rejected outright.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionMatrix {
    model_name: String,
    split_name: String,
    n_classes: usize,
    ids: Vec<String>,
    values: Vec<f64>,
    index: HashMap<String, usize>,
}

impl PredictionMatrix {
    pub fn new(
        model_name: impl Into<String>,
        split_name: impl Into<String>,
        n_classes: usize,
        rows: Vec<(String, Vec<f64>)>,
    ) -> Result<Self> {
        let model_name = model_name.into();
        if n_classes == 0 {
            return Err(Error::config("prediction matrix needs at least one class"));
        }
        let mut ids = Vec::with_capacity(rows.len());
        let mut values = Vec::with_capacity(rows.len() * n_classes);
        let mut index = HashMap::with_capacity(rows.len());
        for (id, row) in rows {
            if row.len() != n_classes {
                return Err(Error::data(format!(
                    "model '{model_name}': row '{id}' has {} values, expected {n_classes}",
                    row.len()
                )));
            }
            if index.insert(id.clone(), ids.len()).is_some() {
                return Err(Error::data(format!(
                    "model '{model_name}': duplicate example id '{id}'"
                )));
            }
            ids.push(id);
            values.extend(row);
        }
        Ok(PredictionMatrix {
            model_name,
            split_name: split_name.into(),
            n_classes,
            ids,
            values,
            index,
        })
    }

    pub fn model_name(&self) -> &str {
        &self.model_name
    }

    pub fn split_name(&self) -> &str {
        &self.split_name
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n_classes..(i + 1) * self.n_classes]
    }

    pub fn row_by_id(&self, id: &str) -> Option<&[f64]> {
        self.index.get(id).map(|&i| self.row(i))
    }

    pub fn rows(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.ids
            .iter()
            .map(String::as_str)
            .zip(self.values.chunks_exact(self.n_classes))
    }

    pub fn with_model_name(mut self, name: impl Into<String>) -> Self {
        self.model_name = name.into();
        self
    }

    /// Divides each row by its sum when the sum lies within `band` of 1.
    /// Rows outside the band are left untouched for validation to report.
    pub fn renormalized(mut self, band: f64) -> Self {
        for row in self.values.chunks_exact_mut(self.n_classes) {
            let sum: f64 = row.iter().sum();
            if sum.is_finite() && (sum - 1.0).abs() <= band && sum != 1.0 {
                row.iter_mut().for_each(|v| *v /= sum);
            }
        }
        self
    }

    /// Probability-invariant violations of this matrix in isolation.
    pub fn diagnose(&self) -> Vec<Diagnostic> {
        let mut out = Vec::new();
        for (id, row) in self.rows() {
            let diag = |kind, detail: String| Diagnostic {
                model: self.model_name.clone(),
                kind,
                example_id: Some(id.to_string()),
                detail,
            };
            if row.iter().any(|v| !v.is_finite()) {
                out.push(diag(DiagnosticKind::NonFinite, format!("{row:?}")));
                continue;
            }
            if row.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
                out.push(diag(DiagnosticKind::OutOfRange, format!("{row:?}")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                out.push(diag(DiagnosticKind::RowSum, format!("sum {sum}")));
            }
        }
        out
    }
}

/// Row-wise numerically stable softmax over exported logits.
pub fn softmax_rows(raw: &PredictionMatrix) -> Result<PredictionMatrix> {
    let mut rows = Vec::with_capacity(raw.len());
    for (id, logits) in raw.rows() {
        if logits.iter().any(|v| !v.is_finite()) {
            return Err(Error::data(format!(
                "model '{}': non-finite logit in row '{id}'",
                raw.model_name()
            )));
        }
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logits.iter().map(|&x| (x - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        rows.push((id.to_string(), exps.into_iter().map(|e| e / total).collect()));
    }
    PredictionMatrix::new(raw.model_name(), raw.split_name(), raw.n_classes(), rows)
}

/// Prediction matrices of several models over the same split.
#[derive(Debug, Clone)]
pub struct ModelPool {
    models: Vec<PredictionMatrix>,
    set_tags: BTreeMap<String, String>,
    summation_order: Vec<usize>,
}

impl ModelPool {
    pub fn new(models: Vec<PredictionMatrix>, set_tags: BTreeMap<String, String>) -> Result<Self> {
        let first = models
            .first()
            .ok_or_else(|| Error::config("model pool is empty"))?;
        let mut names = HashSet::new();
        for m in &models {
            if !names.insert(m.model_name()) {
                return Err(Error::config(format!(
                    "duplicate model name '{}' in pool",
                    m.model_name()
                )));
            }
            if m.n_classes() != first.n_classes() {
                return Err(Error::data(format!(
                    "model '{}' has {} classes, model '{}' has {}",
                    m.model_name(),
                    m.n_classes(),
                    first.model_name(),
                    first.n_classes()
                )));
            }
            if m.split_name() != first.split_name() {
                return Err(Error::data(format!(
                    "model '{}' is for split '{}', pool split is '{}'",
                    m.model_name(),
                    m.split_name(),
                    first.split_name()
                )));
            }
        }
        let mut summation_order: Vec<usize> = (0..models.len()).collect();
        summation_order.sort_by(|&a, &b| models[a].model_name().cmp(models[b].model_name()));
        Ok(ModelPool {
            models,
            set_tags,
            summation_order,
        })
    }

    /// A pool without set tags.
    pub fn untagged(models: Vec<PredictionMatrix>) -> Result<Self> {
        ModelPool::new(models, BTreeMap::new())
    }

    pub fn models(&self) -> &[PredictionMatrix] {
        &self.models
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    pub fn n_classes(&self) -> usize {
        self.models[0].n_classes()
    }

    pub fn split_name(&self) -> &str {
        self.models[0].split_name()
    }

    pub fn model_names(&self) -> Vec<String> {
        self.models.iter().map(|m| m.model_name().to_string()).collect()
    }

    pub fn set_tags(&self) -> &BTreeMap<String, String> {
        &self.set_tags
    }

    pub fn tag_of(&self, model: &str) -> Option<&str> {
        self.set_tags.get(model).map(String::as_str)
    }

    /// Model indices sorted by model name.
    ///
    /// Ensemble sums are accumulated in this order so that results do not
    /// depend on the order in which models were listed.
    pub fn summation_order(&self) -> &[usize] {
        &self.summation_order
    }

    /// The sub-pool of models carrying `tag`; `"all"` and `"overall"` keep every model.
    pub fn select_set(&self, tag: &str) -> Result<ModelPool> {
        if tag.eq_ignore_ascii_case("all") || tag.eq_ignore_ascii_case("overall") {
            return Ok(self.clone());
        }
        let models: Vec<_> = self
            .models
            .iter()
            .filter(|m| self.tag_of(m.model_name()) == Some(tag))
            .cloned()
            .collect();
        if models.is_empty() {
            let mut known: Vec<&str> = self.set_tags.values().map(String::as_str).collect();
            known.sort_unstable();
            known.dedup();
            return Err(Error::config(format!(
                "unknown model set '{tag}' (known: {})",
                known.join(", ")
            )));
        }
        ModelPool::new(models, self.set_tags.clone())
    }

    /// Reorders models so that position `i` holds the model previously at `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<ModelPool> {
        let mut check = perm.to_vec();
        check.sort_unstable();
        if check != (0..self.len()).collect::<Vec<_>>() {
            return Err(Error::config("not a permutation of the pool's models"));
        }
        ModelPool::new(
            perm.iter().map(|&i| self.models[i].clone()).collect(),
            self.set_tags.clone(),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiagnosticKind {
    ClassCount,
    NonFinite,
    OutOfRange,
    RowSum,
    IdCoverage,
}

impl fmt::Display for DiagnosticKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DiagnosticKind::ClassCount => "class count mismatch",
            DiagnosticKind::NonFinite => "non-finite probability",
            DiagnosticKind::OutOfRange => "probability outside [0, 1]",
            DiagnosticKind::RowSum => "row-sum out of tolerance",
            DiagnosticKind::IdCoverage => "id coverage mismatch",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostic {
    pub model: String,
    pub kind: DiagnosticKind,
    pub example_id: Option<String>,
    pub detail: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "model '{}': {}", self.model, self.kind)?;
        if let Some(id) = &self.example_id {
            write!(f, " at id '{id}'")?;
        }
        if !self.detail.is_empty() {
            write!(f, " ({})", self.detail)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub models_checked: usize,
    pub diagnostics: Vec<Diagnostic>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.diagnostics.is_empty()
    }
}

/// Checks every matrix's probability invariants and its id coverage against `gold`.
pub fn validate_pool(pool: &ModelPool, gold: &GoldLabels) -> ValidationReport {
    let gold_ids: HashSet<&str> = gold.ids().iter().map(String::as_str).collect();
    let mut diagnostics = Vec::new();
    for m in pool.models() {
        if m.n_classes() != gold.n_classes() {
            diagnostics.push(Diagnostic {
                model: m.model_name().to_string(),
                kind: DiagnosticKind::ClassCount,
                example_id: None,
                detail: format!("{} columns, label set has {}", m.n_classes(), gold.n_classes()),
            });
        }
        diagnostics.extend(m.diagnose());

        let missing: Vec<&str> = gold
            .ids()
            .iter()
            .map(String::as_str)
            .filter(|id| m.row_by_id(id).is_none())
            .collect();
        let extra: Vec<&str> = m
            .ids()
            .iter()
            .map(String::as_str)
            .filter(|id| !gold_ids.contains(id))
            .collect();
        if !missing.is_empty() || !extra.is_empty() {
            let mut detail = Vec::new();
            if let Some(first) = missing.first() {
                detail.push(format!("{} gold ids missing, e.g. '{first}'", missing.len()));
            }
            if let Some(first) = extra.first() {
                detail.push(format!("{} ids not in gold, e.g. '{first}'", extra.len()));
            }
            diagnostics.push(Diagnostic {
                model: m.model_name().to_string(),
                kind: DiagnosticKind::IdCoverage,
                example_id: missing.first().or(extra.first()).map(|s| s.to_string()),
                detail: detail.join("; "),
            });
        }
    }
    ValidationReport {
        models_checked: pool.len(),
        diagnostics,
    }
}

/// A point on the probability simplex, one weight per pool model.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleWeights(Vec<f64>);

impl EnsembleWeights {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::config("weight vector is empty"));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::config(format!(
                "weights must be finite and nonnegative: {weights:?}"
            )));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
            return Err(Error::config(format!("weights sum to {sum}, expected 1")));
        }
        Ok(EnsembleWeights(weights))
    }

    /// Scales a nonnegative vector with at least one positive entry onto the simplex.
    pub fn normalize(raw: &[f64]) -> Result<Self> {
        if raw.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::config(format!(
                "raw weights must be finite and nonnegative: {raw:?}"
            )));
        }
        let sum: f64 = raw.iter().sum();
        if sum <= 0.0 {
            return Err(Error::config("raw weights have no positive entry"));
        }
        Ok(EnsembleWeights(raw.iter().map(|w| w / sum).collect()))
    }

    pub fn uniform(m: usize) -> Self {
        EnsembleWeights(vec![1.0 / m as f64; m])
    }

    pub fn one_hot(m: usize, index: usize) -> Self {
        let mut w = vec![0.0; m];
        w[index] = 1.0;
        EnsembleWeights(w)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

/// Soft voting: per example, the weighted sum of the models' class distributions.
///
/// Rows follow the first model's id order; other models are joined by id.
pub fn weighted_average(pool: &ModelPool, weights: &EnsembleWeights) -> Result<PredictionMatrix> {
    if weights.len() != pool.len() {
        return Err(Error::config(format!(
            "{} weights given for a pool of {} models",
            weights.len(),
            pool.len()
        )));
    }
    let c = pool.n_classes();
    let lead = &pool.models()[0];
    let w = weights.as_slice();
    let mut rows = Vec::with_capacity(lead.len());
    for id in lead.ids() {
        let mut acc = vec![0.0; c];
        for &m in pool.summation_order() {
            let model = &pool.models()[m];
            let row = model.row_by_id(id).ok_or_else(|| {
                Error::data(format!(
                    "model '{}' has no row for id '{id}'",
                    model.model_name()
                ))
            })?;
            for (a, p) in acc.iter_mut().zip(row) {
                *a += w[m] * p;
            }
        }
        rows.push((id.clone(), acc));
    }
    for model in pool.models() {
        if model.len() != lead.len() {
            return Err(Error::data(format!(
                "model '{}' covers {} examples, model '{}' covers {}",
                model.model_name(),
                model.len(),
                lead.model_name(),
                lead.len()
            )));
        }
    }
    PredictionMatrix::new("ensemble", pool.split_name(), c, rows)
}

/// Plain prediction averaging with equal weights.
pub fn uniform_average(pool: &ModelPool) -> Result<PredictionMatrix> {
    weighted_average(pool, &EnsembleWeights::uniform(pool.len()))
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Hard class decisions for every row of a matrix.
pub fn argmax_labels(m: &PredictionMatrix) -> ClassAssignments {
    let entries = m.rows().map(|(id, row)| (id.to_string(), argmax(row))).collect();
    ClassAssignments::new(m.n_classes(), entries).expect("matrix ids are unique")
}
