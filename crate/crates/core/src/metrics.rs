//! Confusion matrices and precision / recall / F1 aggregates.
//!
//! Conventions:
//! - any 0/0 quotient in precision, recall or F1 is 0;
//! - classes with zero gold support are left out of both the weighted and the
//!   macro average (a label absent from a split must not drag macro-F1 down).

use std::fmt::{self, Write as _};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::ensemble::{ClassAssignments, GoldLabels, LabelSet};
use crate::error::{Error, Result};

/// `counts[i][j]` = number of examples of gold class `i` predicted as `j`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    n_classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn zeros(n_classes: usize) -> Self {
        ConfusionMatrix {
            n_classes,
            counts: vec![0; n_classes * n_classes],
        }
    }

    /// Builds a matrix from aligned gold/predicted class indices.
    pub fn from_pairs(n_classes: usize, pairs: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut cm = ConfusionMatrix::zeros(n_classes);
        for (g, p) in pairs {
            cm.record(g, p);
        }
        cm
    }

    #[inline]
    pub fn record(&mut self, gold: usize, pred: usize) {
        self.counts[gold * self.n_classes + pred] += 1;
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn get(&self, gold: usize, pred: usize) -> u64 {
        self.counts[gold * self.n_classes + pred]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn support(&self, class: usize) -> u64 {
        (0..self.n_classes).map(|j| self.get(class, j)).sum()
    }

    pub fn predicted(&self, class: usize) -> u64 {
        (0..self.n_classes).map(|i| self.get(i, class)).sum()
    }

    pub fn to_rows(&self) -> Vec<Vec<u64>> {
        self.counts
            .chunks_exact(self.n_classes)
            .map(<[u64]>::to_vec)
            .collect()
    }

    pub fn per_class(&self) -> Vec<ClassScores> {
        per_class_prf(self)
    }

    pub fn accuracy(&self) -> f64 {
        let total = self.total();
        if total == 0 {
            return 0.0;
        }
        let correct: u64 = (0..self.n_classes).map(|c| self.get(c, c)).sum();
        correct as f64 / total as f64
    }

    pub fn weighted_f1(&self) -> f64 {
        weighted_mean(&self.per_class(), self.total())
    }

    pub fn macro_f1(&self) -> f64 {
        macro_mean(&self.per_class())
    }

    pub fn score(&self, metric: Metric) -> f64 {
        match metric {
            Metric::WeightedF1 => self.weighted_f1(),
            Metric::MacroF1 => self.macro_f1(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Joins `pred` onto `gold` by example id and counts (gold, predicted) pairs.
pub fn confusion(gold: &GoldLabels, pred: &ClassAssignments) -> Result<ConfusionMatrix> {
    if gold.is_empty() || pred.is_empty() {
        return Err(Error::data("no examples"));
    }
    if gold.n_classes() != pred.n_classes() {
        return Err(Error::data(format!(
            "gold has {} classes, predictions have {}",
            gold.n_classes(),
            pred.n_classes()
        )));
    }
    let predicted = pred.by_id();
    let mut cm = ConfusionMatrix::zeros(gold.n_classes());
    for (id, g) in gold.iter() {
        let p = predicted
            .get(id)
            .ok_or_else(|| Error::data(format!("no prediction for gold id '{id}'")))?;
        cm.record(g, *p);
    }
    if pred.len() != gold.len() {
        let gold_ids = gold.by_id();
        let extra = pred
            .ids()
            .iter()
            .find(|id| !gold_ids.contains_key(id.as_str()))
            .cloned()
            .unwrap_or_default();
        return Err(Error::data(format!(
            "{} predictions for {} gold examples (e.g. '{extra}' has no gold label)",
            pred.len(),
            gold.len()
        )));
    }
    Ok(cm)
}

/// Precision, recall, F1 and support for every class.
pub fn per_class_prf(cm: &ConfusionMatrix) -> Vec<ClassScores> {
    (0..cm.n_classes())
        .map(|c| {
            let tp = cm.get(c, c) as f64;
            let support = cm.support(c);
            let precision = ratio(tp, cm.predicted(c) as f64);
            let recall = ratio(tp, support as f64);
            let f1 = ratio(2.0 * precision * recall, precision + recall);
            ClassScores {
                precision,
                recall,
                f1,
                support,
            }
        })
        .collect()
}

fn weighted_mean(scores: &[ClassScores], total: u64) -> f64 {
    if total == 0 {
        return 0.0;
    }
    // sum of support·F1 divided once, so a perfect prediction scores exactly 1
    let weighted: f64 = scores
        .iter()
        .filter(|s| s.support > 0)
        .map(|s| s.support as f64 * s.f1)
        .sum();
    weighted / total as f64
}

fn macro_mean(scores: &[ClassScores]) -> f64 {
    let present: Vec<f64> = scores.iter().filter(|s| s.support > 0).map(|s| s.f1).collect();
    if present.is_empty() {
        0.0
    } else {
        present.iter().sum::<f64>() / present.len() as f64
    }
}

/// Support-weighted mean of per-class F1.
pub fn weighted_f1(gold: &GoldLabels, pred: &ClassAssignments) -> Result<f64> {
    Ok(confusion(gold, pred)?.weighted_f1())
}

/// Unweighted mean of per-class F1 over classes present in `gold`.
pub fn macro_f1(gold: &GoldLabels, pred: &ClassAssignments) -> Result<f64> {
    Ok(confusion(gold, pred)?.macro_f1())
}

pub fn accuracy(gold: &GoldLabels, pred: &ClassAssignments) -> Result<f64> {
    Ok(confusion(gold, pred)?.accuracy())
}

/// The metric a weight search maximizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    #[default]
    WeightedF1,
    MacroF1,
}

impl Metric {
    pub fn evaluate(self, gold: &GoldLabels, pred: &ClassAssignments) -> Result<f64> {
        Ok(confusion(gold, pred)?.score(self))
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Metric::WeightedF1 => "weighted_f1",
            Metric::MacroF1 => "macro_f1",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "weighted_f1" | "weighted" => Ok(Metric::WeightedF1),
            "macro_f1" | "macro" => Ok(Metric::MacroF1),
            other => Err(Error::config(format!(
                "unknown metric '{other}' (expected weighted_f1 or macro_f1)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassReport {
    pub label: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

/// Everything `eval` reports, in the JSON layout consumed downstream.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub per_class: Vec<ClassReport>,
    pub weighted_f1: f64,
    pub macro_f1: f64,
    pub accuracy: f64,
    pub confusion: Vec<Vec<u64>>,
}

pub fn full_report(
    gold: &GoldLabels,
    pred: &ClassAssignments,
    labels: &LabelSet,
) -> Result<MetricsReport> {
    if labels.len() != gold.n_classes() {
        return Err(Error::config(format!(
            "label set has {} classes, gold labels have {}",
            labels.len(),
            gold.n_classes()
        )));
    }
    let cm = confusion(gold, pred)?;
    let scores = cm.per_class();
    Ok(MetricsReport {
        per_class: scores
            .iter()
            .enumerate()
            .map(|(c, s)| ClassReport {
                label: labels.name(c).to_string(),
                precision: s.precision,
                recall: s.recall,
                f1: s.f1,
                support: s.support,
            })
            .collect(),
        weighted_f1: weighted_mean(&scores, cm.total()),
        macro_f1: macro_mean(&scores),
        accuracy: cm.accuracy(),
        confusion: cm.to_rows(),
    })
}

/// Rounds half-to-even at 4 decimals and formats with exactly 4 decimals.
pub fn format_score(x: f64) -> String {
    format!("{:.4}", (x * 1e4).round_ties_even() / 1e4)
}

impl MetricsReport {
    /// Aligned plain-text rendering with 4-decimal figures.
    pub fn to_text(&self) -> String {
        let width = self
            .per_class
            .iter()
            .map(|c| c.label.chars().count())
            .chain(std::iter::once("weighted avg".len()))
            .max()
            .unwrap_or(0);
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<width$}  {:>9}  {:>9}  {:>9}  {:>8}",
            "label", "precision", "recall", "f1", "support"
        );
        let total: u64 = self.per_class.iter().map(|c| c.support).sum();
        for c in &self.per_class {
            let _ = writeln!(
                out,
                "{:<width$}  {:>9}  {:>9}  {:>9}  {:>8}",
                c.label,
                format_score(c.precision),
                format_score(c.recall),
                format_score(c.f1),
                c.support
            );
        }
        out.push('\n');
        let _ = writeln!(out, "{:<width$}  {:>31}  {:>8}", "accuracy", format_score(self.accuracy), total);
        let _ = writeln!(out, "{:<width$}  {:>31}  {:>8}", "macro f1", format_score(self.macro_f1), total);
        let _ = writeln!(out, "{:<width$}  {:>31}  {:>8}", "weighted f1", format_score(self.weighted_f1), total);
        out
    }
}
