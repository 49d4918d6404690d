//! Seeded synthetic model pools for tests and demos.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ensemble::{ClassAssignments, GoldLabels, ModelPool, PredictionMatrix};
use crate::error::{Error, Result};

/// Set tags handed out round-robin to synthetic models.
pub const DEFAULT_SET_TAGS: [&str; 3] = ["Transformers", "F-models", "R-models"];

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub seed: u64,
    pub n_examples: usize,
    pub n_classes: usize,
    /// Probability that each model puts its peak on the gold class; one entry per model.
    pub accuracies: Vec<f64>,
    pub split: String,
    /// Independent random stream for this split, so dev and test share a distribution
    /// but not their draws.
    pub stream: u64,
}

impl SynthSpec {
    pub fn new(seed: u64, n_examples: usize, n_classes: usize, accuracies: Vec<f64>) -> Self {
        SynthSpec {
            seed,
            n_examples,
            n_classes,
            accuracies,
            split: "dev".into(),
            stream: 0,
        }
    }

    pub fn with_split(mut self, split: impl Into<String>, stream: u64) -> Self {
        self.split = split.into();
        self.stream = stream;
        self
    }
}

pub fn model_name(index: usize) -> String {
    format!("model_{index}")
}

pub fn example_id(split: &str, index: usize) -> String {
    format!("{split}-{index:06}")
}

/// Draws gold labels uniformly over the classes, then for each model a class
/// distribution peaked on the gold class with probability `accuracies[m]` and on
/// a uniformly chosen wrong class otherwise.
///
/// The peak entry gets `U(0,1) + 1 + 2·U(0,1)` against `U(0,1)` for every other
/// class before normalization, so the argmax is always the chosen peak while
/// confidence varies across examples.
pub fn synth_generate(spec: &SynthSpec) -> Result<(ModelPool, GoldLabels)> {
    let SynthSpec {
        seed,
        n_examples: n,
        n_classes: c,
        ref accuracies,
        ref split,
        stream,
    } = *spec;
    if n < 1 {
        return Err(Error::config("synthetic split needs at least 1 example"));
    }
    if c < 2 {
        return Err(Error::config("synthetic data needs at least 2 classes"));
    }
    if accuracies.is_empty() {
        return Err(Error::config("synthetic data needs at least 1 model"));
    }
    if let Some(a) = accuracies.iter().find(|a| !(0.0..=1.0).contains(*a)) {
        return Err(Error::config(format!("accuracy {a} is outside [0, 1]")));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);

    let ids: Vec<String> = (0..n).map(|i| example_id(split, i)).collect();
    let gold: Vec<usize> = (0..n).map(|_| rng.random_range(0..c)).collect();

    let mut models = Vec::with_capacity(accuracies.len());
    let mut tags = BTreeMap::new();
    for (m, &acc) in accuracies.iter().enumerate() {
        let mut rows = Vec::with_capacity(n);
        for (id, &y) in ids.iter().zip(&gold) {
            let correct = rng.random::<f64>() < acc;
            let peak = if correct {
                y
            } else {
                let k = rng.random_range(0..c - 1);
                if k >= y {
                    k + 1
                } else {
                    k
                }
            };
            let mut row: Vec<f64> = (0..c).map(|_| rng.random::<f64>()).collect();
            row[peak] += 1.0 + 2.0 * rng.random::<f64>();
            let total: f64 = row.iter().sum();
            row.iter_mut().for_each(|v| *v /= total);
            rows.push((id.clone(), row));
        }
        let name = model_name(m);
        tags.insert(name.clone(), DEFAULT_SET_TAGS[m % DEFAULT_SET_TAGS.len()].to_string());
        models.push(PredictionMatrix::new(name, split.clone(), c, rows)?);
    }

    let gold = ClassAssignments::new(c, ids.into_iter().zip(gold).collect())?;
    Ok((ModelPool::new(models, tags)?, gold))
}
