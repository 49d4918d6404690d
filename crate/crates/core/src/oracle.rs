//! Exhaustive search over a regular grid on the weight simplex.
//!
//! Only practical for a handful of models; it exists to check the genetic
//! search on small instances.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ensemble::{EnsembleWeights, GoldLabels, ModelPool};
use crate::error::{Error, Result};
use crate::ga::FitnessEvaluator;
use crate::metrics::Metric;

pub const DEFAULT_GRID_CAP: u128 = 10_000_000;
const CHUNK: usize = 1 << 14;

/// Grid with spacing `1/divisions` over `n_models` weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    pub divisions: u32,
    pub n_models: usize,
}

impl GridSpec {
    pub fn new(divisions: u32, n_models: usize) -> Result<Self> {
        if divisions < 1 {
            return Err(Error::config("grid needs at least one division"));
        }
        if n_models < 1 {
            return Err(Error::config("grid needs at least one model"));
        }
        Ok(GridSpec { divisions, n_models })
    }

    /// Accepts steps that are reciprocals of integers, e.g. 0.05 → 20 divisions.
    pub fn from_step(step: f64, n_models: usize) -> Result<Self> {
        if !(step > 0.0 && step <= 1.0) {
            return Err(Error::config(format!("grid step {step} must lie in (0, 1]")));
        }
        let g = (1.0 / step).round();
        if ((1.0 / step) - g).abs() > 1e-9 * g || g > u32::MAX as f64 {
            return Err(Error::config(format!(
                "grid step {step} is not the reciprocal of an integer"
            )));
        }
        GridSpec::new(g as u32, n_models)
    }

    pub fn step(&self) -> f64 {
        1.0 / self.divisions as f64
    }

    /// C(g + M − 1, M − 1), saturating at `u128::MAX`.
    pub fn point_count(&self) -> u128 {
        binomial(self.divisions as u128 + self.n_models as u128 - 1, self.n_models as u128 - 1)
    }
}

/// n choose k, saturating.
pub fn binomial(n: u128, k: u128) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        // acc * (n - i) / (i + 1) stays integral at every step
        acc = match acc.checked_mul(n - i) {
            Some(v) => v / (i + 1),
            None => return u128::MAX,
        };
    }
    acc
}

/// Compositions of `divisions` into `n_models` nonnegative parts, ascending
/// lexicographic order.
#[derive(Debug, Clone)]
pub struct Compositions {
    parts: Vec<u32>,
    done: bool,
}

impl Compositions {
    pub fn new(spec: GridSpec) -> Self {
        let mut parts = vec![0; spec.n_models];
        parts[spec.n_models - 1] = spec.divisions;
        Compositions { parts, done: false }
    }
}

impl Iterator for Compositions {
    type Item = Vec<u32>;

    fn next(&mut self) -> Option<Vec<u32>> {
        if self.done {
            return None;
        }
        let current = self.parts.clone();
        let m = self.parts.len();
        // rightmost position (before the last) with something to its right
        let mut tail = self.parts[m - 1];
        let mut pivot = None;
        for i in (0..m.saturating_sub(1)).rev() {
            if tail > 0 {
                pivot = Some(i);
                break;
            }
            tail += self.parts[i];
        }
        match pivot {
            Some(i) => {
                self.parts[i] += 1;
                for p in &mut self.parts[i + 1..m - 1] {
                    *p = 0;
                }
                self.parts[m - 1] = tail - 1;
            }
            None => self.done = true,
        }
        Some(current)
    }
}

/// Every grid point as a weight vector, refusing grids larger than `cap`.
pub fn enumerate_simplex(
    spec: GridSpec,
    cap: u128,
) -> Result<impl Iterator<Item = EnsembleWeights>> {
    check_cap(spec, cap)?;
    let g = spec.divisions as f64;
    Ok(Compositions::new(spec).map(move |k| {
        EnsembleWeights::new(k.iter().map(|&x| x as f64 / g).collect())
            .expect("grid points lie on the simplex")
    }))
}

fn check_cap(spec: GridSpec, cap: u128) -> Result<()> {
    let count = spec.point_count();
    if count > cap {
        return Err(Error::config(format!(
            "simplex grid has {count} points, above the cap of {cap}"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridOutcome {
    pub weights: EnsembleWeights,
    pub fitness: f64,
    pub points_evaluated: u128,
}

/// Best grid point; ties go to the lexicographically smallest weight vector.
pub fn grid_search(
    pool: &ModelPool,
    gold: &GoldLabels,
    metric: Metric,
    spec: GridSpec,
    cap: u128,
) -> Result<GridOutcome> {
    if spec.n_models != pool.len() {
        return Err(Error::config(format!(
            "grid is for {} models, pool has {}",
            spec.n_models,
            pool.len()
        )));
    }
    check_cap(spec, cap)?;
    let evaluator = FitnessEvaluator::new(pool, gold, metric)?;
    let g = spec.divisions as f64;
    let to_weights = |k: &[u32]| -> Vec<f64> { k.iter().map(|&x| x as f64 / g).collect() };

    let mut best: Option<(Vec<u32>, f64)> = None;
    let mut evaluated = 0u128;
    let mut points = Compositions::new(spec).peekable();
    while points.peek().is_some() {
        let chunk: Vec<Vec<u32>> = points.by_ref().take(CHUNK).collect();
        let scores: Vec<f64> = chunk
            .par_iter()
            .map(|k| evaluator.score(&to_weights(k)))
            .collect();
        evaluated += chunk.len() as u128;
        // enumeration order is lexicographic, so strict improvement keeps the smallest
        for (k, s) in chunk.into_iter().zip(scores) {
            if best.as_ref().is_none_or(|(_, b)| s > *b) {
                best = Some((k, s));
            }
        }
    }
    let (k, fitness) = best.expect("grid is never empty");
    Ok(GridOutcome {
        weights: EnsembleWeights::new(to_weights(&k))?,
        fitness,
        points_evaluated: evaluated,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub step: f64,
    pub divisions: u32,
    pub cap: u128,
    pub metric: Metric,
}

/// Grid result in the same JSON layout as a genetic search result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub method: String,
    pub weights: Vec<f64>,
    pub model_names: Vec<String>,
    pub dev_fitness: f64,
    pub singles: Vec<f64>,
    pub uniform_fitness: f64,
    pub config: GridConfig,
    pub log: Vec<serde_json::Value>,
}

impl GridResult {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("result serializes") + "\n"
    }
}

/// Runs [`grid_search`] and packages it with single-model and uniform baselines.
pub fn grid_result(
    pool: &ModelPool,
    gold: &GoldLabels,
    metric: Metric,
    spec: GridSpec,
    cap: u128,
) -> Result<GridResult> {
    let outcome = grid_search(pool, gold, metric, spec, cap)?;
    let evaluator = FitnessEvaluator::new(pool, gold, metric)?;
    let m = pool.len();
    Ok(GridResult {
        method: "grid".into(),
        weights: outcome.weights.into_vec(),
        model_names: pool.model_names(),
        dev_fitness: outcome.fitness,
        singles: (0..m)
            .map(|i| evaluator.score(EnsembleWeights::one_hot(m, i).as_slice()))
            .collect(),
        uniform_fitness: evaluator.score(EnsembleWeights::uniform(m).as_slice()),
        config: GridConfig {
            step: spec.step(),
            divisions: spec.divisions,
            cap,
            metric,
        },
        log: Vec::new(),
    })
}
