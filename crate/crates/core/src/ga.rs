//! Real-coded genetic algorithm over ensemble weight vectors.
//!
//! A genome holds one nonnegative gene per model and is scaled onto the
//! simplex before scoring. Each generation keeps the `elitism` best genomes,
//! then fills the population with children built by tournament selection,
//! blend crossover and clamped Gaussian mutation.
//!
//! Randomness: one ChaCha8 generator seeded from `GaConfig::seed`. Every draw of
//! a generation is made sequentially before its fitness evaluations, which run
//! in parallel and are pure, so results do not depend on the worker count.
//! The search runs on the pool sorted by model name and maps weights back to
//! the caller's order, which makes the outcome independent of model order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ensemble::{argmax, EnsembleWeights, GoldLabels, ModelPool, PredictionMatrix};
use crate::ensemble::weighted_average;
use crate::error::{Error, Result};
use crate::metrics::{ConfusionMatrix, Metric};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GaConfig {
    pub population_size: usize,
    pub generations: usize,
    pub tournament_size: usize,
    pub crossover_rate: f64,
    pub mutation_rate: f64,
    pub mutation_sigma: f64,
    pub elitism: usize,
    /// Generations without improvement of the best fitness before stopping.
    pub patience: usize,
    pub seed: u64,
    pub metric: Metric,
}

impl Default for GaConfig {
    fn default() -> Self {
        GaConfig {
            population_size: 50,
            generations: 100,
            tournament_size: 3,
            crossover_rate: 0.9,
            mutation_rate: 0.2,
            mutation_sigma: 0.1,
            elitism: 2,
            patience: 20,
            seed: 0,
            metric: Metric::WeightedF1,
        }
    }
}

impl GaConfig {
    pub fn with_seed(seed: u64) -> Self {
        GaConfig {
            seed,
            ..GaConfig::default()
        }
    }

    /// Checks the configuration for a pool of `n_models` models.
    pub fn validate(&self, n_models: usize) -> Result<()> {
        if n_models == 0 {
            return Err(Error::config("no models to weight"));
        }
        if self.elitism < 1 {
            return Err(Error::config("elitism must be at least 1"));
        }
        if self.population_size <= self.elitism {
            return Err(Error::config(format!(
                "population size {} must exceed elitism {}",
                self.population_size, self.elitism
            )));
        }
        if self.population_size < n_models + 1 {
            return Err(Error::config(format!(
                "population size {} is too small for {n_models} models (minimum {})",
                self.population_size,
                n_models + 1
            )));
        }
        if self.tournament_size < 2 {
            return Err(Error::config("tournament size must be at least 2"));
        }
        if self.patience < 1 {
            return Err(Error::config("patience must be at least 1"));
        }
        for (name, rate) in [
            ("crossover rate", self.crossover_rate),
            ("mutation rate", self.mutation_rate),
        ] {
            if !(0.0..=1.0).contains(&rate) {
                return Err(Error::config(format!("{name} {rate} is outside [0, 1]")));
            }
        }
        if !(self.mutation_sigma > 0.0 && self.mutation_sigma.is_finite()) {
            return Err(Error::config(format!(
                "mutation sigma must be positive, got {}",
                self.mutation_sigma
            )));
        }
        Ok(())
    }
}

/// Unnormalized weight vector plus its cached fitness.
#[derive(Debug, Clone, PartialEq)]
pub struct Genome {
    pub raw: Vec<f64>,
    pub fitness: Option<f64>,
}

impl Genome {
    pub fn new(raw: Vec<f64>) -> Self {
        Genome { raw, fitness: None }
    }

    pub fn uniform(m: usize) -> Self {
        Genome::new(vec![1.0; m])
    }

    pub fn one_hot(m: usize, index: usize) -> Self {
        let mut raw = vec![0.0; m];
        raw[index] = 1.0;
        Genome::new(raw)
    }

    pub fn len(&self) -> usize {
        self.raw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.raw.is_empty()
    }

    pub fn normalized(&self) -> EnsembleWeights {
        EnsembleWeights::normalize(&self.raw).expect("genome has a positive gene")
    }

    fn score(&self) -> f64 {
        self.fitness.unwrap_or(f64::NEG_INFINITY)
    }
}

/// Scores weight vectors against one split without materializing the ensemble matrix.
///
/// Produces the same class decisions as [`weighted_average`] followed by
/// [`crate::ensemble::argmax_labels`]: sums are accumulated in the pool's
/// summation order with the same floating-point operations.
#[derive(Debug, Clone)]
pub struct FitnessEvaluator {
    n_classes: usize,
    metric: Metric,
    order: Vec<usize>,
    /// Per model, rows aligned to `gold` order, flattened row-major.
    probs: Vec<Vec<f64>>,
    gold: Vec<usize>,
}

impl FitnessEvaluator {
    pub fn new(pool: &ModelPool, gold: &GoldLabels, metric: Metric) -> Result<Self> {
        if gold.is_empty() {
            return Err(Error::data("no examples"));
        }
        if pool.n_classes() != gold.n_classes() {
            return Err(Error::data(format!(
                "models have {} classes, gold labels have {}",
                pool.n_classes(),
                gold.n_classes()
            )));
        }
        let mut probs = Vec::with_capacity(pool.len());
        for model in pool.models() {
            if model.len() != gold.len() {
                return Err(Error::data(format!(
                    "model '{}' covers {} examples, gold has {}",
                    model.model_name(),
                    model.len(),
                    gold.len()
                )));
            }
            let mut flat = Vec::with_capacity(gold.len() * gold.n_classes());
            for id in gold.ids() {
                let row = model.row_by_id(id).ok_or_else(|| {
                    Error::data(format!(
                        "model '{}' has no row for gold id '{id}'",
                        model.model_name()
                    ))
                })?;
                flat.extend_from_slice(row);
            }
            probs.push(flat);
        }
        Ok(FitnessEvaluator {
            n_classes: gold.n_classes(),
            metric,
            order: pool.summation_order().to_vec(),
            probs,
            gold: gold.classes().to_vec(),
        })
    }

    pub fn n_models(&self) -> usize {
        self.probs.len()
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    pub fn confusion(&self, weights: &[f64]) -> ConfusionMatrix {
        assert_eq!(weights.len(), self.probs.len(), "weight count mismatch");
        let c = self.n_classes;
        let mut cm = ConfusionMatrix::zeros(c);
        let mut acc = vec![0.0; c];
        for (i, &y) in self.gold.iter().enumerate() {
            acc.iter_mut().for_each(|a| *a = 0.0);
            for &m in &self.order {
                let row = &self.probs[m][i * c..(i + 1) * c];
                for (a, p) in acc.iter_mut().zip(row) {
                    *a += weights[m] * p;
                }
            }
            cm.record(y, argmax(&acc));
        }
        cm
    }

    /// Metric value of the ensemble with already-normalized `weights`.
    pub fn score(&self, weights: &[f64]) -> f64 {
        self.confusion(weights).score(self.metric)
    }

    pub fn score_genome(&self, genome: &Genome) -> f64 {
        self.score(genome.normalized().as_slice())
    }
}

/// Fitness of a genome: the metric of the argmax of the weighted-average ensemble.
pub fn fitness(genome: &Genome, pool: &ModelPool, gold: &GoldLabels, metric: Metric) -> Result<f64> {
    if genome.len() != pool.len() {
        return Err(Error::config(format!(
            "genome has {} genes for {} models",
            genome.len(),
            pool.len()
        )));
    }
    let weights = EnsembleWeights::normalize(&genome.raw)?;
    Ok(FitnessEvaluator::new(pool, gold, metric)?.score(weights.as_slice()))
}

/// The M one-hot genomes, the uniform genome, then random genomes with
/// independent `U(0,1)` genes until the population is full.
pub fn seed_population(config: &GaConfig, n_models: usize, rng: &mut impl Rng) -> Result<Vec<Genome>> {
    if config.population_size < n_models + 1 {
        return Err(Error::config(format!(
            "population size {} is too small for {n_models} models (minimum {})",
            config.population_size,
            n_models + 1
        )));
    }
    let mut population: Vec<Genome> = (0..n_models).map(|i| Genome::one_hot(n_models, i)).collect();
    population.push(Genome::uniform(n_models));
    while population.len() < config.population_size {
        let raw: Vec<f64> = (0..n_models).map(|_| rng.random::<f64>()).collect();
        if raw.iter().all(|&g| g == 0.0) {
            population.push(Genome::uniform(n_models));
        } else {
            population.push(Genome::new(raw));
        }
    }
    Ok(population)
}

/// Index of the fittest of `k` genomes drawn uniformly with replacement.
/// Equal fitness goes to the lower population index.
pub fn tournament_index(population: &[Genome], k: usize, rng: &mut impl Rng) -> usize {
    assert!(!population.is_empty(), "tournament over an empty population");
    let mut best = rng.random_range(0..population.len());
    for _ in 1..k {
        let i = rng.random_range(0..population.len());
        let (fi, fb) = (population[i].score(), population[best].score());
        if fi > fb || (fi == fb && i < best) {
            best = i;
        }
    }
    best
}

pub fn tournament_select<'a>(population: &'a [Genome], k: usize, rng: &mut impl Rng) -> &'a Genome {
    &population[tournament_index(population, k, rng)]
}

/// Child gene i = α·a_i + (1−α)·b_i for a fixed α.
pub fn blend_with(a: &Genome, b: &Genome, alpha: f64) -> Genome {
    assert_eq!(a.len(), b.len(), "genome dimensions differ");
    Genome::new(
        a.raw
            .iter()
            .zip(&b.raw)
            .map(|(x, y)| alpha * x + (1.0 - alpha) * y)
            .collect(),
    )
}

/// Blend crossover with one α ~ U(0,1) per child.
pub fn blend_crossover(a: &Genome, b: &Genome, rng: &mut impl Rng) -> Genome {
    let alpha = rng.random::<f64>();
    let mut child = blend_with(a, b, alpha);
    if child.raw.iter().all(|&g| g == 0.0) {
        child = Genome::uniform(child.len());
    }
    child
}

/// Adds N(0, σ²) to each gene with probability `mutation_rate`, clamps at 0,
/// and resets an all-zero result to the uniform genome.
pub fn gaussian_mutate(genome: &Genome, config: &GaConfig, rng: &mut impl Rng) -> Genome {
    let mut raw = genome.raw.clone();
    let mut changed = false;
    for gene in raw.iter_mut() {
        if rng.random::<f64>() < config.mutation_rate {
            let noise: f64 = rng.sample(StandardNormal);
            *gene = (*gene + config.mutation_sigma * noise).max(0.0);
            changed = true;
        }
    }
    if raw.iter().all(|&g| g == 0.0) {
        return Genome::uniform(raw.len());
    }
    if changed {
        Genome::new(raw)
    } else {
        genome.clone()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationLog {
    pub generation: usize,
    /// Best fitness found so far.
    pub best_fitness: f64,
    pub mean_fitness: f64,
    pub best_weights: Vec<f64>,
}

/// Outcome of a weight search, serialized as the result JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationResult {
    pub method: String,
    pub weights: Vec<f64>,
    pub model_names: Vec<String>,
    pub dev_fitness: f64,
    /// One-hot fitness of each model, in `model_names` order.
    pub singles: Vec<f64>,
    pub uniform_fitness: f64,
    pub config: GaConfig,
    pub log: Vec<GenerationLog>,
}

impl OptimizationResult {
    pub fn ensemble_weights(&self) -> Result<EnsembleWeights> {
        EnsembleWeights::new(self.weights.clone())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("result serializes") + "\n"
    }
}

fn evaluate_pending(population: &mut [Genome], evaluator: &FitnessEvaluator) {
    population
        .par_iter_mut()
        .filter(|g| g.fitness.is_none())
        .for_each(|g| g.fitness = Some(evaluator.score_genome(g)));
}

fn mean_fitness(population: &[Genome]) -> f64 {
    population.iter().map(Genome::score).sum::<f64>() / population.len() as f64
}

/// Runs the genetic search for the weights maximizing `config.metric` on `gold`.
pub fn evolve(pool: &ModelPool, gold: &GoldLabels, config: &GaConfig) -> Result<OptimizationResult> {
    let m = pool.len();
    config.validate(m)?;

    // canonical[j] is the caller's model order[j]
    let order = pool.summation_order().to_vec();
    let canonical = pool.permuted(&order)?;
    let evaluator = FitnessEvaluator::new(&canonical, gold, config.metric)?;
    let to_caller_order = |w: &[f64]| {
        let mut out = vec![0.0; m];
        for (j, &i) in order.iter().enumerate() {
            out[i] = w[j];
        }
        out
    };

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut population = seed_population(config, m, &mut rng)?;
    evaluate_pending(&mut population, &evaluator);

    let mut best = population[0].clone();
    for g in &population[1..] {
        if g.score() > best.score() {
            best = g.clone();
        }
    }
    let mut log = vec![GenerationLog {
        generation: 0,
        best_fitness: best.score(),
        mean_fitness: mean_fitness(&population),
        best_weights: to_caller_order(best.normalized().as_slice()),
    }];

    let mut stale = 0;
    for generation in 1..=config.generations {
        let mut ranked: Vec<usize> = (0..population.len()).collect();
        ranked.sort_by(|&a, &b| population[b].score().total_cmp(&population[a].score()).then(a.cmp(&b)));
        let mut next: Vec<Genome> = ranked[..config.elitism]
            .iter()
            .map(|&i| population[i].clone())
            .collect();

        while next.len() < config.population_size {
            let a = tournament_index(&population, config.tournament_size, &mut rng);
            let b = tournament_index(&population, config.tournament_size, &mut rng);
            let child = if rng.random::<f64>() < config.crossover_rate {
                blend_crossover(&population[a], &population[b], &mut rng)
            } else {
                Genome::new(population[a].raw.clone())
            };
            let mut child = gaussian_mutate(&child, config, &mut rng);
            child.fitness = None;
            next.push(child);
        }
        population = next;
        evaluate_pending(&mut population, &evaluator);

        let mut improved = false;
        for g in &population {
            if g.score() > best.score() {
                best = g.clone();
                improved = true;
            }
        }
        log.push(GenerationLog {
            generation,
            best_fitness: best.score(),
            mean_fitness: mean_fitness(&population),
            best_weights: to_caller_order(best.normalized().as_slice()),
        });
        if improved {
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.patience {
                break;
            }
        }
    }

    let singles = (0..m)
        .map(|i| {
            let j = order.iter().position(|&k| k == i).expect("order is a permutation");
            evaluator.score(EnsembleWeights::one_hot(m, j).as_slice())
        })
        .collect();
    let uniform_fitness = evaluator.score(Genome::uniform(m).normalized().as_slice());

    Ok(OptimizationResult {
        method: "ga".into(),
        weights: to_caller_order(best.normalized().as_slice()),
        model_names: pool.model_names(),
        dev_fitness: best.score(),
        singles,
        uniform_fitness,
        config: config.clone(),
        log,
    })
}

/// Weighted average of `pool` with weights fitted for the models `model_names`.
///
/// The pool must list exactly those models in exactly that order.
pub fn apply_named_weights(
    model_names: &[String],
    weights: &[f64],
    pool: &ModelPool,
) -> Result<PredictionMatrix> {
    if model_names.len() != weights.len() {
        return Err(Error::data(format!(
            "{} model names but {} weights",
            model_names.len(),
            weights.len()
        )));
    }
    let pool_names = pool.model_names();
    if pool_names != model_names {
        let divergence = model_names
            .iter()
            .zip(&pool_names)
            .enumerate()
            .find(|(_, (a, b))| a != b)
            .map(|(i, (a, b))| format!("position {i}: weights for '{a}', pool has '{b}'"))
            .unwrap_or_else(|| {
                format!(
                    "weights cover {} models, pool has {}",
                    model_names.len(),
                    pool_names.len()
                )
            });
        return Err(Error::data(format!(
            "model list does not match the optimized weights ({divergence})"
        )));
    }
    let weights = EnsembleWeights::new(weights.to_vec()).map_err(|e| Error::data(e.to_string()))?;
    weighted_average(pool, &weights)
}

/// Applies optimized weights to another split of the same models.
pub fn apply_weights(result: &OptimizationResult, pool: &ModelPool) -> Result<PredictionMatrix> {
    apply_named_weights(&result.model_names, &result.weights, pool)
}
