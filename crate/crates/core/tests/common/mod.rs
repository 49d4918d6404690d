//! Test support shared by the property suite and the acceptance harness.
//!
//! The F1 oracle here counts TP/FP/FN straight from label pairs and uses
//! F1 = 2TP / (2TP + FP + FN); it shares no code with `ga_ensemble::metrics`.
#![allow(dead_code, clippy::neg_cmp_op_on_partial_ord)]

use std::collections::{BTreeMap, HashSet};

use ga_ensemble::corpus::{self, CorpusRecord, OovUnit};
use ga_ensemble::ensemble::{
    argmax_labels, softmax_rows, weighted_average, ClassAssignments, EnsembleWeights, GoldLabels,
    ModelPool, PredictionMatrix,
};
use ga_ensemble::ga::{evolve, GaConfig, OptimizationResult};
use ga_ensemble::metrics::{macro_f1, weighted_f1, Metric};
use ga_ensemble::oracle::{enumerate_simplex, grid_search, GridSpec, DEFAULT_GRID_CAP};
use ga_ensemble::synth::{synth_generate, SynthSpec};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Check = Result<(), String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// ---------------------------------------------------------------------------
// Naive metric oracle
// ---------------------------------------------------------------------------

fn naive_class_f1(gold: &[usize], pred: &[usize], class: usize) -> (f64, usize) {
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut fn_ = 0usize;
    for (&g, &p) in gold.iter().zip(pred) {
        match (g == class, p == class) {
            (true, true) => tp += 1,
            (false, true) => fp += 1,
            (true, false) => fn_ += 1,
            _ => {}
        }
    }
    let den = 2 * tp + fp + fn_;
    let f1 = if den == 0 { 0.0 } else { (2 * tp) as f64 / den as f64 };
    (f1, tp + fn_)
}

pub fn naive_weighted_f1(gold: &[usize], pred: &[usize], n_classes: usize) -> f64 {
    let n = gold.len() as f64;
    let mut total = 0.0;
    for c in 0..n_classes {
        let (f1, support) = naive_class_f1(gold, pred, c);
        total += f1 * support as f64;
    }
    total / n
}

pub fn naive_macro_f1(gold: &[usize], pred: &[usize], n_classes: usize) -> f64 {
    let present: Vec<f64> = (0..n_classes)
        .filter_map(|c| {
            let (f1, support) = naive_class_f1(gold, pred, c);
            (support > 0).then_some(f1)
        })
        .collect();
    present.iter().sum::<f64>() / present.len() as f64
}

pub fn assignments(classes: &[usize], n_classes: usize) -> ClassAssignments {
    ClassAssignments::new(
        n_classes,
        classes.iter().enumerate().map(|(i, &c)| (format!("x{i}"), c)).collect(),
    )
    .expect("valid assignments")
}

/// Random (gold, pred) with n ≤ 200, C ≤ 6.
pub fn random_label_pair(r: &mut impl Rng) -> (Vec<usize>, Vec<usize>, usize) {
    let c = r.random_range(2..=6);
    let n = r.random_range(1..=200);
    let gold = (0..n).map(|_| r.random_range(0..c)).collect();
    let pred = (0..n).map(|_| r.random_range(0..c)).collect();
    (gold, pred, c)
}

pub fn check_metric_oracle(gold: &[usize], pred: &[usize], c: usize) -> Check {
    let g = assignments(gold, c);
    let p = assignments(pred, c);
    let w = weighted_f1(&g, &p).map_err(|e| e.to_string())?;
    let m = macro_f1(&g, &p).map_err(|e| e.to_string())?;
    let (nw, nm) = (naive_weighted_f1(gold, pred, c), naive_macro_f1(gold, pred, c));
    ensure!((w - nw).abs() <= 1e-12, "weighted {w} vs oracle {nw}");
    ensure!((m - nm).abs() <= 1e-12, "macro {m} vs oracle {nm}");
    Ok(())
}

// ---------------------------------------------------------------------------
// Instances
// ---------------------------------------------------------------------------

/// The GA benchmark instance: M=3 models, n=200, C=4, accuracies in [0.35, 0.8].
pub fn ga_instance(seed: u64) -> (ModelPool, GoldLabels) {
    let mut r = rng(seed ^ 0x5eed);
    let accuracies = (0..3).map(|_| r.random_range(0.35..0.8)).collect();
    synth_generate(&SynthSpec::new(seed, 200, 4, accuracies)).expect("valid synthetic spec")
}

/// A small random pool with M in 1..=4 and C in 2..=5.
pub fn random_pool(seed: u64) -> (ModelPool, GoldLabels) {
    let mut r = rng(seed);
    let m = r.random_range(1..=4);
    let c = r.random_range(2..=5);
    let n = r.random_range(20..=120);
    let accuracies = (0..m).map(|_| r.random_range(0.2..1.0)).collect();
    synth_generate(&SynthSpec::new(seed, n, c, accuracies)).expect("valid synthetic spec")
}

pub fn random_weights(r: &mut impl Rng, m: usize) -> EnsembleWeights {
    let raw: Vec<f64> = (0..m).map(|_| r.random::<f64>() + 1e-3).collect();
    EnsembleWeights::normalize(&raw).expect("positive weights")
}

pub fn random_permutation(r: &mut impl Rng, m: usize) -> Vec<usize> {
    let mut p: Vec<usize> = (0..m).collect();
    p.shuffle(r);
    p
}

fn small_ga(seed: u64) -> GaConfig {
    GaConfig {
        population_size: 20,
        generations: 15,
        patience: 5,
        ..GaConfig::with_seed(seed)
    }
}

// ---------------------------------------------------------------------------
// Soft-voting invariants
// ---------------------------------------------------------------------------

pub fn check_rows_on_simplex(pool: &ModelPool, w: &EnsembleWeights) -> Check {
    let out = weighted_average(pool, w).map_err(|e| e.to_string())?;
    for (id, row) in out.rows() {
        let sum: f64 = row.iter().sum();
        ensure!((sum - 1.0).abs() <= 1e-6, "row {id} sums to {sum}");
        ensure!(row.iter().all(|v| (0.0..=1.0).contains(v)), "row {id} leaves [0,1]: {row:?}");
    }
    Ok(())
}

pub fn check_one_hot_reproduces_model(pool: &ModelPool) -> Check {
    for m in 0..pool.len() {
        let out = weighted_average(pool, &EnsembleWeights::one_hot(pool.len(), m))
            .map_err(|e| e.to_string())?;
        let model = &pool.models()[m];
        for (id, row) in model.rows() {
            let got = out.row_by_id(id).ok_or("missing row")?;
            for (a, b) in got.iter().zip(row) {
                ensure!((a - b).abs() <= 1e-12, "model {m} row {id}: {got:?} vs {row:?}");
            }
        }
    }
    Ok(())
}

pub fn check_model_permutation(pool: &ModelPool, w: &EnsembleWeights, perm: &[usize]) -> Check {
    let base = weighted_average(pool, w).map_err(|e| e.to_string())?;
    let permuted_pool = pool.permuted(perm).map_err(|e| e.to_string())?;
    let permuted_w =
        EnsembleWeights::new(perm.iter().map(|&i| w.as_slice()[i]).collect()).map_err(|e| e.to_string())?;
    let out = weighted_average(&permuted_pool, &permuted_w).map_err(|e| e.to_string())?;
    for (id, row) in base.rows() {
        let other = out.row_by_id(id).ok_or("missing row")?;
        ensure!(row == other, "row {id}: {row:?} vs {other:?}");
    }
    Ok(())
}

pub fn check_argmax_scale_invariance(pool: &ModelPool, raw: &[f64], scale: f64) -> Check {
    let w = EnsembleWeights::normalize(raw).map_err(|e| e.to_string())?;
    let scaled: Vec<f64> = raw.iter().map(|x| x * scale).collect();
    let ws = EnsembleWeights::normalize(&scaled).map_err(|e| e.to_string())?;
    let a = argmax_labels(&weighted_average(pool, &w).map_err(|e| e.to_string())?);
    let b = argmax_labels(&weighted_average(pool, &ws).map_err(|e| e.to_string())?);
    // Renormalization can move weights by an ulp; only genuine near-ties may flip.
    let avg = weighted_average(pool, &w).map_err(|e| e.to_string())?;
    for ((id, ca), cb) in a.iter().zip(b.classes()) {
        if ca != *cb {
            let row = avg.row_by_id(id).ok_or("missing row")?;
            ensure!((row[ca] - row[*cb]).abs() <= 1e-12, "argmax flipped at {id}: {row:?}");
        }
    }
    Ok(())
}

pub fn check_softmax_shift(logits: &[Vec<f64>], shift: f64) -> Check {
    let c = logits[0].len();
    let make = |delta: f64| {
        PredictionMatrix::new(
            "m",
            "dev",
            c,
            logits
                .iter()
                .enumerate()
                .map(|(i, row)| (format!("r{i}"), row.iter().map(|x| x + delta).collect()))
                .collect(),
        )
        .expect("valid matrix")
    };
    let a = softmax_rows(&make(0.0)).map_err(|e| e.to_string())?;
    let b = softmax_rows(&make(shift)).map_err(|e| e.to_string())?;
    ensure!(a.diagnose().is_empty(), "softmax output violates invariants");
    for i in 0..a.len() {
        for (x, y) in a.row(i).iter().zip(b.row(i)) {
            ensure!((x - y).abs() <= 1e-9, "row {i}: {x} vs {y}");
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Metric invariants
// ---------------------------------------------------------------------------

pub fn check_metric_bounds(gold: &[usize], pred: &[usize], c: usize) -> Check {
    let g = assignments(gold, c);
    let p = assignments(pred, c);
    let r = ga_ensemble::metrics::full_report(
        &g,
        &p,
        &ga_ensemble::LabelSet::new(&(0..c).map(|i| format!("c{i}")).collect::<Vec<_>>()).unwrap(),
    )
    .map_err(|e| e.to_string())?;
    for (name, v) in [("weighted", r.weighted_f1), ("macro", r.macro_f1), ("accuracy", r.accuracy)] {
        ensure!((0.0..=1.0).contains(&v), "{name} = {v}");
    }
    Ok(())
}

pub fn check_class_permutation(gold: &[usize], pred: &[usize], c: usize, perm: &[usize]) -> Check {
    let relabel = |v: &[usize]| v.iter().map(|&k| perm[k]).collect::<Vec<_>>();
    let (g, p) = (assignments(gold, c), assignments(pred, c));
    let (gp, pp) = (assignments(&relabel(gold), c), assignments(&relabel(pred), c));
    for metric in [Metric::WeightedF1, Metric::MacroF1] {
        let a = metric.evaluate(&g, &p).map_err(|e| e.to_string())?;
        let b = metric.evaluate(&gp, &pp).map_err(|e| e.to_string())?;
        ensure!((a - b).abs() <= 1e-12, "{metric}: {a} vs {b}");
    }
    Ok(())
}

/// `per_class` examples of every class, predictions arbitrary.
pub fn check_equal_support(per_class: usize, c: usize, pred: &[usize]) -> Check {
    let gold: Vec<usize> = (0..c).flat_map(|k| std::iter::repeat_n(k, per_class)).collect();
    let (g, p) = (assignments(&gold, c), assignments(&pred[..gold.len()], c));
    let w = weighted_f1(&g, &p).map_err(|e| e.to_string())?;
    let m = macro_f1(&g, &p).map_err(|e| e.to_string())?;
    ensure!((w - m).abs() < 1e-12, "macro {m} vs weighted {w}");
    Ok(())
}

pub fn check_self_agreement(gold: &[usize], c: usize) -> Check {
    let g = assignments(gold, c);
    let w = weighted_f1(&g, &g).map_err(|e| e.to_string())?;
    ensure!(w == 1.0, "weighted_f1(gold, gold) = {w}");
    Ok(())
}

pub fn check_example_order(gold: &[usize], pred: &[usize], c: usize, order: &[usize]) -> Check {
    let g = assignments(gold, c);
    let p = assignments(pred, c);
    let shuffled = |a: &ClassAssignments| {
        ClassAssignments::new(
            c,
            order
                .iter()
                .map(|&i| (a.ids()[i].clone(), a.classes()[i]))
                .collect(),
        )
        .unwrap()
    };
    for metric in [Metric::WeightedF1, Metric::MacroF1] {
        let a = metric.evaluate(&g, &p).map_err(|e| e.to_string())?;
        let b = metric.evaluate(&shuffled(&g), &p).map_err(|e| e.to_string())?;
        ensure!(a == b, "{metric}: {a} vs {b}");
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// GA invariants
// ---------------------------------------------------------------------------

pub fn check_ga_result(r: &OptimizationResult) -> Check {
    for pair in r.log.windows(2) {
        ensure!(
            pair[1].best_fitness >= pair[0].best_fitness,
            "best fitness dropped at generation {}",
            pair[1].generation
        );
    }
    for entry in &r.log {
        EnsembleWeights::new(entry.best_weights.clone())
            .map_err(|e| format!("generation {}: {e}", entry.generation))?;
    }
    let best_single = r.singles.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    ensure!(r.dev_fitness >= best_single, "dev {} < best single {best_single}", r.dev_fitness);
    ensure!(r.dev_fitness >= r.uniform_fitness, "dev {} < uniform {}", r.dev_fitness, r.uniform_fitness);
    EnsembleWeights::new(r.weights.clone()).map_err(|e| e.to_string())?;
    Ok(())
}

pub fn check_ga_invariants(seed: u64) -> Check {
    let (pool, gold) = random_pool(seed);
    let r = evolve(&pool, &gold, &small_ga(seed)).map_err(|e| e.to_string())?;
    check_ga_result(&r)
}

pub fn check_ga_worker_independence(seed: u64) -> Check {
    let (pool, gold) = random_pool(seed);
    let config = small_ga(seed);
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| evolve(&pool, &gold, &config))
            .map(|r| r.to_json())
            .map_err(|e| e.to_string())
    };
    let one = run(1)?;
    ensure!(one == run(4)?, "1 vs 4 workers differ");
    ensure!(one == run(1)?, "rerun differs");
    Ok(())
}

pub fn check_ga_permutation(seed: u64, perm: &[usize]) -> Check {
    let (pool, gold) = ga_instance(seed);
    let config = small_ga(seed);
    let base = evolve(&pool, &gold, &config).map_err(|e| e.to_string())?;
    let permuted = evolve(&pool.permuted(perm).unwrap(), &gold, &config).map_err(|e| e.to_string())?;
    ensure!(base.dev_fitness == permuted.dev_fitness, "fitness {} vs {}", base.dev_fitness, permuted.dev_fitness);
    for (j, &i) in perm.iter().enumerate() {
        ensure!(
            permuted.weights[j] == base.weights[i],
            "weight of {} moved: {:?} vs {:?}",
            base.model_names[i],
            base.weights,
            permuted.weights
        );
        ensure!(permuted.singles[j] == base.singles[i], "singles not permuted");
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Grid oracle invariants
// ---------------------------------------------------------------------------

pub fn check_grid_count(g: u32, m: usize) -> Check {
    let spec = GridSpec::new(g, m).map_err(|e| e.to_string())?;
    let points: Vec<Vec<f64>> = enumerate_simplex(spec, DEFAULT_GRID_CAP)
        .map_err(|e| e.to_string())?
        .map(EnsembleWeights::into_vec)
        .collect();
    let expected = binomial_by_pascal(g as usize + m - 1, m - 1);
    ensure!(points.len() as u128 == expected, "g={g} M={m}: {} points, expected {expected}", points.len());
    ensure!(spec.point_count() == expected, "closed form {} vs {expected}", spec.point_count());
    let unique: HashSet<Vec<u64>> = points.iter().map(|p| p.iter().map(|x| x.to_bits()).collect()).collect();
    ensure!(unique.len() == points.len(), "duplicate grid points");
    ensure!(
        points.windows(2).all(|w| w[0] < w[1]),
        "enumeration not in lexicographic order"
    );
    Ok(())
}

/// Binomial coefficient from Pascal's triangle, independent of the crate's closed form.
pub fn binomial_by_pascal(n: usize, k: usize) -> u128 {
    let mut row = vec![1u128];
    for _ in 0..n {
        let mut next = vec![1u128; row.len() + 1];
        for i in 1..row.len() {
            next[i] = row[i - 1] + row[i];
        }
        row = next;
    }
    row.get(k).copied().unwrap_or(0)
}

pub fn check_grid_dominance(seed: u64) -> Check {
    let (pool, gold) = random_pool(seed);
    let m = pool.len();
    let g = (12 / m * m) as u32; // divisible by M, so the uniform point is on the grid
    let spec = GridSpec::new(g, m).unwrap();
    let out = grid_search(&pool, &gold, Metric::WeightedF1, spec, DEFAULT_GRID_CAP).map_err(|e| e.to_string())?;
    let eval = ga_ensemble::ga::FitnessEvaluator::new(&pool, &gold, Metric::WeightedF1).unwrap();
    for i in 0..m {
        let single = eval.score(EnsembleWeights::one_hot(m, i).as_slice());
        ensure!(out.fitness >= single, "grid {} < single {single}", out.fitness);
    }
    let uniform = eval.score(EnsembleWeights::uniform(m).as_slice());
    ensure!(out.fitness >= uniform, "grid {} < uniform {uniform}", out.fitness);
    Ok(())
}

pub fn check_grid_permutation(seed: u64, perm_seed: u64) -> Check {
    let (pool, gold) = random_pool(seed);
    let perm = random_permutation(&mut rng(perm_seed), pool.len());
    let spec = GridSpec::new(10, pool.len()).unwrap();
    let a = grid_search(&pool, &gold, Metric::MacroF1, spec, DEFAULT_GRID_CAP).map_err(|e| e.to_string())?;
    let b = grid_search(&pool.permuted(&perm).unwrap(), &gold, Metric::MacroF1, spec, DEFAULT_GRID_CAP)
        .map_err(|e| e.to_string())?;
    ensure!(a.fitness == b.fitness, "grid optimum {} vs {} after permutation", a.fitness, b.fitness);
    Ok(())
}

// ---------------------------------------------------------------------------
// Corpus invariants
// ---------------------------------------------------------------------------

pub fn records(texts_and_labels: &[(String, String)]) -> Vec<CorpusRecord> {
    texts_and_labels
        .iter()
        .map(|(t, l)| CorpusRecord {
            text: t.clone(),
            label: l.clone(),
        })
        .collect()
}

pub fn check_counts_shuffle(recs: &[CorpusRecord], order: &[usize]) -> Check {
    let labels = ga_ensemble::LabelSet::canonical();
    let a = corpus::class_counts(recs, &labels);
    let shuffled: Vec<CorpusRecord> = order.iter().map(|&i| recs[i].clone()).collect();
    let b = corpus::class_counts(&shuffled, &labels);
    ensure!(a == b, "{a:?} vs {b:?}");
    ensure!(a.total == recs.len() as u64, "total {} for {} records", a.total, recs.len());
    Ok(())
}

pub fn check_oov_monotone(recs: &[CorpusRecord], vocab_words: &[String], unit: OovUnit) -> Check {
    let tokens_exist = recs.iter().any(|r| !corpus::tokenize(&r.text).is_empty());
    if !tokens_exist || vocab_words.is_empty() {
        return Ok(());
    }
    let mut previous = f64::INFINITY;
    let mut vocab = HashSet::new();
    for w in vocab_words {
        vocab.insert(w.to_lowercase());
        let r = corpus::oov_rate(recs, &vocab, unit).map_err(|e| e.to_string())?;
        ensure!((0.0..=1.0).contains(&r.oov_rate), "rate {}", r.oov_rate);
        ensure!(r.oov_rate <= previous, "rate rose from {previous} to {}", r.oov_rate);
        previous = r.oov_rate;
    }
    Ok(())
}

pub fn check_tokenize_idempotent(text: &str) -> Check {
    for token in corpus::tokenize(text) {
        let again = corpus::tokenize(&token);
        ensure!(again == vec![token.clone()], "{token:?} re-tokenizes to {again:?}");
    }
    Ok(())
}

pub fn label_histogram(recs: &[CorpusRecord]) -> BTreeMap<String, u64> {
    corpus::raw_label_histogram(recs)
}
