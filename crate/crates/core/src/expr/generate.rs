//! Random white-box model generation.
//!
//! A model is drawn in four steps: pick the dummy features, pick one
//! signature per effect so that every non-dummy feature is covered, build a
//! non-additive expression over each signature, and finally check that the
//! sum is real and finite on a dense sample of the validation domain.
//! Rejected candidates are redrawn from the same RNG stream, so a
//! (config, seed) pair always yields the same model.

use std::collections::BTreeSet;

use ndarray::Array2;
use rand::distr::{weighted::WeightedIndex, Distribution};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{decompose_additive, expand, sum_of, BinaryOp, EffectSignature, Expr, ExprError, OperatorTable, UnaryOp};
use crate::model::{AdditiveModel, ModelMeta};

/// Attempts at building one effect before the whole candidate is rejected.
const TERM_ATTEMPTS: usize = 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerationConfig {
    pub n_features: usize,
    /// Number of generated terms. Terms that land on the same signature are
    /// merged, which only happens once every distinct signature of size at
    /// most `max_interaction_order` over the active features is in use.
    pub n_effects: usize,
    pub max_interaction_order: usize,
    pub n_nonlinearities: usize,
    pub n_dummy: usize,
    pub seed: u64,
    pub validation_domain: (f64, f64),
    pub validation_points: usize,
    /// Candidates whose output or any effect exceeds this magnitude on the
    /// validation sample are rejected as having an invalid range.
    pub output_bound: f64,
    pub max_retries: usize,
    pub operators: OperatorTable,
}

/// Default for [`GenerationConfig::output_bound`].
pub const DEFAULT_OUTPUT_BOUND: f64 = 1e4;

impl Default for GenerationConfig {
    fn default() -> Self {
        Self {
            n_features: 4,
            n_effects: 4,
            max_interaction_order: 2,
            n_nonlinearities: 2,
            n_dummy: 0,
            seed: 0,
            validation_domain: (-1.0, 1.0),
            validation_points: 10_000,
            output_bound: DEFAULT_OUTPUT_BOUND,
            max_retries: 100,
            operators: OperatorTable::default(),
        }
    }
}

impl GenerationConfig {
    pub fn validate(&self) -> Result<(), ExprError> {
        let bad = |field: &'static str, reason: String| Err(ExprError::InvalidConfig { field, reason });
        if self.n_features == 0 {
            return bad("n_features", "must be positive".into());
        }
        if self.n_effects == 0 {
            return bad("n_effects", "must be positive".into());
        }
        if self.max_interaction_order == 0 {
            return bad("max_interaction_order", "must be at least 1".into());
        }
        if self.n_dummy >= self.n_features {
            return bad(
                "n_dummy",
                format!("{} dummies leave no active feature out of {}", self.n_dummy, self.n_features),
            );
        }
        let active = self.n_features - self.n_dummy;
        if self.max_interaction_order > active {
            return bad(
                "max_interaction_order",
                format!("{} exceeds the {active} non-dummy features", self.max_interaction_order),
            );
        }
        if self.n_effects * self.max_interaction_order < active {
            return bad(
                "n_effects",
                format!(
                    "{} effects of order <= {} cannot cover {active} non-dummy features",
                    self.n_effects, self.max_interaction_order
                ),
            );
        }
        let (lo, hi) = self.validation_domain;
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return bad("validation_domain", format!("[{lo}, {hi}] is not a proper interval"));
        }
        if self.validation_points == 0 {
            return bad("validation_points", "must be positive".into());
        }
        if self.output_bound.is_nan() || self.output_bound <= 0.0 {
            return bad("output_bound", format!("{} is not positive", self.output_bound));
        }
        if self.max_retries == 0 {
            return bad("max_retries", "must be positive".into());
        }
        self.operators
            .validate()
            .or_else(|reason| bad("operators", reason))
    }

    pub fn digest(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let hash = Sha256::digest(json.as_bytes());
        hash.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}

pub fn generate_model(config: &GenerationConfig) -> Result<AdditiveModel, ExprError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    for _ in 0..config.max_retries {
        let Some(model) = draw_candidate(config, &mut rng) else {
            continue;
        };
        if validate_on_sample(&model, config, &mut rng) {
            return Ok(model.with_meta(ModelMeta {
                seed: Some(config.seed),
                config_digest: Some(config.digest()),
            }));
        }
    }
    Err(ExprError::GenerationExhausted {
        attempts: config.max_retries,
    })
}

fn draw_candidate(config: &GenerationConfig, rng: &mut ChaCha8Rng) -> Option<AdditiveModel> {
    let d = config.n_features;
    let dummies: BTreeSet<usize> = rand::seq::index::sample(rng, d, config.n_dummy)
        .into_iter()
        .map(|i| i + 1)
        .collect();
    let active: Vec<usize> = (1..=d).filter(|i| !dummies.contains(i)).collect();
    let signatures = draw_signatures(&active, config.n_effects, config.max_interaction_order, rng);

    let mut budget = vec![0usize; signatures.len()];
    for _ in 0..config.n_nonlinearities {
        budget[rng.random_range(0..signatures.len())] += 1;
    }

    let mut terms = Vec::with_capacity(signatures.len());
    for (sig, nl) in signatures.iter().zip(budget) {
        let term = (0..TERM_ATTEMPTS).find_map(|_| {
            let t = build_term(sig, nl, &config.operators, rng);
            is_single_effect(&t, sig).then_some(t)
        })?;
        terms.push(term);
    }

    let model = AdditiveModel::from_expr(d, sum_of(terms)).ok()?;
    let distinct: BTreeSet<&EffectSignature> = signatures.iter().collect();
    let produced: BTreeSet<&EffectSignature> = model.effects().iter().map(|e| &e.signature).collect();
    (model.intercept() == 0.0 && distinct == produced && model.dummy_features() == dummies.into_iter().collect::<Vec<_>>())
        .then_some(model)
}

fn n_choose_k(n: usize, k: usize) -> usize {
    (0..k).fold(1usize, |acc, i| acc.saturating_mul(n - i) / (i + 1))
}

/// One signature per term. The first term has exactly `max_order` features;
/// uncovered features are consumed greedily so coverage is guaranteed, and
/// repeats are avoided while unused signatures remain.
fn draw_signatures(
    active: &[usize],
    n_terms: usize,
    max_order: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<EffectSignature> {
    let capacity = (1..=max_order).fold(0usize, |acc, s| acc.saturating_add(n_choose_k(active.len(), s)));
    let mut uncovered: Vec<usize> = active.to_vec();
    uncovered.shuffle(rng);
    let mut out: Vec<EffectSignature> = Vec::with_capacity(n_terms);

    for t in 0..n_terms {
        let remaining = n_terms - t;
        let min_size = uncovered.len().div_ceil(remaining).max(1);
        let mut candidate = EffectSignature::empty();
        for _ in 0..64 {
            let size = if t == 0 {
                max_order
            } else {
                rng.random_range(min_size..=max_order)
            };
            let take = size.min(uncovered.len());
            let mut features: Vec<usize> = uncovered
                .choose_multiple(rng, take)
                .copied()
                .collect();
            let pool: Vec<usize> = active.iter().copied().filter(|f| !features.contains(f)).collect();
            features.extend(pool.choose_multiple(rng, size - take).copied());
            candidate = EffectSignature::new(features);
            let used: BTreeSet<&EffectSignature> = out.iter().collect();
            if !used.contains(&candidate) || used.len() >= capacity {
                break;
            }
        }
        uncovered.retain(|f| !candidate.contains(*f));
        out.push(candidate);
    }
    out
}

fn is_single_effect(term: &Expr, sig: &EffectSignature) -> bool {
    let parts = decompose_additive(&expand(term));
    parts.len() == 1 && parts[0].0 == *sig
}

/// Unary ops that never get distributed by `expand`, so they may wrap a sum
/// without splitting it into separate effects.
const OPAQUE_WRAPPERS: [UnaryOp; 7] = [
    UnaryOp::Abs,
    UnaryOp::Sqrt,
    UnaryOp::Exp,
    UnaryOp::Log,
    UnaryOp::Sin,
    UnaryOp::Cos,
    UnaryOp::Recip,
];

fn pick_unary(ops: &OperatorTable, allowed: &[UnaryOp], rng: &mut ChaCha8Rng) -> Option<UnaryOp> {
    let weights: Vec<f64> = allowed.iter().map(|&op| ops.unary_weight(op)).collect();
    let dist = WeightedIndex::new(&weights).ok()?;
    Some(allowed[dist.sample(rng)])
}

/// Applies a unary op with the generator's domain guards: `sqrt` and `log`
/// only ever see an `abs`-wrapped argument.
fn wrap(op: UnaryOp, inner: Expr) -> Expr {
    match op {
        UnaryOp::Sqrt | UnaryOp::Log => Expr::unary(op, Expr::unary(UnaryOp::Abs, inner)),
        _ => Expr::unary(op, inner),
    }
}

/// One nonlinear application: any weighted unary op or an integer power.
/// Returns whether the application counts against the nonlinearity budget.
fn apply_nonlinear(piece: Expr, ops: &OperatorTable, rng: &mut ChaCha8Rng) -> (Expr, bool) {
    let mut choices: Vec<(Option<UnaryOp>, f64)> = UnaryOp::ALL
        .iter()
        .map(|&op| (Some(op), ops.unary_weight(op)))
        .collect();
    choices.push((None, ops.binary_weight(BinaryOp::Pow)));
    let Ok(dist) = WeightedIndex::new(choices.iter().map(|c| c.1)) else {
        return (Expr::unary(UnaryOp::Square, piece), true);
    };
    match choices[dist.sample(rng)].0 {
        Some(UnaryOp::Neg) => (Expr::unary(UnaryOp::Neg, piece), false),
        Some(op) => (wrap(op, piece), true),
        None => {
            let exponent = if rng.random_bool(0.5) { 2.0 } else { 3.0 };
            (Expr::pow(piece, Expr::Const(exponent)), true)
        }
    }
}

/// Joins two pieces non-additively. A sum or difference is only allowed
/// under an opaque unary wrapper.
fn combine(a: Expr, b: Expr, ops: &OperatorTable, rng: &mut ChaCha8Rng) -> Expr {
    let combiners = [BinaryOp::Add, BinaryOp::Sub, BinaryOp::Mul, BinaryOp::Div];
    let weights: Vec<f64> = combiners.iter().map(|&op| ops.binary_weight(op)).collect();
    let op = WeightedIndex::new(&weights)
        .map(|dist| combiners[dist.sample(rng)])
        .unwrap_or(BinaryOp::Mul);
    match op {
        BinaryOp::Add | BinaryOp::Sub => {
            match pick_unary(ops, &OPAQUE_WRAPPERS, rng) {
                Some(wrapper) => wrap(wrapper, Expr::binary(op, a, b)),
                None => Expr::mul(a, b),
            }
        }
        _ => Expr::binary(op, a, b),
    }
}

fn build_term(sig: &EffectSignature, nonlinear: usize, ops: &OperatorTable, rng: &mut ChaCha8Rng) -> Expr {
    let mut pieces: Vec<Expr> = sig.features().iter().map(|&i| Expr::var(i)).collect();
    let mut budget = nonlinear;
    while pieces.len() > 1 {
        if budget > 0 && rng.random_bool(0.5) {
            let idx = rng.random_range(0..pieces.len());
            let piece = std::mem::replace(&mut pieces[idx], Expr::Const(0.0));
            let (piece, counted) = apply_nonlinear(piece, ops, rng);
            pieces[idx] = piece;
            budget -= usize::from(counted);
            continue;
        }
        let a = pieces.swap_remove(rng.random_range(0..pieces.len()));
        let b = pieces.swap_remove(rng.random_range(0..pieces.len()));
        pieces.push(combine(a, b, ops, rng));
    }
    let mut term = pieces.pop().expect("signature is nonempty");
    while budget > 0 {
        let (next, counted) = apply_nonlinear(term, ops, rng);
        term = next;
        budget -= usize::from(counted);
    }
    if rng.random_bool(0.5) {
        let magnitude: f64 = rng.random_range(0.5..=2.0);
        let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let coefficient = sign * (magnitude * 100.0).round() / 100.0;
        term = Expr::mul(Expr::Const(coefficient), term);
    }
    term
}

/// Dense uniform check that the model and every effect are real, finite and
/// within the output bound.
fn validate_on_sample(model: &AdditiveModel, config: &GenerationConfig, rng: &mut ChaCha8Rng) -> bool {
    let (lo, hi) = config.validation_domain;
    let d = config.n_features;
    let x = Array2::from_shape_fn((config.validation_points, d), |_| rng.random_range(lo..=hi));
    let bounded = |v: &f64| v.abs() <= config.output_bound;
    match (model.predict(x.view()), model.ground_truth_contributions(x.view())) {
        (Ok(y), Ok(gt)) => y.iter().all(bounded) && gt.values.iter().all(bounded),
        _ => false,
    }
}
