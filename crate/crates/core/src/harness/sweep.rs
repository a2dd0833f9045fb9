use std::fs::{self, File};
use std::io::BufWriter;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use ndarray::{s, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{GenerationRanges, SweepConfig};
use super::dataset::{sample_dataset, write_matrix_csv};
use super::evaluate::{evaluate_explanations, Evaluation};
use super::report::emit_report;
use super::seeds::derive_seed;
use super::HarnessError;
use crate::alignment::Reconciliation;
use crate::explainers::interchange::write_explanations;
use crate::explainers::{ExplainContext, ExplainError, ExplainerSpec, ExplanationSet, FeatureStats};
use crate::expr::{generate_model, GenerationConfig};
use crate::metrics::{Normalization, Summary};
use crate::model::AdditiveModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Ok,
    DiscardedDomain,
    ExplainFailed,
    Timeout,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Ok => "ok",
            Status::DiscardedDomain => "discarded-domain",
            Status::ExplainFailed => "explain-failed",
            Status::Timeout => "timeout",
        }
    }
}

/// One row of `records.csv`: a (model, explainer) attempt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationRecord {
    pub model_digest: String,
    pub explainer: String,
    pub d: usize,
    #[serde(rename = "m_F")]
    pub m_f: usize,
    pub max_order: usize,
    pub n_dummy: usize,
    pub n_nonlinear: usize,
    pub status: Status,
    pub maiou: Option<f64>,
    pub cos_mean: Option<f64>,
    pub cos_p50: Option<f64>,
    pub cos_p95: Option<f64>,
    pub cos_p99: Option<f64>,
    pub euc_mean: Option<f64>,
    pub nrmse_mean: Option<f64>,
    pub acc_rmse: Option<f64>,
    pub wall_ms: f64,
}

impl EvaluationRecord {
    /// Equality of everything except timing.
    pub fn same_results(&self, other: &Self) -> bool {
        Self {
            wall_ms: 0.0,
            ..self.clone()
        } == Self {
            wall_ms: 0.0,
            ..other.clone()
        }
    }
}

/// One row of `components.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentRecord {
    pub model_digest: String,
    pub explainer: String,
    pub component: usize,
    /// Signatures joined by `;`.
    pub model_side: String,
    pub explainer_side: String,
    /// Edge IoUs joined by `;`, in edge order.
    pub edge_iou: String,
    pub mean_iou: f64,
    pub nrmse: f64,
    pub normalization: Normalization,
    pub mean_abs_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelEntry {
    pub index: usize,
    pub generation_seed: Option<u64>,
    pub data_seed: u64,
    pub digest: Option<String>,
    pub status: Status,
    pub reason: Option<String>,
    pub generation: Option<GenerationConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attempt {
    pub model_index: usize,
    pub explainer: String,
    pub seed: u64,
    pub status: Status,
    pub wall_ms: f64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_digest: String,
    pub code_version: String,
    pub master_seed: u64,
    pub models: Vec<ModelEntry>,
    pub attempts: Vec<Attempt>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkOutput {
    pub manifest: RunManifest,
    pub records: Vec<EvaluationRecord>,
    pub components: Vec<ComponentRecord>,
}

/// Draws one model's generation parameters from `ranges`, clamping each
/// draw so the combination is feasible (at least one active feature, order
/// at most the active count, enough effects to cover every active feature).
pub fn draw_generation_config(ranges: &GenerationRanges, params_seed: u64, model_seed: u64) -> GenerationConfig {
    let mut rng = ChaCha8Rng::seed_from_u64(params_seed);
    let draw = |rng: &mut ChaCha8Rng, lo: usize, hi: usize| rng.random_range(lo.min(hi)..=hi);
    let d = draw(&mut rng, ranges.n_features.0, ranges.n_features.1);
    let n_dummy = draw(&mut rng, ranges.n_dummy.0.min(d - 1), ranges.n_dummy.1.min(d - 1));
    let active = d - n_dummy;
    let order = draw(
        &mut rng,
        ranges.max_interaction_order.0.min(active),
        ranges.max_interaction_order.1.min(active),
    );
    let min_effects = active.div_ceil(order);
    let n_effects = draw(
        &mut rng,
        ranges.n_effects.0.max(min_effects),
        ranges.n_effects.1.max(min_effects),
    );
    let n_nonlinearities = draw(&mut rng, ranges.n_nonlinearities.0, ranges.n_nonlinearities.1);
    GenerationConfig {
        n_features: d,
        n_effects,
        max_interaction_order: order,
        n_nonlinearities,
        n_dummy,
        seed: model_seed,
        validation_domain: (-1.0, 1.0),
        validation_points: ranges.validation_points,
        output_bound: ranges.output_bound,
        max_retries: ranges.max_retries,
        operators: ranges.operators.clone(),
    }
}

enum Source {
    Generate(GenerationConfig),
    Given(AdditiveModel),
}

/// Runs the sweep described by `config`. When `output_dir` is set, all
/// artifacts and report files are written there.
pub fn run_benchmark(config: &SweepConfig) -> Result<BenchmarkOutput, HarnessError> {
    config.validate()?;
    let sources = (0..config.n_models)
        .map(|i| {
            let i = i as u64;
            Source::Generate(draw_generation_config(
                &config.generation,
                derive_seed(config.master_seed, i, "params"),
                derive_seed(config.master_seed, i, "model"),
            ))
        })
        .collect();
    run_sources(config, sources)
}

/// Runs the sweep on fixed models instead of generated ones; `n_models`
/// and the generation ranges are ignored.
pub fn run_on_models(config: &SweepConfig, models: Vec<AdditiveModel>) -> Result<BenchmarkOutput, HarnessError> {
    let config = SweepConfig {
        n_models: models.len().max(1),
        ..config.clone()
    };
    config.validate()?;
    if models.is_empty() {
        return Err(HarnessError::Invalid("no models to evaluate".into()));
    }
    run_sources(&config, models.into_iter().map(Source::Given).collect())
}

struct ModelOutcome {
    entry: ModelEntry,
    attempts: Vec<Attempt>,
    records: Vec<EvaluationRecord>,
    components: Vec<ComponentRecord>,
}

fn run_sources(config: &SweepConfig, sources: Vec<Source>) -> Result<BenchmarkOutput, HarnessError> {
    if let Some(dir) = &config.output_dir {
        for sub in ["models", "instances", "ground_truth", "expectations", "explanations"] {
            fs::create_dir_all(dir.join(sub))?;
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.parallelism)
        .build()
        .map_err(|e| HarnessError::Invalid(format!("cannot start worker pool: {e}")))?;
    let outcomes: Vec<ModelOutcome> = pool.install(|| {
        sources
            .into_par_iter()
            .enumerate()
            .map(|(i, source)| process_model(config, i, source))
            .collect::<Result<_, _>>()
    })?;

    let mut manifest = RunManifest {
        config_digest: config.digest(),
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        master_seed: config.master_seed,
        models: Vec::with_capacity(outcomes.len()),
        attempts: Vec::new(),
    };
    let mut records = Vec::new();
    let mut components = Vec::new();
    for o in outcomes {
        manifest.models.push(o.entry);
        manifest.attempts.extend(o.attempts);
        records.extend(o.records);
        components.extend(o.components);
    }
    let output = BenchmarkOutput {
        manifest,
        records,
        components,
    };
    if let Some(dir) = &config.output_dir {
        emit_report(&output, dir)?;
    }
    Ok(output)
}

/// Per-model facts shared by all of its records.
struct ModelFacts {
    digest: String,
    d: usize,
    m_f: usize,
    max_order: usize,
    n_dummy: usize,
    n_nonlinear: usize,
}

impl ModelFacts {
    fn of(model: &AdditiveModel) -> Self {
        Self {
            digest: model.digest(),
            d: model.n_features(),
            m_f: model.effects().len(),
            max_order: model.max_order(),
            n_dummy: model.dummy_features().len(),
            n_nonlinear: model.nonlinear_count(),
        }
    }

    fn requested(g: &GenerationConfig) -> Self {
        Self {
            digest: String::new(),
            d: g.n_features,
            m_f: g.n_effects,
            max_order: g.max_interaction_order,
            n_dummy: g.n_dummy,
            n_nonlinear: g.n_nonlinearities,
        }
    }

    fn record(&self, explainer: &str, status: Status, wall_ms: f64) -> EvaluationRecord {
        EvaluationRecord {
            model_digest: self.digest.clone(),
            explainer: explainer.to_string(),
            d: self.d,
            m_f: self.m_f,
            max_order: self.max_order,
            n_dummy: self.n_dummy,
            n_nonlinear: self.n_nonlinear,
            status,
            maiou: None,
            cos_mean: None,
            cos_p50: None,
            cos_p95: None,
            cos_p99: None,
            euc_mean: None,
            nrmse_mean: None,
            acc_rmse: None,
            wall_ms,
        }
    }
}

fn stem(index: usize) -> String {
    format!("model_{index:04}")
}

fn discard(
    config: &SweepConfig,
    mut entry: ModelEntry,
    facts: ModelFacts,
    reason: String,
) -> ModelOutcome {
    entry.status = Status::DiscardedDomain;
    entry.reason = Some(reason.clone());
    let index = entry.index;
    let mut attempts = Vec::new();
    let mut records = Vec::new();
    for spec in &config.explainers {
        let tag = spec.tag();
        attempts.push(Attempt {
            model_index: index,
            explainer: tag.to_string(),
            seed: derive_seed(config.master_seed, index as u64, tag),
            status: Status::DiscardedDomain,
            wall_ms: 0.0,
            error: Some(reason.clone()),
        });
        records.push(facts.record(tag, Status::DiscardedDomain, 0.0));
    }
    ModelOutcome {
        entry,
        attempts,
        records,
        components: Vec::new(),
    }
}

fn process_model(config: &SweepConfig, index: usize, source: Source) -> Result<ModelOutcome, HarnessError> {
    let data_seed = derive_seed(config.master_seed, index as u64, "data");
    let mut entry = ModelEntry {
        index,
        generation_seed: None,
        data_seed,
        digest: None,
        status: Status::Ok,
        reason: None,
        generation: None,
    };
    let model = match source {
        Source::Given(m) => m,
        Source::Generate(g) => {
            entry.generation_seed = Some(g.seed);
            entry.generation = Some(g.clone());
            match generate_model(&g) {
                Ok(m) => m,
                Err(e) => return Ok(discard(config, entry, ModelFacts::requested(&g), e.to_string())),
            }
        }
    };
    let facts = ModelFacts::of(&model);
    entry.digest = Some(facts.digest.clone());

    let data = sample_dataset(model.n_features(), data_seed);
    let outputs = match model.predict(data.view()) {
        Ok(y) => y,
        Err(e) => return Ok(discard(config, entry, facts, e.to_string())),
    };
    if outputs.iter().any(|v| !v.is_finite()) {
        return Ok(discard(config, entry, facts, "non-finite prediction on the dataset".into()));
    }
    let bound = config.generation.output_bound;
    if let Some(v) = outputs.iter().find(|v| v.abs() > bound) {
        return Ok(discard(config, entry, facts, format!("prediction {v:e} exceeds the output bound {bound:e}")));
    }
    let n_explain = config.n_explain.min(data.nrows());
    let instances = data.slice(s![..n_explain, ..]);
    let background = data.slice(s![..config.background_size.unwrap_or(data.nrows()).min(data.nrows()), ..]);
    let stats = FeatureStats::from_data(data.view()).expect("dataset is nonempty");
    let truth = model.ground_truth_contributions(instances)?;
    let expectations = model.expectations(background)?;
    let instance_outputs = outputs.slice(s![..n_explain]).to_vec();

    if let Some(dir) = &config.output_dir {
        let name = stem(index);
        model.write_to(BufWriter::new(File::create(dir.join("models").join(format!("{name}.txt")))?))?;
        write_matrix_csv(
            &instances.to_owned(),
            BufWriter::new(File::create(dir.join("instances").join(format!("{name}.csv")))?),
        )?;
        truth.write_csv(BufWriter::new(File::create(dir.join("ground_truth").join(format!("{name}.csv")))?))?;
        expectations
            .write_csv(BufWriter::new(File::create(dir.join("expectations").join(format!("{name}.csv")))?))?;
    }

    let ctx = ExplainContext {
        background,
        stats: &stats,
    };
    let budget = Duration::from_millis(config.budget_ms);
    let mut outcome = ModelOutcome {
        entry,
        attempts: Vec::new(),
        records: Vec::new(),
        components: Vec::new(),
    };
    for spec in &config.explainers {
        let tag = spec.tag();
        let seed = derive_seed(config.master_seed, index as u64, tag);
        let seeded = spec.with_seed(seed);
        let start = Instant::now();
        let run = catch_unwind(AssertUnwindSafe(|| {
            explain_within_budget(&seeded, &model, instances, ctx, budget, start)
        }));
        let explained = match run {
            Ok(r) => r,
            Err(panic) => Err(Failure::Failed(panic_message(panic.as_ref()))),
        };
        let evaluated = explained.and_then(|set| {
            evaluate_explanations(&truth, &expectations, &instance_outputs, &set, Reconciliation::for_tag(tag))
                .map(|ev| (set, ev))
                .map_err(|e| Failure::Failed(e.to_string()))
        });
        let wall_ms = start.elapsed().as_secs_f64() * 1e3;

        let (status, error) = match &evaluated {
            Ok(_) => (Status::Ok, None),
            Err(Failure::Timeout) => (Status::Timeout, Some(format!("exceeded {} ms", config.budget_ms))),
            Err(Failure::Failed(m)) => (Status::ExplainFailed, Some(m.clone())),
        };
        outcome.attempts.push(Attempt {
            model_index: index,
            explainer: tag.to_string(),
            seed,
            status,
            wall_ms,
            error,
        });
        let mut record = facts.record(tag, status, wall_ms);
        if let Ok((set, ev)) = evaluated {
            fill_scores(&mut record, &ev);
            outcome.components.extend(component_records(&facts.digest, tag, &ev));
            if let Some(dir) = &config.output_dir {
                let path = dir.join("explanations").join(format!("{}.{tag}.txt", stem(index)));
                write_explanations(&set, model.n_features(), BufWriter::new(File::create(path)?))?;
            }
        }
        outcome.records.push(record);
    }
    Ok(outcome)
}

enum Failure {
    Timeout,
    Failed(String),
}

impl From<ExplainError> for Failure {
    fn from(e: ExplainError) -> Self {
        Failure::Failed(e.to_string())
    }
}

/// Explains instance by instance, giving up once the budget is spent.
fn explain_within_budget(
    spec: &ExplainerSpec,
    model: &AdditiveModel,
    instances: ArrayView2<'_, f64>,
    ctx: ExplainContext<'_>,
    budget: Duration,
    start: Instant,
) -> Result<ExplanationSet, Failure> {
    let mut explanations = Vec::with_capacity(instances.nrows());
    for x in instances.rows() {
        explanations.push(spec.explain(model, x, ctx)?);
        if start.elapsed() > budget {
            return Err(Failure::Timeout);
        }
    }
    Ok(ExplanationSet::from_explanations(
        explanations,
        (0..instances.nrows()).collect(),
    )?)
}

fn panic_message(payload: &(dyn std::any::Any + Send)) -> String {
    let text = payload
        .downcast_ref::<&str>()
        .map(|s| s.to_string())
        .or_else(|| payload.downcast_ref::<String>().cloned())
        .unwrap_or_else(|| "unknown panic payload".into());
    format!("explainer panicked: {text}")
}

fn fill_scores(record: &mut EvaluationRecord, ev: &Evaluation) {
    let cos = Summary::of(&ev.cosine()).expect("instances are nonempty");
    let euc = Summary::of(&ev.euclidean()).expect("instances are nonempty");
    debug_assert!(ev.cosine().iter().all(|c| (0.0..=2.0).contains(c)));
    debug_assert!(ev.euclidean().iter().all(|e| *e >= 0.0));
    debug_assert!(ev.scores.effects.iter().all(|e| e.nrmse.value >= 0.0));
    record.maiou = ev.maiou;
    record.cos_mean = Some(cos.mean);
    record.cos_p50 = Some(cos.p50);
    record.cos_p95 = Some(cos.p95);
    record.cos_p99 = Some(cos.p99);
    record.euc_mean = Some(euc.mean);
    record.nrmse_mean = Some(ev.nrmse_mean());
    record.acc_rmse = Some(ev.accuracy);
}

fn join<T: ToString>(items: impl IntoIterator<Item = T>) -> String {
    items.into_iter().map(|t| t.to_string()).collect::<Vec<_>>().join(";")
}

fn component_records(digest: &str, explainer: &str, ev: &Evaluation) -> Vec<ComponentRecord> {
    ev.matching
        .components
        .iter()
        .zip(&ev.scores.effects)
        .map(|(c, score)| ComponentRecord {
            model_digest: digest.to_string(),
            explainer: explainer.to_string(),
            component: c.id,
            model_side: join(&c.model),
            explainer_side: join(&c.explainer),
            edge_iou: join(c.edges.iter().map(|e| e.iou)),
            mean_iou: c.mean_iou(),
            nrmse: score.nrmse.value,
            normalization: score.nrmse.normalization,
            mean_abs_error: score.mean_abs_error,
        })
        .collect()
}
