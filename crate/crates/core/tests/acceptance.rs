//! Acceptance checks. Runs as a plain binary so every criterion prints a
//! PASS/FAIL line under `cargo test`; exits nonzero if any criterion fails.

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use ndarray::{s, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use posthoc_eval::alignment::{maiou, match_effects, Reconciliation};
use posthoc_eval::explainers::{
    exact_shapley, kernel_shap_explain, ExplainContext, ExplainerSpec, FeatureStats, LimeConfig, ShapConfig, ShapMode,
};
use posthoc_eval::expr::generate_model;
use posthoc_eval::harness::{
    derive_seed, draw_generation_config, evaluate_explanations, run_benchmark, sample_dataset, Evaluation,
    GenerationRanges, Status, SweepConfig,
};
use posthoc_eval::metrics::{cosine_distance, nrmse, spearman_rho};
use posthoc_eval::{AdditiveModel, EffectSignature};

type Check = fn() -> Result<String, String>;

fn main() -> ExitCode {
    let criteria: [(&str, Check); 9] = [
        ("shapley oracle agreement", shapley_oracle_agreement),
        ("completeness", completeness),
        ("match-effects oracle", match_effects_oracle),
        ("maiou golden values", maiou_goldens),
        ("additive-model recovery", additive_recovery),
        ("qualitative trend", qualitative_trend),
        ("metric golden values", metric_goldens),
        ("determinism", determinism),
        ("zero-tolerance dummy handling", dummy_handling),
    ];
    let mut failures = 0;
    for (name, check) in criteria {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS  {name}: {detail} [{secs:.1}s]"),
            Err(reason) => {
                failures += 1;
                println!("FAIL  {name}: {reason} [{secs:.1}s]");
            }
        }
    }
    println!(
        "acceptance: {} passed, {failures} failed",
        criteria.len() - failures
    );
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn ensure(cond: bool, message: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(message())
    }
}

/// Generated models from `ranges`, skipping seeds whose generation fails.
fn model_pool(ranges: &GenerationRanges, master: u64, count: usize) -> Vec<AdditiveModel> {
    let mut out = Vec::with_capacity(count);
    let mut i = 0u64;
    while out.len() < count {
        let g = draw_generation_config(ranges, derive_seed(master, i, "params"), derive_seed(master, i, "model"));
        if let Ok(m) = generate_model(&g) {
            out.push(m);
        }
        i += 1;
        assert!(i < 20 * count as u64, "generation keeps failing");
    }
    out
}

fn ranges(d: (usize, usize), order: (usize, usize), dummy: (usize, usize)) -> GenerationRanges {
    GenerationRanges {
        n_features: d,
        max_interaction_order: order,
        n_dummy: dummy,
        validation_points: 4000,
        ..GenerationRanges::default()
    }
}

fn sig(features: &[usize]) -> EffectSignature {
    EffectSignature::new(features.to_vec())
}

fn sigs(list: &[&[usize]]) -> Vec<EffectSignature> {
    list.iter().map(|f| sig(f)).collect()
}

fn shapley_oracle_agreement() -> Result<String, String> {
    let start = Instant::now();
    let models = model_pool(&ranges((2, 8), (1, 3), (0, 2)), 101, 200);
    let per_model: Vec<Result<(f64, usize), String>> = models
        .par_iter()
        .enumerate()
        .map(|(k, model)| {
            let d = model.n_features();
            let data = sample_dataset(d, derive_seed(101, k as u64, "data"));
            let mut worst = 0.0f64;
            let mut count = 0;
            for x in data.rows().into_iter().take(3) {
                let kernel = kernel_shap_explain(model, x, data.view(), &ShapConfig::exact()).map_err(|e| e.to_string())?;
                let oracle = exact_shapley(model, x, data.view()).map_err(|e| e.to_string())?;
                for (a, b) in kernel.contributions.iter().zip(&oracle.contributions) {
                    worst = worst.max((a - b).abs());
                    count += 1;
                }
            }
            Ok((worst, count))
        })
        .collect();
    let mut worst = 0.0f64;
    let mut compared = 0;
    for r in per_model {
        let (w, n) = r?;
        worst = worst.max(w);
        compared += n;
    }
    let elapsed = start.elapsed();
    ensure(worst <= 1e-6, || format!("max |kernel - exact| = {worst:.3e} > 1e-6"))?;
    ensure(elapsed < Duration::from_secs(300), || format!("took {elapsed:?}, limit 5 min"))?;
    Ok(format!(
        "200 models, {compared} values, max deviation {worst:.2e} (limit 1e-6)"
    ))
}

fn completeness() -> Result<String, String> {
    let models = model_pool(&ranges((1, 10), (1, 3), (0, 2)), 202, 200);
    let mut worst = 0.0f64;
    for (k, model) in models.iter().enumerate() {
        let d = model.n_features();
        let mut rng = ChaCha8Rng::seed_from_u64(k as u64);
        let x = Array2::from_shape_fn((10_000, d), |_| rng.random_range(-1.0..1.0));
        let y = model.predict(x.view()).map_err(|e| format!("model {k}: {e}"))?;
        let gt = model.ground_truth_contributions(x.view()).map_err(|e| format!("model {k}: {e}"))?;
        for (row, yi) in gt.values.rows().into_iter().zip(y.iter()) {
            let residual = yi - model.intercept() - row.sum();
            worst = worst.max(residual.abs() / yi.abs().max(1.0));
        }
    }
    ensure(worst <= 1e-10, || format!("max relative residual {worst:.3e} > 1e-10"))?;
    Ok(format!("200 models x 10000 samples, max relative residual {worst:.2e} (limit 1e-10)"))
}

/// Canonical partition: each component as (model side, explainer side).
type Partition = BTreeSet<(Vec<EffectSignature>, Vec<EffectSignature>)>;

fn union_find_partition(model: &[EffectSignature], explainer: &[EffectSignature]) -> Partition {
    let left: Vec<EffectSignature> = model.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect();
    let right: Vec<EffectSignature> = explainer.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect();
    let n = left.len() + right.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut i: usize) -> usize {
        while p[i] != i {
            p[i] = p[p[i]];
            i = p[i];
        }
        i
    }
    for (i, l) in left.iter().enumerate() {
        for (j, r) in right.iter().enumerate() {
            if l.features().iter().any(|f| r.features().contains(f)) {
                let (a, b) = (find(&mut parent, i), find(&mut parent, left.len() + j));
                parent[a] = b;
            }
        }
    }
    let mut groups: BTreeMap<usize, (Vec<EffectSignature>, Vec<EffectSignature>)> = BTreeMap::new();
    for v in 0..n {
        let root = find(&mut parent, v);
        let entry = groups.entry(root).or_default();
        if v < left.len() {
            entry.0.push(left[v].clone());
        } else {
            entry.1.push(right[v - left.len()].clone());
        }
    }
    let mut out = Partition::new();
    for (mut m, mut e) in groups.into_values() {
        m.sort();
        e.sort();
        if m == e {
            for s in m {
                out.insert((vec![s.clone()], vec![s]));
            }
        } else {
            out.insert((m, e));
        }
    }
    out
}

fn matched_partition(model: &[EffectSignature], explainer: &[EffectSignature]) -> Partition {
    match_effects(model, explainer)
        .components
        .into_iter()
        .map(|c| {
            let (mut m, mut e) = (c.model, c.explainer);
            m.sort();
            e.sort();
            (m, e)
        })
        .collect()
}

fn match_effects_oracle() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let random_set = |rng: &mut ChaCha8Rng, d: usize| -> Vec<EffectSignature> {
        let m = rng.random_range(1..=8);
        (0..m)
            .map(|_| {
                let k = rng.random_range(1..=d.min(4));
                sig(&(0..k).map(|_| rng.random_range(1..=d)).collect::<Vec<_>>())
            })
            .collect()
    };
    for trial in 0..1000 {
        let d = rng.random_range(1..=12);
        let a = random_set(&mut rng, d);
        let b = random_set(&mut rng, d);
        let got = matched_partition(&a, &b);
        let want = union_find_partition(&a, &b);
        ensure(got == want, || format!("trial {trial}: partition differs for {a:?} vs {b:?}"))?;
    }

    let worked: [(&[&[usize]], &[&[usize]], Partition); 4] = [
        (
            &[&[2], &[2, 3]],
            &[&[2], &[2, 3]],
            [(sigs(&[&[2]]), sigs(&[&[2]])), (sigs(&[&[2, 3]]), sigs(&[&[2, 3]]))].into(),
        ),
        (
            &[&[1], &[2]],
            &[&[1], &[2]],
            [(sigs(&[&[1]]), sigs(&[&[1]])), (sigs(&[&[2]]), sigs(&[&[2]]))].into(),
        ),
        (
            &[&[1], &[2, 3]],
            &[&[1, 2], &[3]],
            [(sigs(&[&[1], &[2, 3]]), sigs(&[&[1, 2], &[3]]))].into(),
        ),
        (
            &[&[1]],
            &[&[1], &[5]],
            [(sigs(&[&[1]]), sigs(&[&[1]])), (vec![], sigs(&[&[5]]))].into(),
        ),
    ];
    for (k, (m, e, want)) in worked.into_iter().enumerate() {
        let got = matched_partition(&sigs(m), &sigs(e));
        ensure(got == want, || format!("worked example {} gave {got:?}", k + 1))?;
    }
    Ok("1000 random pairs agree with union-find; 4 worked examples match".into())
}

fn maiou_goldens() -> Result<String, String> {
    let cases: [(&[&[usize]], &[&[usize]], f64, &str); 3] = [
        (&[&[1], &[2, 3]], &[&[1], &[2, 3]], 1.0, "1"),
        (&[&[1], &[2], &[3]], &[&[1, 2, 3]], 1.0 / 3.0, "1/3"),
        (&[&[1], &[2, 3]], &[&[1, 2], &[3]], 4.0 / 9.0, "4/9"),
    ];
    for (m, e, want, label) in cases {
        let got = maiou(&match_effects(&sigs(m), &sigs(e)));
        ensure(got == Some(want), || format!("expected {label}, got {got:?}"))?;
    }
    Ok("1, 1/3 and 4/9 reproduced exactly".into())
}

/// Explains the first `n_explain` rows of a fresh dataset with the full
/// dataset as background and scores the result.
fn explain_and_score(model: &AdditiveModel, spec: &ExplainerSpec, seed: u64, n_explain: usize) -> Result<Evaluation, String> {
    let data = sample_dataset(model.n_features(), seed);
    let stats = FeatureStats::from_data(data.view()).map_err(|e| e.to_string())?;
    let ctx = ExplainContext {
        background: data.view(),
        stats: &stats,
    };
    let instances = data.slice(s![..n_explain, ..]);
    let set = spec
        .with_seed(seed)
        .explain_all(model, instances, (0..n_explain).collect(), ctx)
        .map_err(|e| e.to_string())?;
    let truth = model.ground_truth_contributions(instances).map_err(|e| e.to_string())?;
    let expectations = model.expectations(data.view()).map_err(|e| e.to_string())?;
    let outputs = model.predict(instances).map_err(|e| e.to_string())?.to_vec();
    evaluate_explanations(&truth, &expectations, &outputs, &set, Reconciliation::for_tag(spec.tag()))
        .map_err(|e| e.to_string())
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn linear_model(d: usize, rng: &mut ChaCha8Rng) -> AdditiveModel {
    let terms: Vec<String> = (1..=d)
        .map(|i| {
            let mut c: f64 = rng.random_range(-3.0..3.0);
            if c.abs() < 0.1 {
                c = 0.5;
            }
            format!("({c:.4})*x{i}")
        })
        .collect();
    AdditiveModel::from_expr(d, terms.join(" + ").parse().expect("linear text parses")).expect("linear model")
}

fn additive_recovery() -> Result<String, String> {
    let additive = model_pool(&ranges((2, 8), (1, 1), (0, 0)), 505, 20);
    for m in &additive {
        ensure(m.max_order() == 1 && m.dummy_features().is_empty(), || {
            "pool produced a non-additive model".into()
        })?;
    }
    let scored = |spec: ExplainerSpec| -> Result<f64, String> {
        let per_model: Vec<Result<f64, String>> = additive
            .par_iter()
            .enumerate()
            .map(|(k, m)| Ok(mean(&explain_and_score(m, &spec, k as u64, 30)?.cosine())))
            .collect();
        Ok(per_model.into_iter().collect::<Result<Vec<_>, _>>()?.into_iter().fold(0.0, f64::max))
    };
    let shap = scored(ExplainerSpec::Shap(ShapConfig::exact()))?;
    let pdp = scored(ExplainerSpec::Pdp)?;

    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let linear: Vec<AdditiveModel> = (0..20).map(|k| linear_model(2 + k % 9, &mut rng)).collect();
    let lime_spec = ExplainerSpec::Lime(LimeConfig::default());
    let lime = linear
        .iter()
        .enumerate()
        .map(|(k, m)| Ok(mean(&explain_and_score(m, &lime_spec, k as u64, 30)?.cosine())))
        .collect::<Result<Vec<f64>, String>>()?
        .into_iter()
        .fold(0.0, f64::max);

    ensure(shap < 1e-4, || format!("exact SHAP worst mean cosine {shap:.3e} >= 1e-4"))?;
    ensure(pdp < 1e-3, || format!("PDP worst mean cosine {pdp:.3e} >= 1e-3"))?;
    ensure(lime < 0.05, || format!("LIME worst mean cosine {lime:.3e} >= 0.05"))?;
    Ok(format!(
        "worst per-model mean cosine: SHAP {shap:.2e} (<1e-4), PDP {pdp:.2e} (<1e-3), LIME {lime:.2e} (<0.05)"
    ))
}

fn qualitative_trend() -> Result<String, String> {
    let start = Instant::now();
    let config = SweepConfig {
        n_models: 200,
        master_seed: 606,
        parallelism: rayon::current_num_threads(),
        n_explain: 50,
        background_size: Some(200),
        generation: ranges((2, 10), (1, 3), (0, 2)),
        explainers: vec![
            ExplainerSpec::Pdp,
            ExplainerSpec::Lime(LimeConfig::default()),
            ExplainerSpec::Shap(ShapConfig {
                mode: ShapMode::Sampled,
                n_coalitions: Some(128),
                ..ShapConfig::default()
            }),
        ],
        ..SweepConfig::default()
    };
    let out = run_benchmark(&config).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();

    let tags = ["pdp", "lime", "shap"];
    let mut by_model: BTreeMap<&str, Vec<&posthoc_eval::harness::EvaluationRecord>> = BTreeMap::new();
    for r in &out.records {
        by_model.entry(r.model_digest.as_str()).or_default().push(r);
    }
    let mut interaction: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for rs in by_model.values() {
        if rs[0].max_order >= 2 && rs.iter().all(|r| r.status == Status::Ok) {
            for r in rs {
                interaction.entry(r.explainer.as_str()).or_default().push(r.cos_mean.unwrap());
            }
        }
    }
    let means: Vec<f64> = tags.iter().map(|t| interaction.get(t).map_or(f64::NAN, |v| mean(v))).collect();
    let n_inter = interaction.get("shap").map_or(0, Vec::len);
    ensure(n_inter > 0, || "no interaction-bearing model succeeded for all explainers".into())?;
    ensure(means[2] <= means[0] && means[2] <= means[1], || {
        format!(
            "interaction models: SHAP {:.4} vs PDP {:.4}, LIME {:.4}",
            means[2], means[0], means[1]
        )
    })?;

    let mut rhos = Vec::new();
    for tag in tags {
        let (order, cos): (Vec<f64>, Vec<f64>) = out
            .records
            .iter()
            .filter(|r| r.explainer == tag && r.status == Status::Ok)
            .map(|r| (r.max_order as f64, r.cos_mean.unwrap()))
            .unzip();
        let rho = spearman_rho(&order, &cos).map_err(|e| format!("{tag}: {e}"))?;
        ensure(rho > 0.0, || format!("{tag}: rho(max order, cosine) = {rho:.3} not > 0"))?;
        rhos.push(rho);
    }
    ensure(elapsed < Duration::from_secs(1800), || format!("took {elapsed:?}, limit 30 min"))?;
    let ok = out.records.iter().filter(|r| r.status == Status::Ok).count();
    Ok(format!(
        "{ok}/{} ok; interaction models (n={n_inter}) mean cosine SHAP {:.4} <= PDP {:.4}, LIME {:.4}; rho(order, cosine) PDP {:.3}, LIME {:.3}, SHAP {:.3}",
        out.records.len(),
        means[2],
        means[0],
        means[1],
        rhos[0],
        rhos[1],
        rhos[2]
    ))
}

fn metric_goldens() -> Result<String, String> {
    let a = [0.3, -1.7, 2.2];
    let b: Vec<f64> = a.iter().map(|v| -v).collect();
    let cos = cosine_distance(&a, &b).map_err(|e| e.to_string())?;
    ensure((cos - 2.0).abs() <= 1e-12, || format!("opposite vectors: cosine {cos}"))?;
    let truth = [0.0, 1.0, 2.0, 3.0, 4.0];
    let est: Vec<f64> = truth.iter().map(|v| v + 1.0).collect();
    let n = nrmse(&truth, &est).map_err(|e| e.to_string())?.value;
    ensure((n - 0.5).abs() <= 1e-12, || format!("NRMSE {n}, expected 0.5"))?;
    let rho = spearman_rho(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]).map_err(|e| e.to_string())?;
    ensure((rho - 0.8).abs() <= 1e-12, || format!("spearman {rho}, expected 0.8"))?;
    Ok(format!("cosine {cos}, NRMSE {n}, rho {rho}"))
}

fn determinism() -> Result<String, String> {
    let base = SweepConfig {
        n_models: 12,
        master_seed: 808,
        n_explain: 15,
        background_size: Some(150),
        generation: ranges((2, 9), (1, 3), (0, 2)),
        explainers: vec![
            ExplainerSpec::Pdp,
            ExplainerSpec::Lime(LimeConfig {
                n_perturbations: 1000,
                ..LimeConfig::default()
            }),
            ExplainerSpec::Shap(ShapConfig {
                n_coalitions: Some(128),
                ..ShapConfig::default()
            }),
        ],
        ..SweepConfig::default()
    };
    let runs: Vec<_> = [1, 1, 4, 4]
        .into_iter()
        .map(|p| {
            run_benchmark(&SweepConfig {
                parallelism: p,
                ..base.clone()
            })
        })
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    let reference = &runs[0];
    for (k, run) in runs.iter().enumerate().skip(1) {
        ensure(run.records.len() == reference.records.len(), || format!("run {k}: record count differs"))?;
        for (a, b) in reference.records.iter().zip(&run.records) {
            ensure(a.same_results(b), || format!("run {k}: {a:?} != {b:?}"))?;
        }
        ensure(run.components == reference.components, || format!("run {k}: component records differ"))?;
        ensure(run.manifest.models == reference.manifest.models, || format!("run {k}: manifest differs"))?;
    }
    Ok(format!(
        "{} records identical across 4 runs at parallelism 1, 1, 4, 4",
        reference.records.len()
    ))
}

fn dummy_handling() -> Result<String, String> {
    let models = model_pool(&ranges((2, 8), (1, 3), (1, 3)), 909, 50);
    let spec = ExplainerSpec::Shap(ShapConfig::exact());
    let per_model: Vec<Result<usize, String>> = models
        .par_iter()
        .enumerate()
        .map(|(k, model)| {
            let dummies = model.dummy_features();
            if dummies.is_empty() {
                return Err(format!("model {k} has no dummy feature"));
            }
            let ev = explain_and_score(model, &spec, k as u64, 20)?;
            let mut seen = 0;
            for ((c, pair), score) in ev.matching.components.iter().zip(&ev.pairs).zip(&ev.scores.effects) {
                let is_dummy = c.explainer.len() == 1 && dummies.contains(&c.explainer[0].features()[0]);
                if !is_dummy {
                    continue;
                }
                seen += 1;
                if !c.model.is_empty() {
                    return Err(format!("model {k}: dummy {} matched a model effect", c.explainer[0]));
                }
                let zero = pair.truth.iter().chain(pair.explained.iter()).all(|&v| v == 0.0);
                let cosines_ok = pair
                    .truth
                    .iter()
                    .zip(pair.explained.iter())
                    .all(|(t, e)| cosine_distance(&[*t], &[*e]) == Ok(0.0));
                if !(zero && cosines_ok && score.nrmse.value == 0.0 && score.mean_abs_error == 0.0) {
                    return Err(format!("model {k}: dummy component {} not scored as perfect", c.id));
                }
            }
            if seen != dummies.len() {
                return Err(format!("model {k}: {seen} dummy components for {} dummies", dummies.len()));
            }
            Ok(seen)
        })
        .collect();
    let total: usize = per_model.into_iter().collect::<Result<Vec<_>, _>>()?.into_iter().sum();
    Ok(format!("50 models, {total} dummy components all scored (0, 0) with zero error"))
}
