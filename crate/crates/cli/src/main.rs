use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use ndarray::{s, Array1, Axis};

use posthoc_eval::alignment::Reconciliation;
use posthoc_eval::explainers::interchange::{read_explanations, write_explanations};
use posthoc_eval::explainers::{ExplainContext, ExplainerSpec, FeatureStats, LimeConfig, ShapConfig, ShapMode};
use posthoc_eval::expr::generate_model;
use posthoc_eval::harness::{
    evaluate_explanations, read_matrix_csv, read_records_csv, run_benchmark, sample_dataset, summarize,
    write_matrix_csv, write_summary_csv, Evaluation, ExplainerSummary, SweepConfig,
};
use posthoc_eval::metrics::Summary;
use posthoc_eval::{AdditiveModel, ContributionMatrix, ExpectationTable, GenerationConfig};

/// Evaluate feature-additive explainers against white-box additive models.
#[derive(Parser)]
#[command(name = "posthoc-eval", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a random additive model and write it as a model file.
    Generate(GenerateArgs),
    /// Sample a uniform (-1, 1) dataset with ceil(500*sqrt(d)) rows.
    Sample(SampleArgs),
    /// Explain rows of a dataset with one explainer and write an explanation file.
    Explain(ExplainArgs),
    /// Score an explanation file against a model's ground truth.
    Evaluate(EvaluateArgs),
    /// Run a full sweep over generated models and the explainer roster.
    Benchmark(BenchmarkArgs),
    /// Aggregate a records file into per-explainer summary rows.
    Report(ReportArgs),
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    d: usize,
    #[arg(long, default_value_t = 4)]
    effects: usize,
    #[arg(long, default_value_t = 2)]
    max_order: usize,
    #[arg(long, default_value_t = 0)]
    dummy: usize,
    #[arg(long, default_value_t = 2)]
    nonlinear: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output file; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SampleArgs {
    #[arg(long)]
    d: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExplainArgs {
    #[arg(long)]
    model: PathBuf,
    /// Dataset CSV with header x1..xd.
    #[arg(long)]
    data: PathBuf,
    /// One of pdp, lime, shap, shap-exact, exact-shapley.
    #[arg(long)]
    explainer: String,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Explain only the first N rows.
    #[arg(long)]
    n_explain: Option<usize>,
    /// Use only the first N rows as background.
    #[arg(long)]
    background_size: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    n_perturbations: Option<usize>,
    #[arg(long)]
    n_coalitions: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ReconcileArg {
    AddBack,
    Identity,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    explanations: PathBuf,
    #[arg(long, requires = "data", conflicts_with_all = ["ground_truth", "expectations"])]
    model: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    /// Background rows taken from the start of the dataset.
    #[arg(long)]
    background_size: Option<usize>,
    /// Ground-truth contribution CSV, one row per explained instance index.
    #[arg(long, requires = "expectations", required_unless_present = "model")]
    ground_truth: Option<PathBuf>,
    #[arg(long)]
    expectations: Option<PathBuf>,
    /// Overrides the rule implied by the explainer tag.
    #[arg(long, value_enum)]
    reconcile: Option<ReconcileArg>,
}

#[derive(Args)]
struct BenchmarkArgs {
    /// Sweep configuration in TOML; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    models: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long)]
    records: PathBuf,
    /// Summary CSV destination; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate(a) => generate(a),
        Command::Sample(a) => sample(a),
        Command::Explain(a) => explain(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Benchmark(a) => benchmark(a),
        Command::Report(a) => report(a),
    }
}

fn sink(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("cannot create {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(
        File::open(path).with_context(|| format!("cannot open {}", path.display()))?,
    ))
}

fn load_model(path: &Path) -> Result<AdditiveModel> {
    AdditiveModel::read_from(open(path)?).with_context(|| format!("reading model {}", path.display()))
}

fn generate(a: GenerateArgs) -> Result<()> {
    let config = GenerationConfig {
        n_features: a.d,
        n_effects: a.effects,
        max_interaction_order: a.max_order,
        n_nonlinearities: a.nonlinear,
        n_dummy: a.dummy,
        seed: a.seed,
        ..GenerationConfig::default()
    };
    let model = generate_model(&config)?;
    model.write_to(sink(a.out.as_deref())?)?;
    Ok(())
}

fn sample(a: SampleArgs) -> Result<()> {
    if a.d == 0 {
        bail!("--d must be at least 1");
    }
    write_matrix_csv(&sample_dataset(a.d, a.seed), sink(a.out.as_deref())?)?;
    Ok(())
}

fn explainer_spec(a: &ExplainArgs) -> Result<ExplainerSpec> {
    let mut spec = ExplainerSpec::from_tag(&a.explainer)
        .with_context(|| format!("unknown explainer `{}`", a.explainer))?
        .with_seed(a.seed);
    match &mut spec {
        ExplainerSpec::Lime(LimeConfig { n_perturbations, .. }) => {
            if let Some(n) = a.n_perturbations {
                *n_perturbations = n;
            }
        }
        ExplainerSpec::Shap(ShapConfig {
            mode: ShapMode::Sampled,
            n_coalitions,
            ..
        }) if a.n_coalitions.is_some() => *n_coalitions = a.n_coalitions,
        _ => {}
    }
    spec.validate().map_err(anyhow::Error::msg)?;
    Ok(spec)
}

fn explain(a: ExplainArgs) -> Result<()> {
    let spec = explainer_spec(&a)?;
    let model = load_model(&a.model)?;
    let data = read_matrix_csv(open(&a.data)?)?;
    if data.ncols() != model.n_features() {
        bail!(
            "dataset has {} columns but the model has d = {}",
            data.ncols(),
            model.n_features()
        );
    }
    let n = a.n_explain.unwrap_or(data.nrows()).min(data.nrows());
    let bg = a.background_size.unwrap_or(data.nrows()).min(data.nrows());
    let stats = FeatureStats::from_data(data.view())?;
    let ctx = ExplainContext {
        background: data.slice(s![..bg, ..]),
        stats: &stats,
    };
    let set = spec.explain_all(&model, data.slice(s![..n, ..]), (0..n).collect(), ctx)?;
    write_explanations(&set, model.n_features(), sink(a.out.as_deref())?)?;
    Ok(())
}

fn evaluate(a: EvaluateArgs) -> Result<()> {
    let (d, set) = read_explanations(open(&a.explanations)?)
        .with_context(|| format!("reading explanations {}", a.explanations.display()))?;

    let (truth, expectations, outputs) = if let Some(model_path) = &a.model {
        let model = load_model(model_path)?;
        if d != model.n_features() {
            bail!(
                "signature mismatch: explanation file has d = {d} but the model has d = {}",
                model.n_features()
            );
        }
        let data = read_matrix_csv(open(a.data.as_deref().expect("clap enforces --data"))?)?;
        if data.ncols() != d {
            bail!("dataset has {} columns but the model has d = {d}", data.ncols());
        }
        if let Some(&bad) = set.instance_indices.iter().find(|&&i| i >= data.nrows()) {
            bail!("explained instance {bad} is outside the dataset ({} rows)", data.nrows());
        }
        let instances = data.select(Axis(0), &set.instance_indices);
        let bg = a.background_size.unwrap_or(data.nrows()).min(data.nrows());
        let truth = model.ground_truth_contributions(instances.view())?;
        let expectations = model.expectations(data.slice(s![..bg, ..]))?;
        let outputs = model.predict(instances.view())?;
        (truth, expectations, outputs)
    } else {
        let gt_path = a.ground_truth.as_deref().expect("clap enforces --ground-truth");
        let full = ContributionMatrix::read_csv(open(gt_path)?, "ground-truth")?;
        let expectations = ExpectationTable::read_csv(open(a.expectations.as_deref().expect("clap enforces"))?)?;
        if let Some(m) = full.signatures.iter().filter_map(|s| s.max_feature()).max() {
            if m > d {
                bail!("signature mismatch: ground truth references x{m} but the explanation file has d = {d}");
            }
        }
        if let Some(&bad) = set.instance_indices.iter().find(|&&i| i >= full.n_samples()) {
            bail!("explained instance {bad} has no ground-truth row ({} rows)", full.n_samples());
        }
        let truth = ContributionMatrix {
            values: full.values.select(Axis(0), &set.instance_indices),
            ..full
        };
        let intercept = expectations.expected_output - expectations.expected.iter().sum::<f64>();
        let outputs: Array1<f64> = truth.row_sums() + intercept;
        (truth, expectations, outputs)
    };

    let rule = match a.reconcile {
        Some(ReconcileArg::AddBack) => Reconciliation::AddBack,
        Some(ReconcileArg::Identity) => Reconciliation::Identity,
        None => Reconciliation::for_tag(&set.explainer),
    };
    let outputs = outputs.to_vec();
    let ev = evaluate_explanations(&truth, &expectations, &outputs, &set, rule)?;
    print_evaluation(&set.explainer, &ev)?;
    Ok(())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".into(), |v| format!("{v:.6e}"))
}

fn print_evaluation(explainer: &str, ev: &Evaluation) -> Result<()> {
    let mut out = io::stdout().lock();
    let cos = Summary::of(&ev.cosine()).context("no explained instances")?;
    let euc = Summary::of(&ev.euclidean()).context("no explained instances")?;
    writeln!(out, "explainer\t{explainer}")?;
    writeln!(out, "instances\t{}", ev.scores.samples.len())?;
    writeln!(out, "maiou\t{}", fmt_opt(ev.maiou))?;
    writeln!(out, "cos_mean\t{:.6e}", cos.mean)?;
    writeln!(out, "cos_p50\t{:.6e}", cos.p50)?;
    writeln!(out, "cos_p95\t{:.6e}", cos.p95)?;
    writeln!(out, "cos_p99\t{:.6e}", cos.p99)?;
    writeln!(out, "euc_mean\t{:.6e}", euc.mean)?;
    writeln!(out, "nrmse_mean\t{:.6e}", ev.nrmse_mean())?;
    writeln!(out, "acc_rmse\t{:.6e}", ev.accuracy)?;
    for (c, score) in ev.matching.components.iter().zip(&ev.scores.effects) {
        let side = |sigs: &[posthoc_eval::EffectSignature]| {
            sigs.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(";")
        };
        writeln!(
            out,
            "component {}\t{} ~ {}\tiou={:.4}\tnrmse={:.6e}",
            c.id,
            side(&c.model),
            side(&c.explainer),
            c.mean_iou(),
            score.nrmse.value
        )?;
    }
    Ok(())
}

fn benchmark(a: BenchmarkArgs) -> Result<()> {
    let mut config = match &a.config {
        Some(p) => SweepConfig::from_toml(
            &fs::read_to_string(p).with_context(|| format!("cannot read {}", p.display()))?,
        )?,
        None => SweepConfig::default(),
    };
    if let Some(n) = a.models {
        config.n_models = n;
    }
    if let Some(s) = a.seed {
        config.master_seed = s;
    }
    if let Some(j) = a.jobs {
        config.parallelism = j;
    }
    if a.out.is_some() {
        config.output_dir = a.out;
    }
    let output = run_benchmark(&config)?;
    print_summary(&summarize(&output.records)?)?;
    if let Some(dir) = &config.output_dir {
        eprintln!("wrote {}", dir.display());
    }
    Ok(())
}

fn print_summary(summary: &[ExplainerSummary]) -> Result<()> {
    let mut out = io::stdout().lock();
    writeln!(out, "explainer\tok/attempts\tcos_mean\tcos_p95\teuc_mean\tnrmse_mean\tmaiou_mean\trho_perf")?;
    for s in summary {
        writeln!(
            out,
            "{}\t{}/{}\t{}\t{}\t{}\t{}\t{}\t{}",
            s.explainer,
            s.ok,
            s.attempts,
            fmt_opt(s.cos_mean),
            fmt_opt(s.cos_p95),
            fmt_opt(s.euc_mean),
            fmt_opt(s.nrmse_mean),
            fmt_opt(s.maiou_mean),
            fmt_opt(s.rho_perf)
        )?;
    }
    Ok(())
}

fn report(a: ReportArgs) -> Result<()> {
    let records = read_records_csv(open(&a.records)?)?;
    write_summary_csv(&summarize(&records)?, sink(a.out.as_deref())?)?;
    Ok(())
}
