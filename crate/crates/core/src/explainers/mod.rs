//! Reference local explainers that only see a model through [`BlackBox`].
//!
//! Every built-in explainer attributes to single features, so explanation
//! signatures are the singletons `{1}, …, {d}`. External explainers with
//! richer signatures enter through the [`interchange`] format instead.

use std::collections::BTreeMap;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{AdditiveModel, ContributionMatrix};
use crate::EffectSignature;

mod exact;
mod game;
pub mod interchange;
mod kernel_shap;
mod lime;
mod pdp;

pub use exact::{exact_shapley, EXACT_SHAPLEY_MAX_FEATURES};
pub use kernel_shap::{kernel_shap_explain, EXACT_SHAP_MAX_FEATURES};
pub use lime::{lime_explain, rescale_coefficients};
pub use pdp::pdp_explain;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExplainError {
    #[error("black-box query failed: {0}")]
    Query(String),
    #[error("{n_features} features exceed the enumeration limit of {limit}")]
    BudgetExceeded { n_features: usize, limit: usize },
    #[error("surrogate fit is singular: {0}")]
    SingularFit(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("background dataset is empty")]
    EmptyBackground,
}

/// Query access to a model. Implementations must be deterministic and
/// safe to call from several threads.
pub trait BlackBox: Sync {
    fn n_features(&self) -> usize;
    fn predict(&self, x: ArrayView2<'_, f64>) -> Result<Array1<f64>, ExplainError>;
}

impl BlackBox for AdditiveModel {
    fn n_features(&self) -> usize {
        AdditiveModel::n_features(self)
    }

    fn predict(&self, x: ArrayView2<'_, f64>) -> Result<Array1<f64>, ExplainError> {
        AdditiveModel::predict(self, x).map_err(|e| ExplainError::Query(e.to_string()))
    }
}

/// Wraps a row-wise closure as a black box.
pub struct FnBlackBox<F> {
    n_features: usize,
    f: F,
}

impl<F> FnBlackBox<F>
where
    F: Fn(ArrayView1<'_, f64>) -> f64 + Sync,
{
    pub fn new(n_features: usize, f: F) -> Self {
        Self { n_features, f }
    }
}

impl<F> BlackBox for FnBlackBox<F>
where
    F: Fn(ArrayView1<'_, f64>) -> f64 + Sync,
{
    fn n_features(&self) -> usize {
        self.n_features
    }

    fn predict(&self, x: ArrayView2<'_, f64>) -> Result<Array1<f64>, ExplainError> {
        Ok(x.rows().into_iter().map(|r| (self.f)(r)).collect())
    }
}

/// One local explanation.
#[derive(Debug, Clone, PartialEq)]
pub struct Explanation {
    pub explainer: String,
    pub signatures: Vec<EffectSignature>,
    pub contributions: Vec<f64>,
    pub base_value: f64,
    pub diagnostics: BTreeMap<String, f64>,
}

impl Explanation {
    pub(crate) fn singletons(explainer: &str, contributions: Vec<f64>, base_value: f64) -> Self {
        Self {
            explainer: explainer.to_string(),
            signatures: singleton_signatures(contributions.len()),
            contributions,
            base_value,
            diagnostics: BTreeMap::new(),
        }
    }

    /// Base value plus all contributions: the explainer's implied prediction.
    pub fn implied_prediction(&self) -> f64 {
        self.base_value + self.contributions.iter().sum::<f64>()
    }
}

pub fn singleton_signatures(d: usize) -> Vec<EffectSignature> {
    (1..=d).map(EffectSignature::singleton).collect()
}

/// Explanations of several instances by one explainer, sharing signatures.
#[derive(Debug, Clone, PartialEq)]
pub struct ExplanationSet {
    pub explainer: String,
    pub signatures: Vec<EffectSignature>,
    /// n instances × m signatures.
    pub contributions: Array2<f64>,
    pub base_values: Vec<f64>,
    pub instance_indices: Vec<usize>,
}

impl ExplanationSet {
    pub fn from_explanations(
        explanations: Vec<Explanation>,
        instance_indices: Vec<usize>,
    ) -> Result<Self, ExplainError> {
        let Some(first) = explanations.first() else {
            return Err(ExplainError::InvalidInput("no explanations".into()));
        };
        if instance_indices.len() != explanations.len() {
            return Err(ExplainError::InvalidInput(format!(
                "{} explanations but {} instance indices",
                explanations.len(),
                instance_indices.len()
            )));
        }
        let explainer = first.explainer.clone();
        let signatures = first.signatures.clone();
        let mut contributions = Array2::zeros((explanations.len(), signatures.len()));
        let mut base_values = Vec::with_capacity(explanations.len());
        for (k, e) in explanations.iter().enumerate() {
            if e.signatures != signatures || e.explainer != explainer {
                return Err(ExplainError::InvalidInput(
                    "explanations disagree on explainer or signatures".into(),
                ));
            }
            contributions.row_mut(k).assign(&ArrayView1::from(&e.contributions));
            base_values.push(e.base_value);
        }
        Ok(Self {
            explainer,
            signatures,
            contributions,
            base_values,
            instance_indices,
        })
    }

    pub fn len(&self) -> usize {
        self.base_values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.base_values.is_empty()
    }

    pub fn implied_predictions(&self) -> Array1<f64> {
        self.contributions.sum_axis(Axis(1)) + &Array1::from(self.base_values.clone())
    }

    pub fn to_contribution_matrix(&self) -> ContributionMatrix {
        ContributionMatrix {
            signatures: self.signatures.clone(),
            values: self.contributions.clone(),
            source: self.explainer.clone(),
        }
    }
}

/// Per-feature mean and population standard deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl FeatureStats {
    pub fn from_data(data: ArrayView2<'_, f64>) -> Result<Self, ExplainError> {
        if data.nrows() == 0 {
            return Err(ExplainError::EmptyBackground);
        }
        Ok(Self {
            mean: data.mean_axis(Axis(0)).expect("nonempty").to_vec(),
            std: data.std_axis(Axis(0), 0.0).to_vec(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LimeConfig {
    pub n_perturbations: usize,
    /// Kernel width on z-scored distances; `None` means `0.75·√d`.
    pub kernel_width: Option<f64>,
    pub ridge_strength: f64,
    /// Keep only the `k` largest coefficients; `None` keeps all.
    pub top_k: Option<usize>,
    pub seed: u64,
}

impl Default for LimeConfig {
    fn default() -> Self {
        Self {
            n_perturbations: 5000,
            kernel_width: None,
            ridge_strength: 1e-3,
            top_k: None,
            seed: 0,
        }
    }
}

impl LimeConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.n_perturbations < 2 {
            return Err("n_perturbations must be at least 2".into());
        }
        if let Some(w) = self.kernel_width {
            if !(w.is_finite() && w > 0.0) {
                return Err(format!("kernel_width {w} must be positive"));
            }
        }
        if !(self.ridge_strength.is_finite() && self.ridge_strength >= 0.0) {
            return Err(format!("ridge_strength {} must be nonnegative", self.ridge_strength));
        }
        if self.top_k == Some(0) {
            return Err("top_k must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ShapMode {
    Exact,
    Sampled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Summarization {
    Full,
    MeanPoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShapConfig {
    pub mode: ShapMode,
    /// Coalition budget in sampled mode; `None` means `2d + 2048`.
    pub n_coalitions: Option<usize>,
    pub summarization: Summarization,
    pub seed: u64,
}

impl Default for ShapConfig {
    fn default() -> Self {
        Self {
            mode: ShapMode::Sampled,
            n_coalitions: None,
            summarization: Summarization::Full,
            seed: 0,
        }
    }
}

impl ShapConfig {
    pub fn exact() -> Self {
        Self {
            mode: ShapMode::Exact,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.n_coalitions == Some(0) {
            return Err("n_coalitions must be positive".into());
        }
        Ok(())
    }
}

/// An explainer plus its configuration, as listed in a sweep roster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ExplainerSpec {
    Pdp,
    Lime(LimeConfig),
    Shap(ShapConfig),
    ExactShapley,
}

/// Everything an explainer may consult besides the black box.
#[derive(Debug, Clone, Copy)]
pub struct ExplainContext<'a> {
    pub background: ArrayView2<'a, f64>,
    pub stats: &'a FeatureStats,
}

impl ExplainerSpec {
    pub fn tag(&self) -> &'static str {
        match self {
            ExplainerSpec::Pdp => "pdp",
            ExplainerSpec::Lime(_) => "lime",
            ExplainerSpec::Shap(c) if c.mode == ShapMode::Exact => "shap-exact",
            ExplainerSpec::Shap(_) => "shap",
            ExplainerSpec::ExactShapley => "exact-shapley",
        }
    }

    /// Parses a bare tag into a default-configured explainer.
    pub fn from_tag(tag: &str) -> Option<Self> {
        Some(match tag {
            "pdp" => ExplainerSpec::Pdp,
            "lime" => ExplainerSpec::Lime(LimeConfig::default()),
            "shap" => ExplainerSpec::Shap(ShapConfig::default()),
            "shap-exact" => ExplainerSpec::Shap(ShapConfig::exact()),
            "exact-shapley" => ExplainerSpec::ExactShapley,
            _ => return None,
        })
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        match self {
            ExplainerSpec::Lime(c) => ExplainerSpec::Lime(LimeConfig { seed, ..c.clone() }),
            ExplainerSpec::Shap(c) => ExplainerSpec::Shap(ShapConfig { seed, ..c.clone() }),
            other => other.clone(),
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        match self {
            ExplainerSpec::Lime(c) => c.validate(),
            ExplainerSpec::Shap(c) => c.validate(),
            _ => Ok(()),
        }
    }

    pub fn explain(
        &self,
        bb: &dyn BlackBox,
        x: ArrayView1<'_, f64>,
        ctx: ExplainContext<'_>,
    ) -> Result<Explanation, ExplainError> {
        let mut e = match self {
            ExplainerSpec::Pdp => pdp_explain(bb, x, ctx.background)?,
            ExplainerSpec::Lime(c) => lime_explain(bb, x, ctx.stats, c)?,
            ExplainerSpec::Shap(c) => kernel_shap_explain(bb, x, ctx.background, c)?,
            ExplainerSpec::ExactShapley => exact_shapley(bb, x, ctx.background)?,
        };
        e.explainer = self.tag().to_string();
        Ok(e)
    }

    /// Explains every row of `instances`; `indices` label the rows.
    pub fn explain_all(
        &self,
        bb: &dyn BlackBox,
        instances: ArrayView2<'_, f64>,
        indices: Vec<usize>,
        ctx: ExplainContext<'_>,
    ) -> Result<ExplanationSet, ExplainError> {
        let explanations = instances
            .rows()
            .into_iter()
            .map(|x| self.explain(bb, x, ctx))
            .collect::<Result<Vec<_>, _>>()?;
        ExplanationSet::from_explanations(explanations, indices)
    }
}

pub(crate) fn check_instance(bb: &dyn BlackBox, x: ArrayView1<'_, f64>) -> Result<usize, ExplainError> {
    let d = bb.n_features();
    if x.len() != d {
        return Err(ExplainError::InvalidInput(format!(
            "instance has {} features but the black box takes {d}",
            x.len()
        )));
    }
    if d == 0 {
        return Err(ExplainError::InvalidInput("black box has no features".into()));
    }
    Ok(d)
}

pub(crate) fn check_background(d: usize, background: ArrayView2<'_, f64>) -> Result<(), ExplainError> {
    if background.nrows() == 0 {
        return Err(ExplainError::EmptyBackground);
    }
    if background.ncols() != d {
        return Err(ExplainError::InvalidInput(format!(
            "background has {} columns but the black box takes {d}",
            background.ncols()
        )));
    }
    Ok(())
}

/// Queries `bb` on one point.
pub(crate) fn predict_point(bb: &dyn BlackBox, x: ArrayView1<'_, f64>) -> Result<f64, ExplainError> {
    let row = x.to_owned().insert_axis(Axis(0));
    let out = bb.predict(row.view())?;
    check_outputs(&out, 1)?;
    Ok(out[0])
}

pub(crate) fn check_outputs(out: &Array1<f64>, expected: usize) -> Result<(), ExplainError> {
    if out.len() != expected {
        return Err(ExplainError::Query(format!(
            "black box returned {} outputs for {expected} rows",
            out.len()
        )));
    }
    if let Some(k) = out.iter().position(|v| !v.is_finite()) {
        return Err(ExplainError::Query(format!("non-finite output at query row {k}")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn spec_tags_round_trip_through_toml() {
        for tag in ["pdp", "lime", "shap", "shap-exact", "exact-shapley"] {
            let spec = ExplainerSpec::from_tag(tag).unwrap();
            assert_eq!(spec.tag(), tag);
            let text = toml::to_string(&spec).unwrap();
            let back: ExplainerSpec = toml::from_str(&text).unwrap();
            assert_eq!(back, spec, "{text}");
        }
        let lime: ExplainerSpec = toml::from_str("kind = \"lime\"\nn_perturbations = 100\n").unwrap();
        assert_eq!(
            lime,
            ExplainerSpec::Lime(LimeConfig {
                n_perturbations: 100,
                ..LimeConfig::default()
            })
        );
        assert!(toml::from_str::<ExplainerSpec>("kind = \"lime\"\nbogus = 1\n").is_err());
    }

    #[test]
    fn feature_stats_use_population_std() {
        let data = array![[1.0, 5.0], [3.0, 5.0]];
        let s = FeatureStats::from_data(data.view()).unwrap();
        assert_eq!(s.mean, vec![2.0, 5.0]);
        assert_eq!(s.std, vec![1.0, 0.0]);
    }

    #[test]
    fn explanation_set_rejects_mixed_signatures() {
        let a = Explanation::singletons("x", vec![1.0, 2.0], 0.0);
        let b = Explanation::singletons("x", vec![1.0], 0.0);
        assert!(ExplanationSet::from_explanations(vec![a.clone(), b], vec![0, 1]).is_err());
        let set = ExplanationSet::from_explanations(vec![a.clone(), a], vec![3, 4]).unwrap();
        assert_eq!(set.implied_predictions().to_vec(), vec![3.0, 3.0]);
    }
}
