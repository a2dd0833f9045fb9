use std::collections::BTreeSet;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::HarnessError;
use crate::explainers::{ExplainerSpec, LimeConfig, ShapConfig};
use crate::expr::{OperatorTable, DEFAULT_OUTPUT_BOUND};

/// Inclusive ranges that per-model generation parameters are drawn from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerationRanges {
    pub n_features: (usize, usize),
    pub n_effects: (usize, usize),
    pub max_interaction_order: (usize, usize),
    pub n_dummy: (usize, usize),
    pub n_nonlinearities: (usize, usize),
    pub validation_points: usize,
    /// Models with larger outputs are discarded (see
    /// [`GenerationConfig::output_bound`](crate::GenerationConfig::output_bound)).
    pub output_bound: f64,
    pub max_retries: usize,
    pub operators: OperatorTable,
}

impl Default for GenerationRanges {
    fn default() -> Self {
        Self {
            n_features: (2, 10),
            n_effects: (1, 8),
            max_interaction_order: (1, 3),
            n_dummy: (0, 2),
            n_nonlinearities: (0, 4),
            validation_points: 10_000,
            output_bound: DEFAULT_OUTPUT_BOUND,
            max_retries: 100,
            operators: OperatorTable::default(),
        }
    }
}

/// A benchmark sweep, read from TOML.
///
/// ```toml
/// n_models = 50
/// master_seed = 1
/// parallelism = 4
/// budget_ms = 300000
/// n_explain = 100
/// output_dir = "runs/sweep-1"
///
/// [generation]
/// n_features = [2, 10]
/// max_interaction_order = [1, 3]
///
/// [[explainers]]
/// kind = "lime"
/// n_perturbations = 5000
///
/// [[explainers]]
/// kind = "shap"
/// mode = "sampled"
/// n_coalitions = 512
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub n_models: usize,
    pub master_seed: u64,
    pub parallelism: usize,
    /// Wall-time budget per (model, explainer) in milliseconds.
    pub budget_ms: u64,
    /// Rows of each sampled dataset that get explained.
    pub n_explain: usize,
    /// Rows of the dataset used as background; `None` uses all of it.
    pub background_size: Option<usize>,
    pub output_dir: Option<PathBuf>,
    pub generation: GenerationRanges,
    pub explainers: Vec<ExplainerSpec>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            n_models: 10,
            master_seed: 0,
            parallelism: 1,
            budget_ms: 300_000,
            n_explain: 100,
            background_size: None,
            output_dir: None,
            generation: GenerationRanges::default(),
            explainers: vec![
                ExplainerSpec::Pdp,
                ExplainerSpec::Lime(LimeConfig::default()),
                ExplainerSpec::Shap(ShapConfig::default()),
            ],
        }
    }
}

impl SweepConfig {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let config: SweepConfig = toml::from_str(text).map_err(|e| HarnessError::Config {
            field: "toml".into(),
            reason: e.to_string(),
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |field: &str, reason: String| {
            Err(HarnessError::Config {
                field: field.to_string(),
                reason,
            })
        };
        if self.n_models == 0 {
            return bad("n_models", "must be positive".into());
        }
        if self.parallelism == 0 {
            return bad("parallelism", "must be positive".into());
        }
        if self.budget_ms == 0 {
            return bad("budget_ms", "must be positive".into());
        }
        if self.n_explain == 0 {
            return bad("n_explain", "must be positive".into());
        }
        if self.background_size == Some(0) {
            return bad("background_size", "must be positive".into());
        }
        let g = &self.generation;
        for (name, (lo, hi), min) in [
            ("generation.n_features", g.n_features, 1),
            ("generation.n_effects", g.n_effects, 1),
            ("generation.max_interaction_order", g.max_interaction_order, 1),
            ("generation.n_dummy", g.n_dummy, 0),
            ("generation.n_nonlinearities", g.n_nonlinearities, 0),
        ] {
            if lo > hi {
                return bad(name, format!("empty range [{lo}, {hi}]"));
            }
            if lo < min {
                return bad(name, format!("lower bound must be at least {min}"));
            }
        }
        if g.n_features.1 > 63 {
            return bad("generation.n_features", "at most 63 features are supported".into());
        }
        if g.validation_points == 0 {
            return bad("generation.validation_points", "must be positive".into());
        }
        if g.output_bound.is_nan() || g.output_bound <= 0.0 {
            return bad("generation.output_bound", "must be positive".into());
        }
        if g.max_retries == 0 {
            return bad("generation.max_retries", "must be positive".into());
        }
        if self.explainers.is_empty() {
            return bad("explainers", "the explainer roster is empty".into());
        }
        let mut tags = BTreeSet::new();
        for spec in &self.explainers {
            if !tags.insert(spec.tag()) {
                return bad("explainers", format!("explainer `{}` is listed twice", spec.tag()));
            }
            if let Err(reason) = spec.validate() {
                return bad(&format!("explainers.{}", spec.tag()), reason);
            }
        }
        Ok(())
    }

    /// Hash of everything that affects results (output location and
    /// parallelism excluded).
    pub fn digest(&self) -> String {
        let mut canonical = self.clone();
        canonical.output_dir = None;
        canonical.parallelism = 1;
        let json = serde_json::to_string(&canonical).expect("config serializes");
        Sha256::digest(json.as_bytes())
            .iter()
            .take(8)
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_documented_example() {
        let text = r#"
            n_models = 50
            master_seed = 1
            parallelism = 4
            budget_ms = 300000
            n_explain = 100
            output_dir = "runs/sweep-1"

            [generation]
            n_features = [2, 10]
            max_interaction_order = [1, 3]

            [[explainers]]
            kind = "lime"
            n_perturbations = 5000

            [[explainers]]
            kind = "shap"
            mode = "sampled"
            n_coalitions = 512
        "#;
        let c = SweepConfig::from_toml(text).unwrap();
        assert_eq!(c.n_models, 50);
        assert_eq!(c.explainers.len(), 2);
        assert_eq!(c.explainers[1].tag(), "shap");
        let back = SweepConfig::from_toml(&c.to_toml()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn errors_name_the_field() {
        let field_of = |text: &str| match SweepConfig::from_toml(text) {
            Err(HarnessError::Config { field, .. }) => field,
            other => panic!("expected config error, got {other:?}"),
        };
        assert_eq!(field_of("explainers = []"), "explainers");
        assert_eq!(field_of("budget_ms = 0"), "budget_ms");
        assert_eq!(field_of("[generation]\nn_features = [5, 2]"), "generation.n_features");
        assert_eq!(
            field_of("[[explainers]]\nkind = \"pdp\"\n[[explainers]]\nkind = \"pdp\""),
            "explainers"
        );
        assert_eq!(
            field_of("[[explainers]]\nkind = \"lime\"\nn_perturbations = 1"),
            "explainers.lime"
        );
        assert_eq!(field_of("unknown_key = 3"), "toml");
    }

    #[test]
    fn digest_ignores_output_location_and_parallelism() {
        let a = SweepConfig::default();
        let b = SweepConfig {
            parallelism: 8,
            output_dir: Some("elsewhere".into()),
            ..SweepConfig::default()
        };
        assert_eq!(a.digest(), b.digest());
        let c = SweepConfig {
            master_seed: 5,
            ..SweepConfig::default()
        };
        assert_ne!(a.digest(), c.digest());
    }
}
