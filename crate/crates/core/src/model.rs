//! White-box additive models and their exact ground-truth contributions.
//!
//! A model is `F(x) = intercept + Σ_j f_j(x[D_j])` where every effect `f_j`
//! depends only on the features in its signature `D_j`. The per-effect
//! outputs are the ground-truth explanation that explainers are scored
//! against.

use std::fmt::Write as _;
use std::io::{Read, Write};

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use crate::expr::EffectSignature;
use crate::expr::{decompose_additive, evaluate, expand, parse_text, sum_of, to_text, Expr, ExprError};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error("dataset has {got} columns but the model has {expected} features")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("background dataset is empty")]
    EmptyBackground,
    #[error("invalid model: {0}")]
    Invalid(String),
    #[error("model file line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("contribution file: {0}")]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Effect {
    pub signature: EffectSignature,
    pub expr: Expr,
}

/// Provenance carried alongside a model; none of it affects evaluation.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ModelMeta {
    pub seed: Option<u64>,
    pub config_digest: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdditiveModel {
    n_features: usize,
    effects: Vec<Effect>,
    intercept: f64,
    /// The undecomposed expression, when known. `predict` evaluates it so
    /// that completeness of the decomposition is checkable.
    source: Option<Expr>,
    meta: ModelMeta,
}

impl AdditiveModel {
    /// Builds a model from explicit effects. Signatures must be nonempty,
    /// distinct and equal to the variable set of their expression.
    pub fn new(
        n_features: usize,
        effects: Vec<(EffectSignature, Expr)>,
        intercept: f64,
    ) -> Result<Self, ModelError> {
        if n_features == 0 {
            return Err(ModelError::Invalid("a model needs at least one feature".into()));
        }
        if !intercept.is_finite() {
            return Err(ModelError::Invalid(format!("intercept {intercept} is not finite")));
        }
        let mut out: Vec<Effect> = Vec::with_capacity(effects.len());
        for (signature, expr) in effects {
            if signature.is_empty() {
                return Err(ModelError::Invalid(
                    "constant effects belong in the intercept".into(),
                ));
            }
            if expr.signature() != signature {
                return Err(ModelError::Invalid(format!(
                    "effect `{}` references {} but is declared as {signature}",
                    to_text(&expr),
                    expr.signature()
                )));
            }
            if signature.max_feature().is_some_and(|m| m > n_features) {
                return Err(ModelError::Invalid(format!(
                    "signature {signature} exceeds d = {n_features}"
                )));
            }
            if out.iter().any(|e| e.signature == signature) {
                return Err(ModelError::Invalid(format!("duplicate signature {signature}")));
            }
            out.push(Effect { signature, expr });
        }
        Ok(Self {
            n_features,
            effects: out,
            intercept,
            source: None,
            meta: ModelMeta::default(),
        })
    }

    /// Expands `source`, splits it into effects and folds constant terms
    /// into the intercept.
    pub fn from_expr(n_features: usize, source: Expr) -> Result<Self, ModelError> {
        if let Some(m) = source.max_variable() {
            if m > n_features {
                return Err(ModelError::Invalid(format!(
                    "expression references x{m} but d = {n_features}"
                )));
            }
        }
        let mut intercept = 0.0;
        let mut effects = Vec::new();
        for (signature, expr) in decompose_additive(&expand(&source)) {
            if signature.is_empty() {
                let origin = vec![0.0; n_features];
                intercept += crate::expr::evaluate_point(&expr, &origin)?;
            } else {
                effects.push((signature, expr));
            }
        }
        let mut model = Self::new(n_features, effects, intercept)?;
        model.source = Some(source);
        Ok(model)
    }

    pub fn with_meta(mut self, meta: ModelMeta) -> Self {
        self.meta = meta;
        self
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn effects(&self) -> &[Effect] {
        &self.effects
    }

    pub fn signatures(&self) -> Vec<EffectSignature> {
        self.effects.iter().map(|e| e.signature.clone()).collect()
    }

    pub fn intercept(&self) -> f64 {
        self.intercept
    }

    pub fn source(&self) -> Option<&Expr> {
        self.source.as_ref()
    }

    pub fn meta(&self) -> &ModelMeta {
        &self.meta
    }

    /// Largest effect signature size (0 for a constant model).
    pub fn max_order(&self) -> usize {
        self.effects.iter().map(|e| e.signature.len()).max().unwrap_or(0)
    }

    /// Features that no effect reads.
    pub fn dummy_features(&self) -> Vec<usize> {
        (1..=self.n_features)
            .filter(|i| !self.effects.iter().any(|e| e.signature.contains(*i)))
            .collect()
    }

    pub fn nonlinear_count(&self) -> usize {
        match &self.source {
            Some(src) => src.nonlinear_count(),
            None => self.effects.iter().map(|e| e.expr.nonlinear_count()).sum(),
        }
    }

    /// The whole model as one expression.
    pub fn full_expr(&self) -> Expr {
        if let Some(src) = &self.source {
            return src.clone();
        }
        let mut terms: Vec<Expr> = Vec::new();
        if self.intercept != 0.0 || self.effects.is_empty() {
            terms.push(Expr::Const(self.intercept));
        }
        terms.extend(self.effects.iter().map(|e| e.expr.clone()));
        sum_of(terms)
    }

    fn check_columns(&self, x: &ArrayView2<'_, f64>) -> Result<(), ModelError> {
        if x.ncols() != self.n_features {
            return Err(ModelError::DimensionMismatch {
                expected: self.n_features,
                got: x.ncols(),
            });
        }
        Ok(())
    }

    pub fn predict(&self, x: ArrayView2<'_, f64>) -> Result<Array1<f64>, ModelError> {
        self.check_columns(&x)?;
        match &self.source {
            Some(src) => Ok(evaluate(src, x)?),
            None => {
                let gt = self.ground_truth_contributions(x)?;
                Ok(gt.values.sum_axis(Axis(1)) + self.intercept)
            }
        }
    }

    /// Column `j` holds `f_j` evaluated on every row of `x`.
    pub fn ground_truth_contributions(
        &self,
        x: ArrayView2<'_, f64>,
    ) -> Result<ContributionMatrix, ModelError> {
        self.check_columns(&x)?;
        let mut values = Array2::zeros((x.nrows(), self.effects.len()));
        if x.nrows() > 0 {
            for (j, effect) in self.effects.iter().enumerate() {
                let col = evaluate(&effect.expr, x)?;
                values.column_mut(j).assign(&col);
            }
        }
        Ok(ContributionMatrix {
            signatures: self.signatures(),
            values,
            source: ContributionMatrix::GROUND_TRUTH.to_string(),
        })
    }

    /// Per-effect means over `background` and the mean prediction.
    pub fn expectations(&self, background: ArrayView2<'_, f64>) -> Result<ExpectationTable, ModelError> {
        if background.nrows() == 0 {
            return Err(ModelError::EmptyBackground);
        }
        let gt = self.ground_truth_contributions(background)?;
        let expected = gt
            .values
            .mean_axis(Axis(0))
            .expect("nonempty background")
            .to_vec();
        let expected_output = self.predict(background)?.mean().expect("nonempty background");
        Ok(ExpectationTable {
            signatures: gt.signatures,
            expected,
            expected_output,
            background_size: background.nrows(),
        })
    }

    /// Short content hash of the serialized model.
    pub fn digest(&self) -> String {
        let hash = Sha256::digest(self.to_file_text().as_bytes());
        hash.iter().take(8).fold(String::new(), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }

    /// Serializes to the plain-text model file format:
    ///
    /// ```text
    /// # additive model
    /// d=4
    /// seed=7
    /// dummy=2,3
    /// intercept=0
    /// source := x1 + exp(x4) + log(x1*x4) + x4/x1
    /// effect: {1} := x1
    /// effect: {4} := exp(x4)
    /// effect: {1,4} := log(x1*x4) + x4/x1
    /// ```
    ///
    /// `seed`, `config` and `source` are optional on input.
    pub fn to_file_text(&self) -> String {
        let mut s = String::from("# additive model\n");
        let _ = writeln!(s, "d={}", self.n_features);
        if let Some(seed) = self.meta.seed {
            let _ = writeln!(s, "seed={seed}");
        }
        if let Some(cfg) = &self.meta.config_digest {
            let _ = writeln!(s, "config={cfg}");
        }
        let dummy: Vec<String> = self.dummy_features().iter().map(|i| i.to_string()).collect();
        let _ = writeln!(s, "dummy={}", dummy.join(","));
        let _ = writeln!(s, "intercept={}", self.intercept);
        if let Some(src) = &self.source {
            let _ = writeln!(s, "source := {}", to_text(src));
        }
        for e in &self.effects {
            let _ = writeln!(s, "effect: {} := {}", e.signature, to_text(&e.expr));
        }
        s
    }

    pub fn parse_file_text(text: &str) -> Result<Self, ModelError> {
        let mut d = None;
        let mut seed = None;
        let mut config_digest = None;
        let mut dummy: Option<Vec<usize>> = None;
        let mut intercept = 0.0;
        let mut source = None;
        let mut effects = Vec::new();
        let perr = |line: usize, message: String| ModelError::Parse { line, message };

        for (k, raw) in text.lines().enumerate() {
            let line_no = k + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(rest) = line.strip_prefix("effect:") {
                let (sig, body) = rest
                    .split_once(":=")
                    .ok_or_else(|| perr(line_no, "expected `effect: <signature> := <expr>`".into()))?;
                let sig: EffectSignature = sig.parse().map_err(|e| perr(line_no, format!("{e}")))?;
                let expr = parse_text(body).map_err(|e| perr(line_no, format!("{e}")))?;
                effects.push((sig, expr));
            } else if let Some(rest) = line.strip_prefix("source") {
                let body = rest
                    .trim_start()
                    .strip_prefix(":=")
                    .ok_or_else(|| perr(line_no, "expected `source := <expr>`".into()))?;
                source = Some(parse_text(body).map_err(|e| perr(line_no, format!("{e}")))?);
            } else if let Some((key, value)) = line.split_once('=') {
                let value = value.trim();
                match key.trim() {
                    "d" => d = Some(value.parse().map_err(|_| perr(line_no, format!("bad d `{value}`")))?),
                    "seed" => {
                        seed = Some(value.parse().map_err(|_| perr(line_no, format!("bad seed `{value}`")))?)
                    }
                    "config" => config_digest = Some(value.to_string()),
                    "dummy" => {
                        let parsed: Result<Vec<usize>, _> = value
                            .split(',')
                            .filter(|p| !p.trim().is_empty())
                            .map(|p| p.trim().parse::<usize>())
                            .collect();
                        dummy = Some(parsed.map_err(|_| perr(line_no, format!("bad dummy list `{value}`")))?);
                    }
                    "intercept" => {
                        intercept = value
                            .parse()
                            .map_err(|_| perr(line_no, format!("bad intercept `{value}`")))?
                    }
                    other => return Err(perr(line_no, format!("unknown header key `{other}`"))),
                }
            } else {
                return Err(perr(line_no, format!("unrecognized line `{line}`")));
            }
        }

        let d = d.ok_or_else(|| perr(0, "missing `d=` header".into()))?;
        let mut model = Self::new(d, effects, intercept)?;
        if let Some(src) = source {
            if src.max_variable().is_some_and(|m| m > d) {
                return Err(ModelError::Invalid("source references a feature beyond d".into()));
            }
            model.source = Some(src);
        }
        if let Some(declared) = dummy {
            if declared != model.dummy_features() {
                return Err(ModelError::Invalid(format!(
                    "declared dummy features {declared:?} disagree with effects ({:?})",
                    model.dummy_features()
                )));
            }
        }
        model.meta = ModelMeta { seed, config_digest };
        Ok(model)
    }

    pub fn read_from(mut reader: impl Read) -> Result<Self, ModelError> {
        let mut text = String::new();
        reader.read_to_string(&mut text)?;
        Self::parse_file_text(&text)
    }

    pub fn write_to(&self, mut writer: impl Write) -> Result<(), ModelError> {
        writer.write_all(self.to_file_text().as_bytes())?;
        Ok(())
    }
}

/// Per-sample, per-effect contributions, either ground truth or explained.
#[derive(Debug, Clone, PartialEq)]
pub struct ContributionMatrix {
    pub signatures: Vec<EffectSignature>,
    /// n samples × m effects.
    pub values: Array2<f64>,
    pub source: String,
}

impl ContributionMatrix {
    pub const GROUND_TRUTH: &'static str = "ground-truth";

    pub fn n_samples(&self) -> usize {
        self.values.nrows()
    }

    pub fn column(&self, signature: &EffectSignature) -> Option<ArrayView1<'_, f64>> {
        self.signatures
            .iter()
            .position(|s| s == signature)
            .map(|j| self.values.column(j))
    }

    pub fn row_sums(&self) -> Array1<f64> {
        self.values.sum_axis(Axis(1))
    }

    /// Columnar CSV: one header row of signatures (e.g. `{1}`, `"{1,4}"`),
    /// then one row per sample in full round-trip precision.
    pub fn write_csv(&self, writer: impl Write) -> Result<(), ModelError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(self.signatures.iter().map(|s| s.to_string()))?;
        for row in self.values.rows() {
            w.write_record(row.iter().map(|v| format!("{v:e}")))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(reader: impl Read, source: &str) -> Result<Self, ModelError> {
        let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let signatures: Vec<EffectSignature> = r
            .headers()?
            .iter()
            .map(|h| h.parse::<EffectSignature>())
            .collect::<Result<_, _>>()?;
        let mut flat = Vec::new();
        let mut n = 0;
        for (k, rec) in r.records().enumerate() {
            let rec = rec?;
            if rec.len() != signatures.len() {
                return Err(ModelError::Parse {
                    line: k + 2,
                    message: format!("expected {} columns, found {}", signatures.len(), rec.len()),
                });
            }
            for field in rec.iter() {
                let v: f64 = field.trim().parse().map_err(|_| ModelError::Parse {
                    line: k + 2,
                    message: format!("bad number `{field}`"),
                })?;
                flat.push(v);
            }
            n += 1;
        }
        let values = Array2::from_shape_vec((n, signatures.len()), flat)
            .map_err(|e| ModelError::Invalid(e.to_string()))?;
        Ok(Self {
            signatures,
            values,
            source: source.to_string(),
        })
    }
}

/// Background means of every effect and of the model output.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpectationTable {
    pub signatures: Vec<EffectSignature>,
    pub expected: Vec<f64>,
    pub expected_output: f64,
    pub background_size: usize,
}

impl ExpectationTable {
    pub fn get(&self, signature: &EffectSignature) -> Option<f64> {
        self.signatures
            .iter()
            .position(|s| s == signature)
            .map(|j| self.expected[j])
    }

    /// CSV with `signature,expected` rows plus an `output` row for E[F(X)]
    /// and a `background_size` row.
    pub fn write_csv(&self, writer: impl Write) -> Result<(), ModelError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["signature", "expected"])?;
        for (s, e) in self.signatures.iter().zip(&self.expected) {
            w.write_record([s.to_string(), format!("{e:e}")])?;
        }
        w.write_record(["output".to_string(), format!("{:e}", self.expected_output)])?;
        w.write_record(["background_size".to_string(), self.background_size.to_string()])?;
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(reader: impl Read) -> Result<Self, ModelError> {
        let mut r = csv::Reader::from_reader(reader);
        let mut table = ExpectationTable {
            signatures: Vec::new(),
            expected: Vec::new(),
            expected_output: f64::NAN,
            background_size: 0,
        };
        for (k, rec) in r.records().enumerate() {
            let rec = rec?;
            let bad = |m: String| ModelError::Parse { line: k + 2, message: m };
            let key = rec.get(0).unwrap_or("").trim();
            let val = rec.get(1).unwrap_or("").trim();
            match key {
                "output" => {
                    table.expected_output = val.parse().map_err(|_| bad(format!("bad number `{val}`")))?
                }
                "background_size" => {
                    table.background_size = val.parse().map_err(|_| bad(format!("bad size `{val}`")))?
                }
                sig => {
                    table.signatures.push(sig.parse()?);
                    table.expected.push(val.parse().map_err(|_| bad(format!("bad number `{val}`")))?);
                }
            }
        }
        if !table.expected_output.is_finite() {
            return Err(ModelError::Invalid("expectation file lacks an `output` row".into()));
        }
        Ok(table)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn worked_example() -> AdditiveModel {
        AdditiveModel::from_expr(4, parse_text("x1 + exp(x4) + log(x1*x4) + x4/x1").unwrap()).unwrap()
    }

    #[test]
    fn predict_worked_example() {
        let m = worked_example();
        let x = array![[1.0, 0.0, 0.0, 1.0]];
        let y = m.predict(x.view()).unwrap();
        assert!((y[0] - 4.718282).abs() < 1e-6);
        assert_eq!(m.dummy_features(), vec![2, 3]);
        assert_eq!(m.max_order(), 2);
    }

    #[test]
    fn ground_truth_worked_example() {
        let m = worked_example();
        let x = array![[1.0, 0.0, 0.0, 1.0]];
        let gt = m.ground_truth_contributions(x.view()).unwrap();
        let sigs: Vec<String> = gt.signatures.iter().map(|s| s.to_string()).collect();
        assert_eq!(sigs, ["{1}", "{4}", "{1,4}"]);
        assert!((gt.values[[0, 0]] - 1.0).abs() < 1e-15);
        assert!((gt.values[[0, 1]] - std::f64::consts::E).abs() < 1e-15);
        assert!((gt.values[[0, 2]] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn zero_input_single_effect_and_constant_models() {
        let m = AdditiveModel::new(1, vec![(EffectSignature::singleton(1), Expr::var(1))], 2.5).unwrap();
        let y = m.predict(array![[0.0]].view()).unwrap();
        assert_eq!(y[0], 2.5);
        let gt = m.ground_truth_contributions(array![[0.7], [-0.2]].view()).unwrap();
        let y = m.predict(array![[0.7], [-0.2]].view()).unwrap();
        for (c, p) in gt.values.column(0).iter().zip(y.iter()) {
            assert!((c - (p - 2.5)).abs() < 1e-15);
        }

        let c = AdditiveModel::from_expr(2, Expr::Const(3.0)).unwrap();
        assert!(c.effects().is_empty());
        let y = c.predict(array![[0.1, 0.2], [0.3, 0.4]].view()).unwrap();
        assert_eq!(y.to_vec(), vec![3.0, 3.0]);
    }

    #[test]
    fn empty_dataset_yields_empty_matrix() {
        let m = worked_example();
        let x = Array2::<f64>::zeros((0, 4));
        let gt = m.ground_truth_contributions(x.view()).unwrap();
        assert_eq!(gt.values.dim(), (0, 3));
    }

    #[test]
    fn expectations_cases() {
        let odd = AdditiveModel::new(1, vec![(EffectSignature::singleton(1), Expr::var(1))], 0.0).unwrap();
        let bg = array![[-0.5], [0.5], [-1.0], [1.0]];
        assert_eq!(odd.expectations(bg.view()).unwrap().expected, vec![0.0]);

        let sq = AdditiveModel::from_expr(1, parse_text("x1^2").unwrap()).unwrap();
        let t = sq.expectations(array![[-1.0], [1.0]].view()).unwrap();
        assert_eq!(t.expected, vec![1.0]);
        assert_eq!(t.expected_output, 1.0);

        let m = worked_example();
        let row = array![[0.5, 0.1, 0.2, 0.25]];
        let t = m.expectations(row.view()).unwrap();
        let gt = m.ground_truth_contributions(row.view()).unwrap();
        assert_eq!(t.expected, gt.values.row(0).to_vec());

        assert!(matches!(
            m.expectations(Array2::zeros((0, 4)).view()),
            Err(ModelError::EmptyBackground)
        ));
    }

    #[test]
    fn domain_violation_propagates() {
        let m = worked_example();
        let x = array![[-0.5, 0.0, 0.0, 0.5]];
        assert!(matches!(
            m.predict(x.view()),
            Err(ModelError::Expr(ExprError::DomainViolation { .. }))
        ));
    }

    #[test]
    fn file_round_trip() {
        let m = worked_example().with_meta(ModelMeta {
            seed: Some(7),
            config_digest: None,
        });
        let text = m.to_file_text();
        assert!(text.contains("dummy=2,3"));
        assert!(text.contains("effect: {1,4} := log(x1*x4) + x4/x1"));
        let back = AdditiveModel::parse_file_text(&text).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.digest(), m.digest());
    }

    #[test]
    fn file_errors() {
        assert!(AdditiveModel::parse_file_text("effect: {1} := x1\n").is_err());
        assert!(AdditiveModel::parse_file_text("d=2\neffect: {1} := x2\n").is_err());
        assert!(AdditiveModel::parse_file_text("d=2\nwat\n").is_err());
        assert!(AdditiveModel::parse_file_text("d=2\neffect: {1} := x1 +\n").is_err());
        assert!(AdditiveModel::parse_file_text("d=2\ndummy=1\neffect: {1} := x1\n").is_err());
    }

    #[test]
    fn contribution_csv_round_trip() {
        let m = worked_example();
        let x = array![[0.5, 0.1, 0.2, 0.25], [0.3, -0.4, 0.9, 0.7]];
        let gt = m.ground_truth_contributions(x.view()).unwrap();
        let mut buf = Vec::new();
        gt.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("{1},{4},\"{1,4}\""), "{text}");
        let back = ContributionMatrix::read_csv(buf.as_slice(), ContributionMatrix::GROUND_TRUTH).unwrap();
        assert_eq!(back, gt);

        let t = m.expectations(x.view()).unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        assert_eq!(ExpectationTable::read_csv(buf.as_slice()).unwrap(), t);
    }
}
