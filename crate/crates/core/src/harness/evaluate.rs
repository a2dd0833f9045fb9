use crate::alignment::{maiou, match_effects, reconcile, Matching, ReconciledPair, Reconciliation};
use crate::explainers::ExplanationSet;
use crate::metrics::{explainer_accuracy, score_pairs, PairScores};
use crate::model::{ContributionMatrix, ExpectationTable};

use super::HarnessError;

/// Scores of one explanation set against ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub matching: Matching,
    pub maiou: Option<f64>,
    pub pairs: Vec<ReconciledPair>,
    pub scores: PairScores,
    pub accuracy: f64,
}

impl Evaluation {
    pub fn cosine(&self) -> Vec<f64> {
        self.scores.samples.iter().map(|s| s.cosine).collect()
    }

    pub fn euclidean(&self) -> Vec<f64> {
        self.scores.samples.iter().map(|s| s.euclidean).collect()
    }

    pub fn nrmse_mean(&self) -> f64 {
        let e = &self.scores.effects;
        e.iter().map(|s| s.nrmse.value).sum::<f64>() / e.len() as f64
    }
}

/// Matches, reconciles and scores `explanations` against the ground truth
/// of the same instances. `outputs` are the black-box predictions.
pub fn evaluate_explanations(
    truth: &ContributionMatrix,
    expectations: &ExpectationTable,
    outputs: &[f64],
    explanations: &ExplanationSet,
    rule: Reconciliation,
) -> Result<Evaluation, HarnessError> {
    if let Some(k) = explanations.contributions.iter().position(|v| !v.is_finite()) {
        return Err(HarnessError::Invalid(format!(
            "explanation entry {k} is not finite"
        )));
    }
    let matching = match_effects(&truth.signatures, &explanations.signatures);
    let pairs = reconcile(
        &matching,
        truth,
        &explanations.to_contribution_matrix(),
        expectations,
        rule,
    )?;
    let scores = score_pairs(&pairs)?;
    let implied = explanations.implied_predictions();
    let accuracy = explainer_accuracy(implied.as_slice().expect("contiguous"), outputs)?;
    Ok(Evaluation {
        maiou: maiou(&matching),
        matching,
        pairs,
        scores,
        accuracy,
    })
}
