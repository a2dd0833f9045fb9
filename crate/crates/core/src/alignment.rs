//! Grouping of true and explained effects, structural agreement scores and
//! reconciliation of explained contributions into ground-truth units.
//!
//! Two effects are linked when their signatures share a feature. Connected
//! components of that bipartite graph are the unit of comparison: within a
//! component, contributions are summed on each side before scoring. A
//! component whose two sides hold the same signatures is split into one
//! exact match per signature.

use std::collections::{BTreeSet, VecDeque};

use ndarray::Array1;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ContributionMatrix, ExpectationTable};
use crate::EffectSignature;

/// Relative and absolute tolerance under which an explained contribution
/// column counts as exactly zero.
pub const ZERO_RTOL: f64 = 1e-5;
pub const ZERO_ATOL: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AlignError {
    #[error("signature mismatch: {0}")]
    SignatureMismatch(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub model: EffectSignature,
    pub explainer: EffectSignature,
    pub iou: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Component {
    pub id: usize,
    pub model: Vec<EffectSignature>,
    pub explainer: Vec<EffectSignature>,
    pub edges: Vec<Edge>,
    pub exact: bool,
}

impl Component {
    /// Mean IoU over the component's edges; 1 for exact matches and 0 for
    /// an edgeless component.
    pub fn mean_iou(&self) -> f64 {
        if self.exact {
            1.0
        } else if self.edges.is_empty() {
            0.0
        } else {
            self.edges.iter().map(|e| e.iou).sum::<f64>() / self.edges.len() as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Matching {
    pub components: Vec<Component>,
}

/// Connected components of the shared-feature graph between `model` and
/// `explainer` signatures.
///
/// Each side is treated as a set (duplicates collapse); empty signatures
/// are intercepts and take no part. Components are ordered by their
/// smallest signature, so the result does not depend on input order and
/// swapping the arguments only swaps the sides.
pub fn match_effects(model: &[EffectSignature], explainer: &[EffectSignature]) -> Matching {
    let left: Vec<EffectSignature> = to_set(model);
    let right: Vec<EffectSignature> = to_set(explainer);
    let (a, b) = (left.len(), right.len());

    let mut adjacency: Vec<Vec<usize>> = vec![Vec::new(); a + b];
    for (i, l) in left.iter().enumerate() {
        for (j, r) in right.iter().enumerate() {
            if l.intersects(r) {
                adjacency[i].push(a + j);
                adjacency[a + j].push(i);
            }
        }
    }

    let mut seen = vec![false; a + b];
    let mut groups: Vec<(Vec<usize>, Vec<usize>)> = Vec::new();
    for start in 0..a + b {
        if seen[start] {
            continue;
        }
        seen[start] = true;
        let mut queue = VecDeque::from([start]);
        let (mut ls, mut rs) = (Vec::new(), Vec::new());
        while let Some(v) = queue.pop_front() {
            if v < a {
                ls.push(v);
            } else {
                rs.push(v - a);
            }
            for &w in &adjacency[v] {
                if !seen[w] {
                    seen[w] = true;
                    queue.push_back(w);
                }
            }
        }
        ls.sort_unstable();
        rs.sort_unstable();
        groups.push((ls, rs));
    }

    let mut components: Vec<Component> = Vec::new();
    for (ls, rs) in groups {
        let model_side: Vec<EffectSignature> = ls.iter().map(|&i| left[i].clone()).collect();
        let explainer_side: Vec<EffectSignature> = rs.iter().map(|&j| right[j].clone()).collect();
        if !model_side.is_empty() && model_side == explainer_side {
            for sig in model_side {
                components.push(Component {
                    id: 0,
                    model: vec![sig.clone()],
                    explainer: vec![sig.clone()],
                    edges: vec![Edge {
                        model: sig.clone(),
                        explainer: sig,
                        iou: 1.0,
                    }],
                    exact: true,
                });
            }
            continue;
        }
        let mut edges = Vec::new();
        for l in &model_side {
            for r in &explainer_side {
                if l.intersects(r) {
                    edges.push(Edge {
                        model: l.clone(),
                        explainer: r.clone(),
                        iou: l.iou(r),
                    });
                }
            }
        }
        components.push(Component {
            id: 0,
            model: model_side,
            explainer: explainer_side,
            edges,
            exact: false,
        });
    }

    components.sort_by(|p, q| smallest(p).cmp(smallest(q)));
    for (id, c) in components.iter_mut().enumerate() {
        c.id = id;
    }
    let matching = Matching { components };
    debug_assert!(matching.is_partition_of(&left, &right));
    matching
}

fn to_set(sigs: &[EffectSignature]) -> Vec<EffectSignature> {
    sigs.iter()
        .filter(|s| !s.is_empty())
        .cloned()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect()
}

fn smallest(c: &Component) -> &EffectSignature {
    c.model
        .iter()
        .chain(&c.explainer)
        .min()
        .expect("components are nonempty")
}

impl Matching {
    /// True when every signature of each side sits in exactly one component.
    pub fn is_partition_of(&self, model: &[EffectSignature], explainer: &[EffectSignature]) -> bool {
        let covers = |want: Vec<EffectSignature>, side: fn(&Component) -> &Vec<EffectSignature>| {
            let mut got: Vec<EffectSignature> = self.components.iter().flat_map(|c| side(c).clone()).collect();
            got.sort();
            got == want
        };
        covers(to_set(model), |c| &c.model) && covers(to_set(explainer), |c| &c.explainer)
    }
}

/// Mean over components of their mean edge IoU. `None` for an empty
/// matching.
pub fn maiou(matching: &Matching) -> Option<f64> {
    let n = matching.components.len();
    (n > 0).then(|| matching.components.iter().map(Component::mean_iou).sum::<f64>() / n as f64)
}

/// How explained contributions are brought into ground-truth units.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Reconciliation {
    /// The explainer reports deviations from a background mean; the
    /// expected true contribution of each matched model effect is added.
    AddBack,
    /// Contributions are already in output units.
    Identity,
}

impl Reconciliation {
    /// Rule for a known explainer tag. Mean-centred explainers (Shapley
    /// family and PDP) add back expectations; unknown tags use identity.
    pub fn for_tag(tag: &str) -> Self {
        match tag {
            "shap" | "shap-exact" | "exact-shapley" | "kernel-shap" | "pdp" | "shapr" => Reconciliation::AddBack,
            _ => Reconciliation::Identity,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconciledPair {
    pub component: usize,
    pub truth: Array1<f64>,
    pub explained: Array1<f64>,
    pub explainer: String,
}

/// Whether every entry of `column` is close to zero in the
/// `|v| <= atol + rtol·|0|` sense, which reduces to the absolute tolerance.
pub fn is_effectively_zero(column: impl IntoIterator<Item = f64>) -> bool {
    column.into_iter().all(|v| v.abs() <= ZERO_ATOL)
}

/// Per component: summed true contributions and summed explained
/// contributions (after the zero-tolerance rule and `rule`).
pub fn reconcile(
    matching: &Matching,
    truth: &ContributionMatrix,
    explained: &ContributionMatrix,
    expectations: &ExpectationTable,
    rule: Reconciliation,
) -> Result<Vec<ReconciledPair>, AlignError> {
    let n = truth.n_samples();
    if explained.n_samples() != n {
        return Err(AlignError::SignatureMismatch(format!(
            "{} explained samples against {n} ground-truth samples",
            explained.n_samples()
        )));
    }
    let mut pairs = Vec::with_capacity(matching.components.len());
    for c in &matching.components {
        let mut t = Array1::<f64>::zeros(n);
        let mut e = Array1::<f64>::zeros(n);
        for sig in &c.model {
            let col = truth.column(sig).ok_or_else(|| {
                AlignError::SignatureMismatch(format!("model effect {sig} has no ground-truth column"))
            })?;
            t += &col;
            if rule == Reconciliation::AddBack {
                let mean = expectations.get(sig).ok_or_else(|| {
                    AlignError::SignatureMismatch(format!("model effect {sig} has no expectation"))
                })?;
                e += mean;
            }
        }
        for sig in &c.explainer {
            let col = explained.column(sig).ok_or_else(|| {
                AlignError::SignatureMismatch(format!("explained effect {sig} is missing from the explanation"))
            })?;
            if !is_effectively_zero(col.iter().copied()) {
                e += &col;
            }
        }
        pairs.push(ReconciledPair {
            component: c.id,
            truth: t,
            explained: e,
            explainer: explained.source.clone(),
        });
    }
    Ok(pairs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};

    fn sigs(list: &[&[usize]]) -> Vec<EffectSignature> {
        list.iter().map(|s| EffectSignature::new(s.to_vec())).collect()
    }

    fn sides(m: &Matching) -> Vec<(Vec<String>, Vec<String>)> {
        m.components
            .iter()
            .map(|c| {
                (
                    c.model.iter().map(|s| s.to_string()).collect(),
                    c.explainer.iter().map(|s| s.to_string()).collect(),
                )
            })
            .collect()
    }

    #[test]
    fn identical_sets_split_into_exact_matches() {
        let m = match_effects(&sigs(&[&[2], &[2, 3]]), &sigs(&[&[2], &[2, 3]]));
        assert_eq!(m.components.len(), 2);
        assert!(m.components.iter().all(|c| c.exact && c.model == c.explainer));
        assert_eq!(maiou(&m), Some(1.0));
    }

    #[test]
    fn crossing_signatures_form_one_component() {
        let m = match_effects(&sigs(&[&[1], &[2, 3]]), &sigs(&[&[1, 2], &[3]]));
        assert_eq!(sides(&m), vec![(vec!["{1}".into(), "{2,3}".into()], vec!["{1,2}".into(), "{3}".into()])]);
        let ious: Vec<f64> = m.components[0].edges.iter().map(|e| e.iou).collect();
        assert_eq!(ious, vec![0.5, 1.0 / 3.0, 0.5]);
                assert!((maiou(&m).unwrap() - 4.0 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn isolated_explainer_effect() {
        let m = match_effects(&sigs(&[&[1]]), &sigs(&[&[1], &[5]]));
        assert_eq!(
            sides(&m),
            vec![(vec!["{1}".into()], vec!["{1}".into()]), (vec![], vec!["{5}".into()])]
        );
        assert!(m.components[0].exact);
        assert_eq!(m.components[1].mean_iou(), 0.0);
        assert_eq!(maiou(&m), Some(0.5));
    }

    #[test]
    fn superset_explainer() {
        let m = match_effects(&sigs(&[&[1], &[2], &[3]]), &sigs(&[&[1, 2, 3]]));
        assert_eq!(m.components.len(), 1);
        assert_eq!(maiou(&m), Some(1.0 / 3.0));
        assert_eq!(maiou(&Matching { components: vec![] }), None);
    }

    #[test]
    fn arguments_swap_sides_only() {
        let a = sigs(&[&[1, 4], &[2], &[6]]);
        let b = sigs(&[&[1], &[2], &[3], &[4], &[5], &[6]]);
        let ab = match_effects(&a, &b);
        let ba = match_effects(&b, &a);
        assert_eq!(ab.components.len(), ba.components.len());
        for (p, q) in ab.components.iter().zip(&ba.components) {
            assert_eq!(p.model, q.explainer);
            assert_eq!(p.explainer, q.model);
        }
    }

    fn one_column(sig: &str, values: Vec<f64>, source: &str) -> ContributionMatrix {
        let n = values.len();
        ContributionMatrix {
            signatures: vec![sig.parse().unwrap()],
            values: Array2::from_shape_vec((n, 1), values).unwrap(),
            source: source.into(),
        }
    }

    fn table(sig: &str, e: f64) -> ExpectationTable {
        ExpectationTable {
            signatures: vec![sig.parse().unwrap()],
            expected: vec![e],
            expected_output: e,
            background_size: 1,
        }
    }

    #[test]
    fn add_back_of_expected_contribution() {
        let m = match_effects(&sigs(&[&[1]]), &sigs(&[&[1]]));
        let gt = one_column("{1}", vec![1.7], "ground-truth");
        let ex = one_column("{1}", vec![0.5], "shap");
        let pairs = reconcile(&m, &gt, &ex, &table("{1}", 1.2), Reconciliation::for_tag("shap")).unwrap();
        assert!((pairs[0].explained[0] - 1.7).abs() < 1e-15);
        let pairs = reconcile(&m, &gt, &ex, &table("{1}", 0.0), Reconciliation::AddBack).unwrap();
        assert_eq!(pairs[0].explained[0], 0.5);
        let pairs = reconcile(&m, &gt, &ex, &table("{1}", 1.2), Reconciliation::for_tag("lime")).unwrap();
        assert_eq!(pairs[0].explained[0], 0.5);
    }

    #[test]
    fn dummy_component_with_tiny_contributions_is_zero() {
        let m = match_effects(&sigs(&[&[1]]), &sigs(&[&[1], &[2]]));
        let gt = one_column("{1}", vec![0.3, -0.2], "ground-truth");
        let ex = ContributionMatrix {
            signatures: sigs(&[&[1], &[2]]),
            values: array![[0.3, 5e-9], [-0.2, -1e-9]],
            source: "lime".into(),
        };
        let pairs = reconcile(&m, &gt, &ex, &table("{1}", 0.0), Reconciliation::Identity).unwrap();
        assert_eq!(pairs[1].truth, array![0.0, 0.0]);
        assert_eq!(pairs[1].explained, array![0.0, 0.0]);
    }

    #[test]
    fn missing_columns_are_signature_mismatches() {
        let m = match_effects(&sigs(&[&[1]]), &sigs(&[&[1], &[2]]));
        let gt = one_column("{1}", vec![0.3], "ground-truth");
        let ex = one_column("{1}", vec![0.3], "x");
        assert!(matches!(
            reconcile(&m, &gt, &ex, &table("{1}", 0.0), Reconciliation::Identity),
            Err(AlignError::SignatureMismatch(_))
        ));
    }
}
