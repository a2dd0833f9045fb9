use std::fmt;
use std::str::FromStr;

use super::ExprError;

/// The set of (1-based) features an effect depends on. Always sorted and
/// duplicate-free; the empty signature denotes the intercept.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct EffectSignature(Vec<usize>);

impl EffectSignature {
    pub fn new(mut features: Vec<usize>) -> Self {
        features.sort_unstable();
        features.dedup();
        Self(features)
    }

    pub(crate) fn from_sorted_unchecked(features: Vec<usize>) -> Self {
        debug_assert!(features.windows(2).all(|w| w[0] < w[1]));
        Self(features)
    }

    pub fn singleton(feature: usize) -> Self {
        Self(vec![feature])
    }

    pub fn empty() -> Self {
        Self(Vec::new())
    }

    pub fn features(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, feature: usize) -> bool {
        self.0.binary_search(&feature).is_ok()
    }

    pub fn max_feature(&self) -> Option<usize> {
        self.0.last().copied()
    }

    /// Size of the intersection, by a merge over the two sorted lists.
    pub fn intersection_len(&self, other: &Self) -> usize {
        let (mut i, mut j, mut n) = (0, 0, 0);
        while i < self.0.len() && j < other.0.len() {
            match self.0[i].cmp(&other.0[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    n += 1;
                    i += 1;
                    j += 1;
                }
            }
        }
        n
    }

    pub fn intersects(&self, other: &Self) -> bool {
        self.intersection_len(other) > 0
    }

    /// Jaccard index; two empty signatures are defined to have IoU 1.
    pub fn iou(&self, other: &Self) -> f64 {
        let inter = self.intersection_len(other);
        let union = self.len() + other.len() - inter;
        if union == 0 {
            1.0
        } else {
            inter as f64 / union as f64
        }
    }
}

impl fmt::Display for EffectSignature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (k, i) in self.0.iter().enumerate() {
            if k > 0 {
                f.write_str(",")?;
            }
            write!(f, "{i}")?;
        }
        f.write_str("}")
    }
}

impl FromStr for EffectSignature {
    type Err = ExprError;

    /// Accepts `{1,4}`, `{}` and the brace-less `1,4`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        let inner = t
            .strip_prefix('{')
            .and_then(|r| r.strip_suffix('}'))
            .unwrap_or(t)
            .trim();
        if inner.is_empty() {
            return Ok(Self::empty());
        }
        let mut features = Vec::new();
        for part in inner.split(',') {
            let idx: usize = part.trim().parse().map_err(|_| ExprError::Parse {
                position: 0,
                message: format!("invalid feature index `{}` in signature `{s}`", part.trim()),
            })?;
            if idx == 0 {
                return Err(ExprError::Parse {
                    position: 0,
                    message: format!("feature indices are 1-based, got 0 in `{s}`"),
                });
            }
            features.push(idx);
        }
        Ok(Self::new(features))
    }
}
