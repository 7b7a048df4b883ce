//! Selection-count bias tests.

use serde::{Deserialize, Serialize};

use super::{chi_square_uniform, ChiSquareResult};
use crate::error::{Error, Result};
use crate::namebank::NameGroup;
use crate::retrieval::SelectionResult;

/// A labelled union of name groups, e.g. "White" = {WF, WM}.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupSet {
    pub label: String,
    pub groups: Vec<NameGroup>,
}

impl GroupSet {
    pub fn new(label: impl Into<String>, groups: impl IntoIterator<Item = NameGroup>) -> Self {
        GroupSet {
            label: label.into(),
            groups: groups.into_iter().collect(),
        }
    }

    pub fn single(group: NameGroup) -> Self {
        GroupSet::new(group.as_str(), [group])
    }

    pub fn contains(&self, g: NameGroup) -> bool {
        self.groups.contains(&g)
    }
}

/// Two sides for a pairwise test, or more for a joint test.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Comparison {
    pub label: String,
    pub sides: Vec<GroupSet>,
}

impl Comparison {
    pub fn pair(label: impl Into<String>, a: GroupSet, b: GroupSet) -> Self {
        Comparison {
            label: label.into(),
            sides: vec![a, b],
        }
    }

    pub fn is_pairwise(&self) -> bool {
        self.sides.len() == 2
    }

    pub fn groups(&self) -> Vec<NameGroup> {
        let mut gs: Vec<NameGroup> = self.sides.iter().flat_map(|s| s.groups.iter().copied()).collect();
        gs.sort();
        gs.dedup();
        gs
    }

    pub fn validate(&self) -> Result<()> {
        if self.sides.len() < 2 {
            return Err(Error::Config(format!("comparison `{}` needs at least two sides", self.label)));
        }
        let all: usize = self.sides.iter().map(|s| s.groups.len()).sum();
        if self.sides.iter().any(|s| s.groups.is_empty()) || all != self.groups().len() {
            return Err(Error::Config(format!(
                "comparison `{}` sides must be non-empty and disjoint",
                self.label
            )));
        }
        let first = self.sides[0].groups.len();
        if self.sides.iter().any(|s| s.groups.len() != first) {
            return Err(Error::Config(format!(
                "comparison `{}` sides must hold the same number of name groups",
                self.label
            )));
        }
        Ok(())
    }

    pub fn side_of(&self, g: NameGroup) -> Option<usize> {
        self.sides.iter().position(|s| s.contains(g))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    FavorsA,
    FavorsB,
    NoSignificantDifference,
    /// Joint (more than two sides) test rejected uniformity.
    Significant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasTestResult {
    pub backend_id: String,
    pub occupation_code: String,
    pub comparison: String,
    pub labels: Vec<String>,
    pub counts: Vec<u64>,
    pub chi2: ChiSquareResult,
    /// `(count_a - count_b) / total` for pairs; `(max - min) / total` for joint tests.
    pub disparity: f64,
    pub alpha: f64,
    pub verdict: Verdict,
    /// Most-selected side when the verdict is significant.
    pub favored: Option<String>,
}

/// Tests whether selections pooled over the given job selections are spread evenly
/// across the comparison's sides.
pub fn bias_test(
    backend_id: &str,
    occupation_code: &str,
    comparison: &Comparison,
    selections: &[SelectionResult],
    alpha: f64,
) -> Result<BiasTestResult> {
    let mut counts = vec![0u64; comparison.sides.len()];
    for sel in selections {
        for v in &sel.selected {
            let g = v.group.ok_or_else(|| {
                Error::Domain(format!("selected variant of {} carries no name", v.base_id))
            })?;
            let side = comparison.side_of(g).ok_or_else(|| {
                Error::Domain(format!("group {g} is not part of comparison `{}`", comparison.label))
            })?;
            counts[side] += 1;
        }
    }
    if counts.iter().all(|&c| c == 0) {
        return Err(Error::EmptyInput("selection"));
    }
    bias_test_counts(backend_id, occupation_code, comparison, &counts, alpha)
}

pub fn bias_test_counts(
    backend_id: &str,
    occupation_code: &str,
    comparison: &Comparison,
    counts: &[u64],
    alpha: f64,
) -> Result<BiasTestResult> {
    if counts.len() != comparison.sides.len() {
        return Err(Error::LengthMismatch {
            left: comparison.sides.len(),
            right: counts.len(),
        });
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Domain(format!("alpha must be in (0, 1), got {alpha}")));
    }
    let chi2 = chi_square_uniform(counts)?;
    let total = counts.iter().sum::<u64>() as f64;
    let significant = chi2.p_value < alpha;
    let labels: Vec<String> = comparison.sides.iter().map(|s| s.label.clone()).collect();

    let (disparity, verdict, favored) = if comparison.is_pairwise() {
        let d = (counts[0] as f64 - counts[1] as f64) / total;
        let verdict = match (significant, counts[0].cmp(&counts[1])) {
            (true, std::cmp::Ordering::Greater) => Verdict::FavorsA,
            (true, std::cmp::Ordering::Less) => Verdict::FavorsB,
            _ => Verdict::NoSignificantDifference,
        };
        let favored = match verdict {
            Verdict::FavorsA => Some(labels[0].clone()),
            Verdict::FavorsB => Some(labels[1].clone()),
            _ => None,
        };
        (d, verdict, favored)
    } else {
        let max = *counts.iter().max().expect("non-empty");
        let min = *counts.iter().min().expect("non-empty");
        let top = counts.iter().position(|&c| c == max).expect("max present");
        if significant {
            ((max - min) as f64 / total, Verdict::Significant, Some(labels[top].clone()))
        } else {
            ((max - min) as f64 / total, Verdict::NoSignificantDifference, None)
        }
    };

    Ok(BiasTestResult {
        backend_id: backend_id.to_string(),
        occupation_code: occupation_code.to_string(),
        comparison: comparison.label.clone(),
        labels,
        counts: counts.to_vec(),
        chi2,
        disparity,
        alpha,
        verdict,
        favored,
    })
}
