//! End-to-end experiment runs and their reports.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::retrieval::ValidationGap;
use crate::stats::{BiasTestResult, Verdict};

pub mod config;
pub mod emit;
pub mod pipeline;

pub use config::{ComparisonMode, CorpusConfig, ExperimentConfig, ExperimentKind, NamesConfig};
pub use emit::{emit, Format};
pub use pipeline::{run_experiment, RunOutput, Runner};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Verdict tallies for one comparison across every (backend, occupation) test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub comparison: String,
    pub labels: Vec<String>,
    pub tests: usize,
    pub favors_a: usize,
    pub favors_b: usize,
    pub not_significant: usize,
    /// Joint (multi-side) tests that rejected uniformity.
    pub significant: usize,
    pub fraction_favors_a: f64,
    pub fraction_favors_b: f64,
    pub fraction_not_significant: f64,
    pub fraction_significant: f64,
}

impl Aggregate {
    pub fn from_tests<'a>(comparison: &str, tests: impl IntoIterator<Item = &'a BiasTestResult>) -> Result<Self> {
        let mut agg = Aggregate {
            comparison: comparison.to_string(),
            labels: Vec::new(),
            tests: 0,
            favors_a: 0,
            favors_b: 0,
            not_significant: 0,
            significant: 0,
            fraction_favors_a: 0.0,
            fraction_favors_b: 0.0,
            fraction_not_significant: 0.0,
            fraction_significant: 0.0,
        };
        for t in tests.into_iter().filter(|t| t.comparison == comparison) {
            if agg.tests == 0 {
                agg.labels = t.labels.clone();
            }
            agg.tests += 1;
            match t.verdict {
                Verdict::FavorsA => agg.favors_a += 1,
                Verdict::FavorsB => agg.favors_b += 1,
                Verdict::NoSignificantDifference => agg.not_significant += 1,
                Verdict::Significant => agg.significant += 1,
            }
        }
        if agg.tests == 0 {
            return Err(Error::Incomplete(format!("no tests for comparison `{comparison}`")));
        }
        let n = agg.tests as f64;
        agg.fraction_favors_a = agg.favors_a as f64 / n;
        agg.fraction_favors_b = agg.favors_b as f64 / n;
        agg.fraction_not_significant = agg.not_significant as f64 / n;
        agg.fraction_significant = agg.significant as f64 / n;
        Ok(agg)
    }

    /// (favors A %, favors B %, not significant %), one decimal as printed in reports.
    pub fn percentages(&self) -> (f64, f64, f64) {
        let pct = |f: f64| (f * 1000.0).round() / 10.0;
        (
            pct(self.fraction_favors_a),
            pct(self.fraction_favors_b),
            pct(self.fraction_not_significant),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationEntry {
    pub backend_id: String,
    pub occupation_code: String,
    pub gap: ValidationGap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub started_unix_ms: u128,
    pub elapsed_ms: u128,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub tool_version: String,
    pub config_hash: String,
    pub experiment: ExperimentKind,
    pub seed: u64,
    pub backends: Vec<String>,
    pub occupations: Vec<String>,
    pub comparisons: Vec<String>,
    pub tests: Vec<BiasTestResult>,
    pub aggregates: Vec<Aggregate>,
    pub validation: Vec<ValidationEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timing: Option<Timing>,
}

impl ExperimentReport {
    /// Checks that the tests cover exactly the backend × occupation × comparison grid
    /// and that stored aggregates match the per-test rows.
    pub fn check_complete(&self) -> Result<()> {
        let expected = if self.experiment == ExperimentKind::Validation {
            0
        } else {
            self.backends.len() * self.occupations.len() * self.comparisons.len()
        };
        if self.tests.len() != expected {
            return Err(Error::Incomplete(format!(
                "{} tests for a grid of {expected} cells",
                self.tests.len()
            )));
        }
        for b in &self.backends {
            for o in &self.occupations {
                for c in &self.comparisons {
                    let n = self
                        .tests
                        .iter()
                        .filter(|t| &t.backend_id == b && &t.occupation_code == o && &t.comparison == c)
                        .count();
                    if n != 1 {
                        return Err(Error::Incomplete(format!("cell ({b}, {o}, {c}) has {n} tests")));
                    }
                }
            }
        }
        if self.experiment == ExperimentKind::Validation {
            let cells = self.backends.len() * self.occupations.len();
            if self.validation.len() != cells {
                return Err(Error::Incomplete(format!(
                    "{} validation entries for {cells} cells",
                    self.validation.len()
                )));
            }
        }
        let recomputed = aggregates(&self.comparisons, &self.tests)?;
        if recomputed != self.aggregates {
            return Err(Error::Incomplete("stored aggregates disagree with per-test rows".into()));
        }
        Ok(())
    }

    /// Pretty JSON without timing metadata; identical runs give identical bytes.
    pub fn canonical_json(&self) -> Result<String> {
        let mut r = self.clone();
        r.timing = None;
        Ok(serde_json::to_string_pretty(&r)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

pub fn aggregates(comparisons: &[String], tests: &[BiasTestResult]) -> Result<Vec<Aggregate>> {
    if tests.is_empty() {
        return Ok(Vec::new());
    }
    comparisons.iter().map(|c| Aggregate::from_tests(c, tests)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisparitySummary {
    pub min: f64,
    pub median: f64,
    pub mean: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub aggregate: Aggregate,
    pub disparity: DisparitySummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub experiment: ExperimentKind,
    pub reports: usize,
    pub rows: Vec<SummaryRow>,
}

/// Pools the tests of several reports of one experiment type, per comparison.
pub fn summarize(reports: &[ExperimentReport]) -> Result<Summary> {
    let first = reports.first().ok_or(Error::EmptyInput("reports"))?;
    if let Some(other) = reports.iter().find(|r| r.experiment != first.experiment) {
        return Err(Error::MixedExperiments(format!(
            "{} and {}",
            first.experiment.as_str(),
            other.experiment.as_str()
        )));
    }
    let mut comparisons: Vec<String> = Vec::new();
    for r in reports {
        for c in &r.comparisons {
            if !comparisons.contains(c) {
                comparisons.push(c.clone());
            }
        }
    }
    let tests: Vec<&BiasTestResult> = reports.iter().flat_map(|r| &r.tests).collect();
    let mut rows = Vec::new();
    for c in &comparisons {
        let these: Vec<&BiasTestResult> = tests.iter().copied().filter(|t| &t.comparison == c).collect();
        if these.is_empty() {
            continue;
        }
        let mut d: Vec<f64> = these.iter().map(|t| t.disparity).collect();
        d.sort_by(f64::total_cmp);
        let n = d.len();
        let median = if n % 2 == 1 { d[n / 2] } else { (d[n / 2 - 1] + d[n / 2]) / 2.0 };
        rows.push(SummaryRow {
            aggregate: Aggregate::from_tests(c, these)?,
            disparity: DisparitySummary {
                min: d[0],
                median,
                mean: d.iter().sum::<f64>() / n as f64,
                max: d[n - 1],
            },
        });
    }
    Ok(Summary {
        experiment: first.experiment,
        reports: reports.len(),
        rows,
    })
}
