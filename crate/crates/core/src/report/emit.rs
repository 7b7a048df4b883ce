use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::pipeline::BackendScores;
use super::{summarize, ExperimentReport};
use crate::error::{Error, Result};
use crate::retrieval::write_score_tables;
use crate::stats::Verdict;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Json,
    Csv,
    Markdown,
}

impl Format {
    pub const ALL: [Format; 3] = [Format::Json, Format::Csv, Format::Markdown];

    pub fn file_name(self) -> &'static str {
        match self {
            Format::Json => "report.json",
            Format::Csv => "tests.csv",
            Format::Markdown => "report.md",
        }
    }
}

impl std::str::FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(Format::Json),
            "csv" => Ok(Format::Csv),
            "markdown" | "md" => Ok(Format::Markdown),
            other => Err(Error::Config(format!("unknown report format `{other}`"))),
        }
    }
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Writes the report in each format into `dir` and returns the paths written.
pub fn emit(report: &ExperimentReport, formats: &[Format], dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    for &f in formats {
        let path = dir.join(f.file_name());
        let body = match f {
            Format::Json => serde_json::to_string_pretty(report)? + "\n",
            Format::Csv => to_csv(report)?,
            Format::Markdown => to_markdown(report)?,
        };
        write_file(&path, &body)?;
        written.push(path);
        if f == Format::Csv && !report.validation.is_empty() {
            let path = dir.join("validation.csv");
            write_file(&path, &validation_csv(report)?)?;
            written.push(path);
        }
    }
    Ok(written)
}

/// One `scores_<backend>.csv` per backend.
pub fn emit_scores(scores: &[BackendScores], dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    for s in scores {
        let safe: String = s
            .backend_id
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
            .collect();
        let path = dir.join(format!("scores_{safe}.csv"));
        let file = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        write_score_tables(std::io::BufWriter::new(file), &s.tables)?;
        written.push(path);
    }
    Ok(written)
}

fn verdict_str(v: Verdict) -> &'static str {
    match v {
        Verdict::FavorsA => "favors_a",
        Verdict::FavorsB => "favors_b",
        Verdict::NoSignificantDifference => "no_significant_difference",
        Verdict::Significant => "significant",
    }
}

fn csv_string(build: impl FnOnce(&mut csv::Writer<Vec<u8>>) -> csv::Result<()>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    build(&mut w).map_err(|e| Error::Domain(format!("csv: {e}")))?;
    let bytes = w.into_inner().map_err(|e| Error::Domain(format!("csv: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// One row per bias test.
pub fn to_csv(report: &ExperimentReport) -> Result<String> {
    csv_string(|w| {
        w.write_record([
            "tool_version",
            "config_hash",
            "experiment",
            "backend_id",
            "occupation_code",
            "comparison",
            "labels",
            "counts",
            "statistic",
            "df",
            "p_value",
            "disparity",
            "alpha",
            "verdict",
            "favored",
            "low_expected_count",
        ])?;
        for t in &report.tests {
            let counts: Vec<String> = t.counts.iter().map(u64::to_string).collect();
            w.write_record([
                report.tool_version.as_str(),
                &report.config_hash,
                report.experiment.as_str(),
                &t.backend_id,
                &t.occupation_code,
                &t.comparison,
                &t.labels.join("|"),
                &counts.join("|"),
                &t.chi2.statistic.to_string(),
                &t.chi2.df.to_string(),
                &t.chi2.p_value.to_string(),
                &t.disparity.to_string(),
                &t.alpha.to_string(),
                verdict_str(t.verdict),
                t.favored.as_deref().unwrap_or(""),
                &t.chi2.low_expected_count.to_string(),
            ])?;
        }
        Ok(())
    })
}

fn validation_csv(report: &ExperimentReport) -> Result<String> {
    csv_string(|w| {
        w.write_record([
            "config_hash",
            "backend_id",
            "occupation_code",
            "mean_matched",
            "mean_unmatched",
            "mean_gap",
            "t",
            "df",
            "p_value",
        ])?;
        for v in &report.validation {
            w.write_record([
                report.config_hash.as_str(),
                &v.backend_id,
                &v.occupation_code,
                &v.gap.mean_matched.to_string(),
                &v.gap.mean_unmatched.to_string(),
                &v.gap.mean_gap.to_string(),
                &v.gap.test.t.to_string(),
                &v.gap.test.df.to_string(),
                &v.gap.test.p_value.to_string(),
            ])?;
        }
        Ok(())
    })
}

/// Summary table with one line per comparison, then plot-ready data blocks.
pub fn to_markdown(report: &ExperimentReport) -> Result<String> {
    let mut md = String::new();
    let _ = writeln!(md, "# Experiment `{}`\n", report.experiment.as_str());
    let _ = writeln!(md, "- tool version: {}", report.tool_version);
    let _ = writeln!(md, "- config hash: `{}`", report.config_hash);
    let _ = writeln!(md, "- seed: {}", report.seed);
    let _ = writeln!(md, "- backends: {}", report.backends.join(", "));
    let _ = writeln!(md, "- occupations: {}\n", report.occupations.join(", "));

    if !report.tests.is_empty() {
        let summary = summarize(std::slice::from_ref(report))?;
        md.push_str("## Summary\n\n");
        md.push_str("| comparison | A | B | tests | favors A | favors B | not significant |\n");
        md.push_str("|---|---|---|---|---|---|---|\n");
        for row in &summary.rows {
            let a = &row.aggregate;
            let (pa, pb, pn) = a.percentages();
            let (la, lb) = if a.labels.len() == 2 {
                (a.labels[0].clone(), a.labels[1].clone())
            } else {
                (a.labels.join("/"), String::from("-"))
            };
            let _ = writeln!(
                md,
                "| {} | {la} | {lb} | {} | {pa:.1}% | {pb:.1}% | {pn:.1}% |",
                a.comparison, a.tests
            );
        }
        md.push('\n');

        for c in &report.comparisons {
            let _ = writeln!(md, "### Data: {c}\n");
            md.push_str("```csv\nbackend_id,occupation_code,disparity,p_value,verdict\n");
            for t in report.tests.iter().filter(|t| &t.comparison == c) {
                let _ = writeln!(
                    md,
                    "{},{},{},{},{}",
                    t.backend_id,
                    t.occupation_code,
                    t.disparity,
                    t.chi2.p_value,
                    verdict_str(t.verdict)
                );
            }
            md.push_str("```\n\n");
        }
    }

    if !report.validation.is_empty() {
        md.push_str("## Validation\n\n");
        md.push_str("| backend | occupation | matched | unmatched | gap | p |\n");
        md.push_str("|---|---|---|---|---|---|\n");
        for v in &report.validation {
            let _ = writeln!(
                md,
                "| {} | {} | {:.4} | {:.4} | {:.4} | {:.3e} |",
                v.backend_id, v.occupation_code, v.gap.mean_matched, v.gap.mean_unmatched, v.gap.mean_gap, v.gap.test.p_value
            );
        }
        md.push_str("\n### Data: validation\n\n```csv\nbackend_id,occupation_code,mean_gap,p_value\n");
        for v in &report.validation {
            let _ = writeln!(md, "{},{},{},{}", v.backend_id, v.occupation_code, v.gap.mean_gap, v.gap.test.p_value);
        }
        md.push_str("```\n");
    }
    Ok(md)
}
