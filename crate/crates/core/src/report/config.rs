use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::augment::{default_instructions, VariantMode};
use crate::corpus::FilterOptions;
use crate::embedder::BackendDescriptor;
use crate::error::{Error, Result};
use crate::namebank::NameGroup;
use crate::retrieval::TieBreak;
use crate::stats::{Comparison, GroupSet};

pub const DEFAULT_MAX_TOKENS: usize = 1300;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Validation,
    RaceGender,
    Intersectional,
    TitleOnly,
    FrequencyExact,
}

impl ExperimentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentKind::Validation => "validation",
            ExperimentKind::RaceGender => "race_gender",
            ExperimentKind::Intersectional => "intersectional",
            ExperimentKind::TitleOnly => "title_only",
            ExperimentKind::FrequencyExact => "frequency_exact",
        }
    }

    pub fn variant_mode(self) -> VariantMode {
        match self {
            ExperimentKind::TitleOnly => VariantMode::TitleOnly,
            ExperimentKind::Validation => VariantMode::NoName,
            _ => VariantMode::FullLength,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComparisonMode {
    #[default]
    Pairwise,
    /// One test over all intersectional groups at once.
    Joint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusConfig {
    pub resumes: PathBuf,
    pub jobs: PathBuf,
    #[serde(default = "default_min_confidence")]
    pub min_confidence: f64,
    #[serde(default = "default_min_docs")]
    pub min_resumes: usize,
    #[serde(default = "default_min_docs")]
    pub min_jobs: usize,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: usize,
}

fn default_min_confidence() -> f64 {
    FilterOptions::default().min_confidence
}
fn default_min_docs() -> usize {
    20
}
fn default_max_tokens() -> usize {
    DEFAULT_MAX_TOKENS
}

impl CorpusConfig {
    pub fn filter_options(&self) -> FilterOptions {
        FilterOptions {
            min_confidence: self.min_confidence,
            min_resumes: self.min_resumes,
            min_jobs: self.min_jobs,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NamesConfig {
    /// Name table; the bundled table is used when absent.
    #[serde(default)]
    pub path: Option<PathBuf>,
    #[serde(default)]
    pub surname: Option<String>,
}

fn default_fraction() -> f64 {
    0.10
}
fn default_alpha() -> f64 {
    0.05
}

/// Declarative description of one experiment run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_fraction")]
    pub fraction: f64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub bonferroni: bool,
    #[serde(default)]
    pub comparison_mode: ComparisonMode,
    /// Replaces the experiment's default comparisons.
    #[serde(default)]
    pub comparisons: Option<Vec<Comparison>>,
    /// Empty means every occupation surviving the corpus filters.
    #[serde(default)]
    pub occupations: Vec<String>,
    #[serde(default)]
    pub tie_break: TieBreak,
    #[serde(default)]
    pub instructions: Option<Vec<String>>,
    #[serde(default)]
    pub export_scores: bool,
    pub corpus: CorpusConfig,
    #[serde(default)]
    pub names: NamesConfig,
    pub backends: Vec<BackendDescriptor>,
    #[serde(default)]
    pub cache_dir: Option<PathBuf>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,

    /// Directory relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parses a TOML file; relative paths inside it resolve against its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml_str(&text)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fraction > 0.0 && self.fraction <= 1.0) {
            return Err(Error::Config(format!("fraction must be in (0, 1], got {}", self.fraction)));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!("alpha must be in (0, 1), got {}", self.alpha)));
        }
        if self.backends.is_empty() {
            return Err(Error::Config("at least one backend is required".into()));
        }
        let mut ids: Vec<&str> = self.backends.iter().map(|b| b.id.as_str()).collect();
        ids.sort();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Config("backend ids must be unique".into()));
        }
        if let Some(ins) = &self.instructions {
            if ins.is_empty() {
                return Err(Error::Config("instruction list is empty".into()));
            }
        }
        if self.experiment != ExperimentKind::Validation {
            let comparisons = self.comparisons();
            if comparisons.is_empty() {
                return Err(Error::Config("no comparisons configured".into()));
            }
            for c in &comparisons {
                c.validate()?;
            }
        }
        Ok(())
    }

    pub fn instruction_list(&self) -> Vec<String> {
        self.instructions.clone().unwrap_or_else(default_instructions)
    }

    /// The configured comparisons, or the defaults for the experiment type.
    pub fn comparisons(&self) -> Vec<Comparison> {
        if let Some(c) = &self.comparisons {
            return c.clone();
        }
        default_comparisons(self.experiment, self.comparison_mode)
    }

    /// SHA-256 over the canonical JSON of the settings that affect results.
    /// Cache and output locations are excluded.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.cache_dir = None;
        c.output_dir = None;
        let json = serde_json::to_vec(&c).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }
}

pub fn default_comparisons(kind: ExperimentKind, mode: ComparisonMode) -> Vec<Comparison> {
    use NameGroup::*;
    let race_gender = |wf: NameGroup, wm: NameGroup| {
        vec![
            Comparison::pair("race", GroupSet::new("White", [wf, wm]), GroupSet::new("Black", [BF, BM])),
            Comparison::pair("gender", GroupSet::new("Male", [wm, BM]), GroupSet::new("Female", [wf, BF])),
        ]
    };
    match kind {
        ExperimentKind::Validation => vec![],
        ExperimentKind::RaceGender | ExperimentKind::TitleOnly => race_gender(WF, WM),
        ExperimentKind::FrequencyExact => race_gender(WfExact, WmExact),
        ExperimentKind::Intersectional => match mode {
            // pairs that share either race or gender
            ComparisonMode::Pairwise => [(WM, WF), (BF, BM), (WM, BM), (WF, BF)]
                .into_iter()
                .map(|(a, b)| Comparison::pair(format!("{a}-{b}"), GroupSet::single(a), GroupSet::single(b)))
                .collect(),
            ComparisonMode::Joint => vec![Comparison {
                label: "intersectional".into(),
                sides: [BF, BM, WF, WM].into_iter().map(GroupSet::single).collect(),
            }],
        },
    }
}
