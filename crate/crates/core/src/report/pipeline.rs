use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use rayon::prelude::*;

use super::config::{ExperimentConfig, ExperimentKind};
use super::{aggregates, ExperimentReport, Timing, ValidationEntry, TOOL_VERSION};
use crate::augment::{build_pool, build_queries, unnamed, QueryTemplate, ResumeVariant};
use crate::corpus::{filter_corpus, load_documents, truncate, Document, DocumentKind, DocumentSet};
use crate::embedder::{BackendDescriptor, Embedder, EmbeddingBackend, EmbeddingCache, EmbeddingVector, Role};
use crate::error::{Error, Result, Stage, StageExt};
use crate::namebank::{load_names, NameBank, NameGroup, NameRecord};
use crate::retrieval::{score_variants, select_top_with, validation_gap, ScoreTable, SelectionResult};
use crate::stats::{bias_test, BiasTestResult, Comparison};
use crate::tokenize::WhitespaceTokenizer;

/// Score tables of one backend, kept when score export is requested.
#[derive(Debug, Clone, PartialEq)]
pub struct BackendScores {
    pub backend_id: String,
    pub tables: Vec<ScoreTable>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub report: ExperimentReport,
    pub scores: Vec<BackendScores>,
}

/// Runs one configured experiment. Backends can be swapped for instrumented ones.
pub struct Runner<'a> {
    config: &'a ExperimentConfig,
    overrides: BTreeMap<String, Arc<dyn EmbeddingBackend>>,
    cache_dir: Option<PathBuf>,
    keep_scores: bool,
    record_timing: bool,
}

pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    Runner::new(config).run().map(|o| o.report)
}

struct Prepared {
    corpus: DocumentSet,
    occupations: Vec<String>,
    bank: NameBank,
    instructions: Vec<String>,
    comparisons: Vec<Comparison>,
}

impl<'a> Runner<'a> {
    pub fn new(config: &'a ExperimentConfig) -> Self {
        Runner {
            config,
            overrides: BTreeMap::new(),
            cache_dir: config.cache_dir.as_ref().map(|p| config.resolve(p)),
            keep_scores: config.export_scores,
            record_timing: true,
        }
    }

    /// Uses `backend` in place of whatever the config describes for its id.
    pub fn with_backend(mut self, backend: Arc<dyn EmbeddingBackend>) -> Self {
        self.overrides.insert(backend.backend_id().to_string(), backend);
        self
    }

    pub fn with_cache_dir(mut self, dir: Option<PathBuf>) -> Self {
        self.cache_dir = dir;
        self
    }

    pub fn keep_scores(mut self, keep: bool) -> Self {
        self.keep_scores = keep;
        self
    }

    pub fn record_timing(mut self, record: bool) -> Self {
        self.record_timing = record;
        self
    }

    pub fn run(&self) -> Result<RunOutput> {
        let started = SystemTime::now();
        let clock = Instant::now();
        let cfg = self.config;
        cfg.validate().stage(Stage::Config)?;
        for id in self.overrides.keys() {
            if !cfg.backends.iter().any(|b| &b.id == id) {
                return Err(Error::Config(format!("override for unknown backend `{id}`"))).stage(Stage::Config);
            }
        }
        let prep = self.prepare()?;

        let cache = self
            .cache_dir
            .as_ref()
            .map(EmbeddingCache::open)
            .transpose()
            .stage(Stage::Embed)?;

        let n_tests = cfg.backends.len() * prep.occupations.len() * prep.comparisons.len();
        let alpha = if cfg.bonferroni && n_tests > 0 {
            cfg.alpha / n_tests as f64
        } else {
            cfg.alpha
        };

        let mut tests = Vec::new();
        let mut validation = Vec::new();
        let mut scores = Vec::new();
        for desc in &cfg.backends {
            let embedder = Embedder::new(self.backend_for(desc, &prep.bank)?, cache.clone());
            let mut tables = Vec::new();
            if cfg.experiment == ExperimentKind::Validation {
                validation.extend(self.validate_backend(desc, &embedder, &prep, &mut tables)?);
            } else {
                for occ in &prep.occupations {
                    tests.extend(self.test_occupation(desc, &embedder, &prep, occ, alpha, &mut tables)?);
                }
            }
            if self.keep_scores {
                scores.push(BackendScores {
                    backend_id: desc.id.clone(),
                    tables,
                });
            }
        }

        let comparisons: Vec<String> = prep.comparisons.iter().map(|c| c.label.clone()).collect();
        let report = ExperimentReport {
            tool_version: TOOL_VERSION.to_string(),
            config_hash: cfg.hash(),
            experiment: cfg.experiment,
            seed: cfg.seed,
            backends: cfg.backends.iter().map(|b| b.id.clone()).collect(),
            occupations: prep.occupations.clone(),
            aggregates: aggregates(&comparisons, &tests).stage(Stage::Report)?,
            comparisons,
            tests,
            validation,
            timing: self.record_timing.then(|| Timing {
                started_unix_ms: started.duration_since(UNIX_EPOCH).map(|d| d.as_millis()).unwrap_or(0),
                elapsed_ms: clock.elapsed().as_millis(),
            }),
        };
        report.check_complete().stage(Stage::Report)?;
        Ok(RunOutput { report, scores })
    }

    fn prepare(&self) -> Result<Prepared> {
        let cfg = self.config;
        let tok = WhitespaceTokenizer;
        let corpus = (|| {
            let resumes = load_documents(cfg.resolve(&cfg.corpus.resumes), DocumentKind::Resume, &tok)?;
            let jobs = load_documents(cfg.resolve(&cfg.corpus.jobs), DocumentKind::JobDescription, &tok)?;
            let filtered = filter_corpus(&resumes.merge(jobs)?, &cfg.corpus.filter_options())?;
            filtered.map_documents(|d| truncate(d, cfg.corpus.max_tokens, &tok))
        })()
        .stage(Stage::Corpus)?;

        let available: Vec<String> = corpus.occupations().map(str::to_string).collect();
        let occupations = if cfg.occupations.is_empty() {
            available
        } else {
            for o in &cfg.occupations {
                if !available.contains(o) {
                    return Err(Error::Config(format!("occupation {o} does not survive corpus filtering")))
                        .stage(Stage::Corpus);
                }
            }
            let mut o = cfg.occupations.clone();
            o.sort();
            o.dedup();
            o
        };

        let bank = match &cfg.names.path {
            Some(p) => load_names(cfg.resolve(p)).stage(Stage::Names)?,
            None => NameBank::bundled(),
        };
        let bank = match &cfg.names.surname {
            Some(s) => bank.with_surname(s.clone()),
            None => bank,
        };

        let comparisons = if cfg.experiment == ExperimentKind::Validation {
            Vec::new()
        } else {
            cfg.comparisons()
        };
        for g in comparisons.iter().flat_map(Comparison::groups) {
            if bank.group(g).is_empty() {
                return Err(Error::InsufficientCandidates {
                    group: g.to_string(),
                    needed: 1,
                    available: 0,
                })
                .stage(Stage::Names);
            }
        }

        Ok(Prepared {
            corpus,
            occupations,
            bank,
            instructions: cfg.instruction_list(),
            comparisons,
        })
    }

    fn backend_for(&self, desc: &BackendDescriptor, bank: &NameBank) -> Result<Arc<dyn EmbeddingBackend>> {
        let backend = match self.overrides.get(&desc.id) {
            Some(b) => Arc::clone(b),
            None => desc.build(self.config.seed, bank).stage(Stage::Embed)?,
        };
        if backend.dim() != desc.dim {
            return Err(Error::DimensionMismatch {
                expected: desc.dim,
                actual: backend.dim(),
            })
            .stage(Stage::Embed);
        }
        Ok(backend)
    }

    fn embed_queries(
        &self,
        embedder: &Embedder,
        jobs: &[&Document],
        instructions: &[String],
        template: &QueryTemplate,
    ) -> Result<Vec<EmbeddingVector>> {
        let mut texts = Vec::with_capacity(jobs.len() * instructions.len());
        for job in jobs {
            texts.extend(build_queries(job, instructions, template).stage(Stage::Augment)?.into_iter().map(|q| q.text));
        }
        embedder.embed_batch(&texts, Role::Query).stage(Stage::Embed)
    }

    fn test_occupation(
        &self,
        desc: &BackendDescriptor,
        embedder: &Embedder,
        prep: &Prepared,
        occupation: &str,
        alpha: f64,
        tables: &mut Vec<ScoreTable>,
    ) -> Result<Vec<BiasTestResult>> {
        let cfg = self.config;
        let (resumes, jobs) = members(&prep.corpus, occupation);

        let mut groups: Vec<NameGroup> = prep.comparisons.iter().flat_map(Comparison::groups).collect();
        groups.sort();
        groups.dedup();
        let names: BTreeMap<NameGroup, Vec<NameRecord>> =
            groups.iter().map(|&g| (g, prep.bank.group(g).to_vec())).collect();

        // the variants do not depend on the job, so one pool serves every job
        let pool = build_pool(resumes, &names, prep.bank.surname(), jobs[0], cfg.experiment.variant_mode())
            .stage(Stage::Augment)?;
        let texts: Vec<String> = pool.variants.iter().map(|v| v.text.clone()).collect();
        let vectors = embedder.embed_batch(&texts, Role::Document).stage(Stage::Embed)?;
        let queries = self.embed_queries(embedder, &jobs, &prep.instructions, &desc.query_template)?;

        let n_ins = prep.instructions.len();
        let per_job: Vec<(ScoreTable, Vec<SelectionResult>)> = jobs
            .par_iter()
            .enumerate()
            .map(|(j, job)| {
                let table = score_variants(&job.id, &pool.variants, &vectors, &queries[j * n_ins..(j + 1) * n_ins])?;
                let selections = prep
                    .comparisons
                    .iter()
                    .map(|c| {
                        let groups = c.groups();
                        let sub = ScoreTable {
                            job_id: table.job_id.clone(),
                            rows: table
                                .rows
                                .iter()
                                .filter(|r| r.variant.group.is_some_and(|g| groups.contains(&g)))
                                .cloned()
                                .collect(),
                        };
                        select_top_with(&sub, cfg.fraction, cfg.tie_break)
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok((table, selections))
            })
            .collect::<Result<Vec<_>>>()
            .stage(Stage::Retrieval)?;

        let mut by_comparison: Vec<Vec<SelectionResult>> = vec![Vec::new(); prep.comparisons.len()];
        for (table, selections) in per_job {
            for (slot, s) in by_comparison.iter_mut().zip(selections) {
                slot.push(s);
            }
            if self.keep_scores {
                tables.push(table);
            }
        }
        prep.comparisons
            .iter()
            .zip(&by_comparison)
            .map(|(c, sels)| bias_test(&desc.id, occupation, c, sels, alpha))
            .collect::<Result<Vec<_>>>()
            .stage(Stage::Stats)
    }

    /// Similarity of every job's queries to same-occupation versus other-occupation
    /// resumes, without names.
    fn validate_backend(
        &self,
        desc: &BackendDescriptor,
        embedder: &Embedder,
        prep: &Prepared,
        tables: &mut Vec<ScoreTable>,
    ) -> Result<Vec<ValidationEntry>> {
        let mut resumes: Vec<&Document> = prep.corpus.of_kind(DocumentKind::Resume).collect();
        resumes.sort_by(|a, b| a.id.cmp(&b.id));
        let variants: Vec<ResumeVariant> = resumes
            .iter()
            .map(|d| unnamed(d))
            .collect::<Result<_>>()
            .stage(Stage::Augment)?;
        let texts: Vec<String> = variants.iter().map(|v| v.text.clone()).collect();
        let vectors = embedder.embed_batch(&texts, Role::Document).stage(Stage::Embed)?;

        let n_ins = prep.instructions.len();
        let mut out = Vec::new();
        for occ in &prep.occupations {
            let (_, jobs) = members(&prep.corpus, occ);
            let queries = self.embed_queries(embedder, &jobs, &prep.instructions, &desc.query_template)?;
            let mut matched = Vec::new();
            let mut unmatched = Vec::new();
            for (j, job) in jobs.iter().enumerate() {
                let table = score_variants(&job.id, &variants, &vectors, &queries[j * n_ins..(j + 1) * n_ins])
                    .stage(Stage::Retrieval)?;
                for (row, doc) in table.rows.iter().zip(&resumes) {
                    if &doc.occupation_code == occ {
                        matched.push(row.score);
                    } else {
                        unmatched.push(row.score);
                    }
                }
                if self.keep_scores {
                    tables.push(table);
                }
            }
            out.push(ValidationEntry {
                backend_id: desc.id.clone(),
                occupation_code: occ.clone(),
                gap: validation_gap(&matched, &unmatched).stage(Stage::Stats)?,
            });
        }
        Ok(out)
    }
}

/// Resumes and jobs of one occupation, each sorted by id.
fn members<'c>(corpus: &'c DocumentSet, occupation: &str) -> (Vec<&'c Document>, Vec<&'c Document>) {
    let ids = &corpus.category_index()[occupation];
    let fetch = |ids: &[String]| {
        let mut docs: Vec<&Document> = ids.iter().filter_map(|id| corpus.get(id)).collect();
        docs.sort_by(|a, b| a.id.cmp(&b.id));
        docs
    };
    (fetch(&ids.resumes), fetch(&ids.jobs))
}
