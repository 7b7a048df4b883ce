//! Auditing dense retrievers for name-based bias when screening resumes.
//!
//! The pipeline loads a resume/job corpus, attaches names from demographic groups to
//! every resume, scores the variants against instruction-prefixed job queries,
//! keeps the top fraction per job and tests whether the kept names are spread evenly
//! across groups.

pub mod augment;
pub mod corpus;
pub mod embedder;
pub mod error;
pub mod namebank;
pub mod report;
pub mod retrieval;
pub mod stats;
pub mod tokenize;

pub use error::{Error, Result, Stage};
