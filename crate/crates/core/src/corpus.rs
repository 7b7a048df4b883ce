//! Resume and job-description corpora.
//!
//! Input tables are UTF-8 CSV with the header `id,occupation_code,code_confidence,title,body`.
//! The occupation code is the broad SOC occupation (first five digits of the detailed code),
//! already extracted upstream.

use std::collections::{BTreeMap, HashSet};
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use crate::error::{Error, Result};
use crate::tokenize::Tokenizer;

pub const SCHEMA: [&str; 5] = ["id", "occupation_code", "code_confidence", "title", "body"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DocumentKind {
    Resume,
    JobDescription,
}

impl DocumentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DocumentKind::Resume => "resume",
            DocumentKind::JobDescription => "job description",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    kind: DocumentKind,
    pub occupation_code: String,
    pub code_confidence: f64,
    pub title: String,
    pub body: String,
    pub token_count: usize,
}

impl Document {
    pub fn new(
        id: impl Into<String>,
        kind: DocumentKind,
        occupation_code: impl Into<String>,
        code_confidence: f64,
        title: impl Into<String>,
        body: impl Into<String>,
        tokenizer: &dyn Tokenizer,
    ) -> Self {
        let title = title.into();
        let body = body.into();
        let token_count = tokenizer.count(&title) + tokenizer.count(&body);
        Document {
            id: id.into(),
            kind,
            occupation_code: occupation_code.into(),
            code_confidence,
            title,
            body,
            token_count,
        }
    }

    pub fn kind(&self) -> DocumentKind {
        self.kind
    }

    /// Title and body joined by a blank line; just the title when the body is empty.
    pub fn text(&self) -> String {
        if self.body.is_empty() {
            self.title.clone()
        } else {
            format!("{}\n\n{}", self.title, self.body)
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CategoryIds {
    pub resumes: Vec<String>,
    pub jobs: Vec<String>,
}

/// Ordered documents plus an index from occupation code to ids, split by kind.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DocumentSet {
    documents: Vec<Document>,
    category_index: BTreeMap<String, CategoryIds>,
}

impl DocumentSet {
    pub fn from_documents(documents: Vec<Document>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(documents.len());
        for d in &documents {
            if !seen.insert(d.id.as_str()) {
                return Err(Error::DuplicateId(d.id.clone()));
            }
        }
        let mut category_index: BTreeMap<String, CategoryIds> = BTreeMap::new();
        for d in &documents {
            let entry = category_index.entry(d.occupation_code.clone()).or_default();
            match d.kind {
                DocumentKind::Resume => entry.resumes.push(d.id.clone()),
                DocumentKind::JobDescription => entry.jobs.push(d.id.clone()),
            }
        }
        Ok(DocumentSet {
            documents,
            category_index,
        })
    }

    /// Concatenates two sets; ids must stay unique.
    pub fn merge(self, other: DocumentSet) -> Result<Self> {
        let mut docs = self.documents;
        docs.extend(other.documents);
        DocumentSet::from_documents(docs)
    }

    pub fn documents(&self) -> &[Document] {
        &self.documents
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn category_index(&self) -> &BTreeMap<String, CategoryIds> {
        &self.category_index
    }

    pub fn occupations(&self) -> impl Iterator<Item = &str> {
        self.category_index.keys().map(String::as_str)
    }

    pub fn of_kind(&self, kind: DocumentKind) -> impl Iterator<Item = &Document> {
        self.documents.iter().filter(move |d| d.kind == kind)
    }

    pub fn get(&self, id: &str) -> Option<&Document> {
        self.documents.iter().find(|d| d.id == id)
    }

    /// Applies `f` to every document, keeping order and ids.
    pub fn map_documents(&self, f: impl Fn(&Document) -> Document) -> Result<Self> {
        DocumentSet::from_documents(self.documents.iter().map(f).collect())
    }
}

/// Loads a document table from disk.
pub fn load_documents(
    path: impl AsRef<Path>,
    kind: DocumentKind,
    tokenizer: &dyn Tokenizer,
) -> Result<DocumentSet> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_documents(file, kind, tokenizer)
}

pub fn read_documents<R: Read>(
    reader: R,
    kind: DocumentKind,
    tokenizer: &dyn Tokenizer,
) -> Result<DocumentSet> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(reader);

    let header = rdr.headers().map_err(|e| malformed(0, "header", e))?.clone();
    let names: Vec<&str> = header.iter().map(str::trim).collect();
    if names != SCHEMA {
        return Err(Error::MalformedRow {
            row: 0,
            field: "header".into(),
            message: format!("expected `{}`, found `{}`", SCHEMA.join(","), names.join(",")),
        });
    }

    let mut documents = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let row = i as u64 + 1;
        let record = record.map_err(|e| malformed(row, "record", e))?;
        let field = |idx: usize| record.get(idx).unwrap_or_default();

        let id = field(0).trim();
        if id.is_empty() {
            return Err(Error::MalformedRow {
                row,
                field: "id".into(),
                message: "empty id".into(),
            });
        }
        let confidence: f64 = field(2).trim().parse().map_err(|e| Error::MalformedRow {
            row,
            field: "code_confidence".into(),
            message: format!("{e}"),
        })?;
        if !(0.0..=1.0).contains(&confidence) {
            return Err(Error::MalformedRow {
                row,
                field: "code_confidence".into(),
                message: format!("{confidence} is outside [0, 1]"),
            });
        }
        documents.push(Document::new(
            id,
            kind,
            field(1).trim(),
            confidence,
            field(3),
            field(4),
            tokenizer,
        ));
    }
    DocumentSet::from_documents(documents)
}

fn malformed(row: u64, field: &str, e: csv::Error) -> Error {
    let row = e.position().map(|p| p.record()).unwrap_or(row);
    Error::MalformedRow {
        row,
        field: field.into(),
        message: e.to_string(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterOptions {
    pub min_confidence: f64,
    pub min_resumes: usize,
    pub min_jobs: usize,
}

impl Default for FilterOptions {
    fn default() -> Self {
        FilterOptions {
            min_confidence: 0.60,
            min_resumes: 20,
            min_jobs: 20,
        }
    }
}

/// Key used to detect duplicate documents: NFC, collapsed whitespace, lowercase.
pub fn dedup_key(body: &str) -> String {
    let nfc: String = body.nfc().collect();
    nfc.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

/// Confidence threshold (inclusive), then body dedup keeping the first occurrence,
/// then the per-category minimum counts for both kinds.
pub fn filter_corpus(docs: &DocumentSet, opts: &FilterOptions) -> Result<DocumentSet> {
    let mut seen = HashSet::new();
    let kept: Vec<Document> = docs
        .documents
        .iter()
        .filter(|d| d.code_confidence >= opts.min_confidence && !d.occupation_code.is_empty())
        .filter(|d| seen.insert(dedup_key(&d.body)))
        .cloned()
        .collect();

    let interim = DocumentSet::from_documents(kept)?;
    let surviving: HashSet<&String> = interim
        .category_index
        .iter()
        .filter(|(_, ids)| ids.resumes.len() >= opts.min_resumes && ids.jobs.len() >= opts.min_jobs)
        .map(|(code, _)| code)
        .collect();
    if surviving.is_empty() {
        return Err(Error::NoCategories);
    }
    let kept = interim
        .documents
        .iter()
        .filter(|d| surviving.contains(&d.occupation_code))
        .cloned()
        .collect();
    DocumentSet::from_documents(kept)
}

/// Cuts the body so that title + body fit in `max_tokens`. The title is never cut;
/// the kept body is a byte-for-byte prefix of the original.
pub fn truncate(doc: &Document, max_tokens: usize, tokenizer: &dyn Tokenizer) -> Document {
    assert!(max_tokens >= 1, "max_tokens must be at least 1");
    if doc.token_count <= max_tokens {
        return doc.clone();
    }
    let title_tokens = tokenizer.count(&doc.title);
    let budget = max_tokens.saturating_sub(title_tokens);
    let spans = tokenizer.spans(&doc.body);
    let body = match budget {
        0 => String::new(),
        n if n >= spans.len() => doc.body.clone(),
        n => doc.body[..spans[n - 1].1].to_string(),
    };
    let mut out = doc.clone();
    out.token_count = title_tokens + tokenizer.count(&body);
    out.body = body;
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MatchPartition {
    pub matched: Vec<String>,
    pub unmatched: Vec<String>,
}

/// Splits the resumes of `resumes` by whether they share the job's occupation code.
pub fn partition_by_match(resumes: &DocumentSet, job: &Document) -> MatchPartition {
    debug_assert_eq!(job.kind(), DocumentKind::JobDescription);
    let (matched, unmatched): (Vec<&Document>, Vec<&Document>) = resumes
        .of_kind(DocumentKind::Resume)
        .partition(|r| r.occupation_code == job.occupation_code);
    MatchPartition {
        matched: matched.into_iter().map(|d| d.id.clone()).collect(),
        unmatched: unmatched.into_iter().map(|d| d.id.clone()).collect(),
    }
}
