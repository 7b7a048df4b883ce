//! Name-augmented resume variants, instruction-prefixed queries and balanced pools.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::corpus::{Document, DocumentKind};
use crate::error::{Error, Result};
use crate::namebank::{NameGroup, NameRecord};

/// Retrieval instructions attached to every job description.
pub const DEFAULT_INSTRUCTIONS: [&str; 10] = [
    "Given a job description, retrieve resumes that satisfy the requirements",
    "Given a job posting, retrieve resumes that meet the specifications",
    "Given a job profile, find resumes that fulfill the criteria",
    "Given a job posting, find work histories that satisfy the requirements",
    "Given a job description, retrieve employment records that meet the specifications",
    "Given a job profile, retrieve work histories that satisfy the requirements",
    "Given a job profile, retrieve employment records that fulfill the criteria",
    "Given a job posting, retrieve resumes that satisfy the requirements",
    "Given a job posting, retrieve employment records that meet the specifications",
    "Given a job description, retrieve work histories that fulfill the criteria",
];

pub fn default_instructions() -> Vec<String> {
    DEFAULT_INSTRUCTIONS.iter().map(|s| s.to_string()).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariantMode {
    #[default]
    FullLength,
    TitleOnly,
    NoName,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResumeVariant {
    pub base_id: String,
    /// `None` for [`VariantMode::NoName`].
    pub name: Option<NameRecord>,
    pub surname: Option<String>,
    pub mode: VariantMode,
    pub text: String,
}

impl ResumeVariant {
    pub fn group(&self) -> Option<NameGroup> {
        self.name.as_ref().map(|n| n.group)
    }

    pub fn first_name(&self) -> Option<&str> {
        self.name.as_ref().map(|n| n.first.as_str())
    }
}

/// Builds the text of one resume variant.
///
/// The full name is prepended as `"<First> <Last>\n\n"`; title-only variants drop the body.
pub fn apply_name(
    doc: &Document,
    name: &NameRecord,
    surname: &str,
    mode: VariantMode,
) -> Result<ResumeVariant> {
    if doc.kind() != DocumentKind::Resume {
        return Err(Error::WrongKind {
            id: doc.id.clone(),
            expected: "resume",
        });
    }
    let line = format!("{} {}", name.first, surname);
    let (text, name, surname) = match mode {
        VariantMode::NoName => (doc.text(), None, None),
        VariantMode::TitleOnly => (
            format!("{line}\n\n{}", doc.title),
            Some(name.clone()),
            Some(surname.to_string()),
        ),
        VariantMode::FullLength => (
            format!("{line}\n\n{}", doc.text()),
            Some(name.clone()),
            Some(surname.to_string()),
        ),
    };
    Ok(ResumeVariant {
        base_id: doc.id.clone(),
        name,
        surname,
        mode,
        text,
    })
}

/// The unnamed variant of a resume, as used by the match/unmatch validation.
pub fn unnamed(doc: &Document) -> Result<ResumeVariant> {
    if doc.kind() != DocumentKind::Resume {
        return Err(Error::WrongKind {
            id: doc.id.clone(),
            expected: "resume",
        });
    }
    Ok(ResumeVariant {
        base_id: doc.id.clone(),
        name: None,
        surname: None,
        mode: VariantMode::NoName,
        text: doc.text(),
    })
}

/// Backend-specific query template with `{instruction}` and `{query}` placeholders.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct QueryTemplate(String);

impl QueryTemplate {
    pub fn new(template: impl Into<String>) -> Result<Self> {
        let template = template.into();
        if !template.contains("{query}") {
            return Err(Error::Config(format!(
                "query template `{template}` lacks a {{query}} placeholder"
            )));
        }
        Ok(QueryTemplate(template))
    }

    pub fn render(&self, instruction: &str, query: &str) -> String {
        // substitute the instruction first so a `{query}` inside it is left alone
        let mut out = String::with_capacity(self.0.len() + instruction.len() + query.len());
        let mut rest = self.0.as_str();
        while let Some(pos) = rest.find('{') {
            out.push_str(&rest[..pos]);
            let tail = &rest[pos..];
            if let Some(t) = tail.strip_prefix("{instruction}") {
                out.push_str(instruction);
                rest = t;
            } else if let Some(t) = tail.strip_prefix("{query}") {
                out.push_str(query);
                rest = t;
            } else {
                out.push('{');
                rest = &tail[1..];
            }
        }
        out.push_str(rest);
        out
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl Default for QueryTemplate {
    fn default() -> Self {
        QueryTemplate("Instruct: {instruction}\nQuery: {query}".into())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Query {
    pub job_id: String,
    /// 1-based position in the instruction list.
    pub instruction_id: usize,
    pub text: String,
}

pub fn build_queries(
    job: &Document,
    instructions: &[String],
    template: &QueryTemplate,
) -> Result<Vec<Query>> {
    if instructions.is_empty() {
        return Err(Error::EmptyInput("instruction list"));
    }
    if job.kind() != DocumentKind::JobDescription {
        return Err(Error::WrongKind {
            id: job.id.clone(),
            expected: "job description",
        });
    }
    Ok(instructions
        .iter()
        .enumerate()
        .map(|(i, instruction)| Query {
            job_id: job.id.clone(),
            instruction_id: i + 1,
            text: template.render(instruction, &job.body),
        })
        .collect())
}

/// Every base resume crossed with every name of every group under test.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonPool {
    pub job_id: String,
    pub groups: Vec<NameGroup>,
    pub variants: Arc<Vec<ResumeVariant>>,
}

impl ComparisonPool {
    pub fn len(&self) -> usize {
        self.variants.len()
    }

    pub fn is_empty(&self) -> bool {
        self.variants.is_empty()
    }

    /// Same variants, different job.
    pub fn for_job(&self, job_id: impl Into<String>) -> ComparisonPool {
        ComparisonPool {
            job_id: job_id.into(),
            groups: self.groups.clone(),
            variants: Arc::clone(&self.variants),
        }
    }

    pub fn group_sizes(&self) -> BTreeMap<NameGroup, usize> {
        let mut sizes: BTreeMap<NameGroup, usize> = self.groups.iter().map(|g| (*g, 0)).collect();
        for v in self.variants.iter() {
            if let Some(g) = v.group() {
                *sizes.entry(g).or_default() += 1;
            }
        }
        sizes
    }

    pub fn assert_balanced(&self) -> Result<()> {
        let sizes = self.group_sizes();
        let mut it = sizes.values();
        let first = it.next().copied().unwrap_or(0);
        if it.any(|&n| n != first) || sizes.len() != self.groups.len() {
            return Err(Error::Unbalanced(format!("group sizes {sizes:?}")));
        }
        Ok(())
    }
}

/// Cross product of `resumes` with every listed name, ordered by
/// (base id, group, first name).
pub fn build_pool<'a>(
    resumes: impl IntoIterator<Item = &'a Document>,
    names: &BTreeMap<NameGroup, Vec<NameRecord>>,
    surname: &str,
    job: &Document,
    mode: VariantMode,
) -> Result<ComparisonPool> {
    if names.is_empty() {
        return Err(Error::EmptyInput("name groups"));
    }
    let lens: Vec<usize> = names.values().map(Vec::len).collect();
    if lens[0] == 0 || lens.iter().any(|&n| n != lens[0]) {
        let detail: Vec<String> = names.iter().map(|(g, v)| format!("{g}={}", v.len())).collect();
        return Err(Error::Unbalanced(format!("name list sizes {}", detail.join(", "))));
    }
    if mode == VariantMode::NoName {
        return Err(Error::Config("a comparison pool needs named variants".into()));
    }

    let mut base: Vec<&Document> = resumes.into_iter().collect();
    if base.is_empty() {
        return Err(Error::EmptyInput("resumes"));
    }
    base.sort_by(|a, b| a.id.cmp(&b.id));

    let mut sorted_names: Vec<&NameRecord> = names.values().flatten().collect();
    sorted_names.sort_by(|a, b| a.group.cmp(&b.group).then_with(|| a.first.cmp(&b.first)));

    let mut variants = Vec::with_capacity(base.len() * sorted_names.len());
    for doc in base {
        for name in &sorted_names {
            variants.push(apply_name(doc, name, surname, mode)?);
        }
    }
    let pool = ComparisonPool {
        job_id: job.id.clone(),
        groups: names.keys().copied().collect(),
        variants: Arc::new(variants),
    };
    pool.assert_balanced()?;
    Ok(pool)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::namebank::NameBank;
    use crate::tokenize::WhitespaceTokenizer;

    fn resume(id: &str, title: &str, body: &str) -> Document {
        Document::new(id, DocumentKind::Resume, "13201", 1.0, title, body, &WhitespaceTokenizer)
    }

    fn job(body: &str) -> Document {
        Document::new("j1", DocumentKind::JobDescription, "13201", 1.0, "ACCOUNTANT", body, &WhitespaceTokenizer)
    }

    fn kenya() -> NameRecord {
        NameBank::bundled().lookup("Kenya", &[NameGroup::BF]).unwrap().clone()
    }

    #[test]
    fn variant_texts() {
        let doc = resume("r1", "ACCOUNTANT", "Reconciled ledgers.");
        let full = apply_name(&doc, &kenya(), "Williams", VariantMode::FullLength).unwrap();
        assert!(full.text.starts_with("Kenya Williams\n\nACCOUNTANT"));
        assert!(full.text.ends_with("Reconciled ledgers."));

        let title = apply_name(&doc, &kenya(), "Williams", VariantMode::TitleOnly).unwrap();
        assert_eq!(title.text, "Kenya Williams\n\nACCOUNTANT");

        let none = apply_name(&doc, &kenya(), "Williams", VariantMode::NoName).unwrap();
        assert_eq!(none.text, doc.text());
        assert!(none.name.is_none());
    }

    #[test]
    fn apply_name_rejects_jobs() {
        assert!(matches!(
            apply_name(&job("x"), &kenya(), "Williams", VariantMode::FullLength),
            Err(Error::WrongKind { .. })
        ));
    }

    #[test]
    fn queries_from_instructions() {
        let j = job("B");
        let qs = build_queries(&j, &default_instructions(), &QueryTemplate::default()).unwrap();
        assert_eq!(qs.len(), 10);
        assert!(qs[0]
            .text
            .contains("Given a job description, retrieve resumes that satisfy the requirements"));
        assert_eq!(qs.iter().map(|q| q.instruction_id).collect::<Vec<_>>(), (1..=10).collect::<Vec<_>>());

        let t = QueryTemplate::new("{instruction}\n{query}").unwrap();
        let one = build_queries(&j, &["I".to_string()], &t).unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!(one[0].text, "I\nB");

        assert!(matches!(build_queries(&j, &[], &t), Err(Error::EmptyInput(_))));
        assert!(QueryTemplate::new("{instruction}").is_err());
    }

    #[test]
    fn template_leaves_placeholders_in_values() {
        let t = QueryTemplate::new("{instruction}|{query}|{other}").unwrap();
        assert_eq!(t.render("a {query}", "b"), "a {query}|b|{other}");
    }

    #[test]
    fn pools_are_balanced_and_ordered() {
        let bank = NameBank::bundled();
        let docs = vec![resume("r2", "T", "b2"), resume("r1", "T", "b1")];
        let mut names = BTreeMap::new();
        names.insert(NameGroup::WM, bank.group(NameGroup::WM)[..1].to_vec());
        names.insert(NameGroup::BM, bank.group(NameGroup::BM)[..1].to_vec());
        let pool = build_pool(&docs[..1], &names, "Williams", &job("x"), VariantMode::FullLength).unwrap();
        assert_eq!(pool.len(), 2);

        let pool = build_pool(&docs, &names, "Williams", &job("x"), VariantMode::FullLength).unwrap();
        let keys: Vec<(String, NameGroup)> = pool.variants.iter().map(|v| (v.base_id.clone(), v.group().unwrap())).collect();
        assert_eq!(keys[0], ("r1".to_string(), NameGroup::BM));
        assert_eq!(keys[3], ("r2".to_string(), NameGroup::WM));

        names.insert(NameGroup::WF, bank.group(NameGroup::WF)[..2].to_vec());
        assert!(matches!(
            build_pool(&docs, &names, "Williams", &job("x"), VariantMode::FullLength),
            Err(Error::Unbalanced(_))
        ));
    }
}
