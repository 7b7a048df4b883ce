//! Scoring resume variants against job queries and selecting the top fraction.

use std::cmp::Ordering;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::augment::ResumeVariant;
use crate::embedder::mock::seeded_hash;
use crate::embedder::EmbeddingVector;
use crate::error::{Error, Result};
use crate::namebank::NameGroup;
use crate::stats::{welch_test, WelchResult};

/// Inner product of two unit vectors, accumulated in `f64` and clamped to [-1, 1].
pub fn cosine(u: &EmbeddingVector, v: &EmbeddingVector) -> Result<f64> {
    dot(u.values(), v.values()).map(|d| d.clamp(-1.0, 1.0))
}

fn dot(u: &[f32], v: &[f32]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::DimensionMismatch {
            expected: u.len(),
            actual: v.len(),
        });
    }
    Ok(u.iter().zip(v).map(|(&a, &b)| a as f64 * b as f64).sum())
}

/// Mean cosine similarity between a variant and each instruction-prefixed query.
pub fn avg_similarity(variant: &EmbeddingVector, queries: &[EmbeddingVector]) -> Result<f64> {
    if queries.is_empty() {
        return Err(Error::EmptyInput("query vectors"));
    }
    let mut sum = 0.0;
    for q in queries {
        sum += cosine(variant, q)?;
    }
    Ok(sum / queries.len() as f64)
}

/// Identifies a variant within a pool; ordering is the deterministic tie-break key.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct VariantRef {
    pub base_id: String,
    pub group: Option<NameGroup>,
    pub first: Option<String>,
}

impl VariantRef {
    pub fn of(v: &ResumeVariant) -> Self {
        VariantRef {
            base_id: v.base_id.clone(),
            group: v.group(),
            first: v.first_name().map(str::to_string),
        }
    }

    fn tie_key(&self) -> (&str, &str, &str) {
        (
            &self.base_id,
            self.group.map(NameGroup::as_str).unwrap_or(""),
            self.first.as_deref().unwrap_or(""),
        )
    }
}

impl Ord for VariantRef {
    fn cmp(&self, other: &Self) -> Ordering {
        self.tie_key().cmp(&other.tie_key())
    }
}

impl PartialOrd for VariantRef {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub variant: VariantRef,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreTable {
    pub job_id: String,
    pub rows: Vec<ScoreRow>,
}

/// Scores every variant against the job's query vectors.
pub fn score_variants(
    job_id: &str,
    variants: &[ResumeVariant],
    vectors: &[EmbeddingVector],
    queries: &[EmbeddingVector],
) -> Result<ScoreTable> {
    if variants.len() != vectors.len() {
        return Err(Error::LengthMismatch {
            left: variants.len(),
            right: vectors.len(),
        });
    }
    let rows = variants
        .iter()
        .zip(vectors)
        .map(|(v, e)| {
            Ok(ScoreRow {
                variant: VariantRef::of(v),
                score: avg_similarity(e, queries)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ScoreTable {
        job_id: job_id.to_string(),
        rows,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieBreak {
    /// Ascending (base id, group label, first name).
    #[default]
    Deterministic,
    /// Seeded pseudo-random order among equal scores.
    Seeded(u64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub job_id: String,
    pub selected: Vec<VariantRef>,
    pub fraction: f64,
    pub cutoff_score: f64,
}

/// `ceil(fraction · n)`, treating products within 1e-9 of an integer as that integer.
pub fn selection_size(fraction: f64, n: usize) -> usize {
    let x = fraction * n as f64;
    let k = if (x - x.round()).abs() < 1e-9 { x.round() } else { x.ceil() };
    (k as usize).clamp(1, n)
}

pub fn select_top(table: &ScoreTable, fraction: f64) -> Result<SelectionResult> {
    select_top_with(table, fraction, TieBreak::Deterministic)
}

/// Keeps the `ceil(fraction · n)` highest-scoring rows.
pub fn select_top_with(table: &ScoreTable, fraction: f64, ties: TieBreak) -> Result<SelectionResult> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::Domain(format!("fraction must be in (0, 1], got {fraction}")));
    }
    if table.rows.is_empty() {
        return Err(Error::EmptyInput("score table"));
    }
    let k = selection_size(fraction, table.rows.len());
    let salt = |r: &VariantRef| match ties {
        TieBreak::Deterministic => 0,
        TieBreak::Seeded(seed) => {
            let (a, b, c) = r.tie_key();
            seeded_hash(seed, format!("{a}\u{1f}{b}\u{1f}{c}").as_bytes())
        }
    };
    let mut order: Vec<(usize, u64)> = table
        .rows
        .iter()
        .enumerate()
        .map(|(i, r)| (i, salt(&r.variant)))
        .collect();
    let cmp = |&(i, si): &(usize, u64), &(j, sj): &(usize, u64)| {
        let (a, b) = (&table.rows[i], &table.rows[j]);
        b.score
            .total_cmp(&a.score)
            .then(si.cmp(&sj))
            .then_with(|| a.variant.cmp(&b.variant))
    };
    if k < order.len() {
        order.select_nth_unstable_by(k - 1, cmp);
        order.truncate(k);
    }
    order.sort_unstable_by(cmp);
    let selected: Vec<VariantRef> = order.iter().map(|&(i, _)| table.rows[i].variant.clone()).collect();
    let cutoff_score = table.rows[order[k - 1].0].score;
    Ok(SelectionResult {
        job_id: table.job_id.clone(),
        selected,
        fraction,
        cutoff_score,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationGap {
    pub mean_matched: f64,
    pub mean_unmatched: f64,
    pub mean_gap: f64,
    pub n_matched: usize,
    pub n_unmatched: usize,
    pub test: WelchResult,
}

/// Compares similarities of same-occupation resumes against other-occupation resumes.
pub fn validation_gap(matched: &[f64], unmatched: &[f64]) -> Result<ValidationGap> {
    let test = welch_test(matched, unmatched)?;
    let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
    let (mm, mu) = (mean(matched), mean(unmatched));
    Ok(ValidationGap {
        mean_matched: mm,
        mean_unmatched: mu,
        mean_gap: mm - mu,
        n_matched: matched.len(),
        n_unmatched: unmatched.len(),
        test,
    })
}

/// Writes `job_id,variant_base_id,group,name,score` rows.
pub fn write_score_tables<W: Write>(writer: W, tables: &[ScoreTable]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let err = |e: csv::Error| Error::Domain(format!("score export: {e}"));
    w.write_record(["job_id", "variant_base_id", "group", "name", "score"]).map_err(err)?;
    for t in tables {
        for r in &t.rows {
            w.write_record([
                t.job_id.as_str(),
                r.variant.base_id.as_str(),
                r.variant.group.map(NameGroup::as_str).unwrap_or(""),
                r.variant.first.as_deref().unwrap_or(""),
                &format!("{}", r.score),
            ])
            .map_err(err)?;
        }
    }
    w.flush().map_err(|e| Error::io("<scores>", e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::sync::Arc;

    fn ev(v: &[f32]) -> EmbeddingVector {
        EmbeddingVector::normalized(v, Arc::from("t"))
    }

    fn table(scores: &[f64]) -> ScoreTable {
        ScoreTable {
            job_id: "j".into(),
            rows: scores
                .iter()
                .enumerate()
                .map(|(i, &s)| ScoreRow {
                    variant: VariantRef {
                        base_id: format!("r{:05}", i / 4),
                        group: Some([NameGroup::BM, NameGroup::WM][i % 2]),
                        first: Some(format!("n{}", i % 4)),
                    },
                    score: s,
                })
                .collect(),
        }
    }

    #[test]
    fn cosine_examples() {
        let v = ev(&[0.3, -0.2, 0.9]);
        assert_abs_diff_eq!(cosine(&v, &v).unwrap(), 1.0, epsilon = 1e-6);
        assert_eq!(cosine(&ev(&[1.0, 0.0]), &ev(&[0.0, 1.0])).unwrap(), 0.0);
        assert_abs_diff_eq!(cosine(&ev(&[0.6, 0.8]), &ev(&[0.8, 0.6])).unwrap(), 0.96, epsilon = 1e-7);
        assert!(cosine(&ev(&[1.0, 0.0]), &ev(&[1.0, 0.0, 0.0])).is_err());
    }

    #[test]
    fn averaging() {
        let v = ev(&[0.6, 0.8]);
        let q = ev(&[0.8, 0.6]);
        let same = vec![q.clone(); 10];
        assert_abs_diff_eq!(avg_similarity(&v, &same).unwrap(), cosine(&v, &q).unwrap(), epsilon = 1e-15);
        assert!(avg_similarity(&v, &[]).is_err());

        // two queries with cosines 0.2 and 0.4 against e1
        let e1 = ev(&[1.0, 0.0]);
        let qs = [ev(&[0.2, (1.0f32 - 0.04).sqrt()]), ev(&[0.4, (1.0f32 - 0.16).sqrt()])];
        assert_abs_diff_eq!(avg_similarity(&e1, &qs).unwrap(), 0.3, epsilon = 1e-7);
    }

    #[test]
    fn selection_sizes() {
        assert_eq!(selection_size(0.1, 1600), 160);
        assert_eq!(selection_size(0.1, 30), 3);
        assert_eq!(selection_size(0.1, 31), 4);
        assert_eq!(selection_size(1.0, 7), 7);
        assert_eq!(selection_size(0.01, 5), 1);
    }

    #[test]
    fn whole_pool_and_ties() {
        let t = table(&[0.5; 12]);
        let all = select_top(&t, 1.0).unwrap();
        assert_eq!(all.selected.len(), 12);

        let some = select_top(&t, 0.25).unwrap();
        let mut expected: Vec<VariantRef> = t.rows.iter().map(|r| r.variant.clone()).collect();
        expected.sort();
        assert_eq!(some.selected, expected[..3].to_vec());
        assert!(select_top(&t, 0.0).is_err());
        assert!(select_top(&table(&[]), 0.5).is_err());
    }

    #[test]
    fn seeded_ties_are_reproducible() {
        let t = table(&[0.5; 40]);
        let a = select_top_with(&t, 0.1, TieBreak::Seeded(1)).unwrap();
        let b = select_top_with(&t, 0.1, TieBreak::Seeded(1)).unwrap();
        assert_eq!(a, b);
        let c = select_top_with(&t, 0.1, TieBreak::Seeded(2)).unwrap();
        assert_ne!(a.selected, c.selected);
    }

    #[test]
    fn validation_gap_examples() {
        let xs = [0.1, 0.2, 0.3];
        let g = validation_gap(&xs, &xs).unwrap();
        assert_eq!(g.mean_gap, 0.0);
        assert_eq!(g.test.p_value, 1.0);
        assert!(validation_gap(&[0.1], &xs).is_err());
    }

    #[test]
    fn score_export_format() {
        let mut buf = Vec::new();
        write_score_tables(&mut buf, &[table(&[0.25])]).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "job_id,variant_base_id,group,name,score\nj,r00000,BM,n0,0.25\n"
        );
    }

    fn brute_force(t: &ScoreTable, k: usize) -> Vec<VariantRef> {
        let mut rows: Vec<&ScoreRow> = t.rows.iter().collect();
        rows.sort_by(|a, b| b.score.partial_cmp(&a.score).unwrap().then(a.variant.cmp(&b.variant)));
        rows.into_iter().take(k).map(|r| r.variant.clone()).collect()
    }

    proptest! {
        #[test]
        fn matches_full_sort(scores in proptest::collection::vec(prop_oneof![Just(0.5), -1.0f64..1.0], 1..300),
                             fraction in 0.001f64..=1.0) {
            let t = table(&scores);
            let sel = select_top(&t, fraction).unwrap();
            prop_assert_eq!(&sel.selected, &brute_force(&t, selection_size(fraction, scores.len())));
        }

        #[test]
        fn raising_a_score_never_deselects(scores in proptest::collection::vec(-1.0f64..1.0, 2..100),
                                           pick in any::<prop::sample::Index>(), bump in 0.0f64..1.0) {
            let t = table(&scores);
            let i = pick.index(scores.len());
            let before = select_top(&t, 0.3).unwrap().selected.contains(&t.rows[i].variant);
            let mut raised = t.clone();
            raised.rows[i].score += bump;
            let after = select_top(&raised, 0.3).unwrap().selected.contains(&t.rows[i].variant);
            prop_assert!(!before || after);
        }

        #[test]
        fn query_order_irrelevant(raw in proptest::collection::vec(proptest::collection::vec(-1.0f32..1.0, 8), 2..10)) {
            let v = ev(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]);
            let qs: Vec<EmbeddingVector> = raw.iter().map(|r| ev(r)).collect();
            let mut rev = qs.clone();
            rev.reverse();
            prop_assert!((avg_similarity(&v, &qs).unwrap() - avg_similarity(&v, &rev).unwrap()).abs() < 1e-12);
        }
    }
}
