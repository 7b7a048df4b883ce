//! Identity-signaling first names with corpus frequencies.
//!
//! The bundled bank holds 120 names: 20 each for Black female (BF), Black male (BM),
//! White female (WF) and White male (WM) with White frequencies roughly 5.5 times the
//! Black male frequencies, plus 20 each of White female and male names matched to the
//! Black male frequencies (`WF_exact`, `WM_exact`).

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_SURNAME: &str = "Williams";
pub const MIN_DISTINCTIVENESS: f64 = 0.66;
/// Allowed gap between a stored log frequency and `ln(corpus_freq)`.
pub const LOG_FREQ_TOLERANCE: f64 = 1e-2;
pub const NAMES_HEADER: [&str; 6] = [
    "first",
    "group",
    "corpus_freq",
    "log_freq",
    "full_name_freq",
    "distinctiveness",
];

const BUNDLED_NAMES: &str = include_str!("../data/names.csv");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum NameGroup {
    BF,
    BM,
    WF,
    WM,
    #[serde(rename = "WF_exact")]
    WfExact,
    #[serde(rename = "WM_exact")]
    WmExact,
}

impl NameGroup {
    pub const ALL: [NameGroup; 6] = [
        NameGroup::BF,
        NameGroup::BM,
        NameGroup::WF,
        NameGroup::WM,
        NameGroup::WfExact,
        NameGroup::WmExact,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            NameGroup::BF => "BF",
            NameGroup::BM => "BM",
            NameGroup::WF => "WF",
            NameGroup::WM => "WM",
            NameGroup::WfExact => "WF_exact",
            NameGroup::WmExact => "WM_exact",
        }
    }
}

impl fmt::Display for NameGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for NameGroup {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        // the printed appendix marks exact-matched groups with a leading `=`
        match s.trim() {
            "BF" => Ok(NameGroup::BF),
            "BM" => Ok(NameGroup::BM),
            "WF" => Ok(NameGroup::WF),
            "WM" => Ok(NameGroup::WM),
            "WF_exact" | "=WF" => Ok(NameGroup::WfExact),
            "WM_exact" | "=WM" => Ok(NameGroup::WmExact),
            other => Err(Error::Domain(format!("unknown name group `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NameRecord {
    pub first: String,
    pub group: NameGroup,
    pub corpus_freq: u64,
    pub log_freq: f64,
    pub full_name_freq: u64,
    pub distinctiveness: f64,
}

impl NameRecord {
    pub fn validate(&self) -> Result<()> {
        let fail = |rule: String| Error::InvalidName {
            first: self.first.clone(),
            group: self.group.to_string(),
            rule,
        };
        if self.first.trim().is_empty() {
            return Err(fail("empty first name".into()));
        }
        if self.corpus_freq == 0 {
            return Err(fail("corpus_freq must be positive".into()));
        }
        if !(self.distinctiveness >= MIN_DISTINCTIVENESS) {
            return Err(fail(format!(
                "distinctiveness {} below {MIN_DISTINCTIVENESS}",
                self.distinctiveness
            )));
        }
        let ln = (self.corpus_freq as f64).ln();
        if !((self.log_freq - ln).abs() <= LOG_FREQ_TOLERANCE) {
            return Err(fail(format!(
                "log_freq {} inconsistent with ln({}) = {ln:.4}",
                self.log_freq, self.corpus_freq
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NameBank {
    records: BTreeMap<NameGroup, Vec<NameRecord>>,
    surname: String,
}

impl NameBank {
    pub fn from_records(records: Vec<NameRecord>, surname: impl Into<String>) -> Result<Self> {
        let mut grouped: BTreeMap<NameGroup, Vec<NameRecord>> = BTreeMap::new();
        let mut seen = HashSet::new();
        for r in records {
            r.validate()?;
            if !seen.insert((r.group, r.first.clone())) {
                return Err(Error::InvalidName {
                    first: r.first.clone(),
                    group: r.group.to_string(),
                    rule: "first name repeated within group".into(),
                });
            }
            grouped.entry(r.group).or_default().push(r);
        }
        Ok(NameBank {
            records: grouped,
            surname: surname.into(),
        })
    }

    /// The bank shipped with the crate, surname "Williams".
    pub fn bundled() -> Self {
        read_names(BUNDLED_NAMES.as_bytes()).expect("bundled name table is valid")
    }

    pub fn with_surname(mut self, surname: impl Into<String>) -> Self {
        self.surname = surname.into();
        self
    }

    pub fn surname(&self) -> &str {
        &self.surname
    }

    pub fn group(&self, group: NameGroup) -> &[NameRecord] {
        self.records.get(&group).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn groups(&self) -> impl Iterator<Item = NameGroup> + '_ {
        self.records.keys().copied()
    }

    pub fn records(&self) -> impl Iterator<Item = &NameRecord> {
        self.records.values().flatten()
    }

    pub fn len(&self) -> usize {
        self.records.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Group of a first name (case-insensitive), searching groups in `among`.
    pub fn lookup(&self, first: &str, among: &[NameGroup]) -> Option<&NameRecord> {
        among
            .iter()
            .flat_map(|g| self.group(*g))
            .find(|r| r.first.eq_ignore_ascii_case(first))
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let csv_err = |e: csv::Error| Error::Domain(e.to_string());
        w.write_record(NAMES_HEADER).map_err(csv_err)?;
        for r in self.records() {
            w.write_record([
                r.first.clone(),
                r.group.to_string(),
                r.corpus_freq.to_string(),
                r.log_freq.to_string(),
                r.full_name_freq.to_string(),
                r.distinctiveness.to_string(),
            ])
            .map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::io("<names>", e))
    }
}

pub fn load_names(path: impl AsRef<Path>) -> Result<NameBank> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_names(file)
}

pub fn read_names<R: Read>(reader: R) -> Result<NameBank> {
    let mut rdr = csv::Reader::from_reader(reader);
    let header = rdr
        .headers()
        .map_err(|e| Error::MalformedRow {
            row: 0,
            field: "header".into(),
            message: e.to_string(),
        })?
        .clone();
    let names: Vec<&str> = header.iter().map(str::trim).collect();
    if names != NAMES_HEADER {
        return Err(Error::MalformedRow {
            row: 0,
            field: "header".into(),
            message: format!("expected `{}`", NAMES_HEADER.join(",")),
        });
    }
    let mut records = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i as u64 + 1;
        let rec = rec.map_err(|e| Error::MalformedRow {
            row,
            field: "record".into(),
            message: e.to_string(),
        })?;
        let get = |idx: usize| rec.get(idx).unwrap_or_default().trim();
        let bad = |field: &str, msg: String| Error::MalformedRow {
            row,
            field: field.into(),
            message: msg,
        };
        records.push(NameRecord {
            first: get(0).to_string(),
            group: get(1).parse().map_err(|e: Error| bad("group", e.to_string()))?,
            corpus_freq: get(2)
                .parse()
                .map_err(|e| bad("corpus_freq", format!("{e}")))?,
            log_freq: get(3).parse().map_err(|e| bad("log_freq", format!("{e}")))?,
            full_name_freq: get(4)
                .parse()
                .map_err(|e| bad("full_name_freq", format!("{e}")))?,
            distinctiveness: get(5)
                .parse()
                .map_err(|e| bad("distinctiveness", format!("{e}")))?,
        });
    }
    NameBank::from_records(records, DEFAULT_SURNAME)
}

/// Natural log of a corpus occurrence count.
pub fn log_frequency(freq: u64) -> Result<f64> {
    if freq < 1 {
        return Err(Error::Domain("log_frequency requires freq >= 1".into()));
    }
    Ok((freq as f64).ln())
}

/// Pairs names of `reference` with names of `target` so that target frequencies sit
/// near `ratio` times the reference frequencies.
///
/// References are visited by descending log frequency (ties by first name); each takes
/// the unused target minimizing `|log_freq(target) - log_freq(reference) - ln(ratio)|`,
/// ties going to the lexicographically smaller first name.
pub fn select_matched(
    bank: &NameBank,
    reference: NameGroup,
    target: NameGroup,
    ratio: f64,
    count: usize,
) -> Result<Vec<(NameRecord, NameRecord)>> {
    if !(ratio > 0.0) || !ratio.is_finite() {
        return Err(Error::Domain(format!("ratio must be positive, got {ratio}")));
    }
    let refs = bank.group(reference);
    let targets = bank.group(target);
    for (g, pool) in [(reference, refs), (target, targets)] {
        if pool.len() < count {
            return Err(Error::InsufficientCandidates {
                group: g.to_string(),
                needed: count,
                available: pool.len(),
            });
        }
    }
    match_pools(refs, targets, ratio, count)
}

pub(crate) fn match_pools(
    refs: &[NameRecord],
    targets: &[NameRecord],
    ratio: f64,
    count: usize,
) -> Result<Vec<(NameRecord, NameRecord)>> {
    if refs.len() < count || targets.len() < count {
        return Err(Error::InsufficientCandidates {
            group: "pool".into(),
            needed: count,
            available: refs.len().min(targets.len()),
        });
    }
    let shift = ratio.ln();
    let mut order: Vec<&NameRecord> = refs.iter().collect();
    order.sort_by(|a, b| b.log_freq.total_cmp(&a.log_freq).then_with(|| a.first.cmp(&b.first)));

    let mut used = vec![false; targets.len()];
    let mut pairs = Vec::with_capacity(count);
    for r in order.into_iter().take(count) {
        let (best, _) = targets
            .iter()
            .enumerate()
            .filter(|(i, _)| !used[*i])
            .map(|(i, t)| (i, (t.log_freq - r.log_freq - shift).abs()))
            .min_by(|(i, a), (j, b)| {
                a.total_cmp(b)
                    .then_with(|| targets[*i].first.cmp(&targets[*j].first))
            })
            .expect("enough unused targets");
        used[best] = true;
        pairs.push((r.clone(), targets[best].clone()));
    }
    Ok(pairs)
}

/// Geometric-mean frequency ratio of aligned name lists:
/// `exp(mean(log_freq_a - log_freq_b))`.
pub fn verify_ratio(a: &[NameRecord], b: &[NameRecord]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    if a.is_empty() {
        return Err(Error::EmptyInput("name lists"));
    }
    let sum: f64 = a.iter().zip(b).map(|(x, y)| x.log_freq - y.log_freq).sum();
    Ok((sum / a.len() as f64).exp())
}

/// Counts exact, case-sensitive whole-word occurrences of `names` in a plain-text corpus.
/// Words are maximal runs of alphabetic characters.
pub fn count_unigrams<R: Read>(reader: R, names: &[&str]) -> Result<BTreeMap<String, u64>> {
    use std::io::BufRead;
    let mut counts: BTreeMap<String, u64> = names.iter().map(|n| (n.to_string(), 0)).collect();
    let reader = std::io::BufReader::new(reader);
    for line in reader.lines() {
        let line = line.map_err(|e| Error::io("<corpus>", e))?;
        for word in line.split(|c: char| !c.is_alphabetic()) {
            if let Some(c) = counts.get_mut(word) {
                *c += 1;
            }
        }
    }
    Ok(counts)
}
