//! Concept-level clinical notes and the record sets built from them.
//!
//! Notes arrive already tokenized into typed concepts (`d:` diseases,
//! `s:` symptoms). A [`Vocabulary`] is fixed by support counts over raw
//! notes, and notes are then merged into binary records at one of three
//! granularities (single note, 30-day episode, whole patient).

mod aggregate;
mod demographics;
mod episodes;
mod records;
mod vocab;

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use rand::seq::index::sample;

use crate::error::{Error, Result};

pub use aggregate::aggregate;
pub use demographics::{age_bracket, attach_demographics, DemoEncoding, FeatureBlock, FeatureMatrix, AGE_BRACKETS};
pub use episodes::{segment_episodes, DEFAULT_GAP_DAYS};
pub use records::{format_records, parse_records, read_records_file};
pub use vocab::{filter_support, SupportConfig, DEFAULT_EXCLUDED_SYMPTOMS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Sex {
    Female,
    Male,
}

impl Sex {
    pub fn token(self) -> &'static str {
        match self {
            Sex::Female => "F",
            Sex::Male => "M",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ConceptKind {
    Disease,
    Symptom,
}

impl ConceptKind {
    pub fn prefix(self) -> &'static str {
        match self {
            ConceptKind::Disease => "d:",
            ConceptKind::Symptom => "s:",
        }
    }
}

/// A typed concept token such as `d:pneumonia`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Concept {
    pub kind: ConceptKind,
    pub name: String,
}

impl Concept {
    pub fn disease(name: impl Into<String>) -> Self {
        Concept {
            kind: ConceptKind::Disease,
            name: name.into(),
        }
    }

    pub fn symptom(name: impl Into<String>) -> Self {
        Concept {
            kind: ConceptKind::Symptom,
            name: name.into(),
        }
    }
}

impl fmt::Display for Concept {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.kind.prefix(), self.name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawNote {
    pub patient_id: String,
    pub timestamp: NaiveDate,
    pub concepts: BTreeSet<Concept>,
    pub age_years: Option<u32>,
    pub sex: Option<Sex>,
}

/// Ordered disease and symptom identifiers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    diseases: Vec<String>,
    symptoms: Vec<String>,
    disease_index: HashMap<String, usize>,
    symptom_index: HashMap<String, usize>,
}

impl Vocabulary {
    /// Fails when an identifier repeats within or across the two lists.
    pub fn new(diseases: Vec<String>, symptoms: Vec<String>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for name in diseases.iter().chain(symptoms.iter()) {
            if !seen.insert(name.as_str()) {
                return Err(Error::InvalidSpec(format!("duplicate vocabulary identifier {name:?}")));
            }
        }
        let disease_index = diseases.iter().enumerate().map(|(i, d)| (d.clone(), i)).collect();
        let symptom_index = symptoms.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect();
        Ok(Vocabulary {
            diseases,
            symptoms,
            disease_index,
            symptom_index,
        })
    }

    pub fn diseases(&self) -> &[String] {
        &self.diseases
    }

    pub fn symptoms(&self) -> &[String] {
        &self.symptoms
    }

    pub fn n_diseases(&self) -> usize {
        self.diseases.len()
    }

    pub fn n_symptoms(&self) -> usize {
        self.symptoms.len()
    }

    pub fn disease_index(&self, name: &str) -> Option<usize> {
        self.disease_index.get(name).copied()
    }

    pub fn symptom_index(&self, name: &str) -> Option<usize> {
        self.symptom_index.get(name).copied()
    }

    /// Vocabulary file text: one `d:`/`s:` token per line.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for d in &self.diseases {
            out.push_str("d:");
            out.push_str(d);
            out.push('\n');
        }
        for s in &self.symptoms {
            out.push_str("s:");
            out.push_str(s);
            out.push('\n');
        }
        out
    }
}

/// One binary instance. `symptoms`/`diseases` hold the indices of set bits,
/// sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Record {
    pub patient_id: String,
    pub symptoms: Vec<u32>,
    pub diseases: Vec<u32>,
    pub age_years: Option<u32>,
    pub sex: Option<Sex>,
    pub source_note_count: u32,
}

impl Record {
    pub fn has_symptom(&self, i: usize) -> bool {
        self.symptoms.binary_search(&(i as u32)).is_ok()
    }

    pub fn has_disease(&self, j: usize) -> bool {
        self.diseases.binary_search(&(j as u32)).is_ok()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecordSet {
    vocabulary: Vocabulary,
    records: Vec<Record>,
}

impl RecordSet {
    pub fn new(vocabulary: Vocabulary, records: Vec<Record>) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::EmptyCohort);
        }
        let (d, s) = (vocabulary.n_diseases() as u32, vocabulary.n_symptoms() as u32);
        for r in &records {
            if r.source_note_count == 0 {
                return Err(Error::InvalidSpec(format!("record for {} has no source note", r.patient_id)));
            }
            let sorted = |v: &[u32], bound: u32| v.windows(2).all(|w| w[0] < w[1]) && v.iter().all(|&x| x < bound);
            if !sorted(&r.diseases, d) || !sorted(&r.symptoms, s) {
                return Err(Error::InvalidSpec(format!("record for {} indexes outside the vocabulary", r.patient_id)));
            }
        }
        Ok(RecordSet { vocabulary, records })
    }

    pub fn vocabulary(&self) -> &Vocabulary {
        &self.vocabulary
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn has_demographics(&self) -> bool {
        self.records.iter().any(|r| r.age_years.is_some() || r.sex.is_some())
    }

    /// Records at the given positions, in that order.
    pub fn select(&self, indices: &[usize]) -> Result<RecordSet> {
        let records = indices.iter().map(|&i| self.records[i].clone()).collect();
        RecordSet::new(self.vocabulary.clone(), records)
    }

    /// A uniformly random subset of `round(fraction * N)` records (at least one),
    /// kept in original order.
    pub fn subsample(&self, fraction: f64, seed: u64) -> Result<RecordSet> {
        let n = self.records.len();
        let k = ((fraction.clamp(0.0, 1.0) * n as f64).round() as usize).clamp(1, n);
        let mut rng = crate::seed::rng(seed, "subsample", 0);
        let mut picked = sample(&mut rng, n, k).into_vec();
        picked.sort_unstable();
        self.select(&picked)
    }
}

/// Granularity at which notes become records.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AggregationMode {
    Single,
    Episode,
    Patient,
}

impl AggregationMode {
    pub const ALL: [AggregationMode; 3] = [AggregationMode::Single, AggregationMode::Episode, AggregationMode::Patient];

    pub fn as_str(self) -> &'static str {
        match self {
            AggregationMode::Single => "single",
            AggregationMode::Episode => "episode",
            AggregationMode::Patient => "patient",
        }
    }
}

impl FromStr for AggregationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "single" => Ok(AggregationMode::Single),
            "episode" => Ok(AggregationMode::Episode),
            "patient" => Ok(AggregationMode::Patient),
            other => Err(Error::UnknownVariant {
                kind: "aggregation mode",
                value: other.to_string(),
            }),
        }
    }
}

impl fmt::Display for AggregationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vocabulary_rejects_duplicates_across_lists() {
        let err = Vocabulary::new(vec!["flu".into()], vec!["flu".into()]);
        assert!(err.is_err());
        let v = Vocabulary::new(vec!["flu".into()], vec!["cough".into()]).unwrap();
        assert_eq!(v.symptom_index("cough"), Some(0));
        assert_eq!(v.to_tsv(), "d:flu\ns:cough\n");
    }

    #[test]
    fn unknown_mode_is_an_error() {
        assert!("weekly".parse::<AggregationMode>().is_err());
        assert_eq!("episode".parse::<AggregationMode>().unwrap(), AggregationMode::Episode);
    }

    #[test]
    fn record_set_checks_bounds() {
        let v = Vocabulary::new(vec!["flu".into()], vec!["cough".into()]).unwrap();
        let rec = Record {
            patient_id: "p".into(),
            symptoms: vec![1],
            diseases: vec![],
            age_years: None,
            sex: None,
            source_note_count: 1,
        };
        assert!(RecordSet::new(v.clone(), vec![rec]).is_err());
        assert!(matches!(RecordSet::new(v, vec![]), Err(Error::EmptyCohort)));
    }
}
