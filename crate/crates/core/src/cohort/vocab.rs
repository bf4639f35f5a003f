use std::collections::BTreeMap;

use super::{ConceptKind, RawNote, Vocabulary};
use crate::error::{Error, Result};

/// Symptoms excluded from every vocabulary unless the caller overrides the list.
pub const DEFAULT_EXCLUDED_SYMPTOMS: &[&str] = &["pain"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SupportConfig {
    pub min_disease_count: usize,
    pub min_symptom_count: usize,
    pub excluded_symptoms: Vec<String>,
}

impl Default for SupportConfig {
    fn default() -> Self {
        SupportConfig {
            min_disease_count: 100,
            min_symptom_count: 10,
            excluded_symptoms: DEFAULT_EXCLUDED_SYMPTOMS.iter().map(|s| s.to_string()).collect(),
        }
    }
}

/// Keep concepts mentioned in at least the configured number of notes.
///
/// Counts are per raw note, before any aggregation. Both lists come back in
/// lexicographic order.
pub fn filter_support(notes: &[RawNote], config: &SupportConfig) -> Result<Vocabulary> {
    let mut diseases: BTreeMap<&str, usize> = BTreeMap::new();
    let mut symptoms: BTreeMap<&str, usize> = BTreeMap::new();
    for note in notes {
        for c in &note.concepts {
            let counts = match c.kind {
                ConceptKind::Disease => &mut diseases,
                ConceptKind::Symptom => &mut symptoms,
            };
            *counts.entry(c.name.as_str()).or_default() += 1;
        }
    }
    let keep_d: Vec<String> = diseases
        .into_iter()
        .filter(|&(_, n)| n >= config.min_disease_count)
        .map(|(name, _)| name.to_string())
        .collect();
    let keep_s: Vec<String> = symptoms
        .into_iter()
        .filter(|&(name, n)| n >= config.min_symptom_count && !config.excluded_symptoms.iter().any(|x| x == name))
        .map(|(name, _)| name.to_string())
        .collect();
    if keep_d.is_empty() && keep_s.is_empty() {
        return Err(Error::EmptyVocabulary);
    }
    Vocabulary::new(keep_d, keep_s)
}
