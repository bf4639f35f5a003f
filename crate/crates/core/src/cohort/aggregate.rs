use std::collections::{BTreeMap, BTreeSet};

use super::{segment_episodes, AggregationMode, ConceptKind, RawNote, Record, RecordSet, Vocabulary};
use crate::error::Result;

/// Merge notes into binary records at the requested granularity.
///
/// Patients are emitted in `patient_id` order and each patient's notes in date
/// order. A record's bits are the union of its member notes' in-vocabulary
/// concepts. Age is taken from the earliest member note that reports one, sex
/// from the earliest member note that reports it.
pub fn aggregate(notes: &[RawNote], vocabulary: &Vocabulary, mode: AggregationMode, gap_days: i64) -> Result<RecordSet> {
    let mut by_patient: BTreeMap<&str, Vec<&RawNote>> = BTreeMap::new();
    for note in notes {
        by_patient.entry(note.patient_id.as_str()).or_default().push(note);
    }
    let mut records = Vec::new();
    for (_, mut timeline) in by_patient {
        timeline.sort_by_key(|n| n.timestamp);
        match mode {
            AggregationMode::Single => records.extend(timeline.iter().map(|n| merge(std::slice::from_ref(n), vocabulary))),
            AggregationMode::Episode => {
                records.extend(segment_episodes(timeline, gap_days).iter().map(|e| merge(e, vocabulary)));
            }
            AggregationMode::Patient => records.push(merge(&timeline, vocabulary)),
        }
    }
    RecordSet::new(vocabulary.clone(), records)
}

fn merge(members: &[&RawNote], vocabulary: &Vocabulary) -> Record {
    let mut symptoms = BTreeSet::new();
    let mut diseases = BTreeSet::new();
    for note in members {
        for c in &note.concepts {
            match c.kind {
                ConceptKind::Disease => {
                    if let Some(j) = vocabulary.disease_index(&c.name) {
                        diseases.insert(j as u32);
                    }
                }
                ConceptKind::Symptom => {
                    if let Some(i) = vocabulary.symptom_index(&c.name) {
                        symptoms.insert(i as u32);
                    }
                }
            }
        }
    }
    Record {
        patient_id: members[0].patient_id.clone(),
        symptoms: symptoms.into_iter().collect(),
        diseases: diseases.into_iter().collect(),
        age_years: members.iter().find_map(|n| n.age_years),
        sex: members.iter().find_map(|n| n.sex),
        source_note_count: members.len() as u32,
    }
}
