use std::collections::BTreeSet;

use chrono::{Days, NaiveDate};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use super::TruthSpec;
use crate::cohort::{aggregate, AggregationMode, Concept, RawNote, RecordSet, Sex, Vocabulary};
use crate::error::{Error, Result};
use crate::kgraph::KnowledgeGraph;
use crate::seed;

/// Sample `n_patients` timelines from the truth model.
///
/// Per patient: diseases are drawn independently from their priors (plus the
/// optional confounded cluster), each symptom from the noisy-OR
/// `1 − (1−l_i) ∏_j f_ij^{Y_j}`, and every active concept is then placed on a
/// uniformly chosen note of that patient. Patient `k` uses its own derived
/// stream, so the result is independent of thread count.
pub fn sample_cohort(spec: &TruthSpec, n_patients: usize, seed: u64) -> Result<(Vec<RawNote>, KnowledgeGraph)> {
    spec.validate()?;
    if n_patients == 0 {
        return Err(Error::InvalidSpec("n_patients must be at least 1".into()));
    }
    let width = n_patients.to_string().len().max(6);
    let notes: Vec<Vec<RawNote>> = (0..n_patients)
        .into_par_iter()
        .map(|k| sample_patient(spec, &format!("p{k:0width$}"), &mut seed::rng(seed, "patient", k as u64)))
        .collect();
    Ok((notes.into_iter().flatten().collect(), spec.edge_set()))
}

/// Patient-level records over the spec's full vocabulary (no support filter).
pub fn sample_records(spec: &TruthSpec, n_patients: usize, seed: u64) -> Result<RecordSet> {
    let (notes, _) = sample_cohort(spec, n_patients, seed)?;
    let vocab = Vocabulary::new(spec.diseases.clone(), spec.symptoms.clone())?;
    aggregate(&notes, &vocab, AggregationMode::Patient, crate::cohort::DEFAULT_GAP_DAYS)
}

fn sample_patient<R: Rng>(spec: &TruthSpec, patient_id: &str, rng: &mut R) -> Vec<RawNote> {
    let latent = spec.cluster.as_ref().is_some_and(|c| rng.random_bool(c.rate));
    let mut active: Vec<bool> = spec.priors.iter().map(|&p| rng.random_bool(p)).collect();
    if let (true, Some(c)) = (latent, &spec.cluster) {
        for &j in &c.diseases {
            if rng.random_bool(c.activation) {
                active[j] = true;
            }
        }
    }

    let mut concepts: Vec<Concept> = Vec::new();
    for (j, _) in active.iter().enumerate().filter(|(_, &a)| a) {
        concepts.push(Concept::disease(spec.diseases[j].clone()));
    }
    for i in 0..spec.n_symptoms() {
        let mut off = 1.0 - spec.leaks[i];
        for (j, _) in active.iter().enumerate().filter(|(_, &a)| a) {
            off *= spec.failure[j][i];
        }
        if let (true, Some(c)) = (latent, &spec.cluster) {
            if c.symptoms.contains(&i) {
                off *= 1.0 - c.symptom_activation;
            }
        }
        if rng.random::<f64>() < 1.0 - off {
            concepts.push(Concept::symptom(spec.symptoms[i].clone()));
        }
    }

    let (age0, sex) = match &spec.demographics {
        Some(demo) => {
            let shift: f64 = active.iter().zip(&demo.age_shift).filter(|(a, _)| **a).map(|(_, s)| s).sum::<f64>()
                + if latent { spec.cluster.as_ref().map_or(0.0, |c| c.age_shift) } else { 0.0 };
            let base = Normal::new(demo.age_mean, demo.age_sd).map(|n| n.sample(rng)).unwrap_or(demo.age_mean);
            let age = (base + shift).round().clamp(0.0, 100.0) as u32;
            let logit = demo.female_log_odds
                + active
                    .iter()
                    .zip(&demo.disease_female_log_odds)
                    .filter(|(a, _)| **a)
                    .map(|(_, s)| s)
                    .sum::<f64>();
            let sex = if rng.random_bool(1.0 / (1.0 + (-logit).exp())) {
                Sex::Female
            } else {
                Sex::Male
            };
            let age = (!rng.random_bool(demo.missing_rate)).then_some(age);
            let sex = (!rng.random_bool(demo.missing_rate)).then_some(sex);
            (age, sex)
        }
        None => (None, None),
    };

    let n_notes = rng.random_range(spec.notes_per_patient.0..=spec.notes_per_patient.1) as usize;
    let origin = NaiveDate::from_ymd_opt(2008, 1, 1).expect("valid date");
    let mut offset = rng.random_range(0..=1825u64);
    let mut offsets = Vec::with_capacity(n_notes);
    for k in 0..n_notes {
        if k > 0 {
            offset += u64::from(rng.random_range(spec.gap_days.0..=spec.gap_days.1));
        }
        offsets.push(offset);
    }
    let mut buckets: Vec<BTreeSet<Concept>> = vec![BTreeSet::new(); n_notes];
    for c in concepts {
        buckets[rng.random_range(0..n_notes)].insert(c);
    }
    offsets
        .iter()
        .zip(buckets)
        .map(|(&off, concepts)| RawNote {
            patient_id: patient_id.to_string(),
            timestamp: origin + Days::new(off),
            concepts,
            age_years: age0.map(|a| a + ((off - offsets[0]) / 365) as u32),
            sex,
        })
        .collect()
}
