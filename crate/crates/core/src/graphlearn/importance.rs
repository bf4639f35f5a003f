//! Importance metrics δ_ij for each learner family.

use rayon::prelude::*;

use super::{LearnConfig, ScoreMatrix};
use crate::cohort::{attach_demographics, DemoEncoding, FeatureBlock, RecordSet};
use crate::error::Result;
use crate::estimators::{grid_search_cv, Design, Family, ProbabilityModel};
use crate::graphlearn::noisy_or::NoisyOrParams;
use crate::seed;

/// Floor for log-probabilities in the naive Bayes metric, so empty cells stay finite.
pub const NB_LOG_FLOOR: f64 = -30.0;

/// `max(0, b_ij)` from a cross-validated logistic regression of each disease
/// on all symptoms (plus demographic columns under `encoding`).
pub fn importance_lr(records: &RecordSet, encoding: DemoEncoding, config: &LearnConfig) -> Result<ScoreMatrix> {
    let vocab = records.vocabulary();
    let x = attach_demographics(records, FeatureBlock::Symptoms, encoding);
    let design = Design::from_matrix(&x);
    let grid = config.grid(Family::Logistic);
    let n_symptoms = vocab.n_symptoms();
    let weights: Vec<Vec<f64>> = (0..vocab.n_diseases())
        .into_par_iter()
        .map(|j| {
            let labels: Vec<bool> = records.records().iter().map(|r| r.has_disease(j)).collect();
            if !foldable(&labels, config.folds) {
                log::warn!(
                    "disease {:?} has too few positives or negatives for {}-fold search; scored 0",
                    vocab.diseases()[j],
                    config.folds
                );
                return Ok(vec![0.0; n_symptoms]);
            }
            let cv = grid_search_cv(&design, &labels, &grid, config.folds, seed::derive(config.seed, "lr", j as u64))?;
            match cv.model {
                crate::estimators::Model::Logistic(m) => Ok(m.weights[..n_symptoms].to_vec()),
                _ => unreachable!("logistic grid yields logistic models"),
            }
        })
        .collect::<Result<_>>()?;
    let values = weights.iter().map(|row| row.iter().map(|&b| b.max(0.0)).collect()).collect();
    ScoreMatrix::new(vocab.clone(), "lr", values, None)
}

/// `log P(X_i=1 | Y_j=1) − log P(X_i=1 | Y_j=0)` from smoothed pair counts.
/// Raw values keep their sign; the exported matrix floors them at 0.
pub fn importance_nb(records: &RecordSet, alpha: f64) -> Result<ScoreMatrix> {
    let vocab = records.vocabulary();
    let (d, s) = (vocab.n_diseases(), vocab.n_symptoms());
    let n = records.len() as f64;
    let mut disease_count = vec![0.0; d];
    let mut symptom_count = vec![0.0; s];
    let mut joint = vec![vec![0.0; s]; d];
    for r in records.records() {
        for &i in &r.symptoms {
            symptom_count[i as usize] += 1.0;
        }
        for &j in &r.diseases {
            disease_count[j as usize] += 1.0;
            for &i in &r.symptoms {
                joint[j as usize][i as usize] += 1.0;
            }
        }
    }
    let log_floor = |p: f64| if p > 0.0 { p.ln().max(NB_LOG_FLOOR) } else { NB_LOG_FLOOR };
    let mut raw = vec![vec![0.0; s]; d];
    for j in 0..d {
        let (with, without) = (disease_count[j] + 2.0 * alpha, n - disease_count[j] + 2.0 * alpha);
        if with <= 0.0 || without <= 0.0 {
            log::warn!("disease {:?} is never or always observed; scored 0", vocab.diseases()[j]);
            continue;
        }
        for i in 0..s {
            let p1 = (joint[j][i] + alpha) / with;
            let p0 = (symptom_count[i] - joint[j][i] + alpha) / without;
            raw[j][i] = log_floor(p1) - log_floor(p0);
        }
    }
    let values = raw.iter().map(|row| row.iter().map(|&v: &f64| v.max(0.0)).collect()).collect();
    ScoreMatrix::new(vocab.clone(), "nb", values, Some(raw))
}

/// `1 − f_ij`; demographic parents are dropped.
pub fn importance_noisy_or(records: &RecordSet, params: &NoisyOrParams) -> Result<ScoreMatrix> {
    let values = params.failure.iter().map(|row| row.iter().map(|f| 1.0 - f).collect()).collect();
    ScoreMatrix::new(records.vocabulary().clone(), "nor", values, None)
}

/// Ratio of the average predicted symptom probability with disease `j` forced
/// on to the same average with it forced off, over the rows of `design`
/// (`counts[p]` rows share pattern `p`). The denominator is floored at `epsilon`.
pub fn intervention_ratio<M: ProbabilityModel + ?Sized>(model: &M, design: &Design, counts: &[f64], j: u32, epsilon: f64) -> f64 {
    let (mut on, mut off, mut n) = (0.0, 0.0, 0.0);
    let mut row = Vec::new();
    for (p, &count) in counts.iter().enumerate() {
        if count == 0.0 {
            continue;
        }
        let pattern = design.pattern(p);
        let at = pattern.partition_point(|e| e.0 < j);
        let has = pattern.get(at).is_some_and(|e| e.0 == j);
        row.clear();
        row.extend_from_slice(pattern);
        if !has {
            row.insert(at, (j, 1.0));
        }
        on += count * model.predict_row(&row);
        row.remove(at);
        off += count * model.predict_row(&row);
        n += count;
    }
    (on / n) / (off / n).max(epsilon)
}

/// Do-operator importance: per symptom, fit `P(X_i | diseases[, demo])` with
/// the family's grid, then compare forced-on and forced-off interventions on
/// each disease. Raw ratios are kept; the export is `max(0, ratio − 1)`.
pub fn importance_causal(records: &RecordSet, family: Family, demo: bool, config: &LearnConfig) -> Result<ScoreMatrix> {
    let vocab = records.vocabulary();
    let encoding = match (demo, family) {
        (false, _) => DemoEncoding::None,
        (true, Family::Logistic) => DemoEncoding::Continuous,
        (true, _) => DemoEncoding::Bracket,
    };
    let x = attach_demographics(records, FeatureBlock::Diseases, encoding);
    let design = Design::from_matrix(&x);
    let mut counts = vec![0.0; design.n_patterns()];
    for r in 0..design.n_rows() {
        counts[design.row_pattern(r)] += 1.0;
    }
    let grid = config.grid(family);
    let d = vocab.n_diseases();
    let tag = match family {
        Family::Logistic => "causal_lr",
        Family::RandomForest => "causal_rf",
        Family::NaiveBayes => "causal_nb",
    };
    // columns are per symptom here; transpose afterwards
    let columns: Vec<Vec<f64>> = (0..vocab.n_symptoms())
        .into_par_iter()
        .map(|i| {
            let labels: Vec<bool> = records.records().iter().map(|r| r.has_symptom(i)).collect();
            if !foldable(&labels, config.folds) {
                log::warn!(
                    "symptom {:?} has too few positives or negatives for {}-fold search; scored 0",
                    vocab.symptoms()[i],
                    config.folds
                );
                return Ok(vec![1.0; d]);
            }
            let cv = grid_search_cv(&design, &labels, &grid, config.folds, seed::derive(config.seed, tag, i as u64))?;
            Ok((0..d)
                .map(|j| intervention_ratio(&cv.model, &design, &counts, j as u32, config.epsilon))
                .collect())
        })
        .collect::<Result<_>>()?;
    let raw: Vec<Vec<f64>> = (0..d).map(|j| columns.iter().map(|col| col[j]).collect()).collect();
    let values = raw.iter().map(|row| row.iter().map(|&r| (r - 1.0).max(0.0)).collect()).collect();
    ScoreMatrix::new(vocab.clone(), tag, values, Some(raw))
}

fn foldable(labels: &[bool], k: usize) -> bool {
    let pos = labels.iter().filter(|&&l| l).count();
    pos >= k.max(3) && labels.len() - pos >= k
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::cohort::{Record, Vocabulary};
    use crate::estimators::{LinearModel, Penalty};

    fn random_records(seed: u64, n: usize, d: usize, s: usize) -> RecordSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let vocab = Vocabulary::new((0..d).map(|j| format!("d{j}")).collect(), (0..s).map(|i| format!("s{i}")).collect()).unwrap();
        let records = (0..n)
            .map(|k| Record {
                patient_id: format!("p{k}"),
                symptoms: (0..s as u32).filter(|_| rng.random_bool(0.3)).collect(),
                diseases: (0..d as u32).filter(|_| rng.random_bool(0.2)).collect(),
                age_years: None,
                sex: None,
                source_note_count: 1,
            })
            .collect();
        RecordSet::new(vocab, records).unwrap()
    }

    #[test]
    fn nb_matches_recount() {
        let rs = random_records(1, 300, 4, 6);
        for alpha in [0.0, 1.0] {
            let scores = importance_nb(&rs, alpha).unwrap();
            let raw = scores.raw().unwrap();
            for (j, row) in raw.iter().enumerate() {
                for (i, &got) in row.iter().enumerate() {
                    let with: Vec<_> = rs.records().iter().filter(|r| r.has_disease(j)).collect();
                    let without: Vec<_> = rs.records().iter().filter(|r| !r.has_disease(j)).collect();
                    let p1 = (with.iter().filter(|r| r.has_symptom(i)).count() as f64 + alpha) / (with.len() as f64 + 2.0 * alpha);
                    let p0 = (without.iter().filter(|r| r.has_symptom(i)).count() as f64 + alpha) / (without.len() as f64 + 2.0 * alpha);
                    let expected = p1.ln().max(NB_LOG_FLOOR) - p0.ln().max(NB_LOG_FLOOR);
                    assert!((got - expected).abs() < 1e-12);
                    assert_eq!(scores.values()[j][i], expected.max(0.0));
                }
            }
        }
    }

    #[test]
    fn nb_ln3_and_equal_frequencies() {
        let vocab = Vocabulary::new(vec!["d".into()], vec!["a".into(), "b".into()]).unwrap();
        let spec = [
            (true, true),
            (true, true),
            (true, true),
            (true, false),
            (false, true),
            (false, false),
            (false, false),
            (false, false),
        ];
        let records = spec
            .iter()
            .enumerate()
            .map(|(k, &(y, x))| Record {
                patient_id: format!("p{k}"),
                symptoms: if x { vec![0, 1] } else { vec![1] },
                diseases: if y { vec![0] } else { vec![] },
                age_years: None,
                sex: None,
                source_note_count: 1,
            })
            .collect();
        let rs = RecordSet::new(vocab, records).unwrap();
        let scores = importance_nb(&rs, 0.0).unwrap();
        assert!((scores.values()[0][0] - 3f64.ln()).abs() < 1e-12);
        assert_eq!(scores.values()[0][1], 0.0);
    }

    #[test]
    fn zero_weight_predictor_has_unit_ratio() {
        let rs = random_records(2, 200, 3, 2);
        let x = attach_demographics(&rs, FeatureBlock::Diseases, DemoEncoding::None);
        let design = Design::from_matrix(&x);
        let mut counts = vec![0.0; design.n_patterns()];
        for r in 0..design.n_rows() {
            counts[design.row_pattern(r)] += 1.0;
        }
        let model = LinearModel::from_parts(vec![0.7, 0.0, -1.3], -0.4, Penalty::L2, 1.0);
        assert_eq!(intervention_ratio(&model, &design, &counts, 1, 1e-6), 1.0);
        assert!(intervention_ratio(&model, &design, &counts, 0, 1e-6) > 1.0);
        assert!(intervention_ratio(&model, &design, &counts, 2, 1e-6) < 1.0);
    }
}
