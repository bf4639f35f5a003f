//! Noisy-OR maximum likelihood by expectation-maximization.
//!
//! Each symptom is fitted independently given its parents. The latent
//! variables are the per-parent activations `z_j ~ Bern(1 − f_j)` and the leak
//! `z_0 ~ Bern(l)`; the symptom is their OR. For a record with the symptom
//! present, `E[z_j] = (1 − f_j) / P(x = 1)` and `E[z_0] = l / P(x = 1)`; with it
//! absent every activation is 0.

use rand::Rng;
use rayon::prelude::*;

use crate::cohort::{attach_demographics, DemoEncoding, FeatureBlock, RecordSet};
use crate::estimators::Design;
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoisyOrConfig {
    /// Stop when the log-likelihood gain per record falls below this.
    pub tolerance: f64,
    pub max_iter: usize,
}

impl Default for NoisyOrConfig {
    fn default() -> Self {
        NoisyOrConfig {
            tolerance: 1e-6,
            max_iter: 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoisyOrParams {
    /// `leak[i]`, one per symptom.
    pub leak: Vec<f64>,
    /// `failure[j][i]` for disease j and symptom i.
    pub failure: Vec<Vec<f64>>,
    /// Names of the extra demographic parents (empty without demographics).
    pub demo_parents: Vec<String>,
    /// `demo_failure[k][i]` for demographic parent k.
    pub demo_failure: Vec<Vec<f64>>,
    /// Final training log-likelihood summed over symptoms.
    pub log_likelihood: f64,
    /// Largest number of EM iterations used by any symptom.
    pub iterations: usize,
    pub converged: bool,
    /// Per-symptom log-likelihood after initialization and after each iteration.
    pub traces: Vec<Vec<f64>>,
}

struct SymptomFit {
    leak: f64,
    failure: Vec<f64>,
    trace: Vec<f64>,
    converged: bool,
}

/// Fits one noisy-OR per symptom. With `demo` set, age-bracket and sex
/// indicators join the diseases as always-eligible parents.
pub fn fit_noisy_or(records: &RecordSet, demo: bool, config: &NoisyOrConfig, seed: u64) -> NoisyOrParams {
    let encoding = if demo { DemoEncoding::Bracket } else { DemoEncoding::None };
    let parents = attach_demographics(records, FeatureBlock::Diseases, encoding);
    let design = Design::from_matrix(&parents);
    let n_parents = parents.n_columns();
    let n_diseases = records.vocabulary().n_diseases();
    let n_symptoms = records.vocabulary().n_symptoms();

    let patterns: Vec<Vec<usize>> = design.patterns().iter().map(|row| row.iter().map(|e| e.0 as usize).collect()).collect();
    let mut totals = vec![0.0; design.n_patterns()];
    let mut present = vec![vec![0.0; design.n_patterns()]; n_symptoms];
    for (r, record) in records.records().iter().enumerate() {
        let p = design.row_pattern(r);
        totals[p] += 1.0;
        for &i in &record.symptoms {
            present[i as usize][p] += 1.0;
        }
    }
    let n = records.len() as f64;
    let mut parent_counts = vec![0.0; n_parents];
    for (p, parents) in patterns.iter().enumerate() {
        for &j in parents {
            parent_counts[j] += totals[p];
        }
    }

    let fits: Vec<SymptomFit> = (0..n_symptoms)
        .into_par_iter()
        .map(|i| {
            let symptom = &records.vocabulary().symptoms()[i];
            // keyed by names so relabeling diseases leaves the fit unchanged
            let failure: Vec<f64> = parents
                .columns
                .iter()
                .map(|parent| {
                    let mut rng = seed::rng(seed, "nor-init", seed::fnv1a(&format!("{parent}\t{symptom}")));
                    0.9 * rng.random_range(0.95..1.05)
                })
                .collect();
            let marginal = present[i].iter().sum::<f64>() / n;
            fit_symptom(&patterns, &totals, &present[i], &parent_counts, n, 0.5 * marginal, failure, config)
        })
        .collect();

    let mut failure = vec![vec![0.0; n_symptoms]; n_diseases];
    let mut demo_failure = vec![vec![0.0; n_symptoms]; n_parents - n_diseases];
    for (i, fit) in fits.iter().enumerate() {
        for (j, &f) in fit.failure.iter().enumerate() {
            if j < n_diseases {
                failure[j][i] = f;
            } else {
                demo_failure[j - n_diseases][i] = f;
            }
        }
    }
    NoisyOrParams {
        leak: fits.iter().map(|f| f.leak).collect(),
        failure,
        demo_parents: parents.columns[n_diseases..].to_vec(),
        demo_failure,
        log_likelihood: fits.iter().map(|f| *f.trace.last().expect("trace starts non-empty")).sum(),
        iterations: fits.iter().map(|f| f.trace.len() - 1).max().unwrap_or(0),
        converged: fits.iter().all(|f| f.converged),
        traces: fits.into_iter().map(|f| f.trace).collect(),
    }
}

fn activation(leak: f64, failure: &[f64], parents: &[usize]) -> f64 {
    1.0 - (1.0 - leak) * parents.iter().map(|&j| failure[j]).product::<f64>()
}

fn log_likelihood(patterns: &[Vec<usize>], totals: &[f64], present: &[f64], leak: f64, failure: &[f64]) -> f64 {
    patterns
        .iter()
        .enumerate()
        .map(|(p, parents)| {
            let on = activation(leak, failure, parents);
            let (x1, x0) = (present[p], totals[p] - present[p]);
            let mut ll = 0.0;
            if x1 > 0.0 {
                ll += x1 * on.ln();
            }
            if x0 > 0.0 {
                ll += x0 * (1.0 - on).ln();
            }
            ll
        })
        .sum()
}

#[allow(clippy::too_many_arguments)]
fn fit_symptom(
    patterns: &[Vec<usize>],
    totals: &[f64],
    present: &[f64],
    parent_counts: &[f64],
    n: f64,
    mut leak: f64,
    mut failure: Vec<f64>,
    config: &NoisyOrConfig,
) -> SymptomFit {
    for (f, &count) in failure.iter_mut().zip(parent_counts) {
        if count == 0.0 {
            *f = 1.0;
        }
    }
    let mut trace = vec![log_likelihood(patterns, totals, present, leak, &failure)];
    let mut converged = false;
    let mut activations = vec![0.0; failure.len()];
    for _ in 0..config.max_iter {
        let mut leak_mass = 0.0;
        activations.iter_mut().for_each(|a| *a = 0.0);
        for (p, parents) in patterns.iter().enumerate() {
            let x1 = present[p];
            if x1 == 0.0 {
                continue;
            }
            let on = activation(leak, &failure, parents);
            if on <= 0.0 {
                continue;
            }
            let scale = x1 / on;
            leak_mass += scale * leak;
            for &j in parents {
                activations[j] += scale * (1.0 - failure[j]);
            }
        }
        leak = (leak_mass / n).clamp(0.0, 1.0);
        for j in 0..failure.len() {
            if parent_counts[j] > 0.0 {
                failure[j] = (1.0 - activations[j] / parent_counts[j]).clamp(0.0, 1.0);
            }
        }
        let ll = log_likelihood(patterns, totals, present, leak, &failure);
        let gain = ll - trace.last().expect("non-empty");
        trace.push(ll);
        if gain.abs() / n < config.tolerance {
            converged = true;
            break;
        }
    }
    SymptomFit {
        leak,
        failure,
        trace,
        converged,
    }
}
