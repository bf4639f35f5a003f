//! Stratified k-fold grid search scored by held-out AUROC.

use std::cmp::Ordering;
use std::fmt;

use rand::seq::SliceRandom;
use rayon::prelude::*;

use super::{
    auroc_weighted, fit_logistic, fit_naive_bayes, fit_random_forest, Design, ForestParams, LogisticParams, Model, Penalty, ProbabilityModel, TrainSet,
};
use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Family {
    Logistic,
    RandomForest,
    NaiveBayes,
}

impl Family {
    pub fn as_str(self) -> &'static str {
        match self {
            Family::Logistic => "logistic",
            Family::RandomForest => "random_forest",
            Family::NaiveBayes => "naive_bayes",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ModelParams {
    Logistic(LogisticParams),
    Forest(ForestParams),
    NaiveBayes { alpha: f64 },
}

impl ModelParams {
    pub fn family(&self) -> Family {
        match self {
            ModelParams::Logistic(_) => Family::Logistic,
            ModelParams::Forest(_) => Family::RandomForest,
            ModelParams::NaiveBayes { .. } => Family::NaiveBayes,
        }
    }

    /// Sort key where smaller means simpler: weaker regularization strength
    /// C (L1 before L2), shallower trees with larger leaves, heavier smoothing.
    fn complexity(&self) -> (f64, f64) {
        match self {
            ModelParams::Logistic(p) => (p.c, if p.penalty == Penalty::L1 { 0.0 } else { 1.0 }),
            ModelParams::Forest(p) => (p.max_depth as f64, -(p.min_samples_leaf as f64)),
            ModelParams::NaiveBayes { alpha } => (-alpha, 0.0),
        }
    }

    pub fn fit(&self, data: &TrainSet<'_>, seed: u64) -> Result<Model> {
        Ok(match self {
            ModelParams::Logistic(p) => Model::Logistic(fit_logistic(data, p)?),
            ModelParams::Forest(p) => Model::Forest(fit_random_forest(data, p, seed)?),
            ModelParams::NaiveBayes { alpha } => Model::NaiveBayes(fit_naive_bayes(data, *alpha)),
        })
    }
}

impl fmt::Display for ModelParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelParams::Logistic(p) => write!(f, "logistic(penalty={}, C={})", p.penalty.as_str(), p.c),
            ModelParams::Forest(p) => write!(
                f,
                "forest(max_depth={}, min_samples_leaf={}, n_trees={})",
                p.max_depth, p.min_samples_leaf, p.n_trees
            ),
            ModelParams::NaiveBayes { alpha } => write!(f, "naive_bayes(alpha={alpha})"),
        }
    }
}

/// An ordered list of candidate settings.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub cells: Vec<ModelParams>,
}

impl Grid {
    pub fn single(params: ModelParams) -> Self {
        Grid { cells: vec![params] }
    }

    /// The default search space of a family. Logistic: {L1, L2} × 10 values of
    /// C log-spaced over [0.001, 10], penalty-major. Forest: 8 depths over
    /// [2, 1024] × 8 minimum leaf sizes over [10, 200], depth-major. Naive
    /// Bayes: α = 1 only.
    pub fn standard(family: Family, n_trees: usize) -> Self {
        let cells = match family {
            Family::Logistic => [Penalty::L1, Penalty::L2]
                .into_iter()
                .flat_map(|penalty| {
                    logspace(1e-3, 10.0, 10).into_iter().map(move |c| {
                        ModelParams::Logistic(LogisticParams {
                            penalty,
                            c,
                            ..LogisticParams::default()
                        })
                    })
                })
                .collect(),
            Family::RandomForest => logspace_int(2, 1024, 8)
                .into_iter()
                .flat_map(|max_depth| {
                    logspace_int(10, 200, 8).into_iter().map(move |min_samples_leaf| {
                        ModelParams::Forest(ForestParams {
                            max_depth: max_depth as usize,
                            min_samples_leaf: min_samples_leaf as usize,
                            n_trees,
                        })
                    })
                })
                .collect(),
            Family::NaiveBayes => vec![ModelParams::NaiveBayes { alpha: 1.0 }],
        };
        Grid { cells }
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn describe(&self) -> Vec<String> {
        self.cells.iter().map(ToString::to_string).collect()
    }
}

/// `n` values log-spaced over `[lo, hi]`, endpoints exact.
pub fn logspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let (a, b) = (lo.log10(), hi.log10());
            (0..n)
                .map(|k| match k {
                    0 => lo,
                    k if k == n - 1 => hi,
                    k => 10f64.powf(a + (b - a) * k as f64 / (n - 1) as f64),
                })
                .collect()
        }
    }
}

/// [`logspace`] rounded to the nearest integer.
pub fn logspace_int(lo: u64, hi: u64, n: usize) -> Vec<u64> {
    logspace(lo as f64, hi as f64, n).into_iter().map(|v| v.round() as u64).collect()
}

/// Splits row indices into `k` validation folds, each class shuffled and dealt
/// round-robin so every fold gets both labels.
pub fn stratified_folds(labels: &[bool], k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    let mut positives: Vec<usize> = (0..labels.len()).filter(|&r| labels[r]).collect();
    let mut negatives: Vec<usize> = (0..labels.len()).filter(|&r| !labels[r]).collect();
    if k < 2 || positives.len() < k || negatives.len() < k {
        return Err(Error::TooFewForFolds {
            folds: k,
            needed: k.max(2),
            positives: positives.len(),
            negatives: negatives.len(),
        });
    }
    let mut rng = seed::rng(seed, "cv", 0);
    positives.shuffle(&mut rng);
    negatives.shuffle(&mut rng);
    let mut folds = vec![Vec::new(); k];
    for (slot, &row) in positives.iter().chain(&negatives).enumerate() {
        folds[slot % k].push(row);
    }
    for fold in &mut folds {
        fold.sort_unstable();
    }
    Ok(folds)
}

#[derive(Debug, Clone)]
pub struct CvResult {
    pub best_index: usize,
    pub best: ModelParams,
    /// Held-out AUROC of the best cell, one per fold.
    pub fold_scores: Vec<f64>,
    pub mean_auroc: f64,
    /// Mean held-out AUROC for every cell in grid order.
    pub cell_means: Vec<f64>,
    /// The best cell refit on every row.
    pub model: Model,
}

/// Runs every grid cell on every fold (cells in parallel), keeps the best mean
/// AUROC with ties going to the simpler model and then the earlier cell, and
/// refits the winner on all rows.
pub fn grid_search_cv(design: &Design, labels: &[bool], grid: &Grid, k: usize, seed: u64) -> Result<CvResult> {
    if grid.is_empty() {
        return Err(Error::Unsupported("empty hyperparameter grid".into()));
    }
    if labels.len() != design.n_rows() {
        return Err(Error::DimensionMismatch {
            expected: design.n_rows(),
            found: labels.len(),
        });
    }
    let folds = stratified_folds(labels, k, seed)?;
    let mut in_fold = vec![0usize; labels.len()];
    for (f, fold) in folds.iter().enumerate() {
        for &r in fold {
            in_fold[r] = f;
        }
    }
    let splits: Vec<(TrainSet<'_>, TrainSet<'_>)> = (0..k)
        .map(|f| {
            let train: Vec<usize> = (0..labels.len()).filter(|&r| in_fold[r] != f).collect();
            (design.train_set(labels, Some(&train)), design.train_set(labels, Some(&folds[f])))
        })
        .collect();

    let scores: Vec<Vec<f64>> = grid
        .cells
        .par_iter()
        .enumerate()
        .map(|(cell, params)| {
            splits
                .iter()
                .enumerate()
                .map(|(f, (train, valid))| {
                    let model = params.fit(train, seed::derive(seed, "cv-fit", (cell * k + f) as u64))?;
                    held_out_auroc(&model, valid)
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;

    let cell_means: Vec<f64> = scores.iter().map(|s| s.iter().sum::<f64>() / s.len() as f64).collect();
    let mut best_index = 0;
    for cell in 1..grid.len() {
        let (a, b) = (cell_means[cell], cell_means[best_index]);
        let better = if (a - b).abs() <= 1e-12 {
            let (ca, cb) = (grid.cells[cell].complexity(), grid.cells[best_index].complexity());
            ca.partial_cmp(&cb) == Some(Ordering::Less)
        } else {
            a > b
        };
        if better {
            best_index = cell;
        }
    }
    let best = grid.cells[best_index];
    let model = best.fit(&design.train_set(labels, None), seed::derive(seed, "cv-fit", u64::MAX))?;
    Ok(CvResult {
        best_index,
        best,
        fold_scores: scores[best_index].clone(),
        mean_auroc: cell_means[best_index],
        cell_means,
        model,
    })
}

fn held_out_auroc(model: &Model, valid: &TrainSet<'_>) -> Result<f64> {
    let active: Vec<usize> = valid.active().collect();
    let scores: Vec<f64> = active.iter().map(|&q| model.predict_row(valid.design.pattern(q))).collect();
    let pos: Vec<f64> = active.iter().map(|&q| valid.pos[q]).collect();
    let neg: Vec<f64> = active.iter().map(|&q| valid.neg[q]).collect();
    auroc_weighted(&scores, &pos, &neg)
}
