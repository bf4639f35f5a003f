//! From-scratch binary classifiers over sparse feature rows.
//!
//! Rows with identical features are collapsed into one *pattern* of a
//! [`Design`]; a [`TrainSet`] then carries per-pattern positive and negative
//! weights. Every fit works on the weighted patterns, which yields exactly the
//! same objective as the row-level data.

mod auroc;
mod cv;
mod forest;
mod logistic;
mod naive_bayes;

use std::collections::HashMap;

pub use auroc::{auroc, auroc_weighted};
pub use cv::{grid_search_cv, logspace, logspace_int, stratified_folds, CvResult, Family, Grid, ModelParams};
pub use forest::{fit_random_forest, ForestModel, ForestParams, Tree};
pub use logistic::{fit_logistic, logistic_gradient, logistic_objective, LinearModel, LogisticParams, Penalty};
pub use naive_bayes::{fit_naive_bayes, NBModel};

use crate::cohort::FeatureMatrix;
use crate::error::{Error, Result};

pub type SparseRow = Vec<(u32, f64)>;

/// Deduplicated feature rows.
#[derive(Debug, Clone)]
pub struct Design {
    n_features: usize,
    patterns: Vec<SparseRow>,
    row_pattern: Vec<u32>,
}

impl Design {
    pub fn from_rows(n_features: usize, rows: &[SparseRow]) -> Self {
        let mut index: HashMap<Vec<(u32, u64)>, u32> = HashMap::new();
        let mut patterns = Vec::new();
        let row_pattern = rows
            .iter()
            .map(|row| {
                let key: Vec<(u32, u64)> = row.iter().map(|&(c, v)| (c, v.to_bits())).collect();
                *index.entry(key).or_insert_with(|| {
                    patterns.push(row.clone());
                    (patterns.len() - 1) as u32
                })
            })
            .collect();
        Design {
            n_features,
            patterns,
            row_pattern,
        }
    }

    pub fn from_matrix(matrix: &FeatureMatrix) -> Self {
        Self::from_rows(matrix.n_columns(), &matrix.rows)
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn n_rows(&self) -> usize {
        self.row_pattern.len()
    }

    pub fn n_patterns(&self) -> usize {
        self.patterns.len()
    }

    pub fn pattern(&self, p: usize) -> &[(u32, f64)] {
        &self.patterns[p]
    }

    pub fn patterns(&self) -> &[SparseRow] {
        &self.patterns
    }

    pub fn row_pattern(&self, row: usize) -> usize {
        self.row_pattern[row] as usize
    }

    /// Per-pattern label weights over `rows` (all rows when `None`).
    pub fn train_set<'a>(&'a self, labels: &[bool], rows: Option<&[usize]>) -> TrainSet<'a> {
        let mut pos = vec![0.0; self.patterns.len()];
        let mut neg = vec![0.0; self.patterns.len()];
        let mut add = |r: usize| {
            let p = self.row_pattern[r] as usize;
            if labels[r] {
                pos[p] += 1.0;
            } else {
                neg[p] += 1.0;
            }
        };
        match rows {
            Some(rows) => rows.iter().for_each(|&r| add(r)),
            None => (0..self.row_pattern.len()).for_each(&mut add),
        }
        TrainSet { design: self, pos, neg }
    }
}

/// Weighted view of a [`Design`].
#[derive(Debug, Clone)]
pub struct TrainSet<'a> {
    pub design: &'a Design,
    pub pos: Vec<f64>,
    pub neg: Vec<f64>,
}

impl TrainSet<'_> {
    pub fn n_features(&self) -> usize {
        self.design.n_features
    }

    pub fn total_pos(&self) -> f64 {
        self.pos.iter().sum()
    }

    pub fn total_neg(&self) -> f64 {
        self.neg.iter().sum()
    }

    /// Patterns carrying any weight.
    pub fn active(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.pos.len()).filter(|&p| self.pos[p] + self.neg[p] > 0.0)
    }
}

/// Anything that maps a sparse row to P(label = 1).
pub trait ProbabilityModel {
    fn n_features(&self) -> usize;
    fn predict_row(&self, row: &[(u32, f64)]) -> f64;
}

#[derive(Debug, Clone)]
pub enum Model {
    Logistic(LinearModel),
    NaiveBayes(NBModel),
    Forest(ForestModel),
}

impl ProbabilityModel for Model {
    fn n_features(&self) -> usize {
        match self {
            Model::Logistic(m) => m.n_features(),
            Model::NaiveBayes(m) => m.n_features(),
            Model::Forest(m) => m.n_features(),
        }
    }

    fn predict_row(&self, row: &[(u32, f64)]) -> f64 {
        match self {
            Model::Logistic(m) => m.predict_row(row),
            Model::NaiveBayes(m) => m.predict_row(row),
            Model::Forest(m) => m.predict_row(row),
        }
    }
}

pub fn predict_proba<M: ProbabilityModel + ?Sized>(model: &M, x: &FeatureMatrix) -> Result<Vec<f64>> {
    if x.n_columns() != model.n_features() {
        return Err(Error::DimensionMismatch {
            expected: model.n_features(),
            found: x.n_columns(),
        });
    }
    Ok(x.rows.iter().map(|row| model.predict_row(row)).collect())
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cohort::DemoEncoding;

    #[test]
    fn design_deduplicates() {
        let rows = vec![vec![(0, 1.0)], vec![], vec![(0, 1.0)], vec![(1, 1.0)], vec![]];
        let d = Design::from_rows(2, &rows);
        assert_eq!(d.n_patterns(), 3);
        assert_eq!(d.n_rows(), 5);
        let ts = d.train_set(&[true, false, false, true, false], None);
        assert_eq!(ts.pos, vec![1.0, 0.0, 1.0]);
        assert_eq!(ts.neg, vec![1.0, 2.0, 0.0]);
        let sub = d.train_set(&[true, false, false, true, false], Some(&[0, 1]));
        assert_eq!(sub.active().collect::<Vec<_>>(), vec![0, 1]);
    }

    #[test]
    fn dimension_mismatch() {
        let fm = FeatureMatrix {
            columns: vec!["a".into()],
            n_base: 1,
            encoding: DemoEncoding::None,
            rows: vec![vec![(0, 1.0)]],
        };
        let model = LinearModel::from_parts(vec![0.0, 0.0], 0.0, Penalty::L2, 1.0);
        assert!(matches!(predict_proba(&model, &fm), Err(Error::DimensionMismatch { expected: 2, found: 1 })));
        let ok = LinearModel::from_parts(vec![0.0], 0.0, Penalty::L2, 1.0);
        assert_eq!(predict_proba(&ok, &fm).unwrap(), vec![0.5]);
    }
}
