//! Bernoulli naive Bayes.

use super::{ProbabilityModel, TrainSet};

/// Feature values other than 0 count as present.
#[derive(Debug, Clone, PartialEq)]
pub struct NBModel {
    /// `log_present[y][k] = log P(feature k = 1 | label = y)`; `-inf` when the
    /// smoothed frequency is 0.
    pub log_present: [Vec<f64>; 2],
    /// `log_absent[y][k] = log P(feature k = 0 | label = y)`.
    pub log_absent: [Vec<f64>; 2],
    /// P(label = 1) on the training data.
    pub class_prior: f64,
    pub alpha: f64,
    finite: bool,
}

/// Fits the tables `(count + α) / (n_y + 2α)`. A class with no rows and α = 0
/// gets uninformative 0.5 entries; its prior of 0 already rules it out.
pub fn fit_naive_bayes(data: &TrainSet<'_>, alpha: f64) -> NBModel {
    let p = data.n_features();
    let mut counts = [vec![0.0; p], vec![0.0; p]];
    for q in data.active() {
        for &(col, v) in data.design.pattern(q) {
            if v != 0.0 {
                counts[1][col as usize] += data.pos[q];
                counts[0][col as usize] += data.neg[q];
            }
        }
    }
    let totals = [data.total_neg(), data.total_pos()];
    let mut log_present = [Vec::with_capacity(p), Vec::with_capacity(p)];
    let mut log_absent = [Vec::with_capacity(p), Vec::with_capacity(p)];
    for y in 0..2 {
        let denom = totals[y] + 2.0 * alpha;
        for &count in &counts[y] {
            let prob = if denom > 0.0 { (count + alpha) / denom } else { 0.5 };
            log_present[y].push(prob.ln());
            log_absent[y].push((1.0 - prob).ln());
        }
    }
    let n = totals[0] + totals[1];
    let finite = log_present.iter().chain(&log_absent).all(|t| t.iter().all(|v| v.is_finite()));
    NBModel {
        log_present,
        log_absent,
        class_prior: if n > 0.0 { totals[1] / n } else { 0.5 },
        alpha,
        finite,
    }
}

impl NBModel {
    /// `log P(feature = 1 | y = 1) − log P(feature = 1 | y = 0)`.
    pub fn log_ratio(&self, feature: usize) -> f64 {
        self.log_present[1][feature] - self.log_present[0][feature]
    }

    fn class_log_likelihood(&self, y: usize, row: &[(u32, f64)]) -> f64 {
        if self.finite {
            let base: f64 = self.log_absent[y].iter().sum();
            base + row
                .iter()
                .filter(|e| e.1 != 0.0)
                .map(|&(c, _)| self.log_present[y][c as usize] - self.log_absent[y][c as usize])
                .sum::<f64>()
        } else {
            // infinities cannot be cancelled by subtraction; walk every feature
            let mut present = row.iter().filter(|e| e.1 != 0.0).map(|e| e.0 as usize).peekable();
            let mut total = 0.0;
            for k in 0..self.log_absent[y].len() {
                if present.peek() == Some(&k) {
                    present.next();
                    total += self.log_present[y][k];
                } else {
                    total += self.log_absent[y][k];
                }
            }
            total
        }
    }
}

impl ProbabilityModel for NBModel {
    fn n_features(&self) -> usize {
        self.log_present[0].len()
    }

    fn predict_row(&self, row: &[(u32, f64)]) -> f64 {
        let a1 = self.class_prior.ln() + self.class_log_likelihood(1, row);
        let a0 = (1.0 - self.class_prior).ln() + self.class_log_likelihood(0, row);
        match (a1.is_finite(), a0.is_finite()) {
            (true, true) => 1.0 / (1.0 + (a0 - a1).exp()),
            (true, false) => 1.0,
            (false, true) => 0.0,
            (false, false) => self.class_prior,
        }
    }
}
