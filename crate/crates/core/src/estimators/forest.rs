//! Random forest of Gini trees over binary features.
//!
//! Every split tests `x > 0.5`. Bootstrap samples are drawn as exact
//! multinomial counts over the weighted (pattern, class) cells, so a tree sees
//! integer row multiplicities without materializing rows.

use rand::seq::index::sample;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};

use super::{ProbabilityModel, TrainSet};
use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ForestParams {
    /// Root has depth 0; a tree never grows nodes deeper than this.
    pub max_depth: usize,
    /// Minimum bootstrap rows in every leaf.
    pub min_samples_leaf: usize,
    pub n_trees: usize,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            max_depth: 12,
            min_samples_leaf: 10,
            n_trees: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Leaf {
        value: f64,
        samples: f64,
    },
    /// `left` holds rows with feature ≤ 0.5.
    Split {
        feature: u32,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn leaf(value: f64) -> Self {
        Tree {
            nodes: vec![Node::Leaf { value, samples: 0.0 }],
        }
    }

    pub fn predict_row(&self, row: &[(u32, f64)]) -> f64 {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                Node::Leaf { value, .. } => return value,
                Node::Split { feature, left, right } => {
                    at = if feature_value(row, feature) > 0.5 { right } else { left };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], at: usize) -> usize {
            match nodes[at] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForestModel {
    pub trees: Vec<Tree>,
    pub params: ForestParams,
    pub seed: u64,
    n_features: usize,
}

impl ForestModel {
    pub fn from_trees(trees: Vec<Tree>, n_features: usize) -> Self {
        let params = ForestParams {
            n_trees: trees.len(),
            ..ForestParams::default()
        };
        ForestModel {
            trees,
            params,
            seed: 0,
            n_features,
        }
    }
}

impl ProbabilityModel for ForestModel {
    fn n_features(&self) -> usize {
        self.n_features
    }

    fn predict_row(&self, row: &[(u32, f64)]) -> f64 {
        self.trees.iter().map(|t| t.predict_row(row)).sum::<f64>() / self.trees.len() as f64
    }
}

fn feature_value(row: &[(u32, f64)], feature: u32) -> f64 {
    match row.binary_search_by_key(&feature, |e| e.0) {
        Ok(k) => row[k].1,
        Err(_) => 0.0,
    }
}

pub fn fit_random_forest(data: &TrainSet<'_>, params: &ForestParams, seed: u64) -> Result<ForestModel> {
    if params.n_trees == 0 {
        return Err(Error::Unsupported("a forest needs at least one tree".into()));
    }
    if data.total_pos() + data.total_neg() <= 0.0 {
        return Err(Error::EmptyCohort);
    }
    let trees = (0..params.n_trees)
        .map(|t| {
            let mut rng = seed::rng(seed, "forest", t as u64);
            let sample = bootstrap(data, &mut rng);
            grow(data, sample, params, &mut rng)
        })
        .collect();
    Ok(ForestModel {
        trees,
        params: *params,
        seed,
        n_features: data.n_features(),
    })
}

/// One bootstrap sample as `(pattern, positives, negatives)` multiplicities.
fn bootstrap(data: &TrainSet<'_>, rng: &mut ChaCha8Rng) -> Vec<(usize, f64, f64)> {
    let cells: Vec<(usize, bool, f64)> = data
        .active()
        .flat_map(|q| [(q, true, data.pos[q]), (q, false, data.neg[q])])
        .filter(|c| c.2 > 0.0)
        .collect();
    let total: f64 = cells.iter().map(|c| c.2).sum();
    let mut remaining_draws = total.round() as u64;
    let mut remaining_mass = total;
    let mut out: Vec<(usize, f64, f64)> = Vec::new();
    for &(q, positive, weight) in &cells {
        if remaining_draws == 0 {
            break;
        }
        let prob = (weight / remaining_mass).clamp(0.0, 1.0);
        let k = if prob >= 1.0 {
            remaining_draws
        } else {
            Binomial::new(remaining_draws, prob).expect("valid binomial").sample(rng)
        };
        remaining_draws -= k;
        remaining_mass -= weight;
        if k > 0 {
            match out.last_mut() {
                Some(last) if last.0 == q => {
                    if positive {
                        last.1 += k as f64;
                    } else {
                        last.2 += k as f64;
                    }
                }
                _ => out.push(if positive { (q, k as f64, 0.0) } else { (q, 0.0, k as f64) }),
            }
        }
    }
    out
}

fn grow(data: &TrainSet<'_>, root: Vec<(usize, f64, f64)>, params: &ForestParams, rng: &mut ChaCha8Rng) -> Tree {
    let p = data.n_features();
    let n_candidates = ((p as f64).sqrt().ceil() as usize).clamp(1, p.max(1));
    let min_leaf = params.min_samples_leaf.max(1) as f64;
    let mut nodes: Vec<Node> = Vec::new();
    // (node slot, samples, depth)
    let mut stack = vec![(0usize, root, 0usize)];
    nodes.push(Node::Leaf { value: 0.0, samples: 0.0 });
    while let Some((slot, samples, depth)) = stack.pop() {
        let pos: f64 = samples.iter().map(|s| s.1).sum();
        let neg: f64 = samples.iter().map(|s| s.2).sum();
        let total = pos + neg;
        let leaf = Node::Leaf {
            value: if total > 0.0 { pos / total } else { 0.0 },
            samples: total,
        };
        if depth >= params.max_depth || pos == 0.0 || neg == 0.0 || total < 2.0 * min_leaf || p == 0 {
            nodes[slot] = leaf;
            continue;
        }
        let mut best: Option<(f64, u32)> = None;
        for f in sample(rng, p, n_candidates).into_iter() {
            let f = f as u32;
            let (mut rp, mut rn) = (0.0, 0.0);
            for &(q, sp, sn) in &samples {
                if feature_value(data.design.pattern(q), f) > 0.5 {
                    rp += sp;
                    rn += sn;
                }
            }
            let (lp, ln) = (pos - rp, neg - rn);
            if lp + ln < min_leaf || rp + rn < min_leaf {
                continue;
            }
            // weighted child Gini, up to a constant factor
            let impurity = lp * ln / (lp + ln) + rp * rn / (rp + rn);
            if best.is_none_or(|(b, _)| impurity < b) {
                best = Some((impurity, f));
            }
        }
        let Some((_, feature)) = best else {
            nodes[slot] = leaf;
            continue;
        };
        let (right, left): (Vec<_>, Vec<_>) = samples.into_iter().partition(|&(q, _, _)| feature_value(data.design.pattern(q), feature) > 0.5);
        let left_slot = nodes.len();
        nodes.push(Node::Leaf { value: 0.0, samples: 0.0 });
        let right_slot = nodes.len();
        nodes.push(Node::Leaf { value: 0.0, samples: 0.0 });
        nodes[slot] = Node::Split {
            feature,
            left: left_slot,
            right: right_slot,
        };
        stack.push((right_slot, right, depth + 1));
        stack.push((left_slot, left, depth + 1));
    }
    Tree { nodes }
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};

    use super::*;
    use crate::estimators::{auroc, predict_proba, Design, SparseRow};

    fn random_rows(seed: u64, n: usize, p: usize) -> Vec<SparseRow> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| (0..p).filter(|_| rng.random_bool(0.5)).map(|k| (k as u32, 1.0)).collect())
            .collect()
    }

    #[test]
    fn label_equal_to_feature_is_learned() {
        let rows = random_rows(1, 300, 1);
        let labels: Vec<bool> = rows.iter().map(|r| !r.is_empty()).collect();
        let design = Design::from_rows(1, &rows);
        let params = ForestParams {
            max_depth: 1,
            min_samples_leaf: 1,
            n_trees: 5,
        };
        let model = fit_random_forest(&design.train_set(&labels, None), &params, 3).unwrap();
        let scores: Vec<f64> = rows.iter().map(|r| model.predict_row(r)).collect();
        assert_eq!(auroc(&scores, &labels).unwrap(), 1.0);
    }

    #[test]
    fn null_features_give_chance_auroc() {
        let p = 5;
        let mut total = 0.0;
        let runs = 10;
        for seed in 0..runs {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
            let train = random_rows(200 + seed, 2000, p);
            let labels: Vec<bool> = (0..2000).map(|_| rng.random_bool(0.5)).collect();
            let test = random_rows(300 + seed, 2000, p);
            let test_labels: Vec<bool> = (0..2000).map(|_| rng.random_bool(0.5)).collect();
            let design = Design::from_rows(p, &train);
            let params = ForestParams {
                max_depth: 1,
                min_samples_leaf: 10,
                n_trees: 20,
            };
            let model = fit_random_forest(&design.train_set(&labels, None), &params, seed).unwrap();
            let scores: Vec<f64> = test.iter().map(|r| model.predict_row(r)).collect();
            total += auroc(&scores, &test_labels).unwrap();
        }
        let mean = total / runs as f64;
        assert!((mean - 0.5).abs() < 0.05, "{mean}");
    }

    #[test]
    fn deterministic_and_structurally_valid() {
        let p = 6;
        let rows = random_rows(5, 500, p);
        let labels: Vec<bool> = rows.iter().map(|r| r.len() >= 3).collect();
        let design = Design::from_rows(p, &rows);
        let params = ForestParams {
            max_depth: 3,
            min_samples_leaf: 15,
            n_trees: 8,
        };
        let data = design.train_set(&labels, None);
        let a = fit_random_forest(&data, &params, 9).unwrap();
        let b = fit_random_forest(&data, &params, 9).unwrap();
        assert_eq!(a, b);
        for tree in &a.trees {
            assert!(tree.depth() <= 3);
            for node in &tree.nodes {
                if let Node::Leaf { samples, .. } = node {
                    assert!(*samples >= 15.0);
                }
            }
        }
        let mut reversed = a.clone();
        reversed.trees.reverse();
        for r in &rows {
            let x = a.predict_row(r);
            let y = reversed.predict_row(r);
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn prediction_is_mean_of_leaves() {
        let model = ForestModel::from_trees(vec![Tree::leaf(0.2), Tree::leaf(0.6)], 1);
        let fm = crate::cohort::FeatureMatrix {
            columns: vec!["a".into()],
            n_base: 1,
            encoding: crate::cohort::DemoEncoding::None,
            rows: vec![vec![]],
        };
        assert!((predict_proba(&model, &fm).unwrap()[0] - 0.4).abs() < 1e-15);
    }

    #[test]
    fn bootstrap_preserves_size() {
        let rows = random_rows(8, 777, 3);
        let labels: Vec<bool> = (0..777).map(|k| k % 3 == 0).collect();
        let design = Design::from_rows(3, &rows);
        let data = design.train_set(&labels, None);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let sample = bootstrap(&data, &mut rng);
        let total: f64 = sample.iter().map(|s| s.1 + s.2).sum();
        assert_eq!(total, 777.0);
    }
}
