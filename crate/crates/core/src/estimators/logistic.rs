//! Penalized logistic regression.
//!
//! Maximizes `C · Σ loglik − R(w)` with `R = ‖w‖₁` (L1) or `½‖w‖²` (L2); the
//! intercept is unpenalized. Up to [`NEWTON_MAX_FEATURES`] features, L2 uses
//! damped Newton steps and L1 proximal Newton steps; wider problems use cyclic
//! coordinate descent with proximal Newton coordinate updates. Every accepted
//! step is checked to not decrease the objective.

use super::{sigmoid, ProbabilityModel, TrainSet};
use crate::error::{Error, Result};

pub const NEWTON_MAX_FEATURES: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Penalty {
    L1,
    L2,
}

impl Penalty {
    pub fn as_str(self) -> &'static str {
        match self {
            Penalty::L1 => "l1",
            Penalty::L2 => "l2",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogisticParams {
    pub penalty: Penalty,
    pub c: f64,
    pub tolerance: f64,
    pub max_iter: usize,
}

impl Default for LogisticParams {
    fn default() -> Self {
        LogisticParams {
            penalty: Penalty::L2,
            c: 1.0,
            tolerance: 1e-6,
            max_iter: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub penalty: Penalty,
    pub c: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Objective after each optimizer iteration, starting from the zero model.
    pub objective_trace: Vec<f64>,
}

impl LinearModel {
    pub fn from_parts(weights: Vec<f64>, intercept: f64, penalty: Penalty, c: f64) -> Self {
        LinearModel {
            weights,
            intercept,
            penalty,
            c,
            converged: true,
            iterations: 0,
            objective_trace: Vec::new(),
        }
    }

    pub fn linear_score(&self, row: &[(u32, f64)]) -> f64 {
        self.intercept + row.iter().map(|&(c, v)| self.weights[c as usize] * v).sum::<f64>()
    }
}

impl ProbabilityModel for LinearModel {
    fn n_features(&self) -> usize {
        self.weights.len()
    }

    fn predict_row(&self, row: &[(u32, f64)]) -> f64 {
        sigmoid(self.linear_score(row))
    }
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Weighted log-likelihood of one pattern at linear score `eta`.
fn pattern_loglik(pos: f64, neg: f64, eta: f64) -> f64 {
    let mut ll = 0.0;
    if pos > 0.0 {
        ll -= pos * softplus(-eta);
    }
    if neg > 0.0 {
        ll -= neg * softplus(eta);
    }
    ll
}

fn penalty_value(penalty: Penalty, weights: &[f64]) -> f64 {
    match penalty {
        Penalty::L1 => weights.iter().map(|w| w.abs()).sum(),
        Penalty::L2 => 0.5 * weights.iter().map(|w| w * w).sum::<f64>(),
    }
}

fn check_shape(data: &TrainSet<'_>, weights: &[f64]) -> Result<()> {
    if weights.len() != data.n_features() {
        return Err(Error::DimensionMismatch {
            expected: data.n_features(),
            found: weights.len(),
        });
    }
    Ok(())
}

pub fn logistic_objective(data: &TrainSet<'_>, penalty: Penalty, c: f64, weights: &[f64], intercept: f64) -> Result<f64> {
    check_shape(data, weights)?;
    let model = LinearModel::from_parts(weights.to_vec(), intercept, penalty, c);
    let ll: f64 = data
        .active()
        .map(|p| pattern_loglik(data.pos[p], data.neg[p], model.linear_score(data.design.pattern(p))))
        .sum();
    Ok(c * ll - penalty_value(penalty, weights))
}

/// Gradient of [`logistic_objective`] with respect to `(weights, intercept)`.
/// For L1 the penalty contributes `sign(w)` (zero at zero).
pub fn logistic_gradient(data: &TrainSet<'_>, penalty: Penalty, c: f64, weights: &[f64], intercept: f64) -> Result<(Vec<f64>, f64)> {
    check_shape(data, weights)?;
    let model = LinearModel::from_parts(weights.to_vec(), intercept, penalty, c);
    let mut grad = vec![0.0; weights.len()];
    let mut grad_b = 0.0;
    for p in data.active() {
        let row = data.design.pattern(p);
        let s = sigmoid(model.linear_score(row));
        let r = c * (data.pos[p] - (data.pos[p] + data.neg[p]) * s);
        grad_b += r;
        for &(col, v) in row {
            grad[col as usize] += r * v;
        }
    }
    for (g, &w) in grad.iter_mut().zip(weights) {
        *g -= match penalty {
            Penalty::L2 => w,
            Penalty::L1 => w.signum() * f64::from(u8::from(w != 0.0)),
        };
    }
    Ok((grad, grad_b))
}

pub fn fit_logistic(data: &TrainSet<'_>, params: &LogisticParams) -> Result<LinearModel> {
    if data.total_pos() <= 0.0 || data.total_neg() <= 0.0 {
        return Err(Error::SingleClass);
    }
    if !(params.c > 0.0 && params.c.is_finite()) {
        return Err(Error::Unsupported(format!("regularization strength must be positive, got {}", params.c)));
    }
    Ok(match (params.penalty, data.n_features() <= NEWTON_MAX_FEATURES) {
        (Penalty::L2, true) => fit_newton(data, params),
        (Penalty::L1, true) => fit_prox_newton(data, params),
        (_, false) => fit_coordinate(data, params),
    })
}

/// Objective at `theta = (weights, intercept)` over the active patterns.
fn objective_at(data: &TrainSet<'_>, active: &[usize], penalty: Penalty, c: f64, theta: &[f64]) -> f64 {
    let p = theta.len() - 1;
    let ll: f64 = active
        .iter()
        .map(|&q| {
            let eta = theta[p] + data.design.pattern(q).iter().map(|&(col, v)| theta[col as usize] * v).sum::<f64>();
            pattern_loglik(data.pos[q], data.neg[q], eta)
        })
        .sum();
    c * ll - penalty_value(penalty, &theta[..p])
}

/// Gradient and negated Hessian (row-major) of `C · Σ loglik` at `theta`,
/// intercept last.
fn curvature(data: &TrainSet<'_>, active: &[usize], c: f64, theta: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let dim = theta.len();
    let p = dim - 1;
    let mut grad = vec![0.0; dim];
    let mut hess = vec![0.0; dim * dim];
    let mut entries: Vec<(usize, f64)> = Vec::new();
    for &q in active {
        entries.clear();
        entries.extend(data.design.pattern(q).iter().map(|&(col, v)| (col as usize, v)));
        entries.push((p, 1.0));
        let eta: f64 = entries.iter().map(|&(k, v)| theta[k] * v).sum();
        let s = sigmoid(eta);
        let tot = data.pos[q] + data.neg[q];
        let r = c * (data.pos[q] - tot * s);
        let curv = c * tot * s * (1.0 - s);
        for &(a, va) in &entries {
            grad[a] += r * va;
            for &(b, vb) in &entries {
                hess[a * dim + b] += curv * va * vb;
            }
        }
    }
    (grad, hess)
}

/// Largest fraction of `step` (1, ½, ¼, …) that does not lower the objective.
fn backtrack(data: &TrainSet<'_>, active: &[usize], penalty: Penalty, c: f64, theta: &[f64], step: &[f64], current: f64) -> Option<(Vec<f64>, f64)> {
    let mut alpha = 1.0;
    for _ in 0..60 {
        let candidate: Vec<f64> = theta.iter().zip(step).map(|(t, d)| t + alpha * d).collect();
        let value = objective_at(data, active, penalty, c, &candidate);
        if value >= current {
            return Some((candidate, value));
        }
        alpha *= 0.5;
    }
    None
}

/// Newton decrement below this fraction of |J| means the objective can no
/// longer move in double precision; large cohorts hit this before the
/// absolute gradient tolerance.
const DECREMENT_FLOOR: f64 = 1e-13;

fn fit_newton(data: &TrainSet<'_>, params: &LogisticParams) -> LinearModel {
    let p = data.n_features();
    let dim = p + 1;
    let c = params.c;
    let active: Vec<usize> = data.active().collect();
    let mut theta = vec![0.0; dim];
    let mut current = objective_at(data, &active, Penalty::L2, c, &theta);
    let mut trace = vec![current];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < params.max_iter {
        let (mut grad, mut hess) = curvature(data, &active, c, &theta);
        for k in 0..p {
            grad[k] -= theta[k];
            hess[k * dim + k] += 1.0;
        }
        if grad.iter().all(|g| g.abs() < params.tolerance) {
            converged = true;
            break;
        }
        let Some(step) = solve_spd(&hess, &grad, dim) else { break };
        let decrement: f64 = grad.iter().zip(&step).map(|(g, d)| g * d).sum();
        if decrement <= DECREMENT_FLOOR * current.abs().max(1.0) {
            converged = true;
            break;
        }
        iterations += 1;
        let Some((next, value)) = backtrack(data, &active, Penalty::L2, c, &theta, &step, current) else {
            break;
        };
        theta = next;
        current = value;
        trace.push(current);
    }
    LinearModel {
        weights: theta[..p].to_vec(),
        intercept: theta[p],
        penalty: Penalty::L2,
        c,
        converged,
        iterations,
        objective_trace: trace,
    }
}

/// L1 by proximal Newton: each outer step minimizes the quadratic model of
/// the log-likelihood plus the exact L1 term with coordinate descent on the
/// dense Hessian, then backtracks on the true objective.
fn fit_prox_newton(data: &TrainSet<'_>, params: &LogisticParams) -> LinearModel {
    let p = data.n_features();
    let dim = p + 1;
    let c = params.c;
    let active: Vec<usize> = data.active().collect();
    let mut theta = vec![0.0; dim];
    let mut current = objective_at(data, &active, Penalty::L1, c, &theta);
    let mut trace = vec![current];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < params.max_iter {
        let (grad, hess) = curvature(data, &active, c, &theta);
        let mut d = vec![0.0; dim];
        let mut hd = vec![0.0; dim];
        for _ in 0..200 {
            let mut change: f64 = 0.0;
            // intercept (index p) first
            for k in (0..dim).rev() {
                let a = hess[k * dim + k];
                if a <= 1e-12 {
                    continue;
                }
                let b = hd[k] - a * d[k] - grad[k];
                let target = if k == p {
                    -b / a
                } else {
                    let z = theta[k] - b / a;
                    z.signum() * (z.abs() - 1.0 / a).max(0.0) - theta[k]
                };
                let diff = target - d[k];
                if diff != 0.0 {
                    for m in 0..dim {
                        hd[m] += hess[m * dim + k] * diff;
                    }
                    d[k] = target;
                    change = change.max(diff.abs());
                }
            }
            if change < 1e-3 * params.tolerance {
                break;
            }
        }
        if d.iter().all(|x| x.abs() < params.tolerance) {
            converged = true;
            break;
        }
        iterations += 1;
        let Some((next, value)) = backtrack(data, &active, Penalty::L1, c, &theta, &d, current) else {
            break;
        };
        let moved = next.iter().zip(&theta).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        theta = next;
        current = value;
        trace.push(current);
        if moved < params.tolerance {
            converged = true;
            break;
        }
    }
    LinearModel {
        weights: theta[..p].to_vec(),
        intercept: theta[p],
        penalty: Penalty::L1,
        c,
        converged,
        iterations,
        objective_trace: trace,
    }
}

/// Solve `A x = b` for symmetric positive definite `A` (row-major, n×n),
/// adding diagonal jitter if the factorization breaks down.
fn solve_spd(a: &[f64], b: &[f64], n: usize) -> Option<Vec<f64>> {
    let scale = (0..n).map(|k| a[k * n + k].abs()).fold(0.0, f64::max).max(1.0);
    for jitter in [0.0, 1e-12, 1e-9, 1e-6] {
        let mut l = vec![0.0; n * n];
        let mut ok = true;
        'outer: for i in 0..n {
            for j in 0..=i {
                let mut sum = a[i * n + j];
                if i == j {
                    sum += jitter * scale;
                }
                for k in 0..j {
                    sum -= l[i * n + k] * l[j * n + k];
                }
                if i == j {
                    if sum <= 0.0 || !sum.is_finite() {
                        ok = false;
                        break 'outer;
                    }
                    l[i * n + i] = sum.sqrt();
                } else {
                    l[i * n + j] = sum / l[j * n + j];
                }
            }
        }
        if !ok {
            continue;
        }
        let mut y = vec![0.0; n];
        for i in 0..n {
            let s: f64 = (0..i).map(|k| l[i * n + k] * y[k]).sum();
            y[i] = (b[i] - s) / l[i * n + i];
        }
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let s: f64 = (i + 1..n).map(|k| l[k * n + i] * x[k]).sum();
            x[i] = (y[i] - s) / l[i * n + i];
        }
        return Some(x);
    }
    None
}

fn fit_coordinate(data: &TrainSet<'_>, params: &LogisticParams) -> LinearModel {
    let p = data.n_features();
    let c = params.c;
    let n_pat = data.design.n_patterns();
    let active: Vec<usize> = data.active().collect();
    let mut columns: Vec<Vec<(usize, f64)>> = vec![Vec::new(); p];
    for &q in &active {
        for &(col, v) in data.design.pattern(q) {
            columns[col as usize].push((q, v));
        }
    }
    let tot: Vec<f64> = (0..n_pat).map(|q| data.pos[q] + data.neg[q]).collect();
    let mut eta = vec![0.0; n_pat];
    let mut weights = vec![0.0; p];
    let mut intercept = 0.0;
    let penalty = params.penalty;
    let full_objective = |eta: &[f64], weights: &[f64]| -> f64 {
        c * active.iter().map(|&q| pattern_loglik(data.pos[q], data.neg[q], eta[q])).sum::<f64>() - penalty_value(penalty, weights)
    };
    let reg = |w: f64| match penalty {
        Penalty::L1 => w.abs(),
        Penalty::L2 => 0.5 * w * w,
    };

    let mut trace = vec![full_objective(&eta, &weights)];
    let mut converged = false;
    let mut iterations = 0;
    let all_active: Vec<(usize, f64)> = active.iter().map(|&q| (q, 1.0)).collect();
    while iterations < params.max_iter {
        let mut max_change: f64 = 0.0;
        // coordinate `p` is the intercept
        for k in (0..=p).rev() {
            let (col, is_intercept) = if k == p { (&all_active, true) } else { (&columns[k], false) };
            if col.is_empty() {
                continue;
            }
            let (mut g, mut h) = (0.0, 1e-12);
            for &(q, v) in col.iter() {
                let s = sigmoid(eta[q]);
                g += c * (data.pos[q] - tot[q] * s) * v;
                h += c * tot[q] * s * (1.0 - s) * v * v;
            }
            let w = if is_intercept { intercept } else { weights[k] };
            let mut delta = if is_intercept {
                g / h
            } else {
                match penalty {
                    Penalty::L1 => {
                        let z = w + g / h;
                        z.signum() * (z.abs() - 1.0 / h).max(0.0) - w
                    }
                    Penalty::L2 => (g - w) / (h + 1.0),
                }
            };
            if delta == 0.0 || !delta.is_finite() {
                continue;
            }
            let mut accepted = false;
            for _ in 0..40 {
                let ll_change: f64 = col
                    .iter()
                    .map(|&(q, v)| pattern_loglik(data.pos[q], data.neg[q], eta[q] + delta * v) - pattern_loglik(data.pos[q], data.neg[q], eta[q]))
                    .sum();
                let pen_change = if is_intercept { 0.0 } else { reg(w + delta) - reg(w) };
                if c * ll_change - pen_change >= 0.0 {
                    accepted = true;
                    break;
                }
                delta *= 0.5;
            }
            if !accepted {
                continue;
            }
            for &(q, v) in col.iter() {
                eta[q] += delta * v;
            }
            if is_intercept {
                intercept += delta;
            } else {
                weights[k] += delta;
            }
            max_change = max_change.max(delta.abs());
        }
        iterations += 1;
        trace.push(full_objective(&eta, &weights));
        if max_change < params.tolerance {
            converged = true;
            break;
        }
    }
    LinearModel {
        weights,
        intercept,
        penalty,
        c,
        converged,
        iterations,
        objective_trace: trace,
    }
}
