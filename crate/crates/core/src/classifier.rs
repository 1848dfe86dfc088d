//! RBF-kernel support vector machines.
//!
//! Binary machines are trained by SMO on the soft-margin dual
//!
//! ```text
//! min ½ αᵀQα − eᵀα   s.t.  yᵀα = 0,  0 ≤ α ≤ C,   Q_ij = y_i y_j K(x_i, x_j)
//! ```
//!
//! choosing the maximal violating pair at every step. Multiclass problems
//! use one-vs-one voting.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng::seeded;

pub const DEFAULT_KKT_TOL: f64 = 1e-3;

pub fn rbf_kernel(x: &[f64], y: &[f64], gamma: f64) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            got: y.len(),
        });
    }
    Ok(rbf(x, y, gamma))
}

#[inline]
fn rbf(x: &[f64], y: &[f64], gamma: f64) -> f64 {
    let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    (-gamma * d2).exp()
}

pub fn kernel_matrix(x: &[Vec<f64>], gamma: f64) -> Vec<Vec<f64>> {
    let n = x.len();
    let mut k = vec![vec![0.0; n]; n];
    for i in 0..n {
        k[i][i] = 1.0;
        for j in 0..i {
            let v = rbf(&x[i], &x[j], gamma);
            k[i][j] = v;
            k[j][i] = v;
        }
    }
    k
}

/// Optimal multipliers for every training point plus the bias.
#[derive(Debug, Clone, PartialEq)]
pub struct DualSolution {
    pub alpha: Vec<f64>,
    pub bias: f64,
    pub iterations: usize,
}

/// Value of the dual in its maximisation form, `Σα − ½ αᵀQα`.
pub fn dual_objective(kernel: &[Vec<f64>], y: &[f64], alpha: &[f64]) -> f64 {
    let n = alpha.len();
    let mut quad = 0.0;
    for i in 0..n {
        for j in 0..n {
            quad += alpha[i] * alpha[j] * y[i] * y[j] * kernel[i][j];
        }
    }
    alpha.iter().sum::<f64>() - 0.5 * quad
}

fn check_binary_problem(x: &[Vec<f64>], y: &[f64], c: f64, gamma: f64) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            got: y.len(),
        });
    }
    if !(c > 0.0) || !(gamma >= 0.0) {
        return Err(Error::InvalidConfig(format!(
            "svm needs C > 0 and gamma >= 0 (got C={c}, gamma={gamma})"
        )));
    }
    if y.iter().any(|&v| v != 1.0 && v != -1.0) {
        return Err(Error::InvalidConfig("binary labels must be +1 or -1".into()));
    }
    if !(y.contains(&1.0) && y.contains(&-1.0)) {
        return Err(Error::SingleClass);
    }
    if let Some(first) = x.first() {
        if let Some(bad) = x.iter().find(|v| v.len() != first.len()) {
            return Err(Error::DimensionMismatch {
                expected: first.len(),
                got: bad.len(),
            });
        }
    }
    Ok(())
}

/// SMO on a precomputed kernel matrix.
pub fn solve_dual(kernel: &[Vec<f64>], y: &[f64], c: f64, kkt_tol: f64) -> DualSolution {
    let n = y.len();
    let mut alpha = vec![0.0; n];
    // gradient of ½αᵀQα − eᵀα
    let mut grad = vec![-1.0; n];
    let in_up = |a: f64, yt: f64| (yt > 0.0 && a < c) || (yt < 0.0 && a > 0.0);
    let in_low = |a: f64, yt: f64| (yt < 0.0 && a < c) || (yt > 0.0 && a > 0.0);
    let max_iter = 10_000_000usize.max(100 * n);
    let mut iterations = 0;

    while iterations < max_iter {
        let (mut i, mut m) = (usize::MAX, f64::NEG_INFINITY);
        let (mut j, mut big_m) = (usize::MAX, f64::INFINITY);
        for t in 0..n {
            let v = -y[t] * grad[t];
            if in_up(alpha[t], y[t]) && v > m {
                i = t;
                m = v;
            }
            if in_low(alpha[t], y[t]) && v < big_m {
                j = t;
                big_m = v;
            }
        }
        if i == usize::MAX || j == usize::MAX || m - big_m < kkt_tol {
            break;
        }
        iterations += 1;

        let quad = (kernel[i][i] + kernel[j][j] - 2.0 * kernel[i][j]).max(1e-12);
        let mut delta = (m - big_m) / quad;
        // room left for α_i along +y_i and for α_j along −y_j
        let room_i = if y[i] > 0.0 { c - alpha[i] } else { alpha[i] };
        let room_j = if y[j] > 0.0 { alpha[j] } else { c - alpha[j] };
        let (old_i, old_j) = (alpha[i], alpha[j]);
        let mut clip_i = false;
        let mut clip_j = false;
        if delta >= room_i {
            delta = room_i;
            clip_i = true;
        }
        if delta >= room_j {
            delta = room_j;
            clip_j = true;
            clip_i = delta >= room_i;
        }
        alpha[i] = if clip_i {
            if y[i] > 0.0 { c } else { 0.0 }
        } else {
            old_i + y[i] * delta
        };
        alpha[j] = if clip_j {
            if y[j] > 0.0 { 0.0 } else { c }
        } else {
            old_j - y[j] * delta
        };
        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        for t in 0..n {
            grad[t] += y[t] * (y[i] * kernel[t][i] * di + y[j] * kernel[t][j] * dj);
        }
    }

    // ρ from the free multipliers, or the middle of the feasible interval
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut free_sum, mut free_count) = (0.0, 0usize);
    for t in 0..n {
        let yg = y[t] * grad[t];
        if alpha[t] >= c {
            if y[t] < 0.0 { ub = ub.min(yg) } else { lb = lb.max(yg) }
        } else if alpha[t] <= 0.0 {
            if y[t] > 0.0 { ub = ub.min(yg) } else { lb = lb.max(yg) }
        } else {
            free_sum += yg;
            free_count += 1;
        }
    }
    let rho = if free_count > 0 {
        free_sum / free_count as f64
    } else {
        (ub + lb) / 2.0
    };
    DualSolution {
        alpha,
        bias: -rho,
        iterations,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BinarySvm {
    pub support_vectors: Vec<Vec<f64>>,
    /// `α_i · y_i` for every support vector.
    pub dual_coefs: Vec<f64>,
    pub bias: f64,
    pub gamma: f64,
    pub c: f64,
}

impl BinarySvm {
    pub fn decision_value(&self, x: &[f64]) -> Result<f64> {
        if let Some(sv) = self.support_vectors.first() {
            if sv.len() != x.len() {
                return Err(Error::DimensionMismatch {
                    expected: sv.len(),
                    got: x.len(),
                });
            }
        }
        Ok(self
            .support_vectors
            .iter()
            .zip(&self.dual_coefs)
            .map(|(sv, coef)| coef * rbf(sv, x, self.gamma))
            .sum::<f64>()
            + self.bias)
    }
}

pub fn predict_binary(model: &BinarySvm, x: &[f64]) -> Result<f64> {
    model.decision_value(x)
}

pub fn train_binary_svm(
    x: &[Vec<f64>],
    y: &[f64],
    c: f64,
    gamma: f64,
    kkt_tol: f64,
) -> Result<BinarySvm> {
    check_binary_problem(x, y, c, gamma)?;
    let kernel = kernel_matrix(x, gamma);
    let sol = solve_dual(&kernel, y, c, kkt_tol);
    let (support_vectors, dual_coefs) = sol
        .alpha
        .iter()
        .enumerate()
        .filter(|(_, &a)| a > 0.0)
        .map(|(i, &a)| (x[i].clone(), a * y[i]))
        .unzip();
    Ok(BinarySvm {
        support_vectors,
        dual_coefs,
        bias: sol.bias,
        gamma,
        c,
    })
}

/// One machine per unordered class pair. The lexicographically smaller class
/// of a pair is the positive side.
#[derive(Debug, Clone, PartialEq)]
pub struct PairMachine {
    pub positive: usize,
    pub negative: usize,
    pub svm: BinarySvm,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvmModel {
    pub classes: Vec<String>,
    pub c: f64,
    pub gamma: f64,
    pub machines: Vec<PairMachine>,
}

pub fn train_multiclass(
    x: &[Vec<f64>],
    labels: &[String],
    c: f64,
    gamma: f64,
    kkt_tol: f64,
) -> Result<SvmModel> {
    if x.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            got: labels.len(),
        });
    }
    let classes: Vec<String> = labels.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect();
    if classes.len() < 2 {
        return Err(Error::SingleClass);
    }
    let pairs: Vec<(usize, usize)> = (0..classes.len())
        .flat_map(|a| (a + 1..classes.len()).map(move |b| (a, b)))
        .collect();
    let machines = pairs
        .into_iter()
        .map(|(a, b)| {
            let (xs, ys): (Vec<Vec<f64>>, Vec<f64>) = x
                .iter()
                .zip(labels)
                .filter_map(|(v, l)| {
                    if *l == classes[a] {
                        Some((v.clone(), 1.0))
                    } else if *l == classes[b] {
                        Some((v.clone(), -1.0))
                    } else {
                        None
                    }
                })
                .unzip();
            Ok(PairMachine {
                positive: a,
                negative: b,
                svm: train_binary_svm(&xs, &ys, c, gamma, kkt_tol)?,
            })
        })
        .collect::<Result<_>>()?;
    Ok(SvmModel {
        classes,
        c,
        gamma,
        machines,
    })
}

impl SvmModel {
    /// Index of the predicted class.
    pub fn predict_index(&self, x: &[f64]) -> Result<usize> {
        let mut votes = vec![0usize; self.classes.len()];
        let mut strength = vec![0.0f64; self.classes.len()];
        for m in &self.machines {
            let d = m.svm.decision_value(x)?;
            let winner = if d >= 0.0 { m.positive } else { m.negative };
            votes[winner] += 1;
            strength[winner] += d.abs();
        }
        // classes are sorted, so the first maximum is the lexicographic tie-break
        let mut best = 0;
        for k in 1..votes.len() {
            if votes[k] > votes[best] || (votes[k] == votes[best] && strength[k] > strength[best]) {
                best = k;
            }
        }
        Ok(best)
    }

    pub fn predict(&self, x: &[f64]) -> Result<&str> {
        Ok(&self.classes[self.predict_index(x)?])
    }
}

pub fn predict<'m>(model: &'m SvmModel, x: &[f64]) -> Result<&'m str> {
    model.predict(x)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridCell {
    pub c: f64,
    pub gamma: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSearchResult {
    pub best_c: f64,
    pub best_gamma: f64,
    pub cv_accuracy: f64,
    /// Folds actually used (reduced when a class is smaller than requested).
    pub folds: usize,
    pub grid: Vec<GridCell>,
}

/// Assigns every sample a fold so each class is spread round-robin over the
/// folds after a seeded shuffle.
pub fn stratified_folds(labels: &[String], folds: usize, seed: u64) -> Vec<usize> {
    let classes: BTreeSet<&String> = labels.iter().collect();
    let mut rng = seeded(seed);
    let mut fold_of = vec![0; labels.len()];
    for class in classes {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| &labels[i] == class).collect();
        members.shuffle(&mut rng);
        for (pos, idx) in members.into_iter().enumerate() {
            fold_of[idx] = pos % folds;
        }
    }
    fold_of
}

/// Stratified k-fold cross-validation over every `(C, γ)` pair. The best
/// pair maximises accuracy; ties prefer smaller C, then smaller γ. When the
/// smallest class has fewer members than `folds`, the fold count drops to
/// that size (at least 2).
pub fn grid_search(
    x: &[Vec<f64>],
    labels: &[String],
    grid_c: &[f64],
    grid_gamma: &[f64],
    folds: usize,
    seed: u64,
    kkt_tol: f64,
) -> Result<GridSearchResult> {
    if grid_c.is_empty() || grid_gamma.is_empty() {
        return Err(Error::InvalidConfig("grid search needs non-empty C and gamma lists".into()));
    }
    if folds < 2 {
        return Err(Error::InvalidConfig("grid search needs at least 2 folds".into()));
    }
    if x.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            got: labels.len(),
        });
    }
    let classes: BTreeSet<&String> = labels.iter().collect();
    if classes.len() < 2 {
        return Err(Error::SingleClass);
    }
    let smallest = classes
        .iter()
        .map(|c| labels.iter().filter(|l| l == c).count())
        .min()
        .unwrap_or(0);
    let folds = folds.min(smallest);
    if folds < 2 {
        return Err(Error::InvalidConfig(format!(
            "a class has {smallest} member(s); stratified cross-validation needs at least 2"
        )));
    }
    let fold_of = stratified_folds(labels, folds, seed);

    let cells: Vec<(f64, f64)> = grid_c
        .iter()
        .flat_map(|&c| grid_gamma.iter().map(move |&g| (c, g)))
        .collect();
    let grid = cells
        .par_iter()
        .map(|&(c, gamma)| {
            let mut correct = 0usize;
            for f in 0..folds {
                let (train_x, train_y): (Vec<Vec<f64>>, Vec<String>) = (0..x.len())
                    .filter(|&i| fold_of[i] != f)
                    .map(|i| (x[i].clone(), labels[i].clone()))
                    .unzip();
                let model = train_multiclass(&train_x, &train_y, c, gamma, kkt_tol)?;
                for i in (0..x.len()).filter(|&i| fold_of[i] == f) {
                    if model.predict(&x[i])? == labels[i] {
                        correct += 1;
                    }
                }
            }
            Ok(GridCell {
                c,
                gamma,
                accuracy: correct as f64 / x.len() as f64,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let best = grid
        .iter()
        .reduce(|best, cell| {
            let better = cell.accuracy > best.accuracy
                || (cell.accuracy == best.accuracy
                    && (cell.c < best.c || (cell.c == best.c && cell.gamma < best.gamma)));
            if better { cell } else { best }
        })
        .expect("grid is non-empty");
    Ok(GridSearchResult {
        best_c: best.c,
        best_gamma: best.gamma,
        cv_accuracy: best.accuracy,
        folds,
        grid,
    })
}

/// `2^lo, 2^(lo+step), …, 2^hi`.
pub fn log2_grid(lo: i32, hi: i32, step: i32) -> Vec<f64> {
    (lo..=hi).step_by(step.max(1) as usize).map(|e| 2f64.powi(e)).collect()
}
