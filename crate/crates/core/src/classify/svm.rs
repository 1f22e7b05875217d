//! RBF-kernel support vector machine trained by SMO with second-order
//! working-set selection, plus sigmoid probability calibration.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::eval::folds::{fold_split, stratified_kfold};
use crate::matrix::Matrix;

/// Stopping tolerance on the maximal KKT violation.
pub const EPS: f64 = 1e-3;
const TAU: f64 = 1e-12;
const MAX_ITER: usize = 10_000_000;
const CALIBRATION_FOLDS: usize = 5;
const CALIBRATION_SEED: u64 = 0;

/// `1 / (d · Var(X))` over all entries of `x`, or 1 when the data is constant.
pub fn default_gamma(x: &Matrix) -> f64 {
    let values = x.data();
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    if var > 0.0 {
        1.0 / (x.cols() as f64 * var)
    } else {
        1.0
    }
}

fn rbf(a: &[f64], b: &[f64], gamma: f64) -> f64 {
    let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (-gamma * d2).exp()
}

/// Solution of the dual problem on one training set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualSolution {
    pub alpha: Vec<f64>,
    pub rho: f64,
    /// `max_{I_up} −y∇ − min_{I_low} −y∇` at termination.
    pub kkt_gap: f64,
    pub iterations: usize,
}

/// Solves `min ½αᵀQα − eᵀα` s.t. `0 ≤ α ≤ C`, `yᵀα = 0`.
pub fn solve_dual(x: &Matrix, y: &[bool], c: f64, gamma: f64) -> DualSolution {
    let n = x.rows();
    let s: Vec<f64> = y.iter().map(|&t| if t { 1.0 } else { -1.0 }).collect();
    let mut k = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let v = rbf(x.row(i), x.row(j), gamma);
            k[i * n + j] = v;
            k[j * n + i] = v;
        }
    }
    let kij = |i: usize, j: usize| k[i * n + j];
    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let is_up = |a: f64, y: f64| (y > 0.0 && a < c) || (y < 0.0 && a > 0.0);
    let is_low = |a: f64, y: f64| (y > 0.0 && a > 0.0) || (y < 0.0 && a < c);

    let mut iterations = 0;
    let mut kkt_gap;
    loop {
        let mut g_max = f64::NEG_INFINITY;
        let mut i_sel = None;
        for t in 0..n {
            if is_up(alpha[t], s[t]) && -s[t] * grad[t] >= g_max {
                g_max = -s[t] * grad[t];
                i_sel = Some(t);
            }
        }
        let mut g_min = f64::INFINITY;
        let mut j_sel = None;
        let mut best = f64::INFINITY;
        if let Some(i) = i_sel {
            for t in 0..n {
                if !is_low(alpha[t], s[t]) {
                    continue;
                }
                let v = -s[t] * grad[t];
                g_min = g_min.min(v);
                let b = g_max - v;
                if b > 0.0 {
                    let mut a = kij(i, i) + kij(t, t) - 2.0 * kij(i, t);
                    if a <= 0.0 {
                        a = TAU;
                    }
                    if -b * b / a <= best {
                        best = -b * b / a;
                        j_sel = Some(t);
                    }
                }
            }
        }
        kkt_gap = if i_sel.is_some() && g_min.is_finite() {
            g_max - g_min
        } else {
            0.0
        };
        let (Some(i), Some(j)) = (i_sel, j_sel) else {
            break;
        };
        if kkt_gap < EPS || iterations >= MAX_ITER {
            break;
        }
        iterations += 1;

        let (old_i, old_j) = (alpha[i], alpha[j]);
        let mut quad = kij(i, i) + kij(j, j) - 2.0 * kij(i, j);
        if quad <= 0.0 {
            quad = TAU;
        }
        if s[i] != s[j] {
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else {
                if alpha[i] < 0.0 {
                    alpha[i] = 0.0;
                    alpha[j] = -diff;
                }
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = c + diff;
                }
            }
        } else {
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = sum;
                }
                if alpha[i] < 0.0 {
                    alpha[i] = 0.0;
                    alpha[j] = sum;
                }
            }
        }
        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        for t in 0..n {
            grad[t] += s[t] * (s[i] * kij(t, i) * di + s[j] * kij(t, j) * dj);
        }
    }

    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut free, mut free_sum) = (0usize, 0.0);
    for t in 0..n {
        let yg = s[t] * grad[t];
        if alpha[t] >= c {
            if s[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if s[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            free += 1;
            free_sum += yg;
        }
    }
    let rho = if free > 0 {
        free_sum / free as f64
    } else {
        (ub + lb) / 2.0
    };
    DualSolution {
        alpha,
        rho,
        kkt_gap,
        iterations,
    }
}

/// A kernel expansion `f(x) = Σ cᵢ K(svᵢ, x) − ρ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelMachine {
    pub gamma: f64,
    pub support: Matrix,
    /// `αᵢ yᵢ` for each support vector.
    pub dual_coef: Vec<f64>,
    pub rho: f64,
    pub kkt_gap: f64,
}

impl KernelMachine {
    pub fn fit(x: &Matrix, y: &[bool], c: f64, gamma: f64) -> Self {
        let sol = solve_dual(x, y, c, gamma);
        let support_idx: Vec<usize> = (0..x.rows()).filter(|&i| sol.alpha[i] > 0.0).collect();
        let dual_coef = support_idx
            .iter()
            .map(|&i| if y[i] { sol.alpha[i] } else { -sol.alpha[i] })
            .collect();
        Self {
            gamma,
            support: x.select_rows(&support_idx),
            dual_coef,
            rho: sol.rho,
            kkt_gap: sol.kkt_gap,
        }
    }

    pub fn decision(&self, x: &[f64]) -> f64 {
        self.support
            .iter_rows()
            .zip(&self.dual_coef)
            .map(|(sv, c)| c * rbf(sv, x, self.gamma))
            .sum::<f64>()
            - self.rho
    }
}

/// `P(y = 1 | f) = 1 / (1 + exp(A f + B))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sigmoid {
    pub a: f64,
    pub b: f64,
}

impl Sigmoid {
    /// Newton fit with backtracking on regularized targets.
    pub fn fit(decisions: &[f64], y: &[bool]) -> Self {
        let prior1 = y.iter().filter(|&&t| t).count() as f64;
        let prior0 = y.len() as f64 - prior1;
        let hi = (prior1 + 1.0) / (prior1 + 2.0);
        let lo = 1.0 / (prior0 + 2.0);
        let target: Vec<f64> = y.iter().map(|&t| if t { hi } else { lo }).collect();
        let objective = |a: f64, b: f64| -> f64 {
            decisions
                .iter()
                .zip(&target)
                .map(|(&f, &t)| {
                    let z = f * a + b;
                    if z >= 0.0 {
                        t * z + (-z).exp().ln_1p()
                    } else {
                        (t - 1.0) * z + z.exp().ln_1p()
                    }
                })
                .sum()
        };
        let mut a = 0.0;
        let mut b = ((prior0 + 1.0) / (prior1 + 1.0)).ln();
        let mut fval = objective(a, b);
        for _ in 0..100 {
            let (mut h11, mut h22, mut h21, mut g1, mut g2) = (1e-12, 1e-12, 0.0, 0.0, 0.0);
            for (&f, &t) in decisions.iter().zip(&target) {
                let z = f * a + b;
                let (p, q) = if z >= 0.0 {
                    let e = (-z).exp();
                    (e / (1.0 + e), 1.0 / (1.0 + e))
                } else {
                    let e = z.exp();
                    (1.0 / (1.0 + e), e / (1.0 + e))
                };
                let d2 = p * q;
                h11 += f * f * d2;
                h22 += d2;
                h21 += f * d2;
                let d1 = t - p;
                g1 += f * d1;
                g2 += d1;
            }
            if g1.abs() < 1e-5 && g2.abs() < 1e-5 {
                break;
            }
            let det = h11 * h22 - h21 * h21;
            let da = -(h22 * g1 - h21 * g2) / det;
            let db = -(-h21 * g1 + h11 * g2) / det;
            let gd = g1 * da + g2 * db;
            let mut step = 1.0;
            while step >= 1e-10 {
                let (na, nb) = (a + step * da, b + step * db);
                let nf = objective(na, nb);
                if nf < fval + 1e-4 * step * gd {
                    a = na;
                    b = nb;
                    fval = nf;
                    break;
                }
                step /= 2.0;
            }
            if step < 1e-10 {
                break;
            }
        }
        Self { a, b }
    }

    pub fn probability(&self, f: f64) -> f64 {
        let z = f * self.a + self.b;
        if z >= 0.0 {
            let e = (-z).exp();
            e / (1.0 + e)
        } else {
            1.0 / (1.0 + z.exp())
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Svm {
    pub c: f64,
    pub machine: KernelMachine,
    pub calibration: Sigmoid,
}

impl Svm {
    /// Fits the machine on all rows and the sigmoid on out-of-fold decision
    /// values from an internal stratified split (in-sample when a class has
    /// fewer than two members).
    pub fn fit(x: &Matrix, y: &[bool], c: f64, gamma: Option<f64>) -> Result<Self> {
        let gamma = gamma.unwrap_or_else(|| default_gamma(x));
        let machine = KernelMachine::fit(x, y, c, gamma);
        let minority = y.iter().filter(|&&t| t).count().min(y.iter().filter(|&&t| !t).count());
        let k = CALIBRATION_FOLDS.min(minority);
        let decisions = if k >= 2 {
            let folds = stratified_kfold(y, k, CALIBRATION_SEED)?;
            let mut out = vec![0.0; y.len()];
            for f in 0..k {
                let (train, test) = fold_split(&folds, f);
                let yt: Vec<bool> = train.iter().map(|&i| y[i]).collect();
                let m = KernelMachine::fit(&x.select_rows(&train), &yt, c, gamma);
                for i in test {
                    out[i] = m.decision(x.row(i));
                }
            }
            out
        } else {
            x.iter_rows().map(|r| machine.decision(r)).collect()
        };
        let calibration = Sigmoid::fit(&decisions, y);
        Ok(Self {
            c,
            machine,
            calibration,
        })
    }

    pub fn decision(&self, x: &[f64]) -> f64 {
        self.machine.decision(x)
    }

    pub fn probability(&self, x: &[f64]) -> f64 {
        self.calibration.probability(self.decision(x))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Projected-gradient KKT check independent of the solver's bookkeeping.
    fn kkt_violation(x: &Matrix, y: &[bool], c: f64, gamma: f64, sol: &DualSolution) -> f64 {
        let n = x.rows();
        let s: Vec<f64> = y.iter().map(|&t| if t { 1.0 } else { -1.0 }).collect();
        let grad: Vec<f64> = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| s[i] * s[j] * rbf(x.row(i), x.row(j), gamma) * sol.alpha[j])
                    .sum::<f64>()
                    - 1.0
            })
            .collect();
        let up = (0..n)
            .filter(|&t| (s[t] > 0.0 && sol.alpha[t] < c) || (s[t] < 0.0 && sol.alpha[t] > 0.0))
            .map(|t| -s[t] * grad[t])
            .fold(f64::NEG_INFINITY, f64::max);
        let low = (0..n)
            .filter(|&t| (s[t] > 0.0 && sol.alpha[t] > 0.0) || (s[t] < 0.0 && sol.alpha[t] < c))
            .map(|t| -s[t] * grad[t])
            .fold(f64::INFINITY, f64::min);
        up - low
    }

    fn xor_data() -> (Matrix, Vec<bool>) {
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for i in 0..40 {
            let a = (i % 7) as f64 / 7.0 - 0.5;
            let b = (i % 5) as f64 / 5.0 - 0.4;
            rows.push([a, b]);
            y.push((a > 0.0) != (b > 0.0));
        }
        (Matrix::from_rows(&rows).unwrap(), y)
    }

    #[test]
    fn dual_solution_is_feasible_and_kkt_within_tolerance() {
        let (x, y) = xor_data();
        for c in [0.1, 1.0, 100.0] {
            let sol = solve_dual(&x, &y, c, 2.0);
            let balance: f64 = sol
                .alpha
                .iter()
                .zip(&y)
                .map(|(a, &t)| if t { *a } else { -*a })
                .sum();
            assert!(balance.abs() < 1e-9);
            assert!(sol.alpha.iter().all(|&a| (0.0..=c).contains(&a)));
            assert!(sol.kkt_gap < EPS);
            assert!(kkt_violation(&x, &y, c, 2.0, &sol) < EPS + 1e-9, "C={c}");
        }
    }

    #[test]
    fn kernel_machine_separates_xor() {
        let (x, y) = xor_data();
        let m = KernelMachine::fit(&x, &y, 100.0, 5.0);
        let correct = x
            .iter_rows()
            .zip(&y)
            .filter(|(r, &t)| (m.decision(r) > 0.0) == t)
            .count();
        assert!(correct >= 38, "{correct}");
    }

    #[test]
    fn sigmoid_fit_orients_towards_positive_decisions() {
        let f = [-2.0, -1.0, -0.5, 0.3, 1.0, 2.5];
        let y = [false, false, true, false, true, true];
        let s = Sigmoid::fit(&f, &y);
        assert!(s.a < 0.0);
        assert!(s.probability(3.0) > s.probability(-3.0));
    }
}
