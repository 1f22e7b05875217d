//! Penalized logistic regression with an unpenalized intercept.
//!
//! Minimizes `C · Σ logloss(yᵢ, xᵢ·w + b) + P(w)` with `P = ½‖w‖²` (L2) or
//! `‖w‖₁` (L1). L2 uses damped Newton; L1 uses proximal Newton with an inner
//! coordinate-descent solve of the penalized quadratic model.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{log_loss, sigmoid};
use crate::error::Result;
use crate::matrix::{dot, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Penalty {
    L1,
    L2,
}

pub const TOLERANCE: f64 = 1e-8;
pub const MAX_ITER: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Logistic {
    pub coef: Vec<f64>,
    pub intercept: f64,
    pub iterations: usize,
    pub converged: bool,
}

struct Problem<'a> {
    x: &'a Matrix,
    y: &'a [bool],
    c: f64,
    penalty: Penalty,
}

impl Problem<'_> {
    fn margins(&self, w: &[f64], b: f64) -> Vec<f64> {
        self.x.iter_rows().map(|r| dot(w, r) + b).collect()
    }

    fn penalty_value(&self, w: &[f64]) -> f64 {
        match self.penalty {
            Penalty::L2 => 0.5 * dot(w, w),
            Penalty::L1 => w.iter().map(|v| v.abs()).sum(),
        }
    }

    fn objective(&self, w: &[f64], b: f64) -> f64 {
        let data: f64 = self
            .margins(w, b)
            .iter()
            .zip(self.y)
            .map(|(&f, &t)| log_loss(f, t))
            .sum();
        self.c * data + self.penalty_value(w)
    }

    /// Per-sample loss gradient `C(p − y)` and curvature `C p(1 − p)`.
    fn derivatives(&self, w: &[f64], b: f64) -> (Vec<f64>, Vec<f64>) {
        self.margins(w, b)
            .iter()
            .zip(self.y)
            .map(|(&f, &t)| {
                let p = sigmoid(f);
                (self.c * (p - f64::from(t)), self.c * p * (1.0 - p))
            })
            .unzip()
    }
}

impl Logistic {
    pub fn fit(x: &Matrix, y: &[bool], c: f64, penalty: Penalty) -> Result<Self> {
        let problem = Problem { x, y, c, penalty };
        Ok(match penalty {
            Penalty::L2 => newton(&problem),
            Penalty::L1 => proximal_newton(&problem),
        })
    }

    pub fn decision(&self, x: &[f64]) -> f64 {
        dot(&self.coef, x) + self.intercept
    }
}

fn newton(p: &Problem) -> Logistic {
    let (n, d) = (p.x.rows(), p.x.cols());
    let mut theta = vec![0.0; d + 1];
    let mut f = p.objective(&theta[..d], 0.0);
    let mut converged = false;
    let mut iterations = 0;
    while iterations < MAX_ITER {
        iterations += 1;
        let (g_i, h_i) = p.derivatives(&theta[..d], theta[d]);
        let mut grad: DVector<f64> = DVector::zeros(d + 1);
        let mut hess: DMatrix<f64> = DMatrix::zeros(d + 1, d + 1);
        for i in 0..n {
            let r = p.x.row(i);
            for a in 0..=d {
                let xa = if a < d { r[a] } else { 1.0 };
                grad[a] += g_i[i] * xa;
                for b in 0..=a {
                    let xb = if b < d { r[b] } else { 1.0 };
                    hess[(a, b)] += h_i[i] * xa * xb;
                }
            }
        }
        for a in 0..d {
            grad[a] += theta[a];
            hess[(a, a)] += 1.0;
        }
        for a in 0..=d {
            for b in 0..a {
                hess[(b, a)] = hess[(a, b)];
            }
        }
        let mut jitter = 0.0;
        let step = loop {
            let mut h = hess.clone();
            h[(d, d)] += jitter;
            if let Some(ch) = h.cholesky() {
                break -ch.solve(&grad);
            }
            jitter = if jitter == 0.0 { 1e-12 } else { jitter * 10.0 };
        };
        let slope = grad.dot(&step);
        if -slope <= 1e-24 {
            converged = true;
            break;
        }
        let mut t = 1.0;
        let mut next: Vec<f64>;
        loop {
            next = theta.iter().zip(step.iter()).map(|(a, s)| a + t * s).collect();
            let candidate = p.objective(&next[..d], next[d]);
            if candidate <= f + 1e-4 * t * slope || t < 1e-12 {
                f = candidate;
                break;
            }
            t /= 2.0;
        }
        let moved = step.amax() * t;
        theta = next;
        if moved <= TOLERANCE * (1.0 + theta.iter().fold(0.0f64, |a, v| a.max(v.abs()))) {
            converged = true;
            break;
        }
    }
    Logistic {
        intercept: theta[d],
        coef: theta[..d].to_vec(),
        iterations,
        converged,
    }
}

fn soft_threshold(v: f64, k: f64) -> f64 {
    v.signum() * (v.abs() - k).max(0.0)
}

fn proximal_newton(p: &Problem) -> Logistic {
    let (n, d) = (p.x.rows(), p.x.cols());
    let mut w = vec![0.0; d];
    let mut b = 0.0;
    let mut f = p.objective(&w, b);
    let mut converged = false;
    let mut iterations = 0;
    while iterations < MAX_ITER {
        iterations += 1;
        let (g_i, h_i) = p.derivatives(&w, b);
        let h_i: Vec<f64> = h_i.iter().map(|h| h.max(1e-12 * p.c)).collect();
        // Coordinate descent on the quadratic model in the step (dw, db).
        let mut dw = vec![0.0; d];
        let mut db = 0.0;
        let mut xd = vec![0.0; n];
        let curv: Vec<f64> = (0..d)
            .map(|j| (0..n).map(|i| h_i[i] * p.x.get(i, j).powi(2)).sum())
            .collect();
        let curv_b: f64 = h_i.iter().sum();
        for _ in 0..MAX_ITER {
            let mut largest = 0.0f64;
            for j in 0..d {
                if curv[j] <= 0.0 {
                    continue;
                }
                let slope: f64 = (0..n).map(|i| (g_i[i] + h_i[i] * xd[i]) * p.x.get(i, j)).sum();
                let u = w[j] + dw[j];
                let next = soft_threshold(u - slope / curv[j], 1.0 / curv[j]);
                let change = next - u;
                if change != 0.0 {
                    dw[j] += change;
                    for (i, v) in xd.iter_mut().enumerate() {
                        *v += change * p.x.get(i, j);
                    }
                    largest = largest.max(change.abs());
                }
            }
            let slope: f64 = (0..n).map(|i| g_i[i] + h_i[i] * xd[i]).sum();
            let change = -slope / curv_b;
            db += change;
            xd.iter_mut().for_each(|v| *v += change);
            largest = largest.max(change.abs());
            if largest <= 1e-3 * TOLERANCE {
                break;
            }
        }

        let linear: f64 = (0..n).map(|i| g_i[i] * xd[i]).sum();
        let trial: Vec<f64> = w.iter().zip(&dw).map(|(a, s)| a + s).collect();
        let decrease = linear + p.penalty_value(&trial) - p.penalty_value(&w);
        if decrease >= -1e-24 {
            converged = true;
            break;
        }
        let mut t = 1.0;
        loop {
            let cand_w: Vec<f64> = w.iter().zip(&dw).map(|(a, s)| a + t * s).collect();
            let cand_b = b + t * db;
            let candidate = p.objective(&cand_w, cand_b);
            if candidate <= f + 0.01 * t * decrease || t < 1e-12 {
                w = cand_w;
                b = cand_b;
                f = candidate;
                break;
            }
            t /= 2.0;
        }
        let moved = t * dw.iter().fold(db.abs(), |a, v| a.max(v.abs()));
        let size = w.iter().fold(b.abs(), |a, v| a.max(v.abs()));
        if moved <= TOLERANCE * (1.0 + size) {
            converged = true;
            break;
        }
    }
    Logistic {
        coef: w,
        intercept: b,
        iterations,
        converged,
    }
}
