//! Two-class linear discriminant analysis with a shared covariance.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LdaSolver {
    /// Pseudo-inverse from the SVD of the class-centered data; never forms
    /// the covariance.
    Svd,
    /// Least-squares solve of `S w = μ₁ − μ₀` by QR.
    Lsqr,
    /// Inverse through the eigendecomposition of `S`.
    Eigen,
}

pub const RIDGE: f64 = 1e-6;
const RCOND_LIMIT: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lda {
    pub solver: LdaSolver,
    pub coef: Vec<f64>,
    pub intercept: f64,
    /// Set when the pooled covariance was near-singular and a ridge was added.
    pub regularized: bool,
}

impl Lda {
    pub fn fit(x: &Matrix, y: &[bool], solver: LdaSolver) -> Result<Self> {
        let (n, d) = (x.rows(), x.cols());
        if n < 3 {
            return Err(Error::Shape(format!("LDA needs at least 3 samples, got {n}")));
        }
        let mut means = [vec![0.0; d], vec![0.0; d]];
        let mut counts = [0usize; 2];
        for (r, &t) in x.iter_rows().zip(y) {
            let c = usize::from(t);
            counts[c] += 1;
            means[c].iter_mut().zip(r).for_each(|(m, v)| *m += v);
        }
        for c in 0..2 {
            let k = counts[c] as f64;
            means[c].iter_mut().for_each(|m| *m /= k);
        }
        // Rows centered on their own class mean, scaled so that CᵀC is the
        // pooled covariance with an n − 2 denominator.
        let scale = 1.0 / ((n - 2) as f64).sqrt();
        let centered = DMatrix::from_fn(n, d, |i, j| {
            (x.get(i, j) - means[usize::from(y[i])][j]) * scale
        });
        let delta = DVector::from_iterator(d, (0..d).map(|j| means[1][j] - means[0][j]));

        let mut regularized = false;
        let w = match solver {
            LdaSolver::Svd => {
                let svd = centered.svd(false, true);
                let v_t = svd.v_t.expect("requested V");
                let s_max = svd.singular_values.max();
                let tol = s_max * (n.max(d) as f64) * f64::EPSILON;
                let projected = &v_t * &delta;
                let scaled = DVector::from_iterator(
                    projected.len(),
                    projected.iter().zip(svd.singular_values.iter()).map(|(&p, &s)| {
                        if s > tol {
                            p / (s * s)
                        } else {
                            0.0
                        }
                    }),
                );
                v_t.transpose() * scaled
            }
            LdaSolver::Lsqr | LdaSolver::Eigen => {
                let mut cov = centered.transpose() * &centered;
                let eig = SymmetricEigen::new(cov.clone());
                let max = eig.eigenvalues.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
                let min = eig.eigenvalues.iter().fold(f64::INFINITY, |a, &v| a.min(v));
                if max == 0.0 || min / max < RCOND_LIMIT {
                    log::warn!(
                        "pooled covariance is near-singular (rcond {:.3e}); adding a {RIDGE:e} ridge",
                        if max == 0.0 { 0.0 } else { min / max }
                    );
                    regularized = true;
                    for j in 0..d {
                        cov[(j, j)] += RIDGE;
                    }
                }
                if solver == LdaSolver::Lsqr {
                    cov.qr()
                        .solve(&delta)
                        .ok_or_else(|| Error::Shape("singular pooled covariance".into()))?
                } else {
                    let eig = if regularized {
                        SymmetricEigen::new(cov)
                    } else {
                        eig
                    };
                    let q = &eig.eigenvectors;
                    let projected = q.transpose() * &delta;
                    let scaled = DVector::from_iterator(
                        d,
                        projected.iter().zip(eig.eigenvalues.iter()).map(|(p, l)| p / l),
                    );
                    q * scaled
                }
            }
        };
        let coef: Vec<f64> = w.iter().copied().collect();
        let mid: f64 = (0..d).map(|j| 0.5 * (means[0][j] + means[1][j]) * coef[j]).sum();
        let intercept = -mid + (counts[1] as f64 / counts[0] as f64).ln();
        Ok(Self {
            solver,
            coef,
            intercept,
            regularized,
        })
    }

    /// Log posterior odds of class 1.
    pub fn decision(&self, x: &[f64]) -> f64 {
        self.intercept + crate::matrix::dot(&self.coef, x)
    }
}
