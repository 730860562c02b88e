//! Unscented transform pieces: factorization, sigma points, noise adaptation.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Diagonal jitter tried in turn, relative to the mean diagonal magnitude.
const JITTER: [f64; 7] = [0.0, 1e-12, 1e-11, 1e-10, 1e-9, 1e-8, 1e-6];

pub fn symmetrize(p: &mut DMatrix<f64>) {
    let t = p.transpose();
    *p += t;
    *p *= 0.5;
}

/// Clip eigenvalues below zero; `true` if anything changed.
pub fn repair_psd(p: &mut DMatrix<f64>) -> bool {
    let eig = SymmetricEigen::new(p.clone());
    let floor = -1e-10 * eig.eigenvalues.amax().max(f64::MIN_POSITIVE);
    if eig.eigenvalues.min() >= floor {
        return false;
    }
    let clipped = eig.eigenvalues.map(|v| v.max(0.0));
    *p = &eig.eigenvectors * DMatrix::from_diagonal(&clipped) * eig.eigenvectors.transpose();
    symmetrize(p);
    true
}

/// Lower Cholesky factor, retried with escalating diagonal jitter.
pub fn cholesky_lower(p: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = p.nrows();
    let mut a = p.clone();
    symmetrize(&mut a);
    let scale = (a.diagonal().iter().map(|v| v.abs()).sum::<f64>() / n.max(1) as f64).max(f64::MIN_POSITIVE);
    for j in JITTER {
        let mut b = a.clone();
        for i in 0..n {
            b[(i, i)] += j * scale;
        }
        if let Some(c) = b.cholesky() {
            return Ok(c.l());
        }
    }
    Err(Error::CholeskyFailure)
}

#[derive(Clone, Debug)]
pub struct SigmaPoints {
    /// `2N + 1` points: the mean, then `mean + col_j`, then `mean - col_j`.
    pub points: Vec<DVector<f64>>,
    pub weights: Vec<f64>,
}

impl SigmaPoints {
    pub fn dim(&self) -> usize {
        (self.points.len() - 1) / 2
    }

    /// Factor column that point `j` is built from (`None` for the mean).
    pub fn column(&self, j: usize) -> Option<usize> {
        if j == 0 {
            None
        } else {
            Some((j - 1) % self.dim())
        }
    }

    pub fn mean(&self) -> DVector<f64> {
        weighted_mean(&self.points, &self.weights)
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        let m = self.mean();
        weighted_cross(&self.points, &m, &self.points, &m, &self.weights)
    }
}

/// Scaled sigma points of `(mean, p)`; requires `N + κ > 0`.
pub fn sigma_points(mean: &DVector<f64>, p: &DMatrix<f64>, kappa: f64) -> Result<SigmaPoints> {
    let n = mean.len();
    if p.nrows() != n || p.ncols() != n {
        return Err(Error::DimensionMismatch(format!("{}x{} covariance for a {n}-vector", p.nrows(), p.ncols())));
    }
    let lambda = n as f64 + kappa;
    if !(lambda > 0.0) {
        return Err(Error::Config(format!("N + kappa must be positive, got {lambda}")));
    }
    let l = cholesky_lower(&(p * lambda))?;
    let mut points = Vec::with_capacity(2 * n + 1);
    points.push(mean.clone());
    for j in 0..n {
        points.push(mean + l.column(j));
    }
    for j in 0..n {
        points.push(mean - l.column(j));
    }
    let mut weights = vec![1.0 / (2.0 * lambda); 2 * n + 1];
    weights[0] = kappa / lambda;
    Ok(SigmaPoints { points, weights })
}

pub fn weighted_mean(points: &[DVector<f64>], w: &[f64]) -> DVector<f64> {
    let mut m = DVector::zeros(points[0].len());
    for (p, wi) in points.iter().zip(w) {
        m.axpy(*wi, p, 1.0);
    }
    m
}

/// `Σ w_j (a_j - ā)(b_j - b̄)ᵀ`.
pub fn weighted_cross(
    a: &[DVector<f64>],
    a_mean: &DVector<f64>,
    b: &[DVector<f64>],
    b_mean: &DVector<f64>,
    w: &[f64],
) -> DMatrix<f64> {
    let mut c = DMatrix::zeros(a_mean.len(), b_mean.len());
    for ((ai, bi), wi) in a.iter().zip(b).zip(w) {
        let da = ai - a_mean;
        let db = bi - b_mean;
        c.ger(*wi, &da, &db, 1.0);
    }
    c
}

/// Convex-combination update of the process and measurement noise:
/// `Q' = (1-α_Q) Q + α_Q K d dᵀ Kᵀ`, `R' = (1-α_R) R + α_R d dᵀ`.
pub fn adapt_noise(
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    d: &DVector<f64>,
    k: &DMatrix<f64>,
    alpha_q: f64,
    alpha_r: f64,
) -> (DMatrix<f64>, DMatrix<f64>) {
    let kd = k * d;
    let q_new = q * (1.0 - alpha_q) + &kd * kd.transpose() * alpha_q;
    let r_new = r * (1.0 - alpha_r) + d * d.transpose() * alpha_r;
    (q_new, r_new)
}
