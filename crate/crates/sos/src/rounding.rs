//! Gaussian rounding: a sampler over R^n whose first two moments agree with
//! a pseudoexpectation. Draws `y = mean + sum_k sqrt(lambda_k) w_k v^k` for
//! i.i.d. standard Gaussians `w_k`, with `(lambda_k, v^k)` the spectrum of
//! the pseudo-covariance.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::poly::{standard_normal, Monomial};
use crate::pseudo::PseudoExpectation;
use crate::rng::{stream_rng, SosRng};

#[derive(Debug, Clone)]
pub struct GaussianSampler {
    mean: DVector<f64>,
    /// Eigenvalues of the pseudo-covariance, clamped to be nonnegative.
    eigvals: DVector<f64>,
    /// Orthonormal eigenvectors, one per column.
    eigvecs: DMatrix<f64>,
}

/// Builds the sampler from the degree-<=2 moments of `pe`. The
/// pseudo-covariance `M = L((x - mean)(x - mean)^T)` is PSD for any valid
/// pseudoexpectation since `z^T M z = L((z . (x - mean))^2)`; eigenvalues in
/// `[-psd_tol, 0)` are roundoff and get clamped, anything lower is an error.
pub fn match_two_moments(pe: &PseudoExpectation) -> Result<GaussianSampler> {
    match_two_moments_with(pe, 1e-7)
}

pub fn match_two_moments_with(pe: &PseudoExpectation, psd_tol: f64) -> Result<GaussianSampler> {
    let n = pe.num_vars();
    let mut mean = DVector::zeros(n);
    for i in 0..n {
        mean[i] = pe.moment(&Monomial::var(i))?;
    }
    let mut cov = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let second = pe.moment(&Monomial::var(i).mul(&Monomial::var(j)))?;
            let c = second - mean[i] * mean[j];
            cov[(i, j)] = c;
            cov[(j, i)] = c;
        }
    }
    let eig = cov.symmetric_eigen();
    let lmin = eig.eigenvalues.min();
    if lmin < -psd_tol {
        return Err(Error::InvalidPseudoExpectation(format!(
            "pseudo-covariance eigenvalue {} below -{}",
            lmin, psd_tol
        )));
    }
    let eigvals = eig.eigenvalues.map(|l| l.max(0.0));
    // orthonormality guard on the factorization we are about to trust
    let q = &eig.eigenvectors;
    let defect = (q.transpose() * q - DMatrix::identity(n, n)).amax();
    if defect > 1e-9 {
        return Err(Error::Solver(format!(
            "eigenvector orthonormality defect {:.3e}",
            defect
        )));
    }
    Ok(GaussianSampler {
        mean,
        eigvals,
        eigvecs: eig.eigenvectors,
    })
}

impl GaussianSampler {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    /// `E (y - mean)(y - mean)^T` reconstructed from the factors.
    pub fn covariance(&self) -> DMatrix<f64> {
        let n = self.dim();
        let mut scaled = self.eigvecs.clone();
        for (k, &l) in self.eigvals.iter().enumerate() {
            scaled.column_mut(k).scale_mut(l);
        }
        let m = &scaled * self.eigvecs.transpose();
        let mut out = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                out[(i, j)] = (m[(i, j)] + m[(j, i)]) * 0.5;
            }
        }
        out
    }

    /// `E y_i y_j` (second moments, not centered).
    pub fn second_moments(&self) -> DMatrix<f64> {
        self.covariance() + &self.mean * self.mean.transpose()
    }

    pub fn sample_with(&self, rng: &mut SosRng) -> Vec<f64> {
        let n = self.dim();
        let mut y = self.mean.clone();
        for k in 0..n {
            let l = self.eigvals[k];
            if l > 0.0 {
                let w = standard_normal(rng);
                y.axpy(l.sqrt() * w, &self.eigvecs.column(k).into_owned(), 1.0);
            }
        }
        y.iter().copied().collect()
    }

    /// `count` draws, reproducible from `seed`; draw `t` uses stream `t` so
    /// subsets of the sequence can be regenerated independently.
    pub fn sample(&self, count: usize, seed: u64) -> Vec<Vec<f64>> {
        assert!(count >= 1);
        (0..count)
            .map(|t| {
                let mut rng = stream_rng(seed, t as u64);
                self.sample_with(&mut rng)
            })
            .collect()
    }
}
