//! Planted sparse-vector recovery: given the span of a sparse unit vector
//! and a few random directions, find the sparse vector by maximizing the
//! 4-norm of projected vectors over degree-4 pseudoexpectations, then
//! Gaussian rounding. Also certifies upper bounds on the 4-norm of random
//! subspaces (the soundness half of the argument).

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::poly::{standard_normal, Polynomial};
use crate::relax::{MomentOutcome, MomentProgram};
use crate::rng::{seeded_rng, stream_rng, SosRng};
use crate::rounding::match_two_moments_with;
use crate::sdp::{lambda_min, SdpOptions};
use rand::Rng;

/// Rounding draws per recovery.
pub const T_ROUNDS: usize = 20;
/// Slack on the objective threshold `(1 - OPT_SLACK) / mu0`.
pub const OPT_SLACK: f64 = 0.05;
/// Desk guard on the ambient dimension of the degree-4 relaxation.
pub const MAX_AMBIENT: usize = 40;

/// Subspace of R^n given by an orthonormal basis (columns).
#[derive(Debug, Clone)]
pub struct Subspace {
    pub n: usize,
    pub basis: DMatrix<f64>,
}

impl Subspace {
    pub fn new(basis: DMatrix<f64>) -> Result<Self> {
        let n = basis.nrows();
        let k = basis.ncols();
        let gram = basis.transpose() * &basis;
        let defect = (gram - DMatrix::identity(k, k)).amax();
        if defect > 1e-10 {
            return Err(Error::Invalid(format!(
                "basis not orthonormal: defect {:.3e}",
                defect
            )));
        }
        Ok(Subspace { n, basis })
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    /// `P = B B^T`.
    pub fn projector(&self) -> DMatrix<f64> {
        &self.basis * self.basis.transpose()
    }

    /// Orthonormal basis of `self` intersected with the complement of `x`
    /// (assumes `x` lies in the subspace).
    pub fn complement_within(&self, x: &DVector<f64>) -> Result<Subspace> {
        let c = self.basis.transpose() * x; // coordinates of x
        let k = self.dim();
        // Householder-style: any orthonormal completion of c in R^k
        let mut cols = Vec::new();
        let mut q = DMatrix::zeros(k, k - 1);
        for i in 0..k {
            let mut e = DVector::zeros(k);
            e[i] = 1.0;
            cols.push(e);
        }
        let mut taken = 0;
        let mut used: Vec<DVector<f64>> = vec![c.normalize()];
        for e in cols {
            if taken == k - 1 {
                break;
            }
            let mut v = e;
            for u in &used {
                let d = u.dot(&v);
                v -= u * d;
            }
            let norm = v.norm();
            if norm > 1e-8 {
                let v = v / norm;
                q.set_column(taken, &v);
                used.push(v);
                taken += 1;
            }
        }
        if taken != k - 1 {
            return Err(Error::Solver("complement completion failed".into()));
        }
        Subspace::new(&self.basis * q)
    }
}

/// A hidden sparse unit vector together with the subspace it spans with
/// `d` random directions.
#[derive(Debug, Clone)]
pub struct SparseInstance {
    pub x0: DVector<f64>,
    pub subspace: Subspace,
    /// Support size of `x0`.
    pub mu: f64,
    /// `||x0||_2^4 / ||x0||_4^4 <= mu`.
    pub mu0: f64,
}

/// `||x||_2^4 / ||x||_4^4`, the analytic sparsity proxy.
pub fn mu0_of(x: &DVector<f64>) -> f64 {
    let n2: f64 = x.iter().map(|v| v * v).sum();
    let n4: f64 = x.iter().map(|v| v.powi(4)).sum();
    n2 * n2 / n4
}

/// Plants a unit vector with `support_size` nonzero entries of equal
/// magnitude and random signs, spans it with `d` Gaussian directions
/// orthogonal to it, and hides it behind a random rotation of the basis.
pub fn generate_instance(
    n: usize,
    d: usize,
    support_size: usize,
    seed: u64,
) -> Result<SparseInstance> {
    if d >= n || support_size == 0 || support_size > n {
        return Err(Error::Dimension(format!(
            "need d < n and 1 <= support <= n; got n = {}, d = {}, support = {}",
            n, d, support_size
        )));
    }
    let mut rng = seeded_rng(seed);
    // random support, +-1 entries, normalized
    let mut idx: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.gen_range(0..=i);
        idx.swap(i, j);
    }
    let mut x0 = DVector::zeros(n);
    let scale = 1.0 / (support_size as f64).sqrt();
    for &i in idx.iter().take(support_size) {
        let sign = if rng.gen::<bool>() { 1.0 } else { -1.0 };
        x0[i] = sign * scale;
    }
    // Gaussian directions, projected off x0, then Gram-Schmidt
    let mut cols: Vec<DVector<f64>> = vec![x0.clone()];
    while cols.len() < d + 1 {
        let mut g = DVector::from_fn(n, |_, _| standard_normal(&mut rng));
        for u in &cols {
            let dpr = u.dot(&g);
            g -= u * dpr;
        }
        let norm = g.norm();
        if norm > 1e-8 {
            cols.push(g / norm);
        }
    }
    let mut b = DMatrix::zeros(n, d + 1);
    for (j, c) in cols.iter().enumerate() {
        b.set_column(j, c);
    }
    // hide x0: rotate basis columns by a random orthogonal matrix
    let k = d + 1;
    let g = DMatrix::from_fn(k, k, |_, _| standard_normal(&mut rng));
    let qr = g.qr();
    let b = &b * qr.q();
    let subspace = Subspace::new(b)?;
    Ok(SparseInstance {
        mu: support_size as f64,
        mu0: mu0_of(&x0),
        x0,
        subspace,
    })
}

/// `||P u||_4^4` expanded as a degree-4 polynomial in `u`.
pub fn p4_norm_poly(projector: &DMatrix<f64>) -> Polynomial {
    let n = projector.nrows();
    let mut p = Polynomial::zero(n);
    for i in 0..n {
        let row: Vec<f64> = projector.row(i).iter().copied().collect();
        let lin = Polynomial::linear_form(&row);
        p = p.add(&lin.square().square()).unwrap();
    }
    p
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RecoveryReport {
    pub x_star: Vec<f64>,
    /// `<x*, x0>^2`.
    pub correlation: f64,
    /// Optimal `L(||P u||_4^4)` of the relaxation.
    pub optimum: f64,
    /// `L(<u, x0>^2)`: pseudo-mass along the planted direction.
    pub alpha0_sq: f64,
}

pub enum RecoveryOutcome {
    Recovered(RecoveryReport),
    /// The relaxation value fell below `(1 - OPT_SLACK)/mu0`: the subspace
    /// does not even pseudo-contain a vector of the planted sparsity.
    NoSparseVector { optimum: f64, threshold: f64 },
}

pub fn recover(inst: &SparseInstance, seed: u64) -> Result<RecoveryOutcome> {
    recover_with(inst, seed, &SdpOptions::default())
}

pub fn recover_with(
    inst: &SparseInstance,
    seed: u64,
    opts: &SdpOptions,
) -> Result<RecoveryOutcome> {
    let n = inst.subspace.n;
    if n > MAX_AMBIENT {
        return Err(Error::Dimension(format!(
            "degree-4 recovery limited to n <= {}, got {}",
            MAX_AMBIENT, n
        )));
    }
    let projector = inst.subspace.projector();
    let objective = p4_norm_poly(&projector).prune(1e-14);
    let mut prog = MomentProgram::new(n, 4)?;
    let norm_con = Polynomial::norm2_squared(n).sub(&Polynomial::constant(n, 1.0))?;
    prog.constrain_satisfaction(&norm_con)?;
    prog.set_objective(&objective, true)?;
    let (pe, value) = match prog.solve(opts)? {
        MomentOutcome::Solved { pe, value, .. } => (pe, value),
        MomentOutcome::Infeasible { .. } => {
            return Err(Error::Solver("recovery relaxation reported infeasible".into()))
        }
    };
    let threshold = (1.0 - OPT_SLACK) / inst.mu0;
    if value < threshold {
        return Ok(RecoveryOutcome::NoSparseVector {
            optimum: value,
            threshold,
        });
    }
    // round: best of T normalized Gaussian samples by the objective
    // the pseudo-covariance inherits the solver's PSD slack, so give the
    // sampler a floor an order of magnitude looser than the solve
    let sampler = match_two_moments_with(&pe, (10.0 * opts.psd_tol).max(1e-6))?;
    let mut best: Option<(Vec<f64>, f64)> = None;
    for t in 0..T_ROUNDS {
        let mut rng: SosRng = stream_rng(seed, t as u64);
        let y = DVector::from_vec(sampler.sample_with(&mut rng));
        let norm = y.norm();
        if norm < 1e-12 {
            continue;
        }
        let y = y / norm;
        let score = objective.eval(y.as_slice())?;
        if best.as_ref().map_or(true, |(_, s)| score > *s) {
            best = Some((y.iter().copied().collect(), score));
        }
    }
    let (x_star, _) = best.ok_or(Error::RoundingFailure(T_ROUNDS))?;
    let xs = DVector::from_vec(x_star.clone());
    let correlation = xs.dot(&inst.x0).powi(2);
    let alpha0 = Polynomial::linear_form(inst.x0.as_slice());
    let alpha0_sq = pe.expect(&alpha0.square())?;
    Ok(RecoveryOutcome::Recovered(RecoveryReport {
        x_star,
        correlation,
        optimum: value,
        alpha0_sq,
    }))
}

/// Certified upper bound `||P u||_4^4 <= ||u||_2^4 / mu_prime` with an
/// explicit PSD Gram witness in the coefficient space of the subspace.
#[derive(Debug, Clone)]
pub struct FourNormCertificate {
    /// Certified constant: `Q(c) <= rho ||c||^4` as an SOS identity.
    pub rho: f64,
    pub mu_prime: f64,
    /// Gram witness over the `k^2`-dimensional space of `c (x) c`.
    pub gram: DMatrix<f64>,
    /// Value of `a` in the `||c||^4` representation used by the witness.
    pub a_star: f64,
}

/// `E (w (x) w)(w (x) w)^T = I + T + vec(I) vec(I)^T` for standard Gaussian
/// `w` on R^k: the closed-form moment matrix behind `E <w,x>^4 = 3 ||x||^4`.
pub fn gaussian_fourth_moment_matrix(k: usize) -> DMatrix<f64> {
    let k2 = k * k;
    let mut m = DMatrix::identity(k2, k2);
    for i in 0..k {
        for j in 0..k {
            m[(i * k + j, j * k + i)] += 1.0;
            m[(i * k + i, j * k + j)] += 1.0;
        }
    }
    m
}

/// `sum_i (b_i (x) b_i)(b_i (x) b_i)^T` over the rows `b_i` of the basis:
/// the quartic `||P u||_4^4` restricted to subspace coordinates.
pub fn quartic_moment_matrix(basis: &DMatrix<f64>) -> DMatrix<f64> {
    let n = basis.nrows();
    let k = basis.ncols();
    let mut m = DMatrix::zeros(k * k, k * k);
    for i in 0..n {
        let b = basis.row(i);
        let mut w = DVector::zeros(k * k);
        for p in 0..k {
            for q in 0..k {
                w[p * k + q] = b[p] * b[q];
            }
        }
        m += &w * w.transpose();
    }
    m
}

/// `rho(a) = a + lambda_max(M - (a/3)(I + T + vv^T))`: the best bound from
/// the one-parameter family of Gram representations of `||c||^4`. Convex in
/// `a`; minimized by golden-section search.
fn rho_of(m: &DMatrix<f64>, base: &DMatrix<f64>, a: f64) -> f64 {
    let h = m - base * (a / 3.0);
    a - lambda_min(&(-h))
}

/// Minimizes `rho(a)` and assembles the witness `H = (rho - a) I +
/// (a/3)(I + T + vv^T) - M`, which is PSD and represents
/// `rho ||c||^4 - Q(c)`.
pub fn certify_quartic(m: &DMatrix<f64>) -> FourNormCertificate {
    let k2 = m.nrows();
    let k = (k2 as f64).sqrt().round() as usize;
    let base = gaussian_fourth_moment_matrix(k);
    let mut lo = 0.0f64;
    let mut hi = 3.0 * rho_of(m, &base, 0.0).max(1.0);
    // golden-section on a convex function
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - phi * (hi - lo);
    let mut x2 = lo + phi * (hi - lo);
    let mut f1 = rho_of(m, &base, x1);
    let mut f2 = rho_of(m, &base, x2);
    for _ in 0..200 {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - phi * (hi - lo);
            f1 = rho_of(m, &base, x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + phi * (hi - lo);
            f2 = rho_of(m, &base, x2);
        }
    }
    let a_star = (lo + hi) / 2.0;
    let rho = rho_of(m, &base, a_star);
    let gram = DMatrix::identity(k2, k2) * (rho - a_star) + &base * (a_star / 3.0) - m;
    FourNormCertificate {
        rho,
        mu_prime: 1.0 / rho,
        gram,
        a_star,
    }
}

pub enum CertifyOutcome {
    Certified(FourNormCertificate),
    /// `rho` did not beat the trivial bound `||P u||_4^4 <= ||u||_2^4`.
    NoNontrivialBound { rho: f64 },
}

/// Certifies `||P u||_4^4 <= ||u||_2^4 / mu_prime` for the subspace.
pub fn certify_subspace_4norm(sub: &Subspace) -> Result<CertifyOutcome> {
    let m = quartic_moment_matrix(&sub.basis);
    let cert = certify_quartic(&m);
    if cert.mu_prime < 1.0 - 1e-9 {
        return Ok(CertifyOutcome::NoNontrivialBound { rho: cert.rho });
    }
    Ok(CertifyOutcome::Certified(cert))
}

#[derive(Debug, Clone)]
pub struct FourNormVerify {
    /// Max coefficient mismatch between `z^T H z` and `rho ||c||^4 - Q(c)`.
    pub identity_residual: f64,
    pub gram_lambda_min: f64,
    /// `lambda_min(I - B B^T)`: PSD-ness of the lift from coordinates back
    /// to ambient space.
    pub lift_lambda_min: f64,
    pub pass: bool,
}

/// Independent check of the whole certificate chain: the c-space SOS
/// identity, PSD-ness of the Gram witness, and PSD-ness of `I - P` which
/// lifts `||B^T u|| <= ||u||` to ambient space.
pub fn verify_4norm_certificate(sub: &Subspace, cert: &FourNormCertificate) -> Result<FourNormVerify> {
    let k = sub.dim();
    let k2 = k * k;
    if cert.gram.nrows() != k2 || cert.gram.ncols() != k2 {
        return Err(Error::Dimension(format!(
            "gram is {}x{}, expected {}x{}",
            cert.gram.nrows(),
            cert.gram.ncols(),
            k2,
            k2
        )));
    }
    // z^T H z as a polynomial in c
    let mut lhs = Polynomial::zero(k);
    for i in 0..k2 {
        for j in 0..k2 {
            let g = cert.gram[(i, j)];
            if g != 0.0 {
                let m = crate::poly::Monomial::var(i / k)
                    .mul(&crate::poly::Monomial::var(i % k))
                    .mul(&crate::poly::Monomial::var(j / k))
                    .mul(&crate::poly::Monomial::var(j % k));
                lhs.add_term(m, g);
            }
        }
    }
    // rho ||c||^4 - sum_i <b_i, c>^4
    let norm4 = Polynomial::norm2_squared(k).square().scale(cert.rho);
    let mut q = Polynomial::zero(k);
    for i in 0..sub.n {
        let row: Vec<f64> = sub.basis.row(i).iter().copied().collect();
        let lin = Polynomial::linear_form(&row);
        q = q.add(&lin.square().square())?;
    }
    let rhs = norm4.sub(&q)?;
    let identity_residual = lhs.sub(&rhs)?.max_abs_coeff();
    let scale = cert.gram.amax().max(1.0);
    let gram_lambda_min = lambda_min(&cert.gram);
    let lift = DMatrix::identity(sub.n, sub.n) - sub.projector();
    let lift_lambda_min = lambda_min(&lift);
    Ok(FourNormVerify {
        identity_residual,
        gram_lambda_min,
        lift_lambda_min,
        pass: identity_residual <= 1e-8 * scale.max(1.0)
            && gram_lambda_min >= -1e-7 * scale
            && lift_lambda_min >= -1e-7,
    })
}
