//! Hypercontractive-norm utilities: soft (delta, p)-sparsity of vectors,
//! the constructive dimension-bound witness for subspaces, low-degree
//! polynomial subspaces over the Boolean cube, certified (2,4)
//! hypercontractivity bounds, and the reduction from non-expanding small
//! vertex sets to sparse vectors in low-eigenvalue eigenspaces.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expansion::{phi_of_set, Graph};
use crate::poly::hypercube_point;
use crate::sparse_vec::{
    certify_quartic, quartic_moment_matrix, FourNormCertificate, FourNormVerify, Subspace,
    verify_4norm_certificate,
};

/// Eigenvalue threshold multiplier in [`small_set_to_sparse_vector`]: the
/// projection keeps eigenvectors of the normalized Laplacian with eigenvalue
/// at most `C_PROJ * phi`.
pub const C_PROJ: f64 = 2.0;

/// Parameters of the soft sparsity test `E_i x_i^{2p} >= delta^{1-p}
/// (E_i x_i^2)^p`; expectation = average over coordinates.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SparsityQuery {
    pub delta: f64,
    pub p: u32,
}

impl SparsityQuery {
    pub fn new(delta: f64, p: u32) -> Result<Self> {
        if !(delta > 0.0 && delta <= 1.0) {
            return Err(Error::Invalid(format!("delta {} outside (0, 1]", delta)));
        }
        if p < 2 {
            return Err(Error::Invalid(format!("p = {} must be >= 2", p)));
        }
        Ok(SparsityQuery { delta, p })
    }
}

/// Evaluates the defining inequality of (delta, p)-sparsity. The indicator
/// of a set of measure delta satisfies it with equality for every p.
pub fn is_delta_p_sparse(x: &DVector<f64>, q: &SparsityQuery) -> Result<bool> {
    let n = x.len();
    if n == 0 || x.amax() == 0.0 {
        return Err(Error::Invalid("sparsity test needs a nonzero vector".into()));
    }
    let e2p: f64 = x.iter().map(|v| v.powi(2 * q.p as i32)).sum::<f64>() / n as f64;
    let e2: f64 = x.iter().map(|v| v * v).sum::<f64>() / n as f64;
    let rhs = q.delta.powi(1 - q.p as i32) * e2.powi(q.p as i32);
    Ok(e2p >= rhs * (1.0 - 1e-9))
}

/// Witness produced by [`dim_bound_witness`].
#[derive(Debug, Clone)]
pub struct DimBoundWitness {
    /// The selected projected basis vector `x^i = P e_i`.
    pub x: DVector<f64>,
    /// `E x^{2p} / (E x^2)^p`, guaranteed at least `d^p / n`.
    pub ratio: f64,
    /// The guaranteed floor `d^p / n`.
    pub bound: f64,
}

/// Constructive proof that a d-dimensional subspace of R^n contains a vector
/// with large 2p-th moment: among the projections `x^i = P e_i` of the
/// standard basis, the one maximizing `(x^i_i)^2 / ||x^i||^2` satisfies
/// `E x^{2p} >= (d^p / n)(E x^2)^p`.
pub fn dim_bound_witness(sub: &Subspace, p: u32) -> Result<DimBoundWitness> {
    if p < 1 {
        return Err(Error::Invalid("p must be >= 1".into()));
    }
    let proj = sub.projector();
    let n = proj.nrows();
    let d = sub.dim();
    let mut best: Option<(usize, f64)> = None;
    for i in 0..n {
        let xi = proj.column(i);
        let nrm2 = xi.norm_squared();
        if nrm2 < 1e-14 {
            continue;
        }
        let score = xi[i] * xi[i] / nrm2;
        if best.map_or(true, |(_, s)| score > s) {
            best = Some((i, score));
        }
    }
    let (i, _) = best.ok_or_else(|| Error::Invalid("zero projector".into()))?;
    let x: DVector<f64> = proj.column(i).into_owned();
    let e2p: f64 = x.iter().map(|v| v.powi(2 * p as i32)).sum::<f64>() / n as f64;
    let e2: f64 = x.norm_squared() / n as f64;
    Ok(DimBoundWitness {
        x,
        ratio: e2p / e2.powi(p as i32),
        bound: (d as f64).powi(p as i32) / n as f64,
    })
}

/// Evaluations of multilinear monomials of degree <= k on `{-1, +1}^t`,
/// orthonormalized; dimension `sum_{j <= k} C(t, j)`.
#[derive(Debug, Clone)]
pub struct WkSubspace {
    pub t: usize,
    pub k: usize,
    pub sub: Subspace,
}

pub fn build_wk(t: usize, k: usize) -> Result<WkSubspace> {
    if t > 12 {
        return Err(Error::Invalid(format!("cube dimension {} > 12", t)));
    }
    if k > t {
        return Err(Error::Invalid(format!("degree {} exceeds cube dimension {}", k, t)));
    }
    let n = 1usize << t;
    // subsets of {0..t-1} of size <= k, as characters chi_S
    let mut cols: Vec<DVector<f64>> = Vec::new();
    let norm = 1.0 / (n as f64).sqrt();
    for mask in 0..(1usize << t) {
        if (mask.count_ones() as usize) > k {
            continue;
        }
        let col = DVector::from_fn(n, |idx, _| {
            let point = hypercube_point(t, idx);
            let mut v = 1.0;
            for b in 0..t {
                if mask & (1 << b) != 0 {
                    v *= point[b];
                }
            }
            v * norm
        });
        cols.push(col);
    }
    let dim = cols.len();
    let mut basis = DMatrix::zeros(n, dim);
    for (j, c) in cols.into_iter().enumerate() {
        basis.set_column(j, &c);
    }
    Ok(WkSubspace {
        t,
        k,
        sub: Subspace::new(basis)?,
    })
}

/// Certified hypercontractivity bound `E x^4 <= B (E x^2)^2` for all x in
/// the subspace, with the Gram witness behind it.
#[derive(Debug, Clone)]
pub struct HyperCert {
    pub b: f64,
    pub cert: FourNormCertificate,
}

/// Degree-4 SOS certification of the (2,4) hypercontractive inequality over
/// a subspace with orthonormal basis B: writing x = B c, the ratio
/// `E x^4 / (E x^2)^2` equals `n Q(c) / ||c||^4` with Q the quartic moment
/// form of the basis rows, so a certified `Q <= rho ||c||^4` gives
/// `B = n rho`.
pub fn certify_hypercontractivity(sub: &Subspace) -> Result<HyperCert> {
    let n = sub.n;
    if n > 256 {
        return Err(Error::Invalid(format!("ambient dimension {} > 256", n)));
    }
    let m = quartic_moment_matrix(&sub.basis);
    let cert = certify_quartic(&m);
    Ok(HyperCert {
        b: n as f64 * cert.rho,
        cert,
    })
}

/// Re-checks the Gram identity behind a [`HyperCert`].
pub fn verify_hypercontractivity(sub: &Subspace, hc: &HyperCert) -> Result<FourNormVerify> {
    verify_4norm_certificate(sub, &hc.cert)
}

/// Output of [`small_set_to_sparse_vector`].
#[derive(Debug, Clone)]
pub struct SmallSetProjection {
    /// Projection of the indicator of S onto the low eigenspace.
    pub x: DVector<f64>,
    /// `||x||^2 / |S|`: fraction of the indicator's mass retained.
    pub retained_mass: f64,
    /// Dimension of the eigenspace `{lambda <= C_PROJ * phi}`.
    pub eigenspace_dim: usize,
    /// The sparsity query evaluated on the projection.
    pub query: SparsityQuery,
    pub sparse: bool,
}

/// Reduction from a non-expanding small set to a soft-sparse vector: project
/// the indicator of S onto the span of normalized-Laplacian eigenvectors
/// with eigenvalue <= `C_PROJ * phi`. The Markov-style eigenvalue argument
/// guarantees retained mass >= 1 - phi_G(S) / (C_PROJ * phi).
pub fn small_set_to_sparse_vector(g: &Graph, set: &[usize], phi: f64) -> Result<SmallSetProjection> {
    let n = g.n;
    let phi_s = phi_of_set(g, set)?;
    if phi_s > phi + 1e-12 {
        return Err(Error::Invalid(format!(
            "set has expansion {} > threshold {}",
            phi_s, phi
        )));
    }
    // normalized Laplacian I - A/d
    let lap = DMatrix::identity(n, n) - g.adjacency() / g.d as f64;
    let eig = lap.symmetric_eigen();
    let cutoff = C_PROJ * phi + 1e-9;
    let mut x = DVector::zeros(n);
    let mut indicator = DVector::zeros(n);
    for &v in set {
        indicator[v] = 1.0;
    }
    let mut dim = 0;
    for (j, &lam) in eig.eigenvalues.iter().enumerate() {
        if lam <= cutoff {
            dim += 1;
            let u = eig.eigenvectors.column(j);
            x += u * u.dot(&indicator);
        }
    }
    if dim == 0 {
        return Err(Error::Invalid("empty eigenspace at threshold".into()));
    }
    let retained = x.norm_squared() / set.len() as f64;
    let query = SparsityQuery::new((set.len() as f64 / n as f64).min(1.0), 2)?;
    let sparse = if x.amax() > 0.0 {
        is_delta_p_sparse(&x, &query)?
    } else {
        false
    };
    Ok(SmallSetProjection {
        x,
        retained_mass: retained,
        eigenspace_dim: dim,
        query,
        sparse,
    })
}
