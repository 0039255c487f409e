//! Dense semidefinite programming by ADMM splitting.
//!
//! Solves `min <C, X>  s.t.  <A_j, X> = b_j, X >= 0` (PSD) with projection
//! onto the PSD cone by symmetric eigendecomposition. Two entry points:
//! [`solve`] for explicitly assembled problems, and [`FactoredSdp`] for
//! problems whose matrix variable is a linear image `Map(v)` of a smaller
//! vector (moment matrices, Gram matrices with multiplier tails); the latter
//! exploits the fact that each coordinate of `v` occupies a disjoint set of
//! matrix slots.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Solver options; defaults are tuned for moment matrices of side <= ~500.
#[derive(Debug, Clone)]
pub struct SdpOptions {
    /// Tolerance on equality-constraint residuals.
    pub eq_tol: f64,
    /// Allowed negativity of the smallest eigenvalue of the primal matrix.
    pub psd_tol: f64,
    pub max_iters: usize,
}

impl Default for SdpOptions {
    fn default() -> Self {
        SdpOptions {
            eq_tol: 1e-6,
            psd_tol: 1e-7,
            max_iters: 50_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SdpStatus {
    Optimal,
    Infeasible,
    MaxIters,
}

/// `min <C, X>  s.t.  <A_j, X> = b_j, X >= 0` over symmetric `dim x dim` X.
#[derive(Debug, Clone)]
pub struct SdpProblem {
    pub dim: usize,
    pub objective: DMatrix<f64>,
    pub constraints: Vec<(DMatrix<f64>, f64)>,
}

#[derive(Debug, Clone)]
pub struct SdpSolution {
    pub primal: DMatrix<f64>,
    /// Lagrange multipliers of the equality constraints; for
    /// `status == Infeasible` this holds the dual improving ray, scaled so
    /// that `b . ray = -1`.
    pub dual: DVector<f64>,
    pub status: SdpStatus,
    pub objective_value: f64,
    pub iterations: usize,
}

impl SdpProblem {
    pub fn validate(&self) -> Result<()> {
        let check = |m: &DMatrix<f64>, what: &str| -> Result<()> {
            if m.nrows() != self.dim || m.ncols() != self.dim {
                return Err(Error::Dimension(format!(
                    "{} is {}x{}, expected {}x{}",
                    what,
                    m.nrows(),
                    m.ncols(),
                    self.dim,
                    self.dim
                )));
            }
            let mut asym: f64 = 0.0;
            for i in 0..self.dim {
                for j in (i + 1)..self.dim {
                    asym = asym.max((m[(i, j)] - m[(j, i)]).abs());
                }
            }
            let scale = m.amax().max(1.0);
            if asym > 1e-12 * scale {
                return Err(Error::NotSymmetric(asym));
            }
            Ok(())
        };
        check(&self.objective, "objective")?;
        for (j, (a, _)) in self.constraints.iter().enumerate() {
            check(a, &format!("constraint {}", j))?;
        }
        Ok(())
    }
}

/// Frobenius inner product of symmetric matrices.
fn frob(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// Eigendecomposition-based pseudo-inverse applier for a symmetric PSD Gram
/// matrix; also exposes the range residual for consistency checks.
struct GramPinv {
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
}

impl GramPinv {
    /// Tikhonov-regularized solve: Cholesky of `gram + mu I` with a tiny
    /// `mu`. Exact kernel directions (redundant constraints) are damped
    /// instead of inverted, and unlike an eigendecomposition this stays
    /// accurate on large matrices with tightly clustered spectra.
    fn new(gram: DMatrix<f64>) -> Self {
        let n = gram.nrows();
        let scale = gram.diagonal().amax().max(1e-300);
        let chol = (0..).find_map(|k| {
            let mu = scale * 1e-10 * 100f64.powi(k);
            (&gram + DMatrix::identity(n, n) * mu).cholesky()
        });
        GramPinv {
            chol: chol.expect("regularized gram is positive definite"),
        }
    }

    fn apply(&self, rhs: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(rhs)
    }
}


/// Sparse row view of a dense equality matrix; the moment-program rows have
/// only a handful of nonzeros each, so matvecs through this structure are
/// far cheaper than dense gemv.
struct SparseRows {
    rows: Vec<Vec<(usize, f64)>>,
    ncols: usize,
}

impl SparseRows {
    fn of(m: &DMatrix<f64>) -> Self {
        let rows = (0..m.nrows())
            .map(|i| {
                (0..m.ncols())
                    .filter_map(|j| {
                        let v = m[(i, j)];
                        if v != 0.0 {
                            Some((j, v))
                        } else {
                            None
                        }
                    })
                    .collect()
            })
            .collect();
        SparseRows {
            rows,
            ncols: m.ncols(),
        }
    }

    fn mul(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            self.rows.len(),
            self.rows
                .iter()
                .map(|r| r.iter().map(|&(j, v)| v * x[j]).sum()),
        )
    }

    /// `E D^-1 E^T` via sorted sparse row dots.
    fn gram_dinv(&self, d_inv: &DVector<f64>) -> DMatrix<f64> {
        let m = self.rows.len();
        let mut gram = DMatrix::zeros(m, m);
        for i in 0..m {
            for j in i..m {
                let (a, b) = (&self.rows[i], &self.rows[j]);
                let (mut p, mut q) = (0, 0);
                let mut acc = 0.0;
                while p < a.len() && q < b.len() {
                    match a[p].0.cmp(&b[q].0) {
                        std::cmp::Ordering::Less => p += 1,
                        std::cmp::Ordering::Greater => q += 1,
                        std::cmp::Ordering::Equal => {
                            acc += a[p].1 * b[q].1 * d_inv[a[p].0];
                            p += 1;
                            q += 1;
                        }
                    }
                }
                gram[(i, j)] = acc;
                gram[(j, i)] = acc;
            }
        }
        gram
    }

    fn mul_transpose(&self, y: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.ncols);
        for (i, r) in self.rows.iter().enumerate() {
            let yi = y[i];
            if yi != 0.0 {
                for &(j, v) in r {
                    out[j] += v * yi;
                }
            }
        }
        out
    }
}

/// Projects a symmetric matrix onto the PSD cone; returns the minimum
/// eigenvalue seen before clamping.
pub fn project_psd(m: &DMatrix<f64>) -> (DMatrix<f64>, f64) {
    let sym = symmetrize(m);
    let eig = sym.clone().symmetric_eigen();
    let lambda_min = eig.eigenvalues.min();
    if lambda_min >= 0.0 {
        return (sym, lambda_min);
    }
    let clamped = eig.eigenvalues.map(|l| l.max(0.0));
    let mut scaled = eig.eigenvectors.clone();
    for (j, &l) in clamped.iter().enumerate() {
        scaled.column_mut(j).scale_mut(l);
    }
    let out = &scaled * eig.eigenvectors.transpose();
    (symmetrize(&out), lambda_min)
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Smallest eigenvalue of a symmetric matrix; a 0x0 matrix is trivially
/// PSD and reports 0.
pub fn lambda_min(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    symmetrize(m).symmetric_eigen().eigenvalues.min()
}

pub fn solve(problem: &SdpProblem, opts: &SdpOptions) -> Result<SdpSolution> {
    problem.validate()?;
    let dim = problem.dim;
    let m = problem.constraints.len();

    // scale constraints to unit Frobenius norm
    let mut a_mats: Vec<DMatrix<f64>> = Vec::with_capacity(m);
    let mut b = DVector::zeros(m);
    for (j, (a, rhs)) in problem.constraints.iter().enumerate() {
        let a = symmetrize(a);
        let norm = frob(&a, &a).sqrt();
        if norm < 1e-300 {
            if rhs.abs() > opts.eq_tol {
                // 0 = nonzero: trivially infeasible
                let mut ray = DVector::zeros(m);
                ray[j] = -1.0 / rhs;
                return Ok(SdpSolution {
                    primal: DMatrix::zeros(dim, dim),
                    dual: ray,
                    status: SdpStatus::Infeasible,
                    objective_value: f64::INFINITY,
                    iterations: 0,
                });
            }
            a_mats.push(a);
            b[j] = 0.0;
        } else {
            a_mats.push(&a / norm);
            b[j] = rhs / norm;
        }
    }

    let mut gram = DMatrix::zeros(m, m);
    for i in 0..m {
        for j in i..m {
            let g = frob(&a_mats[i], &a_mats[j]);
            gram[(i, j)] = g;
            gram[(j, i)] = g;
        }
    }
    let pinv = GramPinv::new(gram.clone());

    // affine consistency: if b is not in range(A A^T) the linear system
    // itself is infeasible and the least-squares residual is a Farkas ray
    let y0 = pinv.apply(&b);
    let resid = &gram * &y0 - &b;
    if resid.norm() > 1e-9 * b.norm().max(1.0) {
        let scale = -b.dot(&resid);
        let ray = if scale.abs() > 1e-300 {
            -&resid / scale.abs() * scale.signum() * -1.0
        } else {
            resid.clone()
        };
        // ray satisfies sum ray_j A_j ~ 0 and b.ray != 0; normalize b.ray=-1
        let br = b.dot(&ray);
        let ray = &ray * (-1.0 / br);
        return Ok(SdpSolution {
            primal: DMatrix::zeros(dim, dim),
            dual: ray,
            status: SdpStatus::Infeasible,
            objective_value: f64::INFINITY,
            iterations: 0,
        });
    }

    let apply_a = |x: &DMatrix<f64>| -> DVector<f64> {
        DVector::from_iterator(m, a_mats.iter().map(|a| frob(a, x)))
    };
    let apply_at = |y: &DVector<f64>| -> DMatrix<f64> {
        let mut out = DMatrix::zeros(dim, dim);
        for (j, a) in a_mats.iter().enumerate() {
            out += a * y[j];
        }
        out
    };
    let project_affine = |x: &DMatrix<f64>| -> (DMatrix<f64>, DVector<f64>) {
        let y = pinv.apply(&(apply_a(x) - &b));
        (x - apply_at(&y), y)
    };

    let obj_scale = problem.objective.amax().max(1.0);
    let c = &problem.objective / obj_scale;

    let mut z = DMatrix::<f64>::zeros(dim, dim);
    let mut u = DMatrix::<f64>::zeros(dim, dim);
    let mut rho: f64 = 1.0;
    let mut y_est = DVector::zeros(m);
    let mut y_prev = DVector::zeros(m);
    let mut status = SdpStatus::MaxIters;
    let mut iterations = opts.max_iters;
    let check_every = 50;

    for it in 0..opts.max_iters {
        let (x, y) = project_affine(&(&z - &u - &c / rho));
        y_est = y;
        let z_old = z.clone();
        let (znew, _) = project_psd(&(&x + &u));
        z = znew;
        u += &x - &z;

        if (it + 1) % check_every == 0 {
            let prim = (&x - &z).norm() / (1.0 + z.norm());
            let dual = rho * (&z - &z_old).norm() / (1.0 + c.norm());
            if prim <= opts.eq_tol && dual <= opts.eq_tol {
                status = SdpStatus::Optimal;
                iterations = it + 1;
                break;
            }
            // infeasibility: dual multipliers diverge along a Farkas ray
            if it >= 200 {
                let dy = &y_est - &y_prev;
                let dn = dy.norm();
                if dn > 1e-8 {
                    let ray = &dy / dn;
                    let bray = b.dot(&ray);
                    if bray < -1e-6 {
                        let at_ray = apply_at(&ray);
                        let lm = lambda_min(&at_ray);
                        if lm >= -1e-7 * at_ray.amax().max(1.0) && prim > opts.eq_tol {
                            let ray = &ray * (1.0 / -bray);
                            status = SdpStatus::Infeasible;
                            iterations = it + 1;
                            y_est = ray;
                            break;
                        }
                    }
                }
            }
            y_prev = y_est.clone();
            // residual balancing
            if prim > 10.0 * dual && rho < 1e6 {
                rho *= 2.0;
                u /= 2.0;
            } else if dual > 10.0 * prim && rho > 1e-6 {
                rho /= 2.0;
                u *= 2.0;
            }
        }
    }

    if status == SdpStatus::Infeasible {
        return Ok(SdpSolution {
            primal: DMatrix::zeros(dim, dim),
            dual: y_est,
            status,
            objective_value: f64::INFINITY,
            iterations,
        });
    }

    // recover duals for C - A*(y) = S >= 0 by least squares against the
    // final scaled dual matrix S = -rho U
    let s_dual = &u * (-rho);
    let y = pinv.apply(&apply_a(&(&c - &s_dual)));
    let objective_value = frob(&problem.objective, &z);
    Ok(SdpSolution {
        primal: z,
        dual: y * obj_scale,
        status,
        objective_value,
        iterations,
    })
}

/// Independent verification report for an [`SdpSolution`].
#[derive(Debug, Clone)]
pub struct VerifyReport {
    pub lambda_min: f64,
    pub max_residual: f64,
    /// index of the worst-violated constraint, if any exceeds `eq_tol`
    pub violated: Option<usize>,
    pub pass: bool,
}

/// Recomputes constraint residuals and the minimum eigenvalue of the primal
/// matrix from scratch.
pub fn verify_solution(
    problem: &SdpProblem,
    primal: &DMatrix<f64>,
    opts: &SdpOptions,
) -> VerifyReport {
    let lm = lambda_min(primal);
    let mut max_residual = 0.0;
    let mut violated = None;
    for (j, (a, rhs)) in problem.constraints.iter().enumerate() {
        let scale = frob(a, a).sqrt().max(1.0);
        let r = (frob(a, primal) - rhs).abs() / scale;
        if r > max_residual {
            max_residual = r;
            if r > opts.eq_tol {
                violated = Some(j);
            }
        }
    }
    VerifyReport {
        lambda_min: lm,
        max_residual,
        violated,
        pass: lm >= -opts.psd_tol && max_residual <= opts.eq_tol,
    }
}

/// SDP over a vector `v` whose matrix image `Map(v)` must be PSD:
/// `min cost.v  s.t.  eq v = rhs, Map(v) >= 0`, where coordinate `i` of `v`
/// fills the symmetric slots `psd_slots[i]` (upper triangle) and the free
/// slots `free_slots[i]`. Slot sets must be pairwise disjoint, which makes
/// `Map* Map` diagonal and the ADMM subproblem a single pre-factored solve.
/// The free segment carries unconstrained auxiliaries (e.g. SOS multiplier
/// coefficients).
#[derive(Debug, Clone)]
pub struct FactoredSdp {
    pub psd_dim: usize,
    pub free_len: usize,
    pub psd_slots: Vec<Vec<(usize, usize)>>,
    pub free_slots: Vec<Vec<usize>>,
    pub cost: DVector<f64>,
    pub eq: DMatrix<f64>,
    pub rhs: DVector<f64>,
}

#[derive(Debug, Clone)]
pub struct FactoredSolution {
    pub v: DVector<f64>,
    /// PSD block of the final cone iterate (exactly PSD).
    pub psd_block: DMatrix<f64>,
    /// Multipliers of the equality constraints, or the Farkas ray when
    /// `status == Infeasible` (scaled so `rhs . ray = -1`).
    pub dual_eq: DVector<f64>,
    pub status: SdpStatus,
    pub objective_value: f64,
    pub iterations: usize,
}

impl FactoredSdp {
    pub fn nvar(&self) -> usize {
        self.cost.len()
    }

    fn weights(&self) -> DVector<f64> {
        let n = self.nvar();
        let mut d = DVector::zeros(n);
        for i in 0..n {
            for &(r, c) in &self.psd_slots[i] {
                d[i] += if r == c { 1.0 } else { 2.0 };
            }
            d[i] += self.free_slots[i].len() as f64;
        }
        d
    }

    pub(crate) fn map(&self, v: &DVector<f64>) -> (DMatrix<f64>, DVector<f64>) {
        let mut x = DMatrix::zeros(self.psd_dim, self.psd_dim);
        let mut f = DVector::zeros(self.free_len);
        for i in 0..self.nvar() {
            let vi = v[i];
            for &(r, c) in &self.psd_slots[i] {
                x[(r, c)] = vi;
                x[(c, r)] = vi;
            }
            for &k in &self.free_slots[i] {
                f[k] = vi;
            }
        }
        (x, f)
    }

    fn map_adjoint(&self, x: &DMatrix<f64>, f: &DVector<f64>) -> DVector<f64> {
        let n = self.nvar();
        let mut out = DVector::zeros(n);
        for i in 0..n {
            let mut acc = 0.0;
            for &(r, c) in &self.psd_slots[i] {
                acc += if r == c {
                    x[(r, r)]
                } else {
                    x[(r, c)] + x[(c, r)]
                };
            }
            for &k in &self.free_slots[i] {
                acc += f[k];
            }
            out[i] = acc;
        }
        out
    }

    fn validate(&self) -> Result<()> {
        let n = self.nvar();
        if self.psd_slots.len() != n || self.free_slots.len() != n {
            return Err(Error::Dimension("slot lists vs cost length".into()));
        }
        if self.eq.ncols() != n || self.eq.nrows() != self.rhs.len() {
            return Err(Error::Dimension("equality system shape".into()));
        }
        let mut seen = vec![false; self.psd_dim * self.psd_dim];
        let mut seen_free = vec![false; self.free_len];
        for i in 0..n {
            for &(r, c) in &self.psd_slots[i] {
                if r > c || c >= self.psd_dim {
                    return Err(Error::Invalid(format!("bad PSD slot ({}, {})", r, c)));
                }
                let idx = r * self.psd_dim + c;
                if seen[idx] {
                    return Err(Error::Invalid(format!("PSD slot ({}, {}) reused", r, c)));
                }
                seen[idx] = true;
            }
            for &k in &self.free_slots[i] {
                if k >= self.free_len || seen_free[k] {
                    return Err(Error::Invalid(format!("free slot {} invalid", k)));
                }
                seen_free[k] = true;
            }
            if self.psd_slots[i].is_empty() && self.free_slots[i].is_empty() {
                return Err(Error::Invalid(format!("variable {} has no slots", i)));
            }
        }
        Ok(())
    }

    pub fn solve(&self, opts: &SdpOptions) -> Result<FactoredSolution> {
        self.validate()?;
        let n = self.nvar();
        let m = self.rhs.len();
        let d = self.weights();
        let d_inv = d.map(|x| 1.0 / x);

        // Gram of the equality system in the D^{-1} metric
        let eq_sp = SparseRows::of(&self.eq);
        let gram = eq_sp.gram_dinv(&d_inv);
        let pinv = GramPinv::new(gram.clone());

        // consistency of the equality system alone; the least-squares
        // residual only certifies infeasibility if it truly lies in the
        // kernel of the Gram (E^T resid = 0), otherwise it is an artifact
        // of the pseudo-inverse rank cutoff on an ill-conditioned system
        let y0 = pinv.apply(&self.rhs);
        let resid = &gram * &y0 - &self.rhs;
        let in_kernel = (&gram * &resid).norm()
            <= 1e-6 * gram.amax().max(1e-300) * resid.norm();
        if resid.norm() > 1e-8 * self.rhs.norm().max(1.0) && in_kernel {
            let br = self.rhs.dot(&resid);
            let ray = &resid * (-1.0 / br);
            return Ok(FactoredSolution {
                v: DVector::zeros(n),
                psd_block: DMatrix::zeros(self.psd_dim, self.psd_dim),
                dual_eq: ray,
                status: SdpStatus::Infeasible,
                objective_value: f64::INFINITY,
                iterations: 0,
            });
        }

        let cost_scale = self.cost.amax().max(1.0);
        let cost = &self.cost / cost_scale;

        // v-step: argmin c.v + rho/2 ||Map(v) - T||^2  s.t.  Ev = rhs
        let v_step = |t_psd: &DMatrix<f64>, t_free: &DVector<f64>, rho: f64| {
            let r = self.map_adjoint(t_psd, t_free) - &cost / rho;
            let rd = r.component_mul(&d_inv);
            let nu = pinv.apply(&(eq_sp.mul(&rd) - &self.rhs));
            let v = (&r - eq_sp.mul_transpose(&nu)).component_mul(&d_inv);
            (v, nu)
        };

        let mut z_psd = DMatrix::<f64>::zeros(self.psd_dim, self.psd_dim);
        let mut z_free = DVector::<f64>::zeros(self.free_len);
        let mut u_psd = DMatrix::<f64>::zeros(self.psd_dim, self.psd_dim);
        let mut u_free = DVector::<f64>::zeros(self.free_len);
        let mut rho: f64 = 1.0;
        let mut status = SdpStatus::MaxIters;
        let mut iterations = opts.max_iters;
        let mut v = DVector::zeros(n);
        let mut nu = DVector::zeros(m);
        let mut nu_prev = DVector::zeros(m);
        let check_every = 25;

        for it in 0..opts.max_iters {
            let t_psd = &z_psd - &u_psd;
            let t_free = &z_free - &u_free;
            let (vnew, nunew) = v_step(&t_psd, &t_free, rho);
            v = vnew;
            nu = nunew;
            let (w_psd, w_free) = self.map(&v);
            let z_psd_old = z_psd.clone();
            // over-relaxation (alpha = 1.6) roughly halves iteration counts
            // on moment matrices without affecting the fixed point
            let alpha = 1.6;
            let wr_psd = &w_psd * alpha + &z_psd * (1.0 - alpha);
            let wr_free = &w_free * alpha + &z_free * (1.0 - alpha);
            let (zp, _) = project_psd(&(&wr_psd + &u_psd));
            z_psd = zp;
            z_free = &wr_free + &u_free; // free cone: identity projection
            u_psd += &wr_psd - &z_psd;
            u_free += &wr_free - &z_free;

            if (it + 1) % check_every == 0 {
                let prim = ((&w_psd - &z_psd).norm_squared()
                    + (&w_free - &z_free).norm_squared())
                .sqrt()
                    / (1.0 + w_psd.norm());
                let dz = &z_psd - &z_psd_old;
                let dual =
                    rho * self.map_adjoint(&dz, &DVector::zeros(self.free_len)).norm()
                        / (1.0 + cost.norm());
                if prim <= opts.eq_tol && dual <= opts.eq_tol {
                    status = SdpStatus::Optimal;
                    iterations = it + 1;
                    break;
                }
                if it >= 200 {
                    let dnu = &nu - &nu_prev;
                    let dn = dnu.norm();
                    if dn > 1e-8 && prim > opts.eq_tol {
                        let ray = &dnu / dn;
                        let bray = self.rhs.dot(&ray);
                        if bray < -1e-6 {
                            // candidate Farkas certificate: min-norm preimage
                            // of E^T ray must be PSD-representable
                            let g = eq_sp.mul_transpose(&ray);
                            let gv = g.component_mul(&d_inv);
                            let (w_c, f_c) = self.map(&gv);
                            let scale = w_c.amax().max(1e-12);
                            if lambda_min(&w_c) >= -1e-6 * scale
                                && f_c.amax() <= 1e-6 * scale
                            {
                                let ray = &ray * (1.0 / -bray);
                                status = SdpStatus::Infeasible;
                                iterations = it + 1;
                                nu = ray;
                                break;
                            }
                        }
                    }
                    nu_prev = nu.clone();
                }
                if prim > 10.0 * dual && rho < 1e6 {
                    rho *= 2.0;
                    u_psd /= 2.0;
                    u_free /= 2.0;
                } else if dual > 10.0 * prim && rho > 1e-6 {
                    rho /= 2.0;
                    u_psd *= 2.0;
                    u_free *= 2.0;
                }
            }
        }

        let objective_value = if status == SdpStatus::Infeasible {
            f64::INFINITY
        } else {
            self.cost.dot(&v)
        };
        Ok(FactoredSolution {
            v,
            psd_block: z_psd,
            dual_eq: nu * cost_scale,
            status,
            objective_value,
            iterations,
        })
    }

    /// Dykstra refinement: projects `v` toward the intersection of
    /// `{Ev = rhs}` and `{Map(v) >= 0}`, tightening the PSD side well below
    /// ADMM accuracy. Returns the refined vector.
    pub fn polish(&self, v: &DVector<f64>, rounds: usize) -> DVector<f64> {
        self.polish_until(v, rounds, f64::NEG_INFINITY)
    }

    /// Like [`polish`](Self::polish) but stops early once the mapped PSD
    /// block reaches `lambda_min >= -psd_floor`.
    pub fn polish_until(&self, v: &DVector<f64>, rounds: usize, psd_floor: f64) -> DVector<f64> {
        let n = self.nvar();
        let d_inv = self.weights().map(|x| 1.0 / x);
        let eq_sp = SparseRows::of(&self.eq);
        let gram = eq_sp.gram_dinv(&d_inv);
        let pinv = GramPinv::new(gram);

        let mut v = v.clone();
        let mut corr = DVector::<f64>::zeros(n);
        for _ in 0..rounds {
            if psd_floor.is_finite() && lambda_min(&self.map(&v).0) >= -psd_floor {
                break;
            }
            // PSD projection in the D metric, with Dykstra correction
            let (x, _) = self.map(&(&v + &corr));
            let (xp, _) = project_psd(&x);
            let v_psd_target = self.map_adjoint(&xp, &DVector::zeros(self.free_len));
            let mut vp = v_psd_target.component_mul(&d_inv);
            // free slots pass through unchanged
            for i in 0..n {
                if !self.free_slots[i].is_empty() {
                    vp[i] = v[i] + corr[i];
                }
            }
            corr = &v + &corr - &vp;
            // affine projection (D metric)
            let nu = pinv.apply(&(eq_sp.mul(&vp) - &self.rhs));
            v = &vp - eq_sp.mul_transpose(&nu).component_mul(&d_inv);
        }
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mat(dim: usize, entries: &[(usize, usize, f64)]) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(dim, dim);
        for &(i, j, v) in entries {
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
        m
    }

    #[test]
    fn dim1_trivial() {
        let p = SdpProblem {
            dim: 1,
            objective: mat(1, &[(0, 0, 1.0)]),
            constraints: vec![(mat(1, &[(0, 0, 1.0)]), 1.0)],
        };
        let sol = solve(&p, &SdpOptions::default()).unwrap();
        assert_eq!(sol.status, SdpStatus::Optimal);
        assert!((sol.objective_value - 1.0).abs() < 1e-6);
        assert!((sol.primal[(0, 0)] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn dim2_psd_boundary() {
        // min M12 s.t. M11 = M22 = 1 -> -1 with primal [[1,-1],[-1,1]]
        let p = SdpProblem {
            dim: 2,
            objective: mat(2, &[(0, 1, 0.5)]),
            constraints: vec![
                (mat(2, &[(0, 0, 1.0)]), 1.0),
                (mat(2, &[(1, 1, 1.0)]), 1.0),
            ],
        };
        let sol = solve(&p, &SdpOptions::default()).unwrap();
        assert_eq!(sol.status, SdpStatus::Optimal);
        assert!((sol.objective_value + 1.0).abs() < 1e-5, "{}", sol.objective_value);
        assert!((sol.primal[(0, 1)] + 1.0).abs() < 1e-4);
        assert!(lambda_min(&sol.primal) > -1e-7);
    }

    #[test]
    fn dim1_infeasible() {
        let p = SdpProblem {
            dim: 1,
            objective: mat(1, &[(0, 0, 0.0)]),
            constraints: vec![(mat(1, &[(0, 0, 1.0)]), -1.0)],
        };
        let sol = solve(&p, &SdpOptions::default()).unwrap();
        assert_eq!(sol.status, SdpStatus::Infeasible);
        // Farkas ray: rhs . ray = -1 and sum ray_j A_j PSD
        let b = DVector::from_vec(vec![-1.0]);
        assert!((b.dot(&sol.dual) + 1.0).abs() < 1e-6);
    }

    #[test]
    fn verify_reports() {
        let p = SdpProblem {
            dim: 1,
            objective: mat(1, &[(0, 0, 1.0)]),
            constraints: vec![(mat(1, &[(0, 0, 1.0)]), 1.0)],
        };
        let opts = SdpOptions::default();
        let good = verify_solution(&p, &mat(1, &[(0, 0, 1.0)]), &opts);
        assert!(good.pass);
        let bad = verify_solution(&p, &mat(1, &[(0, 0, 1.0 + 1e-3)]), &opts);
        assert!(!bad.pass);
        assert_eq!(bad.violated, Some(0));
        // analytic dim-2 optimum
        let p2 = SdpProblem {
            dim: 2,
            objective: mat(2, &[(0, 1, 0.5)]),
            constraints: vec![
                (mat(2, &[(0, 0, 1.0)]), 1.0),
                (mat(2, &[(1, 1, 1.0)]), 1.0),
            ],
        };
        let rep = verify_solution(&p2, &mat(2, &[(0, 0, 1.0), (1, 1, 1.0), (0, 1, -1.0)]), &opts);
        assert!(rep.pass);
        assert!(rep.lambda_min.abs() <= 1e-9);
    }

    #[test]
    fn weak_duality() {
        let p = SdpProblem {
            dim: 2,
            objective: mat(2, &[(0, 0, 1.0), (1, 1, 2.0), (0, 1, 0.3)]),
            constraints: vec![
                (mat(2, &[(0, 0, 1.0), (1, 1, 1.0)]), 2.0),
                (mat(2, &[(0, 1, 1.0)]), 0.5),
            ],
        };
        let sol = solve(&p, &SdpOptions::default()).unwrap();
        assert_eq!(sol.status, SdpStatus::Optimal);
        // duals are reported against unit-Frobenius-scaled constraints, so
        // the dual objective uses the scaled right-hand sides
        let mut dual_obj = 0.0;
        for (j, (a, rhs)) in p.constraints.iter().enumerate() {
            let scale = a.iter().map(|x| x * x).sum::<f64>().sqrt();
            dual_obj += sol.dual[j] * rhs / scale;
        }
        assert!(dual_obj <= sol.objective_value + 1e-4, "{} vs {}", dual_obj, sol.objective_value);
    }

    #[test]
    fn determinism() {
        let p = SdpProblem {
            dim: 2,
            objective: mat(2, &[(0, 1, 0.5)]),
            constraints: vec![
                (mat(2, &[(0, 0, 1.0)]), 1.0),
                (mat(2, &[(1, 1, 1.0)]), 1.0),
            ],
        };
        let a = solve(&p, &SdpOptions::default()).unwrap();
        let b = solve(&p, &SdpOptions::default()).unwrap();
        assert_eq!(a.primal, b.primal);
        assert_eq!(a.objective_value, b.objective_value);
        assert_eq!(a.iterations, b.iterations);
    }

    #[test]
    fn non_symmetric_rejected() {
        let mut obj = DMatrix::zeros(2, 2);
        obj[(0, 1)] = 1.0;
        let p = SdpProblem {
            dim: 2,
            objective: obj,
            constraints: vec![],
        };
        assert!(matches!(solve(&p, &SdpOptions::default()), Err(Error::NotSymmetric(_))));
    }

    #[test]
    fn factored_simple() {
        // variable v0 on the diagonal of a 2x2 block, v1 on the off-diagonal:
        // min v1 s.t. v0 = 1, [[v0, v1], [v1, v0]] >= 0  ->  v1 = -1
        let f = FactoredSdp {
            psd_dim: 2,
            free_len: 0,
            psd_slots: vec![vec![(0, 0), (1, 1)], vec![(0, 1)]],
            free_slots: vec![vec![], vec![]],
            cost: DVector::from_vec(vec![0.0, 1.0]),
            eq: DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
            rhs: DVector::from_vec(vec![1.0]),
        };
        let sol = f.solve(&SdpOptions::default()).unwrap();
        assert_eq!(sol.status, SdpStatus::Optimal);
        assert!((sol.v[1] + 1.0).abs() < 1e-4, "{}", sol.v[1]);
    }

    #[test]
    fn factored_infeasible() {
        // v0 = -1 on a 1x1 PSD block
        let f = FactoredSdp {
            psd_dim: 1,
            free_len: 0,
            psd_slots: vec![vec![(0, 0)]],
            free_slots: vec![vec![]],
            cost: DVector::from_vec(vec![0.0]),
            eq: DMatrix::from_row_slice(1, 1, &[1.0]),
            rhs: DVector::from_vec(vec![-1.0]),
        };
        let sol = f.solve(&SdpOptions::default()).unwrap();
        assert_eq!(sol.status, SdpStatus::Infeasible);
    }

    #[test]
    fn factored_free_variables() {
        // min v0 s.t. v0 + v1 = 3, v1 free, block [v0] >= 0 -> v0 = 0
        let f = FactoredSdp {
            psd_dim: 1,
            free_len: 1,
            psd_slots: vec![vec![(0, 0)], vec![]],
            free_slots: vec![vec![], vec![0]],
            cost: DVector::from_vec(vec![1.0, 0.0]),
            eq: DMatrix::from_row_slice(1, 2, &[1.0, 1.0]),
            rhs: DVector::from_vec(vec![3.0]),
        };
        let sol = f.solve(&SdpOptions::default()).unwrap();
        assert_eq!(sol.status, SdpStatus::Optimal);
        assert!(sol.v[0].abs() < 1e-4, "{}", sol.v[0]);
        assert!((sol.v[1] - 3.0).abs() < 1e-4);
    }
}
