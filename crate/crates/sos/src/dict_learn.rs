//! Sparse dictionary learning by SOS: given samples y = A x with x drawn
//! from a (d, tau)-nice distribution, maximize the empirical polynomial
//! P(u) = (1/R) sum <y_i, u>^d over degree-6 pseudodistributions on the unit
//! sphere, concentrate the operator near a single column by reweighting with
//! random linear forms, and round. Columns are recovered one by one, with
//! found columns excluded through slack-square deflation constraints.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::poly::{monomials_up_to, random_linear_form_with, standard_normal, Monomial, Polynomial};
use crate::pseudo::{reweight, PseudoExpectation};
use crate::relax::{MomentOutcome, MomentProgram};
use crate::rng::{seeded_rng, stream_rng};
use crate::rounding::match_two_moments_with;
use crate::sdp::SdpOptions;

/// Relaxation degree used throughout; supports objectives of degree <= 4
/// plus one squared linear reweighting form.
pub const L_LEARN: usize = 6;

/// Matrix with unit columns; `kappa = m / n` measures overcompleteness.
#[derive(Debug, Clone)]
pub struct Dictionary {
    a: DMatrix<f64>,
}

impl Dictionary {
    pub fn new(a: DMatrix<f64>) -> Result<Self> {
        for j in 0..a.ncols() {
            let norm = a.column(j).norm();
            if (norm - 1.0).abs() > 1e-10 {
                return Err(Error::Invalid(format!(
                    "column {} has norm {} (want 1)",
                    j, norm
                )));
            }
        }
        Ok(Dictionary { a })
    }

    pub fn identity(n: usize) -> Self {
        Dictionary {
            a: DMatrix::identity(n, n),
        }
    }

    /// Haar-random orthogonal dictionary (QR of a Gaussian matrix with sign
    /// correction), so columns are isotropic with kappa = 1.
    pub fn random_orthogonal(n: usize, seed: u64) -> Self {
        let mut rng = seeded_rng(seed);
        let g = DMatrix::from_fn(n, n, |_, _| standard_normal(&mut rng));
        let qr = g.qr();
        let mut q = qr.q();
        let r = qr.r();
        for j in 0..n {
            if r[(j, j)] < 0.0 {
                for i in 0..n {
                    q[(i, j)] = -q[(i, j)];
                }
            }
        }
        Dictionary { a: q }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn m(&self) -> usize {
        self.a.ncols()
    }

    pub fn kappa(&self) -> f64 {
        self.a.ncols() as f64 / self.a.nrows() as f64
    }

    pub fn column(&self, j: usize) -> DVector<f64> {
        self.a.column(j).into_owned()
    }

    pub fn columns(&self) -> Vec<DVector<f64>> {
        (0..self.m()).map(|j| self.column(j)).collect()
    }

    /// Largest deviation of `||A^T u||^2` from `kappa ||u||^2` over random
    /// unit probes; zero (up to roundoff) iff `A A^T = kappa I`.
    pub fn isotropy_defect(&self, probes: usize, seed: u64) -> f64 {
        let mut rng = seeded_rng(seed);
        let mut worst: f64 = 0.0;
        for _ in 0..probes {
            let mut u = DVector::from_fn(self.n(), |_, _| standard_normal(&mut rng));
            u /= u.norm();
            let v = self.a.transpose() * &u;
            worst = worst.max((v.norm_squared() - self.kappa()).abs());
        }
        worst
    }
}

/// Coordinate sampler for a (d, tau)-nice distribution: each coordinate is
/// `sigma * b * rho^{-1/d}` with `sigma` a random sign and `b` Bernoulli(rho),
/// so `E x_i^d = 1` exactly, `E x_i^{d/2} x_j^{d/2} = rho` (hence tau = rho),
/// and all odd-signed moments vanish by sign symmetry.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct NiceDistSpec {
    pub d: usize,
    pub tau: f64,
    pub rho: f64,
}

impl NiceDistSpec {
    pub fn new(d: usize, rho: f64) -> Result<Self> {
        if d == 0 || d % 2 != 0 {
            return Err(Error::Invalid(format!("moment order {} must be even", d)));
        }
        if !(rho > 0.0 && rho <= 1.0) {
            return Err(Error::Invalid(format!("rho {} outside (0, 1]", rho)));
        }
        Ok(NiceDistSpec { d, tau: rho, rho })
    }
}

/// Draws `count` i.i.d. vectors in R^m from the spec's coordinate sampler.
pub fn sample_nice(spec: &NiceDistSpec, m: usize, count: usize, seed: u64) -> Vec<DVector<f64>> {
    let mut rng = seeded_rng(seed);
    let scale = spec.rho.powf(-1.0 / spec.d as f64);
    (0..count)
        .map(|_| {
            DVector::from_fn(m, |_, _| {
                if rng.gen::<f64>() < spec.rho {
                    if rng.gen::<bool>() {
                        scale
                    } else {
                        -scale
                    }
                } else {
                    0.0
                }
            })
        })
        .collect()
}

/// Observed samples `y = A x` for hidden nice coefficients x.
pub fn dictionary_samples(
    dict: &Dictionary,
    spec: &NiceDistSpec,
    count: usize,
    seed: u64,
) -> Vec<DVector<f64>> {
    sample_nice(spec, dict.m(), count, seed)
        .into_iter()
        .map(|x| dict.matrix() * x)
        .collect()
}

/// `P(u) = (1/R) sum_i <y_i, u>^d`, expanded exactly via the multinomial
/// theorem: the coefficient of u^alpha is `multinomial(d; alpha)` times the
/// empirical moment of y^alpha.
pub fn empirical_poly(samples: &[DVector<f64>], d: usize) -> Result<Polynomial> {
    if samples.is_empty() {
        return Err(Error::Invalid("empirical_poly needs at least one sample".into()));
    }
    let n = samples[0].len();
    let alphas: Vec<Monomial> = monomials_up_to(n, d)
        .into_iter()
        .filter(|m| m.degree() as usize == d)
        .collect();
    let mut terms: Vec<(Monomial, f64)> = Vec::with_capacity(alphas.len());
    let inv_r = 1.0 / samples.len() as f64;
    for alpha in alphas {
        let mut mult = factorial(d);
        for &(_, e) in alpha.exps() {
            mult /= factorial(e as usize);
        }
        let mut moment = 0.0;
        for y in samples {
            let mut prod = 1.0;
            for &(i, e) in alpha.exps() {
                prod *= y[i as usize].powi(e as i32);
            }
            moment += prod;
        }
        let c = mult * inv_r * moment;
        if c != 0.0 {
            terms.push((alpha, c));
        }
    }
    Ok(Polynomial::from_terms(n, terms))
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|i| i as f64).product()
}

/// Tunables for column recovery. Defaults implement the desk-scale recipe:
/// degree-6 relaxation, one reweighting form, 20 retries, 20 rounding draws.
#[derive(Debug, Clone)]
pub struct LearnOptions {
    pub degree: usize,
    pub n_forms: usize,
    pub tau: f64,
    /// Extra slack below `1 - tau` tolerated in the relaxation value before
    /// declaring that no column-like maximizer exists.
    pub slack: f64,
    /// Reweighted second-moment matrices must have a top eigenvalue at least
    /// this large to count as isolated on a single direction.
    pub isolation_floor: f64,
    /// Excluded region per found column: `<u, a*>^2 <= 1 - gap`.
    pub gap: f64,
    pub f_max: usize,
    pub t_rounds: usize,
    pub sdp: SdpOptions,
}

impl Default for LearnOptions {
    fn default() -> Self {
        LearnOptions {
            degree: L_LEARN,
            n_forms: 1,
            tau: 0.2,
            slack: 0.15,
            isolation_floor: 0.4,
            gap: 0.5,
            f_max: 20,
            t_rounds: 20,
            sdp: SdpOptions::default(),
        }
    }
}

/// Result of a single column-recovery attempt.
#[derive(Debug, Clone)]
pub enum ColumnOutcome {
    /// Unit vector plus the relaxation value and the number of reweighting
    /// attempts consumed.
    Column {
        a: DVector<f64>,
        value: f64,
        attempts: usize,
    },
    /// Relaxation value below `1 - tau - slack`: the empirical polynomial has
    /// no column-like maximizer on the sphere.
    NoColumn { value: f64 },
    /// Every reweighting left the operator spread out (top second-moment
    /// eigenvalue below the isolation floor).
    IsolationFailure { value: f64 },
}

/// Recovered column set and diagnostics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LearnReport {
    pub columns: Vec<Vec<f64>>,
    pub m_target: usize,
    pub complete: bool,
    /// Relaxation value of the final (most deflated) program.
    pub value: f64,
    pub attempts: usize,
}

impl LearnReport {
    pub fn column_vectors(&self) -> Vec<DVector<f64>> {
        self.columns
            .iter()
            .map(|c| DVector::from_vec(c.clone()))
            .collect()
    }
}

/// Hausdorff distance after closing both sets under negation, per the sign
/// ambiguity of dictionary columns.
pub fn hausdorff_symmetrized(a: &[DVector<f64>], b: &[DVector<f64>]) -> f64 {
    let close = |s: &[DVector<f64>]| -> Vec<DVector<f64>> {
        s.iter().flat_map(|v| [v.clone(), -v]).collect()
    };
    let sa = close(a);
    let sb = close(b);
    let one_sided = |from: &[DVector<f64>], to: &[DVector<f64>]| -> f64 {
        from.iter()
            .map(|x| {
                to.iter()
                    .map(|y| (x - y).norm())
                    .fold(f64::INFINITY, f64::min)
            })
            .fold(0.0, f64::max)
    };
    if sa.is_empty() || sb.is_empty() {
        return f64::INFINITY;
    }
    one_sided(&sa, &sb).max(one_sided(&sb, &sa))
}

/// Builds and solves the sphere-constrained maximization of `L(p)`, with one
/// slack variable and exclusion constraint `<u, a>^2 + s^2 = 1 - gap` per
/// deflated column. The moment-matrix basis keeps only `{s, s u_i}` rows per
/// slack so the program stays close to the undeflated size.
pub fn sphere_relaxation(
    p: &Polynomial,
    deflated: &[DVector<f64>],
    opts: &LearnOptions,
) -> Result<(PseudoExpectation, f64)> {
    let n = p.num_vars();
    let j = deflated.len();
    let num_vars = n + j;
    let half = opts.degree / 2;
    let mut basis = monomials_up_to(n, half);
    for t in 0..j {
        let s = Monomial::var(n + t);
        basis.push(s.clone());
        for i in 0..n {
            basis.push(s.mul(&Monomial::var(i)));
        }
    }
    let mut prog = MomentProgram::with_basis(num_vars, opts.degree, basis, n)?;
    // sphere constraint, multiplied by every admissible monomial
    let mut sphere = Polynomial::constant(num_vars, -1.0);
    for i in 0..n {
        sphere = sphere.add(&Polynomial::var(num_vars, i).square())?;
    }
    let mut qs = monomials_up_to(n, opts.degree - 2);
    for t in 0..j {
        let s = Monomial::var(n + t);
        qs.push(s.mul(&s));
        for q in monomials_up_to(n, 2) {
            if !q.is_one() {
                qs.push(s.mul(&q));
            }
        }
        for r in (t + 1)..j {
            qs.push(s.mul(&Monomial::var(n + r)));
        }
    }
    prog.constrain_satisfaction_q(&sphere, &qs)?;
    // exclusion of found columns
    for (t, a) in deflated.iter().enumerate() {
        let inner = Polynomial::linear_form(a.as_slice()).extend_vars(num_vars);
        let s = Polynomial::var(num_vars, n + t);
        let g = inner
            .square()
            .add(&s.square())?
            .add(&Polynomial::constant(num_vars, opts.gap - 1.0))?;
        prog.constrain_satisfaction_q(&g, &monomials_up_to(n, 2))?;
    }
    prog.set_objective(&p.extend_vars(num_vars), true)?;
    match prog.solve(&opts.sdp)? {
        MomentOutcome::Solved { pe, value, .. } => Ok((pe, value)),
        MomentOutcome::Infeasible { .. } => Err(Error::Solver(
            "deflated sphere relaxation reported infeasible".into(),
        )),
    }
}

/// Local maximization of a homogeneous even polynomial on the sphere by
/// gradient power iteration, used to sharpen rounded candidates.
fn refine_on_sphere(p: &Polynomial, u0: &DVector<f64>, iters: usize) -> DVector<f64> {
    let n = u0.len();
    let grads: Vec<Polynomial> = (0..n)
        .map(|i| {
            let terms: Vec<(Monomial, f64)> = p
                .terms()
                .filter_map(|(m, c)| {
                    let e = m.power_of(i);
                    if e == 0 {
                        None
                    } else {
                        Some((m.div(&Monomial::var(i)).unwrap(), c * e as f64))
                    }
                })
                .collect();
            Polynomial::from_terms(n, terms)
        })
        .collect();
    let mut u = u0.clone();
    for _ in 0..iters {
        let x: Vec<f64> = u.iter().copied().collect();
        let g = DVector::from_fn(n, |i, _| grads[i].eval(&x).unwrap_or(0.0));
        let norm = g.norm();
        if norm < 1e-14 {
            break;
        }
        u = g / norm;
    }
    u
}

/// One reweight-and-round pass. Returns the refined candidate and its
/// P-value when the reweighted operator isolates a direction.
fn reweight_round(
    p: &Polynomial,
    pe: &PseudoExpectation,
    opts: &LearnOptions,
    seed: u64,
    stream: u64,
) -> Result<Option<(DVector<f64>, f64)>> {
    let n = pe.num_vars();
    let mut rng = stream_rng(seed, stream);
    let mut w = Polynomial::constant(n, 1.0);
    for _ in 0..opts.n_forms {
        w = w.mul(&random_linear_form_with(n, &mut rng))?;
    }
    let rw = match reweight(pe, &w) {
        Ok(rw) => rw,
        Err(Error::DegenerateWeight(_)) => return Ok(None),
        Err(e) => return Err(e),
    };
    let second = DMatrix::from_fn(n, n, |i, j| {
        rw.moment(&Monomial::var(i).mul(&Monomial::var(j)))
            .unwrap_or(0.0)
    });
    let top = second
        .clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    if top < opts.isolation_floor {
        return Ok(None);
    }
    // a small reweighting mass amplifies solver error in the covariance;
    // treat an indefinite one as a failed draw of W rather than a hard error
    let sampler = match match_two_moments_with(&rw, 1e-4) {
        Ok(s) => s,
        Err(Error::InvalidPseudoExpectation(_)) => return Ok(None),
        Err(e) => return Err(e),
    };
    let mut best: Option<(DVector<f64>, f64)> = None;
    for _ in 0..opts.t_rounds {
        let draw = DVector::from_vec(sampler.sample_with(&mut rng));
        let norm = draw.norm();
        if norm < 1e-12 {
            continue;
        }
        let cand = draw / norm;
        let x: Vec<f64> = cand.iter().copied().collect();
        let val = p.eval(&x)?;
        if best.as_ref().map_or(true, |(_, v)| val > *v) {
            best = Some((cand, val));
        }
    }
    Ok(best.map(|(cand, _)| {
        let refined = refine_on_sphere(p, &cand, 50);
        let x: Vec<f64> = refined.iter().copied().collect();
        let val = p.eval(&x).unwrap_or(f64::NEG_INFINITY);
        (refined, val)
    }))
}

/// Recovers a single column from the empirical polynomial: solve the sphere
/// relaxation at degree `l`, check the value clears `1 - tau - slack`, then
/// reweight by squared random linear forms until one isolates a direction.
pub fn learn_one_column(p: &Polynomial, opts: &LearnOptions, seed: u64) -> Result<ColumnOutcome> {
    if opts.degree < p.degree() + 2 * opts.n_forms {
        return Err(Error::Degree {
            degree: opts.degree,
            required: p.degree() + 2 * opts.n_forms,
        });
    }
    let (pe, value) = sphere_relaxation(p, &[], opts)?;
    if value < 1.0 - opts.tau - opts.slack {
        return Ok(ColumnOutcome::NoColumn { value });
    }
    for f in 0..opts.f_max {
        if let Some((a, _)) = reweight_round(p, &pe, opts, seed, f as u64)? {
            return Ok(ColumnOutcome::Column {
                a,
                value,
                attempts: f + 1,
            });
        }
    }
    Ok(ColumnOutcome::IsolationFailure { value })
}

/// Full pipeline: build the empirical polynomial, recover columns one at a
/// time, and after each success add the slack-square exclusion constraint so
/// later pseudodistributions avoid columns already found. Re-solving is
/// deferred until fresh reweightings of the current operator stop producing
/// new directions. Stalls yield a partial report with `complete = false`.
pub fn learn_dictionary(
    samples: &[DVector<f64>],
    spec: &NiceDistSpec,
    kappa: f64,
    seed: u64,
    opts: &LearnOptions,
) -> Result<LearnReport> {
    if samples.is_empty() {
        return Err(Error::Invalid("no samples".into()));
    }
    let n = samples[0].len();
    let m = (kappa * n as f64).round() as usize;
    let p = empirical_poly(samples, spec.d)?;
    let mut found: Vec<DVector<f64>> = Vec::new();
    let mut deflated: Vec<DVector<f64>> = Vec::new();
    let mut attempts = 0usize;
    let (mut pe, mut value) = sphere_relaxation(&p, &deflated, opts)?;
    if value < 1.0 - opts.tau - opts.slack {
        return Ok(LearnReport {
            columns: Vec::new(),
            m_target: m,
            complete: m == 0,
            value,
            attempts,
        });
    }
    let mut stream = 0u64;
    // candidates closer than this to a found column (after sign folding)
    // count as repeats; gap = 0.5 keeps genuinely new columns well beyond it
    let new_tol = 0.5;
    'outer: while found.len() < m {
        let mut fresh = false;
        for _ in 0..opts.f_max {
            attempts += 1;
            stream += 1;
            if let Some((a, _)) = reweight_round(&p, &pe, opts, seed, stream)? {
                let dist = found
                    .iter()
                    .map(|f| (&a - f).norm().min((&a + f).norm()))
                    .fold(f64::INFINITY, f64::min);
                if dist > new_tol {
                    found.push(a);
                    fresh = true;
                    break;
                }
            }
        }
        if found.len() == m {
            break;
        }
        if fresh {
            continue;
        }
        // current operator exhausted: deflate all found columns and re-solve
        if deflated.len() == found.len() {
            break 'outer; // already deflated everything and still stalled
        }
        deflated = found.clone();
        // loose tolerances make the Farkas test fire spuriously on slow
        // deflated solves; retry harder before giving up on the columns
        // already in hand
        let solved = match sphere_relaxation(&p, &deflated, opts) {
            Err(Error::Solver(_)) => {
                let mut retry = opts.clone();
                retry.sdp.max_iters *= 4;
                sphere_relaxation(&p, &deflated, &retry)
            }
            other => other,
        };
        let (pe2, v2) = match solved {
            Ok(x) => x,
            Err(Error::Solver(_)) => break,
            Err(e) => return Err(e),
        };
        pe = pe2;
        value = v2;
        if value < 1.0 - opts.tau - opts.slack {
            break; // remaining mass has no column-like maximizer
        }
    }
    Ok(LearnReport {
        complete: found.len() == m,
        columns: found.iter().map(|c| c.iter().copied().collect()).collect(),
        m_target: m,
        value,
        attempts,
    })
}
