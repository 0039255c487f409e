//! Moment relaxations of polynomial equation systems.
//!
//! A degree-`l` relaxation replaces "find x with P_i(x) = 0" by "find a
//! pseudoexpectation of degree l with L(q P_i) = 0 for all admissible
//! monomials q". Minimizing L(P0) over such operators lower-bounds the true
//! minimum; infeasibility of the relaxation yields a refutation (handled in
//! [`crate::cert`]).

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::poly::{monomials_up_to, Monomial, Polynomial};
use crate::pseudo::PseudoExpectation;
use crate::sdp::{FactoredSdp, SdpOptions, SdpProblem, SdpStatus};

/// Default radius-squared of the ball constraint added to systems without an
/// explicit boundedness witness.
pub const M_BALL: f64 = 1e3;

/// Upper guard on relaxation degree; moment tables grow as n^l.
pub const MAX_DEGREE: usize = 12;

/// Multipliers `Q_i` exhibiting `M - sum x_i^2 = S + sum Q_i P_i` with `S`
/// a sum of squares, i.e. a proof that the solution set lies in a ball.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct BoundWitness {
    pub bound: f64,
    pub multipliers: Vec<Polynomial>,
}

/// `{P_1 = 0, ..., P_m = 0}` with objective `P_0`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct PolynomialSystem {
    pub num_vars: usize,
    pub objective: Polynomial,
    pub equalities: Vec<Polynomial>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bound_witness: Option<BoundWitness>,
}

impl PolynomialSystem {
    pub fn new(num_vars: usize, objective: Polynomial, equalities: Vec<Polynomial>) -> Result<Self> {
        let sys = PolynomialSystem {
            num_vars,
            objective,
            equalities,
            bound_witness: None,
        };
        sys.validate()?;
        Ok(sys)
    }

    pub fn validate(&self) -> Result<()> {
        if self.objective.num_vars() != self.num_vars {
            return Err(Error::Dimension(format!(
                "objective has {} vars, system has {}",
                self.objective.num_vars(),
                self.num_vars
            )));
        }
        for (i, p) in self.equalities.iter().enumerate() {
            if p.num_vars() != self.num_vars {
                return Err(Error::Dimension(format!(
                    "equality {} has {} vars, system has {}",
                    i,
                    p.num_vars(),
                    self.num_vars
                )));
            }
        }
        Ok(())
    }

    /// Largest degree among objective and equalities, rounded up to even.
    pub fn min_degree(&self) -> usize {
        let d = self
            .equalities
            .iter()
            .map(|p| p.degree())
            .chain([self.objective.degree()])
            .max()
            .unwrap_or(0)
            .max(2);
        d + d % 2
    }

    /// Same system over `num_vars + 1` variables with the added equality
    /// `(1/M) sum x_i^2 + t^2 - 1 = 0` (t the new variable), which confines
    /// x to the ball of radius sqrt(M). The rescaling keeps all moments O(1).
    pub fn with_ball(&self, m_ball: f64) -> Result<PolynomialSystem> {
        let n = self.num_vars + 1;
        let mut ball = Polynomial::constant(n, -1.0);
        for i in 0..self.num_vars {
            let xi = Polynomial::var(n, i);
            ball = ball.add(&xi.square().scale(1.0 / m_ball))?;
        }
        ball = ball.add(&Polynomial::var(n, n - 1).square())?;
        let mut equalities: Vec<Polynomial> =
            self.equalities.iter().map(|p| p.extend_vars(n)).collect();
        equalities.push(ball);
        Ok(PolynomialSystem {
            num_vars: n,
            objective: self.objective.extend_vars(n),
            equalities,
            bound_witness: None,
        })
    }
}

fn check_degree(system: &PolynomialSystem, l: usize) -> Result<()> {
    if l % 2 != 0 || l < system.min_degree() {
        return Err(Error::Degree {
            degree: l,
            required: system.min_degree(),
        });
    }
    if l > MAX_DEGREE {
        return Err(Error::Degree {
            degree: l,
            required: MAX_DEGREE,
        });
    }
    Ok(())
}

/// Moment SDP under construction: one scalar variable per monomial of degree
/// <= `degree`, a PSD constraint on the moment matrix over the half-degree
/// basis, and arbitrary linear constraints on moments. The shared chassis for
/// estimates, expansion bounds, recovery, and dictionary learning.
pub struct MomentProgram {
    num_vars: usize,
    degree: usize,
    /// Variables over which the extracted pseudoexpectation is defined; any
    /// trailing auxiliary variables (slacks) are marginalized out.
    out_vars: usize,
    basis: Vec<Monomial>,
    monomials: Vec<Monomial>,
    index: BTreeMap<Monomial, usize>,
    rows: Vec<Vec<(usize, f64)>>,
    rhs: Vec<f64>,
    cost: Vec<f64>,
    maximize: bool,
}

/// Result of solving a [`MomentProgram`].
pub enum MomentOutcome {
    Solved {
        pe: PseudoExpectation,
        value: f64,
        iterations: usize,
        converged: bool,
    },
    /// The linear + PSD system has no solution; `farkas` is the dual
    /// improving ray over the equality constraints (rhs . ray = -1).
    Infeasible { farkas: DVector<f64> },
}

impl MomentProgram {
    pub fn new(num_vars: usize, degree: usize) -> Result<Self> {
        if degree == 0 || degree % 2 != 0 || degree > MAX_DEGREE {
            return Err(Error::Degree {
                degree,
                required: MAX_DEGREE,
            });
        }
        Self::with_basis(
            num_vars,
            degree,
            monomials_up_to(num_vars, degree / 2),
            num_vars,
        )
    }

    /// Builds a relaxation over an explicit moment-matrix basis. Moment
    /// variables are the pairwise products of basis monomials; the extracted
    /// pseudoexpectation ranges over the first `out_vars` variables, whose
    /// monomials up to `degree` must all be representable. Used to keep
    /// auxiliary slack variables (deflation constraints) cheap: only the
    /// listed basis rows carry slack moments.
    pub fn with_basis(
        num_vars: usize,
        degree: usize,
        basis: Vec<Monomial>,
        out_vars: usize,
    ) -> Result<Self> {
        if degree == 0 || degree % 2 != 0 || degree > MAX_DEGREE {
            return Err(Error::Degree {
                degree,
                required: MAX_DEGREE,
            });
        }
        if out_vars > num_vars {
            return Err(Error::Invalid("out_vars exceeds num_vars".into()));
        }
        if basis.first() != Some(&Monomial::one()) {
            return Err(Error::Invalid("basis must start with 1".into()));
        }
        for b in &basis {
            if b.degree() as usize > degree / 2 {
                return Err(Error::Degree {
                    degree: b.degree() as usize,
                    required: degree / 2,
                });
            }
            if b.max_var().map_or(false, |v| v >= num_vars) {
                return Err(Error::Invalid("basis monomial out of range".into()));
            }
        }
        let mut set: BTreeSet<Monomial> = BTreeSet::new();
        for (i, a) in basis.iter().enumerate() {
            for b in &basis[i..] {
                set.insert(a.mul(b));
            }
        }
        for m in monomials_up_to(out_vars, degree) {
            if !set.contains(&m) {
                return Err(Error::Invalid(format!(
                    "output monomial {:?} not representable in basis",
                    m
                )));
            }
        }
        let monomials: Vec<Monomial> = set.into_iter().collect();
        let index: BTreeMap<Monomial, usize> = monomials
            .iter()
            .cloned()
            .enumerate()
            .map(|(i, m)| (m, i))
            .collect();
        let one = index[&Monomial::one()];
        let mut prog = MomentProgram {
            num_vars,
            degree,
            out_vars,
            basis,
            monomials,
            index,
            rows: Vec::new(),
            rhs: Vec::new(),
            cost: Vec::new(),
            maximize: false,
        };
        prog.cost = vec![0.0; prog.monomials.len()];
        prog.rows.push(vec![(one, 1.0)]);
        prog.rhs.push(1.0);
        Ok(prog)
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn num_constraints(&self) -> usize {
        self.rows.len()
    }

    fn row_of(&self, p: &Polynomial) -> Result<Vec<(usize, f64)>> {
        if p.degree() > self.degree {
            return Err(Error::Degree {
                degree: p.degree(),
                required: self.degree,
            });
        }
        let mut row: BTreeMap<usize, f64> = BTreeMap::new();
        for (m, c) in p.terms() {
            let i = *self
                .index
                .get(m)
                .ok_or_else(|| Error::Invalid(format!("monomial {:?} not representable", m)))?;
            *row.entry(i).or_insert(0.0) += c;
        }
        Ok(row.into_iter().collect())
    }

    /// Adds `L(p) = rhs`.
    pub fn constrain_expect(&mut self, p: &Polynomial, rhs: f64) -> Result<()> {
        let row = self.row_of(p)?;
        self.rows.push(row);
        self.rhs.push(rhs);
        Ok(())
    }

    /// Adds `L(q p) = 0` for every monomial `q` with `deg(q p) <= degree`.
    pub fn constrain_satisfaction(&mut self, p: &Polynomial) -> Result<()> {
        if p.degree() > self.degree {
            return Err(Error::Degree {
                degree: p.degree(),
                required: self.degree,
            });
        }
        let qs = monomials_up_to(self.num_vars, self.degree - p.degree());
        self.constrain_satisfaction_q(p, &qs)
    }

    /// Adds `L(q p) = 0` for each listed multiplier monomial `q`. Every
    /// product `q m` with `m` a monomial of `p` must be representable.
    pub fn constrain_satisfaction_q(&mut self, p: &Polynomial, qs: &[Monomial]) -> Result<()> {
        for q in qs {
            let mut row: BTreeMap<usize, f64> = BTreeMap::new();
            for (m, c) in p.terms() {
                let prod = q.mul(m);
                let i = *self.index.get(&prod).ok_or_else(|| {
                    Error::Invalid(format!("monomial {:?} not representable", prod))
                })?;
                *row.entry(i).or_insert(0.0) += c;
            }
            self.rows.push(row.into_iter().collect());
            self.rhs.push(0.0);
        }
        Ok(())
    }

    /// Sets the objective to minimize (or maximize) `L(p)`.
    pub fn set_objective(&mut self, p: &Polynomial, maximize: bool) -> Result<()> {
        let row = self.row_of(p)?;
        self.cost = vec![0.0; self.monomials.len()];
        for (i, c) in row {
            self.cost[i] = c;
        }
        self.maximize = maximize;
        Ok(())
    }

    fn factored(&self) -> FactoredSdp {
        let nvar = self.monomials.len();
        let k = self.basis.len();
        let mut psd_slots: Vec<Vec<(usize, usize)>> = vec![Vec::new(); nvar];
        for r in 0..k {
            for c in r..k {
                psd_slots[self.index[&self.basis[r].mul(&self.basis[c])]].push((r, c));
            }
        }
        let m = self.rows.len();
        let mut eq = DMatrix::zeros(m, nvar);
        for (j, row) in self.rows.iter().enumerate() {
            for &(i, c) in row {
                eq[(j, i)] += c;
            }
        }
        let sign = if self.maximize { -1.0 } else { 1.0 };
        FactoredSdp {
            psd_dim: k,
            free_len: 0,
            psd_slots,
            free_slots: vec![Vec::new(); nvar],
            cost: DVector::from_iterator(nvar, self.cost.iter().map(|&c| sign * c)),
            eq,
            rhs: DVector::from_vec(self.rhs.clone()),
        }
    }

    pub fn solve(&self, opts: &SdpOptions) -> Result<MomentOutcome> {
        let fac = self.factored();
        let sol = fac.solve(opts)?;
        if sol.status == SdpStatus::Infeasible {
            return Ok(MomentOutcome::Infeasible { farkas: sol.dual_eq });
        }
        // refine: ADMM accuracy ~eq_tol; push the moment matrix to
        // lambda_min >= -psd_tol/2 by alternating projections
        let mut v = sol.v;
        if crate::sdp::lambda_min(&fac.map(&v).0) < -opts.psd_tol * 0.5 {
            v = fac.polish_until(&v, 180, opts.psd_tol * 0.5);
        }
        let pe = self.pe_from(&v)?;
        let value: f64 = self
            .cost
            .iter()
            .zip(v.iter())
            .map(|(c, x)| c * x)
            .sum();
        Ok(MomentOutcome::Solved {
            pe,
            value,
            iterations: sol.iterations,
            converged: sol.status == SdpStatus::Optimal,
        })
    }

    fn pe_from(&self, v: &DVector<f64>) -> Result<PseudoExpectation> {
        let moments: BTreeMap<Monomial, f64> = self
            .monomials
            .iter()
            .cloned()
            .zip(v.iter().copied())
            .filter(|(m, _)| m.max_var().map_or(true, |i| i < self.out_vars))
            .collect();
        PseudoExpectation::new(self.out_vars, self.degree, moments)
    }

    /// Side of the PSD moment matrix.
    pub fn matrix_dim(&self) -> usize {
        self.basis.len()
    }
}

/// Explicit SDP form of the degree-`l` relaxation: the variable is the full
/// moment matrix, with consistency constraints tying together slots whose
/// basis products coincide. [`MomentProgram`] eliminates these constraints
/// structurally; this form exists for interoperability and inspection.
pub fn build_relaxation(system: &PolynomialSystem, l: usize) -> Result<SdpProblem> {
    system.validate()?;
    check_degree(system, l)?;
    let basis = monomials_up_to(system.num_vars, l / 2);
    let k = basis.len();
    // representative slot per distinct moment, in scan order
    let mut rep: BTreeMap<Monomial, (usize, usize)> = BTreeMap::new();
    let mut constraints: Vec<(DMatrix<f64>, f64)> = Vec::new();
    let mut consistency: Vec<(DMatrix<f64>, f64)> = Vec::new();
    for r in 0..k {
        for c in r..k {
            let m = basis[r].mul(&basis[c]);
            match rep.get(&m) {
                None => {
                    rep.insert(m, (r, c));
                }
                Some(&(r0, c0)) => {
                    let mut a = DMatrix::zeros(k, k);
                    add_slot(&mut a, r, c, 1.0);
                    add_slot(&mut a, r0, c0, -1.0);
                    consistency.push((a, 0.0));
                }
            }
        }
    }
    // normalization L(1) = 1
    let mut norm = DMatrix::zeros(k, k);
    norm[(0, 0)] = 1.0;
    constraints.push((norm, 1.0));
    constraints.extend(consistency);
    // satisfaction: L(q P_i) = 0 for deg(q P_i) <= l
    for p in &system.equalities {
        for q in monomials_up_to(system.num_vars, l - p.degree()) {
            let mut a = DMatrix::zeros(k, k);
            for (m, c) in p.terms() {
                let (r, cc) = rep[&q.mul(m)];
                add_slot(&mut a, r, cc, c);
            }
            constraints.push((a, 0.0));
        }
    }
    let mut objective = DMatrix::zeros(k, k);
    for (m, c) in system.objective.terms() {
        let (r, cc) = rep[m];
        add_slot(&mut objective, r, cc, c);
    }
    Ok(SdpProblem {
        dim: k,
        objective,
        constraints,
    })
}

/// Adds `w * X[r,c]` to the Frobenius form `<A, X>`.
fn add_slot(a: &mut DMatrix<f64>, r: usize, c: usize, w: f64) {
    if r == c {
        a[(r, r)] += w;
    } else {
        a[(r, c)] += w / 2.0;
        a[(c, r)] += w / 2.0;
    }
}

#[derive(Debug, Clone)]
pub struct EstimateReport {
    /// The degree-`l` lower bound on the objective.
    pub estimate: f64,
    pub witness: PseudoExpectation,
    pub iterations: usize,
    pub converged: bool,
}

/// Data accompanying a refutable verdict; `system` is the (possibly
/// ball-augmented) system whose relaxation was infeasible, for handoff to
/// certificate extraction.
#[derive(Debug, Clone)]
pub struct RefutableInfo {
    pub degree: usize,
    pub system: PolynomialSystem,
    pub farkas: DVector<f64>,
}

pub enum EstimateOutcome {
    Estimate(EstimateReport),
    Refutable(RefutableInfo),
}

/// Minimizes `L(P0)` over degree-`l` pseudoexpectations satisfying the
/// system. Systems without a boundedness witness get a ball constraint so
/// that the refutable/satisfiable dichotomy is meaningful.
pub fn sos_estimate(system: &PolynomialSystem, l: usize) -> Result<EstimateOutcome> {
    sos_estimate_with(system, l, &SdpOptions::default())
}

pub fn sos_estimate_with(
    system: &PolynomialSystem,
    l: usize,
    opts: &SdpOptions,
) -> Result<EstimateOutcome> {
    system.validate()?;
    check_degree(system, l)?;
    let augmented = if system.bound_witness.is_some() {
        system.clone()
    } else {
        system.with_ball(M_BALL)?
    };
    let mut prog = MomentProgram::new(augmented.num_vars, l)?;
    for p in &augmented.equalities {
        prog.constrain_satisfaction(p)?;
    }
    prog.set_objective(&augmented.objective, false)?;
    match prog.solve(opts)? {
        MomentOutcome::Infeasible { farkas } => Ok(EstimateOutcome::Refutable(RefutableInfo {
            degree: l,
            system: augmented,
            farkas,
        })),
        MomentOutcome::Solved {
            pe,
            value,
            iterations,
            converged,
        } => {
            let witness = if augmented.num_vars > system.num_vars {
                restrict_vars(&pe, system.num_vars)?
            } else {
                pe
            };
            Ok(EstimateOutcome::Estimate(EstimateReport {
                estimate: value,
                witness,
                iterations,
                converged,
            }))
        }
    }
}

/// Marginalizes a pseudoexpectation to its first `num_vars` variables.
pub fn restrict_vars(pe: &PseudoExpectation, num_vars: usize) -> Result<PseudoExpectation> {
    PseudoExpectation::from_fn(num_vars, pe.degree(), |m| pe.moments()[m])
}

#[derive(Debug, Clone)]
pub struct SatisfiesReport {
    pub max_residual: f64,
    /// (equality index, offending monomial q) of the worst residual.
    pub worst: Option<(usize, Monomial)>,
    pub pass: bool,
}

/// Checks `|L(q P_i)| <= eq_tol` for all monomials `q` with
/// `deg(q P_i) <= pe.degree`.
pub fn satisfies(
    pe: &PseudoExpectation,
    system: &PolynomialSystem,
    eq_tol: f64,
) -> Result<SatisfiesReport> {
    let max_deg = system.equalities.iter().map(|p| p.degree()).max().unwrap_or(0);
    if pe.degree() < max_deg {
        return Err(Error::Degree {
            degree: pe.degree(),
            required: max_deg,
        });
    }
    let mut max_residual = 0.0;
    let mut worst = None;
    for (i, p) in system.equalities.iter().enumerate() {
        for q in monomials_up_to(system.num_vars, pe.degree() - p.degree()) {
            let mut acc = 0.0;
            for (m, c) in p.terms() {
                acc += c * pe.moment(&q.mul(m))?;
            }
            if acc.abs() > max_residual {
                max_residual = acc.abs();
                worst = Some((i, q.clone()));
            }
        }
    }
    Ok(SatisfiesReport {
        max_residual,
        worst,
        pass: max_residual <= eq_tol,
    })
}

/// `P(x) = n^4 sum_i (x_i^2 - x_i)^2 + (sum_i x_i)^2`: a polynomial with
/// exponentially many bad local minima whose global minimum 0 is still found
/// by the degree-4 relaxation.
pub fn local_minima_example(n: usize) -> Polynomial {
    let mut p = Polynomial::zero(n);
    let scale = (n as f64).powi(4);
    for i in 0..n {
        let xi = Polynomial::var(n, i);
        let q = xi.square().sub(&xi).unwrap();
        p = p.add(&q.square().scale(scale)).unwrap();
    }
    let sum: Polynomial = Polynomial::linear_form(&vec![1.0; n]);
    p.add(&sum.square()).unwrap()
}
