//! SOS refutation certificates: writing `-1 = S + sum Q_i P_i` with `S` a
//! sum of squares proves the system `{P_i = 0}` has no real solution. This
//! module extracts such certificates from infeasible moment relaxations,
//! verifies them coefficient-by-coefficient, and builds the constructive
//! degree-2n refutation for systems over the hypercube.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::poly::{
    hypercube_point, interpolate_multilinear, monomials_up_to, reduce_hypercube, Monomial,
    Polynomial,
};
use crate::pseudo::PseudoExpectation;
use crate::relax::{MomentOutcome, MomentProgram, PolynomialSystem};
use crate::sdp::{lambda_min, FactoredSdp, SdpOptions, SdpStatus};

/// Default bound on the certificate identity residual (max absolute
/// coefficient of `S + sum Q_i P_i + 1`).
pub const ID_TOL: f64 = 1e-8;

/// `-1 = S + sum Q_i P_i` where `S = z^T gram z` over the monomial vector
/// `z = basis`.
#[derive(Debug, Clone, PartialEq)]
pub struct SosCertificate {
    pub degree: usize,
    pub basis: Vec<Monomial>,
    pub gram: DMatrix<f64>,
    pub multipliers: Vec<Polynomial>,
}

impl SosCertificate {
    /// Expands `S = z^T gram z` as a polynomial in `num_vars` variables.
    pub fn sos_part(&self, num_vars: usize) -> Polynomial {
        let k = self.basis.len();
        let mut p = Polynomial::zero(num_vars);
        for i in 0..k {
            for j in 0..k {
                let g = self.gram[(i, j)];
                if g != 0.0 {
                    p.add_term(self.basis[i].mul(&self.basis[j]), g);
                }
            }
        }
        p
    }
}

#[derive(Debug, Clone)]
pub struct CertReport {
    /// Max absolute coefficient of `S + sum Q_i P_i + 1`.
    pub residual: f64,
    pub gram_lambda_min: f64,
    /// Largest `deg(Q_i P_i)`; must not exceed the certificate degree.
    pub max_product_degree: usize,
    pub pass: bool,
}

/// Recomputes the identity from scratch: expand the Gram form, add the
/// multiplier products, and measure the distance from the constant `-1`.
pub fn verify_certificate(system: &PolynomialSystem, cert: &SosCertificate) -> Result<CertReport> {
    verify_certificate_with(system, cert, ID_TOL, 1e-7)
}

pub fn verify_certificate_with(
    system: &PolynomialSystem,
    cert: &SosCertificate,
    id_tol: f64,
    psd_tol: f64,
) -> Result<CertReport> {
    if cert.multipliers.len() != system.equalities.len() {
        return Err(Error::Dimension(format!(
            "{} multipliers for {} equalities",
            cert.multipliers.len(),
            system.equalities.len()
        )));
    }
    let mut acc = cert.sos_part(system.num_vars);
    let mut max_product_degree = acc.degree();
    for (q, p) in cert.multipliers.iter().zip(&system.equalities) {
        let prod = q.mul(p)?;
        max_product_degree = max_product_degree.max(prod.degree());
        acc = acc.add(&prod)?;
    }
    acc = acc.add(&Polynomial::constant(system.num_vars, 1.0))?;
    let residual = acc.max_abs_coeff();
    let scale = cert.gram.amax().max(1.0);
    let gram_lambda_min = lambda_min(&cert.gram);
    Ok(CertReport {
        residual,
        gram_lambda_min,
        max_product_degree,
        pass: residual <= id_tol
            && gram_lambda_min >= -psd_tol * scale
            && max_product_degree <= cert.degree,
    })
}

pub enum CertOutcome {
    Certificate(SosCertificate),
    /// The system is not refutable at this degree; carries the satisfying
    /// pseudoexpectation, the other side of the duality dichotomy.
    NotRefutable(PseudoExpectation),
}

/// Searches for a degree-`l` refutation of `system`. The certificate is
/// found by solving the coefficient-matching SDP over (Gram matrix,
/// multiplier coefficients) and then polishing the identity to `ID_TOL` by
/// alternating projections.
pub fn extract_certificate(system: &PolynomialSystem, l: usize) -> Result<CertOutcome> {
    extract_certificate_with(system, l, &SdpOptions::default())
}

pub fn extract_certificate_with(
    system: &PolynomialSystem,
    l: usize,
    opts: &SdpOptions,
) -> Result<CertOutcome> {
    system.validate()?;
    // feasibility of the dual moment program decides which branch we are on
    let mut prog = MomentProgram::new(system.num_vars, l)?;
    for p in &system.equalities {
        prog.constrain_satisfaction(p)?;
    }
    match prog.solve(opts)? {
        MomentOutcome::Solved { pe, .. } => Ok(CertOutcome::NotRefutable(pe)),
        MomentOutcome::Infeasible { .. } => {
            let cert = certificate_sdp(system, l, opts)?;
            Ok(CertOutcome::Certificate(cert))
        }
    }
}

/// Solves for Gram entries and multiplier coefficients matching
/// `-1 = z^T G z + sum_i Q_i P_i` coefficient-wise, minimizing `tr G`.
fn certificate_sdp(
    system: &PolynomialSystem,
    l: usize,
    opts: &SdpOptions,
) -> Result<SosCertificate> {
    let n = system.num_vars;
    let basis = monomials_up_to(n, l / 2);
    let k = basis.len();

    // variables: one per Gram upper-triangle slot, then one per multiplier
    // coefficient (free)
    let mut psd_slots: Vec<Vec<(usize, usize)>> = Vec::new();
    let mut free_slots: Vec<Vec<usize>> = Vec::new();
    let mut cost: Vec<f64> = Vec::new();
    // rows keyed by the matched monomial
    let mut rows: BTreeMap<Monomial, Vec<(usize, f64)>> = BTreeMap::new();

    for r in 0..k {
        for c in r..k {
            let var = cost.len();
            psd_slots.push(vec![(r, c)]);
            free_slots.push(vec![]);
            cost.push(if r == c { 1.0 } else { 0.0 });
            let weight = if r == c { 1.0 } else { 2.0 };
            rows.entry(basis[r].mul(&basis[c]))
                .or_default()
                .push((var, weight));
        }
    }
    let mut mult_vars: Vec<Vec<(Monomial, usize)>> = Vec::new();
    let mut free_len = 0;
    for p in &system.equalities {
        if p.degree() > l {
            return Err(Error::Degree {
                degree: p.degree(),
                required: l,
            });
        }
        let mut vars_of_p = Vec::new();
        for q in monomials_up_to(n, l - p.degree()) {
            let var = cost.len();
            psd_slots.push(vec![]);
            free_slots.push(vec![free_len]);
            free_len += 1;
            cost.push(0.0);
            for (m, c) in p.terms() {
                rows.entry(q.mul(m)).or_default().push((var, c));
            }
            vars_of_p.push((q, var));
        }
        mult_vars.push(vars_of_p);
    }

    let nvar = cost.len();
    let m = rows.len();
    let mut eq = DMatrix::zeros(m, nvar);
    let mut rhs = DVector::zeros(m);
    for (j, (mono, entries)) in rows.iter().enumerate() {
        for &(var, c) in entries {
            eq[(j, var)] += c;
        }
        rhs[j] = if mono.is_one() { -1.0 } else { 0.0 };
    }

    let fac = FactoredSdp {
        psd_dim: k,
        free_len,
        psd_slots,
        free_slots,
        cost: DVector::from_vec(cost),
        eq,
        rhs,
    };
    let sol = fac.solve(opts)?;
    if sol.status == SdpStatus::Infeasible {
        return Err(Error::Solver(
            "certificate system infeasible though moment relaxation was too".into(),
        ));
    }
    // polish: the final affine projection makes the identity exact to
    // machine precision; keep alternating until the Gram side is PSD enough
    let mut v = sol.v;
    let mut best = None;
    for _ in 0..80 {
        let cert = assemble(&basis, &mult_vars, &v, l, k, n);
        let rep = verify_certificate(system, &cert)?;
        if rep.pass {
            return Ok(cert);
        }
        best = Some((cert, rep.residual));
        v = fac.polish(&v, 3);
    }
    let (cert, residual) = best.unwrap();
    let rep = verify_certificate(system, &cert)?;
    if rep.pass {
        Ok(cert)
    } else {
        Err(Error::Solver(format!(
            "certificate polish stalled at residual {:.3e}",
            residual
        )))
    }
}

fn assemble(
    basis: &[Monomial],
    mult_vars: &[Vec<(Monomial, usize)>],
    v: &DVector<f64>,
    l: usize,
    k: usize,
    n: usize,
) -> SosCertificate {
    let mut gram = DMatrix::zeros(k, k);
    let mut idx = 0;
    for r in 0..k {
        for c in r..k {
            gram[(r, c)] = v[idx];
            gram[(c, r)] = v[idx];
            idx += 1;
        }
    }
    let multipliers = mult_vars
        .iter()
        .map(|vars| {
            Polynomial::from_terms(n, vars.iter().map(|(q, var)| (q.clone(), v[*var])))
                .prune(0.0)
        })
        .collect();
    SosCertificate {
        degree: l,
        basis: basis.to_vec(),
        gram,
        multipliers,
    }
}

pub enum HypercubeOutcome {
    Refuted(SosCertificate),
    /// `p0` vanishes at this point of the cube, so the system is satisfiable.
    Satisfiable(Vec<f64>),
}

/// The system `{p0 = 0, x_1^2 - 1 = 0, ..., x_n^2 - 1 = 0}` whose
/// refutations [`hypercube_refutation`] constructs; multiplier order in the
/// certificate follows the equality order here.
pub fn hypercube_system(p0: &Polynomial) -> Result<PolynomialSystem> {
    let n = p0.num_vars();
    let mut equalities = vec![p0.clone()];
    for i in 0..n {
        equalities.push(
            Polynomial::var(n, i)
                .square()
                .sub(&Polynomial::constant(n, 1.0))?,
        );
    }
    PolynomialSystem::new(n, Polynomial::zero(n), equalities)
}

/// Constructive refutation over the hypercube: if `p0` never vanishes on
/// `{-1, +1}^n`, rescale so `p0^2 >= 1` there, interpolate
/// `R = sqrt(p0^2 - 1)` as a multilinear polynomial (exact on the cube), and
/// divide the defect `p0^2 - 1 - R^2` by the relations `x_i^2 - 1`. The
/// identity `-1 = R^2 + (-c p0) p0 + sum Q_i (x_i^2 - 1)` then holds exactly.
pub fn hypercube_refutation(p0: &Polynomial) -> Result<HypercubeOutcome> {
    let n = p0.num_vars();
    if n == 0 || n > 12 {
        return Err(Error::Dimension(format!(
            "hypercube refutation supports 1..=12 variables, got {}",
            n
        )));
    }
    let npts = 1usize << n;
    let mut values = Vec::with_capacity(npts);
    let mut min_sq = f64::INFINITY;
    for idx in 0..npts {
        let pt = hypercube_point(n, idx);
        let val = p0.eval(&pt)?;
        if val == 0.0 {
            return Ok(HypercubeOutcome::Satisfiable(pt));
        }
        min_sq = min_sq.min(val * val);
        values.push(val);
    }
    // scale only when needed so well-separated polynomials keep their
    // natural coefficients
    let c = if min_sq >= 1.0 { 1.0 } else { 1.0 / min_sq };
    // clamp: at the minimizing point c v^2 - 1 can round to -epsilon
    let r_values: Vec<f64> = values
        .iter()
        .map(|v| (c * v * v - 1.0).max(0.0).sqrt())
        .collect();
    let r = interpolate_multilinear(n, &r_values)?;

    // defect = c p0^2 - 1 - R^2 vanishes on the cube, so it reduces to zero
    // modulo the relations with the quotients as multipliers
    let defect = p0
        .square()
        .scale(c)
        .sub(&Polynomial::constant(n, 1.0))?
        .sub(&r.square())?;
    let (residue, quotients) = reduce_hypercube(&defect);
    let tail = residue.max_abs_coeff();
    if tail > 1e-6 {
        return Err(Error::Solver(format!(
            "hypercube reduction left multilinear residue {:.3e}",
            tail
        )));
    }

    // gram = outer product of R's coefficients over the multilinear basis
    let basis: Vec<Monomial> = r.terms().map(|(m, _)| m.clone()).collect();
    let coeffs: Vec<f64> = r.terms().map(|(_, cf)| cf).collect();
    let k = basis.len();
    let mut gram = DMatrix::zeros(k, k);
    for i in 0..k {
        for j in 0..k {
            gram[(i, j)] = coeffs[i] * coeffs[j];
        }
    }
    let degree = {
        let d = (2 * r.degree())
            .max(2 * p0.degree())
            .max(quotients.iter().map(|q| q.degree() + 2).max().unwrap_or(0));
        d + d % 2
    };
    let mut multipliers = vec![p0.scale(-c)];
    multipliers.extend(quotients);
    Ok(HypercubeOutcome::Refuted(SosCertificate {
        degree,
        basis,
        gram,
        multipliers,
    }))
}

impl Serialize for SosCertificate {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Repr<'a> {
            degree: usize,
            gram: Vec<Vec<f64>>,
            basis: &'a [Monomial],
            multipliers: &'a [Polynomial],
        }
        let gram = self
            .gram
            .row_iter()
            .map(|r| r.iter().copied().collect())
            .collect();
        Repr {
            degree: self.degree,
            gram,
            basis: &self.basis,
            multipliers: &self.multipliers,
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for SosCertificate {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Repr {
            degree: usize,
            gram: Vec<Vec<f64>>,
            basis: Vec<Monomial>,
            multipliers: Vec<Polynomial>,
        }
        let repr = Repr::deserialize(deserializer)?;
        let k = repr.basis.len();
        if repr.gram.len() != k || repr.gram.iter().any(|r| r.len() != k) {
            return Err(D::Error::custom("gram shape does not match basis"));
        }
        let gram = DMatrix::from_fn(k, k, |i, j| repr.gram[i][j]);
        Ok(SosCertificate {
            degree: repr.degree,
            basis: repr.basis,
            gram,
            multipliers: repr.multipliers,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn x(n: usize, i: usize) -> Polynomial {
        Polynomial::var(n, i)
    }

    fn csys(equalities: Vec<Polynomial>, n: usize) -> PolynomialSystem {
        PolynomialSystem::new(n, Polynomial::zero(n), equalities).unwrap()
    }

    #[test]
    fn hand_certificate_x2_plus_1() {
        // -1 = x^2 + (-1)(x^2 + 1)
        let sys = csys(vec![x(1, 0).square().add(&Polynomial::constant(1, 1.0)).unwrap()], 1);
        let cert = SosCertificate {
            degree: 2,
            basis: vec![Monomial::var(0)],
            gram: DMatrix::from_element(1, 1, 1.0),
            multipliers: vec![Polynomial::constant(1, -1.0)],
        };
        let rep = verify_certificate(&sys, &cert).unwrap();
        assert!(rep.pass);
        assert_eq!(rep.residual, 0.0);
    }

    #[test]
    fn perturbed_multiplier_fails() {
        let sys = csys(vec![x(1, 0).square().add(&Polynomial::constant(1, 1.0)).unwrap()], 1);
        let cert = SosCertificate {
            degree: 2,
            basis: vec![Monomial::var(0)],
            gram: DMatrix::from_element(1, 1, 1.0),
            multipliers: vec![Polynomial::constant(1, -1.0 + 1e-3)],
        };
        let rep = verify_certificate(&sys, &cert).unwrap();
        assert!(!rep.pass);
        assert!((rep.residual - 1e-3).abs() < 1e-9);
    }

    #[test]
    fn indefinite_gram_fails() {
        let sys = csys(vec![x(1, 0).square().add(&Polynomial::constant(1, 1.0)).unwrap()], 1);
        // exact identity with an indefinite Gram:
        // (-1e-2) + (1 - 1e-2) x^2 + (-(1 - 1e-2))(x^2 + 1) = -1
        let cert = SosCertificate {
            degree: 2,
            basis: vec![Monomial::one(), Monomial::var(0)],
            gram: DMatrix::from_row_slice(2, 2, &[-1e-2, 0.0, 0.0, 1.0 - 1e-2]),
            multipliers: vec![Polynomial::constant(1, -(1.0 - 1e-2))],
        };
        let rep = verify_certificate(&sys, &cert).unwrap();
        assert!(rep.residual <= 1e-12, "identity holds: {}", rep.residual);
        assert!((rep.gram_lambda_min + 1e-2).abs() < 1e-12);
        assert!(!rep.pass, "PSD check must fail");
    }

    #[test]
    fn extract_x2_plus_1() {
        let sys = csys(vec![x(1, 0).square().add(&Polynomial::constant(1, 1.0)).unwrap()], 1);
        match extract_certificate(&sys, 2).unwrap() {
            CertOutcome::Certificate(cert) => {
                let rep = verify_certificate(&sys, &cert).unwrap();
                assert!(rep.pass, "residual {} lmin {}", rep.residual, rep.gram_lambda_min);
            }
            CertOutcome::NotRefutable(_) => panic!("x^2 + 1 = 0 must be refutable"),
        }
    }

    #[test]
    fn extract_contradictory_pair() {
        // x^2 = 1 and x = 2
        let sys = csys(
            vec![
                x(1, 0).square().sub(&Polynomial::constant(1, 1.0)).unwrap(),
                x(1, 0).sub(&Polynomial::constant(1, 2.0)).unwrap(),
            ],
            1,
        );
        match extract_certificate(&sys, 2).unwrap() {
            CertOutcome::Certificate(cert) => {
                let rep = verify_certificate(&sys, &cert).unwrap();
                assert!(rep.pass, "residual {} lmin {}", rep.residual, rep.gram_lambda_min);
            }
            CertOutcome::NotRefutable(_) => panic!("contradictory system must be refutable"),
        }
    }

    #[test]
    fn satisfiable_system_yields_no_certificate() {
        let sys = csys(vec![x(1, 0).square().sub(&x(1, 0)).unwrap()], 1);
        match extract_certificate(&sys, 2).unwrap() {
            CertOutcome::NotRefutable(pe) => {
                let rep = crate::relax::satisfies(&pe, &sys, 1e-5).unwrap();
                assert!(rep.pass, "residual {}", rep.max_residual);
            }
            CertOutcome::Certificate(_) => panic!("satisfiable system refuted"),
        }
    }

    #[test]
    fn hypercube_single_var_interpolation() {
        // p0 = x - 3 on {-1, 1}: p0^2 - 1 takes values 15 (x = -1), 3 (x = 1),
        // so R = a + b x with a + b = sqrt(3), a - b = sqrt(15)
        let p0 = x(1, 0).sub(&Polynomial::constant(1, 3.0)).unwrap();
        match hypercube_refutation(&p0).unwrap() {
            HypercubeOutcome::Refuted(cert) => {
                let a_plus_b: f64;
                let a_minus_b: f64;
                {
                    // reconstruct R's coefficients from the rank-1 gram
                    let d0 = cert.gram[(0, 0)].sqrt();
                    let sign = cert.gram[(0, 1)].signum();
                    let d1 = sign * cert.gram[(1, 1)].sqrt();
                    // basis order is graded-lex: [1, x]
                    a_plus_b = d0 + d1;
                    a_minus_b = d0 - d1;
                }
                assert!((a_plus_b - 3f64.sqrt()).abs() < 1e-12, "{}", a_plus_b);
                assert!((a_minus_b - 15f64.sqrt()).abs() < 1e-12, "{}", a_minus_b);
                let sys = hypercube_system(&p0).unwrap();
                let rep = verify_certificate(&sys, &cert).unwrap();
                assert!(rep.pass, "residual {}", rep.residual);
            }
            _ => panic!("x = 3 has no solution in {{-1, 1}}"),
        }
    }

    #[test]
    fn hypercube_two_vars() {
        let p0 = x(2, 0)
            .add(&x(2, 1))
            .unwrap()
            .sub(&Polynomial::constant(2, 5.0))
            .unwrap();
        match hypercube_refutation(&p0).unwrap() {
            HypercubeOutcome::Refuted(cert) => {
                assert!(cert.degree <= 4);
                let sys = hypercube_system(&p0).unwrap();
                let rep = verify_certificate(&sys, &cert).unwrap();
                assert!(rep.pass, "residual {} lmin {}", rep.residual, rep.gram_lambda_min);
            }
            _ => panic!("x + y = 5 has no cube solution"),
        }
    }

    #[test]
    fn hypercube_satisfiable() {
        let p0 = x(1, 0).sub(&Polynomial::constant(1, 1.0)).unwrap();
        match hypercube_refutation(&p0).unwrap() {
            HypercubeOutcome::Satisfiable(pt) => assert_eq!(pt, vec![1.0]),
            _ => panic!("x = 1 is satisfiable on the cube"),
        }
    }

    #[test]
    fn certificate_json_roundtrip() {
        let cert = SosCertificate {
            degree: 2,
            basis: vec![Monomial::one(), Monomial::var(0)],
            gram: DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 2.0]),
            multipliers: vec![Polynomial::constant(1, -1.0)],
        };
        let s = serde_json::to_string(&cert).unwrap();
        let back: SosCertificate = serde_json::from_str(&s).unwrap();
        assert_eq!(back, cert);
        let v: serde_json::Value = serde_json::from_str(&s).unwrap();
        assert_eq!(v["gram"][0][1], 0.5);
    }
}
