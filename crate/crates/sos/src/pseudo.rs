//! Pseudoexpectation operators: linear functionals on polynomials of bounded
//! degree that normalize constants to 1 and assign nonnegative values to
//! squares. The dual witnesses produced by moment relaxations.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::poly::{monomials_up_to, Monomial, Polynomial};
use crate::sdp::lambda_min;

/// Linear functional `L` on polynomials of degree <= `degree` given by its
/// values on all monomials. Storage is one value per monomial, so equal
/// monomial products agree by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoExpectation {
    num_vars: usize,
    degree: usize,
    moments: BTreeMap<Monomial, f64>,
}

/// Invariant check outcome; `lambda_min` is the smallest eigenvalue of the
/// moment matrix.
#[derive(Debug, Clone)]
pub struct PseudoReport {
    pub normalization: f64,
    pub lambda_min: f64,
    pub pass: bool,
}

impl PseudoExpectation {
    /// Builds from a complete moment table; every monomial of degree up to
    /// `degree` over `num_vars` variables must be present.
    pub fn new(
        num_vars: usize,
        degree: usize,
        moments: BTreeMap<Monomial, f64>,
    ) -> Result<Self> {
        if degree == 0 || degree % 2 != 0 {
            return Err(Error::Degree {
                degree,
                required: degree + degree % 2,
            });
        }
        let expected = monomials_up_to(num_vars, degree);
        if moments.len() != expected.len()
            || expected.iter().any(|m| !moments.contains_key(m))
        {
            return Err(Error::IncompleteTable {
                expected: expected.len(),
                got: moments.len(),
            });
        }
        let one = moments[&Monomial::one()];
        if (one - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidPseudoExpectation(format!(
                "normalization L(1) = {}",
                one
            )));
        }
        Ok(PseudoExpectation {
            num_vars,
            degree,
            moments,
        })
    }

    /// Builds by evaluating `f` on every monomial of degree up to `degree`.
    pub fn from_fn<F: FnMut(&Monomial) -> f64>(
        num_vars: usize,
        degree: usize,
        mut f: F,
    ) -> Result<Self> {
        let moments = monomials_up_to(num_vars, degree)
            .into_iter()
            .map(|m| {
                let v = f(&m);
                (m, v)
            })
            .collect();
        PseudoExpectation::new(num_vars, degree, moments)
    }

    /// Moments of the point mass at `point`.
    pub fn point_mass(point: &[f64], degree: usize) -> Result<Self> {
        PseudoExpectation::from_fn(point.len(), degree, |m| m.eval(point))
    }

    /// Moments of a finite mixture of point masses; weights must sum to 1.
    pub fn mixture(components: &[(f64, Vec<f64>)], degree: usize) -> Result<Self> {
        let num_vars = components
            .first()
            .map(|(_, p)| p.len())
            .ok_or_else(|| Error::Invalid("empty mixture".into()))?;
        let total: f64 = components.iter().map(|(w, _)| w).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Invalid(format!("mixture weights sum to {}", total)));
        }
        PseudoExpectation::from_fn(num_vars, degree, |m| {
            components.iter().map(|(w, p)| w * m.eval(p)).sum()
        })
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn moments(&self) -> &BTreeMap<Monomial, f64> {
        &self.moments
    }

    pub fn moment(&self, m: &Monomial) -> Result<f64> {
        self.moments.get(m).copied().ok_or_else(|| {
            Error::InvalidPseudoExpectation(format!(
                "no moment for monomial of degree {}",
                m.degree()
            ))
        })
    }

    /// Applies the functional to a polynomial of degree <= `self.degree`.
    pub fn expect(&self, p: &Polynomial) -> Result<f64> {
        if p.degree() > self.degree {
            return Err(Error::Degree {
                degree: p.degree(),
                required: self.degree,
            });
        }
        let mut acc = 0.0;
        for (m, c) in p.terms() {
            acc += c * self.moment(m)?;
        }
        Ok(acc)
    }

    /// Graded-lex monomial basis of the moment matrix (degree <= l/2).
    pub fn basis(&self) -> Vec<Monomial> {
        monomials_up_to(self.num_vars, self.degree / 2)
    }

    /// `M[a, b] = L(x^a x^b)` over the half-degree basis.
    pub fn moment_matrix(&self) -> Result<DMatrix<f64>> {
        let basis = self.basis();
        let k = basis.len();
        let mut m = DMatrix::zeros(k, k);
        for i in 0..k {
            for j in i..k {
                let v = self.moment(&basis[i].mul(&basis[j]))?;
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        Ok(m)
    }

    /// Checks `L(1) = 1` and PSD-ness of the moment matrix.
    pub fn check_invariants(&self, psd_tol: f64) -> Result<PseudoReport> {
        let normalization = self.moment(&Monomial::one())?;
        let lm = lambda_min(&self.moment_matrix()?);
        Ok(PseudoReport {
            normalization,
            lambda_min: lm,
            pass: (normalization - 1.0).abs() <= 1e-9 && lm >= -psd_tol,
        })
    }
}

/// `L'(P) = L(W^2 P) / L(W^2)`: conditioning a pseudodistribution on the
/// event favored by `W`. The output degree drops by `2 deg(W)` so the new
/// operator still has a PSD moment matrix.
pub fn reweight(pe: &PseudoExpectation, w: &Polynomial) -> Result<PseudoExpectation> {
    let degw = w.degree();
    if pe.degree() < 2 * degw + 2 {
        return Err(Error::Degree {
            degree: pe.degree(),
            required: 2 * degw + 2,
        });
    }
    let w2 = w.square();
    let mass = pe.expect(&w2)?;
    if mass < 1e-8 {
        return Err(Error::DegenerateWeight(mass));
    }
    let new_degree = pe.degree() - (2 * degw).max(2);
    PseudoExpectation::from_fn(pe.num_vars(), new_degree, |m| {
        let mut acc = 0.0;
        for (wm, wc) in w2.terms() {
            acc += wc * pe.moments[&wm.mul(m)];
        }
        acc / mass
    })
}

impl Serialize for PseudoExpectation {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Repr<'a> {
            degree: usize,
            moments: Vec<(&'a Monomial, f64)>,
        }
        Repr {
            degree: self.degree,
            moments: self.moments.iter().map(|(m, &v)| (m, v)).collect(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for PseudoExpectation {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Repr {
            degree: usize,
            moments: Vec<(Monomial, f64)>,
        }
        let repr = Repr::deserialize(deserializer)?;
        let num_vars = repr
            .moments
            .iter()
            .filter_map(|(m, _)| m.max_var())
            .map(|v| v as usize + 1)
            .max()
            .unwrap_or(0);
        let moments: BTreeMap<Monomial, f64> = repr.moments.into_iter().collect();
        PseudoExpectation::new(num_vars, repr.degree, moments)
            .map_err(|e| D::Error::custom(e.to_string()))
    }
}
