//! Sparse multivariate polynomials over the reals in the monomial basis.
//!
//! Coefficients are `f64`; monomials are sparse exponent lists ordered
//! graded-lexicographically so that moment-matrix indexing is deterministic.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

use rand::Rng;
use serde::de::{self, Deserializer, SeqAccess, Visitor};
use serde::ser::{SerializeSeq, Serializer};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::seeded_rng;

/// Coefficients with absolute value below this are dropped during
/// canonicalization.
pub const COEFF_EPS: f64 = 0.0;

/// A monomial `x^alpha` stored as a sparse list of `(variable, power)` pairs
/// with strictly increasing variable indices and powers >= 1. The empty list
/// is the constant monomial 1.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct Monomial {
    exps: Vec<(u32, u32)>,
}

impl Monomial {
    pub fn one() -> Self {
        Monomial { exps: Vec::new() }
    }

    pub fn var(i: usize) -> Self {
        Monomial {
            exps: vec![(i as u32, 1)],
        }
    }

    /// Builds a monomial from `(variable, power)` pairs; pairs are sorted and
    /// merged, zero powers dropped.
    pub fn new(pairs: &[(u32, u32)]) -> Self {
        let mut map: BTreeMap<u32, u32> = BTreeMap::new();
        for &(v, p) in pairs {
            if p > 0 {
                *map.entry(v).or_insert(0) += p;
            }
        }
        Monomial {
            exps: map.into_iter().collect(),
        }
    }

    pub fn exps(&self) -> &[(u32, u32)] {
        &self.exps
    }

    pub fn degree(&self) -> usize {
        self.exps.iter().map(|&(_, p)| p as usize).sum()
    }

    pub fn is_one(&self) -> bool {
        self.exps.is_empty()
    }

    pub fn max_var(&self) -> Option<usize> {
        self.exps.last().map(|&(v, _)| v as usize)
    }

    pub fn power_of(&self, var: usize) -> u32 {
        self.exps
            .iter()
            .find(|&&(v, _)| v as usize == var)
            .map(|&(_, p)| p)
            .unwrap_or(0)
    }

    pub fn mul(&self, other: &Monomial) -> Monomial {
        let mut map: BTreeMap<u32, u32> = self.exps.iter().copied().collect();
        for &(v, p) in &other.exps {
            *map.entry(v).or_insert(0) += p;
        }
        Monomial {
            exps: map.into_iter().collect(),
        }
    }

    /// Returns `self / other` if `other` divides `self`.
    pub fn div(&self, other: &Monomial) -> Option<Monomial> {
        let mut map: BTreeMap<u32, u32> = self.exps.iter().copied().collect();
        for &(v, p) in &other.exps {
            let e = map.get_mut(&v)?;
            if *e < p {
                return None;
            }
            *e -= p;
        }
        Some(Monomial {
            exps: map.into_iter().filter(|&(_, p)| p > 0).collect(),
        })
    }

    pub fn eval(&self, point: &[f64]) -> f64 {
        self.exps
            .iter()
            .map(|&(v, p)| point[v as usize].powi(p as i32))
            .product()
    }

    /// True when every variable appears with power <= 1.
    pub fn is_multilinear(&self) -> bool {
        self.exps.iter().all(|&(_, p)| p <= 1)
    }
}

impl Ord for Monomial {
    /// Graded lexicographic: total degree first, then lex on the dense
    /// exponent sequence (higher power on an earlier variable sorts later).
    fn cmp(&self, other: &Self) -> Ordering {
        match self.degree().cmp(&other.degree()) {
            Ordering::Equal => {}
            o => return o,
        }
        let mut a = self.exps.iter().peekable();
        let mut b = other.exps.iter().peekable();
        loop {
            match (a.peek(), b.peek()) {
                (None, None) => return Ordering::Equal,
                (Some(_), None) => return Ordering::Greater,
                (None, Some(_)) => return Ordering::Less,
                (Some(&&(va, pa)), Some(&&(vb, pb))) => {
                    if va != vb {
                        // earlier variable with nonzero power sorts greater
                        return vb.cmp(&va);
                    }
                    if pa != pb {
                        return pa.cmp(&pb);
                    }
                    a.next();
                    b.next();
                }
            }
        }
    }
}

impl PartialOrd for Monomial {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Monomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.exps.is_empty() {
            return write!(f, "1");
        }
        for (i, &(v, p)) in self.exps.iter().enumerate() {
            if i > 0 {
                write!(f, "*")?;
            }
            if p == 1 {
                write!(f, "x{}", v)?;
            } else {
                write!(f, "x{}^{}", v, p)?;
            }
        }
        Ok(())
    }
}

/// Sparse multivariate polynomial: `terms` maps monomials to nonzero
/// coefficients; all variable indices are `< num_vars`.
#[derive(Debug, Clone, PartialEq)]
pub struct Polynomial {
    num_vars: usize,
    terms: BTreeMap<Monomial, f64>,
}

impl Polynomial {
    pub fn zero(num_vars: usize) -> Self {
        Polynomial {
            num_vars,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(num_vars: usize, c: f64) -> Self {
        let mut p = Self::zero(num_vars);
        if c != 0.0 {
            p.terms.insert(Monomial::one(), c);
        }
        p
    }

    pub fn var(num_vars: usize, i: usize) -> Self {
        assert!(i < num_vars, "variable index out of range");
        let mut p = Self::zero(num_vars);
        p.terms.insert(Monomial::var(i), 1.0);
        p
    }

    pub fn from_terms(num_vars: usize, terms: impl IntoIterator<Item = (Monomial, f64)>) -> Self {
        let mut p = Self::zero(num_vars);
        for (m, c) in terms {
            if let Some(v) = m.max_var() {
                assert!(v < num_vars, "variable index {} out of range", v);
            }
            p.add_term(m, c);
        }
        p
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, f64)> {
        self.terms.iter().map(|(m, &c)| (m, c))
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn coeff(&self, m: &Monomial) -> f64 {
        self.terms.get(m).copied().unwrap_or(0.0)
    }

    /// Degree of the polynomial; 0 for the zero polynomial by convention.
    pub fn degree(&self) -> usize {
        self.terms.keys().map(|m| m.degree()).max().unwrap_or(0)
    }

    pub fn add_term(&mut self, m: Monomial, c: f64) {
        if c == 0.0 {
            return;
        }
        let entry = self.terms.entry(m).or_insert(0.0);
        *entry += c;
        if *entry == 0.0 {
            let key = self
                .terms
                .iter()
                .find(|(_, &v)| v == 0.0)
                .map(|(k, _)| k.clone());
            if let Some(k) = key {
                self.terms.remove(&k);
            }
        }
    }

    fn check_compatible(&self, other: &Polynomial) -> Result<()> {
        if self.num_vars != other.num_vars {
            return Err(Error::Dimension(format!(
                "polynomials over {} and {} variables",
                self.num_vars, other.num_vars
            )));
        }
        Ok(())
    }

    pub fn add(&self, other: &Polynomial) -> Result<Polynomial> {
        self.check_compatible(other)?;
        let mut out = self.clone();
        for (m, &c) in &other.terms {
            out.add_term(m.clone(), c);
        }
        Ok(out)
    }

    pub fn sub(&self, other: &Polynomial) -> Result<Polynomial> {
        self.check_compatible(other)?;
        let mut out = self.clone();
        for (m, &c) in &other.terms {
            out.add_term(m.clone(), -c);
        }
        Ok(out)
    }

    pub fn mul(&self, other: &Polynomial) -> Result<Polynomial> {
        self.check_compatible(other)?;
        let mut out = Polynomial::zero(self.num_vars);
        for (ma, &ca) in &self.terms {
            for (mb, &cb) in &other.terms {
                out.add_term(ma.mul(mb), ca * cb);
            }
        }
        Ok(out)
    }

    pub fn scale(&self, s: f64) -> Polynomial {
        let mut out = Polynomial::zero(self.num_vars);
        for (m, &c) in &self.terms {
            out.add_term(m.clone(), c * s);
        }
        out
    }

    pub fn square(&self) -> Polynomial {
        self.mul(self).expect("same polynomial")
    }

    pub fn eval(&self, point: &[f64]) -> Result<f64> {
        if point.len() != self.num_vars {
            return Err(Error::Dimension(format!(
                "point of length {} for polynomial over {} variables",
                point.len(),
                self.num_vars
            )));
        }
        Ok(self.terms.iter().map(|(m, &c)| c * m.eval(point)).sum())
    }

    /// Largest absolute coefficient (0 for the zero polynomial).
    pub fn max_abs_coeff(&self) -> f64 {
        self.terms.values().fold(0.0, |a, &c| a.max(c.abs()))
    }

    /// Drops coefficients with absolute value <= `tol`.
    pub fn prune(&self, tol: f64) -> Polynomial {
        Polynomial {
            num_vars: self.num_vars,
            terms: self
                .terms
                .iter()
                .filter(|(_, &c)| c.abs() > tol)
                .map(|(m, &c)| (m.clone(), c))
                .collect(),
        }
    }

    /// Reinterprets the polynomial over a larger variable set.
    pub fn extend_vars(&self, num_vars: usize) -> Polynomial {
        assert!(num_vars >= self.num_vars);
        Polynomial {
            num_vars,
            terms: self.terms.clone(),
        }
    }

    /// Linear form `<coeffs, x>`.
    pub fn linear_form(coeffs: &[f64]) -> Polynomial {
        let mut p = Polynomial::zero(coeffs.len());
        for (i, &c) in coeffs.iter().enumerate() {
            p.add_term(Monomial::var(i), c);
        }
        p
    }

    /// `sum_i x_i^2`.
    pub fn norm2_squared(num_vars: usize) -> Polynomial {
        let mut p = Polynomial::zero(num_vars);
        for i in 0..num_vars {
            p.add_term(Monomial::new(&[(i as u32, 2)]), 1.0);
        }
        p
    }
}

/// Reduces `p` modulo the hypercube ideal generated by `x_i^2 - 1`,
/// returning the multilinear remainder and the quotients: the identity
/// `p = multilinear + sum_i quotients[i] * (x_i^2 - 1)` holds exactly.
pub fn reduce_hypercube(p: &Polynomial) -> (Polynomial, Vec<Polynomial>) {
    let n = p.num_vars();
    let mut quotients = vec![Polynomial::zero(n); n];
    let mut out = Polynomial::zero(n);
    // worklist of terms still to reduce, highest monomial first
    let mut work: BTreeMap<Monomial, f64> = p.terms.clone();
    while let Some((m, c)) = work.iter().next_back().map(|(m, &c)| (m.clone(), c)) {
        work.remove(&m);
        if c == 0.0 {
            continue;
        }
        match m.exps().iter().find(|&&(_, pow)| pow >= 2) {
            None => out.add_term(m, c),
            Some(&(v, _)) => {
                // x_v^e = x_v^{e-2} (x_v^2 - 1) + x_v^{e-2}
                let rest: Vec<(u32, u32)> = m
                    .exps()
                    .iter()
                    .map(|&(w, pw)| if w == v { (w, pw - 2) } else { (w, pw) })
                    .filter(|&(_, pw)| pw > 0)
                    .collect();
                let reduced = Monomial::new(&rest);
                quotients[v as usize].add_term(reduced.clone(), c);
                let e = work.entry(reduced).or_insert(0.0);
                *e += c;
            }
        }
    }
    (out, quotients)
}

/// Enumerates the point of `{-1,+1}^n` with index `idx`: bit `i` set means
/// `x_i = -1`.
pub fn hypercube_point(n: usize, idx: usize) -> Vec<f64> {
    (0..n)
        .map(|i| if idx >> i & 1 == 1 { -1.0 } else { 1.0 })
        .collect()
}

/// Interpolates a table of values on `{-1,+1}^n` (indexed by
/// [`hypercube_point`]) as the unique multilinear polynomial through them.
pub fn interpolate_multilinear(n: usize, values: &[f64]) -> Result<Polynomial> {
    assert!(n <= 20, "hypercube interpolation limited to n <= 20");
    let size = 1usize << n;
    if values.len() != size {
        return Err(Error::IncompleteTable {
            expected: size,
            got: values.len(),
        });
    }
    // Walsh-Hadamard transform: coefficient of prod_{i in S} x_i is the
    // average of f * chi_S over the cube.
    let mut buf = values.to_vec();
    let mut h = 1;
    while h < size {
        for i in (0..size).step_by(h * 2) {
            for j in i..i + h {
                let (a, b) = (buf[j], buf[j + h]);
                // index bit set means x = -1, so chi weighting is (a - b)/...
                buf[j] = a + b;
                buf[j + h] = a - b;
            }
        }
        h *= 2;
    }
    let scale = 1.0 / size as f64;
    let mut poly = Polynomial::zero(n);
    for (idx, &c) in buf.iter().enumerate() {
        if c == 0.0 {
            continue;
        }
        let pairs: Vec<(u32, u32)> = (0..n)
            .filter(|i| idx >> i & 1 == 1)
            .map(|i| (i as u32, 1))
            .collect();
        poly.add_term(Monomial::new(&pairs), c * scale);
    }
    Ok(poly)
}

/// Degree-1 homogeneous polynomial `<u, v>` for `v` uniform on the unit
/// sphere of `R^n`, drawn reproducibly from `seed`.
pub fn random_linear_form(n: usize, seed: u64) -> Polynomial {
    assert!(n >= 1);
    let mut rng = seeded_rng(seed);
    random_linear_form_with(n, &mut rng)
}

/// As [`random_linear_form`] but drawing from a caller-provided generator.
pub fn random_linear_form_with<R: Rng>(n: usize, rng: &mut R) -> Polynomial {
    loop {
        let v: Vec<f64> = (0..n).map(|_| standard_normal(rng)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-8 {
            let coeffs: Vec<f64> = v.iter().map(|x| x / norm).collect();
            return Polynomial::linear_form(&coeffs);
        }
    }
}

/// Samples one standard normal variate.
pub fn standard_normal<R: Rng>(rng: &mut R) -> f64 {
    // Box-Muller; consumes two uniforms deterministically.
    loop {
        let u1: f64 = rng.gen::<f64>();
        let u2: f64 = rng.gen::<f64>();
        if u1 > f64::MIN_POSITIVE {
            return (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos();
        }
    }
}

// JSON encoding: {"num_vars": n, "terms": [[[var, pow], ...], coeff]}

impl Serialize for Monomial {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut seq = serializer.serialize_seq(Some(self.exps.len()))?;
        for &(v, p) in &self.exps {
            seq.serialize_element(&(v, p))?;
        }
        seq.end()
    }
}

impl<'de> Deserialize<'de> for Monomial {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let pairs: Vec<(u32, u32)> = Vec::deserialize(deserializer)?;
        Ok(Monomial::new(&pairs))
    }
}

#[derive(Serialize, Deserialize)]
struct PolynomialRepr {
    num_vars: usize,
    terms: Vec<(Monomial, f64)>,
}

impl Serialize for Polynomial {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let repr = PolynomialRepr {
            num_vars: self.num_vars,
            terms: self.terms.iter().map(|(m, &c)| (m.clone(), c)).collect(),
        };
        repr.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Polynomial {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        struct V;
        impl<'de> Visitor<'de> for V {
            type Value = PolynomialRepr;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("polynomial object")
            }
            fn visit_seq<A: SeqAccess<'de>>(
                self,
                _: A,
            ) -> std::result::Result<Self::Value, A::Error> {
                Err(de::Error::custom("expected object, not sequence"))
            }
            fn visit_map<A: de::MapAccess<'de>>(
                self,
                map: A,
            ) -> std::result::Result<Self::Value, A::Error> {
                PolynomialRepr::deserialize(de::value::MapAccessDeserializer::new(map))
            }
        }
        let repr = deserializer.deserialize_map(V)?;
        for (m, _) in &repr.terms {
            if let Some(v) = m.max_var() {
                if v >= repr.num_vars {
                    return Err(de::Error::custom(format!(
                        "variable index {} out of range for num_vars {}",
                        v, repr.num_vars
                    )));
                }
            }
        }
        Ok(Polynomial::from_terms(repr.num_vars, repr.terms))
    }
}

/// Enumerates all monomials over `n` variables with total degree <= `max_deg`
/// in graded-lex order. Used for moment-matrix indexing everywhere.
pub fn monomials_up_to(n: usize, max_deg: usize) -> Vec<Monomial> {
    let mut out = Vec::new();
    let mut current = vec![Monomial::one()];
    out.push(Monomial::one());
    for _ in 1..=max_deg {
        let mut next = Vec::new();
        for m in &current {
            let start = m.max_var().unwrap_or(0);
            let lo = if m.is_one() { 0 } else { start };
            for v in lo..n {
                next.push(m.mul(&Monomial::var(v)));
            }
        }
        next.sort();
        next.dedup();
        out.extend(next.iter().cloned());
        current = next;
    }
    out.sort();
    out
}
