//! Graph expansion: exact and brute-force edge expansion, spectral Cheeger
//! bounds, the degree-2 SOS estimate, and Gaussian rounding of its
//! pseudoexpectation into an actual cut.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::poly::{Monomial, Polynomial};
use crate::pseudo::PseudoExpectation;
use crate::relax::{MomentOutcome, MomentProgram};
use crate::rng::stream_rng;
use crate::rounding::match_two_moments;
use crate::sdp::SdpOptions;
use rand::Rng;

/// Number of rounding draws kept per attempt.
pub const R_MAX: usize = 20;

/// Undirected d-regular graph on vertices `0..n`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Graph {
    pub n: usize,
    pub d: usize,
    pub edges: Vec<(usize, usize)>,
}

impl Graph {
    pub fn new(n: usize, d: usize, edges: Vec<(usize, usize)>) -> Result<Self> {
        let mut degrees = vec![0usize; n];
        let mut seen = std::collections::BTreeSet::new();
        for &(u, v) in &edges {
            if u >= n || v >= n {
                return Err(Error::Invalid(format!("edge ({}, {}) out of range", u, v)));
            }
            if u == v {
                return Err(Error::Invalid(format!("self-loop at {}", u)));
            }
            let key = (u.min(v), u.max(v));
            if !seen.insert(key) {
                return Err(Error::Invalid(format!("duplicate edge ({}, {})", u, v)));
            }
            degrees[u] += 1;
            degrees[v] += 1;
        }
        if let Some(i) = degrees.iter().position(|&deg| deg != d) {
            return Err(Error::Invalid(format!(
                "vertex {} has degree {}, expected {}",
                i, degrees[i], d
            )));
        }
        Ok(Graph { n, d, edges })
    }

    /// Parses "n d" on the first line, then one "u v" edge per line.
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| Error::Invalid("empty graph file".into()))?;
        let mut it = header.split_whitespace();
        let n: usize = it
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| Error::Invalid("bad header: expected \"n d\"".into()))?;
        let d: usize = it
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| Error::Invalid("bad header: expected \"n d\"".into()))?;
        let mut edges = Vec::new();
        for line in lines {
            let mut it = line.split_whitespace();
            let u: usize = it
                .next()
                .and_then(|t| t.parse().ok())
                .ok_or_else(|| Error::Invalid(format!("bad edge line: {:?}", line)))?;
            let v: usize = it
                .next()
                .and_then(|t| t.parse().ok())
                .ok_or_else(|| Error::Invalid(format!("bad edge line: {:?}", line)))?;
            edges.push((u, v));
        }
        Graph::new(n, d, edges)
    }

    pub fn to_file_string(&self) -> String {
        let mut s = format!("{} {}\n", self.n, self.d);
        for &(u, v) in &self.edges {
            s.push_str(&format!("{} {}\n", u, v));
        }
        s
    }

    pub fn adjacency(&self) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(self.n, self.n);
        for &(u, v) in &self.edges {
            a[(u, v)] = 1.0;
            a[(v, u)] = 1.0;
        }
        a
    }

    /// `L = I - A/d`.
    pub fn laplacian(&self) -> DMatrix<f64> {
        DMatrix::identity(self.n, self.n) - self.adjacency() / self.d as f64
    }

    /// Second largest adjacency eigenvalue.
    pub fn lambda2(&self) -> f64 {
        let eig = self.adjacency().symmetric_eigen();
        let mut vals: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        vals.sort_by(|a, b| b.partial_cmp(a).unwrap());
        vals[1]
    }

    /// `sum_{uv in E} (x_u - x_v)^2` as a polynomial.
    pub fn cut_polynomial(&self) -> Polynomial {
        let mut p = Polynomial::zero(self.n);
        for &(u, v) in &self.edges {
            let diff = Polynomial::var(self.n, u)
                .sub(&Polynomial::var(self.n, v))
                .unwrap();
            p = p.add(&diff.square()).unwrap();
        }
        p
    }
}

/// `phi_G(S) = |E(S, V \ S)| / (d |S|)`.
pub fn phi_of_set(g: &Graph, set: &[usize]) -> Result<f64> {
    if set.is_empty() {
        return Err(Error::Invalid("empty vertex set".into()));
    }
    let mut member = vec![false; g.n];
    for &v in set {
        if v >= g.n {
            return Err(Error::Invalid(format!("vertex {} out of range", v)));
        }
        member[v] = true;
    }
    let crossing = g
        .edges
        .iter()
        .filter(|&&(u, v)| member[u] != member[v])
        .count();
    Ok(crossing as f64 / (g.d * set.len()) as f64)
}

/// Exhaustive minimum of `phi_G(S)` over `1 <= |S| <= n/2`.
pub fn brute_force_phi(g: &Graph, max_n: usize) -> Result<(f64, Vec<usize>)> {
    if g.n > max_n || g.n > 30 {
        return Err(Error::Dimension(format!(
            "brute force limited to {} vertices, got {}",
            max_n.min(30),
            g.n
        )));
    }
    let mut best = f64::INFINITY;
    let mut best_set = Vec::new();
    for mask in 1u64..(1 << g.n) {
        let size = mask.count_ones() as usize;
        if size * 2 > g.n {
            continue;
        }
        let set: Vec<usize> = (0..g.n).filter(|&i| mask >> i & 1 == 1).collect();
        let phi = phi_of_set(g, &set)?;
        if phi < best {
            best = phi;
            best_set = set;
        }
    }
    Ok((best, best_set))
}

/// Cheeger sandwich `(d - l2)/2d <= phi_G <= 2 sqrt((d - l2)/2d)`.
pub fn spectral_bounds(g: &Graph) -> (f64, f64) {
    let gap = ((g.d as f64 - g.lambda2()) / (2.0 * g.d as f64)).max(0.0);
    (gap, 2.0 * gap.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Sos2Mode {
    /// Boolean indicators with `sum x_i = k`; objective normalized by `d k`.
    Exact { k: usize },
    /// Drop the integrality: only `sum x_i = n/2` and `sum x_i^2 = n/2`
    /// constrain the moments; objective normalized by `d n / 2`.
    Relaxed,
}

#[derive(Debug, Clone)]
pub struct Sos2Estimate {
    pub phi: f64,
    pub witness: PseudoExpectation,
    pub converged: bool,
}

/// Degree-2 SOS lower bound on expansion.
pub fn sos2_estimate(g: &Graph, mode: Sos2Mode) -> Result<Sos2Estimate> {
    sos2_estimate_with(g, mode, &SdpOptions::default())
}

pub fn sos2_estimate_with(g: &Graph, mode: Sos2Mode, opts: &SdpOptions) -> Result<Sos2Estimate> {
    let n = g.n;
    let mut prog = MomentProgram::new(n, 2)?;
    let ones = Polynomial::linear_form(&vec![1.0; n]);
    let norm2 = Polynomial::norm2_squared(n);
    let scale = match mode {
        Sos2Mode::Exact { k } => {
            if k == 0 || 2 * k > n {
                return Err(Error::Invalid(format!("need 1 <= k <= n/2, got k = {}", k)));
            }
            for i in 0..n {
                let xi = Polynomial::var(n, i);
                prog.constrain_satisfaction(&xi.square().sub(&xi)?)?;
            }
            prog.constrain_satisfaction(&ones.sub(&Polynomial::constant(n, k as f64))?)?;
            (g.d * k) as f64
        }
        Sos2Mode::Relaxed => {
            let half = n as f64 / 2.0;
            prog.constrain_satisfaction(&ones.sub(&Polynomial::constant(n, half))?)?;
            prog.constrain_satisfaction(&norm2.sub(&Polynomial::constant(n, half))?)?;
            g.d as f64 * n as f64 / 2.0
        }
    };
    prog.set_objective(&g.cut_polynomial(), false)?;
    match prog.solve(opts)? {
        MomentOutcome::Solved {
            pe,
            value,
            converged,
            ..
        } => Ok(Sos2Estimate {
            phi: value / scale,
            witness: pe,
            converged,
        }),
        MomentOutcome::Infeasible { .. } => Err(Error::Solver(
            "expansion relaxation reported infeasible".into(),
        )),
    }
}

/// Rounds a degree-2 pseudoexpectation into a cut: sample Gaussians matching
/// its first two moments, threshold at 1/2, complement oversized sets, and
/// keep the best of `r_max` draws.
pub fn round_expansion(
    g: &Graph,
    pe: &PseudoExpectation,
    r_max: usize,
    seed: u64,
) -> Result<(Vec<usize>, f64)> {
    // both the boolean k = n/2 system and its relaxation pin these moments
    let half = g.n as f64 / 2.0;
    let sum1: f64 = (0..g.n)
        .map(|i| pe.moment(&Monomial::var(i)))
        .sum::<Result<f64>>()?;
    let sum2: f64 = (0..g.n)
        .map(|i| pe.moment(&Monomial::new(&[(i as u32, 2)])))
        .sum::<Result<f64>>()?;
    if (sum1 - half).abs() > 1e-4 || (sum2 - half).abs() > 1e-4 {
        return Err(Error::InvalidPseudoExpectation(format!(
            "moments off the balanced-cut system: sum L(x) = {}, sum L(x^2) = {}",
            sum1, sum2
        )));
    }
    let sampler = match_two_moments(pe)?;
    let mut best: Option<(Vec<usize>, f64)> = None;
    for t in 0..r_max {
        let mut rng = stream_rng(seed, t as u64);
        let y = sampler.sample_with(&mut rng);
        let mut set: Vec<usize> = (0..g.n).filter(|&i| y[i] >= 0.5).collect();
        if 2 * set.len() > g.n {
            let member: Vec<bool> = (0..g.n).map(|i| y[i] >= 0.5).collect();
            set = (0..g.n).filter(|&i| !member[i]).collect();
        }
        if set.is_empty() {
            continue;
        }
        let phi = phi_of_set(g, &set)?;
        if best.as_ref().map_or(true, |(_, b)| phi < *b) {
            best = Some((set, phi));
        }
    }
    best.ok_or(Error::RoundingFailure(r_max))
}

/// End-to-end expansion summary for one graph.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExpansionReport {
    pub n: usize,
    pub d: usize,
    pub phi_true: Option<f64>,
    pub phi_spectral_lower: f64,
    pub phi_spectral_upper: f64,
    pub phi_sos2: f64,
    pub rounded_set: Vec<usize>,
    pub phi_of_rounded: f64,
}

pub fn expansion_report(g: &Graph, mode: Sos2Mode, seed: u64) -> Result<ExpansionReport> {
    let (lower, upper) = spectral_bounds(g);
    let est = sos2_estimate(g, mode)?;
    let (rounded_set, phi_of_rounded) = round_expansion(g, &est.witness, R_MAX, seed)?;
    let phi_true = if g.n <= 16 {
        Some(brute_force_phi(g, 16)?.0)
    } else {
        None
    };
    Ok(ExpansionReport {
        n: g.n,
        d: g.d,
        phi_true,
        phi_spectral_lower: lower,
        phi_spectral_upper: upper,
        phi_sos2: est.phi,
        rounded_set,
        phi_of_rounded,
    })
}

/// Random 3-regular graph by the pairing model: pair up 3n half-edges
/// uniformly, retrying until the result is simple. `n` must be even.
pub fn random_3_regular(n: usize, seed: u64) -> Result<Graph> {
    if n < 4 || n % 2 != 0 {
        return Err(Error::Invalid(format!(
            "3-regular graphs need even n >= 4, got {}",
            n
        )));
    }
    for attempt in 0..10_000u64 {
        let mut rng = stream_rng(seed, attempt);
        let mut stubs: Vec<usize> = (0..n).flat_map(|v| [v, v, v]).collect();
        // Fisher-Yates, then pair consecutive stubs
        for i in (1..stubs.len()).rev() {
            let j = rng.gen_range(0..=i);
            stubs.swap(i, j);
        }
        let edges: Vec<(usize, usize)> = stubs.chunks(2).map(|c| (c[0], c[1])).collect();
        if let Ok(g) = Graph::new(n, 3, edges) {
            return Ok(g);
        }
    }
    Err(Error::Solver("pairing model failed to produce a simple graph".into()))
}

/// K4, C4, and the disjoint union of two triangles: the exactly solvable
/// test graphs.
pub fn k4() -> Graph {
    Graph::new(4, 3, vec![(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]).unwrap()
}

pub fn c4() -> Graph {
    Graph::new(4, 2, vec![(0, 1), (1, 2), (2, 3), (3, 0)]).unwrap()
}

pub fn two_triangles() -> Graph {
    Graph::new(6, 2, vec![(0, 1), (1, 2), (2, 0), (3, 4), (4, 5), (5, 3)]).unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn phi_of_set_hand_counts() {
        assert_eq!(phi_of_set(&c4(), &[0, 1]).unwrap(), 0.5);
        assert_eq!(phi_of_set(&k4(), &[0, 1]).unwrap(), 2.0 / 3.0);
        assert_eq!(phi_of_set(&two_triangles(), &[0, 1, 2]).unwrap(), 0.0);
        assert!(phi_of_set(&c4(), &[]).is_err());
    }

    #[test]
    fn brute_force_exact_values() {
        assert_eq!(brute_force_phi(&c4(), 16).unwrap().0, 0.5);
        assert_eq!(brute_force_phi(&k4(), 16).unwrap().0, 2.0 / 3.0);
        let (phi, set) = brute_force_phi(&two_triangles(), 16).unwrap();
        assert_eq!(phi, 0.0);
        assert_eq!(set.len(), 3);
    }

    #[test]
    fn spectral_bounds_known_spectra() {
        // two triangles: disconnected, lambda2 = d = 2
        let (lo, hi) = spectral_bounds(&two_triangles());
        assert!(lo.abs() < 1e-9 && hi.abs() < 1e-9);
        // K4: lambda2 = -1
        let (lo, _) = spectral_bounds(&k4());
        assert!((lo - 2.0 / 3.0).abs() < 1e-9);
        // C4: lambda2 = 0
        let (lo, hi) = spectral_bounds(&c4());
        assert!((lo - 0.5).abs() < 1e-9);
        assert!((hi - 2f64.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn cheeger_sandwich_small_random() {
        for seed in 0..10 {
            let g = random_3_regular(8, seed).unwrap();
            let (lo, hi) = spectral_bounds(&g);
            let (phi, _) = brute_force_phi(&g, 16).unwrap();
            assert!(lo - 1e-9 <= phi && phi <= hi + 1e-9, "seed {}", seed);
        }
    }

    #[test]
    fn relaxed_estimate_matches_spectral_gap() {
        // relaxed degree-2 value is exactly (d - lambda2)/2d
        for (g, want) in [(k4(), 2.0 / 3.0), (c4(), 0.5)] {
            let est = sos2_estimate(&g, Sos2Mode::Relaxed).unwrap();
            assert!((est.phi - want).abs() < 1e-4, "got {} want {}", est.phi, want);
        }
        let est = sos2_estimate(&two_triangles(), Sos2Mode::Relaxed).unwrap();
        assert!(est.phi <= 1e-5, "{}", est.phi);
    }

    #[test]
    fn exact_mode_sound_against_brute_force() {
        let g = random_3_regular(6, 3).unwrap();
        for k in 1..=3usize {
            let est = sos2_estimate(&g, Sos2Mode::Exact { k }).unwrap();
            let best_k = (1u64..1 << g.n)
                .filter(|m| m.count_ones() as usize == k)
                .map(|m| {
                    let set: Vec<usize> = (0..g.n).filter(|&i| m >> i & 1 == 1).collect();
                    phi_of_set(&g, &set).unwrap()
                })
                .fold(f64::INFINITY, f64::min);
            assert!(est.phi <= best_k + 1e-5, "k = {}: {} vs {}", k, est.phi, best_k);
        }
    }

    #[test]
    fn rounding_point_mass_recovers_triangle() {
        let g = two_triangles();
        let pe = PseudoExpectation::point_mass(&[1.0, 1.0, 1.0, 0.0, 0.0, 0.0], 2).unwrap();
        let (set, phi) = round_expansion(&g, &pe, R_MAX, 0).unwrap();
        assert_eq!(set, vec![0, 1, 2]);
        assert_eq!(phi, 0.0);
    }

    #[test]
    fn rounding_k4_stays_legal() {
        let est = sos2_estimate(&k4(), Sos2Mode::Relaxed).unwrap();
        let (set, phi) = round_expansion(&k4(), &est.witness, R_MAX, 1).unwrap();
        assert!(!set.is_empty() && set.len() <= 2);
        assert!(phi <= 1.0);
    }

    #[test]
    fn rounding_rejects_unbalanced_pe() {
        let pe = PseudoExpectation::point_mass(&[1.0, 1.0, 1.0, 1.0], 2).unwrap();
        assert!(matches!(
            round_expansion(&k4(), &pe, R_MAX, 0),
            Err(Error::InvalidPseudoExpectation(_))
        ));
    }

    #[test]
    fn graph_validation() {
        assert!(Graph::new(2, 1, vec![(0, 0)]).is_err()); // loop
        assert!(Graph::new(2, 2, vec![(0, 1), (1, 0)]).is_err()); // duplicate
        assert!(Graph::new(3, 2, vec![(0, 1), (1, 2)]).is_err()); // irregular
        assert!(Graph::new(2, 1, vec![(0, 1)]).is_ok());
    }

    #[test]
    fn graph_parse_round_trip() {
        let g = k4();
        let parsed = Graph::parse(&g.to_file_string()).unwrap();
        assert_eq!(parsed, g);
        assert!(Graph::parse("").is_err());
        assert!(Graph::parse("4 3\n0 0\n").is_err());
    }

    #[test]
    fn random_regular_is_valid_and_deterministic() {
        for seed in 0..5 {
            let g = random_3_regular(10, seed).unwrap();
            assert_eq!(g.d, 3);
            assert_eq!(g.edges.len(), 15);
            assert_eq!(g, random_3_regular(10, seed).unwrap());
        }
        assert!(random_3_regular(7, 0).is_err());
    }
}
