//! End-to-end acceptance gate: 13 numbered criteria, one printed pass/fail
//! line each (run with `--nocapture` to see them live). Each criterion is a
//! statistical or exact property with an analytically derived target; the
//! test fails if any criterion fails, but always evaluates and reports all
//! of them first.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};

use sos::cert::{
    extract_certificate, hypercube_refutation, hypercube_system, verify_certificate, CertOutcome,
    HypercubeOutcome,
};
use sos::dict_learn::{
    dictionary_samples, hausdorff_symmetrized, learn_dictionary, Dictionary, LearnOptions,
    NiceDistSpec,
};
use sos::expansion::{
    brute_force_phi, c4, k4, random_3_regular, round_expansion, sos2_estimate, spectral_bounds,
    two_triangles, Graph, Sos2Mode, R_MAX,
};
use sos::hyper::{build_wk, certify_hypercontractivity, dim_bound_witness};
use sos::poly::{interpolate_multilinear, monomials_up_to, standard_normal, Monomial, Polynomial};
use sos::pseudo::PseudoExpectation;
use sos::relax::{
    local_minima_example, satisfies, sos_estimate, EstimateOutcome, MomentOutcome, MomentProgram,
    PolynomialSystem,
};
use sos::rng::{seeded_rng, stream_rng};
use sos::rounding::match_two_moments;
use sos::sdp::SdpOptions;
use sos::sparse_vec::{
    certify_subspace_4norm, gaussian_fourth_moment_matrix, generate_instance, recover_with,
    verify_4norm_certificate, CertifyOutcome, RecoveryOutcome, Subspace,
};

struct Gate {
    failures: Vec<String>,
}

impl Gate {
    fn report(&mut self, idx: usize, name: &str, pass: bool, detail: String, t0: Instant) {
        let verdict = if pass { "PASS" } else { "FAIL" };
        println!(
            "criterion {:2} [{}] {} ({:.1}s): {}",
            idx,
            verdict,
            name,
            t0.elapsed().as_secs_f64(),
            detail
        );
        if !pass {
            self.failures.push(format!("criterion {}: {}", idx, name));
        }
    }
}

fn random_subspace(n: usize, d: usize, rng: &mut sos::rng::SosRng) -> Subspace {
    let g = DMatrix::from_fn(n, d, |_, _| standard_normal(rng));
    let q = g.qr().q().columns(0, d).into_owned();
    Subspace::new(q).unwrap()
}

fn sphere(n: usize) -> Polynomial {
    Polynomial::norm2_squared(n)
        .sub(&Polynomial::constant(n, 1.0))
        .unwrap()
}

/// 3-regular corpus shared by criteria 2 and 3.
fn regular_corpus() -> Vec<Graph> {
    let mut graphs = Vec::new();
    for &n in &[4usize, 6, 8, 10, 12] {
        for seed in 0..10u64 {
            graphs.push(random_3_regular(n, 1000 * n as u64 + seed).unwrap());
        }
    }
    graphs
}

/// Exact expansion of three small graphs against enumeration, and the
/// relaxed degree-2 estimates against their analytic values.
fn criterion_1(gate: &mut Gate) {
    let t0 = Instant::now();
    let cases: [(&str, Graph, f64); 3] = [
        ("complete-4", k4(), 2.0 / 3.0),
        ("cycle-4", c4(), 0.5),
        ("two-triangles", two_triangles(), 0.0),
    ];
    let mut pass = true;
    let mut detail = String::new();
    for (name, g, want) in &cases {
        let (phi, _) = brute_force_phi(g, 16).unwrap();
        let est = sos2_estimate(g, Sos2Mode::Relaxed).unwrap().phi;
        let exact_ok = (phi - want).abs() < 1e-12;
        // two-triangles: the relaxation can only be pinned from above
        let relax_ok = if *want == 0.0 {
            est <= 1e-4 && est >= -1e-4
        } else {
            (est - want).abs() <= 1e-4
        };
        pass &= exact_ok && relax_ok;
        detail.push_str(&format!("{} phi={:.4} est={:.6}; ", name, phi, est));
    }
    gate.report(1, "small-graph expansion", pass, detail, t0);
}

/// Spectral sandwich lambda2/2 <= phi <= sqrt(2 lambda2) on random
/// 3-regular graphs.
fn criterion_2(gate: &mut Gate, graphs: &[Graph]) {
    let t0 = Instant::now();
    let mut pass = true;
    let mut worst = f64::INFINITY;
    for g in graphs {
        let (phi, _) = brute_force_phi(g, 16).unwrap();
        let (lo, hi) = spectral_bounds(g);
        let slack = (phi - lo).min(hi - phi);
        worst = worst.min(slack);
        pass &= lo <= phi + 1e-9 && phi <= hi + 1e-9;
    }
    gate.report(
        2,
        "spectral sandwich",
        pass,
        format!("{} graphs, worst slack {:.3e}", graphs.len(), worst),
        t0,
    );
}

/// Rounded sets from the degree-2 witness beat 4 sqrt(phi_2) + 0.1 on at
/// least 90% of the corpus.
fn criterion_3(gate: &mut Gate, graphs: &[Graph]) {
    let t0 = Instant::now();
    let mut good = 0usize;
    for (i, g) in graphs.iter().enumerate() {
        let est = sos2_estimate(g, Sos2Mode::Relaxed).unwrap();
        let (_, phi_rounded) = round_expansion(g, &est.witness, R_MAX, i as u64).unwrap();
        if phi_rounded <= 4.0 * est.phi.max(0.0).sqrt() + 0.1 {
            good += 1;
        }
    }
    let need = (graphs.len() * 9).div_ceil(10);
    gate.report(
        3,
        "rounding quality",
        good >= need,
        format!("{}/{} within bound (need {})", good, graphs.len(), need),
        t0,
    );
}

/// The degree-4 relaxation finds the global minimum 0 of a polynomial with
/// exponentially many spurious local minima.
fn criterion_4(gate: &mut Gate) {
    let t0 = Instant::now();
    let mut pass = true;
    let mut detail = String::new();
    for n in [2usize, 3] {
        let sys = PolynomialSystem::new(n, local_minima_example(n), vec![]).unwrap();
        let est = match sos_estimate(&sys, 4).unwrap() {
            EstimateOutcome::Estimate(r) => r.estimate,
            EstimateOutcome::Refutable(_) => f64::NAN,
        };
        pass &= est.abs() < 1e-3;
        detail.push_str(&format!("n={} est={:.2e}; ", n, est));
    }
    gate.report(4, "local-minima landscape", pass, detail, t0);
}

/// Constructive refutations over the hypercube: interpolated multilinear
/// polynomials with no root on the cube always yield a verified certificate.
fn criterion_5(gate: &mut Gate) {
    let t0 = Instant::now();
    let mut rng = seeded_rng(5);
    let mut pass = true;
    let mut worst_res = 0.0f64;
    let mut worst_eig = f64::INFINITY;
    for trial in 0..30usize {
        let n = 1 + trial % 3;
        // values bounded away from zero: the system {p0 = 0, x_i^2 = 1} is
        // unsatisfiable by construction
        let values: Vec<f64> = (0..1usize << n)
            .map(|_| {
                let mag = 0.3 + rand::Rng::gen::<f64>(&mut rng);
                if rand::Rng::gen::<bool>(&mut rng) {
                    mag
                } else {
                    -mag
                }
            })
            .collect();
        let p0 = interpolate_multilinear(n, &values).unwrap();
        match hypercube_refutation(&p0).unwrap() {
            HypercubeOutcome::Refuted(cert) => {
                let sys = hypercube_system(&p0).unwrap();
                let rep = verify_certificate(&sys, &cert).unwrap();
                worst_res = worst_res.max(rep.residual);
                worst_eig = worst_eig.min(rep.gram_lambda_min);
                pass &= rep.residual <= 1e-8 && rep.gram_lambda_min >= -1e-7;
            }
            HypercubeOutcome::Satisfiable(pt) => {
                pass = false;
                println!("  unexpected satisfying point {:?}", pt);
            }
        }
    }
    gate.report(
        5,
        "hypercube refutations",
        pass,
        format!("30 systems, worst residual {:.2e}, worst eig {:.2e}", worst_res, worst_eig),
        t0,
    );
}

/// Bounded sphere-plus-hyperplane systems at degree 2: feasible instances
/// produce a satisfying pseudoexpectation, infeasible ones a verified
/// certificate, and never both.
fn criterion_6(gate: &mut Gate) -> Vec<PseudoExpectation> {
    let t0 = Instant::now();
    let mut rng = seeded_rng(6);
    let mut pass = true;
    let mut pes = Vec::new();
    for trial in 0..20usize {
        let feasible = trial < 10;
        let theta = rand::Rng::gen::<f64>(&mut rng) * std::f64::consts::TAU;
        let a = [theta.cos(), theta.sin()];
        // |c| < 1 meets the unit sphere, |c| > 1 misses it
        let c = if feasible { 0.5 } else { 1.8 };
        let plane = Polynomial::linear_form(&a)
            .sub(&Polynomial::constant(2, c))
            .unwrap();
        let sys = PolynomialSystem::new(2, Polynomial::zero(2), vec![sphere(2), plane]).unwrap();
        match extract_certificate(&sys, 2).unwrap() {
            CertOutcome::Certificate(cert) => {
                let rep = verify_certificate(&sys, &cert).unwrap();
                if feasible || !rep.pass {
                    pass = false;
                    println!("  trial {}: unexpected certificate (pass={})", trial, rep.pass);
                }
            }
            CertOutcome::NotRefutable(pe) => {
                let rep = satisfies(&pe, &sys, 1e-4).unwrap();
                if !feasible || !rep.pass {
                    pass = false;
                    println!(
                        "  trial {}: unexpected pseudoexpectation (residual {:.2e})",
                        trial, rep.max_residual
                    );
                } else {
                    pes.push(pe);
                }
            }
        }
    }
    gate.report(
        6,
        "duality dichotomy",
        pass && pes.len() == 10,
        format!("10 certificates, {} satisfying pseudoexpectations", pes.len()),
        t0,
    );
    pes
}

/// Cauchy-Schwarz/Hoelder and the l4 triangle inequality on degree-4
/// operators produced by the solver on random quartic sphere problems.
fn criterion_7(gate: &mut Gate) {
    let t0 = Instant::now();
    let mut pass = true;
    let mut worst = f64::INFINITY;
    let monos = monomials_up_to(2, 4);
    for trial in 0..100u64 {
        let mut rng = stream_rng(7, trial);
        let obj = Polynomial::from_terms(
            2,
            monos.iter().map(|m| (m.clone(), standard_normal(&mut rng))),
        );
        let mut prog = MomentProgram::new(2, 4).unwrap();
        prog.constrain_satisfaction(&sphere(2)).unwrap();
        prog.set_objective(&obj, true).unwrap();
        // inequality slack at the 1e-6 scale needs a tighter solve than the
        // default tolerances give
        let tight = SdpOptions {
            eq_tol: 1e-9,
            psd_tol: 1e-10,
            max_iters: 200_000,
        };
        let pe = match prog.solve(&tight).unwrap() {
            MomentOutcome::Solved { pe, .. } => pe,
            MomentOutcome::Infeasible { .. } => {
                pass = false;
                continue;
            }
        };
        let u = Polynomial::linear_form(&[standard_normal(&mut rng), standard_normal(&mut rng)]);
        let v = Polynomial::linear_form(&[standard_normal(&mut rng), standard_normal(&mut rng)]);
        let e = |p: &Polynomial| pe.expect(p).unwrap();
        let u4 = e(&u.square().square()).max(0.0);
        let v4 = e(&v.square().square()).max(0.0);
        // Hoelder with exponents (2,2): L(u^2 v^2) <= sqrt(L u^4  L v^4)
        let hoelder = (u4 * v4).sqrt() - e(&u.square().mul(&v.square()).unwrap());
        // triangle inequality for the operator l4 norm
        let s = u.add(&v).unwrap();
        let triangle = u4.powf(0.25) + v4.powf(0.25) - e(&s.square().square()).max(0.0).powf(0.25);
        worst = worst.min(hoelder).min(triangle);
        pass &= hoelder >= -1e-6 && triangle >= -1e-6;
    }
    gate.report(
        7,
        "pseudo-norm inequalities",
        pass,
        format!("100 operators, worst slack {:.2e}", worst),
        t0,
    );
}

/// Gaussian samplers reproduce every degree-2 marginal: exactly in the
/// symbolic covariance, and within 3 standard errors empirically.
fn criterion_8(gate: &mut Gate, pes: &[PseudoExpectation]) {
    let t0 = Instant::now();
    let mut all: Vec<PseudoExpectation> = pes.to_vec();
    for (g, seed) in [(k4(), 80u64), (c4(), 81), (two_triangles(), 82)] {
        let _ = seed;
        all.push(sos2_estimate(&g, Sos2Mode::Relaxed).unwrap().witness);
    }
    let mut pass = true;
    let mut worst_sym = 0.0f64;
    for (k, pe) in all.iter().enumerate() {
        let sampler = match_two_moments(pe).unwrap();
        let n = pe.num_vars();
        let m2 = sampler.second_moments();
        let samples = sampler.sample(100_000, 800 + k as u64);
        let count = samples.len() as f64;
        for i in 0..n {
            for j in i..n {
                let target = pe
                    .moment(&Monomial::new(&[(i as u32, 1), (j as u32, 1)]))
                    .unwrap();
                worst_sym = worst_sym.max((m2[(i, j)] - target).abs());
                pass &= (m2[(i, j)] - target).abs() <= 1e-9;
                let mut sum = 0.0;
                let mut sum_sq = 0.0;
                for s in &samples {
                    let p = s[i] * s[j];
                    sum += p;
                    sum_sq += p * p;
                }
                let mean = sum / count;
                let var = (sum_sq / count - mean * mean).max(0.0);
                let se = (var / count).sqrt();
                if (mean - target).abs() > 3.0 * se.max(1e-12) {
                    pass = false;
                    println!(
                        "  pe {} moment ({},{}): empirical {:.5} vs {:.5} (se {:.1e})",
                        k, i, j, mean, target, se
                    );
                }
            }
        }
    }
    gate.report(
        8,
        "moment-matched sampling",
        pass,
        format!("{} operators, worst symbolic gap {:.2e}", all.len(), worst_sym),
        t0,
    );
}

/// Planted sparse vector recovery at n=20, d=2, support 2 succeeds with
/// squared correlation at least 0.8 on at least 8 of 10 fixed seeds.
fn criterion_9(gate: &mut Gate) {
    let t0 = Instant::now();
    let mut good = 0usize;
    for seed in 0..10u64 {
        let inst = generate_instance(20, 2, 2, seed).unwrap();
        match recover_with(&inst, seed, &SdpOptions::default()) {
            Ok(RecoveryOutcome::Recovered(r)) if r.correlation >= 0.8 => good += 1,
            Ok(RecoveryOutcome::Recovered(r)) => {
                println!("  seed {}: correlation {:.3}", seed, r.correlation)
            }
            Ok(RecoveryOutcome::NoSparseVector { optimum, threshold }) => {
                println!("  seed {}: value {:.3} below {:.3}", seed, optimum, threshold)
            }
            Err(e) => println!("  seed {}: {}", seed, e),
        }
    }
    gate.report(9, "sparse recovery", good >= 8, format!("{}/10 seeds recovered", good), t0);
}

/// Certified 4-norm bounds on random 3-dimensional subspaces of R^300, plus
/// the closed-form Gaussian quartic moment E <w,x>^4 = 3 ||x||^4.
fn criterion_10(gate: &mut Gate) {
    let t0 = Instant::now();
    let n = 300usize;
    let mut good = 0usize;
    for seed in 0..10u64 {
        let mut rng = seeded_rng(100 + seed);
        let sub = random_subspace(n, 3, &mut rng);
        if let CertifyOutcome::Certified(cert) = certify_subspace_4norm(&sub).unwrap() {
            let rep = verify_4norm_certificate(&sub, &cert).unwrap();
            if rep.pass && cert.mu_prime >= n as f64 / 10.0 {
                good += 1;
            } else {
                println!("  seed {}: mu' = {:.1}, verify pass = {}", seed, cert.mu_prime, rep.pass);
            }
        }
    }
    // closed-form check of the Gaussian quartic moment matrix
    let k = 3usize;
    let m = gaussian_fourth_moment_matrix(k);
    let mut rng = seeded_rng(1000);
    let mut analytic_ok = true;
    for _ in 0..20 {
        let x = DVector::from_fn(k, |_, _| standard_normal(&mut rng));
        let xx = DVector::from_fn(k * k, |idx, _| x[idx / k] * x[idx % k]);
        let form = (xx.transpose() * &m * &xx)[(0, 0)];
        let target = 3.0 * x.norm_squared().powi(2);
        analytic_ok &= (form - target).abs() <= 1e-9 * target.max(1.0);
    }
    gate.report(
        10,
        "subspace 4-norm certificates",
        good >= 8 && analytic_ok,
        format!("{}/10 seeds certified, analytic baseline ok = {}", good, analytic_ok),
        t0,
    );
}

/// Dictionary learning from fourth-moment statistics: random orthogonal
/// 8x8 dictionaries recovered to Hausdorff distance 0.25 on at least 7 of
/// 10 seeds.
fn criterion_11(gate: &mut Gate) {
    let t0 = Instant::now();
    let n = 8usize;
    let spec = NiceDistSpec::new(4, 0.2).unwrap();
    let opts = LearnOptions {
        tau: spec.tau,
        sdp: SdpOptions {
            eq_tol: 1e-4,
            psd_tol: 1e-4,
            max_iters: 600,
        },
        ..LearnOptions::default()
    };
    let mut good = 0usize;
    for seed in 0..10u64 {
        let dict = Dictionary::random_orthogonal(n, seed);
        let ys = dictionary_samples(&dict, &spec, 10_000, 7000 + seed);
        match learn_dictionary(&ys, &spec, 1.0, seed, &opts) {
            Ok(rep) => {
                let h = hausdorff_symmetrized(&rep.column_vectors(), &dict.columns());
                if h <= 0.25 {
                    good += 1;
                } else {
                    println!(
                        "  seed {}: hausdorff {:.3} ({} columns, complete = {})",
                        seed,
                        h,
                        rep.columns.len(),
                        rep.complete
                    );
                }
            }
            Err(e) => println!("  seed {}: {}", seed, e),
        }
    }
    gate.report(11, "dictionary learning", good >= 7, format!("{}/10 seeds recovered", good), t0);
}

/// The projected-basis witness always exhibits E x^{2p} >= (d^p/n) (E x^2)^p.
fn criterion_12(gate: &mut Gate) {
    let t0 = Instant::now();
    let mut rng = seeded_rng(12);
    let mut pass = true;
    let mut worst = f64::INFINITY;
    for trial in 0..50usize {
        let d = 1 + rand::Rng::gen_range(&mut rng, 0..10usize);
        let n = d + rand::Rng::gen_range(&mut rng, 0..=(100 - d));
        let p = 2 + (trial % 2) as u32;
        let sub = random_subspace(n, d, &mut rng);
        let w = dim_bound_witness(&sub, p).unwrap();
        let slack = w.ratio - w.bound;
        worst = worst.min(slack);
        pass &= slack >= -1e-9;
    }
    gate.report(
        12,
        "dimension-bound witnesses",
        pass,
        format!("50 subspaces, worst slack {:.2e}", worst),
        t0,
    );
}

/// Certified (2,4) hypercontractivity of low-degree polynomials on the
/// cube: the bound dominates a large empirical sample yet stays below the
/// analytic ceiling 9^k.
fn criterion_13(gate: &mut Gate) {
    let t0 = Instant::now();
    let mut pass = true;
    let mut detail = String::new();
    for (t, k) in [(2usize, 1usize), (3, 1)] {
        let wk = build_wk(t, k).unwrap();
        let hc = certify_hypercontractivity(&wk.sub).unwrap();
        let basis = &wk.sub.basis;
        let n = basis.nrows() as f64;
        let mut rng = seeded_rng(130 + t as u64);
        let mut emp = 0.0f64;
        for _ in 0..100_000 {
            let c = DVector::from_fn(basis.ncols(), |_, _| standard_normal(&mut rng));
            let x = basis * c;
            let e2 = x.norm_squared() / n;
            let e4 = x.iter().map(|v| v.powi(4)).sum::<f64>() / n;
            emp = emp.max(e4 / (e2 * e2));
        }
        pass &= emp <= hc.b + 1e-9 && hc.b <= 9.0 + 1e-3;
        detail.push_str(&format!("(t={},k={}) empirical {:.3} <= B {:.3}; ", t, k, emp, hc.b));
    }
    gate.report(13, "hypercontractivity bounds", pass, detail, t0);
}

#[test]
fn acceptance() {
    // ACCEPTANCE_ONLY="5,7" runs a subset while debugging
    let only: Vec<usize> = std::env::var("ACCEPTANCE_ONLY")
        .map(|s| s.split(',').filter_map(|t| t.trim().parse().ok()).collect())
        .unwrap_or_default();
    let want = |i: usize| only.is_empty() || only.contains(&i);
    let mut gate = Gate { failures: Vec::new() };
    if want(1) {
        criterion_1(&mut gate);
    }
    if want(2) || want(3) {
        let graphs = regular_corpus();
        if want(2) {
            criterion_2(&mut gate, &graphs);
        }
        if want(3) {
            criterion_3(&mut gate, &graphs);
        }
    }
    if want(4) {
        criterion_4(&mut gate);
    }
    if want(5) {
        criterion_5(&mut gate);
    }
    let pes = if want(6) || want(8) {
        criterion_6(&mut gate)
    } else {
        Vec::new()
    };
    if want(7) {
        criterion_7(&mut gate);
    }
    if want(8) {
        criterion_8(&mut gate, &pes);
    }
    if want(9) {
        criterion_9(&mut gate);
    }
    if want(10) {
        criterion_10(&mut gate);
    }
    if want(11) {
        criterion_11(&mut gate);
    }
    if want(12) {
        criterion_12(&mut gate);
    }
    if want(13) {
        criterion_13(&mut gate);
    }
    assert!(gate.failures.is_empty(), "failed: {:?}", gate.failures);
}
