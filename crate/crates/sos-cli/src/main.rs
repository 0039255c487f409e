//! Command-line front end for the SOS toolkit: JSON in, JSON out, fully
//! deterministic given a seed. Exit codes: 0 success, 2 domain error
//! (malformed input, invalid parameters), 1 internal failure.

use std::fs;
use std::io::Write as _;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::{DMatrix, DVector};
use serde_json::{json, Value};

use sos::cert::{extract_certificate_with, verify_certificate, CertOutcome};
use sos::dict_learn::{
    dictionary_samples, hausdorff_symmetrized, learn_dictionary, Dictionary, LearnOptions,
    NiceDistSpec,
};
use sos::expansion::{expansion_report, Graph, Sos2Mode};
use sos::hyper::{build_wk, certify_hypercontractivity, dim_bound_witness, verify_hypercontractivity};
use sos::relax::{sos_estimate_with, EstimateOutcome, PolynomialSystem};
use sos::sdp::SdpOptions;
use sos::sparse_vec::{generate_instance, recover_with, RecoveryOutcome, Subspace};

#[derive(Parser)]
#[command(name = "sos", version, about = "Sum-of-squares polynomial optimization toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Write the JSON report here instead of standard output.
    #[arg(long, global = true)]
    output: Option<String>,
}

#[derive(Args, Clone)]
struct SolverArgs {
    /// RNG seed for all randomized steps.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Equality-residual tolerance of the SDP solver.
    #[arg(long)]
    tol: Option<f64>,
    /// Iteration cap of the SDP solver.
    #[arg(long)]
    max_iter: Option<usize>,
}

impl SolverArgs {
    fn sdp(&self) -> SdpOptions {
        let mut opts = SdpOptions::default();
        if let Some(t) = self.tol {
            opts.eq_tol = t;
        }
        if let Some(m) = self.max_iter {
            opts.max_iters = m;
        }
        opts
    }
}

#[derive(ValueEnum, Clone, Copy)]
enum ExpansionMode {
    Exact,
    Relaxed,
}

#[derive(Subcommand)]
enum Command {
    /// Degree-l SOS lower bound on the objective of a polynomial system.
    Estimate {
        /// Path to a system JSON file.
        #[arg(long)]
        system: String,
        #[arg(long)]
        degree: usize,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Search for a degree-l refutation certificate of a polynomial system.
    Refute {
        #[arg(long)]
        system: String,
        #[arg(long)]
        degree: usize,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Expansion estimates and rounding for a regular graph.
    Expansion {
        /// Path to a graph file ("n d" header, one "u v" edge per line).
        #[arg(long)]
        graph: String,
        #[arg(long, value_enum, default_value_t = ExpansionMode::Relaxed)]
        mode: ExpansionMode,
        /// Cut size for exact mode (defaults to n/2).
        #[arg(long)]
        k: Option<usize>,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Planted sparse vector recovery on a synthetic random subspace.
    SparseRecover {
        #[arg(long)]
        n: usize,
        /// Dimension of the random complement inside the subspace.
        #[arg(long)]
        d: usize,
        /// Support size of the planted vector.
        #[arg(long)]
        support: usize,
        /// Number of independent trials (seed, seed+1, ...).
        #[arg(long, default_value_t = 1)]
        trials: usize,
        /// Worker threads for independent trials.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Dictionary learning from samples y = A x with nice coefficients.
    DictLearn {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        m: usize,
        /// Support probability of the coefficient sampler (tau = rho).
        #[arg(long)]
        rho: f64,
        /// Number of samples to draw (synthetic mode).
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
        /// Read samples from a CSV of row vectors instead of synthesizing.
        #[arg(long)]
        input: Option<String>,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Certified (2,4) hypercontractivity bound for W_k over the cube.
    HyperCertify {
        #[arg(long)]
        t: usize,
        #[arg(long)]
        k: usize,
    },
    /// Dimension-bound witness for a subspace given by CSV basis rows.
    DimWitness {
        #[arg(long)]
        basis: String,
        #[arg(long)]
        p: u32,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli.command) {
        Ok(report) => {
            let text = serde_json::to_string_pretty(&report).expect("serializable report");
            match &cli.output {
                Some(path) => {
                    if let Err(e) = fs::write(path, text + "\n") {
                        eprintln!("cannot write {}: {}", path, e);
                        return ExitCode::from(1);
                    }
                }
                None => {
                    let mut out = std::io::stdout();
                    let _ = writeln!(out, "{}", text);
                }
            }
            ExitCode::SUCCESS
        }
        Err(CliError::Domain(obj)) => {
            let text = serde_json::to_string_pretty(&obj).expect("serializable error");
            println!("{}", text);
            ExitCode::from(2)
        }
        Err(CliError::Internal(msg)) => {
            eprintln!("internal error: {}", msg);
            ExitCode::from(1)
        }
    }
}

enum CliError {
    /// Bad input or parameters; carries a machine-readable error object.
    Domain(Value),
    Internal(String),
}

fn domain(kind: &str, message: impl ToString) -> CliError {
    CliError::Domain(json!({
        "error": { "kind": kind, "message": message.to_string() }
    }))
}

impl From<sos::Error> for CliError {
    fn from(e: sos::Error) -> Self {
        match e {
            // Numerical failures of the solve, not problems with the input.
            sos::Error::Solver(_)
            | sos::Error::InvalidPseudoExpectation(_)
            | sos::Error::RoundingFailure(_) => CliError::Internal(e.to_string()),
            other => domain("invalid_input", other),
        }
    }
}

fn read_file(path: &str) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| domain("io", format!("{}: {}", path, e)))
}

fn read_system(path: &str) -> Result<PolynomialSystem, CliError> {
    let text = read_file(path)?;
    serde_json::from_str(&text)
        .map_err(|e| domain("parse", format!("{} line {} column {}: {}", path, e.line(), e.column(), e)))
}

fn report(command: &str, inputs: Value, results: Value) -> Value {
    json!({
        "command": command,
        "inputs": inputs,
        "version": env!("CARGO_PKG_VERSION"),
        "timestamp": std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
        "results": results,
    })
}

fn run(cmd: &Command) -> Result<Value, CliError> {
    match cmd {
        Command::Estimate { system, degree, solver } => {
            let sys = read_system(system)?;
            let outcome = sos_estimate_with(&sys, *degree, &solver.sdp())?;
            let results = match outcome {
                EstimateOutcome::Estimate(r) => json!({
                    "outcome": "estimate",
                    "estimate": r.estimate,
                    "iterations": r.iterations,
                    "converged": r.converged,
                    "witness": r.witness,
                }),
                EstimateOutcome::Refutable(info) => json!({
                    "outcome": "refutable",
                    "degree": info.degree,
                    "farkas": info.farkas.as_slice(),
                }),
            };
            Ok(report(
                "estimate",
                json!({ "system": system, "degree": degree, "seed": solver.seed }),
                results,
            ))
        }
        Command::Refute { system, degree, solver } => {
            let sys = read_system(system)?;
            let outcome = extract_certificate_with(&sys, *degree, &solver.sdp())?;
            let results = match outcome {
                CertOutcome::Certificate(cert) => {
                    let check = verify_certificate(&sys, &cert)?;
                    json!({
                        "outcome": "certificate",
                        "certificate": cert,
                        "verification": {
                            "residual": check.residual,
                            "gram_lambda_min": check.gram_lambda_min,
                            "pass": check.pass,
                        },
                    })
                }
                CertOutcome::NotRefutable(pe) => json!({
                    "outcome": "not_refutable",
                    "pseudoexpectation": pe,
                }),
            };
            Ok(report(
                "refute",
                json!({ "system": system, "degree": degree, "seed": solver.seed }),
                results,
            ))
        }
        Command::Expansion { graph, mode, k, solver } => {
            let g = Graph::parse(&read_file(graph)?)?;
            let mode_val = match mode {
                ExpansionMode::Exact => Sos2Mode::Exact { k: k.unwrap_or(g.n / 2) },
                ExpansionMode::Relaxed => Sos2Mode::Relaxed,
            };
            let r = expansion_report(&g, mode_val, solver.seed)?;
            Ok(report(
                "expansion",
                json!({ "graph": graph, "mode": match mode { ExpansionMode::Exact => "exact", ExpansionMode::Relaxed => "relaxed" }, "seed": solver.seed }),
                json!({
                    "n": r.n,
                    "d": r.d,
                    "phi_true": r.phi_true,
                    "phi_spectral_lower": r.phi_spectral_lower,
                    "phi_spectral_upper": r.phi_spectral_upper,
                    "estimate": r.phi_sos2,
                    "rounded_set": r.rounded_set,
                    "phi_of_rounded": r.phi_of_rounded,
                }),
            ))
        }
        Command::SparseRecover { n, d, support, trials, jobs, solver } => {
            if *trials == 0 {
                return Err(domain("invalid_input", "trials must be >= 1"));
            }
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads((*jobs).max(1))
                .build()
                .map_err(|e| CliError::Internal(e.to_string()))?;
            let opts = solver.sdp();
            let runs: Vec<Result<Value, sos::Error>> = pool.install(|| {
                use rayon::prelude::*;
                (0..*trials as u64)
                    .into_par_iter()
                    .map(|t| {
                        let seed = solver.seed + t;
                        let inst = generate_instance(*n, *d, *support, seed)?;
                        let out = recover_with(&inst, seed, &opts)?;
                        Ok(match out {
                            RecoveryOutcome::Recovered(r) => json!({
                                "seed": seed,
                                "outcome": "recovered",
                                "correlation": r.correlation,
                                "optimum": r.optimum,
                                "alpha0_sq": r.alpha0_sq,
                                "x_star": r.x_star,
                            }),
                            RecoveryOutcome::NoSparseVector { optimum, threshold } => json!({
                                "seed": seed,
                                "outcome": "no_sparse_vector",
                                "optimum": optimum,
                                "threshold": threshold,
                            }),
                        })
                    })
                    .collect()
            });
            let mut results = Vec::with_capacity(runs.len());
            for r in runs {
                results.push(r?);
            }
            Ok(report(
                "sparse-recover",
                json!({ "n": n, "d": d, "support": support, "trials": trials, "seed": solver.seed }),
                json!({ "trials": results }),
            ))
        }
        Command::DictLearn { n, m, rho, samples, input, solver } => {
            let spec = NiceDistSpec::new(4, *rho)?;
            let opts = LearnOptions {
                tau: spec.tau,
                sdp: solver.sdp(),
                ..LearnOptions::default()
            };
            let (ys, truth) = match input {
                Some(path) => (parse_csv_rows(&read_file(path)?)?, None),
                None => {
                    if m > n {
                        return Err(domain(
                            "invalid_input",
                            "synthetic mode draws orthogonal dictionaries and needs m <= n",
                        ));
                    }
                    let full = Dictionary::random_orthogonal(*n, solver.seed);
                    let cols = full.matrix().columns(0, *m).into_owned();
                    let dict = Dictionary::new(cols)?;
                    (
                        dictionary_samples(&dict, &spec, *samples, solver.seed + 1),
                        Some(dict),
                    )
                }
            };
            let kappa = *m as f64 / ys[0].len() as f64;
            let r = learn_dictionary(&ys, &spec, kappa, solver.seed, &opts)?;
            let hausdorff = truth
                .as_ref()
                .map(|d| hausdorff_symmetrized(&r.column_vectors(), &d.columns()));
            Ok(report(
                "dict-learn",
                json!({ "n": n, "m": m, "rho": rho, "samples": samples, "seed": solver.seed }),
                json!({
                    "columns": r.columns,
                    "complete": r.complete,
                    "attempts": r.attempts,
                    "relaxation_value": r.value,
                    "hausdorff": hausdorff,
                }),
            ))
        }
        Command::HyperCertify { t, k } => {
            let wk = build_wk(*t, *k)?;
            let hc = certify_hypercontractivity(&wk.sub)?;
            let check = verify_hypercontractivity(&wk.sub, &hc)?;
            Ok(report(
                "hyper-certify",
                json!({ "t": t, "k": k }),
                json!({
                    "dimension": wk.sub.dim(),
                    "bound": hc.b,
                    "rho": hc.cert.rho,
                    "verification": {
                        "identity_residual": check.identity_residual,
                        "gram_lambda_min": check.gram_lambda_min,
                        "pass": check.pass,
                    },
                }),
            ))
        }
        Command::DimWitness { basis, p } => {
            let rows = parse_csv_rows(&read_file(basis)?)?;
            let sub = orthonormalize(&rows)?;
            let w = dim_bound_witness(&sub, *p)?;
            Ok(report(
                "dim-witness",
                json!({ "basis": basis, "p": p }),
                json!({
                    "dim": sub.dim(),
                    "witness": w.x.as_slice(),
                    "ratio": w.ratio,
                    "bound": w.bound,
                    "satisfied": w.ratio >= w.bound - 1e-9,
                }),
            ))
        }
    }
}

fn parse_csv_rows(text: &str) -> Result<Vec<DVector<f64>>, CliError> {
    let mut rows: Vec<DVector<f64>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let vals: Result<Vec<f64>, _> = line.split(',').map(|v| v.trim().parse::<f64>()).collect();
        let vals = vals.map_err(|e| domain("parse", format!("line {}: {}", lineno + 1, e)))?;
        if let Some(prev) = rows.first() {
            if prev.len() != vals.len() {
                return Err(domain(
                    "parse",
                    format!("line {}: expected {} values, got {}", lineno + 1, prev.len(), vals.len()),
                ));
            }
        }
        rows.push(DVector::from_vec(vals));
    }
    if rows.is_empty() {
        return Err(domain("parse", "no rows in CSV input"));
    }
    Ok(rows)
}

/// Gram-Schmidt over the CSV rows (spanning vectors, not necessarily
/// orthonormal) into a [`Subspace`].
fn orthonormalize(rows: &[DVector<f64>]) -> Result<Subspace, CliError> {
    let n = rows[0].len();
    let mut basis: Vec<DVector<f64>> = Vec::new();
    for r in rows {
        let mut v = r.clone();
        for b in &basis {
            let c = b.dot(&v);
            v -= b * c;
        }
        let norm = v.norm();
        if norm > 1e-10 {
            basis.push(v / norm);
        }
    }
    if basis.is_empty() {
        return Err(domain("invalid_input", "basis rows span the zero space"));
    }
    let mut m = DMatrix::zeros(n, basis.len());
    for (j, b) in basis.into_iter().enumerate() {
        m.set_column(j, &b);
    }
    Subspace::new(m).map_err(CliError::from)
}
