//! Sum-of-squares polynomial optimization toolkit.
//!
//! Builds degree-`l` moment relaxations of polynomial equation systems,
//! solves them with a built-in ADMM semidefinite-programming backend,
//! extracts and verifies SOS refutation certificates and pseudoexpectations,
//! and applies the machinery to graph expansion, planted sparse-vector
//! recovery, dictionary learning, and hypercontractivity certification.

pub mod cert;
pub mod dict_learn;
pub mod error;
pub mod expansion;
pub mod hyper;
pub mod poly;
pub mod pseudo;
pub mod relax;
pub mod rng;
pub mod rounding;
pub mod sdp;
pub mod sparse_vec;

pub use error::{Error, Result};
pub use poly::{Monomial, Polynomial};
pub use pseudo::PseudoExpectation;
pub use relax::{PolynomialSystem, EstimateOutcome, EstimateReport};
pub use sdp::{SdpOptions, SdpProblem, SdpSolution, SdpStatus};
