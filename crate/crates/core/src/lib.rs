//! Explicit, non-asymptotic moment and tail inequalities for additive
//! functionals `S_n = Σ {g(X_ℓ) − π(g)}` of geometrically ergodic Markov
//! chains, together with the machinery needed to check them:
//!
//! * drift/minorization certificates and the mixing rate `(ρ, c)` they imply,
//! * Wasserstein coupling certificates and the contraction rate `(δ*, ϱ, c_K)`,
//! * log-space evaluators for the Rosenthal- and Bernstein-type bounds,
//! * exact dynamic-programming oracles (moments, cumulants, spectral density)
//!   on finite state spaces,
//! * concrete certified chains (finite chains, constant-stepsize SGD,
//!   finite-dimensional pCN),
//! * a seeded Monte Carlo harness with exact binomial confidence intervals.
//!
//! Everything is plain-float deterministic: the same seed and configuration
//! produce bit-identical results at any worker count.

pub mod acceptance;
pub mod bounds;
pub mod chains;
pub mod combinatorics;
pub mod cumulants;
pub mod harness;
pub mod logspace;
pub mod vgeom;
pub mod wasserstein;

mod error;

pub use error::{Error, Result};
pub use logspace::LogValue;
