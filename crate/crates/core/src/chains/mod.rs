//! Concrete chains with certification: exact finite-state chains, the
//! constant-stepsize SGD recursion and the finite-dimensional pCN sampler.

mod finite;
pub mod pcn;
pub mod sgd;

pub use finite::{
    certify, certify_coupling, certify_drift, certify_small_set, finite_stationary,
    CertifyOptions, CouplingWitness, DriftWitness, FiniteChain, SmallSetWitness,
};
