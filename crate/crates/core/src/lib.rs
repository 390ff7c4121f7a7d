//! Exact Bayesian probabilities for two-round elections.
//!
//! Poll counts update a Dirichlet posterior over candidate vote shares. Rank
//! events on that posterior (an outright majority, a pair finishing in the
//! top two, one candidate beating another head to head) are rewritten through
//! independent Gamma variables and evaluated as one-dimensional integrals by
//! adaptive quadrature. A Monte Carlo oracle reproduces every kernel by
//! simulation for verification.

pub mod election;
pub mod ingestion;
pub mod model;
pub mod numerics;
pub mod oracle;
pub mod rank_prob;
