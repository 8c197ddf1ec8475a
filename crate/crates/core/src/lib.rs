//! Revenue-optimal mechanisms for a single additive buyer with two
//! independently distributed items, built on an optimal-transport
//! duality between the buyer's utility function and a mass-transport
//! problem. The crate synthesizes closed-form mechanisms (grand
//! bundling, two exponential items, general canonical partitions),
//! certifies them with stochastic-dominance checks, and cross-checks
//! everything against exact grid-scale linear-programming oracles.

pub mod bundling;
pub mod canonical;
pub mod distributions;
pub mod dominance;
pub mod exponential;
pub mod measures;
pub mod oracle;
pub mod mechanism;
pub mod numerics;
