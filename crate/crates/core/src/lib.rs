//! Active-learning-assisted exact community detection in the two-community
//! symmetric stochastic block model.
//!
//! The pipeline is: generate a graph ([`sbm::generate_sbm`]), compute a
//! weakly consistent initial labeling ([`init::initial_labeling`]), rank
//! nodes by differential degree under it and query the lowest-ranked ones
//! ([`sampler::run_algorithm1`]). [`theory`] holds the closed-form budgets
//! and [`experiments`] the Monte-Carlo harness.

pub mod error;
pub mod experiments;
pub mod init;
pub mod rng;
pub mod sampler;
pub mod sbm;
pub mod spectral;
pub mod theory;

pub use error::{Error, Result};
pub use init::{initial_labeling, majority_refine, ClusterFile, InitConfig, InitReport};
pub use sampler::{auto_budget, rank_by_differential_degree, run_algorithm1, Oracle, SampleReport};
pub use sbm::{
    differential_degree, error_rate, generate_sbm, minority_count, Graph, GraphFile, Labeling,
    SbmParams,
};
pub use theory::{Budget, ThresholdReport};
