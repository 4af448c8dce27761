//! Bayesian network structure learning with nonparametric block-structured
//! graph priors.
//!
//! Nodes are grouped into latent classes by a Chinese restaurant process;
//! the probability of an edge depends only on the classes of its endpoints.
//! The ordered variant additionally ranks the classes and only allows edges
//! from earlier to later classes. Graph structure, classes and orderings are
//! inferred jointly by collapsed MCMC, and posterior summaries are formed by
//! averaging over the best states found.

pub mod error;
pub mod evaluate;
pub mod experiment;
pub mod generate;
pub mod graph;
pub mod io;
pub mod likelihood;
pub mod math;
pub mod mcmc;
pub mod priors;
pub mod seeds;

pub use error::{Error, Result};
pub use graph::{BayesNet, Dag, Dataset, Hyperparams};
pub use likelihood::{
    family_counts, family_log_marginal, graph_log_marginal, joint_log_score, FamilyCache,
    FamilyCounts,
};
pub use mcmc::{run_chain, run_search, Anneal, Chain, ChainConfig, ModelPool, SamplerState};
pub use priors::{
    block_counts, collapsed_graph_log_score, crp_log_prob, crp_seat_log_probs, ordering_log_prob,
    uniform_graph_log_score, BlockCounts, ClassOrdering, Partition, PriorKind,
};
