//! Bayesian meta-analysis of differential expression across studies.
//!
//! The pipeline takes one-sided p-values (or Z-statistics) for G genes in
//! S studies, fits a latent hierarchical mixture whose alternative
//! components are per-study Dirichlet-process mixtures, and turns the
//! posterior sign indicators into local-FDR decisions in three decision
//! spaces, confidence scores, and meta-pattern biomarker modules via
//! tight clustering. Classical p-value combiners (Fisher, Stouffer,
//! maxP, rOP, adaptively weighted Fisher) and a seeded synthetic-data
//! generator with an evaluation harness round out the toolkit; the
//! `metapat` binary exposes everything as subcommands.

pub mod baselines;
pub mod bench;
pub mod dp;
pub mod error;
pub mod inference;
pub mod io;
pub mod mcmc;
pub mod metapattern;
pub mod metrics;
pub mod reports;
pub mod rng;
pub mod simgen;
pub mod stats;
pub mod testsupport;

pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
