//! Core numerics and data handling for measuring nationality bias in
//! generated text.
//!
//! The crate is organised by pipeline stage:
//!
//! * [`corpus`] – country registry, discourse records, round/alias merging
//!   and `[MASK]` anonymization.
//! * [`lexmetrics`] – tokenization and moving-average type-token ratio.
//! * [`scoring`] – metric/language compatibility and response validation
//!   for external model-based scorers.
//! * [`bws`] – best-worst scaling schedules, judgment expansion, majority
//!   votes and Cohen's kappa.
//! * [`ranking`] – iterative Luce spectral ranking plus a brute-force
//!   Bradley–Terry maximum-likelihood oracle.
//! * [`analysis`] – rank correlation, group comparison, grouped reports and
//!   choropleth export.
//!
//! Data-parallel loops go through [`exec::Execution`]; with the default
//! `parallel` feature they run on rayon, otherwise sequentially.

pub mod analysis;
pub mod bws;
pub mod corpus;
pub mod exec;
pub mod lexmetrics;
pub mod prompts;
pub mod ranking;
pub mod scoring;
mod types;

pub use exec::Execution;
pub use types::{DiscourseKey, KeyError, Language, PromptId};
