//! Retrieval-salient span mining over unlabeled document collections.
//!
//! The crate is organised as a pipeline:
//!
//! * [`corpus`] loads JSONL documents, normalises and tokenises them.
//! * [`bm25`] builds an Okapi BM25 inverted index and computes retrieval ranks.
//! * [`miner`] extracts stop-word-free n-grams and keeps those whose rank for
//!   retrieving their own document passes a length-dependent threshold.
//! * [`corruption`] turns documents plus mined spans into denoising
//!   (source, target) pairs.
//! * [`eval`] scores generated keyphrases (present/absent, F1@5, F1@M).
//! * [`analysis`] computes retrieval-success and span/keyphrase overlap reports.
//! * [`synth`] and [`pipeline`] provide the deterministic demo corpus and an
//!   end-to-end driver.

pub mod analysis;
pub mod bm25;
pub mod corpus;
pub mod corruption;
mod error;
pub mod eval;
pub mod miner;
pub mod pipeline;
pub mod synth;

pub use error::{Error, ErrorCategory, Result};

/// Version tag embedded in every JSON summary and report.
pub const SCHEMA_VERSION: u32 = 1;

/// Token placed between title and body.
pub const DEFAULT_SEP_TOKEN: &str = "<sep>";

/// Replacement token for maximal runs of ASCII digits.
pub const DIGIT_TOKEN: &str = "<digit>";

/// Default truncation length for model inputs.
pub const DEFAULT_MAX_TOKENS: usize = 512;
