//! Gradus: graded code-search supervision from repositories.
//!
//! The crate synthesizes (docstring, function, similarity) triplets from
//! source trees, refines the noisy similarity labels with a mixture-model
//! threshold plus tree-edit-distance screening and binary adjudication,
//! trains a hashed bag-of-tokens encoder under a hybrid contrastive and
//! pairwise-ranking objective, and evaluates retrieval quality (MRR, MAP,
//! nDCG) with a 2-D MDS projection of the embedding space.
//!
//! [`pipeline`] ties the pieces into nine resumable stages behind the
//! `gradus` binary; the library modules are usable on their own.

pub mod ast;
pub mod clients;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod pipeline;
pub mod refine;
pub mod synth;
pub mod text;
pub mod train;
pub mod vecmath;

pub use error::{Error, Result};
