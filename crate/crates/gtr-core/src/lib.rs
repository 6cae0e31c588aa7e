//! Core primitives of the generation-then-retrieval pipeline for text-based
//! person search without parallel image-text data.
//!
//! The generation side turns a person image into a confidence-tagged pseudo
//! caption: 14 instruction prompts extract attributes through a pluggable VQA
//! backend ([`i2a`]), a hand-crafted template or a language-model backend
//! converts them to text ([`a2t`]), and the per-attribute confidences fold
//! into one caption confidence ([`confidence`]). The retrieval side provides
//! the confidence-weighted training losses with analytic gradients
//! ([`losses`]) and the ranking metrics ([`eval`]).

pub mod a2t;
pub mod confidence;
pub mod eval;
pub mod i2a;
pub mod losses;
pub mod seed;
pub mod types;
