//! A desk-scale factorized neural transducer (FNT) lab.
//!
//! The crate trains three transducer variants on a synthetic two-domain
//! speech task, adapts the vocabulary predictor with text only, and fuses
//! a back-off n-gram model into decoding:
//!
//! - [`nncore`]: parameter storage, a small reverse-mode tape, Adam, and a
//!   finite-difference gradient checker.
//! - [`losses`]: transducer, CTC, cross-entropy and KL losses with exact
//!   gradients.
//! - [`model`]: baseline transducer, standard FNT and improved FNT (shared
//!   CTC head plus a trainable LM weight).
//! - [`training`] / [`adaptation`]: the combined training objective,
//!   external LM pretraining and seeding, and KL-regularized text-only
//!   fine-tuning.
//! - [`ngram`] / [`decoding`]: absolute-discount back-off LM and greedy or
//!   beam search with probability-domain interpolation.
//! - [`synthdata`] / [`tokenizer`] / [`eval`] / [`cli`]: the synthetic task,
//!   unit inventories, WER scoring and the command-line pipeline.
//!
//! Every major capability has a runnable example under `examples/`.

pub mod adaptation;
pub mod cli;
pub mod decoding;
pub mod error;
pub mod eval;
pub mod losses;
pub mod model;
pub mod ngram;
pub mod nncore;
pub mod synthdata;
pub mod tokenizer;
pub mod training;

pub use error::{Error, Result};
