//! Curricular transfer learning for dialog grammar acquisition.
//!
//! The crate fabricates pseudo-supervised dialog corpora from forum threads,
//! encodes dialog sessions as delimited token sequences, trains a small
//! decoder-only language model through an ordered curriculum of grammars,
//! and scores generated responses with BLEU / INFORM / SUCCESS.

pub mod codec;
pub mod curriculum;
pub mod dialog;
pub mod error;
pub mod eval;
pub mod grammar;
pub mod hacking;
pub mod ingest;
pub mod io;
pub mod lm;
pub mod par;
pub mod report;
pub mod synth;

pub use error::{Error, Result};
