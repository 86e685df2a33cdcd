//! Post-editing translation memory core: records with token-level error
//! markings, corpus filtering, example retrieval, prompt construction,
//! output clean-up, MT metrics and annotator agreement.
//!
//! Everything here is allocation-only and free of IO; the `petm` crate adds
//! files, HTTP and the command line.
#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod agreement;
pub mod filter;
pub mod llm;
pub mod metrics;
pub mod prompt;
pub mod record;
pub mod retrieval;

pub use record::{Mark, MarkingVector, SkipReason, Split, TripleRecord};
