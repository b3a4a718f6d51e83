//! Core library for building and scoring natural-language-to-SPARQL datasets
//! over lexicographic knowledge graphs.
//!
//! Everything in this crate is pure computation over in-memory data: loading
//! and validating the template catalog and property registry, rendering
//! utterances and queries, splitting and exporting datasets, tokenizing and
//! structurally checking SPARQL text, executing queries against an in-memory
//! triple snapshot, and computing the evaluation metrics (pass@k, granularity
//! ratio, corpus BLEU).
//!
//! The crate is `no_std` + `alloc`; all IO, HTTP and CLI concerns live in the
//! companion `lexsparql` crate.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

#[cfg(any(test, feature = "oracle"))]
extern crate std;

pub mod check;
pub mod dataset;
pub mod exec;
pub mod generalize;
pub mod hash;
pub mod metrics;
pub mod population;
pub mod rdf;
pub mod registry;
pub mod template;

pub use check::{run_checks, tokenize, CheckId, CheckOutcome, CheckProfile, CheckReport};
pub use dataset::{split, DatasetRecord, SplitConfig, SplitResult};
pub use exec::{contains_expected, execute_local, ExecError, QueryExecutor};
pub use metrics::{aggregate, bleu_corpus, evaluate_record, pass_at_k, AggregateReport};
pub use rdf::{RdfTerm, ResultSet, Snapshot};
pub use registry::Registry;
pub use template::{Catalog, TemplateSpec};
