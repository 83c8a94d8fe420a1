//! Knowledge-augmented frame semantic parsing.
//!
//! The crate selects frame and role definitions with a trainable memory
//! attention module, turns the selection into a continuous prompt, pairs it
//! with a task-specific discrete prompt, and hands both to a pluggable
//! generator backend. Evaluation follows the usual frame-identification
//! accuracy (all and ambiguous targets) and exact-match argument P/R/F1.
//!
//! ## Modules
//!
//! - [`ontology`]: frames, roles and lexical units, loaded from JSON.
//! - [`embedding`]: static embeddings, sentence means, cosine.
//! - [`retrieval`]: per-instance candidate knowledge, with a cosine fallback
//!   for lemmas outside the ontology.
//! - [`mkem`]: attention over candidate definitions, its loss and gradient.
//! - [`prompting`]: prompt heads, target marking, the `span = Role | ...`
//!   grammar.
//! - [`pipeline`]: datasets, backends (builtin, oracle, child-process
//!   bridge), two-phase training, prediction.
//! - [`evaluation`]: frame accuracy and argument P/R/F1.
//! - [`cli`]: the `framespa` command.
//!
//! ## Examples
//!
//! Each capability has a runnable example under `examples/`:
//!
//! ```bash
//! cargo run -p framespa --example ontology_lookup
//! cargo run -p framespa --example retrieval_fallback
//! cargo run -p framespa --example memory_attention
//! cargo run -p framespa --example gradient_check
//! cargo run -p framespa --example prompt_grammar
//! cargo run -p framespa --example train_and_predict
//! cargo run -p framespa --example bridge_backend
//! cargo run -p framespa --example evaluate_fixture
//! ```

pub mod cli;
pub mod embedding;
pub mod error;
pub mod evaluation;
pub mod mkem;
pub mod ontology;
pub mod pipeline;
pub mod prompting;
pub mod retrieval;

pub use error::{Error, Result};
