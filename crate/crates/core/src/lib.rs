//! Learns a library of reusable helper functions from example programs,
//! keeping only helpers whose refactored programs still execute to the same
//! result, then uses that library to write programs for new queries.
//!
//! - [`proglang`]: lexer, parser, printer and step-budgeted interpreter for
//!   the program language.
//! - [`domains`]: LOGO turtle graphics, date arithmetic and a crafting world.
//! - [`preprocess`]: comment generation, embedding and Ward-clustered batches.
//! - [`trainer`]: refactor, verify, retry, edit and prune over the batches.
//! - [`codebank`]: the helper bank and the bank of verified demonstrations.
//! - [`agent`]: retrieval-augmented program synthesis at test time.
//! - [`gateway`]: model backends, caching and record/replay fixtures.
//! - [`cli`]: the `abstractor` command line.

pub mod agent;
pub mod cli;
pub mod codebank;
pub mod dataset;
pub mod domains;
pub mod gateway;
pub mod preprocess;
pub mod proglang;
pub mod retrieval;
pub mod trainer;
pub mod verify;
