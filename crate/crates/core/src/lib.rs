//! Clickstream operationalization for lecture-video interaction logs.
//!
//! Raw player events are encoded as click operations ([`ingest`]), summarized
//! into seven behavioral actions by fuzzy pattern weights ([`actions`],
//! [`strdist`]) and scored with an information processing index ([`ipi`]).
//! Downstream modules cluster students by Markov transition structure
//! ([`markov`], [`cluster`]), test relational structure ([`sna`]), predict
//! engagement and dropout ([`learn`]) and fit attrition hazards
//! ([`survival`]). [`synth`] generates cohorts with planted structure.

pub mod actions;
pub mod cluster;
pub mod config;
pub mod error;
pub mod exec;
pub mod ingest;
pub mod ipi;
pub mod learn;
pub mod linalg;
pub mod markov;
pub mod pipeline;
pub mod sna;
pub mod stats;
pub mod strdist;
pub mod survival;
pub mod synth;

pub use error::{Error, Result};
