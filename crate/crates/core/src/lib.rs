//! Knowledge-graph to fine-tuning dataset compiler.

pub mod config;
pub mod encode;
pub mod eval;
pub mod graph;
pub mod ingest;
pub mod llm;
pub mod partition;
pub mod pipeline;
pub mod prompts;
pub mod qa;
pub mod store;
pub mod synth;
pub mod templates;
