pub mod agent;
pub mod config;
pub mod embedding;
pub mod eval;
pub mod graph;
pub mod http;
pub mod llm;
pub mod metrics;
pub mod pipeline;
pub mod retrieval;
pub mod text;
pub mod verification;
