//! Natural-language queryable scene maps built from multi-view region
//! embeddings, with object proposal and context-grounded task planning.

pub mod embedding;
pub mod error;
pub mod exec;
pub mod geometry;
pub mod llm;
pub mod map;
pub mod planner;
pub mod proposal;
pub mod sim;
pub mod types;

mod http;
mod seeds;

pub use error::{Error, Result};
pub use exec::ExecMode;
