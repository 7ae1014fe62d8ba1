//! Synthetic claim/text pair generation from sentence-fact entailment
//! tables, with all-false-column hallucination scanning and P/R/F1 scoring.

pub mod corpus;
pub mod decomposition;
pub mod error;
pub mod evaluation;
pub mod fact_table;
pub mod halluscan;
pub mod llm;
pub mod par;
pub mod pipeline;
pub mod prompts;
pub mod schema;
pub mod segmenter;
pub mod synthesis;

pub use error::{Error, Result};
