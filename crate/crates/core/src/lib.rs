//! Abductive learning for handwritten binary equations.
//!
//! A perception model reads glyph images of equations such as `1+1=10`
//! and emits per-glyph probability rows. A reasoner, either the exact
//! [`abduction`] oracle or a chat model driven through the
//! [`llm`] self-feedback loop, revises those readings until they agree
//! with a knowledge base and with some hidden digit-wise operation, which
//! it identifies along the way. Revised readings retrain the perception
//! model ([`abl`]), and a final classifier judges equation veracity.

pub mod abduction;
pub mod abl;
pub mod dataset;
pub mod experiment;
pub mod glyph;
pub mod grammar;
pub mod kb;
pub mod llm;
pub mod metrics;
pub mod perception;
pub mod symbol;
pub mod table;

pub use symbol::Symbol;
pub use table::OperationTable;
