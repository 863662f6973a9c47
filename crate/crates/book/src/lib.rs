//! The guide's chapters, included so their code blocks run as doc-tests.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/equations.md")]
pub mod equations {}
#[doc = include_str!("../../../book/src/data.md")]
pub mod data {}
#[doc = include_str!("../../../book/src/perception.md")]
pub mod perception {}
#[doc = include_str!("../../../book/src/knowledge-base.md")]
pub mod knowledge_base {}
#[doc = include_str!("../../../book/src/abduction.md")]
pub mod abduction {}
#[doc = include_str!("../../../book/src/prompting.md")]
pub mod prompting {}
#[doc = include_str!("../../../book/src/loop.md")]
pub mod learning_loop {}
#[doc = include_str!("../../../book/src/experiments.md")]
pub mod experiments {}
