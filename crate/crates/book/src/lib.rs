//! The guide's chapters as doc modules, so `cargo test` runs every snippet.

#[doc = include_str!("../../../book/src/intro.md")]
pub mod intro {}
#[doc = include_str!("../../../book/src/lstm.md")]
pub mod lstm {}
#[doc = include_str!("../../../book/src/bilstm.md")]
pub mod bilstm {}
#[doc = include_str!("../../../book/src/features.md")]
pub mod features {}
#[doc = include_str!("../../../book/src/training.md")]
pub mod training {}
#[doc = include_str!("../../../book/src/evaluation.md")]
pub mod evaluation {}
#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
