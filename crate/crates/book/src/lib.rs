//! The guide's chapters, compiled so every listing runs as a doc-test.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/workspace.md")]
pub mod workspace {}
#[doc = include_str!("../../../book/src/controller.md")]
pub mod controller {}
#[doc = include_str!("../../../book/src/reasoner.md")]
pub mod reasoner {}
#[doc = include_str!("../../../book/src/closed_loop.md")]
pub mod closed_loop {}
#[doc = include_str!("../../../book/src/metrics.md")]
pub mod metrics {}
#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
