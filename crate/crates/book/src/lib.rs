//! The guide in `book/`, compiled so that its Rust snippets run as doc-tests.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/ladder.md")]
pub mod ladder {}

#[doc = include_str!("../../../book/src/couplings.md")]
pub mod couplings {}

#[doc = include_str!("../../../book/src/discrete.md")]
pub mod discrete {}

#[doc = include_str!("../../../book/src/exact.md")]
pub mod exact {}

#[doc = include_str!("../../../book/src/observables.md")]
pub mod observables {}

#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
