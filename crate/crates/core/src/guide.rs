//! Worked examples. Each chapter is compiled as a doctest.

#[doc = include_str!("../../../book/src/lattice.md")]
pub mod lattice {}

#[doc = include_str!("../../../book/src/family.md")]
pub mod family {}

#[doc = include_str!("../../../book/src/slow.md")]
pub mod slow {}

#[doc = include_str!("../../../book/src/weakkam.md")]
pub mod weakkam {}

#[doc = include_str!("../../../book/src/nhic.md")]
pub mod nhic {}

#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
