//! Every chapter of the guide in `book/src` is pulled in as the docs of one
//! module, so `cargo test -p infernet-book` runs each Rust listing in the
//! book as a doctest. A failing test name points at the chapter module.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/networks.md")]
pub mod networks {}

#[doc = include_str!("../../../book/src/propagation.md")]
pub mod propagation {}

#[doc = include_str!("../../../book/src/depth-vectors.md")]
pub mod depth_vectors {}

#[doc = include_str!("../../../book/src/strategies.md")]
pub mod strategies {}

#[doc = include_str!("../../../book/src/simulation.md")]
pub mod simulation {}

#[doc = include_str!("../../../book/src/sessions.md")]
pub mod sessions {}

#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
