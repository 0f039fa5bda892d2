//! Doc-test shim for the guide in `book/`: each module's documentation is
//! one chapter, so `cargo test --doc` compiles and runs every code block
//! the book shows. One module per chapter keeps test failures traceable
//! to their page. The workspace README rides along for the same reason.

#[doc = include_str!("../../../README.md")]
pub mod readme {}

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/scenario.md")]
pub mod scenario {}

#[doc = include_str!("../../../book/src/follower.md")]
pub mod follower {}

#[doc = include_str!("../../../book/src/leader.md")]
pub mod leader {}

#[doc = include_str!("../../../book/src/game.md")]
pub mod game {}

#[doc = include_str!("../../../book/src/sweeps.md")]
pub mod sweeps {}
