//! Effective bending forms of thin plates with layered or periodic
//! microstructure, with dense reference solvers for every discretization.
//!
//! The guide in `book/` walks through the modules in order.

pub mod app;
pub mod cg;
pub mod error;
pub(crate) mod fem;
pub mod forms;
pub mod homog3d;
pub mod homogslab;
pub mod oracle;
pub mod quadrature;
pub mod reduction;
pub mod report;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/conventions.md")]
    mod conventions {}
    #[doc = include_str!("../../../book/src/bending.md")]
    mod bending {}
    #[doc = include_str!("../../../book/src/oscillation.md")]
    mod oscillation {}
    #[doc = include_str!("../../../book/src/regime1.md")]
    mod regime1 {}
    #[doc = include_str!("../../../book/src/regime2.md")]
    mod regime2 {}
    #[doc = include_str!("../../../book/src/oracles.md")]
    mod oracles {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
    #[doc = include_str!("../../../README.md")]
    mod readme {}
}
