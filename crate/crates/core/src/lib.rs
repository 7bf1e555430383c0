//! Projection-based model order reduction whose inner linear systems are
//! solved by right-preconditioned GMRES with sparse approximate inverse
//! preconditioners that are reused across the sequence of systems.

pub mod airga;
pub mod birka;
pub mod chain;
pub mod dense;
pub mod error;
pub mod generate;
pub mod gmres;
pub mod kron;
pub mod lti;
pub mod mm;
pub mod operator;
pub mod precond;
pub mod qbihomm;
pub mod report;
pub mod spai;
pub mod sparse;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/intro.md")]
    struct Intro;
    #[doc = include_str!("../../../book/src/spai.md")]
    struct Spai;
    #[doc = include_str!("../../../book/src/reuse.md")]
    struct Reuse;
    #[doc = include_str!("../../../book/src/gmres.md")]
    struct Gmres;
    #[doc = include_str!("../../../book/src/airga.md")]
    struct Airga;
    #[doc = include_str!("../../../book/src/birka.md")]
    struct Birka;
    #[doc = include_str!("../../../book/src/qbihomm.md")]
    struct Qbihomm;
    #[doc = include_str!("../../../book/src/cli.md")]
    struct Cli;
}
