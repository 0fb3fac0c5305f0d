//! Okubo systems of generalized hypergeometric type, their confluent family and
//! the irregular limit: series bases, monodromy, connection and Stokes data.

pub mod borel;
pub mod cli;
pub mod closed_form;
pub mod cplx;
pub mod error;
pub mod model;
pub mod series;
pub mod special;
pub mod transport;
pub mod verify;

pub use cplx::{Branch, CMat, CNum};
pub use error::{Error, Result};
pub use model::{HGParams, Rho, Sign};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/parameters.md")]
    mod parameters {}
    #[doc = include_str!("../../../book/src/series.md")]
    mod series {}
    #[doc = include_str!("../../../book/src/transport.md")]
    mod transport {}
    #[doc = include_str!("../../../book/src/closed-form.md")]
    mod closed_form {}
    #[doc = include_str!("../../../book/src/borel-laplace.md")]
    mod borel_laplace {}
    #[doc = include_str!("../../../book/src/verification.md")]
    mod verification {}
}
