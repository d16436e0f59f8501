//! Matrix Wiener-Hopf fluctuation identities for Markov additive processes,
//! with Monte Carlo and quadrature cross-checks.
//!
//! ```
//! use mapfluct::ladder::{sup_factor, Conditioning};
//! use mapfluct::model::{builtin, validate};
//!
//! let m = validate(builtin("MODEL-A")?)?;
//! // E[e^{-0.7 S(e_q) - 0.3 Gbar(e_q)}; J(e_q)] at q = 1
//! let f = sup_factor(&m, 1.0, 0.7, 0.3, Conditioning::AtEq)?;
//! assert!(f.row_sum().iter().all(|s| *s < 1.0));
//! # Ok::<(), mapfluct::Error>(())
//! ```

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` also rejects NaN

pub mod cumulant;
pub mod error;
pub mod identity;
pub mod ladder;
pub mod linalg;
pub mod model;
pub mod simulate;
pub mod transform;
pub mod verify;

pub use error::{Error, Result, Violation};
