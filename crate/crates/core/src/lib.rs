//! Two-database symmetric private information retrieval on top of a
//! simulated MDI-QKD key layer.
//!
//! The application layer ([`cube`], [`pir`], [`spir`], [`keystore`],
//! [`net`]) runs the retrieval protocol with one-time-pad protected links
//! and shared masking randomness. The key layer ([`qkd`]) produces the key
//! material: decoy-state bounds, finite-key length, parameter optimization,
//! and sifting / reconciliation / Toeplitz privacy amplification.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bits;
pub mod cli;
pub mod config;
pub mod cube;
pub mod error;
pub mod keystore;
pub mod net;
pub mod pir;
pub mod qkd;
pub mod spir;
pub mod testing;

pub use bits::BitString;
pub use error::{Error, Result};
