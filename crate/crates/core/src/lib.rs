//! Weighted stochastic interacting particle solver for a haptotaxis model of
//! cancer invasion: cells are weighted particles, the ECM, MDE and oxygen
//! fields live on a periodic grid and are advanced spectrally.
//!
//! Entry points: [`simulator::run`] for a single run, [`study`] for
//! convergence and mesh comparisons, [`config::ConfigFile`] for TOML input.

#![allow(
    clippy::neg_cmp_op_on_partial_ord,
    clippy::too_many_arguments,
    clippy::needless_range_loop,
    clippy::large_enum_variant
)]

pub mod chem;
pub mod cli;
pub mod config;
pub mod diagnostics;
pub mod error;
pub mod expr;
pub mod grid;
pub mod io;
pub mod model;
pub mod particles;
pub mod pic;
pub mod reference;
pub mod simulator;
pub mod spectral;
pub mod study;

pub use error::{Error, Result};
