//! No-arbitrage classification of one-dimensional general diffusion markets.
//!
//! A market is given by a diffusion `Y` on an interval `J` (scale function,
//! speed measure, boundary behavior), a constant interest rate `r` and the
//! discounted price `S_t = e^{-rt} Y_t`. The crate decides the weak
//! no-arbitrage notions NIP, NSA and NUPBR from these characteristics and
//! cross-checks the verdicts with a Markov chain Monte Carlo engine.

// NaN must fall through the `!(a < b)` style guards.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod arb_classifier;
pub mod config;
pub mod diffusion_model;
pub mod error;
pub mod mc_engine;
pub mod measure_kit;
pub mod model_catalog;
pub mod spec_io;


pub use arb_classifier::{classify, Status, Verdict};
pub use diffusion_model::{DiffusionSpec, NaturalScaleView};
pub use config::Tolerances;

pub use error::{Error, Result};
