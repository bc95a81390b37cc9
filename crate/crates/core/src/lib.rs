//! Packet traffic on scale-free networks and detrended fluctuation analysis
//! of the resulting load time series.
//!
//! The crate is `no_std` and only needs `alloc`. Everything here is a pure
//! function of its inputs and an explicit seed; file formats, the worker pool
//! and the command-line front end live in the `traffic-dfa` crate.
//!
//! Modules:
//!
//! - [`graph`]: preferential-attachment networks with precomputed hop
//!   distances and canonical shortest paths.
//! - [`traffic`]: synchronous packet simulation with three routing strategies.
//! - [`dfa`]: global trend removal, profile integration, box-wise detrending,
//!   scaling fits and crossover detection.
//! - [`phase`]: growth slopes, the congestion threshold, alpha-vs-beta sweeps
//!   and free/buffer/congestion classification.

#![no_std]

extern crate alloc;

pub mod dfa;
mod error;
pub mod graph;
pub mod phase;
pub mod seed;
pub mod stats;
pub mod traffic;

pub use error::{Error, Result};
