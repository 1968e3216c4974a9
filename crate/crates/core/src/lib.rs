//! Hybrid bootstrap regularization.
//!
//! The hybrid bootstrap corrupts a training point by replacing a random
//! subset of its features with the same features of another training point,
//! where dropout would replace them with zeros. This crate holds the
//! corruption operators themselves ([`corruptor`]), a small deterministic
//! network engine with hand-written backward passes ([`nn`]), the filter
//! redundancy diagnostic ([`metrics`]), in-memory dataset handling
//! ([`data`], [`table`]) and the row-wise tabular expander ([`expander`]).
//!
//! Everything here is pure computation over `alloc` collections; file
//! formats, configuration and the command-line front end live in the
//! `hybridboot` crate.
#![cfg_attr(not(feature = "std"), no_std)]
#![forbid(unsafe_op_in_unsafe_fn)]

extern crate alloc;

pub mod corruptor;
pub mod data;
mod error;
pub mod expander;
mod math;
pub mod metrics;
pub mod nn;
pub mod rng;
pub mod stats;
pub mod table;
pub mod tensor;

pub use error::{Error, Result};
pub use rng::Rng;
pub use tensor::{matmul, Tensor};
