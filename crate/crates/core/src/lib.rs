//! Heterogeneous global graph neural network for personalized session-based
//! recommendation.
//!
//! The crate is `no_std` (with `alloc`) and holds every algorithmic piece of
//! the recommender:
//!
//! - [`data`]: sessionization, filtering, train/test split and example
//!   segmentation over an in-memory event list.
//! - [`graph`]: the heterogeneous global graph (transition, co-occurrence
//!   similarity and user–item edges) with top-S sampling.
//! - [`tensor`], [`tape`], [`adam`], [`gradcheck`]: a small dense tensor type
//!   with reverse-mode differentiation and an Adam optimizer.
//! - [`hgnn`], [`encoder`], [`model`], [`train`]: the graph encoder, the
//!   personalized session encoder, scoring/loss, and the training loop.
//! - [`metrics`], [`itemknn`], [`ablation`], [`synthetic`]: evaluation.
//!
//! File formats, configuration and the command-line tool live in the `hggnn`
//! crate.
#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod ablation;
pub mod adam;
pub mod data;
pub mod encoder;
pub mod error;
pub mod gradcheck;
pub mod graph;
pub mod hgnn;
pub mod itemknn;
pub mod math;
pub mod metrics;
pub mod model;
pub mod synthetic;
pub mod tape;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;
