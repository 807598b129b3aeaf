//! Heterogeneous graph convolution for transductive text classification.
//!
//! Documents and words become nodes of one graph. Doc-word co-occurrence
//! edges (optionally typed by part-of-speech), embedding-similarity edges
//! and translation edges each form their own adjacency slice, and a
//! two-layer heterogeneous GCN classifies the document nodes.
//!
//! Pipeline: [`corpus`] → [`graph`] (using [`embed`] and [`sparse`]) →
//! [`model`] trained by [`train`] with [`optim`].

pub mod cli;
pub mod config;
pub mod corpus;
pub mod dense;
pub mod embed;
pub mod error;
pub mod graph;
pub mod model;
pub mod optim;
pub mod rng;
pub mod sparse;
pub mod synth;
pub mod train;

pub use error::{Error, Result};
