//! Similarity-graph model of difficult-to-learn examples in contrastive
//! learning: structured graphs and their spectra, linear-probing error
//! bounds, margin and temperature corrections, matrix-factorization losses,
//! linear probes, a synthetic InfoNCE training harness and random
//! perturbation checks.

// `!(x > 0.0)` guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod cli;
pub mod corrections;
pub mod eigen;
pub mod error;
pub mod factorize;
pub mod graph;
pub mod harness;
pub mod perturb;
pub mod probe;
pub mod rng;
pub mod spectrum;

pub use error::{Error, Result};
pub use graph::{GraphMode, GraphParams, NormalizedGraph, SimilarityGraph};
pub use rng::SeededRng;
pub use spectrum::{Spectrum, SpectrumSource};
