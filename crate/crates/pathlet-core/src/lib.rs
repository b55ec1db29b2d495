//! Pathlet dictionary learning for network-constrained trajectories.
//!
//! Given a collection of trajectories on a directed road graph, this crate
//! extracts a compact dictionary of frequently reused subpaths ("pathlets")
//! such that every trajectory is reconstructed by concatenating dictionary
//! entries. Selection is posed as a binary matrix problem, relaxed to a box-
//! constrained convex program solved by projected gradient descent, and
//! rounded back to a binary solution by randomized rounding with a repair
//! fallback. A hierarchical mode partitions the map, learns per cell, and
//! composes coarser "pathlets of pathlets" from finer-level tokens.
//!
//! The crate is `no_std` (with `alloc`); file formats, persistence, and the
//! command-line interface live in the companion `pathlet-cli` crate.

#![cfg_attr(not(test), no_std)]
#![deny(unsafe_code)]

extern crate alloc;

pub mod candidates;
pub mod decomposer;
pub mod evalkit;
pub mod hierarchy;
pub mod matrix;
pub mod model;
pub mod pipeline;
pub mod rounding;
pub mod solver;
pub mod synth;

pub use matrix::{DenseMatrix, SparseBinaryMatrix};
pub use model::{Dictionary, DictionaryOrigin, EdgeId, Pathlet, RoadGraph, TrajId, Trajectory};
