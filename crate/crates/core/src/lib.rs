//! Random Indexing K-tree: incremental, height-balanced document clustering
//! over random-indexed vectors, with the representation pipeline and the
//! evaluation harness around it.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod evaluate;
pub mod kmeans;
pub mod ktree;
pub mod pipeline;
pub mod randindex;
pub mod represent;
pub mod scalar;
pub mod seeds;
pub mod synth;
pub mod vecspace;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type DenseVector64 = vecspace::DenseVector<f64>;
pub type DenseVector32 = vecspace::DenseVector<f32>;
pub type SparseVector64 = vecspace::SparseVector<f64>;
pub type KTree64 = ktree::KTree<f64>;
pub type KTree32 = ktree::KTree<f32>;
pub type Partition64 = kmeans::Partition<f64>;
