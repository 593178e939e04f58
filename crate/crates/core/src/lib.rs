//! First-passage percolation across thin cylinders `Z x G`.
//!
//! Exact passage-time functionals on sampled edge weights, the block
//! decomposition and exponent schedule, a reproducible Monte Carlo harness,
//! and statistical checks of the predicted scaling and Gaussian behaviour.

pub mod decomposition;
pub mod graph;
pub mod montecarlo;
pub mod passage;
pub mod quadrature;
pub mod stats;
pub mod weights;

pub use graph::{build_box_cylinder, build_product_cylinder, graph_metrics, CylinderGraph, GraphMetrics, GraphSpec};
pub use passage::{PassageEngine, PassageResult, Variant};
pub use weights::{derive_stream, sample_weights, RngStream, WeightConfig, WeightDistribution};
