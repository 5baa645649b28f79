//! Graph clustering with dominant sets and constrained dominant sets.
//!
//! The core is a quadratic program over the standard simplex solved by replicator dynamics
//! ([`cds`]). Built on it are seeded segmentation and co-segmentation ([`segmentation`]),
//! diffusion re-ranking for retrieval ([`diffusion`]), entropy-weighted multi-feature fusion
//! ([`fusion`]) and a small differentiable block ([`dcds`]).

pub mod cds;
pub mod dcds;
pub mod diffusion;
pub mod error;
pub mod fixtures;
pub mod fusion;
pub mod graph;
pub mod io;
pub mod linalg;
pub mod metrics;
pub mod segmentation;

pub use cds::{ClusterResult, PeelOffResult, SolverParams};
pub use error::{CdsError, Result};
pub use graph::{AffinityMatrix, DistanceMatrix, FeatureTable};
