//! Reconstruction of sparse weighted networks from binary node-state data.
//!
//! The core estimator performs MAP inference under a quantized,
//! nonparametrically categorized weight prior whose negative log reads as a
//! description length, so the number of edges and the shape of the weight
//! distribution are outputs of the fit rather than inputs. The crate also
//! ships the standard comparison methods (L1 with cross-validation,
//! decimation, a known-truth Gaussian prior), simulators for the supported
//! generative models, and a perturbation analyzer for fitted models.

pub mod baselines;
pub mod bisect;
pub mod graph;
pub mod infer;
pub mod io;
pub mod metrics;
pub mod models;
pub mod prior;
pub mod report;
pub mod simulate;

pub use graph::{Alphabet, DataKind, Dataset, NodeFields, WeightedNetwork};
pub use infer::{reconstruct_mdl, OptimizerConfig};
pub use models::{ModelKind, ModelState};
pub use prior::PriorHyper;
pub use report::RunReport;
