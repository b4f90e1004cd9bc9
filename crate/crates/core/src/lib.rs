//! Stochastic large-eddy simulation of a one-dimensional reaction-diffusion
//! equation with a Volterra memory term.
//!
//! The crate covers the whole chain: fractional Brownian motion generators,
//! the fine-grid memory PDE solver, Gaussian filtering, subgrid-stress
//! extraction and closure fitting, the coarse stochastic LES solver, and an
//! experiment harness that compares the closure against a no-model baseline.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod ensemble;
pub mod error;
pub mod fbm;
pub mod filter;
pub mod grid;
pub mod harness;
pub mod io;
pub mod les;
pub mod memory_pde;
pub mod rng;
pub mod sgs;

pub use error::{Error, Result};
pub use fbm::{FbmPath, GeneratorKind, HurstParam};
pub use filter::{FilterSpec, GaussianFilter};
pub use grid::{BoundaryCondition, FieldSeries, Grid1D};
pub use harness::{ComparisonReport, ExperimentConfig};
pub use les::SpdeProblem;
pub use memory_pde::{MemoryKernelSpec, PdeProblem, PerturbationSpec};
pub use sgs::{ClosureFile, SgsClosure, SgsField};
