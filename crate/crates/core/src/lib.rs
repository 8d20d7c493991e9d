//! Multi-task sparse regression with three coupled-penalty estimators:
//! per-task powered l1 ("lassoes"), row-wise group lasso, and the
//! rotation-invariant nuclear-norm (RING) lasso, together with KKT
//! certificates, restricted-eigenvalue diagnostics, closed-form risk-bound
//! evaluators, and a seeded simulation harness.

pub mod cli;
pub mod diagnostics;
pub mod error;
pub mod group;
pub mod io;
pub mod lassoes;
pub mod model;
pub mod report;
pub mod simgen;
pub mod ring;
pub mod spectra;
pub mod svg;

pub use error::{Error, Result};
pub use model::{CoefMatrix, MultiTaskDataset, PopTruth, Task};
