//! Variational quantum learning workbench: a dense statevector simulator,
//! ZZ feature-map and real-amplitudes circuit builders, classical
//! preprocessing, variational classifiers/regressors, the MUSE multi-locality
//! initial-point search with its grid driver, and trace-difference
//! diagnostics for preprocessing choices.

pub mod circuits;
pub mod cli;
pub mod diagnostics;
pub mod model;
pub mod muse;
pub mod pipeline;
pub mod preprocess;
pub mod statevec;
