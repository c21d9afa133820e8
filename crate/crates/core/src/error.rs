// Copyright 2026 The qtraj Authors
// SPDX-License-Identifier: Apache-2.0

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid lattice: {0}")]
    InvalidLattice(String),

    #[error("site {site} out of range 1..={n_sites}")]
    SiteOutOfRange { site: usize, n_sites: usize },

    #[error("eigen-index {index} out of range 1..={n}")]
    IndexOutOfRange { index: usize, n: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("operator is not Hermitian (max deviation {0:.3e})")]
    NotHermitian(f64),

    #[error("matrix contains non-finite entries")]
    NonFinite,

    #[error("invalid density matrix: {0}")]
    InvalidState(String),

    #[error("vector length {0} is not a perfect square")]
    NotPerfectSquare(usize),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("state trace collapsed to {0:.3e} before renormalization; time step too large")]
    TraceCollapse(f64),

    #[error("steady state is not unique (kernel dimension {0}); an initial state is required")]
    DegenerateSteadyState(usize),

    #[error("state is not stationary under the generator (residual {0:.3e})")]
    NotStationary(f64),

    #[error("resolvent at omega = {0} is singular and cannot be resolved by kernel projection")]
    SingularResolvent(f64),

    #[error("measurement record is empty")]
    EmptyRecord,

    #[error("spectral grids or kinds do not match")]
    GridMismatch,

    #[error("no spectral peak above omega = {0} qualifies")]
    NoPeak(f64),

    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },

    #[error("need at least {needed} records, got {got}")]
    TooFewRecords { needed: usize, got: usize },

    #[error("linear algebra failure: {0}")]
    Linalg(#[from] ndarray_linalg::error::LinalgError),
}
