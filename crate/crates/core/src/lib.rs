// Copyright 2026 The qtraj Authors
// SPDX-License-Identifier: Apache-2.0

pub mod cli;
pub mod error;
pub mod lattice;
pub mod liouville;
pub mod linalg;
pub mod signal;
pub mod sme;
pub mod states;

pub use error::{Error, Result};
