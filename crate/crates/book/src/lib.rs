// Copyright 2026 The qtraj Authors
// SPDX-License-Identifier: Apache-2.0

//! The qtraj guide. Each chapter is included here so that its code listings
//! run as doc-tests.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/lattice.md")]
pub mod lattice {}

#[doc = include_str!("../../../book/src/trajectories.md")]
pub mod trajectories {}

#[doc = include_str!("../../../book/src/liouvillian.md")]
pub mod liouvillian {}

#[doc = include_str!("../../../book/src/spectra.md")]
pub mod spectra {}

#[doc = include_str!("../../../book/src/zeno.md")]
pub mod zeno {}

#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
