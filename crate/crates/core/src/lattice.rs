// Copyright 2026 The qtraj Authors
// SPDX-License-Identifier: Apache-2.0

//! Open-boundary tight-binding chain: Hamiltonian, closed-form eigensystem,
//! reflection parity, and site-population projectors.
//!
//! Sites are numbered `1..=N` in every public signature and 0-based inside
//! matrices. Eigen-indices `k = 1..=N` follow the closed-form labelling
//! `e_k = 2J cos(πk/(N+1))`, which for `J > 0` runs from the highest energy
//! down to the lowest. Units have ħ = 1, so energies and rates are both in
//! units of `J`.

use std::f64::consts::PI;

use ndarray::{Array1, Array2, ArrayView1};
use ndarray_linalg::{Eigh, UPLO};

use crate::error::{Error, Result};
use crate::linalg::{c, max_hermitian_deviation, C64, ZERO};

const HERMITIAN_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LatticeSpec {
    n_sites: usize,
    coupling: f64,
}

impl LatticeSpec {
    pub fn new(n_sites: usize, coupling: f64) -> Result<Self> {
        if n_sites == 0 {
            return Err(Error::InvalidLattice("n_sites must be at least 1".into()));
        }
        if !coupling.is_finite() {
            return Err(Error::InvalidLattice(format!("coupling {coupling} is not finite")));
        }
        Ok(Self { n_sites, coupling })
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn coupling(&self) -> f64 {
        self.coupling
    }

    /// Checks a 1-based site index and returns it 0-based.
    pub fn site_index(&self, site: usize) -> Result<usize> {
        if site == 0 || site > self.n_sites {
            return Err(Error::SiteOutOfRange { site, n_sites: self.n_sites });
        }
        Ok(site - 1)
    }
}

/// A square complex matrix, optionally certified Hermitian.
#[derive(Debug, Clone, PartialEq)]
pub struct Operator {
    matrix: Array2<C64>,
    hermitian: bool,
}

impl Operator {
    pub fn new(matrix: Array2<C64>) -> Result<Self> {
        let (r, cols) = matrix.dim();
        if r != cols || r == 0 {
            return Err(Error::DimensionMismatch { expected: r, found: cols });
        }
        if matrix.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self { matrix, hermitian: false })
    }

    /// Builds an operator and sets the Hermitian flag, rejecting matrices
    /// that differ from their adjoint by more than 1e-12.
    pub fn hermitian(matrix: Array2<C64>) -> Result<Self> {
        let mut op = Self::new(matrix)?;
        let dev = max_hermitian_deviation(&op.matrix.view());
        if dev > HERMITIAN_TOL {
            return Err(Error::NotHermitian(dev));
        }
        op.hermitian = true;
        Ok(op)
    }

    pub fn identity(dim: usize) -> Self {
        Self { matrix: crate::linalg::identity(dim), hermitian: true }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &Array2<C64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> Array2<C64> {
        self.matrix
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermitian
    }

    /// Diagonal entries (real parts) if every off-diagonal entry vanishes exactly.
    pub fn real_diagonal(&self) -> Option<Vec<f64>> {
        let n = self.dim();
        for ((i, j), z) in self.matrix.indexed_iter() {
            if i != j && *z != ZERO {
                return None;
            }
        }
        let diag: Vec<C64> = self.matrix.diag().to_vec();
        if diag.iter().any(|z| z.im != 0.0) {
            return None;
        }
        debug_assert_eq!(diag.len(), n);
        Some(diag.into_iter().map(|z| z.re).collect())
    }

    pub(crate) fn require_dim(&self, dim: usize) -> Result<()> {
        if self.dim() != dim {
            return Err(Error::DimensionMismatch { expected: dim, found: self.dim() });
        }
        Ok(())
    }

    pub(crate) fn require_hermitian(&self) -> Result<()> {
        if self.hermitian {
            Ok(())
        } else {
            Err(Error::NotHermitian(max_hermitian_deviation(&self.matrix.view())))
        }
    }
}

/// Reflection symmetry about the middle of the chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Parity {
    /// Symmetric under n → N+1−n (odd eigen-index k).
    Even,
    /// Antisymmetric under n → N+1−n (even eigen-index k).
    Odd,
}

impl Parity {
    pub fn of_index(k: usize) -> Self {
        if k % 2 == 1 {
            Parity::Even
        } else {
            Parity::Odd
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EigenSystem {
    energies: Array1<f64>,
    states: Array2<C64>,
    parity: Vec<Parity>,
}

impl EigenSystem {
    pub fn dim(&self) -> usize {
        self.energies.len()
    }

    /// Energies in eigen-index order (index 0 holds `e_1`).
    pub fn energies(&self) -> &Array1<f64> {
        &self.energies
    }

    /// Column `k-1` holds `|w_k⟩` in the site basis.
    pub fn states(&self) -> &Array2<C64> {
        &self.states
    }

    pub fn parities(&self) -> &[Parity] {
        &self.parity
    }

    fn check(&self, k: usize) -> Result<usize> {
        if k == 0 || k > self.dim() {
            return Err(Error::IndexOutOfRange { index: k, n: self.dim() });
        }
        Ok(k - 1)
    }

    pub fn energy(&self, k: usize) -> Result<f64> {
        Ok(self.energies[self.check(k)?])
    }

    pub fn state(&self, k: usize) -> Result<ArrayView1<'_, C64>> {
        let idx = self.check(k)?;
        Ok(self.states.column(idx))
    }

    pub fn parity(&self, k: usize) -> Result<Parity> {
        Ok(self.parity[self.check(k)?])
    }

    /// Bohr frequency `e_i − e_j`.
    pub fn bohr_frequency(&self, i: usize, j: usize) -> Result<f64> {
        Ok(self.energy(i)? - self.energy(j)?)
    }
}

pub fn build_hamiltonian(spec: &LatticeSpec) -> Operator {
    let n = spec.n_sites();
    let mut h = Array2::zeros((n, n));
    for i in 0..n.saturating_sub(1) {
        h[[i + 1, i]] = c(spec.coupling());
        h[[i, i + 1]] = c(spec.coupling());
    }
    Operator { matrix: h, hermitian: true }
}

/// `e_k = 2J cos(πk/(N+1))`, `⟨n|w_k⟩ = √(2/(N+1)) sin(πkn/(N+1))`.
pub fn analytic_eigensystem(spec: &LatticeSpec) -> EigenSystem {
    let n = spec.n_sites();
    let np1 = (n + 1) as f64;
    let norm = (2.0 / np1).sqrt();
    let energies = Array1::from_shape_fn(n, |k| 2.0 * spec.coupling() * (PI * (k + 1) as f64 / np1).cos());
    let states = Array2::from_shape_fn((n, n), |(site, k)| {
        c(norm * (PI * ((k + 1) * (site + 1)) as f64 / np1).sin())
    });
    let parity = (1..=n).map(Parity::of_index).collect();
    EigenSystem { energies, states, parity }
}

/// Dense Hermitian diagonalization, re-indexed to the closed-form convention.
///
/// Eigenvalues are ordered descending when the dominant hopping amplitude is
/// positive and ascending otherwise; each eigenvector is rotated so that its
/// first non-negligible site amplitude is real and positive, as in the
/// closed-form states.
pub fn numeric_eigensystem(h: &Operator) -> Result<EigenSystem> {
    h.require_hermitian()?;
    let n = h.dim();
    let (vals, vecs) = h.matrix().eigh(UPLO::Lower)?;

    let hopping: f64 = (0..n.saturating_sub(1)).map(|i| h.matrix()[[i, i + 1]].re).sum();
    let mut order: Vec<usize> = (0..n).collect();
    if hopping >= 0.0 {
        order.reverse();
    }

    let energies = Array1::from_iter(order.iter().map(|&i| vals[i]));
    let mut states = Array2::zeros((n, n));
    for (dst, &src) in order.iter().enumerate() {
        let col = vecs.column(src);
        let anchor = col.iter().find(|z| z.norm() > 1e-8).copied().unwrap_or(c(1.0));
        let phase = anchor.conj() / anchor.norm();
        for site in 0..n {
            states[[site, dst]] = col[site] * phase;
        }
    }
    let parity = (1..=n).map(Parity::of_index).collect();
    Ok(EigenSystem { energies, states, parity })
}

/// Diagonal projector onto the listed 1-based sites.
pub fn site_projector(spec: &LatticeSpec, sites: &[usize]) -> Result<Operator> {
    if sites.is_empty() {
        return Err(Error::InvalidParameter("site set must be non-empty".into()));
    }
    let n = spec.n_sites();
    let mut m = Array2::zeros((n, n));
    for &site in sites {
        let idx = spec.site_index(site)?;
        m[[idx, idx]] = c(1.0);
    }
    Ok(Operator { matrix: m, hermitian: true })
}
