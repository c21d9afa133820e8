// Copyright 2026 The qtraj Authors
// SPDX-License-Identifier: Apache-2.0

//! Density matrices, superoperators and scalar diagnostics.
//!
//! Vectorization is column stacking throughout the crate: entry `(i, j)` of an
//! `N×N` matrix lands at position `i + j·N`. With this convention
//! `vec(A X B) = (Bᵀ ⊗ A) vec(X)` and the Hilbert–Schmidt product `tr[A†B]`
//! is the ordinary inner product of the vectorized matrices.

use ndarray::{Array1, Array2, ArrayView2};
use ndarray_linalg::{Eigh, UPLO};

use crate::error::{Error, Result};
use crate::lattice::{EigenSystem, LatticeSpec, Operator, Parity};
use crate::linalg::{c, max_hermitian_deviation, trace, C64};

const HERMITIAN_TOL: f64 = 1e-10;
const TRACE_TOL: f64 = 1e-10;
const POSITIVITY_TOL: f64 = -1e-8;

/// A Hermitian, unit-trace, positive semidefinite `N×N` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    matrix: Array2<C64>,
}

impl DensityMatrix {
    /// Validates Hermiticity (1e-10), unit trace (1e-10) and positivity
    /// (smallest eigenvalue ≥ −1e-8).
    pub fn new(matrix: Array2<C64>) -> Result<Self> {
        let rho = Self::new_unchecked(matrix)?;
        rho.validate()?;
        Ok(rho)
    }

    /// Wraps a square matrix without checking the state invariants. Used by
    /// integrators whose intermediate states are only approximately physical.
    pub fn new_unchecked(matrix: Array2<C64>) -> Result<Self> {
        let (r, cols) = matrix.dim();
        if r != cols || r == 0 {
            return Err(Error::DimensionMismatch { expected: r, found: cols });
        }
        Ok(Self { matrix })
    }

    pub fn validate(&self) -> Result<()> {
        let dev = max_hermitian_deviation(&self.matrix.view());
        if dev > HERMITIAN_TOL {
            return Err(Error::InvalidState(format!("Hermiticity deviation {dev:.3e}")));
        }
        let tr = trace(&self.matrix.view());
        if (tr - c(1.0)).norm() > TRACE_TOL {
            return Err(Error::InvalidState(format!("trace {tr}")));
        }
        let (vals, _) = self.matrix.eigh(UPLO::Lower)?;
        let min = vals.iter().copied().fold(f64::INFINITY, f64::min);
        if min < POSITIVITY_TOL {
            return Err(Error::InvalidState(format!("negative eigenvalue {min:.3e}")));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &Array2<C64> {
        &self.matrix
    }

    pub fn view(&self) -> ArrayView2<'_, C64> {
        self.matrix.view()
    }

    pub fn into_matrix(self) -> Array2<C64> {
        self.matrix
    }

    /// Site populations `ρ_nn` in site order.
    pub fn populations(&self) -> Vec<f64> {
        self.matrix.diag().iter().map(|z| z.re).collect()
    }

    /// Projector `|ψ⟩⟨ψ|` of a normalized state vector.
    pub fn from_pure(psi: &[C64]) -> Result<Self> {
        let norm: f64 = psi.iter().map(|z| z.norm_sqr()).sum();
        if (norm - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidState(format!("state vector norm² {norm}")));
        }
        let n = psi.len();
        let m = Array2::from_shape_fn((n, n), |(i, j)| psi[i] * psi[j].conj());
        Self::new_unchecked(m)
    }

    pub fn maximally_mixed(n: usize) -> Self {
        Self { matrix: Array2::from_diag_elem(n, c(1.0 / n as f64)) }
    }
}

/// A linear map on column-stacked `N×N` matrices, stored as an `N²×N²` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Superoperator {
    matrix: Array2<C64>,
    trace_preserving: bool,
}

impl Superoperator {
    pub fn new(matrix: Array2<C64>) -> Result<Self> {
        let (r, cols) = matrix.dim();
        if r != cols {
            return Err(Error::DimensionMismatch { expected: r, found: cols });
        }
        if isqrt(r).is_none() {
            return Err(Error::NotPerfectSquare(r));
        }
        if matrix.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self { matrix, trace_preserving: false })
    }

    /// Sets the trace-preservation flag after checking that the adjoint
    /// annihilates the identity to 1e-10, i.e. `tr[𝒮 X] = 0` for every `X`.
    pub fn with_trace_preservation(mut self) -> Result<Self> {
        let n = self.hilbert_dim();
        let residual = (0..self.matrix.ncols())
            .map(|col| (0..n).map(|d| self.matrix[[d + d * n, col]]).sum::<C64>().norm())
            .fold(0.0, f64::max);
        if residual > 1e-10 {
            return Err(Error::InvalidParameter(format!(
                "superoperator is not trace-annihilating (residual {residual:.3e})"
            )));
        }
        self.trace_preserving = true;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn hilbert_dim(&self) -> usize {
        isqrt(self.dim()).expect("checked at construction")
    }

    pub fn matrix(&self) -> &Array2<C64> {
        &self.matrix
    }

    pub fn is_trace_preserving(&self) -> bool {
        self.trace_preserving
    }

    pub fn apply(&self, m: &ArrayView2<C64>) -> Result<Array2<C64>> {
        if m.nrows() != self.hilbert_dim() {
            return Err(Error::DimensionMismatch { expected: self.hilbert_dim(), found: m.nrows() });
        }
        devectorize(&self.matrix.dot(&vectorize(m)))
    }
}

fn isqrt(len: usize) -> Option<usize> {
    let r = (len as f64).sqrt().round() as usize;
    (r * r == len).then_some(r)
}

/// Column-stacking vectorization.
pub fn vectorize(m: &ArrayView2<C64>) -> Array1<C64> {
    m.t().iter().copied().collect()
}

pub fn devectorize(v: &Array1<C64>) -> Result<Array2<C64>> {
    let n = isqrt(v.len()).ok_or(Error::NotPerfectSquare(v.len()))?;
    Ok(Array2::from_shape_fn((n, n), |(i, j)| v[i + j * n]))
}

pub fn pure_state_on_site(spec: &LatticeSpec, n: usize) -> Result<DensityMatrix> {
    let idx = spec.site_index(n)?;
    let dim = spec.n_sites();
    let mut m = Array2::zeros((dim, dim));
    m[[idx, idx]] = c(1.0);
    DensityMatrix::new_unchecked(m)
}

pub fn eigenstate_density(eigensystem: &EigenSystem, k: usize) -> Result<DensityMatrix> {
    let w = eigensystem.state(k)?;
    DensityMatrix::from_pure(&w.to_vec())
}

/// Gibbs state `exp(−βH)/Z`.
pub fn thermal_state(h: &Operator, beta: f64) -> Result<DensityMatrix> {
    h.require_hermitian()?;
    if !beta.is_finite() || beta < 0.0 {
        return Err(Error::InvalidParameter(format!("inverse temperature {beta} must be finite and ≥ 0")));
    }
    let (vals, vecs) = h.matrix().eigh(UPLO::Lower)?;
    let e_min = vals.iter().copied().fold(f64::INFINITY, f64::min);
    let weights: Vec<f64> = vals.iter().map(|e| (-beta * (e - e_min)).exp()).collect();
    let z: f64 = weights.iter().sum();
    let n = h.dim();
    let mut m = Array2::zeros((n, n));
    for (k, w) in weights.iter().enumerate() {
        let col = vecs.column(k);
        for i in 0..n {
            for j in 0..n {
                m[[i, j]] += c(w / z) * col[i] * col[j].conj();
            }
        }
    }
    crate::linalg::hermitize(&mut m);
    DensityMatrix::new_unchecked(m)
}

/// `Re tr[Oρ]`; panics in debug builds if the imaginary part exceeds 1e-8.
pub fn expectation(o: &Operator, rho: &DensityMatrix) -> Result<f64> {
    o.require_dim(rho.dim())?;
    let v = crate::linalg::trace_product(&o.matrix().view(), &rho.view());
    debug_assert!(
        !o.is_hermitian() || v.im.abs() < 1e-8,
        "expectation of a Hermitian operator has imaginary part {}",
        v.im
    );
    Ok(v.re)
}

/// `tr[ρ²]`.
pub fn purity(rho: &DensityMatrix) -> f64 {
    purity_of(&rho.view())
}

pub(crate) fn purity_of(m: &ArrayView2<C64>) -> f64 {
    // tr[ρ²] = Σ_ij ρ_ij ρ_ji = Σ_ij |ρ_ij|² for Hermitian ρ.
    m.iter().map(|z| z.norm_sqr()).sum()
}

/// Weights `(p_od, p_ev)` on the spatially antisymmetric (even `k`) and
/// symmetric (odd `k`) eigenstates.
pub fn parity_weights(rho: &DensityMatrix, eigensystem: &EigenSystem) -> Result<(f64, f64)> {
    if rho.dim() != eigensystem.dim() {
        return Err(Error::DimensionMismatch { expected: eigensystem.dim(), found: rho.dim() });
    }
    let mut p_od = 0.0;
    let mut p_ev = 0.0;
    for (k, parity) in eigensystem.parities().iter().enumerate() {
        let w = eigensystem.states().column(k);
        let rw = rho.matrix().dot(&w);
        let weight: f64 = w.iter().zip(rw.iter()).map(|(a, b)| (a.conj() * b).re).sum();
        match parity {
            Parity::Odd => p_od += weight,
            Parity::Even => p_ev += weight,
        }
    }
    Ok((p_od, p_ev))
}

/// Parity weights from the reflection operator, `p_ev − p_od = Σ_n ρ_{n,N+1−n}`.
///
/// Equivalent to [`parity_weights`] for the tight-binding chain but `O(N)`;
/// used inside the integrator loop.
pub(crate) fn reflection_parity_weights(m: &ArrayView2<C64>) -> (f64, f64) {
    let n = m.nrows();
    let tr: f64 = (0..n).map(|i| m[[i, i]].re).sum();
    let refl: f64 = (0..n).map(|i| m[[i, n - 1 - i]].re).sum();
    (0.5 * (tr - refl), 0.5 * (tr + refl))
}
