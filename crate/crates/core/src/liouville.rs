// Copyright 2026 The qtraj Authors
// SPDX-License-Identifier: Apache-2.0

//! The unconditioned generator `𝓛ρ = −i[H,ρ] + k𝒟[O]ρ` and everything
//! derived from it: propagation, steady states, eigenspectra, resolvent
//! spectra, weak-probe line shapes, non-Hermitian effective modes and
//! Zeno-regime rates.

use std::io::Write;

use ndarray::{s, Array1, Array2, Axis};
use ndarray_linalg::{Eig, Factorize, Solve, SVD};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lattice::{EigenSystem, LatticeSpec, Operator};
use crate::linalg::{c, dagger, expm, hermitize, identity, kron, trace, C64, I, ZERO};
use crate::signal::{SpectrumEstimate, SpectrumKind, SpectrumMeta};
use crate::sme::ProbeConfig;
use crate::states::{devectorize, vectorize, DensityMatrix, Superoperator};

#[derive(Debug, Clone)]
pub struct LiouvilleOperator {
    generator: Superoperator,
    h: Operator,
    probe: ProbeConfig,
}

impl LiouvilleOperator {
    pub fn generator(&self) -> &Superoperator {
        &self.generator
    }

    pub fn hamiltonian(&self) -> &Operator {
        &self.h
    }

    pub fn probe(&self) -> &ProbeConfig {
        &self.probe
    }

    pub fn hilbert_dim(&self) -> usize {
        self.h.dim()
    }

    pub fn apply(&self, rho: &Array2<C64>) -> Result<Array2<C64>> {
        self.generator.apply(&rho.view())
    }

    /// `exp(𝓛 t)` as a superoperator matrix.
    pub fn propagator(&self, t: f64) -> Result<Array2<C64>> {
        expm(&self.generator.matrix().mapv(|z| z * t))
    }
}

/// `−i[H,ρ] + k(2OρO† − {O†O,ρ})` evaluated with matrix products.
pub fn lindblad_rhs(h: &Operator, probe: &ProbeConfig, rho: &Array2<C64>) -> Result<Array2<C64>> {
    let comm = h.matrix().dot(rho) - rho.dot(h.matrix());
    let dis = crate::sme::dissipator(probe.observable(), &rho.view())?;
    Ok(comm * (-I) + dis * c(probe.strength()))
}

/// Dense `N²×N²` generator in the column-stacking convention.
pub fn build_liouvillian(h: &Operator, probe: &ProbeConfig) -> Result<LiouvilleOperator> {
    h.require_hermitian()?;
    let n = h.dim();
    let o = probe.observable();
    o.require_dim(n)?;
    let id = identity(n);
    let hm = h.matrix().view();
    let om = o.matrix().view();
    let odo = dagger(&om).dot(&om);

    let coherent = (kron(&id.view(), &hm) - kron(&hm.t(), &id.view())) * (-I);
    let jump = kron(&om.mapv(|z| z.conj()).view(), &om) * c(2.0);
    let loss = kron(&id.view(), &odo.view()) + kron(&odo.t(), &id.view());
    let generator = coherent + (jump - loss) * c(probe.strength());
    let generator = Superoperator::new(generator)?.with_trace_preservation()?;
    Ok(LiouvilleOperator { generator, h: h.clone(), probe: probe.clone() })
}

fn finish_state(mut m: Array2<C64>) -> Result<DensityMatrix> {
    hermitize(&mut m);
    let tr = trace(&m.view()).re;
    m.mapv_inplace(|z| z / tr);
    DensityMatrix::new_unchecked(m)
}

/// `exp(𝓛t) ρ₀`, re-Hermitized and trace-normalized.
pub fn lindblad_propagate(l: &LiouvilleOperator, rho0: &DensityMatrix, t: f64) -> Result<DensityMatrix> {
    if !(t >= 0.0) {
        return Err(Error::InvalidParameter(format!("propagation time {t} must be ≥ 0")));
    }
    if t == 0.0 {
        return Ok(rho0.clone());
    }
    let v = l.propagator(t)?.dot(&vectorize(&rho0.view()));
    finish_state(devectorize(&v)?)
}

/// States at `t = 0, dt, …, n_steps·dt` from one propagator.
pub fn lindblad_series(l: &LiouvilleOperator, rho0: &DensityMatrix, dt: f64, n_steps: usize) -> Result<Vec<DensityMatrix>> {
    let prop = l.propagator(dt)?;
    let mut v = vectorize(&rho0.view());
    let mut out = Vec::with_capacity(n_steps + 1);
    out.push(rho0.clone());
    for _ in 0..n_steps {
        v = prop.dot(&v);
        out.push(finish_state(devectorize(&v)?)?);
    }
    Ok(out)
}

struct Kernel {
    right: Array2<C64>,
    left: Array2<C64>,
}

fn kernel(l: &LiouvilleOperator) -> Result<Kernel> {
    let a = l.generator.matrix();
    let (u, sv, vt) = a.svd(true, true)?;
    let (u, vt) = (u.expect("requested"), vt.expect("requested"));
    let smax = sv[0].max(1.0);
    let dim = sv.iter().filter(|&&x| x < 1e-9 * smax).count();
    let m = a.nrows();
    let right = dagger(&vt.slice(s![m - dim.., ..]));
    let left = u.slice(s![.., m - dim..]).to_owned();
    Ok(Kernel { right, left })
}

/// Dimension of the generator's null space.
pub fn kernel_dimension(l: &LiouvilleOperator) -> Result<usize> {
    Ok(kernel(l)?.right.ncols())
}

/// Stationary state of `𝓛`.
///
/// With a one-dimensional kernel the answer is unique and `rho0` is ignored.
/// Otherwise `rho0` is mapped to its long-time average by the spectral
/// projector onto the kernel, `R (Lᴴ R)⁻¹ Lᴴ`, built from the left and right
/// null vectors; this respects every conserved quantity of `rho0`.
pub fn steady_state(l: &LiouvilleOperator, rho0: Option<&DensityMatrix>) -> Result<DensityMatrix> {
    let ker = kernel(l)?;
    let dim = ker.right.ncols();
    let v = match (dim, rho0) {
        (0, _) => return Err(Error::InvalidParameter("generator has no stationary state".into())),
        (1, _) => ker.right.column(0).to_owned(),
        (d, None) => return Err(Error::DegenerateSteadyState(d)),
        (_, Some(rho0)) => {
            if rho0.dim() != l.hilbert_dim() {
                return Err(Error::DimensionMismatch { expected: l.hilbert_dim(), found: rho0.dim() });
            }
            let lh = dagger(&ker.left.view());
            let gram = lh.dot(&ker.right);
            let coeffs = gram.solve(&lh.dot(&vectorize(&rho0.view())))?;
            ker.right.dot(&coeffs)
        }
    };
    finish_state(devectorize(&v)?)
}

#[derive(Debug, Clone)]
pub struct LiouvilleSpectrum {
    pub eigenvalues: Vec<C64>,
    /// Column `i` is the vectorized right eigenmatrix of `eigenvalues[i]`,
    /// normalized in Hilbert–Schmidt norm.
    pub modes: Array2<C64>,
}

impl LiouvilleSpectrum {
    /// Number of eigenvalues with `|Re λ − re| < tol`.
    pub fn count_near_real_part(&self, re: f64, tol: f64) -> usize {
        self.eigenvalues.iter().filter(|z| (z.re - re).abs() < tol).count()
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "re,im")?;
        for z in &self.eigenvalues {
            writeln!(out, "{},{}", z.re, z.im)?;
        }
        Ok(())
    }
}

pub fn liouvillian_spectrum(l: &LiouvilleOperator) -> Result<LiouvilleSpectrum> {
    let (vals, mut vecs) = l.generator.matrix().eig()?;
    for mut col in vecs.axis_iter_mut(Axis(1)) {
        let norm = col.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        col.mapv_inplace(|z| z / norm);
    }
    Ok(LiouvilleSpectrum { eigenvalues: vals.to_vec(), modes: vecs })
}

fn check_stationary(l: &LiouvilleOperator, rho_ss: &DensityMatrix) -> Result<()> {
    let residual = crate::linalg::frobenius(&l.apply(rho_ss.matrix())?.view());
    if residual > 1e-8 {
        return Err(Error::NotStationary(residual));
    }
    Ok(())
}

/// Default resolvent grid: 400 points on `[0, 1.2·max Bohr frequency]`.
pub fn default_omega_grid(eigensystem: &EigenSystem) -> Vec<f64> {
    let e = eigensystem.energies();
    let span = e.iter().copied().fold(f64::NEG_INFINITY, f64::max) - e.iter().copied().fold(f64::INFINITY, f64::min);
    let top = if span > 0.0 { 1.2 * span } else { 1.0 };
    crate::signal::linear_grid(0.0, top, 400)
}

/// Fluctuation spectrum of the monitored observable,
///
/// ```text
/// S(ω) = (1/4π) Re ∫₀^∞ e^{−iωτ} tr[O e^{𝓛τ} x] dτ = (1/4π) Re tr[O (iω − 𝓛)⁻¹ x]
/// x = {O, ρ_ss} − 2⟨O⟩_ss ρ_ss
/// ```
///
/// The stationary part of the source is removed, so the solve is regular at
/// `ω = 0` whenever the kernel of `𝓛` is reached only through `ρ_ss`.
/// Frequencies that hit a purely imaginary eigenvalue of a dark mode are
/// handled with a truncated pseudo-inverse, provided the source has no
/// component along the singular direction.
pub fn steady_state_spectrum(
    l: &LiouvilleOperator,
    observable: &Operator,
    rho_ss: &DensityMatrix,
    omega_grid: &[f64],
) -> Result<SpectrumEstimate> {
    let n = l.hilbert_dim();
    observable.require_dim(n)?;
    check_stationary(l, rho_ss)?;
    crate::signal::check_grid(omega_grid)?;
    let om = observable.matrix();
    let mean = crate::linalg::trace_product(&om.view(), &rho_ss.view()).re;
    let source = crate::linalg::anticommutator(&om.view(), &rho_ss.view()) - rho_ss.matrix().mapv(|z| z * (2.0 * mean));
    let x = vectorize(&source.view());
    let gen = l.generator.matrix();

    let values: Vec<f64> = omega_grid
        .par_iter()
        .map(|&w| -> Result<f64> {
            let mut a = gen.mapv(|z| -z);
            for d in 0..a.nrows() {
                a[[d, d]] += I * w;
            }
            let y = resolvent_solve(a, &x, w)?;
            let mut tr = ZERO;
            for i in 0..n {
                for j in 0..n {
                    tr += om[[i, j]] * y[j + i * n];
                }
            }
            Ok(tr.re / (4.0 * std::f64::consts::PI))
        })
        .collect::<Result<_>>()?;

    Ok(SpectrumEstimate::new(
        omega_grid.to_vec(),
        values,
        SpectrumKind::SteadyState,
        SpectrumMeta { strength: l.probe.strength(), ..Default::default() },
    )?)
}

fn resolvent_solve(a: Array2<C64>, x: &Array1<C64>, omega: f64) -> Result<Array1<C64>> {
    use ndarray_linalg::ReciprocalConditionNum;
    if let Ok(f) = a.factorize() {
        if f.rcond()? > 1e-12 {
            return Ok(f.solve(x)?);
        }
    }
    // `iω` is an eigenvalue of 𝓛 (always at ω = 0, and at the frequencies of
    // dark coherences). The source must have no component on that
    // eigenspace; the answer is then the solution inside the complementary
    // spectral subspace, i.e. the minimum-norm solution with the spectral
    // projection `R (Uᴴ R)⁻¹ Uᴴ` onto the eigenspace removed.
    let (u, sv, vt) = a.svd(true, true)?;
    let (u, vt) = (u.expect("requested"), vt.expect("requested"));
    let cutoff = 1e-9 * sv[0].max(1.0);
    let rank = sv.iter().filter(|&&x| x > cutoff).count();
    let m = x.len();
    let xnorm = x.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
    let left = u.slice(s![.., rank..]).to_owned();
    let left_h = dagger(&left.view());
    if left_h.dot(x).iter().any(|z| z.norm() > 1e-8 * xnorm) {
        return Err(Error::SingularResolvent(omega));
    }
    let coeff = dagger(&u.slice(s![.., ..rank])).dot(x);
    let mut y = Array1::zeros(m);
    for i in 0..rank {
        let scale = coeff[i] / sv[i];
        y.zip_mut_with(&vt.row(i), |yy, v| *yy += scale * v.conj());
    }
    if rank < m {
        let right = dagger(&vt.slice(s![rank.., ..]));
        let gram = left_h.dot(&right);
        let c = gram.solve(&left_h.dot(&y)).map_err(|_| Error::SingularResolvent(omega))?;
        y -= &right.dot(&c);
    }
    Ok(y)
}

/// Population of eigenstate `i` on the probed sites, `⟨w_i|Π|w_i⟩`.
fn probed_weight(eigensystem: &EigenSystem, sites0: &[usize], i: usize) -> f64 {
    sites0.iter().map(|&n| eigensystem.states()[[n, i]].norm_sqr()).sum()
}

/// Weak-probe line width `Γ_ij = k(p_i + p_j − 2p_i p_j)` for 1-based eigen-indices.
pub fn perturbative_rate(eigensystem: &EigenSystem, sites: &[usize], strength: f64, i: usize, j: usize) -> Result<f64> {
    let n = eigensystem.dim();
    let sites0 = zero_based(sites, n)?;
    let (i0, j0) = (check_index(i, n)?, check_index(j, n)?);
    let pi = probed_weight(eigensystem, &sites0, i0);
    let pj = probed_weight(eigensystem, &sites0, j0);
    Ok(strength * (pi + pj - 2.0 * pi * pj))
}

fn check_index(k: usize, n: usize) -> Result<usize> {
    if k == 0 || k > n {
        return Err(Error::IndexOutOfRange { index: k, n });
    }
    Ok(k - 1)
}

fn zero_based(sites: &[usize], n: usize) -> Result<Vec<usize>> {
    if sites.is_empty() {
        return Err(Error::InvalidParameter("site set must be non-empty".into()));
    }
    sites
        .iter()
        .map(|&s| if s == 0 || s > n { Err(Error::SiteOutOfRange { site: s, n_sites: n }) } else { Ok(s - 1) })
        .collect()
}

/// Sum of Lorentzians at the Bohr frequencies `ω_ij = e_i − e_j`,
///
/// ```text
/// S(ω) ∝ Σ_ij Σ_{n,m ∈ M} Γ_ij ⟨w_j|n⟩⟨m|w_i⟩ ρ_ss^{nm} / ((ω_ij − ω)² + Γ_ij²)
/// ```
///
/// which reduces to the single-site form for `M = {n}`. Only the shape is
/// determined; when `reference` is given the overall factor is the
/// least-squares match to it on the shared grid, otherwise it is 1.
/// Intended for `k ≪ J`.
pub fn perturbative_spectrum(
    eigensystem: &EigenSystem,
    sites: &[usize],
    strength: f64,
    rho_ss: &DensityMatrix,
    omega_grid: &[f64],
    reference: Option<&SpectrumEstimate>,
) -> Result<SpectrumEstimate> {
    let n = eigensystem.dim();
    let sites0 = zero_based(sites, n)?;
    if rho_ss.dim() != n {
        return Err(Error::DimensionMismatch { expected: n, found: rho_ss.dim() });
    }
    crate::signal::check_grid(omega_grid)?;
    let w = eigensystem.states();
    let e = eigensystem.energies();
    let p: Vec<f64> = (0..n).map(|i| probed_weight(eigensystem, &sites0, i)).collect();

    struct Line {
        center: f64,
        width: f64,
        amplitude: f64,
    }
    let mut lines = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let width = strength * (p[i] + p[j] - 2.0 * p[i] * p[j]);
            let mut amp = ZERO;
            for &a in &sites0 {
                for &b in &sites0 {
                    amp += w[[a, j]].conj() * w[[b, i]] * rho_ss.matrix()[[a, b]];
                }
            }
            if width > 0.0 && amp.re != 0.0 {
                lines.push(Line { center: e[i] - e[j], width, amplitude: amp.re });
            }
        }
    }

    let mut values: Vec<f64> = omega_grid
        .iter()
        .map(|&om| lines.iter().map(|l| l.width * l.amplitude / ((l.center - om).powi(2) + l.width * l.width)).sum())
        .collect();

    let mut meta = SpectrumMeta { strength, ..Default::default() };
    if let Some(r) = reference {
        if r.omegas() != omega_grid {
            return Err(Error::GridMismatch);
        }
        let num: f64 = values.iter().zip(r.values()).map(|(a, b)| a * b).sum();
        let den: f64 = values.iter().map(|a| a * a).sum();
        let scale = if den > 0.0 { num / den } else { 0.0 };
        values.iter_mut().for_each(|v| *v *= scale);
        meta.scale = Some(scale);
    }
    SpectrumEstimate::new(omega_grid.to_vec(), values, SpectrumKind::Perturbative, meta)
}

/// Eigenmodes of `H − ikO`.
#[derive(Debug, Clone)]
pub struct EffectiveModes {
    /// Complex eigenvalues `λ̃_l`, sorted by increasing `|Im λ̃|`.
    pub values: Vec<C64>,
    /// Column `l` is `|w̃_l⟩`, unit 2-norm.
    pub states: Array2<C64>,
}

impl EffectiveModes {
    /// `|⟨site|w̃_l⟩|²` for a 1-based site and 0-based mode.
    pub fn site_weight(&self, mode: usize, site: usize) -> f64 {
        self.states[[site - 1, mode]].norm_sqr()
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let n = self.states.nrows();
        write!(out, "mode,re,im")?;
        for site in 1..=n {
            write!(out, ",amp2_site_{site}")?;
        }
        writeln!(out)?;
        for (l, z) in self.values.iter().enumerate() {
            write!(out, "{},{},{}", l + 1, z.re, z.im)?;
            for site in 1..=n {
                write!(out, ",{}", self.site_weight(l, site))?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

pub fn effective_modes(h: &Operator, probe: &ProbeConfig) -> Result<EffectiveModes> {
    h.require_hermitian()?;
    probe.observable().require_dim(h.dim())?;
    let heff = h.matrix() - &probe.observable().matrix().mapv(|z| z * I * probe.strength());
    let (vals, vecs) = heff.eig()?;
    let mut order: Vec<usize> = (0..vals.len()).collect();
    order.sort_by(|&a, &b| vals[a].im.abs().total_cmp(&vals[b].im.abs()).then(vals[b].re.total_cmp(&vals[a].re)));
    let n = h.dim();
    let mut states = Array2::zeros((n, n));
    for (dst, &src) in order.iter().enumerate() {
        let col = vecs.column(src);
        let norm = col.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        for i in 0..n {
            states[[i, dst]] = col[i] / norm;
        }
    }
    Ok(EffectiveModes { values: order.iter().map(|&i| vals[i]).collect(), states })
}

/// Energy variance `⟨H²⟩ − ⟨H⟩²` of the localized state `|n⟩`, i.e. `τ₀⁻²`:
/// `2J²` in the bulk and `J²` at an edge.
pub fn short_time_variance(spec: &LatticeSpec, site: usize) -> Result<f64> {
    let idx = spec.site_index(site)?;
    let h = crate::lattice::build_hamiltonian(spec);
    let col = h.matrix().column(idx);
    let h2: f64 = col.iter().map(|z| z.norm_sqr()).sum();
    let h1 = h.matrix()[[idx, idx]].re;
    Ok(h2 - h1 * h1)
}

/// Zeno escape rate `γ = 4/(k τ₀²)` with `τ₀⁻²` the energy variance of the
/// probed site: `8J²/k` for a bulk site, `4J²/k` at an edge.
pub fn zeno_rate(spec: &LatticeSpec, probe_site: usize, strength: f64) -> Result<f64> {
    if !(strength > 0.0) {
        return Err(Error::InvalidParameter("Zeno rate needs k > 0".into()));
    }
    Ok(4.0 * short_time_variance(spec, probe_site)? / strength)
}

/// The alternative closed form `4J²/k`, independent of the probed site.
pub fn single_bond_zeno_rate(coupling: f64, strength: f64) -> f64 {
    4.0 * coupling * coupling / strength
}

/// Least-squares decay rate of `p(t) − p_∞` (log-linear fit) over the
/// leading stretch of samples where it stays above `threshold`.
pub fn fit_decay_rate(times: &[f64], values: &[f64], p_inf: f64, threshold: f64) -> Result<f64> {
    let pts: Vec<(f64, f64)> = times
        .iter()
        .zip(values)
        .take_while(|(_, &p)| p - p_inf > threshold)
        .map(|(&t, &p)| (t, (p - p_inf).ln()))
        .collect();
    if pts.len() < 3 {
        return Err(Error::TooFewPoints { needed: 3, got: pts.len() });
    }
    let m = pts.len() as f64;
    let (st, sy) = pts.iter().fold((0.0, 0.0), |(a, b), (t, y)| (a + t, b + y));
    let (mt, my) = (st / m, sy / m);
    let (num, den) = pts.iter().fold((0.0, 0.0), |(a, b), (t, y)| (a + (t - mt) * (y - my), b + (t - mt).powi(2)));
    Ok(-num / den)
}
