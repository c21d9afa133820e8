// Copyright 2026 The qtraj Authors
// SPDX-License-Identifier: Apache-2.0

//! Conditioned evolution under continuous homodyne monitoring.
//!
//! The state obeys the Itô equation
//!
//! ```text
//! dρ = −i[H,ρ] dt + k 𝒟[O]ρ dt + √(2kμ) ℋ[O]ρ dW
//! 𝒟[O]ρ = 2OρO† − {O†O, ρ}
//! ℋ[O]ρ = Oρ + ρO† − ⟨O + O†⟩ρ
//! ```
//!
//! and each time step emits a record increment `λ = ⟨O⟩ dt + dW/√(8k)`,
//! where `dW ~ Normal(0, dt)`. Steps are either Euler–Maruyama or a
//! positivity-preserving Kraus form (see [`Scheme`]), followed by trace
//! renormalization and re-Hermitization.
//!
//! Random numbers come from one ChaCha8 stream per trajectory: the master
//! seed selects the key and the trajectory index selects the stream, so every
//! `dW` is a pure function of `(seed, index, step)`.

use std::io::Write;

use ndarray::{Array2, ArrayView2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lattice::{site_projector, LatticeSpec, Operator};
use crate::linalg::{anticommutator, c, dagger, hermitize, trace, C64, I, ZERO};
use crate::states::{purity_of, reflection_parity_weights, DensityMatrix};

/// Monitored observable with measurement strength `k` and detector
/// efficiency `μ`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeConfig {
    observable: Operator,
    strength: f64,
    efficiency: f64,
}

impl ProbeConfig {
    pub fn new(observable: Operator, strength: f64) -> Result<Self> {
        observable.require_hermitian()?;
        if !strength.is_finite() || strength < 0.0 {
            return Err(Error::InvalidParameter(format!("measurement strength {strength} must be finite and ≥ 0")));
        }
        Ok(Self { observable, strength, efficiency: 1.0 })
    }

    /// Probe of the total population on the given 1-based sites.
    pub fn on_sites(spec: &LatticeSpec, sites: &[usize], strength: f64) -> Result<Self> {
        Self::new(site_projector(spec, sites)?, strength)
    }

    pub fn with_efficiency(mut self, efficiency: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&efficiency) {
            return Err(Error::InvalidParameter(format!("efficiency {efficiency} outside [0, 1]")));
        }
        self.efficiency = efficiency;
        Ok(self)
    }

    pub fn observable(&self) -> &Operator {
        &self.observable
    }

    pub fn strength(&self) -> f64 {
        self.strength
    }

    pub fn efficiency(&self) -> f64 {
        self.efficiency
    }
}

/// `0.001 / max(J, k)`.
pub fn default_dt(coupling: f64, strength: f64) -> f64 {
    1e-3 / coupling.abs().max(strength)
}

/// Largest accepted step without an explicit override: `0.01 / max(J, k)`.
pub fn dt_guard(coupling: f64, strength: f64) -> f64 {
    1e-2 / coupling.abs().max(strength)
}

/// Stochastic integration scheme.
///
/// `EulerMaruyama` adds the drift and diffusion increments to ρ directly. It
/// is not positivity preserving: at `k = J`, `dt = 1e-3/J` the state leaves
/// the physical set by a few percent in purity over `t = 20/J`.
///
/// `Kraus` (the default) applies `ρ → MρM†/tr[MρM†]` with
/// `M = I − (iH + ½L†L)dt + L dy + ½L²(dy² − dt)`, `L = √(2k) O` and
/// `dy = ⟨L + L†⟩dt + dW`. It agrees with the Itô equation to first order,
/// keeps ρ positive, and maps pure states to pure states.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    EulerMaruyama,
    #[default]
    Kraus,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct IntegrationConfig {
    pub dt: f64,
    pub t_final: f64,
    pub seed: u64,
    /// Divide by the trace and symmetrize after every step.
    pub renormalize_every_step: bool,
    /// Accept `dt` above [`dt_guard`].
    pub allow_large_dt: bool,
    /// Diagnostics (and ensemble-averaged states) are stored every this many steps.
    pub sample_every: usize,
    pub scheme: Scheme,
}

impl IntegrationConfig {
    pub fn new(dt: f64, t_final: f64, seed: u64) -> Result<Self> {
        let cfg = Self { dt, t_final, seed, renormalize_every_step: true, allow_large_dt: false, sample_every: 1, scheme: Scheme::default() };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_scheme(mut self, scheme: Scheme) -> Self {
        self.scheme = scheme;
        self
    }

    pub fn with_sample_every(mut self, stride: usize) -> Self {
        self.sample_every = stride.max(1);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::InvalidParameter(format!("dt = {} must be positive", self.dt)));
        }
        if !(self.t_final >= self.dt) || !self.t_final.is_finite() {
            return Err(Error::InvalidParameter(format!("t_final = {} must be at least dt", self.t_final)));
        }
        if self.sample_every == 0 {
            return Err(Error::InvalidParameter("sample_every must be ≥ 1".into()));
        }
        Ok(())
    }

    /// Checks `dt ≤ 0.01/max(J, k)` unless the override is set.
    pub fn check_guard(&self, coupling: f64, strength: f64) -> Result<()> {
        let guard = dt_guard(coupling, strength);
        if !self.allow_large_dt && self.dt > guard * (1.0 + 1e-12) {
            return Err(Error::InvalidParameter(format!(
                "dt = {} exceeds the guard 0.01/max(J, k) = {guard}; set allow_large_dt to override",
                self.dt
            )));
        }
        Ok(())
    }

    pub fn n_steps(&self) -> usize {
        (self.t_final / self.dt).round() as usize
    }
}

/// Raw record increments `λ_i`, one per time step, starting at `t = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementRecord {
    dt: f64,
    samples: Vec<f64>,
    probe: ProbeConfig,
}

impl MeasurementRecord {
    pub fn new(dt: f64, samples: Vec<f64>, probe: ProbeConfig) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::InvalidParameter(format!("dt = {dt} must be positive")));
        }
        if samples.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self { dt, samples, probe })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn probe(&self) -> &ProbeConfig {
        &self.probe
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Total duration `T = len · dt`.
    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 * self.dt
    }

    /// Drops the samples before time `t`.
    pub fn skip_until(&self, t: f64) -> Self {
        let start = ((t / self.dt).round() as usize).min(self.samples.len());
        Self { dt: self.dt, samples: self.samples[start..].to_vec(), probe: self.probe.clone() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryResult {
    pub index: usize,
    pub seed: u64,
    pub times: Vec<f64>,
    pub record: MeasurementRecord,
    /// `site_populations[s][n-1]` is `p_n` at `times[s]`.
    pub site_populations: Vec<Vec<f64>>,
    /// `(p_od, p_ev)` at each sampled time.
    pub parity_weights: Vec<(f64, f64)>,
    pub purity: Vec<f64>,
    pub final_state: DensityMatrix,
}

impl TrajectoryResult {
    /// Writes `t,lambda,p_site_1..p_site_N,p_od,p_ev,purity`.
    ///
    /// `lambda` on each row is the record integrated since the previous row
    /// (zero on the first row), so the column sums to the full record.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let n = self.final_state.dim();
        write!(out, "t,lambda")?;
        for site in 1..=n {
            write!(out, ",p_site_{site}")?;
        }
        writeln!(out, ",p_od,p_ev,purity")?;
        let dt = self.record.dt();
        let mut prev_step = 0usize;
        for (s, t) in self.times.iter().enumerate() {
            let step = (t / dt).round() as usize;
            let lambda: f64 = self.record.samples()[prev_step..step].iter().sum();
            prev_step = step;
            write!(out, "{t},{lambda}")?;
            for p in &self.site_populations[s] {
                write!(out, ",{p}")?;
            }
            let (od, ev) = self.parity_weights[s];
            writeln!(out, ",{od},{ev},{}", self.purity[s])?;
        }
        Ok(())
    }
}

/// `2OρO† − {O†O, ρ}`.
pub fn dissipator(o: &Operator, rho: &ArrayView2<C64>) -> Result<Array2<C64>> {
    o.require_dim(rho.nrows())?;
    let om = o.matrix();
    let od = dagger(&om.view());
    let odo = od.dot(om);
    Ok(om.dot(rho).dot(&od) * c(2.0) - anticommutator(&odo.view(), rho))
}

/// `Oρ + ρO† − ⟨O + O†⟩ρ`.
pub fn innovation(o: &Operator, rho: &ArrayView2<C64>) -> Result<Array2<C64>> {
    o.require_dim(rho.nrows())?;
    let om = o.matrix();
    let od = dagger(&om.view());
    let mean = crate::linalg::trace_product(&(om + &od).view(), rho).re;
    Ok(om.dot(rho) + rho.dot(&od) - rho.mapv(|z| z * mean))
}

fn check_trace(m: &mut Array2<C64>, renormalize: bool) -> Result<()> {
    let tr = trace(&m.view()).re;
    if !tr.is_finite() || tr < 1e-6 {
        return Err(Error::TraceCollapse(tr));
    }
    if renormalize {
        m.mapv_inplace(|z| z / tr);
        hermitize(m);
    }
    Ok(())
}

/// One Euler–Maruyama step of the conditioned master equation, evaluated
/// with dense matrix products. Returns the next state and the record
/// increment `λ = ⟨O⟩_ρ dt + dW/√(8k)` (computed from the state before the step).
///
/// Rejects `k = 0`; unmonitored evolution goes through
/// [`crate::liouville::lindblad_propagate`].
pub fn sme_step(
    rho: &DensityMatrix,
    h: &Operator,
    probe: &ProbeConfig,
    dt: f64,
    dw: f64,
    renormalize: bool,
) -> Result<(DensityMatrix, f64)> {
    sme_step_with(rho, h, probe, dt, dw, renormalize, Scheme::EulerMaruyama)
}

/// [`sme_step`] with a choice of scheme. The Kraus form always divides by
/// the trace; `renormalize` then only controls re-Hermitization.
pub fn sme_step_with(
    rho: &DensityMatrix,
    h: &Operator,
    probe: &ProbeConfig,
    dt: f64,
    dw: f64,
    renormalize: bool,
    scheme: Scheme,
) -> Result<(DensityMatrix, f64)> {
    let k = probe.strength();
    if k <= 0.0 {
        return Err(Error::InvalidParameter("k = 0 produces no record; use unmonitored propagation".into()));
    }
    if !dw.is_finite() {
        return Err(Error::NonFinite);
    }
    h.require_dim(rho.dim())?;
    let r = rho.view();
    let o = probe.observable();
    let mean_o = crate::linalg::trace_product(&o.matrix().view(), &r).re;
    let lambda = mean_o * dt + dw / (8.0 * k).sqrt();

    let mut next = match scheme {
        Scheme::EulerMaruyama => {
            let hm = h.matrix();
            let comm = hm.dot(&r) - r.dot(hm);
            let back_action = (2.0 * k * probe.efficiency()).sqrt() * dw;
            &r + &(comm * (-I * dt)) + &(dissipator(o, &r)? * c(k * dt)) + &(innovation(o, &r)? * c(back_action))
        }
        Scheme::Kraus => {
            if probe.efficiency() != 1.0 {
                return Err(Error::InvalidParameter("the Kraus step assumes unit efficiency".into()));
            }
            let m = kraus_operator(h, probe, &r, dt, dw);
            m.dot(&r).dot(&dagger(&m.view()))
        }
    };
    let renormalize = renormalize || scheme == Scheme::Kraus;
    check_trace(&mut next, renormalize)?;
    Ok((DensityMatrix::new_unchecked(next)?, lambda))
}

/// `M = I − (iH + ½L†L) dt + L dy + ½L² (dy² − dt)` with `L = √(2k) O` and
/// `dy = ⟨L + L†⟩ dt + dW`.
fn kraus_operator(h: &Operator, probe: &ProbeConfig, rho: &ArrayView2<C64>, dt: f64, dw: f64) -> Array2<C64> {
    let k = probe.strength();
    let o = probe.observable().matrix();
    let od = dagger(&o.view());
    let mean_sum = crate::linalg::trace_product(&(o + &od).view(), rho).re;
    let dy = (2.0 * k).sqrt() * mean_sum * dt + dw;
    let n = o.nrows();
    let mut m = crate::linalg::identity(n) - h.matrix().mapv(|z| z * I * dt);
    m -= &od.dot(o).mapv(|z| z * (k * dt));
    m += &o.mapv(|z| z * ((2.0 * k).sqrt() * dy));
    m += &o.dot(o).mapv(|z| z * (k * (dy * dy - dt)));
    m
}

enum ObservableForm {
    Diagonal(Vec<f64>),
    Dense,
}

/// Structure-aware form of [`sme_step_with`]: the Hamiltonian is applied
/// through its non-zero entries and a diagonal observable acts entry-wise,
/// giving `O(N²)` work per step for the tight-binding chain with site probes.
struct StepKernel {
    n: usize,
    hops: Vec<(usize, usize, C64)>,
    h: Operator,
    probe: ProbeConfig,
    observable: ObservableForm,
    scheme: Scheme,
    renormalize: bool,
}

impl StepKernel {
    fn new(h: &Operator, probe: &ProbeConfig, renormalize: bool, scheme: Scheme) -> Self {
        let hops = h
            .matrix()
            .indexed_iter()
            .filter(|(_, z)| **z != ZERO)
            .map(|((i, j), z)| (i, j, *z))
            .collect();
        let observable = match probe.observable().real_diagonal() {
            Some(d) => ObservableForm::Diagonal(d),
            None => ObservableForm::Dense,
        };
        Self { n: h.dim(), hops, h: h.clone(), probe: probe.clone(), observable, scheme, renormalize }
    }

    /// Advances `rho` in place and returns the record increment.
    fn step(&self, rho: &mut Array2<C64>, scratch: &mut Array2<C64>, dt: f64, dw: f64) -> Result<f64> {
        let d = match &self.observable {
            ObservableForm::Diagonal(d) => d,
            ObservableForm::Dense => {
                let current = DensityMatrix::new_unchecked(std::mem::take(rho))?;
                let (next, lambda) =
                    sme_step_with(&current, &self.h, &self.probe, dt, dw, self.renormalize, self.scheme)?;
                *rho = next.into_matrix().as_standard_layout().into_owned();
                return Ok(lambda);
            }
        };
        let n = self.n;
        let k = self.probe.strength();
        let mean: f64 = d.iter().enumerate().map(|(i, di)| di * rho[[i, i]].re).sum();
        let lambda = mean * dt + dw / (8.0 * k).sqrt();

        match self.scheme {
            Scheme::EulerMaruyama => {
                // scratch = −i dt [H, ρ]
                scratch.fill(ZERO);
                let r = rho.as_slice().expect("standard layout");
                let s = scratch.as_slice_mut().expect("standard layout");
                for &(a, m, h) in &self.hops {
                    let hdt = -I * h * dt;
                    for (x, y) in s[a * n..(a + 1) * n].iter_mut().zip(&r[m * n..(m + 1) * n]) {
                        *x += hdt * y;
                    }
                    for row in 0..n {
                        s[row * n + m] -= r[row * n + a] * hdt;
                    }
                }
                let b = (2.0 * k * self.probe.efficiency()).sqrt() * dw;
                let r = rho.as_slice_mut().expect("standard layout");
                for a in 0..n {
                    for col in 0..n {
                        let diff = d[a] - d[col];
                        let factor = 1.0 - k * dt * diff * diff + b * (d[a] + d[col] - 2.0 * mean);
                        let idx = a * n + col;
                        r[idx] = r[idx] * factor + s[idx];
                    }
                }
            }
            Scheme::Kraus => {
                // M = D − i dt H with D diagonal; ρ' = (Mρ) M† = Y D + i dt Y H.
                let dy = 2.0 * (2.0 * k).sqrt() * mean * dt + dw;
                let diag: Vec<f64> = d
                    .iter()
                    .map(|&x| 1.0 - k * x * x * dt + (2.0 * k).sqrt() * x * dy + k * x * x * (dy * dy - dt))
                    .collect();
                {
                    let r = rho.as_slice().expect("standard layout");
                    let y = scratch.as_slice_mut().expect("standard layout");
                    for a in 0..n {
                        for col in 0..n {
                            y[a * n + col] = r[a * n + col] * diag[a];
                        }
                    }
                    for &(a, m, h) in &self.hops {
                        let hdt = -I * h * dt;
                        for col in 0..n {
                            y[a * n + col] += hdt * r[m * n + col];
                        }
                    }
                }
                let y = scratch.as_slice().expect("standard layout");
                let r = rho.as_slice_mut().expect("standard layout");
                for a in 0..n {
                    for col in 0..n {
                        r[a * n + col] = y[a * n + col] * diag[col];
                    }
                }
                for &(m, col, h) in &self.hops {
                    let hdt = I * h * dt;
                    for a in 0..n {
                        r[a * n + col] += y[a * n + m] * hdt;
                    }
                }
            }
        }
        check_trace(rho, self.renormalize || self.scheme == Scheme::Kraus)?;
        Ok(lambda)
    }
}

/// The ChaCha8 stream for trajectory `index` under master seed `seed`.
pub fn trajectory_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

fn check_run(spec: &LatticeSpec, initial: &DensityMatrix, probe: &ProbeConfig, integ: &IntegrationConfig) -> Result<()> {
    integ.validate()?;
    if initial.dim() != spec.n_sites() {
        return Err(Error::DimensionMismatch { expected: spec.n_sites(), found: initial.dim() });
    }
    probe.observable().require_dim(spec.n_sites())?;
    if probe.strength() <= 0.0 {
        return Err(Error::InvalidParameter("k = 0 produces no record; use unmonitored propagation".into()));
    }
    if probe.efficiency() != 1.0 {
        return Err(Error::InvalidParameter("only unit detector efficiency is simulated".into()));
    }
    integ.check_guard(spec.coupling(), probe.strength())
}

fn run_trajectory(
    spec: &LatticeSpec,
    initial: &DensityMatrix,
    probe: &ProbeConfig,
    integ: &IntegrationConfig,
    index: usize,
    mut snapshots: Option<&mut Vec<Array2<C64>>>,
) -> Result<TrajectoryResult> {
    let h = crate::lattice::build_hamiltonian(spec);
    let kernel = StepKernel::new(&h, probe, integ.renormalize_every_step, integ.scheme);
    let mut rng = trajectory_rng(integ.seed, index);
    let n_steps = integ.n_steps();
    let stride = integ.sample_every;
    let sqrt_dt = integ.dt.sqrt();

    let mut rho = initial.matrix().as_standard_layout().into_owned();
    let mut scratch = Array2::zeros(rho.raw_dim());
    let mut samples = Vec::with_capacity(n_steps);
    let capacity = n_steps / stride + 2;
    let mut times = Vec::with_capacity(capacity);
    let mut pops = Vec::with_capacity(capacity);
    let mut parity = Vec::with_capacity(capacity);
    let mut purity = Vec::with_capacity(capacity);

    let mut observe = |step: usize, rho: &Array2<C64>| {
        times.push(step as f64 * integ.dt);
        pops.push(rho.diag().iter().map(|z| z.re).collect::<Vec<_>>());
        parity.push(reflection_parity_weights(&rho.view()));
        purity.push(purity_of(&rho.view()));
        if let Some(buf) = snapshots.as_deref_mut() {
            buf.push(rho.clone());
        }
    };

    observe(0, &rho);
    for step in 1..=n_steps {
        let z: f64 = StandardNormal.sample(&mut rng);
        let lambda = kernel.step(&mut rho, &mut scratch, integ.dt, z * sqrt_dt)?;
        samples.push(lambda);
        if step % stride == 0 || step == n_steps {
            observe(step, &rho);
        }
    }

    Ok(TrajectoryResult {
        index,
        seed: integ.seed,
        times,
        record: MeasurementRecord::new(integ.dt, samples, probe.clone())?,
        site_populations: pops,
        parity_weights: parity,
        purity,
        final_state: DensityMatrix::new_unchecked(rho)?,
    })
}

/// Integrates one conditioned trajectory with Gaussian increments drawn
/// from stream 0 of `integ.seed`.
pub fn simulate_trajectory(
    spec: &LatticeSpec,
    initial: &DensityMatrix,
    probe: &ProbeConfig,
    integ: &IntegrationConfig,
) -> Result<TrajectoryResult> {
    check_run(spec, initial, probe, integ)?;
    run_trajectory(spec, initial, probe, integ, 0, None)
}

/// Trajectory `index` of an ensemble; identical to the `index`-th entry of
/// [`simulate_ensemble`].
pub fn simulate_indexed_trajectory(
    spec: &LatticeSpec,
    initial: &DensityMatrix,
    probe: &ProbeConfig,
    integ: &IntegrationConfig,
    index: usize,
) -> Result<TrajectoryResult> {
    check_run(spec, initial, probe, integ)?;
    run_trajectory(spec, initial, probe, integ, index, None)
}

#[derive(Debug, Clone)]
pub struct EnsembleResult {
    pub trajectories: Vec<TrajectoryResult>,
    /// Times of the averaged states (the diagnostic sampling grid).
    pub times: Vec<f64>,
    /// Ensemble-averaged `ρ̄(t)`.
    pub mean_states: Vec<DensityMatrix>,
}

/// Runs `n_traj` trajectories; trajectory `i` uses stream `i` of
/// `integ.seed`. Trajectories run on the current rayon pool in batches and
/// the mean state is accumulated in trajectory-index order, so the output
/// does not depend on the number of threads.
pub fn simulate_ensemble(
    spec: &LatticeSpec,
    initial: &DensityMatrix,
    probe: &ProbeConfig,
    integ: &IntegrationConfig,
    n_traj: usize,
) -> Result<EnsembleResult> {
    check_run(spec, initial, probe, integ)?;
    if n_traj == 0 {
        return Err(Error::InvalidParameter("n_traj must be at least 1".into()));
    }
    let batch = (rayon::current_num_threads() * 2).max(1);
    let mut trajectories = Vec::with_capacity(n_traj);
    let mut sums: Vec<Array2<C64>> = Vec::new();

    for start in (0..n_traj).step_by(batch) {
        let end = (start + batch).min(n_traj);
        let results: Vec<Result<(TrajectoryResult, Vec<Array2<C64>>)>> = (start..end)
            .into_par_iter()
            .map(|i| {
                let mut snaps = Vec::new();
                let traj = run_trajectory(spec, initial, probe, integ, i, Some(&mut snaps))?;
                Ok((traj, snaps))
            })
            .collect();
        for res in results {
            let (traj, snaps) = res?;
            if sums.is_empty() {
                sums = snaps;
            } else {
                for (acc, s) in sums.iter_mut().zip(&snaps) {
                    *acc += s;
                }
            }
            trajectories.push(traj);
        }
    }

    let times = trajectories[0].times.clone();
    let inv = 1.0 / n_traj as f64;
    let mean_states = sums
        .into_iter()
        .map(|m| DensityMatrix::new_unchecked(m.mapv(|z| z * inv)))
        .collect::<Result<Vec<_>>>()?;
    Ok(EnsembleResult { trajectories, times, mean_states })
}
