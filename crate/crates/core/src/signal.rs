// Copyright 2026 The qtraj Authors
// SPDX-License-Identifier: Apache-2.0

//! Spectral analysis of measurement records: periodograms, ensemble
//! averages, the shot-noise floor, peak extraction, size-scaling fits and
//! record correlation functions.

use std::io::Write;

use ndarray::Array2;
use rayon::prelude::*;
use rustfft::num_complex::Complex64 as FftC64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::Operator;
use crate::linalg::{anticommutator, expm, trace_product, C64};
use crate::liouville::LiouvilleOperator;
use crate::sme::MeasurementRecord;
use crate::states::{devectorize, vectorize, DensityMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectrumKind {
    Periodogram,
    SteadyState,
    Perturbative,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SpectrumMeta {
    pub strength: f64,
    /// Record duration `T` for periodograms.
    pub duration: Option<f64>,
    pub n_traj: usize,
    pub mean_subtracted: bool,
    /// Least-squares factor applied to a perturbative line shape.
    pub scale: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumEstimate {
    omegas: Vec<f64>,
    values: Vec<f64>,
    stderr: Option<Vec<f64>>,
    kind: SpectrumKind,
    meta: SpectrumMeta,
}

pub(crate) fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::InvalidParameter("frequency grid is empty".into()));
    }
    if grid.iter().any(|w| !w.is_finite()) {
        return Err(Error::NonFinite);
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter("grid must be strictly increasing".into()));
    }
    Ok(())
}

/// `n` equally spaced points on `[a, b]`.
pub fn linear_grid(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![a],
        _ => (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect(),
    }
}

impl SpectrumEstimate {
    pub fn new(omegas: Vec<f64>, values: Vec<f64>, kind: SpectrumKind, meta: SpectrumMeta) -> Result<Self> {
        check_grid(&omegas)?;
        if omegas.len() != values.len() {
            return Err(Error::DimensionMismatch { expected: omegas.len(), found: values.len() });
        }
        Ok(Self { omegas, values, stderr: None, kind, meta })
    }

    pub fn with_stderr(mut self, stderr: Vec<f64>) -> Result<Self> {
        if stderr.len() != self.values.len() {
            return Err(Error::DimensionMismatch { expected: self.values.len(), found: stderr.len() });
        }
        self.stderr = Some(stderr);
        Ok(self)
    }

    pub fn omegas(&self) -> &[f64] {
        &self.omegas
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn stderr(&self) -> Option<&[f64]> {
        self.stderr.as_deref()
    }

    pub fn kind(&self) -> SpectrumKind {
        self.kind
    }

    pub fn meta(&self) -> &SpectrumMeta {
        &self.meta
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Copy with a constant subtracted from every value.
    pub fn offset(&self, delta: f64) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v -= delta);
        out
    }

    /// Restriction to `lo ≤ ω ≤ hi`.
    pub fn restrict(&self, lo: f64, hi: f64) -> Result<Self> {
        let keep: Vec<usize> = (0..self.len()).filter(|&i| self.omegas[i] >= lo && self.omegas[i] <= hi).collect();
        if keep.is_empty() {
            return Err(Error::InvalidParameter(format!("no grid points in [{lo}, {hi}]")));
        }
        Ok(Self {
            omegas: keep.iter().map(|&i| self.omegas[i]).collect(),
            values: keep.iter().map(|&i| self.values[i]).collect(),
            stderr: self.stderr.as_ref().map(|s| keep.iter().map(|&i| s[i]).collect()),
            kind: self.kind,
            meta: self.meta.clone(),
        })
    }

    /// Linear interpolation onto `grid`; points outside the span are clamped.
    pub fn interpolate(&self, grid: &[f64]) -> Vec<f64> {
        grid.iter()
            .map(|&w| {
                let j = self.omegas.partition_point(|&x| x < w);
                if j == 0 {
                    self.values[0]
                } else if j == self.len() {
                    self.values[self.len() - 1]
                } else {
                    let (x0, x1) = (self.omegas[j - 1], self.omegas[j]);
                    let f = (w - x0) / (x1 - x0);
                    self.values[j - 1] * (1.0 - f) + self.values[j] * f
                }
            })
            .collect()
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        match &self.stderr {
            Some(se) => {
                writeln!(out, "omega,value,stderr")?;
                for ((w, v), e) in self.omegas.iter().zip(&self.values).zip(se) {
                    writeln!(out, "{w},{v},{e}")?;
                }
            }
            None => {
                writeln!(out, "omega,value")?;
                for (w, v) in self.omegas.iter().zip(&self.values) {
                    writeln!(out, "{w},{v}")?;
                }
            }
        }
        Ok(())
    }
}

/// Relative L2 distance `‖a − b‖ / ‖b‖` between two equal-length vectors.
pub fn relative_l2(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
    let den: f64 = b.iter().map(|y| y * y).sum();
    (num / den).sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub enum FrequencyGrid {
    /// `ω_m = 2πm/T` for `m = 0..=M/2`.
    Dft,
    /// All `M` DFT frequencies `m = 0..M`, used for Parseval checks.
    DftFull,
    /// Arbitrary strictly increasing grid, evaluated by direct summation.
    Custom(Vec<f64>),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Window {
    #[default]
    Rectangular,
    /// Hann taper rescaled to unit mean square, so a white floor is unchanged.
    Hann,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PeriodogramOptions {
    pub mean_subtract: bool,
    pub window: Window,
}

impl Default for PeriodogramOptions {
    fn default() -> Self {
        Self { mean_subtract: true, window: Window::Rectangular }
    }
}

impl PeriodogramOptions {
    pub fn raw() -> Self {
        Self { mean_subtract: false, window: Window::Rectangular }
    }
}

/// `P(ω) = |Σ_i e^{−iω t_i} λ_i|² / (2πT)` with `t_i = i·dt`, `T = M·dt`.
pub fn periodogram(record: &MeasurementRecord, grid: &FrequencyGrid, opts: PeriodogramOptions) -> Result<SpectrumEstimate> {
    if record.is_empty() {
        return Err(Error::EmptyRecord);
    }
    let m = record.len();
    let dt = record.dt();
    let t = m as f64 * dt;
    let mut x: Vec<f64> = record.samples().to_vec();
    if opts.mean_subtract {
        let mean = x.iter().sum::<f64>() / m as f64;
        x.iter_mut().for_each(|v| *v -= mean);
    }
    if opts.window == Window::Hann && m > 1 {
        let w: Vec<f64> = (0..m).map(|i| (std::f64::consts::PI * i as f64 / (m - 1) as f64).sin().powi(2)).collect();
        let rms = (w.iter().map(|v| v * v).sum::<f64>() / m as f64).sqrt();
        x.iter_mut().zip(&w).for_each(|(v, wi)| *v *= wi / rms);
    }
    let norm = 1.0 / (2.0 * std::f64::consts::PI * t);

    let (omegas, values) = match grid {
        FrequencyGrid::Dft | FrequencyGrid::DftFull => {
            let mut buf: Vec<FftC64> = x.iter().map(|&v| FftC64::new(v, 0.0)).collect();
            FftPlanner::new().plan_fft_forward(m).process(&mut buf);
            let count = if *grid == FrequencyGrid::Dft { m / 2 + 1 } else { m };
            let step = 2.0 * std::f64::consts::PI / t;
            ((0..count).map(|k| k as f64 * step).collect(), buf[..count].iter().map(|z| z.norm_sqr() * norm).collect())
        }
        FrequencyGrid::Custom(g) => {
            check_grid(g)?;
            let values = g.par_iter().map(|&w| direct_power(&x, w * dt) * norm).collect();
            (g.clone(), values)
        }
    };
    let meta = SpectrumMeta {
        strength: record.probe().strength(),
        duration: Some(t),
        n_traj: 1,
        mean_subtracted: opts.mean_subtract,
        scale: None,
    };
    SpectrumEstimate::new(omegas, values, SpectrumKind::Periodogram, meta)
}

/// `|Σ_i x_i e^{−i θ i}|²`, with the phasor refreshed periodically to bound drift.
fn direct_power(x: &[f64], theta: f64) -> f64 {
    let rot = C64::from_polar(1.0, -theta);
    let mut acc = C64::new(0.0, 0.0);
    let mut ph = C64::new(1.0, 0.0);
    for (i, &v) in x.iter().enumerate() {
        if i % 1024 == 0 {
            ph = C64::from_polar(1.0, -theta * i as f64);
        }
        acc += ph * v;
        ph *= rot;
    }
    acc.norm_sqr()
}

/// Pointwise mean, with the standard error of the mean when there are at
/// least two inputs.
pub fn average_spectra(spectra: &[SpectrumEstimate]) -> Result<SpectrumEstimate> {
    let first = spectra.first().ok_or_else(|| Error::InvalidParameter("no spectra to average".into()))?;
    if spectra.iter().any(|s| s.omegas != first.omegas || s.kind != first.kind) {
        return Err(Error::GridMismatch);
    }
    let m = spectra.len() as f64;
    let n = first.len();
    let mut mean = vec![0.0; n];
    for s in spectra {
        mean.iter_mut().zip(&s.values).for_each(|(a, v)| *a += v);
    }
    mean.iter_mut().for_each(|a| *a /= m);
    let mut meta = first.meta.clone();
    meta.n_traj = spectra.iter().map(|s| s.meta.n_traj).sum();
    let out = SpectrumEstimate::new(first.omegas.clone(), mean.clone(), first.kind, meta)?;
    if spectra.len() < 2 {
        return Ok(out);
    }
    let mut var = vec![0.0; n];
    for s in spectra {
        var.iter_mut().zip(&s.values).zip(&mean).for_each(|((a, v), mu)| *a += (v - mu).powi(2));
    }
    out.with_stderr(var.iter().map(|v| (v / (m - 1.0) / m).sqrt()).collect())
}

/// White-noise level `1/(16πk)` of a mean-subtracted record periodogram.
pub fn shot_noise_floor(k: f64) -> Result<f64> {
    if !(k > 0.0) {
        return Err(Error::InvalidParameter(format!("strength must be positive, got {k}")));
    }
    Ok(1.0 / (16.0 * std::f64::consts::PI * k))
}

/// Local noise scale against which peak prominence is measured.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PeakNoise {
    /// Median of `|v[j+1] − v[j]|` in the neighbourhood.
    #[default]
    Roughness,
    /// Median per-bin standard error in the neighbourhood; requires an
    /// estimate that carries standard errors (an ensemble average).
    StandardError,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeakOptions {
    /// Lowest admissible peak frequency; `None` means three grid steps.
    pub omega_min: Option<f64>,
    /// Required prominence in units of the local noise scale.
    pub prominence_factor: f64,
    /// Half-width of the neighbourhood used for the noise scale, as a
    /// fraction of the grid length.
    pub noise_window: f64,
    pub noise: PeakNoise,
}

impl Default for PeakOptions {
    fn default() -> Self {
        Self { omega_min: None, prominence_factor: 3.0, noise_window: 0.05, noise: PeakNoise::Roughness }
    }
}

impl PeakOptions {
    /// Significance test for ensemble-averaged periodograms: prominence above
    /// five local standard errors.
    pub fn averaged() -> Self {
        Self { prominence_factor: 5.0, noise: PeakNoise::StandardError, ..Self::default() }
    }
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Topographic prominence of the local maximum at `i`: its height above the
/// higher of the two minima found on each side before the first higher
/// point (or the grid end).
fn prominence(v: &[f64], i: usize) -> f64 {
    let base = |range: &mut dyn Iterator<Item = usize>| {
        let mut lowest = v[i];
        for j in range {
            if v[j] > v[i] {
                break;
            }
            lowest = lowest.min(v[j]);
        }
        lowest
    };
    let left = base(&mut (0..i).rev());
    let right = base(&mut (i + 1..v.len()));
    v[i] - left.max(right)
}

/// All local maxima above `omega_min` whose prominence exceeds
/// `prominence_factor` times the local noise scale (see [`PeakNoise`]).
/// Each frequency is the vertex of the parabola through the maximum and its
/// two neighbours; results are in increasing order.
pub fn spectral_peaks(spec: &SpectrumEstimate, opts: PeakOptions) -> Result<Vec<f64>> {
    let n = spec.len();
    if n < 3 {
        return Err(Error::TooFewPoints { needed: 3, got: n });
    }
    let w = &spec.omegas;
    let v = &spec.values;
    let omega_min = opts.omega_min.unwrap_or(w[0] + 3.0 * (w[1] - w[0]));
    let half = ((opts.noise_window * n as f64).ceil() as usize).max(2);
    let stderr = match opts.noise {
        PeakNoise::Roughness => None,
        PeakNoise::StandardError => Some(spec.stderr.as_deref().ok_or_else(|| {
            Error::InvalidParameter("standard-error peak noise needs an estimate with standard errors".into())
        })?),
    };
    let mut peaks = Vec::new();
    for i in 1..n - 1 {
        if w[i] < omega_min || !(v[i] > v[i - 1] && v[i] >= v[i + 1]) {
            continue;
        }
        let (lo, hi) = (i.saturating_sub(half), (i + half).min(n - 1));
        let mut scale: Vec<f64> = match stderr {
            None => (lo..hi).map(|j| (v[j + 1] - v[j]).abs()).collect(),
            Some(se) => se[lo..=hi].to_vec(),
        };
        if prominence(v, i) > opts.prominence_factor * median(&mut scale) {
            peaks.push(parabolic_vertex(w[i - 1], w[i], w[i + 1], v[i - 1], v[i], v[i + 1]));
        }
    }
    Ok(peaks)
}

/// Lowest-frequency peak accepted by [`spectral_peaks`].
pub fn dominant_peak(spec: &SpectrumEstimate, opts: PeakOptions) -> Result<f64> {
    let omega_min = match (opts.omega_min, spec.len()) {
        (Some(w), _) => w,
        (None, n) if n >= 2 => spec.omegas[0] + 3.0 * (spec.omegas[1] - spec.omegas[0]),
        _ => f64::NAN,
    };
    spectral_peaks(spec, opts)?.first().copied().ok_or(Error::NoPeak(omega_min))
}

fn parabolic_vertex(x0: f64, x1: f64, x2: f64, y0: f64, y1: f64, y2: f64) -> f64 {
    let d1 = (y1 - y0) / (x1 - x0);
    let d2 = (y2 - y1) / (x2 - x1);
    let curv = (d2 - d1) / (x2 - x0);
    if curv >= 0.0 {
        return x1;
    }
    let vertex = 0.5 * (x0 + x1) - d1 / (2.0 * curv);
    vertex.clamp(x0, x2)
}

/// Half width at half maximum of a peak centred at the first grid point,
/// measured against a zero baseline.
pub fn half_width_at_half_max(spec: &SpectrumEstimate) -> Result<f64> {
    let half = 0.5 * spec.values[0];
    for i in 1..spec.len() {
        if spec.values[i] <= half {
            let (x0, x1) = (spec.omegas[i - 1], spec.omegas[i]);
            let (y0, y1) = (spec.values[i - 1], spec.values[i]);
            return Ok(x0 + (half - y0) * (x1 - x0) / (y1 - y0));
        }
    }
    Err(Error::NoPeak(spec.omegas[0]))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScalingModel {
    InverseN,
    InverseNSquared,
}

impl ScalingModel {
    pub fn exponent(self) -> i32 {
        match self {
            ScalingModel::InverseN => 1,
            ScalingModel::InverseNSquared => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalingFit {
    pub coefficient: f64,
    /// RMS of `(f_i − c/N_i^p)/f_i`.
    pub residual: f64,
}

/// Fits `f = c/N^p`, minimizing the relative residuals.
pub fn scaling_fit(points: &[(usize, f64)], model: ScalingModel) -> Result<ScalingFit> {
    if points.len() < 3 {
        return Err(Error::TooFewPoints { needed: 3, got: points.len() });
    }
    let p = model.exponent();
    let ratios: Vec<f64> = points.iter().map(|&(n, f)| (n as f64).powi(-p) / f).collect();
    let coefficient = ratios.iter().sum::<f64>() / ratios.iter().map(|r| r * r).sum::<f64>();
    let residual = (ratios.iter().map(|r| (1.0 - coefficient * r).powi(2)).sum::<f64>() / ratios.len() as f64).sqrt();
    Ok(ScalingFit { coefficient, residual })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationEstimate {
    pub taus: Vec<f64>,
    pub values: Vec<f64>,
    pub stderr: Option<Vec<f64>>,
    /// Expected white-noise contribution `dt/(8k)` contained in the `τ = 0`
    /// value of a Monte Carlo estimate; zero for the analytic form.
    pub zero_lag_noise: f64,
}

impl CorrelationEstimate {
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        match &self.stderr {
            Some(se) => {
                writeln!(out, "tau,value,stderr")?;
                for ((t, v), e) in self.taus.iter().zip(&self.values).zip(se) {
                    writeln!(out, "{t},{v},{e}")?;
                }
            }
            None => {
                writeln!(out, "tau,value")?;
                for (t, v) in self.taus.iter().zip(&self.values) {
                    writeln!(out, "{t},{v}")?;
                }
            }
        }
        Ok(())
    }
}

fn check_lags(taus: &[f64]) -> Result<()> {
    if taus.is_empty() || taus[0] < 0.0 || taus.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter("lags must be non-negative and strictly increasing".into()));
    }
    Ok(())
}

/// Ensemble correlation of record increments at lag `τ`,
///
/// ```text
/// C(τ) = ⟨O⟩² dt² − (√μ/2)⟨O⟩⟨O + O†⟩ dt² + (√μ/2) tr[O e^{𝓛τ}{O, ρ_ss}] dt²
/// ```
///
/// The white-noise term present only at `τ = 0` is not included.
pub fn analytic_record_correlation(
    l: &LiouvilleOperator,
    rho_ss: &DensityMatrix,
    observable: &Operator,
    taus: &[f64],
    dt: f64,
) -> Result<CorrelationEstimate> {
    check_lags(taus)?;
    let n = l.hilbert_dim();
    observable.require_dim(n)?;
    let o = observable.matrix();
    let mu = l.probe().efficiency();
    let mean_o = trace_product(&o.view(), &rho_ss.view()).re;
    let o_plus = o + &crate::linalg::dagger(&o.view());
    let mean_sum = trace_product(&o_plus.view(), &rho_ss.view()).re;
    let dt2 = dt * dt;
    let first = mean_o * mean_o * dt2;
    let second = -0.5 * mu.sqrt() * mean_o * mean_sum * dt2;

    let mut v = vectorize(&anticommutator(&o.view(), &rho_ss.view()).view());
    let gen = l.generator().matrix();
    let mut prev_tau = 0.0;
    let mut cached: Option<(f64, Array2<C64>)> = None;
    let mut values = Vec::with_capacity(taus.len());
    for &tau in taus {
        let step = tau - prev_tau;
        if step > 0.0 {
            let reuse = matches!(&cached, Some((s, _)) if (s - step).abs() <= 1e-12 * step);
            if !reuse {
                cached = Some((step, expm(&gen.mapv(|z| z * step))?));
            }
            v = cached.as_ref().expect("set above").1.dot(&v);
        }
        prev_tau = tau;
        let evolved = devectorize(&v)?;
        let third = 0.5 * mu.sqrt() * trace_product(&o.view(), &evolved.view()).re * dt2;
        values.push(first + second + third);
    }
    Ok(CorrelationEstimate { taus: taus.to_vec(), values, stderr: None, zero_lag_noise: 0.0 })
}

/// Empirical `⟨λ_t λ_{t+τ}⟩` averaged over time origins after `transient`
/// and over records. Lags must be multiples of the record step. The
/// standard error comes from the spread of the per-record averages.
pub fn mc_record_correlation(records: &[MeasurementRecord], taus: &[f64], transient: f64) -> Result<CorrelationEstimate> {
    const MIN_RECORDS: usize = 50;
    if records.len() < MIN_RECORDS {
        return Err(Error::TooFewRecords { needed: MIN_RECORDS, got: records.len() });
    }
    check_lags(taus)?;
    let dt = records[0].dt();
    let k = records[0].probe().strength();
    if records.iter().any(|r| (r.dt() - dt).abs() > 1e-15 * dt) {
        return Err(Error::InvalidParameter("records must share one time step".into()));
    }
    let lags: Vec<usize> = taus
        .iter()
        .map(|&t| {
            let l = (t / dt).round();
            if (l * dt - t).abs() > 1e-6 * dt.max(t) {
                Err(Error::InvalidParameter(format!("lag {t} is not a multiple of dt = {dt}")))
            } else {
                Ok(l as usize)
            }
        })
        .collect::<Result<_>>()?;
    let skip = (transient / dt).ceil() as usize;
    let max_lag = *lags.last().expect("non-empty");

    let per_record: Vec<Vec<f64>> = records
        .par_iter()
        .map(|r| -> Result<Vec<f64>> {
            let x = r.samples();
            if x.len() < skip + max_lag + 1 {
                return Err(Error::InvalidParameter("record shorter than transient plus largest lag".into()));
            }
            let origins = x.len() - skip - max_lag;
            Ok(lags
                .iter()
                .map(|&lag| (skip..skip + origins).map(|i| x[i] * x[i + lag]).sum::<f64>() / origins as f64)
                .collect())
        })
        .collect::<Result<_>>()?;

    let m = per_record.len() as f64;
    let mut values = vec![0.0; lags.len()];
    for row in &per_record {
        values.iter_mut().zip(row).for_each(|(a, v)| *a += v);
    }
    values.iter_mut().for_each(|a| *a /= m);
    let mut var = vec![0.0; lags.len()];
    for row in &per_record {
        var.iter_mut().zip(row).zip(&values).for_each(|((a, v), mu)| *a += (v - mu).powi(2));
    }
    let stderr = var.iter().map(|v| (v / (m - 1.0) / m).sqrt()).collect();
    Ok(CorrelationEstimate { taus: taus.to_vec(), values, stderr: Some(stderr), zero_lag_noise: dt / (8.0 * k) })
}
