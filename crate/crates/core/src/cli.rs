// Copyright 2026 The qtraj Authors
// SPDX-License-Identifier: Apache-2.0

//! Experiment driver behind the `qtraj` binary.
//!
//! A run reads one [`ExperimentConfig`] (TOML, or the JSON manifest of an
//! earlier run), writes CSV files plus `manifest.json` into the output
//! directory, and exits with 0 on success, 2 for a malformed or invalid
//! config and 1 for a failure during the run.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::Error;
use crate::lattice::{analytic_eigensystem, build_hamiltonian, LatticeSpec};
use crate::liouville::{
    build_liouvillian, default_omega_grid, effective_modes, fit_decay_rate, lindblad_series, liouvillian_spectrum,
    perturbative_spectrum, short_time_variance, single_bond_zeno_rate, steady_state, steady_state_spectrum,
    zeno_rate, LiouvilleOperator,
};
use crate::signal::{
    analytic_record_correlation, average_spectra, dominant_peak, half_width_at_half_max, linear_grid,
    mc_record_correlation, periodogram, scaling_fit, shot_noise_floor, FrequencyGrid, PeakOptions,
    PeriodogramOptions, ScalingModel, SpectrumEstimate,
};
use crate::sme::{dt_guard, simulate_ensemble, IntegrationConfig, ProbeConfig, Scheme};
use crate::states::{eigenstate_density, pure_state_on_site, thermal_state, DensityMatrix};

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeSection {
    pub n_sites: usize,
    pub coupling: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeSection {
    /// 1-based probed sites.
    pub sites: Vec<usize>,
    pub strength: f64,
    #[serde(default = "one")]
    pub efficiency: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialState {
    /// `|w_k⟩⟨w_k|`, 1-based.
    Eigenstate { k: usize },
    /// `|n⟩⟨n|`, 1-based.
    Site { n: usize },
    Thermal { beta: f64 },
    /// The Liouvillian steady state; with a degenerate kernel, the projection
    /// of the maximally mixed state.
    Steady,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegrationSection {
    pub dt: f64,
    pub t_final: f64,
    pub seed: u64,
    #[serde(default = "yes")]
    pub renormalize_every_step: bool,
    #[serde(default)]
    pub allow_large_dt: bool,
    #[serde(default = "one_usize")]
    pub sample_every: usize,
    #[serde(default)]
    pub scheme: Scheme,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleSection {
    pub n_traj: usize,
}

impl Default for EnsembleSection {
    fn default() -> Self {
        Self { n_traj: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisSection {
    /// Upper end of every frequency grid; `None` uses 1.2 × the bandwidth.
    #[serde(default)]
    pub omega_max: Option<f64>,
    #[serde(default = "default_omega_points")]
    pub omega_points: usize,
    #[serde(default = "yes")]
    pub mean_subtract: bool,
    /// Subtract `1/(16πk)` from record periodograms.
    #[serde(default)]
    pub floor_subtract: bool,
    /// Lower cut for peak searches; `None` is three grid steps.
    #[serde(default)]
    pub omega_min: Option<f64>,
    /// Lattice sizes for `peak-scan`; the probe sits on the middle site.
    #[serde(default = "default_sizes")]
    pub sizes: Vec<usize>,
    /// Largest lag for `correlation`.
    #[serde(default = "default_max_lag")]
    pub max_lag: f64,
    #[serde(default = "default_lag_points")]
    pub lag_points: usize,
    /// Record time discarded before correlating.
    #[serde(default)]
    pub transient: f64,
}

impl Default for AnalysisSection {
    fn default() -> Self {
        Self {
            omega_max: None,
            omega_points: default_omega_points(),
            mean_subtract: true,
            floor_subtract: false,
            omega_min: None,
            sizes: default_sizes(),
            max_lag: default_max_lag(),
            lag_points: default_lag_points(),
            transient: 0.0,
        }
    }
}

fn one() -> f64 {
    1.0
}
fn one_usize() -> usize {
    1
}
fn yes() -> bool {
    true
}
fn default_omega_points() -> usize {
    400
}
fn default_sizes() -> Vec<usize> {
    vec![7, 13, 19, 25]
}
fn default_max_lag() -> f64 {
    10.0
}
fn default_lag_points() -> usize {
    41
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub lattice: LatticeSection,
    pub probe: ProbeSection,
    pub initial_state: InitialState,
    pub integration: IntegrationSection,
    #[serde(default)]
    pub ensemble: EnsembleSection,
    #[serde(default)]
    pub analysis: AnalysisSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostic {
    pub severity: Severity,
    pub message: String,
}

impl Diagnostic {
    fn error(message: impl Into<String>) -> Self {
        Self { severity: Severity::Error, message: message.into() }
    }

    fn warning(message: impl Into<String>) -> Self {
        Self { severity: Severity::Warning, message: message.into() }
    }
}

impl std::fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let tag = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(f, "{tag}: {}", self.message)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("malformed config {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid config:\n{}", .0.iter().map(|d| format!("  {d}")).collect::<Vec<_>>().join("\n"))]
    Invalid(Vec<Diagnostic>),
    #[error(transparent)]
    Run(#[from] Error),
    #[error("output: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Read { .. } | CliError::Parse { .. } | CliError::Invalid(_) => EXIT_CONFIG,
            CliError::Run(_) | CliError::Io(_) => EXIT_RUNTIME,
        }
    }
}

/// Parses a TOML config, or a JSON manifest carrying the config under
/// `"config"`. Returns the config and the raw bytes (hashed into the
/// manifest).
pub fn load_config(path: &Path) -> Result<(ExperimentConfig, Vec<u8>), CliError> {
    let bytes = fs::read(path).map_err(|source| CliError::Read { path: path.to_path_buf(), source })?;
    let text = String::from_utf8_lossy(&bytes);
    let parse_err = |message: String| CliError::Parse { path: path.to_path_buf(), message };
    let config = if text.trim_start().starts_with('{') {
        let mut value: serde_json::Value = serde_json::from_str(&text).map_err(|e| parse_err(e.to_string()))?;
        let inner = value.get_mut("config").map(serde_json::Value::take).unwrap_or(value);
        serde_json::from_value(inner).map_err(|e| parse_err(e.to_string()))?
    } else {
        toml::from_str(&text).map_err(|e| parse_err(e.to_string()))?
    };
    Ok((config, bytes))
}

/// Every invariant violation (errors) and questionable setting (warnings).
pub fn validate(config: &ExperimentConfig) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let n = config.lattice.n_sites;
    let j = config.lattice.coupling;
    if n == 0 {
        out.push(Diagnostic::error("lattice.n_sites must be at least 1"));
    }
    if !j.is_finite() {
        out.push(Diagnostic::error("lattice.coupling must be finite"));
    }

    let probe = &config.probe;
    if probe.sites.is_empty() {
        out.push(Diagnostic::error("probe.sites must list at least one site"));
    }
    for &site in &probe.sites {
        if site == 0 || site > n {
            out.push(Diagnostic::error(format!("probe site {site} out of range 1..={n}")));
        }
    }
    if !(probe.strength >= 0.0) || !probe.strength.is_finite() {
        out.push(Diagnostic::error(format!("probe.strength = {} must be finite and ≥ 0", probe.strength)));
    }
    if !(0.0..=1.0).contains(&probe.efficiency) {
        out.push(Diagnostic::error(format!("probe.efficiency = {} must lie in [0, 1]", probe.efficiency)));
    } else if probe.efficiency != 1.0 {
        out.push(Diagnostic::warning(
            "probe.efficiency < 1 is accepted by the Liouvillian analyses but trajectory simulation requires 1",
        ));
    }

    match config.initial_state {
        InitialState::Eigenstate { k } if k == 0 || k > n => {
            out.push(Diagnostic::error(format!("initial eigenstate index {k} out of range 1..={n}")))
        }
        InitialState::Site { n: site } if site == 0 || site > n => {
            out.push(Diagnostic::error(format!("initial site {site} out of range 1..={n}")))
        }
        InitialState::Thermal { beta } if !(beta >= 0.0) || !beta.is_finite() => {
            out.push(Diagnostic::error(format!("initial thermal beta = {beta} must be finite and ≥ 0")))
        }
        _ => {}
    }

    let integ = &config.integration;
    if !(integ.dt > 0.0) || !integ.dt.is_finite() {
        out.push(Diagnostic::error(format!("integration.dt = {} must be positive", integ.dt)));
    } else {
        if !(integ.t_final >= integ.dt) || !integ.t_final.is_finite() {
            out.push(Diagnostic::error(format!("integration.t_final = {} must be at least dt", integ.t_final)));
        }
        let guard = dt_guard(j, probe.strength);
        if integ.dt > guard * (1.0 + 1e-12) {
            let msg = format!(
                "integration.dt = {} exceeds the guard dt ≤ 0.01/max(J, k) = {guard}",
                integ.dt
            );
            if integ.allow_large_dt {
                out.push(Diagnostic::warning(format!("{msg} (allowed by allow_large_dt)")));
            } else {
                out.push(Diagnostic::warning(format!("{msg}; simulations will refuse it unless allow_large_dt = true")));
            }
        }
    }
    if integ.sample_every == 0 {
        out.push(Diagnostic::error("integration.sample_every must be at least 1"));
    }
    if config.ensemble.n_traj == 0 {
        out.push(Diagnostic::error("ensemble.n_traj must be at least 1"));
    }

    let a = &config.analysis;
    if let Some(w) = a.omega_max {
        if !(w > 0.0) || !w.is_finite() {
            out.push(Diagnostic::error(format!("analysis.omega_max = {w} must be positive")));
        }
    }
    if a.omega_points < 2 {
        out.push(Diagnostic::error("analysis.omega_points must be at least 2"));
    }
    if a.sizes.iter().any(|&s| s == 0) {
        out.push(Diagnostic::error("analysis.sizes entries must be at least 1"));
    }
    if !(a.max_lag >= 0.0) || a.lag_points == 0 {
        out.push(Diagnostic::error("analysis.max_lag must be ≥ 0 and analysis.lag_points ≥ 1"));
    }
    if !(a.transient >= 0.0) {
        out.push(Diagnostic::error("analysis.transient must be ≥ 0"));
    }
    out
}

#[derive(Debug, Parser)]
#[command(name = "qtraj", version, about = "Quantum trajectories and spectra of a monitored tight-binding chain")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, clap::Args)]
pub struct RunArgs {
    /// TOML config or JSON manifest of an earlier run.
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory, created if missing.
    #[arg(long)]
    pub out: PathBuf,
    /// Worker threads; defaults to the available cores. Outputs do not depend on it.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Overrides `integration.seed`.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Conditioned trajectories: one CSV per trajectory.
    Trajectory(RunArgs),
    /// Ensemble-averaged record periodogram.
    SpectrumRecord(RunArgs),
    /// Steady-state spectrum from the Liouvillian resolvent.
    SpectrumSteady(RunArgs),
    /// Weak-probe Lorentzian sum, scaled to the resolvent spectrum.
    SpectrumPerturbative(RunArgs),
    /// Liouvillian eigenvalues.
    LiouvilleEig(RunArgs),
    /// Eigenmodes of H − ikΠ.
    EffectiveModes(RunArgs),
    /// Dominant record-spectrum peak against lattice size, with 1/N and 1/N² fits.
    PeakScan(RunArgs),
    /// Survival decay of the probed site, Zeno-rate candidates and spectral width.
    Zeno(RunArgs),
    /// Analytic against Monte Carlo record correlation.
    Correlation(RunArgs),
    /// Check a config without running it.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Trajectory(_) => "trajectory",
            Command::SpectrumRecord(_) => "spectrum-record",
            Command::SpectrumSteady(_) => "spectrum-steady",
            Command::SpectrumPerturbative(_) => "spectrum-perturbative",
            Command::LiouvilleEig(_) => "liouville-eig",
            Command::EffectiveModes(_) => "effective-modes",
            Command::PeakScan(_) => "peak-scan",
            Command::Zeno(_) => "zeno",
            Command::Correlation(_) => "correlation",
            Command::Validate { .. } => "validate",
        }
    }

    fn run_args(&self) -> Option<&RunArgs> {
        match self {
            Command::Trajectory(a)
            | Command::SpectrumRecord(a)
            | Command::SpectrumSteady(a)
            | Command::SpectrumPerturbative(a)
            | Command::LiouvilleEig(a)
            | Command::EffectiveModes(a)
            | Command::PeakScan(a)
            | Command::Zeno(a)
            | Command::Correlation(a) => Some(a),
            Command::Validate { .. } => None,
        }
    }
}

/// Entry point of the binary; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match &cli.command {
        Command::Validate { config } => validate_command(config),
        cmd => {
            let args = cmd.run_args().expect("run subcommand");
            match run(cmd, args) {
                Ok(()) => EXIT_OK,
                Err(e) => {
                    eprintln!("qtraj {}: {e}", cmd.name());
                    e.exit_code()
                }
            }
        }
    }
}

fn validate_command(path: &Path) -> i32 {
    let config = match load_config(path) {
        Ok((c, _)) => c,
        Err(e) => {
            eprintln!("qtraj validate: {e}");
            return e.exit_code();
        }
    };
    let diagnostics = validate(&config);
    for d in &diagnostics {
        println!("{d}");
    }
    if diagnostics.iter().any(|d| d.severity == Severity::Error) {
        return EXIT_CONFIG;
    }
    println!("ok");
    match toml::to_string(&config) {
        Ok(echo) => print!("{echo}"),
        Err(e) => eprintln!("could not echo config: {e}"),
    }
    EXIT_OK
}

/// Loads, validates and executes one run subcommand.
pub fn run(cmd: &Command, args: &RunArgs) -> Result<(), CliError> {
    let (mut config, bytes) = load_config(&args.config)?;
    if let Some(seed) = args.seed {
        config.integration.seed = seed;
    }
    let diagnostics = validate(&config);
    if diagnostics.iter().any(|d| d.severity == Severity::Error) {
        return Err(CliError::Invalid(diagnostics.into_iter().filter(|d| d.severity == Severity::Error).collect()));
    }
    for d in &diagnostics {
        eprintln!("{d}");
    }
    fs::create_dir_all(&args.out)?;

    let threads = args.threads.unwrap_or(0);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
    let start = Instant::now();
    let files = pool.install(|| execute(cmd, &config, &args.out))?;
    let wall = start.elapsed().as_secs_f64();
    write_manifest(&args.out, cmd.name(), &config, &bytes, &files, wall)?;
    Ok(())
}

fn write_manifest(
    out: &Path,
    subcommand: &str,
    config: &ExperimentConfig,
    input: &[u8],
    files: &[String],
    wall_seconds: f64,
) -> Result<(), CliError> {
    let hash: String = Sha256::digest(input).iter().map(|b| format!("{b:02x}")).collect();
    let manifest = serde_json::json!({
        "subcommand": subcommand,
        "config": config,
        "seed": config.integration.seed,
        "versions": { "qtraj": env!("CARGO_PKG_VERSION") },
        "timing": { "wall_seconds": wall_seconds },
        "input_hash": format!("sha256:{hash}"),
        "outputs": files,
    });
    let mut f = BufWriter::new(File::create(out.join("manifest.json"))?);
    serde_json::to_writer_pretty(&mut f, &manifest).map_err(std::io::Error::from)?;
    writeln!(f)?;
    Ok(())
}

struct Setup {
    spec: LatticeSpec,
    probe: ProbeConfig,
    integ: IntegrationConfig,
}

fn setup(config: &ExperimentConfig) -> crate::Result<Setup> {
    let spec = LatticeSpec::new(config.lattice.n_sites, config.lattice.coupling)?;
    let probe = ProbeConfig::on_sites(&spec, &config.probe.sites, config.probe.strength)?
        .with_efficiency(config.probe.efficiency)?;
    let i = &config.integration;
    let mut integ = IntegrationConfig::new(i.dt, i.t_final, i.seed)?.with_sample_every(i.sample_every).with_scheme(i.scheme);
    integ.renormalize_every_step = i.renormalize_every_step;
    integ.allow_large_dt = i.allow_large_dt;
    Ok(Setup { spec, probe, integ })
}

fn initial_state(init: &InitialState, spec: &LatticeSpec, l: Option<&LiouvilleOperator>) -> crate::Result<DensityMatrix> {
    match *init {
        InitialState::Eigenstate { k } => eigenstate_density(&analytic_eigensystem(spec), k),
        InitialState::Site { n } => pure_state_on_site(spec, n),
        InitialState::Thermal { beta } => thermal_state(&build_hamiltonian(spec), beta),
        InitialState::Steady => {
            let l = l.ok_or_else(|| Error::InvalidParameter("steady initial state needs a Liouvillian".into()))?;
            steady_state(l, Some(&DensityMatrix::maximally_mixed(spec.n_sites())))
        }
    }
}

fn write_csv(out: &Path, name: &str, f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> std::io::Result<String> {
    let mut w = BufWriter::new(File::create(out.join(name))?);
    f(&mut w)?;
    w.flush()?;
    Ok(name.to_string())
}

fn frequency_grid(config: &ExperimentConfig, spec: &LatticeSpec) -> Vec<f64> {
    let a = &config.analysis;
    match a.omega_max {
        Some(w) => linear_grid(0.0, w, a.omega_points),
        None => {
            let default = default_omega_grid(&analytic_eigensystem(spec));
            linear_grid(0.0, *default.last().expect("non-empty"), a.omega_points)
        }
    }
}

/// Runs the subcommand and returns the names of the files it wrote.
fn execute(cmd: &Command, config: &ExperimentConfig, out: &Path) -> Result<Vec<String>, CliError> {
    let s = setup(config)?;
    let h = build_hamiltonian(&s.spec);
    let files = match cmd {
        Command::Trajectory(_) => {
            let rho0 = initial_state(&config.initial_state, &s.spec, None)?;
            let ens = simulate_ensemble(&s.spec, &rho0, &s.probe, &s.integ, config.ensemble.n_traj)?;
            let mut files = Vec::new();
            for t in &ens.trajectories {
                files.push(write_csv(out, &format!("trajectory_{:04}.csv", t.index), |w| t.write_csv(w))?);
            }
            files
        }
        Command::SpectrumRecord(_) => {
            let l = build_liouvillian(&h, &s.probe)?;
            let rho0 = initial_state(&config.initial_state, &s.spec, Some(&l))?;
            let spectrum = record_spectrum(config, &s, &rho0)?;
            vec![write_csv(out, "spectrum_record.csv", |w| spectrum.write_csv(w))?]
        }
        Command::SpectrumSteady(_) => {
            let l = build_liouvillian(&h, &s.probe)?;
            let rho0 = initial_state(&config.initial_state, &s.spec, Some(&l))?;
            let rho_ss = steady_state(&l, Some(&rho0))?;
            let spectrum = steady_state_spectrum(&l, s.probe.observable(), &rho_ss, &frequency_grid(config, &s.spec))?;
            vec![write_csv(out, "spectrum_steady.csv", |w| spectrum.write_csv(w))?]
        }
        Command::SpectrumPerturbative(_) => {
            let l = build_liouvillian(&h, &s.probe)?;
            let rho0 = initial_state(&config.initial_state, &s.spec, Some(&l))?;
            let rho_ss = steady_state(&l, Some(&rho0))?;
            let grid = frequency_grid(config, &s.spec);
            let reference = steady_state_spectrum(&l, s.probe.observable(), &rho_ss, &grid);
            let es = analytic_eigensystem(&s.spec);
            let spectrum = perturbative_spectrum(
                &es,
                &config.probe.sites,
                config.probe.strength,
                &rho_ss,
                &grid,
                reference.as_ref().ok(),
            )?;
            vec![write_csv(out, "spectrum_perturbative.csv", |w| spectrum.write_csv(w))?]
        }
        Command::LiouvilleEig(_) => {
            let l = build_liouvillian(&h, &s.probe)?;
            let spectrum = liouvillian_spectrum(&l)?;
            let mut order: Vec<usize> = (0..spectrum.eigenvalues.len()).collect();
            let z = &spectrum.eigenvalues;
            order.sort_by(|&a, &b| z[b].re.total_cmp(&z[a].re).then(z[a].im.total_cmp(&z[b].im)));
            vec![write_csv(out, "liouville_eigenvalues.csv", |w| {
                writeln!(w, "re,im")?;
                for i in order {
                    writeln!(w, "{},{}", z[i].re, z[i].im)?;
                }
                Ok(())
            })?]
        }
        Command::EffectiveModes(_) => {
            let modes = effective_modes(&h, &s.probe)?;
            vec![write_csv(out, "effective_modes.csv", |w| modes.write_csv(w))?]
        }
        Command::PeakScan(_) => peak_scan(config, out)?,
        Command::Zeno(_) => zeno(config, &s, out)?,
        Command::Correlation(_) => {
            let l = build_liouvillian(&h, &s.probe)?;
            let rho_ss = initial_state(&InitialState::Steady, &s.spec, Some(&l))?;
            let taus = lag_grid(config.analysis.max_lag, config.analysis.lag_points, s.integ.dt);
            let ens = simulate_ensemble(&s.spec, &rho_ss, &s.probe, &s.integ, config.ensemble.n_traj)?;
            let records: Vec<_> = ens.trajectories.into_iter().map(|t| t.record).collect();
            let mc = mc_record_correlation(&records, &taus, config.analysis.transient)?;
            let exact = analytic_record_correlation(&l, &rho_ss, s.probe.observable(), &taus, s.integ.dt)?;
            let se = mc.stderr.clone().unwrap_or_default();
            vec![write_csv(out, "correlation.csv", |w| {
                writeln!(w, "tau,analytic,monte_carlo,stderr,white_noise")?;
                for i in 0..taus.len() {
                    let noise = if i == 0 && taus[0] == 0.0 { mc.zero_lag_noise } else { 0.0 };
                    writeln!(w, "{},{},{},{},{}", taus[i], exact.values[i], mc.values[i], se[i], noise)?;
                }
                Ok(())
            })?]
        }
        Command::Validate { .. } => unreachable!("validate does not execute"),
    };
    Ok(files)
}

/// `points` lags on `[0, max_lag]`, each rounded to a multiple of `dt`, duplicates dropped.
fn lag_grid(max_lag: f64, points: usize, dt: f64) -> Vec<f64> {
    let mut steps: Vec<u64> = linear_grid(0.0, max_lag, points.max(2)).iter().map(|t| (t / dt).round() as u64).collect();
    if points == 1 {
        steps.truncate(1);
    }
    steps.dedup();
    steps.iter().map(|&s| s as f64 * dt).collect()
}

fn record_spectrum(config: &ExperimentConfig, s: &Setup, rho0: &DensityMatrix) -> crate::Result<SpectrumEstimate> {
    let a = &config.analysis;
    let ens = simulate_ensemble(&s.spec, rho0, &s.probe, &s.integ, config.ensemble.n_traj)?;
    let opts = PeriodogramOptions { mean_subtract: a.mean_subtract, ..Default::default() };
    let spectra = ens
        .trajectories
        .iter()
        .map(|t| periodogram(&t.record, &FrequencyGrid::Dft, opts))
        .collect::<crate::Result<Vec<_>>>()?;
    let mut averaged = average_spectra(&spectra)?;
    let top = a.omega_max.unwrap_or_else(|| *frequency_grid(config, &s.spec).last().expect("non-empty"));
    averaged = averaged.restrict(0.0, top)?;
    if a.floor_subtract {
        averaged = averaged.offset(shot_noise_floor(config.probe.strength)?);
    }
    Ok(averaged)
}

fn peak_scan(config: &ExperimentConfig, out: &Path) -> Result<Vec<String>, CliError> {
    let mut points = Vec::new();
    for &n in &config.analysis.sizes {
        let mut sized = config.clone();
        sized.lattice.n_sites = n;
        sized.probe.sites = vec![(n + 1) / 2];
        if let Some(bad) = validate(&sized).into_iter().find(|d| d.severity == Severity::Error) {
            return Err(CliError::Invalid(vec![Diagnostic::error(format!("N = {n}: {}", bad.message))]));
        }
        let ss = setup(&sized)?;
        let l = build_liouvillian(&build_hamiltonian(&ss.spec), &ss.probe)?;
        let rho0 = initial_state(&sized.initial_state, &ss.spec, Some(&l))?;
        let spectrum = record_spectrum(&sized, &ss, &rho0)?;
        let peak = dominant_peak(&spectrum, PeakOptions { omega_min: config.analysis.omega_min, ..PeakOptions::averaged() })?;
        points.push((n, peak));
    }
    let mut files = vec![write_csv(out, "peak_scan.csv", |w| {
        writeln!(w, "n_sites,peak")?;
        for (n, p) in &points {
            writeln!(w, "{n},{p}")?;
        }
        Ok(())
    })?];
    if points.len() >= 3 {
        let fits = [ScalingModel::InverseN, ScalingModel::InverseNSquared]
            .into_iter()
            .map(|m| scaling_fit(&points, m).map(|f| (m, f)))
            .collect::<crate::Result<Vec<_>>>()?;
        let best = if fits[0].1.residual <= fits[1].1.residual { "inverse_n" } else { "inverse_n_squared" };
        files.push(write_csv(out, "peak_scan_fits.csv", |w| {
            writeln!(w, "model,coefficient,residual,preferred")?;
            for (m, f) in &fits {
                let name = match m {
                    ScalingModel::InverseN => "inverse_n",
                    ScalingModel::InverseNSquared => "inverse_n_squared",
                };
                writeln!(w, "{name},{},{},{}", f.coefficient, f.residual, name == best)?;
            }
            Ok(())
        })?);
    }
    Ok(files)
}

/// Survival of `|n⟩⟨n|` on the first probed site, the decay rate fitted over
/// the first e-fold towards `p_∞`, and the width of the steady-state line.
fn zeno(config: &ExperimentConfig, s: &Setup, out: &Path) -> Result<Vec<String>, CliError> {
    let k = config.probe.strength;
    if !(k > 0.0) {
        return Err(Error::InvalidParameter("zeno needs probe.strength > 0".into()).into());
    }
    let site = config.probe.sites[0];
    let l = build_liouvillian(&build_hamiltonian(&s.spec), &s.probe)?;
    let rho0 = pure_state_on_site(&s.spec, site)?;
    let idx = site - 1;
    let rho_ss = steady_state(&l, Some(&rho0))?;
    let p_inf = rho_ss.matrix()[[idx, idx]].re;

    let variance = short_time_variance(&s.spec, site)?;
    let j = config.lattice.coupling;
    // Survival is resolved on a step of 1/500 of the slowest candidate's time
    // constant, over four of them.
    let slow = single_bond_zeno_rate(j, k).min(zeno_rate(&s.spec, site, k)?);
    let dt = if slow > 0.0 { 0.002 / slow } else { config.integration.dt };
    let n_steps = 2000;
    let series = lindblad_series(&l, &rho0, dt, n_steps)?;
    let times: Vec<f64> = (0..=n_steps).map(|i| i as f64 * dt).collect();
    let survival: Vec<f64> = series.iter().map(|r| r.matrix()[[idx, idx]].re).collect();
    let rate = fit_decay_rate(&times, &survival, p_inf, (1.0 - p_inf) / std::f64::consts::E)?;

    let top = config.analysis.omega_max.unwrap_or(30.0 * rate);
    let grid = linear_grid(0.0, top, config.analysis.omega_points);
    let spectrum = steady_state_spectrum(&l, s.probe.observable(), &rho_ss, &grid)?;
    let hwhm = half_width_at_half_max(&spectrum)?;
    let variance_rate = zeno_rate(&s.spec, site, k)?;

    let mut files = vec![write_csv(out, "zeno_survival.csv", |w| {
        writeln!(w, "t,p_site")?;
        for (t, p) in times.iter().zip(&survival) {
            writeln!(w, "{t},{p}")?;
        }
        Ok(())
    })?];
    files.push(write_csv(out, "zeno_spectrum.csv", |w| spectrum.write_csv(w))?);
    files.push(write_csv(out, "zeno_summary.csv", |w| {
        writeln!(w, "quantity,value")?;
        writeln!(w, "fitted_decay_rate,{rate}")?;
        writeln!(w, "p_infinity,{p_inf}")?;
        // τ₀⁻² read as the energy variance ⟨H²⟩ − ⟨H⟩²; the other reading,
        // ⟨H⟩² − ⟨H²⟩, is its negative and gives no rate.
        writeln!(w, "energy_variance,{variance}")?;
        writeln!(w, "energy_variance_other_sign,{}", -variance)?;
        writeln!(w, "candidate_variance_rate,{variance_rate}")?;
        writeln!(w, "candidate_single_bond_rate,{}", single_bond_zeno_rate(j, k))?;
        writeln!(w, "spectrum_half_width,{hwhm}")?;
        Ok(())
    })?);
    Ok(files)
}
