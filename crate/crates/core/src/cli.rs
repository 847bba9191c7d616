//! Command-line front end.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::estimation::{EstimatorConfig, EstimatorMode};
use crate::harness::{write_sweep, EstimationPlan, ExportFormat, SweepConfig, SymmetryChoice};
use crate::measurement::{
    all_settings, ingest_histograms, pi_settings, records_from_histograms, write_histograms, HistogramFile,
    PauliSetting,
};
use crate::metrics::{compare, FidelityConvention};
use crate::operators::{DensityMatrix, MatrixJson};
use crate::statesim::{Channel, NoiseModel, NoisePolicy, StateSpec};
use crate::symmetry::{compute_commutant_basis, SymmetryKind, SymmetrySpec};

#[derive(Debug, Parser)]
#[command(name = "symtomo", version, about = "Symmetry-adapted variational quantum state tomography")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compute a commutant basis.
    Basis(BasisArgs),
    /// Simulate a (noisy) state preparation.
    Prepare(PrepareArgs),
    /// Sample measurement histograms from a state.
    Sample(SampleArgs),
    /// Reconstruct a state from histograms.
    Estimate(EstimateArgs),
    /// Compare two density matrices.
    Metrics(MetricsArgs),
    /// Run a noise/shot (and optional observable-count) sweep.
    Sweep(SweepArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum BasisSymmetry {
    Permutation,
    Collective,
    Custom,
}

#[derive(Debug, Args)]
pub struct BasisArgs {
    #[arg(long, value_enum)]
    pub symmetry: BasisSymmetry,
    #[arg(long)]
    pub qubits: usize,
    /// JSON list of unitary generator matrices, for `--symmetry custom`.
    #[arg(long)]
    pub generators: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum StateFamily {
    Ghz,
    Twisted,
    Werner,
    WernerExact,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum NoiseFlag {
    None,
    Ad,
    Bf,
    Dep,
}

impl From<NoiseFlag> for Channel {
    fn from(n: NoiseFlag) -> Self {
        match n {
            NoiseFlag::None => Channel::None,
            NoiseFlag::Ad => Channel::AmplitudeDamping,
            NoiseFlag::Bf => Channel::BitFlip,
            NoiseFlag::Dep => Channel::Depolarizing,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum PolicyFlag {
    Post,
    Pergate,
}

#[derive(Debug, Args)]
pub struct PrepareArgs {
    #[arg(long, value_enum)]
    pub state: StateFamily,
    #[arg(long, default_value_t = 2)]
    pub qubits: usize,
    #[arg(long, default_value_t = 0.0)]
    pub theta: f64,
    #[arg(long, default_value_t = 0.0)]
    pub theta_a: f64,
    #[arg(long, default_value_t = 0.0)]
    pub theta_b: f64,
    /// Werner parameter of the first pair.
    #[arg(long, default_value_t = 1.0)]
    pub p: f64,
    /// Werner parameter of a second pair (four qubits).
    #[arg(long)]
    pub p2: Option<f64>,
    #[arg(long, value_enum, default_value = "none")]
    pub noise: NoiseFlag,
    #[arg(long, default_value_t = 0.0)]
    pub level: f64,
    #[arg(long, value_enum, default_value = "post")]
    pub policy: PolicyFlag,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum SettingsFlag {
    Pi,
    Werner,
    All,
    List,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    /// Serialized density matrix.
    #[arg(long)]
    pub state: PathBuf,
    #[arg(long, value_enum, default_value = "pi")]
    pub settings: SettingsFlag,
    /// JSON list of setting strings, for `--settings list`.
    #[arg(long)]
    pub list: Option<PathBuf>,
    #[arg(long)]
    pub shots: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value = "git")]
    pub mode: EstimatorMode,
    #[arg(long, value_enum, default_value = "permutation")]
    pub symmetry: SymmetryChoice,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub restarts: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    #[arg(long)]
    pub a: PathBuf,
    #[arg(long)]
    pub b: PathBuf,
    #[arg(long, value_enum, default_value = "squared")]
    pub fidelity_convention: FidelityConvention,
    /// Write the report here instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: ExportFormat,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn read_text(path: &Path) -> anyhow::Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

pub fn read_density(path: &Path) -> anyhow::Result<DensityMatrix> {
    let json: MatrixJson =
        serde_json::from_str(&read_text(path)?).with_context(|| format!("parsing {}", path.display()))?;
    let rho = DensityMatrix::from_matrix(json.to_matrix()?).with_context(|| format!("{} is not a density matrix", path.display()))?;
    Ok(rho)
}

fn basis(args: &BasisArgs) -> anyhow::Result<()> {
    let kind = match args.symmetry {
        BasisSymmetry::Permutation => SymmetryKind::Permutation,
        BasisSymmetry::Collective => SymmetryKind::CollectiveUnitary,
        BasisSymmetry::Custom => {
            let Some(path) = &args.generators else {
                bail!("--symmetry custom needs --generators FILE");
            };
            let list: Vec<MatrixJson> =
                serde_json::from_str(&read_text(path)?).with_context(|| format!("parsing {}", path.display()))?;
            let mats = list.iter().map(MatrixJson::to_matrix).collect::<crate::Result<Vec<_>>>()?;
            SymmetryKind::CustomUnitaries(mats)
        }
    };
    let spec = SymmetrySpec::new(args.qubits, kind)?;
    let basis = compute_commutant_basis(&spec)?;
    write_json(&args.out, &basis.to_json())?;
    log::info!("basis with {} elements written to {}", basis.r(), args.out.display());
    Ok(())
}

fn prepare(args: &PrepareArgs) -> anyhow::Result<()> {
    let spec = match args.state {
        StateFamily::Ghz => StateSpec::Ghz {
            n: args.qubits,
            theta: args.theta,
        },
        StateFamily::Twisted => StateSpec::Twisted {
            n: args.qubits,
            theta: args.theta,
        },
        StateFamily::Werner => StateSpec::WernerCircuit {
            theta_a: args.theta_a,
            theta_b: args.theta_b,
        },
        StateFamily::WernerExact => StateSpec::WernerExact { p: args.p, p2: args.p2 },
    };
    let policy = match args.policy {
        PolicyFlag::Post => NoisePolicy::PostPreparation,
        PolicyFlag::Pergate => NoisePolicy::PerGate,
    };
    let noise = NoiseModel::new(args.noise.into(), args.level, policy)?;
    let rho = spec.prepare(&noise)?;
    write_json(&args.out, &MatrixJson::from(&rho))
}

fn sample(args: &SampleArgs) -> anyhow::Result<()> {
    let rho = read_density(&args.state)?;
    let n = crate::operators::qubits_for_dim(rho.dim())?;
    let settings: Vec<PauliSetting> = match args.settings {
        SettingsFlag::Pi => pi_settings(n),
        SettingsFlag::All => all_settings(n),
        SettingsFlag::Werner => EstimationPlan::new(SymmetryChoice::Collective, n)?.git_settings,
        SettingsFlag::List => {
            let Some(path) = &args.list else {
                bail!("--settings list needs --list FILE");
            };
            let names: Vec<String> =
                serde_json::from_str(&read_text(path)?).with_context(|| format!("parsing {}", path.display()))?;
            let settings = names.into_iter().map(PauliSetting::new).collect::<crate::Result<Vec<_>>>()?;
            if let Some(s) = settings.iter().find(|s| s.n_qubits() != n) {
                bail!("setting {} does not match the {n}-qubit state", s.axes());
            }
            settings
        }
    };
    let records = crate::harness::sample_settings(&rho, &settings, args.shots, args.seed)?;
    write_histograms(&args.out, &HistogramFile { n_qubits: n, records })?;
    Ok(())
}

fn estimate(args: &EstimateArgs) -> anyhow::Result<()> {
    let data = ingest_histograms(&args.data)?;
    let defaults = EstimatorConfig::default();
    let config = EstimatorConfig {
        alpha: args.alpha.unwrap_or(defaults.alpha),
        beta: args.beta.unwrap_or(defaults.beta),
        gamma: args.gamma.unwrap_or(defaults.gamma),
        restarts: args.restarts.unwrap_or(defaults.restarts),
        seed: args.seed,
        ..defaults
    };
    config.validate()?;
    let plan = EstimationPlan::new(args.symmetry, data.n_qubits)?;
    let (family, freq) = plan.family(args.mode);
    let records = records_from_histograms(&data.records, &family, freq)?;
    let result = plan.estimate(args.mode, records, &config)?;
    if !result.converged {
        log::warn!("solver did not converge in {} iterations", result.iterations);
    }
    write_json(&args.out, &result.report(args.mode))
}

fn metrics(args: &MetricsArgs) -> anyhow::Result<()> {
    let a = read_density(&args.a)?;
    let b = read_density(&args.b)?;
    let report = compare(&a, &b, args.fidelity_convention)?;
    match &args.out {
        Some(path) => write_json(path, &report),
        None => {
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok(())
        }
    }
}

fn sweep(args: &SweepArgs) -> anyhow::Result<()> {
    let config = SweepConfig::load(&args.config)?;
    let output = write_sweep(&args.out_dir, &config, args.jobs.max(1), args.format)?;
    let failed = output.records.iter().filter(|r| !r.converged).count();
    if failed > 0 {
        log::warn!("{failed} of {} estimates did not converge", output.records.len());
    }
    log::info!("{} records written to {}", output.records.len(), args.out_dir.display());
    Ok(())
}

pub fn run(cli: &Cli) -> anyhow::Result<()> {
    match &cli.command {
        Command::Basis(a) => basis(a),
        Command::Prepare(a) => prepare(a),
        Command::Sample(a) => sample(a),
        Command::Estimate(a) => estimate(a),
        Command::Metrics(a) => metrics(a),
        Command::Sweep(a) => sweep(a),
    }
}
