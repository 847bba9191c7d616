//! Noise, shot and observable-count sweeps with plot-ready statistics.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TomoError};
use crate::estimation::{solve_cvqt, solve_git, solve_maxlik, EstimationResult, EstimatorConfig, EstimatorMode};
use crate::measurement::{
    all_settings, born_probabilities, covered_observables, design_rank, full_observables, mix_seed, pi_observables,
    pi_settings, records_analytic, records_from_histograms, sample_histogram, select_settings, FrequencyMode,
    ObservableRecord, OutcomeHistogram, PauliSetting,
};
use crate::metrics::fidelity;
use crate::operators::DensityMatrix;
use crate::statesim::{Channel, NoiseModel, NoisePolicy, StateSpec};
use crate::symmetry::{compute_commutant_basis, SymmetricBasis, SymmetrySpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum SymmetryChoice {
    Permutation,
    Collective,
}

impl SymmetryChoice {
    pub fn spec(self, n_qubits: usize) -> SymmetrySpec {
        match self {
            SymmetryChoice::Permutation => SymmetrySpec::permutation(n_qubits),
            SymmetryChoice::Collective => SymmetrySpec::collective(n_qubits),
        }
    }
}

/// Settings, observable families and frequency rules for each estimator.
///
/// GIT measures only its own settings: the PI settings under permutations,
/// or the fewest greedily chosen settings that make the basis identifiable
/// under collective unitaries. cVQT and MaxLik measure every Pauli setting.
#[derive(Clone, Debug)]
pub struct EstimationPlan {
    pub n_qubits: usize,
    pub symmetry: SymmetryChoice,
    pub basis: SymmetricBasis,
    pub git_settings: Vec<PauliSetting>,
    pub git_family: Vec<String>,
    pub git_mode: FrequencyMode,
}

impl EstimationPlan {
    pub fn new(symmetry: SymmetryChoice, n_qubits: usize) -> Result<Self> {
        let basis = compute_commutant_basis(&symmetry.spec(n_qubits))?;
        let (git_settings, git_family, git_mode) = match symmetry {
            SymmetryChoice::Permutation => (
                pi_settings(n_qubits),
                pi_observables(n_qubits),
                FrequencyMode::PermutationInvariant,
            ),
            SymmetryChoice::Collective => {
                let candidates = all_settings(n_qubits);
                let mut k = 1;
                let mut chosen = select_settings(&basis, &candidates, k);
                while design_rank(&basis, &chosen) < basis.r() && k < candidates.len() {
                    k += 1;
                    chosen = select_settings(&basis, &candidates, k);
                }
                (chosen, full_observables(n_qubits), FrequencyMode::Exact)
            }
        };
        Ok(Self {
            n_qubits,
            symmetry,
            basis,
            git_settings,
            git_family,
            git_mode,
        })
    }

    pub fn settings(&self, mode: EstimatorMode) -> Vec<PauliSetting> {
        match mode {
            EstimatorMode::Git => self.git_settings.clone(),
            EstimatorMode::Cvqt | EstimatorMode::Maxlik => all_settings(self.n_qubits),
        }
    }

    pub fn family(&self, mode: EstimatorMode) -> (Vec<String>, FrequencyMode) {
        match mode {
            EstimatorMode::Git => (self.git_family.clone(), self.git_mode),
            EstimatorMode::Cvqt | EstimatorMode::Maxlik => (full_observables(self.n_qubits), FrequencyMode::Exact),
        }
    }

    /// Settings to sample so that every requested mode sees the same shots.
    pub fn sampled_settings(&self, modes: &[EstimatorMode]) -> Vec<PauliSetting> {
        if modes.iter().any(|&m| m != EstimatorMode::Git) {
            all_settings(self.n_qubits)
        } else {
            self.git_settings.clone()
        }
    }

    /// Records for `mode` built from whichever of `histograms` it measures.
    pub fn records(&self, mode: EstimatorMode, histograms: &[OutcomeHistogram]) -> Result<Vec<ObservableRecord>> {
        let wanted: BTreeSet<PauliSetting> = self.settings(mode).into_iter().collect();
        let used: Vec<OutcomeHistogram> = histograms.iter().filter(|h| wanted.contains(&h.setting)).cloned().collect();
        let (family, freq) = self.family(mode);
        records_from_histograms(&used, &family, freq)
    }

    pub fn records_analytic(&self, mode: EstimatorMode, rho: &DensityMatrix) -> Result<Vec<ObservableRecord>> {
        let (family, freq) = self.family(mode);
        records_analytic(rho, &self.settings(mode), &family, freq)
    }

    pub fn estimate(
        &self,
        mode: EstimatorMode,
        records: Vec<ObservableRecord>,
        config: &EstimatorConfig,
    ) -> Result<EstimationResult> {
        match mode {
            EstimatorMode::Git => solve_git(records, &self.basis, config),
            EstimatorMode::Cvqt => solve_cvqt(records, config),
            EstimatorMode::Maxlik => solve_maxlik(&records, config),
        }
    }
}

fn default_modes() -> Vec<EstimatorMode> {
    vec![EstimatorMode::Git, EstimatorMode::Cvqt]
}

fn default_channels() -> Vec<Channel> {
    vec![Channel::Depolarizing]
}

fn default_levels() -> Vec<f64> {
    (0..=10).map(|k| k as f64 / 20.0).collect()
}

fn default_shots() -> Vec<u64> {
    vec![128, 512, 2048, 8192]
}

fn default_repetitions() -> usize {
    30
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub state: StateSpec,
    pub symmetry: SymmetryChoice,
    #[serde(default = "default_modes")]
    pub modes: Vec<EstimatorMode>,
    #[serde(default = "default_channels")]
    pub channels: Vec<Channel>,
    #[serde(default = "default_levels")]
    pub levels: Vec<f64>,
    #[serde(default)]
    pub noise_policy: NoisePolicy,
    #[serde(default = "default_shots")]
    pub shots: Vec<u64>,
    /// Prefix lengths for the observable-count sweep; `None` means all.
    #[serde(default)]
    pub observable_counts: Option<Vec<usize>>,
    /// Infinite-shot frequencies in the observable-count sweep.
    #[serde(default)]
    pub analytic: bool,
    #[serde(default = "default_repetitions")]
    pub repetitions: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default)]
    pub estimator: EstimatorConfig,
}

impl SweepConfig {
    /// Config with every grid at its default.
    pub fn new(state: StateSpec, symmetry: SymmetryChoice) -> Self {
        Self {
            state,
            symmetry,
            modes: default_modes(),
            channels: default_channels(),
            levels: default_levels(),
            noise_policy: NoisePolicy::default(),
            shots: default_shots(),
            observable_counts: None,
            analytic: false,
            repetitions: default_repetitions(),
            base_seed: 0,
            estimator: EstimatorConfig::default(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let config: Self = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| TomoError::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let empty = |what: &str| Err(TomoError::InvalidArgument(format!("sweep {what} grid is empty")));
        if self.modes.is_empty() {
            return empty("mode");
        }
        if self.channels.is_empty() {
            return empty("channel");
        }
        if self.levels.is_empty() {
            return empty("noise level");
        }
        if self.shots.is_empty() {
            return empty("shots");
        }
        if self.repetitions == 0 {
            return Err(TomoError::InvalidArgument("repetitions must be at least 1".into()));
        }
        for &level in &self.levels {
            if !(0.0..=1.0).contains(&level) {
                return Err(TomoError::OutOfUnitRange {
                    name: "noise level",
                    value: level,
                });
            }
        }
        if self.shots.contains(&0) {
            return Err(TomoError::InvalidArgument("shot counts must be positive".into()));
        }
        if let Some(ks) = &self.observable_counts {
            if ks.is_empty() {
                return empty("observable count");
            }
            if ks.contains(&0) {
                return Err(TomoError::InvalidArgument("observable count 0 is not allowed".into()));
            }
        }
        self.estimator.validate()
    }
}

/// One estimate at one grid point and repetition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub channel: Channel,
    pub level: f64,
    pub shots: u64,
    pub repetition: usize,
    pub mode: EstimatorMode,
    pub seed: u64,
    pub fidelity_vs_target: f64,
    pub fidelity_vs_real: f64,
    pub fidelity_git_vs_cvqt: Option<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub feasibility_residual: f64,
    pub converged: bool,
    pub error: Option<String>,
}

/// Mean and sample standard deviation over the repetitions of one grid point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub channel: Channel,
    pub level: f64,
    pub shots: u64,
    pub mode: EstimatorMode,
    pub count: usize,
    pub fidelity_vs_target_mean: f64,
    pub fidelity_vs_target_std: f64,
    pub fidelity_vs_real_mean: f64,
    pub fidelity_vs_real_std: f64,
    pub fidelity_git_vs_cvqt_mean: Option<f64>,
    pub fidelity_git_vs_cvqt_std: Option<f64>,
    pub converged_fraction: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub rows: Vec<SummaryRow>,
}

impl SweepSummary {
    pub fn find(&self, channel: Channel, level: f64, shots: u64, mode: EstimatorMode) -> Option<&SummaryRow> {
        self.rows
            .iter()
            .find(|r| r.channel == channel && r.level == level && r.shots == shots && r.mode == mode)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedEntry {
    pub channel: Channel,
    pub level: f64,
    pub shots: u64,
    pub repetition: usize,
    pub seed: u64,
}

#[derive(Clone, Debug)]
pub struct SweepOutput {
    pub records: Vec<SweepRecord>,
    pub summary: SweepSummary,
    pub seeds: Vec<SeedEntry>,
}

/// `(mean, sample std)`; the std of a single value is zero.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    // identical values would otherwise pick up round-off spread
    if values.iter().all(|&v| v == values[0]) {
        return (values[0], 0.0);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

/// Stable code of a setting, distinct for distinct axis strings.
fn setting_code(setting: &PauliSetting) -> u64 {
    setting.axes().bytes().fold(1u64, |acc, b| {
        acc.wrapping_mul(4).wrapping_add(match b {
            b'X' => 1,
            b'Y' => 2,
            _ => 3,
        })
    })
}

/// Sampling seed of one grid point and repetition.
pub fn point_seed(base: u64, channel: usize, level: usize, shots: usize, repetition: usize) -> u64 {
    mix_seed(base, &[channel as u64, level as u64, shots as u64, repetition as u64])
}

/// One histogram per setting, each from its own seed derived from `seed`.
pub fn sample_settings(
    rho: &DensityMatrix,
    settings: &[PauliSetting],
    shots: u64,
    seed: u64,
) -> Result<Vec<OutcomeHistogram>> {
    settings
        .iter()
        .map(|s| sample_histogram(s, &born_probabilities(rho, s)?, shots, mix_seed(seed, &[setting_code(s)])))
        .collect()
}

#[derive(Clone, Copy)]
struct Task {
    channel: usize,
    level: usize,
    shots: usize,
    repetition: usize,
}

fn run_in_pool<T: Send, F>(jobs: usize, tasks: &[Task], f: F) -> Result<Vec<T>>
where
    F: Fn(&Task) -> Result<T> + Sync + Send,
{
    if jobs <= 1 {
        return tasks.iter().map(&f).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| TomoError::Internal(format!("thread pool: {e}")))?;
    // indexed collect keeps grid order whatever the scheduling
    pool.install(|| tasks.par_iter().map(&f).collect())
}

fn grid_tasks(config: &SweepConfig, shots_axis: usize, repetitions: usize) -> Vec<Task> {
    let mut tasks = Vec::new();
    for channel in 0..config.channels.len() {
        for level in 0..config.levels.len() {
            for shots in 0..shots_axis {
                for repetition in 0..repetitions {
                    tasks.push(Task {
                        channel,
                        level,
                        shots,
                        repetition,
                    });
                }
            }
        }
    }
    tasks
}

fn failed_record(result: Result<EstimationResult>, dim: usize) -> (EstimationResult, Option<String>) {
    match result {
        Ok(r) => (r, None),
        Err(e) => {
            log::warn!("estimation failed: {e}");
            let rho_hat = DensityMatrix::maximally_mixed(dim);
            (
                EstimationResult {
                    rho_hat,
                    objective: f64::NAN,
                    delta: Vec::new(),
                    feasibility_residual: f64::NAN,
                    iterations: 0,
                    converged: false,
                },
                Some(e.to_string()),
            )
        }
    }
}

/// Noise and shot sweep. Solver failures become records with
/// `converged = false` and a maximally mixed estimate.
pub fn run_sweep(config: &SweepConfig, jobs: usize) -> Result<SweepOutput> {
    config.validate()?;
    let n = config.state.n_qubits();
    let plan = EstimationPlan::new(config.symmetry, n)?;
    let target = config.state.target()?;
    let sampled = plan.sampled_settings(&config.modes);
    let tasks = grid_tasks(config, config.shots.len(), config.repetitions);

    let per_task = run_in_pool(jobs, &tasks, |t| {
        let channel = config.channels[t.channel];
        let level = config.levels[t.level];
        let shots = config.shots[t.shots];
        let real = config.state.prepare(&NoiseModel::new(channel, level, config.noise_policy)?)?;
        let seed = point_seed(config.base_seed, t.channel, t.level, t.shots, t.repetition);
        let histograms = sample_settings(&real, &sampled, shots, seed)?;

        let mut estimates = Vec::with_capacity(config.modes.len());
        for &mode in &config.modes {
            let result = plan
                .records(mode, &histograms)
                .and_then(|records| plan.estimate(mode, records, &config.estimator));
            estimates.push((mode, failed_record(result, target.dim())));
        }
        let git = estimates.iter().find(|(m, _)| *m == EstimatorMode::Git);
        let cvqt = estimates.iter().find(|(m, _)| *m == EstimatorMode::Cvqt);
        let cross = match (git, cvqt) {
            (Some((_, (a, _))), Some((_, (b, _)))) => Some(fidelity(&a.rho_hat, &b.rho_hat)?),
            _ => None,
        };

        let mut records = Vec::with_capacity(estimates.len());
        for (mode, (result, error)) in estimates {
            records.push(SweepRecord {
                channel,
                level,
                shots,
                repetition: t.repetition,
                mode,
                seed,
                fidelity_vs_target: fidelity(&result.rho_hat, &target)?,
                fidelity_vs_real: fidelity(&result.rho_hat, &real)?,
                fidelity_git_vs_cvqt: if matches!(mode, EstimatorMode::Git | EstimatorMode::Cvqt) {
                    cross
                } else {
                    None
                },
                objective: result.objective,
                iterations: result.iterations,
                feasibility_residual: result.feasibility_residual,
                converged: result.converged && error.is_none(),
                error,
            });
        }
        Ok((
            SeedEntry {
                channel,
                level,
                shots,
                repetition: t.repetition,
                seed,
            },
            records,
        ))
    })?;

    let mut seeds = Vec::with_capacity(per_task.len());
    let mut records = Vec::new();
    for (seed, recs) in per_task {
        seeds.push(seed);
        records.extend(recs);
    }
    let summary = summarize(&records)?;
    Ok(SweepOutput {
        records,
        summary,
        seeds,
    })
}

/// Groups records by grid point and mode, in order of first appearance.
pub fn summarize(records: &[SweepRecord]) -> Result<SweepSummary> {
    if records.is_empty() {
        return Err(TomoError::InvalidArgument("no records to summarize".into()));
    }
    let mut groups: Vec<(SweepRecord, Vec<&SweepRecord>)> = Vec::new();
    for r in records {
        let key = |g: &SweepRecord| g.channel == r.channel && g.level == r.level && g.shots == r.shots && g.mode == r.mode;
        match groups.iter_mut().find(|(g, _)| key(g)) {
            Some((_, members)) => members.push(r),
            None => groups.push((r.clone(), vec![r])),
        }
    }
    let rows = groups
        .into_iter()
        .map(|(head, members)| {
            let pick = |f: fn(&SweepRecord) -> f64| members.iter().map(|r| f(r)).collect::<Vec<f64>>();
            let (t_mean, t_std) = mean_std(&pick(|r| r.fidelity_vs_target));
            let (r_mean, r_std) = mean_std(&pick(|r| r.fidelity_vs_real));
            let cross: Vec<f64> = members.iter().filter_map(|r| r.fidelity_git_vs_cvqt).collect();
            let (c_mean, c_std) = if cross.is_empty() {
                (None, None)
            } else {
                let (m, s) = mean_std(&cross);
                (Some(m), Some(s))
            };
            let converged = members.iter().filter(|r| r.converged).count();
            SummaryRow {
                channel: head.channel,
                level: head.level,
                shots: head.shots,
                mode: head.mode,
                count: members.len(),
                fidelity_vs_target_mean: t_mean,
                fidelity_vs_target_std: t_std,
                fidelity_vs_real_mean: r_mean,
                fidelity_vs_real_std: r_std,
                fidelity_git_vs_cvqt_mean: c_mean,
                fidelity_git_vs_cvqt_std: c_std,
                converged_fraction: converged as f64 / members.len() as f64,
            }
        })
        .collect();
    Ok(SweepSummary { rows })
}

/// One estimate from the first `k` observables of the ordered list.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CountRecord {
    pub channel: Channel,
    pub level: f64,
    /// Zero for analytic data.
    pub shots: u64,
    pub repetition: usize,
    pub k: usize,
    /// The `k`-th observable added.
    pub observable: String,
    pub fidelity_vs_target: f64,
    pub fidelity_vs_real: f64,
    /// Against the estimate that uses every observable of the list.
    pub fidelity_vs_reference: f64,
    pub converged: bool,
    pub error: Option<String>,
}

/// GIT observables in the order they enter the count sweep: settings by
/// greedy selection, each followed by its not yet listed identity
/// completions. The all-identity string is left out since it only fixes
/// the trace.
pub fn ordered_observables(plan: &EstimationPlan) -> Vec<String> {
    let candidates = match plan.symmetry {
        SymmetryChoice::Permutation => plan.git_settings.clone(),
        SymmetryChoice::Collective => all_settings(plan.n_qubits),
    };
    let order = select_settings(&plan.basis, &candidates, candidates.len());
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for setting in &order {
        for t in covered_observables(&plan.git_family, std::slice::from_ref(setting), plan.git_mode) {
            if t.chars().all(|c| c == 'I') {
                continue;
            }
            if seen.insert(t.clone()) {
                out.push(t);
            }
        }
    }
    out
}

/// Keeps the first `k` observables of `order` (plus the identity) measured.
fn prefix_records(full: &[ObservableRecord], order: &[String], k: usize) -> Result<Vec<ObservableRecord>> {
    let keep: BTreeSet<&str> = order[..k].iter().map(String::as_str).collect();
    full.iter()
        .map(|r| {
            if r.is_identity() || keep.contains(r.ops.as_str()) || !r.measured {
                Ok(r.clone())
            } else {
                ObservableRecord::unmeasured(&r.ops)
            }
        })
        .collect()
}

/// GIT estimates from growing prefixes of [`ordered_observables`], over the
/// channel and level grids and, unless analytic, the shots grid.
pub fn observable_count_sweep(config: &SweepConfig, jobs: usize) -> Result<Vec<CountRecord>> {
    config.validate()?;
    let n = config.state.n_qubits();
    let plan = EstimationPlan::new(config.symmetry, n)?;
    let order = ordered_observables(&plan);
    let ks: Vec<usize> = match &config.observable_counts {
        Some(ks) => ks.clone(),
        None => (1..=order.len()).collect(),
    };
    if let Some(&k) = ks.iter().find(|&&k| k > order.len()) {
        return Err(TomoError::InvalidArgument(format!(
            "observable count {k} exceeds the {} available observables",
            order.len()
        )));
    }
    let target = config.state.target()?;
    let (shots_axis, repetitions) = if config.analytic {
        (1, 1)
    } else {
        (config.shots.len(), config.repetitions)
    };
    let tasks = grid_tasks(config, shots_axis, repetitions);

    let per_task = run_in_pool(jobs, &tasks, |t| {
        let channel = config.channels[t.channel];
        let level = config.levels[t.level];
        let real = config.state.prepare(&NoiseModel::new(channel, level, config.noise_policy)?)?;
        let (shots, full) = if config.analytic {
            (0, plan.records_analytic(EstimatorMode::Git, &real)?)
        } else {
            let shots = config.shots[t.shots];
            let seed = point_seed(config.base_seed, t.channel, t.level, t.shots, t.repetition);
            let histograms = sample_settings(&real, &plan.git_settings, shots, seed)?;
            (shots, plan.records(EstimatorMode::Git, &histograms)?)
        };
        let (reference, _) = failed_record(plan.estimate(EstimatorMode::Git, full.clone(), &config.estimator), target.dim());
        let mut out = Vec::with_capacity(ks.len());
        for &k in &ks {
            let result = prefix_records(&full, &order, k)
                .and_then(|records| plan.estimate(EstimatorMode::Git, records, &config.estimator));
            let (result, error) = failed_record(result, target.dim());
            out.push(CountRecord {
                channel,
                level,
                shots,
                repetition: t.repetition,
                k,
                observable: order[k - 1].clone(),
                fidelity_vs_target: fidelity(&result.rho_hat, &target)?,
                fidelity_vs_real: fidelity(&result.rho_hat, &real)?,
                fidelity_vs_reference: fidelity(&result.rho_hat, &reference.rho_hat)?,
                converged: result.converged && error.is_none(),
                error,
            });
        }
        Ok(out)
    })?;
    Ok(per_task.into_iter().flatten().collect())
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ExportFormat {
    #[default]
    Csv,
    Json,
}

impl ExportFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ExportFormat::Csv => "csv",
            ExportFormat::Json => "json",
        }
    }
}

/// Writes rows as CSV (header from the field names, fixed order) or JSON.
pub fn export<T: Serialize>(rows: &[T], path: impl AsRef<Path>, format: ExportFormat) -> Result<()> {
    let path = path.as_ref();
    match format {
        ExportFormat::Csv => {
            let mut writer = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
            for row in rows {
                writer.serialize(row).map_err(|e| csv_error(path, e))?;
            }
            writer.flush().map_err(|e| TomoError::io(path, e))
        }
        ExportFormat::Json => {
            let text = serde_json::to_string_pretty(rows)?;
            fs::write(path, text + "\n").map_err(|e| TomoError::io(path, e))
        }
    }
}

/// Reads rows written by [`export`].
pub fn import<T: DeserializeOwned>(path: impl AsRef<Path>, format: ExportFormat) -> Result<Vec<T>> {
    let path = path.as_ref();
    match format {
        ExportFormat::Csv => {
            let mut reader = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
            reader
                .deserialize()
                .map(|row| row.map_err(|e| csv_error(path, e)))
                .collect()
        }
        ExportFormat::Json => {
            let text = fs::read_to_string(path).map_err(|e| TomoError::io(path, e))?;
            Ok(serde_json::from_str(&text)?)
        }
    }
}

fn csv_error(path: &Path, e: csv::Error) -> TomoError {
    if e.is_io_error() {
        if let csv::ErrorKind::Io(io) = e.into_kind() {
            return TomoError::io(path, io);
        }
        unreachable!("is_io_error implies an io kind");
    }
    TomoError::schema(path.display().to_string(), e.to_string())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub toolkit_version: String,
    pub config: SweepConfig,
    pub seeds: Vec<SeedEntry>,
}

/// Writes `records`, `summary` and `manifest.json` into `dir`, plus
/// `counts` when the config asks for an observable-count sweep.
pub fn write_sweep(dir: impl AsRef<Path>, config: &SweepConfig, jobs: usize, format: ExportFormat) -> Result<SweepOutput> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| TomoError::io(dir, e))?;
    let output = run_sweep(config, jobs)?;
    let ext = format.extension();
    export(&output.records, dir.join(format!("records.{ext}")), format)?;
    export(&output.summary.rows, dir.join(format!("summary.{ext}")), format)?;
    if config.observable_counts.is_some() {
        let counts = observable_count_sweep(config, jobs)?;
        export(&counts, dir.join(format!("counts.{ext}")), format)?;
    }
    let manifest = Manifest {
        toolkit_version: env!("CARGO_PKG_VERSION").to_string(),
        config: config.clone(),
        seeds: output.seeds.clone(),
    };
    let path = dir.join("manifest.json");
    fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n").map_err(|e| TomoError::io(&path, e))?;
    Ok(output)
}
