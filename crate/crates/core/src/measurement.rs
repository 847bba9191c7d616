//! Pauli measurement settings, Born probabilities, finite-shot sampling,
//! identity marginalization and the on-disk histogram format.
//!
//! Outcome bit 0 on a qubit means the `+1` eigenvalue of the measured Pauli
//! axis; outcome strings are big-endian over qubit index.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TomoError};
use crate::operators::{
    conjugate_local, pauli, tensor_all, ComplexMatrix, DensityMatrix, HermitianOperator, C64, ONE,
};
use crate::symmetry::SymmetricBasis;

/// One Pauli axis per qubit.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct PauliSetting(String);

impl PauliSetting {
    pub fn new(axes: impl Into<String>) -> Result<Self> {
        let axes = axes.into();
        if axes.is_empty() || !axes.chars().all(|c| matches!(c, 'X' | 'Y' | 'Z')) {
            return Err(TomoError::InvalidArgument(format!(
                "setting {axes:?} must be a nonempty string over X, Y, Z"
            )));
        }
        Ok(Self(axes))
    }

    pub fn axes(&self) -> &str {
        &self.0
    }

    pub fn n_qubits(&self) -> usize {
        self.0.len()
    }

    fn axis(&self, q: usize) -> char {
        self.0.as_bytes()[q] as char
    }
}

impl fmt::Display for PauliSetting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl TryFrom<String> for PauliSetting {
    type Error = TomoError;
    fn try_from(value: String) -> Result<Self> {
        Self::new(value)
    }
}

impl From<PauliSetting> for String {
    fn from(value: PauliSetting) -> Self {
        value.0
    }
}

/// Finite-shot outcome counts for one setting. Only observed outcomes are stored.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutcomeHistogram {
    pub setting: PauliSetting,
    pub shots: u64,
    pub counts: BTreeMap<String, u64>,
}

impl OutcomeHistogram {
    pub fn frequencies(&self) -> Vec<f64> {
        let dim = 1usize << self.setting.n_qubits();
        let mut f = vec![0.0; dim];
        for (bits, &c) in &self.counts {
            let index = usize::from_str_radix(bits, 2).expect("validated bitstring");
            f[index] = c as f64 / self.shots as f64;
        }
        f
    }
}

/// `(E_i, f_i, i ∈ I)` for one projector observable.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservableRecord {
    /// One letter per qubit over `{X, Y, Z, I}`.
    pub ops: String,
    /// Tensor of `+1` eigenprojectors, identity on `I` slots.
    pub projector: HermitianOperator,
    /// Observed frequency; meaningless when `measured` is false.
    pub frequency: f64,
    pub measured: bool,
}

impl ObservableRecord {
    pub fn measured(ops: &str, frequency: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&frequency) {
            return Err(TomoError::OutOfUnitRange {
                name: "frequency",
                value: frequency,
            });
        }
        Ok(Self {
            ops: ops.to_string(),
            projector: observable_projector(ops)?,
            frequency,
            measured: true,
        })
    }

    pub fn unmeasured(ops: &str) -> Result<Self> {
        Ok(Self {
            ops: ops.to_string(),
            projector: observable_projector(ops)?,
            frequency: 0.0,
            measured: false,
        })
    }

    pub fn is_identity(&self) -> bool {
        self.ops.chars().all(|c| c == 'I')
    }
}

/// `⊗_j P_{ops_j}` with `P_I = I`.
pub fn observable_projector(ops: &str) -> Result<HermitianOperator> {
    if ops.is_empty() {
        return Err(TomoError::InvalidArgument("empty observable".into()));
    }
    let factors = ops
        .chars()
        .map(|c| {
            pauli::eigenprojector(c, 0)
                .ok_or_else(|| TomoError::InvalidArgument(format!("observable {ops:?} has letter {c:?}")))
        })
        .collect::<Result<Vec<ComplexMatrix>>>()?;
    Ok(HermitianOperator::hermitian_part(&tensor_all(factors.iter())))
}

/// Multisets of size `k` over `letters`, each as a non-decreasing string.
fn multisets(letters: &[char], k: usize) -> Vec<String> {
    fn rec(letters: &[char], k: usize, start: usize, cur: &mut String, out: &mut Vec<String>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..letters.len() {
            cur.push(letters[i]);
            rec(letters, k, i, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(letters, k, 0, &mut String::new(), &mut out);
    out
}

/// One canonical setting per multiset of axes (`X < Y < Z`).
pub fn pi_settings(n_qubits: usize) -> Vec<PauliSetting> {
    multisets(&['X', 'Y', 'Z'], n_qubits)
        .into_iter()
        .map(PauliSetting)
        .collect()
}

/// All `3^n` settings in lexicographic order.
pub fn all_settings(n_qubits: usize) -> Vec<PauliSetting> {
    let mut out = vec![String::new()];
    for _ in 0..n_qubits {
        out = out
            .into_iter()
            .flat_map(|p| ['X', 'Y', 'Z'].into_iter().map(move |c| format!("{p}{c}")))
            .collect();
    }
    out.into_iter().map(PauliSetting).collect()
}

/// Identity-completed observable family for permutation-invariant
/// estimation: every multiset over `{X, Y, Z}` of size `k = n..0`, padded
/// with trailing identities. Size `(n+1)(n+2)(n+3)/6`, all-identity last.
pub fn pi_observables(n_qubits: usize) -> Vec<String> {
    (0..=n_qubits)
        .rev()
        .flat_map(|k| {
            multisets(&['X', 'Y', 'Z'], k)
                .into_iter()
                .map(move |m| format!("{m}{}", "I".repeat(n_qubits - k)))
        })
        .collect()
}

/// All `4^n` strings over `{X, Y, Z, I}`, lexicographic with `I` last.
pub fn full_observables(n_qubits: usize) -> Vec<String> {
    let mut out = vec![String::new()];
    for _ in 0..n_qubits {
        out = out
            .into_iter()
            .flat_map(|p| ['X', 'Y', 'Z', 'I'].into_iter().map(move |c| format!("{p}{c}")))
            .collect();
    }
    out
}

/// `V†` rotating the measured axis eigenbasis onto the computational basis.
fn basis_change(axis: char) -> ComplexMatrix {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let v = match axis {
        'X' => ComplexMatrix::from_row_slice(2, 2, &[ONE, ONE, ONE, -ONE]) * C64::new(s, 0.0),
        'Y' => ComplexMatrix::from_row_slice(2, 2, &[ONE, ONE, C64::new(0.0, 1.0), C64::new(0.0, -1.0)])
            * C64::new(s, 0.0),
        _ => pauli::identity(),
    };
    v.adjoint()
}

/// Diagonal of `V† M V` for the setting's product eigenbasis.
fn rotated_diagonal(m: &ComplexMatrix, setting: &PauliSetting) -> Vec<f64> {
    let n = setting.n_qubits();
    let mut rotated = m.clone();
    for q in 0..n {
        let axis = setting.axis(q);
        if axis != 'Z' {
            rotated = conjugate_local(&rotated, &basis_change(axis), q, n);
        }
    }
    (0..m.nrows()).map(|i| rotated[(i, i)].re).collect()
}

/// Outcome probabilities `tr(Π_b ρ)`, indexed by the big-endian outcome integer.
pub fn born_probabilities(rho: &DensityMatrix, setting: &PauliSetting) -> Result<Vec<f64>> {
    let expected = 1usize << setting.n_qubits();
    if rho.dim() != expected {
        return Err(TomoError::DimensionMismatch {
            expected,
            found: rho.dim(),
        });
    }
    Ok(rotated_diagonal(rho.matrix(), setting)
        .into_iter()
        .map(|p| p.max(0.0))
        .collect())
}

fn bitstring(index: usize, n: usize) -> String {
    format!("{index:0n$b}")
}

/// Multinomial draw of `shots` outcomes, deterministic in `seed`.
pub fn sample_histogram(setting: &PauliSetting, probs: &[f64], shots: u64, seed: u64) -> Result<OutcomeHistogram> {
    let n = setting.n_qubits();
    if probs.len() != 1usize << n {
        return Err(TomoError::InvalidDistribution(format!(
            "{} probabilities for a {n}-qubit setting",
            probs.len()
        )));
    }
    if probs.iter().any(|p| !p.is_finite() || *p < -1e-12) {
        return Err(TomoError::InvalidDistribution("negative or non-finite entry".into()));
    }
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(TomoError::InvalidDistribution(format!("probabilities sum to {total}")));
    }
    if shots == 0 {
        return Err(TomoError::InvalidArgument("shots must be positive".into()));
    }
    let mut cumulative = Vec::with_capacity(probs.len());
    let mut acc = 0.0;
    for p in probs {
        acc += p.max(0.0);
        cumulative.push(acc);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tallies = vec![0u64; probs.len()];
    for _ in 0..shots {
        let u: f64 = rng.gen::<f64>() * acc;
        let idx = cumulative.partition_point(|&c| c <= u).min(probs.len() - 1);
        tallies[idx] += 1;
    }
    let counts = tallies
        .into_iter()
        .enumerate()
        .filter(|(_, c)| *c > 0)
        .map(|(i, c)| (bitstring(i, n), c))
        .collect();
    Ok(OutcomeHistogram {
        setting: setting.clone(),
        shots,
        counts,
    })
}

/// SplitMix64 finalizer.
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Folds coordinates into a base seed with SplitMix64.
pub fn mix_seed(base: u64, coordinates: &[u64]) -> u64 {
    coordinates
        .iter()
        .fold(splitmix64(base), |acc, &c| splitmix64(acc ^ splitmix64(c)))
}

/// Samples every setting of `rho` with `shots` shots each.
pub fn simulate_histograms(
    rho: &DensityMatrix,
    settings: &[PauliSetting],
    shots: u64,
    seed: u64,
) -> Result<Vec<OutcomeHistogram>> {
    settings
        .iter()
        .enumerate()
        .map(|(k, s)| {
            let p = born_probabilities(rho, s)?;
            sample_histogram(s, &p, shots, mix_seed(seed, &[k as u64]))
        })
        .collect()
}

/// How identity-containing and permutation-equivalent targets are matched.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrequencyMode {
    /// Non-identity slots must match the setting position by position.
    Exact,
    /// Any qubit subset whose axes form the target's multiset counts, so
    /// permutation-equivalent data are pooled.
    PermutationInvariant,
}

/// Per-setting outcome distribution with a pooling weight (shots, or 1 for analytic data).
struct SettingData<'a> {
    setting: &'a PauliSetting,
    probs: Vec<f64>,
    weight: f64,
}

fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(n: usize, k: usize, start: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(n, k, i + 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(n, k, 0, &mut Vec::new(), &mut out);
    out
}

/// Probability that every listed qubit reads bit 0.
fn marginal_all_zero(probs: &[f64], positions: &[usize], n: usize) -> f64 {
    let mask: usize = positions.iter().map(|&q| 1usize << (n - 1 - q)).sum();
    probs
        .iter()
        .enumerate()
        .filter(|(i, _)| i & mask == 0)
        .map(|(_, p)| p)
        .sum()
}

fn sorted_letters(s: impl Iterator<Item = char>) -> Vec<char> {
    let mut v: Vec<char> = s.collect();
    v.sort_unstable();
    v
}

fn extract(data: &[SettingData<'_>], targets: &[String], mode: FrequencyMode) -> Result<Vec<ObservableRecord>> {
    let n = match (data.first(), targets.first()) {
        (Some(d), _) => d.setting.n_qubits(),
        (None, Some(t)) => t.len(),
        (None, None) => return Ok(Vec::new()),
    };
    for d in data {
        if d.setting.n_qubits() != n {
            return Err(TomoError::DimensionMismatch {
                expected: n,
                found: d.setting.n_qubits(),
            });
        }
    }
    targets
        .iter()
        .map(|t| {
            if t.len() != n {
                return Err(TomoError::DimensionMismatch {
                    expected: n,
                    found: t.len(),
                });
            }
            let active: Vec<usize> = t.char_indices().filter(|(_, c)| *c != 'I').map(|(i, _)| i).collect();
            if active.is_empty() {
                return ObservableRecord::measured(t, 1.0);
            }
            let wanted = sorted_letters(active.iter().map(|&q| t.as_bytes()[q] as char));
            let (mut num, mut den) = (0.0, 0.0);
            for d in data {
                match mode {
                    FrequencyMode::Exact => {
                        if active.iter().all(|&q| d.setting.axis(q) == t.as_bytes()[q] as char) {
                            num += d.weight * marginal_all_zero(&d.probs, &active, n);
                            den += d.weight;
                        }
                    }
                    FrequencyMode::PermutationInvariant => {
                        for positions in subsets(n, active.len()) {
                            let letters = sorted_letters(positions.iter().map(|&q| d.setting.axis(q)));
                            if letters == wanted {
                                num += d.weight * marginal_all_zero(&d.probs, &positions, n);
                                den += d.weight;
                            }
                        }
                    }
                }
            }
            if den == 0.0 {
                return Err(TomoError::NoConsistentHistogram(t.clone()));
            }
            ObservableRecord::measured(t, (num / den).clamp(0.0, 1.0))
        })
        .collect()
}

/// Frequencies of the target observables from finite-shot histograms.
pub fn extract_frequencies(
    hists: &[OutcomeHistogram],
    targets: &[String],
    mode: FrequencyMode,
) -> Result<Vec<ObservableRecord>> {
    let data: Vec<SettingData<'_>> = hists
        .iter()
        .map(|h| SettingData {
            setting: &h.setting,
            probs: h.frequencies(),
            weight: h.shots as f64,
        })
        .collect();
    extract(&data, targets, mode)
}

/// Infinite-statistics variant of [`extract_frequencies`]: Born
/// probabilities of `rho` for each setting stand in for histograms.
pub fn extract_frequencies_analytic(
    rho: &DensityMatrix,
    settings: &[PauliSetting],
    targets: &[String],
    mode: FrequencyMode,
) -> Result<Vec<ObservableRecord>> {
    let data = settings
        .iter()
        .map(|s| {
            Ok(SettingData {
                setting: s,
                probs: born_probabilities(rho, s)?,
                weight: 1.0,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    extract(&data, targets, mode)
}

/// Observables that can be marginalized from `settings` in the given mode.
pub fn covered_observables(candidates: &[String], settings: &[PauliSetting], mode: FrequencyMode) -> Vec<String> {
    candidates
        .iter()
        .filter(|t| {
            let n = t.len();
            let active: Vec<usize> = t.char_indices().filter(|(_, c)| *c != 'I').map(|(i, _)| i).collect();
            if active.is_empty() {
                return true;
            }
            let wanted = sorted_letters(active.iter().map(|&q| t.as_bytes()[q] as char));
            settings.iter().any(|s| match mode {
                FrequencyMode::Exact => active.iter().all(|&q| s.axis(q) == t.as_bytes()[q] as char),
                FrequencyMode::PermutationInvariant => subsets(n, active.len())
                    .iter()
                    .any(|pos| sorted_letters(pos.iter().map(|&q| s.axis(q))) == wanted),
            })
        })
        .cloned()
        .collect()
}

/// Records for `family`: targets covered by the histograms are measured,
/// the rest are kept as unmeasured projectors.
pub fn records_from_histograms(
    hists: &[OutcomeHistogram],
    family: &[String],
    mode: FrequencyMode,
) -> Result<Vec<ObservableRecord>> {
    let settings: Vec<PauliSetting> = hists.iter().map(|h| h.setting.clone()).collect();
    let covered = covered_observables(family, &settings, mode);
    let mut measured = extract_frequencies(hists, &covered, mode)?.into_iter();
    let mut out = Vec::with_capacity(family.len());
    for t in family {
        if covered.contains(t) {
            out.push(measured.next().expect("one record per covered target"));
        } else {
            out.push(ObservableRecord::unmeasured(t)?);
        }
    }
    Ok(out)
}

/// Analytic counterpart of [`records_from_histograms`].
pub fn records_analytic(
    rho: &DensityMatrix,
    settings: &[PauliSetting],
    family: &[String],
    mode: FrequencyMode,
) -> Result<Vec<ObservableRecord>> {
    let covered = covered_observables(family, settings, mode);
    let mut measured = extract_frequencies_analytic(rho, settings, &covered, mode)?.into_iter();
    family
        .iter()
        .map(|t| {
            if covered.contains(t) {
                Ok(measured.next().expect("one record per covered target"))
            } else {
                ObservableRecord::unmeasured(t)
            }
        })
        .collect()
}

/// Rows `tr(Π_b S_i)` of the map from basis coefficients to outcome probabilities.
fn setting_design_block(basis: &SymmetricBasis, setting: &PauliSetting) -> DMatrix<f64> {
    let dim = basis.dim();
    let mut block = DMatrix::zeros(dim, basis.r());
    for (j, s) in basis.elements().iter().enumerate() {
        for (b, v) in rotated_diagonal(s.matrix(), setting).into_iter().enumerate() {
            block[(b, j)] = v;
        }
    }
    block
}

/// Rank and condition number (over the nonzero singular values).
fn rank_and_condition(m: &DMatrix<f64>) -> (usize, f64) {
    let sv = m.clone().svd(false, false).singular_values;
    let max = sv.iter().cloned().fold(0.0, f64::max);
    if max == 0.0 {
        return (0, f64::INFINITY);
    }
    let tol = 1e-9 * max.max(1.0);
    let kept: Vec<f64> = sv.iter().cloned().filter(|&s| s > tol).collect();
    let min = kept.iter().cloned().fold(f64::INFINITY, f64::min);
    (kept.len(), max / min)
}

/// Rank of the stacked design map of a list of settings on `basis`.
pub fn design_rank(basis: &SymmetricBasis, settings: &[PauliSetting]) -> usize {
    if settings.is_empty() {
        return 0;
    }
    let blocks: Vec<DMatrix<f64>> = settings.iter().map(|s| setting_design_block(basis, s)).collect();
    rank_and_condition(&stack_rows(&blocks)).0
}

fn stack_rows(blocks: &[DMatrix<f64>]) -> DMatrix<f64> {
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let cols = blocks.first().map_or(0, |b| b.ncols());
    let mut out = DMatrix::zeros(rows, cols);
    let mut offset = 0;
    for b in blocks {
        out.view_mut((offset, 0), (b.nrows(), cols)).copy_from(b);
        offset += b.nrows();
    }
    out
}

/// Greedy choice of `k` settings maximizing the rank, then minimizing the
/// condition number, of the map from basis coefficients to predicted
/// outcome probabilities. Ties go to the lexicographically first setting.
pub fn select_settings(basis: &SymmetricBasis, candidates: &[PauliSetting], k: usize) -> Vec<PauliSetting> {
    let mut pool: Vec<(PauliSetting, DMatrix<f64>)> = candidates
        .iter()
        .map(|s| (s.clone(), setting_design_block(basis, s)))
        .collect();
    pool.sort_by(|a, b| a.0.cmp(&b.0));
    pool.dedup_by(|a, b| a.0 == b.0);

    let mut chosen: Vec<PauliSetting> = Vec::new();
    let mut blocks: Vec<DMatrix<f64>> = Vec::new();
    while chosen.len() < k && !pool.is_empty() {
        let mut best: Option<(usize, usize, f64)> = None;
        for (idx, (_, block)) in pool.iter().enumerate() {
            blocks.push(block.clone());
            let (rank, cond) = rank_and_condition(&stack_rows(&blocks));
            blocks.pop();
            let better = match best {
                None => true,
                Some((_, best_rank, best_cond)) => {
                    rank > best_rank || (rank == best_rank && cond < best_cond * (1.0 - 1e-9))
                }
            };
            if better {
                best = Some((idx, rank, cond));
            }
        }
        let (idx, _, _) = best.expect("nonempty pool");
        let (setting, block) = pool.remove(idx);
        chosen.push(setting);
        blocks.push(block);
    }
    chosen
}

/// On-disk histogram collection.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistogramFile {
    pub n_qubits: usize,
    pub records: Vec<OutcomeHistogram>,
}

#[derive(Deserialize)]
struct RawHistogramFile {
    n_qubits: usize,
    records: Vec<RawHistogram>,
}

#[derive(Deserialize)]
struct RawHistogram {
    setting: String,
    shots: u64,
    counts: BTreeMap<String, u64>,
}

/// Parses and validates a histogram document.
pub fn parse_histograms(text: &str) -> Result<HistogramFile> {
    let raw: RawHistogramFile = serde_json::from_str(text).map_err(|e| {
        TomoError::schema(format!("line {}, column {}", e.line(), e.column()), e.to_string())
    })?;
    let n = raw.n_qubits;
    if n == 0 {
        return Err(TomoError::schema("n_qubits", "must be at least 1"));
    }
    let mut records = Vec::with_capacity(raw.records.len());
    for (k, r) in raw.records.into_iter().enumerate() {
        let loc = format!("records[{k}] (setting {})", r.setting);
        let setting = PauliSetting::new(r.setting.clone()).map_err(|e| TomoError::schema(&loc, e.to_string()))?;
        if setting.n_qubits() != n {
            return Err(TomoError::schema(
                &loc,
                format!("setting has {} axes, file declares {n} qubits", setting.n_qubits()),
            ));
        }
        if r.shots == 0 {
            return Err(TomoError::schema(&loc, "shots must be positive"));
        }
        for bits in r.counts.keys() {
            if bits.len() != n || !bits.chars().all(|c| c == '0' || c == '1') {
                return Err(TomoError::schema(&loc, format!("outcome {bits:?} is not a {n}-bit string")));
            }
        }
        let total: u64 = r.counts.values().sum();
        if total != r.shots {
            return Err(TomoError::schema(
                &loc,
                format!("counts sum to {total}, shots = {}", r.shots),
            ));
        }
        let counts = r.counts.into_iter().filter(|(_, c)| *c > 0).collect();
        records.push(OutcomeHistogram {
            setting,
            shots: r.shots,
            counts,
        });
    }
    Ok(HistogramFile { n_qubits: n, records })
}

pub fn ingest_histograms(path: impl AsRef<Path>) -> Result<HistogramFile> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| TomoError::io(path, e))?;
    parse_histograms(&text)
}

pub fn write_histograms(path: impl AsRef<Path>, file: &HistogramFile) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(file)?;
    std::fs::write(path, text).map_err(|e| TomoError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::testing::random_density;
    use crate::operators::max_abs_diff;
    use crate::statesim::{ghz_phase_state, werner_exact};
    use crate::symmetry::{compute_commutant_basis, SymmetrySpec};

    fn ghz2() -> DensityMatrix {
        DensityMatrix::from_pure(&ghz_phase_state(2, 0.0))
    }

    fn setting(s: &str) -> PauliSetting {
        PauliSetting::new(s).unwrap()
    }

    #[test]
    fn pi_setting_counts() {
        let two: Vec<String> = pi_settings(2).into_iter().map(String::from).collect();
        assert_eq!(two, ["XX", "XY", "XZ", "YY", "YZ", "ZZ"]);
        for (n, count) in [(1, 3), (2, 6), (3, 10), (4, 15), (6, 28), (7, 36)] {
            assert_eq!(pi_settings(n).len(), count);
            assert_eq!(pi_settings(n).len(), (n + 1) * (n + 2) / 2);
        }
    }

    #[test]
    fn observable_families() {
        assert_eq!(
            pi_observables(2),
            ["XX", "XY", "XZ", "YY", "YZ", "ZZ", "XI", "YI", "ZI", "II"]
        );
        for n in [2, 3, 4, 6, 7] {
            assert_eq!(pi_observables(n).len(), (n + 1) * (n + 2) * (n + 3) / 6);
        }
        assert_eq!(full_observables(2).len(), 16);
        assert_eq!(full_observables(2).last().unwrap(), "II");
        assert_eq!(all_settings(3).len(), 27);
    }

    #[test]
    fn projectors_are_idempotent() {
        for ops in full_observables(2) {
            let p = observable_projector(&ops).unwrap();
            assert!(max_abs_diff(&(p.matrix() * p.matrix()), p.matrix()) < 1e-9);
            assert!(max_abs_diff(&p.matrix().adjoint(), p.matrix()) < 1e-12);
        }
        assert!(observable_projector("XQ").is_err());
    }

    #[test]
    fn born_examples() {
        let p = born_probabilities(&ghz2(), &setting("ZZ")).unwrap();
        assert!((p[0] - 0.5).abs() < 1e-12 && (p[3] - 0.5).abs() < 1e-12);
        assert!(p[1].abs() < 1e-12 && p[2].abs() < 1e-12);

        let p = born_probabilities(&DensityMatrix::basis_state(2, 0), &setting("X")).unwrap();
        assert!((p[0] - 0.5).abs() < 1e-12 && (p[1] - 0.5).abs() < 1e-12);

        let mixed = DensityMatrix::maximally_mixed(4);
        for s in all_settings(2) {
            let p = born_probabilities(&mixed, &s).unwrap();
            assert!(p.iter().all(|v| (v - 0.25).abs() < 1e-12));
        }
        assert!(born_probabilities(&mixed, &setting("XYZ")).is_err());
    }

    #[test]
    fn born_matches_projector_traces() {
        use rand::SeedableRng;
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let rho = random_density(&mut rng, 8);
        for s in [setting("XYZ"), setting("YYX")] {
            let p = born_probabilities(&rho, &s).unwrap();
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            for (b, pb) in p.iter().enumerate() {
                let factors: Vec<ComplexMatrix> = (0..3)
                    .map(|q| pauli::eigenprojector(s.axis(q), (b >> (2 - q)) & 1).unwrap())
                    .collect();
                let proj = tensor_all(factors.iter());
                let direct = (proj * rho.matrix()).trace().re;
                assert!((pb - direct).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn sampling_point_mass_and_determinism() {
        let h = sample_histogram(&setting("ZZ"), &[1.0, 0.0, 0.0, 0.0], 100, 5).unwrap();
        assert_eq!(h.counts.len(), 1);
        assert_eq!(h.counts["00"], 100);

        let probs = [0.1, 0.2, 0.3, 0.4];
        let a = sample_histogram(&setting("XY"), &probs, 1000, 42).unwrap();
        let b = sample_histogram(&setting("XY"), &probs, 1000, 42).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.counts.values().sum::<u64>(), 1000);
    }

    #[test]
    fn sampling_concentrates() {
        // binomial std at 1e5 shots is ~0.0016, so 0.01 is > 6 sigma
        for seed in 0..5 {
            let h = sample_histogram(&setting("X"), &[0.5, 0.5], 100_000, seed).unwrap();
            let f = h.frequencies();
            assert!((f[0] - 0.5).abs() < 0.01);
        }
    }

    #[test]
    fn sampling_rejects_bad_distributions() {
        assert!(sample_histogram(&setting("X"), &[0.7, 0.7], 10, 0).is_err());
        assert!(sample_histogram(&setting("X"), &[1.2, -0.2], 10, 0).is_err());
        assert!(sample_histogram(&setting("X"), &[0.5, 0.5, 0.0], 10, 0).is_err());
        assert!(sample_histogram(&setting("X"), &[0.5, 0.5], 0, 0).is_err());
    }

    #[test]
    fn identity_marginals() {
        let h = OutcomeHistogram {
            setting: setting("XZ"),
            shots: 100,
            counts: [("00".to_string(), 50), ("01".to_string(), 50)].into(),
        };
        let recs = extract_frequencies(&[h], &["XI".into(), "IZ".into()], FrequencyMode::Exact).unwrap();
        assert!((recs[0].frequency - 1.0).abs() < 1e-15);
        assert!((recs[1].frequency - 0.5).abs() < 1e-15);
        assert!(recs.iter().all(|r| r.measured));
    }

    #[test]
    fn missing_histogram_is_an_error() {
        let h = sample_histogram(&setting("XZ"), &[0.25; 4], 10, 0).unwrap();
        let err = extract_frequencies(&[h], &["YI".into()], FrequencyMode::Exact).unwrap_err();
        assert!(matches!(err, TomoError::NoConsistentHistogram(ref t) if t == "YI"));
    }

    #[test]
    fn pi_mode_produces_ten_records_for_two_qubits() {
        let rho = ghz2();
        let hists = simulate_histograms(&rho, &pi_settings(2), 500, 9).unwrap();
        let recs = extract_frequencies(&hists, &pi_observables(2), FrequencyMode::PermutationInvariant).unwrap();
        assert_eq!(recs.len(), 10);
        // Z sits at qubit 1 of XZ and YZ and on both qubits of ZZ
        let zi = recs.iter().find(|r| r.ops == "ZI").unwrap();
        let manual = {
            let mut num = 0.0;
            let mut den = 0.0;
            for h in &hists {
                let f = h.frequencies();
                for q in 0..2 {
                    if h.setting.axis(q) == 'Z' {
                        num += 500.0 * marginal_all_zero(&f, &[q], 2);
                        den += 500.0;
                    }
                }
            }
            num / den
        };
        assert!((zi.frequency - manual).abs() < 1e-15);
    }

    #[test]
    fn analytic_frequencies_equal_traces() {
        use rand::SeedableRng;
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let rho = random_density(&mut rng, 8);
        let targets = full_observables(3);
        let recs = extract_frequencies_analytic(&rho, &all_settings(3), &targets, FrequencyMode::Exact).unwrap();
        for r in &recs {
            let direct = rho.expectation(&r.projector).unwrap();
            assert!((r.frequency - direct).abs() < 1e-9, "{}", r.ops);
        }
        // symmetric state, PI mode with only canonical settings
        let w = DensityMatrix::from_pure(&ghz_phase_state(3, 0.4));
        let recs = extract_frequencies_analytic(&w, &pi_settings(3), &pi_observables(3), FrequencyMode::PermutationInvariant)
            .unwrap();
        for r in &recs {
            assert!((r.frequency - w.expectation(&r.projector).unwrap()).abs() < 1e-9, "{}", r.ops);
        }
    }

    #[test]
    fn marginals_agree_across_settings() {
        let rho = DensityMatrix::from_pure(&crate::statesim::twisted_state(2, 0.6));
        let shots = 10_000u64;
        let hxz = simulate_histograms(&rho, &[setting("XZ")], shots, 1).unwrap();
        let hxy = simulate_histograms(&rho, &[setting("XY")], shots, 2).unwrap();
        let a = extract_frequencies(&hxz, &["XI".into()], FrequencyMode::Exact).unwrap()[0].frequency;
        let b = extract_frequencies(&hxy, &["XI".into()], FrequencyMode::Exact).unwrap()[0].frequency;
        let p = rho.expectation(&observable_projector("XI").unwrap()).unwrap();
        let sigma = (p * (1.0 - p) / shots as f64).sqrt();
        assert!((a - b).abs() <= 3.0 * sigma * std::f64::consts::SQRT_2);
    }

    #[test]
    fn selection_reaches_quorum() {
        let pi2 = compute_commutant_basis(&SymmetrySpec::permutation(2)).unwrap();
        let chosen = select_settings(&pi2, &all_settings(2), 6);
        assert_eq!(chosen.len(), 6);
        assert_eq!(design_rank(&pi2, &chosen), 10);
        assert_eq!(design_rank(&pi2, &pi_settings(2)), 10);

        let w2 = compute_commutant_basis(&SymmetrySpec::collective(2)).unwrap();
        assert_eq!(design_rank(&w2, &[setting("ZZ")]), 2);
        let one = select_settings(&w2, &all_settings(2), 1);
        assert_eq!(design_rank(&w2, &one), 2);

        // candidates exhausted
        assert_eq!(select_settings(&w2, &[setting("XX")], 4).len(), 1);
    }

    #[test]
    fn explicit_two_setting_werner_map() {
        // ZZ block of the {I, SWAP} map: ⟨00|S|00⟩ etc. spans rank 2
        let w2 = compute_commutant_basis(&SymmetrySpec::collective(2)).unwrap();
        let block = setting_design_block(&w2, &setting("ZZ"));
        assert_eq!(block.nrows(), 4);
        assert_eq!(rank_and_condition(&block).0, 2);
        let rho = werner_exact(0.51, 1, None).unwrap();
        let alpha = w2.coefficients_of(rho.operator()).unwrap();
        let predicted = &block * nalgebra::DVector::from_vec(alpha);
        let born = born_probabilities(&rho, &setting("ZZ")).unwrap();
        for b in 0..4 {
            assert!((predicted[b] - born[b]).abs() < 1e-12);
        }
    }

    #[test]
    fn histogram_file_round_trip() {
        let rho = ghz2();
        let records = simulate_histograms(&rho, &pi_settings(2), 500, 3).unwrap();
        let file = HistogramFile { n_qubits: 2, records };
        assert_eq!(file.records.len(), 6);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("h.json");
        write_histograms(&path, &file).unwrap();
        assert_eq!(ingest_histograms(&path).unwrap(), file);
    }

    #[test]
    fn histogram_validation_names_the_setting() {
        let text = r#"{"n_qubits": 2, "records": [
            {"setting": "XX", "shots": 10, "counts": {"00": 10}},
            {"setting": "XZ", "shots": 10, "counts": {"00": 4, "11": 5}}
        ]}"#;
        let err = parse_histograms(text).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("records[1]") && msg.contains("XZ"), "{msg}");

        let bad_bits = r#"{"n_qubits": 2, "records": [{"setting": "XX", "shots": 1, "counts": {"0": 1}}]}"#;
        assert!(parse_histograms(bad_bits).is_err());
        let bad_json = "{\"n_qubits\": 2,\n \"records\": [}";
        assert!(parse_histograms(bad_json).unwrap_err().to_string().contains("line 2"));
        assert!(matches!(ingest_histograms("/nonexistent/h.json"), Err(TomoError::Io { .. })));
    }

    #[test]
    fn records_split_into_measured_and_unmeasured() {
        let rho = ghz2();
        let hists = simulate_histograms(&rho, &[setting("ZZ")], 100, 4).unwrap();
        let recs = records_from_histograms(&hists, &full_observables(2), FrequencyMode::Exact).unwrap();
        assert_eq!(recs.len(), 16);
        let measured: Vec<&str> = recs.iter().filter(|r| r.measured).map(|r| r.ops.as_str()).collect();
        assert_eq!(measured, ["ZZ", "ZI", "IZ", "II"]);
        let analytic = records_analytic(&rho, &[setting("ZZ")], &full_observables(2), FrequencyMode::Exact).unwrap();
        let zz = analytic.iter().find(|r| r.ops == "ZZ").unwrap();
        assert!((zz.frequency - 0.5).abs() < 1e-12);
    }

    #[test]
    fn seeds_differ_across_coordinates() {
        let mut seen = std::collections::HashSet::new();
        for a in 0..10u64 {
            for b in 0..10u64 {
                assert!(seen.insert(mix_seed(7, &[a, b])));
            }
        }
    }
}
