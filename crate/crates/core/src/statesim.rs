//! Density-matrix circuit simulation with single-qubit noise channels, plus
//! builders for the GHZ-phase, twisted and Werner state families.

use std::f64::consts::FRAC_1_SQRT_2;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TomoError};
use crate::operators::{
    bit_of, conjugate_local, pauli, partial_trace, ComplexMatrix, DensityMatrix, HermitianOperator, PureState, C64,
    ONE, ZERO,
};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum GateKind {
    H,
    /// `exp(-i θ Y / 2)`, angle in radians.
    Ry(f64),
    /// `diag(e^{-iθ/2}, e^{iθ/2})`, angle in radians.
    Rz(f64),
    Cnot,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gate {
    pub kind: GateKind,
    pub target: usize,
    pub control: Option<usize>,
}

impl Gate {
    pub fn h(target: usize) -> Self {
        Self {
            kind: GateKind::H,
            target,
            control: None,
        }
    }

    pub fn ry(theta: f64, target: usize) -> Self {
        Self {
            kind: GateKind::Ry(theta),
            target,
            control: None,
        }
    }

    pub fn rz(theta: f64, target: usize) -> Self {
        Self {
            kind: GateKind::Rz(theta),
            target,
            control: None,
        }
    }

    pub fn cnot(control: usize, target: usize) -> Self {
        Self {
            kind: GateKind::Cnot,
            target,
            control: Some(control),
        }
    }

    /// Qubits the gate acts on.
    pub fn qubits(&self) -> impl Iterator<Item = usize> {
        self.control.into_iter().chain(std::iter::once(self.target))
    }

    /// 2×2 matrix of a single-qubit gate.
    fn single_qubit_matrix(&self) -> Option<ComplexMatrix> {
        let m = match self.kind {
            GateKind::H => (pauli::x() + pauli::z()) * C64::new(FRAC_1_SQRT_2, 0.0),
            GateKind::Ry(theta) => {
                let (s, c) = (theta / 2.0).sin_cos();
                ComplexMatrix::from_row_slice(
                    2,
                    2,
                    &[C64::new(c, 0.0), C64::new(-s, 0.0), C64::new(s, 0.0), C64::new(c, 0.0)],
                )
            }
            GateKind::Rz(theta) => ComplexMatrix::from_row_slice(
                2,
                2,
                &[C64::from_polar(1.0, -theta / 2.0), ZERO, ZERO, C64::from_polar(1.0, theta / 2.0)],
            ),
            GateKind::Cnot => return None,
        };
        Some(m)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Circuit {
    n_qubits: usize,
    gates: Vec<Gate>,
}

impl Circuit {
    pub fn new(n_qubits: usize) -> Result<Self> {
        if n_qubits < 1 {
            return Err(TomoError::InvalidArgument("circuit needs at least one qubit".into()));
        }
        Ok(Self {
            n_qubits,
            gates: Vec::new(),
        })
    }

    pub fn push(&mut self, gate: Gate) -> Result<&mut Self> {
        for q in gate.qubits() {
            if q >= self.n_qubits {
                return Err(TomoError::QubitOutOfRange {
                    index: q,
                    n_qubits: self.n_qubits,
                });
            }
        }
        match (gate.kind, gate.control) {
            (GateKind::Cnot, Some(c)) if c == gate.target => {
                return Err(TomoError::InvalidArgument("CNOT control equals target".into()))
            }
            (GateKind::Cnot, None) => {
                return Err(TomoError::InvalidArgument("CNOT without control".into()))
            }
            (GateKind::Cnot, Some(_)) => {}
            (_, Some(_)) => {
                return Err(TomoError::InvalidArgument("single-qubit gate with control".into()))
            }
            _ => {}
        }
        self.gates.push(gate);
        Ok(self)
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn gates(&self) -> &[Gate] {
        &self.gates
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    None,
    AmplitudeDamping,
    BitFlip,
    /// Replacement form `ρ → (1-p) ρ + p · I/2 ⊗ tr_q ρ`.
    Depolarizing,
    /// Pauli-twirl form `ρ → (1-p) ρ + (p/3) Σ σ ρ σ`; equals the
    /// replacement form at level `4p/3`.
    PauliDepolarizing,
}

impl Channel {
    pub fn label(&self) -> &'static str {
        match self {
            Channel::None => "none",
            Channel::AmplitudeDamping => "amplitude_damping",
            Channel::BitFlip => "bit_flip",
            Channel::Depolarizing => "depolarizing",
            Channel::PauliDepolarizing => "pauli_depolarizing",
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoisePolicy {
    /// One application to every qubit after the whole circuit.
    #[default]
    PostPreparation,
    /// One application to every qubit a gate touches, right after the gate.
    PerGate,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub channel: Channel,
    pub level: f64,
    #[serde(default)]
    pub policy: NoisePolicy,
}

impl NoiseModel {
    pub fn new(channel: Channel, level: f64, policy: NoisePolicy) -> Result<Self> {
        check_level(level)?;
        Ok(Self {
            channel,
            level,
            policy,
        })
    }

    pub fn none() -> Self {
        Self {
            channel: Channel::None,
            level: 0.0,
            policy: NoisePolicy::PostPreparation,
        }
    }

    pub fn post(channel: Channel, level: f64) -> Result<Self> {
        Self::new(channel, level, NoisePolicy::PostPreparation)
    }

    fn is_identity(&self) -> bool {
        self.channel == Channel::None || self.level == 0.0
    }
}

fn check_level(level: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&level) {
        return Err(TomoError::OutOfUnitRange {
            name: "noise level",
            value: level,
        });
    }
    Ok(())
}

/// Single-qubit Kraus operators of a channel at the given strength.
pub fn kraus_operators(channel: Channel, level: f64) -> Result<Vec<ComplexMatrix>> {
    check_level(level)?;
    let r = |v: f64| C64::new(v, 0.0);
    Ok(match channel {
        Channel::None => vec![pauli::identity()],
        Channel::AmplitudeDamping => vec![
            ComplexMatrix::from_row_slice(2, 2, &[ONE, ZERO, ZERO, r((1.0 - level).sqrt())]),
            ComplexMatrix::from_row_slice(2, 2, &[ZERO, r(level.sqrt()), ZERO, ZERO]),
        ],
        Channel::BitFlip => vec![
            pauli::identity() * r((1.0 - level).sqrt()),
            pauli::x() * r(level.sqrt()),
        ],
        Channel::Depolarizing => {
            let s = r((level / 4.0).sqrt());
            vec![
                pauli::identity() * r((1.0 - 0.75 * level).sqrt()),
                pauli::x() * s,
                pauli::y() * s,
                pauli::z() * s,
            ]
        }
        Channel::PauliDepolarizing => {
            let s = r((level / 3.0).sqrt());
            vec![
                pauli::identity() * r((1.0 - level).sqrt()),
                pauli::x() * s,
                pauli::y() * s,
                pauli::z() * s,
            ]
        }
    })
}

fn apply_gate_matrix(m: &ComplexMatrix, gate: &Gate, n_qubits: usize) -> ComplexMatrix {
    match gate.single_qubit_matrix() {
        Some(u) => conjugate_local(m, &u, gate.target, n_qubits),
        None => {
            let control = gate.control.expect("validated CNOT");
            let tmask = 1usize << (n_qubits - 1 - gate.target);
            let image = |i: usize| {
                if bit_of(i, control, n_qubits) == 1 {
                    i ^ tmask
                } else {
                    i
                }
            };
            let dim = m.nrows();
            ComplexMatrix::from_fn(dim, dim, |i, j| m[(image(i), image(j))])
        }
    }
}

/// Applies a single-qubit channel to `qubit` of `rho`.
pub fn apply_channel(rho: &DensityMatrix, channel: Channel, level: f64, qubit: usize) -> Result<DensityMatrix> {
    let n = rho.n_qubits()?;
    if qubit >= n {
        return Err(TomoError::QubitOutOfRange {
            index: qubit,
            n_qubits: n,
        });
    }
    let kraus = kraus_operators(channel, level)?;
    if channel == Channel::None || level == 0.0 {
        return Ok(rho.clone());
    }
    let m = rho.matrix();
    let mut acc = ComplexMatrix::zeros(m.nrows(), m.ncols());
    for k in &kraus {
        acc += conjugate_local(m, k, qubit, n);
    }
    Ok(DensityMatrix::from_trusted(HermitianOperator::hermitian_part(&acc)))
}

/// Applies the noise channel to every qubit of `rho`.
pub fn apply_noise_everywhere(rho: &DensityMatrix, noise: &NoiseModel) -> Result<DensityMatrix> {
    let mut out = rho.clone();
    if noise.is_identity() {
        return Ok(out);
    }
    for q in 0..rho.n_qubits()? {
        out = apply_channel(&out, noise.channel, noise.level, q)?;
    }
    Ok(out)
}

/// Evolves `|0…0⟩⟨0…0|` through the circuit under the given noise model.
pub fn run_circuit(circuit: &Circuit, noise: &NoiseModel) -> DensityMatrix {
    let n = circuit.n_qubits;
    let mut rho = DensityMatrix::basis_state(1 << n, 0);
    for gate in &circuit.gates {
        let m = apply_gate_matrix(rho.matrix(), gate, n);
        rho = DensityMatrix::from_trusted(HermitianOperator::hermitian_part(&m));
        if noise.policy == NoisePolicy::PerGate && !noise.is_identity() {
            for q in gate.qubits() {
                rho = apply_channel(&rho, noise.channel, noise.level, q).expect("validated noise model");
            }
        }
    }
    if noise.policy == NoisePolicy::PostPreparation {
        rho = apply_noise_everywhere(&rho, noise).expect("validated noise model");
    }
    rho
}

/// Circuit for `(|0…0⟩ + e^{iθ}|1…1⟩)/√2`: H and RZ(θ) on qubit 0, then a CNOT ladder.
///
/// RZ(θ) only adds the global phase `e^{-iθ/2}` on top of the relative phase
/// θ, so no angle correction is needed for the density matrix.
pub fn build_ghz_phase(n_qubits: usize, theta: f64) -> Result<Circuit> {
    let mut c = Circuit::new(n_qubits)?;
    c.push(Gate::h(0))?;
    c.push(Gate::rz(theta, 0))?;
    for q in 0..n_qubits - 1 {
        c.push(Gate::cnot(q, q + 1))?;
    }
    Ok(c)
}

/// GHZ-phase circuit followed by a Hadamard on every qubit.
pub fn build_twisted(n_qubits: usize, theta: f64) -> Result<Circuit> {
    let mut c = build_ghz_phase(n_qubits, theta)?;
    for q in 0..n_qubits {
        c.push(Gate::h(q))?;
    }
    Ok(c)
}

/// Four-qubit circuit whose first two qubits carry a Werner state once the
/// two ancillas (qubits 2 and 3) are traced out. Returns the kept qubits.
pub fn build_werner_2q(theta_a: f64, theta_b: f64) -> (Circuit, Vec<usize>) {
    let mut c = Circuit::new(4).expect("four qubits");
    for gate in [
        Gate::ry(theta_a, 0),
        Gate::cnot(0, 1),
        Gate::ry(theta_b, 0),
        Gate::ry(theta_b, 1),
        Gate::cnot(0, 2),
        Gate::cnot(1, 3),
        Gate::h(0),
        Gate::cnot(0, 1),
    ] {
        c.push(gate).expect("static werner circuit");
    }
    (c, vec![0, 1])
}

/// Angle settings `(p, θa, θb)` for the Werner circuit, two-decimal precision.
pub const WERNER_ANGLE_TABLE: [(f64, f64, f64); 5] = [
    (1.0, 0.00, 3.14),
    (0.76, 0.33, 2.50),
    (0.40, 0.27, 2.00),
    (0.63, 0.34, 2.31),
    (0.81, 0.31, 2.60),
];

/// Singlet `(|01⟩ - |10⟩)/√2`.
pub fn singlet() -> PureState {
    let s = FRAC_1_SQRT_2;
    PureState::new(DVector::from_vec(vec![ZERO, C64::new(s, 0.0), C64::new(-s, 0.0), ZERO]))
        .expect("normalized")
}

/// `W_p = (1-p)/4 · I + p |ψ⁻⟩⟨ψ⁻|`, optionally tensored with `W_{p2}`.
pub fn werner_exact(p: f64, n_pairs: usize, p2: Option<f64>) -> Result<DensityMatrix> {
    let single = |p: f64| -> Result<DensityMatrix> {
        if !(0.0..=1.0).contains(&p) {
            return Err(TomoError::OutOfUnitRange {
                name: "werner p",
                value: p,
            });
        }
        let mixed = HermitianOperator::identity(4).scale((1.0 - p) / 4.0);
        let psi = DensityMatrix::from_pure(&singlet()).into_operator().scale(p);
        DensityMatrix::new(mixed.add(&psi)?)
    };
    match n_pairs {
        1 => single(p),
        2 => Ok(single(p)?.tensor(&single(p2.unwrap_or(p))?)),
        other => Err(TomoError::InvalidArgument(format!(
            "werner states support 1 or 2 pairs, got {other}"
        ))),
    }
}

/// Werner parameter of a two-qubit state, `(4⟨ψ⁻|ρ|ψ⁻⟩ - 1)/3`.
pub fn werner_parameter(rho: &DensityMatrix) -> Result<f64> {
    if rho.dim() != 4 {
        return Err(TomoError::DimensionMismatch {
            expected: 4,
            found: rho.dim(),
        });
    }
    let s = singlet();
    let f = s.amplitudes().dotc(&(rho.matrix() * s.amplitudes())).re;
    Ok((4.0 * f - 1.0) / 3.0)
}

/// `(|0…0⟩ + e^{iθ}|1…1⟩)/√2` evaluated directly.
pub fn ghz_phase_state(n_qubits: usize, theta: f64) -> PureState {
    let dim = 1usize << n_qubits;
    let mut v = DVector::zeros(dim);
    v[0] += C64::new(FRAC_1_SQRT_2, 0.0);
    v[dim - 1] += C64::from_polar(FRAC_1_SQRT_2, theta);
    PureState::new(v).expect("normalized")
}

/// `2^{-(n+1)/2} Σ_x (1 + (-1)^{⊕x} e^{iθ}) |x⟩` evaluated directly.
pub fn twisted_state(n_qubits: usize, theta: f64) -> PureState {
    let dim = 1usize << n_qubits;
    let norm = 1.0 / ((1usize << (n_qubits + 1)) as f64).sqrt();
    let phase = C64::from_polar(1.0, theta);
    let v = DVector::from_fn(dim, |x, _| {
        let parity = if x.count_ones() % 2 == 0 { 1.0 } else { -1.0 };
        (ONE + phase * parity) * norm
    });
    PureState::new(v).expect("normalized")
}

/// A target-state family together with how it is prepared.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum StateSpec {
    Ghz { n: usize, theta: f64 },
    Twisted { n: usize, theta: f64 },
    WernerCircuit { theta_a: f64, theta_b: f64 },
    WernerExact { p: f64, #[serde(default)] p2: Option<f64> },
}

impl StateSpec {
    pub fn n_qubits(&self) -> usize {
        match self {
            StateSpec::Ghz { n, .. } | StateSpec::Twisted { n, .. } => *n,
            StateSpec::WernerCircuit { .. } => 2,
            StateSpec::WernerExact { p2, .. } => {
                if p2.is_some() {
                    4
                } else {
                    2
                }
            }
        }
    }

    /// Ideal (noiseless) state.
    pub fn target(&self) -> Result<DensityMatrix> {
        self.prepare(&NoiseModel::none())
    }

    /// State actually produced under `noise`. Families without a circuit
    /// always receive post-preparation noise.
    pub fn prepare(&self, noise: &NoiseModel) -> Result<DensityMatrix> {
        match self {
            StateSpec::Ghz { n, theta } => Ok(run_circuit(&build_ghz_phase(*n, *theta)?, noise)),
            StateSpec::Twisted { n, theta } => Ok(run_circuit(&build_twisted(*n, *theta)?, noise)),
            StateSpec::WernerCircuit { theta_a, theta_b } => {
                let (circuit, keep) = build_werner_2q(*theta_a, *theta_b);
                // ancillas are traced out, so noise on them is irrelevant
                let full = run_circuit(&circuit, noise);
                partial_trace(&full, &keep)
            }
            StateSpec::WernerExact { p, p2 } => {
                let pairs = if p2.is_some() { 2 } else { 1 };
                apply_noise_everywhere(&werner_exact(*p, pairs, *p2)?, noise)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::testing::{random_density, random_unitary};
    use crate::operators::{eig_hermitian, max_abs_diff, tensor};
    use crate::symmetry::swap_matrix;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn fidelity_with_pure(psi: &PureState, rho: &DensityMatrix) -> f64 {
        psi.amplitudes().dotc(&(rho.matrix() * psi.amplitudes())).re
    }

    fn purity(rho: &DensityMatrix) -> f64 {
        (rho.matrix() * rho.matrix()).trace().re
    }

    #[test]
    fn empty_circuit_is_ground_state() {
        let rho = run_circuit(&Circuit::new(1).unwrap(), &NoiseModel::none());
        assert_eq!(rho, DensityMatrix::basis_state(2, 0));
    }

    #[test]
    fn hadamard_gives_plus() {
        let mut c = Circuit::new(1).unwrap();
        c.push(Gate::h(0)).unwrap();
        let rho = run_circuit(&c, &NoiseModel::none());
        let half = C64::new(0.5, 0.0);
        let plus = ComplexMatrix::from_element(2, 2, half);
        assert!(max_abs_diff(rho.matrix(), &plus) < 1e-12);

        let noisy = run_circuit(&c, &NoiseModel::post(Channel::Depolarizing, 1.0).unwrap());
        assert!(max_abs_diff(noisy.matrix(), DensityMatrix::maximally_mixed(2).matrix()) < 1e-12);
    }

    #[test]
    fn channel_examples() {
        let one = DensityMatrix::basis_state(2, 1);
        let decayed = apply_channel(&one, Channel::AmplitudeDamping, 1.0, 0).unwrap();
        assert!(max_abs_diff(decayed.matrix(), DensityMatrix::basis_state(2, 0).matrix()) < 1e-12);

        let zero = DensityMatrix::basis_state(2, 0);
        let flipped = apply_channel(&zero, Channel::BitFlip, 0.5, 0).unwrap();
        assert!(max_abs_diff(flipped.matrix(), DensityMatrix::maximally_mixed(2).matrix()) < 1e-12);
    }

    #[test]
    fn depolarizing_scales_bloch_vector() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let rho = random_density(&mut rng, 2);
        let bloch = |r: &DensityMatrix| -> [f64; 3] {
            let m = r.matrix();
            [2.0 * m[(0, 1)].re, -2.0 * m[(0, 1)].im, (m[(0, 0)] - m[(1, 1)]).re]
        };
        let before = bloch(&rho);
        for p in [0.0, 0.1, 0.37, 0.8, 1.0] {
            let after = bloch(&apply_channel(&rho, Channel::Depolarizing, p, 0).unwrap());
            for k in 0..3 {
                assert!((after[k] - (1.0 - p) * before[k]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn depolarizing_matches_replacement_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(18);
        let rho = random_density(&mut rng, 4);
        let p = 0.3;
        let reduced = partial_trace(&rho, &[1]).unwrap();
        let replaced = tensor(DensityMatrix::maximally_mixed(2).matrix(), reduced.matrix());
        let expected = rho.matrix() * C64::new(1.0 - p, 0.0) + replaced * C64::new(p, 0.0);
        let got = apply_channel(&rho, Channel::Depolarizing, p, 0).unwrap();
        assert!(max_abs_diff(got.matrix(), &expected) < 1e-12);
    }

    #[test]
    fn pauli_depolarizing_is_reparametrized_replacement() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let rho = random_density(&mut rng, 2);
        let a = apply_channel(&rho, Channel::PauliDepolarizing, 0.3, 0).unwrap();
        let b = apply_channel(&rho, Channel::Depolarizing, 0.4, 0).unwrap();
        assert!(max_abs_diff(a.matrix(), b.matrix()) < 1e-12);
    }

    #[test]
    fn zero_depolarizing_passes_input_through() {
        let mut rng = ChaCha8Rng::seed_from_u64(20);
        let rho = random_density(&mut rng, 4);
        let out = apply_channel(&rho, Channel::Depolarizing, 0.0, 1).unwrap();
        assert_eq!(out, rho);
    }

    #[test]
    fn kraus_sets_are_complete() {
        for channel in [
            Channel::None,
            Channel::AmplitudeDamping,
            Channel::BitFlip,
            Channel::Depolarizing,
            Channel::PauliDepolarizing,
        ] {
            for level in [0.0, 0.01, 0.25, 0.5, 0.99, 1.0] {
                let ks = kraus_operators(channel, level).unwrap();
                let sum = ks
                    .iter()
                    .fold(ComplexMatrix::zeros(2, 2), |acc, k| acc + k.adjoint() * k);
                assert!(max_abs_diff(&sum, &pauli::identity()) < 1e-12, "{channel:?} {level}");
            }
        }
    }

    #[test]
    fn level_out_of_range_rejected() {
        assert!(kraus_operators(Channel::BitFlip, 1.5).is_err());
        assert!(NoiseModel::post(Channel::BitFlip, -0.1).is_err());
        let rho = DensityMatrix::basis_state(2, 0);
        assert!(apply_channel(&rho, Channel::BitFlip, 2.0, 0).is_err());
    }

    #[test]
    fn invalid_gates_rejected() {
        let mut c = Circuit::new(2).unwrap();
        assert!(c.push(Gate::cnot(1, 1)).is_err());
        assert!(c.push(Gate::h(2)).is_err());
        assert!(Circuit::new(0).is_err());
    }

    #[test]
    fn ghz_phase_examples() {
        let rho = run_circuit(&build_ghz_phase(2, 0.0).unwrap(), &NoiseModel::none());
        let bell = ghz_phase_state(2, 0.0);
        let half = std::f64::consts::FRAC_1_SQRT_2;
        assert!((bell.amplitudes()[0].re - half).abs() < 1e-15);
        assert!((bell.amplitudes()[3].re - half).abs() < 1e-15);
        assert!(fidelity_with_pure(&bell, &rho) > 1.0 - 1e-12);

        let rho3 = run_circuit(&build_ghz_phase(3, PI).unwrap(), &NoiseModel::none());
        let minus = PureState::new(DVector::from_fn(8, |i, _| match i {
            0 => C64::new(half, 0.0),
            7 => C64::new(-half, 0.0),
            _ => ZERO,
        }))
        .unwrap();
        assert!(fidelity_with_pure(&minus, &rho3) > 1.0 - 1e-12);

        let rho = run_circuit(&build_ghz_phase(2, FRAC_PI_2).unwrap(), &NoiseModel::none());
        assert!(fidelity_with_pure(&ghz_phase_state(2, FRAC_PI_2), &rho) > 1.0 - 1e-9);
        assert!(build_ghz_phase(0, 0.0).is_err());
    }

    #[test]
    fn twisted_examples() {
        let rho = run_circuit(&build_twisted(1, 0.0).unwrap(), &NoiseModel::none());
        assert!(max_abs_diff(rho.matrix(), DensityMatrix::basis_state(2, 0).matrix()) < 1e-12);

        // H⊗H maps (|00⟩+|11⟩)/√2 to itself
        let direct = twisted_state(2, 0.0);
        assert!(direct.overlap(&ghz_phase_state(2, 0.0)) > 1.0 - 1e-12);
        let rho = run_circuit(&build_twisted(2, 0.0).unwrap(), &NoiseModel::none());
        assert!(fidelity_with_pure(&direct, &rho) > 1.0 - 1e-12);

        for n in 2..=4 {
            for theta in [0.0, 0.3, FRAC_PI_2, 2.5] {
                let rho = run_circuit(&build_twisted(n, theta).unwrap(), &NoiseModel::none());
                assert!(fidelity_with_pure(&twisted_state(n, theta), &rho) > 1.0 - 1e-9);
                for q in 0..n - 1 {
                    let s = swap_matrix(n, q, q + 1);
                    assert!(max_abs_diff(&(&s * rho.matrix() * s.adjoint()), rho.matrix()) < 1e-9);
                }
            }
        }
    }

    #[test]
    fn noiseless_outputs_are_pure() {
        for n in 1..=4 {
            for theta in [0.0, 1.1] {
                for c in [build_ghz_phase(n, theta).unwrap(), build_twisted(n, theta).unwrap()] {
                    let rho = run_circuit(&c, &NoiseModel::none());
                    assert!((purity(&rho) - 1.0).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn noisy_outputs_are_valid_states() {
        let c = build_twisted(3, 0.7).unwrap();
        for channel in [Channel::AmplitudeDamping, Channel::BitFlip, Channel::Depolarizing] {
            for policy in [NoisePolicy::PostPreparation, NoisePolicy::PerGate] {
                for level in [0.0, 0.2, 0.6, 1.0] {
                    let rho = run_circuit(&c, &NoiseModel::new(channel, level, policy).unwrap());
                    assert!((rho.operator().trace() - 1.0).abs() < 1e-9);
                    assert!(eig_hermitian(rho.operator()).min_eigenvalue() >= -1e-10);
                }
            }
        }
    }

    #[test]
    fn per_gate_noise_differs_from_post_preparation() {
        let c = build_ghz_phase(3, 0.0).unwrap();
        let post = run_circuit(&c, &NoiseModel::new(Channel::BitFlip, 0.1, NoisePolicy::PostPreparation).unwrap());
        let per = run_circuit(&c, &NoiseModel::new(Channel::BitFlip, 0.1, NoisePolicy::PerGate).unwrap());
        assert!(max_abs_diff(post.matrix(), per.matrix()) > 1e-3);
    }

    #[test]
    fn werner_circuit_reproduces_angle_table() {
        for (p, a, b) in WERNER_ANGLE_TABLE {
            let rho = StateSpec::WernerCircuit { theta_a: a, theta_b: b }.target().unwrap();
            let fitted = werner_parameter(&rho).unwrap();
            assert!((fitted - p).abs() <= 0.02, "p={p} fitted={fitted}");
        }
    }

    #[test]
    fn werner_circuit_is_nearly_collective_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for (_, a, b) in WERNER_ANGLE_TABLE {
            let rho = StateSpec::WernerCircuit { theta_a: a, theta_b: b }.target().unwrap();
            for _ in 0..5 {
                let u = random_unitary(&mut rng, 2);
                let uu = tensor(&u, &u);
                assert!(max_abs_diff(&(&uu * rho.matrix() * uu.adjoint()), rho.matrix()) < 2e-2);
            }
        }
    }

    #[test]
    fn werner_exact_examples() {
        let w1 = werner_exact(1.0, 1, None).unwrap();
        assert!(max_abs_diff(w1.matrix(), DensityMatrix::from_pure(&singlet()).matrix()) < 1e-15);
        let w0 = werner_exact(0.0, 1, None).unwrap();
        assert!(max_abs_diff(w0.matrix(), DensityMatrix::maximally_mixed(4).matrix()) < 1e-15);
        let w = werner_exact(0.51, 1, None).unwrap();
        assert!((werner_parameter(&w).unwrap() - 0.51).abs() < 1e-12);
        assert!(werner_exact(1.2, 1, None).is_err());
        assert_eq!(werner_exact(0.76, 2, Some(0.63)).unwrap().dim(), 16);
    }

    #[test]
    fn werner_exact_is_collective_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        let w = werner_exact(0.51, 1, None).unwrap();
        for _ in 0..10 {
            let u = random_unitary(&mut rng, 2);
            let uu = tensor(&u, &u);
            assert!(max_abs_diff(&(&uu * w.matrix() * uu.adjoint()), w.matrix()) < 1e-9);
        }
    }

    #[test]
    fn state_spec_json_round_trip() {
        let s = StateSpec::WernerExact { p: 0.51, p2: None };
        let text = serde_json::to_string(&s).unwrap();
        assert!(text.contains("\"family\":\"werner_exact\""));
        assert_eq!(serde_json::from_str::<StateSpec>(&text).unwrap(), s);
    }
}
