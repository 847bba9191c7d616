//! Fidelity, concurrence, purity and trace distance.

use serde::{Deserialize, Serialize};

use crate::error::{Result, TomoError};
use crate::operators::{
    eig_hermitian, pauli, tensor, ComplexMatrix, DensityMatrix, C64,
};

/// Which of the two common fidelity normalizations to report.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum FidelityConvention {
    /// `(tr √(√ρ σ √ρ))²`, equal to `|⟨φ|ψ⟩|²` on pure states.
    #[default]
    Squared,
    /// `tr √(√ρ σ √ρ)`.
    Sqrt,
}

fn check_dims(rho: &DensityMatrix, sigma: &DensityMatrix) -> Result<()> {
    if rho.dim() != sigma.dim() {
        return Err(TomoError::DimensionMismatch {
            expected: rho.dim(),
            found: sigma.dim(),
        });
    }
    Ok(())
}

/// `A` with `A A† = ρ`, dropping eigenvalues at round-off level so that
/// rank-deficient inputs do not pick up `√ε` noise.
fn sqrt_factor(rho: &DensityMatrix) -> ComplexMatrix {
    let eig = eig_hermitian(rho.operator());
    let cutoff = 1e-14 * eig.values[0].max(1.0);
    let kept: Vec<usize> = (0..eig.values.len()).filter(|&j| eig.values[j] > cutoff).collect();
    let mut a = ComplexMatrix::zeros(rho.dim(), kept.len());
    for (c, &j) in kept.iter().enumerate() {
        a.set_column(c, &(eig.vectors.column(j) * C64::new(eig.values[j].sqrt(), 0.0)));
    }
    a
}

/// Uhlmann root fidelity `tr √(√ρ σ √ρ)`, computed as the nuclear norm of `A†B`.
fn root_fidelity(rho: &DensityMatrix, sigma: &DensityMatrix) -> Result<f64> {
    check_dims(rho, sigma)?;
    let overlap = sqrt_factor(rho).adjoint() * sqrt_factor(sigma);
    if overlap.is_empty() {
        return Ok(0.0);
    }
    Ok(overlap.svd(false, false).singular_values.iter().sum())
}

/// Squared Uhlmann fidelity.
pub fn fidelity(rho: &DensityMatrix, sigma: &DensityMatrix) -> Result<f64> {
    fidelity_with(rho, sigma, FidelityConvention::Squared)
}

pub fn fidelity_with(rho: &DensityMatrix, sigma: &DensityMatrix, convention: FidelityConvention) -> Result<f64> {
    let root = root_fidelity(rho, sigma)?.min(1.0);
    Ok(match convention {
        FidelityConvention::Squared => root * root,
        FidelityConvention::Sqrt => root,
    })
}

/// Wootters concurrence of a two-qubit state.
pub fn concurrence(rho: &DensityMatrix) -> Result<f64> {
    if rho.dim() != 4 {
        return Err(TomoError::DimensionMismatch {
            expected: 4,
            found: rho.dim(),
        });
    }
    let yy = tensor(&pauli::y(), &pauli::y());
    // with ρ = AA† the spin-flipped state is (Y⊗Y)A*((Y⊗Y)A*)†, so the
    // λ_i are the singular values of A†(Y⊗Y)A*
    let a = sqrt_factor(rho);
    let overlap = a.adjoint() * yy * a.conjugate();
    let mut l: Vec<f64> = overlap.svd(false, false).singular_values.iter().copied().collect();
    l.sort_by(|x, y| y.total_cmp(x));
    l.resize(4, 0.0);
    Ok((l[0] - l[1] - l[2] - l[3]).clamp(0.0, 1.0))
}

pub fn purity(rho: &DensityMatrix) -> f64 {
    let m = rho.matrix();
    (m * m).trace().re.clamp(0.0, 1.0)
}

/// `½ tr|ρ − σ|`.
pub fn trace_distance(rho: &DensityMatrix, sigma: &DensityMatrix) -> Result<f64> {
    check_dims(rho, sigma)?;
    let diff = rho.operator().sub(sigma.operator())?;
    let sum: f64 = eig_hermitian(&diff).values.iter().map(|v| v.abs()).sum();
    Ok((0.5 * sum).clamp(0.0, 1.0))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub fidelity: f64,
    pub fidelity_convention: FidelityConvention,
    /// Purity of the first state.
    pub purity: f64,
    pub trace_distance: f64,
    /// Concurrence of the first state, two qubits only.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub concurrence: Option<f64>,
}

pub fn compare(a: &DensityMatrix, b: &DensityMatrix, convention: FidelityConvention) -> Result<MetricReport> {
    Ok(MetricReport {
        fidelity: fidelity_with(a, b, convention)?,
        fidelity_convention: convention,
        purity: purity(a),
        trace_distance: trace_distance(a, b)?,
        concurrence: if a.dim() == 4 {
            Some(concurrence(a)?)
        } else {
            None
        },
    })
}
