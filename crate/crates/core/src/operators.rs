//! Complex matrix types and the linear-algebra primitives shared by every
//! other module.
//!
//! Qubit 0 is the leftmost tensor factor, so in a basis index `i` of an
//! `n`-qubit register the bit of qubit `q` is `(i >> (n - 1 - q)) & 1`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TomoError};

pub type C64 = Complex64;

/// Dense complex square matrix.
pub type ComplexMatrix = DMatrix<C64>;

/// Maximum entrywise deviation from Hermiticity accepted by [`HermitianOperator::new`].
pub const HERMITICITY_TOL: f64 = 1e-10;
/// Trace and eigenvalue tolerance for [`DensityMatrix`].
pub const DENSITY_TOL: f64 = 1e-9;
/// Eigenvalues in `[-EIGEN_CLAMP_TOL, 0)` are treated as zero.
pub const EIGEN_CLAMP_TOL: f64 = 1e-9;

pub(crate) const ZERO: C64 = C64::new(0.0, 0.0);
pub(crate) const ONE: C64 = C64::new(1.0, 0.0);
pub(crate) const I_UNIT: C64 = C64::new(0.0, 1.0);

/// Largest entrywise modulus of `a - b`.
pub fn max_abs_diff(a: &ComplexMatrix, b: &ComplexMatrix) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

/// Number of qubits for a `2^n` dimension.
pub fn qubits_for_dim(dim: usize) -> Result<usize> {
    if dim == 0 || !dim.is_power_of_two() {
        return Err(TomoError::NotQubitDimension(dim));
    }
    Ok(dim.trailing_zeros() as usize)
}

#[inline]
pub(crate) fn bit_of(index: usize, qubit: usize, n_qubits: usize) -> usize {
    (index >> (n_qubits - 1 - qubit)) & 1
}

/// Kronecker product `a ⊗ b`.
pub fn tensor(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    a.kronecker(b)
}

/// Kronecker product of a sequence of factors, left to right.
pub fn tensor_all<'a, I>(factors: I) -> ComplexMatrix
where
    I: IntoIterator<Item = &'a ComplexMatrix>,
{
    factors
        .into_iter()
        .fold(ComplexMatrix::from_element(1, 1, ONE), |acc, f| {
            acc.kronecker(f)
        })
}

/// Single-qubit Pauli matrices and their +1 eigenprojectors.
pub mod pauli {
    use super::*;

    pub fn identity() -> ComplexMatrix {
        ComplexMatrix::identity(2, 2)
    }

    pub fn x() -> ComplexMatrix {
        ComplexMatrix::from_row_slice(2, 2, &[ZERO, ONE, ONE, ZERO])
    }

    pub fn y() -> ComplexMatrix {
        ComplexMatrix::from_row_slice(2, 2, &[ZERO, -I_UNIT, I_UNIT, ZERO])
    }

    pub fn z() -> ComplexMatrix {
        ComplexMatrix::from_row_slice(2, 2, &[ONE, ZERO, ZERO, -ONE])
    }

    /// Matrix for a letter in `{I, X, Y, Z}`.
    pub fn from_char(c: char) -> Option<ComplexMatrix> {
        match c {
            'I' => Some(identity()),
            'X' => Some(x()),
            'Y' => Some(y()),
            'Z' => Some(z()),
            _ => None,
        }
    }

    /// Projector onto the eigenvector of `axis` with eigenvalue `+1`
    /// (`outcome = 0`) or `-1` (`outcome = 1`). `I` yields the identity.
    pub fn eigenprojector(axis: char, outcome: usize) -> Option<ComplexMatrix> {
        let sign = if outcome == 0 { 1.0 } else { -1.0 };
        match axis {
            'I' => Some(identity()),
            'X' | 'Y' | 'Z' => {
                let p = from_char(axis)?;
                Some((identity() + p * C64::new(sign, 0.0)) * C64::new(0.5, 0.0))
            }
            _ => None,
        }
    }
}

/// Hermitian operator; the wrapped matrix is square and satisfies
/// `max |M - M†| <= 1e-10`.
#[derive(Clone, Debug, PartialEq)]
pub struct HermitianOperator(ComplexMatrix);

impl HermitianOperator {
    pub fn new(matrix: ComplexMatrix) -> Result<Self> {
        if !matrix.is_square() {
            return Err(TomoError::DimensionMismatch {
                expected: matrix.nrows(),
                found: matrix.ncols(),
            });
        }
        let deviation = max_abs_diff(&matrix, &matrix.adjoint());
        if deviation > HERMITICITY_TOL {
            return Err(TomoError::NotHermitian {
                max_deviation: deviation,
            });
        }
        Ok(Self(matrix))
    }

    /// Hermitian part `(M + M†)/2`; never fails.
    pub fn hermitian_part(matrix: &ComplexMatrix) -> Self {
        Self((matrix + matrix.adjoint()) * C64::new(0.5, 0.0))
    }

    pub fn identity(dim: usize) -> Self {
        Self(ComplexMatrix::identity(dim, dim))
    }

    pub fn zeros(dim: usize) -> Self {
        Self(ComplexMatrix::zeros(dim, dim))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> ComplexMatrix {
        self.0
    }

    pub fn trace(&self) -> f64 {
        self.0.trace().re
    }

    pub fn scale(&self, s: f64) -> Self {
        Self(&self.0 * C64::new(s, 0.0))
    }

    /// Sum of two operators of equal dimension.
    pub fn add(&self, other: &Self) -> Result<Self> {
        check_dims(self.dim(), other.dim())?;
        Ok(Self(&self.0 + &other.0))
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        check_dims(self.dim(), other.dim())?;
        Ok(Self(&self.0 - &other.0))
    }

    /// `U H U†`.
    pub fn conjugate_by(&self, unitary: &ComplexMatrix) -> Result<Self> {
        check_dims(self.dim(), unitary.nrows())?;
        Ok(Self::hermitian_part(&(unitary * &self.0 * unitary.adjoint())))
    }

    /// `Σ coefficients[i] * operators[i]`.
    pub fn linear_combination(coefficients: &[f64], operators: &[HermitianOperator]) -> Result<Self> {
        let dim = operators
            .first()
            .map(|o| o.dim())
            .ok_or_else(|| TomoError::InvalidArgument("empty operator list".into()))?;
        let mut acc = ComplexMatrix::zeros(dim, dim);
        for (c, op) in coefficients.iter().zip(operators) {
            check_dims(dim, op.dim())?;
            if *c != 0.0 {
                acc.zip_apply(&op.0, |a, b| *a += b * *c);
            }
        }
        Ok(Self(acc))
    }
}

fn check_dims(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        Err(TomoError::DimensionMismatch { expected, found })
    } else {
        Ok(())
    }
}

/// Unit-trace positive semidefinite Hermitian operator.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix(HermitianOperator);

impl DensityMatrix {
    pub fn new(op: HermitianOperator) -> Result<Self> {
        let trace = op.trace();
        if (trace - 1.0).abs() > DENSITY_TOL {
            return Err(TomoError::InvalidTrace { trace });
        }
        let min = eig_hermitian(&op).min_eigenvalue();
        if min < -DENSITY_TOL {
            return Err(TomoError::NotPositive {
                min_eigenvalue: min,
            });
        }
        Ok(Self(op))
    }

    pub fn from_matrix(matrix: ComplexMatrix) -> Result<Self> {
        Self::new(HermitianOperator::new(matrix)?)
    }

    /// Wraps an operator produced by a trace- and positivity-preserving map.
    pub(crate) fn from_trusted(op: HermitianOperator) -> Self {
        Self(op)
    }

    /// Nearest density matrix in Hilbert–Schmidt norm: eigenvalues are
    /// projected onto the probability simplex.
    pub fn project_from(op: &HermitianOperator) -> Self {
        let eig = eig_hermitian(op);
        let projected = project_to_simplex(&eig.values);
        Self(eig.reassemble(&projected))
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        Self(HermitianOperator::identity(dim).scale(1.0 / dim as f64))
    }

    pub fn from_pure(state: &PureState) -> Self {
        let v = state.amplitudes();
        Self(HermitianOperator::hermitian_part(&(v * v.adjoint())))
    }

    /// `|index⟩⟨index|` in dimension `dim`.
    pub fn basis_state(dim: usize, index: usize) -> Self {
        let mut m = ComplexMatrix::zeros(dim, dim);
        m[(index, index)] = ONE;
        Self(HermitianOperator(m))
    }

    pub fn dim(&self) -> usize {
        self.0.dim()
    }

    pub fn n_qubits(&self) -> Result<usize> {
        qubits_for_dim(self.dim())
    }

    pub fn operator(&self) -> &HermitianOperator {
        &self.0
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        self.0.matrix()
    }

    pub fn into_operator(self) -> HermitianOperator {
        self.0
    }

    /// `tr(E ρ)` for a Hermitian `E`.
    pub fn expectation(&self, observable: &HermitianOperator) -> Result<f64> {
        hilbert_schmidt_inner(observable, &self.0)
    }

    pub fn tensor(&self, other: &DensityMatrix) -> DensityMatrix {
        Self(HermitianOperator(tensor(self.matrix(), other.matrix())))
    }
}

/// Normalized state vector.
#[derive(Clone, Debug, PartialEq)]
pub struct PureState(DVector<C64>);

impl PureState {
    pub fn new(amplitudes: DVector<C64>) -> Result<Self> {
        let norm = amplitudes.norm();
        if (norm - 1.0).abs() > 1e-10 {
            return Err(TomoError::NotNormalized { norm });
        }
        Ok(Self(amplitudes))
    }

    /// Rescales a nonzero vector to unit norm.
    pub fn normalized(amplitudes: DVector<C64>) -> Result<Self> {
        let norm = amplitudes.norm();
        if norm == 0.0 {
            return Err(TomoError::NotNormalized { norm });
        }
        Ok(Self(amplitudes.unscale(norm)))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn amplitudes(&self) -> &DVector<C64> {
        &self.0
    }

    /// `|⟨self|other⟩|²`.
    pub fn overlap(&self, other: &PureState) -> f64 {
        self.0.dotc(&other.0).norm_sqr()
    }
}

/// Spectral decomposition `H = V diag(λ) V†` with eigenvalues descending.
#[derive(Clone, Debug)]
pub struct Eigen {
    pub values: Vec<f64>,
    pub vectors: ComplexMatrix,
}

impl Eigen {
    pub fn min_eigenvalue(&self) -> f64 {
        self.values.last().copied().unwrap_or(0.0)
    }

    /// `V diag(values) V†` for replacement eigenvalues.
    pub fn reassemble(&self, values: &[f64]) -> HermitianOperator {
        let mut scaled = self.vectors.clone();
        for (j, &v) in values.iter().enumerate() {
            scaled.column_mut(j).scale_mut(v);
        }
        HermitianOperator::hermitian_part(&(scaled * self.vectors.adjoint()))
    }

    /// Applies `f` to every eigenvalue.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> HermitianOperator {
        let values: Vec<f64> = self.values.iter().map(|&v| f(v)).collect();
        self.reassemble(&values)
    }
}

pub fn eig_hermitian(h: &HermitianOperator) -> Eigen {
    let dim = h.dim();
    let decomposition = h.matrix().clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| {
        decomposition.eigenvalues[b]
            .partial_cmp(&decomposition.eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let values = order.iter().map(|&k| decomposition.eigenvalues[k]).collect();
    let mut vectors = ComplexMatrix::zeros(dim, dim);
    for (j, &k) in order.iter().enumerate() {
        vectors.set_column(j, &decomposition.eigenvectors.column(k));
    }
    Eigen { values, vectors }
}

/// `K ρ K†` for a 2×2 `K` acting on `qubit`.
pub(crate) fn conjugate_local(m: &ComplexMatrix, k: &ComplexMatrix, qubit: usize, n_qubits: usize) -> ComplexMatrix {
    let dim = m.nrows();
    let mask = 1usize << (n_qubits - 1 - qubit);
    let (k00, k01, k10, k11) = (k[(0, 0)], k[(0, 1)], k[(1, 0)], k[(1, 1)]);
    let mut left = m.clone();
    for c in 0..dim {
        for i0 in (0..dim).filter(|i| i & mask == 0) {
            let i1 = i0 | mask;
            let (a, b) = (m[(i0, c)], m[(i1, c)]);
            left[(i0, c)] = k00 * a + k01 * b;
            left[(i1, c)] = k10 * a + k11 * b;
        }
    }
    let mut out = left.clone();
    for j0 in (0..dim).filter(|j| j & mask == 0) {
        let j1 = j0 | mask;
        for r in 0..dim {
            let (a, b) = (left[(r, j0)], left[(r, j1)]);
            out[(r, j0)] = a * k00.conj() + b * k01.conj();
            out[(r, j1)] = a * k10.conj() + b * k11.conj();
        }
    }
    out
}

/// Principal square root of a positive semidefinite operator.
pub fn matrix_sqrt_psd(h: &HermitianOperator) -> Result<HermitianOperator> {
    let eig = eig_hermitian(h);
    let min = eig.min_eigenvalue();
    if min < -EIGEN_CLAMP_TOL {
        return Err(TomoError::NotPositive {
            min_eigenvalue: min,
        });
    }
    Ok(eig.map(|v| v.max(0.0).sqrt()))
}

/// Euclidean projection of `values` onto `{x : x_i >= 0, Σ x_i = 1}`.
pub fn project_to_simplex(values: &[f64]) -> Vec<f64> {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    let mut cumulative = 0.0;
    let mut theta = 0.0;
    for (k, &v) in sorted.iter().enumerate() {
        cumulative += v;
        let candidate = (cumulative - 1.0) / (k as f64 + 1.0);
        if v - candidate > 0.0 {
            theta = candidate;
        }
    }
    values.iter().map(|&v| (v - theta).max(0.0)).collect()
}

/// Reduced density matrix on the qubits in `keep`, in the listed order.
pub fn partial_trace(rho: &DensityMatrix, keep: &[usize]) -> Result<DensityMatrix> {
    let n = rho.n_qubits()?;
    let mut seen = vec![false; n];
    for &q in keep {
        if q >= n {
            return Err(TomoError::QubitOutOfRange {
                index: q,
                n_qubits: n,
            });
        }
        if seen[q] {
            return Err(TomoError::DuplicateQubit(q));
        }
        seen[q] = true;
    }
    let traced: Vec<usize> = (0..n).filter(|q| !seen[*q]).collect();
    let k = keep.len();
    let out_dim = 1usize << k;
    let place = |kept_bits: usize, traced_bits: usize| -> usize {
        let mut full = 0usize;
        for (pos, &q) in keep.iter().enumerate() {
            let bit = (kept_bits >> (k - 1 - pos)) & 1;
            full |= bit << (n - 1 - q);
        }
        for (pos, &q) in traced.iter().enumerate() {
            let bit = (traced_bits >> (traced.len() - 1 - pos)) & 1;
            full |= bit << (n - 1 - q);
        }
        full
    };
    let m = rho.matrix();
    let mut out = ComplexMatrix::zeros(out_dim, out_dim);
    for a in 0..out_dim {
        for b in 0..out_dim {
            let mut acc = ZERO;
            for t in 0..(1usize << traced.len()) {
                acc += m[(place(a, t), place(b, t))];
            }
            out[(a, b)] = acc;
        }
    }
    Ok(DensityMatrix::from_trusted(HermitianOperator::hermitian_part(&out)))
}

/// `tr(a† b)`; the imaginary part vanishes for Hermitian inputs.
pub fn hilbert_schmidt_inner(a: &HermitianOperator, b: &HermitianOperator) -> Result<f64> {
    check_dims(a.dim(), b.dim())?;
    Ok(hs_inner_raw(a.matrix(), b.matrix()).re)
}

/// `tr(a† b)` without Hermiticity assumptions.
pub(crate) fn hs_inner_raw(a: &ComplexMatrix, b: &ComplexMatrix) -> C64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

/// Serialized form: `{"dim": d, "entries": [[[re, im], ...], ...]}`, row-major.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct MatrixJson {
    pub dim: usize,
    pub entries: Vec<Vec<[f64; 2]>>,
}

impl MatrixJson {
    pub fn from_matrix(m: &ComplexMatrix) -> Self {
        let entries = (0..m.nrows())
            .map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect())
            .collect();
        Self {
            dim: m.nrows(),
            entries,
        }
    }

    pub fn to_matrix(&self) -> Result<ComplexMatrix> {
        if self.entries.len() != self.dim {
            return Err(TomoError::schema(
                "entries",
                format!("{} rows for dim {}", self.entries.len(), self.dim),
            ));
        }
        let mut m = ComplexMatrix::zeros(self.dim, self.dim);
        for (i, row) in self.entries.iter().enumerate() {
            if row.len() != self.dim {
                return Err(TomoError::schema(
                    format!("entries[{i}]"),
                    format!("{} columns for dim {}", row.len(), self.dim),
                ));
            }
            for (j, [re, im]) in row.iter().enumerate() {
                m[(i, j)] = C64::new(*re, *im);
            }
        }
        Ok(m)
    }
}

impl From<&HermitianOperator> for MatrixJson {
    fn from(op: &HermitianOperator) -> Self {
        MatrixJson::from_matrix(op.matrix())
    }
}

impl From<&DensityMatrix> for MatrixJson {
    fn from(rho: &DensityMatrix) -> Self {
        MatrixJson::from_matrix(rho.matrix())
    }
}
