//! Orthonormal Hermitian bases of symmetry commutants.
//!
//! A state invariant under a group representation lies in the commutant of
//! that representation, `ρ = Σ α_i S_i` with real `α_i`. The basis `{S_i}` is
//! obtained numerically from the group generators as the joint null space of
//! the vectorized invariance constraints.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TomoError};
use crate::operators::{
    hilbert_schmidt_inner, max_abs_diff, pauli, tensor_all, ComplexMatrix, DensityMatrix,
    HermitianOperator, MatrixJson, C64, I_UNIT, ONE, ZERO,
};

/// Singular values at or below this (relative to the largest) span the null space.
pub const NULL_SPACE_TOL: f64 = 1e-9;
/// Gram–Schmidt drops candidates whose residual norm falls below this.
pub const GRAM_SCHMIDT_DROP_TOL: f64 = 1e-8;
/// Upper bound on the dense constraint matrix size, in complex entries.
const MAX_DENSE_CONSTRAINT_ENTRIES: usize = 12_000_000;

#[derive(Clone, Debug)]
pub enum SymmetryKind {
    /// Qubit permutations `S_n`.
    Permutation,
    /// Collective unitaries `U ⊗ ... ⊗ U` (Werner symmetry).
    CollectiveUnitary,
    /// Explicit unitary group generators.
    CustomUnitaries(Vec<ComplexMatrix>),
    /// Explicit Lie-algebra generators.
    CustomLieGenerators(Vec<HermitianOperator>),
}

impl SymmetryKind {
    pub fn name(&self) -> &'static str {
        match self {
            SymmetryKind::Permutation => "permutation",
            SymmetryKind::CollectiveUnitary => "collective",
            SymmetryKind::CustomUnitaries(_) => "custom-unitaries",
            SymmetryKind::CustomLieGenerators(_) => "custom-lie",
        }
    }
}

#[derive(Clone, Debug)]
pub struct SymmetrySpec {
    pub n_qubits: usize,
    pub kind: SymmetryKind,
}

impl SymmetrySpec {
    pub fn new(n_qubits: usize, kind: SymmetryKind) -> Result<Self> {
        let spec = Self { n_qubits, kind };
        spec.validate()?;
        Ok(spec)
    }

    pub fn permutation(n_qubits: usize) -> Self {
        Self {
            n_qubits,
            kind: SymmetryKind::Permutation,
        }
    }

    pub fn collective(n_qubits: usize) -> Self {
        Self {
            n_qubits,
            kind: SymmetryKind::CollectiveUnitary,
        }
    }

    pub fn dim(&self) -> usize {
        1 << self.n_qubits
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_qubits < 1 {
            return Err(TomoError::InvalidArgument("symmetry needs at least one qubit".into()));
        }
        if self.n_qubits > 8 {
            return Err(TomoError::InvalidArgument(format!(
                "{} qubits exceeds the supported maximum of 8",
                self.n_qubits
            )));
        }
        let dim = self.dim();
        match &self.kind {
            SymmetryKind::CustomUnitaries(us) => {
                for u in us {
                    if u.nrows() != dim || u.ncols() != dim {
                        return Err(TomoError::DimensionMismatch {
                            expected: dim,
                            found: u.nrows(),
                        });
                    }
                    let dev = max_abs_diff(&(u * u.adjoint()), &ComplexMatrix::identity(dim, dim));
                    if dev > 1e-9 {
                        return Err(TomoError::InvalidArgument(format!(
                            "custom generator is not unitary (deviation {dev:.3e})"
                        )));
                    }
                }
            }
            SymmetryKind::CustomLieGenerators(gs) => {
                for g in gs {
                    if g.dim() != dim {
                        return Err(TomoError::DimensionMismatch {
                            expected: dim,
                            found: g.dim(),
                        });
                    }
                }
            }
            _ => {}
        }
        Ok(())
    }
}

/// A linear invariance condition on an operator `S`.
#[derive(Clone, Debug)]
pub enum Constraint {
    /// `U S U† = S`.
    Unitary(ComplexMatrix),
    /// `[G, S] = 0`.
    Lie(HermitianOperator),
}

impl Constraint {
    pub fn matrix(&self) -> &ComplexMatrix {
        match self {
            Constraint::Unitary(u) => u,
            Constraint::Lie(g) => g.matrix(),
        }
    }

    /// Largest entry of the constraint residual evaluated at `s`.
    pub fn violation(&self, s: &ComplexMatrix) -> f64 {
        match self {
            Constraint::Unitary(u) => max_abs_diff(&(u * s * u.adjoint()), s),
            Constraint::Lie(g) => max_abs_diff(&(g.matrix() * s), &(s * g.matrix())),
        }
    }
}

/// Permutation matrix on `n` qubits exchanging qubits `a` and `b`.
pub fn swap_matrix(n_qubits: usize, a: usize, b: usize) -> ComplexMatrix {
    let dim = 1usize << n_qubits;
    let mut m = ComplexMatrix::zeros(dim, dim);
    let (sa, sb) = (n_qubits - 1 - a, n_qubits - 1 - b);
    for i in 0..dim {
        let ba = (i >> sa) & 1;
        let bb = (i >> sb) & 1;
        let j = (i & !(1 << sa) & !(1 << sb)) | (bb << sa) | (ba << sb);
        m[(j, i)] = ONE;
    }
    m
}

/// `Σ_i σ^{(i)} / 2` for a single-qubit Pauli `sigma`.
fn collective_generator(n_qubits: usize, sigma: &ComplexMatrix) -> HermitianOperator {
    let dim = 1usize << n_qubits;
    let id = pauli::identity();
    let mut acc = ComplexMatrix::zeros(dim, dim);
    for site in 0..n_qubits {
        let factors: Vec<&ComplexMatrix> =
            (0..n_qubits).map(|q| if q == site { sigma } else { &id }).collect();
        acc += tensor_all(factors);
    }
    HermitianOperator::hermitian_part(&(acc * C64::new(0.5, 0.0)))
}

pub fn group_generators(spec: &SymmetrySpec) -> Result<Vec<Constraint>> {
    spec.validate()?;
    let n = spec.n_qubits;
    Ok(match &spec.kind {
        SymmetryKind::Permutation => (0..n.saturating_sub(1))
            .map(|q| Constraint::Unitary(swap_matrix(n, q, q + 1)))
            .collect(),
        SymmetryKind::CollectiveUnitary => [pauli::x(), pauli::y(), pauli::z()]
            .iter()
            .map(|s| Constraint::Lie(collective_generator(n, s)))
            .collect(),
        SymmetryKind::CustomUnitaries(us) => us.iter().cloned().map(Constraint::Unitary).collect(),
        SymmetryKind::CustomLieGenerators(gs) => gs.iter().cloned().map(Constraint::Lie).collect(),
    })
}

/// Orthonormal Hermitian basis of an operator subspace.
#[derive(Clone, Debug)]
pub struct SymmetricBasis {
    pub n_qubits: usize,
    pub kind: String,
    elements: Vec<HermitianOperator>,
}

impl SymmetricBasis {
    /// Wraps elements after checking orthonormality to 1e-8.
    pub fn from_elements(n_qubits: usize, kind: impl Into<String>, elements: Vec<HermitianOperator>) -> Result<Self> {
        let dim = 1usize << n_qubits;
        for e in &elements {
            if e.dim() != dim {
                return Err(TomoError::DimensionMismatch {
                    expected: dim,
                    found: e.dim(),
                });
            }
        }
        if elements.is_empty() {
            return Err(TomoError::Internal("empty basis".into()));
        }
        let basis = Self {
            n_qubits,
            kind: kind.into(),
            elements,
        };
        let err = basis.orthonormality_error();
        if err > 1e-8 {
            return Err(TomoError::InvalidArgument(format!(
                "basis is not orthonormal (Gram error {err:.3e})"
            )));
        }
        Ok(basis)
    }

    /// Normalized Pauli strings `P / √d`: a basis of the full operator space.
    pub fn full_space(n_qubits: usize) -> Self {
        let dim = 1usize << n_qubits;
        let norm = 1.0 / (dim as f64).sqrt();
        let letters = ['I', 'X', 'Y', 'Z'];
        let elements = (0..dim * dim)
            .map(|code| {
                let factors: Vec<ComplexMatrix> = (0..n_qubits)
                    .map(|q| {
                        let digit = (code >> (2 * (n_qubits - 1 - q))) & 3;
                        pauli::from_char(letters[digit]).expect("pauli letter")
                    })
                    .collect();
                HermitianOperator::hermitian_part(&tensor_all(factors.iter())).scale(norm)
            })
            .collect();
        Self {
            n_qubits,
            kind: "full".into(),
            elements,
        }
    }

    pub fn r(&self) -> usize {
        self.elements.len()
    }

    pub fn dim(&self) -> usize {
        1 << self.n_qubits
    }

    pub fn elements(&self) -> &[HermitianOperator] {
        &self.elements
    }

    /// Largest entry of `|Gram - I|`.
    pub fn orthonormality_error(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (a, ea) in self.elements.iter().enumerate() {
            for (b, eb) in self.elements.iter().enumerate().skip(a) {
                let g = hilbert_schmidt_inner(ea, eb).unwrap_or(f64::NAN);
                let target = if a == b { 1.0 } else { 0.0 };
                worst = worst.max((g - target).abs());
            }
        }
        worst
    }

    /// Coefficients `α_i = tr(S_i H)` of the orthogonal projection of `h`.
    pub fn coefficients_of(&self, h: &HermitianOperator) -> Result<Vec<f64>> {
        self.elements
            .iter()
            .map(|s| hilbert_schmidt_inner(s, h))
            .collect()
    }

    /// `Σ α_i S_i`.
    pub fn combine(&self, alpha: &[f64]) -> Result<HermitianOperator> {
        if alpha.len() != self.r() {
            return Err(TomoError::DimensionMismatch {
                expected: self.r(),
                found: alpha.len(),
            });
        }
        HermitianOperator::linear_combination(alpha, &self.elements)
    }

    /// Orthogonal projection of `h` onto the span (the twirl for a group commutant).
    pub fn project(&self, h: &HermitianOperator) -> Result<HermitianOperator> {
        self.combine(&self.coefficients_of(h)?)
    }

    /// `tr(S_i)` for every element.
    pub fn traces(&self) -> Vec<f64> {
        self.elements.iter().map(|s| s.trace()).collect()
    }

    pub fn to_json(&self) -> BasisJson {
        BasisJson {
            kind: self.kind.clone(),
            n: self.n_qubits,
            r: self.r(),
            elements: self.elements.iter().map(MatrixJson::from).collect(),
        }
    }

    pub fn from_json(json: &BasisJson) -> Result<Self> {
        if json.elements.len() != json.r {
            return Err(TomoError::schema(
                "r",
                format!("declares {} elements, found {}", json.r, json.elements.len()),
            ));
        }
        let elements = json
            .elements
            .iter()
            .map(|m| HermitianOperator::new(m.to_matrix()?))
            .collect::<Result<Vec<_>>>()?;
        Self::from_elements(json.n, json.kind.clone(), elements)
    }
}

/// On-disk form of a [`SymmetricBasis`].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BasisJson {
    pub kind: String,
    pub n: usize,
    pub r: usize,
    pub elements: Vec<MatrixJson>,
}

/// Real coefficients of an operator in a [`SymmetricBasis`].
#[derive(Clone, Debug)]
pub struct SymmetricCoefficients<'a> {
    pub basis: &'a SymmetricBasis,
    pub alpha: Vec<f64>,
}

pub fn project_onto_basis<'a>(rho: &DensityMatrix, basis: &'a SymmetricBasis) -> Result<SymmetricCoefficients<'a>> {
    if rho.dim() != basis.dim() {
        return Err(TomoError::DimensionMismatch {
            expected: basis.dim(),
            found: rho.dim(),
        });
    }
    Ok(SymmetricCoefficients {
        basis,
        alpha: basis.coefficients_of(rho.operator())?,
    })
}

pub fn reconstruct(coeffs: &SymmetricCoefficients<'_>) -> HermitianOperator {
    coeffs
        .basis
        .combine(&coeffs.alpha)
        .expect("coefficient vector sized by its basis")
}

struct DisjointSet {
    parent: Vec<usize>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            // smaller root wins, so orbit representatives are minimal indices
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }
}

/// Image of each basis index if `m` is a permutation matrix.
fn as_permutation(m: &ComplexMatrix) -> Option<Vec<usize>> {
    let dim = m.nrows();
    let mut image = vec![usize::MAX; dim];
    for col in 0..dim {
        for row in 0..dim {
            let v = m[(row, col)];
            if (v - ONE).norm() < 1e-12 {
                if image[col] != usize::MAX {
                    return None;
                }
                image[col] = row;
            } else if v.norm() > 1e-12 {
                return None;
            }
        }
        if image[col] == usize::MAX {
            return None;
        }
    }
    Some(image)
}

fn diagonal_of(m: &ComplexMatrix) -> Option<Vec<C64>> {
    let dim = m.nrows();
    for i in 0..dim {
        for j in 0..dim {
            if i != j && m[(i, j)].norm() > 1e-12 {
                return None;
            }
        }
    }
    Some((0..dim).map(|i| m[(i, i)]).collect())
}

/// Action of a non-structured constraint on a sparse orbit indicator.
fn constraint_image(constraint: &Constraint, orbit: &[(usize, usize)], dim: usize) -> ComplexMatrix {
    let mut out = ComplexMatrix::zeros(dim, dim);
    match constraint {
        Constraint::Lie(g) => {
            let g = g.matrix();
            for &(i, j) in orbit {
                // G E_ij - E_ij G
                for k in 0..dim {
                    out[(k, j)] += g[(k, i)];
                    out[(i, k)] -= g[(j, k)];
                }
            }
        }
        Constraint::Unitary(u) => {
            for &(i, j) in orbit {
                // U E_ij U† - E_ij
                for a in 0..dim {
                    let uai = u[(a, i)];
                    if uai == ZERO {
                        continue;
                    }
                    for b in 0..dim {
                        out[(a, b)] += uai * u[(b, j)].conj();
                    }
                }
                out[(i, j)] -= ONE;
            }
        }
    }
    out
}

/// Computes an orthonormal Hermitian basis of `{S : S invariant under every generator}`.
///
/// Permutation-matrix generators are resolved exactly by merging index pairs
/// into orbits, diagonal generators eliminate orbits directly, and any
/// remaining generators are imposed through an SVD null space of the stacked
/// vectorized constraints over the surviving orbit variables.
pub fn compute_commutant_basis(spec: &SymmetrySpec) -> Result<SymmetricBasis> {
    let constraints = group_generators(spec)?;
    let dim = spec.dim();
    let pair = |i: usize, j: usize| i * dim + j;

    let mut orbits = DisjointSet::new(dim * dim);
    let mut diagonal: Vec<(bool, Vec<C64>)> = Vec::new();
    let mut general: Vec<&Constraint> = Vec::new();
    for c in &constraints {
        let unitary = matches!(c, Constraint::Unitary(_));
        if unitary {
            if let Some(image) = as_permutation(c.matrix()) {
                for i in 0..dim {
                    for j in 0..dim {
                        orbits.union(pair(i, j), pair(image[i], image[j]));
                    }
                }
                continue;
            }
        }
        if let Some(d) = diagonal_of(c.matrix()) {
            diagonal.push((unitary, d));
        } else {
            general.push(c);
        }
    }

    // Group pairs by orbit root; roots are minimal linear indices so the
    // iteration order below is deterministic.
    let mut members: Vec<Vec<(usize, usize)>> = Vec::new();
    let mut slot = vec![usize::MAX; dim * dim];
    for i in 0..dim {
        for j in 0..dim {
            let root = orbits.find(pair(i, j));
            if slot[root] == usize::MAX {
                slot[root] = members.len();
                members.push(Vec::new());
            }
            members[slot[root]].push((i, j));
        }
    }

    let satisfies_diagonal = |i: usize, j: usize| {
        diagonal.iter().all(|(unitary, d)| {
            if *unitary {
                (d[i] * d[j].conj() - ONE).norm() <= 1e-12
            } else {
                (d[i] - d[j]).norm() <= 1e-12
            }
        })
    };
    let variables: Vec<Vec<(usize, usize)>> = members
        .into_iter()
        .filter(|orbit| orbit.iter().all(|&(i, j)| satisfies_diagonal(i, j)))
        .collect();

    let null_vectors: Vec<Vec<C64>> = if general.is_empty() {
        (0..variables.len())
            .map(|k| {
                let mut v = vec![ZERO; variables.len()];
                v[k] = ONE;
                v
            })
            .collect()
    } else {
        general_null_space(&general, &variables, dim)?
    };

    let mut candidates = Vec::with_capacity(2 * null_vectors.len());
    for v in &null_vectors {
        let mut m = ComplexMatrix::zeros(dim, dim);
        for (coef, orbit) in v.iter().zip(&variables) {
            if *coef == ZERO {
                continue;
            }
            for &(i, j) in orbit {
                m[(i, j)] += *coef;
            }
        }
        let adj = m.adjoint();
        candidates.push((&m + &adj) * C64::new(0.5, 0.0));
        candidates.push((&m - &adj) * (I_UNIT * C64::new(0.5, 0.0)));
    }

    let elements = gram_schmidt(candidates);
    if elements.is_empty() {
        return Err(TomoError::Internal("commutant basis came out empty".into()));
    }
    Ok(SymmetricBasis {
        n_qubits: spec.n_qubits,
        kind: spec.kind.name().to_string(),
        elements,
    })
}

fn general_null_space(
    general: &[&Constraint],
    variables: &[Vec<(usize, usize)>],
    dim: usize,
) -> Result<Vec<Vec<C64>>> {
    let cols = variables.len();
    if cols == 0 {
        return Ok(Vec::new());
    }
    let block = dim * dim;
    // Collect the images and keep only rows that are nonzero for some variable.
    let mut images: Vec<Vec<ComplexMatrix>> = Vec::with_capacity(general.len());
    let mut live = vec![false; general.len() * block];
    for (g, c) in general.iter().enumerate() {
        let per_var: Vec<ComplexMatrix> = variables
            .iter()
            .map(|orbit| constraint_image(c, orbit, dim))
            .collect();
        for img in &per_var {
            for (k, v) in img.iter().enumerate() {
                // column-major iteration index -> (row, col)
                if v.norm() > 1e-14 {
                    live[g * block + k] = true;
                }
            }
        }
        images.push(per_var);
    }
    let live_rows: Vec<usize> = (0..live.len()).filter(|&k| live[k]).collect();
    let rows = live_rows.len().max(cols);
    if rows.saturating_mul(cols) > MAX_DENSE_CONSTRAINT_ENTRIES {
        return Err(TomoError::InvalidArgument(format!(
            "commutant constraint system of {rows}x{cols} is too large for the dense route"
        )));
    }
    let mut stacked = DMatrix::<C64>::zeros(rows, cols);
    for (r, &k) in live_rows.iter().enumerate() {
        let (g, within) = (k / block, k % block);
        for c in 0..cols {
            stacked[(r, c)] = images[g][c].as_slice()[within];
        }
    }
    let svd = stacked.svd(false, true);
    let v_t = svd
        .v_t
        .ok_or_else(|| TomoError::Internal("svd without right singular vectors".into()))?;
    let sigma_max = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let threshold = NULL_SPACE_TOL * sigma_max.max(1.0);
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| {
        svd.singular_values[b]
            .partial_cmp(&svd.singular_values[a])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    Ok(order
        .into_iter()
        .filter(|&k| svd.singular_values[k] <= threshold)
        .map(|k| v_t.row(k).iter().map(|z| z.conj()).collect())
        .collect())
}

/// Modified Gram–Schmidt with one reorthogonalization pass, under the
/// Hilbert–Schmidt inner product.
fn gram_schmidt(candidates: Vec<ComplexMatrix>) -> Vec<HermitianOperator> {
    let mut accepted: Vec<ComplexMatrix> = Vec::new();
    for mut c in candidates {
        let initial = c.norm();
        if initial <= GRAM_SCHMIDT_DROP_TOL {
            continue;
        }
        for _ in 0..2 {
            for q in &accepted {
                let overlap: f64 = q.iter().zip(c.iter()).map(|(a, b)| (a.conj() * b).re).sum();
                if overlap != 0.0 {
                    c.zip_apply(q, |x, y| *x -= y * overlap);
                }
            }
        }
        let norm = c.norm();
        if norm <= GRAM_SCHMIDT_DROP_TOL * initial.max(1.0) {
            continue;
        }
        c.unscale_mut(norm);
        accepted.push(c);
    }
    accepted
        .into_iter()
        .map(|m| HermitianOperator::hermitian_part(&m))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::testing::{random_density, random_unitary};
    use crate::operators::{tensor, PureState};
    use nalgebra::DVector;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ghz(n: usize) -> DensityMatrix {
        let dim = 1 << n;
        let mut v = DVector::zeros(dim);
        v[0] = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        v[dim - 1] = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        DensityMatrix::from_pure(&PureState::new(v).unwrap())
    }

    #[test]
    fn permutation_generators() {
        let g = group_generators(&SymmetrySpec::permutation(2)).unwrap();
        assert_eq!(g.len(), 1);
        let swap = g[0].matrix();
        let expected = ComplexMatrix::from_fn(4, 4, |i, j| {
            let p = [0usize, 2, 1, 3];
            if p[j] == i {
                ONE
            } else {
                ZERO
            }
        });
        assert_eq!(swap, &expected);

        let g4 = group_generators(&SymmetrySpec::permutation(4)).unwrap();
        assert_eq!(g4.len(), 3);
        for c in &g4 {
            let p = c.matrix();
            assert!(max_abs_diff(&(p * p), &ComplexMatrix::identity(16, 16)) < 1e-15);
        }
    }

    #[test]
    fn collective_generators_include_jz() {
        let g = group_generators(&SymmetrySpec::collective(2)).unwrap();
        assert_eq!(g.len(), 3);
        let jz = (tensor(&pauli::z(), &pauli::identity()) + tensor(&pauli::identity(), &pauli::z()))
            * C64::new(0.5, 0.0);
        assert!(max_abs_diff(g[2].matrix(), &jz) < 1e-15);
    }

    #[test]
    fn zero_qubits_rejected() {
        assert!(group_generators(&SymmetrySpec::permutation(0)).is_err());
    }

    #[test]
    fn small_commutant_dimensions() {
        assert_eq!(compute_commutant_basis(&SymmetrySpec::permutation(2)).unwrap().r(), 10);
        assert_eq!(compute_commutant_basis(&SymmetrySpec::permutation(3)).unwrap().r(), 20);
        assert_eq!(compute_commutant_basis(&SymmetrySpec::collective(2)).unwrap().r(), 2);
        assert_eq!(compute_commutant_basis(&SymmetrySpec::collective(3)).unwrap().r(), 5);
    }

    /// Σ_λ (dim of the S_n irrep λ)² over two-row partitions of n, via the
    /// hook-length formula.
    fn schur_weyl_count(n: usize) -> usize {
        fn factorial(k: usize) -> usize {
            (1..=k).product()
        }
        let mut total = 0;
        for second in 0..=n / 2 {
            let first = n - second;
            // hook lengths of the two-row diagram (first, second)
            let mut hooks = 1usize;
            for c in 0..first {
                let below = usize::from(c < second);
                hooks *= first - c + below;
            }
            for c in 0..second {
                hooks *= second - c;
            }
            let d = factorial(n) / hooks;
            total += d * d;
        }
        total
    }

    #[test]
    fn collective_dimension_matches_schur_weyl() {
        assert_eq!(schur_weyl_count(2), 2);
        assert_eq!(schur_weyl_count(3), 5);
        assert_eq!(schur_weyl_count(4), 14);
        for n in 2..=4 {
            let b = compute_commutant_basis(&SymmetrySpec::collective(n)).unwrap();
            assert_eq!(b.r(), schur_weyl_count(n));
        }
    }

    #[test]
    fn bases_are_orthonormal_and_invariant() {
        for spec in [
            SymmetrySpec::permutation(3),
            SymmetrySpec::collective(3),
            SymmetrySpec::permutation(4),
        ] {
            let basis = compute_commutant_basis(&spec).unwrap();
            assert!(basis.orthonormality_error() < 1e-8);
            let gens = group_generators(&spec).unwrap();
            for s in basis.elements() {
                for g in &gens {
                    assert!(g.violation(s.matrix()) < 1e-8);
                }
            }
        }
    }

    #[test]
    fn collective_basis_invariant_under_random_product_unitaries() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let basis = compute_commutant_basis(&SymmetrySpec::collective(3)).unwrap();
        let u = random_unitary(&mut rng, 2);
        let uuu = tensor_all([&u, &u, &u]);
        for s in basis.elements() {
            assert!(Constraint::Unitary(uuu.clone()).violation(s.matrix()) < 1e-8);
        }
    }

    #[test]
    fn maximally_mixed_survives_projection() {
        let basis = compute_commutant_basis(&SymmetrySpec::permutation(3)).unwrap();
        let mixed = DensityMatrix::maximally_mixed(8);
        let coeffs = project_onto_basis(&mixed, &basis).unwrap();
        assert!(max_abs_diff(reconstruct(&coeffs).matrix(), mixed.matrix()) < 1e-9);
    }

    #[test]
    fn ghz_is_in_permutation_span() {
        let basis = compute_commutant_basis(&SymmetrySpec::permutation(3)).unwrap();
        let rho = ghz(3);
        let coeffs = project_onto_basis(&rho, &basis).unwrap();
        let back = reconstruct(&coeffs);
        assert!(max_abs_diff(back.matrix(), rho.matrix()) < 1e-9);
    }

    #[test]
    fn non_symmetric_state_projects_to_its_twirl() {
        let basis = compute_commutant_basis(&SymmetrySpec::permutation(2)).unwrap();
        let rho = DensityMatrix::basis_state(4, 1); // |01⟩⟨01|
        let projected = reconstruct(&project_onto_basis(&rho, &basis).unwrap());
        // average over the two permutations
        let swap = swap_matrix(2, 0, 1);
        let twirl = (rho.matrix() + &swap * rho.matrix() * swap.adjoint()) * C64::new(0.5, 0.0);
        assert!(max_abs_diff(projected.matrix(), &twirl) < 1e-9);
        assert!(max_abs_diff(projected.matrix(), rho.matrix()) > 0.1);
    }

    #[test]
    fn twirl_is_idempotent() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let basis = compute_commutant_basis(&SymmetrySpec::collective(3)).unwrap();
        let rho = random_density(&mut rng, 8);
        let once = basis.project(rho.operator()).unwrap();
        let twice = basis.project(&once).unwrap();
        assert!(max_abs_diff(once.matrix(), twice.matrix()) < 1e-9);
    }

    #[test]
    fn reconstruct_trivial_cases() {
        let basis = compute_commutant_basis(&SymmetrySpec::collective(2)).unwrap();
        let zero = SymmetricCoefficients {
            basis: &basis,
            alpha: vec![0.0; basis.r()],
        };
        assert!(reconstruct(&zero).matrix().iter().all(|v| *v == ZERO));
        let unit = SymmetricCoefficients {
            basis: &basis,
            alpha: vec![1.0, 0.0],
        };
        assert_eq!(reconstruct(&unit), basis.elements()[0]);
    }

    #[test]
    fn custom_unitaries_match_builtin_permutation() {
        let spec = SymmetrySpec::new(3, SymmetryKind::CustomUnitaries(vec![swap_matrix(3, 0, 1), swap_matrix(3, 1, 2)]))
            .unwrap();
        assert_eq!(compute_commutant_basis(&spec).unwrap().r(), 20);
    }

    #[test]
    fn custom_generic_unitary_uses_dense_route() {
        // Hadamard on every qubit is neither diagonal nor a permutation;
        // together with the swap it generates a finite group.
        let h = (pauli::x() + pauli::z()) * C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        let hh = tensor(&h, &h);
        let spec = SymmetrySpec::new(2, SymmetryKind::CustomUnitaries(vec![swap_matrix(2, 0, 1), hh.clone()]))
            .unwrap();
        let basis = compute_commutant_basis(&spec).unwrap();
        assert!(basis.orthonormality_error() < 1e-8);
        for s in basis.elements() {
            assert!(Constraint::Unitary(hh.clone()).violation(s.matrix()) < 1e-8);
        }
        // brute-force oracle: dimension of the fixed space of the twirl over
        // the group generated by {SWAP, H⊗H} (order 4, abelian)
        let swap = swap_matrix(2, 0, 1);
        let group = [ComplexMatrix::identity(4, 4), swap.clone(), hh.clone(), &swap * &hh];
        let full = SymmetricBasis::full_space(2);
        let mut twirled: Vec<ComplexMatrix> = Vec::new();
        for e in full.elements() {
            let mut acc = ComplexMatrix::zeros(4, 4);
            for g in &group {
                acc += g * e.matrix() * g.adjoint();
            }
            twirled.push(acc * C64::new(0.25, 0.0));
        }
        assert_eq!(gram_schmidt(twirled).len(), basis.r());
    }

    #[test]
    fn custom_lie_generators_match_collective() {
        let gens: Vec<HermitianOperator> = group_generators(&SymmetrySpec::collective(2))
            .unwrap()
            .into_iter()
            .map(|c| match c {
                Constraint::Lie(g) => g,
                Constraint::Unitary(_) => unreachable!(),
            })
            .collect();
        let spec = SymmetrySpec::new(2, SymmetryKind::CustomLieGenerators(gens)).unwrap();
        assert_eq!(compute_commutant_basis(&spec).unwrap().r(), 2);
    }

    #[test]
    fn non_unitary_custom_generator_rejected() {
        let bad = ComplexMatrix::identity(4, 4) * C64::new(2.0, 0.0);
        assert!(SymmetrySpec::new(2, SymmetryKind::CustomUnitaries(vec![bad])).is_err());
    }

    #[test]
    fn full_space_is_orthonormal() {
        let b = SymmetricBasis::full_space(2);
        assert_eq!(b.r(), 16);
        assert!(b.orthonormality_error() < 1e-12);
    }

    #[test]
    fn basis_json_round_trip() {
        let basis = compute_commutant_basis(&SymmetrySpec::collective(2)).unwrap();
        let text = serde_json::to_string(&basis.to_json()).unwrap();
        let back = SymmetricBasis::from_json(&serde_json::from_str(&text).unwrap()).unwrap();
        assert_eq!(back.r(), 2);
        assert_eq!(back.elements(), basis.elements());
    }
}
