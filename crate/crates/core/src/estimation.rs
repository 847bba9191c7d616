//! Convex state estimation: the variational program over the full operator
//! space (cVQT) or a symmetric basis (GIT), a likelihood baseline, and
//! least-squares inversion.
//!
//! The VQT program is solved in basis-coefficient space with ADMM. The
//! splitting is `z = Aα − f` (weighted absolute-value term, soft
//! thresholding) and `X = ρ(α)` (log-det barrier plus PSD cone, closed form
//! in the eigenbasis); the α step is an equality-constrained least-squares
//! solve against a matrix that is factorized once.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TomoError};
use crate::measurement::ObservableRecord;
use crate::operators::{
    eig_hermitian, project_to_simplex, ComplexMatrix, DensityMatrix, HermitianOperator, MatrixJson, C64,
};
use crate::symmetry::SymmetricBasis;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorMode {
    Git,
    Cvqt,
    Maxlik,
}

impl EstimatorMode {
    pub fn label(self) -> &'static str {
        match self {
            EstimatorMode::Git => "git",
            EstimatorMode::Cvqt => "cvqt",
            EstimatorMode::Maxlik => "maxlik",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EstimatorConfig {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub max_iterations: usize,
    /// Restarts whose objectives agree to this are considered equivalent.
    pub objective_tolerance: f64,
    /// Stopping threshold on primal and dual residuals.
    pub feasibility_tolerance: f64,
    /// Replaces `|f_i|` in the slack denominator when smaller.
    pub frequency_floor: f64,
    /// Random starts in addition to the linear-inversion start.
    pub restarts: usize,
    pub seed: u64,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 1.0,
            gamma: 1e-3,
            max_iterations: 20_000,
            objective_tolerance: 1e-6,
            feasibility_tolerance: 1e-9,
            frequency_floor: 1e-6,
            restarts: 3,
            seed: 0,
        }
    }
}

impl EstimatorConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta), ("gamma", self.gamma)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(TomoError::InvalidArgument(format!("{name} must be finite and nonnegative, got {v}")));
            }
        }
        for (name, v) in [
            ("objective_tolerance", self.objective_tolerance),
            ("feasibility_tolerance", self.feasibility_tolerance),
            ("frequency_floor", self.frequency_floor),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(TomoError::InvalidArgument(format!("{name} must be positive, got {v}")));
            }
        }
        if self.max_iterations == 0 {
            return Err(TomoError::InvalidArgument("max_iterations must be positive".into()));
        }
        Ok(())
    }

    fn slack_denominator(&self, f: f64) -> f64 {
        f.abs().max(self.frequency_floor)
    }
}

/// Records plus an optional symmetric basis (present: GIT, absent: cVQT).
#[derive(Clone, Debug)]
pub struct EstimationProblem {
    records: Vec<ObservableRecord>,
    basis: Option<SymmetricBasis>,
    dim: usize,
}

impl EstimationProblem {
    pub fn new(records: Vec<ObservableRecord>, basis: Option<SymmetricBasis>) -> Result<Self> {
        let first = records
            .iter()
            .find(|r| r.measured)
            .ok_or_else(|| TomoError::InvalidArgument("at least one measured record is required".into()))?;
        let dim = basis.as_ref().map_or(first.projector.dim(), |b| b.dim());
        for r in &records {
            if r.projector.dim() != dim {
                return Err(TomoError::DimensionMismatch {
                    expected: dim,
                    found: r.projector.dim(),
                });
            }
            if r.measured && !(0.0..=1.0).contains(&r.frequency) {
                return Err(TomoError::OutOfUnitRange {
                    name: "frequency",
                    value: r.frequency,
                });
            }
        }
        if !dim.is_power_of_two() {
            return Err(TomoError::NotQubitDimension(dim));
        }
        Ok(Self { records, basis, dim })
    }

    pub fn records(&self) -> &[ObservableRecord] {
        &self.records
    }

    pub fn basis(&self) -> Option<&SymmetricBasis> {
        self.basis.as_ref()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_git(&self) -> bool {
        self.basis.is_some()
    }

    fn measured(&self) -> impl Iterator<Item = &ObservableRecord> {
        self.records.iter().filter(|r| r.measured)
    }

    fn unmeasured(&self) -> impl Iterator<Item = &ObservableRecord> {
        self.records.iter().filter(|r| !r.measured)
    }

    fn working_basis(&self) -> SymmetricBasis {
        match &self.basis {
            Some(b) => b.clone(),
            None => SymmetricBasis::full_space(self.dim.trailing_zeros() as usize),
        }
    }
}

#[derive(Clone, Debug)]
pub struct EstimationResult {
    pub rho_hat: DensityMatrix,
    pub objective: f64,
    /// Optimal slack per measured record, in record order.
    pub delta: Vec<f64>,
    pub feasibility_residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimationReport {
    pub mode: EstimatorMode,
    pub rho_hat: MatrixJson,
    pub objective: f64,
    pub delta: Vec<f64>,
    pub feasibility_residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl EstimationResult {
    pub fn report(&self, mode: EstimatorMode) -> EstimationReport {
        EstimationReport {
            mode,
            rho_hat: MatrixJson::from_matrix(self.rho_hat.matrix()),
            objective: self.objective,
            delta: self.delta.clone(),
            feasibility_residual: self.feasibility_residual,
            iterations: self.iterations,
            converged: self.converged,
        }
    }
}

/// Slacks `Δ_i = |tr(E_iρ) − f_i| / max(|f_i|, ε)` over measured records.
pub fn slacks(problem: &EstimationProblem, config: &EstimatorConfig, rho: &DensityMatrix) -> Vec<f64> {
    problem
        .measured()
        .map(|r| {
            let p = (r.projector.matrix() * rho.matrix()).trace().re;
            (p - r.frequency).abs() / config.slack_denominator(r.frequency)
        })
        .collect()
}

/// `α ΣΔ_i + β Σ_{unmeasured} tr(E_iρ) − γ log det ρ`, evaluated directly
/// from the operators. Infinite when `γ > 0` and `ρ` is singular.
pub fn vqt_objective(problem: &EstimationProblem, config: &EstimatorConfig, rho: &DensityMatrix) -> f64 {
    let data: f64 = slacks(problem, config, rho).iter().sum();
    let mass: f64 = problem
        .unmeasured()
        .map(|r| (r.projector.matrix() * rho.matrix()).trace().re)
        .sum();
    let barrier = if config.gamma > 0.0 {
        let values = eig_hermitian(rho.operator()).values;
        if values.iter().any(|&v| v <= 0.0) {
            return f64::INFINITY;
        }
        -config.gamma * values.iter().map(|v| v.ln()).sum::<f64>()
    } else {
        0.0
    };
    config.alpha * data + config.beta * mass + barrier
}

/// Columns are the vectorized basis elements, so `vec(ρ(α)) = B α` and
/// `α = Re(B† vec(X))` for `X` in the span.
struct CoefficientMap {
    dim: usize,
    columns: DMatrix<C64>,
}

impl CoefficientMap {
    fn new(basis: &SymmetricBasis) -> Self {
        let dim = basis.dim();
        let mut columns = DMatrix::zeros(dim * dim, basis.r());
        for (j, s) in basis.elements().iter().enumerate() {
            columns.column_mut(j).copy_from_slice(s.matrix().as_slice());
        }
        Self { dim, columns }
    }

    fn operator(&self, alpha: &DVector<f64>) -> ComplexMatrix {
        let a: DVector<C64> = alpha.map(|v| C64::new(v, 0.0));
        let v = &self.columns * a;
        let m = ComplexMatrix::from_column_slice(self.dim, self.dim, v.as_slice());
        (&m + m.adjoint()) * C64::new(0.5, 0.0)
    }

    fn coefficients(&self, m: &ComplexMatrix) -> DVector<f64> {
        let v = DVector::from_column_slice(m.as_slice());
        (self.columns.adjoint() * v).map(|c| c.re)
    }

    /// `tr(E S_j)` for each element.
    fn row(&self, e: &HermitianOperator) -> DVector<f64> {
        self.coefficients(e.matrix())
    }
}

/// Linear-inversion output with the rank of its design matrix.
#[derive(Clone, Debug)]
pub struct LinearInversion {
    pub operator: HermitianOperator,
    pub rank: usize,
    pub unknowns: usize,
}

impl LinearInversion {
    pub fn rank_deficient(&self) -> bool {
        self.rank < self.unknowns
    }
}

/// Least-squares solve of `tr(E_iρ) = f_i` together with `tr ρ = 1`, over
/// the coefficients of `basis` (or of all operators). Minimum-norm when the
/// design is rank deficient; the result need not be positive.
pub fn linear_inversion(records: &[ObservableRecord], basis: Option<&SymmetricBasis>) -> Result<LinearInversion> {
    let measured: Vec<&ObservableRecord> = records.iter().filter(|r| r.measured).collect();
    let first = measured
        .first()
        .ok_or_else(|| TomoError::InvalidArgument("linear inversion needs measured records".into()))?;
    let dim = first.projector.dim();
    let owned;
    let basis = match basis {
        Some(b) => b,
        None => {
            owned = SymmetricBasis::full_space(crate::operators::qubits_for_dim(dim)?);
            &owned
        }
    };
    if basis.dim() != dim {
        return Err(TomoError::DimensionMismatch {
            expected: basis.dim(),
            found: dim,
        });
    }
    let map = CoefficientMap::new(basis);
    let r = basis.r();
    let rows = measured.len() + 1;
    // pad wide systems so the thin SVD keeps every right singular vector
    let padded = rows.max(r);
    let mut a = DMatrix::zeros(padded, r);
    let mut b = DVector::zeros(padded);
    for (i, rec) in measured.iter().enumerate() {
        if rec.projector.dim() != dim {
            return Err(TomoError::DimensionMismatch {
                expected: dim,
                found: rec.projector.dim(),
            });
        }
        a.set_row(i, &map.row(&rec.projector).transpose());
        b[i] = rec.frequency;
    }
    let traces = DVector::from_vec(basis.traces());
    a.set_row(measured.len(), &traces.transpose());
    b[measured.len()] = 1.0;

    let svd = a.svd(true, true);
    let smax = svd.singular_values.max();
    let tol = 1e-9 * smax.max(1.0);
    let rank = svd.singular_values.iter().filter(|&&s| s > tol).count();
    let alpha = svd
        .solve(&b, tol)
        .map_err(|e| TomoError::Internal(format!("pseudoinverse failed: {e}")))?;
    let operator = HermitianOperator::hermitian_part(&map.operator(&alpha));
    if rank < r {
        log::debug!("linear inversion design has rank {rank} of {r}");
    }
    Ok(LinearInversion {
        operator,
        rank,
        unknowns: r,
    })
}

/// Cap on damped Newton steps per smoothing stage.
const NEWTON_ITERATIONS: usize = 100;
const PATH_SHRINK: f64 = 0.1;
const PATH_FINAL_SMOOTHING: f64 = 1e-12;

/// Fixed data of one VQT instance in coefficient space.
struct Admm<'a> {
    problem: &'a EstimationProblem,
    config: &'a EstimatorConfig,
    map: CoefficientMap,
    a: DMatrix<f64>,
    f: DVector<f64>,
    weights: DVector<f64>,
    mass: DVector<f64>,
    traces: DVector<f64>,
    chol: Cholesky<f64, Dyn>,
    m_inv_t: DVector<f64>,
    t_m_inv_t: f64,
}

struct AdmmOutcome {
    rho: DensityMatrix,
    objective: f64,
    residual: f64,
    iterations: usize,
    converged: bool,
}

impl<'a> Admm<'a> {
    fn new(problem: &'a EstimationProblem, config: &'a EstimatorConfig, basis: &SymmetricBasis) -> Result<Self> {
        let map = CoefficientMap::new(basis);
        let r = basis.r();
        let measured: Vec<&ObservableRecord> = problem.measured().collect();
        let mut a = DMatrix::zeros(measured.len(), r);
        let mut f = DVector::zeros(measured.len());
        let mut weights = DVector::zeros(measured.len());
        for (i, rec) in measured.iter().enumerate() {
            a.set_row(i, &map.row(&rec.projector).transpose());
            f[i] = rec.frequency;
            weights[i] = config.alpha / config.slack_denominator(rec.frequency);
        }
        let mut mass = DVector::zeros(r);
        for rec in problem.unmeasured() {
            mass += map.row(&rec.projector);
        }
        let traces = DVector::from_vec(basis.traces());
        let m = a.transpose() * &a + DMatrix::identity(r, r);
        let chol = Cholesky::new(m).ok_or_else(|| TomoError::Internal("normal matrix not positive definite".into()))?;
        let m_inv_t = chol.solve(&traces);
        let t_m_inv_t = traces.dot(&m_inv_t);
        Ok(Self {
            problem,
            config,
            map,
            a,
            f,
            weights,
            mass,
            traces,
            chol,
            m_inv_t,
            t_m_inv_t,
        })
    }

    /// Nearest unit-trace PSD operator, as (coefficients, matrix).
    fn feasible_start(&self, op: &HermitianOperator) -> (DVector<f64>, ComplexMatrix) {
        let rho = DensityMatrix::project_from(op);
        let alpha = self.map.coefficients(rho.matrix());
        let x = self.map.operator(&alpha);
        (alpha, x)
    }

    fn cone_step(&self, v: &ComplexMatrix, mu: f64) -> ComplexMatrix {
        let eig = eig_hermitian(&HermitianOperator::hermitian_part(v));
        let gamma = self.config.gamma;
        let values: Vec<f64> = eig
            .values
            .iter()
            .map(|&l| {
                if gamma > 0.0 {
                    0.5 * (l + (l * l + 4.0 * gamma / mu).sqrt())
                } else {
                    l.max(0.0)
                }
            })
            .collect();
        eig.reassemble(&values).into_matrix()
    }

    fn run(&self, start: &HermitianOperator, tol: f64) -> Result<AdmmOutcome> {
        let (mut alpha, mut x) = self.feasible_start(start);
        let mut z = &self.a * &alpha - &self.f;
        let mut u = DVector::zeros(self.f.len());
        let mut big_u = ComplexMatrix::zeros(self.map.dim, self.map.dim);
        let mut mu = 1.0;
        let mut converged = false;
        let mut iterations = 0;
        let mut residual = f64::INFINITY;

        for k in 1..=self.config.max_iterations {
            iterations = k;
            let b = self.map.coefficients(&(&x - &big_u));
            let q = self.a.transpose() * (&self.f + &z - &u) + b - &self.mass * (self.config.beta / mu);
            let y = self.chol.solve(&q);
            let lambda = (self.traces.dot(&y) - 1.0) / self.t_m_inv_t;
            alpha = y - &self.m_inv_t * lambda;
            let rho_alpha = self.map.operator(&alpha);
            let a_alpha = &self.a * &alpha;

            let z_old = z.clone();
            let shifted = &a_alpha - &self.f + &u;
            z = DVector::from_fn(shifted.len(), |i, _| {
                let thresh = self.weights[i] / mu;
                let s = shifted[i];
                s.signum() * (s.abs() - thresh).max(0.0)
            });

            let x_old = x.clone();
            x = self.cone_step(&(&rho_alpha + &big_u), mu);

            let r_data = &a_alpha - &self.f - &z;
            let r_cone = &rho_alpha - &x;
            u += &r_data;
            big_u += &r_cone;

            let primal = (r_data.norm_squared() + r_cone.norm_squared()).sqrt();
            let dual = mu
                * (self.a.transpose() * (&z - &z_old) + self.map.coefficients(&(&x - &x_old))).norm();
            residual = primal;
            if primal <= tol && dual <= tol {
                converged = true;
                break;
            }
            if k % 10 == 0 {
                let factor = if primal > 10.0 * dual {
                    2.0
                } else if dual > 10.0 * primal {
                    0.5
                } else {
                    1.0
                };
                let next = (mu * factor).clamp(1e-4, 1e6);
                if next != mu {
                    u *= mu / next;
                    big_u *= C64::new(mu / next, 0.0);
                    mu = next;
                }
            }
        }

        let rho = normalized_psd(&x)?;
        let objective = vqt_objective(self.problem, self.config, &rho);
        Ok(AdmmOutcome {
            rho,
            objective,
            residual,
            iterations,
            converged,
        })
    }

    fn element(&self, l: usize) -> ComplexMatrix {
        ComplexMatrix::from_column_slice(self.map.dim, self.map.dim, self.map.columns.column(l).as_slice())
    }

    /// `w|e|` smoothed by a log barrier on its epigraph, with the first two
    /// derivatives in `e`. Tends to `w|e|` as `mu` goes to zero.
    fn smoothed_abs(w: f64, e: f64, mu: f64) -> (f64, f64, f64) {
        let s = (mu * mu + w * w * e * e).sqrt();
        let value = mu + s - mu * (2.0 * mu * (mu + s) / (w * w)).ln();
        (value, w * w * e / (mu + s), w * w * mu / (s * (mu + s)))
    }

    /// Barrier surrogate at smoothing `mu`; infinite off the PD cone.
    fn surrogate(&self, alpha: &DVector<f64>, mu: f64) -> f64 {
        let values = eig_hermitian(&HermitianOperator::hermitian_part(&self.map.operator(alpha))).values;
        if values.iter().any(|&v| v <= 0.0) {
            return f64::INFINITY;
        }
        let e = &self.a * alpha - &self.f;
        let data: f64 = (0..e.len()).map(|i| Self::smoothed_abs(self.weights[i], e[i], mu).0).sum();
        let log_det: f64 = values.iter().map(|v| v.ln()).sum();
        data + self.config.beta * self.mass.dot(alpha) - (self.config.gamma + mu) * log_det
    }

    /// Path-following Newton on the smoothed objective. Steps are taken in
    /// `Y = ρ^{-1/2} Δρ ρ^{-1/2}`, where the log-det Hessian is the identity;
    /// the start is a unit-trace PD point and every step keeps the trace.
    fn path_following(&self, start: &HermitianOperator) -> Option<(DensityMatrix, usize)> {
        let dim = self.map.dim;
        let r = self.traces.len();
        let rho0 = DensityMatrix::project_from(start);
        let mixed = rho0
            .operator()
            .scale(1.0 - 1e-3)
            .add(&HermitianOperator::identity(dim).scale(1e-3 / dim as f64))
            .ok()?;
        let mut alpha = self.map.coefficients(mixed.matrix());
        let mut mu = 1.0;
        let mut total = 0;
        loop {
            let barrier = self.config.gamma + mu;
            let mut stage_done = false;
            for _ in 0..NEWTON_ITERATIONS {
                total += 1;
                let eig = eig_hermitian(&HermitianOperator::hermitian_part(&self.map.operator(&alpha)));
                if eig.min_eigenvalue() <= 0.0 {
                    return None;
                }
                let root = eig.map(f64::sqrt).into_matrix();
                let mut w = DMatrix::zeros(r, r);
                for l in 0..r {
                    let scaled = &root * self.element(l) * &root;
                    w.set_column(l, &self.map.coefficients(&scaled));
                }
                let e = &self.a * &alpha - &self.f;
                let mut d1 = DVector::zeros(e.len());
                let mut d2 = DVector::zeros(e.len());
                for i in 0..e.len() {
                    let (_, g1, g2) = Self::smoothed_abs(self.weights[i], e[i], mu);
                    d1[i] = g1;
                    d2[i] = g2;
                }
                let grad = self.a.transpose() * &d1 + &self.mass * self.config.beta;
                let g = w.transpose() * grad - &self.traces * barrier;
                let aw = &self.a * &w;
                let mut k = DMatrix::identity(r, r) * barrier;
                for i in 0..e.len() {
                    let row = aw.row(i);
                    k += row.transpose() * row * d2[i];
                }
                let solve = spd_solver(k)?;
                // trace preservation: tᵀ W y = 0
                let c = w.transpose() * &self.traces;
                let kg = solve(&g);
                let kc = solve(&c);
                let nu = -c.dot(&kg) / c.dot(&kc);
                let y = -(kg + kc * nu);
                let decrement = -g.dot(&y);
                if decrement <= 1e-3 * mu.min(1e-6).max(1e-16) || decrement <= 0.0 {
                    stage_done = true;
                    break;
                }
                let delta = &w * &y;
                let y_min = eig_hermitian(&HermitianOperator::hermitian_part(&self.map.operator(&y))).min_eigenvalue();
                let mut step: f64 = if y_min < 0.0 { (-0.99 / y_min).min(1.0) } else { 1.0 };
                let current = self.surrogate(&alpha, mu);
                loop {
                    let trial = &alpha + &delta * step;
                    if self.surrogate(&trial, mu) <= current - 0.25 * step * decrement {
                        alpha = trial;
                        break;
                    }
                    step *= 0.5;
                    if step < 1e-14 {
                        break;
                    }
                }
                if step < 1e-14 {
                    // round-off floor for this stage
                    stage_done = true;
                    break;
                }
            }
            if !stage_done {
                log::debug!("path following stalled at smoothing {mu:e}");
            }
            if mu <= PATH_FINAL_SMOOTHING {
                break;
            }
            mu = (mu * PATH_SHRINK).max(PATH_FINAL_SMOOTHING);
        }
        let rho = normalized_psd(&self.map.operator(&alpha)).ok()?;
        Some((rho, total))
    }
}

/// Solver for a symmetric positive definite system whose diagonal spans
/// many orders of magnitude: Jacobi scaling first, then Cholesky, with a
/// small diagonal shift if round-off broke definiteness.
fn spd_solver(k: DMatrix<f64>) -> Option<impl Fn(&DVector<f64>) -> DVector<f64>> {
    let n = k.nrows();
    let scale = DVector::from_fn(n, |i, _| 1.0 / k[(i, i)].max(1e-300).sqrt());
    let scaled = DMatrix::from_fn(n, n, |i, j| k[(i, j)] * scale[i] * scale[j]);
    let chol = [0.0, 1e-14, 1e-12, 1e-10].iter().find_map(|&shift| {
        Cholesky::new(&scaled + DMatrix::identity(n, n) * shift)
    })?;
    Some(move |b: &DVector<f64>| chol.solve(&b.component_mul(&scale)).component_mul(&scale))
}

/// `X / tr X` after clamping round-off negatives.
fn normalized_psd(x: &ComplexMatrix) -> Result<DensityMatrix> {
    let h = HermitianOperator::hermitian_part(x);
    let eig = eig_hermitian(&h);
    let values: Vec<f64> = eig.values.iter().map(|v| v.max(0.0)).collect();
    let total: f64 = values.iter().sum();
    if total <= 0.0 {
        return Ok(DensityMatrix::maximally_mixed(x.nrows()));
    }
    let scaled: Vec<f64> = values.iter().map(|v| v / total).collect();
    DensityMatrix::new(eig.reassemble(&scaled))
}

/// Solves the variational program; GIT when the problem carries a basis.
pub fn solve_vqt(problem: &EstimationProblem, config: &EstimatorConfig) -> Result<EstimationResult> {
    config.validate()?;
    let basis = problem.working_basis();
    let admm = Admm::new(problem, config, &basis)?;

    let mut starts = Vec::with_capacity(config.restarts + 1);
    starts.push(linear_inversion(problem.records(), Some(&basis))?.operator);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    for _ in 0..config.restarts {
        let random = random_density_in(&basis, &mut rng);
        starts.push(random);
    }

    let mut best: Option<AdmmOutcome> = None;
    for start in &starts {
        let outcome = match admm.path_following(start) {
            Some((rho, iterations)) => AdmmOutcome {
                objective: vqt_objective(problem, config, &rho),
                rho,
                residual: 0.0,
                iterations,
                converged: true,
            },
            None => {
                log::debug!("path following failed, falling back to ADMM");
                admm.run(start, config.feasibility_tolerance)?
            }
        };
        let better = match &best {
            None => true,
            Some(b) => outcome.objective < b.objective - config.objective_tolerance * 1e-3,
        };
        if better {
            best = Some(outcome);
        }
    }
    let best = best.expect("at least one start");
    let trace_error = (best.rho.operator().trace() - 1.0).abs();
    Ok(EstimationResult {
        delta: slacks(problem, config, &best.rho),
        objective: best.objective,
        feasibility_residual: best.residual.max(trace_error),
        iterations: best.iterations,
        converged: best.converged,
        rho_hat: best.rho,
    })
}

fn random_density_in(basis: &SymmetricBasis, rng: &mut ChaCha8Rng) -> HermitianOperator {
    use rand::Rng;
    let dim = basis.dim();
    let g = ComplexMatrix::from_fn(dim, dim, |_, _| C64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5));
    let h = HermitianOperator::hermitian_part(&(&g * g.adjoint()));
    basis.project(&h).expect("dimension matches basis")
}

/// GIT: the variational program restricted to `basis`.
pub fn solve_git(records: Vec<ObservableRecord>, basis: &SymmetricBasis, config: &EstimatorConfig) -> Result<EstimationResult> {
    solve_vqt(&EstimationProblem::new(records, Some(basis.clone()))?, config)
}

/// cVQT: the variational program over all Hermitian operators.
pub fn solve_cvqt(records: Vec<ObservableRecord>, config: &EstimatorConfig) -> Result<EstimationResult> {
    solve_vqt(&EstimationProblem::new(records, None)?, config)
}

/// `R = (1/m) Σ [f/p E + (1−f)/(1−p) (I − E)]`, so that `Rρ = ρ` at the
/// likelihood maximum.
fn likelihood_operator(records: &[&ObservableRecord], rho: &ComplexMatrix) -> ComplexMatrix {
    let dim = rho.nrows();
    let floor = 1e-12;
    let mut r = ComplexMatrix::zeros(dim, dim);
    let mut identity_weight = 0.0;
    for rec in records {
        let p = (rec.projector.matrix() * rho).trace().re.clamp(floor, 1.0 - floor);
        let f = rec.frequency;
        let on = f / p;
        let off = (1.0 - f) / (1.0 - p);
        r += rec.projector.matrix() * C64::new(on - off, 0.0);
        identity_weight += off;
    }
    for i in 0..dim {
        r[(i, i)] += C64::new(identity_weight, 0.0);
    }
    r / C64::new(records.len() as f64, 0.0)
}

/// Negative mean log-likelihood; infinite when an observed outcome has zero probability.
fn neg_log_likelihood(records: &[&ObservableRecord], rho: &ComplexMatrix) -> f64 {
    let mut total = 0.0;
    for r in records {
        let p = (r.projector.matrix() * rho).trace().re;
        let f = r.frequency;
        if (f > 0.0 && p <= 0.0) || (f < 1.0 && p >= 1.0) {
            return f64::INFINITY;
        }
        if f > 0.0 {
            total -= f * p.ln();
        }
        if f < 1.0 {
            total -= (1.0 - f) * (1.0 - p).ln();
        }
    }
    total / records.len() as f64
}

fn neg_log_likelihood_gradient(records: &[&ObservableRecord], rho: &ComplexMatrix) -> ComplexMatrix {
    let dim = rho.nrows();
    let floor = 1e-15;
    let mut g = ComplexMatrix::zeros(dim, dim);
    for r in records {
        let p = (r.projector.matrix() * rho).trace().re.clamp(floor, 1.0 - floor);
        let f = r.frequency;
        g -= r.projector.matrix() * C64::new(f / p - (1.0 - f) / (1.0 - p), 0.0);
    }
    g / C64::new(records.len() as f64, 0.0)
}

fn project_state(m: &ComplexMatrix) -> ComplexMatrix {
    DensityMatrix::project_from(&HermitianOperator::hermitian_part(m)).into_operator().into_matrix()
}

/// Iterations of the diluted `RρR` map before switching to accelerated
/// projected gradient, which reaches rank-deficient maxima at a linear
/// rather than sublinear rate.
const RRR_PHASE: usize = 200;

/// Maximum-likelihood estimate over binary projector outcomes
/// `{E_i, I − E_i}`. Unmeasured and identity records are ignored.
pub fn solve_maxlik(records: &[ObservableRecord], config: &EstimatorConfig) -> Result<EstimationResult> {
    config.validate()?;
    let used: Vec<&ObservableRecord> = records.iter().filter(|r| r.measured && !r.is_identity()).collect();
    let first = used
        .first()
        .ok_or_else(|| TomoError::InvalidArgument("maximum likelihood needs non-identity measured records".into()))?;
    let dim = first.projector.dim();
    if let Some(bad) = used.iter().find(|r| r.projector.dim() != dim) {
        return Err(TomoError::DimensionMismatch {
            expected: dim,
            found: bad.projector.dim(),
        });
    }
    if let Ok(li) = linear_inversion(records, None) {
        if li.rank_deficient() {
            log::warn!("maximum likelihood data are not informationally complete (rank {} of {})", li.rank, li.unknowns);
        }
    }

    let identity = ComplexMatrix::identity(dim, dim);
    let mut rho = ComplexMatrix::identity(dim, dim) / C64::new(dim as f64, 0.0);
    let mut nll = neg_log_likelihood(&used, &rho);
    let mut dilution = 1e3;
    let mut residual = f64::INFINITY;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < config.max_iterations.min(RRR_PHASE) {
        iterations += 1;
        let r = likelihood_operator(&used, &rho);
        residual = (&r * &rho - &rho).norm();
        if residual <= config.feasibility_tolerance {
            converged = true;
            break;
        }
        loop {
            let t = &identity + &r * C64::new(dilution, 0.0);
            let mut next = &t * &rho * t.adjoint();
            let tr = next.trace().re;
            next /= C64::new(tr, 0.0);
            let next_nll = neg_log_likelihood(&used, &next);
            if next_nll <= nll + 1e-15 || dilution < 1e-6 {
                rho = (&next + next.adjoint()) * C64::new(0.5, 0.0);
                nll = next_nll;
                dilution = (dilution * 2.0).min(1e3);
                break;
            }
            dilution *= 0.5;
        }
    }

    // FISTA with backtracking and function-value restarts
    let mut step = 1.0;
    let mut y = rho.clone();
    let mut momentum = 1.0f64;
    while !converged && iterations < config.max_iterations {
        iterations += 1;
        let grad = neg_log_likelihood_gradient(&used, &y);
        let f_y = neg_log_likelihood(&used, &y);
        let next = loop {
            let candidate = project_state(&(&y - &grad * C64::new(step, 0.0)));
            let diff = &candidate - &y;
            let bound = f_y + crate::operators::hs_inner_raw(&grad, &diff).re + diff.norm_squared() / (2.0 * step);
            let value = neg_log_likelihood(&used, &candidate);
            if value <= bound + 1e-15 || step < 1e-12 {
                break candidate;
            }
            step *= 0.5;
        };
        let next_nll = neg_log_likelihood(&used, &next);
        let moved = (&next - &rho).norm();
        if next_nll > nll + 1e-14 * nll.abs().max(1.0) {
            if momentum == 1.0 {
                // a plain projected step from the accepted point cannot descend
                residual = moved;
                converged = true;
                break;
            }
            y = rho.clone();
            momentum = 1.0;
            continue;
        }
        let next_momentum = 0.5 * (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt());
        y = &next + (&next - &rho) * C64::new((momentum - 1.0) / next_momentum, 0.0);
        momentum = next_momentum;
        rho = next;
        nll = next_nll;
        residual = moved;
        step *= 1.2;
        if moved <= config.feasibility_tolerance {
            converged = true;
        }
    }

    let rho_hat = normalized_psd(&rho)?;
    let problem = EstimationProblem::new(records.to_vec(), None)?;
    Ok(EstimationResult {
        delta: slacks(&problem, config, &rho_hat),
        objective: nll,
        feasibility_residual: residual,
        iterations,
        converged,
        rho_hat,
    })
}

/// Fills the free coefficients with a linear-inversion estimate and projects onto states.
pub fn linear_inversion_state(records: &[ObservableRecord], basis: Option<&SymmetricBasis>) -> Result<DensityMatrix> {
    let li = linear_inversion(records, basis)?;
    let eig = eig_hermitian(&li.operator);
    Ok(DensityMatrix::new(eig.reassemble(&project_to_simplex(&eig.values)))?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measurement::{
        all_settings, full_observables, pi_observables, pi_settings, records_analytic, simulate_histograms,
        records_from_histograms, FrequencyMode, PauliSetting,
    };
    use crate::metrics::fidelity;
    use crate::operators::testing::random_density;
    use crate::statesim::{ghz_phase_state, werner_exact};
    use crate::symmetry::{compute_commutant_basis, SymmetrySpec};

    fn exact(gamma: f64) -> EstimatorConfig {
        EstimatorConfig {
            gamma,
            ..Default::default()
        }
    }

    fn complete_records(rho: &DensityMatrix) -> Vec<ObservableRecord> {
        let n = rho.n_qubits().unwrap();
        records_analytic(rho, &all_settings(n), &full_observables(n), FrequencyMode::Exact).unwrap()
    }

    fn zero_state_xyz() -> Vec<ObservableRecord> {
        vec![
            ObservableRecord::measured("X", 0.5).unwrap(),
            ObservableRecord::measured("Y", 0.5).unwrap(),
            ObservableRecord::measured("Z", 1.0).unwrap(),
        ]
    }

    #[test]
    fn single_qubit_zero_state() {
        let cfg = EstimatorConfig {
            beta: 0.0,
            gamma: 0.0,
            ..Default::default()
        };
        let res = solve_cvqt(zero_state_xyz(), &cfg).unwrap();
        let zero = DensityMatrix::basis_state(2, 0);
        assert!(crate::operators::max_abs_diff(res.rho_hat.matrix(), zero.matrix()) < 1e-6);
        let li = linear_inversion(&zero_state_xyz(), None).unwrap();
        assert!(!li.rank_deficient());
        assert!(crate::operators::max_abs_diff(li.operator.matrix(), zero.matrix()) < 1e-9);
    }

    #[test]
    fn git_ghz2_from_pi_settings() {
        let basis = compute_commutant_basis(&SymmetrySpec::permutation(2)).unwrap();
        let ghz = DensityMatrix::from_pure(&ghz_phase_state(2, 0.0));
        let recs = records_analytic(&ghz, &pi_settings(2), &pi_observables(2), FrequencyMode::PermutationInvariant)
            .unwrap();
        assert_eq!(recs.len(), 10);
        let res = solve_git(recs.clone(), &basis, &exact(0.0)).unwrap();
        assert!(fidelity(&res.rho_hat, &ghz).unwrap() >= 1.0 - 1e-6);
        let li = linear_inversion(&recs, Some(&basis)).unwrap();
        assert_eq!(li.rank, 10);
        assert!(crate::operators::max_abs_diff(li.operator.matrix(), ghz.matrix()) < 1e-9);
    }

    #[test]
    fn git_werner_two_settings() {
        let basis = compute_commutant_basis(&SymmetrySpec::collective(2)).unwrap();
        let w = werner_exact(0.51, 1, None).unwrap();
        let settings = [PauliSetting::new("ZZ").unwrap(), PauliSetting::new("XX").unwrap()];
        let recs = records_analytic(&w, &settings, &full_observables(2), FrequencyMode::Exact).unwrap();
        let res = solve_git(recs, &basis, &EstimatorConfig::default()).unwrap();
        assert!(fidelity(&res.rho_hat, &w).unwrap() >= 0.999);
    }

    #[test]
    fn identity_only_data_gives_maximally_mixed() {
        let basis = compute_commutant_basis(&SymmetrySpec::permutation(3)).unwrap();
        let mixed = DensityMatrix::maximally_mixed(8);
        let recs = records_analytic(&mixed, &pi_settings(3), &pi_observables(3), FrequencyMode::PermutationInvariant)
            .unwrap();
        let res = solve_git(recs, &basis, &EstimatorConfig::default()).unwrap();
        assert!(crate::operators::max_abs_diff(res.rho_hat.matrix(), mixed.matrix()) < 1e-4);
    }

    #[test]
    fn barrier_keeps_interior_with_missing_directions() {
        let mixed = DensityMatrix::maximally_mixed(4);
        let settings = [PauliSetting::new("ZZ").unwrap()];
        let recs = records_analytic(&mixed, &settings, &full_observables(2), FrequencyMode::Exact).unwrap();
        assert!(recs.iter().any(|r| !r.measured));
        let res = solve_cvqt(recs, &exact(1e-2)).unwrap();
        assert!(eig_hermitian(res.rho_hat.operator()).min_eigenvalue() > 1e-6);
    }

    #[test]
    fn objective_matches_independent_evaluation() {
        let mut rng = ChaCha8Rng::seed_from_u64(61);
        let truth = random_density(&mut rng, 4);
        let hists = simulate_histograms(&truth, &[PauliSetting::new("XZ").unwrap(), PauliSetting::new("YY").unwrap()], 300, 2)
            .unwrap();
        let recs = records_from_histograms(&hists, &full_observables(2), FrequencyMode::Exact).unwrap();
        let cfg = EstimatorConfig::default();
        let res = solve_cvqt(recs.clone(), &cfg).unwrap();

        let rho = res.rho_hat.matrix();
        let mut expected = 0.0;
        for r in &recs {
            let p = (r.projector.matrix() * rho).trace().re;
            if r.measured {
                expected += cfg.alpha * (p - r.frequency).abs() / r.frequency.abs().max(cfg.frequency_floor);
            } else {
                expected += cfg.beta * p;
            }
        }
        expected -= cfg.gamma * rho.determinant().re.ln();
        assert!((res.objective - expected).abs() < 1e-8, "{} vs {expected}", res.objective);
        assert!(res.delta.iter().all(|&d| d >= 0.0));
        assert_eq!(res.delta.len(), recs.iter().filter(|r| r.measured).count());
    }

    #[test]
    fn restarted_reference_agrees() {
        let mut rng = ChaCha8Rng::seed_from_u64(62);
        let truth = random_density(&mut rng, 4);
        let hists = simulate_histograms(&truth, &all_settings(2), 200, 8).unwrap();
        let recs = records_from_histograms(&hists, &full_observables(2), FrequencyMode::Exact).unwrap();
        let cfg = EstimatorConfig::default();
        let res = solve_cvqt(recs.clone(), &cfg).unwrap();
        let reference = solve_cvqt(
            recs,
            &EstimatorConfig {
                restarts: 8,
                seed: 99,
                max_iterations: 100_000,
                ..cfg.clone()
            },
        )
        .unwrap();
        assert!(res.objective <= reference.objective + cfg.objective_tolerance);
        assert!((res.rho_hat.operator().trace() - 1.0).abs() < 1e-9);
        assert!(eig_hermitian(res.rho_hat.operator()).min_eigenvalue() >= -1e-9);
    }

    #[test]
    fn git_output_commutes_with_generators() {
        let spec = SymmetrySpec::permutation(3);
        let basis = compute_commutant_basis(&spec).unwrap();
        let ghz = crate::statesim::StateSpec::Ghz { n: 3, theta: 0.3 }
            .prepare(&crate::statesim::NoiseModel::post(crate::statesim::Channel::AmplitudeDamping, 0.1).unwrap())
            .unwrap();
        let hists = simulate_histograms(&ghz, &pi_settings(3), 500, 1).unwrap();
        let recs = records_from_histograms(&hists, &pi_observables(3), FrequencyMode::PermutationInvariant).unwrap();
        let res = solve_git(recs, &basis, &EstimatorConfig::default()).unwrap();
        for g in crate::symmetry::group_generators(&spec).unwrap() {
            assert!(g.violation(res.rho_hat.matrix()) < 1e-8);
        }
    }

    #[test]
    fn git_and_cvqt_agree_on_symmetric_state() {
        let basis = compute_commutant_basis(&SymmetrySpec::permutation(2)).unwrap();
        let ghz = DensityMatrix::from_pure(&ghz_phase_state(2, 0.7));
        let recs = complete_records(&ghz);
        let cfg = EstimatorConfig::default();
        let git_recs = records_analytic(&ghz, &pi_settings(2), &pi_observables(2), FrequencyMode::PermutationInvariant)
            .unwrap();
        let git = solve_git(git_recs, &basis, &cfg).unwrap();
        let cvqt = solve_cvqt(recs, &cfg).unwrap();
        assert!(fidelity(&git.rho_hat, &cvqt.rho_hat).unwrap() >= 0.999);
    }

    #[test]
    fn adding_records_does_not_hurt() {
        // below quorum the estimate is one point of an underdetermined
        // feasible set and can move away from the truth; from quorum on,
        // consistent records keep it pinned
        let basis = compute_commutant_basis(&SymmetrySpec::permutation(2)).unwrap();
        let ghz = DensityMatrix::from_pure(&ghz_phase_state(2, 0.0));
        let full = records_analytic(&ghz, &pi_settings(2), &pi_observables(2), FrequencyMode::PermutationInvariant)
            .unwrap();
        let mut best = 0.0f64;
        let mut quorum_seen = false;
        for k in 1..=full.len() {
            let recs: Vec<ObservableRecord> = full
                .iter()
                .enumerate()
                .map(|(i, r)| if i < k { r.clone() } else { ObservableRecord::unmeasured(&r.ops).unwrap() })
                .collect();
            let rank = linear_inversion(&recs, Some(&basis)).unwrap().rank;
            let res = solve_git(recs, &basis, &exact(0.0)).unwrap();
            let f = fidelity(&res.rho_hat, &ghz).unwrap();
            best = best.max(f);
            quorum_seen |= rank == basis.r();
            if quorum_seen {
                assert!(f >= 1.0 - 1e-6, "k={k}: {f}");
            }
        }
        assert!(quorum_seen);
        assert!(best <= 1.0 + 1e-9);
    }

    #[test]
    fn maxlik_examples() {
        let cfg = EstimatorConfig::default();
        let res = solve_maxlik(&zero_state_xyz(), &cfg).unwrap();
        let zero = DensityMatrix::basis_state(2, 0);
        assert!(crate::operators::max_abs_diff(res.rho_hat.matrix(), zero.matrix()) < 1e-6);

        let half = vec![
            ObservableRecord::measured("X", 0.5).unwrap(),
            ObservableRecord::measured("Y", 0.5).unwrap(),
            ObservableRecord::measured("Z", 0.5).unwrap(),
        ];
        let res = solve_maxlik(&half, &cfg).unwrap();
        assert!(crate::operators::max_abs_diff(res.rho_hat.matrix(), DensityMatrix::maximally_mixed(2).matrix()) < 1e-9);
        assert!(res.converged);

        let ghz = DensityMatrix::from_pure(&ghz_phase_state(2, 0.0));
        let res = solve_maxlik(&complete_records(&ghz), &cfg).unwrap();
        assert!(fidelity(&res.rho_hat, &ghz).unwrap() >= 1.0 - 1e-6);
    }

    #[test]
    fn linear_inversion_contracts() {
        let mut rng = ChaCha8Rng::seed_from_u64(63);
        let truth = random_density(&mut rng, 4);
        let li = linear_inversion(&complete_records(&truth), None).unwrap();
        assert!(crate::operators::max_abs_diff(li.operator.matrix(), truth.matrix()) < 1e-9);

        let partial = records_analytic(&truth, &[PauliSetting::new("ZZ").unwrap()], &full_observables(2), FrequencyMode::Exact)
            .unwrap();
        let li = linear_inversion(&partial, None).unwrap();
        assert!(li.rank_deficient());
        assert_eq!(li.rank, 4);

        // shot noise on a pure state pushes some eigenvalue below zero
        let ghz = DensityMatrix::from_pure(&ghz_phase_state(2, 0.0));
        let hists = simulate_histograms(&ghz, &all_settings(2), 50, 3).unwrap();
        let recs = records_from_histograms(&hists, &full_observables(2), FrequencyMode::Exact).unwrap();
        let li = linear_inversion(&recs, None).unwrap();
        assert!(eig_hermitian(&li.operator).min_eigenvalue() < 0.0);
        assert!(linear_inversion_state(&recs, None).is_ok());
    }

    #[test]
    fn config_validation() {
        assert!(EstimatorConfig { alpha: -1.0, ..Default::default() }.validate().is_err());
        assert!(EstimatorConfig { max_iterations: 0, ..Default::default() }.validate().is_err());
        assert!(EstimationProblem::new(vec![ObservableRecord::unmeasured("X").unwrap()], None).is_err());
    }
}
