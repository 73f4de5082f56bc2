//! Directional residual design.
//!
//! The fault-direction matrix `W_Is = [W' W_u]` (n_x × n) minimizes the
//! Frobenius norm of the fault-free residual `Z W_Isᵀ` subject to
//! `diag(W') = -1` and mutually orthogonal columns of `W'`. Both constraints
//! hold exactly at every iterate through the parametrization
//! `W' = Q D`, `Q` orthogonal, `D_ii = -1 / Q_ii`. For a fixed `W'` the
//! input block is the least-squares solution
//! `W_uᵀ = -(UᵀU)⁻¹ Uᵀ X W'ᵀ`, which reduces the objective to
//! `tr(W' S W'ᵀ)` with `S = Xᵀ (I - P_U) X`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    pub max_iters: usize,
    /// Relative objective-change stopping tolerance.
    pub tol: f64,
    /// Initial step along the Riemannian gradient.
    pub step: f64,
    /// Seed for random restarts.
    pub seed: u64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_iters: 500,
            tol: 1e-8,
            step: 1.0,
            seed: 0,
        }
    }
}

impl SolverOptions {
    fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::InvalidParameter("max_iters must be >= 1".into()));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidParameter(format!("tol must be > 0, got {}", self.tol)));
        }
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(Error::InvalidParameter(format!("step must be > 0, got {}", self.step)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsolationModel {
    #[serde(with = "crate::rowmajor")]
    pub w_is: DMatrix<f64>,
    /// `‖Z W_Isᵀ‖_F` on the training data.
    pub objective: f64,
    pub initial_objective: f64,
    pub iterations: usize,
    pub converged: bool,
    pub restarts: usize,
    /// Objective after each accepted iterate, starting with the initialization.
    #[serde(skip)]
    pub trace: Vec<f64>,
}

impl IsolationModel {
    pub fn n_x(&self) -> usize {
        self.w_is.nrows()
    }

    pub fn n(&self) -> usize {
        self.w_is.ncols()
    }

    /// Unit-norm fault signatures (the first n_x columns of `W_Is`).
    pub fn unit_signatures(&self) -> Vec<DVector<f64>> {
        (0..self.n_x()).map(|i| self.w_is.column(i).normalize()).collect()
    }
}

/// Residual vector and its angular distances to the fault signatures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualFrame {
    pub r_is: Vec<f64>,
    pub d: Vec<f64>,
}

const DIAG_GUARD: f64 = 1e-8;
const MAX_RESTARTS: usize = 10;
const ARMIJO: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 60;

struct Problem {
    n_x: usize,
    n_u: usize,
    /// Reduced Gram matrix `Xᵀ (I - P_U) X`.
    s: DMatrix<f64>,
    /// Thin QR pieces of `U`: `R` and `Q_uᵀ X`.
    r_u: DMatrix<f64>,
    qt_x: DMatrix<f64>,
}

impl Problem {
    fn new(train: &Dataset) -> Result<Self> {
        let x = train.x_block();
        let n_x = train.n_x();
        let n_u = train.n_u();
        if n_u == 0 {
            return Ok(Self {
                n_x,
                n_u,
                s: x.transpose() * &x,
                r_u: DMatrix::zeros(0, 0),
                qt_x: DMatrix::zeros(0, n_x),
            });
        }
        let u = train.u_block();
        let qr = u.qr();
        let r_u = qr.r();
        let rmax = r_u.diagonal().iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if r_u.diagonal().iter().any(|v| v.abs() <= 1e-12 * rmax.max(f64::MIN_POSITIVE)) {
            return Err(Error::Solver("input block U is rank deficient".into()));
        }
        let qt_x = qr.q().transpose() * &x;
        let s = x.transpose() * &x - qt_x.transpose() * &qt_x;
        Ok(Self {
            n_x,
            n_u,
            s: (&s + s.transpose()) * 0.5,
            r_u,
            qt_x,
        })
    }

    fn w_prime(q: &DMatrix<f64>) -> DMatrix<f64> {
        let mut w = q.clone();
        for (i, mut col) in w.column_iter_mut().enumerate() {
            col *= -1.0 / q[(i, i)];
            // q_ii * (-1 / q_ii) can be off by an ulp.
            col[i] = -1.0;
        }
        w
    }

    /// Squared Frobenius objective for a given `W'`.
    fn value(&self, w_prime: &DMatrix<f64>) -> f64 {
        (w_prime * &self.s * w_prime.transpose()).trace().max(0.0)
    }

    fn value_at(&self, q: &DMatrix<f64>) -> f64 {
        self.value(&Self::w_prime(q))
    }

    /// Euclidean gradient of `tr(Q D S D Qᵀ)` with `D_ii = -1 / Q_ii`.
    fn euclidean_gradient(&self, q: &DMatrix<f64>) -> DMatrix<f64> {
        let d = DVector::from_fn(self.n_x, |i, _| -1.0 / q[(i, i)]);
        let dsd = DMatrix::from_fn(self.n_x, self.n_x, |i, j| d[i] * self.s[(i, j)] * d[j]);
        let mut g = q * dsd * 2.0;
        let qtq = q.transpose() * q;
        for i in 0..self.n_x {
            let mds_ii: f64 = (0..self.n_x).map(|j| qtq[(i, j)] * d[j] * self.s[(j, i)]).sum();
            g[(i, i)] += 2.0 * mds_ii / (q[(i, i)] * q[(i, i)]);
        }
        g
    }

    fn input_block(&self, w_prime: &DMatrix<f64>) -> DMatrix<f64> {
        if self.n_u == 0 {
            return DMatrix::zeros(self.n_x, 0);
        }
        let rhs = -(&self.qt_x * w_prime.transpose());
        let wu_t = self
            .r_u
            .solve_upper_triangular(&rhs)
            .expect("R has a nonzero diagonal");
        wu_t.transpose()
    }

    fn assemble(&self, q: &DMatrix<f64>) -> DMatrix<f64> {
        let wp = Self::w_prime(q);
        let wu = self.input_block(&wp);
        let mut w = DMatrix::zeros(self.n_x, self.n_x + self.n_u);
        w.columns_mut(0, self.n_x).copy_from(&wp);
        w.columns_mut(self.n_x, self.n_u).copy_from(&wu);
        w
    }
}

/// Orthonormal factor of a thin QR with a nonnegative `R` diagonal.
fn orthonormalize(a: DMatrix<f64>) -> DMatrix<f64> {
    let qr = a.qr();
    let mut q = qr.q();
    let r = qr.r();
    for (j, mut col) in q.column_iter_mut().enumerate() {
        if r[(j, j)] < 0.0 {
            col.neg_mut();
        }
    }
    q
}

fn random_orthogonal(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    orthonormalize(DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal)))
}

fn diagonal_ok(q: &DMatrix<f64>) -> bool {
    q.diagonal().iter().all(|v| v.abs() >= DIAG_GUARD)
}

/// Solve for the fault-direction matrix starting from `W' = -I`.
pub fn optimize_fault_directions(train: &Dataset, opts: &SolverOptions) -> Result<IsolationModel> {
    optimize_fault_directions_from(train, opts, DMatrix::identity(train.n_x(), train.n_x()))
}

/// Solve starting from an arbitrary orthogonal factor `q0` (n_x × n_x).
pub fn optimize_fault_directions_from(
    train: &Dataset,
    opts: &SolverOptions,
    q0: DMatrix<f64>,
) -> Result<IsolationModel> {
    opts.validate()?;
    let n_x = train.n_x();
    if n_x < 2 {
        return Err(Error::InvalidParameter("at least two monitored sensors are needed for orthogonal signatures".into()));
    }
    if train.m() <= train.n() {
        return Err(Error::InvalidParameter(format!(
            "need m > n samples, got m = {}, n = {}",
            train.m(),
            train.n()
        )));
    }
    if q0.shape() != (n_x, n_x) {
        return Err(Error::DimensionMismatch {
            expected: n_x,
            got: q0.nrows(),
        });
    }
    let problem = Problem::new(train)?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);

    let mut q = orthonormalize(q0);
    let mut restarts = 0;
    while !diagonal_ok(&q) {
        if restarts == MAX_RESTARTS {
            return Err(Error::Solver(format!(
                "orthogonal factor kept a near-zero diagonal after {MAX_RESTARTS} restarts"
            )));
        }
        restarts += 1;
        q = random_orthogonal(n_x, &mut rng);
    }

    let mut f = problem.value_at(&q);
    let initial = f;
    let mut trace = vec![f.sqrt()];
    let mut step = opts.step;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < opts.max_iters {
        iterations += 1;
        let g = problem.euclidean_gradient(&q);
        let qtg = q.transpose() * &g;
        let riem = &g - &q * ((&qtg + qtg.transpose()) * 0.5);
        let gnorm2 = riem.norm_squared();
        if gnorm2 <= (f64::EPSILON * (1.0 + f)).powi(2) {
            converged = true;
            break;
        }

        let mut accepted = None;
        let mut t = step;
        for _ in 0..MAX_BACKTRACKS {
            let cand = orthonormalize(&q - &riem * t);
            if diagonal_ok(&cand) {
                let fc = problem.value_at(&cand);
                if fc.is_finite() && fc <= f - ARMIJO * t * gnorm2 {
                    accepted = Some((cand, fc));
                    break;
                }
            }
            t *= 0.5;
        }

        let Some((cand, fc)) = accepted else {
            // No descent available at machine precision: stationary.
            converged = true;
            break;
        };
        let change = (f - fc).abs() / f.max(f64::MIN_POSITIVE);
        q = cand;
        f = fc;
        trace.push(f.sqrt());
        step = (t * 2.0).min(opts.step * 1e3);
        if change < opts.tol {
            converged = true;
            break;
        }
    }

    let w_is = problem.assemble(&q);
    let objective = (train.samples() * w_is.transpose()).norm();
    Ok(IsolationModel {
        w_is,
        objective,
        initial_objective: initial.sqrt(),
        iterations,
        converged,
        restarts,
        trace,
    })
}

/// `r_Is = W_Is z`.
pub fn directional_residual(z: &[f64], model: &IsolationModel) -> Result<DVector<f64>> {
    if z.len() != model.n() {
        return Err(Error::DimensionMismatch {
            expected: model.n(),
            got: z.len(),
        });
    }
    Ok(&model.w_is * DVector::from_column_slice(z))
}

/// Angle in degrees between `r` and each signature, folded into [0, 90].
pub fn angular_distances(r_is: &DVector<f64>, model: &IsolationModel) -> Result<Vec<f64>> {
    angular_distances_to(r_is, &model.unit_signatures())
}

/// Same as [`angular_distances`] with precomputed unit signatures.
pub fn angular_distances_to(r_is: &DVector<f64>, signatures: &[DVector<f64>]) -> Result<Vec<f64>> {
    if let Some(s) = signatures.first() {
        if s.len() != r_is.len() {
            return Err(Error::DimensionMismatch {
                expected: s.len(),
                got: r_is.len(),
            });
        }
    }
    let norm = r_is.norm();
    if norm < 1e-12 {
        return Ok(vec![90.0; signatures.len()]);
    }
    Ok(signatures
        .iter()
        .map(|w| (r_is.dot(w).abs() / norm).min(1.0).acos().to_degrees())
        .collect())
}

/// Residual and distances for one sample.
pub fn residual_frame(z: &[f64], model: &IsolationModel, signatures: &[DVector<f64>]) -> Result<ResidualFrame> {
    let r = directional_residual(z, model)?;
    let d = angular_distances_to(&r, signatures)?;
    Ok(ResidualFrame {
        r_is: r.iter().copied().collect(),
        d,
    })
}
