//! Epsilon-insensitive support vector regression on a scalar time axis.
//!
//! Targets are standardized (zero mean, unit variance) before solving and
//! `epsilon` is given in raw target units, so it is divided by the target
//! scale internally. The kernel is the Gaussian RBF `exp(-gamma (a - b)^2)`.
//!
//! The dual is solved in its 2n-variable form
//!
//! ```text
//! min  1/2 a^T Q a + p^T a     s.t.  z^T a = 0,  0 <= a_i <= C
//! ```
//!
//! with `a = [alpha; alpha*]`, `z = [+1; -1]`, `Q_ij = z_i z_j K_ij` and
//! `p = [eps - y; eps + y]`. The fitted function is
//! `f(t) = sum_i (alpha_i - alpha*_i) k(t_i, t) + b`.

mod oracle;
mod smo;

pub use oracle::{solve_svr_qp_oracle, ORACLE_MAX_SAMPLES};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SvrError {
    #[error("invalid SVR parameters: {0}")]
    InvalidParams(String),
    #[error("times and values differ in length ({times} vs {values})")]
    LengthMismatch { times: usize, values: usize },
    #[error("cannot fit an SVR to zero samples")]
    EmptyInput,
    #[error("times must be sorted ascending")]
    UnsortedTimes,
    #[error("non-finite time or value at index {0}")]
    NonFinite(usize),
    #[error("all sample times are identical")]
    DegenerateInput,
    #[error("SVR solver stopped after {passes} passes with KKT violation {violation:.3e}")]
    NonConvergence { passes: usize, violation: f64 },
    #[error("dense oracle accepts at most {max} samples, got {n}")]
    SizeExceeded { n: usize, max: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvrParams {
    pub c: f64,
    /// Half-width of the insensitive tube in raw target units.
    pub epsilon: f64,
    /// RBF inverse squared length-scale on normalized time.
    pub gamma: f64,
    /// Stopping tolerance on the maximal KKT violation (standardized units).
    pub tol: f64,
    /// Cap on solver passes; one pass is `n` pair updates. `None` means `10 n`.
    pub max_passes: Option<usize>,
}

impl Default for SvrParams {
    fn default() -> Self {
        Self {
            c: 100.0,
            epsilon: 2.0,
            gamma: 50.0,
            tol: 1e-3,
            max_passes: None,
        }
    }
}

impl SvrParams {
    pub fn validate(&self) -> Result<(), SvrError> {
        let bad = |what: &str| Err(SvrError::InvalidParams(what.to_string()));
        if !(self.c > 0.0 && self.c.is_finite()) {
            return bad("c must be positive");
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return bad("epsilon must be non-negative");
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return bad("gamma must be positive");
        }
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return bad("tol must be positive");
        }
        if self.max_passes == Some(0) {
            return bad("max_passes must be at least 1");
        }
        Ok(())
    }

    pub fn passes_for(&self, n: usize) -> usize {
        self.max_passes.unwrap_or(10 * n).max(1)
    }
}

/// How a solve terminated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SolveStatus {
    Converged { iterations: usize, violation: f64 },
    NonConvergence { passes: usize, violation: f64 },
}

impl SolveStatus {
    pub fn violation(&self) -> f64 {
        match *self {
            SolveStatus::Converged { violation, .. } | SolveStatus::NonConvergence { violation, .. } => violation,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvrModel {
    /// Indices into the training sequence of the non-zero dual coefficients.
    pub support_indices: Vec<usize>,
    pub support_times: Vec<f64>,
    /// `alpha_i - alpha*_i`, each in `[-C, C]`.
    pub dual_coeffs: Vec<f64>,
    /// Intercept in standardized units.
    pub bias: f64,
    pub params: SvrParams,
    pub y_mean: f64,
    pub y_scale: f64,
    /// Dual objective value at the solution, standardized units.
    pub objective: f64,
    pub status: SolveStatus,
}

pub fn rbf(gamma: f64, a: f64, b: f64) -> f64 {
    let d = a - b;
    (-gamma * d * d).exp()
}

impl SvrModel {
    pub fn predict(&self, t: f64) -> f64 {
        let gamma = self.params.gamma;
        let f: f64 = self
            .support_times
            .iter()
            .zip(&self.dual_coeffs)
            .map(|(&s, &beta)| beta * rbf(gamma, s, t))
            .sum();
        self.y_mean + self.y_scale * (f + self.bias)
    }

    /// The model's constant offset in raw target units.
    pub fn intercept(&self) -> f64 {
        self.y_mean + self.y_scale * self.bias
    }

    pub fn is_converged(&self) -> bool {
        matches!(self.status, SolveStatus::Converged { .. })
    }

    /// Strict view of the solve status.
    pub fn check_converged(&self) -> Result<(), SvrError> {
        match self.status {
            SolveStatus::Converged { .. } => Ok(()),
            SolveStatus::NonConvergence { passes, violation } => {
                Err(SvrError::NonConvergence { passes, violation })
            }
        }
    }
}

/// Standardized copy of a fitting problem shared by the solvers.
pub(crate) struct Problem {
    pub times: Vec<f64>,
    pub targets: Vec<f64>,
    pub epsilon: f64,
    pub y_mean: f64,
    pub y_scale: f64,
}

impl Problem {
    pub fn new(times: &[f64], values: &[f64], params: &SvrParams) -> Result<Self, SvrError> {
        params.validate()?;
        if times.len() != values.len() {
            return Err(SvrError::LengthMismatch {
                times: times.len(),
                values: values.len(),
            });
        }
        if times.is_empty() {
            return Err(SvrError::EmptyInput);
        }
        if let Some(i) = times
            .iter()
            .zip(values)
            .position(|(t, v)| !t.is_finite() || !v.is_finite())
        {
            return Err(SvrError::NonFinite(i));
        }
        if times.windows(2).any(|w| w[0] > w[1]) {
            return Err(SvrError::UnsortedTimes);
        }
        if times.len() >= 2 && times[0] == times[times.len() - 1] {
            return Err(SvrError::DegenerateInput);
        }

        let n = values.len() as f64;
        let y_mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - y_mean).powi(2)).sum::<f64>() / n;
        let std = var.sqrt();
        let y_scale = if std > 1e-9 * y_mean.abs().max(1.0) { std } else { 1.0 };
        Ok(Self {
            times: times.to_vec(),
            targets: values.iter().map(|v| (v - y_mean) / y_scale).collect(),
            epsilon: params.epsilon / y_scale,
            y_mean,
            y_scale,
        })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    /// Dense row-major kernel matrix.
    pub fn kernel(&self, gamma: f64) -> Vec<f64> {
        let n = self.len();
        let mut k = vec![0.0; n * n];
        for i in 0..n {
            k[i * n + i] = 1.0;
            for j in 0..i {
                let v = rbf(gamma, self.times[i], self.times[j]);
                k[i * n + j] = v;
                k[j * n + i] = v;
            }
        }
        k
    }

    pub fn into_model(
        self,
        beta: &[f64],
        bias: f64,
        params: SvrParams,
        objective: f64,
        status: SolveStatus,
    ) -> SvrModel {
        let support_indices: Vec<usize> = (0..beta.len()).filter(|&i| beta[i] != 0.0).collect();
        SvrModel {
            support_times: support_indices.iter().map(|&i| self.times[i]).collect(),
            dual_coeffs: support_indices.iter().map(|&i| beta[i]).collect(),
            support_indices,
            bias,
            params,
            y_mean: self.y_mean,
            y_scale: self.y_scale,
            objective,
            status,
        }
    }
}

/// Fits an epsilon-SVR with the deterministic SMO solver.
///
/// Hitting the pass cap does not fail the fit: the model is returned with
/// [`SolveStatus::NonConvergence`], see [`SvrModel::check_converged`].
pub fn fit_svr(times: &[f64], values: &[f64], params: &SvrParams) -> Result<SvrModel, SvrError> {
    let problem = Problem::new(times, values, params)?;
    Ok(smo::solve(problem, params))
}
