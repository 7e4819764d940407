//! Sequential minimal optimization over the 2n-variable epsilon-SVR dual.
//!
//! The first working index is the maximal KKT violator, the second is chosen
//! by second-order gain. Scans run in ascending index order with strict
//! comparisons, so ties go to the lowest index and the solve is fully
//! deterministic.

use super::{Problem, SolveStatus, SvrModel, SvrParams};

/// Curvature floor for degenerate pairs (e.g. alpha_i with alpha*_i).
const TAU: f64 = 1e-12;

struct State<'a> {
    n: usize,
    kernel: &'a [f64],
    c: f64,
    alpha: Vec<f64>,
    grad: Vec<f64>,
}

impl State<'_> {
    #[inline]
    fn sign(&self, t: usize) -> f64 {
        if t < self.n {
            1.0
        } else {
            -1.0
        }
    }

    #[inline]
    fn q(&self, i: usize, j: usize) -> f64 {
        let k = self.kernel[(i % self.n) * self.n + (j % self.n)];
        self.sign(i) * self.sign(j) * k
    }

    #[inline]
    fn in_up(&self, t: usize) -> bool {
        if t < self.n {
            self.alpha[t] < self.c
        } else {
            self.alpha[t] > 0.0
        }
    }

    #[inline]
    fn in_low(&self, t: usize) -> bool {
        if t < self.n {
            self.alpha[t] > 0.0
        } else {
            self.alpha[t] < self.c
        }
    }

    /// Returns `(i, j, violation)`. `i` is the maximal KKT violator; `j` is
    /// the partner in the low set giving the largest second-order decrease of
    /// the objective. `violation` is the maximal violating-pair gap.
    fn select(&self) -> Option<(usize, usize, f64)> {
        let mut up = None;
        let mut up_val = f64::NEG_INFINITY;
        let mut low_val = f64::INFINITY;
        for t in 0..2 * self.n {
            let v = -self.sign(t) * self.grad[t];
            if self.in_up(t) && v > up_val {
                up_val = v;
                up = Some(t);
            }
            if self.in_low(t) && v < low_val {
                low_val = v;
            }
        }
        let i = up?;
        let q_ii = self.q(i, i);
        let mut best = None;
        let mut best_gain = f64::INFINITY;
        for t in 0..2 * self.n {
            if !self.in_low(t) {
                continue;
            }
            let b = up_val + self.sign(t) * self.grad[t];
            if b <= 0.0 {
                continue;
            }
            let a = (q_ii + self.q(t, t) - 2.0 * self.sign(i) * self.sign(t) * self.q(i, t)).max(TAU);
            let gain = -(b * b) / a;
            if gain < best_gain {
                best_gain = gain;
                best = Some(t);
            }
        }
        best.map(|j| (i, j, up_val - low_val))
    }

    fn update_pair(&mut self, i: usize, j: usize) {
        let c = self.c;
        let (old_i, old_j) = (self.alpha[i], self.alpha[j]);
        let q_ii = self.q(i, i);
        let q_jj = self.q(j, j);
        let q_ij = self.q(i, j);
        let (mut ai, mut aj) = (old_i, old_j);

        if self.sign(i) != self.sign(j) {
            let quad = (q_ii + q_jj + 2.0 * q_ij).max(TAU);
            let delta = (-self.grad[i] - self.grad[j]) / quad;
            let diff = ai - aj;
            ai += delta;
            aj += delta;
            if diff > 0.0 {
                if aj < 0.0 {
                    aj = 0.0;
                    ai = diff;
                }
            } else if ai < 0.0 {
                ai = 0.0;
                aj = -diff;
            }
            if diff > 0.0 {
                if ai > c {
                    ai = c;
                    aj = c - diff;
                }
            } else if aj > c {
                aj = c;
                ai = c + diff;
            }
        } else {
            let quad = (q_ii + q_jj - 2.0 * q_ij).max(TAU);
            let delta = (self.grad[i] - self.grad[j]) / quad;
            let sum = ai + aj;
            ai -= delta;
            aj += delta;
            if sum > c {
                if ai > c {
                    ai = c;
                    aj = sum - c;
                }
            } else if aj < 0.0 {
                aj = 0.0;
                ai = sum;
            }
            if sum > c {
                if aj > c {
                    aj = c;
                    ai = sum - c;
                }
            } else if ai < 0.0 {
                ai = 0.0;
                aj = sum;
            }
        }

        self.alpha[i] = ai;
        self.alpha[j] = aj;
        let (di, dj) = (ai - old_i, aj - old_j);
        if di == 0.0 && dj == 0.0 {
            return;
        }
        for t in 0..2 * self.n {
            self.grad[t] += self.q(i, t) * di + self.q(j, t) * dj;
        }
    }

    /// Intercept from the KKT conditions: mean over free variables, otherwise
    /// the midpoint of the feasible interval.
    fn bias(&self) -> f64 {
        let mut upper = f64::INFINITY;
        let mut lower = f64::NEG_INFINITY;
        let mut free_sum = 0.0;
        let mut free = 0usize;
        for t in 0..2 * self.n {
            let yg = self.sign(t) * self.grad[t];
            let positive = t < self.n;
            if self.alpha[t] >= self.c {
                if positive {
                    lower = lower.max(yg);
                } else {
                    upper = upper.min(yg);
                }
            } else if self.alpha[t] <= 0.0 {
                if positive {
                    upper = upper.min(yg);
                } else {
                    lower = lower.max(yg);
                }
            } else {
                free += 1;
                free_sum += yg;
            }
        }
        let rho = if free > 0 {
            free_sum / free as f64
        } else {
            (upper + lower) / 2.0
        };
        -rho
    }
}

pub(super) fn solve(problem: Problem, params: &SvrParams) -> SvrModel {
    let n = problem.len();
    let kernel = problem.kernel(params.gamma);
    let linear: Vec<f64> = (0..2 * n)
        .map(|t| {
            if t < n {
                problem.epsilon - problem.targets[t]
            } else {
                problem.epsilon + problem.targets[t - n]
            }
        })
        .collect();

    let mut state = State {
        n,
        kernel: &kernel,
        c: params.c,
        alpha: vec![0.0; 2 * n],
        grad: linear.clone(),
    };

    let passes = params.passes_for(n);
    let max_iter = passes.saturating_mul(n);
    let mut iterations = 0usize;
    let status = loop {
        let (i, j, violation) = match state.select() {
            Some(sel) => sel,
            None => break SolveStatus::Converged { iterations, violation: 0.0 },
        };
        if violation <= params.tol {
            break SolveStatus::Converged { iterations, violation };
        }
        if iterations >= max_iter {
            break SolveStatus::NonConvergence { passes, violation };
        }
        state.update_pair(i, j);
        iterations += 1;
    };

    let objective = 0.5
        * state
            .alpha
            .iter()
            .zip(state.grad.iter().zip(&linear))
            .map(|(a, (g, p))| a * (g + p))
            .sum::<f64>();
    let beta: Vec<f64> = (0..n).map(|i| state.alpha[i] - state.alpha[i + n]).collect();
    let bias = state.bias();
    problem.into_model(&beta, bias, *params, objective, status)
}
