//! Dense reference solver for the epsilon-SVR dual, used to validate the SMO
//! solver. Accelerated projected gradient on the 2n-variable box with the
//! equality constraint handled by an exact projection. Not used by the
//! production pipeline.

use super::{Problem, SolveStatus, SvrError, SvrModel, SvrParams};

pub const ORACLE_MAX_SAMPLES: usize = 200;

const STATIONARITY: f64 = 1e-8;
const MAX_ITER: usize = 2_000_000;

/// Euclidean projection onto `{x : 0 <= x_i <= c, sum_i z_i x_i = 0}`.
///
/// `h(lambda) = sum_i z_i clip(v_i - lambda z_i, 0, c)` is non-increasing and
/// piecewise linear in lambda. The two breakpoints around its root are found
/// by quickselect, then the linear piece between them is solved exactly.
fn project(v: &[f64], z: &[f64], c: f64, out: &mut [f64], breaks: &mut Vec<f64>) {
    let h = |lambda: f64| -> f64 {
        v.iter()
            .zip(z)
            .map(|(&vi, &zi)| zi * (vi - lambda * zi).clamp(0.0, c))
            .sum()
    };
    breaks.clear();
    for (&vi, &zi) in v.iter().zip(z) {
        // clip argument hits 0 and c at these multipliers
        breaks.push(vi / zi);
        breaks.push((vi - c) / zi);
    }

    // largest breakpoint with h > 0 and smallest with h <= 0
    let (mut below, mut above): (Option<(f64, f64)>, Option<(f64, f64)>) = (None, None);
    let mut cand: &mut [f64] = breaks;
    while !cand.is_empty() {
        let mid = cand.len() / 2;
        cand.select_nth_unstable_by(mid, f64::total_cmp);
        let b = cand[mid];
        let hb = h(b);
        if hb > 0.0 {
            below = Some((b, hb));
            cand = &mut cand[mid + 1..];
        } else {
            above = Some((b, hb));
            cand = &mut cand[..mid];
        }
    }
    let lambda = match (below, above) {
        (Some((l0, h0)), Some((l1, h1))) if h0 != h1 => l0 + (l1 - l0) * h0 / (h0 - h1),
        (Some((l0, _)), Some(_)) => l0,
        (None, Some((l1, _))) => l1,
        (Some((l0, _)), None) => l0,
        (None, None) => 0.0,
    };
    for ((o, &vi), &zi) in out.iter_mut().zip(v).zip(z) {
        *o = (vi - lambda * zi).clamp(0.0, c);
    }
}

/// `Q x` for `Q = (z z') .* [K K; K K]`, using `(Q x)_i = z_i (K (x_+ - x_-))_(i mod n)`.
fn q_times(k: &[f64], n: usize, x: &[f64], out: &mut [f64], diff: &mut [f64]) {
    for j in 0..n {
        diff[j] = x[j] - x[j + n];
    }
    for i in 0..n {
        let v: f64 = k[i * n..(i + 1) * n].iter().zip(diff.iter()).map(|(a, b)| a * b).sum();
        out[i] = v;
        out[i + n] = -v;
    }
}

fn matvec(q: &[f64], x: &[f64], out: &mut [f64]) {
    let m = x.len();
    for (i, o) in out.iter_mut().enumerate() {
        *o = q[i * m..(i + 1) * m].iter().zip(x).map(|(a, b)| a * b).sum();
    }
}

fn largest_eigenvalue(q: &[f64], m: usize) -> f64 {
    // deterministic non-constant start vector
    let mut v: Vec<f64> = (0..m).map(|i| 1.0 + (i as f64 * 0.7548776662).fract()).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= norm);
    let mut w = vec![0.0; m];
    let mut lambda = 0.0;
    for _ in 0..1000 {
        matvec(q, &v, &mut w);
        let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        let next = v.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>();
        v.iter_mut().zip(&w).for_each(|(a, b)| *a = b / norm);
        if (next - lambda).abs() <= 1e-12 * next.abs() {
            return next;
        }
        lambda = next;
    }
    lambda
}

/// Solves the same dual as [`super::fit_svr`] to `1e-8` projected-gradient
/// stationarity. Dense, so limited to [`ORACLE_MAX_SAMPLES`] samples.
pub fn solve_svr_qp_oracle(
    times: &[f64],
    values: &[f64],
    params: &SvrParams,
) -> Result<SvrModel, SvrError> {
    if times.len() > ORACLE_MAX_SAMPLES {
        return Err(SvrError::SizeExceeded {
            n: times.len(),
            max: ORACLE_MAX_SAMPLES,
        });
    }
    let problem = Problem::new(times, values, params)?;
    let n = problem.len();
    let m = 2 * n;
    let c = params.c;

    let z: Vec<f64> = (0..m).map(|i| if i < n { 1.0 } else { -1.0 }).collect();
    let p: Vec<f64> = (0..m)
        .map(|i| {
            if i < n {
                problem.epsilon - problem.targets[i]
            } else {
                problem.epsilon + problem.targets[i - n]
            }
        })
        .collect();
    let kernel = problem.kernel(params.gamma);
    // Q is similar to [[1, 1], [1, 1]] (x) K, whose eigenvalues are twice those of K, plus zeros
    let lipschitz = 2.0 * largest_eigenvalue(&kernel, n).max(1e-12) * 1.01;
    let mut diff = vec![0.0; n];
    let step = 1.0 / lipschitz;

    // FISTA with function-value restart; Q x is carried along so each
    // iteration costs one product with Q.
    let mut x = vec![0.0; m];
    let mut qx = vec![0.0; m];
    let mut x_prev = x.clone();
    let mut qx_prev = qx.clone();
    let mut y = vec![0.0; m];
    let mut qy = vec![0.0; m];
    let mut x_next = vec![0.0; m];
    let mut qx_next = vec![0.0; m];
    let mut trial = vec![0.0; m];
    let mut scratch = vec![0.0; m];
    let mut breaks = Vec::with_capacity(2 * m);
    let mut momentum = 1.0f64;
    let mut f_x = 0.0;
    let mut iterations = 0;
    let mut stationarity = f64::INFINITY;

    let value = |x: &[f64], qx: &[f64]| -> f64 {
        x.iter()
            .zip(qx.iter().zip(&p))
            .map(|(xi, (qxi, pi))| xi * (0.5 * qxi + pi))
            .sum()
    };

    while iterations < MAX_ITER {
        iterations += 1;
        let next_momentum = 0.5 * (1.0 + (1.0 + 4.0 * momentum * momentum).sqrt());
        let beta = (momentum - 1.0) / next_momentum;
        for i in 0..m {
            y[i] = x[i] + beta * (x[i] - x_prev[i]);
            qy[i] = qx[i] + beta * (qx[i] - qx_prev[i]);
            trial[i] = y[i] - step * (qy[i] + p[i]);
        }
        project(&trial, &z, c, &mut x_next, &mut breaks);
        q_times(&kernel, n, &x_next, &mut qx_next, &mut diff);
        let f_next = value(&x_next, &qx_next);

        if f_next > f_x && momentum > 1.0 {
            // restart from a plain projected step at x
            momentum = 1.0;
            x_prev.copy_from_slice(&x);
            qx_prev.copy_from_slice(&qx);
            continue;
        }
        std::mem::swap(&mut x_prev, &mut x);
        std::mem::swap(&mut qx_prev, &mut qx);
        std::mem::swap(&mut x, &mut x_next);
        std::mem::swap(&mut qx, &mut qx_next);
        momentum = next_momentum;
        f_x = f_next;

        if iterations % 10 == 0 {
            // ||x - P(x - grad f(x))||_inf
            for i in 0..m {
                trial[i] = x[i] - (qx[i] + p[i]);
            }
            project(&trial, &z, c, &mut scratch, &mut breaks);
            stationarity = x
                .iter()
                .zip(&scratch)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            if stationarity <= STATIONARITY {
                break;
            }
        }
    }

    // intercept from the free multipliers, else the KKT interval midpoint
    let bound_tol = 1e-9 * c;
    let mut free = Vec::new();
    let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
    for i in 0..m {
        // decision value without intercept at sample i % n
        let f_no_b: f64 = (0..n)
            .map(|j| (x[j] - x[j + n]) * kernel[(i % n) * n + j])
            .sum();
        let target = problem.targets[i % n];
        // stationarity: alpha free => b = y - eps - f; alpha* free => b = y + eps - f
        let b_i = if i < n {
            target - problem.epsilon - f_no_b
        } else {
            target + problem.epsilon - f_no_b
        };
        let at_lower = x[i] <= bound_tol;
        let at_upper = x[i] >= c - bound_tol;
        match (i < n, at_lower, at_upper) {
            (_, false, false) => free.push(b_i),
            (true, true, _) => lo = lo.max(b_i),
            (true, _, true) => hi = hi.min(b_i),
            (false, true, _) => hi = hi.min(b_i),
            (false, _, true) => lo = lo.max(b_i),
        }
    }
    let bias = if free.is_empty() {
        0.5 * (lo + hi)
    } else {
        free.iter().sum::<f64>() / free.len() as f64
    };

    let beta: Vec<f64> = (0..n)
        .map(|i| {
            let b = x[i] - x[i + n];
            if b.abs() <= bound_tol {
                0.0
            } else {
                b
            }
        })
        .collect();
    let status = if stationarity <= STATIONARITY {
        SolveStatus::Converged {
            iterations,
            violation: stationarity,
        }
    } else {
        SolveStatus::NonConvergence {
            passes: iterations,
            violation: stationarity,
        }
    };
    let objective = value(&x, &qx);
    Ok(problem.into_model(&beta, bias, *params, objective, status))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn projection_is_feasible_and_idempotent() {
        let z = [1.0, 1.0, -1.0, -1.0];
        let v = [3.0, -1.0, 0.5, 2.0];
        let mut out = [0.0; 4];
        let mut breaks = Vec::new();
        project(&v, &z, 1.0, &mut out, &mut breaks);
        let sum: f64 = out.iter().zip(&z).map(|(a, b)| a * b).sum();
        assert!(sum.abs() < 1e-12);
        assert!(out.iter().all(|&x| (0.0..=1.0).contains(&x)));
        let mut again = [0.0; 4];
        project(&out, &z, 1.0, &mut again, &mut breaks);
        for (a, b) in out.iter().zip(&again) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_data_matches_zero_model() {
        let t: Vec<f64> = (0..10).map(|i| i as f64 / 9.0).collect();
        let m = solve_svr_qp_oracle(&t, &[5.0; 10], &SvrParams::default()).unwrap();
        assert!(m.dual_coeffs.is_empty());
        assert_eq!(m.predict(0.3), 5.0);
    }

    #[test]
    fn size_guard() {
        let t: Vec<f64> = (0..500).map(|i| i as f64 / 499.0).collect();
        let y = vec![0.0; 500];
        assert_eq!(
            solve_svr_qp_oracle(&t, &y, &SvrParams::default()).unwrap_err(),
            SvrError::SizeExceeded { n: 500, max: 200 }
        );
    }
}
