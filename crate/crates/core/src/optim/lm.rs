//! Levenberg-Marquardt: damped Gauss-Newton for small least-squares
//! problems, used to fit the fusion network.
//!
//! Each step solves `(J^T J + lambda I) delta = -J^T r` with an exact
//! residual Jacobian, accepts the step iff it does not increase the sum of
//! squared errors (lambda shrinks), and otherwise rejects it (lambda grows).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ndcore::Matrix;
use crate::rnn::{FusionNetwork, ParamSet};

pub const LAMBDA_MIN: f64 = 1e-12;
pub const LAMBDA_MAX: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LmConfig {
    pub lambda0: f64,
    pub lambda_up: f64,
    pub lambda_down: f64,
    /// Stop when an accepted step improves SSE by less than this.
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for LmConfig {
    fn default() -> Self {
        LmConfig {
            lambda0: 1e-3,
            lambda_up: 10.0,
            lambda_down: 10.0,
            tol: 1e-10,
            max_iters: 200,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LmState {
    pub lambda: f64,
    pub config: LmConfig,
}

impl LmState {
    pub fn new(config: LmConfig) -> Self {
        LmState {
            lambda: config.lambda0.clamp(LAMBDA_MIN, LAMBDA_MAX),
            config,
        }
    }
}

/// A nonlinear least-squares problem over a flat parameter vector.
pub trait LeastSquaresProblem {
    fn params(&self) -> Vec<f64>;
    fn set_params(&mut self, p: &[f64]) -> Result<()>;
    fn residuals(&self) -> Result<Vec<f64>>;
    /// Residual vector and its `n x p` Jacobian at the current parameters.
    fn residuals_and_jacobian(&self) -> Result<(Vec<f64>, Matrix)>;
}

pub fn sse(residuals: &[f64]) -> f64 {
    residuals.iter().map(|r| r * r).sum()
}

/// Solve `A x = b` for symmetric positive-definite `A` via Cholesky.
fn cholesky_solve(a: &Matrix, b: &[f64]) -> Result<Vec<f64>> {
    let n = a.rows();
    let mut l = vec![0.0; n * n];
    for j in 0..n {
        let mut d = a.get(j, j);
        for k in 0..j {
            d -= l[j * n + k] * l[j * n + k];
        }
        if !(d > 0.0) || !d.is_finite() {
            return Err(Error::numeric(format!(
                "cholesky pivot {d} at column {j}: matrix not positive definite"
            )));
        }
        let diag = d.sqrt();
        l[j * n + j] = diag;
        for i in j + 1..n {
            let mut s = a.get(i, j);
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            l[i * n + j] = s / diag;
        }
    }
    // Forward substitution L y = b, then back substitution L^T x = y.
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * n + k] * y[k];
        }
        y[i] = s / l[i * n + i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in i + 1..n {
            s -= l[k * n + i] * x[k];
        }
        x[i] = s / l[i * n + i];
    }
    Ok(x)
}

/// One damped Gauss-Newton trial on an arbitrary problem. Returns whether
/// the step was accepted.
pub fn lm_step_problem<P: LeastSquaresProblem>(
    problem: &mut P,
    state: &mut LmState,
) -> Result<bool> {
    let (residuals, jacobian) = problem.residuals_and_jacobian()?;
    if residuals.is_empty() {
        return Err(Error::domain("least-squares batch is empty".to_string()));
    }
    if residuals.iter().any(|r| !r.is_finite()) {
        return Err(Error::numeric("residual vector has non-finite entries".to_string()));
    }
    let sse_old = sse(&residuals);
    let p = jacobian.cols();

    // Normal matrix J^T J and right-hand side -J^T r.
    let jtj = jacobian.matmul_tn(&jacobian)?;
    let r_col = Matrix::column(residuals)?;
    let jtr = jacobian.matmul_tn(&r_col)?;
    let rhs: Vec<f64> = jtr.data().iter().map(|v| -v).collect();

    // Retry the solve with more damping if the factorization fails; give
    // up with a numeric error once lambda is already at the cap.
    let delta = loop {
        let mut damped = jtj.clone();
        for i in 0..p {
            damped.set(i, i, damped.get(i, i) + state.lambda);
        }
        match cholesky_solve(&damped, &rhs) {
            Ok(delta) => break delta,
            Err(e) => {
                if state.lambda >= LAMBDA_MAX {
                    return Err(Error::numeric(format!(
                        "damped normal matrix unsolvable at lambda cap {LAMBDA_MAX:e}: {e}"
                    )));
                }
                state.lambda = (state.lambda * state.config.lambda_up).min(LAMBDA_MAX);
            }
        }
    };

    let old_params = problem.params();
    let new_params: Vec<f64> = old_params.iter().zip(&delta).map(|(t, d)| t + d).collect();
    problem.set_params(&new_params)?;
    let sse_new = match problem.residuals() {
        Ok(r) if r.iter().all(|v| v.is_finite()) => sse(&r),
        _ => f64::INFINITY,
    };

    if sse_new <= sse_old {
        state.lambda = (state.lambda / state.config.lambda_down).max(LAMBDA_MIN);
        Ok(true)
    } else {
        problem.set_params(&old_params)?;
        state.lambda = (state.lambda * state.config.lambda_up).min(LAMBDA_MAX);
        Ok(false)
    }
}

/// Fitting a fusion network to `(stream predictions, target)` pairs as a
/// least-squares problem. Inputs are `n x 2`, one row per sample.
pub struct FusionFit<'a> {
    pub fusion: FusionNetwork,
    pub inputs: &'a Matrix,
    pub targets: &'a [f64],
}

impl<'a> FusionFit<'a> {
    pub fn new(fusion: FusionNetwork, inputs: &'a Matrix, targets: &'a [f64]) -> Result<Self> {
        if inputs.cols() != 2 {
            return Err(Error::Shape {
                op: "fusion_fit",
                left_rows: inputs.rows(),
                left_cols: inputs.cols(),
                right_rows: inputs.rows(),
                right_cols: 2,
            });
        }
        if inputs.rows() != targets.len() {
            return Err(Error::validation(format!(
                "{} prediction rows but {} targets",
                inputs.rows(),
                targets.len()
            )));
        }
        Ok(FusionFit {
            fusion,
            inputs,
            targets,
        })
    }
}

impl LeastSquaresProblem for FusionFit<'_> {
    fn params(&self) -> Vec<f64> {
        self.fusion.flatten()
    }

    fn set_params(&mut self, p: &[f64]) -> Result<()> {
        self.fusion.set_from_flat(p)
    }

    fn residuals(&self) -> Result<Vec<f64>> {
        (0..self.inputs.rows())
            .map(|s| {
                let pred = self
                    .fusion
                    .predict(self.inputs.get(s, 0), self.inputs.get(s, 1))?;
                Ok(pred - self.targets[s])
            })
            .collect()
    }

    fn residuals_and_jacobian(&self) -> Result<(Vec<f64>, Matrix)> {
        let n = self.inputs.rows();
        let p = self.fusion.param_count();
        let mut residuals = Vec::with_capacity(n);
        let mut jac = Matrix::zeros(n, p);
        for s in 0..n {
            let (pred, cache) = self
                .fusion
                .forward(self.inputs.get(s, 0), self.inputs.get(s, 1))?;
            residuals.push(pred - self.targets[s]);
            let mut grads = self.fusion.zeros_like();
            self.fusion.head.backward(&cache, 1.0, &mut grads.head)?;
            for (j, g) in grads.flatten().into_iter().enumerate() {
                jac.set(s, j, g);
            }
        }
        Ok((residuals, jac))
    }
}

/// One Levenberg-Marquardt trial on a fusion network against a batch.
pub fn lm_step(
    fusion: &mut FusionNetwork,
    inputs: &Matrix,
    targets: &[f64],
    state: &mut LmState,
) -> Result<bool> {
    let mut problem = FusionFit::new(fusion.clone(), inputs, targets)?;
    let accepted = lm_step_problem(&mut problem, state)?;
    *fusion = problem.fusion;
    Ok(accepted)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ndcore::SeededRng;

    /// Independent dense solve by Gaussian elimination with partial
    /// pivoting, used as the least-squares oracle.
    fn gauss_solve(a: &mut Vec<Vec<f64>>, b: &mut Vec<f64>) -> Vec<f64> {
        let n = b.len();
        for col in 0..n {
            let pivot = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
            a.swap(col, pivot);
            b.swap(col, pivot);
            for row in col + 1..n {
                let f = a[row][col] / a[col][col];
                for k in col..n {
                    a[row][k] -= f * a[col][k];
                }
                b[row] -= f * b[col];
            }
        }
        let mut x = vec![0.0; n];
        for row in (0..n).rev() {
            let mut s = b[row];
            for k in row + 1..n {
                s -= a[row][k] * x[k];
            }
            x[row] = s / a[row][row];
        }
        x
    }

    fn random_batch(n: usize, seed: u64) -> (Matrix, Vec<f64>) {
        let mut rng = SeededRng::new(seed);
        let inputs =
            Matrix::from_vec(n, 2, rng.uniform_vec(n * 2, -2.0, 2.0).unwrap()).unwrap();
        let targets = rng.uniform_vec(n, -1.0, 1.0).unwrap();
        (inputs, targets)
    }

    #[test]
    fn linear_fusion_reaches_least_squares_optimum_in_one_step() {
        let (inputs, targets) = random_batch(40, 3);
        let mut rng = SeededRng::new(4);
        let mut fusion = FusionNetwork::linear(&mut rng).unwrap();
        let mut state = LmState::new(LmConfig::default());
        state.lambda = LAMBDA_MIN;

        let accepted = lm_step(&mut fusion, &inputs, &targets, &mut state).unwrap();
        assert!(accepted);

        // Analytic least squares on the design matrix [p1 p2 1].
        let mut ata = vec![vec![0.0; 3]; 3];
        let mut atb = vec![0.0; 3];
        for s in 0..inputs.rows() {
            let row = [inputs.get(s, 0), inputs.get(s, 1), 1.0];
            for i in 0..3 {
                for j in 0..3 {
                    ata[i][j] += row[i] * row[j];
                }
                atb[i] += row[i] * targets[s];
            }
        }
        let coef = gauss_solve(&mut ata, &mut atb);
        let optimum_sse: f64 = (0..inputs.rows())
            .map(|s| {
                let pred =
                    coef[0] * inputs.get(s, 0) + coef[1] * inputs.get(s, 1) + coef[2];
                (pred - targets[s]).powi(2)
            })
            .sum();

        let problem = FusionFit::new(fusion, &inputs, &targets).unwrap();
        let reached = sse(&problem.residuals().unwrap());
        assert!(
            (reached - optimum_sse).abs() < 1e-9,
            "reached {reached}, optimum {optimum_sse}"
        );
    }

    #[test]
    fn zero_residuals_leave_params_unchanged() {
        let (inputs, _) = random_batch(20, 7);
        let mut rng = SeededRng::new(8);
        let fusion = FusionNetwork::new(4, &mut rng).unwrap();
        // Targets equal to the model's own output give r = 0 exactly.
        let targets: Vec<f64> = (0..inputs.rows())
            .map(|s| fusion.predict(inputs.get(s, 0), inputs.get(s, 1)).unwrap())
            .collect();
        let before = fusion.flatten();
        let mut fitted = fusion.clone();
        let mut state = LmState::new(LmConfig::default());
        lm_step(&mut fitted, &inputs, &targets, &mut state).unwrap();
        let after = fitted.flatten();
        let worst = before
            .iter()
            .zip(&after)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        assert!(worst < 1e-12, "params moved by {worst}");
    }

    /// One-parameter model with residuals quadratic in the parameter:
    /// r_i(theta) = theta^2 * x_i - y_i.
    struct ScalarQuadratic {
        theta: f64,
        xs: Vec<f64>,
        ys: Vec<f64>,
    }

    impl LeastSquaresProblem for ScalarQuadratic {
        fn params(&self) -> Vec<f64> {
            vec![self.theta]
        }
        fn set_params(&mut self, p: &[f64]) -> Result<()> {
            self.theta = p[0];
            Ok(())
        }
        fn residuals(&self) -> Result<Vec<f64>> {
            Ok(self
                .xs
                .iter()
                .zip(&self.ys)
                .map(|(x, y)| self.theta * self.theta * x - y)
                .collect())
        }
        fn residuals_and_jacobian(&self) -> Result<(Vec<f64>, Matrix)> {
            let r = self.residuals()?;
            let jac = Matrix::from_vec(
                self.xs.len(),
                1,
                self.xs.iter().map(|x| 2.0 * self.theta * x).collect(),
            )?;
            Ok((r, jac))
        }
    }

    #[test]
    fn accepted_sse_sequence_is_strictly_decreasing_until_convergence() {
        let mut problem = ScalarQuadratic {
            theta: 3.0,
            xs: vec![0.5, 1.0, 1.5, 2.0],
            ys: vec![0.55, 0.98, 1.52, 2.05],
        };
        let mut state = LmState::new(LmConfig::default());
        let mut accepted_sse = vec![sse(&problem.residuals().unwrap())];
        for _ in 0..60 {
            if lm_step_problem(&mut problem, &mut state).unwrap() {
                accepted_sse.push(sse(&problem.residuals().unwrap()));
            }
            assert!((LAMBDA_MIN..=LAMBDA_MAX).contains(&state.lambda));
        }
        assert!(accepted_sse.len() > 3, "no accepted steps");
        for pair in accepted_sse.windows(2) {
            assert!(pair[1] <= pair[0], "SSE increased: {pair:?}");
        }
        // Far from convergence the first accepted steps strictly improve.
        assert!(accepted_sse[1] < accepted_sse[0]);
        // Optimum of sum (theta^2 x - y)^2 is near theta^2 = 1.02...; check
        // the fit got close to the best quadratic scaling.
        assert!((problem.theta.powi(2) - 1.015).abs() < 0.05, "theta^2 = {}", problem.theta.powi(2));
    }

    #[test]
    fn empty_batch_is_rejected() {
        let inputs = Matrix::zeros(0, 2);
        let targets: Vec<f64> = vec![];
        let mut rng = SeededRng::new(8);
        let mut fusion = FusionNetwork::new(4, &mut rng).unwrap();
        let mut state = LmState::new(LmConfig::default());
        assert!(lm_step(&mut fusion, &inputs, &targets, &mut state).is_err());
    }
}
