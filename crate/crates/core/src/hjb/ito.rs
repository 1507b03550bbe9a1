//! Numerical check of the generalized Itô formula for a quadratic `V`.
//!
//! The analytic drift of `V(x(t), t)` for the jump diffusion is
//! `V_t + ½ tr(V_xx ggᵀ) + V_xᵀ(f + u) + Σ_j λ_j (V(x + h_j(x), t) − V(x, t))`;
//! the Monte-Carlo side averages `(V(x(t+dt), t+dt) − V(x, t)) / dt` over
//! one-step simulations with Gaussian increments and Bernoulli(`λ_j dt`) jumps.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{check_len, invalid, Result};
use crate::network::OpinionParams;
use crate::rng::{stream, stream_rng};
use crate::stats::mean_variance;

/// `V(x, t + s) = (v0 + s dv0) + (v1 + s dv1)ᵀx + ½xᵀ(v11 + s dv11)x` near a fixed `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticValue {
    pub v0: f64,
    pub v1: Vec<f64>,
    pub v11: DMatrix<f64>,
    pub dv0: f64,
    pub dv1: Vec<f64>,
    pub dv11: DMatrix<f64>,
}

impl QuadraticValue {
    /// Time-independent value.
    pub fn frozen(v0: f64, v1: Vec<f64>, v11: DMatrix<f64>) -> Self {
        let n = v1.len();
        Self {
            v0,
            v1,
            v11,
            dv0: 0.0,
            dv1: vec![0.0; n],
            dv11: DMatrix::zeros(n, n),
        }
    }

    pub fn num_users(&self) -> usize {
        self.v1.len()
    }

    /// `V(x, t + s)`.
    pub fn value(&self, x: &[f64], s: f64) -> f64 {
        let xv = DVector::from_column_slice(x);
        let lin: f64 = self
            .v1
            .iter()
            .zip(&self.dv1)
            .zip(x)
            .map(|((a, b), x)| (a + s * b) * x)
            .sum();
        let quad = xv.dot(&(&self.v11 * &xv)) + s * xv.dot(&(&self.dv11 * &xv));
        self.v0 + s * self.dv0 + lin + 0.5 * quad
    }

    /// `V_t(x)`.
    pub fn time_derivative(&self, x: &[f64]) -> f64 {
        let xv = DVector::from_column_slice(x);
        self.dv0
            + self.dv1.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
            + 0.5 * xv.dot(&(&self.dv11 * &xv))
    }

    /// `V_x = v1 + v11 x`.
    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let g = &self.v11 * DVector::from_column_slice(x);
        self.v1.iter().zip(g.iter()).map(|(a, b)| a + b).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ItoCheck {
    pub analytic: f64,
    pub monte_carlo: f64,
    pub std_error: f64,
}

impl ItoCheck {
    pub fn within(&self, n_se: f64) -> bool {
        (self.analytic - self.monte_carlo).abs() <= n_se * self.std_error
    }
}

/// Jump vector `h_j(x)` of one event of user `j`.
fn jump(params: &OpinionParams, x: &[f64], j: usize) -> Vec<f64> {
    let mut h = vec![0.0; x.len()];
    let s = params.jump_scale(x[j]);
    for &(i, w) in params.topology.column(j) {
        h[i] = w * s;
    }
    h
}

/// Analytic drift of `V(x(t), t)` at state `x` under control `u` and intensity `lam`.
pub fn analytic_drift(
    v: &QuadraticValue,
    params: &OpinionParams,
    lam: &[f64],
    x: &[f64],
    u: &[f64],
) -> f64 {
    let n = x.len();
    let grad = v.gradient(x);
    let drift: f64 = (0..n)
        .map(|i| grad[i] * (params.omega2 * (params.b[i] - x[i]) + u[i]))
        .sum();
    let diffusion = 0.5 * params.theta * params.theta * v.v11.trace();
    let base = v.value(x, 0.0);
    let jumps: f64 = (0..n)
        .filter(|&j| lam[j] > 0.0)
        .map(|j| {
            let h = jump(params, x, j);
            let shifted: Vec<f64> = x.iter().zip(&h).map(|(a, b)| a + b).collect();
            lam[j] * (v.value(&shifted, 0.0) - base)
        })
        .sum();
    v.time_derivative(x) + diffusion + drift + jumps
}

/// Analytic drift next to its one-step Monte-Carlo estimate.
#[allow(clippy::too_many_arguments)]
pub fn verify_ito_drift(
    v: &QuadraticValue,
    params: &OpinionParams,
    lam: &[f64],
    x: &[f64],
    u: &[f64],
    dt: f64,
    n_samples: usize,
    seed: u64,
) -> Result<ItoCheck> {
    let n = params.num_users();
    check_len("value coefficients", n, v.num_users())?;
    check_len("intensity vector", n, lam.len())?;
    check_len("state", n, x.len())?;
    check_len("control", n, u.len())?;
    if !(dt > 0.0) {
        return Err(invalid("dt must be positive"));
    }
    if n_samples < 2 {
        return Err(invalid("need at least two samples"));
    }
    if lam.iter().any(|&l| !(l >= 0.0) || l * dt > 1.0) {
        return Err(invalid("jump probabilities λ dt must lie in [0, 1]"));
    }
    let analytic = analytic_drift(v, params, lam, x, u);

    let jumps: Vec<Vec<f64>> = (0..n).map(|j| jump(params, x, j)).collect();
    let mean_step: Vec<f64> = (0..n)
        .map(|i| x[i] + (params.omega2 * (params.b[i] - x[i]) + u[i]) * dt)
        .collect();
    let v_now = v.value(x, 0.0);
    let sd = params.theta * dt.sqrt();
    let mut rng = stream_rng(seed, stream::ITO);
    let mut next = vec![0.0; n];
    let samples: Vec<f64> = (0..n_samples)
        .map(|_| {
            for i in 0..n {
                let z: f64 = StandardNormal.sample(&mut rng);
                next[i] = mean_step[i] + sd * z;
            }
            for j in 0..n {
                if lam[j] > 0.0 && rng.random::<f64>() < lam[j] * dt {
                    for (a, b) in next.iter_mut().zip(&jumps[j]) {
                        *a += b;
                    }
                }
            }
            (v.value(&next, dt) - v_now) / dt
        })
        .collect();
    let (mean, var) = mean_variance(&samples);
    Ok(ItoCheck {
        analytic,
        monte_carlo: mean,
        std_error: (var.unwrap_or(0.0) / n_samples as f64).sqrt(),
    })
}
