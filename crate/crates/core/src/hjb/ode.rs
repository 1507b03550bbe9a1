//! Runge–Kutta integration of vector fields sampled on a time grid.
//!
//! Two methods: classical RK4 with a fixed number of sub-steps per grid
//! interval, and the Dormand–Prince 5(4) embedded pair with step-size control
//! that lands exactly on every grid point.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum SolverMethod {
    /// `substeps` RK4 steps per grid interval.
    FixedRk4 { substeps: usize },
    /// Adaptive Dormand–Prince 5(4).
    #[serde(rename = "dp45")]
    DormandPrince45 { abs_tol: f64, rel_tol: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    #[serde(flatten)]
    pub method: SolverMethod,
    /// Step budget for the adaptive method (all intervals combined).
    pub max_steps: usize,
}

impl SolverConfig {
    pub fn rk4() -> Self {
        Self::rk4_substeps(1)
    }

    pub fn rk4_substeps(substeps: usize) -> Self {
        Self {
            method: SolverMethod::FixedRk4 { substeps },
            max_steps: 1_000_000,
        }
    }

    pub fn dp45(abs_tol: f64, rel_tol: f64) -> Self {
        Self {
            method: SolverMethod::DormandPrince45 { abs_tol, rel_tol },
            max_steps: 1_000_000,
        }
    }

    fn validate(&self) -> Result<()> {
        match self.method {
            SolverMethod::FixedRk4 { substeps: 0 } => {
                Err(invalid("RK4 needs at least one sub-step"))
            }
            SolverMethod::DormandPrince45 { abs_tol, rel_tol }
                if !(abs_tol > 0.0 && rel_tol > 0.0) =>
            {
                Err(invalid("tolerances must be positive"))
            }
            _ => Ok(()),
        }
    }
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self::rk4()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// From `grid[0]` to `grid[m]`; the boundary value is the initial value.
    Forward,
    /// From `grid[m]` to `grid[0]`; the boundary value is the terminal value.
    Backward,
}

/// Integrates `y' = field(t, y)` across `grid` and returns `y` at every grid
/// point (`path[k]` belongs to `grid[k]`).
///
/// The field writes `dy/dt` into its output slice and may abort the solve by
/// returning an error.
pub fn rk_integrate<F>(
    mut field: F,
    boundary: &[f64],
    grid: &[f64],
    direction: Direction,
    config: &SolverConfig,
) -> Result<Vec<Vec<f64>>>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
{
    config.validate()?;
    if grid.len() < 2 {
        return Err(invalid("integration grid needs at least two points"));
    }
    if grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(invalid("integration grid must be strictly increasing"));
    }
    let n = boundary.len();
    let m = grid.len() - 1;
    let mut path = vec![Vec::new(); m + 1];
    let order: Vec<usize> = match direction {
        Direction::Forward => (0..=m).collect(),
        Direction::Backward => (0..=m).rev().collect(),
    };
    let mut y = boundary.to_vec();
    path[order[0]] = y.clone();
    let mut ws = Workspace::new(n);
    let mut steps_taken = 0usize;
    let mut h_adapt: Option<f64> = None;

    for (step, pair) in order.windows(2).enumerate() {
        let (t_a, t_b) = (grid[pair[0]], grid[pair[1]]);
        match config.method {
            SolverMethod::FixedRk4 { substeps } => {
                let h = (t_b - t_a) / substeps as f64;
                for s in 0..substeps {
                    let t = t_a + s as f64 * h;
                    rk4_step(&mut field, t, h, &mut y, &mut ws)?;
                    if y.iter().any(|v| !v.is_finite()) {
                        return Err(Error::NonFinite {
                            what: "integrator state",
                            step,
                        });
                    }
                }
            }
            SolverMethod::DormandPrince45 { abs_tol, rel_tol } => {
                dp45_interval(
                    &mut field,
                    t_a,
                    t_b,
                    &mut y,
                    &mut ws,
                    (abs_tol, rel_tol),
                    &mut h_adapt,
                    &mut steps_taken,
                    config.max_steps,
                )?;
            }
        }
        path[pair[1]] = y.clone();
    }
    Ok(path)
}

struct Workspace {
    k: [Vec<f64>; 7],
    tmp: Vec<f64>,
    y5: Vec<f64>,
}

impl Workspace {
    fn new(n: usize) -> Self {
        Self {
            k: std::array::from_fn(|_| vec![0.0; n]),
            tmp: vec![0.0; n],
            y5: vec![0.0; n],
        }
    }
}

fn eval<F>(field: &mut F, t: f64, y: &[f64], out: &mut [f64]) -> Result<()>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
{
    field(t, y, out)?;
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            what: "vector field",
            step: 0,
        });
    }
    Ok(())
}

fn rk4_step<F>(field: &mut F, t: f64, h: f64, y: &mut [f64], ws: &mut Workspace) -> Result<()>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
{
    let [k1, k2, k3, k4, ..] = &mut ws.k;
    let tmp = &mut ws.tmp;
    eval(field, t, y, k1)?;
    for i in 0..y.len() {
        tmp[i] = y[i] + 0.5 * h * k1[i];
    }
    eval(field, t + 0.5 * h, tmp, k2)?;
    for i in 0..y.len() {
        tmp[i] = y[i] + 0.5 * h * k2[i];
    }
    eval(field, t + 0.5 * h, tmp, k3)?;
    for i in 0..y.len() {
        tmp[i] = y[i] + h * k3[i];
    }
    eval(field, t + h, tmp, k4)?;
    for i in 0..y.len() {
        y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    Ok(())
}

// Dormand–Prince 5(4) tableau.
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const B5: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

#[allow(clippy::too_many_arguments)]
fn dp45_interval<F>(
    field: &mut F,
    t_a: f64,
    t_b: f64,
    y: &mut Vec<f64>,
    ws: &mut Workspace,
    (abs_tol, rel_tol): (f64, f64),
    h_state: &mut Option<f64>,
    steps_taken: &mut usize,
    max_steps: usize,
) -> Result<()>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
{
    let span = t_b - t_a;
    let sign = span.signum();
    let mut t = t_a;
    let mut h = h_state.unwrap_or(span.abs() * 0.1).min(span.abs());
    let n = y.len();
    loop {
        let remaining = (t_b - t).abs();
        if remaining <= 1e-14 * t_b.abs().max(1.0) {
            break;
        }
        let last = h >= remaining;
        let step = if last { remaining } else { h };
        let hs = sign * step;
        if step < 1e-12 * t.abs().max(1.0) {
            return Err(Error::StepUnderflow { t, h: step });
        }
        *steps_taken += 1;
        if *steps_taken > max_steps {
            return Err(Error::TooManySteps { t, max_steps });
        }
        for s in 0..7 {
            for i in 0..n {
                let mut acc = y[i];
                for (r, a) in A[s].iter().enumerate().take(s) {
                    acc += hs * a * ws.k[r][i];
                }
                ws.tmp[i] = acc;
            }
            eval(field, t + C[s] * hs, &ws.tmp, &mut ws.k[s])?;
        }
        let mut err_sq = 0.0;
        for i in 0..n {
            let mut y5 = y[i];
            let mut y4 = y[i];
            for s in 0..7 {
                y5 += hs * B5[s] * ws.k[s][i];
                y4 += hs * B4[s] * ws.k[s][i];
            }
            ws.y5[i] = y5;
            let sc = abs_tol + rel_tol * y[i].abs().max(y5.abs());
            let e = (y5 - y4) / sc;
            err_sq += e * e;
        }
        let err = if n == 0 {
            0.0
        } else {
            (err_sq / n as f64).sqrt()
        };
        if !err.is_finite() {
            return Err(Error::NonFinite {
                what: "adaptive error estimate",
                step: *steps_taken,
            });
        }
        let factor = if err == 0.0 {
            5.0
        } else {
            (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
        };
        if err <= 1.0 {
            t = if last { t_b } else { t + hs };
            std::mem::swap(y, &mut ws.y5);
            // keep the proposed step for the next interval unless clipped by it
            if !last || factor < 1.0 {
                h = step * factor;
            }
        } else {
            h = step * factor.min(1.0);
        }
    }
    *h_state = Some(h);
    Ok(())
}
