//! Backward solution of the value-function coefficient ODEs and the optimal
//! feedback policy built from them.
//!
//! With the quadratic ansatz `V(x,t) = v0 + v1ᵀx + ½xᵀv11x`, matching powers
//! of `x` in the HJB equation gives, for `h(x) = x` jumps,
//!
//! ```text
//! −v11' = I − 2ω2 v11 + (v11Λ + Λᵀv11) − v11²/ρ + D,   D = diag(λ_j a_jᵀ v11 a_j)
//! −v1'  = −a + (−ω2 + Λᵀ − v11/ρ) v1 + ω2 v11 b
//! −v0'  = ω2 bᵀv1 + (θ²/2) tr v11 − v1ᵀv1 / (2ρ)
//! ```
//!
//! with `v11(T) = I`, `v1(T) = −a`, `v0(T) = 0`. The constant `½‖a‖²` of the
//! state cost is left out of `v0`; see [`ValueCoefficients::expected_cost`].
//! The linear objective keeps only `v1` and `v0`:
//! `v1' = 1 + ω2 v1 − Λᵀv1`, `v0' = −ω2 v1ᵀb + v1ᵀv1/(2ρ)`, `v1(T) = −1`.

pub mod ito;
pub mod ode;
mod policy;

use std::borrow::Cow;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, invalid, Error, Result};
use crate::network::{
    jump_quadratic_diagonal, ControlProblem, HMode, HawkesParams, NetworkTopology, ObjectiveKind,
    OpinionParams,
};
use crate::pointproc::mean_intensity_path;

pub use ode::{rk_integrate, Direction, SolverConfig, SolverMethod};
pub use policy::{FeedbackPolicy, ReplanPolicy};

/// `‖v11‖_F` beyond which the backward Riccati solve is declared divergent.
pub const RICCATI_GUARD: f64 = 1e6;

/// How the intensity coefficients of the backward solve are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum LamMode {
    /// One solve against the mean-field intensity path.
    #[default]
    Mean,
    /// Re-solve after observed events, continuing from the realized intensity.
    Replan,
}

/// Intensity vectors sampled on a grid, linearly interpolated in between.
#[derive(Debug, Clone, PartialEq)]
pub struct IntensityPath {
    pub grid: Vec<f64>,
    pub lam: Vec<Vec<f64>>,
}

impl IntensityPath {
    pub fn new(grid: Vec<f64>, lam: Vec<Vec<f64>>) -> Result<Self> {
        check_len("intensity path", grid.len(), lam.len())?;
        if grid.len() < 2 {
            return Err(invalid("intensity path needs at least two grid points"));
        }
        let n = lam[0].len();
        for l in &lam {
            check_len("intensity vector", n, l.len())?;
            if l.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(invalid("intensities must be finite and nonnegative"));
            }
        }
        Ok(Self { grid, lam })
    }

    pub fn constant(grid: Vec<f64>, lam: Vec<f64>) -> Result<Self> {
        let rows = vec![lam; grid.len()];
        Self::new(grid, rows)
    }

    pub fn zeros(grid: Vec<f64>, num_users: usize) -> Self {
        let rows = vec![vec![0.0; num_users]; grid.len()];
        Self { grid, lam: rows }
    }

    /// Mean-field intensity `λ̄(τ_k)` of a Hawkes model.
    pub fn mean_field(hawkes: &HawkesParams, grid: &[f64]) -> Result<Self> {
        Ok(Self {
            grid: grid.to_vec(),
            lam: mean_intensity_path(hawkes, grid)?,
        })
    }

    pub fn num_users(&self) -> usize {
        self.lam[0].len()
    }

    pub fn at(&self, t: f64, out: &mut [f64]) {
        let (k, w) = locate(&self.grid, t);
        lerp_into(
            &self.lam[k],
            &self.lam[(k + 1).min(self.lam.len() - 1)],
            w,
            out,
        );
    }
}

/// Network used by the backward solve: fixed, or sampled on the grid (for
/// example expected adjacencies of a growing network) and interpolated.
#[derive(Debug, Clone)]
pub enum NetworkSchedule {
    Static(NetworkTopology),
    Sampled {
        grid: Vec<f64>,
        topologies: Vec<NetworkTopology>,
    },
}

impl NetworkSchedule {
    fn at(&self, t: f64) -> Cow<'_, NetworkTopology> {
        match self {
            NetworkSchedule::Static(top) => Cow::Borrowed(top),
            NetworkSchedule::Sampled { grid, topologies } => {
                let (k, w) = locate(grid, t);
                if w == 0.0 || k + 1 >= topologies.len() {
                    Cow::Borrowed(&topologies[k])
                } else {
                    Cow::Owned(topologies[k].lerp(&topologies[k + 1], w))
                }
            }
        }
    }

    fn num_users(&self) -> usize {
        match self {
            NetworkSchedule::Static(top) => top.num_users(),
            NetworkSchedule::Sampled { topologies, .. } => topologies[0].num_users(),
        }
    }
}

/// Interval index `k` and weight `w` so that `t ≈ (1 − w) grid[k] + w grid[k+1]`;
/// `t` is clamped to the grid span.
pub(crate) fn locate(grid: &[f64], t: f64) -> (usize, f64) {
    let m = grid.len() - 1;
    if t <= grid[0] {
        return (0, 0.0);
    }
    if t >= grid[m] {
        return (m, 0.0);
    }
    let k = grid.partition_point(|&g| g <= t) - 1;
    let w = (t - grid[k]) / (grid[k + 1] - grid[k]);
    (k, w)
}

fn lerp_into(a: &[f64], b: &[f64], w: f64, out: &mut [f64]) {
    for ((o, x), y) in out.iter_mut().zip(a).zip(b) {
        *o = if w == 0.0 { *x } else { (1.0 - w) * x + w * y };
    }
}

/// Solved coefficient paths on the problem grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueCoefficients {
    pub kind: ObjectiveKind,
    pub grid: Vec<f64>,
    pub v0: Vec<f64>,
    pub v1: Vec<Vec<f64>>,
    /// Quadratic coefficient per grid point; `None` for the linear objective.
    pub v11: Option<Vec<DMatrix<f64>>>,
    /// `½‖a‖²` for the least-square objective, `0` otherwise.
    pub target_norm: f64,
    pub running_state_cost: bool,
}

impl ValueCoefficients {
    pub fn num_users(&self) -> usize {
        self.v1[0].len()
    }

    pub fn span(&self) -> (f64, f64) {
        (self.grid[0], self.grid[self.grid.len() - 1])
    }

    fn check_span(&self, t: f64) -> Result<()> {
        let (a, b) = self.span();
        let tol = 1e-9 * (b - a).abs().max(1.0);
        if t < a - tol || t > b + tol || !t.is_finite() {
            return Err(Error::OutsideSpan {
                t,
                start: a,
                end: b,
            });
        }
        Ok(())
    }

    /// `V(x, t)` from interpolated coefficients (without the `½‖a‖²` constants).
    pub fn value(&self, x: &[f64], t: f64) -> Result<f64> {
        self.check_span(t)?;
        check_len("state", self.num_users(), x.len())?;
        let (k, w) = locate(&self.grid, t);
        let k1 = (k + 1).min(self.grid.len() - 1);
        let at = |k: usize| {
            let mut v = self.v0[k] + dot(&self.v1[k], x);
            if let Some(m) = &self.v11 {
                let xv = DVector::from_column_slice(x);
                v += 0.5 * xv.dot(&(&m[k] * &xv));
            }
            v
        };
        Ok((1.0 - w) * at(k) + w * at(k1))
    }

    /// Expected total cost from `(x, t)` implied by the coefficients, adding
    /// back the `½‖a‖²` constants of the running and terminal cost.
    pub fn expected_cost(&self, x: &[f64], t: f64) -> Result<f64> {
        let v = self.value(x, t)?;
        let (_, t_end) = self.span();
        let running = if self.running_state_cost {
            t_end - t
        } else {
            0.0
        };
        Ok(v + self.target_norm * (1.0 + running))
    }

    /// `u* = −(v1(t) + v11(t)x)/ρ`, or `−v1(t)/ρ` for the linear objective.
    pub fn feedback_control(&self, x: &[f64], t: f64, rho: f64) -> Result<Vec<f64>> {
        self.check_span(t)?;
        check_len("state", self.num_users(), x.len())?;
        if !(rho > 0.0) {
            return Err(invalid(format!("rho = {rho} must be positive")));
        }
        let mut u = vec![0.0; x.len()];
        self.feedback_into(x, t, rho, &mut u);
        Ok(u)
    }

    /// Unchecked variant of [`Self::feedback_control`]; `t` is clamped to the span.
    pub(crate) fn feedback_into(&self, x: &[f64], t: f64, rho: f64, u: &mut [f64]) {
        let n = x.len();
        let (k, w) = locate(&self.grid, t);
        let k1 = (k + 1).min(self.grid.len() - 1);
        lerp_into(&self.v1[k], &self.v1[k1], w, u);
        if let Some(m) = &self.v11 {
            let (a, b) = (&m[k], &m[k1]);
            for j in 0..n {
                let xj = x[j];
                if xj == 0.0 {
                    continue;
                }
                let (ca, cb) = (a.column(j), b.column(j));
                if w == 0.0 {
                    for i in 0..n {
                        u[i] += ca[i] * xj;
                    }
                } else {
                    for i in 0..n {
                        u[i] += ((1.0 - w) * ca[i] + w * cb[i]) * xj;
                    }
                }
            }
        }
        for v in u.iter_mut() {
            *v = -*v / rho;
        }
    }

    /// Largest `‖v11 − v11ᵀ‖_∞` over the path (0 for the linear objective).
    pub fn max_asymmetry(&self) -> f64 {
        self.v11
            .iter()
            .flatten()
            .map(|m| (m - m.transpose()).amax())
            .fold(0.0, f64::max)
    }

    /// JSON `{kind, grid, v0, v1, v11}` with `v11[k]` as lower-triangle rows.
    pub fn to_json(&self) -> String {
        let v11 = self.v11.as_ref().map(|path| {
            path.iter()
                .map(|m| {
                    (0..m.nrows())
                        .map(|i| (0..=i).map(|j| m[(i, j)]).collect())
                        .collect()
                })
                .collect()
        });
        serde_json::to_string(&CoefficientsJson {
            kind: self.kind,
            grid: self.grid.clone(),
            v0: self.v0.clone(),
            v1: self.v1.clone(),
            v11,
            target_norm: self.target_norm,
            running_state_cost: self.running_state_cost,
        })
        .expect("coefficients serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: CoefficientsJson = serde_json::from_str(text)?;
        let m = raw.grid.len();
        if m < 2 {
            return Err(Error::Parse(
                "coefficient grid needs at least two points".into(),
            ));
        }
        if raw.grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Parse("coefficient grid must be increasing".into()));
        }
        check_len("v0 path", m, raw.v0.len())?;
        check_len("v1 path", m, raw.v1.len())?;
        let n = raw.v1[0].len();
        if n == 0 {
            return Err(Error::Parse("coefficients need at least one user".into()));
        }
        for v in &raw.v1 {
            check_len("v1 entry", n, v.len())?;
        }
        let v11 = match (raw.kind, raw.v11) {
            (ObjectiveKind::Lsog, Some(path)) => {
                check_len("v11 path", m, path.len())?;
                let mut out = Vec::with_capacity(m);
                for rows in path {
                    check_len("v11 rows", n, rows.len())?;
                    let mut mat = DMatrix::zeros(n, n);
                    for (i, row) in rows.iter().enumerate() {
                        check_len("v11 row", i + 1, row.len())?;
                        for (j, &v) in row.iter().enumerate() {
                            mat[(i, j)] = v;
                            mat[(j, i)] = v;
                        }
                    }
                    out.push(mat);
                }
                Some(out)
            }
            (ObjectiveKind::Lsog, None) => {
                return Err(Error::Parse("least-square coefficients need v11".into()))
            }
            (ObjectiveKind::Oim, None) => None,
            (ObjectiveKind::Oim, Some(_)) => {
                return Err(Error::Parse("linear coefficients carry no v11".into()))
            }
        };
        let all_finite = raw
            .v0
            .iter()
            .chain(raw.v1.iter().flatten())
            .all(|v| v.is_finite())
            && v11
                .iter()
                .flatten()
                .all(|m| m.iter().all(|v| v.is_finite()));
        if !all_finite || !raw.target_norm.is_finite() {
            return Err(Error::Parse("non-finite coefficient".into()));
        }
        Ok(Self {
            kind: raw.kind,
            grid: raw.grid,
            v0: raw.v0,
            v1: raw.v1,
            v11,
            target_norm: raw.target_norm,
            running_state_cost: raw.running_state_cost,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct CoefficientsJson {
    kind: ObjectiveKind,
    grid: Vec<f64>,
    v0: Vec<f64>,
    v1: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    v11: Option<Vec<Vec<Vec<f64>>>>,
    #[serde(default)]
    target_norm: f64,
    #[serde(default = "yes")]
    running_state_cost: bool,
}

fn yes() -> bool {
    true
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check_inputs(
    problem: &ControlProblem,
    params: &OpinionParams,
    lam: &IntensityPath,
    net: &NetworkSchedule,
) -> Result<Vec<f64>> {
    let n = params.num_users();
    problem.validate(Some(n))?;
    check_len("intensity path users", n, lam.num_users())?;
    check_len("network users", n, net.num_users())?;
    let grid = problem.grid();
    check_len("intensity path grid", grid.len(), lam.grid.len())?;
    if let NetworkSchedule::Sampled {
        grid: g,
        topologies,
    } = net
    {
        check_len("network schedule", g.len(), topologies.len())?;
        if g.len() < 2 {
            return Err(invalid("network schedule needs at least two grid points"));
        }
    }
    Ok(grid)
}

/// Least-square objective over the static network of `params`.
pub fn solve_lsog(
    problem: &ControlProblem,
    params: &OpinionParams,
    lam: &IntensityPath,
    config: &SolverConfig,
) -> Result<ValueCoefficients> {
    solve_lsog_on(
        problem,
        params,
        lam,
        &NetworkSchedule::Static(params.topology.clone()),
        config,
    )
}

/// Least-square objective with a possibly time-varying network.
pub fn solve_lsog_on(
    problem: &ControlProblem,
    params: &OpinionParams,
    lam: &IntensityPath,
    net: &NetworkSchedule,
    config: &SolverConfig,
) -> Result<ValueCoefficients> {
    if problem.kind != ObjectiveKind::Lsog {
        return Err(invalid("solve_lsog needs a least-square problem"));
    }
    let grid = check_inputs(problem, params, lam, net)?;
    let n = params.num_users();
    let nn = n * n;
    let rho = problem.rho;
    let omega = params.omega2;
    let running = problem.running_state_cost;
    let mut lam_t = vec![0.0; n];

    let field = |t: f64, y: &[f64], out: &mut [f64]| -> Result<()> {
        let v11 = DMatrix::from_column_slice(n, n, &y[..nn]);
        let v1 = &y[nn..nn + n];
        let norm = v11.norm();
        if !(norm <= RICCATI_GUARD) {
            return Err(Error::RiccatiBlowUp { t, norm });
        }
        lam.at(t, &mut lam_t);
        let top = net.at(t);

        // right-hand side R of −v11' = R, kept exactly symmetric
        let sq = &v11 * &v11;
        let mut r = DMatrix::from_fn(n, n, |i, j| {
            -2.0 * omega * v11[(i, j)] - 0.5 * (sq[(i, j)] + sq[(j, i)]) / rho
        });
        if running {
            for i in 0..n {
                r[(i, i)] += 1.0;
            }
        }
        // linear-part right-hand side of −v1' = r1
        let v11v1 = &v11 * DVector::from_column_slice(v1);
        let b = DVector::from_column_slice(&params.b);
        let v11b = &v11 * &b;
        let mut r1: Vec<f64> = (0..n)
            .map(|i| {
                -omega * v1[i] - v11v1[i] / rho + omega * v11b[i]
                    - if running { problem.target[i] } else { 0.0 }
            })
            .collect();
        let mut r0 = omega * dot(&params.b, v1) + 0.5 * params.theta * params.theta * v11.trace()
            - 0.5 * dot(v1, v1) / rho;
        let d = jump_quadratic_diagonal(&top, &lam_t, &v11)?;

        match params.h_mode {
            HMode::Linear => {
                // M = v11 Λ, column j = λ_j Σ_i w_ij v11[:, i]
                let mut mm = DMatrix::<f64>::zeros(n, n);
                for j in 0..n {
                    if lam_t[j] == 0.0 {
                        continue;
                    }
                    for &(i, w) in top.column(j) {
                        let s = lam_t[j] * w;
                        for row in 0..n {
                            mm[(row, j)] += s * v11[(row, i)];
                        }
                    }
                }
                for i in 0..n {
                    for j in 0..n {
                        r[(i, j)] += mm[(i, j)] + mm[(j, i)];
                    }
                    r[(i, i)] += d[i];
                }
                let atv1 = top.mul_transpose_vec(v1);
                for j in 0..n {
                    r1[j] += lam_t[j] * atv1[j];
                }
            }
            HMode::Unit => {
                let a_lam = top.mul_vec(&lam_t);
                let v11al = &v11 * DVector::from_column_slice(&a_lam);
                for i in 0..n {
                    r1[i] += v11al[i];
                }
                r0 += dot(v1, &a_lam) + 0.5 * d.iter().sum::<f64>();
            }
        }

        for (o, v) in out[..nn].iter_mut().zip(r.iter()) {
            *o = -v;
        }
        for (o, v) in out[nn..nn + n].iter_mut().zip(&r1) {
            *o = -v;
        }
        out[nn + n] = -r0;
        Ok(())
    };

    let mut terminal = vec![0.0; nn + n + 1];
    for i in 0..n {
        terminal[i * n + i] = 1.0;
        terminal[nn + i] = -problem.target[i];
    }
    let path = rk_integrate(field, &terminal, &grid, Direction::Backward, config)?;
    for (k, y) in path.iter().enumerate() {
        let norm = y[..nn].iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(norm <= RICCATI_GUARD) {
            return Err(Error::RiccatiBlowUp { t: grid[k], norm });
        }
    }
    let v11 = path
        .iter()
        .map(|y| DMatrix::from_column_slice(n, n, &y[..nn]))
        .collect();
    let v1 = path.iter().map(|y| y[nn..nn + n].to_vec()).collect();
    let v0 = path.iter().map(|y| y[nn + n]).collect();
    Ok(ValueCoefficients {
        kind: ObjectiveKind::Lsog,
        grid,
        v0,
        v1,
        v11: Some(v11),
        target_norm: 0.5 * dot(&problem.target, &problem.target),
        running_state_cost: running,
    })
}

/// Linear influence objective over the static network of `params`.
pub fn solve_oim(
    problem: &ControlProblem,
    params: &OpinionParams,
    lam: &IntensityPath,
    config: &SolverConfig,
) -> Result<ValueCoefficients> {
    solve_oim_on(
        problem,
        params,
        lam,
        &NetworkSchedule::Static(params.topology.clone()),
        config,
    )
}

pub fn solve_oim_on(
    problem: &ControlProblem,
    params: &OpinionParams,
    lam: &IntensityPath,
    net: &NetworkSchedule,
    config: &SolverConfig,
) -> Result<ValueCoefficients> {
    if problem.kind != ObjectiveKind::Oim {
        return Err(invalid("solve_oim needs a linear influence problem"));
    }
    let grid = check_inputs(problem, params, lam, net)?;
    let n = params.num_users();
    let rho = problem.rho;
    let omega = params.omega2;
    let running = if problem.running_state_cost { 1.0 } else { 0.0 };
    let mut lam_t = vec![0.0; n];
    let field = |t: f64, y: &[f64], out: &mut [f64]| -> Result<()> {
        let v1 = &y[..n];
        lam.at(t, &mut lam_t);
        let top = net.at(t);
        for i in 0..n {
            out[i] = running + omega * v1[i];
        }
        out[n] = -omega * dot(v1, &params.b) + 0.5 * dot(v1, v1) / rho;
        match params.h_mode {
            HMode::Linear => {
                let atv1 = top.mul_transpose_vec(v1);
                for j in 0..n {
                    out[j] -= lam_t[j] * atv1[j];
                }
            }
            HMode::Unit => {
                out[n] -= dot(v1, &top.mul_vec(&lam_t));
            }
        }
        Ok(())
    };
    let mut terminal = vec![-1.0; n + 1];
    terminal[n] = 0.0;
    let path = rk_integrate(field, &terminal, &grid, Direction::Backward, config)?;
    Ok(ValueCoefficients {
        kind: ObjectiveKind::Oim,
        grid,
        v0: path.iter().map(|y| y[n]).collect(),
        v1: path.iter().map(|y| y[..n].to_vec()).collect(),
        v11: None,
        target_norm: 0.0,
        running_state_cost: problem.running_state_cost,
    })
}

/// Dispatches on the objective kind.
pub fn solve(
    problem: &ControlProblem,
    params: &OpinionParams,
    lam: &IntensityPath,
    config: &SolverConfig,
) -> Result<ValueCoefficients> {
    match problem.kind {
        ObjectiveKind::Lsog => solve_lsog(problem, params, lam, config),
        ObjectiveKind::Oim => solve_oim(problem, params, lam, config),
    }
}

pub fn solve_on(
    problem: &ControlProblem,
    params: &OpinionParams,
    lam: &IntensityPath,
    net: &NetworkSchedule,
    config: &SolverConfig,
) -> Result<ValueCoefficients> {
    match problem.kind {
        ObjectiveKind::Lsog => solve_lsog_on(problem, params, lam, net, config),
        ObjectiveKind::Oim => solve_oim_on(problem, params, lam, net, config),
    }
}
