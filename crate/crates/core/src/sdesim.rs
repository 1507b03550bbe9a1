//! Euler forward simulation of the controlled jump-diffusion SDEs and
//! Monte-Carlo cost evaluation of policies.
//!
//! One step of the opinion dynamics on the grid `τ_k` reads
//!
//! ```text
//! x_i(τ_{k+1}) = x_i(τ_k) + (ω2 (b_i − x_i(τ_k)) + u_i(τ_k)) Δt + θ Δw_i(τ_k)
//!                + Σ_j α_ij h(x_j(τ_k)) ΔN_j(τ_k)
//! ```
//!
//! with `ΔN_j` the number of user-`j` events in `[τ_k, τ_{k+1})` and jumps
//! taken from the pre-step state. Costs use the matching left-endpoint rule.

use std::io::Write;

use rand::Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynnet::NetworkGrowth;
use crate::error::{check_len, invalid, Error, Result};
use crate::network::{ControlProblem, HawkesParams, NetworkTopology, ObjectiveKind, OpinionParams};
use crate::pointproc::{pick_user, thinning_simulate, Event, EventLog};
use crate::rng::{derive_seed, stream, stream_rng};
use crate::stats::mean_variance;

/// What a controller sees at a grid point besides the state.
#[derive(Debug, Clone, Copy)]
pub struct StepContext<'a> {
    pub step: usize,
    pub t: f64,
    /// Events observed during `[τ_{k−1}, τ_k)`.
    pub recent_events: &'a [Event],
}

/// Per-path controller; may carry memory between grid points.
pub trait PathController {
    fn control(&mut self, ctx: &StepContext<'_>, x: &[f64], u: &mut [f64]) -> Result<()>;
}

/// A control law `u(x, t)`.
pub trait Policy: Sync {
    fn evaluate(&self, x: &[f64], t: f64, u: &mut [f64]);

    /// Controller used for one simulated path. Memoryless policies keep the
    /// default, which forwards to [`Policy::evaluate`].
    fn begin_path(&self) -> Box<dyn PathController + '_> {
        Box::new(Memoryless(self))
    }
}

struct Memoryless<'a, P: ?Sized>(&'a P);

impl<P: Policy + ?Sized> PathController for Memoryless<'_, P> {
    fn control(&mut self, ctx: &StepContext<'_>, x: &[f64], u: &mut [f64]) -> Result<()> {
        self.0.evaluate(x, ctx.t, u);
        Ok(())
    }
}

/// Adapts a closure into a [`Policy`].
pub struct FnPolicy<F>(pub F);

impl<F> Policy for FnPolicy<F>
where
    F: Fn(&[f64], f64, &mut [f64]) + Sync,
{
    fn evaluate(&self, x: &[f64], t: f64, u: &mut [f64]) {
        (self.0)(x, t, u)
    }
}

/// Gridded state and control paths of one simulated run.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub grid: Vec<f64>,
    pub num_users: usize,
    /// `x[k * num_users + i]`.
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    pub events: EventLog,
    pub noise_seed: u64,
}

impl Trajectory {
    pub fn state(&self, k: usize) -> &[f64] {
        &self.x[k * self.num_users..(k + 1) * self.num_users]
    }

    pub fn control(&self, k: usize) -> &[f64] {
        &self.u[k * self.num_users..(k + 1) * self.num_users]
    }

    pub fn steps(&self) -> usize {
        self.grid.len() - 1
    }

    /// Long-format CSV `t,user,x,u`, values in shortest round-trip form.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "t,user,x,u")?;
        for (k, t) in self.grid.iter().enumerate() {
            for i in 0..self.num_users {
                writeln!(out, "{t},{i},{},{}", self.state(k)[i], self.control(k)[i])?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub state_cost: f64,
    pub control_cost: f64,
    pub terminal_cost: f64,
    pub total: f64,
}

/// Accumulates the left-endpoint cost of a path step by step.
#[derive(Debug, Clone, Copy)]
pub(crate) struct CostAccumulator<'a> {
    problem: &'a ControlProblem,
    dt: f64,
    state: f64,
    control: f64,
}

impl<'a> CostAccumulator<'a> {
    pub(crate) fn new(problem: &'a ControlProblem) -> Self {
        Self {
            problem,
            dt: problem.dt(),
            state: 0.0,
            control: 0.0,
        }
    }

    /// Rectangle contribution of grid interval `k` (state and control at `τ_k`).
    pub(crate) fn interval(&mut self, x: &[f64], u: &[f64]) {
        if self.problem.running_state_cost {
            self.state += self.problem.state_cost(x) * self.dt;
        }
        self.control += 0.5 * self.problem.rho * u.iter().map(|v| v * v).sum::<f64>() * self.dt;
    }

    pub(crate) fn finish(self, x_terminal: &[f64]) -> CostBreakdown {
        let terminal = self.problem.state_cost(x_terminal);
        CostBreakdown {
            state_cost: self.state,
            control_cost: self.control,
            terminal_cost: terminal,
            total: self.state + self.control + terminal,
        }
    }
}

/// Instantaneous cost `q(x) + (ρ/2)‖u‖²` (the state part only when the running cost is on).
pub fn instantaneous_cost(problem: &ControlProblem, x: &[f64], u: &[f64]) -> f64 {
    let q = if problem.running_state_cost {
        problem.state_cost(x)
    } else {
        0.0
    };
    q + 0.5 * problem.rho * u.iter().map(|v| v * v).sum::<f64>()
}

/// Cost of a trajectory under `problem`.
pub fn evaluate_cost(traj: &Trajectory, problem: &ControlProblem) -> Result<CostBreakdown> {
    let grid = problem.grid();
    check_len("trajectory grid", grid.len(), traj.grid.len())?;
    if grid
        .iter()
        .zip(&traj.grid)
        .any(|(a, b)| (a - b).abs() > 1e-9 * a.abs().max(1.0))
    {
        return Err(invalid("trajectory grid differs from the problem grid"));
    }
    if problem.kind == ObjectiveKind::Lsog {
        check_len("target", traj.num_users, problem.target.len())?;
    }
    let mut acc = CostAccumulator::new(problem);
    for k in 0..traj.steps() {
        acc.interval(traj.state(k), traj.control(k));
    }
    Ok(acc.finish(traj.state(traj.steps())))
}

fn check_uniform(grid: &[f64]) -> Result<f64> {
    if grid.len() < 2 {
        return Err(invalid("grid needs at least two points"));
    }
    let dt = (grid[grid.len() - 1] - grid[0]) / (grid.len() - 1) as f64;
    if !(dt > 0.0)
        || grid
            .windows(2)
            .any(|w| ((w[1] - w[0]) - dt).abs() > 1e-9 * dt.max(1.0))
    {
        return Err(invalid("grid must be uniform and increasing"));
    }
    Ok(dt)
}

/// Pre-drawn randomness of one run: the event log with its per-interval
/// counts and the Wiener increments. Sharing a scenario across policies is
/// what common random numbers means here.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub seed: u64,
    pub events: EventLog,
    num_users: usize,
    counts: Vec<u32>,
    /// `event_offsets[k]`: index of the first event at or after `τ_k`.
    event_offsets: Vec<usize>,
    /// Wiener increments `Δw`, `noise[k * U + i] ~ N(0, Δt)`.
    noise: Vec<f64>,
    /// Opinion-network change points `(first interval, topology)` of a growing network.
    network: Vec<(usize, NetworkTopology)>,
}

impl Scenario {
    /// Events from thinning of `hawkes` and noise, both from `seed` on separate streams.
    pub fn generate(hawkes: &HawkesParams, grid: &[f64], seed: u64) -> Result<Self> {
        check_uniform(grid)?;
        let events = thinning_simulate(hawkes, (grid[0], grid[grid.len() - 1]), seed)?;
        Ok(Self::with_events(events, grid, hawkes.num_users(), seed))
    }

    /// Given events plus noise drawn from `noise_seed`.
    pub fn with_events(events: EventLog, grid: &[f64], num_users: usize, noise_seed: u64) -> Self {
        let m = grid.len() - 1;
        let dt = (grid[m] - grid[0]) / m as f64;
        let sd = dt.sqrt();
        let mut rng = stream_rng(noise_seed, stream::DIFFUSION);
        let noise = (0..m * num_users)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                z * sd
            })
            .collect();
        let counts = events.counts_on_grid(grid, num_users);
        let event_offsets = grid
            .iter()
            .map(|&t| events.events.partition_point(|e| e.t < t))
            .collect();
        Self {
            seed: noise_seed,
            events,
            num_users,
            counts,
            event_offsets,
            noise,
            network: Vec::new(),
        }
    }

    /// Events, noise and (if the model grows its network) a link realization, all from `seed`.
    pub fn for_model(model: &SimulationModel, grid: &[f64], seed: u64) -> Result<Self> {
        let mut s = Self::generate(&model.hawkes, grid, seed)?;
        if let Some(g) = &model.growth {
            s.network = g.realized_schedule(grid, seed)?;
        }
        Ok(s)
    }

    /// Topology change points of a growing network (empty for a static one).
    pub fn network_changes(&self) -> &[(usize, NetworkTopology)] {
        &self.network
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }

    fn recent(&self, k: usize) -> &[Event] {
        if k == 0 {
            return &[];
        }
        &self.events.events[self.event_offsets[k - 1]..self.event_offsets[k]]
    }

    /// FNV-1a hash of the event log; equal hashes mean identical scenarios for comparison checks.
    pub fn event_hash(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for e in &self.events.events {
            for b in
                e.t.to_bits()
                    .to_le_bytes()
                    .into_iter()
                    .chain((e.user as u64).to_le_bytes())
            {
                h ^= b as u64;
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        }
        h
    }
}

fn run_path(
    params: &OpinionParams,
    policy: &dyn Policy,
    scenario: &Scenario,
    x0: &[f64],
    grid: &[f64],
    mut visit: impl FnMut(usize, &[f64], &[f64]),
) -> Result<()> {
    let u_n = params.num_users();
    check_len("initial state", u_n, x0.len())?;
    check_len("scenario users", u_n, scenario.num_users)?;
    let m = grid.len() - 1;
    let dt = (grid[m] - grid[0]) / m as f64;
    let mut controller = policy.begin_path();
    let mut x = x0.to_vec();
    let mut next = vec![0.0; u_n];
    let mut u = vec![0.0; u_n];
    let mut topology = &params.topology;
    let mut changes = scenario.network.iter().peekable();
    for k in 0..=m {
        while let Some((_, top)) = changes.next_if(|(first, _)| *first <= k) {
            topology = top;
        }
        let ctx = StepContext {
            step: k,
            t: grid[k],
            recent_events: scenario.recent(k),
        };
        u.iter_mut().for_each(|v| *v = 0.0);
        controller.control(&ctx, &x, &mut u)?;
        if u.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: "control",
                step: k,
            });
        }
        visit(k, &x, &u);
        if k == m {
            break;
        }
        let noise = &scenario.noise[k * u_n..(k + 1) * u_n];
        for i in 0..u_n {
            next[i] =
                x[i] + (params.omega2 * (params.b[i] - x[i]) + u[i]) * dt + params.theta * noise[i];
        }
        let counts = &scenario.counts[k * u_n..(k + 1) * u_n];
        for (j, &c) in counts.iter().enumerate() {
            if c == 0 {
                continue;
            }
            let push = params.jump_scale(x[j]) * c as f64;
            for &(i, w) in topology.column(j) {
                next[i] += w * push;
            }
        }
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: "opinion state",
                step: k + 1,
            });
        }
        std::mem::swap(&mut x, &mut next);
    }
    Ok(())
}

/// Simulates the controlled opinion SDE against a pre-drawn scenario.
pub fn simulate_scenario(
    params: &OpinionParams,
    policy: &dyn Policy,
    scenario: &Scenario,
    x0: &[f64],
    grid: &[f64],
) -> Result<Trajectory> {
    check_uniform(grid)?;
    let n = params.num_users();
    let mut xs = Vec::with_capacity(grid.len() * n);
    let mut us = Vec::with_capacity(grid.len() * n);
    run_path(params, policy, scenario, x0, grid, |_, x, u| {
        xs.extend_from_slice(x);
        us.extend_from_slice(u);
    })?;
    Ok(Trajectory {
        grid: grid.to_vec(),
        num_users: n,
        x: xs,
        u: us,
        events: scenario.events.clone(),
        noise_seed: scenario.seed,
    })
}

/// Cost of one scenario without materializing the trajectory.
pub fn scenario_cost(
    params: &OpinionParams,
    policy: &dyn Policy,
    scenario: &Scenario,
    x0: &[f64],
    problem: &ControlProblem,
) -> Result<CostBreakdown> {
    let grid = problem.grid();
    let m = problem.steps;
    let mut acc = CostAccumulator::new(problem);
    let mut terminal = Vec::new();
    run_path(params, policy, scenario, x0, &grid, |k, x, u| {
        if k < m {
            acc.interval(x, u);
        } else {
            terminal = x.to_vec();
        }
    })?;
    Ok(acc.finish(&terminal))
}

/// Euler forward simulation given an event log; diffusion noise from `noise_seed`.
pub fn euler_simulate(
    params: &OpinionParams,
    policy: &dyn Policy,
    events: &EventLog,
    x0: &[f64],
    grid: &[f64],
    noise_seed: u64,
) -> Result<Trajectory> {
    check_uniform(grid)?;
    events.validate(params.num_users())?;
    let scenario = Scenario::with_events(events.clone(), grid, params.num_users(), noise_seed);
    simulate_scenario(params, policy, &scenario, x0, grid)
}

/// Opinion dynamics driven by freshly simulated Hawkes events; one seed
/// feeds both the event and the diffusion stream.
pub fn cosimulate(
    params: &OpinionParams,
    hawkes: &HawkesParams,
    policy: &dyn Policy,
    x0: &[f64],
    grid: &[f64],
    seed: u64,
) -> Result<Trajectory> {
    let scenario = Scenario::generate(hawkes, grid, seed)?;
    simulate_scenario(params, policy, &scenario, x0, grid)
}

/// Controlled Hawkes intensity `dλ = (ω1(η − λ) + u) dt + Σ_j β_ij dN_j`.
///
/// On each grid interval events arrive with the intensity frozen at its
/// (clamped) value at `τ_k`; their jumps enter at `τ_{k+1}` and `λ` is clamped
/// at zero after every step.
pub fn simulate_controlled_intensity(
    hawkes: &HawkesParams,
    policy: &dyn Policy,
    grid: &[f64],
    seed: u64,
) -> Result<Trajectory> {
    let dt = check_uniform(grid)?;
    let n = hawkes.num_users();
    let m = grid.len() - 1;
    let mut rng = stream_rng(seed, stream::EVENTS);
    let mut controller = policy.begin_path();
    let mut lam = hawkes.eta.clone();
    let mut u = vec![0.0; n];
    let mut counts = vec![0u32; n];
    let mut events: Vec<Event> = Vec::new();
    let mut xs = Vec::with_capacity(grid.len() * n);
    let mut us = Vec::with_capacity(grid.len() * n);
    let mut recent_start = 0;
    for k in 0..=m {
        let ctx = StepContext {
            step: k,
            t: grid[k],
            recent_events: &events[recent_start..],
        };
        u.iter_mut().for_each(|v| *v = 0.0);
        controller.control(&ctx, &lam, &mut u)?;
        xs.extend_from_slice(&lam);
        us.extend_from_slice(&u);
        if k == m {
            break;
        }
        recent_start = events.len();
        counts.iter_mut().for_each(|c| *c = 0);
        let total: f64 = lam.iter().sum();
        if total > 0.0 {
            let exp = Exp::new(total).expect("positive rate");
            let mut t = grid[k];
            loop {
                t += exp.sample(&mut rng);
                if t >= grid[k + 1] {
                    break;
                }
                let user = pick_user(&lam, total, rng.random::<f64>());
                counts[user] += 1;
                events.push(Event { t, user });
            }
        }
        let mut next: Vec<f64> = (0..n)
            .map(|i| lam[i] + (hawkes.omega1 * (hawkes.eta[i] - lam[i]) + u[i]) * dt)
            .collect();
        for (j, &c) in counts.iter().enumerate() {
            if c > 0 {
                for &(i, w) in hawkes.topology.column(j) {
                    next[i] += w * c as f64;
                }
            }
        }
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: "controlled intensity",
                step: k + 1,
            });
        }
        lam = next.into_iter().map(|v| v.max(0.0)).collect();
        if events.len() > 10_000_000 {
            return Err(Error::Explosion {
                max_events: 10_000_000,
                t: grid[k + 1],
                spectral_radius: hawkes.branching_ratio(),
            });
        }
    }
    Ok(Trajectory {
        grid: grid.to_vec(),
        num_users: n,
        x: xs,
        u: us,
        events: EventLog {
            events,
            t0: grid[0],
            t_end: grid[m],
            seed,
        },
        noise_seed: seed,
    })
}

/// Everything needed to simulate the opinion dynamics forward.
#[derive(Debug, Clone)]
pub struct SimulationModel {
    pub opinion: OpinionParams,
    pub hawkes: HawkesParams,
    pub x0: Vec<f64>,
    /// Opinion-network growth; event excitation keeps the static Hawkes network.
    pub growth: Option<NetworkGrowth>,
}

impl SimulationModel {
    pub fn new(opinion: OpinionParams, hawkes: HawkesParams, x0: Vec<f64>) -> Result<Self> {
        check_len("initial state", opinion.num_users(), x0.len())?;
        check_len("Hawkes users", opinion.num_users(), hawkes.num_users())?;
        if x0.iter().any(|v| !v.is_finite()) {
            return Err(invalid("initial state must be finite"));
        }
        Ok(Self {
            opinion,
            hawkes,
            x0,
            growth: None,
        })
    }

    pub fn with_growth(mut self, growth: NetworkGrowth) -> Result<Self> {
        check_len("growth users", self.num_users(), growth.model.num_users())?;
        self.growth = Some(growth);
        Ok(self)
    }

    pub fn num_users(&self) -> usize {
        self.opinion.num_users()
    }
}

/// Aggregate of per-run costs.
#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloCost {
    pub mean: f64,
    /// Unbiased sample variance; `0.0` when undefined (see `variance_defined`).
    pub variance: f64,
    pub variance_defined: bool,
    pub runs: Vec<CostBreakdown>,
}

impl MonteCarloCost {
    pub fn from_runs(runs: Vec<CostBreakdown>) -> Self {
        let totals: Vec<f64> = runs.iter().map(|c| c.total).collect();
        let (mean, var) = mean_variance(&totals);
        Self {
            mean,
            variance: var.unwrap_or(0.0),
            variance_defined: var.is_some(),
            runs,
        }
    }

    pub fn standard_error(&self) -> f64 {
        (self.variance / self.runs.len() as f64).sqrt()
    }

    /// `{state_cost, control_cost, terminal_cost, total, n_runs, mean, variance}`;
    /// the breakdown fields are run averages.
    pub fn to_json(&self) -> String {
        let n = self.runs.len().max(1) as f64;
        let avg = |f: fn(&CostBreakdown) -> f64| self.runs.iter().map(f).sum::<f64>() / n;
        serde_json::json!({
            "state_cost": avg(|c| c.state_cost),
            "control_cost": avg(|c| c.control_cost),
            "terminal_cost": avg(|c| c.terminal_cost),
            "total": avg(|c| c.total),
            "n_runs": self.runs.len(),
            "mean": self.mean,
            "variance": if self.variance_defined { serde_json::json!(self.variance) } else { serde_json::Value::Null },
        })
        .to_string()
    }
}

/// A block of scenarios with seeds derived from one parent seed.
#[derive(Debug, Clone)]
pub struct ScenarioSet {
    pub scenarios: Vec<Scenario>,
}

impl ScenarioSet {
    pub fn generate(
        model: &SimulationModel,
        grid: &[f64],
        n_runs: usize,
        seed: u64,
    ) -> Result<Self> {
        let scenarios = (0..n_runs)
            .into_par_iter()
            .map(|r| {
                Scenario::for_model(model, grid, derive_seed(seed, r as u64))
                    .map_err(|e| e.in_run(r))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { scenarios })
    }

    pub fn len(&self) -> usize {
        self.scenarios.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scenarios.is_empty()
    }

    /// Per-run costs of `policy`, evaluated concurrently; results keep run order.
    pub fn evaluate(
        &self,
        policy: &dyn Policy,
        problem: &ControlProblem,
        model: &SimulationModel,
    ) -> Result<MonteCarloCost> {
        let runs = self
            .scenarios
            .par_iter()
            .enumerate()
            .map(|(r, s)| {
                scenario_cost(&model.opinion, policy, s, &model.x0, problem)
                    .map_err(|e| e.in_run(r))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(MonteCarloCost::from_runs(runs))
    }

    /// Sequential mean total cost; used inside already-parallel optimizers.
    pub fn mean_cost(
        &self,
        policy: &dyn Policy,
        problem: &ControlProblem,
        model: &SimulationModel,
    ) -> Result<f64> {
        let mut sum = 0.0;
        for (r, s) in self.scenarios.iter().enumerate() {
            sum += scenario_cost(&model.opinion, policy, s, &model.x0, problem)
                .map_err(|e| e.in_run(r))?
                .total;
        }
        Ok(sum / self.scenarios.len() as f64)
    }

    pub fn trajectories(
        &self,
        policy: &dyn Policy,
        problem: &ControlProblem,
        model: &SimulationModel,
    ) -> Result<Vec<Trajectory>> {
        let grid = problem.grid();
        self.scenarios
            .par_iter()
            .enumerate()
            .map(|(r, s)| {
                simulate_scenario(&model.opinion, policy, s, &model.x0, &grid)
                    .map_err(|e| e.in_run(r))
            })
            .collect()
    }
}

/// `n_runs` independent cosimulations with derived seeds, costed under `problem`.
pub fn monte_carlo_cost(
    policy: &dyn Policy,
    problem: &ControlProblem,
    model: &SimulationModel,
    n_runs: usize,
    seed: u64,
) -> Result<MonteCarloCost> {
    if n_runs == 0 {
        return Err(invalid("n_runs must be at least 1"));
    }
    problem.validate(Some(model.num_users()))?;
    let set = ScenarioSet::generate(model, &problem.grid(), n_runs, seed)?;
    set.evaluate(policy, problem, model)
}
