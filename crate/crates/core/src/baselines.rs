//! Comparison policies: cross-entropy and finite-difference search over
//! open-loop piecewise-constant controls, a threshold-triggered greedy rule,
//! and constant controls.
//!
//! The optimizers are generic over an objective evaluated on a per-iteration
//! block of common random numbers; the `*_optimize` wrappers plug in the
//! Monte-Carlo cost of a [`SimulationModel`].

use std::io::Write;

use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, invalid, Error, Result};
use crate::hjb::locate;
use crate::network::{uniform_grid, ControlProblem, ObjectiveKind};
use crate::rng::{derive_seed, stream, stream_rng};
use crate::sdesim::{
    PathController, Policy, ScenarioSet, SimulationModel, StepContext, Trajectory,
};

/// Open-loop control holding one vector per time segment.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseConstantPolicy {
    /// Segment boundaries, `segments + 1` increasing timestamps.
    pub grid: Vec<f64>,
    pub num_users: usize,
    /// `u_table[k * num_users + i]`.
    pub u_table: Vec<f64>,
}

impl PiecewiseConstantPolicy {
    pub fn new(grid: Vec<f64>, num_users: usize, u_table: Vec<f64>) -> Result<Self> {
        if grid.len() < 2 || grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(invalid(
                "segment grid must have at least two increasing points",
            ));
        }
        check_len("control table", (grid.len() - 1) * num_users, u_table.len())?;
        if u_table.iter().any(|v| !v.is_finite()) {
            return Err(invalid("control table entries must be finite"));
        }
        Ok(Self {
            grid,
            num_users,
            u_table,
        })
    }

    /// `segments` equal segments of `[t0, t_end]`, all entries `value`.
    pub fn uniform(horizon: (f64, f64), segments: usize, num_users: usize, value: f64) -> Self {
        Self {
            grid: uniform_grid(horizon.0, horizon.1, segments),
            num_users,
            u_table: vec![value; segments * num_users],
        }
    }

    pub fn segments(&self) -> usize {
        self.grid.len() - 1
    }

    pub fn segment(&self, k: usize) -> &[f64] {
        &self.u_table[k * self.num_users..(k + 1) * self.num_users]
    }
}

impl Policy for PiecewiseConstantPolicy {
    fn evaluate(&self, _x: &[f64], t: f64, u: &mut [f64]) {
        let (k, _) = locate(&self.grid, t);
        u.copy_from_slice(self.segment(k.min(self.segments() - 1)));
    }
}

/// `u(x, t) = u0`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstantPolicy {
    pub u0: Vec<f64>,
}

pub fn constant_policy(u0: Vec<f64>) -> Result<ConstantPolicy> {
    if u0.iter().any(|v| !v.is_finite()) {
        return Err(invalid("constant control must be finite"));
    }
    Ok(ConstantPolicy { u0 })
}

impl Policy for ConstantPolicy {
    fn evaluate(&self, _x: &[f64], _t: f64, u: &mut [f64]) {
        u.copy_from_slice(&self.u0);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    pub iter: usize,
    /// CE: mean elite cost; FD: cost at the current iterate.
    pub mean_cost: f64,
    /// Best single cost seen so far.
    pub best_cost: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxIters,
    Converged,
    /// CE sampling distribution collapsed below `1e-12`.
    Collapsed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerRun {
    pub params: Vec<f64>,
    pub history: Vec<HistoryRow>,
    pub stop: StopReason,
}

/// CSV `iter,mean_cost,best_cost`.
pub fn write_history_csv<W: Write>(history: &[HistoryRow], mut out: W) -> Result<()> {
    writeln!(out, "iter,mean_cost,best_cost")?;
    for r in history {
        writeln!(out, "{},{},{}", r.iter, r.mean_cost, r.best_cost)?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CEConfig {
    pub population_size: usize,
    pub elite_fraction: f64,
    pub init_mean: f64,
    pub init_stddev: f64,
    pub max_iters: usize,
    pub rel_tol: f64,
    /// Weight of the elite spread in the stddev update
    /// `σ ← s σ_elite + (1 − s) σ`; `1` is the plain refit.
    pub stddev_smoothing: f64,
    /// Open-loop segments; `0` means one per problem grid interval.
    pub segments: usize,
    /// Monte-Carlo runs per iteration block.
    pub mc_runs: usize,
}

impl Default for CEConfig {
    fn default() -> Self {
        Self {
            population_size: 100,
            elite_fraction: 0.1,
            init_mean: 0.0,
            init_stddev: 1.0,
            max_iters: 50,
            rel_tol: 1e-3,
            stddev_smoothing: 0.5,
            segments: 0,
            mc_runs: 5,
        }
    }
}

impl CEConfig {
    fn elites(&self) -> usize {
        (self.elite_fraction * self.population_size as f64).floor() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.elite_fraction > 0.0 && self.elite_fraction <= 1.0) {
            return Err(invalid("elite_fraction must lie in (0, 1]"));
        }
        if (self.population_size as f64) < 2.0 / self.elite_fraction || self.elites() < 2 {
            return Err(invalid(
                "population_size must be at least 2 / elite_fraction",
            ));
        }
        if !(self.init_stddev > 0.0) || !self.init_mean.is_finite() {
            return Err(invalid("init_stddev must be positive and init_mean finite"));
        }
        if !(self.rel_tol >= 0.0) || self.mc_runs == 0 {
            return Err(invalid("rel_tol must be nonnegative and mc_runs positive"));
        }
        if !(self.stddev_smoothing > 0.0 && self.stddev_smoothing <= 1.0) {
            return Err(invalid("stddev_smoothing must lie in (0, 1]"));
        }
        Ok(())
    }
}

/// Diagonal-Gaussian cross-entropy minimization.
///
/// `block(iter)` prepares the common random numbers of an iteration and
/// `objective(params, &block)` scores one candidate; candidates of an
/// iteration are scored concurrently.
pub fn cross_entropy_minimize<B, G, F>(
    dim: usize,
    config: &CEConfig,
    seed: u64,
    mut block: G,
    objective: F,
) -> Result<OptimizerRun>
where
    B: Sync,
    G: FnMut(usize) -> Result<B>,
    F: Fn(&[f64], &B) -> Result<f64> + Sync,
{
    config.validate()?;
    let mut mean = vec![config.init_mean; dim];
    let mut sd = vec![config.init_stddev; dim];
    let n_elite = config.elites();
    let mut history = Vec::new();
    let mut best = f64::INFINITY;
    let mut prev: Option<f64> = None;
    let mut stop = StopReason::MaxIters;
    for iter in 0..config.max_iters {
        let b = block(iter)?;
        let mut rng = stream_rng(derive_seed(seed, iter as u64), stream::PARAMETERS);
        let candidates: Vec<Vec<f64>> = (0..config.population_size)
            .map(|_| {
                (0..dim)
                    .map(|d| {
                        let z: f64 = Normal::new(0.0, 1.0).expect("unit normal").sample(&mut rng);
                        mean[d] + sd[d] * z
                    })
                    .collect()
            })
            .collect();
        let costs = candidates
            .par_iter()
            .map(|c| objective(c, &b))
            .collect::<Result<Vec<f64>>>()?;
        let mut order: Vec<usize> = (0..costs.len()).collect();
        order.sort_by(|&a, &b| costs[a].total_cmp(&costs[b]).then(a.cmp(&b)));
        let elite = &order[..n_elite];
        let elite_mean = elite.iter().map(|&i| costs[i]).sum::<f64>() / n_elite as f64;
        best = best.min(costs[order[0]]);
        for d in 0..dim {
            let m = elite.iter().map(|&i| candidates[i][d]).sum::<f64>() / n_elite as f64;
            let v = elite
                .iter()
                .map(|&i| (candidates[i][d] - m).powi(2))
                .sum::<f64>()
                / n_elite as f64;
            mean[d] = m;
            sd[d] = config.stddev_smoothing * v.sqrt() + (1.0 - config.stddev_smoothing) * sd[d];
        }
        history.push(HistoryRow {
            iter,
            mean_cost: elite_mean,
            best_cost: best,
        });
        if sd.iter().all(|&s| s < 1e-12) {
            stop = StopReason::Collapsed;
            break;
        }
        if let Some(p) = prev {
            if ((elite_mean - p) / p.abs().max(f64::MIN_POSITIVE)).abs() < config.rel_tol {
                stop = StopReason::Converged;
                break;
            }
        }
        prev = Some(elite_mean);
    }
    Ok(OptimizerRun {
        params: mean,
        history,
        stop,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FDConfig {
    pub epsilon: f64,
    pub step_size: f64,
    pub max_iters: usize,
    pub rel_tol: f64,
    pub init: f64,
    pub segments: usize,
    pub mc_runs: usize,
}

impl Default for FDConfig {
    fn default() -> Self {
        Self {
            epsilon: 1e-2,
            step_size: 0.05,
            max_iters: 50,
            rel_tol: 1e-3,
            init: 0.0,
            segments: 0,
            mc_runs: 5,
        }
    }
}

impl FDConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(invalid("epsilon must be positive"));
        }
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(invalid("step_size must be positive"));
        }
        if !(self.rel_tol >= 0.0) || self.mc_runs == 0 || !self.init.is_finite() {
            return Err(invalid(
                "rel_tol must be nonnegative, mc_runs positive, init finite",
            ));
        }
        Ok(())
    }
}

/// Central-difference gradient, one coordinate pair per entry, evaluated concurrently.
pub fn fd_gradient<F>(params: &[f64], epsilon: f64, f: F) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    if !(epsilon > 0.0) {
        return Err(invalid("epsilon must be positive"));
    }
    (0..params.len())
        .into_par_iter()
        .map(|d| {
            let mut p = params.to_vec();
            p[d] = params[d] + epsilon;
            let up = f(&p)?;
            p[d] = params[d] - epsilon;
            let down = f(&p)?;
            let g = (up - down) / (2.0 * epsilon);
            if g.is_finite() {
                Ok(g)
            } else {
                Err(Error::NonFinite {
                    what: "finite-difference gradient entry",
                    step: d,
                })
            }
        })
        .collect()
}

/// Fixed-step gradient descent with central-difference gradients.
pub fn finite_difference_minimize<B, G, F>(
    init: Vec<f64>,
    config: &FDConfig,
    mut block: G,
    objective: F,
) -> Result<OptimizerRun>
where
    B: Sync,
    G: FnMut(usize) -> Result<B>,
    F: Fn(&[f64], &B) -> Result<f64> + Sync,
{
    config.validate()?;
    let mut params = init;
    let mut history = Vec::new();
    let mut best = f64::INFINITY;
    let mut prev: Option<f64> = None;
    let mut stop = StopReason::MaxIters;
    for iter in 0..config.max_iters {
        let b = block(iter)?;
        let cost = objective(&params, &b)?;
        best = best.min(cost);
        history.push(HistoryRow {
            iter,
            mean_cost: cost,
            best_cost: best,
        });
        if let Some(p) = prev {
            if ((cost - p) / p.abs().max(f64::MIN_POSITIVE)).abs() < config.rel_tol {
                stop = StopReason::Converged;
                break;
            }
        }
        prev = Some(cost);
        let grad = fd_gradient(&params, config.epsilon, |p| objective(p, &b))?;
        for (p, g) in params.iter_mut().zip(&grad) {
            *p -= config.step_size * g;
        }
    }
    Ok(OptimizerRun {
        params,
        history,
        stop,
    })
}

/// Result of training an open-loop baseline against a model.
#[derive(Debug, Clone)]
pub struct TrainedPolicy {
    pub policy: PiecewiseConstantPolicy,
    pub history: Vec<HistoryRow>,
    pub stop: StopReason,
}

fn segments_for(problem: &ControlProblem, requested: usize) -> usize {
    if requested == 0 {
        problem.steps
    } else {
        requested
    }
}

fn table_policy(
    problem: &ControlProblem,
    segments: usize,
    n: usize,
    params: &[f64],
) -> PiecewiseConstantPolicy {
    PiecewiseConstantPolicy {
        grid: uniform_grid(problem.t0, problem.t_end, segments),
        num_users: n,
        u_table: params.to_vec(),
    }
}

/// Cross-entropy search over `segments × U` open-loop tables; iteration `i`
/// scores every candidate on the scenario block seeded by `derive_seed(seed, i)`.
pub fn cross_entropy_optimize(
    problem: &ControlProblem,
    model: &SimulationModel,
    config: &CEConfig,
    seed: u64,
) -> Result<TrainedPolicy> {
    problem.validate(Some(model.num_users()))?;
    let n = model.num_users();
    let segments = segments_for(problem, config.segments);
    let grid = problem.grid();
    let run = cross_entropy_minimize(
        segments * n,
        config,
        seed,
        |iter| ScenarioSet::generate(model, &grid, config.mc_runs, derive_seed(seed, iter as u64)),
        |params, set| set.mean_cost(&table_policy(problem, segments, n, params), problem, model),
    )?;
    Ok(TrainedPolicy {
        policy: table_policy(problem, segments, n, &run.params),
        history: run.history,
        stop: run.stop,
    })
}

/// Finite-difference descent over `segments × U` open-loop tables with common random numbers per iteration.
pub fn finite_difference_optimize(
    problem: &ControlProblem,
    model: &SimulationModel,
    config: &FDConfig,
    seed: u64,
) -> Result<TrainedPolicy> {
    problem.validate(Some(model.num_users()))?;
    let n = model.num_users();
    let segments = segments_for(problem, config.segments);
    let grid = problem.grid();
    let run = finite_difference_minimize(
        vec![config.init; segments * n],
        config,
        |iter| ScenarioSet::generate(model, &grid, config.mc_runs, derive_seed(seed, iter as u64)),
        |params, set| set.mean_cost(&table_policy(problem, segments, n, params), problem, model),
    )?;
    Ok(TrainedPolicy {
        policy: table_policy(problem, segments, n, &run.params),
        history: run.history,
        stop: run.stop,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GreedyConfig {
    /// Trigger multiplier on the reference cost.
    pub k: f64,
    pub n_checkpoints: usize,
    /// Pulse magnitude `c`.
    pub pulse: f64,
}

impl Default for GreedyConfig {
    fn default() -> Self {
        Self {
            k: 1.0,
            n_checkpoints: 10,
            pulse: 1.0,
        }
    }
}

impl GreedyConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.k >= 1.0) || self.n_checkpoints == 0 || !(self.pulse.is_finite()) {
            return Err(invalid(
                "greedy needs k >= 1, at least one checkpoint and a finite pulse",
            ));
        }
        Ok(())
    }
}

/// Threshold rule: at each checkpoint, if `q(x) > k · reference`, push with
/// `c (a − x)/‖a − x‖` (least-square) or `c·1` (influence) until the next
/// checkpoint; otherwise stay idle.
#[derive(Debug, Clone)]
pub struct GreedyPolicy {
    pub problem: ControlProblem,
    pub config: GreedyConfig,
    /// Checkpoint times `t0 + c (T − t0)/n`, `c = 0..n`.
    pub checkpoints: Vec<f64>,
    pub reference: Vec<f64>,
}

pub fn greedy_policy(
    problem: &ControlProblem,
    reference: Vec<f64>,
    config: GreedyConfig,
) -> Result<GreedyPolicy> {
    config.validate()?;
    problem.validate(None)?;
    check_len("reference cost path", config.n_checkpoints, reference.len())?;
    if reference.iter().any(|v| !v.is_finite()) {
        return Err(invalid("reference costs must be finite"));
    }
    let mut checkpoints = uniform_grid(problem.t0, problem.t_end, config.n_checkpoints);
    checkpoints.pop();
    Ok(GreedyPolicy {
        problem: problem.clone(),
        config,
        checkpoints,
        reference,
    })
}

impl GreedyPolicy {
    fn decide(&self, c: usize, x: &[f64], u: &mut [f64]) {
        u.iter_mut().for_each(|v| *v = 0.0);
        if self.problem.state_cost(x) <= self.config.k * self.reference[c] {
            return;
        }
        match self.problem.kind {
            ObjectiveKind::Lsog => {
                let norm = x
                    .iter()
                    .zip(&self.problem.target)
                    .map(|(x, a)| (a - x) * (a - x))
                    .sum::<f64>()
                    .sqrt();
                if norm > 0.0 {
                    for ((v, x), a) in u.iter_mut().zip(x).zip(&self.problem.target) {
                        *v = self.config.pulse * (a - x) / norm;
                    }
                }
            }
            ObjectiveKind::Oim => u.iter_mut().for_each(|v| *v = self.config.pulse),
        }
    }

    fn checkpoint_of(&self, t: f64) -> usize {
        self.checkpoints.partition_point(|&c| c <= t + 1e-12).max(1) - 1
    }
}

impl Policy for GreedyPolicy {
    /// Memoryless reading: the rule applied to the current state.
    fn evaluate(&self, x: &[f64], t: f64, u: &mut [f64]) {
        self.decide(self.checkpoint_of(t), x, u);
    }

    fn begin_path(&self) -> Box<dyn PathController + '_> {
        Box::new(GreedyController {
            policy: self,
            current: None,
            held: Vec::new(),
        })
    }
}

struct GreedyController<'a> {
    policy: &'a GreedyPolicy,
    current: Option<usize>,
    held: Vec<f64>,
}

impl PathController for GreedyController<'_> {
    fn control(&mut self, ctx: &StepContext<'_>, x: &[f64], u: &mut [f64]) -> Result<()> {
        let c = self.policy.checkpoint_of(ctx.t);
        if self.current != Some(c) {
            self.held.resize(x.len(), 0.0);
            self.policy.decide(c, x, &mut self.held);
            self.current = Some(c);
        }
        u.copy_from_slice(&self.held);
        Ok(())
    }
}

/// Mean instantaneous state cost of `trajectories` at each greedy checkpoint
/// (value at the first grid point at or after the checkpoint).
pub fn reference_cost_path(
    trajectories: &[Trajectory],
    problem: &ControlProblem,
    n_checkpoints: usize,
) -> Result<Vec<f64>> {
    if trajectories.is_empty() {
        return Err(invalid("reference needs at least one trajectory"));
    }
    let mut checkpoints = uniform_grid(problem.t0, problem.t_end, n_checkpoints);
    checkpoints.pop();
    Ok(checkpoints
        .iter()
        .map(|&c| {
            trajectories
                .iter()
                .map(|tr| {
                    let k = tr.grid.partition_point(|&g| g < c - 1e-12).min(tr.steps());
                    problem.state_cost(tr.state(k))
                })
                .sum::<f64>()
                / trajectories.len() as f64
        })
        .collect())
}

/// Best greedy configuration over `k ∈ ks`, `n ∈ ns` by mean cost on `train`.
pub fn greedy_sweep(
    problem: &ControlProblem,
    model: &SimulationModel,
    reference_trajectories: &[Trajectory],
    pulse: f64,
    ks: &[f64],
    ns: &[usize],
    train: &ScenarioSet,
) -> Result<(GreedyPolicy, f64)> {
    let mut best: Option<(GreedyPolicy, f64)> = None;
    for &n in ns {
        let reference = reference_cost_path(reference_trajectories, problem, n)?;
        for &k in ks {
            let pol = greedy_policy(
                problem,
                reference.clone(),
                GreedyConfig {
                    k,
                    n_checkpoints: n,
                    pulse,
                },
            )?;
            let cost = train.evaluate(&pol, problem, model)?.mean;
            if best.as_ref().is_none_or(|(_, c)| cost < *c) {
                best = Some((pol, cost));
            }
        }
    }
    best.ok_or_else(|| invalid("greedy sweep needs at least one (k, n) pair"))
}

/// Best scalar level `u·1` among `levels` by mean cost on `train`.
pub fn constant_grid_search(
    problem: &ControlProblem,
    model: &SimulationModel,
    levels: &[f64],
    train: &ScenarioSet,
) -> Result<(ConstantPolicy, f64)> {
    let n = model.num_users();
    let costs = levels
        .par_iter()
        .map(|&l| train.mean_cost(&ConstantPolicy { u0: vec![l; n] }, problem, model))
        .collect::<Result<Vec<f64>>>()?;
    let (i, c) = costs
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .ok_or_else(|| invalid("constant search needs at least one level"))?;
    Ok((constant_policy(vec![levels[i]; n])?, *c))
}

/// `count` equally spaced levels on `[lo, hi]`.
pub fn levels(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    uniform_grid(lo, hi, count - 1)
}
