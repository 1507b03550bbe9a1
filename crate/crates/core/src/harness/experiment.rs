use std::sync::Arc;
use std::time::Instant;

use rand::Rng;
use serde_json::json;

use crate::baselines::{
    constant_grid_search, constant_policy, cross_entropy_optimize, finite_difference_optimize,
    greedy_sweep, levels, HistoryRow,
};
use crate::dynnet::{adjacency_schedule, node_birth_to_links, LinkCreationModel, NetworkGrowth};
use crate::error::Result;
use crate::hjb::{solve_on, FeedbackPolicy, IntensityPath, LamMode, NetworkSchedule, ReplanPolicy};
use crate::network::{random_topology, ControlProblem, HawkesParams, ObjectiveKind, OpinionParams};
use crate::rng::{derive_seed, stream, stream_rng};
use crate::sdesim::{
    evaluate_cost, instantaneous_cost, MonteCarloCost, Policy, ScenarioSet, SimulationModel,
    Trajectory,
};
use crate::stats::mean_variance;

use super::config::{ExperimentConfig, MethodConfig};
use super::report::{ComparisonReport, MethodReport};

/// Seeds of the pipeline stages, all derived from the master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StageSeeds {
    pub topology: u64,
    pub parameters: u64,
    pub evaluation: u64,
    pub training: u64,
    pub ce: u64,
    pub fd: u64,
}

impl StageSeeds {
    pub fn from_master(seed: u64) -> Self {
        Self {
            topology: derive_seed(seed, 0),
            parameters: derive_seed(seed, 1),
            evaluation: derive_seed(seed, 2),
            training: derive_seed(seed, 3),
            ce: derive_seed(seed, 4),
            fd: derive_seed(seed, 5),
        }
    }
}

/// Model, problem and seeds of an experiment, before any method runs.
#[derive(Debug, Clone)]
pub struct ExperimentSetup {
    pub model: SimulationModel,
    pub problem: ControlProblem,
    /// Backward-solve network: the static topology or the expected adjacency of a growing one.
    pub schedule: NetworkSchedule,
    /// Per-user control start (node births).
    pub active_from: Option<Vec<f64>>,
    pub seeds: StageSeeds,
}

impl ExperimentSetup {
    pub fn build(config: &ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let seeds = StageSeeds::from_master(config.seed);
        let m = &config.model;
        let n = m.num_users;
        let topology = random_topology(n, m.sparsity, m.weight_range, seeds.topology)?;
        let mut rng = stream_rng(seeds.parameters, stream::PARAMETERS);
        let (lo, hi) = m.b_range;
        let b: Vec<f64> = (0..n)
            .map(|_| {
                if hi > lo {
                    rng.random_range(lo..hi)
                } else {
                    lo
                }
            })
            .collect();
        let hawkes = HawkesParams::new(vec![m.eta; n], topology.clone(), m.omega1)?;
        let opinion = OpinionParams::new(b, topology.clone(), m.omega2, m.theta, m.h_mode)?;
        let mut model = SimulationModel::new(opinion, hawkes, vec![m.x0; n])?;

        let p = &config.problem;
        let problem = match p.kind {
            ObjectiveKind::Lsog => {
                ControlProblem::lsog(vec![p.target; n], p.rho, p.horizon, p.steps)?
            }
            ObjectiveKind::Oim => ControlProblem::oim(p.rho, p.horizon, p.steps)?,
        }
        .with_running_cost(p.running_cost);
        problem.validate(Some(n))?;

        let (schedule, active_from) = match &config.dynamic {
            None => (NetworkSchedule::Static(topology), None),
            Some(d) => {
                let mapping = node_birth_to_links(&d.births, &topology, p.horizon)?;
                let mut link_model = LinkCreationModel::new(
                    vec![d.gamma; n],
                    topology,
                    mapping.skeleton.candidates,
                )?;
                if let Some(w) = d.nominal_weight {
                    link_model = link_model.with_nominal_weight(w)?;
                }
                let growth = NetworkGrowth::new(link_model, mapping.links)?;
                let schedule =
                    adjacency_schedule(&problem.grid(), |t| growth.expected_adjacency(t))?;
                model = model.with_growth(growth)?;
                let masked = (!d.births.is_empty()).then_some(mapping.active_from);
                (schedule, masked)
            }
        };
        Ok(Self {
            model,
            problem,
            schedule,
            active_from,
            seeds,
        })
    }

    /// The HJB policy: mean-field coefficients, or receding-horizon replanning.
    pub fn hjb_policy(&self, config: &ExperimentConfig) -> Result<Arc<dyn Policy>> {
        let grid = self.problem.grid();
        match config.lam_mode {
            LamMode::Mean => {
                let lam = IntensityPath::mean_field(&self.model.hawkes, &grid)?;
                let coeffs = solve_on(
                    &self.problem,
                    &self.model.opinion,
                    &lam,
                    &self.schedule,
                    &config.solver,
                )?;
                let mut policy = FeedbackPolicy::new(coeffs, self.problem.rho);
                if let Some(times) = &self.active_from {
                    policy = policy.with_activation(times.clone())?;
                }
                Ok(Arc::new(policy))
            }
            LamMode::Replan => Ok(Arc::new(ReplanPolicy::new(
                self.problem.clone(),
                self.model.opinion.clone(),
                self.model.hawkes.clone(),
                config.solver,
            )?)),
        }
    }
}

struct Trained {
    policy: Arc<dyn Policy>,
    details: serde_json::Value,
    history: Option<Vec<HistoryRow>>,
}

fn stage<T>(r: Result<T>, name: &'static str, seed: u64) -> Result<T> {
    r.map_err(|e| e.in_stage(name, seed))
}

/// Builds the model, trains every requested method on runs disjoint from
/// the evaluation runs, and evaluates all of them on one shared scenario set.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ComparisonReport> {
    stage(config.validate(), "validate config", config.seed)?;
    let setup = stage(ExperimentSetup::build(config), "build model", config.seed)?;
    let seeds = setup.seeds;
    let problem = &setup.problem;
    let model = &setup.model;
    let grid = problem.grid();

    let eval = stage(
        ScenarioSet::generate(model, &grid, config.n_runs, seeds.evaluation),
        "draw evaluation runs",
        seeds.evaluation,
    )?;
    let needs_train = config
        .methods
        .iter()
        .any(|m| matches!(m, MethodConfig::Greedy(_) | MethodConfig::Constant(_)));
    let train = if needs_train {
        Some(stage(
            ScenarioSet::generate(model, &grid, config.train_runs, seeds.training),
            "draw training runs",
            seeds.training,
        )?)
    } else {
        None
    };
    let needs_hjb = config
        .methods
        .iter()
        .any(|m| matches!(m, MethodConfig::Hjb | MethodConfig::Greedy(_)));
    let hjb_start = Instant::now();
    let hjb = if needs_hjb {
        Some(stage(setup.hjb_policy(config), "solve hjb", config.seed)?)
    } else {
        None
    };
    let hjb_time = hjb_start.elapsed().as_secs_f64();

    let mut methods = Vec::with_capacity(config.methods.len());
    for method in &config.methods {
        let start = Instant::now();
        let name = method.name();
        let trained = match method {
            MethodConfig::Hjb => Trained {
                policy: Arc::clone(hjb.as_ref().expect("hjb solved")),
                details: json!({ "lam_mode": config.lam_mode, "solver": config.solver }),
                history: None,
            },
            MethodConfig::Ce(c) => {
                let t = stage(
                    cross_entropy_optimize(problem, model, c, seeds.ce),
                    "train ce",
                    seeds.ce,
                )?;
                Trained {
                    details: json!({ "segments": t.policy.segments(), "stop": t.stop, "iterations": t.history.len() }),
                    history: Some(t.history),
                    policy: Arc::new(t.policy),
                }
            }
            MethodConfig::Fd(c) => {
                let t = stage(
                    finite_difference_optimize(problem, model, c, seeds.fd),
                    "train fd",
                    seeds.fd,
                )?;
                Trained {
                    details: json!({ "segments": t.policy.segments(), "stop": t.stop, "iterations": t.history.len() }),
                    history: Some(t.history),
                    policy: Arc::new(t.policy),
                }
            }
            MethodConfig::Greedy(g) => {
                let train = train.as_ref().expect("training runs drawn");
                let reference = stage(
                    train.trajectories(hjb.as_deref().expect("hjb solved"), problem, model),
                    "greedy reference",
                    seeds.training,
                )?;
                let mut best: Option<(crate::baselines::GreedyPolicy, f64)> = None;
                for &pulse in &g.pulses {
                    let (pol, cost) = stage(
                        greedy_sweep(
                            problem,
                            model,
                            &reference,
                            pulse,
                            &g.ks,
                            &g.checkpoints,
                            train,
                        ),
                        "train greedy",
                        seeds.training,
                    )?;
                    if best.as_ref().is_none_or(|(_, c)| cost < *c) {
                        best = Some((pol, cost));
                    }
                }
                let (pol, cost) = best.expect("nonempty pulse list");
                Trained {
                    details: json!({ "k": pol.config.k, "n_checkpoints": pol.config.n_checkpoints, "pulse": pol.config.pulse, "train_cost": cost }),
                    policy: Arc::new(pol),
                    history: None,
                }
            }
            MethodConfig::Constant(c) => {
                let (pol, train_cost) = match c.value {
                    Some(v) => (
                        stage(
                            constant_policy(vec![v; model.num_users()]),
                            "constant",
                            config.seed,
                        )?,
                        None,
                    ),
                    None => {
                        let train = train.as_ref().expect("training runs drawn");
                        let (p, cost) = stage(
                            constant_grid_search(
                                problem,
                                model,
                                &levels(c.lo, c.hi, c.count),
                                train,
                            ),
                            "train constant",
                            seeds.training,
                        )?;
                        (p, Some(cost))
                    }
                };
                Trained {
                    details: json!({ "level": pol.u0.first().copied().unwrap_or(0.0), "train_cost": train_cost }),
                    policy: Arc::new(pol),
                    history: None,
                }
            }
        };
        let trajectories = stage(
            stage(
                eval.trajectories(trained.policy.as_ref(), problem, model),
                name,
                seeds.evaluation,
            ),
            "evaluate",
            seeds.evaluation,
        )?;
        let mut wall = start.elapsed().as_secs_f64();
        if matches!(method, MethodConfig::Hjb) {
            wall += hjb_time;
        }
        methods.push(summarize(name, trajectories, problem, wall, trained)?);
    }
    Ok(ComparisonReport {
        config: config.clone(),
        grid,
        event_hashes: eval.scenarios.iter().map(|s| s.event_hash()).collect(),
        methods,
    })
}

fn summarize(
    name: &str,
    trajectories: Vec<Trajectory>,
    problem: &ControlProblem,
    wall_time: f64,
    t: Trained,
) -> Result<MethodReport> {
    let runs = trajectories
        .iter()
        .map(|tr| evaluate_cost(tr, problem))
        .collect::<Result<Vec<_>>>()?;
    let steps = problem.steps;
    let (inst_mean, inst_std) = (0..=steps)
        .map(|k| {
            let vals: Vec<f64> = trajectories
                .iter()
                .map(|tr| instantaneous_cost(problem, tr.state(k), tr.control(k)))
                .collect();
            let (m, v) = mean_variance(&vals);
            (m, v.unwrap_or(0.0).sqrt())
        })
        .unzip();
    Ok(MethodReport {
        name: name.to_string(),
        cost: MonteCarloCost::from_runs(runs),
        wall_time_s: wall_time,
        instantaneous_mean: inst_mean,
        instantaneous_stddev: inst_std,
        details: t.details,
        history: t.history,
        trajectories,
    })
}
