//! Baselines against the HJB policy on a single deterministic user and on a
//! small noisy network.

use actguide::baselines::{
    constant_grid_search, cross_entropy_optimize, finite_difference_optimize, greedy_policy,
    levels, reference_cost_path, CEConfig, FDConfig, GreedyConfig,
};
use actguide::hjb::{solve, FeedbackPolicy, IntensityPath, SolverConfig};
use actguide::network::{
    random_topology, ControlProblem, HMode, HawkesParams, NetworkTopology, OpinionParams,
};
use actguide::sdesim::{FnPolicy, ScenarioSet, SimulationModel};

fn single_user() -> (ControlProblem, SimulationModel) {
    let problem = ControlProblem::lsog(vec![1.0], 10.0, (0.0, 10.0), 100).unwrap();
    let opinion = OpinionParams::new(
        vec![0.0],
        NetworkTopology::empty(1),
        1.0,
        0.0,
        HMode::Linear,
    )
    .unwrap();
    let hawkes = HawkesParams::new(vec![0.0], NetworkTopology::empty(1), 1.0).unwrap();
    (
        problem,
        SimulationModel::new(opinion, hawkes, vec![-10.0]).unwrap(),
    )
}

fn hjb(problem: &ControlProblem, model: &SimulationModel) -> FeedbackPolicy {
    let lam = IntensityPath::mean_field(&model.hawkes, &problem.grid()).unwrap();
    FeedbackPolicy::new(
        solve(problem, &model.opinion, &lam, &SolverConfig::rk4()).unwrap(),
        problem.rho,
    )
}

#[test]
fn open_loop_optimizers_approach_hjb_on_one_user() {
    let (problem, model) = single_user();
    let set = ScenarioSet::generate(&model, &problem.grid(), 1, 0).unwrap();
    let best = set
        .mean_cost(&hjb(&problem, &model), &problem, &model)
        .unwrap();
    let ce = cross_entropy_optimize(&problem, &model, &CEConfig::default(), 1).unwrap();
    let ce_cost = set.mean_cost(&ce.policy, &problem, &model).unwrap();
    assert!(
        ce_cost >= best - 1e-6 && ce_cost <= 1.05 * best,
        "CE {ce_cost} vs HJB {best}"
    );
    let fd = finite_difference_optimize(
        &problem,
        &model,
        &FDConfig {
            max_iters: 200,
            ..FDConfig::default()
        },
        1,
    )
    .unwrap();
    let fd_cost = set.mean_cost(&fd.policy, &problem, &model).unwrap();
    assert!(
        fd_cost >= best - 1e-6 && fd_cost <= 1.05 * best,
        "FD {fd_cost} vs HJB {best}"
    );
    let rows = &ce.history;
    assert!(rows.windows(2).all(|w| w[1].best_cost <= w[0].best_cost));
}

#[test]
fn greedy_lies_between_uncontrolled_and_hjb() {
    let (_, model) = single_user();
    let problem = ControlProblem::lsog(vec![1.0], 1.0, (0.0, 10.0), 100).unwrap();
    let grid = problem.grid();
    let runs = ScenarioSet::generate(&model, &grid, 10, 4).unwrap();
    let policy = hjb(&problem, &model);
    let hjb_cost = runs.evaluate(&policy, &problem, &model).unwrap().mean;
    let zero = FnPolicy(|_: &[f64], _: f64, u: &mut [f64]| u.fill(0.0));
    let free = runs.evaluate(&zero, &problem, &model).unwrap().mean;
    let reference = reference_cost_path(
        &runs.trajectories(&policy, &problem, &model).unwrap(),
        &problem,
        20,
    )
    .unwrap();
    let greedy = greedy_policy(
        &problem,
        reference,
        GreedyConfig {
            k: 1.0,
            n_checkpoints: 20,
            pulse: 2.0,
        },
    )
    .unwrap();
    let g = runs.evaluate(&greedy, &problem, &model).unwrap().mean;
    assert!(
        hjb_cost < g && g < free,
        "hjb {hjb_cost} greedy {g} free {free}"
    );
}

#[test]
fn best_constant_no_better_than_hjb() {
    let n = 8;
    let top = random_topology(n, 0.3, (0.0, 0.05), 2).unwrap();
    let b: Vec<f64> = (0..n).map(|i| -1.0 + 2.0 * i as f64 / n as f64).collect();
    let opinion = OpinionParams::new(b, top.clone(), 1.0, 0.2, HMode::Linear).unwrap();
    let hawkes = HawkesParams::new(vec![1.0; n], top, 1.0).unwrap();
    let model = SimulationModel::new(opinion, hawkes, vec![-10.0; n]).unwrap();
    let problem = ControlProblem::lsog(vec![1.0; n], 10.0, (0.0, 10.0), 100).unwrap();
    let grid = problem.grid();
    let train = ScenarioSet::generate(&model, &grid, 10, 1).unwrap();
    let eval = ScenarioSet::generate(&model, &grid, 10, 2).unwrap();
    let (constant, _) =
        constant_grid_search(&problem, &model, &levels(-2.0, 2.0, 41), &train).unwrap();
    let c = eval.evaluate(&constant, &problem, &model).unwrap();
    let h = eval
        .evaluate(&hjb(&problem, &model), &problem, &model)
        .unwrap();
    // common random numbers: the paired difference is what the noise affects
    let diffs: Vec<f64> = c
        .runs
        .iter()
        .zip(&h.runs)
        .map(|(a, b)| a.total - b.total)
        .collect();
    let se = actguide::stats::standard_error(&diffs);
    assert!(
        c.mean >= h.mean - 3.0 * se,
        "constant {} hjb {} se {se}",
        c.mean,
        h.mean
    );
}

#[test]
fn budget_shrinks_control() {
    let (_, model) = single_user();
    let mut sups = Vec::new();
    for rho in [0.1, 1.0, 10.0, 100.0] {
        let problem = ControlProblem::lsog(vec![1.0], rho, (0.0, 10.0), 100).unwrap();
        let set = ScenarioSet::generate(&model, &problem.grid(), 1, 0).unwrap();
        let tr = set
            .trajectories(&hjb(&problem, &model), &problem, &model)
            .unwrap();
        sups.push(tr[0].u.iter().fold(0.0f64, |m, v| m.max(v.abs())));
    }
    assert!(sups.windows(2).all(|w| w[1] < w[0]), "{sups:?}");
}
