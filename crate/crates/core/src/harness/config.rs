use serde::{Deserialize, Serialize};

use crate::baselines::{CEConfig, FDConfig};
use crate::dynnet::Birth;
use crate::error::{invalid, Result};
use crate::hjb::{LamMode, SolverConfig};
use crate::network::{HMode, ObjectiveKind};

/// Network, Hawkes and opinion parameters; random parts are drawn from the master seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub num_users: usize,
    /// Probability of each directed off-diagonal edge.
    pub sparsity: f64,
    pub weight_range: (f64, f64),
    /// Baseline intensity shared by all users.
    pub eta: f64,
    pub omega1: f64,
    pub omega2: f64,
    pub theta: f64,
    /// `b_i ~ U[lo, hi]`.
    pub b_range: (f64, f64),
    pub x0: f64,
    pub h_mode: HMode,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            num_users: 100,
            sparsity: 0.01,
            weight_range: (0.0, 0.01),
            eta: 1.0,
            omega1: 1.0,
            omega2: 1.0,
            theta: 0.2,
            b_range: (-1.0, 1.0),
            x0: -10.0,
            h_mode: HMode::Linear,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProblemConfig {
    pub kind: ObjectiveKind,
    /// Target level `a_i` for every user (least-square guiding only).
    pub target: f64,
    pub rho: f64,
    pub horizon: (f64, f64),
    /// Number of grid intervals.
    pub steps: usize,
    pub running_cost: bool,
}

impl Default for ProblemConfig {
    fn default() -> Self {
        Self {
            kind: ObjectiveKind::Lsog,
            target: 1.0,
            rho: 10.0,
            horizon: (0.0, 10.0),
            steps: 100,
            running_cost: true,
        }
    }
}

/// Greedy sweep: every `(pulse, k, checkpoints)` combination is scored on the
/// training runs. The default keeps one pulse and varies `k` and the checkpoint count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GreedySweepConfig {
    pub pulses: Vec<f64>,
    pub ks: Vec<f64>,
    pub checkpoints: Vec<usize>,
}

impl Default for GreedySweepConfig {
    fn default() -> Self {
        Self {
            pulses: vec![1.0],
            ks: vec![1.0, 2.0, 3.0, 4.0, 5.0],
            checkpoints: vec![1, 5, 10, 20, 50, 100],
        }
    }
}

/// A fixed level `value`, or the best of `count` levels on `[lo, hi]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConstantConfig {
    pub value: Option<f64>,
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

impl Default for ConstantConfig {
    fn default() -> Self {
        Self {
            value: None,
            lo: -2.0,
            hi: 2.0,
            count: 41,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum MethodConfig {
    Hjb,
    Ce(CEConfig),
    Fd(FDConfig),
    Greedy(GreedySweepConfig),
    Constant(ConstantConfig),
}

impl MethodConfig {
    pub fn name(&self) -> &'static str {
        match self {
            MethodConfig::Hjb => "hjb",
            MethodConfig::Ce(_) => "ce",
            MethodConfig::Fd(_) => "fd",
            MethodConfig::Greedy(_) => "greedy",
            MethodConfig::Constant(_) => "constant",
        }
    }

    /// The five methods with the defaults of the scaled comparison; the
    /// open-loop tables use ten segments.
    pub fn all() -> Vec<MethodConfig> {
        vec![
            MethodConfig::Hjb,
            MethodConfig::Ce(CEConfig {
                segments: 10,
                ..CEConfig::default()
            }),
            MethodConfig::Fd(FDConfig {
                segments: 10,
                ..FDConfig::default()
            }),
            MethodConfig::Greedy(GreedySweepConfig::default()),
            MethodConfig::Constant(ConstantConfig::default()),
        ]
    }
}

/// Link creation and node births on top of the random initial network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DynamicConfig {
    /// Link-creation rate of every initially present user.
    pub gamma: f64,
    /// Weight of a created link; `None` uses the mean initial weight.
    pub nominal_weight: Option<f64>,
    pub births: Vec<Birth>,
}

impl Default for DynamicConfig {
    fn default() -> Self {
        Self {
            gamma: 0.0,
            nominal_weight: None,
            births: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    pub problem: ProblemConfig,
    pub methods: Vec<MethodConfig>,
    /// Evaluation runs shared by all methods.
    pub n_runs: usize,
    /// Runs used to tune greedy and constant baselines (never the evaluation runs).
    pub train_runs: usize,
    pub seed: u64,
    pub lam_mode: LamMode,
    pub solver: SolverConfig,
    pub dynamic: Option<DynamicConfig>,
    /// Users exported to `trajectories.csv`; `None` exports all.
    pub export_users: Option<Vec<usize>>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::default(),
            problem: ProblemConfig::default(),
            methods: MethodConfig::all(),
            n_runs: 10,
            train_runs: 10,
            seed: 1,
            lam_mode: LamMode::Mean,
            solver: SolverConfig::default(),
            dynamic: None,
            export_users: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let c: Self = serde_json::from_str(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let m = &self.model;
        if m.num_users == 0 {
            return Err(invalid("model needs at least one user"));
        }
        if !(m.b_range.0 <= m.b_range.1) || !m.b_range.0.is_finite() || !m.b_range.1.is_finite() {
            return Err(invalid("b_range must be a finite interval lo <= hi"));
        }
        if !m.x0.is_finite() {
            return Err(invalid("x0 must be finite"));
        }
        if self.problem.steps < 2 {
            return Err(invalid("grid needs at least two intervals"));
        }
        if self.n_runs == 0 {
            return Err(invalid("n_runs must be at least 1"));
        }
        let mut names: Vec<&str> = self.methods.iter().map(MethodConfig::name).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(invalid("each method may appear at most once"));
        }
        for method in &self.methods {
            match method {
                MethodConfig::Ce(c) => c.validate()?,
                MethodConfig::Fd(c) => c.validate()?,
                MethodConfig::Greedy(g) => {
                    if g.pulses.is_empty() || g.ks.is_empty() || g.checkpoints.is_empty() {
                        return Err(invalid("greedy sweep lists must be nonempty"));
                    }
                }
                MethodConfig::Constant(c) => {
                    if c.value.is_none() && (c.count == 0 || !(c.lo <= c.hi)) {
                        return Err(invalid("constant search needs count >= 1 and lo <= hi"));
                    }
                }
                MethodConfig::Hjb => {}
            }
            if matches!(
                method,
                MethodConfig::Greedy(_)
                    | MethodConfig::Constant(ConstantConfig { value: None, .. })
            ) && self.train_runs == 0
            {
                return Err(invalid("tuned baselines need train_runs >= 1"));
            }
        }
        if self.dynamic.is_some() && self.lam_mode == LamMode::Replan {
            return Err(invalid("replanning is not supported on growing networks"));
        }
        if let Some(users) = &self.export_users {
            if let Some(&u) = users.iter().find(|&&u| u >= m.num_users) {
                return Err(crate::Error::IndexOutOfRange {
                    index: u,
                    len: m.num_users,
                });
            }
        }
        Ok(())
    }
}
