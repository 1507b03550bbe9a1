use std::sync::Arc;

use crate::error::{check_len, Result};
use crate::network::{ControlProblem, HawkesParams, OpinionParams};
use crate::pointproc::{mean_intensity_path_from, IntensityState};
use crate::sdesim::{PathController, Policy, StepContext};

use super::{solve, IntensityPath, SolverConfig, ValueCoefficients};

/// Optimal feedback `u = −(v1 + v11 x)/ρ` from solved coefficients.
#[derive(Debug, Clone)]
pub struct FeedbackPolicy {
    pub coeffs: Arc<ValueCoefficients>,
    pub rho: f64,
    /// Per-user time before which the user is left uncontrolled.
    pub active_from: Option<Vec<f64>>,
}

impl FeedbackPolicy {
    pub fn new(coeffs: ValueCoefficients, rho: f64) -> Self {
        Self {
            coeffs: Arc::new(coeffs),
            rho,
            active_from: None,
        }
    }

    /// Leaves user `i` uncontrolled for `t < active_from[i]`.
    pub fn with_activation(mut self, active_from: Vec<f64>) -> Result<Self> {
        check_len(
            "activation times",
            self.coeffs.num_users(),
            active_from.len(),
        )?;
        self.active_from = Some(active_from);
        Ok(self)
    }
}

pub(crate) fn apply_mask(active_from: Option<&[f64]>, t: f64, u: &mut [f64]) {
    if let Some(times) = active_from {
        for (v, &from) in u.iter_mut().zip(times) {
            if t < from {
                *v = 0.0;
            }
        }
    }
}

impl Policy for FeedbackPolicy {
    fn evaluate(&self, x: &[f64], t: f64, u: &mut [f64]) {
        self.coeffs.feedback_into(x, t, self.rho, u);
        apply_mask(self.active_from.as_deref(), t, u);
    }
}

/// Receding-horizon feedback: after every grid interval that saw events, the
/// coefficients are re-solved on the remaining horizon with the intensity
/// path continued by the mean-field ODE from the realized intensity.
#[derive(Debug, Clone)]
pub struct ReplanPolicy {
    pub problem: ControlProblem,
    pub params: OpinionParams,
    pub hawkes: HawkesParams,
    pub config: SolverConfig,
    initial: Arc<ValueCoefficients>,
}

impl ReplanPolicy {
    pub fn new(
        problem: ControlProblem,
        params: OpinionParams,
        hawkes: HawkesParams,
        config: SolverConfig,
    ) -> Result<Self> {
        let lam = IntensityPath::mean_field(&hawkes, &problem.grid())?;
        let initial = Arc::new(solve(&problem, &params, &lam, &config)?);
        Ok(Self {
            problem,
            params,
            hawkes,
            config,
            initial,
        })
    }

    pub fn initial_coefficients(&self) -> &ValueCoefficients {
        &self.initial
    }
}

impl Policy for ReplanPolicy {
    /// Without event feedback this is the mean-field policy.
    fn evaluate(&self, x: &[f64], t: f64, u: &mut [f64]) {
        self.initial.feedback_into(x, t, self.problem.rho, u);
    }

    fn begin_path(&self) -> Box<dyn PathController + '_> {
        Box::new(ReplanController {
            policy: self,
            intensity: IntensityState::at_baseline(&self.hawkes, self.problem.t0),
            coeffs: Arc::clone(&self.initial),
        })
    }
}

struct ReplanController<'a> {
    policy: &'a ReplanPolicy,
    intensity: IntensityState,
    coeffs: Arc<ValueCoefficients>,
}

impl PathController for ReplanController<'_> {
    fn control(&mut self, ctx: &StepContext<'_>, x: &[f64], u: &mut [f64]) -> Result<()> {
        let p = self.policy;
        let hawkes = &p.hawkes;
        for e in ctx.recent_events {
            self.intensity.advance_to(hawkes, e.t);
            self.intensity.apply_event(hawkes, e.user);
        }
        self.intensity.advance_to(hawkes, ctx.t);
        let remaining = p.problem.steps - ctx.step.min(p.problem.steps);
        if !ctx.recent_events.is_empty() && remaining > 0 {
            let mut sub = p.problem.clone();
            sub.t0 = ctx.t;
            sub.steps = remaining;
            let grid = sub.grid();
            let lam = IntensityPath::new(
                grid.clone(),
                mean_intensity_path_from(hawkes, &self.intensity.lam, &grid)?,
            )?;
            self.coeffs = Arc::new(solve(&sub, &p.params, &lam, &p.config)?);
        }
        self.coeffs.feedback_into(x, ctx.t, p.problem.rho, u);
        Ok(())
    }
}
