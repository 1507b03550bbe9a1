//! Hawkes and survival point processes: exact simulation, intensity
//! evaluation and the deterministic mean-field intensity path.

use std::io::{Read, Write};

use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, invalid, Error, Result};
use crate::hjb::ode::{rk_integrate, Direction, SolverConfig};
use crate::network::{HawkesParams, SurvivalRates};
use crate::rng::{stream, stream_rng};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub t: f64,
    pub user: usize,
}

/// Time-sorted event history on `[t0, t_end)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EventLog {
    pub events: Vec<Event>,
    pub t0: f64,
    pub t_end: f64,
    pub seed: u64,
}

impl EventLog {
    pub fn empty(horizon: (f64, f64), seed: u64) -> Self {
        Self {
            events: Vec::new(),
            t0: horizon.0,
            t_end: horizon.1,
            seed,
        }
    }

    /// Builds a log from unsorted events and checks its invariants.
    pub fn from_events(
        mut events: Vec<Event>,
        horizon: (f64, f64),
        num_users: usize,
    ) -> Result<Self> {
        events.sort_by(|a, b| a.t.total_cmp(&b.t));
        let log = Self {
            events,
            t0: horizon.0,
            t_end: horizon.1,
            seed: 0,
        };
        log.validate(num_users)?;
        Ok(log)
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn validate(&self, num_users: usize) -> Result<()> {
        let mut last = vec![f64::NEG_INFINITY; num_users];
        let mut prev = f64::NEG_INFINITY;
        for e in &self.events {
            if e.user >= num_users {
                return Err(Error::IndexOutOfRange {
                    index: e.user,
                    len: num_users,
                });
            }
            if !(e.t >= self.t0 && e.t < self.t_end) {
                return Err(Error::OutsideSpan {
                    t: e.t,
                    start: self.t0,
                    end: self.t_end,
                });
            }
            if e.t < prev {
                return Err(Error::DataInconsistency("events not sorted by time".into()));
            }
            if !(e.t > last[e.user]) {
                return Err(Error::DataInconsistency(format!(
                    "repeated timestamp {} for user {}",
                    e.t, e.user
                )));
            }
            last[e.user] = e.t;
            prev = e.t;
        }
        Ok(())
    }

    /// Event counts `ΔN_j` per grid interval `[τ_k, τ_{k+1})`, laid out as
    /// `counts[k * num_users + j]`.
    pub fn counts_on_grid(&self, grid: &[f64], num_users: usize) -> Vec<u32> {
        let m = grid.len().saturating_sub(1);
        let mut counts = vec![0u32; m * num_users];
        if m == 0 {
            return counts;
        }
        let mut k = 0;
        for e in &self.events {
            if e.t < grid[0] || e.t >= grid[m] {
                continue;
            }
            while k + 1 < m && e.t >= grid[k + 1] {
                k += 1;
            }
            counts[k * num_users + e.user] += 1;
        }
        counts
    }

    /// CSV with header `t,user`; times as fixed-point text with 9 decimals.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "t,user")?;
        for e in &self.events {
            writeln!(out, "{:.9},{}", e.t, e.user)?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("write to Vec");
        String::from_utf8(buf).expect("ascii output")
    }

    pub fn read_csv<R: Read>(input: R, horizon: (f64, f64), num_users: usize) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(input);
        let headers = reader.headers()?.clone();
        if headers.len() != 2 || &headers[0] != "t" || &headers[1] != "user" {
            return Err(Error::Parse(format!(
                "expected header `t,user`, got `{}`",
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut events = Vec::new();
        for rec in reader.deserialize::<(f64, usize)>() {
            let (t, user) = rec?;
            if !t.is_finite() {
                return Err(Error::Parse(format!("non-finite event time {t}")));
            }
            events.push(Event { t, user });
        }
        let log = Self {
            events,
            t0: horizon.0,
            t_end: horizon.1,
            seed: 0,
        };
        log.validate(num_users)?;
        Ok(log)
    }
}

/// Intensity vector and the time it refers to. The recursion assumes the
/// shared exponential kernel, so advancing by `dt` decays every excitation by
/// `exp(-ω1 dt)`.
#[derive(Debug, Clone, PartialEq)]
pub struct IntensityState {
    pub lam: Vec<f64>,
    pub last_time: f64,
}

impl IntensityState {
    pub fn at_baseline(params: &HawkesParams, t0: f64) -> Self {
        Self {
            lam: params.eta.clone(),
            last_time: t0,
        }
    }

    /// Decays the excitation part to time `t ≥ last_time`.
    pub fn advance_to(&mut self, params: &HawkesParams, t: f64) {
        let dt = t - self.last_time;
        if dt > 0.0 {
            let decay = (-params.omega1 * dt).exp();
            for (l, &eta) in self.lam.iter_mut().zip(&params.eta) {
                *l = eta + (*l - eta) * decay;
            }
            self.last_time = t;
        }
    }

    /// Adds the jump caused by one event of `user` (its outgoing column).
    pub fn apply_event(&mut self, params: &HawkesParams, user: usize) {
        for &(i, w) in params.topology.column(user) {
            self.lam[i] += w;
        }
    }

    pub fn total(&self) -> f64 {
        self.lam.iter().sum()
    }
}

/// `λ_i(t) = η_i + Σ_j β_ij Σ_{t_j < t} exp(−ω1 (t − t_j))`, via the
/// decay-then-add recursion. Events at exactly `t` are excluded, so this is
/// the left limit `λ(t⁻)` at an event time.
pub fn intensity_at(params: &HawkesParams, events: &EventLog, t: f64) -> Result<Vec<f64>> {
    if t < events.t0 {
        return Err(Error::OutsideSpan {
            t,
            start: events.t0,
            end: events.t_end,
        });
    }
    let mut state = IntensityState::at_baseline(params, events.t0);
    for e in events.events.iter().take_while(|e| e.t < t) {
        state.advance_to(params, e.t);
        state.apply_event(params, e.user);
    }
    state.advance_to(params, t);
    Ok(state.lam)
}

/// Compensator `Λ_i(t) = ∫_{t0}^{t} λ_i(s) ds` for every user.
pub fn compensator(params: &HawkesParams, events: &EventLog, t: f64) -> Result<Vec<f64>> {
    if t < events.t0 {
        return Err(Error::OutsideSpan {
            t,
            start: events.t0,
            end: events.t_end,
        });
    }
    let mut state = IntensityState::at_baseline(params, events.t0);
    let mut acc = vec![0.0; params.num_users()];
    let integrate_to = |state: &mut IntensityState, acc: &mut [f64], s: f64| {
        let dt = s - state.last_time;
        if dt > 0.0 {
            let frac = -(-params.omega1 * dt).exp_m1() / params.omega1;
            for i in 0..acc.len() {
                acc[i] += params.eta[i] * dt + (state.lam[i] - params.eta[i]) * frac;
            }
        }
        state.advance_to(params, s);
    };
    for e in events.events.iter().take_while(|e| e.t < t) {
        integrate_to(&mut state, &mut acc, e.t);
        state.apply_event(params, e.user);
    }
    integrate_to(&mut state, &mut acc, t);
    Ok(acc)
}

/// Compensator values `Λ_u(t_i)` at each event of `user`; the increments are
/// i.i.d. `Exp(1)` under the true model.
pub fn compensator_at_events(params: &HawkesParams, events: &EventLog, user: usize) -> Vec<f64> {
    let mut state = IntensityState::at_baseline(params, events.t0);
    let mut acc = 0.0;
    let mut out = Vec::new();
    for e in &events.events {
        let dt = e.t - state.last_time;
        if dt > 0.0 {
            let frac = -(-params.omega1 * dt).exp_m1() / params.omega1;
            acc += params.eta[user] * dt + (state.lam[user] - params.eta[user]) * frac;
        }
        state.advance_to(params, e.t);
        if e.user == user {
            out.push(acc);
        }
        state.apply_event(params, e.user);
    }
    out
}

#[derive(Debug, Clone, Copy)]
pub struct ThinningOptions {
    pub max_events: usize,
}

impl Default for ThinningOptions {
    fn default() -> Self {
        Self {
            max_events: 10_000_000,
        }
    }
}

/// Diagnostics of one thinning run.
#[derive(Debug, Clone, Copy, Default)]
pub struct ThinningStats {
    pub proposals: usize,
    pub accepted: usize,
    /// Smallest `bound − Σλ(t)` seen at an acceptance test (must be ≥ 0).
    pub min_bound_slack: f64,
}

/// Ogata thinning for the multivariate exponential-kernel Hawkes process.
pub fn thinning_simulate(
    params: &HawkesParams,
    horizon: (f64, f64),
    seed: u64,
) -> Result<EventLog> {
    thinning_simulate_traced(params, horizon, seed, ThinningOptions::default()).map(|(log, _)| log)
}

pub fn thinning_simulate_traced(
    params: &HawkesParams,
    horizon: (f64, f64),
    seed: u64,
    options: ThinningOptions,
) -> Result<(EventLog, ThinningStats)> {
    let (t0, t_end) = horizon;
    if !(t_end > t0) {
        return Err(invalid(format!("horizon [{t0}, {t_end}] is empty")));
    }
    let mut rng = stream_rng(seed, stream::EVENTS);
    let mut state = IntensityState::at_baseline(params, t0);
    let mut events = Vec::new();
    let mut stats = ThinningStats {
        min_bound_slack: f64::INFINITY,
        ..Default::default()
    };
    let mut t = t0;
    loop {
        // intensities only decay between events, so λ(t⁺) dominates until the next one
        let bound = state.total();
        if !(bound > 0.0) {
            break;
        }
        let wait: f64 = Exp::new(bound).expect("positive rate").sample(&mut rng);
        t += wait;
        if t >= t_end {
            break;
        }
        state.advance_to(params, t);
        let total = state.total();
        stats.proposals += 1;
        stats.min_bound_slack = stats.min_bound_slack.min(bound - total);
        debug_assert!(total <= bound * (1.0 + 1e-12));
        if rng.random::<f64>() * bound <= total {
            let user = pick_user(&state.lam, total, rng.random::<f64>());
            events.push(Event { t, user });
            state.apply_event(params, user);
            stats.accepted += 1;
            if events.len() > options.max_events {
                return Err(Error::Explosion {
                    max_events: options.max_events,
                    t,
                    spectral_radius: params.branching_ratio(),
                });
            }
        }
    }
    Ok((
        EventLog {
            events,
            t0,
            t_end,
            seed,
        },
        stats,
    ))
}

/// Index drawn proportionally to `weights` using uniform `u ∈ [0, 1)`.
pub(crate) fn pick_user(weights: &[f64], total: f64, u: f64) -> usize {
    let target = u * total;
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            acc += w;
            last_positive = i;
            if target < acc {
                return i;
            }
        }
    }
    last_positive
}

/// Counts above this are treated as divergence of the mean-field path.
const MEAN_INTENSITY_GUARD: f64 = 1e12;

/// Forward solution of `dλ̄/dt = ω1(η − λ̄) + B λ̄`, `λ̄(τ_0) = η`, one RK4
/// step per grid interval. Returns `λ̄(τ_k)` per grid point.
pub fn mean_intensity_path(params: &HawkesParams, grid: &[f64]) -> Result<Vec<Vec<f64>>> {
    mean_intensity_path_from(params, &params.eta, grid)
}

/// Same ODE started from an arbitrary intensity vector at `grid[0]`.
pub fn mean_intensity_path_from(
    params: &HawkesParams,
    start: &[f64],
    grid: &[f64],
) -> Result<Vec<Vec<f64>>> {
    check_len("initial intensity", params.num_users(), start.len())?;
    let omega = params.omega1;
    let field = |t: f64, lam: &[f64], out: &mut [f64]| {
        let excite = params.topology.mul_vec(lam);
        for i in 0..lam.len() {
            out[i] = omega * (params.eta[i] - lam[i]) + excite[i];
        }
        if lam.iter().any(|&l| l.abs() > MEAN_INTENSITY_GUARD) {
            return Err(Error::Divergence {
                t,
                spectral_radius: params.branching_ratio(),
            });
        }
        Ok(())
    };
    let path = rk_integrate(field, start, grid, Direction::Forward, &SolverConfig::rk4())?;
    if let Some((k, _)) = path
        .iter()
        .enumerate()
        .find(|(_, l)| l.iter().any(|&v| v.abs() > MEAN_INTENSITY_GUARD))
    {
        return Err(Error::Divergence {
            t: grid[k],
            spectral_radius: params.branching_ratio(),
        });
    }
    Ok(path
        .into_iter()
        .map(|l| l.into_iter().map(|v| v.max(0.0)).collect())
        .collect())
}

/// Infection time per pair (`None` when censored at the horizon end).
pub type SurvivalOutcome = Vec<((usize, usize), Option<f64>)>;

/// Survival processes `λ_ij(t) = η_ij (1 − N_ij(t))`: each pair fires at most
/// once, at an `Exp(η_ij)` time after `t0`.
pub fn survival_simulate(rates: &SurvivalRates, horizon: (f64, f64), seed: u64) -> SurvivalOutcome {
    let (t0, t_end) = horizon;
    let mut rng = stream_rng(seed, stream::SURVIVAL);
    rates
        .rates
        .iter()
        .map(|&(pair, rate)| {
            let time = (rate > 0.0)
                .then(|| t0 + Exp::new(rate).expect("positive rate").sample(&mut rng))
                .filter(|&t| t < t_end);
            (pair, time)
        })
        .collect()
}
