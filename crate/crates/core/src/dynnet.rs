//! Growing networks: link creation as a survival process per ordered pair,
//! the closed-form rate MLE, expected adjacencies for the backward solve and
//! the mapping of node births onto link creation.
//!
//! A link event `(t, u, s)` means user `u` starts following `s`, i.e. `α_us`
//! becomes nonzero (row `u`, column `s`). Pair `(u, s)` links with hazard
//! `(1 − α_us(t)) γ_u`.

use std::collections::HashSet;
use std::io::{Read, Write};

use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, invalid, Error, Result};
use crate::hjb::NetworkSchedule;
use crate::network::{build_topology_with, NetworkTopology};
use crate::rng::{stream, stream_rng};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkRecord {
    pub t: f64,
    pub source: usize,
    pub target: usize,
}

/// Observed link creations on `horizon`, sorted by time.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkEvents {
    pub records: Vec<LinkRecord>,
    pub horizon: (f64, f64),
}

impl LinkEvents {
    pub fn new(
        mut records: Vec<LinkRecord>,
        horizon: (f64, f64),
        num_users: usize,
    ) -> Result<Self> {
        records.sort_by(|a, b| {
            a.t.total_cmp(&b.t)
                .then(a.source.cmp(&b.source))
                .then(a.target.cmp(&b.target))
        });
        let ev = Self { records, horizon };
        ev.validate(num_users)?;
        Ok(ev)
    }

    pub fn empty(horizon: (f64, f64)) -> Self {
        Self {
            records: Vec::new(),
            horizon,
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn validate(&self, num_users: usize) -> Result<()> {
        let (t0, t1) = self.horizon;
        if !(t0.is_finite() && t1.is_finite() && t1 > t0) {
            return Err(invalid(format!("link horizon [{t0}, {t1}] is empty")));
        }
        let mut seen = HashSet::new();
        let mut last = f64::NEG_INFINITY;
        for r in &self.records {
            for idx in [r.source, r.target] {
                if idx >= num_users {
                    return Err(Error::IndexOutOfRange {
                        index: idx,
                        len: num_users,
                    });
                }
            }
            if r.source == r.target {
                return Err(Error::SelfLoop { i: r.source });
            }
            if !(r.t >= t0 && r.t < t1) {
                return Err(Error::OutsideSpan {
                    t: r.t,
                    start: t0,
                    end: t1,
                });
            }
            if r.t < last {
                return Err(Error::DataInconsistency(
                    "link records not sorted by time".into(),
                ));
            }
            last = r.t;
            if !seen.insert((r.source, r.target)) {
                return Err(Error::DuplicateEdge {
                    i: r.source,
                    j: r.target,
                });
            }
        }
        Ok(())
    }

    /// CSV `t,source,target`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "source", "target"])?;
        for r in &self.records {
            w.write_record([
                format!("{}", r.t),
                r.source.to_string(),
                r.target.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R, horizon: (f64, f64), num_users: usize) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(input);
        let headers = rdr.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != ["t", "source", "target"] {
            return Err(Error::Parse(format!(
                "expected header t,source,target, got {headers:?}"
            )));
        }
        let mut records = Vec::new();
        for row in rdr.deserialize::<LinkRecord>() {
            let r = row?;
            if !r.t.is_finite() {
                return Err(Error::Parse("non-finite link time".into()));
            }
            records.push(r);
        }
        let ev = Self { records, horizon };
        ev.validate(num_users)?;
        Ok(ev)
    }
}

/// Link-creation rates, the pre-existing network and the candidate targets per creator.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkCreationModel {
    pub gamma: Vec<f64>,
    pub initial: NetworkTopology,
    /// Sorted candidate targets per creator.
    pub candidates: Vec<Vec<usize>>,
    /// Weight given to an expected link; `None` means the mean existing weight (or 1 without links).
    pub nominal_weight: Option<f64>,
}

impl LinkCreationModel {
    pub fn new(
        gamma: Vec<f64>,
        initial: NetworkTopology,
        mut candidates: Vec<Vec<usize>>,
    ) -> Result<Self> {
        let n = initial.num_users();
        check_len("creation rates", n, gamma.len())?;
        check_len("candidate sets", n, candidates.len())?;
        if let Some((u, &g)) = gamma
            .iter()
            .enumerate()
            .find(|(_, g)| !(**g >= 0.0 && g.is_finite()))
        {
            return Err(invalid(format!(
                "creation rate gamma[{u}] = {g} must be finite and nonnegative"
            )));
        }
        for (u, set) in candidates.iter_mut().enumerate() {
            set.sort_unstable();
            set.dedup();
            for &s in set.iter() {
                if s >= n {
                    return Err(Error::IndexOutOfRange { index: s, len: n });
                }
                if s == u {
                    return Err(Error::SelfLoop { i: u });
                }
                if initial.weight(u, s) != 0.0 {
                    return Err(invalid(format!("candidate ({u}, {s}) is already linked")));
                }
            }
        }
        Ok(Self {
            gamma,
            initial,
            candidates,
            nominal_weight: None,
        })
    }

    /// Every unlinked ordered pair `(u, s)`, `u ≠ s`, is a candidate.
    pub fn full(gamma: Vec<f64>, initial: NetworkTopology) -> Result<Self> {
        let n = initial.num_users();
        let candidates = (0..n)
            .map(|u| {
                (0..n)
                    .filter(|&s| s != u && initial.weight(u, s) == 0.0)
                    .collect()
            })
            .collect();
        Self::new(gamma, initial, candidates)
    }

    pub fn with_nominal_weight(mut self, w: f64) -> Result<Self> {
        if !(w >= 0.0 && w.is_finite()) {
            return Err(invalid("nominal weight must be finite and nonnegative"));
        }
        self.nominal_weight = Some(w);
        Ok(self)
    }

    pub fn num_users(&self) -> usize {
        self.gamma.len()
    }

    pub fn num_candidates(&self) -> usize {
        self.candidates.iter().map(Vec::len).sum()
    }

    /// Weight of an expected or realized new link.
    pub fn link_weight(&self) -> f64 {
        self.nominal_weight.unwrap_or_else(|| {
            let nnz = self.initial.nnz();
            if nnz == 0 {
                1.0
            } else {
                self.initial.edges().map(|(_, _, w)| w).sum::<f64>() / nnz as f64
            }
        })
    }
}

/// Independent exponential(`γ_u`) link time per candidate pair, censored at the horizon end.
pub fn simulate_link_creation(
    model: &LinkCreationModel,
    horizon: (f64, f64),
    seed: u64,
) -> Result<LinkEvents> {
    let (t0, t1) = horizon;
    if !(t1 > t0) {
        return Err(invalid("link horizon is empty"));
    }
    let mut rng = stream_rng(seed, stream::LINKS);
    let mut records = Vec::new();
    for (u, set) in model.candidates.iter().enumerate() {
        let g = model.gamma[u];
        if g == 0.0 {
            continue;
        }
        let exp = Exp::new(g).map_err(|e| invalid(e.to_string()))?;
        for &s in set {
            let t = t0 + exp.sample(&mut rng);
            if t < t1 {
                records.push(LinkRecord {
                    t,
                    source: u,
                    target: s,
                });
            }
        }
    }
    LinkEvents::new(records, horizon, model.num_users())
}

/// Fitted creation rates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedGamma {
    pub gamma: Vec<f64>,
    pub loglik: f64,
    pub n_events: usize,
}

impl FittedGamma {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("fitted rates serialize")
    }
}

/// Per-creator sufficient statistics `(n_u, R_u)`: links created and total at-risk time.
pub fn sufficient_statistics(
    events: &LinkEvents,
    skeleton: &LinkCreationModel,
) -> Result<(Vec<usize>, Vec<f64>)> {
    let n = skeleton.num_users();
    events.validate(n)?;
    let (t0, t1) = events.horizon;
    let mut linked = std::collections::HashMap::new();
    for r in &events.records {
        if skeleton.candidates[r.source]
            .binary_search(&r.target)
            .is_err()
        {
            return Err(Error::DataInconsistency(format!(
                "link ({}, {}) is not a candidate pair",
                r.source, r.target
            )));
        }
        linked.insert((r.source, r.target), r.t);
    }
    let mut counts = vec![0usize; n];
    let mut risk = vec![0.0; n];
    for (u, set) in skeleton.candidates.iter().enumerate() {
        for &s in set {
            match linked.get(&(u, s)) {
                Some(&t) => {
                    counts[u] += 1;
                    risk[u] += t - t0;
                }
                None => risk[u] += t1 - t0,
            }
        }
    }
    Ok((counts, risk))
}

/// `Σ_u n_u log γ_u − γ_u R_u`, with `0 log 0 = 0`.
pub fn link_log_likelihood(gamma: &[f64], counts: &[usize], risk: &[f64]) -> f64 {
    gamma
        .iter()
        .zip(counts)
        .zip(risk)
        .map(|((&g, &c), &r)| {
            if c == 0 {
                -g * r
            } else {
                c as f64 * g.ln() - g * r
            }
        })
        .sum()
}

/// Closed-form maximum-likelihood rates `γ̂_u = n_u / R_u`.
pub fn fit_gamma(events: &LinkEvents, skeleton: &LinkCreationModel) -> Result<FittedGamma> {
    let (counts, risk) = sufficient_statistics(events, skeleton)?;
    let gamma = counts
        .iter()
        .zip(&risk)
        .enumerate()
        .map(|(u, (&c, &r))| match (c, r > 0.0) {
            (0, _) => Ok(0.0),
            (_, true) => Ok(c as f64 / r),
            (_, false) => Err(Error::DataInconsistency(format!(
                "user {u} created {c} links with zero time at risk"
            ))),
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(FittedGamma {
        loglik: link_log_likelihood(&gamma, &counts, &risk),
        gamma,
        n_events: events.len(),
    })
}

fn check_time(t: f64) -> Result<()> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(invalid(format!("time {t} must be finite and nonnegative")));
    }
    Ok(())
}

/// `E[α(t)]`: existing links unchanged, candidate pairs `(1 − e^{−γ_u t}) w`.
pub fn expected_adjacency(model: &LinkCreationModel, t: f64) -> Result<NetworkTopology> {
    check_time(t)?;
    let w = model.link_weight();
    let mut edges: Vec<(usize, usize, f64)> = model.initial.edges().collect();
    if t > 0.0 && w > 0.0 {
        for (u, set) in model.candidates.iter().enumerate() {
            let p = -(-model.gamma[u] * t).exp_m1();
            if p > 0.0 {
                edges.extend(set.iter().map(|&s| (u, s, p * w)));
            }
        }
    }
    build_topology_with(&edges, model.num_users(), model.initial.allows_self_loops())
}

/// Adjacency with every link observed by time `t` switched on at weight `weight`.
pub fn realized_adjacency(
    initial: &NetworkTopology,
    links: &LinkEvents,
    t: f64,
    weight: f64,
) -> Result<NetworkTopology> {
    links.validate(initial.num_users())?;
    let mut edges: Vec<(usize, usize, f64)> = initial.edges().collect();
    for r in links.records.iter().take_while(|r| r.t <= t) {
        if initial.weight(r.source, r.target) != 0.0 {
            return Err(Error::DuplicateEdge {
                i: r.source,
                j: r.target,
            });
        }
        edges.push((r.source, r.target, weight));
    }
    build_topology_with(&edges, initial.num_users(), initial.allows_self_loops())
}

/// Samples `adjacency(τ_k)` on `grid` into a schedule for the backward solve.
pub fn adjacency_schedule(
    grid: &[f64],
    adjacency: impl Fn(f64) -> Result<NetworkTopology>,
) -> Result<NetworkSchedule> {
    let topologies = grid
        .iter()
        .map(|&t| adjacency(t))
        .collect::<Result<Vec<_>>>()?;
    Ok(NetworkSchedule::Sampled {
        grid: grid.to_vec(),
        topologies,
    })
}

/// Growth of the opinion network during a run: random link creation from
/// `model` plus deterministic links (for example node births).
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkGrowth {
    pub model: LinkCreationModel,
    pub fixed_links: LinkEvents,
}

impl NetworkGrowth {
    pub fn new(model: LinkCreationModel, fixed_links: LinkEvents) -> Result<Self> {
        fixed_links.validate(model.num_users())?;
        for r in &fixed_links.records {
            if model.initial.weight(r.source, r.target) != 0.0
                || model.candidates[r.source].binary_search(&r.target).is_ok()
            {
                return Err(Error::DataInconsistency(format!(
                    "fixed link ({}, {}) overlaps an existing or candidate pair",
                    r.source, r.target
                )));
            }
        }
        Ok(Self { model, fixed_links })
    }

    /// `E[α(t)]` including fixed links observed by `t`, relative to the horizon start.
    pub fn expected_adjacency(&self, t: f64) -> Result<NetworkTopology> {
        let t0 = self.fixed_links.horizon.0;
        let expected = expected_adjacency(&self.model, t - t0)?;
        realized_adjacency(&expected, &self.fixed_links, t, self.model.link_weight())
    }

    /// One random realization of all links on `horizon` (fixed links included).
    pub fn sample_links(&self, horizon: (f64, f64), seed: u64) -> Result<LinkEvents> {
        let random = simulate_link_creation(&self.model, horizon, seed)?;
        let mut records = random.records;
        records.extend(self.fixed_links.records.iter().copied());
        LinkEvents::new(records, horizon, self.model.num_users())
    }

    /// Topology in force on each grid interval of one realization, as
    /// `(first interval, topology)` change points.
    pub fn realized_schedule(
        &self,
        grid: &[f64],
        seed: u64,
    ) -> Result<Vec<(usize, NetworkTopology)>> {
        let m = grid.len() - 1;
        let links = self.sample_links((grid[0], grid[m]), seed)?;
        let w = self.model.link_weight();
        let mut changes = Vec::new();
        let mut seen = 0;
        for (k, &t) in grid[..m].iter().enumerate() {
            let now = links.records.partition_point(|r| r.t <= t);
            if k == 0 || now != seen {
                changes.push((k, realized_adjacency(&self.model.initial, &links, t, w)?));
                seen = now;
            }
        }
        Ok(changes)
    }
}

/// A new user `node` joining at `t` by following `target`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Birth {
    pub t: f64,
    pub node: usize,
    pub target: usize,
}

/// Node births recast as link creation on a fixed `u_max`-user network.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeBirthMapping {
    pub links: LinkEvents,
    /// Candidates among the initially present users; unborn users get none.
    pub skeleton: LinkCreationModel,
    /// Time from which each user exists (and may be controlled).
    pub active_from: Vec<f64>,
}

pub fn node_birth_to_links(
    births: &[Birth],
    initial: &NetworkTopology,
    horizon: (f64, f64),
) -> Result<NodeBirthMapping> {
    let u_max = initial.num_users();
    let mut active_from = vec![horizon.0; u_max];
    let mut born = HashSet::new();
    let mut last = f64::NEG_INFINITY;
    for b in births {
        if b.node >= u_max {
            return Err(Error::IndexOutOfRange {
                index: b.node,
                len: u_max,
            });
        }
        if b.target >= u_max {
            return Err(Error::IndexOutOfRange {
                index: b.target,
                len: u_max,
            });
        }
        if b.t < last {
            return Err(invalid("birth times must be increasing"));
        }
        last = b.t;
        if !born.insert(b.node) {
            return Err(invalid(format!("user {} is born twice", b.node)));
        }
        active_from[b.node] = b.t;
    }
    let records = births
        .iter()
        .map(|b| LinkRecord {
            t: b.t,
            source: b.node,
            target: b.target,
        })
        .collect();
    let links = LinkEvents::new(records, horizon, u_max)?;
    let candidates = (0..u_max)
        .map(|u| {
            if born.contains(&u) {
                return Vec::new();
            }
            (0..u_max)
                .filter(|&s| s != u && !born.contains(&s) && initial.weight(u, s) == 0.0)
                .collect()
        })
        .collect();
    let skeleton = LinkCreationModel::new(vec![0.0; u_max], initial.clone(), candidates)?;
    Ok(NodeBirthMapping {
        links,
        skeleton,
        active_from,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::build_topology;
    use proptest::prelude::*;

    fn pairs_model(gamma: f64, creators: usize, per: usize) -> LinkCreationModel {
        // creator u targets users `creators..creators+per`
        let n = creators + per;
        let candidates = (0..n)
            .map(|u| {
                if u < creators {
                    (creators..n).collect()
                } else {
                    Vec::new()
                }
            })
            .collect();
        let g = (0..n)
            .map(|u| if u < creators { gamma } else { 0.0 })
            .collect();
        LinkCreationModel::new(g, NetworkTopology::empty(n), candidates).unwrap()
    }

    #[test]
    fn zero_rate_no_links() {
        let m = pairs_model(0.0, 3, 10);
        assert!(simulate_link_creation(&m, (0.0, 10.0), 1)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn link_fraction_matches_cdf() {
        let m = pairs_model(0.5, 1, 100_000);
        let ev = simulate_link_creation(&m, (0.0, 10.0), 7).unwrap();
        let frac = ev.len() as f64 / 100_000.0;
        let expect = 1.0 - (-5.0f64).exp();
        assert!((frac - expect).abs() < 0.01 * expect);
        assert_eq!(ev, simulate_link_creation(&m, (0.0, 10.0), 7).unwrap());
    }

    #[test]
    fn fit_examples() {
        let m = pairs_model(1.0, 1, 1);
        let ev = LinkEvents::new(
            vec![LinkRecord {
                t: 2.0,
                source: 0,
                target: 1,
            }],
            (0.0, 10.0),
            2,
        )
        .unwrap();
        let fit = fit_gamma(&ev, &m).unwrap();
        assert_eq!(fit.gamma, vec![0.5, 0.0]);
        assert_eq!(fit.n_events, 1);
        assert!((fit.loglik - (0.5f64.ln() - 1.0)).abs() < 1e-15);
        let none = fit_gamma(&LinkEvents::empty((0.0, 10.0)), &m).unwrap();
        assert_eq!(none.gamma, vec![0.0, 0.0]);
        assert!(fit.to_json().contains("\"n_events\":1"));
    }

    #[test]
    fn fit_rejects_non_candidates_and_zero_risk() {
        let m = pairs_model(1.0, 1, 1);
        let ev = LinkEvents::new(
            vec![LinkRecord {
                t: 2.0,
                source: 1,
                target: 0,
            }],
            (0.0, 10.0),
            2,
        )
        .unwrap();
        assert!(matches!(
            fit_gamma(&ev, &m),
            Err(Error::DataInconsistency(_))
        ));
        let at_start = LinkEvents::new(
            vec![LinkRecord {
                t: 0.0,
                source: 0,
                target: 1,
            }],
            (0.0, 10.0),
            2,
        )
        .unwrap();
        assert!(matches!(
            fit_gamma(&at_start, &m),
            Err(Error::DataInconsistency(_))
        ));
    }

    #[test]
    fn planted_rate_recovered() {
        let m = pairs_model(0.3, 1, 500);
        for seed in 0..10 {
            let ev = simulate_link_creation(&m, (0.0, 10.0), seed).unwrap();
            let g = fit_gamma(&ev, &m).unwrap().gamma[0];
            assert!((g - 0.3).abs() < 0.1 * 0.3, "seed {seed}: {g}");
        }
    }

    #[test]
    fn expected_adjacency_examples() {
        let initial = build_topology(&[(0, 1, 0.4)], 3).unwrap();
        let m = LinkCreationModel::full(vec![0.5, 0.5, 0.0], initial.clone()).unwrap();
        assert_eq!(expected_adjacency(&m, 0.0).unwrap(), initial);
        let a = expected_adjacency(&m, 2.0).unwrap();
        let p = 1.0 - (-1.0f64).exp();
        assert!((a.weight(0, 2) - p * 0.4).abs() < 1e-15);
        assert!((a.weight(1, 0) - p * 0.4).abs() < 1e-15);
        assert_eq!(a.weight(0, 1), 0.4);
        assert_eq!(a.weight(2, 0), 0.0);
        assert!(expected_adjacency(&m, -1.0).is_err());
        let m1 = m.with_nominal_weight(1.0).unwrap();
        assert!((expected_adjacency(&m1, 2.0).unwrap().weight(0, 2) - p).abs() < 1e-15);
    }

    #[test]
    fn skeleton_validation() {
        let initial = build_topology(&[(0, 1, 0.4)], 2).unwrap();
        assert!(
            LinkCreationModel::new(vec![1.0, 1.0], initial.clone(), vec![vec![1], vec![]]).is_err()
        );
        assert!(
            LinkCreationModel::new(vec![1.0, 1.0], initial.clone(), vec![vec![0], vec![]]).is_err()
        );
        assert!(LinkCreationModel::new(vec![-1.0, 1.0], initial, vec![vec![], vec![]]).is_err());
    }

    #[test]
    fn births() {
        let initial = NetworkTopology::empty(10);
        let none = node_birth_to_links(&[], &initial, (0.0, 10.0)).unwrap();
        assert!(none.links.is_empty());
        assert_eq!(
            none.skeleton,
            LinkCreationModel::full(vec![0.0; 10], initial.clone()).unwrap()
        );

        let one = node_birth_to_links(
            &[Birth {
                t: 3.0,
                node: 5,
                target: 2,
            }],
            &initial,
            (0.0, 10.0),
        )
        .unwrap();
        assert_eq!(
            one.links.records,
            vec![LinkRecord {
                t: 3.0,
                source: 5,
                target: 2
            }]
        );
        assert_eq!(one.active_from[5], 3.0);
        assert_eq!(one.active_from[4], 0.0);
        assert!(one.skeleton.candidates[5].is_empty());
        assert!(!one.skeleton.candidates[4].contains(&5));
        assert!(node_birth_to_links(
            &[Birth {
                t: 3.0,
                node: 10,
                target: 2
            }],
            &initial,
            (0.0, 10.0)
        )
        .is_err());
    }

    #[test]
    fn growth_schedules() {
        let initial = build_topology(&[(0, 1, 0.5)], 4).unwrap();
        let births = node_birth_to_links(
            &[Birth {
                t: 0.35,
                node: 3,
                target: 0,
            }],
            &initial,
            (0.0, 1.0),
        )
        .unwrap();
        let model = LinkCreationModel {
            gamma: vec![2.0, 0.0, 0.0, 0.0],
            ..births.skeleton.clone()
        };
        let g = NetworkGrowth::new(model, births.links.clone()).unwrap();
        let grid = crate::network::uniform_grid(0.0, 1.0, 10);
        let a = g.expected_adjacency(0.0).unwrap();
        assert_eq!(a, initial);
        let b = g.expected_adjacency(0.4).unwrap();
        assert_eq!(b.weight(3, 0), 0.5);
        assert!((b.weight(0, 2) - (1.0 - (-0.8f64).exp()) * 0.5).abs() < 1e-15);
        let sched = g.realized_schedule(&grid, 3).unwrap();
        assert_eq!(sched[0].0, 0);
        let (_, last) = sched.last().unwrap();
        assert_eq!(last.weight(3, 0), 0.5);
        assert_eq!(sched, g.realized_schedule(&grid, 3).unwrap());
        // a fixed link on a candidate pair is rejected
        let clash = LinkEvents::new(
            vec![LinkRecord {
                t: 0.1,
                source: 0,
                target: 2,
            }],
            (0.0, 1.0),
            4,
        )
        .unwrap();
        assert!(NetworkGrowth::new(g.model.clone(), clash).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let ev = LinkEvents::new(
            vec![
                LinkRecord {
                    t: 0.125,
                    source: 0,
                    target: 2,
                },
                LinkRecord {
                    t: 3.0 / 7.0,
                    source: 2,
                    target: 1,
                },
            ],
            (0.0, 1.0),
            3,
        )
        .unwrap();
        let mut buf = Vec::new();
        ev.write_csv(&mut buf).unwrap();
        assert!(buf.starts_with(b"t,source,target\n"));
        assert_eq!(LinkEvents::read_csv(&buf[..], (0.0, 1.0), 3).unwrap(), ev);
        assert!(LinkEvents::read_csv(&b"t,source,target\n0.5,0,0\n"[..], (0.0, 1.0), 3).is_err());
        assert!(
            LinkEvents::read_csv(&b"t,source,target\n0.5,0,1\n0.6,0,1\n"[..], (0.0, 1.0), 3)
                .is_err()
        );
        assert!(LinkEvents::read_csv(&b"a,b\n"[..], (0.0, 1.0), 3).is_err());
    }

    proptest! {
        #[test]
        fn expectation_monotone_and_bounded(gamma in 0.0f64..3.0, t1 in 0.0f64..5.0, dt in 0.0f64..5.0) {
            let m = LinkCreationModel::full(vec![gamma, gamma], NetworkTopology::empty(2)).unwrap();
            let a = expected_adjacency(&m, t1).unwrap().weight(0, 1);
            let b = expected_adjacency(&m, t1 + dt).unwrap().weight(0, 1);
            prop_assert!(a <= b);
            prop_assert!((0.0..=1.0).contains(&a) && (0.0..=1.0).contains(&b));
        }

        #[test]
        fn mle_is_local_max(seed in 0u64..200, gamma in 0.05f64..2.0) {
            let m = pairs_model(gamma, 2, 20);
            let ev = simulate_link_creation(&m, (0.0, 3.0), seed).unwrap();
            let (c, r) = sufficient_statistics(&ev, &m).unwrap();
            let fit = fit_gamma(&ev, &m).unwrap();
            for u in 0..2 {
                if c[u] == 0 { continue; }
                // gradient n/γ − R vanishes
                prop_assert!((c[u] as f64 / fit.gamma[u] - r[u]).abs() <= 1e-10 * r[u].max(1.0));
                for f in [0.9, 1.1] {
                    let mut g = fit.gamma.clone();
                    g[u] *= f;
                    prop_assert!(fit.loglik >= link_log_likelihood(&g, &c, &r));
                }
            }
        }
    }
}
