//! Network topology, model parameter containers and the intensity-weighted
//! adjacency algebra shared by the simulators and the backward solvers.
//!
//! The adjacency `A = (w_ij)` holds the influence of user `j` on user `i`, so
//! column `j` (`a_j`) is everything user `j`'s events push into the network.
//! The per-user jump matrices `B^j` are rank one, `B^j = a_j e_jᵀ`, and are
//! never materialized: `Σ_j λ_j B^j = A·diag(λ)` and
//! `Σ_j λ_j B^jᵀ V B^j = diag(λ_j a_jᵀ V a_j)`.

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, invalid, Error, Result};
use crate::rng::{stream, stream_rng};

/// Topologies at or below this size keep a dense copy of every column.
pub const DENSE_CACHE_MAX_USERS: usize = 64;

/// Directed weighted adjacency stored as sorted sparse columns.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkTopology {
    num_users: usize,
    columns: Vec<Vec<(usize, f64)>>,
    allow_self_loops: bool,
    dense: Option<Vec<Vec<f64>>>,
}

impl NetworkTopology {
    /// Empty topology (no edges).
    pub fn empty(num_users: usize) -> Self {
        Self::from_columns(num_users, vec![Vec::new(); num_users], false)
    }

    fn from_columns(
        num_users: usize,
        columns: Vec<Vec<(usize, f64)>>,
        allow_self_loops: bool,
    ) -> Self {
        let dense = (num_users <= DENSE_CACHE_MAX_USERS).then(|| {
            columns
                .iter()
                .map(|col| {
                    let mut d = vec![0.0; num_users];
                    for &(i, w) in col {
                        d[i] = w;
                    }
                    d
                })
                .collect()
        });
        Self {
            num_users,
            columns,
            allow_self_loops,
            dense,
        }
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn allows_self_loops(&self) -> bool {
        self.allow_self_loops
    }

    /// Nonzero entries of column `j` as `(row, weight)`, sorted by row.
    pub fn column(&self, j: usize) -> &[(usize, f64)] {
        &self.columns[j]
    }

    /// Dense column `a_j`.
    pub fn column_of(&self, j: usize) -> Vec<f64> {
        if let Some(d) = &self.dense {
            return d[j].clone();
        }
        let mut d = vec![0.0; self.num_users];
        for &(i, w) in &self.columns[j] {
            d[i] = w;
        }
        d
    }

    /// Weight of edge `j -> i`, zero when absent.
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        if let Some(d) = &self.dense {
            return d[j][i];
        }
        match self.columns[j].binary_search_by_key(&i, |&(r, _)| r) {
            Ok(pos) => self.columns[j][pos].1,
            Err(_) => 0.0,
        }
    }

    pub fn nnz(&self) -> usize {
        self.columns.iter().map(Vec::len).sum()
    }

    /// Edges `(i, j, w)` in canonical `(j, i)` order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.columns
            .iter()
            .enumerate()
            .flat_map(|(j, col)| col.iter().map(move |&(i, w)| (i, j, w)))
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.num_users, self.num_users);
        for (i, j, w) in self.edges() {
            m[(i, j)] = w;
        }
        m
    }

    /// `A x`.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.num_users];
        for (j, col) in self.columns.iter().enumerate() {
            let xj = x[j];
            if xj == 0.0 {
                continue;
            }
            for &(i, w) in col {
                out[i] += w * xj;
            }
        }
        out
    }

    /// `Aᵀ x`.
    pub fn mul_transpose_vec(&self, x: &[f64]) -> Vec<f64> {
        self.columns
            .iter()
            .map(|col| col.iter().map(|&(i, w)| w * x[i]).sum())
            .collect()
    }

    /// Largest eigenvalue modulus of the nonnegative matrix `A`, by power
    /// iteration on `A + I` (shifted to avoid oscillation on periodic graphs).
    pub fn spectral_radius(&self) -> f64 {
        let n = self.num_users;
        if n == 0 || self.nnz() == 0 {
            return 0.0;
        }
        let mut v = vec![1.0 / (n as f64).sqrt(); n];
        let mut est = 0.0;
        for _ in 0..500 {
            let av = self.mul_vec(&v);
            let w: Vec<f64> = av.iter().zip(&v).map(|(a, x)| a + x).collect();
            let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm == 0.0 {
                return 0.0;
            }
            let next = norm - 1.0;
            v = w.into_iter().map(|x| x / norm).collect();
            if (next - est).abs() <= 1e-12 * next.abs().max(1.0) {
                est = next;
                break;
            }
            est = next;
        }
        est.max(0.0)
    }

    /// Entrywise combination `(1 - w) self + w other`; both must share `num_users`.
    pub fn lerp(&self, other: &NetworkTopology, w: f64) -> NetworkTopology {
        debug_assert_eq!(self.num_users, other.num_users);
        let columns = self
            .columns
            .iter()
            .zip(&other.columns)
            .map(|(a, b)| merge_columns(a, b, 1.0 - w, w))
            .collect();
        NetworkTopology::from_columns(
            self.num_users,
            columns,
            self.allow_self_loops || other.allow_self_loops,
        )
    }
}

fn merge_columns(a: &[(usize, f64)], b: &[(usize, f64)], wa: f64, wb: f64) -> Vec<(usize, f64)> {
    let mut out = Vec::with_capacity(a.len().max(b.len()));
    let (mut p, mut q) = (0, 0);
    while p < a.len() || q < b.len() {
        match (a.get(p), b.get(q)) {
            (Some(&(ia, xa)), Some(&(ib, xb))) if ia == ib => {
                out.push((ia, wa * xa + wb * xb));
                p += 1;
                q += 1;
            }
            (Some(&(ia, xa)), Some(&(ib, _))) if ia < ib => {
                out.push((ia, wa * xa));
                p += 1;
            }
            (Some(&(ia, xa)), None) => {
                out.push((ia, wa * xa));
                p += 1;
            }
            (_, Some(&(ib, xb))) => {
                out.push((ib, wb * xb));
                q += 1;
            }
            (None, None) => unreachable!(),
        }
    }
    out
}

/// Builds a topology from `(i, j, weight)` triples (edge `j -> i`).
/// Self-loops are rejected.
pub fn build_topology(edges: &[(usize, usize, f64)], num_users: usize) -> Result<NetworkTopology> {
    build_topology_with(edges, num_users, false)
}

pub fn build_topology_with(
    edges: &[(usize, usize, f64)],
    num_users: usize,
    allow_self_loops: bool,
) -> Result<NetworkTopology> {
    let mut columns: Vec<Vec<(usize, f64)>> = vec![Vec::new(); num_users];
    for &(i, j, w) in edges {
        for index in [i, j] {
            if index >= num_users {
                return Err(Error::IndexOutOfRange {
                    index,
                    len: num_users,
                });
            }
        }
        if !(w >= 0.0) || !w.is_finite() {
            return Err(Error::NegativeWeight { i, j, weight: w });
        }
        if i == j && !allow_self_loops {
            return Err(Error::SelfLoop { i });
        }
        columns[j].push((i, w));
    }
    for (j, col) in columns.iter_mut().enumerate() {
        col.sort_by_key(|&(i, _)| i);
        if let Some(pair) = col.windows(2).find(|p| p[0].0 == p[1].0) {
            return Err(Error::DuplicateEdge { i: pair[0].0, j });
        }
    }
    Ok(NetworkTopology::from_columns(
        num_users,
        columns,
        allow_self_loops,
    ))
}

/// Erdős–Rényi style directed topology: every off-diagonal entry is present
/// independently with probability `sparsity`, weights uniform on `weight_range`.
pub fn random_topology(
    num_users: usize,
    sparsity: f64,
    weight_range: (f64, f64),
    seed: u64,
) -> Result<NetworkTopology> {
    let (lo, hi) = weight_range;
    if !(0.0..=1.0).contains(&sparsity) {
        return Err(invalid(format!("sparsity {sparsity} not in [0, 1]")));
    }
    if !(lo <= hi) || lo < 0.0 {
        return Err(invalid(format!(
            "weight range [{lo}, {hi}] must satisfy 0 <= lo <= hi"
        )));
    }
    let mut rng = stream_rng(seed, stream::TOPOLOGY);
    let mut columns: Vec<Vec<(usize, f64)>> = vec![Vec::new(); num_users];
    if sparsity > 0.0 {
        for (j, col) in columns.iter_mut().enumerate() {
            for i in 0..num_users {
                if i == j {
                    continue;
                }
                if rng.random::<f64>() < sparsity {
                    let w = if hi > lo {
                        rng.random_range(lo..hi)
                    } else {
                        lo
                    };
                    col.push((i, w));
                }
            }
        }
    }
    Ok(NetworkTopology::from_columns(num_users, columns, false))
}

/// `Λ = Σ_j λ_j B^j = A·diag(λ)` as a dense matrix.
pub fn assemble_lambda_matrix(topology: &NetworkTopology, lam: &[f64]) -> Result<DMatrix<f64>> {
    let n = topology.num_users();
    check_len("intensity vector", n, lam.len())?;
    let mut m = DMatrix::zeros(n, n);
    for j in 0..n {
        for &(i, w) in topology.column(j) {
            m[(i, j)] = w * lam[j];
        }
    }
    Ok(m)
}

/// Diagonal of `Σ_j λ_j B^jᵀ V B^j`, i.e. `λ_j a_jᵀ V a_j`; `V` must be square of size U.
pub fn jump_quadratic_diagonal(
    topology: &NetworkTopology,
    lam: &[f64],
    v: &DMatrix<f64>,
) -> Result<Vec<f64>> {
    let n = topology.num_users();
    check_len("intensity vector", n, lam.len())?;
    check_len("quadratic coefficient rows", n, v.nrows())?;
    check_len("quadratic coefficient columns", n, v.ncols())?;
    Ok((0..n)
        .map(|j| {
            if lam[j] == 0.0 {
                return 0.0;
            }
            let col = topology.column(j);
            let mut q = 0.0;
            for &(r, wr) in col {
                for &(s, ws) in col {
                    q += wr * v[(r, s)] * ws;
                }
            }
            lam[j] * q
        })
        .collect())
}

/// `Σ_j λ_j B^jᵀ V B^j` as a (diagonal) dense matrix. `V` is expected to be
/// symmetric within `1e-9` relative.
pub fn jump_quadratic_contraction(
    topology: &NetworkTopology,
    lam: &[f64],
    v: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    if v.is_square() {
        let scale = v.amax().max(1.0);
        let asym = (v - v.transpose()).amax();
        if asym > 1e-9 * scale {
            return Err(invalid(format!(
                "quadratic coefficient not symmetric (asymmetry {asym:.3e})"
            )));
        }
    }
    let d = jump_quadratic_diagonal(topology, lam, v)?;
    Ok(DMatrix::from_diagonal(&nalgebra::DVector::from_vec(d)))
}

#[derive(Serialize, Deserialize)]
struct TopologyJson {
    num_users: usize,
    edges: Vec<(usize, usize, f64)>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    self_loops: bool,
}

impl NetworkTopology {
    /// `{num_users, edges: [[i, j, w], ...]}` with edges in canonical order.
    pub fn to_json(&self) -> String {
        let doc = TopologyJson {
            num_users: self.num_users,
            edges: self.edges().collect(),
            self_loops: self.allow_self_loops,
        };
        serde_json::to_string(&doc).expect("topology serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: TopologyJson = serde_json::from_str(text)?;
        build_topology_with(&doc.edges, doc.num_users, doc.self_loops)
    }
}

/// Parameters of the multivariate Hawkes intensity.
#[derive(Debug, Clone)]
pub struct HawkesParams {
    pub eta: Vec<f64>,
    /// Excitation weights `β_ij` (column `j`: the effect of an event of user `j`).
    pub topology: NetworkTopology,
    pub omega1: f64,
}

impl HawkesParams {
    pub fn new(eta: Vec<f64>, topology: NetworkTopology, omega1: f64) -> Result<Self> {
        check_len("base intensity", topology.num_users(), eta.len())?;
        if eta.iter().any(|&e| !(e >= 0.0) || !e.is_finite()) {
            return Err(invalid("base intensity must be finite and nonnegative"));
        }
        if !(omega1 > 0.0) || !omega1.is_finite() {
            return Err(invalid(format!(
                "kernel decay omega1 = {omega1} must be positive"
            )));
        }
        Ok(Self {
            eta,
            topology,
            omega1,
        })
    }

    pub fn num_users(&self) -> usize {
        self.eta.len()
    }

    /// Spectral radius of the branching matrix `β / ω1`; below one means stable.
    pub fn branching_ratio(&self) -> f64 {
        self.topology.spectral_radius() / self.omega1
    }
}

/// How an event of user `j` moves the content of its neighbours.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum HMode {
    /// `h = 1`: jump of size `α_ij`.
    Unit,
    /// `h(x) = x`: jump of size `α_ij x_j`.
    #[default]
    Linear,
}

/// Parameters of the opinion (content) dynamics.
#[derive(Debug, Clone)]
pub struct OpinionParams {
    pub b: Vec<f64>,
    pub topology: NetworkTopology,
    pub omega2: f64,
    pub theta: f64,
    pub h_mode: HMode,
}

impl OpinionParams {
    pub fn new(
        b: Vec<f64>,
        topology: NetworkTopology,
        omega2: f64,
        theta: f64,
        h_mode: HMode,
    ) -> Result<Self> {
        check_len("base content", topology.num_users(), b.len())?;
        if b.iter().any(|x| !x.is_finite()) {
            return Err(invalid("base content must be finite"));
        }
        if !(omega2 > 0.0) || !omega2.is_finite() {
            return Err(invalid(format!("decay omega2 = {omega2} must be positive")));
        }
        if !(theta >= 0.0) || !theta.is_finite() {
            return Err(invalid(format!(
                "diffusion level theta = {theta} must be nonnegative"
            )));
        }
        Ok(Self {
            b,
            topology,
            omega2,
            theta,
            h_mode,
        })
    }

    pub fn num_users(&self) -> usize {
        self.b.len()
    }

    /// Jump `h_j(x)` contributed to user `i` by one event of user `j`.
    #[inline]
    pub fn jump_scale(&self, xj: f64) -> f64 {
        match self.h_mode {
            HMode::Unit => 1.0,
            HMode::Linear => xj,
        }
    }

    /// Intensity-guiding view of a Hawkes model: the state is `λ` itself,
    /// its base level is `η`, events jump it by `β` and there is no diffusion.
    pub fn for_intensity_guiding(hawkes: &HawkesParams) -> Self {
        Self {
            b: hawkes.eta.clone(),
            topology: hawkes.topology.clone(),
            omega2: hawkes.omega1,
            theta: 0.0,
            h_mode: HMode::Unit,
        }
    }
}

/// Per-pair infection rates of a survival (at most one event) process.
#[derive(Debug, Clone, Default)]
pub struct SurvivalRates {
    pub rates: Vec<((usize, usize), f64)>,
}

impl SurvivalRates {
    pub fn new(rates: Vec<((usize, usize), f64)>) -> Result<Self> {
        if let Some(&((i, j), r)) = rates.iter().find(|(_, r)| !(*r >= 0.0) || !r.is_finite()) {
            return Err(Error::NegativeWeight { i, j, weight: r });
        }
        Ok(Self { rates })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ObjectiveKind {
    /// Least-square guiding toward a target state.
    #[serde(rename = "lsog", alias = "LSOG")]
    Lsog,
    /// Linear influence maximization.
    #[serde(rename = "oim", alias = "OIM")]
    Oim,
}

/// Objective, horizon and time grid of a control problem.
#[derive(Debug, Clone)]
pub struct ControlProblem {
    pub kind: ObjectiveKind,
    /// Target state (LSOG); empty for OIM.
    pub target: Vec<f64>,
    pub rho: f64,
    pub t0: f64,
    pub t_end: f64,
    /// Number of grid intervals `m`; the grid holds `m + 1` timestamps.
    pub steps: usize,
    pub running_state_cost: bool,
}

impl ControlProblem {
    pub fn lsog(target: Vec<f64>, rho: f64, horizon: (f64, f64), steps: usize) -> Result<Self> {
        let p = Self {
            kind: ObjectiveKind::Lsog,
            target,
            rho,
            t0: horizon.0,
            t_end: horizon.1,
            steps,
            running_state_cost: true,
        };
        p.validate(None)?;
        Ok(p)
    }

    pub fn oim(rho: f64, horizon: (f64, f64), steps: usize) -> Result<Self> {
        let p = Self {
            kind: ObjectiveKind::Oim,
            target: Vec::new(),
            rho,
            t0: horizon.0,
            t_end: horizon.1,
            steps,
            running_state_cost: true,
        };
        p.validate(None)?;
        Ok(p)
    }

    pub fn with_running_cost(mut self, on: bool) -> Self {
        self.running_state_cost = on;
        self
    }

    /// Checks invariants; `num_users` additionally checks the target length.
    pub fn validate(&self, num_users: Option<usize>) -> Result<()> {
        if !(self.rho > 0.0) || !self.rho.is_finite() {
            return Err(invalid(format!("rho = {} must be positive", self.rho)));
        }
        if !(self.t_end > self.t0) {
            return Err(invalid(format!(
                "horizon [{}, {}] is empty",
                self.t0, self.t_end
            )));
        }
        if self.steps == 0 {
            return Err(invalid("grid needs at least one interval"));
        }
        if let (ObjectiveKind::Lsog, Some(n)) = (self.kind, num_users) {
            check_len("target", n, self.target.len())?;
        }
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        (self.t_end - self.t0) / self.steps as f64
    }

    pub fn grid(&self) -> Vec<f64> {
        uniform_grid(self.t0, self.t_end, self.steps)
    }

    /// Instantaneous state cost `q(x)` (LSOG: `½‖x − a‖²`, OIM: `−Σ x`),
    /// regardless of whether the running cost is switched on.
    pub fn state_cost(&self, x: &[f64]) -> f64 {
        match self.kind {
            ObjectiveKind::Lsog => {
                0.5 * x
                    .iter()
                    .zip(&self.target)
                    .map(|(x, a)| (x - a) * (x - a))
                    .sum::<f64>()
            }
            ObjectiveKind::Oim => -x.iter().sum::<f64>(),
        }
    }
}

/// `m + 1` equally spaced points on `[t0, t1]`, endpoints exact.
pub fn uniform_grid(t0: f64, t1: f64, steps: usize) -> Vec<f64> {
    let dt = (t1 - t0) / steps as f64;
    (0..=steps)
        .map(|k| if k == steps { t1 } else { t0 + k as f64 * dt })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn two_user() -> NetworkTopology {
        build_topology(&[(0, 1, 0.3), (1, 0, 0.2)], 2).unwrap()
    }

    /// Explicit `B^j` with column `j` equal to `a_j` and zeros elsewhere.
    fn naive_b(top: &NetworkTopology, j: usize) -> DMatrix<f64> {
        let n = top.num_users();
        let mut b = DMatrix::zeros(n, n);
        for i in 0..n {
            b[(i, j)] = top.weight(i, j);
        }
        b
    }

    fn naive_lambda(top: &NetworkTopology, lam: &[f64]) -> DMatrix<f64> {
        let n = top.num_users();
        let mut m = DMatrix::zeros(n, n);
        for j in 0..n {
            m += naive_b(top, j) * lam[j];
        }
        m
    }

    fn naive_contraction(top: &NetworkTopology, lam: &[f64], v: &DMatrix<f64>) -> DMatrix<f64> {
        let n = top.num_users();
        let mut m = DMatrix::zeros(n, n);
        for j in 0..n {
            let b = naive_b(top, j);
            m += b.transpose() * v * &b * lam[j];
        }
        m
    }

    #[test]
    fn empty_construction() {
        let t = build_topology(&[], 2).unwrap();
        assert_eq!(t.column_of(0), vec![0.0, 0.0]);
        assert_eq!(t.nnz(), 0);
    }

    #[test]
    fn direct_construction() {
        let t = two_user();
        assert_eq!(t.column_of(1), vec![0.3, 0.0]);
        assert_eq!(t.column_of(0), vec![0.0, 0.2]);
    }

    #[test]
    fn duplicate_and_negative_rejected() {
        let e = build_topology(&[(0, 1, 0.3), (0, 1, 0.4)], 2).unwrap_err();
        assert!(matches!(e, Error::DuplicateEdge { i: 0, j: 1 }));
        let e = build_topology(&[(0, 1, -0.1)], 2).unwrap_err();
        assert!(matches!(e, Error::NegativeWeight { .. }));
        assert!(matches!(
            build_topology(&[(1, 1, 0.1)], 2).unwrap_err(),
            Error::SelfLoop { i: 1 }
        ));
        assert!(build_topology_with(&[(1, 1, 0.1)], 2, true).is_ok());
        assert!(matches!(
            build_topology(&[(2, 0, 0.1)], 2).unwrap_err(),
            Error::IndexOutOfRange { .. }
        ));
    }

    #[test]
    fn sparse_and_dense_lookups_agree() {
        let edges: Vec<_> = (0..80)
            .map(|j| ((j * 7 + 3) % 80, j, j as f64 * 0.01))
            .collect();
        let big = build_topology(&edges, 80).unwrap();
        assert!(big.dense.is_none());
        for j in 0..80 {
            let col = big.column_of(j);
            for i in 0..80 {
                assert_eq!(col[i], big.weight(i, j));
            }
        }
    }

    #[test]
    fn random_topology_edge_count() {
        let t = random_topology(1000, 0.001, (0.0, 0.01), 11).unwrap();
        // expected 999, binomial sd ~ 31.6
        let nnz = t.nnz() as f64;
        assert!((nnz - 999.0).abs() < 4.0 * 31.6, "nnz = {nnz}");
        assert!(t
            .edges()
            .all(|(i, j, w)| i != j && (0.0..=0.01).contains(&w)));
    }

    #[test]
    fn random_topology_degenerate_and_deterministic() {
        assert_eq!(random_topology(50, 0.0, (0.0, 1.0), 3).unwrap().nnz(), 0);
        let a = random_topology(60, 0.1, (0.0, 0.01), 5).unwrap();
        let b = random_topology(60, 0.1, (0.0, 0.01), 5).unwrap();
        assert_eq!(a.edges().collect::<Vec<_>>(), b.edges().collect::<Vec<_>>());
        assert!(random_topology(10, 1.5, (0.0, 1.0), 1).is_err());
        assert!(random_topology(10, 0.5, (1.0, 0.0), 1).is_err());
    }

    #[test]
    fn lambda_matrix_examples() {
        let t = two_user();
        let m = assemble_lambda_matrix(&t, &[1.0, 2.0]).unwrap();
        assert_eq!(m, naive_lambda(&t, &[1.0, 2.0]));
        assert_eq!(m, DMatrix::from_row_slice(2, 2, &[0.0, 0.6, 0.2, 0.0]));
        assert_eq!(
            assemble_lambda_matrix(&t, &[0.0, 0.0]).unwrap(),
            DMatrix::zeros(2, 2)
        );
        let one = NetworkTopology::empty(1);
        assert_eq!(
            assemble_lambda_matrix(&one, &[5.0]).unwrap(),
            DMatrix::zeros(1, 1)
        );
        assert!(assemble_lambda_matrix(&t, &[1.0]).is_err());
    }

    #[test]
    fn contraction_examples() {
        let t = two_user();
        let lam = [1.0, 2.0];
        let d = jump_quadratic_contraction(&t, &lam, &DMatrix::identity(2, 2)).unwrap();
        let naive = naive_contraction(&t, &lam, &DMatrix::identity(2, 2));
        assert!((d.clone() - naive).amax() < 1e-15);
        assert!((d[(0, 0)] - 0.04).abs() < 1e-15);
        assert!((d[(1, 1)] - 0.18).abs() < 1e-15);
        assert_eq!(
            jump_quadratic_contraction(&t, &lam, &DMatrix::zeros(2, 2)).unwrap(),
            DMatrix::zeros(2, 2)
        );
        assert_eq!(
            jump_quadratic_contraction(&t, &[0.0, 0.0], &DMatrix::identity(2, 2)).unwrap(),
            DMatrix::zeros(2, 2)
        );
        assert!(jump_quadratic_contraction(&t, &lam, &DMatrix::identity(3, 3)).is_err());
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(jump_quadratic_contraction(&t, &lam, &asym).is_err());
    }

    #[test]
    fn json_round_trip_is_canonical() {
        let t = build_topology(&[(1, 0, 0.2), (0, 1, 0.3), (2, 0, 0.125)], 3).unwrap();
        let text = t.to_json();
        assert_eq!(
            text,
            r#"{"num_users":3,"edges":[[1,0,0.2],[2,0,0.125],[0,1,0.3]]}"#
        );
        let back = NetworkTopology::from_json(&text).unwrap();
        assert_eq!(back, t);
        assert_eq!(back.to_json(), text);
        assert!(
            NetworkTopology::from_json(r#"{"num_users":2,"edges":[[0,1,1],[0,1,2]]}"#).is_err()
        );
    }

    #[test]
    fn spectral_radius_of_cycle() {
        // 3-cycle with weight 0.5: eigenvalues 0.5·(cube roots of unity)
        let t = build_topology(&[(1, 0, 0.5), (2, 1, 0.5), (0, 2, 0.5)], 3).unwrap();
        assert!((t.spectral_radius() - 0.5).abs() < 1e-9);
    }

    #[test]
    fn grid_is_uniform_with_exact_endpoints() {
        let g = uniform_grid(0.0, 10.0, 100);
        assert_eq!(g.len(), 101);
        assert_eq!(g[100], 10.0);
        assert!((g[37] - 3.7).abs() < 1e-12);
    }

    fn arb_instance() -> impl Strategy<Value = (NetworkTopology, Vec<f64>, Vec<f64>, DMatrix<f64>)>
    {
        (1usize..=10).prop_flat_map(|n| {
            (
                proptest::collection::vec(proptest::option::weighted(0.3, 0.0f64..1.0), n * n),
                proptest::collection::vec(0.0f64..5.0, n),
                proptest::collection::vec(0.0f64..5.0, n),
                proptest::collection::vec(-1.0f64..1.0, n * n),
            )
                .prop_map(move |(w, lam1, lam2, v)| {
                    let edges: Vec<_> = w
                        .iter()
                        .enumerate()
                        .filter_map(|(k, w)| w.map(|w| (k % n, k / n, w)))
                        .filter(|&(i, j, _)| i != j)
                        .collect();
                    let top = build_topology(&edges, n).unwrap();
                    let v = DMatrix::from_vec(n, n, v);
                    let v = (&v + v.transpose()) * 0.5;
                    (top, lam1, lam2, v)
                })
        })
    }

    proptest! {
        #[test]
        fn lambda_matrix_matches_naive_sum((top, lam, _, _) in arb_instance()) {
            prop_assert_eq!(assemble_lambda_matrix(&top, &lam).unwrap(), naive_lambda(&top, &lam));
        }

        #[test]
        fn lambda_matrix_is_linear((top, l1, l2, _) in arb_instance()) {
            let sum: Vec<f64> = l1.iter().zip(&l2).map(|(a, b)| a + b).collect();
            let lhs = assemble_lambda_matrix(&top, &sum).unwrap();
            let rhs = assemble_lambda_matrix(&top, &l1).unwrap() + assemble_lambda_matrix(&top, &l2).unwrap();
            prop_assert!((lhs - rhs).amax() <= 1e-14);
        }

        #[test]
        fn contraction_matches_naive_triple_product((top, lam, _, v) in arb_instance()) {
            let fast = jump_quadratic_contraction(&top, &lam, &v).unwrap();
            let naive = naive_contraction(&top, &lam, &v);
            let scale = naive.amax().max(1e-300);
            prop_assert!((&fast - &naive).amax() <= 1e-12 * scale.max(1.0));
            for i in 0..fast.nrows() {
                for j in 0..fast.ncols() {
                    if i != j { prop_assert_eq!(fast[(i, j)], 0.0); }
                }
            }
        }
    }
}
