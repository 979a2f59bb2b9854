//! Exact discrete optimal transport by the transportation simplex.
//!
//! Every plan returned is a basic feasible solution, so with uniform
//! marginals the entries are multiples of `1/N`. Uniform marginals are
//! solved in integer arithmetic after scaling by a common denominator.

use std::collections::VecDeque;
use std::fmt::Debug;
use std::ops::{Add, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Marginals must sum to one within this tolerance.
pub const MASS_TOL: f64 = 1e-10;
/// Plan entries closer than this to `0` or `1/N` count as integral.
pub const INTEGRALITY_TOL: f64 = 1e-9;
/// Consecutive degenerate pivots after which pricing switches to Bland's rule.
const DEGENERATE_RUN: usize = 32;

#[derive(Debug, Error, PartialEq)]
pub enum TransportError {
    #[error("cost matrix is {rows}x{cols} but marginals have lengths {mu} and {nu}")]
    Shape { rows: usize, cols: usize, mu: usize, nu: usize },
    #[error("masses must be nonnegative and sum to 1 (got {mu_sum} and {nu_sum})")]
    Infeasible { mu_sum: f64, nu_sum: f64 },
    #[error("transported fraction must lie in (0, 1], got {0}")]
    InvalidFraction(f64),
    #[error("cost entries must be finite")]
    NonFiniteCost,
    #[error("plan entry ({i}, {j}) = {value} is neither 0 nor 1/N")]
    NotIntegral { i: usize, j: usize, value: f64 },
    #[error("simplex did not terminate within {0} pivots")]
    IterationLimit(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum TransportMode {
    Full,
    /// Ship only the fraction `Q` of the mass.
    Partial(f64),
}

#[derive(Debug, Clone)]
pub struct TransportProblem {
    pub cost: Vec<Vec<f64>>,
    pub mu: Vec<f64>,
    pub nu: Vec<f64>,
    pub mode: TransportMode,
}

impl TransportProblem {
    pub fn new(cost: Vec<Vec<f64>>, mu: Vec<f64>, nu: Vec<f64>, mode: TransportMode) -> Result<Self, TransportError> {
        let p = TransportProblem { cost, mu, nu, mode };
        p.validate()?;
        Ok(p)
    }

    /// Uniform marginals `1/N` and `1/P`.
    pub fn uniform(cost: Vec<Vec<f64>>, mode: TransportMode) -> Result<Self, TransportError> {
        let n = cost.len();
        let p = cost.first().map_or(0, Vec::len);
        TransportProblem::new(cost, vec![1.0 / n as f64; n], vec![1.0 / p as f64; p], mode)
    }

    fn validate(&self) -> Result<(), TransportError> {
        let rows = self.cost.len();
        let cols = self.cost.first().map_or(0, Vec::len);
        if rows == 0 || cols == 0 || self.cost.iter().any(|r| r.len() != cols) || self.mu.len() != rows || self.nu.len() != cols {
            return Err(TransportError::Shape { rows, cols, mu: self.mu.len(), nu: self.nu.len() });
        }
        if self.cost.iter().flatten().any(|c| !c.is_finite()) {
            return Err(TransportError::NonFiniteCost);
        }
        let (mu_sum, nu_sum): (f64, f64) = (self.mu.iter().sum(), self.nu.iter().sum());
        let negative = self.mu.iter().chain(&self.nu).any(|&m| !(m >= 0.0));
        if negative || (mu_sum - 1.0).abs() > MASS_TOL || (nu_sum - 1.0).abs() > MASS_TOL {
            return Err(TransportError::Infeasible { mu_sum, nu_sum });
        }
        if let TransportMode::Partial(q) = self.mode {
            if !(q > 0.0 && q <= 1.0) {
                return Err(TransportError::InvalidFraction(q));
            }
        }
        Ok(())
    }

    pub fn rows(&self) -> usize {
        self.cost.len()
    }

    pub fn cols(&self) -> usize {
        self.nu.len()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Duals {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TransportPlan {
    pub pi: Vec<Vec<f64>>,
    pub objective: f64,
    /// Potentials of the (augmented, in partial mode) balanced problem,
    /// restricted to the real rows and columns.
    pub duals: Duals,
    /// Potentials of the dummy row and column in partial mode.
    pub dummy_duals: Option<(f64, f64)>,
    /// Basic cells of the real block.
    pub basis: Vec<(usize, usize)>,
    /// Transported fraction.
    pub q: f64,
    /// Integer flows and their common denominator when solved exactly.
    pub integer_flows: Option<(Vec<Vec<i64>>, i64)>,
    pub pivots: usize,
}

impl TransportPlan {
    pub fn row_sums(&self) -> Vec<f64> {
        self.pi.iter().map(|r| r.iter().sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        let cols = self.pi.first().map_or(0, Vec::len);
        (0..cols).map(|j| self.pi.iter().map(|r| r[j]).sum()).collect()
    }

    /// Largest violation of `u_i + v_j <= d_ij` and of equality on the
    /// support of the plan.
    pub fn certificate_defect(&self, cost: &[Vec<f64>]) -> f64 {
        let mut worst: f64 = 0.0;
        for (i, row) in cost.iter().enumerate() {
            for (j, &c) in row.iter().enumerate() {
                let slack = c - self.duals.u[i] - self.duals.v[j];
                worst = worst.max(-slack);
                if self.pi[i][j] > INTEGRALITY_TOL {
                    worst = worst.max(slack.abs());
                }
            }
        }
        worst
    }
}

/// Flow amounts: exact integers or floating point.
trait Amount: Copy + PartialOrd + Add<Output = Self> + Sub<Output = Self> + Debug {
    fn zero() -> Self;
    fn negligible(self) -> bool;
}

impl Amount for i64 {
    fn zero() -> Self {
        0
    }
    fn negligible(self) -> bool {
        self == 0
    }
}

impl Amount for f64 {
    fn zero() -> Self {
        0.0
    }
    fn negligible(self) -> bool {
        self.abs() <= 1e-14
    }
}

struct Solution<T> {
    flow: Vec<Vec<T>>,
    basis: Vec<(usize, usize)>,
    u: Vec<f64>,
    v: Vec<f64>,
    pivots: usize,
}

/// Potentials with `u_0 = 0` and `u_i + v_j = c_ij` on basic cells.
fn potentials(cost: &[Vec<f64>], basis: &[(usize, usize)], m: usize, n: usize) -> (Vec<f64>, Vec<f64>) {
    let adj = tree_adjacency(basis, m, n);
    let mut u = vec![f64::NAN; m];
    let mut v = vec![f64::NAN; n];
    u[0] = 0.0;
    let mut queue = VecDeque::from([0usize]);
    while let Some(node) = queue.pop_front() {
        for &(other, _) in &adj[node] {
            if node < m {
                let j = other - m;
                if v[j].is_nan() {
                    v[j] = cost[node][j] - u[node];
                    queue.push_back(other);
                }
            } else {
                let i = other;
                if u[i].is_nan() {
                    u[i] = cost[i][node - m] - v[node - m];
                    queue.push_back(i);
                }
            }
        }
    }
    (u, v)
}

/// Nodes `0..m` are rows, `m..m+n` columns; entries carry the basis index.
fn tree_adjacency(basis: &[(usize, usize)], m: usize, n: usize) -> Vec<Vec<(usize, usize)>> {
    let mut adj = vec![Vec::new(); m + n];
    for (k, &(i, j)) in basis.iter().enumerate() {
        adj[i].push((m + j, k));
        adj[m + j].push((i, k));
    }
    adj
}

/// Basis indices along the tree path from column `j` to row `i`.
fn tree_path(basis: &[(usize, usize)], m: usize, n: usize, i: usize, j: usize) -> Vec<usize> {
    let adj = tree_adjacency(basis, m, n);
    let start = m + j;
    let mut via = vec![usize::MAX; m + n];
    let mut seen = vec![false; m + n];
    seen[start] = true;
    let mut queue = VecDeque::from([start]);
    while let Some(node) = queue.pop_front() {
        if node == i {
            break;
        }
        for &(other, k) in &adj[node] {
            if !seen[other] {
                seen[other] = true;
                via[other] = k;
                queue.push_back(other);
            }
        }
    }
    let mut path = Vec::new();
    let mut node = i;
    while node != start {
        let k = via[node];
        path.push(k);
        let (bi, bj) = basis[k];
        node = if node == bi { m + bj } else { bi };
    }
    path.reverse();
    path
}

fn simplex<T: Amount>(cost: &[Vec<f64>], supply: &[T], demand: &[T]) -> Result<Solution<T>, TransportError> {
    let (m, n) = (supply.len(), demand.len());
    let mut flow = vec![vec![T::zero(); n]; m];
    let mut basis = Vec::with_capacity(m + n - 1);
    // Northwest corner: exactly m + n - 1 cells, degenerate ones included.
    let (mut a, mut b) = (supply.to_vec(), demand.to_vec());
    let (mut i, mut j) = (0, 0);
    loop {
        let q = if a[i] < b[j] { a[i] } else { b[j] };
        flow[i][j] = q;
        basis.push((i, j));
        a[i] = a[i] - q;
        b[j] = b[j] - q;
        if i == m - 1 && j == n - 1 {
            break;
        }
        if j == n - 1 || (i < m - 1 && a[i].negligible()) {
            i += 1;
        } else {
            j += 1;
        }
    }

    let scale = cost.iter().flatten().fold(0.0f64, |acc, c| acc.max(c.abs())).max(1.0);
    let tol = 1e-12 * scale;
    let max_pivots = 50 * (m + n) * (m + n) + 1000;
    let mut pivots = 0;
    let mut degenerate_run = 0;
    loop {
        let (u, v) = potentials(cost, &basis, m, n);
        let bland = degenerate_run >= DEGENERATE_RUN;
        let mut entering: Option<(usize, usize, f64)> = None;
        'scan: for r in 0..m {
            for c in 0..n {
                let reduced = cost[r][c] - u[r] - v[c];
                if reduced < -tol && entering.map_or(true, |(_, _, best)| reduced < best) {
                    entering = Some((r, c, reduced));
                    if bland {
                        break 'scan;
                    }
                }
            }
        }
        let Some((ei, ej, _)) = entering else {
            return Ok(Solution { flow, basis, u, v, pivots });
        };
        if pivots >= max_pivots {
            return Err(TransportError::IterationLimit(max_pivots));
        }
        pivots += 1;

        // Cycle: entering cell (+), then path cells from column ej alternating -, +, ...
        let path = tree_path(&basis, m, n, ei, ej);
        let mut theta: Option<T> = None;
        let mut leaving = usize::MAX;
        for (step, &k) in path.iter().enumerate() {
            if step % 2 == 0 {
                let (bi, bj) = basis[k];
                let x = flow[bi][bj];
                let cell = bi * n + bj;
                let better = match theta {
                    None => true,
                    Some(t) => x < t || (!(t < x) && cell < basis[leaving].0 * n + basis[leaving].1),
                };
                if better {
                    theta = Some(x);
                    leaving = k;
                }
            }
        }
        let theta = theta.expect("cycle has a decreasing cell");
        if theta.negligible() {
            degenerate_run += 1;
        } else {
            degenerate_run = 0;
        }
        flow[ei][ej] = flow[ei][ej] + theta;
        for (step, &k) in path.iter().enumerate() {
            let (bi, bj) = basis[k];
            flow[bi][bj] = if step % 2 == 0 { flow[bi][bj] - theta } else { flow[bi][bj] + theta };
        }
        let (li, lj) = basis[leaving];
        flow[li][lj] = T::zero();
        basis[leaving] = (ei, ej);
    }
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a.abs()
    } else {
        gcd(b, a % b)
    }
}

/// Integer images of `masses` under scaling by `denominator`, if exact.
fn integral_masses(masses: &[f64], denominator: i64) -> Option<Vec<i64>> {
    masses
        .iter()
        .map(|&m| {
            let s = m * denominator as f64;
            let r = s.round();
            ((s - r).abs() <= 1e-9 * denominator as f64 && r >= 0.0).then_some(r as i64)
        })
        .collect()
}

fn is_uniform(masses: &[f64]) -> bool {
    let t = 1.0 / masses.len() as f64;
    masses.iter().all(|&m| (m - t).abs() <= 1e-12)
}

/// Balanced marginals, appending a dummy row and column of mass `1 - Q`
/// in partial mode.
struct Augmented {
    cost: Vec<Vec<f64>>,
    mu: Vec<f64>,
    nu: Vec<f64>,
    dummy: bool,
}

fn augment(p: &TransportProblem) -> Augmented {
    let q = match p.mode {
        TransportMode::Full => 1.0,
        TransportMode::Partial(q) => q,
    };
    if q == 1.0 {
        return Augmented { cost: p.cost.clone(), mu: p.mu.clone(), nu: p.nu.clone(), dummy: false };
    }
    let (m, n) = (p.rows(), p.cols());
    let max_d = p.cost.iter().flatten().fold(0.0f64, |a, &c| a.max(c));
    let big = 1.0 + m.max(n) as f64 * max_d;
    let mut cost: Vec<Vec<f64>> = p.cost.iter().map(|r| r.iter().copied().chain([0.0]).collect()).collect();
    cost.push(vec![0.0; n].into_iter().chain([big]).collect());
    let mut mu = p.mu.clone();
    mu.push(1.0 - q);
    let mut nu = p.nu.clone();
    nu.push(1.0 - q);
    Augmented { cost, mu, nu, dummy: true }
}

fn finish<T: Amount>(p: &TransportProblem, aug: &Augmented, sol: Solution<T>, to_mass: impl Fn(T) -> f64) -> TransportPlan {
    let (m, n) = (p.rows(), p.cols());
    let pi: Vec<Vec<f64>> = (0..m).map(|i| (0..n).map(|j| to_mass(sol.flow[i][j])).collect()).collect();
    let objective = pi.iter().zip(&p.cost).map(|(pr, cr)| pr.iter().zip(cr).map(|(x, c)| x * c).sum::<f64>()).sum();
    let q = match p.mode {
        TransportMode::Full => 1.0,
        TransportMode::Partial(q) => q,
    };
    TransportPlan {
        pi,
        objective,
        duals: Duals { u: sol.u[..m].to_vec(), v: sol.v[..n].to_vec() },
        dummy_duals: aug.dummy.then(|| (sol.u[m], sol.v[n])),
        basis: sol.basis.iter().copied().filter(|&(i, j)| i < m && j < n).collect(),
        q,
        integer_flows: None,
        pivots: sol.pivots,
    }
}

fn solve(p: &TransportProblem) -> Result<TransportPlan, TransportError> {
    p.validate()?;
    let aug = augment(p);
    if is_uniform(&p.mu) && is_uniform(&p.nu) {
        let (m, n) = (p.rows() as i64, p.cols() as i64);
        let denominator = m / gcd(m, n) * n;
        if let (Some(a), Some(b)) = (integral_masses(&aug.mu, denominator), integral_masses(&aug.nu, denominator)) {
            let sol = simplex(&aug.cost, &a, &b)?;
            let flows: Vec<Vec<i64>> = sol.flow[..p.rows()].iter().map(|r| r[..p.cols()].to_vec()).collect();
            let mut plan = finish(p, &aug, sol, |x| x as f64 / denominator as f64);
            plan.integer_flows = Some((flows, denominator));
            return Ok(plan);
        }
    }
    let sol = simplex(&aug.cost, &aug.mu, &aug.nu)?;
    Ok(finish(p, &aug, sol, |x| x.max(0.0)))
}

/// Exact optimum with both marginals enforced.
pub fn solve_full(p: &TransportProblem) -> Result<TransportPlan, TransportError> {
    let full = TransportProblem { mode: TransportMode::Full, ..p.clone() };
    solve(&full)
}

/// Exact optimum shipping total mass `Q` with marginals as upper bounds.
pub fn solve_partial(p: &TransportProblem) -> Result<TransportPlan, TransportError> {
    solve(p)
}

/// Solve in the problem's own mode.
pub fn solve_transport(p: &TransportProblem) -> Result<TransportPlan, TransportError> {
    solve(p)
}

/// Pairs carrying more than `1/(2N)` of mass, ordered by row.
pub fn extract_correspondence(plan: &TransportPlan, n: usize) -> Result<Vec<(usize, usize)>, TransportError> {
    let unit = 1.0 / n as f64;
    let mut pairs = Vec::new();
    for (i, row) in plan.pi.iter().enumerate() {
        for (j, &x) in row.iter().enumerate() {
            if x > INTEGRALITY_TOL && x < unit - INTEGRALITY_TOL {
                return Err(TransportError::NotIntegral { i, j, value: x });
            }
            if x > 0.5 * unit {
                pairs.push((i, j));
            }
        }
    }
    Ok(pairs)
}

/// `Σ_ij d_ij π_ij`.
pub fn transport_cost(pi: &[Vec<f64>], cost: &[Vec<f64>]) -> f64 {
    pi.iter().zip(cost).map(|(pr, cr)| pr.iter().zip(cr).map(|(x, c)| x * c).sum::<f64>()).sum()
}
