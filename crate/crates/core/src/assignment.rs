//! Dense linear assignment with dual variables.
//!
//! [`solve_assignment`] runs Jonker–Volgenant style successive shortest
//! augmenting paths (Dijkstra on reduced costs) without the usual pre-solve
//! heuristics. Every returned [`AssignmentSolution`] carries row duals `u` and
//! column duals `v` with `u[i] + v[j] <= c[i][j]`, tight on matched edges.
//!
//! [`flapjack`] reuses one optimal solution to produce all `n` paired
//! leave-one-out costs (row `j` and column `j` deleted) with one `O(n^2)`
//! augmentation each: the edge into column `j` is removed, `c[j][j]` is pushed
//! far enough below every other cost that `j -> j` is forced, the column dual
//! is reset to `min_i (c[i][j] - u[i])`, and the freed row is re-augmented.

use rayon::prelude::*;

use crate::error::{invalid, Error, Result};

const NONE: usize = usize::MAX;

/// Square matrix of finite costs, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    n: usize,
    data: Vec<f64>,
}

impl CostMatrix {
    pub fn new(n: usize, data: Vec<f64>) -> Result<Self> {
        if n == 0 {
            return Err(invalid("cost matrix must have n >= 1"));
        }
        if data.len() != n * n {
            return Err(Error::ShapeMismatch(format!(
                "expected {} entries for a {n}x{n} cost matrix, got {}",
                n * n,
                data.len()
            )));
        }
        if let Some(k) = data.iter().position(|c| !c.is_finite()) {
            return Err(Error::NonFinite(format!("cost entry ({}, {})", k / n, k % n)));
        }
        Ok(Self { n, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::ShapeMismatch("cost matrix rows must all have length n".into()));
        }
        Self::new(n, rows.concat())
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut data = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                data.push(f(i, j));
            }
        }
        Self::new(n, data)
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn set(&mut self, i: usize, j: usize, value: f64) -> Result<()> {
        if i >= self.n || j >= self.n {
            return Err(invalid(format!("index ({i}, {j}) out of range for n = {}", self.n)));
        }
        if !value.is_finite() {
            return Err(Error::NonFinite(format!("cost entry ({i}, {j})")));
        }
        self.data[i * self.n + j] = value;
        Ok(())
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, c| m.max(c.abs()))
    }

    /// Deletes row `j` and column `j`.
    pub fn without(&self, j: usize) -> Result<Self> {
        if self.n < 2 {
            return Err(invalid("cannot delete from a 1x1 cost matrix"));
        }
        if j >= self.n {
            return Err(invalid(format!("index {j} out of range for n = {}", self.n)));
        }
        let keep: Vec<usize> = (0..self.n).filter(|&k| k != j).collect();
        Self::from_fn(self.n - 1, |a, b| self.get(keep[a], keep[b]))
    }

    /// Returns `C'` with `C'[a][b] = C[rows[a]][cols[b]]`.
    pub fn permuted(&self, rows: &[usize], cols: &[usize]) -> Result<Self> {
        if !is_permutation(rows, self.n) || !is_permutation(cols, self.n) {
            return Err(invalid("row and column maps must be permutations of 0..n"));
        }
        Self::from_fn(self.n, |a, b| self.get(rows[a], cols[b]))
    }
}

/// Optimal permutation with row/column duals. `objective` is the mean matched cost.
#[derive(Debug, Clone, PartialEq)]
pub struct AssignmentSolution {
    pub sigma: Vec<usize>,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub objective: f64,
}

impl AssignmentSolution {
    pub fn n(&self) -> usize {
        self.sigma.len()
    }

    /// Inverse permutation: the row assigned to each column.
    pub fn row_of_column(&self) -> Vec<usize> {
        let mut inv = vec![0; self.sigma.len()];
        for (i, &j) in self.sigma.iter().enumerate() {
            inv[j] = i;
        }
        inv
    }

    /// Checks bijectivity, dual feasibility, complementary slackness and
    /// strong duality with absolute tolerance `rel_tol * max|c|`.
    pub fn verify(&self, costs: &CostMatrix, rel_tol: f64) -> Result<()> {
        let n = costs.n();
        if self.sigma.len() != n || self.u.len() != n || self.v.len() != n {
            return Err(Error::ShapeMismatch("solution size does not match cost matrix".into()));
        }
        if !is_permutation(&self.sigma, n) {
            return Err(invalid("sigma is not a permutation"));
        }
        let tol = rel_tol * costs.max_abs().max(f64::MIN_POSITIVE);
        for i in 0..n {
            for j in 0..n {
                let slack = costs.get(i, j) - self.u[i] - self.v[j];
                if slack < -tol {
                    return Err(invalid(format!("dual infeasible at ({i}, {j}): slack {slack:e}")));
                }
            }
            let j = self.sigma[i];
            let gap = (costs.get(i, j) - self.u[i] - self.v[j]).abs();
            if gap > tol {
                return Err(invalid(format!("complementary slackness fails at ({i}, {j}): {gap:e}")));
            }
        }
        let dual = (self.u.iter().sum::<f64>() + self.v.iter().sum::<f64>()) / n as f64;
        if (dual - self.objective).abs() > tol {
            return Err(invalid(format!(
                "duality gap {:e} between primal {} and dual {dual}",
                (dual - self.objective).abs(),
                self.objective
            )));
        }
        Ok(())
    }
}

/// Full-size objective together with every paired leave-one-out objective.
#[derive(Debug, Clone, PartialEq)]
pub struct LeaveOneOutCosts {
    pub full_cost: f64,
    pub loo_costs: Vec<f64>,
}

fn is_permutation(p: &[usize], n: usize) -> bool {
    if p.len() != n {
        return false;
    }
    let mut seen = vec![false; n];
    for &k in p {
        if k >= n || seen[k] {
            return false;
        }
        seen[k] = true;
    }
    true
}

trait Rows {
    fn n(&self) -> usize;
    fn row(&self, i: usize) -> &[f64];
}

impl Rows for CostMatrix {
    fn n(&self) -> usize {
        self.n
    }
    fn row(&self, i: usize) -> &[f64] {
        CostMatrix::row(self, i)
    }
}

/// A cost matrix with one row replaced.
struct PatchedRow<'a> {
    base: &'a CostMatrix,
    index: usize,
    row: Vec<f64>,
}

impl Rows for PatchedRow<'_> {
    fn n(&self) -> usize {
        self.base.n
    }
    fn row(&self, i: usize) -> &[f64] {
        if i == self.index {
            &self.row
        } else {
            self.base.row(i)
        }
    }
}

#[derive(Clone)]
struct DualState {
    u: Vec<f64>,
    v: Vec<f64>,
    col_of_row: Vec<usize>,
    row_of_col: Vec<usize>,
}

impl DualState {
    fn from_solution(sol: &AssignmentSolution) -> Self {
        Self {
            u: sol.u.clone(),
            v: sol.v.clone(),
            col_of_row: sol.sigma.clone(),
            row_of_col: sol.row_of_column(),
        }
    }

    fn into_solution<C: Rows>(self, costs: &C) -> AssignmentSolution {
        let n = costs.n();
        let total: f64 = (0..n).map(|i| costs.row(i)[self.col_of_row[i]]).sum();
        AssignmentSolution {
            sigma: self.col_of_row,
            u: self.u,
            v: self.v,
            objective: total / n as f64,
        }
    }
}

#[derive(Default)]
struct Scratch {
    dist: Vec<f64>,
    pred: Vec<usize>,
    todo: Vec<usize>,
    done: Vec<usize>,
}

impl Scratch {
    fn with_size(n: usize) -> Self {
        Self {
            dist: vec![0.0; n],
            pred: vec![0; n],
            todo: Vec::with_capacity(n),
            done: Vec::with_capacity(n),
        }
    }
}

/// Shortest augmenting path from the free row `root` to any free column,
/// followed by the dual update that keeps every reduced cost nonnegative and
/// the new matching tight.
fn augment<C: Rows>(costs: &C, st: &mut DualState, root: usize, sc: &mut Scratch) {
    let n = costs.n();
    debug_assert_eq!(st.col_of_row[root], NONE);

    let row = costs.row(root);
    let u_root = st.u[root];
    sc.todo.clear();
    sc.done.clear();
    for k in 0..n {
        sc.dist[k] = row[k] - u_root - st.v[k];
        sc.pred[k] = root;
        sc.todo.push(k);
    }

    let (sink, delta) = loop {
        // Lowest reduced distance, lowest column index on ties.
        let mut best_pos = 0;
        let mut best_col = sc.todo[0];
        let mut best = sc.dist[best_col];
        for (pos, &k) in sc.todo.iter().enumerate().skip(1) {
            let d = sc.dist[k];
            if d < best || (d == best && k < best_col) {
                best = d;
                best_col = k;
                best_pos = pos;
            }
        }
        sc.todo.swap_remove(best_pos);
        sc.done.push(best_col);

        let i = st.row_of_col[best_col];
        if i == NONE {
            break (best_col, best);
        }
        let row = costs.row(i);
        let h = row[best_col] - st.v[best_col] - best;
        for &k in &sc.todo {
            let nd = row[k] - st.v[k] - h;
            if nd < sc.dist[k] {
                sc.dist[k] = nd;
                sc.pred[k] = i;
            }
        }
    };

    for &j in &sc.done {
        st.v[j] += sc.dist[j] - delta;
    }

    let mut j = sink;
    loop {
        let i = sc.pred[j];
        st.row_of_col[j] = i;
        let prev = st.col_of_row[i];
        st.col_of_row[i] = j;
        if i == root {
            break;
        }
        j = prev;
    }

    for &j in &sc.done {
        let i = st.row_of_col[j];
        st.u[i] = costs.row(i)[j] - st.v[j];
    }
}

/// Solves the balanced assignment problem exactly.
pub fn solve_assignment(costs: &CostMatrix) -> Result<AssignmentSolution> {
    let n = costs.n();
    let mut v = vec![f64::INFINITY; n];
    for i in 0..n {
        for (vj, &c) in v.iter_mut().zip(costs.row(i)) {
            if c < *vj {
                *vj = c;
            }
        }
    }
    let mut st = DualState {
        u: vec![0.0; n],
        v,
        col_of_row: vec![NONE; n],
        row_of_col: vec![NONE; n],
    };
    let mut sc = Scratch::with_size(n);
    for root in 0..n {
        augment(costs, &mut st, root, &mut sc);
    }
    Ok(st.into_solution(costs))
}

fn check_solution_shape(solution: &AssignmentSolution, n: usize) -> Result<()> {
    if solution.sigma.len() != n || solution.u.len() != n || solution.v.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "solution has size {} but cost matrix has n = {n}",
            solution.sigma.len()
        )));
    }
    if !is_permutation(&solution.sigma, n) {
        return Err(invalid("solution sigma is not a permutation"));
    }
    Ok(())
}

fn repair_diagonal<C: Rows>(costs: &C, st: &mut DualState, j: usize, sc: &mut Scratch) {
    let freed = st.row_of_col[j];
    st.row_of_col[j] = NONE;
    st.col_of_row[freed] = NONE;

    let mut vj = f64::INFINITY;
    for i in 0..costs.n() {
        let c = costs.row(i)[j] - st.u[i];
        if c < vj {
            vj = c;
        }
    }
    st.v[j] = vj;

    augment(costs, st, freed, sc);
}

/// Re-optimizes after `c[j][j]` is replaced by `new_cjj`, starting from an
/// optimal solution of the unmodified matrix. One augmentation, `O(n^2)`.
///
/// The returned objective is evaluated on the modified matrix.
pub fn repair_after_entry_change(
    solution: &AssignmentSolution,
    costs: &CostMatrix,
    j: usize,
    new_cjj: f64,
) -> Result<AssignmentSolution> {
    let n = costs.n();
    check_solution_shape(solution, n)?;
    if j >= n {
        return Err(invalid(format!("column {j} out of range for n = {n}")));
    }
    if !new_cjj.is_finite() {
        return Err(Error::NonFinite(format!("replacement cost for ({j}, {j})")));
    }
    let mut row = costs.row(j).to_vec();
    row[j] = new_cjj;
    let patched = PatchedRow {
        base: costs,
        index: j,
        row,
    };
    let mut st = DualState::from_solution(solution);
    let mut sc = Scratch::with_size(n);
    repair_diagonal(&patched, &mut st, j, &mut sc);
    Ok(st.into_solution(&patched))
}

/// Diagonal value that forces `j -> j` in every optimal assignment.
pub fn forcing_epsilon(costs: &CostMatrix) -> f64 {
    let (lo, hi) = (costs.min(), costs.max());
    2.0 * lo - hi - 1.0 - hi.abs()
}

fn leave_one_out(
    costs: &CostMatrix,
    base: &DualState,
    eps: f64,
    j: usize,
    sc: &mut Scratch,
) -> f64 {
    let n = costs.n();
    let mut row = costs.row(j).to_vec();
    row[j] = eps;
    let patched = PatchedRow {
        base: costs,
        index: j,
        row,
    };
    let mut st = base.clone();
    repair_diagonal(&patched, &mut st, j, sc);
    debug_assert_eq!(st.col_of_row[j], j);
    let total: f64 = (0..n)
        .filter(|&i| i != j)
        .map(|i| costs.get(i, st.col_of_row[i]))
        .sum();
    total / (n - 1) as f64
}

fn flapjack_prepare(costs: &CostMatrix) -> Result<(AssignmentSolution, DualState, f64)> {
    if costs.n() < 2 {
        return Err(invalid("leave-one-out costs need n >= 2"));
    }
    let sol = solve_assignment(costs)?;
    let state = DualState::from_solution(&sol);
    Ok((sol, state, forcing_epsilon(costs)))
}

/// Full assignment cost and all `n` paired leave-one-out costs in `O(n^3)`.
pub fn flapjack(costs: &CostMatrix) -> Result<LeaveOneOutCosts> {
    let (sol, base, eps) = flapjack_prepare(costs)?;
    let mut sc = Scratch::with_size(costs.n());
    let loo_costs = (0..costs.n())
        .map(|j| leave_one_out(costs, &base, eps, j, &mut sc))
        .collect();
    Ok(LeaveOneOutCosts {
        full_cost: sol.objective,
        loo_costs,
    })
}

/// [`flapjack`] with the `n` repairs spread over the rayon pool. Each repair
/// starts from its own copy of the optimal state, so results do not depend
/// on scheduling.
pub fn flapjack_par(costs: &CostMatrix) -> Result<LeaveOneOutCosts> {
    let (sol, base, eps) = flapjack_prepare(costs)?;
    let n = costs.n();
    let loo_costs = (0..n)
        .into_par_iter()
        .map_init(
            || Scratch::with_size(n),
            |sc, j| leave_one_out(costs, &base, eps, j, sc),
        )
        .collect();
    Ok(LeaveOneOutCosts {
        full_cost: sol.objective,
        loo_costs,
    })
}
