//! Exact optimal transport over hop-count ground costs, the unit-bounded
//! Network Transport Distance (NTD) and its feature-weighted variant.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::CostMatrix;

/// Tolerance on the total mass of a [`NodeDistribution`].
pub const MASS_TOL: f64 = 1e-9;
/// Tolerance on plan marginals.
pub const MARGINAL_TOL: f64 = 1e-7;

/// A probability vector indexed by node id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct NodeDistribution(Vec<f64>);

impl NodeDistribution {
    /// Validates without rescaling: entries finite and non-negative, total
    /// mass within [`MASS_TOL`] of one.
    pub fn new(mass: Vec<f64>) -> Result<Self> {
        if mass.is_empty() {
            return Err(Error::Distribution("empty vector".into()));
        }
        if let Some((i, x)) = mass.iter().enumerate().find(|(_, x)| !x.is_finite() || **x < 0.0) {
            return Err(Error::Distribution(format!("entry {i} is {x}")));
        }
        let total: f64 = mass.iter().sum();
        if total == 0.0 {
            return Err(Error::Distribution("all-zero vector".into()));
        }
        if (total - 1.0).abs() > MASS_TOL {
            return Err(Error::Distribution(format!(
                "mass sums to {total}, normalise explicitly first"
            )));
        }
        Ok(NodeDistribution(mass))
    }

    /// Rescale a non-negative vector to unit mass.
    pub fn normalize(raw: Vec<f64>) -> Result<Self> {
        if let Some((i, x)) = raw.iter().enumerate().find(|(_, x)| !x.is_finite() || **x < 0.0) {
            return Err(Error::Distribution(format!("entry {i} is {x}")));
        }
        let total: f64 = raw.iter().sum();
        if total <= 0.0 {
            return Err(Error::Distribution("all-zero vector".into()));
        }
        NodeDistribution::new(raw.into_iter().map(|x| x / total).collect())
    }

    pub fn delta(n: usize, at: usize) -> Self {
        let mut v = vec![0.0; n];
        v[at] = 1.0;
        NodeDistribution(v)
    }

    pub fn uniform(n: usize) -> Self {
        NodeDistribution(vec![1.0 / n as f64; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    /// Node ids carrying positive mass.
    pub fn support(&self) -> Vec<usize> {
        (0..self.0.len()).filter(|&i| self.0[i] > 0.0).collect()
    }
}

impl TryFrom<Vec<f64>> for NodeDistribution {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        NodeDistribution::new(v)
    }
}

impl From<NodeDistribution> for Vec<f64> {
    fn from(d: NodeDistribution) -> Vec<f64> {
        d.0
    }
}

impl std::ops::Index<usize> for NodeDistribution {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// Optimal coupling between two node distributions.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    n: usize,
    plan: Vec<f64>,
    pub cost: f64,
}

impl TransportPlan {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.plan[i * self.n + j]
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.plan.chunks(self.n).map(|r| r.iter().sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for row in self.plan.chunks(self.n) {
            for (o, x) in out.iter_mut().zip(row) {
                *o += x;
            }
        }
        out
    }

    /// Non-zero entries as `(source, target, mass)`.
    pub fn entries(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::new();
        for i in 0..self.n {
            for j in 0..self.n {
                let x = self.get(i, j);
                if x > 0.0 {
                    out.push((i, j, x));
                }
            }
        }
        out
    }
}

/// One basic cell of the transportation tableau.
#[derive(Debug, Clone, Copy)]
struct Cell {
    row: usize,
    col: usize,
    flow: f64,
}

/// Transportation simplex on a balanced `supply × demand` problem. Starts
/// from a least-cost basis and pivots on the most negative reduced cost,
/// falling back to Bland's rule if degenerate pivots pile up.
///
/// Returns the basic cells (a spanning tree over rows and columns).
fn transportation_simplex(supply: &[f64], demand: &[f64], cost: &[f64]) -> Result<Vec<Cell>> {
    let m = supply.len();
    let k = demand.len();
    debug_assert_eq!(cost.len(), m * k);
    let c = |i: usize, j: usize| cost[i * k + j];

    let mut basis = least_cost_basis(supply, demand, cost);
    debug_assert_eq!(basis.len(), m + k - 1);
    let mut in_basis = vec![false; m * k];
    for cell in &basis {
        in_basis[cell.row * k + cell.col] = true;
    }

    let mut u = vec![0.0; m];
    let mut v = vec![0.0; k];
    let mut tree: Vec<Vec<usize>> = vec![Vec::new(); m + k];
    let max_pivots = 50 * m * k + 1_000;
    let mut degenerate_run = 0usize;

    for _ in 0..max_pivots {
        for adj in &mut tree {
            adj.clear();
        }
        for (b, cell) in basis.iter().enumerate() {
            tree[cell.row].push(b);
            tree[m + cell.col].push(b);
        }

        // Potentials: u_i + v_j = c_ij on basic cells, u_0 = 0.
        let mut known = vec![false; m + k];
        known[0] = true;
        u[0] = 0.0;
        let mut queue = VecDeque::from([0usize]);
        while let Some(node) = queue.pop_front() {
            for &b in &tree[node] {
                let Cell { row, col, .. } = basis[b];
                if node < m {
                    if !known[m + col] {
                        v[col] = c(row, col) - u[row];
                        known[m + col] = true;
                        queue.push_back(m + col);
                    }
                } else if !known[row] {
                    u[row] = c(row, col) - v[col];
                    known[row] = true;
                    queue.push_back(row);
                }
            }
        }

        let bland = degenerate_run > m + k;
        let mut entering = None;
        let mut best = -1e-9;
        'scan: for i in 0..m {
            for j in 0..k {
                if in_basis[i * k + j] {
                    continue;
                }
                let reduced = c(i, j) - u[i] - v[j];
                if reduced < best {
                    entering = Some((i, j));
                    if bland {
                        break 'scan;
                    }
                    best = reduced;
                }
            }
        }
        let Some((ei, ej)) = entering else {
            return Ok(basis);
        };

        // Tree path from row ei to column ej; cells along it alternate -,+,-...
        let mut parent: Vec<Option<usize>> = vec![None; m + k];
        let mut seen = vec![false; m + k];
        seen[ei] = true;
        let mut queue = VecDeque::from([ei]);
        while let Some(node) = queue.pop_front() {
            if node == m + ej {
                break;
            }
            for &b in &tree[node] {
                let other = if node < m { m + basis[b].col } else { basis[b].row };
                if !seen[other] {
                    seen[other] = true;
                    parent[other] = Some(b);
                    queue.push_back(other);
                }
            }
        }
        let mut cycle = Vec::new();
        let mut node = m + ej;
        while node != ei {
            let b = parent[node].expect("basis is a spanning tree");
            cycle.push(b);
            node = if node < m { m + basis[b].col } else { basis[b].row };
        }
        // cycle[0] touches column ej and is a donor; signs alternate from there.
        let mut theta = f64::INFINITY;
        let mut leaving = usize::MAX;
        for &b in cycle.iter().step_by(2) {
            let flow = basis[b].flow;
            let better = flow < theta
                || (flow == theta && bland && (basis[b].row, basis[b].col) < (basis[leaving].row, basis[leaving].col));
            if better {
                theta = flow;
                leaving = b;
            }
        }
        for (pos, &b) in cycle.iter().enumerate() {
            if pos % 2 == 0 {
                basis[b].flow -= theta;
            } else {
                basis[b].flow += theta;
            }
        }
        degenerate_run = if theta == 0.0 { degenerate_run + 1 } else { 0 };
        let old = basis[leaving];
        in_basis[old.row * k + old.col] = false;
        in_basis[ei * k + ej] = true;
        basis[leaving] = Cell {
            row: ei,
            col: ej,
            flow: theta,
        };
    }
    Err(Error::Numerical(format!(
        "transportation simplex exceeded {max_pivots} pivots"
    )))
}

/// Greedy least-cost starting basis with exactly `m + k - 1` cells.
fn least_cost_basis(supply: &[f64], demand: &[f64], cost: &[f64]) -> Vec<Cell> {
    let m = supply.len();
    let k = demand.len();
    let mut order: Vec<usize> = (0..m * k).collect();
    order.sort_by(|&a, &b| cost[a].total_cmp(&cost[b]).then(a.cmp(&b)));
    let mut rs = supply.to_vec();
    let mut cs = demand.to_vec();
    let mut row_open = vec![true; m];
    let mut col_open = vec![true; k];
    let (mut rows_left, mut cols_left) = (m, k);
    let mut basis = Vec::with_capacity(m + k - 1);
    for idx in order {
        let (i, j) = (idx / k, idx % k);
        if !row_open[i] || !col_open[j] {
            continue;
        }
        if rows_left == 1 && cols_left == 1 {
            basis.push(Cell {
                row: i,
                col: j,
                flow: rs[i].min(cs[j]).max(0.0),
            });
            break;
        }
        let flow = rs[i].min(cs[j]).max(0.0);
        basis.push(Cell { row: i, col: j, flow });
        rs[i] -= flow;
        cs[j] -= flow;
        let close_row = if rows_left == 1 {
            false
        } else if cols_left == 1 {
            true
        } else {
            rs[i] <= cs[j]
        };
        if close_row {
            row_open[i] = false;
            rows_left -= 1;
        } else {
            col_open[j] = false;
            cols_left -= 1;
        }
    }
    basis
}

fn check_pair(p: &NodeDistribution, q: &NodeDistribution, cm: &CostMatrix) -> Result<()> {
    for d in [p, q] {
        if d.len() != cm.len() {
            return Err(Error::Dimension {
                expected: cm.len(),
                got: d.len(),
            });
        }
    }
    Ok(())
}

/// Exact Wasserstein distance with hop-count ground cost, solved on the
/// supports of `p` and `q`. The pair is solved in a canonical order so that
/// swapping the arguments returns the transposed plan and a bit-identical cost.
pub fn wasserstein(p: &NodeDistribution, q: &NodeDistribution, cm: &CostMatrix) -> Result<TransportPlan> {
    check_pair(p, q, cm)?;
    let n = cm.len();
    if p.as_slice() == q.as_slice() {
        let mut plan = vec![0.0; n * n];
        for i in p.support() {
            plan[i * n + i] = p[i];
        }
        return Ok(TransportPlan { n, plan, cost: 0.0 });
    }
    let swapped = p
        .as_slice()
        .iter()
        .zip(q.as_slice())
        .map(|(a, b)| a.total_cmp(b))
        .find(|o| o.is_ne())
        .is_some_and(|o| o.is_gt());
    if swapped {
        let t = solve_supports(q, p, cm)?;
        let mut plan = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                plan[i * n + j] = t.plan[j * n + i];
            }
        }
        return Ok(TransportPlan { n, plan, cost: t.cost });
    }
    solve_supports(p, q, cm)
}

fn solve_supports(p: &NodeDistribution, q: &NodeDistribution, cm: &CostMatrix) -> Result<TransportPlan> {
    let n = cm.len();
    let rows = p.support();
    let cols = q.support();
    let supply: Vec<f64> = rows.iter().map(|&i| p[i]).collect();
    let mut demand: Vec<f64> = cols.iter().map(|&j| q[j]).collect();
    // absorb the (<= MASS_TOL) imbalance so the tableau is exactly balanced
    let gap = supply.iter().sum::<f64>() - demand.iter().sum::<f64>();
    if let Some(last) = demand.iter_mut().max_by(|a, b| a.total_cmp(b)) {
        *last += gap;
    }
    let mut cost = Vec::with_capacity(rows.len() * cols.len());
    for &i in &rows {
        for &j in &cols {
            cost.push(f64::from(cm.get(i, j)));
        }
    }
    let basis = transportation_simplex(&supply, &demand, &cost)?;
    let mut plan = vec![0.0; n * n];
    let mut total = 0.0;
    for cell in basis {
        if cell.flow > 0.0 {
            let (i, j) = (rows[cell.row], cols[cell.col]);
            plan[i * n + j] += cell.flow;
            total += cell.flow * f64::from(cm.get(i, j));
        }
    }
    Ok(TransportPlan { n, plan, cost: total })
}

/// Wasserstein cost divided by the network diameter; lies in `[0, 1]`.
pub fn ntd(p: &NodeDistribution, q: &NodeDistribution, cm: &CostMatrix) -> Result<f64> {
    ntd_with_plan(p, q, cm).map(|(score, _)| score)
}

/// [`ntd`] together with the optimal plan.
pub fn ntd_with_plan(p: &NodeDistribution, q: &NodeDistribution, cm: &CostMatrix) -> Result<(f64, TransportPlan)> {
    if cm.diameter() == 0 {
        return Err(Error::Config("NTD undefined for a zero-diameter network".into()));
    }
    let plan = wasserstein(p, q, cm)?;
    let score = (plan.cost / f64::from(cm.diameter())).clamp(0.0, 1.0);
    Ok((score, plan))
}

/// Affine rescale of `x` onto `[floor, 1]`. A constant vector maps to all ones.
pub fn minmax_scale(x: &[f64], floor: f64) -> Vec<f64> {
    let lo = x.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return vec![1.0; x.len()];
    }
    let span = hi - lo;
    x.iter().map(|&xi| (xi - lo) * (1.0 - floor) / span + floor).collect()
}

/// Node features, their coefficients in `[-1, 1]` and the weight floor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightingConfig {
    pub features: Vec<Vec<f64>>,
    pub coefficients: Vec<f64>,
    pub floor: f64,
}

impl WeightingConfig {
    pub fn new(features: Vec<Vec<f64>>, coefficients: Vec<f64>, floor: f64) -> Result<Self> {
        let cfg = WeightingConfig {
            features,
            coefficients,
            floor,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// A single feature with one coefficient.
    pub fn single(feature: Vec<f64>, coefficient: f64, floor: f64) -> Result<Self> {
        WeightingConfig::new(vec![feature], vec![coefficient], floor)
    }

    pub fn validate(&self) -> Result<()> {
        if self.features.is_empty() || self.features.len() != self.coefficients.len() {
            return Err(Error::Config(format!(
                "need m >= 1 features with matching coefficients (got {} features, {} coefficients)",
                self.features.len(),
                self.coefficients.len()
            )));
        }
        if let Some(c) = self.coefficients.iter().find(|c| !(-1.0..=1.0).contains(*c)) {
            return Err(Error::Config(format!("coefficient {c} outside [-1, 1]")));
        }
        if !(0.0..=1.0).contains(&self.floor) {
            return Err(Error::Config(format!("floor {} outside [0, 1]", self.floor)));
        }
        let n = self.features[0].len();
        if let Some(f) = self.features.iter().find(|f| f.len() != n) {
            return Err(Error::Dimension {
                expected: n,
                got: f.len(),
            });
        }
        Ok(())
    }

    pub fn node_count(&self) -> usize {
        self.features[0].len()
    }
}

/// Composite node weights: rescale each feature onto `[f, 1]`, combine
/// linearly with the coefficients, rescale the sum onto `[f, 1]`.
pub fn combine_weights(w: &WeightingConfig) -> Result<Vec<f64>> {
    w.validate()?;
    let n = w.node_count();
    let mut acc = vec![0.0; n];
    for (feature, &coef) in w.features.iter().zip(&w.coefficients) {
        for (a, s) in acc.iter_mut().zip(minmax_scale(feature, w.floor)) {
            *a += coef * s;
        }
    }
    Ok(minmax_scale(&acc, w.floor))
}

/// Reweight `x` by `weights` and renormalise.
pub fn reweight(x: &NodeDistribution, weights: &[f64]) -> Result<NodeDistribution> {
    if weights.len() != x.len() {
        return Err(Error::Dimension {
            expected: x.len(),
            got: weights.len(),
        });
    }
    let raw: Vec<f64> = x.as_slice().iter().zip(weights).map(|(a, w)| a * w).collect();
    if raw.iter().sum::<f64>() <= 0.0 {
        return Err(Error::Distribution("weighted mass is zero".into()));
    }
    NodeDistribution::normalize(raw)
}

/// NTD on inputs reweighted by [`combine_weights`]. Uniform weights leave the
/// inputs untouched, so such configurations reproduce [`ntd`] exactly.
pub fn ntd_weighted(p: &NodeDistribution, q: &NodeDistribution, cm: &CostMatrix, w: &WeightingConfig) -> Result<f64> {
    check_pair(p, q, cm)?;
    let weights = combine_weights(w)?;
    if weights.len() != cm.len() {
        return Err(Error::Dimension {
            expected: cm.len(),
            got: weights.len(),
        });
    }
    if weights.iter().all(|&x| x == weights[0]) {
        return ntd(p, q, cm);
    }
    ntd(&reweight(p, &weights)?, &reweight(q, &weights)?, cm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{all_pairs_shortest_paths, Network};

    fn path_cm(n: usize) -> CostMatrix {
        let edges: Vec<_> = (0..n - 1).map(|i| (i, i + 1)).collect();
        all_pairs_shortest_paths(&Network::from_edges(n, &edges, 0).unwrap()).unwrap()
    }

    fn dist(v: &[f64]) -> NodeDistribution {
        NodeDistribution::new(v.to_vec()).unwrap()
    }

    #[test]
    fn identical_inputs_cost_nothing() {
        let cm = path_cm(5);
        let p = dist(&[0.1, 0.2, 0.3, 0.4, 0.0]);
        let plan = wasserstein(&p, &p, &cm).unwrap();
        assert_eq!(plan.cost, 0.0);
        for i in 0..5 {
            assert_eq!(plan.get(i, i), p[i]);
        }
        assert_eq!(ntd(&p, &p, &cm).unwrap(), 0.0);
    }

    #[test]
    fn delta_across_diameter() {
        let cm = path_cm(3);
        let p = NodeDistribution::delta(3, 0);
        let q = NodeDistribution::delta(3, 2);
        assert_eq!(wasserstein(&p, &q, &cm).unwrap().cost, 2.0);
        assert_eq!(ntd(&p, &q, &cm).unwrap(), 1.0);
    }

    #[test]
    fn two_by_two_matches_vertex_enumeration() {
        // Vertices of the 2x2 transportation polytope for supply (.5,.5) at
        // nodes {0,1} and demand (.5,.5) at {1,2}: x01 = t, x02 = .5 - t,
        // x11 = .5 - t, x12 = t with t in {0, .5}.
        let cm = path_cm(3);
        let cost_at = |t: f64| t * 1.0 + (0.5 - t) * 2.0 + (0.5 - t) * 0.0 + t * 1.0;
        let oracle = cost_at(0.0).min(cost_at(0.5));
        let p = dist(&[0.5, 0.5, 0.0]);
        let q = dist(&[0.0, 0.5, 0.5]);
        let plan = wasserstein(&p, &q, &cm).unwrap();
        assert!((plan.cost - oracle).abs() < 1e-12);
        assert!((plan.cost - 1.0).abs() < 1e-12);
        assert!((ntd(&p, &q, &cm).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn plan_marginals_and_cost_consistent() {
        let cm = path_cm(6);
        let p = dist(&[0.3, 0.0, 0.2, 0.1, 0.0, 0.4]);
        let q = dist(&[0.0, 0.25, 0.25, 0.0, 0.5, 0.0]);
        let plan = wasserstein(&p, &q, &cm).unwrap();
        for (a, b) in plan.row_sums().iter().zip(p.as_slice()) {
            assert!((a - b).abs() < MARGINAL_TOL);
        }
        for (a, b) in plan.col_sums().iter().zip(q.as_slice()) {
            assert!((a - b).abs() < MARGINAL_TOL);
        }
        let recomputed: f64 = plan
            .entries()
            .iter()
            .map(|&(i, j, x)| x * f64::from(cm.get(i, j)))
            .sum();
        assert!((recomputed - plan.cost).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_inputs() {
        let cm = path_cm(3);
        assert!(NodeDistribution::new(vec![0.5, 0.4, 0.0]).is_err());
        assert!(NodeDistribution::new(vec![0.0, 0.0, 0.0]).is_err());
        assert!(NodeDistribution::new(vec![1.5, -0.5, 0.0]).is_err());
        assert!(NodeDistribution::normalize(vec![0.0; 3]).is_err());
        let p = NodeDistribution::uniform(4);
        let q = NodeDistribution::uniform(3);
        assert!(matches!(wasserstein(&p, &q, &cm), Err(Error::Dimension { .. })));
        let single = CostMatrix::from_rows(&[vec![0]]).unwrap();
        let d = NodeDistribution::delta(1, 0);
        assert!(ntd(&d, &d, &single).is_err());
    }

    #[test]
    fn minmax_examples() {
        assert_eq!(minmax_scale(&[0.0, 5.0, 10.0], 0.0), vec![0.0, 0.5, 1.0]);
        assert_eq!(minmax_scale(&[2.0, -1.0, 7.0], 1.0), vec![1.0, 1.0, 1.0]);
        assert_eq!(minmax_scale(&[3.0, 3.0, 3.0], 0.1), vec![1.0, 1.0, 1.0]);
    }

    #[test]
    fn combine_single_feature_is_minmax() {
        let x = vec![0.0, 2.0, 3.0, 7.0];
        let w = WeightingConfig::single(x.clone(), 1.0, 0.2).unwrap();
        let got = combine_weights(&w).unwrap();
        for (a, b) in got.iter().zip(minmax_scale(&x, 0.2)) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn negative_coefficient_reverses_order() {
        let x = vec![4.0, 1.0, 3.0, 0.0];
        let pos = combine_weights(&WeightingConfig::single(x.clone(), 1.0, 0.1).unwrap()).unwrap();
        let neg = combine_weights(&WeightingConfig::single(x, -1.0, 0.1).unwrap()).unwrap();
        let rank = |w: &[f64]| {
            let mut idx: Vec<usize> = (0..w.len()).collect();
            idx.sort_by(|&a, &b| w[a].total_cmp(&w[b]));
            idx
        };
        let mut reversed = rank(&neg);
        reversed.reverse();
        assert_eq!(rank(&pos), reversed);
    }

    #[test]
    fn combine_two_features_by_hand() {
        // x1 = [0,1,2,3] -> mm(.,.2) = [.2, .4667, .7333, 1]
        // x2 = [3,0,0,3] -> mm(.,.2) = [1, .2, .2, 1]
        // 0.5*x1' - 1*x2' = [-.9, .0333, .1667, -.5]
        // mm(., .2): min -.9, max .1667, span 1.0667
        //   -> [.2, .9, 1, .5]
        let f = 0.2;
        let w = WeightingConfig::new(
            vec![vec![0.0, 1.0, 2.0, 3.0], vec![3.0, 0.0, 0.0, 3.0]],
            vec![0.5, -1.0],
            f,
        )
        .unwrap();
        let got = combine_weights(&w).unwrap();
        let a = [0.2, 0.2 + 0.8 / 3.0, 0.2 + 1.6 / 3.0, 1.0];
        let b = [1.0, 0.2, 0.2, 1.0];
        let s: Vec<f64> = (0..4).map(|i| 0.5 * a[i] - b[i]).collect();
        let (lo, hi) = (s[0], s[2]);
        let expected: Vec<f64> = s.iter().map(|x| (x - lo) * 0.8 / (hi - lo) + 0.2).collect();
        for (g, e) in got.iter().zip(&expected) {
            assert!((g - e).abs() < 1e-12, "{got:?} vs {expected:?}");
        }
        assert!((got[1] - 0.9).abs() < 1e-9);
        assert!((got[3] - 0.5).abs() < 1e-9);
    }

    #[test]
    fn weighting_config_validation() {
        assert!(WeightingConfig::new(vec![], vec![], 0.1).is_err());
        assert!(WeightingConfig::new(vec![vec![1.0]], vec![1.5], 0.1).is_err());
        assert!(WeightingConfig::new(vec![vec![1.0]], vec![1.0], 1.5).is_err());
        assert!(WeightingConfig::new(vec![vec![1.0, 2.0], vec![1.0]], vec![1.0, 1.0], 0.1).is_err());
    }

    #[test]
    fn floor_one_is_plain_ntd() {
        let cm = path_cm(5);
        let p = dist(&[0.5, 0.5, 0.0, 0.0, 0.0]);
        let q = dist(&[0.0, 0.0, 0.2, 0.3, 0.5]);
        let w = WeightingConfig::single(vec![0.0, 1.0, 2.0, 3.0, 4.0], 1.0, 1.0).unwrap();
        assert_eq!(ntd_weighted(&p, &q, &cm, &w).unwrap(), ntd(&p, &q, &cm).unwrap());
        let flat = WeightingConfig::single(vec![2.0; 5], -1.0, 0.1).unwrap();
        assert_eq!(ntd_weighted(&p, &q, &cm, &flat).unwrap(), ntd(&p, &q, &cm).unwrap());
    }

    #[test]
    fn remote_error_penalised_by_positive_coefficient() {
        // path 0..=6, entry 0. Truth and prediction agree near the entry and
        // disagree at the far end.
        let cm = path_cm(7);
        let truth = dist(&[0.25, 0.25, 0.25, 0.25, 0.0, 0.0, 0.0]);
        let pred = dist(&[0.25, 0.25, 0.25, 0.0, 0.0, 0.0, 0.25]);
        let remoteness: Vec<f64> = (0..7).map(f64::from).collect();
        let plus = WeightingConfig::single(remoteness.clone(), 1.0, 0.1).unwrap();
        let minus = WeightingConfig::single(remoteness, -1.0, 0.1).unwrap();
        let s_plus = ntd_weighted(&truth, &pred, &cm, &plus).unwrap();
        let s_minus = ntd_weighted(&truth, &pred, &cm, &minus).unwrap();
        assert!(s_plus > s_minus, "{s_plus} vs {s_minus}");
    }
}
