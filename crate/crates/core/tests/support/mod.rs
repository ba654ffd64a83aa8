//! Shared generators and a brute-force transport oracle for the integration
//! tests.

#![allow(dead_code)]

use cybertom::graph::{CostMatrix, Network};
use cybertom::transport::NodeDistribution;
use rand::seq::index::sample;
use rand::Rng;

/// Connected graph on `n` nodes: a random spanning tree plus up to `n / 2`
/// random chords.
pub fn random_connected_graph<R: Rng>(rng: &mut R, n: usize) -> Network {
    let mut edges = Vec::new();
    for v in 1..n {
        edges.push((rng.random_range(0..v), v));
    }
    for _ in 0..rng.random_range(0..=n / 2) {
        let a = rng.random_range(0..n);
        let b = rng.random_range(0..n);
        if a != b && !edges.contains(&(a.min(b), a.max(b))) && !edges.contains(&(a.max(b), a.min(b))) {
            edges.push((a.min(b), a.max(b)));
        }
    }
    Network::from_edges(n, &edges, 0).expect("connected by construction")
}

/// Distribution with `k` randomly placed non-zero masses.
pub fn random_distribution_with_support<R: Rng>(rng: &mut R, n: usize, k: usize) -> NodeDistribution {
    let mut mass = vec![0.0; n];
    for v in sample(rng, n, k) {
        mass[v] = rng.random_range(0.01..1.0);
    }
    NodeDistribution::normalize(mass).expect("positive mass")
}

/// Distribution whose support size is uniform on `1..=max_support`.
pub fn random_distribution<R: Rng>(rng: &mut R, n: usize, max_support: usize) -> NodeDistribution {
    let k = rng.random_range(1..=max_support.min(n));
    random_distribution_with_support(rng, n, k)
}

/// Normalised discounted occupancy of a walk along `path`.
pub fn path_sr(path: &[usize], gamma: f64, n: usize) -> NodeDistribution {
    let mut mass = vec![0.0; n];
    let mut w = 1.0;
    for &v in path {
        mass[v] += w;
        w *= gamma;
    }
    NodeDistribution::normalize(mass).expect("non-empty path")
}

fn find(parent: &mut [usize], x: usize) -> usize {
    let mut r = x;
    while parent[r] != r {
        r = parent[r];
    }
    parent[x] = r;
    r
}

/// Flows on a spanning tree of the bipartite supply/demand graph, or `None`
/// when the cells contain a cycle or a flow is negative.
fn tree_solution(cells: &[(usize, usize)], supply: &[f64], demand: &[f64]) -> Option<Vec<f64>> {
    let m = supply.len();
    let nodes = m + demand.len();
    let mut parent: Vec<usize> = (0..nodes).collect();
    for &(i, j) in cells {
        let (a, b) = (find(&mut parent, i), find(&mut parent, m + j));
        if a == b {
            return None;
        }
        parent[a] = b;
    }
    let mut residual: Vec<f64> = supply.iter().chain(demand).copied().collect();
    let mut flow = vec![f64::NAN; cells.len()];
    let mut degree = vec![0usize; nodes];
    for &(i, j) in cells {
        degree[i] += 1;
        degree[m + j] += 1;
    }
    for _ in 0..cells.len() {
        // peel any leaf: its single open cell carries its whole residual
        let (c, leaf) = cells
            .iter()
            .enumerate()
            .filter(|(c, _)| flow[*c].is_nan())
            .find_map(|(c, &(i, j))| {
                if degree[i] == 1 {
                    Some((c, i))
                } else if degree[m + j] == 1 {
                    Some((c, m + j))
                } else {
                    None
                }
            })?;
        let (i, j) = cells[c];
        let other = if leaf == i { m + j } else { i };
        let x = residual[leaf];
        if x < -1e-12 {
            return None;
        }
        flow[c] = x;
        residual[leaf] = 0.0;
        residual[other] -= x;
        degree[i] -= 1;
        degree[m + j] -= 1;
    }
    Some(flow)
}

/// Minimum transport cost by enumerating every basic feasible solution of the
/// transportation polytope over the supports of `p` and `q`. Exponential;
/// intended for supports of a handful of nodes.
pub fn brute_force_cost(p: &NodeDistribution, q: &NodeDistribution, cm: &CostMatrix) -> f64 {
    let rows = p.support();
    let cols = q.support();
    let supply: Vec<f64> = rows.iter().map(|&i| p[i]).collect();
    let demand: Vec<f64> = cols.iter().map(|&j| q[j]).collect();
    let all: Vec<(usize, usize)> = (0..rows.len())
        .flat_map(|i| (0..cols.len()).map(move |j| (i, j)))
        .collect();
    let basis = rows.len() + cols.len() - 1;
    let mut best = f64::INFINITY;
    let mut chosen = Vec::with_capacity(basis);
    enumerate(&all, basis, 0, &mut chosen, &mut |cells| {
        if let Some(flow) = tree_solution(cells, &supply, &demand) {
            let cost: f64 = cells
                .iter()
                .zip(&flow)
                .map(|(&(i, j), x)| x * f64::from(cm.get(rows[i], cols[j])))
                .sum();
            best = best.min(cost);
        }
    });
    best
}

fn enumerate<F: FnMut(&[(usize, usize)])>(
    all: &[(usize, usize)],
    k: usize,
    start: usize,
    chosen: &mut Vec<(usize, usize)>,
    visit: &mut F,
) {
    if chosen.len() == k {
        visit(chosen);
        return;
    }
    for idx in start..all.len() {
        if all.len() - idx < k - chosen.len() {
            break;
        }
        chosen.push(all[idx]);
        enumerate(all, k, idx + 1, chosen, visit);
        chosen.pop();
    }
}
