//! Static network topologies, hop-count shortest paths and per-node features.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeds::{self, SimRng};

/// Role of a node in the layered topologies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Layer {
    Core,
    Edge,
    Aggregation,
    Access,
    Subnet,
}

/// Named topology templates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Topology {
    Tree30,
    Tree40,
    Tree50,
    Tree70,
    Tree90,
    Forest,
    OpticalCore,
}

impl Topology {
    pub const ALL: [Topology; 7] = [
        Topology::Tree30,
        Topology::Tree40,
        Topology::Tree50,
        Topology::Tree70,
        Topology::Tree90,
        Topology::Forest,
        Topology::OpticalCore,
    ];

    pub const TREES: [Topology; 5] = [
        Topology::Tree30,
        Topology::Tree40,
        Topology::Tree50,
        Topology::Tree70,
        Topology::Tree90,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Topology::Tree30 => "tree30",
            Topology::Tree40 => "tree40",
            Topology::Tree50 => "tree50",
            Topology::Tree70 => "tree70",
            Topology::Tree90 => "tree90",
            Topology::Forest => "forest",
            Topology::OpticalCore => "optical_core",
        }
    }

    pub fn node_count(self) -> usize {
        match self {
            Topology::Tree30 => 30,
            Topology::Tree40 => 40,
            Topology::Tree50 => 50,
            Topology::Tree70 => 70,
            Topology::Tree90 => 90,
            Topology::Forest => 72,
            Topology::OpticalCore => 54,
        }
    }

    /// Number of subtrees hanging off the core for the tree templates.
    pub fn tree_branches(self) -> Option<usize> {
        match self {
            Topology::Tree30 | Topology::Tree50 | Topology::Tree90 => Some(4),
            Topology::Tree40 => Some(6),
            Topology::Tree70 => Some(8),
            Topology::Forest | Topology::OpticalCore => None,
        }
    }

    pub fn valid_ids() -> String {
        Topology::ALL.iter().map(|t| t.id()).collect::<Vec<_>>().join(", ")
    }
}

impl fmt::Display for Topology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Topology {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase();
        let key = key.strip_suffix("network").unwrap_or(&key).to_string();
        let key = key.replace("treenetwork", "tree");
        match key.as_str() {
            "tree30" => Ok(Topology::Tree30),
            "tree40" => Ok(Topology::Tree40),
            "tree50" => Ok(Topology::Tree50),
            "tree70" => Ok(Topology::Tree70),
            "tree90" => Ok(Topology::Tree90),
            "forest" => Ok(Topology::Forest),
            "opticalcore" => Ok(Topology::OpticalCore),
            _ => Err(Error::Config(format!(
                "unknown topology '{s}'; valid ids: {}",
                Topology::valid_ids()
            ))),
        }
    }
}

impl TryFrom<String> for Topology {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Topology> for String {
    fn from(t: Topology) -> String {
        t.id().to_string()
    }
}

/// Undirected, connected, static network with a single Red entry node.
///
/// Node 0 is always the root of the layout (the core switch for the tree
/// templates); branches are the components left after removing it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Network {
    adjacency: Vec<Vec<usize>>,
    layers: Vec<Layer>,
    entry: usize,
}

/// On-disk form: `{nodes, edges, layers, entry}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NetworkFile {
    pub nodes: usize,
    pub edges: Vec<[usize; 2]>,
    pub layers: Vec<Layer>,
    pub entry: usize,
}

impl Network {
    pub fn new(node_count: usize, edges: &[(usize, usize)], layers: Vec<Layer>, entry: usize) -> Result<Self> {
        if node_count == 0 {
            return Err(Error::Config("network needs at least one node".into()));
        }
        if layers.len() != node_count {
            return Err(Error::Dimension {
                expected: node_count,
                got: layers.len(),
            });
        }
        if entry >= node_count {
            return Err(Error::InvalidNode {
                node: entry,
                count: node_count,
            });
        }
        let mut adjacency = vec![Vec::new(); node_count];
        for &(a, b) in edges {
            for v in [a, b] {
                if v >= node_count {
                    return Err(Error::InvalidNode {
                        node: v,
                        count: node_count,
                    });
                }
            }
            if a == b {
                return Err(Error::Config(format!("self-loop on node {a}")));
            }
            adjacency[a].push(b);
            adjacency[b].push(a);
        }
        for nbrs in &mut adjacency {
            nbrs.sort_unstable();
            nbrs.dedup();
        }
        let net = Network {
            adjacency,
            layers,
            entry,
        };
        let reach = bfs_distances(&net.adjacency, 0);
        if let Some(v) = reach.iter().position(|d| d.is_none()) {
            return Err(Error::Disconnected(v));
        }
        Ok(net)
    }

    /// Convenience constructor for ad-hoc graphs (all nodes labelled `Access`).
    pub fn from_edges(node_count: usize, edges: &[(usize, usize)], entry: usize) -> Result<Self> {
        Network::new(node_count, edges, vec![Layer::Access; node_count], entry)
    }

    pub fn node_count(&self) -> usize {
        self.adjacency.len()
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.adjacency[v]
    }

    pub fn adjacency(&self) -> &[Vec<usize>] {
        &self.adjacency
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adjacency[v].len()
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn entry(&self) -> usize {
        self.entry
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    /// Edges as `(a, b)` with `a < b`, sorted.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.edge_count());
        for (a, nbrs) in self.adjacency.iter().enumerate() {
            out.extend(nbrs.iter().filter(|&&b| a < b).map(|&b| (a, b)));
        }
        out
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.adjacency[a].binary_search(&b).is_ok()
    }

    /// Degree-1 nodes, ascending.
    pub fn leaves(&self) -> Vec<usize> {
        (0..self.node_count()).filter(|&v| self.degree(v) == 1).collect()
    }

    /// Leaves other than the entry node, ascending.
    pub fn hvn_candidates(&self) -> Vec<usize> {
        self.leaves().into_iter().filter(|&v| v != self.entry).collect()
    }

    /// Branch index of every node: the component of the graph minus node 0.
    /// Node 0 itself maps to `None`.
    pub fn branches(&self) -> Vec<Option<usize>> {
        let n = self.node_count();
        let mut label = vec![None; n];
        let mut next = 0;
        for start in 1..n {
            if label[start].is_some() {
                continue;
            }
            label[start] = Some(next);
            let mut queue = VecDeque::from([start]);
            while let Some(u) = queue.pop_front() {
                for &w in &self.adjacency[u] {
                    if w != 0 && label[w].is_none() {
                        label[w] = Some(next);
                        queue.push_back(w);
                    }
                }
            }
            next += 1;
        }
        label
    }

    pub fn branch_count(&self) -> usize {
        self.branches().iter().flatten().max().map_or(0, |b| b + 1)
    }

    /// Deterministic set of `count` Red entry points: the primary entry plus
    /// the lowest-id leaves of other branches, leaving at least three HVN
    /// candidates untouched.
    pub fn entry_points(&self, count: usize) -> Result<Vec<usize>> {
        let mut out = vec![self.entry];
        if count <= 1 {
            return Ok(out);
        }
        let branches = self.branches();
        let mut used_branches = vec![branches[self.entry]];
        let leaves = self.hvn_candidates();
        for &leaf in &leaves {
            if out.len() == count {
                break;
            }
            if !used_branches.contains(&branches[leaf]) {
                used_branches.push(branches[leaf]);
                out.push(leaf);
            }
        }
        for &leaf in &leaves {
            if out.len() == count {
                break;
            }
            if !out.contains(&leaf) {
                out.push(leaf);
            }
        }
        if out.len() < count || leaves.len() + 1 < count + 3 {
            return Err(Error::Config(format!(
                "network cannot host {count} entry points and three high-value nodes"
            )));
        }
        Ok(out)
    }

    pub fn to_file(&self) -> NetworkFile {
        NetworkFile {
            nodes: self.node_count(),
            edges: self.edges().into_iter().map(|(a, b)| [a, b]).collect(),
            layers: self.layers.clone(),
            entry: self.entry,
        }
    }

    pub fn from_file(file: &NetworkFile) -> Result<Self> {
        let edges: Vec<(usize, usize)> = file.edges.iter().map(|e| (e[0], e[1])).collect();
        Network::new(file.nodes, &edges, file.layers.clone(), file.entry)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_file()).expect("network serialises")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Network::from_file(&serde_json::from_str(s)?)
    }
}

/// Per-branch layer sizes `[edge, aggregation, access, subnet]` for a branch
/// of `size` nodes. Counts are non-decreasing below the edge node so every
/// parent receives at least one child and leaves are exactly the subnet nodes.
fn branch_layout(size: usize) -> [usize; 4] {
    assert!(size >= 4, "branch too small for four layers");
    let rest = size - 1;
    let aggregation = ((2 * rest + 7) / 14).max(1);
    let access = ((4 * rest + 7) / 14).max(aggregation);
    let subnet = rest - aggregation - access;
    debug_assert!(subnet >= access);
    [1, aggregation, access, subnet]
}

/// Attach `children` to `parents`: one child per parent in order, then the
/// remainder to uniformly chosen parents.
fn attach(parents: &[usize], children: &[usize], rng: &mut SimRng, edges: &mut Vec<(usize, usize)>) {
    for (k, &c) in children.iter().enumerate() {
        let p = if k < parents.len() {
            parents[k]
        } else {
            parents[rng.random_range(0..parents.len())]
        };
        edges.push((p, c));
    }
}

/// Lay out one tree under `root`. `layer_sizes[i]` nodes get `layer_labels[i]`.
/// Returns the ids of the deepest layer.
fn grow_tree(
    root: usize,
    layer_sizes: &[usize],
    layer_labels: &[Layer],
    rng: &mut SimRng,
    layers: &mut Vec<Layer>,
    edges: &mut Vec<(usize, usize)>,
) -> Vec<usize> {
    let mut parents = vec![root];
    for (&count, &label) in layer_sizes.iter().zip(layer_labels) {
        let start = layers.len();
        let ids: Vec<usize> = (start..start + count).collect();
        layers.extend(std::iter::repeat_n(label, count));
        attach(&parents, &ids, rng, edges);
        parents = ids;
    }
    parents
}

fn tree_network(total: usize, branches: usize, seed: u64) -> Result<Network> {
    let mut rng = seeds::rng(seed);
    let rest = total - 1;
    let base = rest / branches;
    let extra = rest % branches;
    let mut layers = vec![Layer::Core];
    let mut edges = Vec::with_capacity(total - 1);
    let mut entry = None;
    for b in 0..branches {
        let size = base + usize::from(b < extra);
        let sizes = branch_layout(size);
        let leaves = grow_tree(
            0,
            &sizes,
            &[Layer::Edge, Layer::Aggregation, Layer::Access, Layer::Subnet],
            &mut rng,
            &mut layers,
            &mut edges,
        );
        if b == 0 {
            entry = leaves.first().copied();
        }
    }
    debug_assert_eq!(layers.len(), total);
    Network::new(total, &edges, layers, entry.expect("first branch has a subnet"))
}

/// Four 18-node trees whose roots form a backbone path.
fn forest_network(seed: u64) -> Result<Network> {
    let mut rng = seeds::rng(seed);
    let mut layers = Vec::with_capacity(72);
    let mut edges = Vec::new();
    let mut roots = Vec::new();
    let mut entry = None;
    for t in 0..4 {
        let root = layers.len();
        layers.push(if t == 0 { Layer::Core } else { Layer::Edge });
        if let Some(&prev) = roots.last() {
            edges.push((prev, root));
        }
        roots.push(root);
        let leaves = grow_tree(
            root,
            &[3, 6, 8],
            &[Layer::Aggregation, Layer::Access, Layer::Subnet],
            &mut rng,
            &mut layers,
            &mut edges,
        );
        if t == 0 {
            entry = leaves.first().copied();
        }
    }
    Network::new(layers.len(), &edges, layers, entry.expect("entry leaf"))
}

/// Four fully meshed servers, a ring of five optical routers (each homed to
/// two servers), three switches per router and two hosts per switch.
fn optical_core_network(seed: u64) -> Result<Network> {
    let mut rng = seeds::rng(seed);
    let mut layers = vec![Layer::Core; 4];
    let mut edges = Vec::new();
    for a in 0..4 {
        for b in a + 1..4 {
            edges.push((a, b));
        }
    }
    let routers: Vec<usize> = (4..9).collect();
    layers.extend(std::iter::repeat_n(Layer::Edge, routers.len()));
    for (i, &r) in routers.iter().enumerate() {
        edges.push((r, i % 4));
        edges.push((r, (i + 1) % 4));
        edges.push((r, routers[(i + 1) % routers.len()]));
    }
    let mut entry = None;
    for (i, &r) in routers.iter().enumerate() {
        let hosts = grow_tree(
            r,
            &[3, 6],
            &[Layer::Aggregation, Layer::Subnet],
            &mut rng,
            &mut layers,
            &mut edges,
        );
        if i == 0 {
            entry = hosts.first().copied();
        }
    }
    Network::new(layers.len(), &edges, layers, entry.expect("entry host"))
}

/// Build a named topology. Deterministic in `(topology, seed)`; the seed only
/// decides which parent receives each surplus child.
pub fn generate_network(topology: Topology, seed: u64) -> Result<Network> {
    match topology {
        Topology::Forest => forest_network(seed),
        Topology::OpticalCore => optical_core_network(seed),
        tree => tree_network(
            tree.node_count(),
            tree.tree_branches().expect("tree topology"),
            seed,
        ),
    }
}

/// String-keyed variant of [`generate_network`].
pub fn generate_tree_network(name: &str, seed: u64) -> Result<Network> {
    generate_network(name.parse()?, seed)
}

/// BFS hop distances from `source`; `None` for unreachable nodes.
pub fn bfs_distances(adjacency: &[Vec<usize>], source: usize) -> Vec<Option<u32>> {
    let mut dist = vec![None; adjacency.len()];
    dist[source] = Some(0);
    let mut queue = VecDeque::from([source]);
    while let Some(u) = queue.pop_front() {
        let du = dist[u].expect("queued nodes are labelled");
        for &w in &adjacency[u] {
            if dist[w].is_none() {
                dist[w] = Some(du + 1);
                queue.push_back(w);
            }
        }
    }
    dist
}

/// Lexicographically smallest shortest path from `from` to `to` (inclusive).
pub fn shortest_path(adjacency: &[Vec<usize>], from: usize, to: usize) -> Option<Vec<usize>> {
    let back = bfs_distances(adjacency, to);
    let mut d = back[from]?;
    let mut path = vec![from];
    let mut cur = from;
    while d > 0 {
        cur = *adjacency[cur]
            .iter()
            .filter(|&&w| back[w] == Some(d - 1))
            .min()
            .expect("a predecessor exists on a shortest path");
        path.push(cur);
        d -= 1;
    }
    Some(path)
}

/// All-pairs hop distances of a connected network.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CostMatrix {
    n: usize,
    dist: Vec<u32>,
    diameter: u32,
}

impl CostMatrix {
    pub fn from_adjacency(adjacency: &[Vec<usize>]) -> Result<Self> {
        let n = adjacency.len();
        let mut dist = Vec::with_capacity(n * n);
        for s in 0..n {
            for (v, d) in bfs_distances(adjacency, s).into_iter().enumerate() {
                dist.push(d.ok_or(Error::Disconnected(if s == 0 { v } else { s }))?);
            }
        }
        let diameter = dist.iter().copied().max().unwrap_or(0);
        Ok(CostMatrix { n, dist, diameter })
    }

    /// Build from a dense matrix; used for hand-made ground costs.
    pub fn from_rows(rows: &[Vec<u32>]) -> Result<Self> {
        let n = rows.len();
        let mut dist = Vec::with_capacity(n * n);
        for row in rows {
            if row.len() != n {
                return Err(Error::Dimension {
                    expected: n,
                    got: row.len(),
                });
            }
            dist.extend_from_slice(row);
        }
        let diameter = dist.iter().copied().max().unwrap_or(0);
        Ok(CostMatrix { n, dist, diameter })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> u32 {
        self.dist[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[u32] {
        &self.dist[i * self.n..(i + 1) * self.n]
    }

    pub fn diameter(&self) -> u32 {
        self.diameter
    }
}

pub fn all_pairs_shortest_paths(net: &Network) -> Result<CostMatrix> {
    CostMatrix::from_adjacency(net.adjacency())
}

/// The three high-value nodes of an episode and, once known, which of them
/// Red finally captured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HvnPlacement {
    pub hvns: [usize; 3],
    pub target_index: Option<usize>,
}

impl HvnPlacement {
    pub fn target(&self) -> Option<usize> {
        self.target_index.map(|i| self.hvns[i])
    }

    pub fn contains(&self, v: usize) -> bool {
        self.hvns.contains(&v)
    }
}

/// Three distinct non-entry leaves, uniformly without replacement.
pub fn place_high_value_nodes(net: &Network, rng_seed: u64) -> Result<HvnPlacement> {
    place_high_value_nodes_with(net, &[net.entry()], &mut seeds::rng(rng_seed))
}

/// As [`place_high_value_nodes`], excluding every node in `entries` and
/// drawing from a caller-owned generator.
pub fn place_high_value_nodes_with(net: &Network, entries: &[usize], rng: &mut SimRng) -> Result<HvnPlacement> {
    let eligible: Vec<usize> = net
        .leaves()
        .into_iter()
        .filter(|v| !entries.contains(v))
        .collect();
    if eligible.len() < 3 {
        return Err(Error::Config(format!(
            "need at least 3 non-entry leaves for high-value nodes, found {}",
            eligible.len()
        )));
    }
    let picks = index::sample(rng, eligible.len(), 3);
    let hvns = [eligible[picks.index(0)], eligible[picks.index(1)], eligible[picks.index(2)]];
    Ok(HvnPlacement {
        hvns,
        target_index: None,
    })
}

/// `min(dist(v, entry), dist(v, target))` per node.
pub fn node_remoteness(net: &Network, cm: &CostMatrix, placement: &HvnPlacement) -> Result<Vec<f64>> {
    let target = placement
        .target()
        .ok_or_else(|| Error::Config("placement has no target".into()))?;
    let entry = net.entry();
    Ok((0..net.node_count())
        .map(|v| f64::from(cm.get(v, entry).min(cm.get(v, target))))
        .collect())
}

/// Hop distance of every node to the entry node.
pub fn entry_remoteness(net: &Network, cm: &CostMatrix) -> Vec<f64> {
    cm.row(net.entry()).iter().map(|&d| f64::from(d)).collect()
}
