//! Tournaments between agent populations and scoring of external
//! predictions against dataset ground truth.

use std::collections::{BTreeMap, BTreeSet};
use std::io::BufRead;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agents::{blue_policy, red_policy, BluePolicyId, RedPolicyId, RedPolicySpec};
use crate::dataset::ToMSample;
use crate::env::{rollout, EnvConfig, EpisodeLabel};
use crate::error::{Error, Result};
use crate::graph::{all_pairs_shortest_paths, entry_remoteness, generate_network, shortest_path, CostMatrix, Network, Topology};
use crate::seeds::{self, SimRng};
use crate::transport::{ntd_weighted, NodeDistribution, WeightingConfig};

const NETWORK_STREAM: u64 = 1;
const EPISODE_STREAM: u64 = 2;
const SPECIES_STREAM: u64 = 3;
const KMEANS_MAX_ITERS: usize = 300;
const PREDICTION_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TournamentConfig {
    pub blues: Vec<BluePolicyId>,
    pub reds: Vec<RedPolicyId>,
    pub topologies: Vec<Topology>,
    pub episodes: usize,
    pub seed: u64,
    /// Concentration of the per-episode Red parameter draws.
    pub alpha: f64,
    pub env: EnvConfig,
}

impl Default for TournamentConfig {
    /// Every agent on three networks with three entry nodes each.
    fn default() -> Self {
        TournamentConfig {
            blues: BluePolicyId::ALL.to_vec(),
            reds: RedPolicyId::ALL.to_vec(),
            topologies: vec![Topology::Tree30, Topology::Forest, Topology::OpticalCore],
            episodes: 100,
            seed: 0,
            alpha: 0.01,
            env: EnvConfig {
                entry_count: 3,
                ..EnvConfig::default()
            },
        }
    }
}

/// Aggregates for one (blue, red, network) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TournamentCell {
    pub blue: BluePolicyId,
    pub red: RedPolicyId,
    pub network: String,
    pub episodes: usize,
    pub blue_wins: usize,
    pub mean_reward: f64,
    pub win_rate: f64,
    pub mean_duration: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TournamentTable {
    pub cells: Vec<TournamentCell>,
}

impl TournamentTable {
    /// Cells averaged over networks, labelled `"average"`.
    pub fn averaged(&self) -> Vec<TournamentCell> {
        let mut groups: BTreeMap<(BluePolicyId, RedPolicyId), Vec<&TournamentCell>> = BTreeMap::new();
        for c in &self.cells {
            groups.entry((c.blue, c.red)).or_default().push(c);
        }
        let mut out: Vec<TournamentCell> = groups
            .into_iter()
            .map(|((blue, red), cells)| {
                let k = cells.len() as f64;
                TournamentCell {
                    blue,
                    red,
                    network: "average".into(),
                    episodes: cells.iter().map(|c| c.episodes).sum(),
                    blue_wins: cells.iter().map(|c| c.blue_wins).sum(),
                    mean_reward: cells.iter().map(|c| c.mean_reward).sum::<f64>() / k,
                    win_rate: cells.iter().map(|c| c.win_rate).sum::<f64>() / k,
                    mean_duration: cells.iter().map(|c| c.mean_duration).sum::<f64>() / k,
                }
            })
            .collect();
        let order = |c: &TournamentCell| (self.blue_rank(c.blue), self.red_rank(c.red));
        out.sort_by_key(order);
        out
    }

    fn blue_rank(&self, b: BluePolicyId) -> usize {
        self.cells.iter().position(|c| c.blue == b).unwrap_or(usize::MAX)
    }

    fn red_rank(&self, r: RedPolicyId) -> usize {
        self.cells.iter().position(|c| c.red == r).unwrap_or(usize::MAX)
    }

    /// Blue win rate averaged over networks and the given Red agents.
    pub fn blue_win_rate(&self, blue: BluePolicyId, reds: &[RedPolicyId]) -> f64 {
        let rates: Vec<f64> = self
            .averaged()
            .into_iter()
            .filter(|c| c.blue == blue && reds.contains(&c.red))
            .map(|c| c.win_rate)
            .collect();
        rates.iter().sum::<f64>() / rates.len().max(1) as f64
    }

    /// Blue win rate against `red` averaged over networks and the given Blues.
    pub fn red_difficulty(&self, red: RedPolicyId, blues: &[BluePolicyId]) -> f64 {
        let rates: Vec<f64> = self
            .averaged()
            .into_iter()
            .filter(|c| c.red == red && blues.contains(&c.blue))
            .map(|c| c.win_rate)
            .collect();
        rates.iter().sum::<f64>() / rates.len().max(1) as f64
    }
}

/// Play `episodes` games for every (blue, red, network) cell. Parameterised
/// Red agents receive a fresh species draw every episode.
pub fn run_tournament(config: &TournamentConfig) -> Result<TournamentTable> {
    for (name, empty) in [
        ("blue", config.blues.is_empty()),
        ("red", config.reds.is_empty()),
        ("network", config.topologies.is_empty()),
    ] {
        if empty {
            return Err(Error::Empty(format!("{name} set of the tournament")));
        }
    }
    config.env.validate()?;
    let networks = config
        .topologies
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let net = generate_network(t, seeds::derive_path(config.seed, &[NETWORK_STREAM, i as u64]))?;
            let cm = all_pairs_shortest_paths(&net)?;
            Ok((t, net, cm))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut jobs = Vec::new();
    for (bi, &blue) in config.blues.iter().enumerate() {
        for (ri, &red) in config.reds.iter().enumerate() {
            for ni in 0..networks.len() {
                jobs.push((bi, blue, ri, red, ni));
            }
        }
    }
    let cells = jobs
        .par_iter()
        .map(|&(bi, blue, ri, red, ni)| {
            let (topology, net, cm) = &networks[ni];
            let species = seeds::derive_path(config.seed, &[SPECIES_STREAM, ri as u64]);
            let mut agent = blue_policy(blue);
            let (mut reward, mut wins, mut duration) = (0.0, 0, 0usize);
            for ep in 0..config.episodes {
                let draw = (bi * networks.len() + ni) * config.episodes + ep;
                let spec = RedPolicySpec::from_species(red, config.alpha, species, draw)?;
                let mut opponent = red_policy(&spec);
                // Common random numbers: every pairing meets the same episodes.
                let seed = seeds::derive_path(config.seed, &[EPISODE_STREAM, ni as u64, ep as u64]);
                let label = EpisodeLabel {
                    episode_id: format!("{blue}-{red}-{topology}-{ep}"),
                    network: topology.id().to_string(),
                };
                let traj = rollout(net, cm, &config.env, &mut agent, &mut opponent, seed, &label)?;
                reward += traj.total_blue_reward();
                wins += usize::from(!traj.red_won());
                duration += traj.final_step();
            }
            let n = config.episodes.max(1) as f64;
            Ok(TournamentCell {
                blue,
                red,
                network: topology.id().to_string(),
                episodes: config.episodes,
                blue_wins: wins,
                mean_reward: reward / n,
                win_rate: wins as f64 / n,
                mean_duration: duration as f64 / n,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TournamentTable { cells })
}

/// An external model's prediction for one sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub sample_id: String,
    /// Probabilities over the sample's `hvn_candidates`, in that order.
    pub pred_hvn: Vec<f64>,
    #[serde(default)]
    pub pred_sr: BTreeMap<String, Vec<f64>>,
}

fn check_probabilities(v: &[f64], what: &str) -> Result<()> {
    let sum: f64 = v.iter().sum();
    if v.is_empty() || v.iter().any(|x| !x.is_finite() || *x < 0.0) || (sum - 1.0).abs() > PREDICTION_TOL {
        return Err(Error::Distribution(format!("{what} is not normalised (sum {sum})")));
    }
    Ok(())
}

impl PredictionRecord {
    pub fn validate(&self) -> Result<()> {
        check_probabilities(&self.pred_hvn, &format!("pred_hvn of {}", self.sample_id))?;
        for (g, v) in &self.pred_sr {
            check_probabilities(v, &format!("pred_sr[{g}] of {}", self.sample_id))?;
        }
        Ok(())
    }

    /// Predicted node: the candidate with the highest probability, lowest
    /// node id among ties.
    pub fn predicted_hvn(&self, candidates: &[usize; 3]) -> Result<usize> {
        if self.pred_hvn.len() != candidates.len() {
            return Err(Error::Dimension {
                expected: candidates.len(),
                got: self.pred_hvn.len(),
            });
        }
        let best = self.pred_hvn.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Ok(candidates
            .iter()
            .zip(&self.pred_hvn)
            .filter(|(_, &p)| p == best)
            .map(|(&c, _)| c)
            .min()
            .expect("non-empty candidates"))
    }
}

pub fn read_predictions<R: BufRead>(input: R) -> Result<Vec<PredictionRecord>> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: PredictionRecord = serde_json::from_str(&line)
            .map_err(|e| Error::Data(format!("prediction line {}: {e}", i + 1)))?;
        rec.validate()?;
        out.push(rec);
    }
    Ok(out)
}

/// Pair each prediction with its sample; unknown or repeated ids are errors.
pub fn match_samples<'a>(preds: &'a [PredictionRecord], samples: &'a [ToMSample]) -> Result<Vec<(&'a PredictionRecord, &'a ToMSample)>> {
    let by_id: BTreeMap<&str, &ToMSample> = samples.iter().map(|s| (s.sample_id.as_str(), s)).collect();
    let mut seen = BTreeSet::new();
    let mut missing = Vec::new();
    let mut pairs = Vec::with_capacity(preds.len());
    for p in preds {
        if !seen.insert(p.sample_id.as_str()) {
            return Err(Error::Data(format!("duplicate prediction for sample {}", p.sample_id)));
        }
        match by_id.get(p.sample_id.as_str()) {
            Some(s) => pairs.push((p, *s)),
            None => missing.push(p.sample_id.as_str()),
        }
    }
    if !missing.is_empty() {
        let head: Vec<&str> = missing.iter().take(10).copied().collect();
        return Err(Error::Data(format!(
            "{} predicted sample ids are not in the manifest: {}",
            missing.len(),
            head.join(", ")
        )));
    }
    Ok(pairs)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HvtScore {
    pub weighted_f1: f64,
    /// Node ids indexing the confusion matrix rows (truth) and columns.
    pub classes: Vec<usize>,
    pub confusion: Vec<Vec<usize>>,
    pub support: Vec<usize>,
    pub f1: Vec<f64>,
}

impl HvtScore {
    /// Confusion matrix with each row scaled to sum to one.
    pub fn row_normalised(&self) -> Vec<Vec<f64>> {
        self.confusion
            .iter()
            .map(|row| {
                let total: usize = row.iter().sum();
                row.iter().map(|&c| if total == 0 { 0.0 } else { c as f64 / total as f64 }).collect()
            })
            .collect()
    }
}

/// Support-weighted F1 over `(truth, predicted)` class pairs.
pub fn weighted_f1(pairs: &[(usize, usize)]) -> Result<HvtScore> {
    if pairs.is_empty() {
        return Err(Error::Empty("no predictions to score".into()));
    }
    let classes: Vec<usize> = pairs
        .iter()
        .flat_map(|&(t, p)| [t, p])
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let idx = |c: usize| classes.binary_search(&c).expect("class present");
    let k = classes.len();
    let mut confusion = vec![vec![0usize; k]; k];
    for &(t, p) in pairs {
        confusion[idx(t)][idx(p)] += 1;
    }
    let support: Vec<usize> = confusion.iter().map(|r| r.iter().sum()).collect();
    let f1: Vec<f64> = (0..k)
        .map(|c| {
            let tp = confusion[c][c] as f64;
            let predicted: usize = confusion.iter().map(|r| r[c]).sum();
            let denom = support[c] as f64 + predicted as f64;
            if denom == 0.0 {
                0.0
            } else {
                2.0 * tp / denom
            }
        })
        .collect();
    let n = pairs.len() as f64;
    let weighted_f1 = (0..k).map(|c| support[c] as f64 * f1[c]).sum::<f64>() / n;
    Ok(HvtScore {
        weighted_f1,
        classes,
        confusion,
        support,
        f1,
    })
}

pub fn score_hvt(preds: &[PredictionRecord], samples: &[ToMSample]) -> Result<HvtScore> {
    let pairs = match_samples(preds, samples)?
        .into_iter()
        .map(|(p, s)| Ok((s.truth_hvn, p.predicted_hvn(&s.hvn_candidates)?)))
        .collect::<Result<Vec<_>>>()?;
    weighted_f1(&pairs)
}

/// Remoteness weightings: coefficient on distance-from-entry and floor `f`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SrScoring {
    pub gammas: Vec<String>,
    pub coefficients: Vec<f64>,
    pub floor: f64,
}

impl Default for SrScoring {
    fn default() -> Self {
        SrScoring {
            gammas: crate::dataset::DEFAULT_GAMMAS.iter().map(|&g| crate::dataset::gamma_key(g)).collect(),
            coefficients: vec![-1.0, 0.0, 1.0],
            floor: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SrSampleScore {
    pub sample_id: String,
    pub network: Topology,
    pub gamma: String,
    pub coefficient: f64,
    pub ntd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SrStratum {
    pub network: Topology,
    pub gamma: String,
    pub coefficient: f64,
    pub count: usize,
    pub mean: f64,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SrScore {
    pub samples: Vec<SrSampleScore>,
    pub strata: Vec<SrStratum>,
}

/// Linear-interpolated quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Network geometry needed to score one topology.
pub struct ScoringNetwork {
    pub cm: CostMatrix,
    pub remoteness: Vec<f64>,
    /// Branch of every node, with the trunk from the entry to node 0 left
    /// unlabelled since every attack path crosses it.
    pub branches: Vec<Option<usize>>,
}

impl ScoringNetwork {
    pub fn new(net: &Network) -> Result<Self> {
        let cm = all_pairs_shortest_paths(net)?;
        let mut branches = net.branches();
        for v in shortest_path(net.adjacency(), net.entry(), 0).unwrap_or_default() {
            branches[v] = None;
        }
        Ok(ScoringNetwork {
            remoteness: entry_remoteness(net, &cm),
            branches,
            cm,
        })
    }
}

/// Weighted NTD between every predicted and true SR, per sample, discount
/// and remoteness coefficient, plus per-stratum summaries.
pub fn score_sr(
    preds: &[PredictionRecord],
    samples: &[ToMSample],
    networks: &BTreeMap<Topology, ScoringNetwork>,
    scoring: &SrScoring,
) -> Result<SrScore> {
    let pairs = match_samples(preds, samples)?;
    let mut jobs = Vec::new();
    for (p, s) in &pairs {
        for g in p.pred_sr.keys() {
            if !s.truth_sr.contains_key(g) {
                return Err(Error::Data(format!("gamma {g} predicted for {} has no ground truth", s.sample_id)));
            }
        }
        for g in &scoring.gammas {
            if p.pred_sr.contains_key(g) {
                jobs.push((*p, *s, g));
            }
        }
    }
    let scored: Vec<Vec<SrSampleScore>> = jobs
        .par_iter()
        .map(|&(p, s, g)| {
            let geo = networks
                .get(&s.network)
                .ok_or_else(|| Error::Data(format!("no network for topology {}", s.network)))?;
            let pred = NodeDistribution::new(p.pred_sr[g].clone())?;
            let truth = s.truth(g)?;
            scoring
                .coefficients
                .iter()
                .map(|&c| {
                    let w = WeightingConfig::single(geo.remoteness.clone(), c, scoring.floor)?;
                    Ok(SrSampleScore {
                        sample_id: s.sample_id.clone(),
                        network: s.network,
                        gamma: g.clone(),
                        coefficient: c,
                        ntd: ntd_weighted(&pred, &truth, &geo.cm, &w)?,
                    })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let samples: Vec<SrSampleScore> = scored.into_iter().flatten().collect();
    let mut groups: BTreeMap<(Topology, String, usize), Vec<f64>> = BTreeMap::new();
    for s in &samples {
        let c = scoring.coefficients.iter().position(|&c| c == s.coefficient).unwrap_or(0);
        groups.entry((s.network, s.gamma.clone(), c)).or_default().push(s.ntd);
    }
    let strata = groups
        .into_iter()
        .map(|((network, gamma, c), mut v)| {
            v.sort_by(f64::total_cmp);
            SrStratum {
                network,
                gamma,
                coefficient: scoring.coefficients[c],
                count: v.len(),
                mean: v.iter().sum::<f64>() / v.len() as f64,
                median: quantile(&v, 0.5),
                q1: quantile(&v, 0.25),
                q3: quantile(&v, 0.75),
                min: v[0],
                max: v[v.len() - 1],
            }
        })
        .collect();
    Ok(SrScore { samples, strata })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightingGap {
    pub sample_id: String,
    pub gap: f64,
    pub ntd_plus: f64,
    pub ntd_minus: f64,
}

/// Sample maximising `|NTD₊₁ − NTD₋₁|` within a (network, gamma) stratum;
/// the first such sample wins ties.
pub fn max_weighting_gap(score: &SrScore, network: Topology, gamma: &str) -> Result<WeightingGap> {
    let mut plus: Vec<(&str, f64)> = Vec::new();
    let mut minus: BTreeMap<&str, f64> = BTreeMap::new();
    for s in score.samples.iter().filter(|s| s.network == network && s.gamma == gamma) {
        if s.coefficient == 1.0 {
            plus.push((&s.sample_id, s.ntd));
        } else if s.coefficient == -1.0 {
            minus.insert(&s.sample_id, s.ntd);
        }
    }
    let mut best: Option<WeightingGap> = None;
    for (id, p) in plus {
        let Some(&m) = minus.get(id) else { continue };
        let gap = (p - m).abs();
        if best.as_ref().is_none_or(|b| gap > b.gap) {
            best = Some(WeightingGap {
                sample_id: id.to_string(),
                gap,
                ntd_plus: p,
                ntd_minus: m,
            });
        }
    }
    best.ok_or_else(|| Error::Empty(format!("no samples scored with coefficients ±1 for {network} at gamma {gamma}")))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Clustering {
    pub assignment: Vec<usize>,
    pub sizes: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    /// Branch holding most centroid mass; `None` for empty clusters or
    /// centroids concentrated on branch-less nodes.
    pub labels: Vec<Option<usize>>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// k-means++ seeding followed by Lloyd iterations, Euclidean distance.
pub fn hedging_clusters(points: &[Vec<f64>], k: usize, seed: u64, branches: &[Option<usize>]) -> Result<Clustering> {
    if k == 0 || points.len() < k {
        return Err(Error::Config(format!("k-means needs 1 <= k <= {} samples, got k = {k}", points.len())));
    }
    let dim = points[0].len();
    if let Some(p) = points.iter().find(|p| p.len() != dim) {
        return Err(Error::Dimension {
            expected: dim,
            got: p.len(),
        });
    }
    let mut rng: SimRng = seeds::rng(seed);
    let mut centroids = vec![points[rng.random_range(0..points.len())].clone()];
    while centroids.len() < k {
        let d: Vec<f64> = points
            .iter()
            .map(|p| centroids.iter().map(|c| sq_dist(p, c)).fold(f64::INFINITY, f64::min))
            .collect();
        let total: f64 = d.iter().sum();
        let next = if total == 0.0 {
            rng.random_range(0..points.len())
        } else {
            let r = rng.random::<f64>() * total;
            let mut acc = 0.0;
            d.iter()
                .position(|&x| {
                    acc += x;
                    r < acc
                })
                .unwrap_or(points.len() - 1)
        };
        centroids.push(points[next].clone());
    }
    let nearest = |p: &[f64], cs: &[Vec<f64>]| {
        let mut best = (0, f64::INFINITY);
        for (j, c) in cs.iter().enumerate() {
            let d = sq_dist(p, c);
            if d < best.1 {
                best = (j, d);
            }
        }
        best.0
    };
    let mut assignment: Vec<usize> = points.iter().map(|p| nearest(p, &centroids)).collect();
    for _ in 0..KMEANS_MAX_ITERS {
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &a) in points.iter().zip(&assignment) {
            counts[a] += 1;
            for (s, x) in sums[a].iter_mut().zip(p) {
                *s += x;
            }
        }
        for j in 0..k {
            if counts[j] > 0 {
                centroids[j] = sums[j].iter().map(|s| s / counts[j] as f64).collect();
            }
        }
        let next: Vec<usize> = points.iter().map(|p| nearest(p, &centroids)).collect();
        if next == assignment {
            break;
        }
        assignment = next;
    }
    let mut sizes = vec![0; k];
    for &a in &assignment {
        sizes[a] += 1;
    }
    let labels = centroids
        .iter()
        .zip(&sizes)
        .map(|(c, &size)| {
            if size == 0 {
                return None;
            }
            let mut mass: BTreeMap<usize, f64> = BTreeMap::new();
            for (v, &m) in c.iter().enumerate() {
                if let Some(Some(b)) = branches.get(v) {
                    *mass.entry(*b).or_default() += m;
                }
            }
            mass.into_iter()
                .filter(|&(_, m)| m > 0.0)
                .fold(None, |best: Option<(usize, f64)>, (b, m)| match best {
                    Some((_, bm)) if bm >= m => best,
                    _ => Some((b, m)),
                })
                .map(|(b, _)| b)
        })
        .collect();
    Ok(Clustering {
        assignment,
        sizes,
        centroids,
        labels,
    })
}
