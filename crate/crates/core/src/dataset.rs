//! Theory-of-mind sample construction.
//!
//! A dataset is built from the Cartesian product of Blue agents, Red agents
//! and topologies. Every game yields `n_c` current episodes, each owning a
//! private pool of `n_p` past episodes, so no past trajectory is shared
//! between samples. Only Red wins become samples; the ground truth is the
//! captured high-value node plus discounted successor representations of
//! Red's attack progression from step `t` onwards.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::{index, SliceRandom};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agents::{blue_policy, red_policy, BluePolicyId, RedPolicyId, RedPolicySpec};
use crate::env::{rollout, EnvConfig, EpisodeLabel, EpisodeTrajectory, Outcome, StateObservation};
use crate::error::{Error, Result};
use crate::graph::{all_pairs_shortest_paths, generate_network, CostMatrix, Network, Topology};
use crate::seeds::{self, SimRng};
use crate::transport::NodeDistribution;

pub const MANIFEST_SCHEMA: u32 = 1;
pub const DEFAULT_GAMMAS: [f64; 3] = [0.5, 0.95, 0.999];

// Seed streams below the master seed.
const NETWORK_STREAM: u64 = 1;
const SPECIES_STREAM: u64 = 2;
const GAME_STREAM: u64 = 3;
const SPLIT_STREAM: u64 = 4;
const SAMPLE_STREAM: u64 = 5;

/// Manifest key for a discount factor, e.g. `"0.95"`.
pub fn gamma_key(gamma: f64) -> String {
    gamma.to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameConfig {
    pub game_id: String,
    pub blue: BluePolicyId,
    pub red: RedPolicySpec,
    pub network: Topology,
    pub base_seed: u64,
    /// Whether the Red agent belongs to the hold-out population.
    #[serde(default)]
    pub holdout: bool,
}

/// Cartesian product in blue-major, then red, then network order.
pub fn build_game_set(
    blues: &[BluePolicyId],
    reds: &[RedPolicySpec],
    networks: &[Topology],
    master_seed: u64,
) -> Result<Vec<GameConfig>> {
    for (name, len) in [("blue", blues.len()), ("red", reds.len()), ("network", networks.len())] {
        if len == 0 {
            return Err(Error::Empty(format!("{name} agent set")));
        }
    }
    let mut games = Vec::with_capacity(blues.len() * reds.len() * networks.len());
    for &blue in blues {
        for red in reds {
            for &network in networks {
                let index = games.len();
                games.push(GameConfig {
                    game_id: format!("g{index:05}"),
                    blue,
                    red: red.clone(),
                    network,
                    base_seed: seeds::derive_path(master_seed, &[GAME_STREAM, index as u64]),
                    holdout: false,
                });
            }
        }
    }
    Ok(games)
}

/// Current episodes of one game and their private past pools.
#[derive(Debug, Clone)]
pub struct GameEpisodes {
    pub current: Vec<EpisodeTrajectory>,
    pub pools: Vec<Vec<EpisodeTrajectory>>,
}

impl GameEpisodes {
    pub fn episode_count(&self) -> usize {
        self.current.len() + self.pools.iter().map(Vec::len).sum::<usize>()
    }

    pub fn all(&self) -> impl Iterator<Item = &EpisodeTrajectory> {
        self.current.iter().chain(self.pools.iter().flatten())
    }
}

pub fn current_episode_id(game: &GameConfig, c: usize) -> String {
    format!("{}_c{c}", game.game_id)
}

pub fn past_episode_id(game: &GameConfig, c: usize, p: usize) -> String {
    format!("{}_c{c}_p{p}", game.game_id)
}

/// Roll out `n_c` current episodes and `n_c · n_p` past episodes.
pub fn generate_game_episodes(
    game: &GameConfig,
    net: &Network,
    cm: &CostMatrix,
    env: &EnvConfig,
    n_c: usize,
    n_p: usize,
) -> Result<GameEpisodes> {
    let mut blue = blue_policy(game.blue);
    let mut red = red_policy(&game.red);
    let mut play = |episode_id: String, path: &[u64]| {
        let label = EpisodeLabel {
            episode_id,
            network: game.network.id().to_string(),
        };
        rollout(net, cm, env, &mut blue, &mut red, seeds::derive_path(game.base_seed, path), &label)
            .map_err(|e| Error::Data(format!("game {} ({} vs {}): {e}", game.game_id, game.blue, game.red)))
    };
    let mut current = Vec::with_capacity(n_c);
    let mut pools = Vec::with_capacity(n_c);
    for c in 0..n_c {
        current.push(play(current_episode_id(game, c), &[c as u64, 0])?);
        let pool = (0..n_p)
            .map(|p| play(past_episode_id(game, c, p), &[c as u64, 1 + p as u64]))
            .collect::<Result<Vec<_>>>()?;
        pools.push(pool);
    }
    Ok(GameEpisodes { current, pools })
}

/// `k` evenly spaced step indices over `[0, final_step]`, endpoints included.
pub fn subsample_indices(final_step: usize, k: usize) -> Result<Vec<usize>> {
    if k == 0 {
        return Err(Error::Config("subsample size must be at least 1".into()));
    }
    if final_step < k {
        return Ok((0..=final_step).collect());
    }
    if k == 1 {
        return Ok(vec![0]);
    }
    Ok((0..k)
        .map(|i| ((i * final_step) as f64 / (k - 1) as f64).round() as usize)
        .collect())
}

pub fn subsample_past(traj: &EpisodeTrajectory, k: usize) -> Result<Vec<StateObservation>> {
    if traj.steps.is_empty() {
        return Err(Error::Empty(format!("trajectory {}", traj.header.episode_id)));
    }
    Ok(subsample_indices(traj.final_step(), k)?
        .into_iter()
        .map(|i| traj.steps[i].obs.clone())
        .collect())
}

/// Uniform over {0, 1} when the episode is long enough, else 0.
pub fn pick_current_step(traj: &EpisodeTrajectory, rng: &mut SimRng) -> usize {
    if traj.final_step() >= 2 {
        rng.random_range(0..2)
    } else {
        0
    }
}

/// Normalised discounted occupancy of the nodes Red compromised from step
/// `t` onwards. Entry nodes count as occupied at step 0.
pub fn sr_ground_truth(traj: &EpisodeTrajectory, t: usize, gamma: f64) -> Result<NodeDistribution> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::Config(format!("discount must lie in (0, 1), got {gamma}")));
    }
    if t > traj.final_step() {
        return Err(Error::Config(format!("step {t} beyond final step {}", traj.final_step())));
    }
    let mut raw = vec![0.0; traj.header.node_count];
    let mut weight = 1.0;
    for record in &traj.steps[t..] {
        if record.t == 0 {
            for &e in &traj.header.entries {
                raw[e] += weight;
            }
        }
        for &v in &record.red_compromised {
            raw[v] += weight;
        }
        weight *= gamma;
    }
    if raw.iter().all(|&x| x == 0.0) {
        return Err(Error::Data(format!(
            "episode {}: Red acts on no node from step {t}",
            traj.header.episode_id
        )));
    }
    NodeDistribution::normalize(raw)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

/// A past trajectory reference and the steps subsampled from it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PastRef {
    pub episode_id: String,
    pub steps: Vec<usize>,
}

/// One theory-of-mind sample. Observations live in the episode files; the
/// sample stores references and the ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToMSample {
    pub sample_id: String,
    pub game_id: String,
    pub network: Topology,
    pub blue: String,
    pub red: String,
    /// Current episode; its prefix `0..=t` is the current trajectory.
    pub episode_id: String,
    pub t: usize,
    pub past: Vec<PastRef>,
    /// Candidate high-value nodes; `pred_hvn` vectors follow this order.
    pub hvn_candidates: [usize; 3],
    pub truth_hvn: usize,
    pub truth_sr: BTreeMap<String, Vec<f64>>,
    pub split: Split,
}

impl ToMSample {
    pub fn truth(&self, gamma: &str) -> Result<NodeDistribution> {
        let v = self
            .truth_sr
            .get(gamma)
            .ok_or_else(|| Error::Data(format!("sample {} has no truth for gamma {gamma}", self.sample_id)))?;
        NodeDistribution::new(v.clone())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AssembleStats {
    pub current: usize,
    pub red_wins: usize,
    pub excluded: usize,
}

/// Samples from the Red-won current episodes of one game. Past trajectories
/// come only from the sample's own pool.
pub fn assemble_samples(
    game: &GameConfig,
    episodes: &GameEpisodes,
    n_past: usize,
    subsample: usize,
    gammas: &[f64],
) -> Result<(Vec<ToMSample>, AssembleStats)> {
    if n_past == 0 {
        return Err(Error::Config("n_past must be at least 1".into()));
    }
    let mut rng = seeds::rng(seeds::derive(game.base_seed, SAMPLE_STREAM));
    let mut samples = Vec::new();
    let mut stats = AssembleStats::default();
    for (c, (current, pool)) in episodes.current.iter().zip(&episodes.pools).enumerate() {
        stats.current += 1;
        if pool.len() < n_past {
            return Err(Error::Config(format!(
                "past pool of {} holds {} episodes, {n_past} requested",
                current.header.episode_id,
                pool.len()
            )));
        }
        // Draw unconditionally so sample streams do not depend on outcomes.
        let t = pick_current_step(current, &mut rng);
        let mut chosen = index::sample(&mut rng, pool.len(), n_past).into_vec();
        chosen.sort_unstable();
        let Outcome::RedWin { target } = current.outcome() else {
            continue;
        };
        stats.red_wins += 1;
        let mut truth_sr = BTreeMap::new();
        let mut ok = true;
        for &g in gammas {
            match sr_ground_truth(current, t, g) {
                Ok(d) => {
                    truth_sr.insert(gamma_key(g), d.into_vec());
                }
                Err(Error::Data(_)) => ok = false,
                Err(e) => return Err(e),
            }
        }
        if !ok {
            stats.excluded += 1;
            continue;
        }
        let past = chosen
            .into_iter()
            .map(|p| {
                Ok(PastRef {
                    episode_id: pool[p].header.episode_id.clone(),
                    steps: subsample_indices(pool[p].final_step(), subsample)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        samples.push(ToMSample {
            sample_id: current_episode_id(game, c),
            game_id: game.game_id.clone(),
            network: game.network,
            blue: game.blue.to_string(),
            red: game.red.label.clone(),
            episode_id: current.header.episode_id.clone(),
            t,
            past,
            hvn_candidates: current.header.placement.hvns,
            truth_hvn: target,
            truth_sr,
            split: if game.holdout { Split::Test } else { Split::Train },
        });
    }
    Ok((samples, stats))
}

/// Assign each non-hold-out Red agent wholesale to train or validation.
pub fn split_by_agent(samples: &mut [ToMSample], ratio: f64, seed: u64) -> Result<()> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::Config(format!("split ratio must lie in (0, 1), got {ratio}")));
    }
    let agents: BTreeSet<&str> = samples
        .iter()
        .filter(|s| s.split != Split::Test)
        .map(|s| s.red.as_str())
        .collect();
    let mut agents: Vec<String> = agents.into_iter().map(str::to_string).collect();
    agents.shuffle(&mut seeds::rng(seed));
    let n_train = (ratio * agents.len() as f64).round() as usize;
    let train: BTreeSet<&str> = agents[..n_train].iter().map(String::as_str).collect();
    for s in samples.iter_mut().filter(|s| s.split != Split::Test) {
        s.split = if train.contains(s.red.as_str()) {
            Split::Train
        } else {
            Split::Val
        };
    }
    Ok(())
}

/// Every past episode id is used by at most one sample and never as a
/// current episode.
pub fn check_disjoint(samples: &[ToMSample]) -> Result<()> {
    let mut seen = BTreeSet::new();
    for s in samples {
        if !seen.insert(s.episode_id.as_str()) {
            return Err(Error::Data(format!("episode {} reused", s.episode_id)));
        }
        for p in &s.past {
            if !seen.insert(p.episode_id.as_str()) {
                return Err(Error::Data(format!("past episode {} shared between samples", p.episode_id)));
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub master_seed: u64,
    pub topologies: Vec<Topology>,
    pub blues: Vec<BluePolicyId>,
    pub red_kind: RedPolicyId,
    pub red_agents: usize,
    pub holdout_agents: usize,
    pub alpha: f64,
    pub n_current: usize,
    pub n_pool: usize,
    pub n_past: usize,
    pub subsample: usize,
    pub gammas: Vec<f64>,
    pub train_ratio: f64,
    pub env: EnvConfig,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            master_seed: 0,
            topologies: vec![Topology::Tree30],
            blues: vec![BluePolicyId::MsnD],
            red_kind: RedPolicyId::HvtPreferenceSp,
            red_agents: 1000,
            holdout_agents: 200,
            alpha: 0.01,
            n_current: 3,
            n_pool: 8,
            n_past: 4,
            subsample: 5,
            gammas: DEFAULT_GAMMAS.to_vec(),
            train_ratio: 0.75,
            env: EnvConfig::default(),
        }
    }
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.red_agents == 0 {
            return Err(Error::Config("red_agents must be at least 1".into()));
        }
        if self.n_current == 0 || self.subsample == 0 {
            return Err(Error::Config("n_current and subsample must be at least 1".into()));
        }
        if self.n_past == 0 || self.n_past > self.n_pool {
            return Err(Error::Config(format!(
                "n_past must lie in 1..={} (the pool size), got {}",
                self.n_pool, self.n_past
            )));
        }
        if self.gammas.is_empty() || self.gammas.iter().any(|&g| !(g > 0.0 && g < 1.0)) {
            return Err(Error::Config(format!("gammas must lie in (0, 1), got {:?}", self.gammas)));
        }
        if !(self.train_ratio > 0.0 && self.train_ratio < 1.0) {
            return Err(Error::Config(format!("train_ratio must lie in (0, 1), got {}", self.train_ratio)));
        }
        self.env.validate()
    }

    /// Red agents: the training population followed by the hold-out draws.
    pub fn red_population(&self) -> Result<Vec<RedPolicySpec>> {
        let species = seeds::derive(self.master_seed, SPECIES_STREAM);
        (0..self.red_agents + self.holdout_agents)
            .map(|i| RedPolicySpec::from_species(self.red_kind, self.alpha, species, i))
            .collect()
    }

    pub fn network_seed(&self, topology: Topology) -> u64 {
        seeds::derive_path(self.master_seed, &[NETWORK_STREAM, Topology::ALL.iter().position(|&t| t == topology).unwrap_or(0) as u64])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkRef {
    pub topology: Topology,
    pub seed: u64,
    pub file: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetCounts {
    pub games: usize,
    pub current_episodes: usize,
    pub pool_episodes: usize,
    pub red_wins: usize,
    pub excluded: usize,
    pub samples: usize,
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub schema_version: u32,
    pub config: DatasetConfig,
    pub networks: Vec<NetworkRef>,
    pub games: Vec<GameConfig>,
    pub counts: DatasetCounts,
    pub samples: Vec<ToMSample>,
}

impl DatasetManifest {
    pub fn read(path: &Path) -> Result<Self> {
        let manifest: DatasetManifest = serde_json::from_reader(BufReader::new(File::open(path)?))?;
        if manifest.schema_version != MANIFEST_SCHEMA {
            return Err(Error::Data(format!(
                "unsupported manifest schema {} (expected {MANIFEST_SCHEMA})",
                manifest.schema_version
            )));
        }
        Ok(manifest)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut out = BufWriter::new(File::create(path)?);
        serde_json::to_writer_pretty(&mut out, self)?;
        out.write_all(b"\n")?;
        out.flush()?;
        Ok(())
    }

    pub fn sample(&self, id: &str) -> Option<&ToMSample> {
        self.samples.iter().find(|s| s.sample_id == id)
    }
}

pub fn episode_path(dir: &Path, episode_id: &str) -> std::path::PathBuf {
    dir.join("episodes").join(format!("{episode_id}.jsonl"))
}

pub fn read_episode(dir: &Path, episode_id: &str) -> Result<EpisodeTrajectory> {
    EpisodeTrajectory::read_jsonl(BufReader::new(File::open(episode_path(dir, episode_id))?))
}

fn write_episode(dir: &Path, traj: &EpisodeTrajectory) -> Result<()> {
    let mut out = BufWriter::new(File::create(episode_path(dir, &traj.header.episode_id))?);
    traj.write_jsonl(&mut out)?;
    out.flush()?;
    Ok(())
}

/// Run the whole pipeline into `dir`: networks, episode files and
/// `manifest.json`. Output bytes depend only on the configuration.
pub fn build_dataset(config: &DatasetConfig, dir: &Path) -> Result<DatasetManifest> {
    config.validate()?;
    fs::create_dir_all(dir.join("episodes"))?;
    fs::create_dir_all(dir.join("networks"))?;
    let mut networks = BTreeMap::new();
    let mut refs = Vec::new();
    for &topology in &config.topologies {
        let seed = config.network_seed(topology);
        let net = generate_network(topology, seed)?;
        let cm = all_pairs_shortest_paths(&net)?;
        let file = format!("networks/{}.json", topology.id());
        fs::write(dir.join(&file), net.to_json() + "\n")?;
        refs.push(NetworkRef { topology, seed, file });
        networks.insert(topology, (net, cm));
    }
    let population = config.red_population()?;
    let (train_reds, holdout_reds) = population.split_at(config.red_agents);
    let mut games = build_game_set(&config.blues, train_reds, &config.topologies, config.master_seed)?;
    if !holdout_reds.is_empty() {
        let offset = games.len();
        for mut g in build_game_set(&config.blues, holdout_reds, &config.topologies, config.master_seed)? {
            let index = offset + g.game_id[1..].parse::<usize>().expect("generated id");
            g.game_id = format!("g{index:05}");
            g.base_seed = seeds::derive_path(config.master_seed, &[GAME_STREAM, index as u64]);
            g.holdout = true;
            games.push(g);
        }
    }
    let per_game = games
        .par_iter()
        .map(|game| {
            let (net, cm) = &networks[&game.network];
            let episodes = generate_game_episodes(game, net, cm, &config.env, config.n_current, config.n_pool)?;
            for traj in episodes.all() {
                write_episode(dir, traj)?;
            }
            assemble_samples(game, &episodes, config.n_past, config.subsample, &config.gammas)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut counts = DatasetCounts {
        games: games.len(),
        current_episodes: games.len() * config.n_current,
        pool_episodes: games.len() * config.n_current * config.n_pool,
        ..DatasetCounts::default()
    };
    let mut samples = Vec::new();
    for (s, stats) in per_game {
        counts.red_wins += stats.red_wins;
        counts.excluded += stats.excluded;
        samples.extend(s);
    }
    split_by_agent(&mut samples, config.train_ratio, seeds::derive(config.master_seed, SPLIT_STREAM))?;
    check_disjoint(&samples)?;
    counts.samples = samples.len();
    for s in &samples {
        match s.split {
            Split::Train => counts.train += 1,
            Split::Val => counts.val += 1,
            Split::Test => counts.test += 1,
        }
    }
    let manifest = DatasetManifest {
        schema_version: MANIFEST_SCHEMA,
        config: config.clone(),
        networks: refs,
        games,
        counts,
        samples,
    };
    manifest.write(&dir.join("manifest.json"))?;
    Ok(manifest)
}
