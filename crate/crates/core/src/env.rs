//! The hot-desking cyber-defence game.
//!
//! Each step Blue acts first, then Red. Red starts from a fixed entry node
//! (or several, for tournament play) and wins by compromising any of three
//! high-value nodes placed on leaves at reset. Blue wins by surviving
//! `max_steps` steps.

use std::io::{BufRead, Write};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{place_high_value_nodes_with, CostMatrix, HvnPlacement, Network};
use crate::seeds::{self, SimRng};

/// Trajectory file format version.
pub const TRAJECTORY_SCHEMA: u32 = 1;

/// Column indices of [`StateObservation::features`].
pub mod feature {
    pub const VULNERABILITY: usize = 0;
    pub const COMPROMISED_VISIBLE: usize = 1;
    pub const COMPROMISED_HIDDEN: usize = 2;
    pub const ISOLATED: usize = 3;
    pub const IS_ENTRY: usize = 4;
    pub const IS_HVN: usize = 5;
    pub const COUNT: usize = 6;
}

/// Game constants. Defaults are the values used throughout the crate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    pub max_steps: usize,
    pub vulnerability_min: f64,
    pub vulnerability_max: f64,
    pub hidden_probability: f64,
    pub zero_day_start: u32,
    /// One extra zero-day every this many steps.
    pub zero_day_period: usize,
    pub reduce_factor: f64,
    pub vulnerability_floor: f64,
    pub compromised_cost: f64,
    pub isolated_cost: f64,
    pub red_win_penalty: f64,
    pub entry_count: usize,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            max_steps: 500,
            vulnerability_min: 0.2,
            vulnerability_max: 0.8,
            hidden_probability: 0.5,
            zero_day_start: 1,
            zero_day_period: 4,
            reduce_factor: 0.8,
            vulnerability_floor: 0.05,
            compromised_cost: 1.0,
            isolated_cost: 0.5,
            red_win_penalty: 100.0,
            entry_count: 1,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        if self.max_steps == 0 {
            return Err(Error::Config("max_steps must be positive".into()));
        }
        if !(unit(self.vulnerability_min) && unit(self.vulnerability_max))
            || self.vulnerability_min > self.vulnerability_max
        {
            return Err(Error::Config("vulnerability range must lie in [0, 1]".into()));
        }
        if !unit(self.hidden_probability) || !unit(self.reduce_factor) || !unit(self.vulnerability_floor) {
            return Err(Error::Config(
                "hidden_probability, reduce_factor and vulnerability_floor must lie in [0, 1]".into(),
            ));
        }
        if self.zero_day_period == 0 {
            return Err(Error::Config("zero_day_period must be positive".into()));
        }
        if self.entry_count == 0 {
            return Err(Error::Config("entry_count must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlueAction {
    DoNothing,
    Scan,
    MakeSafeNode(usize),
    ReduceNodeVulnerability(usize),
    Restore(usize),
    Isolate(usize),
    Reconnect(usize),
}

impl BlueAction {
    pub fn target(self) -> Option<usize> {
        match self {
            BlueAction::DoNothing | BlueAction::Scan => None,
            BlueAction::MakeSafeNode(v)
            | BlueAction::ReduceNodeVulnerability(v)
            | BlueAction::Restore(v)
            | BlueAction::Isolate(v)
            | BlueAction::Reconnect(v) => Some(v),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RedAction {
    DoNothing,
    BasicAttack(usize),
    RandomMove(usize),
    ZeroDayAttack(usize),
    Spread,
    Intrude,
}

impl RedAction {
    pub fn target(self) -> Option<usize> {
        match self {
            RedAction::DoNothing | RedAction::Spread | RedAction::Intrude => None,
            RedAction::BasicAttack(v) | RedAction::RandomMove(v) | RedAction::ZeroDayAttack(v) => Some(v),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionRecord {
    pub blue_action: BlueAction,
    pub red_action: RedAction,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "result", rename_all = "snake_case")]
pub enum Outcome {
    RedWin { target: usize },
    BlueWin,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Observer {
    Blue,
    Red,
    Full,
}

/// Per-node features plus the active edge list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateObservation {
    pub features: Vec<[f64; feature::COUNT]>,
    pub edges: Vec<[usize; 2]>,
}

impl StateObservation {
    pub fn node_count(&self) -> usize {
        self.features.len()
    }

    fn flag(&self, v: usize, column: usize) -> bool {
        self.features[v][column] != 0.0
    }

    pub fn vulnerability(&self, v: usize) -> f64 {
        self.features[v][feature::VULNERABILITY]
    }

    /// Compromised as far as this view can tell.
    pub fn compromised(&self, v: usize) -> bool {
        self.flag(v, feature::COMPROMISED_VISIBLE) || self.flag(v, feature::COMPROMISED_HIDDEN)
    }

    pub fn isolated(&self, v: usize) -> bool {
        self.flag(v, feature::ISOLATED)
    }

    pub fn is_entry(&self, v: usize) -> bool {
        self.flag(v, feature::IS_ENTRY)
    }

    pub fn is_hvn(&self, v: usize) -> bool {
        self.flag(v, feature::IS_HVN)
    }

    pub fn visible_compromised(&self) -> Vec<usize> {
        (0..self.node_count())
            .filter(|&v| self.flag(v, feature::COMPROMISED_VISIBLE))
            .collect()
    }

    /// Sorted adjacency lists of the active graph.
    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.node_count()];
        for &[a, b] in &self.edges {
            adj[a].push(b);
            adj[b].push(a);
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        adj
    }

    /// Uncompromised, non-isolated nodes adjacent to a launch point
    /// (a node seen as compromised, or an entry node).
    pub fn attackable(&self) -> Vec<usize> {
        let adj = self.adjacency();
        (0..self.node_count())
            .filter(|&v| {
                !self.compromised(v)
                    && !self.isolated(v)
                    && adj[v].iter().any(|&u| self.compromised(u) || self.is_entry(u))
            })
            .collect()
    }
}

/// Applying a mask to a full observation.
pub fn mask_observation(full: &StateObservation, observer: Observer) -> StateObservation {
    let mut out = full.clone();
    match observer {
        Observer::Full => {}
        Observer::Blue => {
            for f in &mut out.features {
                f[feature::COMPROMISED_HIDDEN] = 0.0;
                f[feature::IS_HVN] = 0.0;
            }
        }
        Observer::Red => {
            for f in &mut out.features {
                if f[feature::COMPROMISED_HIDDEN] != 0.0 {
                    f[feature::COMPROMISED_VISIBLE] = 1.0;
                }
                f[feature::COMPROMISED_HIDDEN] = 0.0;
                f[feature::IS_HVN] = 0.0;
            }
        }
    }
    out
}

/// What each step produced.
#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub blue_reward: f64,
    pub red_reward: f64,
    pub done: bool,
    /// Nodes newly compromised by Red this step, ascending.
    pub red_compromised: Vec<usize>,
}

/// Mutable game state of one episode.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeState {
    pub config: EnvConfig,
    pub vulnerability: Vec<f64>,
    pub initial_vulnerability: Vec<f64>,
    pub compromised: Vec<bool>,
    pub hidden: Vec<bool>,
    pub isolated: Vec<bool>,
    active: Vec<Vec<usize>>,
    saved: Vec<Vec<usize>>,
    pub entries: Vec<usize>,
    pub placement: HvnPlacement,
    pub zero_day_budget: u32,
    pub step: usize,
    pub red_locus: usize,
    pub outcome: Option<Outcome>,
    /// Count of actions that had no effect (e.g. reconnecting a connected node).
    pub ignored_actions: usize,
    rng: SimRng,
}

/// Start an episode with default constants.
pub fn reset(net: &Network, seed: u64) -> Result<EpisodeState> {
    reset_with(net, &EnvConfig::default(), seed)
}

pub fn reset_with(net: &Network, config: &EnvConfig, seed: u64) -> Result<EpisodeState> {
    config.validate()?;
    let mut rng = seeds::rng(seed);
    let n = net.node_count();
    let vulnerability: Vec<f64> = (0..n)
        .map(|_| rng.random_range(config.vulnerability_min..=config.vulnerability_max))
        .collect();
    let entries = net.entry_points(config.entry_count)?;
    let placement = place_high_value_nodes_with(net, &entries, &mut rng)?;
    let mut compromised = vec![false; n];
    for &e in &entries {
        compromised[e] = true;
    }
    Ok(EpisodeState {
        config: config.clone(),
        initial_vulnerability: vulnerability.clone(),
        vulnerability,
        compromised,
        hidden: vec![false; n],
        isolated: vec![false; n],
        active: net.adjacency().to_vec(),
        saved: vec![Vec::new(); n],
        red_locus: entries[0],
        entries,
        placement,
        zero_day_budget: config.zero_day_start,
        step: 0,
        outcome: None,
        ignored_actions: 0,
        rng,
    })
}

fn insert_sorted(list: &mut Vec<usize>, v: usize) {
    if let Err(pos) = list.binary_search(&v) {
        list.insert(pos, v);
    }
}

fn remove_sorted(list: &mut Vec<usize>, v: usize) {
    if let Ok(pos) = list.binary_search(&v) {
        list.remove(pos);
    }
}

impl EpisodeState {
    pub fn node_count(&self) -> usize {
        self.vulnerability.len()
    }

    pub fn done(&self) -> bool {
        self.outcome.is_some()
    }

    pub fn active_neighbors(&self, v: usize) -> &[usize] {
        &self.active[v]
    }

    pub fn saved_neighbors(&self, v: usize) -> &[usize] {
        &self.saved[v]
    }

    /// Active edges `(a, b)` with `a < b`, ascending.
    pub fn active_edges(&self) -> Vec<[usize; 2]> {
        let mut out = Vec::new();
        for (a, list) in self.active.iter().enumerate() {
            out.extend(list.iter().filter(|&&b| a < b).map(|&b| [a, b]));
        }
        out
    }

    pub fn compromised_count(&self) -> usize {
        self.compromised.iter().filter(|&&c| c).count()
    }

    pub fn isolated_count(&self) -> usize {
        self.isolated.iter().filter(|&&c| c).count()
    }

    fn is_launch_point(&self, v: usize) -> bool {
        self.compromised[v] || self.entries.contains(&v)
    }

    /// Whether Red may attack `v` this step.
    pub fn attackable(&self, v: usize) -> bool {
        !self.compromised[v] && !self.isolated[v] && self.active[v].iter().any(|&u| self.is_launch_point(u))
    }

    fn check_node(&self, v: usize, agent: &str) -> Result<()> {
        if v >= self.node_count() {
            return Err(Error::InvalidAction {
                agent: agent.into(),
                step: self.step,
                reason: format!("node {v} out of range (network has {} nodes)", self.node_count()),
            });
        }
        Ok(())
    }

    pub fn observe(&self, observer: Observer) -> StateObservation {
        let flag = |b: bool| if b { 1.0 } else { 0.0 };
        let features = (0..self.node_count())
            .map(|v| {
                let mut f = [0.0; feature::COUNT];
                f[feature::VULNERABILITY] = self.vulnerability[v];
                f[feature::COMPROMISED_VISIBLE] = flag(self.compromised[v] && !self.hidden[v]);
                f[feature::COMPROMISED_HIDDEN] = flag(self.hidden[v]);
                f[feature::ISOLATED] = flag(self.isolated[v]);
                f[feature::IS_ENTRY] = flag(self.entries.contains(&v));
                f[feature::IS_HVN] = flag(self.placement.contains(v));
                f
            })
            .collect();
        let full = StateObservation {
            features,
            edges: self.active_edges(),
        };
        mask_observation(&full, observer)
    }

    pub fn apply_blue(&mut self, action: BlueAction) -> Result<()> {
        if let Some(v) = action.target() {
            self.check_node(v, "blue")?;
        }
        match action {
            BlueAction::DoNothing => {}
            BlueAction::Scan => self.hidden.iter_mut().for_each(|h| *h = false),
            BlueAction::MakeSafeNode(v) => {
                self.compromised[v] = false;
                self.hidden[v] = false;
            }
            BlueAction::ReduceNodeVulnerability(v) => {
                let reduced = self.vulnerability[v] * self.config.reduce_factor;
                self.vulnerability[v] = reduced.max(self.config.vulnerability_floor);
            }
            BlueAction::Restore(v) => {
                self.compromised[v] = false;
                self.hidden[v] = false;
                self.vulnerability[v] = self.initial_vulnerability[v];
            }
            BlueAction::Isolate(v) => {
                if self.isolated[v] {
                    self.ignored_actions += 1;
                    return Ok(());
                }
                let neighbours = std::mem::take(&mut self.active[v]);
                for &u in &neighbours {
                    remove_sorted(&mut self.active[u], v);
                }
                self.saved[v] = neighbours;
                self.isolated[v] = true;
            }
            BlueAction::Reconnect(v) => {
                if !self.isolated[v] {
                    self.ignored_actions += 1;
                    return Ok(());
                }
                for u in std::mem::take(&mut self.saved[v]) {
                    if self.isolated[u] {
                        // the edge comes back when `u` reconnects
                        insert_sorted(&mut self.saved[u], v);
                    } else {
                        insert_sorted(&mut self.active[v], u);
                        insert_sorted(&mut self.active[u], v);
                    }
                }
                self.isolated[v] = false;
            }
        }
        Ok(())
    }

    fn attempt(&mut self, v: usize, hits: &mut Vec<usize>) {
        if self.rng.random::<f64>() < self.vulnerability[v] {
            self.compromised[v] = true;
            self.hidden[v] = self.rng.random::<f64>() < self.config.hidden_probability;
            hits.push(v);
        }
    }

    /// Returns the nodes newly compromised, ascending.
    pub fn apply_red(&mut self, action: RedAction) -> Result<Vec<usize>> {
        if let Some(v) = action.target() {
            self.check_node(v, "red")?;
        }
        let mut hits = Vec::new();
        match action {
            RedAction::DoNothing => {}
            RedAction::BasicAttack(v) => {
                if self.attackable(v) {
                    self.attempt(v, &mut hits);
                }
            }
            RedAction::ZeroDayAttack(v) => {
                if self.attackable(v) && self.zero_day_budget > 0 {
                    self.zero_day_budget -= 1;
                    self.compromised[v] = true;
                    self.hidden[v] = true;
                    hits.push(v);
                }
            }
            RedAction::RandomMove(v) => {
                if self.active[self.red_locus].contains(&v) {
                    self.red_locus = v;
                } else {
                    self.ignored_actions += 1;
                }
            }
            RedAction::Spread => {
                let targets: Vec<usize> = (0..self.node_count()).filter(|&v| self.attackable(v)).collect();
                for v in targets {
                    self.attempt(v, &mut hits);
                }
            }
            RedAction::Intrude => {
                for v in self.reachable_targets() {
                    self.attempt(v, &mut hits);
                }
            }
        }
        Ok(hits)
    }

    /// Uncompromised, non-isolated nodes connected through active edges to a
    /// launch point.
    fn reachable_targets(&self) -> Vec<usize> {
        let n = self.node_count();
        let mut seen = vec![false; n];
        let mut stack: Vec<usize> = (0..n).filter(|&v| self.is_launch_point(v)).collect();
        for &v in &stack {
            seen[v] = true;
        }
        while let Some(v) = stack.pop() {
            for &u in &self.active[v] {
                if !seen[u] {
                    seen[u] = true;
                    stack.push(u);
                }
            }
        }
        (0..n)
            .filter(|&v| seen[v] && !self.compromised[v] && !self.isolated[v])
            .collect()
    }

    fn blue_reward(&self) -> f64 {
        -(self.config.compromised_cost * self.compromised_count() as f64
            + self.config.isolated_cost * self.isolated_count() as f64)
    }

    /// Blue acts, then Red; rewards are computed on the resulting state.
    pub fn step(&mut self, blue: BlueAction, red: RedAction) -> Result<StepResult> {
        if self.done() {
            return Err(Error::EpisodeDone(self.step));
        }
        self.apply_blue(blue)?;
        self.red_turn(red)
    }

    /// Second half of [`step`](Self::step): Red's action, the clock, rewards
    /// and the terminal check.
    pub fn red_turn(&mut self, red: RedAction) -> Result<StepResult> {
        if self.done() {
            return Err(Error::EpisodeDone(self.step));
        }
        let red_compromised = self.apply_red(red)?;
        self.step += 1;
        if self.step.is_multiple_of(self.config.zero_day_period) {
            self.zero_day_budget += 1;
        }
        let mut blue_reward = self.blue_reward();
        let captured = (0..3)
            .filter(|&i| self.compromised[self.placement.hvns[i]])
            .min_by_key(|&i| self.placement.hvns[i]);
        if let Some(index) = captured {
            self.placement.target_index = Some(index);
            self.outcome = Some(Outcome::RedWin {
                target: self.placement.hvns[index],
            });
            blue_reward -= self.config.red_win_penalty;
        } else if self.step >= self.config.max_steps {
            self.outcome = Some(Outcome::BlueWin);
        }
        Ok(StepResult {
            blue_reward,
            red_reward: -blue_reward,
            done: self.done(),
            red_compromised,
        })
    }
}

/// Read-only information handed to Blue policies. Blue is told where the
/// high-value nodes are; its observation masks the labels.
pub struct BlueContext<'a> {
    pub net: &'a Network,
    pub cm: &'a CostMatrix,
    pub hvns: [usize; 3],
    pub entries: &'a [usize],
    pub step: usize,
}

/// Read-only information handed to Red policies. High-value nodes are only
/// revealed to policies that declare prior knowledge of them.
pub struct RedContext<'a> {
    pub net: &'a Network,
    pub cm: &'a CostMatrix,
    pub hvns: Option<[usize; 3]>,
    pub entries: &'a [usize],
    pub zero_day_budget: u32,
    pub step: usize,
}

pub trait BluePolicy {
    fn name(&self) -> String;
    /// Clear per-episode memory.
    fn begin_episode(&mut self) {}
    fn act(&mut self, obs: &StateObservation, ctx: &BlueContext<'_>, rng: &mut SimRng) -> BlueAction;
}

pub trait RedPolicy {
    fn name(&self) -> String;
    fn knows_hvns(&self) -> bool {
        false
    }
    fn begin_episode(&mut self) {}
    fn act(&mut self, obs: &StateObservation, ctx: &RedContext<'_>, rng: &mut SimRng) -> RedAction;
}

/// First line of a trajectory file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryHeader {
    pub schema_version: u32,
    pub episode_id: String,
    pub network: String,
    pub seed: u64,
    pub blue: String,
    pub red: String,
    pub node_count: usize,
    pub entries: Vec<usize>,
    pub placement: HvnPlacement,
    pub outcome: Outcome,
    pub final_step: usize,
}

/// One line per time-step. The last record holds the terminal state and no actions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: usize,
    pub obs: StateObservation,
    pub blue_action: Option<BlueAction>,
    pub red_action: Option<RedAction>,
    pub blue_reward: Option<f64>,
    /// Nodes Red compromised with the action taken at `t`.
    pub red_compromised: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeTrajectory {
    pub header: TrajectoryHeader,
    pub steps: Vec<StepRecord>,
}

impl EpisodeTrajectory {
    pub fn final_step(&self) -> usize {
        self.header.final_step
    }

    pub fn outcome(&self) -> Outcome {
        self.header.outcome
    }

    pub fn red_won(&self) -> bool {
        matches!(self.header.outcome, Outcome::RedWin { .. })
    }

    pub fn total_blue_reward(&self) -> f64 {
        self.steps.iter().filter_map(|s| s.blue_reward).sum()
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        serde_json::to_writer(&mut out, &self.header)?;
        out.write_all(b"\n")?;
        for step in &self.steps {
            serde_json::to_writer(&mut out, step)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("JSON is UTF-8")
    }

    pub fn read_jsonl<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let header_line = lines.next().ok_or_else(|| Error::Data("empty trajectory file".into()))??;
        let header: TrajectoryHeader = serde_json::from_str(&header_line)?;
        if header.schema_version != TRAJECTORY_SCHEMA {
            return Err(Error::Data(format!(
                "unsupported trajectory schema {} (expected {TRAJECTORY_SCHEMA})",
                header.schema_version
            )));
        }
        let mut steps = Vec::new();
        for line in lines {
            let line = line?;
            if !line.trim().is_empty() {
                steps.push(serde_json::from_str(&line)?);
            }
        }
        if steps.len() != header.final_step + 1 {
            return Err(Error::Data(format!(
                "trajectory {} has {} records, expected {}",
                header.episode_id,
                steps.len(),
                header.final_step + 1
            )));
        }
        Ok(EpisodeTrajectory { header, steps })
    }

    pub fn from_jsonl(text: &str) -> Result<Self> {
        EpisodeTrajectory::read_jsonl(text.as_bytes())
    }
}

/// Identifies an episode for trajectory headers.
#[derive(Debug, Clone)]
pub struct EpisodeLabel {
    pub episode_id: String,
    pub network: String,
}

/// Play one episode to termination. Environment, Blue and Red each draw
/// from their own stream derived from `seed`.
pub fn rollout(
    net: &Network,
    cm: &CostMatrix,
    config: &EnvConfig,
    blue: &mut dyn BluePolicy,
    red: &mut dyn RedPolicy,
    seed: u64,
    label: &EpisodeLabel,
) -> Result<EpisodeTrajectory> {
    let mut state = reset_with(net, config, seeds::derive(seed, 0))?;
    let mut blue_rng = seeds::rng(seeds::derive(seed, 1));
    let mut red_rng = seeds::rng(seeds::derive(seed, 2));
    blue.begin_episode();
    red.begin_episode();
    let hvns = state.placement.hvns;
    let entries = state.entries.clone();
    let mut steps = Vec::new();
    while !state.done() {
        let t = state.step;
        let obs = state.observe(Observer::Full);
        let blue_action = blue.act(
            &mask_observation(&obs, Observer::Blue),
            &BlueContext {
                net,
                cm,
                hvns,
                entries: &entries,
                step: t,
            },
            &mut blue_rng,
        );
        state.apply_blue(blue_action).map_err(|e| label_error(e, &blue.name()))?;
        // Red observes after Blue's move.
        let red_obs = state.observe(Observer::Red);
        let red_action = red.act(
            &red_obs,
            &RedContext {
                net,
                cm,
                hvns: red.knows_hvns().then_some(hvns),
                entries: &entries,
                zero_day_budget: state.zero_day_budget,
                step: t,
            },
            &mut red_rng,
        );
        let result = state.red_turn(red_action).map_err(|e| label_error(e, &red.name()))?;
        steps.push(StepRecord {
            t,
            obs,
            blue_action: Some(blue_action),
            red_action: Some(red_action),
            blue_reward: Some(result.blue_reward),
            red_compromised: result.red_compromised,
        });
    }
    steps.push(StepRecord {
        t: state.step,
        obs: state.observe(Observer::Full),
        blue_action: None,
        red_action: None,
        blue_reward: None,
        red_compromised: Vec::new(),
    });
    Ok(EpisodeTrajectory {
        header: TrajectoryHeader {
            schema_version: TRAJECTORY_SCHEMA,
            episode_id: label.episode_id.clone(),
            network: label.network.clone(),
            seed,
            blue: blue.name(),
            red: red.name(),
            node_count: net.node_count(),
            entries,
            placement: state.placement,
            outcome: state.outcome.expect("loop exits on a terminal state"),
            final_step: state.step,
        },
        steps,
    })
}

fn label_error(e: Error, agent: &str) -> Error {
    match e {
        Error::InvalidAction { step, reason, .. } => Error::InvalidAction {
            agent: agent.to_string(),
            step,
            reason,
        },
        other => other,
    }
}
