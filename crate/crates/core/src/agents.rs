//! Rule-based Blue and Red policies and Dirichlet species sampling.
//!
//! Policies are addressed by string ids such as `blue.msn_d` or
//! `red.hvt_pref_sp:alpha=0.01,seed=5,index=12`. Parameterised Red agents
//! carry either an action-probability vector over [`RED_ACTIONS`] or a
//! preference vector over the three high-value nodes.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::env::{BlueAction, BlueContext, BluePolicy, RedAction, RedContext, RedPolicy, StateObservation};
use crate::error::{Error, Result};
use crate::graph::shortest_path;
use crate::seeds::{self, SimRng};

/// Order of entries in a Red action-probability vector.
pub const RED_ACTIONS: [&str; 6] = ["do_nothing", "basic_attack", "random_move", "zero_day", "spread", "intrude"];

/// Hops within which `MSN_D` cleans a compromise.
const MSN_D_RADIUS: u32 = 3;
/// Per-step probability that `HVTPreference` follows its path.
const PATH_FOLLOW_PROBABILITY: f64 = 0.8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum BluePolicyId {
    Sleep,
    Random,
    RandomSmart,
    Isolate,
    MsnD,
    MsnS,
    Restore,
    MsnRnv,
    MsnRestore,
    MsnRnvRestore,
}

impl BluePolicyId {
    pub const ALL: [BluePolicyId; 10] = [
        BluePolicyId::Sleep,
        BluePolicyId::Random,
        BluePolicyId::RandomSmart,
        BluePolicyId::Isolate,
        BluePolicyId::MsnD,
        BluePolicyId::MsnS,
        BluePolicyId::Restore,
        BluePolicyId::MsnRnv,
        BluePolicyId::MsnRestore,
        BluePolicyId::MsnRnvRestore,
    ];

    pub fn id(self) -> &'static str {
        match self {
            BluePolicyId::Sleep => "sleep",
            BluePolicyId::Random => "random",
            BluePolicyId::RandomSmart => "random_smart",
            BluePolicyId::Isolate => "isolate",
            BluePolicyId::MsnD => "msn_d",
            BluePolicyId::MsnS => "msn_s",
            BluePolicyId::Restore => "restore",
            BluePolicyId::MsnRnv => "msn_rnv",
            BluePolicyId::MsnRestore => "msn_restore",
            BluePolicyId::MsnRnvRestore => "msn_rnv_restore",
        }
    }
}

impl fmt::Display for BluePolicyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "blue.{}", self.id())
    }
}

fn normalise_id(s: &str, prefix: &str) -> String {
    let s = s.trim().to_ascii_lowercase().replace('-', "_");
    s.strip_prefix(prefix).map(str::to_string).unwrap_or(s)
}

impl FromStr for BluePolicyId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let key = normalise_id(s, "blue.");
        let key = key.strip_prefix("blue").filter(|k| !k.is_empty()).unwrap_or(&key);
        let key = key.strip_prefix('_').unwrap_or(key);
        BluePolicyId::ALL
            .into_iter()
            .find(|b| b.id() == key)
            .ok_or_else(|| {
                let valid: Vec<String> = BluePolicyId::ALL.iter().map(|b| b.to_string()).collect();
                Error::Config(format!("unknown blue agent '{s}'; valid ids: {}", valid.join(", ")))
            })
    }
}

impl TryFrom<String> for BluePolicyId {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<BluePolicyId> for String {
    fn from(id: BluePolicyId) -> String {
        id.to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum RedPolicyId {
    RandomSimple,
    RandomSmart,
    TargetConnected,
    TargetUnconnected,
    TargetVulnerable,
    TargetResilient,
    HvtSimple,
    HvtPreference,
    HvtPreferenceSp,
}

impl RedPolicyId {
    pub const ALL: [RedPolicyId; 9] = [
        RedPolicyId::RandomSimple,
        RedPolicyId::RandomSmart,
        RedPolicyId::TargetConnected,
        RedPolicyId::TargetUnconnected,
        RedPolicyId::TargetVulnerable,
        RedPolicyId::TargetResilient,
        RedPolicyId::HvtSimple,
        RedPolicyId::HvtPreference,
        RedPolicyId::HvtPreferenceSp,
    ];

    pub fn id(self) -> &'static str {
        match self {
            RedPolicyId::RandomSimple => "random_simple",
            RedPolicyId::RandomSmart => "random_smart",
            RedPolicyId::TargetConnected => "target_connected",
            RedPolicyId::TargetUnconnected => "target_unconnected",
            RedPolicyId::TargetVulnerable => "target_vulnerable",
            RedPolicyId::TargetResilient => "target_resilient",
            RedPolicyId::HvtSimple => "hvt_simple",
            RedPolicyId::HvtPreference => "hvt_pref",
            RedPolicyId::HvtPreferenceSp => "hvt_pref_sp",
        }
    }

    /// Whether parameters are HVN preferences rather than action probabilities.
    pub fn uses_preferences(self) -> bool {
        matches!(self, RedPolicyId::HvtPreference | RedPolicyId::HvtPreferenceSp)
    }

    pub fn param_dim(self) -> usize {
        if self.uses_preferences() {
            3
        } else {
            RED_ACTIONS.len()
        }
    }
}

impl fmt::Display for RedPolicyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "red.{}", self.id())
    }
}

impl FromStr for RedPolicyId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let key = normalise_id(s, "red.");
        let key = match key.as_str() {
            "hvt_preference" => "hvt_pref",
            "hvt_preference_sp" => "hvt_pref_sp",
            other => other,
        };
        RedPolicyId::ALL
            .into_iter()
            .find(|r| r.id() == key)
            .ok_or_else(|| {
                let valid: Vec<String> = RedPolicyId::ALL.iter().map(|r| r.to_string()).collect();
                Error::Config(format!("unknown red agent '{s}'; valid ids: {}", valid.join(", ")))
            })
    }
}

impl TryFrom<String> for RedPolicyId {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<RedPolicyId> for String {
    fn from(id: RedPolicyId) -> String {
        id.to_string()
    }
}

fn check_simplex(v: &[f64], what: &str) -> Result<()> {
    if v.iter().any(|x| !x.is_finite() || *x < 0.0) || (v.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!("{what} must be a probability vector, got {v:?}")));
    }
    Ok(())
}

/// A concrete Red agent: its kind plus its parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RedPolicySpec {
    pub id: RedPolicyId,
    pub params: Vec<f64>,
    /// Registry string this spec was built from.
    pub label: String,
}

impl RedPolicySpec {
    pub fn new(id: RedPolicyId, params: Vec<f64>) -> Result<Self> {
        if params.len() != id.param_dim() {
            return Err(Error::Dimension {
                expected: id.param_dim(),
                got: params.len(),
            });
        }
        check_simplex(&params, "red parameters")?;
        let joined: Vec<String> = params.iter().map(|p| p.to_string()).collect();
        Ok(RedPolicySpec {
            label: format!("{id}:params={}", joined.join("/")),
            id,
            params,
        })
    }

    /// Member `index` of the species `Dir(alpha)` drawn with `seed`.
    pub fn from_species(id: RedPolicyId, alpha: f64, seed: u64, index: usize) -> Result<Self> {
        let params = dirichlet_member(alpha, id.param_dim(), seed, index)?;
        Ok(RedPolicySpec {
            label: format!("{id}:alpha={alpha},seed={seed},index={index}"),
            id,
            params,
        })
    }
}

impl fmt::Display for RedPolicySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label)
    }
}

impl FromStr for RedPolicySpec {
    type Err = Error;
    /// `red.<kind>[:alpha=..,seed=..,index=..]` or `red.<kind>:params=a/b/c`.
    /// A bare kind uses uniform parameters.
    fn from_str(s: &str) -> Result<Self> {
        let (kind, args) = match s.split_once(':') {
            Some((k, a)) => (k, a),
            None => (s, ""),
        };
        let id: RedPolicyId = kind.parse()?;
        if args.trim().is_empty() {
            let dim = id.param_dim();
            let mut spec = RedPolicySpec::new(id, vec![1.0 / dim as f64; dim])?;
            spec.label = id.to_string();
            return Ok(spec);
        }
        let (mut alpha, mut seed, mut index, mut params) = (None, None, None, None);
        for pair in args.split(',') {
            let (key, value) = pair
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("expected key=value in '{pair}'")))?;
            let bad = |e: &dyn fmt::Display| Error::Config(format!("bad value for '{key}' in '{s}': {e}"));
            match key.trim() {
                "alpha" => alpha = Some(value.trim().parse::<f64>().map_err(|e| bad(&e))?),
                "seed" => seed = Some(value.trim().parse::<u64>().map_err(|e| bad(&e))?),
                "index" => index = Some(value.trim().parse::<usize>().map_err(|e| bad(&e))?),
                "params" => {
                    let v: std::result::Result<Vec<f64>, _> = value.split('/').map(|x| x.trim().parse::<f64>()).collect();
                    params = Some(v.map_err(|e| bad(&e))?);
                }
                other => return Err(Error::Config(format!("unknown red agent option '{other}' in '{s}'"))),
            }
        }
        match (params, alpha) {
            (Some(p), None) => RedPolicySpec::new(id, p),
            (None, Some(a)) => RedPolicySpec::from_species(id, a, seed.unwrap_or(0), index.unwrap_or(0)),
            _ => Err(Error::Config(format!("'{s}': give either params or alpha"))),
        }
    }
}

/// A Dirichlet concentration and draws from it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeciesSample {
    pub alpha: f64,
    pub members: Vec<Vec<f64>>,
}

/// One `Dir(alpha·1)` draw computed in log space, so tiny concentrations do
/// not underflow: `log G = log Gamma(alpha + 1) + log(U) / alpha`.
fn dirichlet_draw(alpha: f64, dim: usize, rng: &mut SimRng) -> Result<Vec<f64>> {
    let gamma = Gamma::new(alpha + 1.0, 1.0).map_err(|e| Error::Config(format!("bad concentration {alpha}: {e}")))?;
    let logs: Vec<f64> = (0..dim)
        .map(|_| {
            let u: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
            gamma.sample(rng).ln() + u.ln() / alpha
        })
        .collect();
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = weights.iter().sum();
    Ok(weights.into_iter().map(|w| w / total).collect())
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::Config(format!("concentration must be positive, got {alpha}")));
    }
    Ok(())
}

/// `count` i.i.d. draws from `Dir(alpha·1_dim)`.
pub fn sample_species(alpha: f64, count: usize, dim: usize, seed: u64) -> Result<SpeciesSample> {
    check_alpha(alpha)?;
    if count == 0 || dim == 0 {
        return Err(Error::Config("species needs count >= 1 and dim >= 1".into()));
    }
    let members = (0..count)
        .map(|i| dirichlet_member(alpha, dim, seed, i))
        .collect::<Result<_>>()?;
    Ok(SpeciesSample { alpha, members })
}

/// Member `index` of a species; independent of how many members are drawn.
pub fn dirichlet_member(alpha: f64, dim: usize, seed: u64, index: usize) -> Result<Vec<f64>> {
    check_alpha(alpha)?;
    dirichlet_draw(alpha, dim, &mut seeds::rng(seeds::derive(seed, index as u64)))
}

/// Index of the largest value, lowest index on ties.
fn argmax(values: impl Iterator<Item = f64>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in values.enumerate() {
        if best.is_none_or(|(_, b)| v > b) {
            best = Some((i, v));
        }
    }
    best.map(|(i, _)| i)
}

fn pick<T: Copy>(items: &[T], rng: &mut SimRng) -> Option<T> {
    (!items.is_empty()).then(|| items[rng.random_range(0..items.len())])
}

fn sample_index(probs: &[f64], rng: &mut SimRng) -> usize {
    let r: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if r < acc {
            return i;
        }
    }
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

/// Visible compromise closest to any high-value node, as `(node, hops)`.
fn nearest_threat(obs: &StateObservation, ctx: &BlueContext<'_>) -> Option<(usize, u32)> {
    obs.visible_compromised()
        .into_iter()
        .map(|v| (v, ctx.hvns.iter().map(|&h| ctx.cm.get(v, h)).min().unwrap_or(u32::MAX)))
        .min_by_key(|&(v, d)| (d, v))
}

/// Probability that an MSN-family agent removes the nearest threat.
pub fn defence_probability(hops: u32, diameter: u32) -> f64 {
    (1.0 - f64::from(hops) / f64::from(diameter.max(1))).clamp(0.1, 0.95)
}

/// Non-isolated node with the highest vulnerability.
fn most_vulnerable(obs: &StateObservation) -> Option<usize> {
    let candidates: Vec<usize> = (0..obs.node_count()).filter(|&v| !obs.isolated(v)).collect();
    argmax(candidates.iter().map(|&v| obs.vulnerability(v))).map(|i| candidates[i])
}

pub struct BlueAgent {
    id: BluePolicyId,
    isolation_queue: VecDeque<usize>,
    started: bool,
}

impl BlueAgent {
    pub fn new(id: BluePolicyId) -> Self {
        BlueAgent {
            id,
            isolation_queue: VecDeque::new(),
            started: false,
        }
    }

    pub fn id(&self) -> BluePolicyId {
        self.id
    }

    fn random(obs: &StateObservation, rng: &mut SimRng) -> BlueAction {
        let n = obs.node_count();
        let v = rng.random_range(0..n);
        match rng.random_range(0..7) {
            0 => BlueAction::DoNothing,
            1 => BlueAction::Scan,
            2 => BlueAction::MakeSafeNode(v),
            3 => BlueAction::ReduceNodeVulnerability(v),
            4 => BlueAction::Restore(v),
            5 => BlueAction::Isolate(v),
            _ => BlueAction::Reconnect(v),
        }
    }

    fn random_smart(obs: &StateObservation, rng: &mut SimRng) -> BlueAction {
        let n = obs.node_count();
        let compromised = obs.visible_compromised();
        let connected: Vec<usize> = (0..n).filter(|&v| !obs.isolated(v)).collect();
        let isolated: Vec<usize> = (0..n).filter(|&v| obs.isolated(v)).collect();
        let mut options = vec![BlueAction::DoNothing, BlueAction::Scan];
        if let Some(v) = pick(&compromised, rng) {
            options.push(BlueAction::MakeSafeNode(v));
            options.push(BlueAction::Restore(v));
        }
        if let Some(v) = pick(&connected, rng) {
            options.push(BlueAction::ReduceNodeVulnerability(v));
            options.push(BlueAction::Isolate(v));
        }
        if let Some(v) = pick(&isolated, rng) {
            options.push(BlueAction::Reconnect(v));
        }
        options[rng.random_range(0..options.len())]
    }

    fn isolate(&mut self, obs: &StateObservation, ctx: &BlueContext<'_>) -> BlueAction {
        if !self.started {
            self.started = true;
            self.isolation_queue = ctx.entries.iter().chain(ctx.hvns.iter()).copied().collect();
        }
        while let Some(v) = self.isolation_queue.pop_front() {
            if !obs.isolated(v) {
                return BlueAction::Isolate(v);
            }
        }
        match obs.visible_compromised().first() {
            Some(&v) => BlueAction::MakeSafeNode(v),
            None => BlueAction::Scan,
        }
    }

    fn msn_family(&self, obs: &StateObservation, ctx: &BlueContext<'_>, rng: &mut SimRng) -> BlueAction {
        let threat = nearest_threat(obs, ctx);
        let defend = threat.is_some_and(|(_, d)| rng.random::<f64>() < defence_probability(d, ctx.cm.diameter()));
        let coin = |rng: &mut SimRng| rng.random::<bool>();
        if defend {
            let (v, _) = threat.expect("defend implies a threat");
            let restore = match self.id {
                BluePolicyId::Restore => true,
                BluePolicyId::MsnRestore | BluePolicyId::MsnRnvRestore => coin(rng),
                _ => false,
            };
            return if restore {
                BlueAction::Restore(v)
            } else {
                BlueAction::MakeSafeNode(v)
            };
        }
        let harden = matches!(self.id, BluePolicyId::MsnRnv | BluePolicyId::MsnRnvRestore) && coin(rng);
        match (harden, most_vulnerable(obs)) {
            (true, Some(v)) => BlueAction::ReduceNodeVulnerability(v),
            _ => BlueAction::Scan,
        }
    }
}

impl BluePolicy for BlueAgent {
    fn name(&self) -> String {
        self.id.to_string()
    }

    fn begin_episode(&mut self) {
        self.isolation_queue.clear();
        self.started = false;
    }

    fn act(&mut self, obs: &StateObservation, ctx: &BlueContext<'_>, rng: &mut SimRng) -> BlueAction {
        match self.id {
            BluePolicyId::Sleep => BlueAction::DoNothing,
            BluePolicyId::Random => BlueAgent::random(obs, rng),
            BluePolicyId::RandomSmart => BlueAgent::random_smart(obs, rng),
            BluePolicyId::Isolate => self.isolate(obs, ctx),
            BluePolicyId::MsnD => match nearest_threat(obs, ctx) {
                Some((v, d)) if d <= MSN_D_RADIUS => BlueAction::MakeSafeNode(v),
                _ => BlueAction::Scan,
            },
            BluePolicyId::MsnS
            | BluePolicyId::Restore
            | BluePolicyId::MsnRnv
            | BluePolicyId::MsnRestore
            | BluePolicyId::MsnRnvRestore => self.msn_family(obs, ctx, rng),
        }
    }
}

/// First node to attack on a shortest active-graph route from any launch
/// point to `target`, avoiding isolated nodes.
fn detour(obs: &StateObservation, target: usize) -> Option<usize> {
    let launch = |v: usize| obs.compromised(v) || obs.is_entry(v);
    if obs.compromised(target) || obs.isolated(target) {
        return None;
    }
    let adj = obs.adjacency();
    let n = obs.node_count();
    let mut parent = vec![None; n];
    let mut seen = vec![false; n];
    let mut queue: VecDeque<usize> = (0..n).filter(|&v| launch(v) && !obs.isolated(v)).collect();
    for &v in &queue {
        seen[v] = true;
    }
    while let Some(v) = queue.pop_front() {
        if v == target {
            break;
        }
        for &u in &adj[v] {
            if !seen[u] && !obs.isolated(u) {
                seen[u] = true;
                parent[u] = Some(v);
                queue.push_back(u);
            }
        }
    }
    if !seen[target] {
        return None;
    }
    let mut v = target;
    while let Some(p) = parent[v] {
        if launch(p) {
            return Some(v);
        }
        v = p;
    }
    None
}

pub struct RedAgent {
    spec: RedPolicySpec,
    locus: Option<usize>,
    target: Option<usize>,
    ranking: Vec<usize>,
    path: Vec<usize>,
}

impl RedAgent {
    pub fn new(spec: RedPolicySpec) -> Self {
        RedAgent {
            spec,
            locus: None,
            target: None,
            ranking: Vec::new(),
            path: Vec::new(),
        }
    }

    pub fn spec(&self) -> &RedPolicySpec {
        &self.spec
    }

    /// High-value node chosen for this episode, once selected.
    pub fn target(&self) -> Option<usize> {
        self.target
    }

    pub fn planned_path(&self) -> &[usize] {
        &self.path
    }

    fn choose_target(&self, obs: &StateObservation, attackable: &[usize], rng: &mut SimRng) -> Option<usize> {
        let by = |score: &dyn Fn(usize) -> f64| argmax(attackable.iter().map(|&v| score(v))).map(|i| attackable[i]);
        let adj = obs.adjacency();
        let degree = |v: usize| adj[v].len() as f64;
        match self.spec.id {
            RedPolicyId::TargetConnected => by(&degree),
            RedPolicyId::TargetUnconnected => by(&|v| -degree(v)),
            RedPolicyId::TargetVulnerable => by(&|v| obs.vulnerability(v)),
            RedPolicyId::TargetResilient => by(&|v| -obs.vulnerability(v)),
            _ => pick(attackable, rng),
        }
    }

    /// Action-probability behaviour shared by the non-preference agents.
    fn probabilistic(&mut self, obs: &StateObservation, ctx: &RedContext<'_>, rng: &mut SimRng) -> RedAction {
        let attackable = obs.attackable();
        let kind = sample_index(&self.spec.params, rng);
        match kind {
            0 => RedAction::DoNothing,
            1 => match self.choose_target(obs, &attackable, rng) {
                Some(v) => RedAction::BasicAttack(v),
                None => RedAction::DoNothing,
            },
            2 => {
                let locus = *self.locus.get_or_insert(ctx.entries[0]);
                match pick(&obs.adjacency()[locus], rng) {
                    Some(v) => {
                        self.locus = Some(v);
                        RedAction::RandomMove(v)
                    }
                    None => RedAction::DoNothing,
                }
            }
            3 => {
                // Simple agents spend the turn even without a zero-day in hand.
                let wasteful = matches!(self.spec.id, RedPolicyId::RandomSimple | RedPolicyId::HvtSimple);
                match self.choose_target(obs, &attackable, rng) {
                    Some(v) if wasteful || ctx.zero_day_budget > 0 => RedAction::ZeroDayAttack(v),
                    Some(v) => RedAction::BasicAttack(v),
                    None => RedAction::DoNothing,
                }
            }
            4 => RedAction::Spread,
            _ => RedAction::Intrude,
        }
    }

    fn strike(v: usize, ctx: &RedContext<'_>) -> RedAction {
        if ctx.zero_day_budget > 0 {
            RedAction::ZeroDayAttack(v)
        } else {
            RedAction::BasicAttack(v)
        }
    }

    fn hvt_simple(&mut self, obs: &StateObservation, ctx: &RedContext<'_>, rng: &mut SimRng) -> RedAction {
        let attackable = obs.attackable();
        let exposed = ctx
            .hvns
            .iter()
            .flatten()
            .copied()
            .filter(|h| attackable.contains(h))
            .min();
        match exposed {
            Some(h) => RedAgent::strike(h, ctx),
            None => self.probabilistic(obs, ctx, rng),
        }
    }

    /// Select `argmax_i π_i / dist(entry, hvn_i)` and its shortest path.
    fn plan(&mut self, ctx: &RedContext<'_>) {
        let Some(hvns) = ctx.hvns else { return };
        let dist = |h: usize| ctx.entries.iter().map(|&e| ctx.cm.get(e, h)).min().unwrap_or(u32::MAX);
        let mut ranked: Vec<(f64, usize)> = hvns
            .iter()
            .enumerate()
            .map(|(i, &h)| (self.spec.params[i] / f64::from(dist(h).max(1)), h))
            .collect();
        ranked.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        let target = ranked[0].1;
        let source = ctx
            .entries
            .iter()
            .copied()
            .min_by_key(|&e| (ctx.cm.get(e, target), e))
            .expect("at least one entry");
        self.target = Some(target);
        self.ranking = ranked.into_iter().map(|(_, h)| h).collect();
        self.path = shortest_path(ctx.net.adjacency(), source, target).unwrap_or_default();
    }

    /// Next node to attack: the step after the furthest launch point on the
    /// planned path, else a detour over the active graph towards the target,
    /// else towards the next-ranked high-value node still reachable.
    fn next_on_path(&self, obs: &StateObservation) -> Option<usize> {
        let launch = |v: usize| obs.compromised(v) || obs.is_entry(v);
        let attackable = obs.attackable();
        if let Some(k) = self.path.iter().rposition(|&v| launch(v)) {
            if let Some(&next) = self.path.get(k + 1) {
                if attackable.contains(&next) {
                    return Some(next);
                }
            }
        }
        self.ranking.iter().find_map(|&h| detour(obs, h))
    }

    fn hvt_preference(&mut self, obs: &StateObservation, ctx: &RedContext<'_>, rng: &mut SimRng) -> RedAction {
        if self.target.is_none() {
            self.plan(ctx);
        }
        let follow = self.spec.id == RedPolicyId::HvtPreferenceSp || rng.random::<f64>() < PATH_FOLLOW_PROBABILITY;
        if follow {
            if let Some(v) = self.next_on_path(obs) {
                return RedAgent::strike(v, ctx);
            }
        }
        match pick(&obs.attackable(), rng) {
            Some(v) => RedAction::BasicAttack(v),
            None => RedAction::DoNothing,
        }
    }
}

impl RedPolicy for RedAgent {
    fn name(&self) -> String {
        self.spec.label.clone()
    }

    fn knows_hvns(&self) -> bool {
        matches!(
            self.spec.id,
            RedPolicyId::HvtSimple | RedPolicyId::HvtPreference | RedPolicyId::HvtPreferenceSp
        )
    }

    fn begin_episode(&mut self) {
        self.locus = None;
        self.target = None;
        self.ranking.clear();
        self.path.clear();
    }

    fn act(&mut self, obs: &StateObservation, ctx: &RedContext<'_>, rng: &mut SimRng) -> RedAction {
        match self.spec.id {
            RedPolicyId::HvtSimple => self.hvt_simple(obs, ctx, rng),
            RedPolicyId::HvtPreference | RedPolicyId::HvtPreferenceSp => self.hvt_preference(obs, ctx, rng),
            _ => self.probabilistic(obs, ctx, rng),
        }
    }
}

pub fn blue_policy(id: BluePolicyId) -> BlueAgent {
    BlueAgent::new(id)
}

pub fn red_policy(spec: &RedPolicySpec) -> RedAgent {
    RedAgent::new(spec.clone())
}

/// Resolve `blue.<kind>`.
pub fn parse_blue(s: &str) -> Result<BluePolicyId> {
    s.parse()
}

/// Resolve `red.<kind>[:options]`.
pub fn parse_red(s: &str) -> Result<RedPolicySpec> {
    s.parse()
}
