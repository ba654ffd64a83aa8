//! Subcommand implementations.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use anyhow::{bail, Context};
use clap::{Args, Subcommand};
use cybertom::agents::{blue_policy, parse_blue, parse_red, red_policy};
use cybertom::dataset::{build_dataset, DatasetConfig, DatasetManifest};
use cybertom::env::{rollout, EnvConfig, EpisodeLabel};
use cybertom::eval::{
    hedging_clusters, max_weighting_gap, read_predictions, run_tournament, score_hvt, score_sr, ScoringNetwork,
    TournamentConfig,
};
use cybertom::graph::{all_pairs_shortest_paths, entry_remoteness, generate_network, CostMatrix, Network, Topology};
use cybertom::seeds;
use cybertom::sinkhorn::{ntd_loss_grad, sinkhorn_plan, SinkhornParams};
use cybertom::transport::{self, ntd_weighted, NodeDistribution, WeightingConfig};
use serde::Serialize;

use crate::config::{self, ScoreSection};
use crate::report::{write_confusion, write_csv, write_json, write_tournament};
use crate::UsageError;

fn topology(s: &str) -> anyhow::Result<Topology> {
    s.parse::<Topology>()
        .map_err(|_| UsageError(format!("unknown topology '{s}'; valid ids: {}", Topology::valid_ids())).into())
}

#[derive(Debug, Args)]
pub struct NetworkArgs {
    #[arg(long, short = 't')]
    topology: String,
    #[arg(long, short = 's')]
    seed: u64,
    /// Output file name inside the output directory.
    #[arg(long)]
    out: Option<String>,
}

pub fn network(args: &NetworkArgs, out: &Path) -> anyhow::Result<()> {
    let t = topology(&args.topology)?;
    let net = generate_network(t, args.seed)?;
    let name = args.out.clone().unwrap_or_else(|| format!("{}_seed{}.json", t.id(), args.seed));
    let path = out.join(name);
    fs::write(&path, net.to_json() + "\n").with_context(|| format!("writing {}", path.display()))?;
    println!(
        "{}: {} nodes, {} edges, {} branches, entry {} -> {}",
        t,
        net.node_count(),
        net.edge_count(),
        net.branch_count(),
        net.entry(),
        path.display()
    );
    Ok(())
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, short = 'b')]
    blue: String,
    /// Red agent id, e.g. `red.hvt_pref_sp:alpha=0.01,seed=5,index=12`.
    #[arg(long, short = 'r')]
    red: String,
    #[arg(long, short = 't')]
    topology: String,
    #[arg(long, short = 'n')]
    episodes: usize,
    #[arg(long, short = 's')]
    seed: u64,
    /// Seed of the generated network; defaults to `--seed`.
    #[arg(long)]
    network_seed: Option<u64>,
    #[arg(long, default_value_t = 500)]
    max_steps: usize,
    #[arg(long, default_value_t = 1)]
    entries: usize,
}

#[derive(Debug, Serialize)]
struct SimulationSummary {
    blue: String,
    red: String,
    network: String,
    seed: u64,
    episodes: usize,
    blue_wins: usize,
    win_rate: Option<f64>,
    mean_duration: Option<f64>,
    mean_reward: Option<f64>,
}

pub fn simulate(args: &SimulateArgs, out: &Path) -> anyhow::Result<()> {
    let blue_id = parse_blue(&args.blue)?;
    let red_spec = parse_red(&args.red)?;
    let t = topology(&args.topology)?;
    let net = generate_network(t, args.network_seed.unwrap_or(args.seed))?;
    let cm = all_pairs_shortest_paths(&net)?;
    let env = EnvConfig {
        max_steps: args.max_steps,
        entry_count: args.entries,
        ..EnvConfig::default()
    };
    env.validate()?;
    let dir = out.join("episodes");
    fs::create_dir_all(&dir)?;
    let (mut blue, mut red) = (blue_policy(blue_id), red_policy(&red_spec));
    let (mut wins, mut duration, mut reward) = (0usize, 0usize, 0.0);
    for ep in 0..args.episodes {
        let label = EpisodeLabel {
            episode_id: format!("ep{ep:05}"),
            network: t.id().to_string(),
        };
        let seed = seeds::derive_path(args.seed, &[1, ep as u64]);
        let traj = rollout(&net, &cm, &env, &mut blue, &mut red, seed, &label)?;
        wins += usize::from(!traj.red_won());
        duration += traj.final_step();
        reward += traj.total_blue_reward();
        let path = dir.join(format!("{}.jsonl", label.episode_id));
        let mut w = BufWriter::new(fs::File::create(&path)?);
        traj.write_jsonl(&mut w)?;
        w.flush()?;
    }
    let n = args.episodes as f64;
    let mean = |x: f64| (args.episodes > 0).then_some(x / n);
    let summary = SimulationSummary {
        blue: blue_id.to_string(),
        red: red_spec.label.clone(),
        network: t.id().to_string(),
        seed: args.seed,
        episodes: args.episodes,
        blue_wins: wins,
        win_rate: mean(wins as f64),
        mean_duration: mean(duration as f64),
        mean_reward: mean(reward),
    };
    write_json(&out.join("summary.json"), &summary)?;
    println!("{}", serde_json::to_string(&summary)?);
    Ok(())
}

#[derive(Debug, Args)]
pub struct TournamentOverrides {
    #[arg(long, short = 'n')]
    episodes: Option<usize>,
    #[arg(long, short = 's')]
    seed: Option<u64>,
}

pub fn tournament(config: Option<&Path>, o: &TournamentOverrides, out: &Path) -> anyhow::Result<()> {
    let mut cfg = match config {
        Some(path) => config::load(path)?.tournament.unwrap_or_default(),
        None if o.seed.is_some() => TournamentConfig::default(),
        None => bail!(UsageError("tournament needs --seed or a --config file".into())),
    };
    if let Some(e) = o.episodes {
        cfg.episodes = e;
    }
    if let Some(s) = o.seed {
        cfg.seed = s;
    }
    let table = run_tournament(&cfg)?;
    for t in &cfg.topologies {
        let cells: Vec<_> = table.cells.iter().filter(|c| c.network == t.id()).cloned().collect();
        write_tournament(&out.join(format!("tournament_{}.csv", t.id())), &cells)?;
    }
    let averaged = table.averaged();
    write_tournament(&out.join("tournament_average.csv"), &averaged)?;
    write_json(&out.join("tournament.json"), &table)?;
    println!("{:<24} {:<24} {:>10} {:>8} {:>9}", "blue", "red", "reward", "win", "duration");
    for c in &averaged {
        println!(
            "{:<24} {:<24} {:>10.1} {:>8.3} {:>9.1}",
            c.blue.to_string(),
            c.red.to_string(),
            c.mean_reward,
            c.win_rate,
            c.mean_duration
        );
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct DatasetOverrides {
    /// Master seed; overrides the configuration file.
    #[arg(long, short = 's')]
    seed: Option<u64>,
    #[arg(long)]
    red_agents: Option<usize>,
    #[arg(long)]
    holdout_agents: Option<usize>,
    #[arg(long)]
    n_past: Option<usize>,
    #[arg(long)]
    max_steps: Option<usize>,
}

pub fn dataset(config: Option<&Path>, o: &DatasetOverrides, out: &Path) -> anyhow::Result<()> {
    let mut cfg = match config {
        Some(path) => config::load(path)?.dataset.unwrap_or_default(),
        None if o.seed.is_some() => DatasetConfig::default(),
        None => bail!(UsageError("dataset needs --seed or a --config file".into())),
    };
    if let Some(s) = o.seed {
        cfg.master_seed = s;
    }
    if let Some(n) = o.red_agents {
        cfg.red_agents = n;
    }
    if let Some(n) = o.holdout_agents {
        cfg.holdout_agents = n;
    }
    if let Some(n) = o.n_past {
        cfg.n_past = n;
    }
    if let Some(n) = o.max_steps {
        cfg.env.max_steps = n;
    }
    let manifest = build_dataset(&cfg, out)?;
    let c = &manifest.counts;
    println!("games: {}", c.games);
    println!("episodes: {} current + {} past", c.current_episodes, c.pool_episodes);
    println!("red wins: {} ({} excluded)", c.red_wins, c.excluded);
    println!("samples: {} (train {}, val {}, test {})", c.samples, c.train, c.val, c.test);
    println!("past pools disjoint: ok");
    println!("manifest: {}", out.join("manifest.json").display());
    Ok(())
}

fn parse_list(s: &str, what: &str) -> anyhow::Result<Vec<f64>> {
    s.split(',')
        .map(|x| {
            x.trim()
                .parse::<f64>()
                .map_err(|e| UsageError(format!("bad {what} '{x}': {e}")).into())
        })
        .collect()
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    /// JSON-lines predictions.
    #[arg(long, short = 'p')]
    predictions: std::path::PathBuf,
    #[arg(long, short = 'm')]
    manifest: std::path::PathBuf,
    /// TOML file whose `[score]` section supplies defaults.
    #[arg(long, short = 'c')]
    config: Option<std::path::PathBuf>,
    /// Comma-separated discount factors.
    #[arg(long)]
    gammas: Option<String>,
    /// Comma-separated remoteness coefficients.
    #[arg(long, allow_hyphen_values = true)]
    coefficients: Option<String>,
    #[arg(long)]
    floor: Option<f64>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Serialize)]
struct HedgingRow {
    network: Topology,
    gamma: String,
    samples: usize,
    sizes: Vec<usize>,
    labels: Vec<Option<usize>>,
}

#[derive(Serialize)]
struct GapRow {
    network: Topology,
    gamma: String,
    sample_id: String,
    gap: f64,
    ntd_plus: f64,
    ntd_minus: f64,
    predicted: Vec<f64>,
    truth: Vec<f64>,
}

pub fn score(args: &ScoreArgs, out: &Path) -> anyhow::Result<()> {
    let mut section = match &args.config {
        Some(path) => config::load(path)?.score.unwrap_or_default(),
        None => ScoreSection::default(),
    };
    if let Some(g) = &args.gammas {
        section.gammas = parse_list(g, "gamma")?;
    }
    if let Some(c) = &args.coefficients {
        section.coefficients = parse_list(c, "coefficient")?;
    }
    if let Some(f) = args.floor {
        section.floor = f;
    }
    if let Some(k) = args.k {
        section.k = k;
    }
    if let Some(s) = args.seed {
        section.seed = s;
    }
    let manifest = DatasetManifest::read(&args.manifest).with_context(|| format!("reading {}", args.manifest.display()))?;
    let base = args.manifest.parent().unwrap_or(Path::new("."));
    let file = fs::File::open(&args.predictions).with_context(|| format!("opening {}", args.predictions.display()))?;
    let preds = read_predictions(BufReader::new(file))?;
    let mut networks = BTreeMap::new();
    for r in &manifest.networks {
        let text = fs::read_to_string(base.join(&r.file)).with_context(|| format!("reading {}", r.file))?;
        networks.insert(r.topology, ScoringNetwork::new(&Network::from_json(&text)?)?);
    }

    let hvt = score_hvt(&preds, &manifest.samples)?;
    write_json(&out.join("hvt_score.json"), &hvt)?;
    write_confusion(&out.join("confusion_counts.csv"), &hvt, false)?;
    write_confusion(&out.join("confusion_normalised.csv"), &hvt, true)?;

    let scoring = section.scoring();
    let sr = score_sr(&preds, &manifest.samples, &networks, &scoring)?;
    write_csv(&out.join("ntd_samples.csv"), &sr.samples)?;
    write_csv(&out.join("ntd_strata.csv"), &sr.strata)?;

    let by_id: BTreeMap<&str, _> = preds.iter().map(|p| (p.sample_id.as_str(), p)).collect();
    let mut hedging = Vec::new();
    let mut gaps = Vec::new();
    for (&t, geo) in &networks {
        for g in &scoring.gammas {
            let stratum: Vec<_> = manifest
                .samples
                .iter()
                .filter(|s| s.network == t)
                .filter_map(|s| by_id.get(s.sample_id.as_str()).and_then(|p| p.pred_sr.get(g)).map(|v| (s, v)))
                .collect();
            if stratum.len() >= section.k && section.k > 0 {
                let points: Vec<Vec<f64>> = stratum.iter().map(|(_, v)| (*v).clone()).collect();
                let c = hedging_clusters(&points, section.k, section.seed, &geo.branches)?;
                hedging.push(HedgingRow {
                    network: t,
                    gamma: g.clone(),
                    samples: points.len(),
                    sizes: c.sizes,
                    labels: c.labels,
                });
            }
            if let Ok(gap) = max_weighting_gap(&sr, t, g) {
                let sample = manifest.sample(&gap.sample_id).expect("scored samples exist");
                gaps.push(GapRow {
                    network: t,
                    gamma: g.clone(),
                    predicted: by_id[gap.sample_id.as_str()].pred_sr[g].clone(),
                    truth: sample.truth_sr[g].clone(),
                    sample_id: gap.sample_id,
                    gap: gap.gap,
                    ntd_plus: gap.ntd_plus,
                    ntd_minus: gap.ntd_minus,
                });
            }
        }
    }
    write_json(&out.join("hedging.json"), &hedging)?;
    write_json(&out.join("weighting_gap.json"), &gaps)?;

    println!("samples scored: {}", preds.len());
    println!("weighted F1: {:.4}", hvt.weighted_f1);
    for s in &sr.strata {
        println!(
            "{} gamma={} coefficient={}: mean {:.4} median {:.4} (n={})",
            s.network, s.gamma, s.coefficient, s.mean, s.median, s.count
        );
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct NtdArgs {
    /// Topology of a generated network.
    #[arg(long, short = 't', conflicts_with = "network")]
    topology: Option<String>,
    /// Seed of the generated topology.
    #[arg(long, short = 's', requires = "topology")]
    seed: Option<u64>,
    /// Network JSON file instead of a generated topology.
    #[arg(long)]
    network: Option<std::path::PathBuf>,
    /// First distribution: `m0,m1,...` or sparse `node=mass,...`.
    #[arg(long)]
    p: String,
    /// Second distribution, same format as `--p`.
    #[arg(long)]
    q: String,
}

#[derive(Debug, Subcommand)]
pub enum NtdCommand {
    /// Exact transport distance, optionally remoteness-weighted.
    Score {
        #[command(flatten)]
        common: NtdArgs,
        /// Remoteness coefficient; 0 gives the unweighted distance.
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        coefficient: f64,
        #[arg(long, default_value_t = 0.1)]
        floor: f64,
    },
    /// Entropic approximation and its gradient.
    Sinkhorn {
        #[command(flatten)]
        common: NtdArgs,
        /// Regularisation as a fraction of the diameter.
        #[arg(long, default_value_t = 0.05)]
        lambda_fraction: f64,
        #[arg(long, default_value_t = 10_000)]
        max_iters: usize,
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
    },
}

fn parse_distribution(s: &str, n: usize) -> anyhow::Result<NodeDistribution> {
    let mut mass = vec![0.0; n];
    if s.contains('=') {
        for pair in s.split(',') {
            let (node, m) = pair
                .split_once('=')
                .ok_or_else(|| UsageError(format!("expected node=mass in '{pair}'")))?;
            let node: usize = node
                .trim()
                .parse()
                .map_err(|e| UsageError(format!("bad node '{node}': {e}")))?;
            if node >= n {
                return Err(UsageError(format!("node {node} outside a {n}-node network")).into());
            }
            mass[node] += parse_list(m, "mass")?[0];
        }
    } else {
        mass = parse_list(s, "mass")?;
        if mass.len() != n {
            return Err(UsageError(format!("expected {n} masses, got {}", mass.len())).into());
        }
    }
    Ok(NodeDistribution::new(mass)?)
}

fn ntd_inputs(a: &NtdArgs) -> anyhow::Result<(Network, CostMatrix, NodeDistribution, NodeDistribution)> {
    let net = match (&a.topology, &a.network) {
        (Some(t), None) => {
            let seed = a.seed.ok_or_else(|| UsageError("--topology needs --seed".into()))?;
            generate_network(topology(t)?, seed)?
        }
        (None, Some(path)) => Network::from_json(&fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?)?,
        _ => bail!(UsageError("give exactly one of --topology or --network".into())),
    };
    let cm = all_pairs_shortest_paths(&net)?;
    let p = parse_distribution(&a.p, net.node_count())?;
    let q = parse_distribution(&a.q, net.node_count())?;
    Ok((net, cm, p, q))
}

pub fn ntd(cmd: &NtdCommand) -> anyhow::Result<()> {
    let value = match cmd {
        NtdCommand::Score {
            common,
            coefficient,
            floor,
        } => {
            let (net, cm, p, q) = ntd_inputs(common)?;
            let w = WeightingConfig::single(entry_remoteness(&net, &cm), *coefficient, *floor)?;
            serde_json::json!({
                "ntd": transport::ntd(&p, &q, &cm)?,
                "ntd_weighted": ntd_weighted(&p, &q, &cm, &w)?,
                "coefficient": coefficient,
                "floor": floor,
                "diameter": cm.diameter(),
            })
        }
        NtdCommand::Sinkhorn {
            common,
            lambda_fraction,
            max_iters,
            tol,
        } => {
            let (_, cm, p, q) = ntd_inputs(common)?;
            let params = SinkhornParams::new(lambda_fraction * f64::from(cm.diameter().max(1)), *max_iters, *tol)?;
            let result = sinkhorn_plan(&p, &q, &cm, &params)?;
            let grad = ntd_loss_grad(&p, &q, &cm, &params)?;
            serde_json::json!({
                "loss": result.value,
                "ntd": transport::ntd(&p, &q, &cm)?,
                "lambda": params.lambda,
                "iterations": result.iterations,
                "violation": result.violation,
                "log_domain": result.log_domain,
                "gradient": grad,
            })
        }
    };
    println!("{}", serde_json::to_string_pretty(&value)?);
    Ok(())
}
