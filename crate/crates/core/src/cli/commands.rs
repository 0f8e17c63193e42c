use super::manifest::RunManifest;
use crate::eval::{
    evaluate_vs_holdout, option_probe, round_robin, BotConfig, Contestant, EvalSettings, HoldoutReport, MetaGame,
    OptionProbeReport,
};
use crate::game::replay::Replay;
use crate::game::{GridConfig, ResourceKind};
use crate::harness::{
    load_agent, population_specs, repeat_dir, train_holdout_population, write_atomic, ActorPolicy, LoadedAgent, MatchMode,
    Session, TrainConfig, TrainedAgent, METADATA_FILE,
};
use crate::model::AgentVariant;
use crate::rng;
use crate::{Error, Result};
use serde::Serialize;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

#[derive(Debug, Clone)]
pub struct TrainArgs {
    pub config: PathBuf,
    pub seed: Option<u64>,
    pub variant: Option<AgentVariant>,
    pub threads: Option<usize>,
    pub out: PathBuf,
    pub run_id: Option<String>,
    pub holdout: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainOutcome {
    pub run_dir: PathBuf,
    pub agents: Vec<TrainedAgent>,
}

fn load_config(path: &Path) -> Result<TrainConfig> {
    TrainConfig::from_file(path).map_err(|e| match e {
        Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
        other => other,
    })
}

fn bots_from(config: &Option<PathBuf>) -> Result<BotConfig> {
    Ok(match config {
        Some(p) => load_config(p)?.bots,
        None => BotConfig::default(),
    })
}

fn create_file(path: &Path) -> Result<std::io::BufWriter<std::fs::File>> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    Ok(std::io::BufWriter::new(std::fs::File::create(path)?))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    write_atomic(path, &serde_json::to_vec_pretty(value)?)
}

#[derive(Serialize)]
struct CurveRow<'a> {
    repeat: usize,
    agent: &'a str,
    frames: u64,
    learner_steps: u64,
    updates: u64,
    mean_return: f64,
    win_rate: f64,
    rock: f64,
    paper: f64,
    scissors: f64,
    config_hash: &'a str,
}

/// Trains per the config's mode and writes checkpoints, metrics, a
/// manifest and, against fixed opponents, an evaluation learning curve.
pub fn cmd_train(args: &TrainArgs) -> Result<TrainOutcome> {
    let mut cfg = load_config(&args.config)?;
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(v) = args.variant {
        cfg.variant = v;
    }
    if let Some(t) = args.threads {
        cfg.threads = t.max(1);
    }
    cfg.validate()?;
    let hash = cfg.config_hash();
    let run_id = args.run_id.clone().unwrap_or_else(|| {
        let kind = if args.holdout { "holdout" } else { cfg.variant.id() };
        format!("{kind}_{}_s{}", &hash[..8], cfg.seed)
    });
    let run_dir = args.out.join(&run_id);
    let manifest = RunManifest::start(&run_dir, &run_id, "train", &hash, vec![cfg.seed])?;
    write_atomic(&run_dir.join("config.toml"), toml::to_string(&cfg).map_err(|e| Error::Format(e.to_string()))?.as_bytes())?;
    log::info!("run {run_id}: {} in {}", cfg.variant, run_dir.display());

    let mut outputs = vec![run_dir.join("config.toml")];
    let agents = if args.holdout {
        train_holdout_population(&cfg, Some(&run_dir))?
    } else {
        let mut agents = Vec::new();
        let curve_path = run_dir.join("learning_curve.csv");
        let mut curve = None;
        if cfg.mode == MatchMode::FixedOpponents && cfg.eval_every_frames > 0 {
            curve = Some(csv::Writer::from_writer(create_file(&curve_path)?));
            outputs.push(curve_path);
        }
        for r in 0..cfg.repeats {
            let mut session = Session::new(cfg.clone(), population_specs(&cfg, r), Some(repeat_dir(&run_dir, r)))?;
            match &mut curve {
                Some(w) => {
                    let grid = session.grid().clone();
                    let opponents: Vec<Contestant> = cfg.opponents.iter().map(|&k| Contestant::Bot(k)).collect();
                    let settings = EvalSettings {
                        seed: rng::derive_seed(cfg.seed, &[4, r as u64]),
                        bots: cfg.bots,
                        threads: cfg.threads,
                        ..Default::default()
                    };
                    let mut next = 0u64;
                    let mut evaluate = |s: &Session| -> Result<()> {
                        for (i, l) in s.learners().iter().enumerate() {
                            let subject = Contestant::Policy { id: l.id.clone(), policy: s.policy(i) };
                            let rep = evaluate_vs_holdout(&grid, &subject, &opponents, cfg.eval_episodes, &settings)?;
                            let total: f64 = rep.pickups.iter().sum::<f64>().max(f64::MIN_POSITIVE);
                            w.serialize(CurveRow {
                                repeat: r,
                                agent: &l.id,
                                frames: s.frames(),
                                learner_steps: l.steps(),
                                updates: l.updates(),
                                mean_return: rep.mean_return,
                                win_rate: rep.win_rate,
                                rock: rep.pickups[0] / total,
                                paper: rep.pickups[1] / total,
                                scissors: rep.pickups[2] / total,
                                config_hash: &hash,
                            })
                            .map_err(|e| Error::Format(e.to_string()))?;
                        }
                        w.flush()?;
                        Ok(())
                    };
                    session.run_lockstep(|s, _| {
                        if s.frames() >= next {
                            next = s.frames() + cfg.eval_every_frames;
                            evaluate(s)?;
                        }
                        Ok(false)
                    })?;
                    evaluate(&session)?;
                }
                None => session.train()?,
            }
            agents.extend(session.finish()?);
        }
        agents
    };
    outputs.extend(agents.iter().filter_map(|a| a.checkpoint.clone()));
    write_json(&run_dir.join("agents.json"), &agents)?;
    outputs.push(run_dir.join("agents.json"));
    manifest.finish(&run_dir, outputs)?;
    Ok(TrainOutcome { run_dir, agents })
}

/// Agent directories at or below `path` (depth three), sorted.
pub fn discover_agents(path: &Path) -> Result<Vec<PathBuf>> {
    if !path.exists() {
        return Err(Error::Missing(path.to_path_buf()));
    }
    if path.is_file() || path.join(METADATA_FILE).exists() {
        return Ok(vec![path.to_path_buf()]);
    }
    let mut found = Vec::new();
    let mut frontier = vec![(path.to_path_buf(), 0)];
    while let Some((dir, depth)) = frontier.pop() {
        for entry in std::fs::read_dir(&dir)? {
            let p = entry?.path();
            if !p.is_dir() {
                continue;
            }
            if p.join(METADATA_FILE).exists() {
                found.push(p);
            } else if depth < 2 {
                frontier.push((p, depth + 1));
            }
        }
    }
    found.sort();
    if found.is_empty() {
        return Err(Error::Missing(path.join(METADATA_FILE)));
    }
    Ok(found)
}

fn agent_grid(agent: &LoadedAgent) -> Result<Arc<GridConfig>> {
    let grid = GridConfig::load(&agent.meta.preset)?;
    if grid.config_hash() != agent.meta.game_hash {
        return Err(Error::Config(format!(
            "{} was trained on a different version of preset {}",
            agent.meta.agent_id, agent.meta.preset
        )));
    }
    Ok(Arc::new(grid))
}

fn contestant(agent: &LoadedAgent, greedy: bool) -> Contestant {
    Contestant::Policy {
        id: agent.meta.agent_id.clone(),
        policy: ActorPolicy { greedy, ..ActorPolicy::new(agent.net.clone(), agent.params.clone()) },
    }
}

#[derive(Debug, Clone)]
pub struct EvalArgs {
    pub checkpoint: PathBuf,
    pub opponents: String,
    pub episodes: u64,
    pub greedy: bool,
    pub save_replays: u64,
    pub seed: u64,
    pub threads: usize,
    pub out: PathBuf,
    pub config: Option<PathBuf>,
}

/// Hold-out evaluation with summary, per-episode and JSON reports.
pub fn cmd_eval(args: &EvalArgs) -> Result<HoldoutReport> {
    let agent = load_agent(&args.checkpoint)?;
    let grid = agent_grid(&agent)?;
    let opponents = if args.opponents == "scripted" {
        Contestant::scripted_set()
    } else {
        let mut v = Vec::new();
        for dir in discover_agents(Path::new(&args.opponents))? {
            let o = load_agent(&dir)?;
            if o.meta.game_hash != agent.meta.game_hash {
                return Err(Error::Config(format!("opponent {} was trained on another game", o.meta.agent_id)));
            }
            v.push(contestant(&o, args.greedy));
        }
        v
    };
    let dir = args.out.join(format!("eval_{}", agent.meta.agent_id));
    let manifest = RunManifest::start(&dir, &format!("eval_{}", agent.meta.agent_id), "eval", &agent.meta.game_hash, vec![args.seed])?;
    let settings = EvalSettings {
        seed: args.seed,
        bots: bots_from(&args.config)?,
        threads: args.threads,
        replays: args.save_replays > 0,
        ..Default::default()
    };
    let report = evaluate_vs_holdout(&grid, &contestant(&agent, args.greedy), &opponents, args.episodes, &settings)?;
    let mut outputs = vec![dir.join("summary.csv"), dir.join("episodes.csv"), dir.join("report.json")];
    report.write_csv(create_file(&outputs[0])?)?;
    report.write_episodes_csv(create_file(&outputs[1])?)?;
    write_json(&outputs[2], &report)?;
    for (i, ep) in report.played.iter().take(args.save_replays as usize).enumerate() {
        if let Some((header, steps)) = &ep.record.replay {
            let path = dir.join("replays").join(format!("episode_{i}.jsonl"));
            Replay { header: header.clone(), steps: steps.clone() }.write(create_file(&path)?)?;
            outputs.push(path);
        }
    }
    manifest.finish(&dir, outputs)?;
    println!(
        "{}: mean return {:.2}, win rate {:.3} over {} episodes",
        report.subject, report.mean_return, report.win_rate, report.episodes
    );
    Ok(report)
}

#[derive(Debug, Clone)]
pub struct TournamentArgs {
    pub policies: Vec<String>,
    pub episodes: u64,
    pub preset: Option<String>,
    pub epsilon: f64,
    pub seed: u64,
    pub threads: usize,
    pub out: PathBuf,
    pub config: Option<PathBuf>,
}

/// Cross-play matrix, raw matrix and Nash report.
pub fn cmd_tournament(args: &TournamentArgs) -> Result<(MetaGame, crate::eval::NashReport)> {
    let mut contestants = Vec::new();
    let mut grid: Option<Arc<GridConfig>> = args.preset.as_deref().map(GridConfig::load).transpose()?.map(Arc::new);
    for p in &args.policies {
        match p.as_str() {
            "scripted" => contestants.extend(Contestant::scripted_set()),
            "random" => contestants.push(Contestant::Random),
            s if s.starts_with("bot_") => {
                let kind = ResourceKind::from_name(&s[4..]).ok_or_else(|| Error::Usage(format!("unknown bot {s}")))?;
                contestants.push(Contestant::Bot(kind));
            }
            path => {
                for dir in discover_agents(Path::new(path))? {
                    let a = load_agent(&dir)?;
                    let g = agent_grid(&a)?;
                    match &grid {
                        Some(existing) if existing.config_hash() != g.config_hash() => {
                            return Err(Error::Config(format!("{} was trained on another game", a.meta.agent_id)))
                        }
                        Some(_) => {}
                        None => grid = Some(g),
                    }
                    contestants.push(contestant(&a, false));
                }
            }
        }
    }
    let grid = match grid {
        Some(g) => g,
        None => Arc::new(GridConfig::load("rws")?),
    };
    let dir = args.out.join("tournament");
    let manifest = RunManifest::start(&dir, "tournament", "tournament", &grid.config_hash(), vec![args.seed])?;
    let settings = EvalSettings { seed: args.seed, bots: bots_from(&args.config)?, threads: args.threads, ..Default::default() };
    let game = round_robin(&grid, &contestants, args.episodes, &settings)?;
    let nash = game.nash(args.epsilon)?;
    let outputs = vec![dir.join("payoff.csv"), dir.join("raw_payoff.csv"), dir.join("nash.json")];
    game.write_csv(create_file(&outputs[0])?)?;
    MetaGame { payoff: game.raw.clone(), ..game.clone() }.write_csv(create_file(&outputs[1])?)?;
    #[derive(Serialize)]
    struct NashFile<'a> {
        #[serde(flatten)]
        nash: &'a crate::eval::NashReport,
        raw_asymmetry: f64,
        episodes_per_cell: u64,
        config_hash: &'a str,
    }
    write_json(
        &outputs[2],
        &NashFile { nash: &nash, raw_asymmetry: game.raw_asymmetry, episodes_per_cell: args.episodes, config_hash: &game.config_hash },
    )?;
    manifest.finish(&dir, outputs)?;
    for (id, w) in nash.policies.iter().zip(&nash.weights) {
        println!("{id:>24} {w:.4}");
    }
    println!("effective diversity {:.3}", nash.effective_diversity);
    Ok((game, nash))
}

#[derive(Debug, Clone)]
pub struct ProbeArgs {
    pub checkpoint: PathBuf,
    pub episodes: u64,
    pub seed: u64,
    pub threads: usize,
    pub out: PathBuf,
    pub config: Option<PathBuf>,
}

/// Option probe CSV plus the pairwise pickup tests.
pub fn cmd_probe(args: &ProbeArgs) -> Result<OptionProbeReport> {
    let agent = load_agent(&args.checkpoint)?;
    let grid = agent_grid(&agent)?;
    let settings = EvalSettings { seed: args.seed, bots: bots_from(&args.config)?, threads: args.threads, ..Default::default() };
    let report = option_probe(
        &grid,
        &agent.meta.agent_id,
        agent.net.clone(),
        agent.params.clone(),
        &ResourceKind::ALL,
        args.episodes,
        &settings,
    )?;
    let dir = args.out.join(format!("probe_{}", agent.meta.agent_id));
    let manifest = RunManifest::start(&dir, &format!("probe_{}", agent.meta.agent_id), "probe", &agent.meta.game_hash, vec![args.seed])?;
    let outputs = vec![dir.join("probe.csv"), dir.join("pickup_tests.json")];
    report.write_csv(create_file(&outputs[0])?)?;
    #[derive(Serialize)]
    struct Tests {
        most_distinct: Option<crate::eval::PickupTest>,
        pairs: Vec<crate::eval::PickupTest>,
    }
    write_json(&outputs[1], &Tests { most_distinct: report.most_distinct_pair(), pairs: report.pickup_tests() })?;
    manifest.finish(&dir, outputs)?;
    if let Some(t) = report.most_distinct_pair() {
        println!("most distinct options: {} and {} (chi2 {:.2}, p {:.3e})", t.option_a, t.option_b, t.chi2, t.p_value);
    }
    Ok(report)
}

/// Re-simulates a replay and prints every step. Returns the step count.
pub fn cmd_replay(file: &Path, preset: Option<&str>, out: &mut impl Write) -> Result<usize> {
    let f = std::fs::File::open(file).map_err(|_| Error::Missing(file.to_path_buf()))?;
    let replay = Replay::read(std::io::BufReader::new(f))?;
    let grid = GridConfig::load(preset.unwrap_or(&replay.header.preset))?;
    writeln!(out, "preset {} seed {} players {}", replay.header.preset, replay.header.seed, replay.header.policy_ids.join(", "))?;
    let mut io_err = None;
    let mut steps = 0;
    replay.simulate(&grid, |state, step| {
        steps += 1;
        if io_err.is_some() {
            return;
        }
        let mut text = format!("\nstep {} actions {:?}\n", step.t, step.actions);
        for e in &step.events {
            text.push_str(&format!("event {e:?}\n"));
        }
        if let Some(p) = &step.p_options {
            let probs: Vec<String> = p.iter().map(|v| format!("{v:.2}")).collect();
            text.push_str(&format!("p(z) player {} [{}]\n", step.p_player.unwrap_or(0), probs.join(" ")));
        }
        text.push_str(&state.render_ascii());
        if let Err(e) = out.write_all(text.as_bytes()) {
            io_err = Some(e);
        }
    })?;
    if let Some(e) = io_err {
        return Err(e.into());
    }
    Ok(steps)
}
