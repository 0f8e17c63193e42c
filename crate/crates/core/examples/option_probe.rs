//! Forces each option of a trained OPRE agent in turn and reports how the
//! options differ in what they collect.
//!
//! cargo run --release --example option_probe -- <agent dir or .ckpt> [episodes]
//!
//! Without a checkpoint a short run against the rock bot is trained first.

use opre::eval::{option_probe, BotConfig, EvalSettings};
use opre::game::{GridConfig, ResourceKind};
use opre::harness::{load_agent, AgentSpec, MatchMode, Session, TrainConfig};
use std::sync::Arc;

fn main() -> opre::Result<()> {
    env_logger::init();
    let args: Vec<String> = std::env::args().collect();
    let episodes: u64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(20);
    let bots = BotConfig { n_collect: 12, ..BotConfig::default() };

    let (id, grid, net, params) = match args.get(1) {
        Some(path) => {
            let agent = load_agent(path.as_ref())?;
            let grid = Arc::new(GridConfig::load(&agent.meta.preset)?);
            (agent.meta.agent_id, grid, agent.net, agent.params)
        }
        None => {
            let cfg = TrainConfig {
                preset: "rws_small".into(),
                mode: MatchMode::FixedOpponents,
                opponents: vec![ResourceKind::Rock],
                num_actors: 1,
                envs_per_actor: 16,
                max_steps: 300_000,
                bots,
                ..TrainConfig::default()
            };
            let mut session = Session::new(cfg, vec![AgentSpec { id: "probe_demo".into(), seed: 1, pseudoreward: None }], None)?;
            println!("training a short OPRE run against the rock bot...");
            session.train()?;
            let p = session.policy(0);
            ("probe_demo".to_string(), session.grid().clone(), p.net, p.params)
        }
    };

    let settings = EvalSettings { bots, ..Default::default() };
    let report = option_probe(&grid, &id, net, params, &ResourceKind::ALL, episodes, &settings)?;
    report.validate()?;
    println!("option  rock  paper  scissors  (pickup shares over all opponents)");
    let options = report.cells.iter().map(|c| c.option + 1).max().unwrap_or(0);
    for z in 0..options {
        let pickups = report.option_pickups(z);
        let n = pickups.iter().sum::<u64>().max(1) as f64;
        println!(
            "{z:>6}  {:>4.2}  {:>5.2}  {:>8.2}   n={}",
            pickups[0] as f64 / n,
            pickups[1] as f64 / n,
            pickups[2] as f64 / n,
            pickups.iter().sum::<u64>()
        );
    }
    if let Some(t) = report.most_distinct_pair() {
        println!("most distinct options: {} and {} (chi2 {:.1}, p {:.2e})", t.option_a, t.option_b, t.chi2, t.p_value);
    }
    Ok(())
}
