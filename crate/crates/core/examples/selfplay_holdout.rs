//! Trains a three-seed self-play population on the 7x7 variant and reports
//! each agent's win rate against the scripted rock, paper and scissors bots.
//!
//! cargo run --release --example selfplay_holdout -- [variant] [max_frames] [eval_every]

use opre::eval::{evaluate_vs_holdout, BotConfig, Contestant, EvalSettings};
use opre::harness::{population_specs, MatchMode, Session, TrainConfig};
use opre::model::AgentVariant;
use std::time::Instant;

fn main() -> opre::Result<()> {
    env_logger::init();
    let args: Vec<String> = std::env::args().collect();
    let variant: AgentVariant = args.get(1).map(|s| s.parse()).transpose()?.unwrap_or(AgentVariant::Opre);
    let max_frames: u64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(1_000_000);
    let eval_every: u64 = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(200_000);

    let bots = BotConfig { n_collect: 12, ..BotConfig::default() };
    let cfg = TrainConfig {
        preset: "rws_small".into(),
        variant,
        mode: MatchMode::SelfPlayPool,
        num_seeds: 3,
        repeats: 1,
        num_actors: 1,
        envs_per_actor: 16,
        max_steps: u64::MAX,
        bots,
        ..TrainConfig::default()
    };
    let mut session = Session::new(cfg.clone(), population_specs(&cfg, 0), None)?;
    let grid = session.grid().clone();
    let holdout = Contestant::scripted_set();
    let start = Instant::now();
    let mut next_eval = eval_every;
    session.run_lockstep(|s, _| {
        let frames = s.frames();
        let last = frames >= max_frames;
        if frames >= next_eval || last {
            next_eval += eval_every;
            let mut rates = Vec::new();
            let mut first = None;
            for (i, id) in s.agent_ids().into_iter().enumerate() {
                let subject = Contestant::Policy { id, policy: s.policy(i) };
                let settings = EvalSettings { seed: 7, bots, ..Default::default() };
                let r = evaluate_vs_holdout(&grid, &subject, &holdout, 300, &settings)?;
                rates.push(r.win_rate);
                first.get_or_insert(r);
            }
            println!(
                "{variant} frames {frames:>8}  {:>6.0}s  win rates {:.3?}  mean {:.3}",
                start.elapsed().as_secs_f64(),
                rates,
                rates.iter().sum::<f64>() / rates.len() as f64
            );
            if let Some(r) = first {
                for b in &r.by_opponent {
                    println!("    vs {:<13} return {:>6.1}  win rate {:.2}", b.opponent, b.mean_return, b.win_rate);
                }
                println!(
                    "    pickups {:.1?}  confrontations won per episode {:.2}  won fraction {:.2}",
                    r.pickups, r.victories_per_episode, r.victory_fraction
                );
            }
        }
        Ok(last)
    })?;
    Ok(())
}
