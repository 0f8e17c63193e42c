//! Trains an OPRE agent against a scripted rock bot on the 7x7 Running With
//! Scissors variant and prints the evaluation curve.
//!
//! cargo run --release --example exploit_rock_bot -- [max_frames] [threads]

use opre::eval::{evaluate_vs_holdout, Contestant, EvalSettings};
use opre::game::ResourceKind;
use opre::harness::{AgentSpec, MatchMode, Session, TrainConfig};
use std::time::Instant;

fn main() -> opre::Result<()> {
    env_logger::init();
    let args: Vec<String> = std::env::args().collect();
    let max_frames: u64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(2_000_000);
    let threads: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(1);

    let bots = opre::eval::BotConfig { n_collect: 12, ..Default::default() };
    let cfg = TrainConfig {
        preset: "rws_small".into(),
        mode: MatchMode::FixedOpponents,
        opponents: vec![ResourceKind::Rock],
        num_actors: threads.max(1),
        envs_per_actor: 16 / threads.max(1),
        threads,
        max_steps: u64::MAX,
        bots,
        ..TrainConfig::default()
    };
    let spec = AgentSpec { id: "opre_vs_rock".into(), seed: 1, pseudoreward: None };
    let mut session = Session::new(cfg.clone(), vec![spec], None)?;
    let grid = session.grid().clone();
    let opponents = [Contestant::Bot(ResourceKind::Rock)];
    let start = Instant::now();
    let mut next_eval = 0u64;
    session.run_lockstep(|s, _| {
        let frames = s.frames();
        if frames >= next_eval {
            next_eval += 100_000;
            let subject = Contestant::Policy { id: "opre".into(), policy: s.policy(0) };
            let settings = EvalSettings { seed: 99, bots, threads, ..Default::default() };
            let r = evaluate_vs_holdout(&grid, &subject, &opponents, 100, &settings)?;
            let total: f64 = r.pickups.iter().sum();
            println!(
                "frames {frames:>8}  updates {:>5}  {:>6.0}s  return {:>6.1}  paper share {:.2}",
                s.learners()[0].updates(),
                start.elapsed().as_secs_f64(),
                r.mean_return,
                if total > 0.0 { r.pickups[1] / total } else { 0.0 },
            );
        }
        Ok(frames >= max_frames)
    })?;
    Ok(())
}
