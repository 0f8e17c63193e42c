//! Trains the hold-out population (pure rock, paper and scissors agents
//! shaped by pseudorewards, plus two unshaped agents) and plays it in a
//! round-robin against the scripted bots.
//!
//! cargo run --release --example holdout_population -- [learner_steps] [episodes_per_cell]

use opre::eval::{round_robin, BotConfig, Contestant, EvalSettings};
use opre::harness::{holdout_specs, MatchMode, Session, TrainConfig};

fn main() -> opre::Result<()> {
    env_logger::init();
    let args: Vec<String> = std::env::args().collect();
    let steps: u64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(200_000);
    let episodes: u64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(20);
    let bots = BotConfig { n_collect: 12, ..BotConfig::default() };
    let cfg = TrainConfig {
        preset: "rws_small".into(),
        mode: MatchMode::SelfPlayPool,
        num_actors: 1,
        envs_per_actor: 16,
        max_steps: steps,
        bots,
        ..TrainConfig::default()
    };
    let mut session = Session::new(cfg.clone(), holdout_specs(cfg.seed), None)?;
    session.train()?;
    println!("trained {} agents for {steps} learner steps each", session.agent_ids().len());

    let mut policies: Vec<Contestant> = session
        .agent_ids()
        .into_iter()
        .enumerate()
        .map(|(i, id)| Contestant::Policy { id, policy: session.policy(i) })
        .collect();
    policies.extend(Contestant::scripted_set());
    let game = round_robin(session.grid(), &policies, episodes, &EvalSettings { bots, ..Default::default() })?;
    let nash = game.nash(1e-3)?;
    println!("{:<22} {:>10} {:>8}", "policy", "mean score", "nash");
    for (i, p) in game.policies.iter().enumerate() {
        let mean = game.payoff[i].iter().sum::<f64>() / (game.policies.len() - 1) as f64;
        println!("{p:<22} {mean:>10.2} {:>8.3}", nash.weights[i]);
    }
    println!("effective diversity {:.2}", nash.effective_diversity);
    Ok(())
}
