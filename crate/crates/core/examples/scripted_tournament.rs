//! Round-robin tournament between the scripted bots and a random policy,
//! followed by the meta-game Nash equilibrium and its effective diversity.
//!
//! cargo run --release --example scripted_tournament -- [episodes_per_cell] [preset]

use opre::eval::{round_robin, Contestant, EvalSettings};
use opre::game::GridConfig;
use std::sync::Arc;

fn main() -> opre::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let episodes: u64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(40);
    let grid = Arc::new(GridConfig::load(args.get(2).map(String::as_str).unwrap_or("rws"))?);

    let mut policies = Contestant::scripted_set();
    policies.push(Contestant::Random);
    let game = round_robin(&grid, &policies, episodes, &EvalSettings::default())?;

    print!("{:>14}", "");
    for p in &game.policies {
        print!("{p:>14}");
    }
    println!();
    for (p, row) in game.policies.iter().zip(&game.payoff) {
        print!("{p:>14}");
        for v in row {
            print!("{v:>14.2}");
        }
        println!();
    }
    let nash = game.nash(1e-3)?;
    println!("\nNash weights:");
    for (p, w) in nash.policies.iter().zip(&nash.weights) {
        println!("  {p:<14} {w:.3}");
    }
    println!("exploitability {:.2e}, effective diversity {:.2}", nash.exploitability, nash.effective_diversity);
    Ok(())
}
