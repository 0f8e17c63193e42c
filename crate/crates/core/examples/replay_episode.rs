//! Plays a scripted paper bot against a scripted rock bot on Running With
//! Scissors, writes the replay, then re-simulates it from the file.
//!
//! cargo run --release --example replay_episode -- [seed] [out.jsonl]

use opre::eval::{BotConfig, ScriptedBot};
use opre::game::replay::{Replay, ReplayHeader, ReplayStep, ReplayWriter, REPLAY_FORMAT_VERSION};
use opre::game::{Event, GameState, GridConfig, ResourceKind};
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::sync::Arc;

fn main() -> opre::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let seed: u64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(3);
    let path = args.get(2).cloned().unwrap_or_else(|| std::env::temp_dir().join("rws_replay.jsonl").display().to_string());

    let grid = Arc::new(GridConfig::rws());
    let mut state = GameState::reset(grid.clone(), seed)?;
    let cfg = BotConfig::default();
    let mut bots = [
        ScriptedBot::new(ResourceKind::Paper, cfg, &grid, seed),
        ScriptedBot::new(ResourceKind::Rock, cfg, &grid, seed + 1),
    ];
    let header = ReplayHeader {
        format_version: REPLAY_FORMAT_VERSION,
        preset: grid.name.clone(),
        config_hash: grid.config_hash(),
        seed,
        policy_ids: vec!["bot_paper".into(), "bot_rock".into()],
    };
    let mut writer = ReplayWriter::new(BufWriter::new(File::create(&path)?), &header)?;
    println!("{}", state.render_ascii());
    while !state.is_terminated() {
        let t = state.step_count();
        let actions: Vec<_> = bots.iter_mut().enumerate().map(|(i, b)| b.act(&state, i)).collect();
        let out = state.step(&actions)?;
        for e in &out.events {
            if let Event::Confrontation { tagger, tagged, reward } = e {
                println!("step {t}: player {tagger} tagged player {tagged}, reward {reward:.2}");
            }
        }
        writer.push(&ReplayStep { t, actions, events: out.events, p_options: None, p_player: None })?;
    }
    writer.finish()?;
    println!("{}", state.render_ascii());

    let replay = Replay::read(BufReader::new(File::open(&path)?))?;
    let replayed = replay.simulate(&grid, |_, _| {})?;
    println!(
        "{} steps written to {path}; re-simulation identical: {}",
        replay.steps.len(),
        replayed == state
    );
    Ok(())
}
