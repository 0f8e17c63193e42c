//! Invariant checks over random-action episodes, shared by the
//! integration tests and the acceptance runner.

#![allow(dead_code)]

use opre::game::replay::{Replay, ReplayHeader, ReplayStep, REPLAY_FORMAT_VERSION};
use opre::game::{Action, Event, GameState, GridConfig, Inventory, PAYOFF_SCALE};
use opre::rng::{derive, derive_seed};
use rand::Rng as _;
use std::sync::Arc;

#[derive(Debug, Default, Clone)]
pub struct SuiteReport {
    pub episodes: usize,
    pub steps: u64,
    pub confrontations: u64,
    pub pickups: u64,
    pub timeouts: u64,
    pub frozen_steps_checked: u64,
}

/// Plays `episodes` uniformly random episodes and checks every invariant
/// after every step. Returns the first violation as an error.
pub fn check_environment(config: &GridConfig, episodes: usize, seed: u64) -> Result<SuiteReport, String> {
    let config = Arc::new(config.clone());
    let mut report = SuiteReport { episodes, ..Default::default() };
    for e in 0..episodes {
        let ep_seed = derive_seed(seed, &[e as u64]);
        check_episode(&config, ep_seed, &mut report).map_err(|m| format!("episode {e} (seed {ep_seed}): {m}"))?;
    }
    Ok(report)
}

fn check_episode(config: &Arc<GridConfig>, seed: u64, report: &mut SuiteReport) -> Result<(), String> {
    let n = config.num_players;
    let mut state = GameState::reset(config.clone(), seed).map_err(|e| e.to_string())?;
    let mut rng = derive(seed, &[7]);
    let initial_resources = state.resources_on_grid();
    let mut inventories = vec![Inventory::INITIAL; n];
    let mut states = vec![state.clone()];
    let mut steps = Vec::new();
    // Per player: (frozen until, position, orientation) while frozen.
    let mut frozen: Vec<Option<(u32, opre::game::Pos, opre::game::Orientation)>> = vec![None; n];

    while !state.is_terminated() {
        let t = state.step_count();
        let actions: Vec<Action> =
            (0..n).map(|_| Action::from_index(rng.random_range(0..Action::COUNT)).unwrap()).collect();
        let was_frozen: Vec<bool> = state.players().iter().map(|p| p.is_frozen(t)).collect();
        let out = state.step(&actions).map_err(|e| e.to_string())?;
        report.steps += 1;

        // Zero-sum: each confrontation moves exactly `reward` from one
        // player to the other and nothing else pays out.
        let mut expected = vec![0.0f64; n];
        let mut confronted = false;
        for ev in &out.events {
            match *ev {
                Event::Confrontation { tagger, tagged, reward } => {
                    confronted = true;
                    report.confrontations += 1;
                    if tagger == tagged {
                        return Err(format!("step {t}: player {tagger} tagged itself"));
                    }
                    if reward.abs() > PAYOFF_SCALE {
                        return Err(format!("step {t}: |reward| {reward} exceeds the payoff scale"));
                    }
                    if was_frozen[tagger] || was_frozen[tagged] {
                        return Err(format!("step {t}: a frozen player took part in a confrontation"));
                    }
                    if expected[tagger] != 0.0 || expected[tagged] != 0.0 {
                        return Err(format!("step {t}: a player took part in two confrontations"));
                    }
                    expected[tagger] = reward;
                    expected[tagged] = -reward;
                    if config.reset_inventory_on_tag {
                        inventories[tagger] = Inventory::INITIAL;
                        inventories[tagged] = Inventory::INITIAL;
                    }
                    if let Some(d) = config.freeze_duration {
                        let loser = if reward < 0.0 { tagger } else { tagged };
                        let p = state.player(loser);
                        if p.frozen_until != Some(t + 1 + d) {
                            return Err(format!("step {t}: loser {loser} frozen until {:?}", p.frozen_until));
                        }
                        frozen[loser] = Some((t + 1 + d, p.position, p.orientation));
                    }
                }
                Event::Pickup { player, kind, .. } => {
                    report.pickups += 1;
                    inventories[player].add(kind);
                }
            }
        }
        if out.rewards != expected {
            return Err(format!("step {t}: rewards {:?} != confrontation transfers {expected:?}", out.rewards));
        }

        for (i, p) in state.players().iter().enumerate() {
            if p.inventory != inventories[i] {
                return Err(format!("step {t}: player {i} inventory {:?} != {:?}", p.inventory, inventories[i]));
            }
        }

        // Conservation: every resource is on the grid, picked up for good,
        // or waiting to respawn.
        let accounted = if config.respawn_delay.is_some() {
            state.resources_on_grid() + state.pending_respawns()
        } else {
            state.resources_on_grid() + state.total_pickups() as usize
        };
        if accounted != initial_resources {
            return Err(format!("step {t}: {accounted} resources accounted for, {initial_resources} at reset"));
        }

        // Frozen players stay put, cannot act and cannot be tagged.
        let now = state.step_count();
        for i in 0..n {
            let Some((until, pos, orient)) = frozen[i] else { continue };
            let p = state.player(i);
            if was_frozen[i] {
                if p.position != pos || p.orientation != orient {
                    return Err(format!("step {t}: frozen player {i} moved"));
                }
                if out.events.iter().any(|ev| matches!(*ev, Event::Pickup { player, .. } if player == i)) {
                    return Err(format!("step {t}: frozen player {i} picked something up"));
                }
                report.frozen_steps_checked += 1;
            }
            if now >= until {
                if p.is_frozen(now) {
                    return Err(format!("step {t}: player {i} still frozen at {now}, due {until}"));
                }
                frozen[i] = None;
            } else if !p.is_frozen(now) {
                return Err(format!("step {t}: player {i} thawed early at {now}, due {until}"));
            }
        }

        // Timeout and termination.
        if now > config.episode_limit {
            return Err(format!("episode ran past the limit ({now})"));
        }
        let should_end = now == config.episode_limit || (config.terminate_on_tag && confronted);
        if out.terminated != should_end {
            return Err(format!("step {t}: terminated = {} but expected {should_end}", out.terminated));
        }
        if out.terminated && !confronted {
            report.timeouts += 1;
        }

        states.push(state.clone());
        steps.push(ReplayStep { t, actions, events: out.events, p_options: None, p_player: None });
    }

    // Determinism: the serialized replay re-simulates to bit-identical
    // states, and serializing twice gives identical bytes.
    let replay = Replay {
        header: ReplayHeader {
            format_version: REPLAY_FORMAT_VERSION,
            preset: config.name.clone(),
            config_hash: config.config_hash(),
            seed,
            policy_ids: (0..n).map(|i| format!("random_{i}")).collect(),
        },
        steps,
    };
    let mut bytes = Vec::new();
    replay.write(&mut bytes).map_err(|e| e.to_string())?;
    let mut again = Vec::new();
    replay.write(&mut again).map_err(|e| e.to_string())?;
    if bytes != again {
        return Err("replay serialization is not stable".into());
    }
    let parsed = Replay::read(bytes.as_slice()).map_err(|e| e.to_string())?;
    if parsed != replay {
        return Err("replay did not round-trip".into());
    }
    let mut k = 1;
    let mut mismatch = None;
    let last = parsed
        .simulate(config, |s, step| {
            if mismatch.is_none() && *s != states[k] {
                mismatch = Some(step.t);
            }
            k += 1;
        })
        .map_err(|e| e.to_string())?;
    if let Some(t) = mismatch {
        return Err(format!("replay state diverged at step {t}"));
    }
    if last != state {
        return Err("replayed final state differs".into());
    }
    Ok(())
}
