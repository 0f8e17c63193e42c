mod common;

use opre::game::GridConfig;
use std::time::Instant;

#[test]
fn running_with_scissors_invariants_hold_over_1000_episodes() {
    let config = GridConfig::rws();
    assert_eq!(config.episode_limit, 500);
    let start = Instant::now();
    let report = common::check_environment(&config, 1000, 11).unwrap();
    assert!(report.confrontations > 0 && report.timeouts > 0, "{report:?}");
    assert!(start.elapsed().as_secs() < 60);
}

#[test]
fn rps_arena_invariants_hold_over_1000_episodes() {
    let config = GridConfig::rps_arena();
    assert_eq!(config.freeze_duration, Some(50));
    let start = Instant::now();
    let report = common::check_environment(&config, 1000, 12).unwrap();
    assert!(report.confrontations > 0 && report.frozen_steps_checked > 0, "{report:?}");
    assert!(start.elapsed().as_secs() < 60);
}

#[test]
fn small_variant_invariants_hold() {
    let report = common::check_environment(&GridConfig::rws_small(), 300, 13).unwrap();
    assert!(report.pickups > 0);
}
