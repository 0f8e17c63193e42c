//! Central finite-difference check of the full training loss for every
//! agent variant, in 64-bit arithmetic on a small architecture.
//!
//! cargo run --release --example gradient_check

use opre::learning::{build_loss, Bootstrap, LossConfig, Sequence};
use opre::model::{AgentNet, AgentVariant, ArchConfig, OBS_FEATURES};
use opre::rng;
use opre::tensor::{grad_check, ParameterStore};
use rand::Rng as _;

fn random_sequence(net: &AgentNet, len: usize, r: &mut rng::Rng) -> Sequence {
    let mut feats = |n: usize| -> Vec<f32> { (0..n).map(|_| if r.random_bool(0.25) { r.random() } else { 0.0 }).collect() };
    let cw = net.concealed_width();
    let (obs, concealed, initial_state) = (feats(len * OBS_FEATURES), feats(len * cw), feats(net.state_width()));
    let bootstrap = Some(Bootstrap { obs: feats(OBS_FEATURES), concealed: feats(cw) });
    Sequence {
        version: 0,
        obs,
        concealed,
        actions: (0..len).map(|_| r.random_range(0..8u8)).collect(),
        behavior_probs: (0..len).map(|_| r.random_range(0.05..1.0)).collect(),
        rewards: (0..len).map(|_| if r.random_bool(0.2) { r.random_range(-100.0..100.0) } else { 0.0 }).collect(),
        opponent_inventories: (0..len * 3 * net.arch().num_opponents).map(|_| r.random()).collect(),
        initial_state,
        bootstrap,
    }
}

fn main() -> opre::Result<()> {
    let arch = ArchConfig {
        num_options: 4,
        conv_channels: 2,
        mlp: [8, 8],
        lstm_hidden: 6,
        head_hidden: 5,
        concealed_embed: 4,
        concealed_hidden: 4,
        num_opponents: 1,
        ..ArchConfig::default()
    };
    let cfg = LossConfig { reward_scale: 0.05, ..LossConfig::default() };
    for variant in AgentVariant::ALL {
        let net = AgentNet::new(variant, arch.clone())?;
        let params: ParameterStore<f64> = net.init(&mut rng::from_seed(7))?;
        let mut r = rng::from_seed(8);
        let seqs = vec![random_sequence(&net, 5, &mut r), random_sequence(&net, 3, &mut r)];
        let report = grad_check(|tape, p| Ok(build_loss(tape, &net, p, &seqs, &cfg)?.total), &params, 1e-3, &mut r)?;
        let (name, err) = report.worst().cloned().unwrap_or_default();
        println!(
            "{:<18} {:>6} elements  worst {err:.2e} in {name:<20} {}",
            variant.id(),
            report.elements_checked,
            if report.passed() { "ok" } else { "FAILED" }
        );
    }
    Ok(())
}
