//! Acceptance runner: one PASS/FAIL line per criterion.
//!
//! `OPRE_ACCEPTANCE_ONLY=1,4,7` restricts the run to the listed criteria.
//! Training criteria (8-10) take tens of minutes on a single core.
//! The process exits 0 so that a failed experiment is reported rather than
//! hidden behind a test-harness abort; `OPRE_ACCEPTANCE_STRICT=1` exits 1
//! on any failure instead.

mod common;

use opre::cli::{cmd_probe, ProbeArgs};
use opre::eval::{
    effective_diversity, evaluate_vs_holdout, solve_nash, BotConfig, Contestant, EvalSettings, HoldoutReport,
};
use opre::game::{compute_payoff, GridConfig, Inventory, ResourceKind};
use opre::harness::{population_specs, AgentSpec, MatchMode, Session, TrainConfig};
use opre::learning::{build_loss, vtrace, Bootstrap, LossConfig, Sequence};
use opre::model::{AgentNet, AgentVariant, ArchConfig, SequenceInputs, OBS_FEATURES};
use opre::rng::{self, Rng};
use opre::tensor::{grad_check, Conv1d, Dense, Lstm, LstmState, ParameterStore, Tape, Tensor, Var};
use rand::Rng as _;
use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::time::Instant;

struct Check {
    passed: bool,
    detail: String,
}

impl Check {
    fn new(passed: bool, detail: impl Into<String>) -> Self {
        Check { passed, detail: detail.into() }
    }
}

type Outcome = Result<Check, String>;

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

// ---------------------------------------------------------------- 1

/// Rock-paper-scissors resolved one unit against one unit, straight from
/// the cyclic rule.
fn beats(a: usize, b: usize) -> i64 {
    // rock 0, paper 1, scissors 2: paper beats rock, scissors beat paper,
    // rock beats scissors.
    match (a, b) {
        (1, 0) | (2, 1) | (0, 2) => 1,
        (0, 1) | (1, 2) | (2, 0) => -1,
        _ => 0,
    }
}

fn brute_force_payoff(a: [u32; 3], b: [u32; 3]) -> f64 {
    let mut num = 0i64;
    for i in 0..3 {
        for j in 0..3 {
            num += a[i] as i64 * b[j] as i64 * beats(i, j);
        }
    }
    let den = a.iter().sum::<u32>() as i64 * b.iter().sum::<u32>() as i64;
    (100 * num) as f64 / den as f64
}

fn payoff_oracle() -> Outcome {
    let start = Instant::now();
    let range = 1..=4u32;
    let mut pairs = 0;
    let mut mismatches = 0;
    for r0 in range.clone() {
        for p0 in range.clone() {
            for s0 in range.clone() {
                for r1 in range.clone() {
                    for p1 in range.clone() {
                        for s1 in range.clone() {
                            let (a, b) = ([r0, p0, s0], [r1, p1, s1]);
                            let got = compute_payoff(&Inventory(a), &Inventory(b)).map_err(err)?;
                            let back = compute_payoff(&Inventory(b), &Inventory(a)).map_err(err)?;
                            let ok = got.to_bits() == brute_force_payoff(a, b).to_bits()
                                && got == -back
                                && got.abs() <= 100.0;
                            mismatches += usize::from(!ok);
                            pairs += 1;
                        }
                    }
                }
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    Ok(Check::new(
        pairs == 4096 && mismatches == 0 && secs < 1.0,
        format!("{pairs} pairs, {mismatches} mismatches, {secs:.3}s"),
    ))
}

// ---------------------------------------------------------------- 2

fn environment_suite() -> Outcome {
    let start = Instant::now();
    let rws = common::check_environment(&GridConfig::rws(), 1000, 21)?;
    let arena = common::check_environment(&GridConfig::rps_arena(), 1000, 22)?;
    let secs = start.elapsed().as_secs_f64();
    let rules = GridConfig::rws().episode_limit == 500 && GridConfig::rps_arena().freeze_duration == Some(50);
    Ok(Check::new(
        rules && secs < 60.0 && rws.timeouts > 0 && arena.frozen_steps_checked > 0,
        format!(
            "RWS {} steps, {} confrontations, {} timeouts; Arena {} steps, {} confrontations, {} frozen steps; {secs:.1}s",
            rws.steps, rws.confrontations, rws.timeouts, arena.steps, arena.confrontations, arena.frozen_steps_checked
        ),
    ))
}

// ---------------------------------------------------------------- 3

fn random_tensor(rows: usize, cols: usize, r: &mut Rng) -> Tensor<f64> {
    Tensor::from_vec(rows, cols, (0..rows * cols).map(|_| r.random_range(-1.0..1.0)).collect()).unwrap()
}

fn small_arch(opponents: usize) -> ArchConfig {
    ArchConfig {
        num_options: 3,
        conv_channels: 2,
        mlp: [6, 6],
        lstm_hidden: 5,
        head_hidden: 4,
        concealed_embed: 4,
        concealed_hidden: 4,
        num_opponents: opponents,
        ..ArchConfig::default()
    }
}

fn random_sequence(net: &AgentNet, len: usize, ended: bool, r: &mut Rng) -> Sequence {
    let mut feats = |n: usize| -> Vec<f32> {
        (0..n).map(|_| if r.random_bool(0.25) { r.random_range(0.0..1.0) } else { 0.0 }).collect()
    };
    let cw = net.concealed_width();
    let obs = feats(len * OBS_FEATURES);
    let concealed = feats(len * cw);
    let initial_state = feats(net.state_width());
    let bootstrap = if ended { None } else { Some(Bootstrap { obs: feats(OBS_FEATURES), concealed: feats(cw) }) };
    let opp = 3 * net.arch().num_opponents;
    Sequence {
        version: 0,
        obs,
        concealed,
        actions: (0..len).map(|_| r.random_range(0..8u8)).collect(),
        behavior_probs: (0..len).map(|_| r.random_range(0.05..1.0)).collect(),
        rewards: (0..len).map(|_| if r.random_bool(0.2) { r.random_range(-100.0..100.0) } else { 0.0 }).collect(),
        opponent_inventories: (0..len * opp).map(|_| r.random_range(0.0..1.0)).collect(),
        initial_state,
        bootstrap,
    }
}

fn random_batch(net: &AgentNet, seed: u64) -> Vec<Sequence> {
    let mut r = rng::from_seed(seed);
    vec![random_sequence(net, 4, false, &mut r), random_sequence(net, 2, true, &mut r), random_sequence(net, 3, false, &mut r)]
}

fn gradient_checks() -> Outcome {
    let start = Instant::now();
    let mut r = rng::from_seed(31);
    let mut lines = Vec::new();
    let mut all = true;
    let mut record = |name: &str, rep: opre::tensor::GradCheckReport| {
        let worst = rep.worst().map(|w| w.1).unwrap_or(0.0);
        all &= rep.passed();
        lines.push(format!("{name} {worst:.1e}"));
    };

    let dense = Dense::new("d", 6, 4);
    let mut p = ParameterStore::<f64>::new();
    dense.init(&mut p, &mut r).map_err(err)?;
    let x = random_tensor(3, 6, &mut r);
    let f = |tape: &mut Tape<f64>, p: &ParameterStore<f64>| -> opre::Result<Var> {
        let xv = tape.constant(x.clone());
        let y = dense.forward(tape, p, xv)?;
        let y = tape.tanh(y);
        let y = tape.square(y);
        Ok(tape.sum(y))
    };
    record("dense", grad_check(f, &p, 1e-4, &mut r).map_err(err)?);

    let conv = Conv1d::new("c", 5, 4, 3, 3);
    let mut p = ParameterStore::<f64>::new();
    conv.init(&mut p, &mut r).map_err(err)?;
    let x = random_tensor(2, 20, &mut r);
    let f = |tape: &mut Tape<f64>, p: &ParameterStore<f64>| -> opre::Result<Var> {
        let xv = tape.constant(x.clone());
        let y = conv.forward(tape, p, xv)?;
        let y = tape.relu(y);
        let y = tape.square(y);
        Ok(tape.sum(y))
    };
    record("conv1d", grad_check(f, &p, 1e-4, &mut r).map_err(err)?);

    let lstm = Lstm::new("l", 4, 5);
    let mut p = ParameterStore::<f64>::new();
    lstm.init(&mut p, &mut r).map_err(err)?;
    let xs: Vec<Tensor<f64>> = (0..4).map(|_| random_tensor(3, 4, &mut r)).collect();
    let f = |tape: &mut Tape<f64>, p: &ParameterStore<f64>| -> opre::Result<Var> {
        let mut s = LstmState { cell: tape.constant(Tensor::zeros(3, 5)), hidden: tape.constant(Tensor::zeros(3, 5)) };
        for x in &xs {
            let xv = tape.constant(x.clone());
            s = lstm.step(tape, p, xv, s)?;
        }
        let y = tape.concat_cols(&[s.cell, s.hidden])?;
        let y = tape.square(y);
        Ok(tape.sum(y))
    };
    record("lstm", grad_check(f, &p, 1e-4, &mut r).map_err(err)?);

    // Option heads: softmax weights mixing per-option log-softmax rows.
    let mut p = ParameterStore::<f64>::new();
    p.insert("w", random_tensor(3, 4, &mut r)).map_err(err)?;
    p.insert("e", random_tensor(3, 4 * 8, &mut r)).map_err(err)?;
    let f = |tape: &mut Tape<f64>, p: &ParameterStore<f64>| -> opre::Result<Var> {
        let w = tape.param("w", p.get("w")?.clone());
        let e = tape.param("e", p.get("e")?.clone());
        let q = tape.softmax(w, 4)?;
        let eta = tape.softmax(e, 8)?;
        let pi = tape.mix(q, eta)?;
        let lp = tape.log(pi);
        let g = tape.gather(lp, vec![1, 5, 7])?;
        let le = tape.log_softmax(e, 8)?;
        let le = tape.square(le);
        let a = tape.sum(g);
        let b = tape.sum(le);
        tape.add(a, b)
    };
    record("softmax-mixture", grad_check(f, &p, 1e-4, &mut r).map_err(err)?);

    for variant in AgentVariant::ALL {
        let net = AgentNet::new(variant, small_arch(1)).map_err(err)?;
        let params: ParameterStore<f64> = net.init(&mut rng::from_seed(2)).map_err(err)?;
        let seqs = random_batch(&net, 4);
        let cfg = LossConfig { reward_scale: 0.05, ..LossConfig::default() };
        let rep = grad_check(|tape, p| Ok(build_loss(tape, &net, p, &seqs, &cfg)?.total), &params, 1e-3, &mut r)
            .map_err(err)?;
        record(&format!("loss[{variant}]"), rep);
    }
    let secs = start.elapsed().as_secs_f64();
    Ok(Check::new(all && secs < 300.0, format!("max rel. error {}; {secs:.1}s", lines.join(", "))))
}

// ---------------------------------------------------------------- 4

/// vs_t = V_t + sum_{k>=t} (prod_{i=t}^{k-1} gamma_i c_i) rho_k delta_k.
#[allow(clippy::too_many_arguments)]
fn direct_vtrace(v: &[f64], boot: f64, r: &[f64], g: &[f64], pi: &[f64], mu: &[f64], rho_bar: f64, c_bar: f64) -> Vec<f64> {
    let n = v.len();
    let next = |t: usize| if t + 1 < n { v[t + 1] } else { boot };
    (0..n)
        .map(|t| {
            let mut total = v[t];
            for k in t..n {
                let mut coef = 1.0;
                for i in t..k {
                    coef *= g[i] * (pi[i] / mu[i]).min(c_bar);
                }
                total += coef * (pi[k] / mu[k]).min(rho_bar) * (r[k] + g[k] * next(k) - v[k]);
            }
            total
        })
        .collect()
}

fn vtrace_oracle() -> Outcome {
    let mut r = rng::from_seed(41);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let n = 5;
        let mut draw = |lo: f64, hi: f64| -> Vec<f64> { (0..n).map(|_| r.random_range(lo..hi)).collect() };
        let v = draw(-1.0, 1.0);
        let rew = draw(-1.0, 1.0);
        let pi = draw(0.01, 1.0);
        let mu = draw(0.01, 1.0);
        let mut g = draw(0.9, 1.0);
        if r.random_bool(0.3) {
            g[n - 1] = 0.0;
        }
        let boot = r.random_range(-1.0..1.0);
        let rho_bar = r.random_range(0.5..2.0);
        let c_bar = r.random_range(0.25..=rho_bar);
        let out = vtrace(&v, boot, &rew, &g, &pi, &mu, rho_bar, c_bar).map_err(err)?;
        for (a, b) in out.vs.iter().zip(direct_vtrace(&v, boot, &rew, &g, &pi, &mu, rho_bar, c_bar)) {
            worst = worst.max((a - b).abs());
        }
    }
    // On-policy with inactive clips: discounted n-step returns.
    let mut nstep_worst: f64 = 0.0;
    for _ in 0..1000 {
        let n = 5;
        let v: Vec<f64> = (0..n).map(|_| r.random_range(-1.0..1.0)).collect();
        let rew: Vec<f64> = (0..n).map(|_| r.random_range(-1.0..1.0)).collect();
        let probs: Vec<f64> = (0..n).map(|_| r.random_range(0.05..1.0)).collect();
        let gamma = r.random_range(0.5..1.0);
        let boot = r.random_range(-1.0..1.0);
        let out = vtrace(&v, boot, &rew, &vec![gamma; n], &probs, &probs, 1.0, 1.0).map_err(err)?;
        for t in 0..n {
            let mut ret = gamma.powi((n - t) as i32) * boot;
            for (k, rk) in rew.iter().enumerate().skip(t) {
                ret += gamma.powi((k - t) as i32) * rk;
            }
            nstep_worst = nstep_worst.max((out.vs[t] - ret).abs());
        }
    }
    Ok(Check::new(
        worst <= 1e-10 && nstep_worst <= 1e-12,
        format!("max |recursive - direct| {worst:.1e} over 1000 sequences; n-step reduction error {nstep_worst:.1e}"),
    ))
}

// ---------------------------------------------------------------- 5

/// Runs unrolls of the default OPRE network on random inputs until `rows`
/// forward rows have been checked. Returns the largest identity error.
fn mixture_fuzz_in<T: opre::tensor::Real>(rows: usize, max_gain: f64, seed: u64) -> Result<(f64, usize), String> {
    let mut r = rng::from_seed(seed);
    let mut seen = 0usize;
    let mut worst: f64 = 0.0;
    let mut pass = 0;
    while seen < rows {
        let opponents = [1usize, 4][pass % 2];
        let net = AgentNet::new(AgentVariant::Opre, ArchConfig::for_players(opponents + 1)).map_err(err)?;
        let base: ParameterStore<f64> = net.init(&mut rng::from_seed(seed + 1000 + pass as u64)).map_err(err)?;
        // Inflate the parameters to push the softmaxes toward saturation.
        let gain = r.random_range(1.0..=max_gain);
        let mut params = ParameterStore::<f64>::new();
        for (n, t) in base.iter() {
            let scaled = Tensor::from_vec(t.rows(), t.cols(), t.data().iter().map(|v| v * gain).collect()).map_err(err)?;
            params.insert(n, scaled).map_err(err)?;
        }
        let params: ParameterStore<T> = params.cast();
        let (steps, batch) = (20, 10);
        let mut fill = |n: usize, cols: usize| -> Tensor<T> {
            let data = (0..n * cols)
                .map(|_| T::from_f64(if r.random_bool(0.3) { r.random_range(0.0..1.0) } else { 0.0 }))
                .collect();
            Tensor::from_vec(n, cols, data).unwrap()
        };
        let input = SequenceInputs {
            steps,
            batch,
            obs: fill(steps * batch, OBS_FEATURES),
            concealed: fill(steps * batch, net.concealed_width()),
            initial_state: fill(batch, net.state_width()),
        };
        let mut tape = Tape::new();
        let vars = net.unroll(&mut tape, &params, &input).map_err(err)?;
        for o in net.network_outputs(&mut tape, &vars).map_err(err)? {
            worst = worst.max(o.identity_error());
            seen += 1;
        }
        pass += 1;
    }
    Ok((worst, pass))
}

fn mixture_fuzz() -> Outcome {
    let (worst, unrolls) = mixture_fuzz_in::<f64>(10_000, 6.0, 51)?;
    let (worst32, _) = mixture_fuzz_in::<f32>(2_000, 1.0, 52)?;
    Ok(Check::new(
        worst <= 1e-6,
        format!(
            "10000 forward rows in {unrolls} unrolls, max identity error {worst:.1e} (f64); \
             f32 training precision at init scale {worst32:.1e}"
        ),
    ))
}

// ---------------------------------------------------------------- 6

fn max_abs_grad(variant: AgentVariant, seed: u64, prefix: &str) -> Result<f64, String> {
    let net = AgentNet::new(variant, small_arch(2)).map_err(err)?;
    let params: ParameterStore<f64> = net.init(&mut rng::from_seed(seed)).map_err(err)?;
    let seqs = random_batch(&net, seed + 1);
    let mut tape = Tape::new();
    let g = build_loss(&mut tape, &net, &params, &seqs, &LossConfig::default()).map_err(err)?;
    let grads = tape.backward(g.policy).map_err(err)?;
    Ok(grads
        .iter()
        .filter(|(n, _)| n.starts_with(prefix))
        .flat_map(|(_, t)| t.data().iter().map(|v| v.abs()))
        .fold(0.0, f64::max))
}

fn stop_gradient_topology() -> Outcome {
    let mut opre_max: f64 = 0.0;
    let mut qgrad_min = f64::INFINITY;
    for seed in 0..20 {
        opre_max = opre_max.max(max_abs_grad(AgentVariant::Opre, seed, "q/")?);
        qgrad_min = qgrad_min.min(max_abs_grad(AgentVariant::OpreQGrad, seed, "q/")?);
    }
    Ok(Check::new(
        opre_max == 0.0 && qgrad_min > 0.0,
        format!("20 batches: OPRE max |dL_pol/dq| = {opre_max:e}, OPRE_Q_GRAD min over batches = {qgrad_min:.2e}"),
    ))
}

// ---------------------------------------------------------------- 7

fn nash_diversity() -> Outcome {
    let m = opre::game::payoff_matrix();
    let rps: Vec<Vec<f64>> = m.iter().map(|row| row.iter().map(|&v| 100.0 * v as f64).collect()).collect();
    let sol = solve_nash(&rps, 1e-4).map_err(err)?;
    let dev = sol.weights.iter().map(|w| (w - 1.0 / 3.0).abs()).fold(0.0, f64::max);
    let div = effective_diversity(&rps, &sol.weights);
    let dominant = vec![vec![0.0, 40.0, 25.0], vec![-40.0, 0.0, 60.0], vec![-25.0, -60.0, 0.0]];
    let dsol = solve_nash(&dominant, 1e-4).map_err(err)?;
    let ddiv = effective_diversity(&dominant, &dsol.weights);
    Ok(Check::new(
        dev <= 1e-3 && sol.exploitability <= 1e-3 && (div - 33.33).abs() <= 0.1 && ddiv == 0.0,
        format!(
            "RPS weights {:.4?} (max dev {dev:.1e}), exploitability {:.1e}, diversity {div:.3}; dominant-agent diversity {ddiv}",
            sol.weights, sol.exploitability
        ),
    ))
}

// ---------------------------------------------------------------- 8

const FRAME_BUDGET: u64 = 2_000_000;
const EVAL_EVERY: u64 = 100_000;

fn bots() -> BotConfig {
    BotConfig { n_collect: 12, ..BotConfig::default() }
}

fn small_config(variant: AgentVariant) -> TrainConfig {
    TrainConfig {
        preset: "rws_small".into(),
        variant,
        num_actors: 1,
        envs_per_actor: 16,
        threads: 1,
        max_steps: u64::MAX,
        bots: bots(),
        ..TrainConfig::default()
    }
}

fn paper_share(r: &HoldoutReport) -> f64 {
    let total: f64 = r.pickups.iter().sum();
    if total > 0.0 {
        r.pickups[ResourceKind::Paper.index()] / total
    } else {
        0.0
    }
}

/// Trains against the rock bot, stopping at the first evaluation that
/// clears the bar. Returns the outcome and the saved checkpoint path.
fn exploit_rock_bot(dir: &Path) -> Result<(Check, Option<PathBuf>), String> {
    let start = Instant::now();
    let cfg = TrainConfig {
        mode: MatchMode::FixedOpponents,
        opponents: vec![ResourceKind::Rock],
        ..small_config(AgentVariant::Opre)
    };
    let spec = AgentSpec { id: "opre_vs_rock".into(), seed: 1, pseudoreward: None };
    let mut session = Session::new(cfg, vec![spec], Some(dir.to_path_buf())).map_err(err)?;
    let grid = session.grid().clone();
    let opponents = [Contestant::Bot(ResourceKind::Rock)];
    let mut next_eval = EVAL_EVERY;
    let mut best = (f64::NEG_INFINITY, 0.0, 0u64);
    let mut reached = None;
    session
        .run_lockstep(|s, _| {
            let frames = s.frames();
            if frames < next_eval && frames < FRAME_BUDGET {
                return Ok(false);
            }
            next_eval += EVAL_EVERY;
            let subject = Contestant::Policy { id: "opre".into(), policy: s.policy(0) };
            let settings = EvalSettings { seed: 99, bots: bots(), ..Default::default() };
            let r = evaluate_vs_holdout(&grid, &subject, &opponents, 100, &settings)?;
            let share = paper_share(&r);
            println!("    [8] frames {frames:>8}  return {:>6.1}  paper share {share:.2}", r.mean_return);
            if r.mean_return > best.0 {
                best = (r.mean_return, share, frames);
            }
            if r.mean_return >= 50.0 && share > 0.6 {
                reached = Some((r.mean_return, share, frames));
                return Ok(true);
            }
            Ok(frames >= FRAME_BUDGET)
        })
        .map_err(err)?;
    let agents = session.finish().map_err(err)?;
    let mins = start.elapsed().as_secs_f64() / 60.0;
    let check = match reached {
        Some((ret, share, frames)) => Check::new(
            mins <= 60.0,
            format!("return {ret:.1}, paper share {share:.2} at {frames} frames, {mins:.1} min on 1 thread"),
        ),
        None => Check::new(
            false,
            format!(
                "best return {:.1} (paper share {:.2}) at {} frames within {FRAME_BUDGET}, {mins:.1} min",
                best.0, best.1, best.2
            ),
        ),
    };
    Ok((check, agents.into_iter().next().and_then(|a| a.checkpoint)))
}

// ---------------------------------------------------------------- 9

const SELF_PLAY_FRAMES: u64 = 1_000_000;
const HOLDOUT_EPISODES: u64 = 500;

/// Mean hold-out win rate of a three-seed self-play population and the
/// per-episode scores behind it.
fn self_play_win_rate(variant: AgentVariant) -> Result<(f64, Vec<f64>, Vec<f64>), String> {
    let cfg = TrainConfig { mode: MatchMode::SelfPlayPool, num_seeds: 3, repeats: 1, ..small_config(variant) };
    let mut session = Session::new(cfg.clone(), population_specs(&cfg, 0), None).map_err(err)?;
    session.run_lockstep(|s, _| Ok(s.frames() >= SELF_PLAY_FRAMES)).map_err(err)?;
    let grid = session.grid().clone();
    let holdout = Contestant::scripted_set();
    let mut rates = Vec::new();
    let mut scores = Vec::new();
    for (i, id) in session.agent_ids().into_iter().enumerate() {
        let subject = Contestant::Policy { id, policy: session.policy(i) };
        let settings = EvalSettings { seed: 2024, bots: bots(), ..Default::default() };
        let r = evaluate_vs_holdout(&grid, &subject, &holdout, HOLDOUT_EPISODES, &settings).map_err(err)?;
        rates.push(r.win_rate);
        scores.extend(r.per_episode.iter().map(|(_, ret, _)| {
            if *ret > 0.0 {
                1.0
            } else if *ret < 0.0 {
                0.0
            } else {
                0.5
            }
        }));
    }
    let mean = rates.iter().sum::<f64>() / rates.len() as f64;
    Ok((mean, rates, scores))
}

/// Lower end of the 95% Wilson interval for a success fraction over `n`
/// trials (ties count as half a success).
fn wilson_lower(p: f64, n: f64) -> f64 {
    let z: f64 = 1.959_963_984_540_054;
    let denom = 1.0 + z * z / n;
    let centre = p + z * z / (2.0 * n);
    let spread = z * (p * (1.0 - p) / n + z * z / (4.0 * n * n)).sqrt();
    (centre - spread) / denom
}

fn generalization() -> Outcome {
    let start = Instant::now();
    let (opre, opre_rates, scores) = self_play_win_rate(AgentVariant::Opre)?;
    let (base, base_rates, _) = self_play_win_rate(AgentVariant::Baseline)?;
    let n = scores.len() as f64;
    let pooled = scores.iter().sum::<f64>() / n;
    let lower = wilson_lower(pooled, n);
    let mins = start.elapsed().as_secs_f64() / 60.0;
    Ok(Check::new(
        opre >= 0.6 && lower > 0.5 && opre > base,
        format!(
            "OPRE win rate {opre:.3} {opre_rates:.3?} (95% lower bound {lower:.3} over {n} episodes), \
             BASELINE {base:.3} {base_rates:.3?}; {SELF_PLAY_FRAMES} frames each, {mins:.1} min"
        ),
    ))
}

// ---------------------------------------------------------------- 10

fn option_probe(checkpoint: Option<&Path>, out: &Path) -> Outcome {
    let Some(checkpoint) = checkpoint else {
        return Ok(Check::new(false, "no trained OPRE checkpoint available"));
    };
    let args = ProbeArgs {
        checkpoint: checkpoint.to_path_buf(),
        episodes: 100,
        seed: 5,
        threads: 1,
        out: out.to_path_buf(),
        config: None,
    };
    let report = cmd_probe(&args).map_err(err)?;
    report.validate().map_err(err)?;
    let csv_path = out.join(format!("probe_{}", report.agent)).join("probe.csv");
    let mut reader = csv::Reader::from_path(&csv_path).map_err(err)?;
    let mut keys = BTreeSet::new();
    let mut rows = 0;
    for rec in reader.records() {
        let rec = rec.map_err(err)?;
        keys.insert((rec[0].to_string(), rec[1].to_string(), rec[2].to_string()));
        if rec[8].parse::<u64>().map_err(err)? != 100 {
            return Ok(Check::new(false, format!("cell with {} episodes", &rec[8])));
        }
        rows += 1;
    }
    let significant = report.pickup_tests().iter().filter(|t| t.p_value < 0.01).count();
    let best = report.most_distinct_pair();
    Ok(Check::new(
        rows == 16 * 3 * 5 && keys.len() == rows && significant >= 1,
        format!(
            "{rows} rows, {significant} of {} option pairs differ at p < 0.01{}",
            report.pickup_tests().len(),
            best.map(|t| format!(" (most distinct {} vs {}, p {:.1e})", t.option_a, t.option_b, t.p_value)).unwrap_or_default()
        ),
    ))
}

// ----------------------------------------------------------------

fn main() {
    let only: Option<BTreeSet<usize>> =
        std::env::var("OPRE_ACCEPTANCE_ONLY").ok().map(|s| s.split(',').filter_map(|t| t.trim().parse().ok()).collect());
    let strict = std::env::var("OPRE_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    let wanted = |n: usize| only.as_ref().is_none_or(|s| s.contains(&n));
    let scratch = tempfile::tempdir().expect("temporary directory");
    let mut failures = 0;
    let mut run = |n: usize, title: &str, f: &mut dyn FnMut() -> Outcome| {
        if !wanted(n) {
            return;
        }
        let start = Instant::now();
        let (ok, detail) = match f() {
            Ok(c) => (c.passed, c.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        failures += usize::from(!ok);
        println!(
            "criterion {n:>2} {}  {title}: {detail}  [{:.1}s]",
            if ok { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64()
        );
    };

    run(1, "payoff oracle", &mut payoff_oracle);
    run(2, "environment invariants", &mut environment_suite);
    run(3, "gradient checks", &mut gradient_checks);
    run(4, "V-trace oracle", &mut vtrace_oracle);
    run(5, "mixture identities", &mut mixture_fuzz);
    run(6, "stop-gradient topology", &mut stop_gradient_topology);
    run(7, "Nash and effective diversity", &mut nash_diversity);

    let mut checkpoint = None;
    let train_dir = scratch.path().join("rock");
    run(8, "learning vs rock bot", &mut || {
        let (check, ckpt) = exploit_rock_bot(&train_dir)?;
        checkpoint = ckpt;
        Ok(check)
    });
    run(9, "self-play generalization", &mut generalization);
    let probe_dir = scratch.path().join("probe");
    run(10, "option probe", &mut || {
        if checkpoint.is_none() && !wanted(8) {
            let (_, ckpt) = exploit_rock_bot(&train_dir)?;
            checkpoint = ckpt;
        }
        option_probe(checkpoint.as_deref(), &probe_dir)
    });

    println!("acceptance: {failures} failed");
    if strict && failures > 0 {
        std::process::exit(1);
    }
}
