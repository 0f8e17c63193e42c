use super::*;
use crate::model::{AgentNet, AgentVariant, ArchConfig, OBS_FEATURES};
use crate::rng::{self, Rng};
use crate::tensor::{grad_check, ParameterStore, Tape, Tensor};
use proptest::prelude::*;
use rand::Rng as _;

/// vs_t = V_t + sum_{k>=t} (prod_{i=t}^{k-1} gamma_i c_i) delta_k, summed directly.
#[allow(clippy::too_many_arguments)]
fn vtrace_oracle(v: &[f64], boot: f64, r: &[f64], g: &[f64], pi: &[f64], mu: &[f64], rho_bar: f64, c_bar: f64) -> Vec<f64> {
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
                let rho = (pi[k] / mu[k]).min(rho_bar);
                total += coef * rho * (r[k] + g[k] * next(k) - v[k]);
            }
            total
        })
        .collect()
}

#[test]
fn vtrace_zero_td_errors_keep_values() {
    let v = [2.5; 6];
    let out = vtrace(&v, 2.5, &[0.0; 6], &[1.0; 6], &[0.3; 6], &[0.3; 6], 1.0, 1.0).unwrap();
    assert_eq!(out.vs, v.to_vec());
    assert!(out.pg_advantages.iter().all(|a| *a == 0.0));
}

#[test]
fn vtrace_matches_direct_summation() {
    let mut r = rng::from_seed(11);
    for _ in 0..1000 {
        let n = 5;
        let mut draw = |lo: f64, hi: f64| -> Vec<f64> { (0..n).map(|_| r.random_range(lo..hi)).collect() };
        let v = draw(-1.0, 1.0);
        let rew = draw(-1.0, 1.0);
        let pi = draw(0.01, 1.0);
        let mu = draw(0.01, 1.0);
        let mut g = draw(0.9, 1.0);
        if r.random_bool(0.3) {
            g[4] = 0.0;
        }
        let boot = r.random_range(-1.0..1.0);
        let (rho_bar, c_bar) = (r.random_range(1.0..2.0), r.random_range(0.5..1.0));
        let out = vtrace(&v, boot, &rew, &g, &pi, &mu, rho_bar, c_bar).unwrap();
        let oracle = vtrace_oracle(&v, boot, &rew, &g, &pi, &mu, rho_bar, c_bar);
        for (a, b) in out.vs.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
    }
}

#[test]
fn vtrace_on_policy_is_n_step_return() {
    let mut r = rng::from_seed(3);
    let n = 7;
    let v: Vec<f64> = (0..n).map(|_| r.random_range(-1.0..1.0)).collect();
    let rew: Vec<f64> = (0..n).map(|_| r.random_range(-1.0..1.0)).collect();
    let probs: Vec<f64> = (0..n).map(|_| r.random_range(0.1..1.0)).collect();
    let gamma = 0.9;
    let boot = 0.7;
    let out = vtrace(&v, boot, &rew, &vec![gamma; n], &probs, &probs, 1.0, 1.0).unwrap();
    for t in 0..n {
        let mut ret = gamma.powi((n - t) as i32) * boot;
        for k in t..n {
            ret += gamma.powi((k - t) as i32) * rew[k];
        }
        assert!((out.vs[t] - ret).abs() < 1e-12);
        assert_eq!(out.rhos[t], 1.0);
    }
}

#[test]
fn vtrace_truncates_large_ratios() {
    let out = vtrace(&[0.0, 0.0], 0.0, &[1.0, 1.0], &[1.0, 1.0], &[0.5, 0.5], &[0.1, 0.5], 1.0, 1.0).unwrap();
    assert_eq!(out.rhos, vec![1.0, 1.0]);
    assert_eq!(out.cs, vec![1.0, 1.0]);
    let out = vtrace(&[0.0], 0.0, &[1.0], &[1.0], &[0.1], &[0.5], 1.0, 1.0).unwrap();
    assert!((out.rhos[0] - 0.2).abs() < 1e-15);
}

#[test]
fn vtrace_rejects_bad_inputs() {
    assert!(matches!(vtrace(&[f64::NAN], 0.0, &[0.0], &[1.0], &[0.5], &[0.5], 1.0, 1.0), Err(crate::Error::Numeric(_))));
    assert!(vtrace(&[0.0], 0.0, &[0.0, 1.0], &[1.0], &[0.5], &[0.5], 1.0, 1.0).is_err());
    assert!(vtrace(&[0.0], 0.0, &[0.0], &[1.0], &[0.5], &[0.5], 0.5, 1.0).is_err());
}

fn one_hot_rows(rows: &[usize], k: usize) -> Tensor<f64> {
    let mut t = Tensor::zeros(rows.len(), k);
    for (r, &z) in rows.iter().enumerate() {
        t.data_mut()[r * k + z] = 1.0;
    }
    t
}

#[test]
fn entropy_of_locked_options() {
    // 16 sequences of 5 steps, each locked to its own option.
    let (b, steps, k) = (16, 5, 16);
    let rows: Vec<usize> = (0..steps * b).map(|r| r % b).collect();
    let mut tape = Tape::<f64>::new();
    let q = tape.constant(one_hot_rows(&rows, k));
    let pi = tape.constant(Tensor::filled(steps * b, 8, 0.125));
    let log_pi = tape.constant(Tensor::filled(steps * b, 8, 0.125f64.ln()));
    let (ht, hb, hpi) = entropy_reg(&mut tape, Some(q), pi, log_pi, &[steps; 16], steps).unwrap();
    assert!(tape.value(ht.unwrap()).item().abs() < 1e-8);
    assert!((tape.value(hb.unwrap()).item() - 16f64.ln()).abs() < 1e-8);
    assert!((tape.value(hpi).item() - 8f64.ln()).abs() < 1e-12);
}

#[test]
fn entropy_ignores_padding_rows() {
    // Sequence 1 is shorter; its padded rows carry a different option.
    let steps = 3;
    let rows = [0, 1, 0, 1, 0, 0];
    let mut tape = Tape::<f64>::new();
    let q = tape.constant(one_hot_rows(&rows, 2));
    let pi = tape.constant(Tensor::filled(6, 8, 0.125));
    let log_pi = tape.constant(Tensor::filled(6, 8, 0.125f64.ln()));
    let (ht, hb, _) = entropy_reg(&mut tape, Some(q), pi, log_pi, &[3, 2], steps).unwrap();
    assert!(tape.value(ht.unwrap()).item().abs() < 1e-8);
    let frac = 2.0 / 5.0f64;
    let expected = -(frac * frac.ln() + (1.0 - frac) * (1.0 - frac).ln());
    assert!((tape.value(hb.unwrap()).item() - expected).abs() < 1e-8);
}

pub(crate) fn small_arch() -> ArchConfig {
    ArchConfig {
        num_options: 3,
        conv_channels: 2,
        mlp: [6, 6],
        lstm_hidden: 5,
        head_hidden: 4,
        concealed_embed: 4,
        concealed_hidden: 4,
        num_opponents: 1,
        ..ArchConfig::default()
    }
}

pub(crate) fn random_sequence(net: &AgentNet, len: usize, ended: bool, r: &mut Rng) -> Sequence {
    let mut feats = |n: usize| -> Vec<f32> {
        (0..n).map(|_| if r.random_bool(0.25) { r.random_range(0.0..1.0) } else { 0.0 }).collect()
    };
    let cw = net.concealed_width();
    let obs = feats(len * OBS_FEATURES);
    let concealed = feats(len * cw);
    let state = feats(net.state_width());
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
        initial_state: state,
        bootstrap,
    }
}

pub(crate) fn random_batch(net: &AgentNet, seed: u64) -> Vec<Sequence> {
    let mut r = rng::from_seed(seed);
    vec![random_sequence(net, 4, false, &mut r), random_sequence(net, 2, true, &mut r), random_sequence(net, 3, false, &mut r)]
}

fn grads_of(variant: AgentVariant, which: fn(&LossGraph) -> Option<crate::tensor::Var>) -> crate::tensor::Gradients<f64> {
    let net = AgentNet::new(variant, small_arch()).unwrap();
    let params: ParameterStore<f64> = net.init(&mut rng::from_seed(5)).unwrap();
    let seqs = random_batch(&net, 9);
    let mut tape = Tape::new();
    let g = build_loss(&mut tape, &net, &params, &seqs, &LossConfig::default()).unwrap();
    tape.backward(which(&g).unwrap()).unwrap()
}

fn max_abs(grads: &crate::tensor::Gradients<f64>, prefix: &str) -> f64 {
    grads
        .iter()
        .filter(|(n, _)| n.starts_with(prefix))
        .flat_map(|(_, t)| t.data().iter().map(|v| v.abs()))
        .fold(0.0, f64::max)
}

#[test]
fn policy_gradient_does_not_reach_q_for_opre() {
    for v in [AgentVariant::Opre, AgentVariant::OpreMixPg] {
        let g = grads_of(v, |l| Some(l.policy));
        assert_eq!(max_abs(&g, "q/"), 0.0, "{v}");
        assert!(max_abs(&g, "eta/") > 0.0);
        assert_eq!(max_abs(&g, "value/c"), 0.0);
        assert_eq!(max_abs(&g, "options/p"), 0.0);
    }
}

#[test]
fn policy_gradient_reaches_q_without_stop() {
    let g = grads_of(AgentVariant::OpreQGrad, |l| Some(l.policy));
    assert!(max_abs(&g, "q/") > 0.0);
}

#[test]
fn q_is_trained_by_value_and_kl() {
    let g = grads_of(AgentVariant::Opre, |l| Some(l.value));
    assert!(max_abs(&g, "q/") > 0.0);
    assert!(max_abs(&g, "value/c") > 0.0);
    assert_eq!(max_abs(&g, "eta/"), 0.0);
    let g = grads_of(AgentVariant::Opre, |l| l.kl);
    assert!(max_abs(&g, "q/") > 0.0);
    assert!(max_abs(&g, "options/p") > 0.0);
}

#[test]
fn pure_mix_trains_p_by_policy_gradient() {
    let g = grads_of(AgentVariant::PureMix, |l| Some(l.policy));
    assert!(max_abs(&g, "options/p") > 0.0);
    assert!(max_abs(&g, "eta/") > 0.0);
}

#[test]
fn factorised_critic_baseline_keeps_q_out_of_policy() {
    let g = grads_of(AgentVariant::BaselineCcFact, |l| Some(l.policy));
    assert_eq!(max_abs(&g, "q/"), 0.0);
    assert!(max_abs(&g, "policy/") > 0.0);
    let g = grads_of(AgentVariant::BaselineCcFact, |l| l.kl);
    assert!(max_abs(&g, "options/p") > 0.0);
}

#[test]
fn full_loss_passes_gradient_check() {
    for variant in AgentVariant::ALL {
        let net = AgentNet::new(variant, small_arch()).unwrap();
        let params: ParameterStore<f64> = net.init(&mut rng::from_seed(2)).unwrap();
        let seqs = random_batch(&net, 4);
        let cfg = LossConfig { reward_scale: 0.05, ..LossConfig::default() };
        let report = grad_check(
            |tape, p| Ok(build_loss(tape, &net, p, &seqs, &cfg)?.total),
            &params,
            1e-3,
            &mut rng::from_seed(3),
        )
        .unwrap();
        assert!(report.passed(), "{variant}: {:?}", report.worst());
    }
}

#[test]
fn breakdown_total_is_the_weighted_sum() {
    for variant in AgentVariant::ALL {
        let net = AgentNet::new(variant, small_arch()).unwrap();
        let params: ParameterStore<f64> = net.init(&mut rng::from_seed(2)).unwrap();
        let seqs = random_batch(&net, 4);
        let b = build_loss(&mut Tape::new(), &net, &params, &seqs, &LossConfig::default()).unwrap().breakdown;
        assert!((b.total - b.weighted_sum()).abs() < 1e-12, "{variant}");
        assert!(b.kl_qp >= 0.0);
        assert_eq!(b.reg_ht != 0.0, variant.is_opre(), "{variant}");
        assert_eq!(b.aux_loss != 0.0, variant == AgentVariant::BaselineAux);
    }
}

#[test]
fn kl_vanishes_when_q_equals_p() {
    let net = AgentNet::new(AgentVariant::Opre, small_arch()).unwrap();
    let mut params: ParameterStore<f64> = net.init(&mut rng::from_seed(2)).unwrap();
    params.replace("q/logits/w", Tensor::zeros(4, 3)).unwrap();
    params.replace("options/p/w", Tensor::zeros(5, 3)).unwrap();
    let bias = Tensor::row_vector(vec![0.3, -1.0, 0.5]);
    params.replace("q/logits/b", bias.clone()).unwrap();
    params.replace("options/p/b", bias).unwrap();
    let seqs = random_batch(&net, 4);
    let b = build_loss(&mut Tape::new(), &net, &params, &seqs, &LossConfig::default()).unwrap().breakdown;
    assert!(b.kl_qp.abs() < 1e-9);
}

#[test]
fn loss_is_deterministic() {
    let net = AgentNet::new(AgentVariant::Opre, ArchConfig::default()).unwrap();
    let params: ParameterStore<f32> = net.init(&mut rng::from_seed(2)).unwrap();
    let seqs = random_batch(&net, 4);
    let (g1, b1) = compute_gradients(&net, &params, &seqs, &LossConfig::default()).unwrap();
    let (g2, b2) = compute_gradients(&net, &params, &seqs, &LossConfig::default()).unwrap();
    assert_eq!(b1.total.to_bits(), b2.total.to_bits());
    assert_eq!(g1, g2);
}

#[test]
fn malformed_sequences_are_rejected() {
    let net = AgentNet::new(AgentVariant::Baseline, small_arch()).unwrap();
    let params: ParameterStore<f64> = net.init(&mut rng::from_seed(2)).unwrap();
    let mut seqs = random_batch(&net, 4);
    seqs[0].behavior_probs[1] = 0.0;
    assert!(build_loss(&mut Tape::new(), &net, &params, &seqs, &LossConfig::default()).is_err());
    let mut seqs = random_batch(&net, 4);
    seqs[1].rewards.pop();
    assert!(build_loss(&mut Tape::new(), &net, &params, &seqs, &LossConfig::default()).is_err());
}

fn store_with(values: &[(&str, Vec<f32>)]) -> ParameterStore<f32> {
    let mut s = ParameterStore::new();
    for (n, v) in values {
        s.insert(n, Tensor::row_vector(v.clone())).unwrap();
    }
    s
}

#[test]
fn zero_gradients_leave_parameters_but_bump_version() {
    let mut p = store_with(&[("a", vec![1.0, -2.0]), ("b", vec![0.5])]);
    let before = p.clone();
    let grads = [("a".to_string(), Tensor::zeros(1, 2)), ("b".to_string(), Tensor::zeros(1, 1))].into_iter().collect();
    let mut opt = Adam::new(OptimizerConfig::default());
    let info = opt.apply(&mut p, &grads).unwrap();
    assert!(!info.skipped);
    assert_eq!(p.version(), 1);
    assert_eq!(p.get("a").unwrap(), before.get("a").unwrap());
}

#[test]
fn gradients_are_clipped_by_global_norm() {
    let mut p = store_with(&[("a", vec![0.0; 4])]);
    let grads = [("a".to_string(), Tensor::row_vector(vec![200.0f32; 4]))].into_iter().collect();
    let info = Adam::new(OptimizerConfig::default()).apply(&mut p, &grads).unwrap();
    assert!((info.grad_norm - 400.0).abs() < 1e-9);
    assert!((info.clip_scale - 0.1).abs() < 1e-12);
}

#[test]
fn first_step_moves_by_learning_rate() {
    let mut p = store_with(&[("a", vec![1.0, 1.0])]);
    let grads = [("a".to_string(), Tensor::row_vector(vec![3.0f32, -0.5]))].into_iter().collect();
    Adam::new(OptimizerConfig::default()).apply(&mut p, &grads).unwrap();
    let a = p.get("a").unwrap();
    assert!((a.data()[0] - (1.0 - 4e-4)).abs() < 1e-7);
    assert!((a.data()[1] - (1.0 + 4e-4)).abs() < 1e-7);
}

#[test]
fn non_finite_gradients_skip_the_update() {
    let mut p = store_with(&[("a", vec![1.0])]);
    let grads = [("a".to_string(), Tensor::row_vector(vec![f32::NAN]))].into_iter().collect();
    let mut opt = Adam::new(OptimizerConfig::default());
    let info = opt.apply(&mut p, &grads).unwrap();
    assert!(info.skipped);
    assert_eq!(p.version(), 0);
    assert_eq!(p.get("a").unwrap().data(), &[1.0]);
    assert_eq!(opt.steps(), 0);
}

#[test]
fn unknown_gradient_names_are_rejected() {
    let mut p = store_with(&[("a", vec![1.0])]);
    let grads = [("zzz".to_string(), Tensor::row_vector(vec![1.0f32]))].into_iter().collect();
    assert!(Adam::new(OptimizerConfig::default()).apply(&mut p, &grads).is_err());
}

proptest! {
    #[test]
    fn identical_updates_are_identical(vals in prop::collection::vec(-5.0f32..5.0, 1..20), seed in 0u64..100) {
        let n = vals.len();
        let mut r = rng::from_seed(seed);
        let g: Vec<f32> = (0..n).map(|_| r.random_range(-50.0..50.0)).collect();
        let grads: crate::tensor::Gradients<f32> = [("w".to_string(), Tensor::row_vector(g))].into_iter().collect();
        let mut p1 = store_with(&[("w", vals.clone())]);
        let mut p2 = p1.clone();
        let mut o1 = Adam::new(OptimizerConfig::default());
        let mut o2 = o1.clone();
        for _ in 0..3 {
            o1.apply(&mut p1, &grads).unwrap();
            o2.apply(&mut p2, &grads).unwrap();
        }
        prop_assert_eq!(p1, p2);
        prop_assert_eq!(o1, o2);
    }

    #[test]
    fn clipped_norm_never_exceeds_limit(g in prop::collection::vec(-100.0f32..100.0, 1..30)) {
        let n = g.len();
        let norm = g.iter().map(|v| (*v as f64).powi(2)).sum::<f64>().sqrt();
        let grads: crate::tensor::Gradients<f32> = [("w".to_string(), Tensor::row_vector(g))].into_iter().collect();
        let mut p = store_with(&[("w", vec![0.0; n])]);
        let info = Adam::new(OptimizerConfig::default()).apply(&mut p, &grads).unwrap();
        prop_assert!(info.grad_norm * info.clip_scale <= 40.0 + 1e-9);
        prop_assert!((info.grad_norm - norm).abs() < 1e-6 * norm.max(1.0));
    }
}
