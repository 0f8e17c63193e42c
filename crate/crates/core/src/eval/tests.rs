use super::probe::chi_square_2xk;
use super::*;
use crate::game::{GridConfig, ResourceKind};
use crate::harness::ActorPolicy;
use crate::learning::tests::small_arch;
use crate::model::{AgentNet, AgentVariant};
use crate::rng;
use proptest::prelude::*;
use std::sync::Arc;

fn rws_small() -> Arc<GridConfig> {
    Arc::new(GridConfig::load("rws_small").unwrap())
}

fn rps(scale: f64) -> Vec<Vec<f64>> {
    vec![vec![0.0, -scale, scale], vec![scale, 0.0, -scale], vec![-scale, scale, 0.0]]
}

#[test]
fn nash_of_rps_is_uniform() {
    let a = rps(100.0);
    let sol = solve_nash(&a, 1e-3).unwrap();
    for w in &sol.weights {
        assert!((w - 1.0 / 3.0).abs() < 1e-3);
    }
    assert!(sol.exploitability <= 1e-3);
    let d = effective_diversity(&a, &sol.weights);
    assert!((d - 100.0 / 3.0).abs() < 0.1, "{d}");
}

#[test]
fn dominant_agent_has_zero_diversity() {
    let a = vec![vec![0.0, 5.0, 2.0], vec![-5.0, 0.0, 1.0], vec![-2.0, -1.0, 0.0]];
    let sol = solve_nash(&a, 1e-3).unwrap();
    assert_eq!(sol.weights, vec![1.0, 0.0, 0.0]);
    assert_eq!(effective_diversity(&a, &sol.weights), 0.0);
}

#[test]
fn two_by_two_nash_is_the_winner() {
    let sol = solve_nash(&[vec![0.0, 3.0], vec![-3.0, 0.0]], 1e-3).unwrap();
    assert_eq!(sol.weights, vec![1.0, 0.0]);
}

#[test]
fn zero_matrix_has_zero_diversity() {
    let a = vec![vec![0.0; 4]; 4];
    let sol = solve_nash(&a, 1e-3).unwrap();
    assert_eq!(effective_diversity(&a, &sol.weights), 0.0);
}

#[test]
fn non_antisymmetric_matrix_is_a_domain_error() {
    assert!(matches!(solve_nash(&[vec![0.0, 1.0], vec![1.0, 0.0]], 1e-3), Err(crate::Error::Domain(_))));
    assert!(matches!(solve_nash(&[vec![1.0]], 1e-3), Err(crate::Error::Domain(_))));
}

#[test]
fn rps_with_unequal_stakes_needs_iterations() {
    // Weighted RPS: Nash is proportional to the opposite edge weights.
    let a = vec![vec![0.0, -1.0, 2.0], vec![1.0, 0.0, -3.0], vec![-2.0, 3.0, 0.0]];
    let sol = solve_nash(&a, 1e-6).unwrap();
    assert!(sol.iterations > 0);
    let expect = [3.0 / 6.0, 2.0 / 6.0, 1.0 / 6.0];
    for (w, e) in sol.weights.iter().zip(expect) {
        assert!((w - e).abs() < 1e-4, "{:?}", sol.weights);
    }
}

#[test]
fn degenerate_game_still_meets_the_bound() {
    // The zero between 0 and 3 stalls multiplicative weights.
    let a = vec![
        vec![0.0, 0.5965866907665859, -94.82023121854806, 0.0],
        vec![-0.5965866907665859, 0.0, 13.3941368639622, 5.258390188144229],
        vec![94.82023121854806, -13.3941368639622, 0.0, -51.36658794909819],
        vec![0.0, -5.258390188144229, 51.36658794909819, 0.0],
    ];
    let sol = solve_nash(&a, 1e-6).unwrap();
    assert!(exploitability(&a, &sol.weights) <= 1e-6, "{sol:?}");
    assert!((sol.weights.iter().sum::<f64>() - 1.0).abs() < 1e-9);
}

fn antisymmetric(n: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    proptest::collection::vec(-100.0f64..100.0, n * n).prop_map(move |v| {
        let mut a = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..i {
                a[i][j] = v[i * n + j];
                a[j][i] = -v[i * n + j];
            }
        }
        a
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]
    #[test]
    fn nash_meets_its_exploitability_bound(a in (2usize..7).prop_flat_map(antisymmetric)) {
        let sol = solve_nash(&a, 1e-3).unwrap();
        prop_assert!(sol.exploitability <= 1e-3);
        prop_assert!((sol.weights.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        prop_assert!(exploitability(&a, &sol.weights) <= 1e-3);
        prop_assert!(effective_diversity(&a, &sol.weights) >= 0.0);
    }
}

#[test]
fn chi_square_matches_hand_computation() {
    // Table [[10, 20, 30], [30, 20, 10]]: expected 20 everywhere, chi2 = 20.
    let t = chi_square_2xk([10, 20, 30], [30, 20, 10]).unwrap();
    assert!((t.chi2 - 20.0).abs() < 1e-12);
    assert_eq!(t.dof, 2);
    assert!((t.p_value - (-10.0f64).exp()).abs() < 1e-12);
    assert!(chi_square_2xk([5, 0, 0], [7, 0, 0]).is_none());
    let same = chi_square_2xk([4, 8, 12], [2, 4, 6]).unwrap();
    assert!(same.chi2.abs() < 1e-12 && (same.p_value - 1.0).abs() < 1e-12);
}

#[test]
fn scripted_bots_collect_only_their_kind() {
    let grid = rws_small();
    let s = EvalSettings { seed: 4, ..Default::default() };
    for (a, b) in [(ResourceKind::Rock, ResourceKind::Paper), (ResourceKind::Scissors, ResourceKind::Scissors)] {
        let played = play_episodes(&grid, &[Contestant::Bot(a), Contestant::Bot(b)], |_| vec![0, 1], 40, &s).unwrap();
        for ep in played {
            for (seat, kind) in [(0, a), (1, b)] {
                let p = ep.record.seats[seat].pickups;
                for k in ResourceKind::ALL {
                    if k != kind {
                        assert_eq!(p[k.index()], 0, "{kind:?} bot picked up {k:?}");
                    }
                }
            }
        }
    }
}

#[test]
fn scripted_bots_hunt_and_tag() {
    let grid = rws_small();
    let s = EvalSettings { seed: 5, ..Default::default() };
    let played =
        play_episodes(&grid, &[Contestant::Bot(ResourceKind::Rock), Contestant::Bot(ResourceKind::Paper)], |_| vec![0, 1], 60, &s)
            .unwrap();
    let tagged = played.iter().filter(|e| e.record.length < grid.episode_limit).count();
    assert!(tagged > 30, "only {tagged} of 60 episodes ended in a tag");
    let paper: f64 = played.iter().map(|e| e.record.seats[1].env_return).sum::<f64>() / 60.0;
    assert!(paper > 0.0, "paper bot mean {paper}");
}

#[test]
fn scripted_round_robin_has_rps_sign_pattern() {
    let grid = rws_small();
    let s = EvalSettings { seed: 6, threads: 2, ..Default::default() };
    let g = round_robin(&grid, &Contestant::scripted_set(), 40, &s).unwrap();
    let sign: [[f64; 3]; 3] = [[0.0, -1.0, 1.0], [1.0, 0.0, -1.0], [-1.0, 1.0, 0.0]];
    for i in 0..3 {
        for j in 0..3 {
            assert_eq!(g.payoff[i][j].signum() * sign[i][j].abs(), sign[i][j], "{:?}", g.payoff);
            assert_eq!(g.payoff[i][j], -g.payoff[j][i]);
        }
    }
    let report = g.nash(1e-3).unwrap();
    assert!(report.effective_diversity > 0.0);
    let mut buf = Vec::new();
    g.write_csv(&mut buf).unwrap();
    let (ids, rows) = MetaGame::read_csv(&buf[..]).unwrap();
    assert_eq!(ids, g.policies);
    assert_eq!(rows, g.payoff);
}

#[test]
fn single_policy_tournament_is_zero() {
    let g = round_robin(&rws_small(), &[Contestant::Random], 4, &EvalSettings::default()).unwrap();
    assert_eq!(g.payoff, vec![vec![0.0]]);
}

#[test]
fn seat_order_swap_negates_cell() {
    let grid = rws_small();
    let s = EvalSettings { seed: 8, ..Default::default() };
    let pair = [Contestant::Bot(ResourceKind::Rock), Contestant::Bot(ResourceKind::Scissors)];
    let a = play_episodes(&grid, &pair, |_| vec![0, 1], 16, &s).unwrap();
    for e in &a {
        assert_eq!(e.record.seats[0].env_return, -e.record.seats[1].env_return);
    }
}

#[test]
fn evaluation_results_do_not_depend_on_threads() {
    let grid = rws_small();
    let run = |threads| {
        let s = EvalSettings { seed: 3, threads, ..Default::default() };
        evaluate_vs_holdout(&grid, &Contestant::Random, &Contestant::scripted_set(), 24, &s).unwrap().mean_return
    };
    assert_eq!(run(1), run(3));
}

#[test]
fn zero_episodes_is_an_error() {
    let r = evaluate_vs_holdout(&rws_small(), &Contestant::Random, &Contestant::scripted_set(), 0, &EvalSettings::default());
    assert!(matches!(r, Err(crate::Error::Usage(_))));
}

#[test]
fn random_policy_against_itself_scores_half() {
    let grid = rws_small();
    let s = EvalSettings { seed: 11, ..Default::default() };
    let r = evaluate_vs_holdout(&grid, &Contestant::Random, &[Contestant::Random], 400, &s).unwrap();
    let sigma = (0.25f64 / 400.0).sqrt();
    assert!((r.win_rate - 0.5).abs() <= 3.0 * sigma, "{}", r.win_rate);
}

#[test]
fn identical_bots_have_mean_return_near_zero() {
    let grid = rws_small();
    let s = EvalSettings { seed: 12, ..Default::default() };
    let r = evaluate_vs_holdout(&grid, &Contestant::Bot(ResourceKind::Rock), &[Contestant::Bot(ResourceKind::Rock)], 200, &s).unwrap();
    assert!(r.mean_return.abs() < 5.0, "{}", r.mean_return);
}

fn tiny_agent(variant: AgentVariant) -> (Arc<AgentNet>, Arc<crate::tensor::ParameterStore<f32>>) {
    let net = Arc::new(AgentNet::new(variant, small_arch()).unwrap());
    let params = Arc::new(net.init(&mut rng::from_seed(1)).unwrap());
    (net, params)
}

#[test]
fn probe_has_one_cell_per_option_and_opponent() {
    let grid = rws_small();
    let (net, params) = tiny_agent(AgentVariant::Opre);
    let s = EvalSettings { seed: 2, ..Default::default() };
    let r = option_probe(&grid, "a", net, params, &ResourceKind::ALL, 5, &s).unwrap();
    assert_eq!(r.cells.len(), 3 * 3);
    assert!(r.cells.iter().all(|c| c.episodes == 5));
    let mut buf = Vec::new();
    r.write_csv(&mut buf).unwrap();
    assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 1 + 3 * 3 * 5);
}

#[test]
fn probe_ignores_the_option_distribution_head() {
    let grid = rws_small();
    let (net, params) = tiny_agent(AgentVariant::Opre);
    let mut perturbed = (*params).clone();
    for name in perturbed.names().filter(|n| n.starts_with("options/p")).cloned().collect::<Vec<_>>() {
        let mut t = (**perturbed.get(&name).unwrap()).clone();
        t.data_mut().iter_mut().for_each(|v| *v += 0.7);
        perturbed.replace(&name, t).unwrap();
    }
    let s = EvalSettings { seed: 2, ..Default::default() };
    let a = option_probe(&grid, "a", net.clone(), params, &[ResourceKind::Rock], 4, &s).unwrap();
    let b = option_probe(&grid, "a", net, Arc::new(perturbed), &[ResourceKind::Rock], 4, &s).unwrap();
    assert_eq!(a.cells, b.cells);
}

#[test]
fn probe_rejects_flat_agents() {
    let (net, params) = tiny_agent(AgentVariant::Baseline);
    let r = option_probe(&rws_small(), "b", net, params, &[ResourceKind::Rock], 2, &EvalSettings::default());
    assert!(matches!(r, Err(crate::Error::Usage(_))));
}

#[test]
fn neural_policy_can_be_evaluated() {
    let (net, params) = tiny_agent(AgentVariant::Baseline);
    let subject = Contestant::Policy { id: "b".into(), policy: ActorPolicy::new(net, params) };
    let r = evaluate_vs_holdout(&rws_small(), &subject, &Contestant::scripted_set(), 12, &EvalSettings::default()).unwrap();
    assert_eq!(r.episodes, 12);
    assert_eq!(r.by_opponent.iter().map(|o| o.episodes).sum::<u64>(), 12);
    let mut buf = Vec::new();
    r.write_csv(&mut buf).unwrap();
    assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 5);
}
