use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use super::*;
use crate::game::{rollout, ConstantAgent, GridConfig, MatrixGame};
use crate::welfare::{feasible_set, welfare_optimum, IaParams};
use crate::DEFAULT_GAMMA as G;

const B: usize = 0;
const S: usize = 1;

fn value_disagreement(game: &MatrixGame) -> [f64; 2] {
    let d = game.disagreement_rewards();
    [d[0] / (1.0 - G), d[1] / (1.0 - G)]
}

fn all_welfares(d: [f64; 2]) -> Vec<WelfareSpec> {
    vec![
        WelfareSpec::utilitarian(),
        WelfareSpec::egalitarian(d),
        WelfareSpec::nash(d),
        WelfareSpec::kalai_smorodinsky(d),
        WelfareSpec::inequity_averse(IaParams::default()),
    ]
}

fn bundled_games() -> Vec<MatrixGame> {
    vec![MatrixGame::ipd(), MatrixGame::bos(), MatrixGame::asym_bos(), MatrixGame::extreme_bos()]
}

#[test]
fn asym_bos_utilitarian_plays_bb() {
    let (schedule, values) = optimal_schedule(&MatrixGame::asym_bos(), &WelfareSpec::utilitarian(), G).unwrap();
    assert_eq!(schedule, Schedule::Constant(JointAction::new(B, B)));
    assert!((values[0] - 100.0).abs() < 1e-9 && (values[1] - 25.0).abs() < 1e-9);
}

#[test]
fn asym_bos_inequity_averse_plays_ss() {
    let w = WelfareSpec::inequity_averse(IaParams::default());
    let (schedule, values) = optimal_schedule(&MatrixGame::asym_bos(), &w, G).unwrap();
    assert_eq!(schedule, Schedule::Constant(JointAction::new(S, S)));
    assert!((values[0] - 50.0).abs() < 1e-9 && (values[1] - 50.0).abs() < 1e-9);
}

#[test]
fn schedule_values_agree_with_geometric_optimum() {
    for game in bundled_games() {
        let set = feasible_set(&game, G).unwrap();
        for w in all_welfares(value_disagreement(&game)) {
            let (_, values) = optimal_schedule(&game, &w, G).unwrap();
            let opt = welfare_optimum(&w, &set).unwrap();
            let got = evaluate_welfare(&w, values, &set).unwrap();
            assert!(
                (got - opt.welfare).abs() < 1e-6,
                "{} on {}: schedule {got} vs optimum {}",
                w.label(),
                game.name,
                opt.welfare
            );
        }
    }
}

#[test]
fn schedule_values_match_simulation() {
    let game = MatrixGame::bos();
    let alt = Schedule::Alternate { even: JointAction::new(0, 0), odd: JointAction::new(1, 1) };
    let mut state = crate::game::MatrixState { prev: None, t: 0, signal: 0.5 };
    let (mut v, mut weight) = ([0.0; 2], 1.0);
    for _ in 0..800 {
        let r = game.payoff(alt.joint_action(&state));
        v[0] += weight * r[0];
        v[1] += weight * r[1];
        weight *= G;
        state.t += 1;
    }
    let exact = alt.values(&game, G);
    assert!((v[0] - exact[0]).abs() < 1e-9 && (v[1] - exact[1]).abs() < 1e-9);
}

#[test]
fn minimax_examples() {
    let asym = MatrixGame::asym_bos();
    let p1 = minimax(&asym, 0, G);
    assert_eq!((p1.per_step, p1.minimizing_action), (2.0, S));
    assert!((p1.discounted - 50.0).abs() < 1e-9);
    let p2 = minimax(&asym, 1, G);
    assert_eq!((p2.per_step, p2.minimizing_action), (1.0, B));
    assert!((p2.discounted - 25.0).abs() < 1e-9);
    let ipd = minimax(&MatrixGame::ipd(), 0, G);
    assert_eq!((ipd.per_step, ipd.minimizing_action), (-3.0, 1));
}

#[test]
fn minimax_never_exceeds_pareto_equilibrium_values() {
    for game in [MatrixGame::bos(), MatrixGame::asym_bos(), MatrixGame::extreme_bos()] {
        let front = crate::welfare::pareto_front(&feasible_set(&game, G).unwrap());
        for eq in game.pure_equilibria() {
            let r = game.payoff(eq);
            let v = [r[0] / (1.0 - G), r[1] / (1.0 - G)];
            if !front.iter().any(|p| (p[0] - v[0]).abs() < 1e-9 && (p[1] - v[1]).abs() < 1e-9) {
                continue;
            }
            for seat in 0..2 {
                assert!(minimax(&game, seat, G).discounted <= v[seat] + 1e-9, "{}", game.name);
            }
        }
    }
}

fn q_config(episodes: usize) -> QLearningConfig {
    QLearningConfig { episodes, ..QLearningConfig::default() }
}

#[test]
fn q_learning_against_constant_b() {
    let env = EnvSpec::asym_bos();
    let own = q_learning_best_response(&env, 0, &mut ConstantAgent(B), Objective::MaximizeOwn, &q_config(300), 1).unwrap();
    let opp = TabularPolicy::constant(&env, 1, B);
    let v = tabular_policy_values(&env, [&own, &opp], G).unwrap();
    assert!((v[0] - 100.0).abs() < 1e-6);
    let punish =
        q_learning_best_response(&env, 0, &mut ConstantAgent(B), Objective::MinimizeOpponent, &q_config(300), 1).unwrap();
    let v = tabular_policy_values(&env, [&punish, &opp], G).unwrap();
    assert!(v[1].abs() < 1e-6);
}

fn tit_for_tat(env: &EnvSpec, seat: usize) -> TabularPolicy {
    // State 0 is the opening move; state 1 + prev index otherwise.
    TabularPolicy::deterministic(env, seat, |s| {
        if s == 0 {
            0
        } else {
            JointAction::from_index(s - 1, 2).get(crate::game::other(seat))
        }
    })
}

#[test]
fn q_learning_sustains_cooperation_against_tit_for_tat() {
    let env = EnvSpec::ipd();
    let tft = tit_for_tat(&env, 1);
    let learned = q_learning_best_response(
        &env,
        0,
        &mut TabularAgent { policy: tft.clone() },
        Objective::MaximizeOwn,
        &q_config(2000),
        3,
    )
    .unwrap();
    let v = tabular_policy_values(&env, [&learned, &tft], G).unwrap()[0];
    let defect = tabular_policy_values(&env, [&TabularPolicy::constant(&env, 0, 1), &tft], G).unwrap()[0];
    assert!(v > defect, "learned {v} vs always-defect {defect}");
}

#[test]
fn q_learning_reaches_exact_best_response_on_matrix_games() {
    for game in bundled_games() {
        let env = EnvSpec::Matrix(game.clone());
        let opponents = [tit_for_tat(&env, 1), TabularPolicy::constant(&env, 1, 0), TabularPolicy::constant(&env, 1, 1)];
        for opp in opponents {
            let exact = exact_best_response_value(&env, 0, &opp, G).unwrap();
            let learned = q_learning_best_response(
                &env,
                0,
                &mut TabularAgent { policy: opp.clone() },
                Objective::MaximizeOwn,
                &q_config(2000),
                11,
            )
            .unwrap();
            let got = tabular_policy_values(&env, [&learned, &opp], G).unwrap()[0];
            let ok = if exact >= 0.0 { got >= 0.95 * exact } else { got >= exact / 0.95 };
            assert!(ok, "{}: learned {got} vs exact {exact}", game.name);
        }
    }
}

#[test]
fn tabular_policy_validation() {
    let env = EnvSpec::asym_bos();
    assert!(TabularPolicy::new(&env, 0, vec![0.5; 10]).is_ok());
    assert!(TabularPolicy::new(&env, 0, vec![0.7; 10]).is_err());
    assert!(TabularPolicy::new(&env, 0, vec![0.5; 8]).is_err());
    let p = TabularPolicy::constant(&env, 0, 1);
    assert!(p.validate(&EnvSpec::ipd()).is_err());
}

#[test]
fn ledger_grid_rounding() {
    let g = LedgerGrid::default();
    assert_eq!(g.nearest(0.0), 10);
    assert_eq!(g.nearest(100.0), 20);
    assert_eq!(g.nearest(-0.9), 10);
    assert_eq!(g.nearest(-1.1), 9);
    assert_eq!(g.center(0), -20.0);
    let (lo, hi, w) = g.split(3.0);
    assert_eq!((lo, hi), (11, 12));
    assert!((w - 0.5).abs() < 1e-12);
    // Stochastic rounding is unbiased.
    assert!(((1.0 - w) * g.center(lo) + w * g.center(hi) - 3.0).abs() < 1e-12);
}

fn small_coin_game() -> GridConfig {
    GridConfig { size: 2, ..GridConfig::coin_game() }
}

#[test]
fn grid_model_successors_are_distributions() {
    for cfg in [small_coin_game(), GridConfig::coin_game()] {
        let model = GridModel::new(&cfg).unwrap();
        for s in 0..model.states() {
            if !model.is_valid(s) {
                continue;
            }
            for ja in 0..16 {
                match model.successors(s, ja) {
                    Successor::Fixed(n) => assert!(model.is_valid(n)),
                    Successor::Respawn(set) => {
                        assert!(!set.is_empty());
                        assert!(set.iter().all(|&n| model.is_valid(n as usize)));
                    }
                }
            }
        }
    }
}

#[test]
fn episode_values_match_monte_carlo() {
    let cfg = GridConfig::coin_game();
    let env = EnvSpec::Grid(cfg.clone());
    let planner = GridPlanner::new(&cfg, G).unwrap();
    let plan = Arc::new(JointPlan::Grid(planner.plan(&WelfareSpec::utilitarian()).unwrap()));
    let exact = plan.values();
    let n = 400;
    let mut samples = [Vec::new(), Vec::new()];
    for seed in 0..n {
        let mut a = PlanAgent::new(plan.clone(), 0);
        let mut b = PlanAgent::new(plan.clone(), 1);
        let v = rollout(&env, [&mut a, &mut b], cfg.episode_length, seed, G).unwrap().average_values();
        samples[0].push(v[0]);
        samples[1].push(v[1]);
    }
    for i in 0..2 {
        let mean = samples[i].iter().sum::<f64>() / n as f64;
        let var = samples[i].iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n as f64 - 1.0);
        let se = (var / n as f64).sqrt();
        assert!((mean - exact[i]).abs() < 4.0 * se + 1e-9, "seat {i}: {mean} vs {} (se {se})", exact[i]);
    }
}

#[test]
fn coin_game_utilitarian_never_steals() {
    let cfg = GridConfig::coin_game();
    let env = EnvSpec::Grid(cfg.clone());
    let plan = Arc::new(welfare_optimal_joint_policy(&env, &WelfareSpec::utilitarian(), G).unwrap());
    for seed in 0..20 {
        let mut a = PlanAgent::new(plan.clone(), 0);
        let mut b = PlanAgent::new(plan.clone(), 1);
        let tr = rollout(&env, [&mut a, &mut b], 100, seed, G).unwrap();
        assert!(tr.steps.iter().all(|s| s.rewards[0] >= 0.0 && s.rewards[1] >= 0.0));
    }
}

#[test]
fn q_learning_reaches_exact_best_response_on_coin_game() {
    let cfg = GridConfig::coin_game();
    let env = EnvSpec::Grid(cfg.clone());
    let plan = match welfare_optimal_joint_policy(&env, &WelfareSpec::utilitarian(), G).unwrap() {
        JointPlan::Grid(p) => p,
        _ => unreachable!(),
    };
    let partner = TabularPolicy::deterministic(&env, 1, |s| plan.actions[s] as usize % crate::game::MOVES);
    let exact = exact_best_response_value(&env, 0, &partner, G).unwrap();
    let learned = q_learning_best_response(
        &env,
        0,
        &mut TabularAgent { policy: partner.clone() },
        Objective::MaximizeOwn,
        &q_config(3000),
        5,
    )
    .unwrap();
    let got = tabular_policy_values(&env, [&learned, &partner], G).unwrap()[0];
    assert!(got >= 0.95 * exact, "learned {got} vs exact {exact}");
}

#[test]
fn plans_reject_other_environments() {
    let plan = welfare_optimal_joint_policy(&EnvSpec::asym_bos(), &WelfareSpec::utilitarian(), G).unwrap();
    assert!(plan.check_env(&EnvSpec::ipd()).is_ok());
    assert!(plan.check_env(&EnvSpec::coin_game()).is_err());
    let cg = welfare_optimal_joint_policy(&EnvSpec::Grid(small_coin_game()), &WelfareSpec::utilitarian(), G).unwrap();
    assert!(cg.check_env(&EnvSpec::coin_game()).is_err());
}

#[test]
fn planner_rejects_oversized_grids() {
    let cfg = GridConfig { size: 8, ..GridConfig::abcg() };
    assert!(matches!(GridModel::new(&cfg), Err(Error::StateBoundExceeded { .. })));
}
