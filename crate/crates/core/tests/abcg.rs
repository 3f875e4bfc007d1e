//! Exact planning on the asymmetric bargaining coin game: calibration of
//! the default rewards and the tabular best-response gate.

use std::sync::Arc;

use normbargain_core::game::{rollout, EnvSpec, GridConfig, Trajectory, MOVES};
use normbargain_core::planning::{
    exact_best_response_value, q_learning_best_response, tabular_policy_values, GridPlanner, JointPlan, Objective,
    PlanAgent, QLearningConfig, TabularAgent, TabularPolicy,
};
use normbargain_core::welfare::{IaParams, WelfareSpec};
use normbargain_core::DEFAULT_GAMMA as G;

/// Steps on which exactly one player scored: a disagreement coin.
fn disagreement_coins(tr: &Trajectory) -> [usize; 2] {
    let mut n = [0; 2];
    for s in &tr.steps {
        match (s.rewards[0] > 0.0, s.rewards[1] > 0.0) {
            (true, false) => n[0] += 1,
            (false, true) => n[1] += 1,
            _ => {}
        }
    }
    n
}

fn play(env: &EnvSpec, plan: &Arc<JointPlan>, episodes: u64) -> [usize; 2] {
    let mut total = [0; 2];
    for seed in 0..episodes {
        let mut a = PlanAgent::new(plan.clone(), 0);
        let mut b = PlanAgent::new(plan.clone(), 1);
        let tr = rollout(env, [&mut a, &mut b], 100, seed, G).unwrap();
        let n = disagreement_coins(&tr);
        total[0] += n[0];
        total[1] += n[1];
    }
    total
}

#[test]
fn calibration_and_best_response() {
    let cfg = GridConfig::abcg();
    let env = EnvSpec::Grid(cfg.clone());
    let planner = GridPlanner::new(&cfg, G).unwrap();

    // Utilitarian cooperation consumes only cooperation coins.
    let util = planner.plan(&WelfareSpec::utilitarian()).unwrap();
    let util_plan = Arc::new(JointPlan::Grid(util.clone()));
    assert_eq!(play(&env, &util_plan, 30), [0, 0]);

    // Inequity aversion lets blue take its disagreement coins.
    let ia = planner.plan(&WelfareSpec::inequity_averse(IaParams::default())).unwrap();
    let ia_plan = Arc::new(JointPlan::Grid(ia.clone()));
    let taken = play(&env, &ia_plan, 30);
    assert_eq!(taken[0], 0);
    assert!(taken[1] > 0);
    assert!(ia.values[1] > util.values[1] && ia.values[0] < util.values[0]);

    // Q-learning against the utilitarian partner reaches 95% of the exact
    // best response for both seats.
    for seat in 0..2 {
        let partner_seat = 1 - seat;
        let partner = TabularPolicy::deterministic(&env, partner_seat, |s| {
            let ja = util.actions[s] as usize;
            if partner_seat == 0 { ja / MOVES } else { ja % MOVES }
        });
        let exact = exact_best_response_value(&env, seat, &partner, G).unwrap();
        let config = QLearningConfig { episodes: 100_000, ..QLearningConfig::default() };
        let learned = q_learning_best_response(
            &env,
            seat,
            &mut TabularAgent { policy: partner.clone() },
            Objective::MaximizeOwn,
            &config,
            7,
        )
        .unwrap();
        let pair = if seat == 0 { [&learned, &partner] } else { [&partner, &learned] };
        let got = tabular_policy_values(&env, pair, G).unwrap()[seat];
        println!("seat {seat}: learned {got:.3} exact {exact:.3}");
        assert!(got >= 0.95 * exact, "seat {seat}: learned {got} vs exact {exact}");
    }
}
