use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use super::*;
use crate::game::{rollout, ConstantAgent, MatrixState, UniformAgent};
use crate::welfare::IaParams;
use crate::DEFAULT_GAMMA as G;

const B: usize = 0;
const S: usize = 1;

fn spec(env: &EnvSpec, kind: WelfareKind) -> WelfareSpec {
    let mut w = WelfareSpec::new(kind, disagreement_values(env, G));
    if kind == WelfareKind::InequityAverse {
        w.ia = Some(IaParams::default());
    }
    w
}

fn bundle(env: &EnvSpec, kind: WelfareKind, seed: u64) -> Arc<AmTftBundle> {
    Arc::new(train_amtft(env, &spec(env, kind), seed, &AmTftConfig::default()).unwrap())
}

fn matrix_state(prev: Option<(usize, usize)>) -> EnvState {
    EnvState::Matrix(MatrixState { prev: prev.map(|(a, b)| JointAction::new(a, b)), t: 0, signal: 0.5 })
}

/// States a punisher facing a constant opponent can reach.
fn reachable(opponent_action: usize, seat: Seat) -> Vec<EnvState> {
    let mut v = vec![matrix_state(None)];
    for own in 0..2 {
        let ja = if seat == 0 { (own, opponent_action) } else { (opponent_action, own) };
        v.push(matrix_state(Some(ja)));
    }
    v
}

#[test]
fn utilitarian_training_in_asym_bos() {
    let env = EnvSpec::asym_bos();
    let b = bundle(&env, WelfareKind::Utilitarian, 1);
    assert_eq!(b.plan.joint_action(&env, &matrix_state(None), 0.0), JointAction::new(B, B));
    for state in reachable(B, 0) {
        assert_eq!(b.punish[0].greedy(state_index(&env, &state)), S);
    }
    assert_eq!(b.discards, 0);
}

#[test]
fn inequity_averse_training_in_asym_bos() {
    let env = EnvSpec::asym_bos();
    let b = bundle(&env, WelfareKind::InequityAverse, 1);
    assert_eq!(b.plan.joint_action(&env, &matrix_state(None), 0.0), JointAction::new(S, S));
    for state in reachable(S, 0) {
        assert_eq!(b.punish[0].greedy(state_index(&env, &state)), B);
    }
}

#[test]
fn self_play_reproduces_the_welfare_optimum() {
    for env in [EnvSpec::asym_bos(), EnvSpec::ipd()] {
        for kind in [WelfareKind::Utilitarian, WelfareKind::Egalitarian, WelfareKind::InequityAverse] {
            let b = bundle(&env, kind, 2);
            let mut p1 = AmTftAgent::new(b.clone(), 0, AmTftConfig::default());
            let mut p2 = AmTftAgent::new(b.clone(), 1, AmTftConfig::default());
            let tr = rollout(&env, [&mut p1, &mut p2], 600, 5, G).unwrap();
            let v = tr.discounted_values();
            let want = b.plan.values();
            assert!((v[0] - want[0]).abs() < 1e-6 && (v[1] - want[1]).abs() < 1e-6, "{kind}: {v:?} vs {want:?}");
            assert_eq!(p1.punishments() + p2.punishments(), 0);
        }
    }
}

#[test]
fn debit_examples() {
    let asym = EnvSpec::asym_bos();
    let s = matrix_state(None);
    let coop = JointAction::new(B, B);
    assert_eq!(debit_update(&asym, &s, 0, coop, B), 0.0);
    assert_eq!(debit_update(&asym, &s, 0, coop, S), 0.0);
    let ipd = EnvSpec::ipd();
    assert_eq!(debit_update(&ipd, &s, 0, JointAction::new(0, 0), 1), 1.0);
    assert_eq!(debit_update(&ipd, &s, 1, JointAction::new(0, 0), 1), 1.0);
}

#[test]
fn punishment_length_examples() {
    let env = EnvSpec::asym_bos();
    let b = bundle(&env, WelfareKind::Utilitarian, 1);
    let cfg = AmTftConfig::default();
    let s = matrix_state(Some((B, B)));
    assert_eq!(punishment_length(&b, 0, &env, &s, 0.0, 0.0, &cfg, 1).unwrap(), 0);
    // Each punished step costs the opponent exactly 1.
    assert_eq!(punishment_length(&b, 0, &env, &s, 0.0, 1.0, &cfg, 1).unwrap(), 2);
    let mut last = 0;
    for i in 0..8 {
        let debit = 0.25 * (1u32 << i) as f64;
        let k = punishment_length(&b, 0, &env, &s, 0.0, debit, &cfg, 1).unwrap();
        assert!(k >= last && k <= cfg.rollout_length);
        last = k;
    }
    assert_eq!(last, cfg.rollout_length);
}

#[test]
fn punishment_is_proportional() {
    // IPD: the punished cooperator loses (-1) - (-4) = 3 per step.
    let env = EnvSpec::ipd();
    let b = bundle(&env, WelfareKind::Utilitarian, 4);
    let cfg = AmTftConfig::default();
    let s = matrix_state(Some((0, 0)));
    for debit in [0.6, 1.0, 2.5, 4.0, 7.3] {
        let k = punishment_length(&b, 0, &env, &s, 0.0, debit, &cfg, 9).unwrap();
        let loss = 3.0 * k as f64;
        assert!(loss >= cfg.alpha * debit && loss <= cfg.alpha * debit + 3.0, "debit {debit}: k {k}");
    }
}

#[test]
fn cooperative_self_play_never_punishes() {
    let env = EnvSpec::asym_bos();
    let b = bundle(&env, WelfareKind::Utilitarian, 3);
    let mut p1 = AmTftAgent::new(b.clone(), 0, AmTftConfig::default());
    let mut p2 = AmTftAgent::new(b, 1, AmTftConfig::default());
    let tr = rollout(&env, [&mut p1, &mut p2], 20, 1, G).unwrap();
    assert!(tr.steps.iter().all(|s| s.action == JointAction::new(B, B)));
    assert_eq!(p1.debit() + p2.debit(), 0.0);
}

#[test]
fn defector_is_punished() {
    let env = EnvSpec::ipd();
    let b = bundle(&env, WelfareKind::Utilitarian, 3);
    let mut me = AmTftAgent::new(b, 0, AmTftConfig::default());
    let mut defector = ConstantAgent(1);
    let tr = rollout(&env, [&mut me, &mut defector], 40, 1, G).unwrap();
    let first_punish = tr.steps.iter().position(|s| s.action.a1 == 1).unwrap();
    assert!(first_punish <= 3);
    let avg = tr.mean_rewards()[1];
    assert!(avg < -1.0, "defector averages {avg}");
}

#[test]
fn amtft_is_deterministic() {
    let env = EnvSpec::coin_game();
    let run = || {
        let b = bundle(&env, WelfareKind::Utilitarian, 8);
        let mut me = AmTftAgent::new(b, 0, AmTftConfig::default());
        let mut other = UniformAgent;
        rollout(&env, [&mut me, &mut other], 60, 3, G).unwrap()
    };
    assert_eq!(run(), run());
}

fn lib(env: &EnvSpec) -> Vec<Convention> {
    convention_library(env, &DetectionConfig::default().library, IaParams::default(), G).unwrap()
}

fn window_for(env: &EnvSpec, library: &[Convention], opponent_actions: &[usize], seat: Seat) -> Vec<Vec<bool>> {
    opponent_actions
        .iter()
        .enumerate()
        .map(|(t, &a)| {
            let state = EnvState::Matrix(MatrixState { prev: None, t, signal: 0.3 });
            library.iter().map(|c| c.plan.joint_action(env, &state, 0.0).get(other(seat)) == a).collect()
        })
        .collect()
}

#[test]
fn detection_examples() {
    let env = EnvSpec::asym_bos();
    let library = lib(&env);
    let specs: Vec<WelfareSpec> = library.iter().map(|c| c.welfare).collect();
    let util = spec(&env, WelfareKind::Utilitarian);
    let ia = spec(&env, WelfareKind::InequityAverse);
    let w = window_for(&env, &library, &[B; 10], 0);
    assert_eq!(detect_normative_disagreement(&w, &specs, &util, 10, 0.9).unwrap(), Verdict::NoDisagreement);
    let w = window_for(&env, &library, &[S; 10], 0);
    match detect_normative_disagreement(&w, &specs, &util, 10, 0.9).unwrap() {
        // Egalitarian and inequity-averse play coincide here; either names the convention.
        Verdict::Disagreement(found) => {
            assert!(matches!(found.kind, WelfareKind::InequityAverse | WelfareKind::Egalitarian))
        }
        v => panic!("{v:?}"),
    }
    let only = [util, ia];
    let w2: Vec<Vec<bool>> = w.iter().map(|row| vec![row[0], row[3]]).collect();
    assert_eq!(detect_normative_disagreement(&w2, &only, &util, 10, 0.9).unwrap(), Verdict::Disagreement(ia));
    assert!(detect_normative_disagreement(&w, &[], &util, 10, 0.9).is_err());
    assert!(detect_normative_disagreement(&w[..5], &specs, &util, 10, 0.9).is_err());
}

/// P(at least 9 of 10 fair-coin matches).
fn tail() -> f64 {
    11.0 / 1024.0
}

#[test]
fn random_opponent_is_unrecognized() {
    let env = EnvSpec::asym_bos();
    let library = lib(&env);
    let util = spec(&env, WelfareKind::Utilitarian);
    let trials = 40_000;
    let mut rng = seeded_rng(17);
    let (mut pair_hits, mut full_hits) = (0usize, 0usize);
    let pair = [util, spec(&env, WelfareKind::InequityAverse)];
    let specs: Vec<WelfareSpec> = library.iter().map(|c| c.welfare).collect();
    for _ in 0..trials {
        let mut window = Vec::new();
        for t in 0..10 {
            let state = EnvState::Matrix(MatrixState { prev: None, t, signal: rng.random() });
            let a = rng.random_range(0..2);
            window.push(library.iter().map(|c| c.plan.joint_action(&env, &state, 0.0).get(1) == a).collect::<Vec<_>>());
        }
        let w2: Vec<Vec<bool>> = window.iter().map(|row| vec![row[0], row[3]]).collect();
        if detect_normative_disagreement(&w2, &pair, &util, 10, 0.9).unwrap() == Verdict::Unrecognized {
            pair_hits += 1;
        }
        if detect_normative_disagreement(&window, &specs, &util, 10, 0.9).unwrap() == Verdict::Unrecognized {
            full_hits += 1;
        }
    }
    let se = |p: f64| (p * (1.0 - p) / trials as f64).sqrt();
    // Two complementary conventions: B-matching and S-matching runs are disjoint.
    let pair_p = 1.0 - 2.0 * tail();
    let got = pair_hits as f64 / trials as f64;
    assert!(got >= 0.97 && (got - pair_p).abs() < 4.0 * se(pair_p), "{got} vs {pair_p}");
    // The Nash lottery adds a third, independent matching channel.
    let a = 2.0 * tail();
    let full_p = 1.0 - (a + tail() - a * tail());
    let got = full_hits as f64 / trials as f64;
    assert!((got - full_p).abs() < 4.0 * se(full_p), "{got} vs {full_p}");
}

fn adaptive(env: &EnvSpec, kinds: &[WelfareKind], seat: Seat, seed: u64) -> NormAdaptiveAgent {
    let own = kinds.iter().map(|&k| bundle(env, k, seed)).collect();
    NormAdaptiveAgent::new(own, lib(env), seat, AmTftConfig::default(), DetectionConfig::default(), seed).unwrap()
}

#[test]
fn singleton_sets_match_plain_amtft() {
    let env = EnvSpec::asym_bos();
    let b = bundle(&env, WelfareKind::Utilitarian, 6);
    let mut p1 = AmTftAgent::new(b.clone(), 0, AmTftConfig::default());
    let mut p2 = AmTftAgent::new(b.clone(), 1, AmTftConfig::default());
    let plain = rollout(&env, [&mut p1, &mut p2], 100, 2, G).unwrap();
    let mut q1 = adaptive(&env, &[WelfareKind::Utilitarian], 0, 6);
    let mut q2 = adaptive(&env, &[WelfareKind::Utilitarian], 1, 6);
    let adapt = rollout(&env, [&mut q1, &mut q2], 100, 2, G).unwrap();
    assert_eq!(plain, adapt);

    // Against an exploiter too, a singleton set behaves exactly like amTFT(w).
    let env = EnvSpec::ipd();
    let b = bundle(&env, WelfareKind::Utilitarian, 6);
    let mut p1 = AmTftAgent::new(b, 0, AmTftConfig::default());
    let plain = rollout(&env, [&mut p1, &mut UniformAgent], 100, 2, G).unwrap();
    let mut q1 = adaptive(&env, &[WelfareKind::Utilitarian], 0, 6);
    let adapt = rollout(&env, [&mut q1, &mut UniformAgent], 100, 2, G).unwrap();
    assert_eq!(plain, adapt);
}

#[test]
fn overlapping_sets_converge_to_the_shared_welfare() {
    let env = EnvSpec::asym_bos();
    for seed in 0..10 {
        let mut a = adaptive(&env, &[WelfareKind::Utilitarian], 0, seed);
        let mut b = adaptive(&env, &[WelfareKind::Utilitarian, WelfareKind::InequityAverse], 1, seed + 100);
        b.initial = Some(1);
        let tr = rollout(&env, [&mut a, &mut b], 200, seed, G).unwrap();
        assert_eq!(b.current_welfare().kind, WelfareKind::Utilitarian);
        assert!(b.resamples() >= 1);
        assert!(tr.steps[150..].iter().all(|s| s.action == JointAction::new(B, B)));
    }
}

#[test]
fn disjoint_sets_miscoordinate() {
    let env = EnvSpec::asym_bos();
    let mut a = adaptive(&env, &[WelfareKind::Utilitarian], 0, 1);
    let mut b = adaptive(&env, &[WelfareKind::InequityAverse], 1, 2);
    let tr = rollout(&env, [&mut a, &mut b], 200, 1, G).unwrap();
    let v = tr.mean_rewards();
    assert!(v[0] < 0.2 && v[1] < 0.2, "{v:?}");
}

#[test]
fn agreement_is_absorbing_and_reached() {
    let env = EnvSpec::asym_bos();
    let kinds = [WelfareKind::Utilitarian, WelfareKind::InequityAverse];
    let mut reached = 0;
    let trials = 200;
    for seed in 0..trials {
        let mut a = adaptive(&env, &kinds, 0, 1000 + seed);
        let mut b = adaptive(&env, &kinds, 1, 5000 + seed);
        a.record_trace(true);
        b.record_trace(true);
        // 50 resample rounds of at least M steps each.
        let _ = rollout(&env, [&mut a, &mut b], 50 * 10, seed, G).unwrap();
        let (ta, tb) = (a.trace().unwrap(), b.trace().unwrap());
        let agree = ta.iter().zip(tb).position(|(x, y)| x.welfare_label == y.welfare_label);
        if let Some(t0) = agree {
            reached += 1;
            // Once agreed, neither side ever changes welfare function.
            assert!(ta[t0..].iter().all(|e| e.welfare == ta[t0].welfare));
            assert!(tb[t0..].iter().all(|e| e.welfare == tb[t0].welfare));
        }
    }
    assert!(reached as f64 >= 0.99 * trials as f64, "{reached}/{trials}");
}

#[test]
fn traces_comply_with_their_norms() {
    let env = EnvSpec::ipd();
    let kinds = [WelfareKind::Utilitarian, WelfareKind::InequityAverse];
    let mut a = adaptive(&env, &kinds, 0, 3);
    a.record_trace(true);
    let _ = rollout(&env, [&mut a, &mut UniformAgent], 120, 4, G).unwrap();
    let norms: Vec<Norm> = a.own.iter().map(|b| Norm::from_bundle(b)).collect();
    let trace = a.trace().unwrap();
    assert!(trace.iter().any(|e| matches!(e.phase, Phase::Punish { .. })));
    assert_eq!(check_trace(&norms, 0, &env, trace).unwrap(), None);

    // A tampered trace is caught.
    let mut bad = trace.to_vec();
    bad[0].action = 1 - bad[0].action;
    assert_eq!(check_trace(&norms, 0, &env, &bad).unwrap(), Some(0));
}

#[test]
fn norm_adaptive_agents_are_deterministic() {
    let env = EnvSpec::asym_bos();
    let kinds = [WelfareKind::Utilitarian, WelfareKind::InequityAverse];
    let run = || {
        let mut a = adaptive(&env, &kinds, 0, 11);
        let mut b = adaptive(&env, &kinds, 1, 12);
        rollout(&env, [&mut a, &mut b], 200, 7, G).unwrap()
    };
    assert_eq!(run(), run());
}

#[test]
fn empty_welfare_set_is_rejected() {
    let env = EnvSpec::asym_bos();
    let r = NormAdaptiveAgent::new(Vec::new(), lib(&env), 0, AmTftConfig::default(), DetectionConfig::default(), 0);
    assert!(r.is_err());
}
