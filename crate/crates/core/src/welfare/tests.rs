use super::*;
use crate::game::{JointAction, MatrixGame, Step, Trajectory, EnvState, MatrixState};
use alloc::vec;
use alloc::vec::Vec;
use proptest::prelude::*;

fn asym() -> FeasibleSet {
    feasible_set(&MatrixGame::asym_bos(), 0.96).unwrap()
}

fn close(a: [f64; 2], b: [f64; 2], tol: f64) -> bool {
    (a[0] - b[0]).abs() <= tol && (a[1] - b[1]).abs() <= tol
}

fn dummy_set() -> FeasibleSet {
    FeasibleSet::new(vec![[4.0, 1.0], [2.0, 2.0], [0.0, 0.0]]).unwrap()
}

#[test]
fn stage_level_examples() {
    let s = dummy_set();
    let util = WelfareSpec::utilitarian();
    assert_eq!(evaluate_welfare(&util, [4.0, 1.0], &s).unwrap(), 5.0);

    let egal = WelfareSpec::egalitarian([0.0, 0.0]);
    assert!(evaluate_welfare(&egal, [2.0, 2.0], &s).unwrap() > evaluate_welfare(&egal, [4.0, 1.0], &s).unwrap());

    let nash = WelfareSpec::nash([0.0, 0.0]);
    assert!((evaluate_welfare(&nash, [2.5, 2.5], &s).unwrap() - 6.25).abs() < 1e-12);
    assert!((evaluate_welfare(&nash, [3.0, 2.0], &s).unwrap() - 6.0).abs() < 1e-12);
}

#[test]
fn nash_rejects_profiles_below_disagreement() {
    let s = dummy_set();
    let nash = WelfareSpec::nash([1.0, 1.0]);
    assert!(matches!(
        evaluate_welfare(&nash, [0.5, 3.0], &s),
        Err(Error::NegativeGain { .. })
    ));
}

#[test]
fn ks_needs_positive_second_gain() {
    let s = dummy_set();
    let ks = WelfareSpec::kalai_smorodinsky([0.0, 0.0]);
    assert!(matches!(evaluate_welfare(&ks, [1.0, 0.0], &s), Err(Error::UndefinedRatio)));
}

#[test]
fn asym_bos_optima() {
    let s = asym();
    let u = welfare_optimum(&WelfareSpec::utilitarian(), &s).unwrap();
    assert!(close(u.point, [100.0, 25.0], 1e-9));
    assert!((u.welfare - 125.0).abs() < 1e-9);

    let e = welfare_optimum(&WelfareSpec::egalitarian([0.0, 0.0]), &s).unwrap();
    assert!(close(e.point, [50.0, 50.0], 1e-9));
    assert!((e.welfare - 50.0).abs() < 1e-9);

    let ia = welfare_optimum(&WelfareSpec::inequity_averse(IaParams::default()), &s).unwrap();
    assert!(close(ia.point, [50.0, 50.0], 1e-9));
}

#[test]
fn bos_utilitarian_tie_breaks_to_fair_lottery() {
    let s = feasible_set(&MatrixGame::bos(), 0.96).unwrap();
    let u = welfare_optimum(&WelfareSpec::utilitarian(), &s).unwrap();
    assert!(close(u.point, [62.5, 62.5], 1e-9), "{:?}", u.point);
    assert!((u.welfare - 125.0).abs() < 1e-9);
}

#[test]
fn nash_optimum_on_interior_of_segment() {
    // Front from (4,0) to (0,4): product of gains peaks at (2,2).
    let s = FeasibleSet::new(vec![[4.0, 0.0], [0.0, 4.0], [0.0, 0.0]]).unwrap();
    let n = welfare_optimum(&WelfareSpec::nash([0.0, 0.0]), &s).unwrap();
    assert!(close(n.point, [2.0, 2.0], 1e-9));
    assert!((n.welfare - 4.0).abs() < 1e-9);
}

#[test]
fn ks_optimum_lies_on_ideal_ray() {
    let s = FeasibleSet::new(vec![[6.0, 0.0], [0.0, 2.0], [0.0, 0.0]]).unwrap();
    let k = welfare_optimum(&WelfareSpec::kalai_smorodinsky([0.0, 0.0]), &s).unwrap();
    assert!((k.point[0] / k.point[1] - 3.0).abs() < 1e-9);
    assert!(close(k.point, [3.0, 1.0], 1e-9));
}

#[test]
fn nash_without_strict_gain_is_degenerate() {
    let s = FeasibleSet::new(vec![[1.0, 0.0], [0.0, 1.0]]).unwrap();
    let err = welfare_optimum(&WelfareSpec::nash([0.5, 0.5]), &s).unwrap_err();
    assert!(matches!(err, Error::Degenerate(_)));
}

#[test]
fn normalized_score_examples() {
    let s = asym();
    let set = [WelfareSpec::utilitarian(), WelfareSpec::inequity_averse(IaParams::default())];
    let scored = normalized_score([50.0, 50.0], &set, [0.0, 0.0], &s).unwrap();
    assert!((scored.normalized_score - 1.0).abs() < 1e-9);
    assert_eq!(scored.best_label, "ia");

    let util_only = normalized_score([50.0, 50.0], &set[..1], [0.0, 0.0], &s).unwrap();
    assert!((util_only.normalized_score - 0.8).abs() < 1e-9);

    let top = normalized_score([100.0, 25.0], &set, [0.0, 0.0], &s).unwrap();
    assert!((top.normalized_score - 1.0).abs() < 1e-9);
    let zero = normalized_score([0.0, 0.0], &set, [0.0, 0.0], &s).unwrap();
    assert!(zero.normalized_score.abs() < 1e-12);
}

#[test]
fn convention_classification() {
    let optima = vec![
        ("util".into(), [100.0, 25.0]),
        ("egal".into(), [50.0, 50.0]),
    ];
    assert_eq!(classify_convention([97.0, 24.5], &optima, CONVENTION_TOLERANCE).as_deref(), Some("util"));
    assert_eq!(classify_convention([51.0, 49.0], &optima, CONVENTION_TOLERANCE).as_deref(), Some("egal"));
    assert_eq!(classify_convention([10.0, 10.0], &optima, CONVENTION_TOLERANCE), None);
}

fn constant_traj(r: [f64; 2], n: usize, gamma: f64) -> Trajectory {
    let state = EnvState::Matrix(MatrixState { prev: None, t: 0, signal: 0.0 });
    Trajectory {
        steps: (0..n)
            .map(|_| Step { state, action: JointAction::new(0, 0), rewards: r })
            .collect(),
        discount: gamma,
    }
}

#[test]
fn ia_welfare_oracle() {
    let gamma = 0.96;
    let lambda = 0.96;
    let traj = constant_traj([4.0, 1.0], 3, gamma);
    // Hand computation: e-gaps 3, 3 + 0.9216*3, 3 + 0.9216*(3 + 0.9216*3).
    let k = gamma * lambda;
    let g1 = 3.0;
    let g2 = 3.0 + k * g1;
    let g3 = 3.0 + k * g2;
    let values = 5.0 * (1.0 + gamma + gamma * gamma);
    let expect = values - (g1 + g2 + g3) / 3.0;
    assert!((ia_welfare(&traj, 1.0, lambda, gamma).unwrap() - expect).abs() < 1e-12);
}

#[test]
fn ia_welfare_matches_profile_form_on_long_stationary_play() {
    let gamma = 0.96;
    let p = IaParams::default();
    let traj = constant_traj([4.0, 1.0], 40_000, gamma);
    let v = [4.0 / (1.0 - gamma), 1.0 / (1.0 - gamma)];
    let s = asym();
    let profile = evaluate_welfare(&WelfareSpec::inequity_averse(p), v, &s).unwrap();
    let sampled = ia_welfare(&traj, p.beta, p.lambda, gamma).unwrap();
    assert!((profile - sampled).abs() < 0.02, "{profile} vs {sampled}");
}

#[test]
fn ia_params_are_validated() {
    assert!(ia_welfare(&constant_traj([1.0, 1.0], 2, 0.9), -1.0, 0.9, 0.9).is_err());
    assert!(ia_welfare(&constant_traj([1.0, 1.0], 2, 0.9), 1.0, 1.5, 0.9).is_err());
    let mut w = WelfareSpec::utilitarian();
    w.ia = Some(IaParams::default());
    assert!(w.validate().is_err());
}

// ---------- axioms ----------

fn arb_set() -> impl Strategy<Value = FeasibleSet> {
    prop::collection::vec((0.0f64..10.0, 0.0f64..10.0), 2..7).prop_map(|pts| {
        let mut points: Vec<[f64; 2]> = pts.into_iter().map(|(a, b)| [a, b]).collect();
        points.push([0.0, 0.0]);
        FeasibleSet::new(points).unwrap()
    })
}

fn ks_well_posed(set: &FeasibleSet) -> bool {
    let sup = set.sup();
    sup[0] > 1e-3 && sup[1] > 1e-3
}

fn kinds_for(set: &FeasibleSet) -> Vec<WelfareSpec> {
    let mut v = vec![
        WelfareSpec::utilitarian(),
        WelfareSpec::egalitarian([0.0, 0.0]),
        WelfareSpec::nash([0.0, 0.0]),
        WelfareSpec::inequity_averse(IaParams::default()),
    ];
    if ks_well_posed(set) {
        v.push(WelfareSpec::kalai_smorodinsky([0.0, 0.0]));
    }
    v
}

/// Dense sampling oracle for the front: the optimum's welfare must be at
/// least that of every sampled point on the hull boundary.
fn boundary_samples(set: &FeasibleSet) -> Vec<[f64; 2]> {
    let hull = set.hull();
    let mut out = hull.clone();
    if hull.len() >= 2 {
        for i in 0..hull.len() {
            let (a, b) = (hull[i], hull[(i + 1) % hull.len()]);
            for k in 1..200 {
                let t = k as f64 / 200.0;
                out.push([a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]);
            }
        }
    }
    out
}

fn has_strict_gain(set: &FeasibleSet) -> bool {
    set.hull().iter().any(|p| p[0] > 1e-6 && p[1] > 1e-6)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn optimum_is_pareto_optimal_and_feasible(set in arb_set()) {
        prop_assume!(has_strict_gain(&set));
        let samples = boundary_samples(&set);
        for w in kinds_for(&set) {
            let o = welfare_optimum(&w, &set).unwrap();
            prop_assert!(set.contains(o.point, 1e-7));
            for q in &samples {
                let dominated = q[0] >= o.point[0] + 1e-6 && q[1] >= o.point[1] + 1e-6;
                prop_assert!(!dominated, "{} optimum {:?} dominated by {:?}", w.kind, o.point, q);
            }
        }
    }

    #[test]
    fn optimum_beats_dense_boundary_sampling(set in arb_set()) {
        prop_assume!(has_strict_gain(&set));
        let samples = boundary_samples(&set);
        let front = pareto_front(&set);
        for w in kinds_for(&set) {
            let o = welfare_optimum(&w, &set).unwrap();
            for q in &samples {
                // The Pareto-constrained kinds only compete on the front.
                if w.kind.pareto_constrained()
                    && !front.windows(2).any(|s| hull::distance_to_segment(*q, s[0], s[1]) < 1e-9)
                    && !front.iter().any(|f| close(*f, *q, 1e-9))
                {
                    continue;
                }
                if let Ok(val) = evaluate_welfare(&w, *q, &set) {
                    prop_assert!(val <= o.welfare + 1e-6 * (1.0 + o.welfare.abs()),
                        "{}: sample {:?} has {} > optimum {:?} {}", w.kind, q, val, o.point, o.welfare);
                }
            }
        }
    }

    #[test]
    fn impartiality(set in arb_set()) {
        prop_assume!(has_strict_gain(&set));
        let swapped = set.swapped();
        for w in kinds_for(&set) {
            let a = welfare_optimum(&w, &set).unwrap();
            let b = welfare_optimum(&w.swapped(), &swapped).unwrap();
            prop_assert!(close(a.point, [b.point[1], b.point[0]], 1e-6),
                "{}: {:?} vs swapped {:?}", w.kind, a.point, b.point);
            if w.kind != WelfareKind::KalaiSmorodinsky {
                // Value-level symmetry; the ratio form is only symmetric at the argmax.
                for p in set.hull() {
                    let x = evaluate_welfare(&w, p, &set);
                    let y = evaluate_welfare(&w.swapped(), [p[1], p[0]], &swapped);
                    if let (Ok(x), Ok(y)) = (x, y) {
                        prop_assert!((x - y).abs() < 1e-9);
                    }
                }
            }
        }
    }

    #[test]
    fn independence_of_irrelevant_alternatives(set in arb_set(), drop in 0usize..8) {
        prop_assume!(has_strict_gain(&set));
        for w in kinds_for(&set) {
            if w.kind == WelfareKind::KalaiSmorodinsky {
                continue; // KS changes with the ideal point by design.
            }
            let o = welfare_optimum(&w, &set).unwrap();
            let mut pts = set.points.clone();
            let idx = drop % pts.len();
            pts.remove(idx);
            if pts.is_empty() {
                continue;
            }
            let smaller = FeasibleSet::new(pts).unwrap();
            if !smaller.contains(o.point, 1e-9) || !has_strict_gain(&smaller) {
                continue;
            }
            let o2 = welfare_optimum(&w, &smaller).unwrap();
            prop_assert!((o2.welfare - o.welfare).abs() < 1e-6 * (1.0 + o.welfare.abs()),
                "{}: {:?} -> {:?}", w.kind, o.point, o2.point);
        }
    }

    #[test]
    fn resource_monotonicity_egal(set in arb_set(), extra in (0.0f64..12.0, 0.0f64..12.0)) {
        prop_assume!(has_strict_gain(&set));
        let w = WelfareSpec::egalitarian([0.0, 0.0]);
        let mut pts = set.points.clone();
        pts.push([extra.0, extra.1]);
        let bigger = FeasibleSet::new(pts).unwrap();
        let crosses = |s: &FeasibleSet| {
            let f = pareto_front(s);
            f.first().map_or(false, |a| a[0] >= a[1]) && f.last().map_or(false, |b| b[1] >= b[0])
        };
        prop_assume!(crosses(&set) && crosses(&bigger));
        let a = welfare_optimum(&w, &set).unwrap();
        let b = welfare_optimum(&w, &bigger).unwrap();
        prop_assert!(b.point[0] >= a.point[0] - 1e-6 && b.point[1] >= a.point[1] - 1e-6);
    }

    #[test]
    fn resource_monotonicity_ks(set in arb_set(), t in 0.0f64..1.0, u in 0.0f64..1.0) {
        prop_assume!(has_strict_gain(&set) && ks_well_posed(&set));
        let w = WelfareSpec::kalai_smorodinsky([0.0, 0.0]);
        let sup = set.sup();
        // Added alternative inside the ideal box keeps the ideal point fixed.
        let mut pts = set.points.clone();
        pts.push([t * sup[0], u * sup[1]]);
        let bigger = FeasibleSet::new(pts).unwrap();
        let a = welfare_optimum(&w, &set).unwrap();
        let b = welfare_optimum(&w, &bigger).unwrap();
        prop_assume!(a.welfare.abs() < 1e-9 && b.welfare.abs() < 1e-9);
        prop_assert!(b.point[0] >= a.point[0] - 1e-6 && b.point[1] >= a.point[1] - 1e-6);
    }

    #[test]
    fn scaling_covariance(set in arb_set(), k in 0.1f64..10.0) {
        prop_assume!(has_strict_gain(&set));
        let scaled = FeasibleSet::new(set.points.iter().map(|p| [k * p[0], k * p[1]]).collect()).unwrap();
        for w in kinds_for(&set) {
            let a = welfare_optimum(&w, &set).unwrap();
            let b = welfare_optimum(&w, &scaled).unwrap();
            prop_assert!(close([k * a.point[0], k * a.point[1]], b.point, 1e-6 * (1.0 + k * 10.0)),
                "{}: {:?} scaled by {} vs {:?}", w.kind, a.point, k, b.point);
        }
    }

    #[test]
    fn normalized_score_of_optimum_is_one(set in arb_set()) {
        prop_assume!(has_strict_gain(&set));
        let ws = [WelfareSpec::utilitarian(), WelfareSpec::egalitarian([0.0, 0.0])];
        for w in &ws {
            let o = welfare_optimum(w, &set).unwrap();
            if let Ok(s) = normalized_score(o.point, &ws, [0.0, 0.0], &set) {
                prop_assert!(s.normalized_score >= 1.0 - 1e-9 && s.normalized_score <= 1.0 + 1e-9);
            }
        }
    }

    #[test]
    fn affine_invariance_of_nash_and_ks(
        set in arb_set(),
        a in (0.2f64..5.0, 0.2f64..5.0),
        b in (-5.0f64..5.0, -5.0f64..5.0),
    ) {
        prop_assume!(has_strict_gain(&set) && ks_well_posed(&set));
        let map = |p: [f64; 2]| [a.0 * p[0] + b.0, a.1 * p[1] + b.1];
        let mapped = FeasibleSet::new(set.points.iter().map(|&p| map(p)).collect()).unwrap();
        let d = map([0.0, 0.0]);
        for (w, wm) in [
            (WelfareSpec::nash([0.0, 0.0]), WelfareSpec::nash(d)),
            (WelfareSpec::kalai_smorodinsky([0.0, 0.0]), WelfareSpec::kalai_smorodinsky(d)),
        ] {
            let o = welfare_optimum(&w, &set).unwrap();
            let om = welfare_optimum(&wm, &mapped).unwrap();
            let scale = 1.0 + a.0.max(a.1) * 10.0;
            prop_assert!(close(map(o.point), om.point, 1e-6 * scale),
                "{}: {:?} maps to {:?}, got {:?}", w.kind, o.point, map(o.point), om.point);
        }
    }

    #[test]
    fn adding_a_dominated_welfare_leaves_score_unchanged(set in arb_set(), t in 0.0f64..1.0) {
        prop_assume!(has_strict_gain(&set));
        let front = pareto_front(&set);
        let v = if front.len() >= 2 { lerp(front[0], front[1], t) } else { front[0] };
        let base = [WelfareSpec::utilitarian()];
        let Ok(s0) = normalized_score(v, &base, [0.0, 0.0], &set) else { return Ok(()); };
        for extra in [WelfareSpec::egalitarian([0.0, 0.0]), WelfareSpec::nash([0.0, 0.0])] {
            let Ok(se) = normalized_score(v, &[extra], [0.0, 0.0], &set) else { continue; };
            let both = normalized_score(v, &[base[0], extra], [0.0, 0.0], &set).unwrap();
            prop_assert!((both.normalized_score - s0.normalized_score.max(se.normalized_score)).abs() < 1e-12);
            if se.normalized_score < s0.normalized_score {
                prop_assert_eq!(both.best_welfare, 0);
            }
        }
    }
}
