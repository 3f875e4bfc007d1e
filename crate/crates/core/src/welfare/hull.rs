use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{JointAction, MatrixGame};
use crate::math::{abs, sqrt};

/// Attainable payoff profiles: the convex hull of `points`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeasibleSet {
    pub points: Vec<[f64; 2]>,
}

const SAME: f64 = 1e-12;

fn cross(o: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

impl FeasibleSet {
    pub fn new(points: Vec<[f64; 2]>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidParameter("feasible set needs at least one point".into()));
        }
        if points.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::InvalidParameter("feasible set points must be finite".into()));
        }
        Ok(FeasibleSet { points })
    }

    /// Largest attainable value per player.
    pub fn sup(&self) -> [f64; 2] {
        self.points.iter().fold([f64::NEG_INFINITY; 2], |acc, p| {
            [acc[0].max(p[0]), acc[1].max(p[1])]
        })
    }

    /// The set with the players' roles exchanged.
    pub fn swapped(&self) -> Self {
        FeasibleSet {
            points: self.points.iter().map(|p| [p[1], p[0]]).collect(),
        }
    }

    /// Distinct hull vertices in counter-clockwise order (monotone chain).
    pub fn hull(&self) -> Vec<[f64; 2]> {
        let mut pts = self.points.clone();
        pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
        pts.dedup_by(|a, b| abs(a[0] - b[0]) <= SAME && abs(a[1] - b[1]) <= SAME);
        if pts.len() <= 2 {
            return pts;
        }
        let mut lower: Vec<[f64; 2]> = Vec::new();
        for &p in &pts {
            while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0.0 {
                lower.pop();
            }
            lower.push(p);
        }
        let mut upper: Vec<[f64; 2]> = Vec::new();
        for &p in pts.iter().rev() {
            while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0.0 {
                upper.pop();
            }
            upper.push(p);
        }
        lower.pop();
        upper.pop();
        lower.extend(upper);
        lower
    }

    /// Whether `p` lies in the convex hull, up to `tol`.
    pub fn contains(&self, p: [f64; 2], tol: f64) -> bool {
        let h = self.hull();
        match h.len() {
            0 => false,
            1 => abs(h[0][0] - p[0]) <= tol && abs(h[0][1] - p[1]) <= tol,
            2 => distance_to_segment(p, h[0], h[1]) <= tol,
            n => (0..n).all(|i| {
                let a = h[i];
                let b = h[(i + 1) % n];
                let len = sqrt((b[0] - a[0]) * (b[0] - a[0]) + (b[1] - a[1]) * (b[1] - a[1]));
                cross(a, b, p) >= -tol * len
            }),
        }
    }
}

pub(crate) fn distance_to_segment(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let d = [b[0] - a[0], b[1] - a[1]];
    let len2 = d[0] * d[0] + d[1] * d[1];
    let s = if len2 == 0.0 {
        0.0
    } else {
        (((p[0] - a[0]) * d[0] + (p[1] - a[1]) * d[1]) / len2).clamp(0.0, 1.0)
    };
    let q = [a[0] + s * d[0], a[1] + s * d[1]];
    sqrt((p[0] - q[0]) * (p[0] - q[0]) + (p[1] - q[1]) * (p[1] - q[1]))
}

/// Values of stationary play in an iterated one-state game: one point per
/// pure joint action, scaled by `1 / (1 - gamma)`. The hull adds every
/// correlated or alternating mixture of them.
pub fn feasible_set(game: &MatrixGame, gamma: f64) -> Result<FeasibleSet> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::InvalidParameter("discount must lie in [0, 1)".into()));
    }
    let scale = 1.0 / (1.0 - gamma);
    let points = (0..game.joint_actions())
        .map(|i| {
            let p = game.payoff(JointAction::from_index(i, game.actions));
            [p[0] * scale, p[1] * scale]
        })
        .collect();
    FeasibleSet::new(points)
}

/// Pareto-optimal boundary of the hull as its vertex chain, sorted by the
/// first player's value in descending order. Consecutive vertices bound a
/// segment of the front.
pub fn pareto_front(set: &FeasibleSet) -> Vec<[f64; 2]> {
    let hull = set.hull();
    let n = hull.len();
    if n == 1 {
        return hull;
    }
    let right = (0..n)
        .max_by(|&i, &j| hull[i][0].total_cmp(&hull[j][0]).then(hull[i][1].total_cmp(&hull[j][1])))
        .expect("non-empty");
    let top = (0..n)
        .max_by(|&i, &j| hull[i][1].total_cmp(&hull[j][1]).then(hull[i][0].total_cmp(&hull[j][0])))
        .expect("non-empty");
    let mut front = Vec::new();
    let mut i = right;
    loop {
        front.push(hull[i]);
        if i == top {
            break;
        }
        i = (i + 1) % n;
    }
    front
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn asym_bos_feasible_set() {
        let s = feasible_set(&MatrixGame::asym_bos(), 0.96).unwrap();
        let expect = [[100.0, 25.0], [0.0, 0.0], [0.0, 0.0], [50.0, 50.0]];
        for (p, e) in s.points.iter().zip(expect) {
            assert!((p[0] - e[0]).abs() < 1e-9 && (p[1] - e[1]).abs() < 1e-9);
        }
        assert_eq!(s.hull().len(), 3);
    }

    #[test]
    fn ipd_feasible_set_contains_cc_and_dd() {
        let s = feasible_set(&MatrixGame::ipd(), 0.96).unwrap();
        assert!((s.points[0][0] + 25.0).abs() < 1e-9);
        assert!((s.points[3][1] + 75.0).abs() < 1e-9);
    }

    #[test]
    fn scaling_payoffs_scales_vertices() {
        let g = MatrixGame::asym_bos();
        let g2 = g.map_payoffs(|[a, b]| [2.0 * a, 2.0 * b]);
        let a = feasible_set(&g, 0.9).unwrap();
        let b = feasible_set(&g2, 0.9).unwrap();
        for (p, q) in a.points.iter().zip(&b.points) {
            assert!((2.0 * p[0] - q[0]).abs() < 1e-9 && (2.0 * p[1] - q[1]).abs() < 1e-9);
        }
    }

    #[test]
    fn discount_of_one_is_rejected() {
        assert!(feasible_set(&MatrixGame::asym_bos(), 1.0).is_err());
    }

    #[test]
    fn front_examples() {
        let s = feasible_set(&MatrixGame::asym_bos(), 0.96).unwrap();
        let f = pareto_front(&s);
        assert_eq!(f.len(), 2);
        assert!((f[0][0] - 100.0).abs() < 1e-9 && (f[1][0] - 50.0).abs() < 1e-9);

        let single = FeasibleSet::new(vec![[3.0, 4.0]]).unwrap();
        assert_eq!(pareto_front(&single), vec![[3.0, 4.0]]);

        let dom = FeasibleSet::new(vec![[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]).unwrap();
        assert_eq!(pareto_front(&dom), vec![[1.0, 1.0]]);
    }

    #[test]
    fn front_of_collinear_sets() {
        let neg = FeasibleSet::new(vec![[0.0, 2.0], [1.0, 1.0], [2.0, 0.0]]).unwrap();
        assert_eq!(pareto_front(&neg), vec![[2.0, 0.0], [0.0, 2.0]]);
        let pos = FeasibleSet::new(vec![[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]]).unwrap();
        assert_eq!(pareto_front(&pos), vec![[2.0, 2.0]]);
    }

    /// Brute-force oracle: a hull vertex is on the front iff no hull point
    /// (sampled densely along edges) dominates it.
    #[test]
    fn front_matches_dominance_oracle() {
        let s = feasible_set(&MatrixGame::asym_bos(), 0.96).unwrap();
        let hull = s.hull();
        let mut samples = Vec::new();
        for i in 0..hull.len() {
            let (a, b) = (hull[i], hull[(i + 1) % hull.len()]);
            for k in 0..=100 {
                let t = k as f64 / 100.0;
                samples.push([a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]);
            }
        }
        let undominated: Vec<[f64; 2]> = hull
            .iter()
            .copied()
            .filter(|&v| {
                !samples
                    .iter()
                    .any(|&q| q[0] >= v[0] - 1e-12 && q[1] >= v[1] - 1e-12 && (q[0] > v[0] + 1e-9 || q[1] > v[1] + 1e-9))
            })
            .collect();
        let front = pareto_front(&s);
        assert_eq!(undominated.len(), front.len());
        for v in undominated {
            assert!(front.contains(&v));
        }
    }

    #[test]
    fn contains_checks_hull_membership() {
        let s = FeasibleSet::new(vec![[0.0, 0.0], [4.0, 0.0], [0.0, 4.0]]).unwrap();
        assert!(s.contains([1.0, 1.0], 1e-9));
        assert!(s.contains([2.0, 2.0], 1e-9));
        assert!(!s.contains([2.1, 2.1], 1e-9));
    }
}
