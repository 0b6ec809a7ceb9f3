//! Anomaly detection from transient weights.
//!
//! A homogeneous deformation leaves barycentric weights unchanged, so each
//! follower can recompute its weights from the actual positions of its
//! in-neighbors and compare them with the frozen communication weights. With
//! every agent within `Δ` of its desired position, the geometric form of the
//! weights (a distance ratio) can only drift inside a computable interval; a
//! static weight falling outside it flags the follower.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{lambda_nd, plane_normal, Position3};
use crate::refnet::{PositionMap, ReferenceConfiguration};
use crate::scalar::Real;
use crate::AgentId;

/// Transient weight and admissible interval for one in-neighbor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NeighborBound<T> {
    pub neighbor: AgentId,
    pub transient: T,
    pub static_weight: T,
    pub lo: T,
    pub hi: T,
    pub pass: bool,
}

/// Weight check of one follower at one instant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransientWeightReport<T> {
    pub agent: AgentId,
    pub time: T,
    pub entries: Vec<NeighborBound<T>>,
    /// The actual in-neighbor simplex collapsed; treated as a failed check
    /// and reported without entries.
    pub degenerate: bool,
}

impl<T: Real> TransientWeightReport<T> {
    pub fn healthy(&self) -> bool {
        check_agent_health(self)
    }
}

/// Weights of `own` with respect to the actual in-neighbor simplex.
pub fn transient_weights<T: Real>(neighbor_actual: &[Position3<T>], own: &Position3<T>, n: usize, xi: T) -> Result<Vec<T>> {
    let lam = lambda_nd(neighbor_actual, own, n, xi)?;
    Ok(lam.leading(n).to_vec())
}

/// Signed distance `d_k` of `own` to the side (or face) opposite neighbor
/// `k`, positive on the vertex side, and the vertex's own distance `l_k`.
/// `d_k / l_k` is the `k`-th weight.
pub fn opposite_distances<T: Real>(neighbor_actual: &[Position3<T>], own: &Position3<T>, n: usize) -> Result<Vec<(T, T)>> {
    if neighbor_actual.len() != n + 1 || !(n == 2 || n == 3) {
        return Err(Error::Argument(format!("expected {} neighbor positions", n + 1)));
    }
    let degenerate = || Error::Degenerate("in-neighbor simplex is degenerate".into());
    let plane = if n == 2 {
        Some(plane_normal(&neighbor_actual[0], &neighbor_actual[1], &neighbor_actual[2]).map_err(|_| degenerate())?)
    } else {
        None
    };
    (0..=n)
        .map(|k| {
            let others: Vec<_> = (0..=n).filter(|&j| j != k).map(|j| neighbor_actual[j]).collect();
            let raw = match plane {
                Some(nrm) => (others[1] - others[0]).cross(&nrm),
                None => (others[1] - others[0]).cross(&(others[2] - others[0])),
            };
            let norm = raw.norm();
            if !(norm > T::zero()) {
                return Err(degenerate());
            }
            let mut m = raw / norm;
            let mut l = (neighbor_actual[k] - others[0]).dot(&m);
            if l < T::zero() {
                m = -m;
                l = -l;
            }
            if !(l > T::zero()) {
                return Err(degenerate());
            }
            Ok(((own - others[0]).dot(&m), l))
        })
        .collect()
}

/// Interval `[lo, hi]` containing the ratio `D / L` for `D ∈ [d − 2Δ, d + 2Δ]`
/// and `L ∈ [l − 2Δ, l + 2Δ]`. When `l ≤ 2Δ` the upper end is unbounded.
pub fn ratio_interval<T: Real>(d: T, l: T, delta: T) -> (T, T) {
    let two = T::lit(2.0) * delta;
    let (d_lo, d_hi) = (d - two, d + two);
    let (l_lo, l_hi) = (l - two, l + two);
    let inf = T::max_value().unwrap();
    if !(l_lo > T::zero()) {
        let lo = if d_lo >= T::zero() { d_lo / l_hi } else { -inf };
        return (lo, inf);
    }
    ((d_lo / l_hi).min(d_lo / l_lo), (d_hi / l_lo).max(d_hi / l_hi))
}

/// Per-neighbor `(lo, hi)` bounds on the transient weights given the
/// deviation bound `delta`.
pub fn transient_weight_bounds<T: Real>(
    neighbor_actual: &[Position3<T>],
    own: &Position3<T>,
    delta: T,
    n: usize,
) -> Result<Vec<(T, T)>> {
    if delta < T::zero() {
        return Err(Error::Argument("deviation bound must be nonnegative".into()));
    }
    Ok(opposite_distances(neighbor_actual, own, n)?
        .into_iter()
        .map(|(d, l)| ratio_interval(d, l, delta))
        .collect())
}

/// Builds the report of follower `agent` from actual positions.
pub fn evaluate_follower<T: Real>(
    config: &ReferenceConfiguration<T>,
    agent: AgentId,
    actual: &PositionMap<T>,
    delta: T,
    time: T,
) -> Result<TransientWeightReport<T>> {
    let nbrs = config
        .in_neighbors
        .get(&agent)
        .ok_or_else(|| Error::Argument(format!("agent {agent} is not a follower")))?;
    let statics = &config.weights[&agent];
    let own = *actual
        .get(&agent)
        .ok_or_else(|| Error::Argument(format!("missing actual position for agent {agent}")))?;
    let pts = nbrs
        .iter()
        .map(|nb| actual.get(nb).copied().ok_or(Error::Communication { agent, neighbor: *nb }))
        .collect::<Result<Vec<_>>>()?;
    let computed = transient_weights(&pts, &own, config.n, config.xi)
        .and_then(|w| Ok((w, transient_weight_bounds(&pts, &own, delta, config.n)?)));
    let (weights, bounds) = match computed {
        Ok(v) => v,
        Err(Error::Degenerate(_)) | Err(Error::Singular(_)) => {
            return Ok(TransientWeightReport { agent, time, entries: Vec::new(), degenerate: true });
        }
        Err(e) => return Err(e),
    };
    let tol = T::weight_tol();
    let entries = nbrs
        .iter()
        .zip(statics)
        .zip(weights.into_iter().zip(bounds))
        .map(|((nb, &w), (transient, (lo, hi)))| NeighborBound {
            neighbor: *nb,
            transient,
            static_weight: w,
            lo,
            hi,
            pass: lo - tol <= w && w <= hi + tol,
        })
        .collect();
    Ok(TransientWeightReport { agent, time, entries, degenerate: false })
}

/// Reports for every follower of the network.
pub fn evaluate_network<T: Real>(
    config: &ReferenceConfiguration<T>,
    actual: &PositionMap<T>,
    delta: T,
    time: T,
) -> Result<Vec<TransientWeightReport<T>>> {
    config
        .followers
        .iter()
        .map(|f| evaluate_follower(config, *f, actual, delta, time))
        .collect()
}

/// Condition Ψ: every static weight inside its interval.
pub fn check_agent_health<T: Real>(report: &TransientWeightReport<T>) -> bool {
    !report.degenerate && report.entries.iter().all(|e| e.pass)
}

/// Splits `agents` into healthy and anomalous sets. Agents without a report
/// (leaders) are healthy.
pub fn partition_health<T: Real>(
    agents: impl IntoIterator<Item = AgentId>,
    reports: &[TransientWeightReport<T>],
) -> (BTreeSet<AgentId>, BTreeSet<AgentId>) {
    let flagged: BTreeSet<AgentId> = reports.iter().filter(|r| !check_agent_health(r)).map(|r| r.agent).collect();
    agents.into_iter().partition(|id| !flagged.contains(id))
}

/// Pairs `(flagged, flagged in-neighbor)`: either agent may be the one that
/// actually failed.
pub fn attribution_ambiguities<T: Real>(
    config: &ReferenceConfiguration<T>,
    anomalous: &BTreeSet<AgentId>,
) -> Vec<(AgentId, AgentId)> {
    anomalous
        .iter()
        .filter_map(|a| config.in_neighbors.get(a).map(|nb| (a, nb)))
        .flat_map(|(a, nb)| nb.iter().filter(|h| anomalous.contains(h)).map(move |h| (*a, *h)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::refnet::NetworkParams;
    use approx::assert_relative_eq;
    use nalgebra::Matrix3;

    fn p(x: f64, y: f64) -> Position3<f64> {
        Position3::new(x, y, 0.0)
    }

    fn equilateral() -> Vec<Position3<f64>> {
        let h = 4.0 * 3f64.sqrt() / 2.0;
        vec![p(0., 0.), p(4., 0.), p(2., h)]
    }

    fn centroid(v: &[Position3<f64>]) -> Position3<f64> {
        v.iter().sum::<Position3<f64>>() / v.len() as f64
    }

    #[test]
    fn centroid_weights() {
        let t = equilateral();
        let w = transient_weights(&t, &centroid(&t), 2, 1.0).unwrap();
        for x in w {
            assert_relative_eq!(x, 1.0 / 3.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn distance_ratios_equal_weights() {
        let t = vec![p(0., 0.), p(7., 1.), p(2., 5.)];
        let c = p(2.5, 2.0);
        let w = transient_weights(&t, &c, 2, 1.0).unwrap();
        let dl = opposite_distances(&t, &c, 2).unwrap();
        for (w, (d, l)) in w.iter().zip(dl) {
            assert_relative_eq!(*w, d / l, epsilon = 1e-12);
        }
        // also outside the simplex, where a ratio turns negative
        let c = p(9.0, -3.0);
        let w = transient_weights(&t, &c, 2, 1.0).unwrap();
        for (w, (d, l)) in w.iter().zip(opposite_distances(&t, &c, 2).unwrap()) {
            assert_relative_eq!(*w, d / l, epsilon = 1e-12);
        }
        let tet = vec![Position3::new(0., 0., 0.), Position3::new(3., 0., 0.), Position3::new(0., 4., 0.), Position3::new(1., 1., 5.)];
        let c = Position3::new(0.8, 1.0, 1.2);
        let w = transient_weights(&tet, &c, 3, 1.0).unwrap();
        for (w, (d, l)) in w.iter().zip(opposite_distances(&tet, &c, 3).unwrap()) {
            assert_relative_eq!(*w, d / l, epsilon = 1e-12);
        }
    }

    #[test]
    fn homogeneous_image_preserves_weights() {
        let t = vec![p(0., 0.), p(7., 1.), p(2., 5.)];
        let c = p(2.5, 2.0);
        let w0 = transient_weights(&t, &c, 2, 1.0).unwrap();
        let q = Matrix3::new(1.3, 0.4, 0.0, -0.2, 0.8, 0.0, 0.0, 0.0, 1.0);
        let d = Position3::new(5.0, -2.0, 0.0);
        let img: Vec<_> = t.iter().map(|r| q * r + d).collect();
        let w1 = transient_weights(&img, &(q * c + d), 2, 1.0).unwrap();
        for (a, b) in w0.iter().zip(w1) {
            assert_relative_eq!(*a, b, epsilon = 1e-9);
        }
    }

    #[test]
    fn collinear_neighbors_are_degenerate() {
        let line = vec![p(0., 0.), p(1., 0.), p(2., 0.)];
        assert!(transient_weights(&line, &p(1., 1.), 2, 1.0).is_err());
        assert!(matches!(opposite_distances(&line, &p(1., 1.), 2), Err(Error::Degenerate(_))));
    }

    #[test]
    fn bound_examples() {
        let t = equilateral();
        let c = centroid(&t);
        for (lo, hi) in transient_weight_bounds(&t, &c, 0.0, 2).unwrap() {
            assert_relative_eq!(lo, 1.0 / 3.0, epsilon = 1e-12);
            assert_relative_eq!(hi, 1.0 / 3.0, epsilon = 1e-12);
        }
        // side 4: every vertex is l = 2√3 from its opposite side, the
        // centroid a third of that
        let l = 2.0 * 3f64.sqrt();
        let d = l / 3.0;
        for (lo, hi) in transient_weight_bounds(&t, &c, 0.1, 2).unwrap() {
            assert_relative_eq!(lo, (d - 0.2) / (l + 0.2), epsilon = 1e-12);
            assert_relative_eq!(hi, (d + 0.2) / (l - 0.2), epsilon = 1e-12);
            assert!(lo < 1.0 / 3.0 && 1.0 / 3.0 < hi);
        }
        let (lo, hi) = ratio_interval(1.0, 0.3, 0.2);
        assert_eq!(hi, f64::MAX);
        assert_relative_eq!(lo, 0.6 / 0.7);
        assert_eq!(ratio_interval(0.1, 0.3, 0.2).0, -f64::MAX);
    }

    fn network() -> ReferenceConfiguration<f64> {
        let pts: PositionMap<f64> = [
            (1, p(0., 0.)),
            (2, p(20., 0.)),
            (3, p(10., 18.)),
            (4, p(10., 6.)),
            (5, p(7., 3.)),
            (6, p(13., 3.)),
            (7, p(10., 11.)),
        ]
        .into_iter()
        .map(|(i, v)| (AgentId(i), v))
        .collect();
        ReferenceConfiguration::build(&pts, &NetworkParams::new(2).with_leaders(vec![AgentId(1), AgentId(2), AgentId(3)]))
            .unwrap()
    }

    #[test]
    fn health_checks() {
        let cfg = network();
        let delta = cfg.deviation(0.1, 0.1, 0.1);
        let reports = evaluate_network(&cfg, &cfg.ref_positions, delta, 0.0).unwrap();
        assert!(reports.iter().all(check_agent_health));
        let (healthy, anomalous) = partition_health(cfg.ref_positions.keys().copied(), &reports);
        assert!(anomalous.is_empty());
        assert_eq!(healthy.len(), 7);

        // freeze agent 4 while everyone else moves 10 m
        let mut moved = cfg.ref_positions.clone();
        for (id, r) in moved.iter_mut() {
            if *id != AgentId(4) {
                r.x += 10.0;
            }
        }
        let reports = evaluate_network(&cfg, &moved, delta, 1.0).unwrap();
        let (_, anomalous) = partition_health(cfg.ref_positions.keys().copied(), &reports);
        assert!(anomalous.contains(&AgentId(4)));
        assert!(!anomalous.contains(&AgentId(1)));
    }

    #[test]
    fn ambiguity_pairs() {
        let cfg = network();
        let f = cfg.followers.iter().copied().find(|f| cfg.in_neighbors[f].iter().any(|h| !cfg.is_leader(*h))).unwrap();
        let nb = cfg.in_neighbors[&f].iter().copied().find(|h| !cfg.is_leader(*h)).unwrap();
        let flagged: BTreeSet<_> = [f, nb].into_iter().collect();
        assert!(attribution_ambiguities(&cfg, &flagged).contains(&(f, nb)));
        let single: BTreeSet<_> = [f].into_iter().collect();
        assert!(attribution_ambiguities(&cfg, &single).is_empty());
    }

    #[test]
    fn degenerate_report_fails() {
        let cfg = network();
        let f = cfg.followers[0];
        let mut collapsed = cfg.ref_positions.clone();
        for nb in &cfg.in_neighbors[&f] {
            collapsed.insert(*nb, p(1.0, 1.0));
        }
        let r = evaluate_follower(&cfg, f, &collapsed, 0.1, 0.0).unwrap();
        assert!(r.degenerate && !check_agent_health(&r));
    }
}
